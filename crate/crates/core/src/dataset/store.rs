//! Text serialization of circuits and the federated dataset container.
//!
//! Circuit grammar (`QFLCIRC`), lines joined by `\n`, no trailing newline:
//!
//! ```text
//! QFLCIRC v1 qubits=<n>
//! H <q>
//! CZ <a> <b>
//! CNOT <control> <target>
//! RX <q> <angle>          (likewise RY, RZ)
//! XX <a> <b> <angle>      (likewise YY, ZZ)
//! ```
//!
//! An angle is a decimal with 17 significant digits, `$name` for a symbol or
//! `-$name` for its negation.
//!
//! Container layout (`QFLDATA`):
//!
//! ```text
//! QFLDATA v<version>
//! checksum fnv1a64:<16 lowercase hex digits>
//! <header JSON line>
//! <one JSON line per client>
//! ```
//!
//! The checksum is 64-bit FNV-1a over every byte after the checksum line's
//! newline. The header carries the generation config, the non-IID fraction,
//! the client count and the per-client sample counts. A client line carries
//! `client_id`, `distribution`, `labels` (integers) and `circuits`
//! (QFLCIRC strings), in sample order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gen::{AngleDistribution, ClientDataset, FederatedDataset, GenConfig, FORMAT_VERSION};
use crate::error::{QflError, Result};
use crate::numfmt::format_sig17;
use crate::qcnn::Sample;
use crate::sim::{Angle, Circuit, GateKind, GateOp, MAX_QUBITS};

const CIRCUIT_MAGIC: &str = "QFLCIRC";
const CIRCUIT_VERSION: &str = "v1";
const DATASET_MAGIC: &str = "QFLDATA";
const CHECKSUM_PREFIX: &str = "checksum fnv1a64:";

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

fn format_angle(angle: &Angle) -> String {
    match angle {
        Angle::Value(v) => format_sig17(*v),
        Angle::Symbol { name, negated: false } => format!("${name}"),
        Angle::Symbol { name, negated: true } => format!("-${name}"),
    }
}

pub fn serialize_circuit(c: &Circuit) -> String {
    let mut out = format!("{CIRCUIT_MAGIC} {CIRCUIT_VERSION} qubits={}", c.n_qubits());
    for op in c.ops() {
        out.push('\n');
        out.push_str(op.kind().name());
        for q in op.targets() {
            out.push(' ');
            out.push_str(&q.to_string());
        }
        if let Some(a) = op.angle() {
            out.push(' ');
            out.push_str(&format_angle(a));
        }
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> QflError {
    QflError::Parse {
        line,
        message: message.into(),
    }
}

fn valid_symbol(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_angle(token: &str, line: usize) -> Result<Angle> {
    let (negated, rest) = match token.strip_prefix('-') {
        Some(r) if r.starts_with('$') => (true, r),
        _ => (false, token),
    };
    if let Some(name) = rest.strip_prefix('$') {
        if !valid_symbol(name) {
            return Err(parse_err(line, format!("malformed symbol `{token}`")));
        }
        return Ok(Angle::Symbol {
            name: name.to_string(),
            negated,
        });
    }
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("malformed angle `{token}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite angle `{token}`")));
    }
    Ok(Angle::Value(v))
}

pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CIRCUIT_MAGIC) {
        return Err(parse_err(1, format!("expected `{CIRCUIT_MAGIC}` header")));
    }
    if parts.next() != Some(CIRCUIT_VERSION) {
        return Err(parse_err(1, format!("expected version `{CIRCUIT_VERSION}`")));
    }
    let n_qubits: usize = parts
        .next()
        .and_then(|p| p.strip_prefix("qubits="))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| parse_err(1, "expected `qubits=<n>`"))?;
    if parts.next().is_some() {
        return Err(parse_err(1, "trailing tokens in header"));
    }
    if !(1..=MAX_QUBITS).contains(&n_qubits) {
        return Err(parse_err(1, format!("qubit count {n_qubits} out of range")));
    }
    let mut circuit = Circuit::new(n_qubits)?;
    let mut lines = lines.peekable();
    while let Some((line, content)) = lines.next() {
        if content.is_empty() && lines.peek().is_none() {
            break;
        }
        let mut tokens = content.split_whitespace();
        let name = tokens.next().ok_or_else(|| parse_err(line, "empty line"))?;
        let kind: GateKind = name.parse().map_err(|_| QflError::UnknownGate {
            line,
            name: name.to_string(),
        })?;
        let rest: Vec<&str> = tokens.collect();
        let want = kind.arity() + usize::from(kind.is_parametrized());
        if rest.len() != want {
            return Err(parse_err(
                line,
                format!("{kind} expects {want} operand(s), got {}", rest.len()),
            ));
        }
        let targets = rest[..kind.arity()]
            .iter()
            .map(|t| {
                let q: usize = t
                    .parse()
                    .map_err(|_| parse_err(line, format!("malformed qubit index `{t}`")))?;
                if q >= n_qubits {
                    return Err(parse_err(
                        line,
                        format!("qubit {q} out of range for {n_qubits} qubits"),
                    ));
                }
                Ok(q)
            })
            .collect::<Result<Vec<_>>>()?;
        let angle = if kind.is_parametrized() {
            Some(parse_angle(rest[kind.arity()], line)?)
        } else {
            None
        };
        let op = GateOp::new(kind, &targets, angle).map_err(|e| parse_err(line, e.to_string()))?;
        circuit.push(op)?;
    }
    Ok(circuit)
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    gen_config: GenConfig,
    non_iid_fraction: f64,
    n_clients: usize,
    sample_counts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ClientRecord {
    client_id: String,
    distribution: AngleDistribution,
    labels: Vec<u8>,
    circuits: Vec<String>,
}

fn json_err(e: serde_json::Error) -> QflError {
    QflError::Internal(format!("JSON encoding failed: {e}"))
}

/// Canonical container bytes: identical datasets give identical bytes.
pub fn encode_dataset(ds: &FederatedDataset) -> Result<Vec<u8>> {
    let header = Header {
        format_version: ds.format_version,
        gen_config: ds.gen_config.clone(),
        non_iid_fraction: ds.non_iid_fraction,
        n_clients: ds.clients.len(),
        sample_counts: ds.clients.iter().map(ClientDataset::len).collect(),
    };
    let mut body = serde_json::to_vec(&header).map_err(json_err)?;
    body.push(b'\n');
    for client in &ds.clients {
        let record = ClientRecord {
            client_id: client.client_id.clone(),
            distribution: client.distribution,
            labels: client.samples.iter().map(|s| s.label).collect(),
            circuits: client
                .samples
                .iter()
                .map(|s| serialize_circuit(&s.prep_circuit))
                .collect(),
        };
        serde_json::to_writer(&mut body, &record).map_err(json_err)?;
        body.push(b'\n');
    }
    let mut out = format!(
        "{DATASET_MAGIC} v{}\n{CHECKSUM_PREFIX}{:016x}\n",
        ds.format_version,
        fnv1a64(&body)
    )
    .into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

fn corrupt(msg: impl Into<String>) -> QflError {
    QflError::Corrupt(msg.into())
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..pos], &bytes[pos + 1..]))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<FederatedDataset> {
    let (magic, rest) = split_line(bytes).ok_or_else(|| corrupt("missing container header"))?;
    let magic = std::str::from_utf8(magic).map_err(|_| corrupt("header is not UTF-8"))?;
    let version: u32 = magic
        .strip_prefix(DATASET_MAGIC)
        .and_then(|v| v.trim_start().strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(format!("bad container header `{magic}`")))?;
    if version > FORMAT_VERSION {
        return Err(QflError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let (sum_line, body) = split_line(rest).ok_or_else(|| corrupt("missing checksum line"))?;
    let expected = std::str::from_utf8(sum_line)
        .ok()
        .and_then(|l| l.strip_prefix(CHECKSUM_PREFIX))
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| corrupt("malformed checksum line"))?;
    let actual = fnv1a64(body);
    if actual != expected {
        return Err(corrupt(format!(
            "checksum mismatch (stored {expected:016x}, computed {actual:016x})"
        )));
    }

    let body = std::str::from_utf8(body).map_err(|_| corrupt("body is not UTF-8"))?;
    let mut lines = body.lines();
    let header: Header = serde_json::from_str(lines.next().ok_or_else(|| corrupt("empty body"))?)
        .map_err(|e| corrupt(format!("header: {e}")))?;
    if header.format_version != version {
        return Err(corrupt("header version disagrees with container version"));
    }
    let mut clients = Vec::with_capacity(header.n_clients);
    for (i, line) in lines.enumerate() {
        let record: ClientRecord =
            serde_json::from_str(line).map_err(|e| corrupt(format!("client record {i}: {e}")))?;
        if record.labels.len() != record.circuits.len() {
            return Err(corrupt(format!(
                "client `{}` has {} labels for {} circuits",
                record.client_id,
                record.labels.len(),
                record.circuits.len()
            )));
        }
        let samples = record
            .circuits
            .iter()
            .zip(&record.labels)
            .map(|(text, &label)| Sample::new(parse_circuit(text)?, label))
            .collect::<Result<Vec<_>>>()?;
        clients.push(ClientDataset {
            client_id: record.client_id,
            samples,
            distribution: record.distribution,
        });
    }
    if clients.len() != header.n_clients {
        return Err(corrupt(format!(
            "header declares {} clients, found {}",
            header.n_clients,
            clients.len()
        )));
    }
    let counts: Vec<usize> = clients.iter().map(ClientDataset::len).collect();
    if counts != header.sample_counts {
        return Err(corrupt("per-client sample counts disagree with header"));
    }
    let mut ids = std::collections::HashSet::new();
    if let Some(dup) = clients.iter().find(|c| !ids.insert(c.client_id.as_str())) {
        return Err(corrupt(format!("duplicate client id `{}`", dup.client_id)));
    }
    Ok(FederatedDataset {
        clients,
        gen_config: header.gen_config,
        non_iid_fraction: header.non_iid_fraction,
        format_version: version,
    })
}

/// Writes through a temporary file in the target directory, then renames.
/// Returns the content checksum.
pub fn write_dataset(ds: &FederatedDataset, path: &Path) -> Result<u64> {
    let bytes = encode_dataset(ds)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| QflError::Io(e.error))?;
    Ok(fnv1a64(&bytes))
}

pub fn read_dataset(path: &Path) -> Result<FederatedDataset> {
    decode_dataset(&fs::read(path)?)
}
