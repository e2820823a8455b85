//! Line-delimited parameter exchange over a stream socket.
//!
//! One message per `\n`-terminated line, space-separated `key=value` fields:
//!
//! ```text
//! HELLO version=1 client_id=<id>
//! GLOBAL round=<h> params=<v0>,<v1>,...
//! UPDATE round=<h> client_id=<id> num_samples=<n> loss=<x> params=<v0>,<v1>,...
//! DONE
//! ```
//!
//! Reals are written with 17 significant digits so parameters cross the wire
//! bit-exactly. Client ids may not contain whitespace, `=` or `,`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use super::client::{local_train, ClientState, ClientUpdate, LocalTrainConfig};
use super::transport::Transport;
use crate::error::{QflError, Result};
use crate::numfmt::format_sig17;
use crate::qcnn::{ParamVector, QcnnModel};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello {
        version: u32,
        client_id: String,
    },
    Global {
        round: usize,
        params: Vec<f64>,
    },
    Update {
        round: usize,
        client_id: String,
        num_samples: usize,
        loss: f64,
        params: Vec<f64>,
    },
    Done,
}

fn proto(msg: impl Into<String>) -> QflError {
    QflError::Protocol(msg.into())
}

fn format_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format_sig17(*v))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.parse().map_err(|_| proto(format!("bad real `{t}`"))))
        .collect()
}

pub fn valid_client_id(id: &str) -> bool {
    !id.is_empty()
        && !id
            .chars()
            .any(|c| c.is_whitespace() || c == '=' || c == ',')
}

impl Message {
    /// One line, without the trailing newline.
    pub fn encode(&self) -> String {
        match self {
            Message::Hello { version, client_id } => {
                format!("HELLO version={version} client_id={client_id}")
            }
            Message::Global { round, params } => {
                format!("GLOBAL round={round} params={}", format_list(params))
            }
            Message::Update {
                round,
                client_id,
                num_samples,
                loss,
                params,
            } => format!(
                "UPDATE round={round} client_id={client_id} num_samples={num_samples} loss={} params={}",
                format_sig17(*loss),
                format_list(params)
            ),
            Message::Done => "DONE".to_string(),
        }
    }

    pub fn decode(line: &str) -> Result<Self> {
        let mut tokens = line.trim_end_matches(['\r', '\n']).split(' ');
        let tag = tokens.next().unwrap_or_default();
        let mut fields = std::collections::BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| proto(format!("field `{tok}` is not key=value")))?;
            if fields.insert(k, v).is_some() {
                return Err(proto(format!("duplicate field `{k}`")));
            }
        }
        let mut take = |key: &str| {
            fields
                .remove(key)
                .ok_or_else(|| proto(format!("{tag} missing `{key}`")))
        };
        let int = |v: &str, key: &str| -> Result<usize> {
            v.parse().map_err(|_| proto(format!("bad integer `{v}` for `{key}`")))
        };
        let msg = match tag {
            "HELLO" => {
                let version = take("version")?;
                let client_id = take("client_id")?.to_string();
                if !valid_client_id(&client_id) {
                    return Err(proto(format!("invalid client id `{client_id}`")));
                }
                Message::Hello {
                    version: version
                        .parse()
                        .map_err(|_| proto(format!("bad version `{version}`")))?,
                    client_id,
                }
            }
            "GLOBAL" => Message::Global {
                round: int(take("round")?, "round")?,
                params: parse_list(take("params")?)?,
            },
            "UPDATE" => {
                let round = int(take("round")?, "round")?;
                let client_id = take("client_id")?.to_string();
                let num_samples = int(take("num_samples")?, "num_samples")?;
                let loss_s = take("loss")?;
                let loss = loss_s
                    .parse()
                    .map_err(|_| proto(format!("bad loss `{loss_s}`")))?;
                let params = parse_list(take("params")?)?;
                Message::Update {
                    round,
                    client_id,
                    num_samples,
                    loss,
                    params,
                }
            }
            "DONE" => Message::Done,
            other => return Err(proto(format!("unknown message `{other}`"))),
        };
        if let Some(extra) = fields.keys().next() {
            return Err(proto(format!("unexpected field `{extra}` in {tag}")));
        }
        Ok(msg)
    }
}

/// Framed reader/writer pair over one TCP connection.
pub struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    line: String,
}

impl Connection {
    pub fn new(stream: TcpStream) -> Result<Self> {
        let writer = stream.try_clone()?;
        Ok(Connection {
            reader: BufReader::new(stream),
            writer,
            line: String::new(),
        })
    }

    pub fn send(&mut self, msg: &Message) -> Result<()> {
        let mut line = msg.encode();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message> {
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Err(proto("peer closed the connection"));
        }
        Message::decode(&self.line)
    }
}

/// Server side of the socket transport: one connection per remote client.
pub struct TcpServerTransport {
    model_names: std::sync::Arc<Vec<String>>,
    peers: Vec<(String, Connection)>,
}

impl TcpServerTransport {
    /// Accepts connections until every id in `expected` has said HELLO.
    /// Updates are returned in `expected` order.
    pub fn accept(listener: &TcpListener, expected: &[String], model: &QcnnModel) -> Result<Self> {
        let mut slots: Vec<Option<Connection>> = expected.iter().map(|_| None).collect();
        let mut pending = expected.len();
        while pending > 0 {
            let (stream, _) = listener.accept()?;
            let mut conn = Connection::new(stream)?;
            match conn.recv()? {
                Message::Hello { version, client_id } => {
                    if version != PROTOCOL_VERSION {
                        return Err(proto(format!(
                            "client `{client_id}` speaks protocol v{version}, server v{PROTOCOL_VERSION}"
                        )));
                    }
                    let idx = expected
                        .iter()
                        .position(|id| *id == client_id)
                        .ok_or_else(|| proto(format!("unexpected client `{client_id}`")))?;
                    if slots[idx].is_some() {
                        return Err(proto(format!("client `{client_id}` connected twice")));
                    }
                    slots[idx] = Some(conn);
                    pending -= 1;
                }
                other => return Err(proto(format!("expected HELLO, got {}", other.encode()))),
            }
        }
        Ok(TcpServerTransport {
            model_names: model.param_names().clone(),
            peers: expected
                .iter()
                .cloned()
                .zip(slots.into_iter().map(|s| s.expect("all slots filled")))
                .collect(),
        })
    }
}

impl Transport for TcpServerTransport {
    fn client_ids(&self) -> Vec<String> {
        self.peers.iter().map(|(id, _)| id.clone()).collect()
    }

    fn exchange(&mut self, round: usize, global: &ParamVector) -> Result<Vec<ClientUpdate>> {
        let broadcast = Message::Global {
            round,
            params: global.values().to_vec(),
        };
        for (_, conn) in &mut self.peers {
            conn.send(&broadcast)?;
        }
        let mut updates = Vec::with_capacity(self.peers.len());
        for (id, conn) in &mut self.peers {
            match conn.recv()? {
                Message::Update {
                    round: r,
                    client_id,
                    num_samples,
                    loss,
                    params,
                } => {
                    if r != round || client_id != *id {
                        return Err(proto(format!(
                            "expected UPDATE for round {round} from `{id}`, got round {r} from `{client_id}`"
                        )));
                    }
                    updates.push(ClientUpdate {
                        client_id,
                        round: r,
                        params: ParamVector::new(self.model_names.clone(), params)
                            .map_err(|e| proto(e.to_string()))?,
                        num_samples,
                        local_loss: loss,
                    });
                }
                other => {
                    return Err(proto(format!(
                        "expected UPDATE from `{id}`, got {}",
                        other.encode()
                    )))
                }
            }
        }
        Ok(updates)
    }

    fn finish(&mut self) -> Result<()> {
        for (_, conn) in &mut self.peers {
            conn.send(&Message::Done)?;
        }
        Ok(())
    }
}

/// Client loop: HELLO, then answer every GLOBAL with an UPDATE until DONE.
/// Returns the number of rounds served.
pub fn run_remote_client(
    stream: TcpStream,
    client: &mut ClientState<'_>,
    model: &QcnnModel,
    cfg: &LocalTrainConfig,
) -> Result<usize> {
    if !valid_client_id(&client.client_id) {
        return Err(QflError::config(format!(
            "client id `{}` cannot be sent over the wire",
            client.client_id
        )));
    }
    let mut conn = Connection::new(stream)?;
    conn.send(&Message::Hello {
        version: PROTOCOL_VERSION,
        client_id: client.client_id.clone(),
    })?;
    let mut served = 0;
    loop {
        match conn.recv()? {
            Message::Global { round, params } => {
                let global = ParamVector::new(model.param_names().clone(), params)
                    .map_err(|e| proto(e.to_string()))?;
                let update = local_train(client, model, &global, round, cfg)?;
                conn.send(&Message::Update {
                    round,
                    client_id: update.client_id,
                    num_samples: update.num_samples,
                    loss: update.local_loss,
                    params: update.params.values().to_vec(),
                })?;
                served += 1;
            }
            Message::Done => return Ok(served),
            other => return Err(proto(format!("unexpected {}", other.encode()))),
        }
    }
}
