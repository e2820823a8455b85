//! Cluster-state excitation datasets, one per client.
//!
//! Each sample prepares a ring cluster state and excites a single qubit with
//! `RX(angle)`; the sample is labelled 1 when `|angle|` exceeds the
//! threshold. Targets cycle through the qubits so a client holds an equal
//! number of samples per qubit.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{QflError, Result};
use crate::qcnn::Sample;
use crate::seed::derive_seed;
use crate::sim::{Angle, Circuit, GateKind, GateOp, QubitIndex};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleDistribution {
    /// Uniform on `[-π, π)`.
    UniformPi,
    /// Zero-mean normal, rejection-sampled onto `[-π, π]`.
    TruncatedNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_qubits: usize,
    pub samples_per_client: usize,
    pub n_clients: usize,
    pub angle_distribution: AngleDistribution,
    pub trunc_normal_sigma: f64,
    pub excitation_threshold: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_qubits: 8,
            samples_per_client: 160,
            n_clients: 30,
            angle_distribution: AngleDistribution::UniformPi,
            trunc_normal_sigma: FRAC_PI_2,
            excitation_threshold: FRAC_PI_2,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::sim::MAX_QUBITS).contains(&self.n_qubits) {
            return Err(QflError::config(format!(
                "n_qubits must be in [2, {}], got {}",
                crate::sim::MAX_QUBITS,
                self.n_qubits
            )));
        }
        if self.samples_per_client == 0 || self.samples_per_client % self.n_qubits != 0 {
            return Err(QflError::config(format!(
                "samples_per_client ({}) must be a positive multiple of n_qubits ({})",
                self.samples_per_client, self.n_qubits
            )));
        }
        if !(self.excitation_threshold > 0.0 && self.excitation_threshold < PI) {
            return Err(QflError::config(format!(
                "excitation threshold must lie in (0, π), got {}",
                self.excitation_threshold
            )));
        }
        if !(self.trunc_normal_sigma > 0.0 && self.trunc_normal_sigma.is_finite()) {
            return Err(QflError::config("truncated-normal sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: String,
    pub samples: Vec<Sample>,
    pub distribution: AngleDistribution,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Excitation angle of each sample, in order.
    pub fn angles(&self) -> Vec<Option<f64>> {
        self.samples
            .iter()
            .map(|s| excitation_angle(&s.prep_circuit))
            .collect()
    }

    pub fn excited_count(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub clients: Vec<ClientDataset>,
    pub gen_config: GenConfig,
    pub non_iid_fraction: f64,
    pub format_version: u32,
}

impl FederatedDataset {
    pub fn client(&self, id: &str) -> Option<&ClientDataset> {
        self.clients.iter().find(|c| c.client_id == id)
    }

    pub fn total_samples(&self) -> usize {
        self.clients.iter().map(ClientDataset::len).sum()
    }

    pub fn excited_count(&self) -> usize {
        self.clients.iter().map(ClientDataset::excited_count).sum()
    }
}

/// Angle of the (single) RX gate in a preparation circuit.
pub fn excitation_angle(prep: &Circuit) -> Option<f64> {
    prep.ops()
        .iter()
        .find(|op| op.kind() == GateKind::RX)
        .and_then(|op| match op.angle() {
            Some(Angle::Value(v)) => Some(*v),
            _ => None,
        })
}

/// Hadamards on every qubit, then CZ around the ring `(i, i+1 mod n)`. On two
/// qubits the ring degenerates to a single CZ.
pub fn cluster_state_circuit(n_qubits: usize) -> Result<Circuit> {
    if n_qubits < 2 {
        return Err(QflError::config(format!(
            "cluster state needs at least 2 qubits, got {n_qubits}"
        )));
    }
    let mut c = Circuit::new(n_qubits)?;
    c.extend((0..n_qubits).map(GateOp::h))?;
    let pairs = if n_qubits == 2 { 1 } else { n_qubits };
    c.extend((0..pairs).map(|i| GateOp::cz(i, (i + 1) % n_qubits)))?;
    Ok(c)
}

pub fn draw_angle<R: Rng + ?Sized>(rng: &mut R, config: &GenConfig) -> f64 {
    match config.angle_distribution {
        AngleDistribution::UniformPi => rng.random_range(-PI..PI),
        AngleDistribution::TruncatedNormal => {
            let normal =
                Normal::new(0.0, config.trunc_normal_sigma).expect("sigma validated positive");
            loop {
                let x: f64 = normal.sample(rng);
                if (-PI..=PI).contains(&x) {
                    break x;
                }
            }
        }
    }
}

/// 1 (excited) iff `|angle| > threshold`.
pub fn label_rule(angle: f64, threshold: f64) -> u8 {
    u8::from(angle.abs() > threshold)
}

/// Cluster state plus `RX(angle)` on `target_qubit`.
pub fn sample_with_angle(
    config: &GenConfig,
    target_qubit: QubitIndex,
    angle: f64,
) -> Result<Sample> {
    if target_qubit >= config.n_qubits {
        return Err(QflError::config(format!(
            "excitation target {target_qubit} outside {} qubits",
            config.n_qubits
        )));
    }
    let mut prep = cluster_state_circuit(config.n_qubits)?;
    prep.push(GateOp::rx(target_qubit, angle))?;
    Sample::new(prep, label_rule(angle, config.excitation_threshold))
}

pub fn generate_sample<R: Rng + ?Sized>(
    rng: &mut R,
    config: &GenConfig,
    target_qubit: QubitIndex,
) -> Result<Sample> {
    let angle = draw_angle(rng, config);
    sample_with_angle(config, target_qubit, angle)
}

/// Samples for one client from its own seed, cycling excitation targets.
pub fn generate_client(
    config: &GenConfig,
    client_id: String,
    distribution: AngleDistribution,
    seed: u64,
) -> Result<ClientDataset> {
    config.validate()?;
    let cfg = GenConfig {
        angle_distribution: distribution,
        ..config.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..cfg.samples_per_client)
        .map(|m| generate_sample(&mut rng, &cfg, m % cfg.n_qubits))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClientDataset {
        client_id,
        samples,
        distribution,
    })
}

pub fn client_id(index: usize) -> String {
    format!("client_{index:02}")
}

/// All `n_clients` datasets. The first `⌈fraction·K⌉` clients draw angles from
/// the truncated normal, the rest from `config.angle_distribution`.
pub fn generate_federated_dataset(
    config: &GenConfig,
    non_iid_fraction: f64,
) -> Result<FederatedDataset> {
    config.validate()?;
    if !(0.0..=1.0).contains(&non_iid_fraction) {
        return Err(QflError::config(format!(
            "non-IID fraction must lie in [0, 1], got {non_iid_fraction}"
        )));
    }
    let k = config.n_clients;
    let skewed = (non_iid_fraction * k as f64).ceil() as usize;
    let clients = (0..k)
        .map(|i| {
            let dist = if i < skewed {
                AngleDistribution::TruncatedNormal
            } else {
                config.angle_distribution
            };
            generate_client(config, client_id(i), dist, derive_seed(config.seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FederatedDataset {
        clients,
        gen_config: config.clone(),
        non_iid_fraction,
        format_version: FORMAT_VERSION,
    })
}
