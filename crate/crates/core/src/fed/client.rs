use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optimizer::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::dataset::ClientDataset;
use crate::error::{QflError, Result};
use crate::qcnn::{GradientMethod, ParamVector, QcnnModel};
use crate::seed::derive_seed_path;

/// Local optimization settings shared by every client.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub gradient: GradientMethod,
    /// Base seed for mini-batch shuffling.
    pub seed: u64,
}

impl LocalTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(QflError::config("local epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(QflError::config("batch size must be at least 1"));
        }
        self.optimizer.validate()
    }
}

/// A training client: its data, its working parameters and optimizer moments.
///
/// Moments persist across rounds; only the parameters are reset to the
/// server's broadcast at the start of each round.
#[derive(Debug, Clone)]
pub struct ClientState<'a> {
    pub client_id: String,
    /// Stream index used to derive this client's shuffle seeds.
    pub slot: u64,
    pub params: ParamVector,
    pub optimizer_state: OptimizerState,
    pub epochs_completed: u64,
    pub data: &'a ClientDataset,
}

impl<'a> ClientState<'a> {
    pub fn new(slot: u64, data: &'a ClientDataset, init: &ParamVector) -> Self {
        ClientState {
            client_id: data.client_id.clone(),
            slot,
            params: init.clone(),
            optimizer_state: OptimizerState::new(init.len()),
            epochs_completed: 0,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: String,
    pub round: usize,
    pub params: ParamVector,
    pub num_samples: usize,
    pub local_loss: f64,
}

/// Resets the client to `global`, then runs `epochs` shuffled passes of
/// mini-batch steps. The reported loss is the sample-weighted mean of the
/// pre-step batch losses.
pub fn local_train(
    client: &mut ClientState<'_>,
    model: &QcnnModel,
    global: &ParamVector,
    round: usize,
    cfg: &LocalTrainConfig,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    let samples = &client.data.samples;
    if samples.is_empty() {
        return Err(QflError::training(format!(
            "client `{}` has no data",
            client.client_id
        )));
    }
    if global.len() != model.param_count() {
        return Err(QflError::training(format!(
            "global parameters have {} entries, model needs {}",
            global.len(),
            model.param_count()
        )));
    }
    client.params = global.clone();
    if client.optimizer_state.first_moment.len() != global.len() {
        client.optimizer_state = OptimizerState::new(global.len());
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut loss_sum = 0.0;
    let mut seen = 0usize;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        let seed = derive_seed_path(cfg.seed, &[client.slot, client.epochs_completed]);
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &samples[i]));
            let (loss, grad) = model.loss_and_gradient(&client.params, &batch, cfg.gradient)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            optimizer_step(
                &mut client.optimizer_state,
                client.params.values_mut(),
                &grad,
                &cfg.optimizer,
            )?;
        }
        client.epochs_completed += 1;
    }
    if client.params.values().iter().any(|v| !v.is_finite()) {
        return Err(QflError::training(format!(
            "client `{}` diverged to non-finite parameters",
            client.client_id
        )));
    }
    Ok(ClientUpdate {
        client_id: client.client_id.clone(),
        round,
        params: client.params.clone(),
        num_samples: samples.len(),
        local_loss: loss_sum / seen as f64,
    })
}
