use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{check_weights, federated_average, uniform_weights};
use super::client::{local_train, ClientState, LocalTrainConfig};
use super::optimizer::OptimizerConfig;
use super::transport::{InProcessTransport, Transport};
use crate::dataset::{ClientDataset, FederatedDataset};
use crate::error::{QflError, Result};
use crate::qcnn::{mse_from_predictions, INIT_SCALE, ArchitectureSpec, GradientMethod, ParamVector, QcnnModel};
use crate::seed::derive_seed;

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub params: ParamVector,
    pub round: usize,
    pub client_weights: Vec<f64>,
}

impl ServerState {
    pub fn new(params: ParamVector, client_weights: Vec<f64>) -> Result<Self> {
        check_weights(&client_weights)?;
        Ok(ServerState {
            params,
            round: 0,
            client_weights,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mse: f64,
}

/// Binary accuracy at threshold 0.5 (`p > 0.5` predicts 1) and MSE over the
/// pooled samples of `clients`.
pub fn evaluate(params: &ParamVector, clients: &[ClientDataset], model: &QcnnModel) -> Result<Evaluation> {
    let samples: Vec<_> = clients.iter().flat_map(|c| &c.samples).collect();
    evaluate_samples(params, &samples, model)
}

fn evaluate_samples(
    params: &ParamVector,
    samples: &[&crate::qcnn::Sample],
    model: &QcnnModel,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(QflError::training("evaluation set is empty"));
    }
    let preds = samples
        .par_iter()
        .map(|s| model.predict(&s.prep_circuit, params))
        .collect::<Result<Vec<f64>>>()?;
    let correct = preds
        .iter()
        .zip(samples)
        .filter(|(p, s)| (**p > 0.5) == (s.label == 1))
        .count();
    Ok(Evaluation {
        accuracy: correct as f64 / samples.len() as f64,
        mse: mse_from_predictions(&preds, samples),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientLoss {
    pub client_id: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub server_params_checksum: String,
    pub client_losses: Vec<ClientLoss>,
    pub test_accuracy: f64,
    pub test_mse: f64,
    pub train_accuracy: Option<f64>,
    pub train_mse: Option<f64>,
}

fn record(
    round: usize,
    params: &ParamVector,
    client_losses: Vec<ClientLoss>,
    test: Evaluation,
    train: Option<Evaluation>,
) -> RoundRecord {
    RoundRecord {
        round,
        server_params_checksum: format!("{:016x}", params.checksum()),
        client_losses,
        test_accuracy: test.accuracy,
        test_mse: test.mse,
        train_accuracy: train.map(|e| e.accuracy),
        train_mse: train.map(|e| e.mse),
    }
}

/// Broadcast, local training, aggregation, evaluation on `test_clients`.
pub fn run_round(
    server: &mut ServerState,
    transport: &mut dyn Transport,
    model: &QcnnModel,
    test_clients: &[ClientDataset],
) -> Result<RoundRecord> {
    let updates = transport.exchange(server.round, &server.params)?;
    if updates.len() != server.client_weights.len() {
        return Err(QflError::training(format!(
            "{} updates for {} weighted clients",
            updates.len(),
            server.client_weights.len()
        )));
    }
    if let Some(stale) = updates.iter().find(|u| u.round != server.round) {
        return Err(QflError::training(format!(
            "client `{}` answered round {} during round {}",
            stale.client_id, stale.round, server.round
        )));
    }
    let params = federated_average(&updates, &server.client_weights)?;
    server.params = params;
    server.round += 1;
    let losses = updates
        .into_iter()
        .map(|u| ClientLoss {
            client_id: u.client_id,
            loss: u.local_loss,
        })
        .collect();
    let test = evaluate(&server.params, test_clients, model)?;
    Ok(record(server.round, &server.params, losses, test, None))
}

/// Which clients train and which are held out for testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    /// The first `n_train` clients train, the next `n_test` test.
    pub fn leading(dataset: &FederatedDataset, n_train: usize, n_test: usize) -> Result<Self> {
        if n_train + n_test > dataset.clients.len() {
            return Err(QflError::config(format!(
                "split {n_train}/{n_test} needs {} clients, dataset has {}",
                n_train + n_test,
                dataset.clients.len()
            )));
        }
        let ids: Vec<String> = dataset.clients.iter().map(|c| c.client_id.clone()).collect();
        Ok(Split {
            train: ids[..n_train].to_vec(),
            test: ids[n_train..n_train + n_test].to_vec(),
        })
    }

    pub fn validate(&self, dataset: &FederatedDataset) -> Result<()> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(QflError::config("train and test client sets must be nonempty"));
        }
        let train: HashSet<_> = self.train.iter().collect();
        if train.len() != self.train.len() {
            return Err(QflError::config("duplicate training client"));
        }
        if let Some(both) = self.test.iter().find(|id| train.contains(id)) {
            return Err(QflError::config(format!(
                "client `{both}` is in both the train and test sets"
            )));
        }
        for id in self.train.iter().chain(&self.test) {
            if dataset.client(id).is_none() {
                return Err(QflError::config(format!("unknown client `{id}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rounds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub split: Split,
    pub seed: u64,
    /// Defaults to `1/K` per training client.
    pub weights: Option<Vec<f64>>,
    pub architecture: ArchitectureSpec,
    pub gradient: GradientMethod,
    /// Also score the final parameters on the training clients.
    pub eval_train: bool,
    /// Initial parameters are uniform on `[-init_scale, init_scale)`.
    pub init_scale: f64,
}

impl TrainConfig {
    pub fn new(split: Split, optimizer: OptimizerConfig) -> Result<Self> {
        Ok(TrainConfig {
            rounds: 30,
            epochs: 1,
            batch_size: 16,
            optimizer,
            split,
            seed: 0,
            weights: None,
            architecture: ArchitectureSpec::default_for(8)?,
            gradient: GradientMethod::Adjoint,
            eval_train: false,
            init_scale: INIT_SCALE,
        })
    }

    pub fn local(&self) -> LocalTrainConfig {
        LocalTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            gradient: self.gradient,
            seed: derive_seed(self.seed, SHUFFLE_STREAM),
        }
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, INIT_STREAM)
    }

    pub fn client_weights(&self) -> Result<Vec<f64>> {
        let k = self.split.train.len();
        match &self.weights {
            None => Ok(uniform_weights(k)),
            Some(w) if w.len() != k => Err(QflError::config(format!(
                "{} weights for {k} training clients",
                w.len()
            ))),
            Some(w) => {
                check_weights(w)?;
                Ok(w.clone())
            }
        }
    }
}

fn pick<'d>(dataset: &'d FederatedDataset, ids: &[String]) -> Vec<&'d ClientDataset> {
    ids.iter()
        .map(|id| dataset.client(id).expect("split validated"))
        .collect()
}

/// Drives `rounds` rounds over any transport. The first record is the
/// round-0 evaluation of `init`.
pub fn run_federated(
    model: &QcnnModel,
    init: ParamVector,
    weights: Vec<f64>,
    transport: &mut dyn Transport,
    rounds: usize,
    test_clients: &[ClientDataset],
    train_clients: Option<&[ClientDataset]>,
) -> Result<(ServerState, Vec<RoundRecord>)> {
    let mut server = ServerState::new(init, weights)?;
    let mut records = Vec::with_capacity(rounds + 1);
    let test = evaluate(&server.params, test_clients, model)?;
    records.push(record(0, &server.params, Vec::new(), test, None));
    for _ in 0..rounds {
        records.push(run_round(&mut server, transport, model, test_clients)?);
    }
    transport.finish()?;
    if let (Some(train), Some(last)) = (train_clients, records.last_mut()) {
        let e = evaluate(&server.params, train, model)?;
        last.train_accuracy = Some(e.accuracy);
        last.train_mse = Some(e.mse);
    }
    Ok((server, records))
}

/// Federated training of the configured QCNN with in-process clients.
pub fn run_training(dataset: &FederatedDataset, cfg: &TrainConfig) -> Result<Vec<RoundRecord>> {
    train_with_params(dataset, cfg).map(|(_, records)| records)
}

/// As [`run_training`], also returning the final server parameters.
pub fn train_with_params(
    dataset: &FederatedDataset,
    cfg: &TrainConfig,
) -> Result<(ParamVector, Vec<RoundRecord>)> {
    cfg.split.validate(dataset)?;
    let local = cfg.local();
    local.validate()?;
    let weights = cfg.client_weights()?;
    if !(cfg.init_scale >= 0.0 && cfg.init_scale.is_finite()) {
        return Err(QflError::config(format!(
            "init scale must be finite and nonnegative, got {}",
            cfg.init_scale
        )));
    }
    let model = QcnnModel::new(&cfg.architecture)?;
    if dataset.gen_config.n_qubits != cfg.architecture.n_qubits {
        return Err(QflError::config(format!(
            "dataset has {} qubits, architecture {}",
            dataset.gen_config.n_qubits, cfg.architecture.n_qubits
        )));
    }
    let init = model.init_params(cfg.init_seed(), cfg.init_scale);

    let train_data = pick(dataset, &cfg.split.train);
    let test_data: Vec<ClientDataset> = pick(dataset, &cfg.split.test).into_iter().cloned().collect();
    let clients = train_data
        .iter()
        .enumerate()
        .map(|(slot, data)| ClientState::new(slot as u64, data, &init))
        .collect();
    let mut transport = InProcessTransport::new(&model, clients, local);
    let train_owned: Option<Vec<ClientDataset>> = cfg
        .eval_train
        .then(|| train_data.iter().map(|c| (*c).clone()).collect());
    let (server, records) = run_federated(
        &model,
        init,
        weights,
        &mut transport,
        cfg.rounds,
        &test_data,
        train_owned.as_deref(),
    )?;
    Ok((server.params, records))
}

/// Plain (non-federated) training of one client's data for `total_epochs`
/// epochs, using the same seeding as client slot 0 of a federated run.
pub fn train_centralized(
    model: &QcnnModel,
    data: &ClientDataset,
    init: &ParamVector,
    total_epochs: usize,
    cfg: &LocalTrainConfig,
) -> Result<ParamVector> {
    let mut client = ClientState::new(0, data, init);
    let cfg = LocalTrainConfig {
        epochs: total_epochs,
        ..cfg.clone()
    };
    let update = local_train(&mut client, model, init, 0, &cfg)?;
    Ok(update.params)
}
