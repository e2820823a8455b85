use rayon::prelude::*;

use super::client::{local_train, ClientState, ClientUpdate, LocalTrainConfig};
use crate::error::Result;
use crate::qcnn::{ParamVector, QcnnModel};

/// Moves the global parameters out to the clients and their updates back.
pub trait Transport {
    /// Client ids in the order their updates are returned.
    fn client_ids(&self) -> Vec<String>;

    /// Broadcasts `global` for `round` and collects one update per client,
    /// in `client_ids` order. Any client failure fails the exchange.
    fn exchange(&mut self, round: usize, global: &ParamVector) -> Result<Vec<ClientUpdate>>;

    /// Tells clients no further rounds follow.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Clients living in this process; local training runs on the rayon pool.
pub struct InProcessTransport<'a> {
    model: &'a QcnnModel,
    clients: Vec<ClientState<'a>>,
    config: LocalTrainConfig,
}

impl<'a> InProcessTransport<'a> {
    pub fn new(model: &'a QcnnModel, clients: Vec<ClientState<'a>>, config: LocalTrainConfig) -> Self {
        InProcessTransport {
            model,
            clients,
            config,
        }
    }

    pub fn clients(&self) -> &[ClientState<'a>] {
        &self.clients
    }
}

impl Transport for InProcessTransport<'_> {
    fn client_ids(&self) -> Vec<String> {
        self.clients.iter().map(|c| c.client_id.clone()).collect()
    }

    fn exchange(&mut self, round: usize, global: &ParamVector) -> Result<Vec<ClientUpdate>> {
        let model = self.model;
        let cfg = &self.config;
        self.clients
            .par_iter_mut()
            .map(|client| local_train(client, model, global, round, cfg))
            .collect()
    }
}
