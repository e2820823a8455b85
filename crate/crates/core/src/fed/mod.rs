//! Federated training: client optimizers, local training, federated
//! averaging, and the transports that carry parameters between them.

mod aggregate;
mod client;
mod optimizer;
mod server;
mod transport;
pub mod wire;

pub use aggregate::{check_weights, federated_average, normalize_weights, uniform_weights};
pub use client::{local_train, ClientState, ClientUpdate, LocalTrainConfig};
pub use optimizer::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use server::{
    evaluate, run_federated, run_round, run_training, train_centralized, train_with_params,
    ClientLoss, Evaluation, RoundRecord, ServerState, Split, TrainConfig,
};
pub use transport::{InProcessTransport, Transport};
