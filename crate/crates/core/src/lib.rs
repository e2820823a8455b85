//! Quantum federated learning simulator.
//!
//! Clients hold cluster-state excitation data and train a shared quantum
//! convolutional neural network; a server combines their circuit parameters
//! by federated averaging. Everything runs on an exact dense statevector
//! simulator.

pub mod dataset;
pub mod error;
pub mod fed;
pub mod harness;
pub mod numfmt;
pub mod qcnn;
pub mod seed;
pub mod sim;

pub use error::{QflError, Result};
