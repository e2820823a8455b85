//! Dense statevector simulation with exact `⟨Z⟩` readout.

mod circuit;
mod gate;
mod state;

pub use circuit::{AngleSource, Circuit, CompiledCircuit, CompiledOp};
pub use gate::{gate_matrix, Angle, GateKind, GateOp, Matrix, QubitIndex};
pub use state::{StateVector, MAX_QUBITS};
