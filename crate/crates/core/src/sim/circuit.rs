use std::collections::HashMap;

use super::gate::{Angle, GateKind, GateOp, QubitIndex};
use super::state::{StateVector, MAX_QUBITS};
use crate::error::{QflError, Result};

/// Ordered gate list over a fixed qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(QflError::config(format!(
                "qubit count must be in [1, {MAX_QUBITS}], got {n_qubits}"
            )));
        }
        Ok(Circuit {
            n_qubits,
            ops: Vec::new(),
        })
    }

    pub fn from_ops(n_qubits: usize, ops: Vec<GateOp>) -> Result<Self> {
        let mut c = Circuit::new(n_qubits)?;
        c.extend(ops)?;
        Ok(c)
    }

    pub fn push(&mut self, op: GateOp) -> Result<()> {
        if op.max_qubit() >= self.n_qubits {
            return Err(QflError::config(format!(
                "{} targets qubit {} but the circuit has {} qubits",
                op.kind(),
                op.max_qubit(),
                self.n_qubits
            )));
        }
        self.ops.push(op);
        Ok(())
    }

    pub fn extend(&mut self, ops: impl IntoIterator<Item = GateOp>) -> Result<()> {
        for op in ops {
            self.push(op)?;
        }
        Ok(())
    }

    /// Appends all of `other`'s gates; both circuits must share a register size.
    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(QflError::config(format!(
                "cannot append a {}-qubit circuit to a {}-qubit circuit",
                other.n_qubits, self.n_qubits
            )));
        }
        self.ops.extend(other.ops.iter().cloned());
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Distinct symbol names in order of first use.
    pub fn symbols(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.ops
            .iter()
            .filter_map(|op| op.angle().and_then(Angle::symbol_name))
            .filter(|name| seen.insert(name.to_string()))
            .map(str::to_string)
            .collect()
    }

    pub fn count_kind(&self, kind: GateKind) -> usize {
        self.ops.iter().filter(|op| op.kind() == kind).count()
    }

    /// Runs the circuit on `|0…0⟩`.
    pub fn simulate(&self, bindings: &HashMap<String, f64>) -> Result<StateVector> {
        let mut s = StateVector::new_zero_state(self.n_qubits)?;
        s.apply_circuit(self, bindings)?;
        Ok(s)
    }

    /// Resolves symbols to positions in `names` so the circuit can be run
    /// against plain parameter slices.
    pub fn compile(&self, names: &[String]) -> Result<CompiledCircuit> {
        let index: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let ops = self
            .ops
            .iter()
            .map(|op| {
                let t = op.targets();
                let angle = match op.angle() {
                    None => AngleSource::Fixed(0.0),
                    Some(Angle::Value(v)) => AngleSource::Fixed(*v),
                    Some(Angle::Symbol { name, negated }) => {
                        let idx = *index
                            .get(name.as_str())
                            .ok_or_else(|| QflError::UnresolvedParameter(name.clone()))?;
                        AngleSource::Param {
                            index: idx,
                            sign: if *negated { -1.0 } else { 1.0 },
                        }
                    }
                };
                Ok(CompiledOp {
                    kind: op.kind(),
                    q0: t[0],
                    q1: *t.last().unwrap(),
                    angle,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledCircuit {
            n_qubits: self.n_qubits,
            n_params: names.len(),
            ops,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSource {
    Fixed(f64),
    Param { index: usize, sign: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompiledOp {
    pub kind: GateKind,
    pub q0: QubitIndex,
    pub q1: QubitIndex,
    pub angle: AngleSource,
}

impl CompiledOp {
    pub fn theta(&self, params: &[f64]) -> f64 {
        match self.angle {
            AngleSource::Fixed(v) => v,
            AngleSource::Param { index, sign } => sign * params[index],
        }
    }
}

/// A circuit whose symbols are bound to slots of a parameter slice.
#[derive(Debug, Clone)]
pub struct CompiledCircuit {
    n_qubits: usize,
    n_params: usize,
    ops: Vec<CompiledOp>,
}

impl CompiledCircuit {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn ops(&self) -> &[CompiledOp] {
        &self.ops
    }

    pub fn apply(&self, state: &mut StateVector, params: &[f64]) {
        debug_assert_eq!(params.len(), self.n_params);
        debug_assert_eq!(state.n_qubits(), self.n_qubits);
        for op in &self.ops {
            state.apply_raw(op.kind, op.q0, op.q1, op.theta(params));
        }
    }

    /// Applies the inverse of op `i` given the parameters.
    pub(crate) fn unapply_op(&self, i: usize, state: &mut StateVector, params: &[f64]) {
        let op = &self.ops[i];
        state.apply_raw(op.kind, op.q0, op.q1, -op.theta(params));
    }
}
