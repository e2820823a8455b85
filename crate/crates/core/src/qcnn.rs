//! Quantum convolutional neural network: architecture, forward prediction,
//! MSE loss and exact gradients.
//!
//! A convolution stage applies one shared 15-parameter two-qubit block to
//! every even-offset and then every odd-offset neighbouring pair of the active
//! qubits (cyclically). A pooling stage folds each even-position active qubit
//! into its odd-position neighbour with a 6-parameter controlled block and
//! retires the source. The prediction is `p = (1 + ⟨Z⟩)/2` on the readout
//! qubit.

use std::borrow::Borrow;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QflError, Result};
use crate::sim::{
    Angle, AngleSource, Circuit, CompiledCircuit, GateOp, QubitIndex, StateVector,
};

pub const CONV_PARAMS: usize = 15;
pub const POOL_PARAMS: usize = 6;
pub const FC_PARAMS: usize = 3;

/// Half-width of the uniform interval used for parameter initialization.
pub const INIT_SCALE: f64 = std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Pool,
    FullyConnected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub active_qubits: Vec<QubitIndex>,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv => CONV_PARAMS,
            LayerKind::Pool => POOL_PARAMS,
            LayerKind::FullyConnected => FC_PARAMS,
        }
    }
}

/// Pool survivors: the odd positions of the active list.
fn pool_survivors(active: &[QubitIndex]) -> Vec<QubitIndex> {
    active.iter().skip(1).step_by(2).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub n_qubits: usize,
    pub layers: Vec<LayerSpec>,
    pub readout_qubit: QubitIndex,
}

impl ArchitectureSpec {
    /// Conv/pool pairs halving the register down to one qubit.
    pub fn default_for(n_qubits: usize) -> Result<Self> {
        if !n_qubits.is_power_of_two() || !(2..=16).contains(&n_qubits) {
            return Err(QflError::config(format!(
                "default architecture needs a power-of-two qubit count in [2, 16], got {n_qubits}"
            )));
        }
        Self::with_stages(n_qubits, n_qubits.trailing_zeros() as usize, false)
    }

    /// `stages` conv/pool pairs, optionally closed by a single-qubit fully
    /// connected block. Reads out the last surviving qubit.
    pub fn with_stages(n_qubits: usize, stages: usize, fully_connected: bool) -> Result<Self> {
        if stages == 0 {
            return Err(QflError::config("architecture needs at least one conv/pool stage"));
        }
        let mut active: Vec<QubitIndex> = (0..n_qubits).collect();
        let mut layers = Vec::with_capacity(2 * stages + 1);
        for stage in 0..stages {
            if active.len() < 2 || active.len() % 2 != 0 {
                return Err(QflError::config(format!(
                    "stage {stage} has {} active qubits; each stage needs an even count ≥ 2",
                    active.len()
                )));
            }
            layers.push(LayerSpec {
                kind: LayerKind::Conv,
                active_qubits: active.clone(),
            });
            layers.push(LayerSpec {
                kind: LayerKind::Pool,
                active_qubits: active.clone(),
            });
            active = pool_survivors(&active);
        }
        let readout_qubit = *active.last().expect("pooling keeps at least one qubit");
        if fully_connected {
            layers.push(LayerSpec {
                kind: LayerKind::FullyConnected,
                active_qubits: vec![readout_qubit],
            });
        }
        let arch = ArchitectureSpec {
            n_qubits,
            layers,
            readout_qubit,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_readout(mut self, readout_qubit: QubitIndex) -> Result<Self> {
        self.readout_qubit = readout_qubit;
        self.validate()?;
        Ok(self)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::sim::MAX_QUBITS).contains(&self.n_qubits) {
            return Err(QflError::config(format!(
                "architecture qubit count {} out of range",
                self.n_qubits
            )));
        }
        let mut expected: Vec<QubitIndex> = (0..self.n_qubits).collect();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.active_qubits != expected {
                return Err(QflError::config(format!(
                    "layer {i} acts on {:?}, expected {:?} after pooling",
                    layer.active_qubits, expected
                )));
            }
            match layer.kind {
                LayerKind::Conv if expected.len() < 2 => {
                    return Err(QflError::config(format!("conv layer {i} needs ≥ 2 qubits")));
                }
                LayerKind::Pool if expected.is_empty() || expected.len() % 2 != 0 => {
                    return Err(QflError::config(format!(
                        "pool layer {i} needs an even qubit count, got {}",
                        expected.len()
                    )));
                }
                LayerKind::Pool => expected = pool_survivors(&expected),
                LayerKind::FullyConnected if i + 1 != self.layers.len() => {
                    return Err(QflError::config("fully connected layer must be last"));
                }
                LayerKind::FullyConnected if expected.len() != 1 => {
                    return Err(QflError::config(
                        "fully connected layer acts on exactly one surviving qubit",
                    ));
                }
                _ => {}
            }
        }
        if !expected.contains(&self.readout_qubit) {
            return Err(QflError::config(format!(
                "readout qubit {} does not survive pooling (survivors {:?})",
                self.readout_qubit, expected
            )));
        }
        Ok(())
    }
}

/// Shared two-qubit convolution block.
pub fn conv_unit(a: QubitIndex, b: QubitIndex, symbols: &[String]) -> Result<Vec<GateOp>> {
    if symbols.len() != CONV_PARAMS {
        return Err(QflError::config(format!(
            "conv unit takes {CONV_PARAMS} symbols, got {}",
            symbols.len()
        )));
    }
    if a == b {
        return Err(QflError::config("conv unit needs two distinct qubits"));
    }
    let s = |i: usize| Angle::symbol(symbols[i].clone());
    Ok(vec![
        GateOp::rx(a, s(0)),
        GateOp::ry(a, s(1)),
        GateOp::rz(a, s(2)),
        GateOp::rx(b, s(3)),
        GateOp::ry(b, s(4)),
        GateOp::rz(b, s(5)),
        GateOp::zz(a, b, s(6)),
        GateOp::yy(a, b, s(7)),
        GateOp::xx(a, b, s(8)),
        GateOp::rx(a, s(9)),
        GateOp::ry(a, s(10)),
        GateOp::rz(a, s(11)),
        GateOp::rx(b, s(12)),
        GateOp::ry(b, s(13)),
        GateOp::rz(b, s(14)),
    ])
}

/// Pooling block folding `source` into `sink`: basis rotations on both, a
/// CNOT from source to sink, then the sink rotations undone.
pub fn pool_unit(source: QubitIndex, sink: QubitIndex, symbols: &[String]) -> Result<Vec<GateOp>> {
    if symbols.len() != POOL_PARAMS {
        return Err(QflError::config(format!(
            "pool unit takes {POOL_PARAMS} symbols, got {}",
            symbols.len()
        )));
    }
    if source == sink {
        return Err(QflError::config("pool unit needs two distinct qubits"));
    }
    let sink_triple = [
        GateOp::rx(sink, Angle::symbol(symbols[0].clone())),
        GateOp::ry(sink, Angle::symbol(symbols[1].clone())),
        GateOp::rz(sink, Angle::symbol(symbols[2].clone())),
    ];
    let mut ops = sink_triple.to_vec();
    ops.push(GateOp::rx(source, Angle::symbol(symbols[3].clone())));
    ops.push(GateOp::ry(source, Angle::symbol(symbols[4].clone())));
    ops.push(GateOp::rz(source, Angle::symbol(symbols[5].clone())));
    ops.push(GateOp::cnot(source, sink));
    ops.extend(sink_triple.iter().rev().map(GateOp::inverse));
    Ok(ops)
}

fn layer_symbols(prefix: &str, count: usize) -> Vec<String> {
    (0..count).map(|j| format!("{prefix}_{j}")).collect()
}

/// Conv pairs: even offsets first, then odd offsets with cyclic wrap.
fn conv_pairs(active: &[QubitIndex]) -> Vec<(QubitIndex, QubitIndex)> {
    let n = active.len();
    let mut pairs: Vec<_> = (0..n / 2).map(|i| (active[2 * i], active[2 * i + 1])).collect();
    if n > 2 {
        pairs.extend((0..n / 2).map(|i| (active[2 * i + 1], active[(2 * i + 2) % n])));
    }
    pairs
}

/// Emits the symbolic model circuit; symbols come out layer-major.
pub fn build_model_circuit(arch: &ArchitectureSpec) -> Result<Circuit> {
    arch.validate()?;
    let mut circuit = Circuit::new(arch.n_qubits)?;
    let (mut conv_stage, mut pool_stage) = (0, 0);
    for layer in &arch.layers {
        let active = &layer.active_qubits;
        match layer.kind {
            LayerKind::Conv => {
                let symbols = layer_symbols(&format!("conv{conv_stage}"), CONV_PARAMS);
                for (a, b) in conv_pairs(active) {
                    circuit.extend(conv_unit(a, b, &symbols)?)?;
                }
                conv_stage += 1;
            }
            LayerKind::Pool => {
                let symbols = layer_symbols(&format!("pool{pool_stage}"), POOL_PARAMS);
                for pair in active.chunks_exact(2) {
                    circuit.extend(pool_unit(pair[0], pair[1], &symbols)?)?;
                }
                pool_stage += 1;
            }
            LayerKind::FullyConnected => {
                let q = active[0];
                let s = layer_symbols("fc", FC_PARAMS);
                circuit.extend([
                    GateOp::rx(q, Angle::symbol(s[0].clone())),
                    GateOp::ry(q, Angle::symbol(s[1].clone())),
                    GateOp::rz(q, Angle::symbol(s[2].clone())),
                ])?;
            }
        }
    }
    Ok(circuit)
}

/// Ordered learnable parameters with stable symbol names.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    names: Arc<Vec<String>>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(names: Arc<Vec<String>>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(QflError::config(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(QflError::config(format!("duplicate parameter name `{dup}`")));
        }
        Ok(ParamVector { names, values })
    }

    pub fn zeros(names: Arc<Vec<String>>) -> Self {
        let values = vec![0.0; names.len()];
        ParamVector { names, values }
    }

    /// Uniform on `[-scale, scale)` from a seeded generator.
    pub fn init_uniform(names: Arc<Vec<String>>, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..names.len())
            .map(|_| if scale > 0.0 { rng.random_range(-scale..scale) } else { 0.0 })
            .collect();
        ParamVector { names, values }
    }

    pub fn names(&self) -> &Arc<Vec<String>> {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(self.names.clone(), values)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    /// FNV-1a over the little-endian bit patterns of the values.
    pub fn checksum(&self) -> u64 {
        let bytes: Vec<u8> = self
            .values
            .iter()
            .flat_map(|v| v.to_bits().to_le_bytes())
            .collect();
        crate::dataset::fnv1a64(&bytes)
    }
}

/// A labelled input: the preparation circuit of `|ψ⟩` and its 0/1 label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub prep_circuit: Circuit,
    pub label: u8,
}

impl Sample {
    pub fn new(prep_circuit: Circuit, label: u8) -> Result<Self> {
        if label > 1 {
            return Err(QflError::config(format!("label must be 0 or 1, got {label}")));
        }
        Ok(Sample { prep_circuit, label })
    }

    pub fn target(&self) -> f64 {
        f64::from(self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMethod {
    /// Two shifted evaluations per parametrized gate instance.
    ParameterShift,
    /// Reverse sweep over the circuit; same exact gradient at linear cost.
    #[default]
    Adjoint,
}

/// Compiled QCNN ready for evaluation against parameter vectors.
#[derive(Debug, Clone)]
pub struct QcnnModel {
    circuit: Circuit,
    names: Arc<Vec<String>>,
    compiled: CompiledCircuit,
    readout: QubitIndex,
}

impl QcnnModel {
    pub fn new(arch: &ArchitectureSpec) -> Result<Self> {
        Self::from_circuit(build_model_circuit(arch)?, arch.readout_qubit)
    }

    /// Wraps an arbitrary symbolic circuit; parameter order is first use.
    pub fn from_circuit(circuit: Circuit, readout: QubitIndex) -> Result<Self> {
        if readout >= circuit.n_qubits() {
            return Err(QflError::config(format!(
                "readout qubit {readout} outside a {}-qubit circuit",
                circuit.n_qubits()
            )));
        }
        let names = Arc::new(circuit.symbols());
        let compiled = circuit.compile(&names)?;
        Ok(QcnnModel {
            circuit,
            names,
            compiled,
            readout,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn param_names(&self) -> &Arc<Vec<String>> {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.names.len()
    }

    pub fn readout_qubit(&self) -> QubitIndex {
        self.readout
    }

    pub fn init_params(&self, seed: u64, scale: f64) -> ParamVector {
        ParamVector::init_uniform(self.names.clone(), seed, scale)
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if Arc::ptr_eq(&self.names, &params.names) || *self.names == *params.names {
            return Ok(());
        }
        let missing = self
            .names
            .iter()
            .find(|n| !params.names.contains(n))
            .cloned();
        Err(match missing {
            Some(name) => QflError::UnresolvedParameter(name),
            None => QflError::config("parameter vector does not match the model's symbol order"),
        })
    }

    fn prepare(&self, prep: &Circuit) -> Result<StateVector> {
        if prep.n_qubits() != self.circuit.n_qubits() {
            return Err(QflError::config(format!(
                "sample prepared on {} qubits, model expects {}",
                prep.n_qubits(),
                self.circuit.n_qubits()
            )));
        }
        let mut state = StateVector::new_zero_state(prep.n_qubits())?;
        for op in prep.ops() {
            state.apply_gate(op)?;
        }
        Ok(state)
    }

    fn readout_z(&self, prep: &Circuit, params: &[f64]) -> Result<f64> {
        let mut state = self.prepare(prep)?;
        self.compiled.apply(&mut state, params);
        Ok(state.expectation_z_unchecked(self.readout))
    }

    /// `p = (1 + ⟨Z⟩)/2` after `|0…0⟩ → prep → model`.
    pub fn predict(&self, sample_prep: &Circuit, params: &ParamVector) -> Result<f64> {
        self.check_params(params)?;
        Ok((1.0 + self.readout_z(sample_prep, &params.values)?) / 2.0)
    }

    pub fn predict_batch(&self, batch: &[Sample], params: &ParamVector) -> Result<Vec<f64>> {
        self.check_params(params)?;
        batch
            .iter()
            .map(|s| Ok((1.0 + self.readout_z(&s.prep_circuit, &params.values)?) / 2.0))
            .collect()
    }

    /// `J = 1/(2M) Σ (y − p)²`.
    pub fn mse_loss(&self, params: &ParamVector, batch: &[Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(QflError::training("loss over an empty batch"));
        }
        let preds = self.predict_batch(batch, params)?;
        Ok(mse_from_predictions(&preds, batch))
    }

    /// Exact loss gradient by the parameter-shift rule.
    pub fn gradient(&self, params: &ParamVector, batch: &[Sample]) -> Result<Vec<f64>> {
        self.loss_and_gradient(params, batch, GradientMethod::ParameterShift)
            .map(|(_, g)| g)
    }

    pub fn loss_and_gradient<S: Borrow<Sample>>(
        &self,
        params: &ParamVector,
        batch: &[S],
        method: GradientMethod,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(QflError::training("gradient over an empty batch"));
        }
        self.check_params(params)?;
        let m = batch.len() as f64;
        let mut grad = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        for sample in batch {
            let sample = sample.borrow();
            let state = self.prepare(&sample.prep_circuit)?;
            let (z, dz) = match method {
                GradientMethod::ParameterShift => self.shift_rule(state, &params.values),
                GradientMethod::Adjoint => self.adjoint(state, &params.values),
            };
            let p = (1.0 + z) / 2.0;
            let residual = p - sample.target();
            loss += residual * residual;
            // dJ/dθ = (1/M) Σ (p − y) · dp/dθ, with dp/dθ = ½ d⟨Z⟩/dθ.
            let scale = residual / (2.0 * m);
            for (g, d) in grad.iter_mut().zip(&dz) {
                *g += scale * d;
            }
        }
        Ok((loss / (2.0 * m), grad))
    }

    /// `(⟨Z⟩, d⟨Z⟩/dθ)`, shifting each gate instance by ±π/2 in turn.
    fn shift_rule(&self, initial: StateVector, params: &[f64]) -> (f64, Vec<f64>) {
        let ops = self.compiled.ops();
        let mut before = Vec::with_capacity(ops.len());
        let mut state = initial;
        for op in ops {
            before.push(state.clone());
            state.apply_raw(op.kind, op.q0, op.q1, op.theta(params));
        }
        let z = state.expectation_z_unchecked(self.readout);

        let mut dz = vec![0.0; self.param_count()];
        let shifted = |i: usize, delta: f64| {
            let mut s = before[i].clone();
            let op = &ops[i];
            s.apply_raw(op.kind, op.q0, op.q1, op.theta(params) + delta);
            for rest in &ops[i + 1..] {
                s.apply_raw(rest.kind, rest.q0, rest.q1, rest.theta(params));
            }
            s.expectation_z_unchecked(self.readout)
        };
        for (i, op) in ops.iter().enumerate() {
            if let AngleSource::Param { index, sign } = op.angle {
                let plus = shifted(i, FRAC_PI_2);
                let minus = shifted(i, -FRAC_PI_2);
                dz[index] += sign * (plus - minus) / 2.0;
            }
        }
        (z, dz)
    }

    /// `(⟨Z⟩, d⟨Z⟩/dθ)` from one forward pass and one reverse sweep.
    ///
    /// With `λ = Z·ψ_out` carried backwards, each gate `exp(−iθ/2·G)`
    /// contributes `Im⟨λ|G|ψ⟩` evaluated just after the gate.
    fn adjoint(&self, initial: StateVector, params: &[f64]) -> (f64, Vec<f64>) {
        let ops = self.compiled.ops();
        let mut psi = initial;
        self.compiled.apply(&mut psi, params);
        let z = psi.expectation_z_unchecked(self.readout);
        let mut lambda = psi.clone();
        lambda.apply_pauli_z(self.readout);

        let mut dz = vec![0.0; self.param_count()];
        for i in (0..ops.len()).rev() {
            let op = &ops[i];
            if let AngleSource::Param { index, sign } = op.angle {
                let overlap = lambda.generator_overlap(&psi, op.kind, op.q0, op.q1);
                dz[index] += sign * overlap.im;
            }
            if i > 0 {
                self.compiled.unapply_op(i, &mut psi, params);
                self.compiled.unapply_op(i, &mut lambda, params);
            }
        }
        (z, dz)
    }

    /// Gate instances that read parameter `index`.
    pub fn instances_of(&self, index: usize) -> usize {
        self.compiled
            .ops()
            .iter()
            .filter(|op| matches!(op.angle, AngleSource::Param { index: i, .. } if i == index))
            .count()
    }
}

/// `1/(2M) Σ (y − p)²` over paired predictions and samples.
pub(crate) fn mse_from_predictions<S: Borrow<Sample>>(preds: &[f64], batch: &[S]) -> f64 {
    let sum: f64 = preds
        .iter()
        .zip(batch)
        .map(|(p, s)| (s.borrow().target() - p).powi(2))
        .sum();
    sum / (2.0 * batch.len() as f64)
}
