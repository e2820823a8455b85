//! Dense statevector with in-place gate kernels.

use std::collections::HashMap;

use num_complex::Complex64;

use super::circuit::Circuit;
use super::gate::{GateKind, GateOp, QubitIndex};
use crate::error::{QflError, Result};

pub const MAX_QUBITS: usize = 16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn new_zero_state(n_qubits: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(QflError::config(format!(
                "qubit count must be in [1, {MAX_QUBITS}], got {n_qubits}"
            )));
        }
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n || !(1..=MAX_QUBITS).contains(&n) {
            return Err(QflError::config(format!(
                "amplitude count {} is not 2^n for n in [1, {MAX_QUBITS}]",
                amps.len()
            )));
        }
        Ok(StateVector { n_qubits: n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_qubit(&self, q: QubitIndex) -> Result<()> {
        if q >= self.n_qubits {
            return Err(QflError::config(format!(
                "qubit {q} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Applies a gate whose angle (if any) is a literal value.
    pub fn apply_gate(&mut self, op: &GateOp) -> Result<()> {
        for &q in op.targets() {
            self.check_qubit(q)?;
        }
        let theta = op.bound_angle()?.unwrap_or(0.0);
        let t = op.targets();
        self.apply_raw(op.kind(), t[0], *t.last().unwrap(), theta);
        Ok(())
    }

    /// Applies `circuit` gate by gate, resolving symbols through `bindings`.
    pub fn apply_circuit(&mut self, circuit: &Circuit, bindings: &HashMap<String, f64>) -> Result<()> {
        if circuit.n_qubits() != self.n_qubits {
            return Err(QflError::Internal(format!(
                "circuit on {} qubits applied to a {}-qubit state",
                circuit.n_qubits(),
                self.n_qubits
            )));
        }
        for op in circuit.ops() {
            let theta = match op.angle() {
                Some(a) => a.resolve(|name| bindings.get(name).copied())?,
                None => 0.0,
            };
            let t = op.targets();
            self.apply_raw(op.kind(), t[0], *t.last().unwrap(), theta);
        }
        Ok(())
    }

    /// `⟨Z⟩` on `qubit`, in `[-1, 1]`.
    pub fn expectation_z(&self, qubit: QubitIndex) -> Result<f64> {
        self.check_qubit(qubit)?;
        Ok(self.expectation_z_unchecked(qubit))
    }

    pub(crate) fn expectation_z_unchecked(&self, qubit: QubitIndex) -> f64 {
        let mask = 1usize << qubit;
        let mut acc = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if i & mask == 0 {
                acc += p;
            } else {
                acc -= p;
            }
        }
        acc.clamp(-1.0, 1.0)
    }

    /// Multiplies amplitudes by -1 where `qubit` is set, i.e. applies Pauli Z.
    pub(crate) fn apply_pauli_z(&mut self, qubit: QubitIndex) {
        let mask = 1usize << qubit;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *a = -*a;
            }
        }
    }

    /// Kernel dispatch. For single-qubit kinds `q1` is ignored.
    pub(crate) fn apply_raw(&mut self, kind: GateKind, q0: QubitIndex, q1: QubitIndex, theta: f64) {
        match kind {
            GateKind::H => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                self.for_pairs(q0, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = (x + y) * h;
                    *b = (x - y) * h;
                });
            }
            GateKind::RX => {
                let (s, c) = (theta / 2.0).sin_cos();
                let mis = Complex64::new(0.0, -s);
                self.for_pairs(q0, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = x * c + y * mis;
                    *b = x * mis + y * c;
                });
            }
            GateKind::RY => {
                let (s, c) = (theta / 2.0).sin_cos();
                self.for_pairs(q0, |a, b| {
                    let (x, y) = (*a, *b);
                    *a = x * c - y * s;
                    *b = x * s + y * c;
                });
            }
            GateKind::RZ => {
                let e = Complex64::from_polar(1.0, -theta / 2.0);
                let f = e.conj();
                self.for_pairs(q0, |a, b| {
                    *a *= e;
                    *b *= f;
                });
            }
            GateKind::CZ => {
                let both = (1usize << q0) | (1usize << q1);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & both == both {
                        *a = -*a;
                    }
                }
            }
            GateKind::CNOT => {
                let cm = 1usize << q0;
                let tm = 1usize << q1;
                for i in 0..self.amps.len() {
                    if i & cm != 0 && i & tm == 0 {
                        self.amps.swap(i, i | tm);
                    }
                }
            }
            GateKind::ZZ => {
                let e = Complex64::from_polar(1.0, -theta / 2.0);
                let f = e.conj();
                for (i, a) in self.amps.iter_mut().enumerate() {
                    let odd = ((i >> q0) ^ (i >> q1)) & 1 == 1;
                    *a *= if odd { f } else { e };
                }
            }
            GateKind::XX | GateKind::YY => {
                let (s, c) = (theta / 2.0).sin_cos();
                let m0 = 1usize << q0;
                let flip = m0 | (1usize << q1);
                let yy = kind == GateKind::YY;
                for i in 0..self.amps.len() {
                    if i & m0 != 0 {
                        continue;
                    }
                    let j = i ^ flip;
                    // Y⊗Y picks up -1 between equal-bit partners, +1 otherwise.
                    let sign = if yy && ((i >> q1) & 1 == 0) { -1.0 } else { 1.0 };
                    let k = Complex64::new(0.0, -s * sign);
                    let (x, y) = (self.amps[i], self.amps[j]);
                    self.amps[i] = x * c + y * k;
                    self.amps[j] = y * c + x * k;
                }
            }
        }
    }

    fn for_pairs(&mut self, q: QubitIndex, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let stride = 1usize << q;
        for block in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a, b);
            }
        }
    }

    /// `⟨self| G |other⟩` for the Pauli generator `G` of a rotation kind.
    pub(crate) fn generator_overlap(
        &self,
        other: &StateVector,
        kind: GateKind,
        q0: QubitIndex,
        q1: QubitIndex,
    ) -> Complex64 {
        let l = &self.amps;
        let r = &other.amps;
        let m0 = 1usize << q0;
        let m1 = 1usize << q1;
        let mut acc = ZERO;
        match kind {
            GateKind::RX => {
                for i in 0..l.len() {
                    acc += l[i].conj() * r[i ^ m0];
                }
            }
            GateKind::RY => {
                // (Yψ)_i = -i ψ_{i^m} when bit clear, +i ψ_{i^m} when set.
                for i in 0..l.len() {
                    let v = l[i].conj() * r[i ^ m0];
                    acc += if i & m0 == 0 {
                        Complex64::new(v.im, -v.re)
                    } else {
                        Complex64::new(-v.im, v.re)
                    };
                }
            }
            GateKind::RZ => {
                for i in 0..l.len() {
                    let v = l[i].conj() * r[i];
                    acc += if i & m0 == 0 { v } else { -v };
                }
            }
            GateKind::XX => {
                for i in 0..l.len() {
                    acc += l[i].conj() * r[i ^ m0 ^ m1];
                }
            }
            GateKind::YY => {
                for i in 0..l.len() {
                    let v = l[i].conj() * r[i ^ m0 ^ m1];
                    let equal = ((i >> q0) ^ (i >> q1)) & 1 == 0;
                    acc += if equal { -v } else { v };
                }
            }
            GateKind::ZZ => {
                for i in 0..l.len() {
                    let v = l[i].conj() * r[i];
                    let odd = ((i >> q0) ^ (i >> q1)) & 1 == 1;
                    acc += if odd { -v } else { v };
                }
            }
            GateKind::H | GateKind::CZ | GateKind::CNOT => {
                unreachable!("{kind} has no rotation generator")
            }
        }
        acc
    }
}
