//! Gate vocabulary and the unitary each gate stands for.
//!
//! Every parametrized gate is `exp(-i·angle/2·G)` where `G` is a Pauli word
//! with `G² = I`. Two-qubit matrices are written in the textbook order
//! `|t0 t1⟩`, i.e. row index `2·bit(t0) + bit(t1)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{QflError, Result};

/// Index of a qubit within a register. Qubit 0 is the least-significant bit
/// of the basis-state index.
pub type QubitIndex = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    H,
    CZ,
    CNOT,
    RX,
    RY,
    RZ,
    XX,
    YY,
    ZZ,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::H,
        GateKind::CZ,
        GateKind::CNOT,
        GateKind::RX,
        GateKind::RY,
        GateKind::RZ,
        GateKind::XX,
        GateKind::YY,
        GateKind::ZZ,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::H | GateKind::RX | GateKind::RY | GateKind::RZ => 1,
            GateKind::CZ | GateKind::CNOT | GateKind::XX | GateKind::YY | GateKind::ZZ => 2,
        }
    }

    pub fn is_parametrized(self) -> bool {
        !matches!(self, GateKind::H | GateKind::CZ | GateKind::CNOT)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::CZ => "CZ",
            GateKind::CNOT => "CNOT",
            GateKind::RX => "RX",
            GateKind::RY => "RY",
            GateKind::RZ => "RZ",
            GateKind::XX => "XX",
            GateKind::YY => "YY",
            GateKind::ZZ => "ZZ",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(())
    }
}

/// Rotation angle of a parametrized gate: either a literal value in radians
/// or a reference to a learnable symbol, optionally negated.
#[derive(Debug, Clone, PartialEq)]
pub enum Angle {
    Value(f64),
    Symbol { name: String, negated: bool },
}

impl Angle {
    pub fn symbol(name: impl Into<String>) -> Self {
        Angle::Symbol {
            name: name.into(),
            negated: false,
        }
    }

    pub fn negated_symbol(name: impl Into<String>) -> Self {
        Angle::Symbol {
            name: name.into(),
            negated: true,
        }
    }

    /// The angle with its sign flipped.
    pub fn inverse(&self) -> Self {
        match self {
            Angle::Value(v) => Angle::Value(-v),
            Angle::Symbol { name, negated } => Angle::Symbol {
                name: name.clone(),
                negated: !negated,
            },
        }
    }

    pub fn symbol_name(&self) -> Option<&str> {
        match self {
            Angle::Value(_) => None,
            Angle::Symbol { name, .. } => Some(name),
        }
    }

    /// Resolves the angle to a value using `lookup` for symbols.
    pub fn resolve<F>(&self, lookup: F) -> Result<f64>
    where
        F: Fn(&str) -> Option<f64>,
    {
        match self {
            Angle::Value(v) => Ok(*v),
            Angle::Symbol { name, negated } => {
                let v = lookup(name).ok_or_else(|| QflError::UnresolvedParameter(name.clone()))?;
                Ok(if *negated { -v } else { v })
            }
        }
    }
}

impl From<f64> for Angle {
    fn from(v: f64) -> Self {
        Angle::Value(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    kind: GateKind,
    targets: [QubitIndex; 2],
    angle: Option<Angle>,
}

impl GateOp {
    /// Builds a gate, checking arity, target distinctness and angle presence.
    pub fn new(kind: GateKind, targets: &[QubitIndex], angle: Option<Angle>) -> Result<Self> {
        if targets.len() != kind.arity() {
            return Err(QflError::config(format!(
                "{kind} takes {} target(s), got {}",
                kind.arity(),
                targets.len()
            )));
        }
        if kind.arity() == 2 && targets[0] == targets[1] {
            return Err(QflError::config(format!(
                "{kind} targets must be distinct, got {} twice",
                targets[0]
            )));
        }
        if kind.is_parametrized() != angle.is_some() {
            return Err(QflError::config(if kind.is_parametrized() {
                format!("{kind} requires an angle")
            } else {
                format!("{kind} takes no angle")
            }));
        }
        let second = if kind.arity() == 2 { targets[1] } else { targets[0] };
        Ok(GateOp {
            kind,
            targets: [targets[0], second],
            angle,
        })
    }

    pub fn h(q: QubitIndex) -> Self {
        Self::one(GateKind::H, q, None)
    }

    pub fn cz(a: QubitIndex, b: QubitIndex) -> Self {
        Self::two(GateKind::CZ, a, b, None)
    }

    pub fn cnot(control: QubitIndex, target: QubitIndex) -> Self {
        Self::two(GateKind::CNOT, control, target, None)
    }

    pub fn rx(q: QubitIndex, angle: impl Into<Angle>) -> Self {
        Self::one(GateKind::RX, q, Some(angle.into()))
    }

    pub fn ry(q: QubitIndex, angle: impl Into<Angle>) -> Self {
        Self::one(GateKind::RY, q, Some(angle.into()))
    }

    pub fn rz(q: QubitIndex, angle: impl Into<Angle>) -> Self {
        Self::one(GateKind::RZ, q, Some(angle.into()))
    }

    pub fn xx(a: QubitIndex, b: QubitIndex, angle: impl Into<Angle>) -> Self {
        Self::two(GateKind::XX, a, b, Some(angle.into()))
    }

    pub fn yy(a: QubitIndex, b: QubitIndex, angle: impl Into<Angle>) -> Self {
        Self::two(GateKind::YY, a, b, Some(angle.into()))
    }

    pub fn zz(a: QubitIndex, b: QubitIndex, angle: impl Into<Angle>) -> Self {
        Self::two(GateKind::ZZ, a, b, Some(angle.into()))
    }

    fn one(kind: GateKind, q: QubitIndex, angle: Option<Angle>) -> Self {
        GateOp {
            kind,
            targets: [q, q],
            angle,
        }
    }

    fn two(kind: GateKind, a: QubitIndex, b: QubitIndex, angle: Option<Angle>) -> Self {
        assert_ne!(a, b, "{kind} targets must be distinct");
        GateOp {
            kind,
            targets: [a, b],
            angle,
        }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn targets(&self) -> &[QubitIndex] {
        &self.targets[..self.kind.arity()]
    }

    pub fn angle(&self) -> Option<&Angle> {
        self.angle.as_ref()
    }

    /// Largest qubit index touched by this gate.
    pub fn max_qubit(&self) -> QubitIndex {
        self.targets[0].max(self.targets[1])
    }

    /// The same gate with every target remapped through `f`.
    pub fn map_targets(&self, f: impl Fn(QubitIndex) -> QubitIndex) -> Self {
        GateOp {
            kind: self.kind,
            targets: [f(self.targets[0]), f(self.targets[1])],
            angle: self.angle.clone(),
        }
    }

    /// The gate undoing this one.
    pub fn inverse(&self) -> Self {
        GateOp {
            kind: self.kind,
            targets: self.targets,
            angle: self.angle.as_ref().map(Angle::inverse),
        }
    }

    /// The angle value when it is a literal; an error naming the symbol otherwise.
    pub fn bound_angle(&self) -> Result<Option<f64>> {
        self.angle
            .as_ref()
            .map(|a| a.resolve(|_| None))
            .transpose()
    }
}

/// Dense square matrix over the complex numbers, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl Matrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Matrix { dim, entries }
    }

    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix must be square");
        Matrix {
            dim,
            entries: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                entries[c * n + r] = self.entries[r * n + c].conj();
            }
        }
        Matrix { dim: n, entries }
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for k in 0..n {
                let a = self.entries[r * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    entries[r * n + c] += a * other.entries[k * n + c];
                }
            }
        }
        Matrix { dim: n, entries }
    }

    /// Largest entrywise deviation of `self` from `other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .max_abs_diff(&Matrix::identity(self.dim))
    }
}

/// The unitary of `op` on its own targets (2×2 or 4×4).
pub fn gate_matrix(op: &GateOp) -> Result<Matrix> {
    let theta = op.bound_angle()?.unwrap_or(0.0);
    Ok(unitary_for(op.kind(), theta))
}

pub(crate) fn unitary_for(kind: GateKind, theta: f64) -> Matrix {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let mis = Complex64::new(0.0, -s);
    let pis = Complex64::new(0.0, s);
    match kind {
        GateKind::H => {
            let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            Matrix::from_rows(&[&[h, h], &[h, -h]])
        }
        GateKind::CZ => Matrix::from_rows(&[
            &[one, z, z, z],
            &[z, one, z, z],
            &[z, z, one, z],
            &[z, z, z, -one],
        ]),
        GateKind::CNOT => Matrix::from_rows(&[
            &[one, z, z, z],
            &[z, one, z, z],
            &[z, z, z, one],
            &[z, z, one, z],
        ]),
        GateKind::RX => Matrix::from_rows(&[&[c, mis], &[mis, c]]),
        GateKind::RY => {
            let s = Complex64::new(s, 0.0);
            Matrix::from_rows(&[&[c, -s], &[s, c]])
        }
        GateKind::RZ => {
            let e = Complex64::from_polar(1.0, -theta / 2.0);
            Matrix::from_rows(&[&[e, z], &[z, e.conj()]])
        }
        GateKind::XX => Matrix::from_rows(&[
            &[c, z, z, mis],
            &[z, c, mis, z],
            &[z, mis, c, z],
            &[mis, z, z, c],
        ]),
        // Y⊗Y maps |00⟩↔−|11⟩ and |01⟩↔|10⟩.
        GateKind::YY => Matrix::from_rows(&[
            &[c, z, z, pis],
            &[z, c, mis, z],
            &[z, mis, c, z],
            &[pis, z, z, c],
        ]),
        GateKind::ZZ => {
            let e = Complex64::from_polar(1.0, -theta / 2.0);
            let f = e.conj();
            Matrix::from_rows(&[&[e, z, z, z], &[z, f, z, z], &[z, z, f, z], &[z, z, z, e]])
        }
    }
}
