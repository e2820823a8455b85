//! Dense-matrix reference simulator, written independently of the library
//! kernels: every gate is embedded into a full `2^n × 2^n` matrix by index
//! arithmetic and applied by plain matrix-vector products.

#![allow(dead_code)]

use std::collections::HashMap;

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfl_core::sim::{Angle, Circuit, GateKind, GateOp};

pub type Dense = Vec<Vec<C>>;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn kron(a: &Dense, b: &Dense) -> Dense {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn pauli(which: char) -> Dense {
    match which {
        'I' => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]],
        'X' => vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]],
        'Y' => vec![vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]],
        'Z' => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]],
        _ => unreachable!(),
    }
}

/// `cos(θ/2)·I − i·sin(θ/2)·P` for a Pauli string `P`.
fn rotation(p: &Dense, theta: f64) -> Dense {
    let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    (0..p.len())
        .map(|i| {
            (0..p.len())
                .map(|j| {
                    let id = if i == j { c(co, 0.0) } else { c(0.0, 0.0) };
                    id + c(0.0, -si) * p[i][j]
                })
                .collect()
        })
        .collect()
}

/// Local gate matrix; two-qubit rows are indexed `2·bit(t0) + bit(t1)`.
pub fn local_matrix(kind: GateKind, theta: f64) -> Dense {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let one = c(1.0, 0.0);
    let zero = c(0.0, 0.0);
    match kind {
        GateKind::H => vec![vec![c(r, 0.0), c(r, 0.0)], vec![c(r, 0.0), c(-r, 0.0)]],
        GateKind::CZ => (0..4)
            .map(|i| (0..4).map(|j| if i != j { zero } else if i == 3 { -one } else { one }).collect())
            .collect(),
        GateKind::CNOT => {
            let perm = [0, 1, 3, 2];
            (0..4)
                .map(|i| (0..4).map(|j| if perm[i] == j { one } else { zero }).collect())
                .collect()
        }
        GateKind::RX => rotation(&pauli('X'), theta),
        GateKind::RY => rotation(&pauli('Y'), theta),
        GateKind::RZ => rotation(&pauli('Z'), theta),
        GateKind::XX => rotation(&kron(&pauli('X'), &pauli('X')), theta),
        GateKind::YY => rotation(&kron(&pauli('Y'), &pauli('Y')), theta),
        GateKind::ZZ => rotation(&kron(&pauli('Z'), &pauli('Z')), theta),
    }
}

/// Embeds a local gate on `targets` into the full register (qubit 0 is the
/// least-significant bit of the basis index).
pub fn embed(n: usize, targets: &[usize], local: &Dense) -> Dense {
    let dim = 1usize << n;
    let mut full = vec![vec![c(0.0, 0.0); dim]; dim];
    let local_index = |i: usize| {
        targets
            .iter()
            .fold(0usize, |acc, &t| 2 * acc + ((i >> t) & 1))
    };
    let mask: usize = targets.iter().map(|&t| 1usize << t).sum();
    for col in 0..dim {
        for row in 0..dim {
            if (row & !mask) != (col & !mask) {
                continue;
            }
            full[row][col] = local[local_index(row)][local_index(col)];
        }
    }
    full
}

pub fn bound_angle(op: &GateOp, bindings: &HashMap<String, f64>) -> f64 {
    match op.angle() {
        None => 0.0,
        Some(Angle::Value(v)) => *v,
        Some(Angle::Symbol { name, negated }) => {
            let v = bindings[name.as_str()];
            if *negated {
                -v
            } else {
                v
            }
        }
    }
}

pub fn gate_dense(n: usize, op: &GateOp, bindings: &HashMap<String, f64>) -> Dense {
    embed(n, op.targets(), &local_matrix(op.kind(), bound_angle(op, bindings)))
}

pub fn matvec(m: &Dense, v: &[C]) -> Vec<C> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn zero_state(n: usize) -> Vec<C> {
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[0] = c(1.0, 0.0);
    v
}

/// Product of all gate matrices, first gate rightmost.
pub fn circuit_unitary(circuit: &Circuit, bindings: &HashMap<String, f64>) -> Dense {
    let n = circuit.n_qubits();
    let mut u = embed(n, &[], &vec![vec![c(1.0, 0.0)]]);
    for op in circuit.ops() {
        u = matmul(&gate_dense(n, op, bindings), &u);
    }
    u
}

/// `|0…0⟩` pushed through each gate's dense matrix in turn.
pub fn oracle_state(circuit: &Circuit, bindings: &HashMap<String, f64>) -> Vec<C> {
    let n = circuit.n_qubits();
    circuit
        .ops()
        .iter()
        .fold(zero_state(n), |v, op| matvec(&gate_dense(n, op, bindings), &v))
}

pub fn oracle_expect_z(state: &[C], qubit: usize) -> f64 {
    state
        .iter()
        .enumerate()
        .map(|(i, a)| if (i >> qubit) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// `(1 + ⟨Z_readout⟩)/2` after `prep` then `model`.
pub fn oracle_predict(
    prep: &Circuit,
    model: &Circuit,
    names: &[String],
    values: &[f64],
    readout: usize,
) -> f64 {
    let bindings: HashMap<String, f64> = names.iter().cloned().zip(values.iter().copied()).collect();
    let mut full = prep.clone();
    full.append(model).unwrap();
    (1.0 + oracle_expect_z(&oracle_state(&full, &bindings), readout)) / 2.0
}

pub fn oracle_loss(
    samples: &[(Circuit, u8)],
    model: &Circuit,
    names: &[String],
    values: &[f64],
    readout: usize,
) -> f64 {
    let m = samples.len() as f64;
    samples
        .iter()
        .map(|(prep, y)| {
            let p = oracle_predict(prep, model, names, values, readout);
            (*y as f64 - p).powi(2)
        })
        .sum::<f64>()
        / (2.0 * m)
}

/// Random circuit over every gate kind with fixed angles.
pub fn random_circuit(seed: u64, n: usize, len: usize) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut circuit = Circuit::new(n).unwrap();
    for _ in 0..len {
        let kind = GateKind::ALL[rng.random_range(0..GateKind::ALL.len())];
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        let theta = rng.random_range(-4.0..4.0);
        let targets: Vec<usize> = if kind.arity() == 1 { vec![a] } else { vec![a, b] };
        let angle = kind.is_parametrized().then(|| Angle::Value(theta));
        circuit.push(GateOp::new(kind, &targets, angle).unwrap()).unwrap();
    }
    circuit
}

pub fn max_amp_diff(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
