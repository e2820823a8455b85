//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Criteria 6–10 take seconds; 1–5 train the full
//! 30-client configuration several times.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qfl_core::dataset::{decode_dataset, encode_dataset, generate_federated_dataset, read_dataset, write_dataset, GenConfig};
use qfl_core::fed::{
    federated_average, normalize_weights, train_centralized, train_with_params, uniform_weights, ClientUpdate,
    OptimizerConfig, Split, TrainConfig,
};
use qfl_core::harness::{
    cmd_compare_iid, cmd_error_bars, cmd_sweep_datasize, cmd_train, DatasetSource, MetricsSink, RunSettings,
    TrainCommand,
};
use qfl_core::qcnn::{ArchitectureSpec, ParamVector, QcnnModel};
use qfl_core::QflError;

const MIN_IID_ACCURACY: f64 = 0.95;
const MAX_IID_GAP: f64 = 0.03;
const OPTIMIZER_SLACK: f64 = 0.02;
const MAX_DIVERGENT_ACCURACY: f64 = 0.75;
const DATA_SIZES: [usize; 2] = [80, 160];
const STABILITY_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const MAX_SEED_SPREAD: f64 = 0.05;
const FD_STEP: f64 = 1e-4;
const FD_MAX_REL: f64 = 1e-5;
const FD_MAX_ABS_SMALL: f64 = 1e-7;
const ORACLE_TOL: f64 = 1e-12;
const TRAJECTORY_TOL: f64 = 1e-12;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn report(n: usize, title: &str, v: &Verdict, secs: f64) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} [{tag}] {title}: {} ({secs:.1}s)", v.detail);
}

fn gen(seed: u64) -> GenConfig {
    GenConfig {
        seed,
        ..GenConfig::default()
    }
}

fn iid_source(seed: u64) -> DatasetSource {
    DatasetSource::Generate {
        gen: gen(seed),
        non_iid_fraction: 0.0,
    }
}

fn settings(opt: OptimizerConfig) -> RunSettings {
    RunSettings {
        optimizer: opt,
        ..RunSettings::default()
    }
}

fn train_run(opt: OptimizerConfig) -> Result<f64, QflError> {
    let cmd = TrainCommand {
        source: iid_source(0),
        train_clients: 25,
        test_clients: 5,
        seed: 0,
        settings: settings(opt),
    };
    Ok(cmd_train(&cmd, &mut MetricsSink::memory())?.test_accuracy)
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

// Criteria 6-10.

fn gradient_vs_finite_differences() -> Verdict {
    let model = QcnnModel::new(&ArchitectureSpec::default_for(8).unwrap()).unwrap();
    let (mut worst_rel, mut worst_abs) = (0.0f64, 0.0f64);
    for instance in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let values = (0..model.param_count())
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let params = ParamVector::new(model.param_names().clone(), values).unwrap();
        let ds = generate_federated_dataset(
            &GenConfig {
                n_clients: 1,
                seed: 2000 + instance,
                ..GenConfig::default()
            },
            0.0,
        )
        .unwrap();
        let batch = &ds.clients[0].samples[..4];
        let grad = model.gradient(&params, batch).unwrap();
        for (j, g) in grad.iter().enumerate() {
            let mut plus = params.clone();
            plus.values_mut()[j] += FD_STEP;
            let mut minus = params.clone();
            minus.values_mut()[j] -= FD_STEP;
            let fd = (model.mse_loss(&plus, batch).unwrap() - model.mse_loss(&minus, batch).unwrap())
                / (2.0 * FD_STEP);
            if g.abs() < 1e-3 {
                worst_abs = worst_abs.max((fd - g).abs());
            } else {
                worst_rel = worst_rel.max(((fd - g) / g).abs());
            }
        }
    }
    verdict(
        worst_rel <= FD_MAX_REL && worst_abs <= FD_MAX_ABS_SMALL,
        format!("max relative error {worst_rel:.2e} (≤ {FD_MAX_REL:e}), max absolute error on small coordinates {worst_abs:.2e} (≤ {FD_MAX_ABS_SMALL:e})"),
    )
}

fn simulator_vs_oracle() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let n = 2 + (seed % 2) as usize;
        let circuit = common::random_circuit(10_000 + seed, n, 16);
        let got = circuit.simulate(&HashMap::new()).unwrap();
        let want = common::oracle_state(&circuit, &HashMap::new());
        worst = worst.max(common::max_amp_diff(got.amplitudes(), &want));
    }
    verdict(
        worst <= ORACLE_TOL,
        format!("200 circuits, max amplitude deviation {worst:.2e} (≤ {ORACLE_TOL:e})"),
    )
}

fn update(values: Vec<f64>) -> ClientUpdate {
    let names = Arc::new((0..values.len()).map(|i| format!("p{i}")).collect());
    ClientUpdate {
        client_id: "c".into(),
        round: 0,
        params: ParamVector::new(names, values).unwrap(),
        num_samples: 1,
        local_loss: 0.0,
    }
}

fn fedavg_algebra() -> Verdict {
    let mut failures = Vec::new();
    let pair = federated_average(&[update(vec![1.0, 2.0]), update(vec![3.0, 4.0])], &uniform_weights(2)).unwrap();
    if pair.values() != [2.0, 3.0] {
        failures.push(format!("[1,2]⊕[3,4] gave {:?}", pair.values()));
    }

    let vecs = |k: usize| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 6), k);
    let ws = |k: usize| prop::collection::vec(0.01f64..1.0, k).prop_map(|w| normalize_weights(&w).unwrap());
    let cases = (1usize..8).prop_flat_map(move |k| (vecs(k), vecs(k), ws(k), -3.0f64..3.0, -3.0f64..3.0, 0..k));
    let mut runner = TestRunner::new(PropConfig {
        cases: 256,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let result = runner.run(&cases, |(xs, ys, w, a, b, rot)| {
        let avg = |vs: &[Vec<f64>], w: &[f64]| {
            federated_average(&vs.iter().cloned().map(update).collect::<Vec<_>>(), w)
                .unwrap()
                .values()
                .to_vec()
        };
        let same: Vec<_> = xs.iter().map(|_| xs[0].clone()).collect();
        let fixed = avg(&same, &w);
        prop_assert!(fixed.iter().zip(&xs[0]).all(|(p, q)| (p - q).abs() < 1e-12), "fixed point");

        let combo: Vec<Vec<f64>> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        let lhs = avg(&combo, &w);
        let (ax, ay) = (avg(&xs, &w), avg(&ys, &w));
        prop_assert!(
            lhs.iter().zip(ax.iter().zip(&ay)).all(|(l, (p, q))| (l - (a * p + b * q)).abs() < 1e-11),
            "linearity"
        );

        let k = xs.len();
        let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).rev().collect();
        let xs_p: Vec<_> = perm.iter().map(|&i| xs[i].clone()).collect();
        let w_p: Vec<_> = perm.iter().map(|&i| w[i]).collect();
        let permuted = avg(&xs_p, &w_p);
        prop_assert!(ax.iter().zip(&permuted).all(|(p, q)| (p - q).abs() < 1e-12), "permutation");
        Ok(())
    });
    if let Err(e) = result {
        failures.push(e.to_string());
    }
    let pass = failures.is_empty();
    verdict(
        pass,
        if pass {
            "[1,2]⊕[3,4] = [2,3]; fixed point, linearity, permutation invariance hold on 256 random cases".into()
        } else {
            failures.join("; ")
        },
    )
}

fn single_client_equivalence() -> Verdict {
    let ds = generate_federated_dataset(&gen(0), 0.0).unwrap();
    let split = Split {
        train: vec![ds.clients[0].client_id.clone()],
        test: vec![ds.clients[1].client_id.clone()],
    };
    let mut cfg = TrainConfig::new(split, OptimizerConfig::adam(0.02)).unwrap();
    let model = QcnnModel::new(&cfg.architecture).unwrap();
    let init = model.init_params(cfg.init_seed(), cfg.init_scale);
    let mut worst = 0.0f64;
    for rounds in 1..=5 {
        cfg.rounds = rounds;
        let (fed, _) = train_with_params(&ds, &cfg).unwrap();
        let central = train_centralized(&model, &ds.clients[0], &init, rounds * cfg.epochs, &cfg.local()).unwrap();
        for (a, b) in fed.values().iter().zip(central.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        worst <= TRAJECTORY_TOL,
        format!("5 rounds, max parameter deviation {worst:.2e} (≤ {TRAJECTORY_TOL:e})"),
    )
}

fn dataset_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.qfl"), dir.path().join("b.qfl"));
    let ds = generate_federated_dataset(&gen(0), 0.5).unwrap();
    let ca = write_dataset(&ds, &a).unwrap();
    let cb = write_dataset(&generate_federated_dataset(&gen(0), 0.5).unwrap(), &b).unwrap();
    let round_trip = read_dataset(&a).map(|back| back == ds).unwrap_or(false);
    let mut bytes = encode_dataset(&ds).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x04;
    let rejected = matches!(decode_dataset(&bytes), Err(QflError::Corrupt(_)));
    verdict(
        ca == cb && round_trip && rejected,
        format!(
            "checksums {ca:016x}/{cb:016x}, round trip {}, flipped byte {}",
            if round_trip { "equal" } else { "DIFFERS" },
            if rejected { "rejected" } else { "ACCEPTED" }
        ),
    )
}

// Criteria 1-5.

struct Training {
    iid: f64,
    non_iid: f64,
}

fn iid_and_non_iid() -> Result<Training, QflError> {
    let cmp = cmd_compare_iid(&gen(0), 0.5, 0, &RunSettings::default(), &mut MetricsSink::memory())?;
    Ok(Training {
        iid: cmp.iid.test_accuracy,
        non_iid: cmp.non_iid.test_accuracy,
    })
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut run = |n: usize, title: &str, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        report(n, title, &v, t.elapsed().as_secs_f64());
        all_pass &= v.pass;
    };

    run(6, "gradient correctness", &mut gradient_vs_finite_differences);
    run(7, "simulator oracle equivalence", &mut simulator_vs_oracle);
    run(8, "FedAvg algebra", &mut fedavg_algebra);
    run(9, "single-client equivalence", &mut single_client_equivalence);
    run(10, "dataset determinism and round trip", &mut dataset_determinism);

    let t = Instant::now();
    let training = iid_and_non_iid();
    let shared_secs = t.elapsed().as_secs_f64();
    let (iid, non_iid) = match &training {
        Ok(t) => (t.iid, t.non_iid),
        Err(_) => (f64::NAN, f64::NAN),
    };
    run(1, "end-to-end IID accuracy", &mut || match &training {
        Ok(_) => verdict(
            iid >= MIN_IID_ACCURACY,
            format!("final test accuracy {} (≥ {}), shared IID/non-IID training {shared_secs:.0}s", pct(iid), pct(MIN_IID_ACCURACY)),
        ),
        Err(e) => verdict(false, format!("training failed: {e}")),
    });
    run(2, "non-IID parity", &mut || {
        let gap = (iid - non_iid).abs();
        verdict(
            gap <= MAX_IID_GAP,
            format!("IID {} vs non-IID {}, gap {} points (≤ {})", pct(iid), pct(non_iid), pct(gap), pct(MAX_IID_GAP)),
        )
    });
    run(3, "optimizer ordering", &mut || {
        let runs = [
            OptimizerConfig::sgd(0.02),
            OptimizerConfig::rmsprop(0.002),
            OptimizerConfig::adam(0.2),
        ]
        .map(train_run);
        match runs {
            [Ok(sgd), Ok(rms), Ok(adam_big)] => {
                let ordered = iid >= sgd && sgd >= rms - OPTIMIZER_SLACK;
                verdict(
                    ordered && adam_big <= MAX_DIVERGENT_ACCURACY,
                    format!(
                        "Adam(0.02) {} ≥ SGD(0.02) {} ≥ RMSprop(0.002) {} − {}: {}; Adam(0.2) {} (≤ {})",
                        pct(iid),
                        pct(sgd),
                        pct(rms),
                        pct(OPTIMIZER_SLACK),
                        if ordered { "holds" } else { "VIOLATED" },
                        pct(adam_big),
                        pct(MAX_DIVERGENT_ACCURACY)
                    ),
                )
            }
            other => verdict(
                false,
                format!(
                    "training failed: {}",
                    other.iter().filter_map(|r| r.as_ref().err()).map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
                ),
            ),
        }
    });
    run(4, "federation benefit", &mut || {
        match cmd_sweep_datasize(&gen(0), 0.0, &DATA_SIZES, 0, &RunSettings::default(), &mut MetricsSink::memory()) {
            Ok(points) => {
                let pass = points.iter().all(|p| p.federated.test_accuracy >= p.centralized.test_accuracy);
                let detail = points
                    .iter()
                    .map(|p| {
                        format!(
                            "size {}: federated {} vs centralized {}",
                            p.samples_per_client,
                            pct(p.federated.test_accuracy),
                            pct(p.centralized.test_accuracy)
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("; ");
                verdict(pass, detail)
            }
            Err(e) => verdict(false, format!("training failed: {e}")),
        }
    });
    run(5, "seed stability", &mut || {
        match cmd_error_bars(&iid_source(0), &STABILITY_SEEDS, &RunSettings::default(), &mut MetricsSink::memory()) {
            Ok(bars) => {
                let accs: Vec<String> = bars.runs.iter().map(|(s, o)| format!("{s}:{}", pct(o.test_accuracy))).collect();
                let spread = bars.test_accuracy.spread();
                verdict(
                    spread <= MAX_SEED_SPREAD,
                    format!("accuracies [{}], spread {} points (≤ {})", accs.join(" "), pct(spread), pct(MAX_SEED_SPREAD)),
                )
            }
            Err(e) => verdict(false, format!("training failed: {e}")),
        }
    });

    if all_pass {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria FAIL");
        ExitCode::FAILURE
    }
}
