mod common;

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qfl_core::dataset::*;
use qfl_core::sim::{Angle, Circuit, GateKind, GateOp};
use qfl_core::QflError;

use common::{max_amp_diff, oracle_state, random_circuit};

fn dataset(fraction: f64) -> FederatedDataset {
    generate_federated_dataset(&GenConfig::default(), fraction).unwrap()
}

#[test]
fn generation_is_deterministic() {
    let a = encode_dataset(&dataset(0.5)).unwrap();
    let b = encode_dataset(&dataset(0.5)).unwrap();
    assert_eq!(a, b);
    let other = GenConfig {
        seed: 1,
        ..GenConfig::default()
    };
    let c = encode_dataset(&generate_federated_dataset(&other, 0.5).unwrap()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn file_round_trip_and_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(0.0);
    let p1 = dir.path().join("a.qfl");
    let p2 = dir.path().join("b.qfl");
    let c1 = write_dataset(&ds, &p1).unwrap();
    let c2 = write_dataset(&dataset(0.0), &p2).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let back = read_dataset(&p1).unwrap();
    assert_eq!(back, ds);
    for (a, b) in back.clients.iter().zip(&ds.clients) {
        assert_eq!(a.angles(), b.angles());
    }
}

#[test]
fn corruption_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.qfl");
    write_dataset(&dataset(0.0), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let mut flipped = bytes.clone();
    let at = bytes.len() / 2;
    flipped[at] ^= 0x01;
    std::fs::write(&path, &flipped).unwrap();
    assert!(matches!(read_dataset(&path), Err(QflError::Corrupt(_))));

    let truncated = &bytes[..bytes.len() - 10];
    assert!(matches!(decode_dataset(truncated), Err(QflError::Corrupt(_))));

    let text = String::from_utf8(bytes).unwrap();
    let future = text.replacen("QFLDATA v1", "QFLDATA v9", 1);
    assert!(matches!(
        decode_dataset(future.as_bytes()),
        Err(QflError::Version { found: 9, .. })
    ));
    assert!(decode_dataset(b"not a dataset").is_err());
}

#[test]
fn empty_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.qfl");
    let ds = FederatedDataset {
        clients: Vec::new(),
        gen_config: GenConfig {
            n_clients: 0,
            ..GenConfig::default()
        },
        non_iid_fraction: 0.0,
        format_version: FORMAT_VERSION,
    };
    write_dataset(&ds, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert!(back.clients.is_empty());
    assert_eq!(back, ds);
}

#[test]
fn sample_structure() {
    let ds = dataset(0.5);
    assert_eq!(ds.clients.len(), 30);
    let truncated = ds
        .clients
        .iter()
        .filter(|c| c.distribution == AngleDistribution::TruncatedNormal)
        .count();
    assert_eq!(truncated, 15);
    assert!(ds.clients[..15]
        .iter()
        .all(|c| c.distribution == AngleDistribution::TruncatedNormal));
    for client in &ds.clients {
        assert_eq!(client.samples.len(), 160);
        for (i, s) in client.samples.iter().enumerate() {
            let c = &s.prep_circuit;
            assert_eq!(c.count_kind(GateKind::H), 8);
            assert_eq!(c.count_kind(GateKind::CZ), 8);
            assert_eq!(c.count_kind(GateKind::RX), 1);
            let rx = c.ops().last().unwrap();
            assert_eq!(rx.targets(), [i % 8]);
            let angle = excitation_angle(c).unwrap();
            assert_eq!(s.label, label_rule(angle, PI / 2.0));
        }
    }
}

#[test]
fn ids_and_lookup() {
    let ds = dataset(0.0);
    assert_eq!(ds.clients[0].client_id, "client_00");
    assert_eq!(ds.clients[29].client_id, "client_29");
    assert!(ds.client("client_07").is_some());
    let ids: HashSet<_> = ds.clients.iter().map(|c| &c.client_id).collect();
    assert_eq!(ids.len(), 30);
}

#[test]
fn label_balance_band() {
    let ds = dataset(0.0);
    for client in &ds.clients {
        let excited = client.excited_count();
        assert!((48..=112).contains(&excited), "{}: {excited}", client.client_id);
    }
}

#[test]
fn clients_have_distinct_angle_sequences() {
    let ds = dataset(0.5);
    let seqs: HashSet<Vec<u64>> = ds
        .clients
        .iter()
        .map(|c| c.angles().into_iter().map(|a| a.unwrap().to_bits()).collect())
        .collect();
    assert_eq!(seqs.len(), ds.clients.len());
}

#[test]
fn angle_laws() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let uniform = GenConfig::default();
    let draws: Vec<f64> = (0..n).map(|_| draw_angle(&mut rng, &uniform)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.02);
    assert!(draws.iter().all(|a| (-PI..PI).contains(a)));

    let tn = GenConfig {
        angle_distribution: AngleDistribution::TruncatedNormal,
        ..GenConfig::default()
    };
    let draws: Vec<f64> = (0..n).map(|_| draw_angle(&mut rng, &tn)).collect();
    assert!(draws.iter().all(|a| (-PI..=PI).contains(a)));
    let var = draws.iter().map(|a| a * a).sum::<f64>() / n as f64;
    assert!(var.sqrt() < PI / 2.0);

    let mut r1 = ChaCha8Rng::seed_from_u64(9);
    let mut r2 = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        assert_eq!(draw_angle(&mut r1, &tn).to_bits(), draw_angle(&mut r2, &tn).to_bits());
    }
}

#[test]
fn label_rule_cases() {
    assert_eq!(label_rule(0.0, PI / 2.0), 0);
    assert_eq!(label_rule(3.0, PI / 2.0), 1);
    assert_eq!(label_rule(-3.0, PI / 2.0), 1);
    assert_eq!(label_rule(PI / 2.0, PI / 2.0), 0);
}

#[test]
fn forced_angles() {
    let cfg = GenConfig::default();
    let s = sample_with_angle(&cfg, 3, 0.0).unwrap();
    assert_eq!(s.label, 0);
    let s = sample_with_angle(&cfg, 3, PI).unwrap();
    assert_eq!(s.label, 1);
    assert_eq!(s.prep_circuit.count_kind(GateKind::RX), 1);
}

#[test]
fn cluster_state_shapes() {
    let two = cluster_state_circuit(2).unwrap();
    assert_eq!(two.len(), 3);
    let eight = cluster_state_circuit(8).unwrap();
    assert_eq!(eight.count_kind(GateKind::H), 8);
    assert_eq!(eight.count_kind(GateKind::CZ), 8);
    assert!(cluster_state_circuit(1).is_err());
    let three = cluster_state_circuit(3).unwrap();
    let got = three.simulate(&HashMap::new()).unwrap();
    assert!(max_amp_diff(got.amplitudes(), &oracle_state(&three, &HashMap::new())) < 1e-12);
}

#[test]
fn circuit_text_examples() {
    let mut c = Circuit::new(1).unwrap();
    c.push(GateOp::h(0)).unwrap();
    assert_eq!(serialize_circuit(&c), "QFLCIRC v1 qubits=1\nH 0");
    assert_eq!(parse_circuit("QFLCIRC v1 qubits=1\nH 0").unwrap(), c);

    let mut c = Circuit::new(4).unwrap();
    c.push(GateOp::rx(3, PI)).unwrap();
    assert!(serialize_circuit(&c).ends_with("\nRX 3 3.1415926535897931"));

    match parse_circuit("QFLCIRC v1 qubits=2\nH 5") {
        Err(QflError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse_circuit("QFLCIRC v1 qubits=2\nQZ 0"),
        Err(QflError::UnknownGate { .. })
    ));
    assert!(parse_circuit("QFLCIRC v1 qubits=2\nRX 0 abc").is_err());
    assert!(parse_circuit("QFLCIRC v1 qubits=2\nCZ 0").is_err());
    assert!(parse_circuit("QFLCIRC v1 qubits=2\nH 0 1").is_err());
}

#[test]
fn thousand_random_circuits_round_trip() {
    for seed in 0..1000u64 {
        let c = random_circuit(seed, 2 + (seed % 5) as usize, 1 + (seed % 23) as usize);
        assert_eq!(parse_circuit(&serialize_circuit(&c)).unwrap(), c);
    }
}

#[test]
fn symbolic_angles_round_trip() {
    let mut c = Circuit::new(2).unwrap();
    c.push(GateOp::ry(0, Angle::symbol("conv0_1"))).unwrap();
    c.push(GateOp::xx(0, 1, Angle::negated_symbol("pool2_0"))).unwrap();
    let text = serialize_circuit(&c);
    assert!(text.contains("$conv0_1"));
    assert_eq!(parse_circuit(&text).unwrap(), c);
}

proptest! {
    #[test]
    fn angles_survive_text_bit_exactly(theta in any::<f64>().prop_filter("finite", |t| t.is_finite())) {
        let mut c = Circuit::new(2).unwrap();
        c.push(GateOp::zz(1, 0, theta)).unwrap();
        let back = parse_circuit(&serialize_circuit(&c)).unwrap();
        match back.ops()[0].angle() {
            Some(Angle::Value(v)) => prop_assert_eq!(v.to_bits(), theta.to_bits()),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
