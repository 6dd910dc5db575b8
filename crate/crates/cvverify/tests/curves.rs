use cvverify::experiments::{run, ExperimentConfig, ExperimentId};

fn assert_monotone(id: ExperimentId, family: usize) {
    let mut cfg = ExperimentConfig::default_for(id);
    cfg.family = family;
    let curves = run(&cfg).unwrap();
    for (name, col) in curves.names.iter().zip(&curves.values) {
        for w in col.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{id:?} {name} decreases: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn example_curves_nondecreasing_in_eta() {
    assert_monotone(ExperimentId::Example2, 1);
    assert_monotone(ExperimentId::Example3, 1);
    assert_monotone(ExperimentId::Example1, 4);
}

#[test]
fn example_runs_are_deterministic() {
    let cfg = ExperimentConfig::default_for(ExperimentId::Example3);
    assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
}

#[test]
fn example2_pairing_matches_independent_two_block_value() {
    use cvverify::fock::{density_from_pure, CoreState};
    use cvverify::gaussian::{beamsplitter, passive_fock_lift, theta_from_transmittance};
    use cvverify::witness::{exact_witness, Partition};
    let curves = run(&ExperimentConfig::default_for(ExperimentId::Example2)).unwrap();
    let w = curves.column("W2_12_34").unwrap();
    let input = CoreState::fock(&[1, 0, 1, 0]);
    for (i, &eta) in curves.eta.iter().enumerate() {
        let t = theta_from_transmittance(eta);
        let u = beamsplitter(t, (0, 1), 4).unwrap() * beamsplitter(t, (2, 3), 4).unwrap();
        let rho = density_from_pure(&input).resize(&[2; 4]).unwrap().conjugate(&passive_fock_lift(&u, &[2; 4]).unwrap());
        let exact = exact_witness(&rho, &input, &Partition::contiguous(4, 2).unwrap()).unwrap();
        assert!((exact - w[i]).abs() < 1e-12, "eta {eta}: {exact} vs {}", w[i]);
    }
}
