//! Acceptance criteria, run as one binary that prints a PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use cvverify::backprop::{backprop_heterodyne, verify_povm_identity, BackpropRule, HeterodyneRule, HomodyneRule, Outcome};
use cvverify::c64;
use cvverify::estimators::{element_bias_bound, het_bias_bound, het_range_bound, hoeffding_lambda, het_g, het_g_noisy, hom_f, hom_f_noisy, EstimatorConfig, HetEstimator};
use cvverify::experiments::{run, ExperimentConfig, ExperimentId};
use cvverify::fock::{density_from_pure, multi_index, random_core_state, random_density, CoreState, DensityOp};
use cvverify::gaussian::{apply_circuit, random_orthogonal, random_passive, GaussianCircuit};
use cvverify::measure::{sample_heterodyne, sample_parallel_homodyne, ThetaPolicy};
use cvverify::oracle::{
    exact_expectation_heterodyne, exact_expectation_homodyne, grid_homodyne, hom_element_factor, named_homodyne_states,
    ElementOracle, HetFactor, QuadratureGrid,
};
use cvverify::protocols::{plan_homodyne, plan_samples, protocol1, protocol3, protocol4, protocol_doped};
use cvverify::witness::{check_doped_sandwich, doped_partition, check_sandwich, exact_witness, Partition};
use cvverify::Complex64;
use std::time::Instant;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

struct Outcome_ {
    pass: bool,
    detail: String,
}

fn ok(pass: bool, detail: impl Into<String>) -> Outcome_ {
    Outcome_ { pass, detail: detail.into() }
}

fn fock(n: usize, c: usize) -> DensityOp {
    let mut v = vec![ZERO; c];
    v[n] = c64(1.0, 0.0);
    DensityOp::from_vector(&[c], &v).unwrap()
}

fn product_target(seed: u64) -> CoreState {
    let parts: Vec<CoreState> = (0..4).map(|i| random_core_state(&[3], seed + i)).collect();
    parts.iter().skip(1).fold(parts[0].clone(), |acc, c| acc.tensor(c))
}

fn criterion1() -> Outcome_ {
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for s in 0..120u64 {
        let rho = random_density(&[3; 4], 1 + (s as usize) % 5, 100 + s);
        let target = product_target(1000 + 4 * s);
        for k in [1, 2, 4] {
            let c = check_sandwich(&rho, &target, &Partition::contiguous(4, k).unwrap()).unwrap();
            worst = worst.min(c.lower_slack).min(c.upper_slack).min(c.ordering_slack);
            cases += 1;
        }
    }
    ok(worst >= -1e-10, format!("{cases} cases, worst slack {worst:.3e}"))
}

fn criterion2() -> Outcome_ {
    let grid = grid_homodyne();
    let mut worst = 0.0f64;
    for rho in named_homodyne_states() {
        for k in 0..3 {
            for l in 0..3 {
                let e = exact_expectation_homodyne(&rho, &[hom_element_factor(k, l)], &grid).unwrap();
                worst = worst.max((e - rho.matrix()[(k, l)]).norm());
            }
        }
    }
    let rho = density_from_pure(&CoreState::fock(&[1]));
    let b = sample_parallel_homodyne(&rho, 200_000, 17, ThetaPolicy::Uniform).unwrap();
    let est = protocol1(&b, &CoreState::fock(&[1])).unwrap();
    let dev = (est.value - 1.0).abs() / est.sigma();
    ok(
        worst <= 1e-5 && dev <= 3.0,
        format!("max |E f - rho_kl| = {worst:.2e}; protocol 1 estimate {:.5} ({dev:.2} sigma)", est.value),
    )
}

fn criterion3() -> Outcome_ {
    let grid = QuadratureGrid::default();
    let settings = [(1, 0.1), (2, 0.2), (3, 0.3)];
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for modes in 1..=2 {
        let cut = vec![3; modes];
        let states: Vec<DensityOp> =
            (0..25u64).map(|s| random_density(&cut, 1 + (s as usize) % 3, 300 + 50 * modes as u64 + s)).collect();
        for &(p, tau) in &settings {
            let cfg = EstimatorConfig::ideal(vec![p; modes], tau).unwrap();
            let oracle = ElementOracle::new(&cfg, &cut, &grid).unwrap();
            for rho in &states {
                let e = oracle.expectations(rho).unwrap();
                for a in 0..rho.dim() {
                    for b in 0..rho.dim() {
                        let bound = element_bias_bound(&multi_index(&cut, a), &multi_index(&cut, b), &cfg).unwrap();
                        worst = worst.min(bound - (e[(a, b)] - rho.matrix()[(a, b)]).norm());
                        cases += 1;
                    }
                }
            }
        }
    }
    let f: Vec<HetFactor> = vec![Box::new(|z| het_g(0, 0, 1, z, 0.3).unwrap())];
    let single = exact_expectation_heterodyne(&fock(1, 3), &f, &grid).unwrap().re;
    ok(
        worst >= 0.0 && (single - 0.3).abs() <= 1e-6,
        format!("{cases} element checks, worst slack {worst:.3e}; E[g1_00 | Fock 1] = {single:.9}"),
    )
}

fn criterion4() -> Outcome_ {
    let mut het_dev = 0.0f64;
    let mut hom_dev = 0.0f64;
    for s in 0..3u64 {
        let probes = vec![random_density(&[3, 3], 2, 40 + s), random_density(&[3, 3], 1, 50 + s)];
        let mut c = GaussianCircuit::identity(2);
        c.u = random_passive(2, 60 + s);
        c.beta = vec![c64(0.3, -0.1 * s as f64), c64(-0.2, 0.25)];
        c.xi = vec![c64(0.1 * s as f64, 0.0), c64(0.0, 0.15)];
        let rule = BackpropRule::Heterodyne(HeterodyneRule::from_circuit(&c).unwrap());
        let outs: Vec<Outcome> = (0..6)
            .map(|i| Outcome::Heterodyne { gamma: vec![c64(0.4 * i as f64 - 1.0, 0.3), c64(0.2, 0.5 - 0.2 * i as f64)] })
            .collect();
        het_dev = het_dev.max(verify_povm_identity(&c, &rule, &probes, &outs).unwrap());

        let mut h = GaussianCircuit::identity(2);
        h.u = random_orthogonal(2, 70 + s).map(|v| c64(v, 0.0));
        h.beta = vec![c64(0.2, 0.3), c64(-0.25, 0.1 * s as f64)];
        let rule = BackpropRule::Homodyne(HomodyneRule::from_circuit(&h).unwrap());
        let outs: Vec<Outcome> = (0..8)
            .map(|k| Outcome::Homodyne {
                theta: k as f64 * std::f64::consts::PI / 4.0,
                x: vec![0.5 - 0.15 * k as f64, 0.3 * (k % 3) as f64 - 0.2],
            })
            .collect();
        hom_dev = hom_dev.max(verify_povm_identity(&h, &rule, &probes, &outs).unwrap());
    }
    ok(het_dev <= 1e-8 && hom_dev <= 1e-6, format!("heterodyne {het_dev:.2e}, homodyne {hom_dev:.2e}"))
}

const RUNS: usize = 200;

fn failure_fraction(values: &[f64], oracle: f64, eps: f64) -> f64 {
    values.iter().filter(|v| (*v - oracle).abs() > eps).count() as f64 / values.len() as f64
}

fn criterion5() -> Outcome_ {
    let (eps, delta) = (0.1, 0.1);
    let mut lines = Vec::new();
    let mut pass = true;

    // protocol 1: target |1⟩, state 0.9|1⟩⟨1| + 0.1|0⟩⟨0|
    let target = CoreState::fock(&[1]);
    let rho = DensityOp::from_vector(&[2], &[ZERO, c64(1.0, 0.0)]).unwrap();
    let rho = cvverify::gaussian::loss_channel(&rho, &[0.9]).unwrap();
    let plan = plan_homodyne(&[target.clone()], eps, delta).unwrap();
    let n = plan.n;
    let vals: Vec<f64> = (0..RUNS as u64)
        .map(|r| protocol1(&sample_parallel_homodyne(&rho, n, 5000 + r, ThetaPolicy::Uniform).unwrap(), &target).unwrap().value)
        .collect();
    let frac = failure_fraction(&vals, 0.9, eps);
    pass &= frac <= 0.15;
    lines.push(format!("P1 N={n} fail={frac:.3}"));

    // protocol 3: target |0⟩, state 0.8|0⟩⟨0| + 0.2|1⟩⟨1|
    let target = CoreState::vacuum(1);
    let rho = cvverify::gaussian::loss_channel(&fock(1, 2), &[0.2]).unwrap();
    let plan = plan_samples(&[target.clone()], &Partition::singletons(1), eps, delta, 1.0).unwrap();
    let n = plan.n;
    let cfg = plan.configs().unwrap().remove(0);
    let vals: Vec<f64> = (0..RUNS as u64)
        .map(|r| protocol3(&sample_heterodyne(&rho, n, 6000 + r, &[ZERO], &[1.0]).unwrap(), &target, &cfg).unwrap().value)
        .collect();
    let frac = failure_fraction(&vals, 0.8, eps);
    pass &= frac <= 0.15;
    lines.push(format!("P3 N={n} p={:?} tau={:.3} fail={frac:.3}", cfg.p, cfg.tau));

    // protocol 4: V = S(ξ) D(β) Û with diagonal Û on σ = (0.9|0⟩⟨0| + 0.1|1⟩⟨1|) ⊗ |0⟩⟨0|
    let targets = vec![CoreState::vacuum(1), CoreState::vacuum(1)];
    let part = Partition::singletons(2);
    let plan = plan_samples(&targets, &part, eps, delta, 1.0).unwrap();
    let n = plan.n;
    let configs = plan.configs().unwrap();
    let mut circuit = GaussianCircuit::identity(2);
    circuit.u = cvverify::fock::CMatrix::from_diagonal(&nalgebra_diag(&[0.4, -1.1]));
    circuit.beta = vec![c64(0.3, -0.2), c64(-0.1, 0.25)];
    circuit.xi = vec![c64(0.1, 0.0), ZERO];
    let sigma = cvverify::gaussian::loss_channel(&fock(1, 2), &[0.1]).unwrap().tensor(&fock(0, 2)).resize(&[10, 10]).unwrap();
    let oracle = exact_witness(&sigma, &CoreState::vacuum(2), &part).unwrap();
    let tested = apply_circuit(&sigma, &circuit, 1e-8).unwrap();
    let vals: Vec<f64> = (0..RUNS as u64)
        .map(|r| {
            let b = sample_heterodyne(&tested, n, 7000 + r, &circuit.xi, &[1.0; 2]).unwrap();
            protocol4(&b, &targets, &circuit, &part, &configs, delta).unwrap().value
        })
        .collect();
    let frac = failure_fraction(&vals, oracle, eps);
    pass &= frac <= 0.15;
    lines.push(format!("P4 N={n} fail={frac:.3}"));
    ok(pass, lines.join("; "))
}

fn nalgebra_diag(phases: &[f64]) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_iterator(phases.len(), phases.iter().map(|&p| Complex64::from_polar(1.0, p)))
}

fn criterion6() -> Outcome_ {
    let cfg = ExperimentConfig::default_for(ExperimentId::Example1);
    let r = run(&cfg).unwrap();
    let (w1, w2, w3) = (r.column("W1").unwrap(), r.column("W2").unwrap(), r.column("W3").unwrap());
    let pointwise = (0..w1.len()).all(|i| w3[i] >= w2[i] - 1e-12 && w2[i] >= w1[i] - 1e-12);
    let (z1, z2, z3) = (r.zero_crossing("W1"), r.zero_crossing("W2"), r.zero_crossing("W3"));
    let crossing = matches!((z1, z2, z3), (Some(a), Some(b), Some(c)) if c <= b && b <= a);
    ok(pointwise && crossing, format!("zero crossings W3 {z3:?}, W2 {z2:?}, W1 {z1:?}"))
}

fn criterion7() -> Outcome_ {
    let r2 = run(&ExperimentConfig::default_for(ExperimentId::Example2)).unwrap();
    let r3 = run(&ExperimentConfig::default_for(ExperimentId::Example3)).unwrap();
    let tol = 1e-12;
    let c = |r: &cvverify::experiments::CurveSet, n: &str| r.column(n).unwrap().to_vec();
    let (f, a, b, w1) = (c(&r2, "F"), c(&r2, "W2_12_34"), c(&r2, "W2_13_24"), c(&r2, "W1"));
    let ex2 = (0..f.len()).all(|i| f[i] >= a[i] - tol && a[i] >= b[i] - tol && b[i] >= w1[i] - tol);
    let (a3, b3, w13) = (c(&r3, "W2_12_34"), c(&r3, "W2_14_23"), c(&r3, "W1"));
    let ex3 = (0..a3.len()).all(|i| a3[i] >= b3[i] - tol && b3[i] >= w13[i] - tol);
    ok(ex2 && ex3, format!("example 2 ordering {ex2}, example 3 ordering {ex3}"))
}

fn criterion8() -> Outcome_ {
    let mut het = 0.0f64;
    let mut hom = 0.0f64;
    for k in 0..4 {
        for l in 0..4 {
            for i in 0..13 {
                let x = -3.0 + 0.5 * i as f64;
                hom = hom.max((hom_f_noisy(k, l, x, 1.0).unwrap() - hom_f(l, k, x).unwrap()).abs());
                let z = c64(0.37 * x, 0.5 - 0.21 * x);
                for p in 1..4 {
                    let d = het_g_noisy(k, l, p, z, 0.45, 1.0).unwrap() - het_g(k, l, p, z, 0.45).unwrap();
                    het = het.max(d.norm());
                }
            }
        }
    }
    let cfg = EstimatorConfig::new(vec![1], 0.3, 0.8).unwrap();
    let lossy = ElementOracle::new(&cfg, &[3], &QuadratureGrid::default()).unwrap().expectations(&fock(1, 3)).unwrap()
        [(0, 0)]
        .re;
    let rejects = hom_f_noisy(0, 0, 0.1, 0.5).is_err() && hom_f_noisy(1, 0, 0.1, 0.3).is_err();
    ok(
        het <= 1e-10 && hom <= 1e-5 && (lossy - 0.392).abs() <= 1e-5 && rejects,
        format!("het {het:.1e}, hom {hom:.1e}, lossy E = {lossy:.7}, rejects eta<=1/2: {rejects}"),
    )
}

fn criterion9() -> Outcome_ {
    let target = [CoreState::vacuum(1)];
    let part = Partition::singletons(1);
    let eps = [0.1, 0.05, 0.025];
    let plans: Vec<_> = eps.iter().map(|&e| plan_samples(&target, &part, e, 0.05, 1.0).unwrap()).collect();
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = plans.iter().map(|p| (p.n as f64).ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let p = plans.last().unwrap().p[0][0] as f64;
    let allowed = 2.0 + 2.0 / p + 0.3;

    let mut vars = Vec::new();
    for k in 1..=3 {
        let rho = density_from_pure(&CoreState::vacuum(k));
        let b = sample_heterodyne(&rho, 200_000, 90 + k as u64, &vec![ZERO; k], &vec![1.0; k]).unwrap();
        let est = HetEstimator::new(&CoreState::vacuum(k), &EstimatorConfig::ideal(vec![1; k], 0.25).unwrap()).unwrap();
        let v: Vec<f64> = (0..b.len()).map(|i| est.eval(b.alpha(i))).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        vars.push(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64);
    }
    let geometric = vars[1] / vars[0] >= 2.0 && vars[2] / vars[1] >= 2.0;
    ok(
        slope <= allowed && geometric,
        format!(
            "N = {:?}, exponent {slope:.3} (allowed {allowed:.3}, p = {p}); variances {:.3?}",
            plans.iter().map(|p| p.n).collect::<Vec<_>>(),
            vars
        ),
    )
}

fn criterion10() -> Outcome_ {
    let mut worst = f64::INFINITY;
    for s in 0..50u64 {
        let phi = random_core_state(&[3, 3], 500 + s);
        let target = phi.tensor(&CoreState::vacuum(2)).with_cutoffs(&[3; 4]).unwrap();
        let pure = density_from_pure(&target);
        let noise = random_density(&[3; 4], 1 + (s as usize) % 4, 600 + s);
        let w = 0.02 * (s % 25) as f64;
        let mixed = pure.matrix() * c64(1.0 - w, 0.0) + noise.matrix() * c64(w, 0.0);
        let rho = DensityOp::new(vec![3; 4], mixed).unwrap();
        let c = check_doped_sandwich(&rho, &phi, 4).unwrap();
        worst = worst.min(c.lower_slack).min(c.upper_slack);
    }

    // end-to-end on the ideal state V(φ ⊗ |00⟩), V = D(β) Û with Û mixing the vacuum modes
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let phi = CoreState::from_dense(&[2, 2], &[c64(s, 0.0), ZERO, ZERO, c64(s, 0.0)]).unwrap();
    let mut circuit = GaussianCircuit::identity(4);
    let mix = random_passive(2, 41);
    for i in 0..2 {
        for j in 0..2 {
            circuit.u[(2 + i, 2 + j)] = mix[(i, j)];
        }
    }
    circuit.beta = vec![ZERO, ZERO, c64(0.3, 0.1), c64(-0.2, 0.2)];
    let ideal = density_from_pure(&phi.tensor(&CoreState::vacuum(2))).resize(&[2, 2, 10, 10]).unwrap();
    let rho = apply_circuit(&ideal, &circuit, 1e-8).unwrap();
    let n = 1_000_000;
    let delta = 0.1;
    let batch = sample_heterodyne(&rho, n, 33, &[ZERO; 4], &[1.0; 4]).unwrap();
    let targets = [phi.clone(), CoreState::vacuum(1), CoreState::vacuum(1)];
    // no desk-scale N meets a small ε for the Bell block, so (p, τ) minimize the reported budget at fixed N
    let configs: Vec<EstimatorConfig> = targets.iter().map(|t| tightest_config(t, n, delta / 3.0)).collect();
    let rep = protocol_doped(&batch, &phi, &circuit, 4, &configs, delta).unwrap();
    let budget = rep.epsilon.total();
    let e2e = (rep.value - 1.0).abs() <= budget;

    // each block estimate against the exact mean of its (biased) estimator
    let back = backprop_heterodyne(&batch, &HeterodyneRule::from_circuit(&circuit).unwrap()).unwrap();
    let grid = QuadratureGrid::default();
    let mut worst_z = 0.0f64;
    for ((block, t), cfg) in doped_partition(2, 4).unwrap().blocks().iter().zip(&targets).zip(&configs) {
        let est = protocol3(&back.select_modes(block).unwrap(), t, cfg).unwrap();
        let reduced = ideal.partial_trace(block).unwrap().resize(&vec![2; block.len()]).unwrap();
        let exact = ElementOracle::new(cfg, reduced.cutoffs(), &grid).unwrap().fidelity_mean(&reduced, t).unwrap();
        worst_z = worst_z.max((est.value - exact).abs() / (est.variance / n as f64).sqrt());
    }
    ok(
        worst >= -1e-10 && e2e && worst_z <= 5.0,
        format!(
            "worst sandwich slack {worst:.3e}; doped estimate {:.4} within budget {budget:.4}; block means within {worst_z:.2} sigma of oracle",
            rep.value
        ),
    )
}

fn tightest_config(core: &CoreState, n: usize, delta: f64) -> EstimatorConfig {
    let mut best = (f64::INFINITY, None);
    for p in 1..=6 {
        for i in 1..=50 {
            let cfg = EstimatorConfig::ideal(vec![p; core.num_modes()], 0.01 * i as f64).unwrap();
            let (Ok(b), Ok(r)) = (het_bias_bound(core, &cfg), het_range_bound(core, &cfg)) else { continue };
            let e = b + hoeffding_lambda(n, delta, r);
            if e < best.0 {
                best = (e, Some(cfg));
            }
        }
    }
    best.1.expect("some configuration is valid")
}

fn main() {
    let criteria: [(&str, fn() -> Outcome_); 10] = [
        ("witness sandwich", criterion1),
        ("homodyne unbiasedness", criterion2),
        ("heterodyne bias dominance", criterion3),
        ("back-propagation POVM identities", criterion4),
        ("protocol (epsilon, delta) honesty", criterion5),
        ("example 1 reproduction", criterion6),
        ("examples 2-3 reproduction", criterion7),
        ("noisy-detector consistency", criterion8),
        ("scaling claims", criterion9),
        ("doped-Gaussian witness", criterion10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let t = Instant::now();
        let out = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string()));
            ok(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("acceptance-{}: {status} {name} [{:.1}s] {}", i + 1, t.elapsed().as_secs_f64(), out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
