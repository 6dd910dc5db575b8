//! End-to-end fidelity estimation and witness protocols, and the sample planner.
//!
//! Protocols consume already collected [`SampleBatch`]es, so one batch can
//! feed several estimates.

use crate::backprop::{backprop_heterodyne, backprop_homodyne, HeterodyneRule, HomodyneRule};
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    het_bias_bound, het_range_bound, hoeffding_delta, hoeffding_lambda, hoeffding_samples, hom_f_noisy, hom_f_table,
    hom_g_noisy, hom_range_bound, support_sizes, EstimatorConfig, HetEstimator, RANGE_TAU_MAX,
};
use crate::fock::CoreState;
use crate::gaussian::GaussianCircuit;
use crate::measure::{Kind, Records, SampleBatch};
use crate::par::try_mean_var;
use crate::witness::{combine, doped_partition, EpsilonBudget, Partition, WitnessReport};
use serde::{Deserialize, Serialize};

/// Largest shot count the planner reports.
pub const MAX_PLANNED_SHOTS: f64 = 1e15;
pub const MAX_ORDER: usize = 10;

/// Sample mean of a bounded estimator with its range and bias bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    #[serde(rename = "N")]
    pub n: usize,
    /// |g| ≤ range for every shot
    pub range: f64,
    /// |E g − F| ≤ bias
    pub bias: f64,
    /// empirical variance of the per-shot values
    pub variance: f64,
}

impl Estimate {
    /// Failure probability of |value − F| > epsilon.
    pub fn delta(&self, epsilon: f64) -> f64 {
        let lambda = epsilon - self.bias;
        if lambda <= 0.0 {
            return 1.0;
        }
        hoeffding_delta(self.n, lambda, self.range)
    }

    /// Statistical error at failure probability δ.
    pub fn lambda(&self, delta: f64) -> f64 {
        hoeffding_lambda(self.n, delta, self.range)
    }

    /// Total error λ(δ) + bias.
    pub fn epsilon(&self, delta: f64) -> f64 {
        self.lambda(delta) + self.bias
    }

    /// Hoeffding scale R/√N.
    pub fn sigma(&self) -> f64 {
        self.range / (self.n as f64).sqrt()
    }
}

fn require_kind(batch: &SampleBatch, kind: Kind) -> Result<()> {
    if batch.is_empty() {
        return invalid("empty sample batch");
    }
    if batch.kind() != kind {
        return invalid(format!("expected a {kind:?} batch"));
    }
    Ok(())
}

/// Grid maximum of Σ_kl |c_k c_l| |f^η_lk(x)| over x ∈ [0, 15], with 5% headroom.
pub fn hom_noisy_range(core: &CoreState, eta: f64) -> Result<f64> {
    let c = support_sizes(core)[0];
    let amps: Vec<f64> = (0..c).map(|n| core.amplitude(&[n]).norm()).collect();
    let mut best = 0.0f64;
    for i in 0..=300 {
        let x = 0.05 * i as f64;
        let mut s = 0.0;
        for k in 0..c {
            for l in 0..c {
                if amps[k] * amps[l] > 0.0 {
                    s += amps[k] * amps[l] * hom_f_noisy(k, l, x, eta)?.abs();
                }
            }
        }
        best = best.max(s);
    }
    Ok(1.05 * best)
}

/// Single-mode fidelity from homodyne data taken at uniformly random θ.
///
/// Detector efficiency η < 1 switches to the lossy pattern functions, which
/// exist only for η > 1/2.
pub fn protocol1(batch: &SampleBatch, target: &CoreState) -> Result<Estimate> {
    require_kind(batch, Kind::Homodyne)?;
    if batch.num_modes() != 1 || target.num_modes() != 1 {
        return Err(Error::Dimension("protocol 1 is single-mode".into()));
    }
    let Records::Homodyne { theta, x } = batch.records() else { unreachable!() };
    if theta.len() > 1 && theta.iter().all(|t| *t == theta[0]) {
        return invalid("fixed-θ batch: the estimator is unbiased only for uniformly random θ");
    }
    let eta = batch.eta()[0];
    let c = support_sizes(target)[0];
    let (value, variance, range) = if eta == 1.0 {
        let amps: Vec<_> = (0..c).map(|n| target.amplitude(&[n])).collect();
        let (m, v) = try_mean_var(batch.len(), |i| {
            let table = hom_f_table(c, x[i])?;
            let mut acc = 0.0;
            for k in 0..c {
                for l in 0..c {
                    let w = amps[k].conj() * amps[l];
                    acc += (w * num_complex::Complex64::from_polar(table[l * c + k], (k as f64 - l as f64) * theta[i]))
                        .re;
                }
            }
            Ok(acc)
        })?;
        (m, v, hom_range_bound(c))
    } else {
        let range = hom_noisy_range(target, eta)?;
        let (m, v) = try_mean_var(batch.len(), |i| hom_g_noisy(target, x[i], theta[i], eta))?;
        (m, v, range)
    };
    Ok(Estimate { value, n: batch.len(), range, bias: 0.0, variance })
}

/// Witness 1 − Σ(1 − F_i) over single modes from parallel homodyne data,
/// after undoing a passive orthogonal layer and displacement.
pub fn protocol2(batch: &SampleBatch, targets: &[CoreState], rule: &HomodyneRule, delta: f64) -> Result<WitnessReport> {
    require_kind(batch, Kind::Homodyne)?;
    let m = batch.num_modes();
    if targets.len() != m {
        return Err(Error::Dimension("one target per mode".into()));
    }
    check_delta(delta)?;
    let back = backprop_homodyne(batch, rule)?;
    let mut terms = Vec::with_capacity(m);
    let mut stat = Vec::with_capacity(m);
    for (i, t) in targets.iter().enumerate() {
        let est = protocol1(&back.select_modes(&[i])?, t)?;
        stat.push(est.lambda(delta / m as f64));
        terms.push(est.value);
    }
    Ok(WitnessReport {
        value: combine(&terms),
        partition: Partition::singletons(m),
        fidelity_terms: terms,
        epsilon: EpsilonBudget { statistical: stat, bias: vec![0.0; m] },
        delta,
        n: batch.len(),
        config: Vec::new(),
    })
}

/// k-mode fidelity from balanced heterodyne data.
pub fn protocol3(batch: &SampleBatch, target: &CoreState, config: &EstimatorConfig) -> Result<Estimate> {
    require_kind(batch, Kind::Heterodyne)?;
    if batch.num_modes() != target.num_modes() {
        return Err(Error::Dimension("batch and target mode counts differ".into()));
    }
    if batch.xi().iter().any(|x| x.norm() > 0.0) {
        return Err(Error::XiMismatch);
    }
    if batch.eta().iter().any(|e| (e - config.eta).abs() > 1e-12) {
        return invalid("config η differs from the detector efficiency of the batch");
    }
    let bias = het_bias_bound(target, config)?;
    let range = het_range_bound(target, config)?;
    let est = HetEstimator::new(target, config)?;
    let (value, variance) = try_mean_var(batch.len(), |i| Ok(est.eval(batch.alpha(i))))?;
    Ok(Estimate { value, n: batch.len(), range, bias, variance })
}

/// Blockwise witness from (unbalanced) heterodyne data of V ρ V†: outcomes are
/// back-propagated through V = S(ξ) D(β) Û, then each block of the partition
/// is estimated with its own configuration. δ is split equally over blocks.
pub fn protocol4(
    batch: &SampleBatch,
    targets: &[CoreState],
    circuit: &GaussianCircuit,
    partition: &Partition,
    configs: &[EstimatorConfig],
    delta: f64,
) -> Result<WitnessReport> {
    require_kind(batch, Kind::Heterodyne)?;
    check_delta(delta)?;
    let nb = partition.num_blocks();
    if targets.len() != nb || configs.len() != nb {
        return Err(Error::Dimension("one target and one config per block".into()));
    }
    if partition.num_modes() != batch.num_modes() || circuit.num_modes() != batch.num_modes() {
        return Err(Error::Dimension("batch, circuit and partition mode counts differ".into()));
    }
    for (b, t) in partition.blocks().iter().zip(targets) {
        if b.len() != t.num_modes() {
            return Err(Error::Dimension("block size differs from its target".into()));
        }
    }
    let back = backprop_heterodyne(batch, &HeterodyneRule::from_circuit(circuit)?)?;
    let mut terms = Vec::with_capacity(nb);
    let mut stat = Vec::with_capacity(nb);
    let mut bias = Vec::with_capacity(nb);
    for ((block, t), cfg) in partition.blocks().iter().zip(targets).zip(configs) {
        let est = protocol3(&back.select_modes(block)?, t, cfg)?;
        stat.push(est.lambda(delta / nb as f64));
        bias.push(est.bias);
        terms.push(est.value);
    }
    Ok(WitnessReport {
        value: combine(&terms),
        partition: partition.clone(),
        fidelity_terms: terms,
        epsilon: EpsilonBudget { statistical: stat, bias },
        delta,
        n: batch.len(),
        config: configs.to_vec(),
    })
}

/// Witness for a t-doped Gaussian state V(|φ⟩ ⊗ |0…0⟩): one κt-mode block for
/// φ and single-mode vacuum blocks for the rest. `configs[0]` is the φ block.
pub fn protocol_doped(
    batch: &SampleBatch,
    phi: &CoreState,
    circuit: &GaussianCircuit,
    m: usize,
    configs: &[EstimatorConfig],
    delta: f64,
) -> Result<WitnessReport> {
    let part = doped_partition(phi.num_modes(), m)?;
    let mut targets = vec![phi.clone()];
    targets.extend((phi.num_modes()..m).map(|_| CoreState::vacuum(1)));
    protocol4(batch, &targets, circuit, &part, configs, delta)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("δ = {delta} outside (0, 1)"));
    }
    Ok(())
}

/// Shot count and free parameters meeting an (ε, δ) target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    #[serde(rename = "N")]
    pub n: usize,
    /// per-block orders, one per mode (empty for homodyne plans)
    pub p: Vec<Vec<usize>>,
    /// per-block τ (empty for homodyne plans)
    pub tau: Vec<f64>,
    pub eta: f64,
    /// statistical error per block at N
    pub lambda: Vec<f64>,
    pub bias: Vec<f64>,
    pub range: Vec<f64>,
    /// failure probability per block
    pub delta: Vec<f64>,
    pub epsilon_total: f64,
    pub delta_total: f64,
    pub partition: Partition,
}

impl Plan {
    /// Heterodyne estimator configurations, one per block.
    pub fn configs(&self) -> Result<Vec<EstimatorConfig>> {
        self.p.iter().zip(&self.tau).map(|(p, &tau)| EstimatorConfig::new(p.clone(), tau, self.eta)).collect()
    }

    /// Largest violation of the plan's own constraints, re-evaluated from the
    /// bound formulas (≤ 0 means every constraint holds).
    pub fn constraint_residual(&self, targets: &[CoreState], epsilon: f64, delta: f64) -> Result<f64> {
        let nb = self.partition.num_blocks();
        let mut eps = 0.0;
        let mut del = 0.0;
        let mut worst = f64::NEG_INFINITY;
        for b in 0..nb {
            let (bias, range) = if self.p.is_empty() {
                (0.0, hom_range_bound(support_sizes(&targets[b])[0]))
            } else {
                let cfg = EstimatorConfig::new(self.p[b].clone(), self.tau[b], self.eta)?;
                (het_bias_bound(&targets[b], &cfg)?, het_range_bound(&targets[b], &cfg)?)
            };
            let d = hoeffding_delta(self.n, self.lambda[b], range);
            worst = worst.max((bias - self.bias[b]).abs()).max((range - self.range[b]).abs());
            worst = worst.max(d - self.delta[b]);
            eps += self.lambda[b] + bias;
            del += self.delta[b];
        }
        worst = worst.max((eps - self.epsilon_total).abs()).max((del - self.delta_total).abs());
        Ok(worst.max(eps - epsilon).max(del - delta))
    }
}

fn check_budget(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid(format!("ε = {epsilon} outside (0, 1)"));
    }
    check_delta(delta)
}

/// Shots for Protocol 2 with one target per mode: equal ε/m, δ/m per mode.
pub fn plan_homodyne(targets: &[CoreState], epsilon: f64, delta: f64) -> Result<Plan> {
    check_budget(epsilon, delta)?;
    let m = targets.len();
    if m == 0 || targets.iter().any(|t| t.num_modes() != 1) {
        return invalid("homodyne planning needs single-mode targets");
    }
    let (eps_i, del_i) = (epsilon / m as f64, delta / m as f64);
    let range: Vec<f64> = targets.iter().map(|t| hom_range_bound(support_sizes(t)[0])).collect();
    let n = range.iter().map(|&r| hoeffding_samples(eps_i, del_i, r)).fold(0.0, f64::max).ceil();
    if n > MAX_PLANNED_SHOTS {
        return Err(Error::Infeasible { best_epsilon: epsilon * (n / MAX_PLANNED_SHOTS).sqrt() });
    }
    let n = n as usize;
    let lambda: Vec<f64> = range.iter().map(|&r| hoeffding_lambda(n, del_i, r)).collect();
    Ok(Plan {
        n,
        p: Vec::new(),
        tau: Vec::new(),
        eta: 1.0,
        epsilon_total: lambda.iter().sum(),
        delta: range.iter().zip(&lambda).map(|(&r, &l)| hoeffding_delta(n, l, r)).collect(),
        lambda,
        bias: vec![0.0; m],
        range,
        delta_total: delta,
        partition: Partition::singletons(m),
    })
}

/// Shots and parameters for heterodyne witnesses (Protocols 3 and 4).
///
/// ε and δ are split equally over blocks. Within a block every mode uses the
/// same order p ∈ 1..=10; τ is found by a grid scan refined with a
/// golden-section search, over the range where both the bias series converges
/// and the closed-form range bound holds. N is the maximum over blocks.
pub fn plan_samples(targets: &[CoreState], partition: &Partition, epsilon: f64, delta: f64, eta: f64) -> Result<Plan> {
    check_budget(epsilon, delta)?;
    let nb = partition.num_blocks();
    if targets.len() != nb {
        return Err(Error::Dimension("one target per block".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return invalid(format!("η = {eta} outside (0, 1]"));
    }
    let (eps_i, del_i) = (epsilon / nb as f64, delta / nb as f64);
    let mut picks = Vec::with_capacity(nb);
    let mut best_eps = 0.0;
    for (t, block) in targets.iter().zip(partition.blocks()) {
        if t.num_modes() != block.len() {
            return Err(Error::Dimension("block size differs from its target".into()));
        }
        let (pick, min_bias) = plan_block(t, eps_i, del_i, eta);
        best_eps += min_bias;
        picks.push(pick);
    }
    if picks.iter().any(Option::is_none) {
        return Err(Error::Infeasible { best_epsilon: best_eps });
    }
    let picks: Vec<BlockPick> = picks.into_iter().flatten().collect();
    let n = picks.iter().map(|p| p.shots).fold(0.0, f64::max).ceil();
    if n > MAX_PLANNED_SHOTS {
        return Err(Error::Infeasible { best_epsilon: best_eps });
    }
    let n = n.max(1.0) as usize;
    let lambda: Vec<f64> = picks.iter().map(|p| hoeffding_lambda(n, del_i, p.range)).collect();
    let bias: Vec<f64> = picks.iter().map(|p| p.bias).collect();
    Ok(Plan {
        n,
        p: picks.iter().zip(targets).map(|(p, t)| vec![p.p; t.num_modes()]).collect(),
        tau: picks.iter().map(|p| p.tau).collect(),
        eta,
        epsilon_total: lambda.iter().sum::<f64>() + bias.iter().sum::<f64>(),
        delta: picks.iter().zip(&lambda).map(|(p, &l)| hoeffding_delta(n, l, p.range)).collect(),
        lambda,
        bias,
        range: picks.iter().map(|p| p.range).collect(),
        delta_total: delta,
        partition: partition.clone(),
    })
}

#[derive(Clone, Copy, Debug)]
struct BlockPick {
    p: usize,
    tau: f64,
    bias: f64,
    range: f64,
    shots: f64,
}

/// Cost of one (p, τ) point; None when outside the domain or λ ≤ 0.
fn block_cost(core: &CoreState, p: usize, tau: f64, eps: f64, delta: f64, eta: f64) -> (Option<BlockPick>, f64) {
    let Ok(cfg) = EstimatorConfig::new(vec![p; core.num_modes()], tau, eta) else {
        return (None, f64::INFINITY);
    };
    let Ok(bias) = het_bias_bound(core, &cfg) else {
        return (None, f64::INFINITY);
    };
    let Ok(range) = het_range_bound(core, &cfg) else {
        return (None, bias);
    };
    let lambda = eps - bias;
    if lambda <= 0.0 {
        return (None, bias);
    }
    let shots = hoeffding_samples(lambda, delta, range);
    (Some(BlockPick { p, tau, bias, range, shots }), bias)
}

/// Best (p, τ) for one block and the smallest bias seen.
fn plan_block(core: &CoreState, eps: f64, delta: f64, eta: f64) -> (Option<BlockPick>, f64) {
    let tau_hi = (RANGE_TAU_MAX / eta).min(if eta < 1.0 { 1.0 / eta } else { 1.0 });
    const GRID: usize = 200;
    let mut best: Option<BlockPick> = None;
    let mut min_bias = f64::INFINITY;
    let better = |a: &Option<BlockPick>, b: &BlockPick| a.is_none_or(|a| b.shots < a.shots);
    for p in 1..=MAX_ORDER {
        let cost = |tau: f64| block_cost(core, p, tau, eps, delta, eta);
        let mut local: Option<(usize, BlockPick)> = None;
        for j in 1..=GRID {
            let tau = tau_hi * j as f64 / GRID as f64;
            let (pick, bias) = cost(tau);
            min_bias = min_bias.min(bias);
            if let Some(pk) = pick {
                if local.is_none_or(|(_, l)| pk.shots < l.shots) {
                    local = Some((j, pk));
                }
            }
        }
        let Some((j, mut pk)) = local else { continue };
        let lo = tau_hi * (j - 1).max(1) as f64 / GRID as f64;
        let hi = tau_hi * (j + 1).min(GRID) as f64 / GRID as f64;
        let shots = |tau: f64| cost(tau).0.map_or(f64::INFINITY, |b| b.shots);
        let tau = golden_min(lo, hi, shots);
        if let Some(refined) = cost(tau).0 {
            if refined.shots < pk.shots {
                pk = refined;
            }
        }
        if better(&best, &pk) {
            best = Some(pk);
        }
    }
    (best, min_bias)
}

fn golden_min<F: Fn(f64) -> f64>(mut a: f64, mut b: f64, f: F) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}
