//! Brute-force references: expectations of estimators under the exact outcome
//! densities, by deterministic quadrature with a grid-doubling check.
//!
//! Estimators are given as per-mode factors; by Fubini the expectation of a
//! product is Tr[ρ ⊗_i G_i] with G_i the factor integrated against the
//! single-mode POVM. Nothing here calls the Monte-Carlo estimation path.

use crate::error::{invalid, Error, Result};
use crate::estimators::{
    element_bias_bound, het_bias_bound, het_g_noisy, het_range_bound, hom_f, hom_f_noisy, EstimatorConfig,
};
use crate::fock::{multi_index, random_core_state, random_density, CMatrix, CoreState, DensityOp};
use crate::gaussian::loss_channel;
use crate::par::gauss_legendre;
use crate::special::{factorial, hermite_functions};
use crate::witness::{check_sandwich, Partition};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Per-mode quadrature: Gauss–Legendre panels on the radial (heterodyne) or
/// quadrature (homodyne) axis, trapezoid rule in the angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub panels: usize,
    pub order: usize,
    pub angular: usize,
    /// |α| ≤ radius, or |x| ≤ radius
    pub radius: f64,
    /// accepted change under grid doubling
    pub tol: f64,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid { panels: 48, order: 8, angular: 48, radius: 12.0, tol: 1e-9 }
    }
}

impl QuadratureGrid {
    pub fn doubled(&self) -> QuadratureGrid {
        QuadratureGrid { panels: 2 * self.panels, angular: 2 * self.angular, ..self.clone() }
    }

    fn radial_nodes(&self, lo: f64) -> Vec<(f64, f64)> {
        let gl = gauss_legendre(self.order);
        let h = (self.radius - lo) / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.order);
        for p in 0..self.panels {
            let mid = lo + (p as f64 + 0.5) * h;
            out.extend(gl.iter().map(|(s, w)| (mid + 0.5 * h * s, 0.5 * h * w)));
        }
        out
    }
}

/// One factor of a product estimator over heterodyne outcomes.
pub type HetFactor<'a> = Box<dyn Fn(Complex64) -> Complex64 + Sync + 'a>;
/// One factor of a product estimator over homodyne outcomes (x, θ).
pub type HomFactor<'a> = Box<dyn Fn(f64, f64) -> Complex64 + Sync + 'a>;

/// G_ba = ∫ g(α) ⟨α|a⟩⟨b|α⟩ d²α / π for a, b < c.
fn het_operator(g: &HetFactor, c: usize, grid: &QuadratureGrid) -> CMatrix {
    let mut out = CMatrix::zeros(c, c);
    let radial = grid.radial_nodes(0.0);
    let dphi = 2.0 * PI / grid.angular as f64;
    let inv_fact: Vec<f64> = (0..c).map(|n| 1.0 / factorial(n).sqrt()).collect();
    for &(r, wr) in &radial {
        let env = (-r * r).exp() * r * wr * dphi / PI;
        if env == 0.0 {
            continue;
        }
        for j in 0..grid.angular {
            let phi = j as f64 * dphi;
            let alpha = Complex64::from_polar(r, phi);
            let gv = g(alpha) * env;
            // ⟨α|a⟩ = e^{−|α|²/2} ᾱ^a/√a!, ⟨b|α⟩ = e^{−|α|²/2} α^b/√b!
            let mut pow = vec![Complex64::new(1.0, 0.0); c];
            for n in 1..c {
                pow[n] = pow[n - 1] * alpha;
            }
            for a in 0..c {
                for b in 0..c {
                    out[(b, a)] += gv * pow[a].conj() * pow[b] * (inv_fact[a] * inv_fact[b]);
                }
            }
        }
    }
    out
}

/// Σ_{a⃗,b⃗} ρ_{a⃗ b⃗} Π_i G_i[b_i, a_i].
fn contract(rho: &DensityOp, ops: &[CMatrix]) -> Complex64 {
    let cut = rho.cutoffs();
    let d = rho.dim();
    let idx: Vec<Vec<usize>> = (0..d).map(|f| multi_index(cut, f)).collect();
    let m = rho.matrix();
    let mut acc = ZERO;
    for a in 0..d {
        for b in 0..d {
            let r = m[(a, b)];
            if r == ZERO {
                continue;
            }
            let mut w = r;
            for (i, op) in ops.iter().enumerate() {
                w *= op[(idx[b][i], idx[a][i])];
            }
            acc += w;
        }
    }
    acc
}

fn converged(coarse: Complex64, fine: Complex64, tol: f64) -> Result<Complex64> {
    if (coarse - fine).norm() > tol {
        return Err(Error::NotConverged { coarse: coarse.re, fine: fine.re });
    }
    Ok(fine)
}

fn check_leak(rho: &DensityOp) -> Result<()> {
    if rho.truncation_leak() > 1e-8 {
        return Err(Error::Truncation { leak: rho.truncation_leak(), bound: 1e-8 });
    }
    Ok(())
}

/// E_{α ← Q_ρ}[Π_i g_i(α_i)], certified by grid doubling.
pub fn exact_expectation_heterodyne(rho: &DensityOp, factors: &[HetFactor], grid: &QuadratureGrid) -> Result<Complex64> {
    if factors.len() != rho.num_modes() {
        return Err(Error::Dimension("one estimator factor per mode".into()));
    }
    check_leak(rho)?;
    let eval = |g: &QuadratureGrid| -> Complex64 {
        let ops: Vec<CMatrix> = factors.iter().zip(rho.cutoffs()).map(|(f, &c)| het_operator(f, c, g)).collect();
        contract(rho, &ops)
    };
    converged(eval(grid), eval(&grid.doubled()), grid.tol)
}

/// Expectation over lossy heterodyne outcomes: heterodyne on L_η(ρ), outcomes
/// rescaled by 1/√η. Computed from the Kraus form of the loss channel.
pub fn exact_expectation_heterodyne_lossy(
    rho: &DensityOp,
    eta: &[f64],
    factors: &[HetFactor],
    grid: &QuadratureGrid,
) -> Result<Complex64> {
    if eta.len() != factors.len() {
        return Err(Error::Dimension("one η per mode".into()));
    }
    let lossy = loss_channel(rho, eta)?;
    let scaled: Vec<HetFactor> = factors
        .iter()
        .zip(eta)
        .map(|(f, &e)| Box::new(move |b: Complex64| f(b / e.sqrt())) as HetFactor)
        .collect();
    exact_expectation_heterodyne(&lossy, &scaled, grid)
}

/// Per-mode operators of every single-element heterodyne estimator g^p_mn
/// (m, n < c), integrated once and reused across states.
#[derive(Clone, Debug)]
pub struct ElementOracle {
    config: EstimatorConfig,
    cutoffs: Vec<usize>,
    /// per mode, operators indexed by m·c + n
    ops: Vec<Vec<CMatrix>>,
}

impl ElementOracle {
    pub fn new(config: &EstimatorConfig, cutoffs: &[usize], grid: &QuadratureGrid) -> Result<ElementOracle> {
        config.validate()?;
        if config.p.len() != cutoffs.len() {
            return Err(Error::Dimension("one order per mode".into()));
        }
        let eta = config.eta;
        let mut ops = Vec::with_capacity(cutoffs.len());
        for (i, &c) in cutoffs.iter().enumerate() {
            // reuse the previous mode's table when nothing changed
            if i > 0 && cutoffs[i - 1] == c && config.p[i - 1] == config.p[i] {
                let prev: Vec<CMatrix> = ops.last().cloned().expect("previous mode");
                ops.push(prev);
                continue;
            }
            let mut mode_ops = Vec::with_capacity(c * c);
            for m in 0..c {
                for n in 0..c {
                    let p = config.p[i];
                    let g: HetFactor = Box::new(move |b: Complex64| {
                        het_g_noisy(m, n, p, b / eta.sqrt(), config.tau, eta).expect("valid config")
                    });
                    let coarse = het_operator(&g, c, grid);
                    let fine = het_operator(&g, c, &grid.doubled());
                    let diff = (&fine - &coarse).camax();
                    if diff > grid.tol {
                        return Err(Error::NotConverged { coarse: coarse.camax(), fine: fine.camax() });
                    }
                    mode_ops.push(fine);
                }
            }
            ops.push(mode_ops);
        }
        Ok(ElementOracle { config: config.clone(), cutoffs: cutoffs.to_vec(), ops })
    }

    /// E[Π_i g^{p_i}_{m_i n_i}] for all multi-indices, as a matrix over the
    /// flattened basis of `cutoffs`. Lossy configs integrate over heterodyne
    /// of L_η(ρ) with outcomes rescaled by 1/√η.
    pub fn expectations(&self, rho: &DensityOp) -> Result<CMatrix> {
        if rho.cutoffs() != self.cutoffs.as_slice() {
            return Err(Error::Dimension("state cutoffs differ from the oracle's".into()));
        }
        check_leak(rho)?;
        let state = if self.config.eta < 1.0 {
            loss_channel(rho, &vec![self.config.eta; rho.num_modes()])?
        } else {
            rho.clone()
        };
        let cut = &self.cutoffs;
        let d = state.dim();
        let mut out = CMatrix::zeros(d, d);
        for a in 0..d {
            let ma = multi_index(cut, a);
            for b in 0..d {
                let nb = multi_index(cut, b);
                let ops: Vec<CMatrix> =
                    (0..cut.len()).map(|i| self.ops[i][ma[i] * cut[i] + nb[i]].clone()).collect();
                out[(a, b)] = contract(&state, &ops);
            }
        }
        Ok(out)
    }

    /// E[g_C] = Re Σ c_m* c_n E[Π g_{m_i n_i}].
    pub fn fidelity_mean(&self, rho: &DensityOp, core: &CoreState) -> Result<f64> {
        let e = self.expectations(rho)?;
        let mut acc = ZERO;
        for (mi, cm) in core.coeffs() {
            for (ni, cn) in core.coeffs() {
                let (Some(a), Some(b)) =
                    (crate::gaussian::checked_index(&self.cutoffs, mi), crate::gaussian::checked_index(&self.cutoffs, ni))
                else {
                    return invalid("core support exceeds the oracle cutoffs");
                };
                acc += cm.conj() * cn * e[(a, b)];
            }
        }
        Ok(acc.re)
    }
}

/// H(θ)_ba = ∫ f(x, θ) u_a(x) u_b(x) dx · e^{−i(a−b)θ}.
fn hom_operator(f: &HomFactor, c: usize, theta: f64, xs: &[(f64, f64)], tabs: &[Vec<f64>]) -> CMatrix {
    let mut out = CMatrix::zeros(c, c);
    for (&(x, w), u) in xs.iter().zip(tabs) {
        let fv = f(x, theta) * w;
        for a in 0..c {
            for b in 0..c {
                out[(b, a)] += fv * (u[a] * u[b]);
            }
        }
    }
    for a in 0..c {
        for b in 0..c {
            out[(b, a)] *= Complex64::from_polar(1.0, -((a as f64) - (b as f64)) * theta);
        }
    }
    out
}

/// E over parallel homodyne outcomes with θ uniform on [0, 2π) of Π_i f_i(x_i, θ).
pub fn exact_expectation_homodyne(rho: &DensityOp, factors: &[HomFactor], grid: &QuadratureGrid) -> Result<Complex64> {
    if factors.len() != rho.num_modes() {
        return Err(Error::Dimension("one estimator factor per mode".into()));
    }
    check_leak(rho)?;
    let cmax = *rho.cutoffs().iter().max().unwrap();
    let eval = |g: &QuadratureGrid| -> Complex64 {
        let xs: Vec<(f64, f64)> = {
            let half = g.radial_nodes(0.0);
            half.iter().map(|&(x, w)| (-x, w)).chain(half.iter().copied()).collect()
        };
        let tabs: Vec<Vec<f64>> = xs.iter().map(|&(x, _)| hermite_functions(cmax, x)).collect();
        let mut acc = ZERO;
        for j in 0..g.angular {
            let theta = 2.0 * PI * j as f64 / g.angular as f64;
            let ops: Vec<CMatrix> =
                factors.iter().zip(rho.cutoffs()).map(|(f, &c)| hom_operator(f, c, theta, &xs, &tabs)).collect();
            acc += contract(rho, &ops);
        }
        acc / g.angular as f64
    };
    converged(eval(grid), eval(&grid.doubled()), grid.tol)
}

/// Expectation over lossy homodyne outcomes: homodyne on L_η(ρ), x rescaled by 1/√η.
pub fn exact_expectation_homodyne_lossy(
    rho: &DensityOp,
    eta: f64,
    factors: &[HomFactor],
    grid: &QuadratureGrid,
) -> Result<Complex64> {
    let m = rho.num_modes();
    let lossy = loss_channel(rho, &vec![eta; m])?;
    let scaled: Vec<HomFactor> =
        factors.iter().map(|f| Box::new(move |x: f64, t: f64| f(x / eta.sqrt(), t)) as HomFactor).collect();
    exact_expectation_homodyne(&lossy, &scaled, grid)
}

/// Homodyne estimator of ρ_kl: f_lk(x) e^{i(k−l)θ}.
pub fn hom_element_factor<'a>(k: usize, l: usize) -> HomFactor<'a> {
    Box::new(move |x, t| {
        Complex64::from_polar(hom_f(l, k, x).expect("x inside the series window"), (k as f64 - l as f64) * t)
    })
}

/// Heterodyne factors of the element estimator Π_i g^{p_i}_{m_i n_i}.
pub fn het_element_factors<'a>(m: &[usize], n: &[usize], config: &'a EstimatorConfig) -> Vec<HetFactor<'a>> {
    (0..m.len())
        .map(|i| {
            let (mi, ni, p) = (m[i], n[i], config.p[i]);
            Box::new(move |z| het_g_noisy(mi, ni, p, z, config.tau, config.eta).expect("valid config")) as HetFactor
        })
        .collect()
}

/// E[g_C] for the fidelity estimator, from the element oracle.
pub fn exact_fidelity_estimator_mean(
    rho: &DensityOp,
    core: &CoreState,
    config: &EstimatorConfig,
    grid: &QuadratureGrid,
) -> Result<f64> {
    ElementOracle::new(config, rho.cutoffs(), grid)?.fidelity_mean(rho, core)
}

/// Result of one sweep of the empirical-versus-bound report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// smallest (bound − observed); negative means a violation
    pub worst_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rows: Vec<SweepRow>,
}

impl OracleReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.violations == 0)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:>6} {:>10} {:>14}  status", "sweep", "cases", "violations", "worst slack")?;
        for r in &self.rows {
            let status = if r.violations == 0 { "pass" } else { "FAIL" };
            writeln!(f, "{:<28} {:>6} {:>10} {:>14.3e}  {status}", r.name, r.cases, r.violations, r.worst_slack)?;
        }
        Ok(())
    }
}

/// Population sizes for [`empirical_vs_bound_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub bias_states: usize,
    pub range_cores: usize,
    pub range_points: usize,
    pub sandwich_states: usize,
    pub seed: u64,
}

impl Default for Population {
    fn default() -> Self {
        Population { bias_states: 50, range_cores: 20, range_points: 20_000, sandwich_states: 100, seed: 2024 }
    }
}

struct Tally {
    row: SweepRow,
}

impl Tally {
    fn new(name: &str) -> Tally {
        Tally { row: SweepRow { name: name.into(), cases: 0, violations: 0, worst_slack: f64::INFINITY } }
    }

    fn record(&mut self, slack: f64) {
        self.row.cases += 1;
        if slack < 0.0 {
            self.row.violations += 1;
        }
        self.row.worst_slack = self.row.worst_slack.min(slack);
    }
}

/// Configurations used by the bias sweep: (p, τ) pairs valid for support ≤ 3.
pub fn bias_sweep_configs(modes: usize) -> Vec<EstimatorConfig> {
    [(1, 0.1), (2, 0.2), (3, 0.3)]
        .iter()
        .map(|&(p, tau)| EstimatorConfig::ideal(vec![p; modes], tau).expect("valid"))
        .collect()
}

/// Runs the bound sweeps over seeded random populations.
pub fn empirical_vs_bound_report(pop: &Population) -> Result<OracleReport> {
    let grid = QuadratureGrid::default();
    let mut rows = Vec::new();

    // bias dominance, element by element, and for fidelity estimators
    let oracles: Vec<Vec<ElementOracle>> = (1..=2)
        .map(|modes| bias_sweep_configs(modes).iter().map(|c| ElementOracle::new(c, &vec![3; modes], &grid)).collect())
        .collect::<Vec<Vec<Result<_>>>>()
        .into_iter()
        .map(|v| v.into_iter().collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut bias = Tally::new("heterodyne bias dominance");
    let mut fid = Tally::new("fidelity-estimator bias");
    for s in 0..pop.bias_states {
        let modes = 1 + s % 2;
        let cut = vec![3; modes];
        let rho = random_density(&cut, 1 + s % 3, pop.seed + s as u64);
        let core = random_core_state(&cut, pop.seed + 2000 + s as u64);
        let f = crate::witness::exact_fidelity(&rho, &core)?;
        let d = rho.dim();
        for oracle in &oracles[modes - 1] {
            let e = oracle.expectations(&rho)?;
            for a in 0..d {
                for b in 0..d {
                    let (m, n) = (multi_index(&cut, a), multi_index(&cut, b));
                    let bound = element_bias_bound(&m, &n, &oracle.config)?;
                    bias.record(bound - (e[(a, b)] - rho.matrix()[(a, b)]).norm());
                }
            }
            let mean = oracle.fidelity_mean(&rho, &core)?;
            fid.record(het_bias_bound(&core, &oracle.config)? - (mean - f).abs());
        }
    }
    rows.push(bias.row);
    rows.push(fid.row);

    // range dominance on random outcomes
    let mut range = Tally::new("heterodyne range dominance");
    let mut rng = ChaCha8Rng::seed_from_u64(pop.seed);
    for s in 0..pop.range_cores {
        let modes = 1 + s % 2;
        let core = random_core_state(&vec![3; modes], pop.seed + 3000 + s as u64);
        let p = 1 + s % 3;
        let tau = 0.1 + 0.4 * rng.random::<f64>();
        let cfg = EstimatorConfig::ideal(vec![p; modes], tau)?;
        let r = het_range_bound(&core, &cfg)?;
        let est = crate::estimators::HetEstimator::new(&core, &cfg)?;
        let mut worst = f64::INFINITY;
        for _ in 0..pop.range_points {
            let z: Vec<Complex64> = (0..modes)
                .map(|_| Complex64::from_polar(4.0 * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>()))
                .collect();
            worst = worst.min(r - est.eval(&z).abs());
        }
        range.record(worst);
    }
    rows.push(range.row);

    // homodyne unbiasedness on named states
    let mut hom = Tally::new("homodyne unbiasedness");
    for rho in named_homodyne_states() {
        for k in 0..3 {
            for l in 0..3 {
                let e = exact_expectation_homodyne(&rho, &[hom_element_factor(k, l)], &grid_homodyne())?;
                let target = if k < rho.dim() && l < rho.dim() { rho.matrix()[(k, l)] } else { ZERO };
                hom.record(1e-5 - (e - target).norm());
            }
        }
    }
    rows.push(hom.row);

    // witness sandwich
    let mut sand = Tally::new("witness sandwich");
    for s in 0..pop.sandwich_states {
        let rho = random_density(&[3; 4], 1 + s % 4, pop.seed + 4000 + s as u64);
        let core_blocks: Vec<CoreState> =
            (0..4).map(|i| random_core_state(&[3], pop.seed + 5000 + 4 * s as u64 + i)).collect();
        let target = core_blocks.iter().skip(1).fold(core_blocks[0].clone(), |acc, c| acc.tensor(c));
        for k in [1, 2, 4] {
            let c = check_sandwich(&rho, &target, &Partition::contiguous(4, k)?)?;
            sand.record(c.lower_slack.min(c.upper_slack).min(c.ordering_slack) + 1e-10);
        }
    }
    rows.push(sand.row);

    // noisy estimators reduce to the ideal ones at η = 1
    let mut red = Tally::new("noisy = ideal at eta = 1");
    for k in 0..4 {
        for l in 0..4 {
            for i in 0..13 {
                let x = -3.0 + 0.5 * i as f64;
                red.record(1e-5 - (hom_f_noisy(k, l, x, 1.0)? - hom_f(l, k, x)?).abs());
                let z = Complex64::new(0.3 * x, 0.2 - 0.1 * x);
                let ideal = crate::estimators::het_g(k, l, 2, z, 0.4)?;
                red.record(1e-10 - (het_g_noisy(k, l, 2, z, 0.4, 1.0)? - ideal).norm());
            }
        }
    }
    rows.push(red.row);

    Ok(OracleReport { rows })
}

/// Grid for homodyne expectations: |x| ≤ 10 with fine panels.
pub fn grid_homodyne() -> QuadratureGrid {
    QuadratureGrid { panels: 40, order: 8, angular: 16, radius: 10.0, tol: 1e-8 }
}

/// |0⟩, |1⟩, |2⟩ and (|0⟩ + i|1⟩)/√2 with cutoff 3.
pub fn named_homodyne_states() -> Vec<DensityOp> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let vecs: [[Complex64; 3]; 4] = [
        [Complex64::new(1.0, 0.0), ZERO, ZERO],
        [ZERO, Complex64::new(1.0, 0.0), ZERO],
        [ZERO, ZERO, Complex64::new(1.0, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(0.0, s), ZERO],
    ];
    vecs.iter().map(|v| DensityOp::from_vector(&[3], v).expect("normalized")).collect()
}

/// Validates a user-provided population.
pub fn check_population(pop: &Population) -> Result<()> {
    if pop.range_points == 0 {
        return invalid("range sweep needs at least one point");
    }
    Ok(())
}
