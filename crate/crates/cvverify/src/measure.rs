//! Homodyne and heterodyne outcome densities and samplers.
//!
//! Both samplers draw modes one at a time by the chain rule: the first mode is
//! sampled from its reduced state, the remaining pure amplitudes are contracted
//! with ⟨outcome|n⟩, and so on. Mixed states are first split into an
//! eigen-mixture. States that factorize over modes skip the chain and sample
//! each mode from its own reduced matrix.
//!
//! Homodyne: ⟨n|x⟩_θ = e^{inθ} u_n(x).
//! Heterodyne: ⟨α|n⟩ = e^{−|α|²/2} ᾱ^n / √n!, Q(α) = ⟨α|ρ|α⟩/π^m.

use crate::error::{invalid, Error, Result};
use crate::fock::{CMatrix, DensityOp};
use crate::gaussian::{apply_local, loss_channel, squeezing_op, squeezing_padding};
use crate::par::{chunk_rng, gauss_hermite, gauss_legendre, n_chunks, CHUNK};
use crate::special::{factorial, hermite_functions};
use num_complex::Complex64;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Weight below which mixture components are dropped.
const MIXTURE_FLOOR: f64 = 1e-14;
/// Max deviation from the product of reduced states for the per-mode fast path.
const PRODUCT_TOL: f64 = 1e-12;
/// Minimum accepted fraction in the heterodyne angular rejection step.
pub const ACCEPTANCE_FLOOR: f64 = 1e-4;
/// Photon-number weight an anti-squeezed mode may lose to trimming.
const ANTISQUEEZE_TAIL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Homodyne,
    Heterodyne,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaPolicy {
    Fixed(f64),
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Records {
    Homodyne { theta: Vec<f64>, x: Vec<f64> },
    Heterodyne { alpha: Vec<Complex64> },
}

/// Measurement record of N shots over m modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    num_modes: usize,
    records: Records,
    eta: Vec<f64>,
    xi: Vec<Complex64>,
    seed: u64,
}

impl SampleBatch {
    pub fn homodyne(num_modes: usize, theta: Vec<f64>, x: Vec<f64>, eta: Vec<f64>, seed: u64) -> Result<SampleBatch> {
        if num_modes == 0 || x.len() != theta.len() * num_modes {
            return Err(Error::Dimension("x must hold num_modes values per shot".into()));
        }
        if theta.iter().any(|t| !(0.0..TAU).contains(t)) {
            return invalid("θ must lie in [0, 2π)");
        }
        check_eta(&eta, num_modes)?;
        Ok(SampleBatch {
            num_modes,
            records: Records::Homodyne { theta, x },
            eta,
            xi: vec![ZERO; num_modes],
            seed,
        })
    }

    pub fn heterodyne(
        num_modes: usize,
        alpha: Vec<Complex64>,
        eta: Vec<f64>,
        xi: Vec<Complex64>,
        seed: u64,
    ) -> Result<SampleBatch> {
        if num_modes == 0 || alpha.len() % num_modes != 0 {
            return Err(Error::Dimension("alpha must hold num_modes values per shot".into()));
        }
        if xi.len() != num_modes {
            return Err(Error::Dimension("one ξ per mode".into()));
        }
        check_eta(&eta, num_modes)?;
        Ok(SampleBatch { num_modes, records: Records::Heterodyne { alpha }, eta, xi, seed })
    }

    pub fn kind(&self) -> Kind {
        match self.records {
            Records::Homodyne { .. } => Kind::Homodyne,
            Records::Heterodyne { .. } => Kind::Heterodyne,
        }
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn len(&self) -> usize {
        match &self.records {
            Records::Homodyne { theta, .. } => theta.len(),
            Records::Heterodyne { alpha } => alpha.len() / self.num_modes,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> &Records {
        &self.records
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn xi(&self) -> &[Complex64] {
        &self.xi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// θ of a homodyne shot.
    pub fn theta(&self, shot: usize) -> f64 {
        match &self.records {
            Records::Homodyne { theta, .. } => theta[shot],
            Records::Heterodyne { .. } => panic!("heterodyne batch has no θ"),
        }
    }

    /// Quadrature values of a homodyne shot.
    pub fn x(&self, shot: usize) -> &[f64] {
        match &self.records {
            Records::Homodyne { x, .. } => &x[shot * self.num_modes..(shot + 1) * self.num_modes],
            Records::Heterodyne { .. } => panic!("heterodyne batch has no x"),
        }
    }

    /// Outcomes of a heterodyne shot.
    pub fn alpha(&self, shot: usize) -> &[Complex64] {
        match &self.records {
            Records::Heterodyne { alpha } => &alpha[shot * self.num_modes..(shot + 1) * self.num_modes],
            Records::Homodyne { .. } => panic!("homodyne batch has no α"),
        }
    }

    /// Keeps only the listed modes, in the given order.
    pub fn select_modes(&self, modes: &[usize]) -> Result<SampleBatch> {
        if modes.is_empty() || modes.iter().any(|&i| i >= self.num_modes) {
            return Err(Error::ModeIndex(format!("mode selection {modes:?} out of range")));
        }
        let m = self.num_modes;
        let pick = |v: &[f64]| -> Vec<f64> { v.chunks(m).flat_map(|s| modes.iter().map(|&i| s[i])).collect() };
        let records = match &self.records {
            Records::Homodyne { theta, x } => Records::Homodyne { theta: theta.clone(), x: pick(x) },
            Records::Heterodyne { alpha } => Records::Heterodyne {
                alpha: alpha.chunks(m).flat_map(|s| modes.iter().map(|&i| s[i])).collect(),
            },
        };
        Ok(SampleBatch {
            num_modes: modes.len(),
            records,
            eta: modes.iter().map(|&i| self.eta[i]).collect(),
            xi: modes.iter().map(|&i| self.xi[i]).collect(),
            seed: self.seed,
        })
    }

    /// The first `n` shots.
    pub fn truncate(&self, n: usize) -> SampleBatch {
        self.shots(0..n.min(self.len()))
    }

    /// Shots in `range`; disjoint ranges of one batch are independent.
    pub fn shots(&self, range: std::ops::Range<usize>) -> SampleBatch {
        let (a, b) = (range.start.min(self.len()), range.end.min(self.len()).max(range.start.min(self.len())));
        let m = self.num_modes;
        let records = match &self.records {
            Records::Homodyne { theta, x } => {
                Records::Homodyne { theta: theta[a..b].to_vec(), x: x[a * m..b * m].to_vec() }
            }
            Records::Heterodyne { alpha } => Records::Heterodyne { alpha: alpha[a * m..b * m].to_vec() },
        };
        SampleBatch { num_modes: m, records, eta: self.eta.clone(), xi: self.xi.clone(), seed: self.seed }
    }
}

fn check_eta(eta: &[f64], m: usize) -> Result<()> {
    if eta.len() != m {
        return Err(Error::Dimension("one η per mode".into()));
    }
    if eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return invalid("η must lie in (0, 1]");
    }
    Ok(())
}

/// ⟨x⃗|_θ ρ |x⃗⟩_θ with all modes measured at the common angle θ.
pub fn homodyne_pdf(rho: &DensityOp, theta: f64, x: &[f64]) -> f64 {
    let cut = rho.cutoffs();
    assert_eq!(x.len(), cut.len(), "one x per mode");
    let w = product_vector(cut, |mode, n| {
        let u = hermite_functions(cut[mode], x[mode]);
        Complex64::from_polar(u[n], -(n as f64) * theta)
    });
    quadratic_form(rho.matrix(), &w)
}

/// Homodyne density with detector efficiency η, rescaled so the signal keeps
/// unit gain: the ideal density convolved per mode with N(0, (1−η)/(2η)).
pub fn noisy_homodyne_pdf(rho: &DensityOp, theta: f64, eta: f64, x: &[f64]) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return invalid(format!("η = {eta} outside (0, 1]"));
    }
    if eta == 1.0 {
        return Ok(homodyne_pdf(rho, theta, x));
    }
    let s = ((1.0 - eta) / (2.0 * eta)).sqrt();
    let gh = gauss_hermite(60);
    let m = x.len();
    let mut idx = vec![0usize; m];
    let mut total = 0.0;
    let mut shifted = vec![0.0; m];
    loop {
        let mut w = 1.0;
        for i in 0..m {
            let (t, wt) = gh[idx[i]];
            shifted[i] = x[i] - std::f64::consts::SQRT_2 * s * t;
            w *= wt / PI.sqrt();
        }
        total += w * homodyne_pdf(rho, theta, &shifted);
        if !advance(&mut idx, gh.len()) {
            break;
        }
    }
    Ok(total)
}

fn advance(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// ⟨α|n⟩ for n < c.
fn coherent_overlaps(alpha: Complex64, c: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(c);
    let mut cur = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..c {
        out.push(cur);
        cur *= alpha.conj() / ((n + 1) as f64).sqrt();
    }
    out
}

/// Husimi function Q(α⃗) = ⟨α⃗|ρ|α⃗⟩/π^m.
pub fn husimi_q(rho: &DensityOp, alpha: &[Complex64]) -> f64 {
    let cut = rho.cutoffs();
    assert_eq!(alpha.len(), cut.len(), "one α per mode");
    let tabs: Vec<Vec<Complex64>> = cut.iter().zip(alpha).map(|(&c, &a)| coherent_overlaps(a, c)).collect();
    let w = product_vector(cut, |mode, n| tabs[mode][n]);
    quadratic_form(rho.matrix(), &w) / PI.powi(cut.len() as i32)
}

/// w_a = Π_i f(i, a_i) over the flattened basis.
fn product_vector(cut: &[usize], f: impl Fn(usize, usize) -> Complex64) -> Vec<Complex64> {
    let tabs: Vec<Vec<Complex64>> = cut.iter().enumerate().map(|(i, &c)| (0..c).map(|n| f(i, n)).collect()).collect();
    let mut w = vec![Complex64::new(1.0, 0.0)];
    for t in &tabs {
        w = w.iter().flat_map(|a| t.iter().map(move |b| a * b)).collect();
    }
    w
}

/// Σ_ab w_a ρ_ab w̄_b, which is ⟨ψ|ρ|ψ⟩ for ψ = w̄.
fn quadratic_form(rho: &CMatrix, w: &[Complex64]) -> f64 {
    let d = w.len();
    let mut acc = 0.0;
    for a in 0..d {
        if w[a] == ZERO {
            continue;
        }
        let mut row = ZERO;
        for b in 0..d {
            row += rho[(a, b)] * w[b].conj();
        }
        acc += (w[a] * row).re;
    }
    acc.max(0.0)
}

/// Reduced single-mode states when ρ equals their tensor product.
pub fn product_factors(rho: &DensityOp) -> Option<Vec<DensityOp>> {
    let m = rho.num_modes();
    let factors: Vec<DensityOp> = (0..m).map(|i| rho.partial_trace(&[i]).ok()).collect::<Option<_>>()?;
    if m == 1 {
        return Some(factors);
    }
    let mut prod = factors[0].clone();
    for f in &factors[1..] {
        prod = prod.tensor(f);
    }
    let t = rho.trace();
    let scale = Complex64::new(t.powi(m as i32 - 1), 0.0);
    ((prod.matrix() - rho.matrix() * scale).camax() <= PRODUCT_TOL * t.powi(m as i32)).then_some(factors)
}

/// Precomputed ∫_{−L}^{x_g} u_a u_b on a uniform grid, for inverse-CDF draws.
struct HomodyneTable {
    c: usize,
    lo: f64,
    h: f64,
    /// per grid point: u_a(x_g)
    u: Vec<Vec<f64>>,
    /// per grid point: c×c row-major partial integrals
    cum: Vec<Vec<f64>>,
}

impl HomodyneTable {
    fn new(c: usize) -> HomodyneTable {
        let half = (2.0 * c as f64 + 1.0).sqrt() + 6.0;
        let cells = (2.0 * half / 0.02).ceil() as usize;
        let h = 2.0 * half / cells as f64;
        let lo = -half;
        let gl = gauss_legendre(8);
        let mut u = Vec::with_capacity(cells + 1);
        let mut cum = Vec::with_capacity(cells + 1);
        let mut acc = vec![0.0; c * c];
        for g in 0..=cells {
            let x = lo + g as f64 * h;
            u.push(hermite_functions(c, x));
            cum.push(acc.clone());
            if g == cells {
                break;
            }
            for (t, w) in gl.iter() {
                let uv = hermite_functions(c, x + 0.5 * h * (1.0 + t));
                for a in 0..c {
                    for b in 0..c {
                        acc[a * c + b] += 0.5 * h * w * uv[a] * uv[b];
                    }
                }
            }
        }
        HomodyneTable { c, lo, h, u, cum }
    }

    /// Draws x from Σ_ab k_ab u_a(x) u_b(x), with k the real symmetric kernel
    /// (normalization is taken from the table itself).
    fn draw(&self, k: &[f64], rng: &mut ChaCha8Rng) -> f64 {
        let c = self.c;
        let cdf = |g: usize| -> f64 { self.cum[g].iter().zip(k).map(|(i, w)| i * w).sum() };
        let pdf = |g: usize| -> f64 {
            let u = &self.u[g];
            let mut s = 0.0;
            for a in 0..c {
                for b in 0..c {
                    s += k[a * c + b] * u[a] * u[b];
                }
            }
            s.max(0.0)
        };
        let last = self.u.len() - 1;
        let target = rng.random::<f64>() * cdf(last);
        let (mut lo, mut hi) = (0usize, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cdf(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // cubic Hermite interpolation of the CDF inside [x_lo, x_hi]
        let (f0, f1) = (cdf(lo), cdf(hi));
        let (d0, d1) = (pdf(lo) * self.h, pdf(hi) * self.h);
        let eval = |s: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * d1
        };
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..48 {
            let mid = 0.5 * (a + b);
            if eval(mid) <= target {
                a = mid;
            } else {
                b = mid;
            }
        }
        self.lo + (lo as f64 + 0.5 * (a + b)) * self.h
    }
}

/// Real kernel k_ab = Re(r_ab e^{i(b−a)θ}) of the homodyne density of a single-mode matrix r.
fn homodyne_kernel(r: &[Complex64], c: usize, theta: f64) -> Vec<f64> {
    let mut k = vec![0.0; c * c];
    for a in 0..c {
        for b in 0..c {
            k[a * c + b] = (r[a * c + b] * Complex64::from_polar(1.0, (b as f64 - a as f64) * theta)).re;
        }
    }
    k
}

/// Single-mode Q(α) ∝ e^{−|α|²} Σ_ab r_ab ᾱ^a α^b/√(a!b!), prepared for
/// exact draws.
///
/// |α|² = y is a Gamma(a+1) variate with a chosen with weight r_aa. Given y,
/// the angular density is C_0 + 2 Re Σ_{d>0} C_d(y) e^{idφ} with
/// C_d(y) = y^{d/2} Σ_a r_{a,a+d} y^a/√(a!(a+d)!), drawn by rejection against
/// C_0 + 2 Σ |C_d|.
struct HetMode {
    diag: Vec<f64>,
    total: f64,
    /// (d, [r_{a,a+d}/√(a!(a+d)!)]_a) for the off-diagonals that are nonzero
    bands: Vec<(usize, Vec<Complex64>)>,
    /// r_aa/a!
    center: Vec<f64>,
}

impl HetMode {
    fn new(r: &[Complex64], c: usize) -> HetMode {
        let diag: Vec<f64> = (0..c).map(|a| r[a * c + a].re.max(0.0)).collect();
        let total = diag.iter().sum();
        let center = (0..c).map(|a| diag[a] / factorial(a)).collect();
        let bands = (1..c)
            .filter_map(|d| {
                let band: Vec<Complex64> =
                    (0..c - d).map(|a| r[a * c + a + d] / (factorial(a) * factorial(a + d)).sqrt()).collect();
                band.iter().any(|z| *z != ZERO).then_some((d, band))
            })
            .collect();
        HetMode { diag, total, bands, center }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<Complex64> {
        let c = self.diag.len();
        let mut pick = rng.random::<f64>() * self.total;
        let mut level = c - 1;
        for (a, &p) in self.diag.iter().enumerate() {
            if pick < p {
                level = a;
                break;
            }
            pick -= p;
        }
        let y: f64 = (0..=level).map(|_| -(1.0 - rng.random::<f64>()).ln()).sum();
        let c0 = self.center.iter().rev().fold(0.0, |acc, v| acc * y + v);
        if self.bands.is_empty() {
            return Ok(Complex64::from_polar(y.sqrt(), rng.random::<f64>() * TAU));
        }
        let root = y.sqrt();
        let coeff: Vec<(usize, Complex64)> = self
            .bands
            .iter()
            .map(|(d, band)| (*d, band.iter().rev().fold(ZERO, |acc, v| acc * y + v) * root.powi(*d as i32)))
            .collect();
        let envelope = c0 + 2.0 * coeff.iter().map(|(_, z)| z.norm()).sum::<f64>();
        let max_trials = (1.0 / ACCEPTANCE_FLOOR) as usize;
        for _ in 0..max_trials {
            let phi = rng.random::<f64>() * TAU;
            let step = Complex64::from_polar(1.0, phi);
            let (mut turn, mut at) = (Complex64::new(1.0, 0.0), 0);
            let mut dens = c0;
            for (d, z) in &coeff {
                while at < *d {
                    turn *= step;
                    at += 1;
                }
                dens += 2.0 * (z * turn).re;
            }
            if rng.random::<f64>() * envelope <= dens {
                return Ok(Complex64::from_polar(root, phi));
            }
        }
        Err(Error::LowAcceptance { rate: 1.0 / max_trials as f64 })
    }
}

/// Reduced matrix of mode 0 of a pure amplitude vector (c × rest), row-major.
fn leading_reduced(psi: &[Complex64], c: usize) -> Vec<Complex64> {
    let rest = psi.len() / c;
    let mut r = vec![ZERO; c * c];
    for a in 0..c {
        for b in a..c {
            let mut s = ZERO;
            for k in 0..rest {
                s += psi[a * rest + k] * psi[b * rest + k].conj();
            }
            r[a * c + b] = s;
            r[b * c + a] = s.conj();
        }
    }
    r
}

/// Σ_n w_n ψ(n, ·): conditions the leading mode on an outcome.
fn contract_leading(psi: &[Complex64], w: &[Complex64]) -> Vec<Complex64> {
    let c = w.len();
    let rest = psi.len() / c;
    let mut out = vec![ZERO; rest];
    for (n, wn) in w.iter().enumerate() {
        for k in 0..rest {
            out[k] += wn * psi[n * rest + k];
        }
    }
    out
}

fn matrix_entries(rho: &DensityOp) -> Vec<Complex64> {
    let d = rho.dim();
    let m = rho.matrix();
    (0..d * d).map(|i| m[(i / d, i % d)]).collect()
}

/// Shot-level plan shared by both samplers.
enum Plan {
    Product(Vec<Vec<Complex64>>),
    Mixture(Vec<f64>, Vec<Vec<Complex64>>),
}

fn plan_for(rho: &DensityOp) -> Result<Plan> {
    if rho.trace() <= 0.0 {
        return Err(Error::NullState);
    }
    if let Some(f) = product_factors(rho) {
        return Ok(Plan::Product(f.iter().map(matrix_entries).collect()));
    }
    let mix = rho.mixture(MIXTURE_FLOOR);
    let mut acc = 0.0;
    let mut cumw = Vec::with_capacity(mix.len());
    let mut vecs = Vec::with_capacity(mix.len());
    for (w, v) in mix {
        acc += w;
        cumw.push(acc);
        vecs.push(v);
    }
    Ok(Plan::Mixture(cumw, vecs))
}

fn pick_component<'a>(cumw: &[f64], vecs: &'a [Vec<Complex64>], rng: &mut ChaCha8Rng) -> &'a [Complex64] {
    let target = rng.random::<f64>() * cumw[cumw.len() - 1];
    let i = cumw.partition_point(|&c| c <= target).min(vecs.len() - 1);
    &vecs[i]
}

fn theta_for(policy: ThetaPolicy, rng: &mut ChaCha8Rng) -> f64 {
    match policy {
        ThetaPolicy::Fixed(t) => t.rem_euclid(TAU),
        ThetaPolicy::Uniform => rng.random::<f64>() * TAU,
    }
}

/// Parallel homodyne: every mode of a shot is measured at one common θ.
pub fn sample_parallel_homodyne(rho: &DensityOp, n: usize, seed: u64, policy: ThetaPolicy) -> Result<SampleBatch> {
    sample_parallel_homodyne_noisy(rho, n, seed, policy, 1.0)
}

/// As [`sample_parallel_homodyne`] with detector efficiency η: each rescaled
/// outcome carries extra Gaussian noise of variance (1−η)/(2η).
pub fn sample_parallel_homodyne_noisy(
    rho: &DensityOp,
    n: usize,
    seed: u64,
    policy: ThetaPolicy,
    eta: f64,
) -> Result<SampleBatch> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return invalid(format!("η = {eta} outside (0, 1]"));
    }
    let cut = rho.cutoffs().to_vec();
    let m = cut.len();
    let cmax = *cut.iter().max().unwrap();
    let table = HomodyneTable::new(cmax);
    let plan = plan_for(rho)?;
    let noise = ((1.0 - eta) / (2.0 * eta)).sqrt();
    let shot = |rng: &mut ChaCha8Rng, out: &mut Vec<f64>| -> f64 {
        let theta = theta_for(policy, rng);
        match &plan {
            Plan::Product(factors) => {
                for (i, r) in factors.iter().enumerate() {
                    let k = pad_kernel(&homodyne_kernel(r, cut[i], theta), cut[i], cmax);
                    out.push(table.draw(&k, rng));
                }
            }
            Plan::Mixture(cumw, vecs) => {
                let mut psi = pick_component(cumw, vecs, rng).to_vec();
                for &c in &cut {
                    let r = leading_reduced(&psi, c);
                    let k = pad_kernel(&homodyne_kernel(&r, c, theta), c, cmax);
                    let x = table.draw(&k, rng);
                    out.push(x);
                    let u = hermite_functions(c, x);
                    let w: Vec<Complex64> =
                        (0..c).map(|j| Complex64::from_polar(u[j], -(j as f64) * theta)).collect();
                    psi = contract_leading(&psi, &w);
                }
            }
        }
        if noise > 0.0 {
            let len = out.len();
            for v in &mut out[len - m..] {
                let z: f64 = StandardNormal.sample(rng);
                *v += noise * z;
            }
        }
        theta
    };
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks(n))
        .into_par_iter()
        .map(|ch| {
            let mut rng = chunk_rng(seed, ch);
            let count = CHUNK.min(n - ch * CHUNK);
            let mut th = Vec::with_capacity(count);
            let mut xs = Vec::with_capacity(count * m);
            for _ in 0..count {
                th.push(shot(&mut rng, &mut xs));
            }
            (th, xs)
        })
        .collect();
    let (mut theta, mut x) = (Vec::with_capacity(n), Vec::with_capacity(n * m));
    for (t, v) in chunks {
        theta.extend(t);
        x.extend(v);
    }
    SampleBatch::homodyne(m, theta, x, vec![eta; m], seed)
}

fn pad_kernel(k: &[f64], c: usize, cmax: usize) -> Vec<f64> {
    if c == cmax {
        return k.to_vec();
    }
    let mut out = vec![0.0; cmax * cmax];
    for a in 0..c {
        for b in 0..c {
            out[a * cmax + b] = k[a * c + b];
        }
    }
    out
}

/// S(ξ)† ρ S(ξ) per mode at enlarged cutoffs, so that balanced sampling of the
/// result reproduces unbalanced (squeezed-coherent) heterodyne on ρ.
pub fn antisqueeze(rho: &DensityOp, xi: &[Complex64]) -> Result<DensityOp> {
    if xi.len() != rho.num_modes() {
        return Err(Error::Dimension("one ξ per mode".into()));
    }
    let cut: Vec<usize> = rho
        .cutoffs()
        .iter()
        .zip(xi)
        .map(|(&c, x)| if x.norm() == 0.0 { c } else { c + squeezing_padding(*x, c) })
        .collect();
    let mut out = rho.resize(&cut)?;
    for (mode, x) in xi.iter().enumerate() {
        if x.norm() > 0.0 {
            out = apply_local(&out, mode, &squeezing_op(-x, cut[mode])?)?;
        }
    }
    // drop the Fock tail the padding did not need
    let mut trimmed = cut.clone();
    for (mode, x) in xi.iter().enumerate() {
        if x.norm() > 0.0 {
            let r = out.partial_trace(&[mode])?;
            let diag: Vec<f64> = (0..cut[mode]).map(|n| r.matrix()[(n, n)].re.max(0.0)).collect();
            let mut tail = 0.0;
            let mut keep = cut[mode];
            while keep > rho.cutoffs()[mode] && tail + diag[keep - 1] <= ANTISQUEEZE_TAIL {
                tail += diag[keep - 1];
                keep -= 1;
            }
            trimmed[mode] = keep;
        }
    }
    if trimmed != cut {
        out = out.resize(&trimmed)?;
    }
    Ok(out)
}

/// Heterodyne sampling with unbalancing ξ and detector efficiency η.
///
/// Outcomes are reported rescaled by 1/√η, so for η < 1 they follow the
/// s-parametrized quasi-probability W(α, 1 − 2/η) of ρ.
pub fn sample_heterodyne(rho: &DensityOp, n: usize, seed: u64, xi: &[Complex64], eta: &[f64]) -> Result<SampleBatch> {
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let m = rho.num_modes();
    check_eta(eta, m)?;
    if xi.len() != m {
        return Err(Error::Dimension("one ξ per mode".into()));
    }
    let unbalanced = xi.iter().any(|x| x.norm() > 0.0);
    let lossy = eta.iter().any(|&e| e < 1.0);
    // Loss before a squeezed projection does not commute into output noise, so
    // apply it to the state in that case.
    let state = if unbalanced && lossy {
        antisqueeze(&loss_channel(rho, eta)?, xi)?
    } else if unbalanced {
        antisqueeze(rho, xi)?
    } else {
        rho.clone()
    };
    let cut = state.cutoffs().to_vec();
    let plan = plan_for(&state)?;
    let noise: Vec<f64> = eta
        .iter()
        .map(|&e| if unbalanced { 0.0 } else { ((1.0 - e) / e).sqrt() })
        .collect();
    let gain: Vec<f64> = eta.iter().map(|&e| if unbalanced { 1.0 / e.sqrt() } else { 1.0 }).collect();
    let modes: Vec<HetMode> = match &plan {
        Plan::Product(factors) => factors.iter().zip(&cut).map(|(r, &c)| HetMode::new(r, c)).collect(),
        Plan::Mixture(..) => Vec::new(),
    };
    let shot = |rng: &mut ChaCha8Rng, out: &mut Vec<Complex64>| -> Result<()> {
        let start = out.len();
        match &plan {
            Plan::Product(_) => {
                for f in &modes {
                    out.push(f.draw(rng)?);
                }
            }
            Plan::Mixture(cumw, vecs) => {
                let mut psi = pick_component(cumw, vecs, rng).to_vec();
                for &c in &cut {
                    let r = leading_reduced(&psi, c);
                    let a = HetMode::new(&r, c).draw(rng)?;
                    out.push(a);
                    psi = contract_leading(&psi, &coherent_overlaps(a, c));
                }
            }
        }
        for (i, v) in out[start..].iter_mut().enumerate() {
            if noise[i] > 0.0 {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *v += Complex64::new(re, im) * (noise[i] * std::f64::consts::FRAC_1_SQRT_2);
            }
            *v *= gain[i];
        }
        Ok(())
    };
    let chunks: Vec<Result<Vec<Complex64>>> = (0..n_chunks(n))
        .into_par_iter()
        .map(|ch| {
            let mut rng = chunk_rng(seed, ch);
            let count = CHUNK.min(n - ch * CHUNK);
            let mut out = Vec::with_capacity(count * m);
            for _ in 0..count {
                shot(&mut rng, &mut out)?;
            }
            Ok(out)
        })
        .collect();
    let mut alpha = Vec::with_capacity(n * m);
    for c in chunks {
        alpha.extend(c?);
    }
    SampleBatch::heterodyne(m, alpha, eta.to_vec(), xi.to_vec(), seed)
}
