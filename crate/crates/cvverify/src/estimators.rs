//! Estimator functions for density-matrix elements and fidelities.
//!
//! Homodyne: pattern functions f_lk(x) whose average against the homodyne
//! density with uniform θ reproduces ρ_kl exactly. Heterodyne: regularized
//! P-function estimators g^p_mn(z, τ), biased by at most a controllable amount
//! and bounded by a closed-form range.

use crate::error::{invalid, Error, Result};
use crate::fock::CoreState;
use crate::par::gauss_legendre;
use crate::special::{binomial, factorial, ho_tables, laguerre, laguerre_2d};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Range constant of the homodyne fidelity estimator: |g| ≤ K_INF · C^{10/3}.
/// Fitted by `examples/calibrate_kinf.rs`; the maximum ratio is reached at C = 1.
pub const K_INF: f64 = 2.0;

/// Largest τ for which the closed-form heterodyne range is an envelope of |g|.
pub const RANGE_TAU_MAX: f64 = 0.5;

/// Support size per mode: 1 + the largest occupied Fock index.
pub fn support_sizes(core: &CoreState) -> Vec<usize> {
    let mut out = vec![1; core.num_modes()];
    for (idx, _) in core.coeffs() {
        for (s, &k) in out.iter_mut().zip(idx) {
            *s = (*s).max(k + 1);
        }
    }
    out
}

fn single_mode_amplitudes(core: &CoreState) -> Result<Vec<Complex64>> {
    if core.num_modes() != 1 {
        return Err(Error::Dimension("single-mode core state required".into()));
    }
    let c = support_sizes(core)[0];
    Ok((0..c).map(|n| core.amplitude(&[n])).collect())
}

/// Pattern function f_lk(x) = 2 d/dx (u_a v_b), a = min(k, l), b = max(k, l).
pub fn hom_f(l: usize, k: usize, x: f64) -> Result<f64> {
    let (a, b) = (k.min(l), k.max(l));
    let (u, v) = ho_tables(b + 2, x)?;
    Ok(pattern(&u, &v, a, b, x))
}

fn pattern(u: &[f64], v: &[f64], a: usize, b: usize, x: f64) -> f64 {
    4.0 * x * u[a] * v[b]
        - 2.0 * SQRT_2 * (((a + 1) as f64).sqrt() * u[a + 1] * v[b] + ((b + 1) as f64).sqrt() * u[a] * v[b + 1])
}

/// Table f_lk(x) for k, l < c, row-major in (l, k).
pub fn hom_f_table(c: usize, x: f64) -> Result<Vec<f64>> {
    let (u, v) = ho_tables(c + 1, x)?;
    let mut out = vec![0.0; c * c];
    for l in 0..c {
        for k in l..c {
            let f = pattern(&u, &v, l, k, x);
            out[l * c + k] = f;
            out[k * c + l] = f;
        }
    }
    Ok(out)
}

/// Σ_kl c_k* c_l f_lk(x) e^{i(k−l)θ}, with entries given as a table.
fn combine_hom(amps: &[Complex64], table: &[f64], theta: f64) -> f64 {
    let c = amps.len();
    let mut acc = 0.0;
    for k in 0..c {
        for l in 0..c {
            let w = amps[k].conj() * amps[l];
            if w == ZERO {
                continue;
            }
            acc += (w * Complex64::from_polar(table[l * c + k], (k as f64 - l as f64) * theta)).re;
        }
    }
    acc
}

/// Single-mode homodyne fidelity estimator; its mean over uniform-θ homodyne
/// data equals ⟨C|ρ|C⟩.
pub fn hom_g(core: &CoreState, x: f64, theta: f64) -> Result<f64> {
    let amps = single_mode_amplitudes(core)?;
    Ok(combine_hom(&amps, &hom_f_table(amps.len(), x)?, theta))
}

/// Homodyne estimator range for core support size c.
pub fn hom_range_bound(c: usize) -> f64 {
    K_INF * (c.max(1) as f64).powf(10.0 / 3.0)
}

/// max over the grid of Σ_{k,l<c} |f_lk(x)|, used to calibrate [`K_INF`].
pub fn hom_envelope(c: usize, xmax: f64, step: f64) -> Result<f64> {
    let n = (xmax / step).round() as usize;
    let mut best = 0.0f64;
    for i in 0..=n {
        let t = hom_f_table(c, i as f64 * step)?;
        best = best.max(t.iter().map(|v| v.abs()).sum());
    }
    Ok(best)
}

/// Pattern function for detector efficiency η > 1/2:
/// 2(−1)^{⌊d/2⌋} √(a!/b!) ∫_0^∞ t^{d+1} e^{(1−2η)t²/(2η)} L_a^{(d)}(t²) trig(√2 t x) dt,
/// with trig = cos for even d = |k−l| and sin for odd d.
pub fn hom_f_noisy(k: usize, l: usize, x: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.5 && eta <= 1.0) {
        return Err(Error::Undefined(format!("noisy homodyne estimator needs η in (1/2, 1], got {eta}")));
    }
    let (a, b) = (k.min(l), k.max(l));
    let d = b - a;
    let decay = (1.0 - 2.0 * eta) / (2.0 * eta);
    let power = (d + 1 + 2 * a + 2) as f64;
    let mut upper = 1.0f64;
    while decay * upper * upper + power * upper.ln() > -40.0 {
        upper += 0.25;
    }
    let width = (0.25f64).min(std::f64::consts::FRAC_PI_4 / (SQRT_2 * x.abs() + 1.0));
    let panels = (upper / width).ceil() as usize;
    let h = upper / panels as f64;
    let gl = gauss_legendre(16);
    let integrand = |t: f64| {
        let trig = if d % 2 == 0 { (SQRT_2 * t * x).cos() } else { (SQRT_2 * t * x).sin() };
        t.powi(d as i32 + 1) * (decay * t * t).exp() * laguerre(a, d as f64, t * t) * trig
    };
    let mut parts = Vec::with_capacity(panels);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        parts.push(0.5 * h * gl.iter().map(|(s, w)| w * integrand(mid + 0.5 * h * s)).sum::<f64>());
    }
    let sign = if (d / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(2.0 * sign * (factorial(a) / factorial(b)).sqrt() * crate::par::pairwise_sum(&parts))
}

/// Homodyne fidelity estimator for detector efficiency η > 1/2.
pub fn hom_g_noisy(core: &CoreState, x: f64, theta: f64, eta: f64) -> Result<f64> {
    let amps = single_mode_amplitudes(core)?;
    let c = amps.len();
    let mut table = vec![0.0; c * c];
    for l in 0..c {
        for k in l..c {
            let f = hom_f_noisy(k, l, x, eta)?;
            table[l * c + k] = f;
            table[k * c + l] = f;
        }
    }
    Ok(combine_hom(&amps, &table, theta))
}

/// Free parameters of the heterodyne estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub p: Vec<usize>,
    pub tau: f64,
    pub eta: f64,
}

impl EstimatorConfig {
    pub fn new(p: Vec<usize>, tau: f64, eta: f64) -> Result<EstimatorConfig> {
        let c = EstimatorConfig { p, tau, eta };
        c.validate()?;
        Ok(c)
    }

    pub fn ideal(p: Vec<usize>, tau: f64) -> Result<EstimatorConfig> {
        Self::new(p, tau, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() || self.p.contains(&0) {
            return invalid("orders p must be positive, one per mode");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return invalid(format!("η = {} outside (0, 1]", self.eta));
        }
        if self.eta == 1.0 {
            if !(self.tau > 0.0 && self.tau <= 1.0) {
                return invalid(format!("τ = {} outside (0, 1]", self.tau));
            }
        } else if !(self.tau > 0.0 && self.tau < 1.0 / self.eta) {
            return invalid(format!("τ = {} outside (0, 1/η)", self.tau));
        }
        Ok(())
    }

    /// Effective smoothing t = 1 − η + τη² (equals τ when η = 1).
    pub fn t(&self) -> f64 {
        1.0 - self.eta + self.tau * self.eta * self.eta
    }
}

/// f_kl(z, τ) = τ^{−1−(k+l)/2} e^{(1−1/τ)|z|²} 𝓛_{k,l}(z/√τ).
pub fn het_f(k: usize, l: usize, z: Complex64, tau: f64) -> Result<Complex64> {
    if !(tau > 0.0 && tau <= 1.0) {
        return invalid(format!("τ = {tau} outside (0, 1]"));
    }
    Ok(het_f_raw(k, l, z, tau))
}

fn het_f_raw(k: usize, l: usize, z: Complex64, tau: f64) -> Complex64 {
    let pref = tau.powf(-1.0 - 0.5 * (k + l) as f64) * ((1.0 - 1.0 / tau) * z.norm_sqr()).exp();
    laguerre_2d(k, l, z / tau.sqrt()) * pref
}

fn binom_weight(m: usize, n: usize, j: usize) -> f64 {
    (binomial(m + j, m) * binomial(n + j, n)).sqrt()
}

/// g^p_mn(z, τ) = Σ_{j<p} (−τ)^j √(C(m+j,m) C(n+j,n)) f_{m+j,n+j}(z, τ).
pub fn het_g(m: usize, n: usize, p: usize, z: Complex64, tau: f64) -> Result<Complex64> {
    if p == 0 {
        return invalid("order p must be at least 1");
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return invalid(format!("τ = {tau} outside (0, 1]"));
    }
    Ok(het_g_raw(m, n, p, z, tau, 1.0))
}

/// Lossy single f: η^{−(k+l)/2} f_kl(√η z, τη).
pub fn het_f_noisy(k: usize, l: usize, z: Complex64, tau: f64, eta: f64) -> Result<Complex64> {
    EstimatorConfig::new(vec![1], tau, eta)?;
    Ok(het_f_noisy_raw(k, l, z, tau, eta))
}

fn het_f_noisy_raw(k: usize, l: usize, z: Complex64, tau: f64, eta: f64) -> Complex64 {
    if eta == 1.0 {
        return het_f_raw(k, l, z, tau);
    }
    het_f_raw(k, l, z * eta.sqrt(), tau * eta) * eta.powf(-0.5 * (k + l) as f64)
}

fn het_g_raw(m: usize, n: usize, p: usize, z: Complex64, tau: f64, eta: f64) -> Complex64 {
    let t = 1.0 - eta + tau * eta * eta;
    let mut acc = ZERO;
    let mut w = 1.0;
    for j in 0..p {
        acc += het_f_noisy_raw(m + j, n + j, z, tau, eta) * (w * binom_weight(m, n, j));
        w *= -t;
    }
    acc
}

/// Lossy g: same series with weights (−t)^j, t = 1 − η + τη², and the lossy f.
pub fn het_g_noisy(m: usize, n: usize, p: usize, z: Complex64, tau: f64, eta: f64) -> Result<Complex64> {
    EstimatorConfig::new(vec![p], tau, eta)?;
    Ok(het_g_raw(m, n, p, z, tau, eta))
}

/// Precomputed k-mode heterodyne fidelity estimator for one core state and config.
#[derive(Clone, Debug)]
pub struct HetEstimator {
    config: EstimatorConfig,
    /// per mode: distinct (m, n) pairs used
    pairs: Vec<Vec<(usize, usize)>>,
    /// c_m* c_n with per-mode indices into `pairs`
    terms: Vec<(Complex64, Vec<usize>)>,
}

impl HetEstimator {
    pub fn new(core: &CoreState, config: &EstimatorConfig) -> Result<HetEstimator> {
        config.validate()?;
        let k = core.num_modes();
        if config.p.len() != k {
            return Err(Error::Dimension(format!("config has {} orders for {k} modes", config.p.len())));
        }
        let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
        let mut terms = Vec::new();
        for (mi, cm) in core.coeffs() {
            for (ni, cn) in core.coeffs() {
                let mut slots = Vec::with_capacity(k);
                for i in 0..k {
                    let key = (mi[i], ni[i]);
                    let pos = match pairs[i].iter().position(|p| *p == key) {
                        Some(p) => p,
                        None => {
                            pairs[i].push(key);
                            pairs[i].len() - 1
                        }
                    };
                    slots.push(pos);
                }
                terms.push((cm.conj() * cn, slots));
            }
        }
        Ok(HetEstimator { config: config.clone(), pairs, terms })
    }

    pub fn num_modes(&self) -> usize {
        self.pairs.len()
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Re Σ c_m* c_n Π_i g^{p_i}_{m_i n_i}(α_i).
    pub fn eval(&self, alpha: &[Complex64]) -> f64 {
        let (tau, eta) = (self.config.tau, self.config.eta);
        let vals: Vec<Vec<Complex64>> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, ps)| {
                ps.iter().map(|&(m, n)| het_g_raw(m, n, self.config.p[i], alpha[i], tau, eta)).collect()
            })
            .collect();
        let mut acc = 0.0;
        for (w, slots) in &self.terms {
            let mut prod = *w;
            for (i, &s) in slots.iter().enumerate() {
                prod *= vals[i][s];
            }
            acc += prod.re;
        }
        acc
    }
}

/// k-mode heterodyne fidelity estimator Re Σ c_m* c_n Π_i g^{p_i}_{m_i n_i}(α_i, τ).
pub fn het_g_kmode(core: &CoreState, alpha: &[Complex64], config: &EstimatorConfig) -> Result<f64> {
    if alpha.len() != core.num_modes() {
        return Err(Error::Dimension("one α per mode".into()));
    }
    Ok(HetEstimator::new(core, config)?.eval(alpha))
}

/// Single-mode bias term E^p_mn(s) = s^p ((1+m)(1+n))^{p/2} / √(1 − s²(1+m)(1+n)).
pub fn single_bias_term(m: usize, n: usize, p: usize, s: f64) -> Result<f64> {
    let q = ((1 + m) * (1 + n)) as f64;
    let den = 1.0 - s * s * q;
    if den <= 0.0 {
        return Err(Error::Convergence { m, n, tau: s });
    }
    Ok(s.powi(p as i32) * q.powf(0.5 * p as f64) / den.sqrt())
}

/// Bias bound of the single-element estimator Π_i g^{p_i}_{m_i n_i}: the
/// per-mode terms folded as ε ← Eε + E + ε. Lossy configs use t in place of τ.
pub fn element_bias_bound(m: &[usize], n: &[usize], config: &EstimatorConfig) -> Result<f64> {
    if m.len() != config.p.len() || n.len() != config.p.len() {
        return Err(Error::Dimension("one order per mode".into()));
    }
    let s = config.t();
    let mut eps = 0.0;
    for i in 0..m.len() {
        let e = single_bias_term(m[i], n[i], config.p[i], s)
            .map_err(|_| Error::Convergence { m: m[i], n: n[i], tau: config.tau })?;
        eps = e * eps + e + eps;
    }
    Ok(eps)
}

/// Bias bound Σ |c_m* c_n| ε_mn of the fidelity estimator.
pub fn het_bias_bound(core: &CoreState, config: &EstimatorConfig) -> Result<f64> {
    config.validate()?;
    if config.p.len() != core.num_modes() {
        return Err(Error::Dimension("one order per mode".into()));
    }
    let mut total = 0.0;
    for (mi, cm) in core.coeffs() {
        for (ni, cn) in core.coeffs() {
            total += (cm.conj() * cn).norm() * element_bias_bound(mi, ni, config)?;
        }
    }
    Ok(total)
}

/// Envelope √(2^{|k−l|} C(max, min)) of |𝓛_{k,l}(w)| e^{−|w|²/2}.
fn laguerre_envelope(k: usize, l: usize) -> f64 {
    let (a, b) = (k.min(l), k.max(l));
    (2f64.powi((b - a) as i32) * binomial(b, a)).sqrt()
}

/// Per-mode range factor of g^p_mn.
pub fn single_range_term(m: usize, n: usize, p: usize, tau: f64, eta: f64) -> Result<f64> {
    let eff = tau * eta;
    if !(eff > 0.0 && eff <= RANGE_TAU_MAX) {
        return invalid(format!("closed-form range requires 0 < τη ≤ {RANGE_TAU_MAX}, got {eff}"));
    }
    let (a, b) = (m.min(n), m.max(n));
    if eta == 1.0 {
        return Ok(tau.powf(-1.0 - 0.5 * (m + n) as f64) * binomial(b + p, p - 1) * laguerre_envelope(m, n));
    }
    // |f^η_kl| ≤ η^{−(k+l)/2} (τη)^{−1−(k+l)/2} × envelope, summed over the series
    let t = 1.0 - eta + tau * eta * eta;
    let mut acc = 0.0;
    for j in 0..p {
        let (k, l) = (a + j, b + j);
        let f = eta.powf(-0.5 * (k + l) as f64) * eff.powf(-1.0 - 0.5 * (k + l) as f64) * laguerre_envelope(k, l);
        acc += t.powi(j as i32) * binom_weight(m, n, j) * f;
    }
    Ok(acc)
}

/// Range bound R = Σ |c_m* c_n| Π_i (per-mode range factor), so |g_k-est| ≤ R.
pub fn het_range_bound(core: &CoreState, config: &EstimatorConfig) -> Result<f64> {
    config.validate()?;
    if config.p.len() != core.num_modes() {
        return Err(Error::Dimension("one order per mode".into()));
    }
    let mut total = 0.0;
    for (mi, cm) in core.coeffs() {
        for (ni, cn) in core.coeffs() {
            let mut r = 1.0;
            for i in 0..mi.len() {
                r *= single_range_term(mi[i], ni[i], config.p[i], config.tau, config.eta)?;
            }
            total += (cm.conj() * cn).norm() * r;
        }
    }
    Ok(total)
}

/// Hoeffding failure probability 2 exp(−N λ² / (2 R²)).
pub fn hoeffding_delta(n: usize, lambda: f64, range: f64) -> f64 {
    (2.0 * (-(n as f64) * lambda * lambda / (2.0 * range * range)).exp()).min(1.0)
}

/// Statistical error λ at which N shots reach failure probability δ.
pub fn hoeffding_lambda(n: usize, delta: f64, range: f64) -> f64 {
    range * (2.0 * (2.0 / delta).ln() / n as f64).sqrt()
}

/// Shots needed for statistical error λ at failure probability δ.
pub fn hoeffding_samples(lambda: f64, delta: f64, range: f64) -> f64 {
    2.0 * range * range * (2.0 / delta).ln() / (lambda * lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::special::hermite_functions;

    #[test]
    fn pattern_symmetric_and_bounded() {
        for k in 0..5 {
            for l in 0..5 {
                for &x in &[-3.1, -0.4, 0.0, 1.2, 7.5] {
                    assert_eq!(hom_f(l, k, x).unwrap(), hom_f(k, l, x).unwrap());
                }
            }
        }
        assert!((hom_f(0, 0, 0.0).unwrap() - 2.0).abs() < 1e-12);
        for c in 1..=6 {
            let env = hom_envelope(c, 12.0, 0.1).unwrap();
            assert!(env <= hom_range_bound(c) * (1.0 + 1e-9), "C={c} {env}");
        }
    }

    #[test]
    fn pattern_orthogonality_by_quadrature() {
        // ∫ f_lk u_{k+j} u_{l+j} dx = δ_{j0}
        let xs: Vec<(f64, f64)> = {
            let gl = gauss_legendre(20);
            (0..80)
                .flat_map(|p| {
                    let lo = -12.0 + p as f64 * 0.3;
                    gl.iter().map(move |(t, w)| (lo + 0.15 * (1.0 + t), 0.15 * w)).collect::<Vec<_>>()
                })
                .collect()
        };
        for (k, l) in [(0, 0), (1, 0), (0, 2), (2, 1), (1, 1)] {
            for j in 0..3 {
                let s: f64 = xs
                    .iter()
                    .map(|&(x, w)| {
                        let u = hermite_functions(8, x);
                        w * hom_f(l, k, x).unwrap() * u[k + j] * u[l + j]
                    })
                    .sum();
                let want = if j == 0 { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-8, "k={k} l={l} j={j} {s}");
            }
        }
    }

    #[test]
    fn hom_g_examples() {
        let vac = CoreState::vacuum(1);
        assert_eq!(hom_g(&vac, 0.3, 1.0).unwrap(), hom_f(0, 0, 0.3).unwrap());
        let s = 0.5f64.sqrt();
        let psi = CoreState::single_mode(&[c64(s, 0.0), c64(0.0, s)]).unwrap();
        let a = hom_g(&psi, 0.8, 0.4).unwrap();
        let b = hom_g(&psi, 0.8, 0.4 + std::f64::consts::TAU).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(hom_g(&CoreState::vacuum(2), 0.0, 0.0).is_err());
    }

    #[test]
    fn noisy_pattern_reduces_to_ideal() {
        for k in 0..4 {
            for l in 0..4 {
                for &x in &[-3.0, -1.1, 0.0, 0.6, 2.4, 3.0] {
                    let a = hom_f_noisy(k, l, x, 1.0).unwrap();
                    let b = hom_f(l, k, x).unwrap();
                    assert!((a - b).abs() < 1e-5, "k={k} l={l} x={x}: {a} vs {b}");
                }
            }
        }
        assert!(matches!(hom_f_noisy(0, 0, 0.0, 0.5), Err(Error::Undefined(_))));
        assert!(hom_f_noisy(0, 0, 0.0, 0.51).is_ok());
    }

    #[test]
    fn het_examples() {
        assert!((het_f(0, 0, ZERO, 0.5).unwrap() - c64(2.0, 0.0)).norm() < 1e-15);
        let z = c64(0.4, -0.7);
        assert_eq!(het_g(1, 2, 1, z, 0.3).unwrap(), het_f(1, 2, z, 0.3).unwrap());
        assert!(het_f(0, 0, z, 1.2).is_err());
        assert!(het_f(0, 0, z, 0.0).is_err());
        let cfg = EstimatorConfig::ideal(vec![1, 1], 0.5).unwrap();
        let v = het_g_kmode(&CoreState::vacuum(2), &[ZERO, ZERO], &cfg).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
    }

    #[test]
    fn noisy_het_reduces_to_ideal() {
        for (i, &z) in [c64(0.1, 0.2), c64(-1.3, 0.5), c64(0.9, -0.9)].iter().enumerate() {
            for (m, n, p) in [(0, 0, 1), (1, 2, 3), (2, 0, 2)] {
                let tau = 0.2 + 0.1 * i as f64;
                let a = het_g_noisy(m, n, p, z, tau, 1.0).unwrap();
                let b = het_g(m, n, p, z, tau).unwrap();
                assert!((a - b).norm() < 1e-12);
            }
        }
        assert!(het_g_noisy(0, 0, 1, ZERO, 1.0 / 0.8, 0.8).is_err());
        assert!(het_g_noisy(0, 0, 1, ZERO, 0.3, 0.4).is_ok());
    }

    #[test]
    fn kmode_reduces_to_single_mode() {
        let s = 0.5f64.sqrt();
        let core = CoreState::single_mode(&[c64(s, 0.0), c64(0.0, s)]).unwrap();
        let cfg = EstimatorConfig::ideal(vec![2], 0.3).unwrap();
        let z = c64(0.3, 0.8);
        let direct: Complex64 = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(m, n)| core.amplitude(&[m]).conj() * core.amplitude(&[n]) * het_g(m, n, 2, z, 0.3).unwrap())
            .sum();
        assert!((het_g_kmode(&core, &[z], &cfg).unwrap() - direct.re).abs() < 1e-12);
    }

    #[test]
    fn bias_bound_examples() {
        let vac = CoreState::vacuum(1);
        let b = het_bias_bound(&vac, &EstimatorConfig::ideal(vec![1], 0.3).unwrap()).unwrap();
        assert!((b - 0.3 / 0.91f64.sqrt()).abs() < 1e-12);
        let tiny = het_bias_bound(&CoreState::fock(&[2, 1]), &EstimatorConfig::ideal(vec![1, 1], 1e-6).unwrap());
        assert!(tiny.unwrap() < 1e-5);
        let mut prev = 0.0;
        for i in 1..50 {
            let b = het_bias_bound(&vac, &EstimatorConfig::ideal(vec![2], i as f64 * 0.019).unwrap()).unwrap();
            assert!(b > prev);
            prev = b;
        }
        assert!(matches!(
            het_bias_bound(&CoreState::fock(&[3]), &EstimatorConfig::ideal(vec![1], 0.3).unwrap()),
            Err(Error::Convergence { m: 3, n: 3, .. })
        ));
    }

    #[test]
    fn range_bound_examples() {
        let r = het_range_bound(&CoreState::vacuum(1), &EstimatorConfig::ideal(vec![1], 0.5).unwrap()).unwrap();
        assert!((r - 2.0).abs() < 1e-14);
        assert!(het_range_bound(&CoreState::vacuum(1), &EstimatorConfig::ideal(vec![1], 0.6).unwrap()).is_err());
    }

    #[test]
    fn hoeffding_round_trip() {
        let n = hoeffding_samples(0.05, 0.1, 3.0);
        let lam = hoeffding_lambda(n.ceil() as usize, 0.1, 3.0);
        assert!(lam <= 0.05 && lam > 0.0499);
        assert!((hoeffding_delta(n.ceil() as usize, lam, 3.0) - 0.1).abs() < 1e-9);
    }
}
