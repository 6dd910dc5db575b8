//! Scalar special functions: factorials, oscillator eigenfunctions (both the
//! normalizable Hermite functions and the irregular second solutions),
//! generalized Laguerre polynomials and the two-variable Laguerre polynomials.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Beyond this |x| the normalizable functions come from the three-term recurrence.
pub const U_SERIES_WINDOW: f64 = 6.0;
/// Beyond this |x| the irregular series is not evaluated (e^{x²} overflows soon after).
pub const V_SERIES_WINDOW: f64 = 20.0;

const MAX_FACT: usize = 170;

fn fact_table() -> &'static [f64] {
    static T: OnceLock<Vec<f64>> = OnceLock::new();
    T.get_or_init(|| {
        let mut t = vec![1.0; MAX_FACT + 1];
        for i in 1..=MAX_FACT {
            t[i] = t[i - 1] * i as f64;
        }
        t
    })
}

pub fn factorial(n: usize) -> f64 {
    assert!(n <= MAX_FACT, "factorial argument {n} too large");
    fact_table()[n]
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Hermite functions u_0..u_{n-1} at x by the stable three-term recurrence.
pub fn hermite_functions(n: usize, x: f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(n);
    if n == 0 {
        return u;
    }
    u.push(PI.powf(-0.25) * (-0.5 * x * x).exp());
    if n > 1 {
        u.push(2f64.sqrt() * x * u[0]);
    }
    for j in 1..n.saturating_sub(1) {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * u[j] - (jf / (jf + 1.0)).sqrt() * u[j - 1];
        u.push(next);
    }
    u
}

/// Power series solutions of h'' − 2x h' + (K − 1) h = 0, written so that
/// e^{−x²/2} h solves the oscillator equation with eigenvalue K/2.
/// `odd` selects h₁ (starts at x), otherwise h₀ (starts at 1).
pub fn oscillator_series(k_param: f64, x: f64, odd: bool) -> Result<f64> {
    let x2 = x * x;
    let mut term = if odd { x } else { 1.0 };
    let mut sum = term;
    let mut comp = 0.0;
    let peak = x2 + 10.0;
    for n in 1..20_000usize {
        let nf = n as f64;
        term *= if odd {
            (4.0 * (nf - 1.0) + 3.0 - k_param) * x2 / ((2.0 * nf) * (2.0 * nf + 1.0))
        } else {
            (4.0 * (nf - 1.0) + 1.0 - k_param) * x2 / ((2.0 * nf - 1.0) * (2.0 * nf))
        };
        // Neumaier compensated summation.
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        if term == 0.0 || (nf > peak && term.abs() <= 1e-17 * (sum + comp).abs()) {
            return Ok(sum + comp);
        }
    }
    Err(Error::SeriesWindow { x })
}

/// Normalization constants: u_j = N_j e^{−x²/2} h, v_j = M_j e^{−x²/2} h.
fn norm_constants() -> &'static (Vec<f64>, Vec<f64>) {
    static T: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    T.get_or_init(|| {
        let jmax = 160;
        let mut nn = vec![PI.powf(-0.25)];
        let mut mm = vec![PI.powf(0.25)];
        for j in 0..jmax {
            let s = (2.0 * (j as f64 + 1.0)).sqrt();
            let (n_prev, m_prev) = (nn[j], mm[j]);
            if j % 2 == 0 {
                nn.push(s * n_prev);
                mm.push(-m_prev / s);
            } else {
                nn.push(-n_prev / s);
                mm.push(s * m_prev);
            }
        }
        (nn, mm)
    })
}

fn u_series(j: usize, x: f64) -> Result<f64> {
    let (nn, _) = norm_constants();
    let h = oscillator_series(2.0 * j as f64 + 1.0, x, j % 2 == 1)?;
    Ok(nn[j] * (-0.5 * x * x).exp() * h)
}

fn v_series(j: usize, x: f64) -> Result<f64> {
    if x.abs() > V_SERIES_WINDOW {
        return Err(Error::SeriesWindow { x });
    }
    let (_, mm) = norm_constants();
    let h = oscillator_series(2.0 * j as f64 + 1.0, x, j % 2 == 0)?;
    Ok(mm[j] * (-0.5 * x * x).exp() * h)
}

/// Normalizable u_j and irregular v_j oscillator eigenfunctions at x.
///
/// v_0 = π^{1/4} e^{−x²/2} ∫_0^x e^{t²} dt and v_{j+1} = a† v_j, so that the
/// pair obeys the same ladder relations as the Hermite functions.
pub fn ho_eigenfunctions(j: usize, x: f64) -> Result<(f64, f64)> {
    let u = if x.abs() <= U_SERIES_WINDOW {
        u_series(j, x)?
    } else {
        hermite_functions(j + 1, x)[j]
    };
    Ok((u, v_series(j, x)?))
}

/// Tables u_0..u_{n-1} and v_0..v_{n-1} at x.
pub fn ho_tables(n: usize, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = if x.abs() <= U_SERIES_WINDOW {
        (0..n).map(|j| u_series(j, x)).collect::<Result<Vec<_>>>()?
    } else {
        hermite_functions(n, x)
    };
    let v = (0..n).map(|j| v_series(j, x)).collect::<Result<Vec<_>>>()?;
    Ok((u, v))
}

/// Generalized Laguerre polynomial L_n^{(α)}(x).
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut l0 = 1.0;
    if n == 0 {
        return l0;
    }
    let mut l1 = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let l2 = ((2.0 * kf + 1.0 + alpha - x) * l1 - (kf + alpha) * l0) / (kf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Two-variable Laguerre polynomial
/// 𝓛_{k,l}(z) = Σ_p √(k! l!) (−1)^p / (p! (k−p)! (l−p)!) z^{k−p} z̄^{l−p}.
pub fn laguerre_2d(k: usize, l: usize, z: Complex64) -> Complex64 {
    let pref = (factorial(k) * factorial(l)).sqrt();
    let zc = z.conj();
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..=k.min(l) {
        let c = pref / (factorial(p) * factorial(k - p) * factorial(l - p));
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        acc += z.powu((k - p) as u32) * zc.powu((l - p) as u32) * (sign * c);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials_and_binomials() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(5), 120.0);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(2, 5), 0.0);
    }

    #[test]
    fn u0_at_origin() {
        let (u, _) = ho_eigenfunctions(0, 0.0).unwrap();
        assert!((u - 0.751_125_544_464_942_5).abs() < 1e-12);
        assert_eq!(ho_eigenfunctions(1, 0.0).unwrap().0, 0.0);
    }

    #[test]
    fn parity() {
        let a = ho_eigenfunctions(3, 0.7).unwrap();
        let b = ho_eigenfunctions(3, -0.7).unwrap();
        assert!((a.0 + b.0).abs() < 1e-12);
        // v_j has parity (−1)^{j+1}
        assert!((a.1 - b.1).abs() < 1e-12);
    }

    #[test]
    fn series_matches_recurrence() {
        for &x in &[-5.5, -2.0, -0.3, 0.0, 0.9, 3.3, 5.9] {
            let rec = hermite_functions(12, x);
            for (j, r) in rec.iter().enumerate() {
                let s = u_series(j, x).unwrap();
                assert!((s - r).abs() < 1e-11, "j={j} x={x} {s} {r}");
            }
        }
    }

    // Reference values from an independent 40-digit evaluation of
    // v_0 = π^{1/4} e^{−x²/2} (√π/2) erfi(x) and the a† ladder.
    #[test]
    fn irregular_reference_values() {
        let (_, v0) = ho_eigenfunctions(0, 0.7).unwrap();
        assert!((v0 - 0.868_338_015_158_117_8).abs() < 1e-12);
    }

    #[test]
    fn irregular_ladder_relation() {
        // v_{j+1} = (x v_j − v_j') / √(2(j+1)), derivative by central differences
        let h = 1e-5;
        for j in 0..6 {
            for &x in &[-2.1, 0.4, 1.7, 3.0] {
                let v = |y: f64| ho_eigenfunctions(j, y).unwrap().1;
                let d = (v(x + h) - v(x - h)) / (2.0 * h);
                let next = (x * v(x) - d) / (2.0 * (j as f64 + 1.0)).sqrt();
                let got = ho_eigenfunctions(j + 1, x).unwrap().1;
                assert!((next - got).abs() < 1e-6 * (1.0 + got.abs()), "j={j} x={x}");
            }
        }
    }

    #[test]
    fn irregular_window() {
        assert!(matches!(
            ho_eigenfunctions(0, 25.0),
            Err(Error::SeriesWindow { .. })
        ));
    }

    #[test]
    fn laguerre_values() {
        assert_eq!(laguerre(0, 2.0, 3.0), 1.0);
        assert!((laguerre(1, 0.5, 2.0) - (1.5 - 2.0)).abs() < 1e-15);
        // L_2^{(1)}(x) = (x² − 6x + 6)/2
        let x = 0.8;
        assert!((laguerre(2, 1.0, x) - (x * x - 6.0 * x + 6.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn laguerre_2d_values() {
        let z = Complex64::new(0.3, 0.4);
        assert_eq!(laguerre_2d(0, 0, z), Complex64::new(1.0, 0.0));
        let l01 = laguerre_2d(0, 1, z);
        assert!((l01 - z.conj()).norm() < 1e-15);
        for (k, l) in [(2, 1), (3, 2), (1, 4)] {
            let a = laguerre_2d(k, l, z);
            let b = laguerre_2d(l, k, z).conj();
            assert!((a - b).norm() < 1e-13);
        }
    }
}
