//! Gaussian elements and their action on truncated Fock space.
//!
//! Passive convention: Û a_i† Û† = Σ_j U_{ji} a_j†, so the one-photon sector of
//! the lift is U itself and Û|α⃗⟩ = |Uα⃗⟩. Displacement and squeezing are
//! exponentiated in an enlarged space and projected back, so probability
//! pushed above the cutoff shows up as truncation leak.

use crate::error::{invalid, Error, Result};
use crate::fock::{dim_of, flat_index, multi_index, strides, CMatrix, DensityOp};
use crate::special::binomial;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn annihilation(c: usize) -> CMatrix {
    let mut a = CMatrix::zeros(c, c);
    for n in 1..c {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

fn project(big: &CMatrix, c: usize) -> CMatrix {
    big.view((0, 0), (c, c)).into_owned()
}

/// Extra dimensions used when exponentiating D(α).
pub fn displacement_padding(alpha: Complex64) -> usize {
    (8.0 * alpha.norm_sqr() + 10.0).ceil() as usize + 10
}

/// D(α) = exp(α a† − ᾱ a) restricted to the first `cutoff` Fock states.
pub fn displacement_op(alpha: Complex64, cutoff: usize) -> Result<CMatrix> {
    if cutoff < 1 {
        return invalid("cutoff must be at least 1");
    }
    if alpha == ZERO {
        return Ok(CMatrix::identity(cutoff, cutoff));
    }
    let big = cutoff + displacement_padding(alpha);
    let a = annihilation(big);
    let g = a.adjoint() * alpha - &a * alpha.conj();
    Ok(project(&g.exp(), cutoff))
}

/// S(ξ) = exp(½(ξ̄ a² − ξ a†²)) restricted to the first `cutoff` Fock states.
///
/// Sign convention: for real r > 0, S(r)|0⟩ has ⟨2|S(r)|0⟩ < 0 (position
/// squeezed), and ⟨0|S(r)|0⟩ = 1/√cosh r.
pub fn squeezing_op(xi: Complex64, cutoff: usize) -> Result<CMatrix> {
    if cutoff < 1 {
        return invalid("cutoff must be at least 1");
    }
    if xi == ZERO {
        return Ok(CMatrix::identity(cutoff, cutoff));
    }
    let big = cutoff + squeezing_padding(xi, cutoff);
    let a = annihilation(big);
    let a2 = &a * &a;
    let g = (&a2 * xi.conj() - a2.adjoint() * xi) * Complex64::new(0.5, 0.0);
    Ok(project(&g.exp(), cutoff))
}

pub fn squeezing_padding(xi: Complex64, cutoff: usize) -> usize {
    30 + cutoff + (40.0 * xi.norm()).ceil() as usize
}

/// Permanent by Ryser's formula with Gray-code updates.
pub fn permanent(a: &CMatrix) -> Complex64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return ONE;
    }
    let mut row_sums = vec![ZERO; n];
    let mut total = ZERO;
    let mut gray: u64 = 0;
    for k in 1..(1u64 << n) {
        let next = k ^ (k >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let add = next & (1 << flipped) != 0;
        for i in 0..n {
            if add {
                row_sums[i] += a[(i, flipped)];
            } else {
                row_sums[i] -= a[(i, flipped)];
            }
        }
        gray = next;
        let prod = row_sums.iter().fold(ONE, |p, s| p * s);
        if next.count_ones() % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
    }
    if n % 2 == 1 { -total } else { total }
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - CMatrix::identity(n, n)).camax()
}

fn expand(occ: &[usize]) -> Vec<usize> {
    occ.iter()
        .enumerate()
        .flat_map(|(i, &k)| std::iter::repeat_n(i, k))
        .collect()
}

/// ⟨out|Û|inp⟩ for occupation patterns of equal total photon number.
pub fn passive_amplitude(u: &CMatrix, out: &[usize], inp: &[usize]) -> Complex64 {
    let (r, c) = (expand(out), expand(inp));
    if r.len() != c.len() {
        return ZERO;
    }
    let sub = CMatrix::from_fn(r.len(), c.len(), |i, j| u[(r[i], c[j])]);
    let norm: f64 = out
        .iter()
        .chain(inp)
        .map(|&k| crate::special::factorial(k))
        .product();
    permanent(&sub) / norm.sqrt()
}

/// Fock-space matrix of the interferometer U, sector by sector.
pub fn passive_fock_lift(u: &CMatrix, cutoffs: &[usize]) -> Result<CMatrix> {
    passive_fock_lift_upto(u, cutoffs, usize::MAX)
}

/// As [`passive_fock_lift`], filling only sectors with at most `max_photons`
/// photons (the rest of the matrix is zero).
pub fn passive_fock_lift_upto(u: &CMatrix, cutoffs: &[usize], max_photons: usize) -> Result<CMatrix> {
    let m = cutoffs.len();
    if u.nrows() != m || u.ncols() != m {
        return Err(Error::Dimension("U must be m x m".into()));
    }
    let def = unitarity_defect(u);
    if def > 1e-10 {
        return invalid(format!("U not unitary (defect {def:.2e})"));
    }
    let d = dim_of(cutoffs);
    let mut sectors: std::collections::BTreeMap<usize, Vec<(usize, Vec<usize>)>> =
        Default::default();
    for i in 0..d {
        let n = multi_index(cutoffs, i);
        let total: usize = n.iter().sum();
        if total <= max_photons {
            sectors.entry(total).or_default().push((i, n));
        }
    }
    let mut out = CMatrix::zeros(d, d);
    for states in sectors.values() {
        for (i, ni) in states {
            for (j, nj) in states {
                out[(*i, *j)] = passive_amplitude(u, ni, nj);
            }
        }
    }
    Ok(out)
}

/// Real rotation on modes (i, j): [[cos θ, sin θ], [−sin θ, cos θ]]; transmittance cos²θ.
pub fn beamsplitter(theta: f64, modes: (usize, usize), m: usize) -> Result<CMatrix> {
    let (i, j) = modes;
    if i == j {
        return Err(Error::ModeIndex("beamsplitter needs two distinct modes".into()));
    }
    if i >= m || j >= m {
        return Err(Error::ModeIndex(format!("modes ({i}, {j}) out of range for {m}")));
    }
    let mut u = CMatrix::identity(m, m);
    let (c, s) = (theta.cos(), theta.sin());
    u[(i, i)] = Complex64::new(c, 0.0);
    u[(i, j)] = Complex64::new(s, 0.0);
    u[(j, i)] = Complex64::new(-s, 0.0);
    u[(j, j)] = Complex64::new(c, 0.0);
    Ok(u)
}

/// Beamsplitter angle for a given transmittance.
pub fn theta_from_transmittance(eta_bs: f64) -> f64 {
    eta_bs.clamp(0.0, 1.0).sqrt().acos()
}

/// ρ ↦ O ρ O† with O acting on a single mode.
pub fn apply_local(rho: &DensityOp, mode: usize, op: &CMatrix) -> Result<DensityOp> {
    let cut = rho.cutoffs();
    if mode >= cut.len() {
        return Err(Error::ModeIndex(format!("mode {mode} out of range")));
    }
    let c = cut[mode];
    if op.nrows() != c || op.ncols() != c {
        return Err(Error::Dimension("local operator size".into()));
    }
    let st = strides(cut)[mode];
    let d = rho.dim();
    let digit = |i: usize| (i / st) % c;
    let r = rho.matrix();
    // left multiply
    let mut left = CMatrix::zeros(d, d);
    for i in 0..d {
        let a = digit(i);
        let base = i - a * st;
        for b in 0..c {
            let o = op[(a, b)];
            if o == ZERO {
                continue;
            }
            let src = base + b * st;
            for j in 0..d {
                left[(i, j)] += o * r[(src, j)];
            }
        }
    }
    // right multiply by O†
    let mut out = CMatrix::zeros(d, d);
    for j in 0..d {
        let a = digit(j);
        let base = j - a * st;
        for b in 0..c {
            let o = op[(a, b)].conj();
            if o == ZERO {
                continue;
            }
            let src = base + b * st;
            for i in 0..d {
                out[(i, j)] += left[(i, src)] * o;
            }
        }
    }
    Ok(DensityOp::from_parts_unchecked(cut.to_vec(), out))
}

/// Pure-loss channel with per-mode transmissivity η_i, by Kraus sum.
pub fn loss_channel(rho: &DensityOp, eta: &[f64]) -> Result<DensityOp> {
    let cut = rho.cutoffs().to_vec();
    if eta.len() != cut.len() {
        return Err(Error::Dimension("one η per mode".into()));
    }
    for &e in eta {
        if !(e > 0.0 && e <= 1.0) {
            return invalid(format!("η = {e} outside (0, 1]"));
        }
    }
    let st = strides(&cut);
    let d = rho.dim();
    let mut cur = rho.matrix().clone();
    for (mode, &e) in eta.iter().enumerate() {
        if e == 1.0 {
            continue;
        }
        let c = cut[mode];
        // kappa[k][n] = √C(n,k) η^{(n−k)/2} (1−η)^{k/2}
        let kappa: Vec<Vec<f64>> = (0..c)
            .map(|k| {
                (0..c)
                    .map(|n| {
                        if n < k {
                            0.0
                        } else {
                            (binomial(n, k) * e.powi((n - k) as i32) * (1.0 - e).powi(k as i32))
                                .sqrt()
                        }
                    })
                    .collect()
            })
            .collect();
        let s = st[mode];
        let mut next = CMatrix::zeros(d, d);
        for i in 0..d {
            let a = (i / s) % c;
            for j in 0..d {
                let b = (j / s) % c;
                let mut acc = ZERO;
                for k in 0..c - a.max(b) {
                    acc += cur[(i + k * s, j + k * s)] * (kappa[k][a + k] * kappa[k][b + k]);
                }
                next[(i, j)] = acc;
            }
        }
        cur = next;
    }
    Ok(DensityOp::from_parts_unchecked(cut, cur))
}

/// V = S(ξ) D(β) Û together with detector-side loss η (applied first).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCircuit {
    pub beta: Vec<Complex64>,
    pub xi: Vec<Complex64>,
    pub u: CMatrix,
    pub eta: Vec<f64>,
}

impl GaussianCircuit {
    pub fn identity(m: usize) -> GaussianCircuit {
        GaussianCircuit {
            beta: vec![ZERO; m],
            xi: vec![ZERO; m],
            u: CMatrix::identity(m, m),
            eta: vec![1.0; m],
        }
    }

    pub fn num_modes(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.beta.len();
        if m == 0 || self.xi.len() != m || self.eta.len() != m {
            return Err(Error::Dimension("beta, xi and eta must have num_modes entries".into()));
        }
        if self.u.nrows() != m || self.u.ncols() != m {
            return Err(Error::Dimension("U must be m x m".into()));
        }
        let def = unitarity_defect(&self.u);
        if def > 1e-10 {
            return invalid(format!("U not unitary (defect {def:.2e})"));
        }
        if self.eta.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return invalid("η must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.beta.iter().chain(&self.xi).all(|c| *c == ZERO)
            && self.eta.iter().all(|&e| e == 1.0)
            && self.u == CMatrix::identity(self.u.nrows(), self.u.ncols())
    }

    /// Full Fock-space matrix of V on the given cutoffs (no loss).
    pub fn unitary(&self, cutoffs: &[usize]) -> Result<CMatrix> {
        self.validate()?;
        let mut v = passive_fock_lift(&self.u, cutoffs)?;
        for (mode, b) in self.beta.iter().enumerate() {
            if *b != ZERO {
                v = kron_local(&displacement_op(*b, cutoffs[mode])?, mode, cutoffs) * v;
            }
        }
        for (mode, x) in self.xi.iter().enumerate() {
            if *x != ZERO {
                v = kron_local(&squeezing_op(*x, cutoffs[mode])?, mode, cutoffs) * v;
            }
        }
        Ok(v)
    }
}

/// Embeds a single-mode operator into the full space.
pub fn kron_local(op: &CMatrix, mode: usize, cutoffs: &[usize]) -> CMatrix {
    let mut full = CMatrix::identity(1, 1);
    for (i, &c) in cutoffs.iter().enumerate() {
        let f = if i == mode { op.clone() } else { CMatrix::identity(c, c) };
        full = full.kronecker(&f);
    }
    full
}

/// ρ ↦ V L_η(ρ) V†. Errors when the truncation leak exceeds `leak_bound`.
pub fn apply_circuit(rho: &DensityOp, circuit: &GaussianCircuit, leak_bound: f64) -> Result<DensityOp> {
    circuit.validate()?;
    if circuit.num_modes() != rho.num_modes() {
        return Err(Error::Dimension("circuit and state mode counts differ".into()));
    }
    let cut = rho.cutoffs().to_vec();
    let mut out = loss_channel(rho, &circuit.eta)?;
    if circuit.u != CMatrix::identity(cut.len(), cut.len()) {
        out = out.conjugate(&passive_fock_lift(&circuit.u, &cut)?);
    }
    for (mode, b) in circuit.beta.iter().enumerate() {
        if *b != ZERO {
            out = apply_local(&out, mode, &displacement_op(*b, cut[mode])?)?;
        }
    }
    for (mode, x) in circuit.xi.iter().enumerate() {
        if *x != ZERO {
            out = apply_local(&out, mode, &squeezing_op(*x, cut[mode])?)?;
        }
    }
    let leak = rho.trace() - out.trace();
    if leak > leak_bound {
        return Err(Error::Truncation { leak, bound: leak_bound });
    }
    Ok(out)
}

fn complex_gaussian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-random m×m unitary (QR of a Ginibre matrix with phase correction).
pub fn random_passive(m: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qr = complex_gaussian(m, &mut rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_fn(m, m, |i, j| {
        if i == j && r[(i, i)].norm() > 0.0 {
            r[(i, i)] / r[(i, i)].norm()
        } else if i == j {
            ONE
        } else {
            ZERO
        }
    });
    q * phases
}

/// exp(i ε H) with H a seeded random Hermitian matrix of unit spectral norm.
pub fn random_near_identity(m: usize, strength: f64, seed: u64) -> CMatrix {
    if strength == 0.0 {
        return CMatrix::identity(m, m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = complex_gaussian(m, &mut rng);
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let vecs = &eig.eigenvectors;
    let diag = CMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex64::from_polar(1.0, strength * eig.eigenvalues[i] / scale)
        } else {
            ZERO
        }
    });
    vecs * diag * vecs.adjoint()
}

/// Haar-random real orthogonal matrix.
pub fn random_orthogonal(m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }
        } else {
            0.0
        }
    });
    q * signs
}

/// Real orthogonal block (S_O)_1 of a passive orthogonal-symplectic map.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalSymplectic {
    block: DMatrix<f64>,
}

impl OrthogonalSymplectic {
    pub fn new(block: DMatrix<f64>) -> Result<OrthogonalSymplectic> {
        let m = block.nrows();
        if block.ncols() != m {
            return Err(Error::Dimension("block must be square".into()));
        }
        let def = (&block * block.transpose() - DMatrix::identity(m, m)).amax();
        if def > 1e-10 {
            return invalid(format!("block not orthogonal (defect {def:.2e})"));
        }
        Ok(OrthogonalSymplectic { block })
    }

    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    /// The same map as a passive unitary on mode operators.
    pub fn as_unitary(&self) -> CMatrix {
        self.block.map(|x| Complex64::new(x, 0.0))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonScalar {
    Real(f64),
    Pair([f64; 2]),
}

impl JsonScalar {
    fn value(&self) -> Complex64 {
        match self {
            JsonScalar::Real(x) => Complex64::new(*x, 0.0),
            JsonScalar::Pair([a, b]) => Complex64::new(*a, *b),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CircuitJson {
    beta: Vec<[f64; 2]>,
    xi: Vec<[f64; 2]>,
    #[serde(rename = "U")]
    u: Vec<Vec<JsonScalar>>,
    eta: Vec<f64>,
}

impl Serialize for GaussianCircuit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pair = |c: &Complex64| [c.re, c.im];
        CircuitJson {
            beta: self.beta.iter().map(pair).collect(),
            xi: self.xi.iter().map(pair).collect(),
            u: (0..self.u.nrows())
                .map(|i| (0..self.u.ncols()).map(|j| JsonScalar::Pair(pair(&self.u[(i, j)]))).collect())
                .collect(),
            eta: self.eta.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianCircuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = CircuitJson::deserialize(d)?;
        let m = j.u.len();
        if j.u.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("U must be square"));
        }
        let u = CMatrix::from_fn(m, m, |i, k| j.u[i][k].value());
        let c = GaussianCircuit {
            beta: j.beta.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
            xi: j.xi.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
            u,
            eta: j.eta,
        };
        c.validate().map_err(D::Error::custom)?;
        Ok(c)
    }
}

/// Index of the multi-index n in a basis with the given cutoffs, if representable.
pub fn checked_index(cutoffs: &[usize], n: &[usize]) -> Option<usize> {
    n.iter()
        .zip(cutoffs)
        .all(|(k, c)| k < c)
        .then(|| flat_index(cutoffs, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::fock::{density_from_pure, random_density, CoreState};

    fn naive_permanent(a: &CMatrix) -> Complex64 {
        fn rec(a: &CMatrix, row: usize, used: &mut Vec<bool>) -> Complex64 {
            if row == a.nrows() {
                return ONE;
            }
            let mut s = ZERO;
            for j in 0..a.ncols() {
                if !used[j] {
                    used[j] = true;
                    s += a[(row, j)] * rec(a, row + 1, used);
                    used[j] = false;
                }
            }
            s
        }
        rec(a, 0, &mut vec![false; a.ncols()])
    }

    #[test]
    fn ryser_matches_naive() {
        for n in 1..6 {
            let a = random_passive(n, n as u64) * c64(1.3, -0.2);
            assert!((permanent(&a) - naive_permanent(&a)).norm() < 1e-12);
        }
    }

    #[test]
    fn displacement_examples() {
        assert_eq!(displacement_op(ZERO, 4).unwrap(), CMatrix::identity(4, 4));
        let d = displacement_op(c64(1.0, 0.0), 25).unwrap();
        assert!((d[(0, 0)].re - (-0.5f64).exp()).abs() < 1e-10);
        let alpha = c64(0.6, -0.8);
        let c = (8.0 * alpha.norm_sqr() + 10.0) as usize;
        let d = displacement_op(alpha, c).unwrap();
        let norm: f64 = d.column(0).iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-8);
    }

    #[test]
    fn squeezing_examples() {
        assert_eq!(squeezing_op(ZERO, 3).unwrap(), CMatrix::identity(3, 3));
        let s = squeezing_op(c64(0.5, 0.0), 30).unwrap();
        assert!((s[(0, 0)].re - 1.0 / 0.5f64.cosh().sqrt()).abs() < 1e-6);
        for n in (1..30).step_by(2) {
            assert!(s[(n, 0)].norm() < 1e-14);
        }
        assert!(s[(2, 0)].re < 0.0);
    }

    #[test]
    fn beamsplitter_examples() {
        assert_eq!(beamsplitter(0.0, (0, 1), 2).unwrap(), CMatrix::identity(2, 2));
        let sw = beamsplitter(std::f64::consts::FRAC_PI_2, (0, 1), 2).unwrap();
        assert!((sw[(0, 1)].re - 1.0).abs() < 1e-15 && (sw[(1, 0)].re + 1.0).abs() < 1e-15);
        assert!((theta_from_transmittance(0.7) - 0.579_640).abs() < 1e-6);
        assert!(beamsplitter(0.3, (1, 1), 2).is_err());
    }

    #[test]
    fn lift_examples() {
        let id = passive_fock_lift(&CMatrix::identity(2, 2), &[3, 3]).unwrap();
        assert_eq!(id, CMatrix::identity(9, 9));
        let bs = beamsplitter(std::f64::consts::FRAC_PI_4, (0, 1), 2).unwrap();
        let lift = passive_fock_lift(&bs, &[2, 2]).unwrap();
        let inp = flat_index(&[2, 2], &[1, 0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((lift[(flat_index(&[2, 2], &[1, 0]), inp)].norm() - h).abs() < 1e-14);
        assert!((lift[(flat_index(&[2, 2], &[0, 1]), inp)].norm() - h).abs() < 1e-14);
        let l3 = passive_fock_lift(&random_passive(2, 5), &[3, 3]).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let (a, b) = (multi_index(&[3, 3], i), multi_index(&[3, 3], j));
                if a.iter().sum::<usize>() != b.iter().sum::<usize>() {
                    assert_eq!(l3[(i, j)], ZERO);
                }
            }
        }
        assert!(passive_fock_lift(&(CMatrix::identity(2, 2) * c64(2.0, 0.0)), &[2, 2]).is_err());
    }

    #[test]
    fn lift_composes() {
        let (u1, u2) = (random_passive(2, 1), random_passive(2, 2));
        let cut = [3, 3];
        let lhs = passive_fock_lift(&(&u1 * &u2), &cut).unwrap();
        let rhs = passive_fock_lift(&u1, &cut).unwrap() * passive_fock_lift(&u2, &cut).unwrap();
        // sectors with total ≥ 3 are cut off and do not compose exactly; compare n ≤ 2
        for i in 0..9 {
            for j in 0..9 {
                if multi_index(&cut, i).iter().sum::<usize>() <= 2 {
                    assert!((lhs[(i, j)] - rhs[(i, j)]).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn hong_ou_mandel() {
        let bs = beamsplitter(std::f64::consts::FRAC_PI_4, (0, 1), 2).unwrap();
        let mut circ = GaussianCircuit::identity(2);
        circ.u = bs;
        let rho = density_from_pure(&CoreState::fock(&[1, 1])).resize(&[3, 3]).unwrap();
        let out = apply_circuit(&rho, &circ, 1e-12).unwrap();
        let i11 = flat_index(&[3, 3], &[1, 1]);
        assert!(out.matrix()[(i11, i11)].norm() < 1e-14);
        let i20 = flat_index(&[3, 3], &[2, 0]);
        assert!((out.matrix()[(i20, i20)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn loss_examples() {
        let one = density_from_pure(&CoreState::fock(&[1]));
        let out = loss_channel(&one, &[0.7]).unwrap();
        assert!((out.matrix()[(1, 1)].re - 0.7).abs() < 1e-12);
        assert!((out.matrix()[(0, 0)].re - 0.3).abs() < 1e-12);
        let two = density_from_pure(&CoreState::fock(&[2]));
        let out = loss_channel(&two, &[0.5]).unwrap();
        let nbar: f64 = (0..3).map(|n| n as f64 * out.matrix()[(n, n)].re).sum();
        assert!((nbar - 1.0).abs() < 1e-12);
        assert_eq!(loss_channel(&two, &[1.0]).unwrap(), two);
        assert!(loss_channel(&two, &[0.0]).is_err());
        assert!(loss_channel(&two, &[1.2]).is_err());
    }

    #[test]
    fn loss_composes() {
        let rho = random_density(&[3, 2], 3, 8);
        let a = loss_channel(&loss_channel(&rho, &[0.8, 0.6]).unwrap(), &[0.5, 0.9]).unwrap();
        let b = loss_channel(&rho, &[0.4, 0.54]).unwrap();
        assert!((a.matrix() - b.matrix()).camax() < 1e-10);
    }

    #[test]
    fn random_unitaries() {
        let u = random_passive(6, 11);
        assert!(unitarity_defect(&u) < 1e-10);
        assert_eq!(u, random_passive(6, 11));
        assert_eq!(random_near_identity(4, 0.0, 3), CMatrix::identity(4, 4));
        let v = random_near_identity(4, 0.1, 3);
        assert!(unitarity_defect(&v) < 1e-10);
        assert!((v - CMatrix::identity(4, 4)).camax() < 0.2);
        let o = random_orthogonal(3, 2);
        assert!(OrthogonalSymplectic::new(o).is_ok());
        assert!(OrthogonalSymplectic::new(DMatrix::from_element(2, 2, 1.0)).is_err());
    }

    #[test]
    fn vacuum_passive_invariance() {
        let mut c = GaussianCircuit::identity(2);
        c.u = random_passive(2, 4);
        let vac = density_from_pure(&CoreState::vacuum(2)).resize(&[3, 3]).unwrap();
        let out = apply_circuit(&vac, &c, 1e-12).unwrap();
        assert!((out.matrix() - vac.matrix()).camax() < 1e-14);
        let ident = apply_circuit(&vac, &GaussianCircuit::identity(2), 0.0).unwrap();
        assert_eq!(ident, vac);
    }

    #[test]
    fn circuit_json_round_trip() {
        let mut c = GaussianCircuit::identity(2);
        c.u = random_passive(2, 7);
        c.beta[0] = c64(0.3, -0.1);
        c.xi[1] = c64(0.05, 0.0);
        c.eta = vec![0.9, 1.0];
        let s = serde_json::to_string(&c).unwrap();
        let back: GaussianCircuit = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn truncation_leak_reported() {
        let mut c = GaussianCircuit::identity(1);
        c.beta[0] = c64(2.0, 0.0);
        let vac = density_from_pure(&CoreState::vacuum(1)).resize(&[4]).unwrap();
        match apply_circuit(&vac, &c, 1e-6) {
            Err(Error::Truncation { leak, .. }) => assert!(leak > 0.1),
            other => panic!("expected leak error, got {other:?}"),
        }
    }
}
