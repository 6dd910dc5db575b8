//! Truncated multimode Fock space.
//!
//! Basis ordering is row-major over the multi-index (n_0, ..., n_{m-1}) with
//! mode 0 varying slowest: flat = Σ n_i · stride_i, stride_{m-1} = 1.

use crate::error::{invalid, Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn dim_of(cutoffs: &[usize]) -> usize {
    cutoffs.iter().product()
}

pub fn strides(cutoffs: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cutoffs.len()];
    for i in (0..cutoffs.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cutoffs[i + 1];
    }
    s
}

pub fn flat_index(cutoffs: &[usize], n: &[usize]) -> usize {
    let mut idx = 0;
    for (c, &k) in cutoffs.iter().zip(n) {
        debug_assert!(k < *c);
        idx = idx * c + k;
    }
    idx
}

pub fn multi_index(cutoffs: &[usize], mut flat: usize) -> Vec<usize> {
    let mut n = vec![0; cutoffs.len()];
    for i in (0..cutoffs.len()).rev() {
        n[i] = flat % cutoffs[i];
        flat /= cutoffs[i];
    }
    n
}

/// Pure state with finite Fock support.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreState {
    cutoffs: Vec<usize>,
    coeffs: Vec<(Vec<usize>, Complex64)>,
}

/// Builds a normalized core state; cutoffs are 1 + the largest index per mode.
pub fn make_core_state<I>(entries: I) -> Result<CoreState>
where
    I: IntoIterator<Item = (Vec<usize>, Complex64)>,
{
    let mut map: std::collections::BTreeMap<Vec<usize>, Complex64> = Default::default();
    let mut modes = None;
    for (idx, c) in entries {
        if idx.is_empty() {
            return invalid("multi-index must have at least one mode");
        }
        match modes {
            None => modes = Some(idx.len()),
            Some(m) if m != idx.len() => {
                return Err(Error::Dimension("inconsistent multi-index lengths".into()))
            }
            _ => {}
        }
        if !c.re.is_finite() || !c.im.is_finite() {
            return invalid("non-finite amplitude");
        }
        *map.entry(idx).or_insert(ZERO) += c;
    }
    let norm: f64 = map.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::NullState);
    }
    let m = modes.unwrap();
    let mut cutoffs = vec![1; m];
    let coeffs: Vec<_> = map
        .into_iter()
        .filter(|(_, c)| *c != ZERO)
        .map(|(idx, c)| {
            for (cut, &k) in cutoffs.iter_mut().zip(&idx) {
                *cut = (*cut).max(k + 1);
            }
            (idx, c / norm)
        })
        .collect();
    Ok(CoreState { cutoffs, coeffs })
}

impl CoreState {
    pub fn fock(n: &[usize]) -> CoreState {
        make_core_state([(n.to_vec(), Complex64::new(1.0, 0.0))]).expect("fock state")
    }

    pub fn vacuum(m: usize) -> CoreState {
        Self::fock(&vec![0; m])
    }

    /// Single-mode state from amplitudes c_0, c_1, ...
    pub fn single_mode(amps: &[Complex64]) -> Result<CoreState> {
        make_core_state(amps.iter().enumerate().map(|(n, &c)| (vec![n], c)))
    }

    /// Dense amplitude vector, normalized without rescaling.
    pub fn from_dense(cutoffs: &[usize], amps: &[Complex64]) -> Result<CoreState> {
        if amps.len() != dim_of(cutoffs) {
            return Err(Error::Dimension("amplitude vector length".into()));
        }
        let st = make_core_state(
            amps.iter()
                .enumerate()
                .filter(|(_, c)| c.norm_sqr() > 0.0)
                .map(|(i, &c)| (multi_index(cutoffs, i), c)),
        )?;
        st.with_cutoffs(cutoffs)
    }

    pub fn num_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn coeffs(&self) -> &[(Vec<usize>, Complex64)] {
        &self.coeffs
    }

    pub fn amplitude(&self, n: &[usize]) -> Complex64 {
        self.coeffs
            .iter()
            .find(|(k, _)| k.as_slice() == n)
            .map(|p| p.1)
            .unwrap_or(ZERO)
    }

    /// Largest cutoff across modes (the support size C used by the homodyne range).
    pub fn max_cutoff(&self) -> usize {
        *self.cutoffs.iter().max().unwrap()
    }

    /// Same state with larger (or equal) per-mode cutoffs.
    pub fn with_cutoffs(&self, cutoffs: &[usize]) -> Result<CoreState> {
        if cutoffs.len() != self.num_modes() {
            return Err(Error::Dimension("cutoff count".into()));
        }
        if cutoffs.iter().zip(&self.cutoffs).any(|(a, b)| a < b) {
            return invalid("cutoffs smaller than the support");
        }
        Ok(CoreState {
            cutoffs: cutoffs.to_vec(),
            coeffs: self.coeffs.clone(),
        })
    }

    /// Dense vector over the given cutoffs; amplitudes outside are dropped.
    pub fn to_dense(&self, cutoffs: &[usize]) -> Vec<Complex64> {
        let mut v = vec![ZERO; dim_of(cutoffs)];
        for (idx, c) in &self.coeffs {
            if idx.iter().zip(cutoffs).all(|(k, cut)| k < cut) {
                v[flat_index(cutoffs, idx)] = *c;
            }
        }
        v
    }

    pub fn tensor(&self, other: &CoreState) -> CoreState {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() * other.coeffs.len());
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                let mut idx = a.clone();
                idx.extend_from_slice(b);
                coeffs.push((idx, ca * cb));
            }
        }
        coeffs.sort_by(|x, y| x.0.cmp(&y.0));
        let mut cutoffs = self.cutoffs.clone();
        cutoffs.extend_from_slice(&other.cutoffs);
        CoreState { cutoffs, coeffs }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.1.norm_sqr()).sum()
    }
}

/// Truncated multimode density operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    cutoffs: Vec<usize>,
    matrix: CMatrix,
}

impl DensityOp {
    /// Wraps a matrix; checks shape, Hermiticity (1e-10) and trace ≤ 1 + 1e-10.
    pub fn new(cutoffs: Vec<usize>, matrix: CMatrix) -> Result<DensityOp> {
        let d = dim_of(&cutoffs);
        if cutoffs.is_empty() || cutoffs.contains(&0) {
            return invalid("cutoffs must be positive");
        }
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, basis has {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm = (&matrix - matrix.adjoint()).camax();
        if herm > 1e-10 {
            return invalid(format!("matrix not Hermitian (deviation {herm:.2e})"));
        }
        let tr = matrix.trace().re;
        if tr > 1.0 + 1e-10 || tr < 0.0 {
            return invalid(format!("trace {tr} outside [0, 1]"));
        }
        Ok(DensityOp { cutoffs, matrix })
    }

    pub(crate) fn from_parts_unchecked(cutoffs: Vec<usize>, matrix: CMatrix) -> DensityOp {
        DensityOp { cutoffs, matrix }
    }

    pub fn from_vector(cutoffs: &[usize], psi: &[Complex64]) -> Result<DensityOp> {
        let d = dim_of(cutoffs);
        if psi.len() != d {
            return Err(Error::Dimension("state vector length".into()));
        }
        let mut m = CMatrix::zeros(d, d);
        for i in 0..d {
            if psi[i] == ZERO {
                continue;
            }
            for j in 0..d {
                m[(i, j)] = psi[i] * psi[j].conj();
            }
        }
        DensityOp::new(cutoffs.to_vec(), m)
    }

    pub fn num_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Probability lost above the cutoffs, 1 − Tr ρ.
    pub fn truncation_leak(&self) -> f64 {
        (1.0 - self.trace()).max(0.0)
    }

    pub fn purity(&self) -> f64 {
        let mut s = 0.0;
        for v in self.matrix.iter() {
            s += v.norm_sqr();
        }
        s
    }

    /// Smallest eigenvalue (the lazy positivity check).
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = self.matrix.clone().symmetric_eigen();
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn check_psd(&self, tol: f64) -> Result<()> {
        let e = self.min_eigenvalue();
        if e < -tol {
            return invalid(format!("not positive semidefinite (min eigenvalue {e:.3e})"));
        }
        Ok(())
    }

    /// Eigen-decomposition ρ = Σ p_i |ψ_i⟩⟨ψ_i|, dropping weights ≤ `floor`.
    pub fn mixture(&self, floor: f64) -> Vec<(f64, Vec<Complex64>)> {
        let eig = self.matrix.clone().symmetric_eigen();
        let mut out = Vec::new();
        for (i, &p) in eig.eigenvalues.iter().enumerate() {
            if p > floor {
                out.push((p, eig.eigenvectors.column(i).iter().cloned().collect()));
            }
        }
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }

    /// Pure-state expectation ⟨ψ|ρ|ψ⟩ for a dense vector over this basis.
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            if psi[i] == ZERO {
                continue;
            }
            let mut row = ZERO;
            for j in 0..d {
                row += self.matrix[(i, j)] * psi[j];
            }
            acc += psi[i].conj() * row;
        }
        acc
    }

    /// Reduced state on `keep` (output modes in the given order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOp> {
        let m = self.num_modes();
        if keep.is_empty() {
            return invalid("keep must be nonempty");
        }
        let mut seen = vec![false; m];
        for &k in keep {
            if k >= m {
                return Err(Error::ModeIndex(format!("mode {k} out of range for {m} modes")));
            }
            if seen[k] {
                return Err(Error::ModeIndex(format!("duplicate mode {k}")));
            }
            seen[k] = true;
        }
        let traced: Vec<usize> = (0..m).filter(|i| !seen[*i]).collect();
        let kc: Vec<usize> = keep.iter().map(|&i| self.cutoffs[i]).collect();
        let tc: Vec<usize> = traced.iter().map(|&i| self.cutoffs[i]).collect();
        let (dk, dt) = (dim_of(&kc), dim_of(&tc));
        // full[a][t]: flat index of the joint basis state (keep a, traced t)
        let mut full = vec![0usize; dk * dt];
        let mut n = vec![0usize; m];
        for a in 0..dk {
            let na = multi_index(&kc, a);
            for t in 0..dt {
                let nt = multi_index(&tc, t);
                for (p, &i) in keep.iter().enumerate() {
                    n[i] = na[p];
                }
                for (p, &i) in traced.iter().enumerate() {
                    n[i] = nt[p];
                }
                full[a * dt + t] = flat_index(&self.cutoffs, &n);
            }
        }
        let mut out = CMatrix::zeros(dk, dk);
        for a in 0..dk {
            for b in 0..dk {
                let mut s = ZERO;
                for t in 0..dt {
                    s += self.matrix[(full[a * dt + t], full[b * dt + t])];
                }
                out[(a, b)] = s;
            }
        }
        Ok(DensityOp::from_parts_unchecked(kc, out))
    }

    /// Re-expresses ρ over new cutoffs: zero-padding, and dropping entries
    /// above smaller cutoffs (which shows up as truncation leak).
    pub fn resize(&self, cutoffs: &[usize]) -> Result<DensityOp> {
        if cutoffs.len() != self.num_modes() {
            return Err(Error::Dimension("cutoff count".into()));
        }
        let d = dim_of(cutoffs);
        let map: Vec<Option<usize>> = (0..self.dim())
            .map(|i| {
                let n = multi_index(&self.cutoffs, i);
                n.iter()
                    .zip(cutoffs)
                    .all(|(k, c)| k < c)
                    .then(|| flat_index(cutoffs, &n))
            })
            .collect();
        let mut out = CMatrix::zeros(d, d);
        for i in 0..self.dim() {
            let Some(a) = map[i] else { continue };
            for j in 0..self.dim() {
                if let Some(b) = map[j] {
                    out[(a, b)] = self.matrix[(i, j)];
                }
            }
        }
        Ok(DensityOp::from_parts_unchecked(cutoffs.to_vec(), out))
    }

    pub fn tensor(&self, other: &DensityOp) -> DensityOp {
        let mut cutoffs = self.cutoffs.clone();
        cutoffs.extend_from_slice(&other.cutoffs);
        DensityOp::from_parts_unchecked(cutoffs, self.matrix.kronecker(&other.matrix))
    }

    /// Reorders modes: output mode p is input mode `order[p]`.
    pub fn permute_modes(&self, order: &[usize]) -> Result<DensityOp> {
        if order.len() != self.num_modes() {
            return Err(Error::Dimension("permutation length".into()));
        }
        self.partial_trace(order)
    }

    /// Applies a full-space operator: ρ ↦ A ρ A†.
    pub fn conjugate(&self, a: &CMatrix) -> DensityOp {
        DensityOp::from_parts_unchecked(self.cutoffs.clone(), a * &self.matrix * a.adjoint())
    }
}

pub fn density_from_pure(psi: &CoreState) -> DensityOp {
    DensityOp::from_vector(psi.cutoffs(), &psi.to_dense(psi.cutoffs())).expect("pure state")
}

/// ⟨ψ|ρ|ψ⟩ with ψ embedded in ρ's cutoffs (support outside contributes nothing).
pub fn fidelity_pure(rho: &DensityOp, psi: &CoreState) -> Result<f64> {
    if rho.num_modes() != psi.num_modes() {
        return Err(Error::Dimension(format!(
            "state has {} modes, target {}",
            rho.num_modes(),
            psi.num_modes()
        )));
    }
    let f = rho.expectation(&psi.to_dense(rho.cutoffs())).re;
    if !(-1e-9..=1.0 + 1e-9).contains(&f) {
        return invalid(format!("fidelity {f} out of range; state not valid"));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Fuchs-van de Graaf bounds on the trace distance to a pure target.
pub fn trace_distance_bounds(f: f64) -> Result<(f64, f64)> {
    if !(-1e-12..=1.0 + 1e-12).contains(&f) {
        return invalid(format!("fidelity {f} outside [0, 1]"));
    }
    let f = f.clamp(0.0, 1.0);
    Ok((1.0 - f.sqrt(), (1.0 - f).sqrt()))
}

fn gaussian_vec(d: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..d)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect()
}

/// Random pure state with Gaussian amplitudes over the full truncated basis.
pub fn random_core_state(cutoffs: &[usize], seed: u64) -> CoreState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = gaussian_vec(dim_of(cutoffs), &mut rng);
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<_> = v.iter().map(|c| c / n).collect();
    CoreState::from_dense(cutoffs, &v).expect("random state")
}

/// Random density operator of the given rank (Ginibre construction).
pub fn random_density(cutoffs: &[usize], rank: usize, seed: u64) -> DensityOp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dim_of(cutoffs);
    let g = CMatrix::from_vec(d, rank.max(1), gaussian_vec(d * rank.max(1), &mut rng));
    let mut m = &g * g.adjoint();
    let tr = m.trace();
    m /= tr;
    // exact Hermitian symmetrization against roundoff
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    DensityOp::from_parts_unchecked(cutoffs.to_vec(), m)
}

#[derive(Serialize, Deserialize)]
struct FockJson {
    modes: usize,
    cutoffs: Vec<usize>,
    entries: Vec<Vec<Value>>,
}

fn parse_entry(e: &[Value], n_idx: usize) -> std::result::Result<(Vec<usize>, Complex64), String> {
    if e.len() != n_idx + 2 {
        return Err(format!("entry has {} fields, expected {}", e.len(), n_idx + 2));
    }
    let idx = e[..n_idx]
        .iter()
        .map(|v| v.as_u64().map(|k| k as usize).ok_or("index must be a nonnegative integer"))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let re = e[n_idx].as_f64().ok_or("re must be a number")?;
    let im = e[n_idx + 1].as_f64().ok_or("im must be a number")?;
    Ok((idx, Complex64::new(re, im)))
}

fn entry(idx: impl Iterator<Item = usize>, c: Complex64) -> Vec<Value> {
    let mut v: Vec<Value> = idx.map(|k| Value::from(k as u64)).collect();
    v.push(Value::from(c.re));
    v.push(Value::from(c.im));
    v
}

impl Serialize for CoreState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FockJson {
            modes: self.num_modes(),
            cutoffs: self.cutoffs.clone(),
            entries: self
                .coeffs
                .iter()
                .map(|(idx, c)| entry(idx.iter().cloned(), *c))
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoreState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = FockJson::deserialize(d)?;
        if j.cutoffs.len() != j.modes {
            return Err(D::Error::custom("cutoffs length must equal modes"));
        }
        let mut coeffs = Vec::new();
        for e in &j.entries {
            let (idx, c) = parse_entry(e, j.modes).map_err(D::Error::custom)?;
            if idx.iter().zip(&j.cutoffs).any(|(k, c)| k >= c) {
                return Err(D::Error::custom("index exceeds cutoff"));
            }
            coeffs.push((idx, c));
        }
        coeffs.sort_by(|a, b| a.0.cmp(&b.0));
        let st = CoreState { cutoffs: j.cutoffs, coeffs };
        if (st.norm_sqr() - 1.0).abs() > 1e-12 {
            return Err(D::Error::custom("core state must be normalized"));
        }
        Ok(st)
    }
}

impl Serialize for DensityOp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let mut entries = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let c = self.matrix[(i, j)];
                if c != ZERO {
                    let mut idx = multi_index(&self.cutoffs, i);
                    idx.extend(multi_index(&self.cutoffs, j));
                    entries.push(entry(idx.into_iter(), c));
                }
            }
        }
        FockJson {
            modes: self.num_modes(),
            cutoffs: self.cutoffs.clone(),
            entries,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = FockJson::deserialize(d)?;
        if j.cutoffs.len() != j.modes {
            return Err(D::Error::custom("cutoffs length must equal modes"));
        }
        let dim = dim_of(&j.cutoffs);
        let mut m = CMatrix::zeros(dim, dim);
        for e in &j.entries {
            let (idx, c) = parse_entry(e, 2 * j.modes).map_err(D::Error::custom)?;
            let (a, b) = idx.split_at(j.modes);
            let cut = &j.cutoffs;
            if a.iter().chain(b).zip(cut.iter().chain(cut)).any(|(k, c)| k >= c) {
                return Err(D::Error::custom("index exceeds cutoff"));
            }
            m[(flat_index(cut, a), flat_index(cut, b))] = c;
        }
        DensityOp::new(j.cutoffs, m).map_err(D::Error::custom)
    }
}
