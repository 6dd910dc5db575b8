//! Fidelity witnesses built from block fidelities.
//!
//! For a target that factorizes over a partition of the modes into blocks,
//! W = 1 − Σ_B (1 − F(ρ_B, σ_B)) lower-bounds the global fidelity and is
//! itself bounded below by 1 − (#blocks)(1 − F).

use crate::error::{invalid, Error, Result};
use crate::estimators::EstimatorConfig;
use crate::fock::{density_from_pure, make_core_state, CoreState, DensityOp};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Purity below 1 − this marks a target as entangled across a block cut.
const PRODUCT_TOL: f64 = 1e-10;
/// Fidelities may exceed [0, 1] by this much from roundoff.
const FIDELITY_TOL: f64 = 1e-9;

/// Disjoint blocks of modes covering 0..m. Serialized with 1-based labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Partition> {
        let m: usize = blocks.iter().map(Vec::len).sum();
        if blocks.is_empty() || blocks.iter().any(Vec::is_empty) {
            return invalid("partition blocks must be nonempty");
        }
        let mut seen = vec![false; m];
        for &i in blocks.iter().flatten() {
            if i >= m || seen[i] {
                return Err(Error::ModeIndex(format!("blocks {blocks:?} do not partition 0..{m}")));
            }
            seen[i] = true;
        }
        Ok(Partition { blocks })
    }

    /// Consecutive blocks of size k.
    pub fn contiguous(m: usize, k: usize) -> Result<Partition> {
        if k == 0 || m % k != 0 {
            return invalid(format!("block size {k} does not divide {m}"));
        }
        Partition::new((0..m / k).map(|b| (b * k..(b + 1) * k).collect()).collect())
    }

    pub fn singletons(m: usize) -> Partition {
        Partition::contiguous(m, 1).expect("m ≥ 1")
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_modes(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// True when every block of `self` sits inside one block of `coarse`.
    pub fn refines(&self, coarse: &Partition) -> bool {
        self.num_modes() == coarse.num_modes()
            && self.blocks.iter().all(|b| coarse.blocks.iter().any(|c| b.iter().all(|i| c.contains(i))))
    }
}

impl TryFrom<Vec<Vec<usize>>> for Partition {
    type Error = Error;
    fn try_from(labels: Vec<Vec<usize>>) -> Result<Partition> {
        if labels.iter().flatten().any(|&i| i == 0) {
            return Err(Error::ModeIndex("mode labels are 1-based".into()));
        }
        Partition::new(labels.into_iter().map(|b| b.into_iter().map(|i| i - 1).collect()).collect())
    }
}

impl From<Partition> for Vec<Vec<usize>> {
    fn from(p: Partition) -> Self {
        p.blocks.into_iter().map(|b| b.into_iter().map(|i| i + 1).collect()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    /// statistical error λ per block
    pub statistical: Vec<f64>,
    /// bias bound per block
    pub bias: Vec<f64>,
}

impl EpsilonBudget {
    pub fn total(&self) -> f64 {
        self.statistical.iter().sum::<f64>() + self.bias.iter().sum::<f64>()
    }
}

/// Witness value with the data and budgets it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub value: f64,
    pub partition: Partition,
    pub fidelity_terms: Vec<f64>,
    pub epsilon: EpsilonBudget,
    pub delta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    /// per-block heterodyne configuration; empty for homodyne reports
    pub config: Vec<EstimatorConfig>,
}

impl WitnessReport {
    /// Recomputes 1 − Σ(1 − F_i) from the stored terms.
    pub fn recomputed_value(&self) -> f64 {
        combine(&self.fidelity_terms)
    }
}

/// 1 − Σ (1 − F_i), without range checks (estimates may leave [0, 1]).
pub fn combine(fidelities: &[f64]) -> f64 {
    1.0 - fidelities.iter().map(|f| 1.0 - f).sum::<f64>()
}

/// W = 1 − Σ_blocks (1 − F_block) for exact block fidelities.
pub fn witness_from_fidelities(fidelities: &[f64], partition: &Partition) -> Result<f64> {
    if fidelities.len() != partition.num_blocks() {
        return Err(Error::Dimension("one fidelity per block".into()));
    }
    if let Some(f) = fidelities.iter().find(|f| !(-FIDELITY_TOL..=1.0 + FIDELITY_TOL).contains(*f)) {
        return invalid(format!("fidelity {f} outside [0, 1]"));
    }
    Ok(combine(fidelities))
}

/// Reduced target states σ_B; errors unless each is pure, i.e. the target is a
/// product over the partition.
pub fn target_blocks(target: &CoreState, partition: &Partition) -> Result<Vec<DensityOp>> {
    if target.num_modes() != partition.num_modes() {
        return Err(Error::Dimension("target and partition mode counts differ".into()));
    }
    let sigma = density_from_pure(target);
    partition
        .blocks()
        .iter()
        .map(|b| {
            let s = sigma.partial_trace(b)?;
            let purity = s.purity();
            if purity < 1.0 - PRODUCT_TOL {
                return Err(Error::NotBlockProduct(format!("block {b:?} has reduced purity {purity:.12}")));
            }
            Ok(s)
        })
        .collect()
}

/// Pure block factor of a product target, as a core state over the block.
pub fn block_factor(sigma_b: &DensityOp) -> Result<CoreState> {
    let mix = sigma_b.mixture(0.5);
    let (_, v) = mix.first().ok_or(Error::NullState)?;
    // fix the global phase so the largest amplitude is real positive
    let big = v.iter().cloned().fold(Complex64::new(0.0, 0.0), |a, b| if b.norm() > a.norm() { b } else { a });
    let phase = big.conj() / big.norm();
    let cut = sigma_b.cutoffs();
    make_core_state(
        v.iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 1e-13)
            .map(|(i, c)| (crate::fock::multi_index(cut, i), c * phase)),
    )
}

/// Tr[ρ_B σ_B] with both operators brought to common cutoffs.
fn overlap(rho_b: &DensityOp, sigma_b: &DensityOp) -> Result<f64> {
    let cut: Vec<usize> = rho_b.cutoffs().to_vec();
    let s = sigma_b.resize(&cut)?;
    let (a, b) = (rho_b.matrix(), s.matrix());
    let d = a.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    Ok(acc)
}

/// Exact block fidelities F(ρ_B, σ_B).
pub fn block_fidelities(rho: &DensityOp, target: &CoreState, partition: &Partition) -> Result<Vec<f64>> {
    if rho.num_modes() != partition.num_modes() {
        return Err(Error::Dimension("state and partition mode counts differ".into()));
    }
    let sig = target_blocks(target, partition)?;
    partition
        .blocks()
        .iter()
        .zip(&sig)
        .map(|(b, s)| overlap(&rho.partial_trace(b)?, s))
        .collect()
}

/// Witness computed from exact reduced states.
pub fn exact_witness(rho: &DensityOp, target: &CoreState, partition: &Partition) -> Result<f64> {
    witness_from_fidelities(&block_fidelities(rho, target, partition)?, partition)
}

/// Global fidelity ⟨ψ|ρ|ψ⟩.
pub fn exact_fidelity(rho: &DensityOp, target: &CoreState) -> Result<f64> {
    if rho.num_modes() != target.num_modes() {
        return Err(Error::Dimension("state and target mode counts differ".into()));
    }
    let psi = density_from_pure(target);
    overlap(rho, &psi)
}

/// Outcome of the sandwich check; slacks are ≥ 0 when the inequality holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub fidelity: f64,
    pub witness: f64,
    pub singleton_witness: f64,
    /// W − (1 − factor·(1 − F))
    pub lower_slack: f64,
    /// F − W
    pub upper_slack: f64,
    /// W − W^{(1)}
    pub ordering_slack: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub ordering_ok: bool,
}

fn sandwich(f: f64, w: f64, w1: f64, factor: f64, tol: f64) -> SandwichCheck {
    let lower_slack = w - (1.0 - factor * (1.0 - f));
    let upper_slack = f - w;
    let ordering_slack = w - w1;
    SandwichCheck {
        fidelity: f,
        witness: w,
        singleton_witness: w1,
        lower_slack,
        upper_slack,
        ordering_slack,
        lower_ok: lower_slack >= -tol,
        upper_ok: upper_slack >= -tol,
        ordering_ok: ordering_slack >= -tol,
    }
}

/// Checks 1 − (#blocks)(1 − F) ≤ W ≤ F and W^{(1)} ≤ W with tolerance 1e−10.
pub fn check_sandwich(rho: &DensityOp, target: &CoreState, partition: &Partition) -> Result<SandwichCheck> {
    let f = exact_fidelity(rho, target)?;
    let w = exact_witness(rho, target, partition)?;
    let w1 = exact_witness(rho, target, &Partition::singletons(rho.num_modes()))?;
    Ok(sandwich(f, w, w1, partition.num_blocks() as f64, 1e-10))
}

/// Partition {0..κt}, {κt}, ..., {m−1} used by the doped witness.
pub fn doped_partition(kt: usize, m: usize) -> Result<Partition> {
    if kt == 0 || kt >= m {
        return invalid(format!("need 0 < κt < m, got κt = {kt}, m = {m}"));
    }
    let mut blocks = vec![(0..kt).collect::<Vec<_>>()];
    blocks.extend((kt..m).map(|i| vec![i]));
    Partition::new(blocks)
}

/// Target φ ⊗ |0…0⟩ over m modes.
pub fn doped_target(phi: &CoreState, m: usize) -> Result<CoreState> {
    let kt = phi.num_modes();
    if kt >= m {
        return invalid(format!("κt = {kt} must be below m = {m}"));
    }
    Ok(phi.tensor(&CoreState::vacuum(m - kt)))
}

/// W^{(κt,1)} = 1 − (1 − F(ρ_{1..κt}, φ)) − Σ_{i>κt} (1 − ⟨0|ρ_i|0⟩).
pub fn doped_witness(rho: &DensityOp, phi: &CoreState, m: usize) -> Result<f64> {
    let part = doped_partition(phi.num_modes(), m)?;
    exact_witness(rho, &doped_target(phi, m)?, &part)
}

/// Sandwich 1 − (m − κt + 1)(1 − F) ≤ W^{(κt,1)} ≤ F, plus W^{(1)} ≤ W^{(κt,1)}.
pub fn check_doped_sandwich(rho: &DensityOp, phi: &CoreState, m: usize) -> Result<SandwichCheck> {
    let target = doped_target(phi, m)?;
    let part = doped_partition(phi.num_modes(), m)?;
    let f = exact_fidelity(rho, &target)?;
    let w = exact_witness(rho, &target, &part)?;
    // singletons only make sense when φ itself is a product
    let w1 = match exact_witness(rho, &target, &Partition::singletons(m)) {
        Ok(v) => v,
        Err(Error::NotBlockProduct(_)) => f64::NEG_INFINITY,
        Err(e) => return Err(e),
    };
    Ok(sandwich(f, w, w1, part.num_blocks() as f64, 1e-10))
}
