//! Witness curves for three loss studies: a six-photon interferometer output
//! with loss and a perturbed interferometer, and two four-mode beamsplitter
//! circuits.

use crate::error::{invalid, Error, Result};
use crate::fock::{density_from_pure, CMatrix, CoreState, DensityOp};
use crate::gaussian::{
    apply_circuit, beamsplitter, passive_amplitude, random_near_identity, theta_from_transmittance, GaussianCircuit,
};
use crate::witness::{combine, exact_fidelity, exact_witness, Partition};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Example1,
    Example2,
    Example3,
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(ExperimentId::Example1),
            "example2" => Ok(ExperimentId::Example2),
            "example3" => Ok(ExperimentId::Example3),
            other => Err(Error::Invalid(format!("unknown experiment {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// loss (Example 1) or beamsplitter transmittance (Examples 2, 3)
    pub eta_grid: Vec<f64>,
    /// seed of the first perturbed interferometer; member i uses seed + i
    pub seed: u64,
    /// number of perturbed interferometers averaged over (Example 1)
    pub family: usize,
    /// ε_V, spectral scale of the interferometer perturbation (Example 1)
    pub perturbation: f64,
    /// per-mode Fock cutoff used for the tested state
    pub cutoff: usize,
}

impl ExperimentConfig {
    /// 21-point grid on [0, 1]; Example 1 averages 20 perturbations with ε_V = 0.1.
    pub fn default_for(experiment: ExperimentId) -> ExperimentConfig {
        ExperimentConfig {
            experiment,
            eta_grid: (0..=20).map(|i| i as f64 / 20.0).collect(),
            seed: 7,
            family: 20,
            perturbation: 0.1,
            cutoff: match experiment {
                ExperimentId::Example1 => 7,
                _ => 3,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta_grid.is_empty() {
            return invalid("η grid is empty");
        }
        if self.eta_grid.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return invalid("η grid values must lie in [0, 1]");
        }
        if self.experiment == ExperimentId::Example1 && self.family == 0 {
            return invalid("family size must be positive");
        }
        if self.perturbation < 0.0 {
            return invalid("perturbation strength must be nonnegative");
        }
        Ok(())
    }
}

/// Columns of values sampled on a common η grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub x_label: String,
    pub eta: Vec<f64>,
    pub names: Vec<String>,
    /// values[c][i] is column c at eta[i]
    pub values: Vec<Vec<f64>>,
}

impl CurveSet {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    /// First η at which a column reaches zero from below, by linear
    /// interpolation; None if it never does.
    pub fn zero_crossing(&self, name: &str) -> Option<f64> {
        let v = self.column(name)?;
        for i in 1..v.len() {
            if v[i - 1] < 0.0 && v[i] >= 0.0 {
                let (x0, x1) = (self.eta[i - 1], self.eta[i]);
                return Some(x0 + (x1 - x0) * (-v[i - 1]) / (v[i] - v[i - 1]));
            }
        }
        if v.first().is_some_and(|&x| x >= 0.0) {
            return self.eta.first().copied();
        }
        None
    }
}

pub fn run(config: &ExperimentConfig) -> Result<CurveSet> {
    match config.experiment {
        ExperimentId::Example1 => run_example1(config),
        ExperimentId::Example2 => run_example2(config),
        ExperimentId::Example3 => run_example3(config),
    }
}

fn subsets_patterns(m: usize, total: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(m, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, total, &mut Vec::with_capacity(m), &mut out);
    out
}

/// Block fidelities ⟨1…1|ρ_B|1…1⟩ and the global fidelity for
/// ρ = V L_η(|1⟩⟨1|^{⊗m}) V†, from permanents.
///
/// L_η(|1⟩⟨1|)^{⊗m} is a mixture over the set S of surviving photons with
/// weight η^|S| (1−η)^{m−|S|}; each branch V|1_S⟩ is a pure |S|-photon state.
/// Returns the probability mass on patterns with some n_i ≥ cutoff as leak.
pub fn lossy_single_photons(
    v: &CMatrix,
    eta: f64,
    partitions: &[Partition],
    cutoff: usize,
) -> Result<(Vec<Vec<f64>>, f64, f64)> {
    let m = v.nrows();
    if !(0.0..=1.0).contains(&eta) {
        return invalid(format!("η = {eta} outside [0, 1]"));
    }
    for p in partitions {
        if p.num_modes() != m {
            return Err(Error::Dimension("partition mode count differs".into()));
        }
    }
    let mut block_f: Vec<Vec<f64>> = partitions.iter().map(|p| vec![0.0; p.num_blocks()]).collect();
    let mut fidelity = 0.0;
    let mut leak = 0.0;
    for mask in 0u32..(1 << m) {
        let inp: Vec<usize> = (0..m).map(|i| ((mask >> i) & 1) as usize).collect();
        let s: usize = inp.iter().sum();
        let w = eta.powi(s as i32) * (1.0 - eta).powi((m - s) as i32);
        if w == 0.0 {
            continue;
        }
        for out in subsets_patterns(m, s) {
            let prob = passive_amplitude(v, &out, &inp).norm_sqr() * w;
            if prob == 0.0 {
                continue;
            }
            if out.iter().any(|&n| n >= cutoff) {
                leak += prob;
            }
            if out.iter().all(|&n| n == 1) {
                fidelity += prob;
            }
            for (pi, part) in partitions.iter().enumerate() {
                for (bi, block) in part.blocks().iter().enumerate() {
                    if block.iter().all(|&i| out[i] == 1) {
                        block_f[pi][bi] += prob;
                    }
                }
            }
        }
    }
    Ok((block_f, fidelity, leak))
}

/// Six single photons through an interferometer, equal loss η, then a
/// near-identity passive perturbation V. After undoing the ideal
/// interferometer the tested state is V L_η(|1⟩⟨1|^{⊗6}) V† against |1⟩^{⊗6}.
/// Columns: F, W1, W2 ({12}{34}{56}), W3 ({123}{456}), averaged over the family.
pub fn run_example1(config: &ExperimentConfig) -> Result<CurveSet> {
    config.validate()?;
    const M: usize = 6;
    if config.cutoff < 2 {
        return invalid("cutoff must be at least 2 to hold single photons");
    }
    let parts = vec![
        Partition::singletons(M),
        Partition::contiguous(M, 2)?,
        Partition::contiguous(M, 3)?,
    ];
    let family: Vec<CMatrix> =
        (0..config.family).map(|i| random_near_identity(M, config.perturbation, config.seed + i as u64)).collect();
    let rows: Vec<Result<[f64; 4]>> = config
        .eta_grid
        .par_iter()
        .map(|&eta| {
            let mut acc = [0.0; 4];
            for v in &family {
                let (blocks, f, leak) = lossy_single_photons(v, eta, &parts, config.cutoff)?;
                if leak > 1e-10 {
                    return Err(Error::Truncation { leak, bound: 1e-10 });
                }
                acc[0] += f;
                for k in 0..3 {
                    acc[k + 1] += combine(&blocks[k]);
                }
            }
            Ok(acc.map(|x| x / family.len() as f64))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(curves(config, &["F", "W1", "W2", "W3"], &rows))
}

fn curves<const N: usize>(config: &ExperimentConfig, names: &[&str; N], rows: &[[f64; N]]) -> CurveSet {
    CurveSet {
        x_label: "eta".into(),
        eta: config.eta_grid.clone(),
        names: names.iter().map(|s| s.to_string()).collect(),
        values: (0..N).map(|c| rows.iter().map(|r| r[c]).collect()).collect(),
    }
}

fn four_mode_state(input: &[usize], layers: &[(usize, usize)], eta_bs: f64, cutoff: usize) -> Result<DensityOp> {
    let rho = density_from_pure(&CoreState::fock(input)).resize(&[cutoff; 4])?;
    let theta = theta_from_transmittance(eta_bs);
    let mut u = CMatrix::identity(4, 4);
    for &(i, j) in layers {
        u = beamsplitter(theta, (i, j), 4)? * u;
    }
    let circuit = GaussianCircuit { u, ..GaussianCircuit::identity(4) };
    apply_circuit(&rho, &circuit, 1e-12)
}

fn four_mode_curves(
    config: &ExperimentConfig,
    input: [usize; 4],
    layers: &[(usize, usize)],
    pairings: [&[Vec<usize>]; 2],
    names: &[&str; 4],
) -> Result<CurveSet> {
    config.validate()?;
    if config.cutoff < 3 {
        return invalid("cutoff must be at least 3 to hold two photons in one mode");
    }
    let target = CoreState::fock(&input);
    let parts = [Partition::new(pairings[0].to_vec())?, Partition::new(pairings[1].to_vec())?, Partition::singletons(4)];
    let rows: Vec<Result<[f64; 4]>> = config
        .eta_grid
        .par_iter()
        .map(|&eta| {
            let rho = four_mode_state(&input, layers, eta, config.cutoff)?;
            Ok([
                exact_fidelity(&rho, &target)?,
                exact_witness(&rho, &target, &parts[0])?,
                exact_witness(&rho, &target, &parts[1])?,
                exact_witness(&rho, &target, &parts[2])?,
            ])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(curves(config, names, &rows))
}

/// |1010⟩ through beamsplitters of transmittance η on modes (1,2) and (3,4).
/// Columns: F, W2_12_34, W2_13_24, W1.
pub fn run_example2(config: &ExperimentConfig) -> Result<CurveSet> {
    four_mode_curves(
        config,
        [1, 0, 1, 0],
        &[(0, 1), (2, 3)],
        [&[vec![0, 1], vec![2, 3]], &[vec![0, 2], vec![1, 3]]],
        &["F", "W2_12_34", "W2_13_24", "W1"],
    )
}

/// |1001⟩ through beamsplitters on (1,2) and (3,4), then one on (2,3), all of
/// transmittance η. Columns: F, W2_12_34, W2_14_23, W1.
pub fn run_example3(config: &ExperimentConfig) -> Result<CurveSet> {
    four_mode_curves(
        config,
        [1, 0, 0, 1],
        &[(0, 1), (2, 3), (1, 2)],
        [&[vec![0, 1], vec![2, 3]], &[vec![0, 3], vec![1, 2]]],
        &["F", "W2_12_34", "W2_14_23", "W1"],
    )
}
