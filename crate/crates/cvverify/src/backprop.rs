//! Measurement back-propagation: classical maps on outcomes that undo a
//! Gaussian layer applied before the detectors.
//!
//! Heterodyne (balanced or unbalanced to match S(ξ)): data from V ρ V† with
//! V = S(ξ) D(β) Û becomes data from ρ under α = U†(γ − β).
//! Parallel homodyne: data from D(β) Ô ρ Ô† D(β)† becomes data from ρ under
//! x = Oᵀ(x′ − β_θ), β_θ = Re β cos θ + Im β sin θ, for real orthogonal O.

use crate::error::{invalid, Error, Result};
use crate::fock::{dim_of, CMatrix, DensityOp};
use crate::gaussian::{
    apply_local, displacement_op, passive_fock_lift_upto, squeezing_op, unitarity_defect, GaussianCircuit, OrthogonalSymplectic,
};
use crate::measure::{homodyne_pdf, husimi_q, Records, SampleBatch};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Homodyne rule: real orthogonal block and displacement in quadrature units.
#[derive(Clone, Debug, PartialEq)]
pub struct HomodyneRule {
    block: OrthogonalSymplectic,
    beta: Vec<Complex64>,
}

impl HomodyneRule {
    pub fn new(block: DMatrix<f64>, beta: Vec<Complex64>) -> Result<HomodyneRule> {
        if beta.len() != block.nrows() {
            return Err(Error::Dimension("one β per mode".into()));
        }
        Ok(HomodyneRule { block: OrthogonalSymplectic::new(block)?, beta })
    }

    pub fn identity(m: usize) -> HomodyneRule {
        HomodyneRule::new(DMatrix::identity(m, m), vec![ZERO; m]).expect("identity")
    }

    /// Rule for a circuit D(β) Ô with real orthogonal U and no squeezing.
    /// The circuit amplitude β shifts X_θ by √2 (Re β cos θ + Im β sin θ).
    pub fn from_circuit(circuit: &GaussianCircuit) -> Result<HomodyneRule> {
        circuit.validate()?;
        if circuit.xi.iter().any(|x| *x != ZERO) {
            return invalid("homodyne back-propagation does not undo squeezing");
        }
        if circuit.u.iter().any(|z| z.im.abs() > 1e-12) {
            return invalid("homodyne back-propagation needs a real orthogonal U");
        }
        let block = circuit.u.map(|z| z.re);
        HomodyneRule::new(block, circuit.beta.iter().map(|b| b * SQRT_2).collect())
    }

    pub fn block(&self) -> &DMatrix<f64> {
        self.block.block()
    }

    pub fn beta(&self) -> &[Complex64] {
        &self.beta
    }

    /// x = Oᵀ(x′ − β_θ).
    pub fn map(&self, x: &[f64], theta: f64) -> Vec<f64> {
        let o = self.block.block();
        let m = x.len();
        let shifted: Vec<f64> =
            (0..m).map(|i| x[i] - (self.beta[i].re * theta.cos() + self.beta[i].im * theta.sin())).collect();
        (0..m).map(|i| (0..m).map(|j| o[(j, i)] * shifted[j]).sum()).collect()
    }

    /// Rule undoing this one.
    pub fn inverse(&self) -> HomodyneRule {
        let ot = self.block.block().transpose();
        let m = self.beta.len();
        let beta = (0..m)
            .map(|i| -(0..m).map(|j| self.beta[j] * ot[(i, j)]).sum::<Complex64>())
            .collect();
        HomodyneRule::new(ot, beta).expect("transpose of orthogonal")
    }
}

/// Heterodyne rule: passive U, displacement β and the unbalancing ξ the batch
/// was taken with.
#[derive(Clone, Debug, PartialEq)]
pub struct HeterodyneRule {
    u: CMatrix,
    beta: Vec<Complex64>,
    xi: Vec<Complex64>,
}

impl HeterodyneRule {
    pub fn new(u: CMatrix, beta: Vec<Complex64>, xi: Vec<Complex64>) -> Result<HeterodyneRule> {
        let m = u.nrows();
        if u.ncols() != m || beta.len() != m || xi.len() != m {
            return Err(Error::Dimension("U, β and ξ must agree on the mode count".into()));
        }
        let def = unitarity_defect(&u);
        if def > 1e-10 {
            return invalid(format!("U not unitary (defect {def:.2e})"));
        }
        Ok(HeterodyneRule { u, beta, xi })
    }

    pub fn identity(m: usize) -> HeterodyneRule {
        HeterodyneRule::new(CMatrix::identity(m, m), vec![ZERO; m], vec![ZERO; m]).expect("identity")
    }

    pub fn from_circuit(circuit: &GaussianCircuit) -> Result<HeterodyneRule> {
        circuit.validate()?;
        HeterodyneRule::new(circuit.u.clone(), circuit.beta.clone(), circuit.xi.clone())
    }

    pub fn u(&self) -> &CMatrix {
        &self.u
    }

    pub fn beta(&self) -> &[Complex64] {
        &self.beta
    }

    pub fn xi(&self) -> &[Complex64] {
        &self.xi
    }

    /// α = U†(γ − β).
    pub fn map(&self, gamma: &[Complex64]) -> Vec<Complex64> {
        let m = gamma.len();
        (0..m)
            .map(|i| (0..m).map(|j| self.u[(j, i)].conj() * (gamma[j] - self.beta[j])).sum())
            .collect()
    }

    /// Rule undoing this one on balanced data.
    pub fn inverse(&self) -> HeterodyneRule {
        let ud = self.u.adjoint();
        let m = self.beta.len();
        let beta = (0..m).map(|i| -(0..m).map(|j| ud[(i, j)] * self.beta[j]).sum::<Complex64>()).collect();
        HeterodyneRule::new(ud, beta, vec![ZERO; m]).expect("adjoint of unitary")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackpropRule {
    Homodyne(HomodyneRule),
    Heterodyne(HeterodyneRule),
}

impl BackpropRule {
    pub fn apply(&self, batch: &SampleBatch) -> Result<SampleBatch> {
        match self {
            BackpropRule::Homodyne(r) => backprop_homodyne(batch, r),
            BackpropRule::Heterodyne(r) => backprop_heterodyne(batch, r),
        }
    }
}

/// Maps each shot of a parallel-homodyne batch through the rule.
pub fn backprop_homodyne(batch: &SampleBatch, rule: &HomodyneRule) -> Result<SampleBatch> {
    let Records::Homodyne { theta, .. } = batch.records() else {
        return invalid("homodyne rule needs a homodyne batch");
    };
    let m = batch.num_modes();
    if rule.beta.len() != m {
        return Err(Error::Dimension("rule and batch mode counts differ".into()));
    }
    let mut x = Vec::with_capacity(batch.len() * m);
    for (shot, &th) in theta.iter().enumerate() {
        x.extend(rule.map(batch.x(shot), th));
    }
    SampleBatch::homodyne(m, theta.clone(), x, batch.eta().to_vec(), batch.seed())
}

/// Maps each heterodyne shot through α = U†(γ − β); output is tagged balanced.
pub fn backprop_heterodyne(batch: &SampleBatch, rule: &HeterodyneRule) -> Result<SampleBatch> {
    if !matches!(batch.records(), Records::Heterodyne { .. }) {
        return invalid("heterodyne rule needs a heterodyne batch");
    }
    let m = batch.num_modes();
    if rule.beta.len() != m {
        return Err(Error::Dimension("rule and batch mode counts differ".into()));
    }
    if batch.xi().iter().zip(&rule.xi).any(|(a, b)| (a - b).norm() > 1e-12) {
        return Err(Error::XiMismatch);
    }
    let mut alpha = Vec::with_capacity(batch.len() * m);
    for shot in 0..batch.len() {
        alpha.extend(rule.map(batch.alpha(shot)));
    }
    SampleBatch::heterodyne(m, alpha, batch.eta().to_vec(), vec![ZERO; m], batch.seed())
}

/// A measurement outcome at which the POVM identity is probed.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Homodyne { theta: f64, x: Vec<f64> },
    Heterodyne { gamma: Vec<Complex64> },
}

/// V ρ V† (loss ignored) in a space large enough that nothing is cut off.
fn transform_enlarged(rho: &DensityOp, circuit: &GaussianCircuit) -> Result<DensityOp> {
    let cut = rho.cutoffs();
    let photons: usize = cut.iter().map(|c| c - 1).sum();
    let passive_cut: Vec<usize> = vec![photons + 1; cut.len()];
    let lift = passive_fock_lift_upto(&circuit.u, &passive_cut, photons)?;
    let mut out = rho.resize(&passive_cut)?.conjugate(&lift);
    let big: Vec<usize> = (0..cut.len())
        .map(|i| {
            let (b, x) = (circuit.beta[i].norm(), circuit.xi[i].norm());
            photons + 21 + (10.0 * b * b + 60.0 * x).ceil() as usize
        })
        .collect();
    out = out.resize(&big)?;
    for (i, b) in circuit.beta.iter().enumerate() {
        if *b != ZERO {
            out = apply_local(&out, i, &displacement_op(*b, big[i])?)?;
        }
    }
    for (i, x) in circuit.xi.iter().enumerate() {
        if *x != ZERO {
            out = apply_local(&out, i, &squeezing_op(*x, big[i])?)?;
        }
    }
    Ok(out)
}

/// max |Tr[ρ Π_{g(λ)}] − Tr[V ρ V† Π_λ]| over probe states and outcomes, with
/// V = S(ξ) D(β) Û from `circuit` and g the back-propagation rule.
///
/// Both sides are densities in λ; the rules have unit Jacobian.
pub fn verify_povm_identity(
    circuit: &GaussianCircuit,
    rule: &BackpropRule,
    probe_states: &[DensityOp],
    probe_outcomes: &[Outcome],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for rho in probe_states {
        if dim_of(rho.cutoffs()) > 256 {
            return invalid("probe states are limited to desk-scale cutoffs");
        }
        let moved = transform_enlarged(rho, circuit)?;
        // unbalanced heterodyne on V ρ V† is balanced heterodyne on S(ξ)† V ρ V† S(ξ)
        let measured = match rule {
            BackpropRule::Heterodyne(r) if r.xi.iter().any(|x| *x != ZERO) => {
                let mut s = moved.clone();
                for (i, x) in r.xi.iter().enumerate() {
                    if *x != ZERO {
                        s = apply_local(&s, i, &squeezing_op(-x, s.cutoffs()[i])?)?;
                    }
                }
                s
            }
            _ => moved,
        };
        for outcome in probe_outcomes {
            let dev = match (rule, outcome) {
                (BackpropRule::Heterodyne(r), Outcome::Heterodyne { gamma }) => {
                    let lhs = husimi_q(rho, &r.map(gamma));
                    let rhs = husimi_q(&measured, gamma);
                    (lhs - rhs).abs() * PI.powi(gamma.len() as i32)
                }
                (BackpropRule::Homodyne(r), Outcome::Homodyne { theta, x }) => {
                    let lhs = homodyne_pdf(rho, *theta, &r.map(x, *theta));
                    let rhs = homodyne_pdf(&measured, *theta, x);
                    (lhs - rhs).abs()
                }
                _ => return invalid("outcome kind does not match the rule"),
            };
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RuleJson {
    Homodyne {
        #[serde(rename = "O")]
        o: Vec<Vec<f64>>,
        beta: Vec<[f64; 2]>,
    },
    Heterodyne {
        #[serde(rename = "U")]
        u: Vec<Vec<[f64; 2]>>,
        beta: Vec<[f64; 2]>,
        xi: Vec<[f64; 2]>,
    },
}

fn pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|c| [c.re, c.im]).collect()
}

fn unpairs(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

impl Serialize for BackpropRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BackpropRule::Homodyne(r) => {
                let o = r.block();
                RuleJson::Homodyne {
                    o: (0..o.nrows()).map(|i| (0..o.ncols()).map(|j| o[(i, j)]).collect()).collect(),
                    beta: pairs(&r.beta),
                }
            }
            BackpropRule::Heterodyne(r) => RuleJson::Heterodyne {
                u: (0..r.u.nrows()).map(|i| (0..r.u.ncols()).map(|j| [r.u[(i, j)].re, r.u[(i, j)].im]).collect()).collect(),
                beta: pairs(&r.beta),
                xi: pairs(&r.xi),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BackpropRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let square = |n: usize, rows: &[usize]| rows.iter().all(|&r| r == n);
        match RuleJson::deserialize(d)? {
            RuleJson::Homodyne { o, beta } => {
                let m = o.len();
                if !square(m, &o.iter().map(Vec::len).collect::<Vec<_>>()) {
                    return Err(D::Error::custom("O must be square"));
                }
                let block = DMatrix::from_fn(m, m, |i, j| o[i][j]);
                HomodyneRule::new(block, unpairs(&beta)).map(BackpropRule::Homodyne).map_err(D::Error::custom)
            }
            RuleJson::Heterodyne { u, beta, xi } => {
                let m = u.len();
                if !square(m, &u.iter().map(Vec::len).collect::<Vec<_>>()) {
                    return Err(D::Error::custom("U must be square"));
                }
                let um = CMatrix::from_fn(m, m, |i, j| Complex64::new(u[i][j][0], u[i][j][1]));
                HeterodyneRule::new(um, unpairs(&beta), unpairs(&xi))
                    .map(BackpropRule::Heterodyne)
                    .map_err(D::Error::custom)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::fock::random_density;
    use crate::gaussian::{random_orthogonal, random_passive};
    use crate::measure::{sample_heterodyne, sample_parallel_homodyne, ThetaPolicy};

    #[test]
    fn homodyne_map_examples() {
        let r = HomodyneRule::new(DMatrix::identity(1, 1), vec![c64(1.0, 0.0)]).unwrap();
        assert!((r.map(&[2.5], 0.0)[0] - 1.5).abs() < 1e-15);
        assert!((r.map(&[2.5], std::f64::consts::FRAC_PI_2)[0] - 2.5).abs() < 1e-15);
        assert!(HomodyneRule::new(DMatrix::from_element(2, 2, 0.7), vec![ZERO; 2]).is_err());
    }

    #[test]
    fn heterodyne_map_examples() {
        let r = HeterodyneRule::new(CMatrix::identity(2, 2), vec![c64(1.0, 1.0), ZERO], vec![ZERO; 2]).unwrap();
        let a = r.map(&[c64(2.0, 1.0), c64(0.5, 0.0)]);
        assert!((a[0] - c64(1.0, 0.0)).norm() < 1e-15 && (a[1] - c64(0.5, 0.0)).norm() < 1e-15);
        let swap = CMatrix::from_row_slice(2, 2, &[ZERO, c64(1.0, 0.0), c64(1.0, 0.0), ZERO]);
        let r = HeterodyneRule::new(swap, vec![ZERO; 2], vec![ZERO; 2]).unwrap();
        assert_eq!(r.map(&[c64(1.0, 2.0), c64(3.0, 4.0)]), vec![c64(3.0, 4.0), c64(1.0, 2.0)]);
    }

    #[test]
    fn batch_round_trips() {
        let rho = random_density(&[2, 2], 2, 1);
        let hb = sample_parallel_homodyne(&rho, 200, 3, ThetaPolicy::Uniform).unwrap();
        let rule = HomodyneRule::new(random_orthogonal(2, 4), vec![c64(0.3, -0.2), c64(0.1, 0.5)]).unwrap();
        let there = backprop_homodyne(&hb, &rule).unwrap();
        let back = backprop_homodyne(&there, &rule.inverse()).unwrap();
        for i in 0..hb.len() {
            for (a, b) in hb.x(i).iter().zip(back.x(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let identity = backprop_homodyne(&hb, &HomodyneRule::identity(2)).unwrap();
        assert_eq!(identity, hb);

        let xb = sample_heterodyne(&rho, 200, 3, &[ZERO; 2], &[1.0; 2]).unwrap();
        let rule = HeterodyneRule::new(random_passive(2, 5), vec![c64(0.3, 0.1), ZERO], vec![ZERO; 2]).unwrap();
        let back = backprop_heterodyne(&backprop_heterodyne(&xb, &rule).unwrap(), &rule.inverse()).unwrap();
        for i in 0..xb.len() {
            for (a, b) in xb.alpha(i).iter().zip(back.alpha(i)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn xi_mismatch_rejected() {
        let rho = random_density(&[2], 1, 1);
        let b = sample_heterodyne(&rho, 10, 1, &[c64(0.2, 0.0)], &[1.0]).unwrap();
        assert_eq!(backprop_heterodyne(&b, &HeterodyneRule::identity(1)), Err(Error::XiMismatch));
    }

    #[test]
    fn povm_identity_identity_circuit() {
        let c = GaussianCircuit::identity(2);
        let probes = vec![random_density(&[3, 3], 2, 2)];
        let outs = vec![Outcome::Heterodyne { gamma: vec![c64(0.3, 0.2), c64(-0.5, 0.1)] }];
        let dev = verify_povm_identity(&c, &BackpropRule::Heterodyne(HeterodyneRule::identity(2)), &probes, &outs);
        assert!(dev.unwrap() < 1e-12);
    }

    #[test]
    fn povm_identity_heterodyne_unbalanced() {
        let mut c = GaussianCircuit::identity(2);
        c.u = random_passive(2, 8);
        c.beta = vec![c64(0.4, -0.2), c64(-0.1, 0.3)];
        c.xi = vec![c64(0.2, 0.0), c64(0.0, 0.1)];
        let rule = BackpropRule::Heterodyne(HeterodyneRule::from_circuit(&c).unwrap());
        let probes = vec![random_density(&[3, 3], 2, 9)];
        let outs: Vec<Outcome> = (0..4)
            .map(|i| Outcome::Heterodyne { gamma: vec![c64(0.3 * i as f64, -0.2), c64(0.5, 0.1 * i as f64)] })
            .collect();
        assert!(verify_povm_identity(&c, &rule, &probes, &outs).unwrap() < 1e-8);
        let wrong = BackpropRule::Heterodyne(HeterodyneRule::from_circuit(&c).unwrap().inverse());
        let mut c2 = c.clone();
        c2.xi = vec![ZERO; 2];
        assert!(verify_povm_identity(&c2, &wrong, &probes, &outs).unwrap() > 1e-3);
    }

    #[test]
    fn povm_identity_homodyne() {
        let mut c = GaussianCircuit::identity(2);
        c.u = random_orthogonal(2, 3).map(|v| c64(v, 0.0));
        c.beta = vec![c64(0.3, 0.2), c64(-0.2, 0.1)];
        let rule = BackpropRule::Homodyne(HomodyneRule::from_circuit(&c).unwrap());
        let probes = vec![random_density(&[3, 3], 2, 4)];
        let outs: Vec<Outcome> = (0..8)
            .map(|k| Outcome::Homodyne { theta: k as f64 * PI / 4.0, x: vec![0.4 - 0.1 * k as f64, 0.2] })
            .collect();
        assert!(verify_povm_identity(&c, &rule, &probes, &outs).unwrap() < 1e-6);
    }

    #[test]
    fn rule_json_round_trip() {
        let r = BackpropRule::Heterodyne(
            HeterodyneRule::new(random_passive(2, 1), vec![c64(0.1, 0.2), ZERO], vec![ZERO, c64(0.3, 0.0)]).unwrap(),
        );
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<BackpropRule>(&s).unwrap(), r);
        let h = BackpropRule::Homodyne(HomodyneRule::new(random_orthogonal(3, 2), vec![ZERO; 3]).unwrap());
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(serde_json::from_str::<BackpropRule>(&s).unwrap(), h);
    }
}
