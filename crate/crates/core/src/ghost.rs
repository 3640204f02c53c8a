//! The mixed-bag family `P_0, ..., P_n`.
//!
//! `P_i` is the law of `(A(S^(i)), S)` where `S^(i)` keeps the first `i`
//! instances of `S` and replaces the rest by an independent ghost sample.
//! So `P_0 = Q0 x mu^n`, `P_n` is the algorithm's own joint law, and
//! `P_{i|s}` depends on `s` only through its first `i` coordinates.

use ndarray::Array2;
use rayon::prelude::*;

use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::prob::{
    normalize, partial_average_loss, sample_loss, DatasetSpace, JointDistribution, Kernel, LossTable,
};

/// Tolerance for exact identities over the family.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance for inequalities over the family.
pub const INEQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MixedBagFamily {
    members: Vec<JointDistribution>,
    /// `prefix[i]` has shape `(|W|, |Z|^i)`: the conditional `P_{i|s}` keyed by `s_{1:i}`.
    prefix: Vec<Array2<f64>>,
    datasets: DatasetSpace,
}

/// Build `P_0..P_n` by exact summation over ghost suffixes.
pub fn build_family(kappa: &Kernel, datasets: &DatasetSpace) -> Result<MixedBagFamily> {
    let n = datasets.n();
    let k = datasets.radix();
    let nw = kappa.n_hyp();
    datasets.check_table(nw)?;
    if kappa.len() != datasets.len() {
        return Err(Error::Dimension(format!(
            "kernel has {} rows but there are {} datasets",
            kappa.len(),
            datasets.len()
        )));
    }
    let mu = datasets.mu();
    let mut top = Array2::zeros((nw, datasets.len()));
    for s in 0..datasets.len() {
        if datasets.prob(s) == 0.0 {
            continue;
        }
        let row = kappa.row(s).ok_or(Error::IncompleteKernel(s))?;
        top.column_mut(s).iter_mut().zip(row).for_each(|(t, r)| *t = *r);
    }
    // prefix[i](w, a) = sum_z mu(z) prefix[i+1](w, a*k + z)
    let mut prefix = vec![top];
    for i in (0..n).rev() {
        let next = prefix.last().expect("nonempty");
        let width = k.pow(i as u32);
        let mut cur = Array2::zeros((nw, width));
        for a in 0..width {
            for (z, m) in mu.iter().enumerate() {
                if *m == 0.0 {
                    continue;
                }
                let col = next.column(a * k + z);
                cur.column_mut(a).scaled_add(*m, &col);
            }
        }
        prefix.push(cur);
    }
    prefix.reverse();

    let members = (0..=n)
        .into_par_iter()
        .map(|i| {
            let shift = k.pow((n - i) as u32);
            let table = Array2::from_shape_fn((nw, datasets.len()), |(w, s)| {
                datasets.prob(s) * prefix[i][[w, s / shift]]
            });
            JointDistribution::from_table_unchecked(table)
        })
        .collect();
    Ok(MixedBagFamily {
        members,
        prefix,
        datasets: datasets.clone(),
    })
}

impl MixedBagFamily {
    pub fn n(&self) -> usize {
        self.datasets.n()
    }

    pub fn n_hyp(&self) -> usize {
        self.members[0].n_hyp()
    }

    pub fn member(&self, i: usize) -> &JointDistribution {
        &self.members[i]
    }

    pub fn members(&self) -> &[JointDistribution] {
        &self.members
    }

    pub fn datasets(&self) -> &DatasetSpace {
        &self.datasets
    }

    /// The common hypothesis marginal `Q0`.
    pub fn base_marginal(&self) -> Vec<f64> {
        self.prefix[0].column(0).to_vec()
    }

    /// `P_{i|s}`, defined for every tuple (including zero-mass ones).
    pub fn member_conditional(&self, i: usize, s: usize) -> Vec<f64> {
        let shift = self.datasets.radix().pow((self.n() - i) as u32);
        self.prefix[i].column(s / shift).to_vec()
    }

    /// `(sum_k alpha_k P_k)_{|s}` for every tuple, as a `(|W|, |Z|^n)` table.
    pub fn hull_conditionals(&self, alpha: &[f64]) -> Array2<f64> {
        let n = self.n();
        let k = self.datasets.radix();
        Array2::from_shape_fn((self.n_hyp(), self.datasets.len()), |(w, s)| {
            alpha
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(i, a)| a * self.prefix[i][[w, s / k.pow((n - i) as u32)]])
                .sum()
        })
    }

    /// Largest gap between `P_{i|s}` and `P_{i|s'}` over tuples sharing `s_{1:i}`.
    pub fn prefix_measurability_gap(&self, i: usize) -> f64 {
        let shift = self.datasets.radix().pow((self.n() - i) as u32);
        let m = &self.members[i];
        let mut worst: f64 = 0.0;
        for s in 0..self.datasets.len() {
            let ps = self.datasets.prob(s);
            if ps == 0.0 {
                continue;
            }
            let lead = s - s % shift;
            let pl = self.datasets.prob(lead);
            if pl == 0.0 {
                continue;
            }
            for w in 0..self.n_hyp() {
                worst = worst.max((m.table()[[w, s]] / ps - m.table()[[w, lead]] / pl).abs());
            }
        }
        worst
    }
}

/// Mixture weights over `P_0..P_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullPoint {
    alpha: Vec<f64>,
}

impl HullPoint {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        Ok(Self {
            alpha: normalize(alpha, "hull weights")?,
        })
    }

    pub fn vertex(n: usize, k: usize) -> Self {
        let mut alpha = vec![0.0; n + 1];
        alpha[k] = 1.0;
        Self { alpha }
    }

    pub(crate) fn from_weights_unchecked(alpha: Vec<f64>) -> Self {
        Self { alpha }
    }

    pub fn weights(&self) -> &[f64] {
        &self.alpha
    }

    /// Largest index with positive weight; the point lies in `Delta_{support_end}`.
    pub fn support_end(&self) -> usize {
        self.alpha.iter().rposition(|a| *a > 0.0).unwrap_or(0)
    }
}

/// `sum_k alpha_k P_k`.
pub fn hull_point(family: &MixedBagFamily, alpha: &HullPoint) -> Result<JointDistribution> {
    if alpha.alpha.len() != family.members.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} members",
            alpha.alpha.len(),
            family.members.len()
        )));
    }
    Ok(JointDistribution::combination(&alpha.alpha, &family.members))
}

/// `sum_k alpha_k P_{min(k, i-1)}`: collapse weight at indices `>= i-1` onto `i-1`.
pub fn projection_plus(alpha: &HullPoint, i: usize) -> Result<HullPoint> {
    let n = alpha.alpha.len() - 1;
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, max: n });
    }
    let mut out = alpha.alpha.clone();
    let tail: f64 = out[i - 1..].iter().sum();
    out[i - 1..].iter_mut().for_each(|a| *a = 0.0);
    out[i - 1] = tail;
    Ok(HullPoint { alpha: out })
}

/// `|<P_k, l_i>|` for `k < i`; row `k`, column `i - 1`. Entries with `k >= i` are zero.
pub fn verify_zero_pairing(family: &MixedBagFamily, centered: &LossTable) -> Result<Array2<f64>> {
    let n = family.n();
    let mut out = Array2::zeros((n + 1, n));
    for i in 1..=n {
        let li = sample_loss(centered, &family.datasets, i)?;
        for k in 0..i {
            out[[k, i - 1]] = family.members[k].pairing(&li).abs();
        }
    }
    Ok(out)
}

/// Largest `|<P_k, L_{i-1}> - <P_{i-1}, L_{i-1}>|` over `k >= i - 1`.
pub fn verify_pairing_identity(family: &MixedBagFamily, centered: &LossTable) -> Result<f64> {
    let n = family.n();
    let mut worst: f64 = 0.0;
    for i in 1..=n {
        let l = partial_average_loss(centered, &family.datasets, i - 1)?;
        let reference = family.members[i - 1].pairing(&l);
        for k in i - 1..=n {
            worst = worst.max((family.members[k].pairing(&l) - reference).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementReport {
    /// `objective(P+) - objective(P)`.
    pub slack: f64,
    /// `<P+, L_{i-1}> - <P, L_{i-1}>`.
    pub pairing_gap: f64,
    /// `H(P+) - H(P)`.
    pub h_gap: f64,
}

impl ImprovementReport {
    pub fn holds(&self) -> bool {
        self.slack >= -INEQUALITY_TOL && self.pairing_gap.abs() <= IDENTITY_TOL && self.h_gap <= IDENTITY_TOL
    }
}

/// Compare `eta <P, L_{i-1}> - H(P)` at `P = hull(alpha)` and at its projection.
pub fn verify_improvement(
    family: &MixedBagFamily,
    centered: &LossTable,
    spec: &DivergenceSpec,
    alpha: &HullPoint,
    i: usize,
    eta: f64,
) -> Result<ImprovementReport> {
    let plus = projection_plus(alpha, i)?;
    let p = hull_point(family, alpha)?;
    let pp = hull_point(family, &plus)?;
    let l = partial_average_loss(centered, &family.datasets, i - 1)?;
    let h = spec.H_eval(&p, &family.datasets)?;
    let hp = spec.H_eval(&pp, &family.datasets)?;
    let (a, b) = (p.pairing(&l), pp.pairing(&l));
    let h_gap = if h.is_infinite() && hp.is_infinite() { 0.0 } else { hp - h };
    let slack = if h.is_infinite() { f64::INFINITY } else { (eta * b - hp) - (eta * a - h) };
    Ok(ImprovementReport {
        slack,
        pairing_gap: b - a,
        h_gap,
    })
}
