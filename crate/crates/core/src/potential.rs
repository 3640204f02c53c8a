//! The overfitting potential `Phi(f) = sup_{P in Delta_n} <P, f> - H(P)` over
//! the hull of the mixed-bag family, its generalized Bregman divergence, and
//! checks of the inequalities built on it.
//!
//! `Phi` is computed by maximizing the concave map
//! `alpha -> <P_alpha, f> - H(P_alpha)` over the simplex of mixture weights.
//! The solver is projected gradient ascent with Barzilai-Borwein steps and
//! Armijo backtracking, stopped by the Frank-Wolfe gap
//! `max_k grad_k - <grad, alpha>`, which bounds the suboptimality.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{ConvexityCertificate, DivergenceSpec, Regime};
use crate::error::{Error, Result};
use crate::ghost::{hull_point, projection_plus, HullPoint, MixedBagFamily};
use crate::norm::{conjugate_exponent, loss_dual_moment_power, NormSpec};
use crate::prob::{
    generalization_error, partial_average_loss, sample_loss, JointDistribution, JointFunction, LossTable,
};
use crate::transport::log_sum_exp;

/// Grid points above which the simplex grid oracle refuses to run.
pub const MAX_GRID_POINTS: u128 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialOptions {
    /// Target Frank-Wolfe gap.
    pub tol: f64,
    pub max_iters: usize,
    /// Vertices within this much of the optimum join the maximizer set.
    pub tie_tol: f64,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 100_000,
            tie_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialResult {
    pub value: f64,
    pub maximizer_weights: HullPoint,
    /// The maximizer and every hull vertex within `tie_tol` of the optimum.
    pub maximizer_set: Vec<HullPoint>,
    pub solver_iters: usize,
    /// Frank-Wolfe gap at the returned point; `value >= Phi(f) - gap`.
    pub gap: f64,
    pub converged: bool,
}

/// `alpha -> <P_alpha, f> - H(P_alpha)` restricted to `P_0..P_face`.
struct Objective {
    spec: DivergenceSpec,
    /// `conds[k]` is `(w, s) -> P_{k|s}(w)`.
    conds: Vec<Array2<f64>>,
    pairings: Vec<f64>,
    mass: Vec<f64>,
}

impl Objective {
    fn new(family: &MixedBagFamily, spec: &DivergenceSpec, f: &JointFunction, face: usize) -> Result<Self> {
        let n = family.n();
        if face > n {
            return Err(Error::IndexOutOfRange { index: face, max: n });
        }
        let ds = family.datasets();
        if f.dim() != (family.n_hyp(), ds.len()) {
            return Err(Error::Dimension(format!(
                "function has shape {:?}, expected ({}, {})",
                f.dim(),
                family.n_hyp(),
                ds.len()
            )));
        }
        let spec = spec.rebase(family.base_marginal())?;
        let conds = (0..=face)
            .map(|k| {
                Array2::from_shape_fn((family.n_hyp(), ds.len()), |(w, s)| {
                    family.member_conditional(k, s)[w]
                })
            })
            .collect();
        let pairings = (0..=face).map(|k| family.member(k).pairing(f)).collect();
        Ok(Self {
            spec,
            conds,
            pairings,
            mass: ds.probs().to_vec(),
        })
    }

    fn dim(&self) -> usize {
        self.conds.len()
    }

    fn conditional(&self, alpha: &[f64], s: usize) -> Vec<f64> {
        let nw = self.conds[0].nrows();
        let mut q = vec![0.0; nw];
        for (a, c) in alpha.iter().zip(&self.conds) {
            if *a != 0.0 {
                for (w, x) in q.iter_mut().enumerate() {
                    *x += a * c[[w, s]];
                }
            }
        }
        q
    }

    fn h_total(&self, alpha: &[f64]) -> f64 {
        let mut total = 0.0;
        for (s, m) in self.mass.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let h = self.spec.h_eval(&self.conditional(alpha, s));
            if h.is_infinite() {
                return f64::INFINITY;
            }
            total += m * h;
        }
        total
    }

    fn value(&self, alpha: &[f64]) -> f64 {
        let lin: f64 = alpha.iter().zip(&self.pairings).map(|(a, c)| a * c).sum();
        lin - self.h_total(alpha)
    }

    /// Gradient in `alpha`; `+inf` marks directions along which `H` drops
    /// with unbounded slope.
    fn gradient(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.pairings.clone();
        for (s, m) in self.mass.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let d = self.spec.partials(&self.conditional(alpha, s))?;
            for (k, c) in self.conds.iter().enumerate() {
                let mut dot = 0.0;
                for (w, dw) in d.iter().enumerate() {
                    let cw = c[[w, s]];
                    if cw != 0.0 {
                        dot += cw * dw;
                    }
                }
                g[k] -= m * dot;
            }
        }
        Ok(g)
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j as f64 + 1.0);
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fw_gap(alpha: &[f64], grad: &[f64]) -> f64 {
    let best = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (best - dot(alpha, grad)).max(0.0)
}

/// Largest `gamma in [0, 1]` on the halving ladder improving the objective
/// along `alpha + gamma (e_j - alpha)`.
fn fw_step(obj: &Objective, alpha: &[f64], val: f64, j: usize) -> Option<(Vec<f64>, f64)> {
    let mut gamma = 1.0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..80 {
        let cand: Vec<f64> = alpha
            .iter()
            .enumerate()
            .map(|(k, a)| (1.0 - gamma) * a + if k == j { gamma } else { 0.0 })
            .collect();
        let v = obj.value(&cand);
        if v > val && best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((cand, v));
        } else if best.is_some() {
            break;
        }
        gamma /= 2.0;
    }
    best
}

const STALL_WINDOW: usize = 500;

fn solve(obj: &Objective, opts: &PotentialOptions) -> Result<(Vec<f64>, f64, f64, usize, bool)> {
    let dim = obj.dim();
    let mut alpha = vec![0.0; dim];
    alpha[0] = 1.0;
    let mut val = obj.value(&alpha);
    if !val.is_finite() {
        return Err(Error::Parameter("objective is not finite at P_0".into()));
    }
    let mut grad = obj.gradient(&alpha)?;
    let mut step = 1.0;
    let mut gap = f64::INFINITY;
    let mut checkpoint = val;
    for it in 0..opts.max_iters {
        // no measurable progress over a window means rounding has taken over
        if it > 0 && it % STALL_WINDOW == 0 {
            if val - checkpoint <= 4.0 * f64::EPSILON * (1.0 + val.abs()) {
                return Ok((alpha, val, gap, it, gap <= opts.tol));
            }
            checkpoint = val;
        }
        if let Some(j) = grad.iter().position(|g| *g == f64::INFINITY) {
            match fw_step(obj, &alpha, val, j) {
                Some((a, v)) => {
                    alpha = a;
                    val = v;
                    grad = obj.gradient(&alpha)?;
                    continue;
                }
                None => return Ok((alpha, val, f64::INFINITY, it, false)),
            }
        }
        gap = fw_gap(&alpha, &grad);
        if gap <= opts.tol {
            return Ok((alpha, val, gap, it, true));
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let trial: Vec<f64> = alpha.iter().zip(&grad).map(|(a, g)| a + t * g).collect();
            let cand = project_simplex(&trial);
            let v = obj.value(&cand);
            let diff: Vec<f64> = cand.iter().zip(&alpha).map(|(c, a)| c - a).collect();
            let predicted = dot(&grad, &diff);
            if v.is_finite() && v >= val + 1e-4 * predicted && predicted > 0.0 {
                accepted = Some((cand, v, diff));
                break;
            }
            t /= 2.0;
        }
        match accepted {
            Some((cand, v, s)) => {
                let new_grad = obj.gradient(&cand)?;
                let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                step = if sy < 0.0 && new_grad.iter().all(|g| g.is_finite()) {
                    (dot(&s, &s) / -sy).clamp(1e-12, 1e12)
                } else {
                    (t * 2.0).min(1e12)
                };
                alpha = cand;
                val = v;
                grad = new_grad;
            }
            None => {
                // projected steps stalled; fall back to the best Frank-Wolfe vertex
                let j = (0..dim)
                    .max_by(|a, b| grad[*a].partial_cmp(&grad[*b]).expect("finite"))
                    .expect("nonempty");
                match fw_step(obj, &alpha, val, j) {
                    Some((a, v)) => {
                        alpha = a;
                        val = v;
                        grad = obj.gradient(&alpha)?;
                        step = 1.0;
                    }
                    None => return Ok((alpha, val, gap, it, false)),
                }
            }
        }
    }
    Ok((alpha, val, gap, opts.max_iters, false))
}

/// `Phi(f)` over the full hull `Delta_n`.
pub fn phi_eval(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    f: &JointFunction,
    opts: &PotentialOptions,
) -> Result<PotentialResult> {
    phi_eval_on_face(family, spec, f, family.n(), opts)
}

/// `Phi(f)` over `Delta_face`, the hull of `P_0..P_face`.
pub fn phi_eval_on_face(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    f: &JointFunction,
    face: usize,
    opts: &PotentialOptions,
) -> Result<PotentialResult> {
    let obj = Objective::new(family, spec, f, face)?;
    let (alpha, value, gap, iters, converged) = solve(&obj, opts)?;
    let n = family.n();
    let pad = |a: &[f64]| {
        let mut v = a.to_vec();
        v.resize(n + 1, 0.0);
        HullPoint::from_weights_unchecked(v)
    };
    let mut set = vec![pad(&alpha)];
    for k in 0..obj.dim() {
        let mut e = vec![0.0; obj.dim()];
        e[k] = 1.0;
        if obj.value(&e) >= value - opts.tie_tol {
            let v = pad(&e);
            if !set.contains(&v) {
                set.push(v);
            }
        }
    }
    // collapsing the tail never lowers the objective in exact arithmetic, so
    // these projections are maximizers too; keep the ones that verify
    for i in 1..obj.dim() {
        let plus = projection_plus(&pad(&alpha), i)?;
        if obj.value(&plus.weights()[..obj.dim()]) >= value - opts.tie_tol && !set.contains(&plus) {
            set.push(plus);
        }
    }
    Ok(PotentialResult {
        value,
        maximizer_weights: pad(&alpha),
        maximizer_set: set,
        solver_iters: iters,
        gap,
        converged,
    })
}

/// Maximum of the objective over the simplex grid with spacing `resolution`.
pub fn phi_grid_oracle(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    f: &JointFunction,
    resolution: f64,
) -> Result<f64> {
    let n = family.n();
    if n > 4 {
        return Err(Error::EnumerationLimit {
            what: "grid oracle sample size",
            size: n as u128,
            limit: 4,
        });
    }
    let r = (1.0 / resolution).round() as usize;
    let count = binomial(r as u128 + n as u128, n as u128);
    if count > MAX_GRID_POINTS {
        return Err(Error::EnumerationLimit {
            what: "simplex grid points",
            size: count,
            limit: MAX_GRID_POINTS,
        });
    }
    let obj = Objective::new(family, spec, f, n)?;
    let best = (0..=r)
        .into_par_iter()
        .map(|first| {
            let mut best = f64::NEG_INFINITY;
            let mut counts = vec![0usize; n + 1];
            counts[0] = first;
            grid_rec(&obj, &mut counts, 1, r - first, r, &mut best);
            best
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(best)
}

fn grid_rec(obj: &Objective, counts: &mut Vec<usize>, pos: usize, left: usize, r: usize, best: &mut f64) {
    if pos == counts.len() - 1 {
        counts[pos] = left;
        let alpha: Vec<f64> = counts.iter().map(|c| *c as f64 / r as f64).collect();
        let v = obj.value(&alpha);
        if v > *best {
            *best = v;
        }
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        grid_rec(obj, counts, pos + 1, left - c, r, best);
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// `B_Phi(f || f') = Phi(f) - Phi(f') + sup_{P in dPhi(f')} <P, f' - f>`,
/// with the supremum taken over the maximizer set at `f'`.
pub fn bregman_phi(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    f: &JointFunction,
    f_prime: &JointFunction,
    opts: &PotentialOptions,
) -> Result<BregmanValue> {
    let a = phi_eval(family, spec, f, opts)?;
    let b = phi_eval(family, spec, f_prime, opts)?;
    let diff = f_prime - f;
    let mut sup = f64::NEG_INFINITY;
    for alpha in &b.maximizer_set {
        sup = sup.max(hull_point(family, alpha)?.pairing(&diff));
    }
    Ok(BregmanValue {
        value: a.value - b.value + sup,
        phi_f: a,
        phi_f_prime: b,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BregmanValue {
    pub value: f64,
    pub phi_f: PotentialResult,
    pub phi_f_prime: PotentialResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Report {
    /// `Phi(eta L_n)`.
    pub lhs: f64,
    /// `B_Phi(eta L_i || eta L_{i-1})` for `i = 1..=n`.
    pub terms: Vec<f64>,
    pub rhs: f64,
    pub slack: f64,
}

/// `Phi(eta L_n) <= sum_i B_Phi(eta L_i || eta L_{i-1})`.
pub fn verify_theorem2(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    centered: &LossTable,
    eta: f64,
    opts: &PotentialOptions,
) -> Result<Theorem2Report> {
    let n = family.n();
    let ds = family.datasets();
    let fs = (0..=n)
        .map(|i| Ok(partial_average_loss(centered, ds, i)? * eta))
        .collect::<Result<Vec<_>>>()?;
    let lhs = phi_eval(family, spec, &fs[n], opts)?.value;
    let terms = (1..=n)
        .map(|i| Ok(bregman_phi(family, spec, &fs[i], &fs[i - 1], opts)?.value))
        .collect::<Result<Vec<_>>>()?;
    let rhs: f64 = terms.iter().sum();
    Ok(Theorem2Report {
        lhs,
        terms,
        rhs,
        slack: rhs - lhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, slack: rhs - lhs }
    }
}

/// One Bregman step against its smoothness bound: strong convexity gives
/// `eta^2 E||l(., Z)||_*^2 / (alpha n^2)`, `p`-uniform convexity gives
/// `|eta|^q E||l(., Z)||_*^q / (alpha^{q-1} n^q)`.
pub fn verify_lemma3(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    centered: &LossTable,
    eta: f64,
    i: usize,
    cert: &ConvexityCertificate,
    opts: &PotentialOptions,
) -> Result<InequalityCheck> {
    let n = family.n();
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, max: n });
    }
    let ds = family.datasets();
    let f = partial_average_loss(centered, ds, i)? * eta;
    let fp = partial_average_loss(centered, ds, i - 1)? * eta;
    let b = bregman_phi(family, spec, &f, &fp, opts)?.value;
    let nf = n as f64;
    let rhs = match cert.regime {
        Regime::Strong => {
            let m = loss_dual_moment_power(centered, ds.mu(), &cert.norm, 2.0)?;
            eta * eta * m / (cert.alpha * nf * nf)
        }
        Regime::PUniform(p) => {
            let q = conjugate_exponent(p as f64);
            let m = loss_dual_moment_power(centered, ds.mu(), &cert.norm, q)?;
            (eta.abs() / nf).powf(q) * m / cert.alpha.powf(q - 1.0)
        }
    };
    Ok(InequalityCheck::new(b, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma6Report {
    /// `B_Phi(f || f') <= ||f - f'||_{mu,*}^2 / alpha`.
    pub smoothness: InequalityCheck,
    /// `||P - P'||_mu <= ||f - f'||_{mu,*} / alpha` for the maximizers.
    pub distance: InequalityCheck,
}

/// Smoothness of `Phi` under a strongly convex `H`.
pub fn verify_lemma6(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    f: &JointFunction,
    f_prime: &JointFunction,
    cert: &ConvexityCertificate,
    opts: &PotentialOptions,
) -> Result<Lemma6Report> {
    if cert.regime != Regime::Strong {
        return Err(Error::Parameter("smoothness check needs a strong-convexity certificate".into()));
    }
    let lifted = NormSpec::lifted(cert.norm.clone(), family.datasets().probs().to_vec())?;
    let b = bregman_phi(family, spec, f, f_prime, opts)?;
    let dual = lifted.dual_joint(&(f - f_prime))?;
    let p = hull_point(family, &b.phi_f.maximizer_weights)?;
    let pp = hull_point(family, &b.phi_f_prime.maximizer_weights)?;
    let dist = lifted.eval_joint(&p.difference(&pp))?;
    Ok(Lemma6Report {
        smoothness: InequalityCheck::new(b.value, dual * dual / cert.alpha),
        distance: InequalityCheck::new(dist, dual / cert.alpha),
    })
}

/// `log E_{P_0} e^f`, the conjugate of relative entropy over all joint laws.
pub fn dv_conjugate_closed_form(p0: &JointDistribution, f: &JointFunction) -> f64 {
    log_sum_exp(
        p0.table()
            .iter()
            .zip(f.iter())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, v)| p.ln() + v),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtrlStep {
    pub t: usize,
    /// The maximizer moved into `Delta_{t-1}`.
    pub weights: HullPoint,
    /// `<P~_t, l_t>`.
    pub pairing: f64,
    /// Largest `|<P, l_t>|` over the projected maximizer set.
    pub face_pairing: f64,
    /// `<P_alpha, l_t>` at the solver's own maximizer, before projection.
    pub raw_pairing: f64,
    /// Objective loss from the projection, `objective(alpha) - objective(alpha+)`.
    pub projection_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtrlReport {
    pub steps: Vec<FtrlStep>,
    pub max_abs_pairing: f64,
    /// `(1/n) sum_t <P~_t, l_t>`.
    pub online_loss: f64,
    /// `(1/n) sum_t <P_n - P~_t, l_t>`.
    pub regret: f64,
    pub gen_true: f64,
    /// `|online_loss + regret - gen_true|`.
    pub decomposition_error: f64,
}

/// Follow-the-regularized-leader over `Delta_n` with regularizer `H / eta`.
pub fn ftrl_trajectory(
    family: &MixedBagFamily,
    spec: &DivergenceSpec,
    centered: &LossTable,
    eta: f64,
    opts: &PotentialOptions,
) -> Result<FtrlReport> {
    let n = family.n();
    let ds = family.datasets();
    let nf = n as f64;
    let mut steps = Vec::with_capacity(n);
    let mut online = 0.0;
    let mut regret = 0.0;
    let pn = family.member(n);
    for t in 1..=n {
        let f = partial_average_loss(centered, ds, t - 1)? * eta;
        let lt = sample_loss(centered, ds, t)?;
        let res = phi_eval(family, spec, &f, opts)?;
        let plus = projection_plus(&res.maximizer_weights, t)?;
        let obj = Objective::new(family, spec, &f, n)?;
        let projection_loss = res.value - obj.value(plus.weights());
        let p = hull_point(family, &plus)?;
        let pairing = p.pairing(&lt);
        let mut face_pairing = pairing.abs();
        for a in &res.maximizer_set {
            let q = hull_point(family, &projection_plus(a, t)?)?;
            face_pairing = face_pairing.max(q.pairing(&lt).abs());
        }
        let raw_pairing = hull_point(family, &res.maximizer_weights)?.pairing(&lt);
        online += pairing / nf;
        regret += (pn.pairing(&lt) - pairing) / nf;
        steps.push(FtrlStep {
            t,
            weights: plus,
            pairing,
            face_pairing,
            raw_pairing,
            projection_loss,
        });
    }
    let gen_true = generalization_error(pn, centered, ds);
    let max_abs_pairing = steps.iter().map(|s| s.face_pairing).fold(0.0, f64::max);
    Ok(FtrlReport {
        steps,
        max_abs_pairing,
        online_loss: online,
        regret,
        gen_true,
        decomposition_error: (online + regret - gen_true).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghost::build_family;
    use crate::prob::{centered_loss, product_measure, InstanceSpace, Kernel};

    fn gibbs_family(n: usize, beta: f64) -> (MixedBagFamily, LossTable) {
        let mu = InstanceSpace::from_probs(vec![0.5, 0.3, 0.2]).unwrap();
        let ds = product_measure(&mu, n).unwrap();
        let loss = LossTable::from_fn(3, 3, |w, z| if w == z { 0.0 } else { 1.0 }).unwrap();
        let kappa = Kernel::from_fn(3, &ds, |t| {
            let e: Vec<f64> = (0..3)
                .map(|w| (-beta * t.iter().map(|&z| loss.get(w, z)).sum::<f64>() / n as f64).exp())
                .collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|x| x / z).collect()
        })
        .unwrap();
        (build_family(&kappa, &ds).unwrap(), centered_loss(&loss, &mu))
    }

    fn kl(fam: &MixedBagFamily) -> DivergenceSpec {
        DivergenceSpec::parse("kl", fam.base_marginal(), None).unwrap()
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        let p = project_simplex(&[2.0, 0.0, -1.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn potential_of_zero_is_zero() {
        let (fam, _) = gibbs_family(2, 2.0);
        let f = JointFunction::zeros((3, 9));
        let r = phi_eval(&fam, &kl(&fam), &f, &PotentialOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.maximizer_weights, HullPoint::vertex(2, 0));
    }

    #[test]
    fn matches_grid_and_fenchel_young() {
        let (fam, c) = gibbs_family(2, 3.0);
        let spec = kl(&fam);
        let f = partial_average_loss(&c, fam.datasets(), 2).unwrap() * 4.0;
        let r = phi_eval(&fam, &spec, &f, &PotentialOptions::default()).unwrap();
        assert!(r.converged && r.gap <= 1e-9, "{r:?}");
        let grid = phi_grid_oracle(&fam, &spec, &f, 1.0 / 200.0).unwrap();
        assert!(grid <= r.value + 1e-9);
        assert!(r.value - grid < 1e-4);
        let pn = fam.member(2);
        let fy = pn.pairing(&f) - spec.H_eval(pn, fam.datasets()).unwrap();
        assert!(r.value >= fy - 1e-12);
        let p0 = fam.member(0);
        assert!(r.value <= dv_conjugate_closed_form(p0, &f) + 1e-9);
    }

    #[test]
    fn dv_example() {
        let ds = product_measure(&InstanceSpace::uniform(1).unwrap(), 1).unwrap();
        let p0 = JointDistribution::product(&[0.5, 0.5], &ds);
        let mut f = JointFunction::zeros((2, 1));
        f[[1, 0]] = 3f64.ln();
        assert!((dv_conjugate_closed_form(&p0, &f) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(dv_conjugate_closed_form(&p0, &JointFunction::zeros((2, 1))), 0.0);
    }

    #[test]
    fn telescoping_and_step_bound_on_gibbs() {
        let (fam, c) = gibbs_family(3, 2.0);
        let spec = kl(&fam);
        let cert = spec.certificate().unwrap();
        let opts = PotentialOptions::default();
        for eta in [-2.0, -0.5, 0.5, 2.0] {
            let r = verify_theorem2(&fam, &spec, &c, eta, &opts).unwrap();
            assert!(r.slack >= -1e-7, "eta {eta}: {r:?}");
            for i in 1..=3 {
                let l = verify_lemma3(&fam, &spec, &c, eta, i, &cert, &opts).unwrap();
                assert!(l.slack >= -1e-7, "eta {eta} i {i}: {l:?}");
            }
        }
        let r = verify_theorem2(&fam, &spec, &c, 0.0, &opts).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn ftrl_pairings_vanish() {
        let (fam, c) = gibbs_family(3, 4.0);
        let r = ftrl_trajectory(&fam, &kl(&fam), &c, 1.5, &PotentialOptions::default()).unwrap();
        assert!(r.max_abs_pairing <= 1e-8, "{r:?}");
        assert!(r.decomposition_error <= 1e-8);
        assert_eq!(r.steps[0].weights, HullPoint::vertex(3, 0));
        for s in &r.steps {
            assert!(s.projection_loss.abs() < 1e-8, "{s:?}");
        }
    }

    #[test]
    fn independent_algorithm_has_zero_potential() {
        let mu = InstanceSpace::uniform(2).unwrap();
        let ds = product_measure(&mu, 3).unwrap();
        let fam = build_family(&Kernel::constant(vec![0.3, 0.7], &ds).unwrap(), &ds).unwrap();
        let loss = LossTable::from_fn(2, 2, |w, z| (w + z) as f64).unwrap();
        let c = centered_loss(&loss, &mu);
        let r = verify_theorem2(&fam, &kl(&fam), &c, 1.0, &PotentialOptions::default()).unwrap();
        assert!(r.lhs.abs() < 1e-9 && r.rhs.abs() < 1e-9, "{r:?}");
    }
}
