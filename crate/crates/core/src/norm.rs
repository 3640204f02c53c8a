//! Norms on signed measures over hypotheses and their dual norms on functions.
//!
//! Total variation follows the convention `||Q - Q'||_TV = sum |Q - Q'|`
//! (twice the usual half-TV), so its dual is the plain supremum norm.
//! Dual norms are evaluated on functions as given; [`NormSpec::zero_mass_dual`]
//! gives the smaller value obtained when only zero-mass measures are paired.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{normalize, LossTable};
use crate::transport::{smoothed_signed_mass, QuadratureOptions};

/// Support size up to which exact LP dual norms are computed.
pub const EXACT_DUAL_MAX_SUPPORT: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    Tv,
    /// `(sum_w base_w |delta_w / base_w|^p)^{1/p}`.
    WeightedLp { p: f64, base: Vec<f64> },
    /// `||G_sigma delta||_TV` for hypotheses embedded at `points` in `R^1`.
    SmoothedTv { sigma: f64, points: Vec<f64> },
    /// `(E_S ||delta_{|S}||^r)^{1/r}` over datasets with law `mu_n`.
    Lifted {
        inner: Box<NormSpec>,
        mu_n: Vec<f64>,
        exponent: f64,
    },
}

/// Holder conjugate of `p`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

impl NormSpec {
    pub fn weighted_lp(p: f64, base: Vec<f64>) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::Parameter(format!("weighted L_p needs p >= 1, got {p}")));
        }
        if base.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Parameter("base measure must be nonnegative".into()));
        }
        Ok(NormSpec::WeightedLp { p, base })
    }

    pub fn smoothed_tv(sigma: f64, points: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(NormSpec::SmoothedTv { sigma, points })
    }

    /// The squared-average lift used by the strong-convexity machinery.
    pub fn lifted(inner: NormSpec, mu_n: Vec<f64>) -> Result<Self> {
        Self::lifted_with_exponent(inner, mu_n, 2.0)
    }

    pub fn lifted_with_exponent(inner: NormSpec, mu_n: Vec<f64>, exponent: f64) -> Result<Self> {
        if matches!(inner, NormSpec::Lifted { .. }) {
            return Err(Error::Parameter("lifted norms do not nest".into()));
        }
        if !(exponent >= 1.0) {
            return Err(Error::Parameter(format!("lift exponent must be >= 1, got {exponent}")));
        }
        let mu_n = normalize(mu_n, "dataset law")?;
        Ok(NormSpec::Lifted {
            inner: Box::new(inner),
            mu_n,
            exponent,
        })
    }

    /// Registry name, e.g. `tv`, `lp:2:q0`, `smoothed-tv:0.5`, `lifted:tv`.
    pub fn name(&self) -> String {
        match self {
            NormSpec::Tv => "tv".into(),
            NormSpec::WeightedLp { p, .. } => format!("lp:{p}:q0"),
            NormSpec::SmoothedTv { sigma, .. } => format!("smoothed-tv:{sigma}"),
            NormSpec::Lifted { inner, .. } => format!("lifted:{}", inner.name()),
        }
    }

    /// Norm of a signed measure over hypotheses.
    pub fn eval(&self, delta: &[f64]) -> Result<f64> {
        match self {
            NormSpec::Tv => Ok(delta.iter().map(|d| d.abs()).sum()),
            NormSpec::WeightedLp { p, base } => {
                check_len(delta.len(), base.len())?;
                let mut ratios = Vec::with_capacity(delta.len());
                for (d, b) in delta.iter().zip(base) {
                    if *d == 0.0 {
                        continue;
                    }
                    if *b == 0.0 {
                        return Err(Error::AbsoluteContinuity(
                            "signed measure charges a point outside the base support".into(),
                        ));
                    }
                    ratios.push((d / b, *b));
                }
                Ok(power_mean(ratios.into_iter(), *p))
            }
            NormSpec::SmoothedTv { sigma, points } => {
                check_len(delta.len(), points.len())?;
                Ok(smoothed_signed_mass(points, delta, *sigma, &QuadratureOptions::default()).value)
            }
            NormSpec::Lifted { .. } => Err(Error::Dimension(
                "lifted norms act on joint tables; use eval_joint".into(),
            )),
        }
    }

    /// Lifted norm of a signed joint table `(hypothesis, dataset)`.
    pub fn eval_joint(&self, delta: &Array2<f64>) -> Result<f64> {
        let NormSpec::Lifted { inner, mu_n, exponent } = self else {
            return Err(Error::Dimension("eval_joint needs a lifted norm".into()));
        };
        check_len(delta.ncols(), mu_n.len())?;
        let mut total = 0.0;
        for (s, m) in mu_n.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let cond: Vec<f64> = delta.column(s).iter().map(|d| d / m).collect();
            total += m * inner.eval(&cond)?.powf(*exponent);
        }
        Ok(total.powf(1.0 / exponent))
    }

    /// Dual norm of a function on hypotheses, evaluated as given.
    pub fn dual(&self, f: &[f64]) -> Result<f64> {
        match self {
            NormSpec::Tv => Ok(sup_abs(f)),
            NormSpec::WeightedLp { p, base } => {
                check_len(f.len(), base.len())?;
                Ok(weighted_lq(f, base, conjugate_exponent(*p)))
            }
            NormSpec::SmoothedTv { sigma, points } => {
                check_len(f.len(), points.len())?;
                smoothed_tv_dual_lp(f, points, *sigma)
            }
            NormSpec::Lifted { .. } => Err(Error::Dimension(
                "lifted dual acts on joint functions; use dual_joint".into(),
            )),
        }
    }

    /// Dual seminorm `(E_S ||f(., S)||_*^{r*})^{1/r*}` of a joint function.
    pub fn dual_joint(&self, f: &Array2<f64>) -> Result<f64> {
        let NormSpec::Lifted { inner, mu_n, exponent } = self else {
            return Err(Error::Dimension("dual_joint needs a lifted norm".into()));
        };
        check_len(f.ncols(), mu_n.len())?;
        let r = conjugate_exponent(*exponent);
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        for (s, m) in mu_n.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let col: Vec<f64> = f.column(s).to_vec();
            let d = inner.dual(&col)?;
            if r.is_infinite() {
                worst = worst.max(d);
            } else {
                total += m * d.powf(r);
            }
        }
        Ok(if r.is_infinite() { worst } else { total.powf(1.0 / r) })
    }

    /// `inf_c ||f - c||_*`: the dual norm restricted to zero-mass measures.
    pub fn zero_mass_dual(&self, f: &[f64]) -> Result<f64> {
        match self {
            NormSpec::Tv => {
                let (lo, hi) = f
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
                Ok(((hi - lo) / 2.0).max(0.0))
            }
            NormSpec::WeightedLp { p, base } => {
                check_len(f.len(), base.len())?;
                let q = conjugate_exponent(*p);
                let (lo, hi) = f
                    .iter()
                    .zip(base)
                    .filter(|(_, b)| **b > 0.0)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
                if lo > hi {
                    return Ok(0.0);
                }
                let c = golden_section_min(lo, hi, |c| {
                    let shifted: Vec<f64> = f.iter().map(|x| x - c).collect();
                    weighted_lq(&shifted, base, q)
                });
                let shifted: Vec<f64> = f.iter().map(|x| x - c).collect();
                Ok(weighted_lq(&shifted, base, q))
            }
            NormSpec::SmoothedTv { .. } => self.dual(f),
            NormSpec::Lifted { .. } => Err(Error::Dimension("use dual_joint for lifted norms".into())),
        }
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("length {a} does not match {b}")));
    }
    Ok(())
}

fn sup_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn weighted_lq(f: &[f64], base: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return f
            .iter()
            .zip(base)
            .filter(|(_, b)| **b > 0.0)
            .fold(0.0, |m, (x, _)| m.max(x.abs()));
    }
    power_mean(f.iter().zip(base).map(|(x, b)| (*x, *b)), q)
}

/// `(sum_i w_i |x_i|^p)^{1/p}`, scaled by `max |x_i|` so large `p` cannot underflow.
fn power_mean(pairs: impl Iterator<Item = (f64, f64)> + Clone, p: f64) -> f64 {
    let top = pairs
        .clone()
        .filter(|(_, w)| *w > 0.0)
        .fold(0.0, |m: f64, (x, _)| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let total: f64 = pairs.map(|(x, w)| w * (x.abs() / top).powf(p)).sum();
    top * total.powf(1.0 / p)
}

fn golden_section_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Exact smoothed-TV dual over zero-mass measures on the given points:
/// `max <f, delta>` s.t. `sum delta = 0`, `||G_sigma delta||_TV <= 1`, with the
/// TV integral discretized on the trapezoid grid.
pub fn smoothed_tv_dual_lp(f: &[f64], points: &[f64], sigma: f64) -> Result<f64> {
    if points.len() > EXACT_DUAL_MAX_SUPPORT {
        return Err(Error::EnumerationLimit {
            what: "support of the exact smoothed dual",
            size: points.len() as u128,
            limit: EXACT_DUAL_MAX_SUPPORT as u128,
        });
    }
    // a singular basis is an accident of the grid; nearby grids avoid it
    let mut last = None;
    for per_sigma in [25.0, 24.0, 27.0, 31.0] {
        match smoothed_tv_dual_lp_on_grid(f, points, sigma, per_sigma) {
            Ok(v) => return Ok(v),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn smoothed_tv_dual_lp_on_grid(f: &[f64], points: &[f64], sigma: f64, per_sigma: f64) -> Result<f64> {
    let opts = QuadratureOptions::default();
    let lo = points.iter().cloned().fold(f64::INFINITY, f64::min) - opts.window * sigma;
    let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + opts.window * sigma;
    let h0 = sigma / per_sigma;
    let steps = ((hi - lo) / h0).ceil() as usize;
    let h = (hi - lo) / steps as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());

    // The LP dual: min lambda s.t. f_j - c = sum_g w_g K(x_g, p_j) y_g and
    // |y_g| <= lambda. Nearby points give nearly parallel rows, so the
    // equality system is replaced by an orthonormal equivalent first.
    let cols = steps + 2;
    let mut rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut r: Vec<f64> = (0..=steps)
                .map(|g| {
                    let x = lo + g as f64 * h;
                    let w = if g == 0 || g == steps { h / 2.0 } else { h };
                    w * norm * (-(x - p) * (x - p) / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            r.push(1.0);
            r
        })
        .collect();
    let mut rhs = f.to_vec();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..rows.len() {
        let size: f64 = rows[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        // two Gram-Schmidt passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for &i in &kept {
                let proj: f64 = rows[j].iter().zip(&rows[i]).map(|(a, b)| a * b).sum();
                let (ri, fi) = (rows[i].clone(), rhs[i]);
                rows[j].iter_mut().zip(&ri).for_each(|(a, b)| *a -= proj * b);
                rhs[j] -= proj * fi;
            }
        }
        let rest: f64 = rows[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if rest <= 1e-10 * size {
            if rhs[j].abs() > 1e-9 * (1.0 + f.iter().fold(0.0, |m: f64, x| m.max(x.abs()))) {
                return Err(Error::Lp("coincident points carry different values".into()));
            }
            continue;
        }
        rows[j].iter_mut().for_each(|a| *a /= rest);
        rhs[j] /= rest;
        kept.push(j);
    }

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let lambda = lp.add_var(1.0, (0.0, f64::INFINITY));
    let vars: Vec<_> = (0..cols)
        .map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for &j in &kept {
        let row: Vec<_> = vars
            .iter()
            .zip(&rows[j])
            .filter(|(_, a)| a.abs() > 1e-15)
            .map(|(v, a)| (*v, *a))
            .collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, rhs[j]);
    }
    for y in &vars[..cols - 1] {
        lp.add_constraint([(*y, 1.0), (lambda, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(*y, -1.0), (lambda, -1.0)], ComparisonOp::Le, 0.0);
    }
    let sol = crate::transport::solve_lp(&lp)?;
    Ok(sol.objective())
}

/// Bounds `beta_j` on the `j`-th directional derivatives of a function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DerivativeBounds {
    /// `beta_j <= beta` for every `j`.
    Uniform(f64),
    /// `beta_0, beta_1, ...`; later derivatives vanish.
    Sequence(Vec<f64>),
    /// `beta_j <= beta ratio^j`.
    Geometric { beta: f64, ratio: f64 },
}

/// `sum_j (sigma sqrt(d))^j beta_j`, an upper bound on the smoothed-TV dual norm.
pub fn smoothed_dual_bound(bounds: &DerivativeBounds, sigma: f64, d: usize) -> Result<f64> {
    let r = sigma * (d as f64).sqrt();
    match bounds {
        DerivativeBounds::Uniform(beta) => {
            if *beta < 0.0 {
                return Err(Error::Parameter("derivative bounds must be nonnegative".into()));
            }
            if r >= 1.0 {
                return Err(Error::DivergentSeries(r));
            }
            Ok(beta / (1.0 - r))
        }
        DerivativeBounds::Sequence(betas) => {
            if betas.iter().any(|b| *b < 0.0) {
                return Err(Error::Parameter("derivative bounds must be nonnegative".into()));
            }
            let mut total = 0.0;
            let mut factor = 1.0;
            for b in betas {
                let inc = factor * b;
                total += inc;
                factor *= r;
            }
            Ok(total)
        }
        DerivativeBounds::Geometric { beta, ratio } => {
            if *beta < 0.0 || *ratio < 0.0 {
                return Err(Error::Parameter("derivative bounds must be nonnegative".into()));
            }
            if r * ratio >= 1.0 {
                return Err(Error::DivergentSeries(r * ratio));
            }
            Ok(beta / (1.0 - r * ratio))
        }
    }
}

/// `E_Z ||centered(., Z)||_*^2`.
pub fn loss_dual_moment(centered: &LossTable, mu: &[f64], spec: &NormSpec) -> Result<f64> {
    loss_dual_moment_power(centered, mu, spec, 2.0)
}

/// `E_Z ||centered(., Z)||_*^r`.
pub fn loss_dual_moment_power(centered: &LossTable, mu: &[f64], spec: &NormSpec, r: f64) -> Result<f64> {
    let mut total = 0.0;
    for (z, m) in mu.iter().enumerate() {
        if *m == 0.0 {
            continue;
        }
        total += m * spec.dual(&centered.column(z))?.powf(r);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        let d = [0.5, -0.5];
        assert_eq!(NormSpec::Tv.eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(NormSpec::Tv.eval(&d).unwrap(), 1.0);
        let l2 = NormSpec::weighted_lp(2.0, vec![0.5, 0.5]).unwrap();
        assert!((l2.eval(&d).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn absolute_continuity_is_enforced() {
        let l2 = NormSpec::weighted_lp(2.0, vec![1.0, 0.0]).unwrap();
        assert!(matches!(l2.eval(&[0.5, -0.5]), Err(Error::AbsoluteContinuity(_))));
    }

    #[test]
    fn dual_examples() {
        assert_eq!(NormSpec::Tv.dual(&[0.5, -0.5]).unwrap(), 0.5);
        let lq = NormSpec::weighted_lp(3.0, vec![0.2, 0.3, 0.5]).unwrap();
        assert!((lq.dual(&[-1.7, -1.7, -1.7]).unwrap() - 1.7).abs() < 1e-14);
    }

    #[test]
    fn zero_mass_dual_is_smaller() {
        let f = [1.0, 3.0, -0.5];
        assert_eq!(NormSpec::Tv.zero_mass_dual(&f).unwrap(), 1.75);
        let l2 = NormSpec::weighted_lp(2.0, vec![0.2, 0.3, 0.5]).unwrap();
        let mean: f64 = 0.2 * 1.0 + 0.3 * 3.0 + 0.5 * -0.5;
        let centered = [1.0 - mean, 3.0 - mean, -0.5 - mean];
        let expect = l2.dual(&centered).unwrap();
        assert!((l2.zero_mass_dual(&f).unwrap() - expect).abs() < 1e-12);
        assert!(l2.zero_mass_dual(&f).unwrap() <= l2.dual(&f).unwrap());
    }

    #[test]
    fn derivative_series_bound_examples() {
        let b = smoothed_dual_bound(&DerivativeBounds::Uniform(1.0), 0.5, 1).unwrap();
        assert!((b - 2.0).abs() < 1e-15);
        for d in [1, 2, 5, 10] {
            let sigma = 1.0 / (2.0 * (d as f64).sqrt());
            let b = smoothed_dual_bound(&DerivativeBounds::Uniform(0.7), sigma, d).unwrap();
            assert!((b - 1.4).abs() < 1e-12);
        }
        let b = smoothed_dual_bound(&DerivativeBounds::Sequence(vec![1.0]), 0.9, 1).unwrap();
        assert_eq!(b, 1.0);
        assert_eq!(
            smoothed_dual_bound(&DerivativeBounds::Uniform(1.0), 1.0, 1),
            Err(Error::DivergentSeries(1.0))
        );
    }

    #[test]
    fn geometric_partial_sums_match_closed_form() {
        let seq = DerivativeBounds::Sequence(vec![1.0; 60]);
        let a = smoothed_dual_bound(&seq, 0.5, 1).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_moment_examples() {
        let loss = LossTable::from_fn(2, 2, |w, z| if w == z { 0.0 } else { 1.0 }).unwrap();
        let mu = [0.5, 0.5];
        let c = crate::prob::centered_loss(&loss, &crate::prob::InstanceSpace::uniform(2).unwrap());
        assert!((loss_dual_moment(&c, &mu, &NormSpec::Tv).unwrap() - 0.25).abs() < 1e-15);
        let l2 = NormSpec::weighted_lp(2.0, vec![0.5, 0.5]).unwrap();
        assert!((loss_dual_moment(&c, &mu, &l2).unwrap() - 0.25).abs() < 1e-15);
        let constant = crate::prob::centered_loss(
            &LossTable::from_fn(2, 2, |_, _| 2.0).unwrap(),
            &crate::prob::InstanceSpace::uniform(2).unwrap(),
        );
        assert_eq!(loss_dual_moment(&constant, &mu, &NormSpec::Tv).unwrap(), 0.0);
    }

    #[test]
    fn lifted_norm_and_seminorm() {
        let mu_n = vec![0.5, 0.5, 0.0];
        let lifted = NormSpec::lifted(NormSpec::Tv, mu_n).unwrap();
        let mut delta = Array2::zeros((2, 3));
        delta[[0, 0]] = 0.25;
        delta[[1, 0]] = -0.25;
        // conditional difference on s=0 has TV 1.0; s=1 has 0
        assert!((lifted.eval_joint(&delta).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let mut f = Array2::zeros((2, 3));
        f[[0, 2]] = 5.0;
        f[[1, 2]] = -3.0;
        assert_eq!(lifted.dual_joint(&f).unwrap(), 0.0);
    }

    #[test]
    fn smoothed_dual_lp_for_constant_and_linear_functions() {
        let pts = [0.0, 1.0];
        assert!(smoothed_tv_dual_lp(&[2.0, 2.0], &pts, 0.5).unwrap().abs() < 1e-9);
        let v = smoothed_tv_dual_lp(&[0.0, 1.0], &pts, 0.5).unwrap();
        // one direction: delta = t(e1 - e0) with ||.||_sigma = t * tv(d0,d1)
        let tv = crate::transport::smoothed_tv(
            &crate::transport::PointCloud::point_mass(vec![0.0]),
            &crate::transport::PointCloud::point_mass(vec![1.0]),
            0.5,
        )
        .unwrap()
        .value;
        assert!((v - 1.0 / tv).abs() < 1e-3, "{v} vs {}", 1.0 / tv);
    }
}
