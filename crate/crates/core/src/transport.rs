//! Wasserstein-2 transport, Gaussian smoothing and smoothed divergences.
//!
//! Smoothed quantities in one dimension are integrated on a uniform
//! trapezoid grid covering `[min support - 8 sigma, max support + 8 sigma]`
//! with step `sigma / 50`. The step is halved until two successive values
//! agree to the requested tolerance; the last difference is reported as the
//! achieved tolerance. Higher dimensions use seeded Monte Carlo.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::prob::normalize;

/// Largest support accepted by the exact transport LP.
pub const MAX_SUPPORT: usize = 64;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A finitely supported distribution on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points.first().map_or(0, Vec::len);
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::Dimension("points must share a positive dimension".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("points must be finite".into()));
        }
        let weights = normalize(weights, "point cloud weights")?;
        Ok(Self { points, weights })
    }

    pub fn from_1d(points: &[f64], weights: Vec<f64>) -> Result<Self> {
        Self::new(points.iter().map(|x| vec![*x]).collect(), weights)
    }

    pub fn uniform_1d(points: &[f64]) -> Result<Self> {
        Self::from_1d(points, vec![1.0 / points.len() as f64; points.len()])
    }

    pub fn point_mass(x: Vec<f64>) -> Self {
        Self {
            points: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.points.iter().zip(&self.weights) {
            m.iter_mut().zip(p).for_each(|(mi, x)| *mi += w * x);
        }
        m
    }

    fn extent_1d(&self) -> (f64, f64) {
        self.points
            .iter()
            .map(|p| p[0])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// An optimal coupling together with its squared-distance cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub matrix: Array2<f64>,
    pub cost: f64,
}

/// Squared Wasserstein-2 distance by the exact transport LP.
pub fn w2_exact(q: &PointCloud, q_prime: &PointCloud) -> Result<TransportPlan> {
    for (c, name) in [(q, "source"), (q_prime, "target")] {
        if c.len() > MAX_SUPPORT {
            return Err(Error::EnumerationLimit {
                what: if name == "source" { "source support" } else { "target support" },
                size: c.len() as u128,
                limit: MAX_SUPPORT as u128,
            });
        }
    }
    if q.dim() != q_prime.dim() {
        return Err(Error::Dimension("point clouds live in different dimensions".into()));
    }
    let (m, n) = (q.len(), q_prime.len());
    let cost = Array2::from_shape_fn((m, n), |(i, j)| squared_distance(&q.points[i], &q_prime.points[j]));

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = (0..m)
        .map(|i| (0..n).map(|j| lp.add_var(cost[[i, j]], (0.0, f64::INFINITY))).collect())
        .collect();
    for (i, row) in vars.iter().enumerate() {
        let expr: Vec<_> = row.iter().map(|v| (*v, 1.0)).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, q.weights[i]);
    }
    // the last column constraint is implied by the others
    for j in 0..n.saturating_sub(1) {
        let expr: Vec<_> = vars.iter().map(|row| (row[j], 1.0)).collect();
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, q_prime.weights[j]);
    }
    let solution = solve_lp(&lp)?;

    let mut matrix = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            matrix[[i, j]] = solution[vars[i][j]].max(0.0);
        }
    }
    let total: f64 = (&matrix * &cost).sum();
    Ok(TransportPlan { matrix, cost: total })
}

/// Solve with minilp, turning its internal panics on singular bases into errors.
pub(crate) fn solve_lp(lp: &minilp::Problem) -> Result<minilp::Solution> {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| lp.solve())) {
        Ok(r) => r.map_err(|e| Error::Lp(e.to_string())),
        Err(_) => Err(Error::Lp("solver hit a singular basis".into())),
    }
}

/// `W2^2` between `N(m1, s1^2)` and `N(m2, s2^2)`.
pub fn w2_gaussian(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    (m1 - m2).powi(2) + (s1 - s2).powi(2)
}

/// `KL(N(m1, v1) || N(m2, v2))` for variances `v1, v2`.
pub fn gaussian_kl(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * (v1 / v2 - 1.0 - (v1 / v2).ln() + (m1 - m2).powi(2) / v2)
}

/// The Gaussian mixture `G_sigma Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedDensity {
    cloud: PointCloud,
    sigma: f64,
}

pub fn gaussian_smooth(q: &PointCloud, sigma: f64) -> Result<SmoothedDensity> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("smoothing scale must be positive, got {sigma}")));
    }
    Ok(SmoothedDensity {
        cloud: q.clone(),
        sigma,
    })
}

impl SmoothedDensity {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    fn component_logs(&self, x: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let d = x.len() as f64;
        let s2 = self.sigma * self.sigma;
        let norm = d * (LN_SQRT_2PI + self.sigma.ln());
        let x = x.to_vec();
        self.cloud
            .points
            .iter()
            .zip(&self.cloud.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(move |(p, w)| w.ln() - squared_distance(&x, p) / (2.0 * s2) - norm)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(self.component_logs(x))
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.cloud.mean()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.cloud.len() - 1;
        for (i, w) in self.cloud.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.cloud.points[k]
            .iter()
            .map(|c| c + self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

pub(crate) fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Grid settings for one-dimensional smoothed integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Initial step is `sigma / steps_per_sigma`.
    pub steps_per_sigma: f64,
    /// Window half-width past the support, in units of sigma.
    pub window: f64,
    pub tol: f64,
    pub max_halvings: u32,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            steps_per_sigma: 50.0,
            window: 8.0,
            tol: 1e-6,
            max_halvings: 7,
        }
    }
}

/// A quadrature value with its step-halving convergence certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureValue {
    pub value: f64,
    /// `|I(h) - I(h/2)|` at the final step.
    pub achieved: f64,
    pub step: f64,
    pub converged: bool,
}

fn trapezoid(lo: f64, hi: f64, h: f64, f: &impl Fn(f64) -> f64) -> f64 {
    let steps = ((hi - lo) / h).ceil().max(1.0) as usize;
    let h = (hi - lo) / steps as f64;
    let inner: f64 = (1..steps).map(|k| f(lo + k as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

/// Integrate `f` over `[lo, hi]`, halving the step until stable.
pub fn integrate_1d(lo: f64, hi: f64, sigma: f64, opts: &QuadratureOptions, f: impl Fn(f64) -> f64) -> QuadratureValue {
    let mut h = sigma / opts.steps_per_sigma;
    let mut prev = trapezoid(lo, hi, h, &f);
    let mut achieved = f64::INFINITY;
    for _ in 0..=opts.max_halvings {
        h /= 2.0;
        let next = trapezoid(lo, hi, h, &f);
        achieved = (next - prev).abs();
        prev = next;
        if achieved < opts.tol {
            return QuadratureValue {
                value: next,
                achieved,
                step: h,
                converged: true,
            };
        }
    }
    QuadratureValue {
        value: prev,
        achieved,
        step: h,
        converged: false,
    }
}

fn window_1d(clouds: &[&PointCloud], sigma: f64, opts: &QuadratureOptions) -> Result<(f64, f64)> {
    if clouds.iter().any(|c| c.dim() != 1) {
        return Err(Error::Dimension(
            "quadrature path is one-dimensional; use the Monte Carlo estimator for d > 1".into(),
        ));
    }
    let (lo, hi) = clouds
        .iter()
        .map(|c| c.extent_1d())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    Ok((lo - opts.window * sigma, hi + opts.window * sigma))
}

/// `D_sigma(Q || Q') = KL(G_sigma Q || G_sigma Q')` by quadrature (d = 1).
pub fn smoothed_kl(q: &PointCloud, q_prime: &PointCloud, sigma: f64) -> Result<QuadratureValue> {
    smoothed_kl_with(q, q_prime, sigma, &QuadratureOptions::default())
}

pub fn smoothed_kl_with(
    q: &PointCloud,
    q_prime: &PointCloud,
    sigma: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureValue> {
    let (lo, hi) = window_1d(&[q, q_prime], sigma, opts)?;
    let a = gaussian_smooth(q, sigma)?;
    let b = gaussian_smooth(q_prime, sigma)?;
    let mut out = integrate_1d(lo, hi, sigma, opts, |x| {
        let la = a.log_density(&[x]);
        let lb = b.log_density(&[x]);
        la.exp() * (la - lb)
    });
    out.value = out.value.max(0.0);
    Ok(out)
}

/// `||Q - Q'||_sigma = ||G_sigma Q - G_sigma Q'||_TV` by quadrature (d = 1).
pub fn smoothed_tv(q: &PointCloud, q_prime: &PointCloud, sigma: f64) -> Result<QuadratureValue> {
    smoothed_tv_with(q, q_prime, sigma, &QuadratureOptions::default())
}

pub fn smoothed_tv_with(
    q: &PointCloud,
    q_prime: &PointCloud,
    sigma: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureValue> {
    let (lo, hi) = window_1d(&[q, q_prime], sigma, opts)?;
    let a = gaussian_smooth(q, sigma)?;
    let b = gaussian_smooth(q_prime, sigma)?;
    Ok(integrate_1d(lo, hi, sigma, opts, |x| (a.density(&[x]) - b.density(&[x])).abs()))
}

/// `int |sum_w delta_w N(x; points_w, sigma^2)| dx` for a signed measure on
/// one-dimensional points.
pub fn smoothed_signed_mass(points: &[f64], delta: &[f64], sigma: f64, opts: &QuadratureOptions) -> QuadratureValue {
    let lo = points.iter().cloned().fold(f64::INFINITY, f64::min) - opts.window * sigma;
    let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + opts.window * sigma;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    integrate_1d(lo, hi, sigma, opts, |x| {
        let v: f64 = points
            .iter()
            .zip(delta)
            .map(|(p, d)| d * (-(x - p) * (x - p) / (2.0 * sigma * sigma)).exp())
            .sum();
        (v * norm).abs()
    })
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// `D_sigma(Q || Q')` in any dimension by sampling from `G_sigma Q`.
pub fn smoothed_kl_mc(
    q: &PointCloud,
    q_prime: &PointCloud,
    sigma: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<McEstimate> {
    if q.dim() != q_prime.dim() {
        return Err(Error::Dimension("point clouds live in different dimensions".into()));
    }
    let a = gaussian_smooth(q, sigma)?;
    let b = gaussian_smooth(q_prime, sigma)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let x = a.sample(rng);
        let v = a.log_density(&x) - b.log_density(&x);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        samples,
    })
}

/// Both sides of `D_sigma(Q || Q') <= W2^2(Q, Q') / (2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma10Report {
    pub w2_squared: f64,
    pub transport_bound: f64,
    pub smoothed_kl: f64,
    pub slack: f64,
    pub quadrature_error: f64,
}

pub fn verify_lemma10(q: &PointCloud, q_prime: &PointCloud, sigma: f64) -> Result<Lemma10Report> {
    let plan = w2_exact(q, q_prime)?;
    let d = smoothed_kl(q, q_prime, sigma)?;
    let bound = plan.cost / (2.0 * sigma * sigma);
    Ok(Lemma10Report {
        w2_squared: plan.cost,
        transport_bound: bound,
        smoothed_kl: d.value,
        slack: bound - d.value,
        quadrature_error: d.achieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn w2_examples() {
        let q = PointCloud::from_1d(&[0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let plan = w2_exact(&q, &q).unwrap();
        assert!(plan.cost.abs() < 1e-12);
        for i in 0..3 {
            assert!((plan.matrix[[i, i]] - q.weights()[i]).abs() < 1e-12);
        }
        let a = PointCloud::point_mass(vec![0.0]);
        let b = PointCloud::point_mass(vec![1.0]);
        assert!((w2_exact(&a, &b).unwrap().cost - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_marginals_match() {
        let a = PointCloud::new(
            vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![-1.0, 0.5]],
            vec![0.3, 0.3, 0.4],
        )
        .unwrap();
        let b = PointCloud::new(vec![vec![0.5, 0.5], vec![2.0, -1.0]], vec![0.6, 0.4]).unwrap();
        let plan = w2_exact(&a, &b).unwrap();
        for (i, w) in a.weights().iter().enumerate() {
            assert!((plan.matrix.row(i).sum() - w).abs() < 1e-9);
        }
        for (j, w) in b.weights().iter().enumerate() {
            assert!((plan.matrix.column(j).sum() - w).abs() < 1e-9);
        }
    }

    #[test]
    fn support_guard() {
        let pts: Vec<f64> = (0..65).map(f64::from).collect();
        let a = PointCloud::uniform_1d(&pts).unwrap();
        assert!(matches!(w2_exact(&a, &a), Err(Error::EnumerationLimit { .. })));
    }

    #[test]
    fn gaussian_closed_forms() {
        assert_eq!(w2_gaussian(0.3, 1.2, 0.3, 1.2), 0.0);
        assert_eq!(w2_gaussian(0.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(w2_gaussian(0.0, 1.0, 0.0, 2.0), 1.0);
        assert!(gaussian_kl(0.4, 2.0, 0.4, 2.0).abs() < 1e-15);
    }

    #[test]
    fn smoothing_point_mass_is_gaussian() {
        let s = gaussian_smooth(&PointCloud::point_mass(vec![0.5]), 0.7).unwrap();
        let x: f64 = 1.3;
        let expected = (-(x - 0.5).powi(2) / (2.0 * 0.49)).exp() / (0.7 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((s.density(&[x]) - expected).abs() < 1e-15);
        assert!(gaussian_smooth(&PointCloud::point_mass(vec![0.0]), 0.0).is_err());
    }

    #[test]
    fn smoothed_density_integrates_to_one_and_keeps_mean() {
        let q = PointCloud::from_1d(&[-1.0, 0.0, 2.5], vec![0.2, 0.3, 0.5]).unwrap();
        let s = gaussian_smooth(&q, 0.4).unwrap();
        let opts = QuadratureOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let mass = integrate_1d(-1.0 - 3.2, 2.5 + 3.2, 0.4, &opts, |x| s.density(&[x]));
        assert!((mass.value - 1.0).abs() < 1e-8);
        let mean = integrate_1d(-1.0 - 3.2, 2.5 + 3.2, 0.4, &opts, |x| x * s.density(&[x]));
        assert!((mean.value - q.mean()[0]).abs() < 1e-8);
    }

    #[test]
    fn smoothed_kl_of_point_masses() {
        let a = PointCloud::point_mass(vec![0.0]);
        let b = PointCloud::point_mass(vec![1.0]);
        for sigma in [0.25, 0.5, 1.0, 2.0] {
            let d = smoothed_kl(&a, &b, sigma).unwrap();
            assert!((d.value - 1.0 / (2.0 * sigma * sigma)).abs() < 1e-6, "{sigma}: {d:?}");
            assert!(d.converged);
        }
        assert!(smoothed_kl(&a, &a, 0.5).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn smoothed_tv_washes_out() {
        let a = PointCloud::point_mass(vec![0.0]);
        let b = PointCloud::point_mass(vec![1.0]);
        let mut prev = f64::INFINITY;
        for sigma in [0.1, 0.5, 2.0, 10.0, 100.0] {
            let v = smoothed_tv(&a, &b, sigma).unwrap().value;
            assert!(v <= prev + 1e-9);
            prev = v;
        }
        assert!(prev < 0.01);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature_in_1d() {
        let a = PointCloud::from_1d(&[0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let b = PointCloud::from_1d(&[0.5], vec![1.0]).unwrap();
        let exact = smoothed_kl(&a, &b, 0.5).unwrap().value;
        let mc = smoothed_kl_mc(&a, &b, 0.5, 100_000, &mut stream(3, "mc", "kl")).unwrap();
        assert!((mc.mean - exact).abs() < 5.0 * mc.std_err, "{mc:?} vs {exact}");
    }

    #[test]
    fn transport_divergence_equality_for_point_masses() {
        let a = PointCloud::point_mass(vec![0.0]);
        let b = PointCloud::point_mass(vec![1.0]);
        let r = verify_lemma10(&a, &b, 0.5).unwrap();
        assert!(r.slack.abs() < 1e-6);
        assert!((r.transport_bound - 2.0).abs() < 1e-12);
    }
}
