//! Conditional dependence measures `h(Q)` relative to a base marginal `Q0`,
//! their lift `H(P) = E_S h(P_{|S})`, subgradients, Bregman divergences and
//! strong-convexity certificates.
//!
//! `h_eval` never fails: a violated absolute-continuity requirement yields
//! `f64::INFINITY`. Subgradients are returned with their `Q0`-mean removed.

use crate::error::{Error, Result};
use crate::norm::NormSpec;
use crate::prob::{normalize, DatasetSpace, JointDistribution, JointFunction};
use crate::rng::{dirichlet_on_support, stream};
use crate::transport::{gaussian_smooth, integrate_1d, smoothed_kl, PointCloud, QuadratureOptions};

/// Generator `phi` of an f-divergence `sum_w q0_w phi(q_w / q0_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiId {
    /// `(sqrt(x) - 1)^2`.
    Hellinger,
    /// `(x^a - a x + a - 1) / (a (a - 1))`, `a > 0`, `a != 1`.
    Tsallis(f64),
}

/// Generator `psi` of a Bregman divergence against a reference measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiId {
    /// `-ln x`, giving the Itakura-Saito divergence.
    NegLog,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Kl,
    ChiSq,
    /// `||Q - Q0||_{p,Q0}^2`, `p in (1, 2]`.
    PNormSquared { p: f64 },
    /// `||Q - Q0||_{p,Q0}^p`, `p >= 2`.
    PNormPowerP { p: f64 },
    FDiv { phi: PhiId, ratio_bound: Option<f64> },
    /// `sum_w nu_w D_psi(q_w / nu_w, q0_w / nu_w)`.
    Bregman { psi: PsiId, nu: Vec<f64> },
    /// `KL(G_sigma Q || G_sigma Q0)` for hypotheses embedded in `R^1`.
    SmoothedKl { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceSpec {
    family: Family,
    base: Vec<f64>,
    points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Strong,
    /// `h(Q) >= h(Q') + <g, Q - Q'> + (alpha/2) ||Q - Q'||^p`.
    PUniform(u32),
}

impl Regime {
    pub fn exponent(&self) -> f64 {
        match self {
            Regime::Strong => 2.0,
            Regime::PUniform(p) => *p as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate {
    pub alpha: f64,
    pub norm: NormSpec,
    pub regime: Regime,
}

impl DivergenceSpec {
    pub fn new(family: Family, base: Vec<f64>) -> Result<Self> {
        let base = normalize(base, "base marginal")?;
        match &family {
            Family::PNormSquared { p } if !(*p > 1.0 && *p <= 2.0) => {
                return Err(Error::Parameter(format!("p-norm-squared needs p in (1, 2], got {p}")))
            }
            Family::PNormPowerP { p } if !(*p >= 2.0) => {
                return Err(Error::Parameter(format!("p-norm-power needs p >= 2, got {p}")))
            }
            Family::FDiv { phi: PhiId::Tsallis(a), .. } if !(*a > 0.0) || *a == 1.0 => {
                return Err(Error::Parameter(format!("tsallis index must be positive and != 1, got {a}")))
            }
            Family::FDiv { ratio_bound: Some(m), .. } if !(*m >= 1.0) => {
                return Err(Error::Parameter(format!("ratio bound must be >= 1, got {m}")))
            }
            Family::Bregman { nu, .. } => {
                if nu.len() != base.len() {
                    return Err(Error::Dimension("reference measure length".into()));
                }
                if nu.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Parameter("reference measure must be nonnegative".into()));
                }
            }
            Family::SmoothedKl { .. } => {
                return Err(Error::Parameter("smoothed KL needs an embedding; use DivergenceSpec::smoothed_kl".into()))
            }
            _ => {}
        }
        Ok(Self { family, base, points: None })
    }

    pub fn smoothed_kl(sigma: f64, base: Vec<f64>, points: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        let base = normalize(base, "base marginal")?;
        if points.len() != base.len() {
            return Err(Error::Dimension("embedding length does not match the hypothesis count".into()));
        }
        Ok(Self {
            family: Family::SmoothedKl { sigma },
            base,
            points: Some(points),
        })
    }

    /// Itakura-Saito with the counting reference measure.
    pub fn itakura_saito(base: Vec<f64>) -> Result<Self> {
        let nu = vec![1.0; base.len()];
        Self::new(Family::Bregman { psi: PsiId::NegLog, nu }, base)
    }

    /// Parse a registry name against a base marginal. `points` is the
    /// one-dimensional embedding required by `smoothed-kl`.
    pub fn parse(name: &str, base: Vec<f64>, points: Option<&[f64]>) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::UnknownRegistry(format!("{name}: missing parameter")))?
                .parse::<f64>()
                .map_err(|_| Error::UnknownRegistry(format!("{name}: bad parameter")))
        };
        match head {
            "kl" => Self::new(Family::Kl, base),
            "chi2" => Self::new(Family::ChiSq, base),
            "pnorm2" => Self::new(Family::PNormSquared { p: num(arg)? }, base),
            "pnormp" => Self::new(Family::PNormPowerP { p: num(arg)? }, base),
            "hellinger" => {
                let ratio_bound = match arg {
                    Some(_) => Some(num(arg)?),
                    None => None,
                };
                Self::new(Family::FDiv { phi: PhiId::Hellinger, ratio_bound }, base)
            }
            "tsallis" => Self::new(
                Family::FDiv {
                    phi: PhiId::Tsallis(num(arg)?),
                    ratio_bound: None,
                },
                base,
            ),
            "itakura-saito" => Self::itakura_saito(base),
            "smoothed-kl" => {
                let pts = points.ok_or_else(|| Error::Config(format!("{name} needs a hypothesis embedding")))?;
                Self::smoothed_kl(num(arg)?, base, pts.to_vec())
            }
            _ => Err(Error::UnknownRegistry(name.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match &self.family {
            Family::Kl => "kl".into(),
            Family::ChiSq => "chi2".into(),
            Family::PNormSquared { p } => format!("pnorm2:{p}"),
            Family::PNormPowerP { p } => format!("pnormp:{p}"),
            Family::FDiv { phi: PhiId::Hellinger, ratio_bound: Some(m) } => format!("hellinger:{m}"),
            Family::FDiv { phi: PhiId::Hellinger, ratio_bound: None } => "hellinger".into(),
            Family::FDiv { phi: PhiId::Tsallis(a), .. } => format!("tsallis:{a}"),
            Family::Bregman { psi: PsiId::NegLog, .. } => "itakura-saito".into(),
            Family::SmoothedKl { sigma } => format!("smoothed-kl:{sigma}"),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn points(&self) -> Option<&[f64]> {
        self.points.as_deref()
    }

    /// Same family against another base marginal.
    pub fn rebase(&self, base: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.base = normalize(base, "base marginal")?;
        if out.base.len() != self.base.len() {
            return Err(Error::Dimension("rebase changes the hypothesis count".into()));
        }
        Ok(out)
    }

    fn ratio(&self, q: &[f64], w: usize) -> Option<f64> {
        let b = self.base[w];
        if b > 0.0 {
            Some(q[w] / b)
        } else if q[w] == 0.0 {
            None
        } else {
            Some(f64::INFINITY)
        }
    }

    /// `h(Q)`; `+inf` when `Q` leaves the family's domain.
    pub fn h_eval(&self, q: &[f64]) -> f64 {
        if q.len() != self.base.len() {
            return f64::NAN;
        }
        let k = q.len();
        match &self.family {
            Family::Kl => {
                let mut total = 0.0;
                for w in 0..k {
                    if q[w] == 0.0 {
                        continue;
                    }
                    if self.base[w] == 0.0 {
                        return f64::INFINITY;
                    }
                    total += q[w] * (q[w] / self.base[w]).ln();
                }
                total.max(0.0)
            }
            Family::ChiSq => self.ratio_sum(q, |r| (r - 1.0) * (r - 1.0)),
            Family::PNormSquared { p } => {
                let s = self.ratio_sum(q, |r| (r - 1.0).abs().powf(*p));
                s.powf(2.0 / p)
            }
            Family::PNormPowerP { p } => self.ratio_sum(q, |r| (r - 1.0).abs().powf(*p)),
            Family::FDiv { phi, .. } => self.ratio_sum(q, |r| phi_value(*phi, r)),
            Family::Bregman { psi: PsiId::NegLog, nu } => {
                let mut total = 0.0;
                for w in 0..k {
                    if q[w] == 0.0 && self.base[w] == 0.0 {
                        continue;
                    }
                    if nu[w] == 0.0 || q[w] == 0.0 || self.base[w] == 0.0 {
                        return f64::INFINITY;
                    }
                    let r = q[w] / self.base[w];
                    total += nu[w] * (r - r.ln() - 1.0);
                }
                total.max(0.0)
            }
            Family::SmoothedKl { sigma } => {
                let pts = self.points.as_ref().expect("smoothed KL carries an embedding");
                let a = PointCloud::from_1d(pts, q.to_vec());
                let b = PointCloud::from_1d(pts, self.base.clone());
                match (a, b) {
                    (Ok(a), Ok(b)) => smoothed_kl(&a, &b, *sigma).map(|v| v.value).unwrap_or(f64::NAN),
                    _ => f64::NAN,
                }
            }
        }
    }

    /// `sum_w q0_w f(q_w / q0_w)` with `+inf` off the support of `Q0`.
    fn ratio_sum(&self, q: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for w in 0..q.len() {
            match self.ratio(q, w) {
                None => {}
                Some(r) if r.is_infinite() => return f64::INFINITY,
                Some(r) => total += self.base[w] * f(r),
            }
        }
        total.max(0.0)
    }

    /// A subgradient of `h` at `Q`, with its `Q0`-mean removed.
    pub fn h_subgradient(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.partials(q)?;
        if let Some(w) = g.iter().position(|x| x.is_infinite()) {
            return Err(Error::BoundarySubgradient(format!(
                "{} at zero ratio on hypothesis {w}",
                self.name()
            )));
        }
        let mean: f64 = g.iter().zip(&self.base).map(|(x, b)| x * b).sum();
        for (w, x) in g.iter_mut().enumerate() {
            *x = if self.base[w] > 0.0 { *x - mean } else { 0.0 };
        }
        Ok(g)
    }

    /// Partial derivatives of `h` at `Q` up to a common constant. Entries are
    /// `-inf` where the derivative diverges at a zero of `Q` inside supp `Q0`,
    /// and `0` outside supp `Q0`.
    pub fn partials(&self, q: &[f64]) -> Result<Vec<f64>> {
        let k = self.base.len();
        if q.len() != k {
            return Err(Error::Dimension(format!("distribution of length {} for {k} hypotheses", q.len())));
        }
        for w in 0..k {
            if self.base[w] == 0.0 && q[w] > 0.0 {
                return Err(Error::AbsoluteContinuity(format!("Q charges hypothesis {w} outside supp Q0")));
            }
        }
        let ratios: Vec<f64> = (0..k).map(|w| self.ratio(q, w).unwrap_or(1.0)).collect();
        let mut g = vec![0.0; k];
        match &self.family {
            Family::Kl => {
                for w in 0..k {
                    if self.base[w] > 0.0 {
                        g[w] = ratios[w].ln();
                    }
                }
            }
            Family::ChiSq => {
                for w in 0..k {
                    g[w] = 2.0 * (ratios[w] - 1.0);
                }
            }
            Family::PNormSquared { p } => {
                let n = ratios
                    .iter()
                    .zip(&self.base)
                    .map(|(r, b)| b * (r - 1.0).abs().powf(*p))
                    .sum::<f64>()
                    .powf(1.0 / p);
                if n > 0.0 {
                    let scale = 2.0 * n.powf(2.0 - p);
                    for w in 0..k {
                        let x = ratios[w] - 1.0;
                        g[w] = scale * x.abs().powf(p - 1.0) * x.signum();
                    }
                }
            }
            Family::PNormPowerP { p } => {
                for w in 0..k {
                    let x = ratios[w] - 1.0;
                    g[w] = p * x.abs().powf(p - 1.0) * x.signum();
                }
            }
            Family::FDiv { phi, .. } => {
                for w in 0..k {
                    if self.base[w] > 0.0 {
                        g[w] = phi_derivative(*phi, ratios[w]);
                    }
                }
            }
            Family::Bregman { psi: PsiId::NegLog, nu } => {
                for w in 0..k {
                    if self.base[w] > 0.0 {
                        g[w] = if q[w] == 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            nu[w] / self.base[w] - nu[w] / q[w]
                        };
                    }
                }
            }
            Family::SmoothedKl { sigma } => {
                g = self.smoothed_kl_gradient(q, *sigma)?;
            }
        }
        Ok(g)
    }

    /// `w -> int N(x; w, sigma^2) ln(G_sigma Q(x) / G_sigma Q0(x)) dx`.
    fn smoothed_kl_gradient(&self, q: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let pts = self.points.as_ref().expect("smoothed KL carries an embedding");
        let a = gaussian_smooth(&PointCloud::from_1d(pts, q.to_vec())?, sigma)?;
        let b = gaussian_smooth(&PointCloud::from_1d(pts, self.base.clone())?, sigma)?;
        let opts = QuadratureOptions::default();
        let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min) - opts.window * sigma;
        let hi = pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + opts.window * sigma;
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        Ok(pts
            .iter()
            .map(|c| {
                integrate_1d(lo, hi, sigma, &opts, |x| {
                    let kernel = norm * (-(x - c) * (x - c) / (2.0 * sigma * sigma)).exp();
                    kernel * (a.log_density(&[x]) - b.log_density(&[x]))
                })
                .value
            })
            .collect())
    }

    /// `D_h(Q || Q') = h(Q) - h(Q') - <g(Q'), Q - Q'>`.
    pub fn bregman_h(&self, q: &[f64], q_prime: &[f64]) -> Result<f64> {
        let g = self.h_subgradient(q_prime)?;
        let lin: f64 = g.iter().zip(q.iter().zip(q_prime)).map(|(g, (a, b))| g * (a - b)).sum();
        Ok(self.h_eval(q) - self.h_eval(q_prime) - lin)
    }

    pub fn certificate(&self) -> Result<ConvexityCertificate> {
        let lp = |p: f64| NormSpec::weighted_lp(p, self.base.clone());
        Ok(match &self.family {
            Family::Kl => ConvexityCertificate {
                alpha: 1.0,
                norm: NormSpec::Tv,
                regime: Regime::Strong,
            },
            Family::ChiSq => ConvexityCertificate {
                alpha: 2.0,
                norm: lp(2.0)?,
                regime: Regime::Strong,
            },
            Family::PNormSquared { p } => ConvexityCertificate {
                alpha: 2.0 * (p - 1.0),
                norm: lp(*p)?,
                regime: Regime::Strong,
            },
            Family::PNormPowerP { p } => {
                if p.fract() != 0.0 {
                    return Err(Error::Parameter(format!("uniform-convexity certificate needs integer p, got {p}")));
                }
                ConvexityCertificate {
                    alpha: 2.0,
                    norm: lp(*p)?,
                    regime: Regime::PUniform(*p as u32),
                }
            }
            Family::FDiv { phi: PhiId::Hellinger, ratio_bound } => {
                let m = ratio_bound.unwrap_or_else(|| self.max_vertex_ratio());
                ConvexityCertificate {
                    alpha: m.powf(-1.5) / 2.0,
                    norm: lp(2.0)?,
                    regime: Regime::Strong,
                }
            }
            Family::FDiv { phi: PhiId::Tsallis(_), .. } => {
                return Err(Error::UnknownRegistry(format!("no convexity certificate for {}", self.name())))
            }
            Family::Bregman { psi: PsiId::NegLog, nu } => ConvexityCertificate {
                alpha: 1.0,
                norm: NormSpec::weighted_lp(2.0, nu.clone())?,
                regime: Regime::Strong,
            },
            Family::SmoothedKl { sigma } => ConvexityCertificate {
                alpha: 1.0,
                norm: NormSpec::smoothed_tv(*sigma, self.points.clone().unwrap_or_default())?,
                regime: Regime::Strong,
            },
        })
    }

    /// `max_w 1 / q0_w` over the support: the largest ratio any distribution reaches.
    pub fn max_vertex_ratio(&self) -> f64 {
        self.base
            .iter()
            .filter(|b| **b > 0.0)
            .fold(1.0, |m, b| f64::max(m, 1.0 / b))
    }

    /// `H(P) = sum_s mu^n(s) h(P_{|s})`.
    #[allow(non_snake_case)]
    pub fn H_eval(&self, p: &JointDistribution, datasets: &DatasetSpace) -> Result<f64> {
        let mut total = 0.0;
        for s in 0..datasets.len() {
            let m = datasets.prob(s);
            if m == 0.0 {
                continue;
            }
            let h = self.h_eval(&p.conditional(s)?);
            if h.is_infinite() {
                return Ok(f64::INFINITY);
            }
            total += m * h;
        }
        Ok(total)
    }

    /// The joint function `(w, s) -> g(P_{|s})(w)`, a subgradient of `H` at `P`.
    #[allow(non_snake_case)]
    pub fn H_subgradient(&self, p: &JointDistribution, datasets: &DatasetSpace) -> Result<JointFunction> {
        let mut out = JointFunction::zeros((self.base.len(), datasets.len()));
        for s in 0..datasets.len() {
            if datasets.prob(s) == 0.0 {
                continue;
            }
            let g = self.h_subgradient(&p.conditional(s)?)?;
            for (w, x) in g.into_iter().enumerate() {
                out[[w, s]] = x;
            }
        }
        Ok(out)
    }

    /// Per-coordinate `E_{Z_i} h(P_{|Z_i})` and their average.
    #[allow(non_snake_case)]
    pub fn single_letter_H(&self, p: &JointDistribution, datasets: &DatasetSpace) -> Result<SingleLetter> {
        let n = datasets.n();
        let k = datasets.radix();
        let w = self.base.len();
        let mut per_coordinate = Vec::with_capacity(n);
        for i in 0..n {
            let mut cond = vec![vec![0.0; w]; k];
            let mut mass = vec![0.0; k];
            for s in 0..datasets.len() {
                let z = datasets.coord(s, i);
                mass[z] += datasets.prob(s);
                for (v, c) in cond[z].iter_mut().enumerate() {
                    *c += p.table()[[v, s]];
                }
            }
            let mut total = 0.0;
            for z in 0..k {
                if mass[z] == 0.0 {
                    continue;
                }
                let q: Vec<f64> = cond[z].iter().map(|c| c / mass[z]).collect();
                total += mass[z] * self.h_eval(&q);
            }
            per_coordinate.push(total);
        }
        let average = per_coordinate.iter().sum::<f64>() / n as f64;
        Ok(SingleLetter { per_coordinate, average })
    }

    /// Audit the certified convexity inequality on `trials` random pairs drawn
    /// from Dirichlet(1) on the support of `Q0`. Ratio-bounded families reject
    /// draws with `q / q0` above the bound.
    pub fn verify_convexity(&self, trials: usize, seed: u64) -> Result<ConvexityReport> {
        let cert = self.certificate()?;
        let cap = match &self.family {
            Family::FDiv { ratio_bound: Some(m), .. } => Some(*m),
            _ => None,
        };
        let mut rng = stream(seed, "convexity", &self.name());
        let mut draw = || -> Result<Vec<f64>> {
            for _ in 0..100_000 {
                let q = dirichlet_on_support(&mut rng, &self.base);
                match cap {
                    Some(m) if (0..q.len()).any(|w| self.base[w] > 0.0 && q[w] > m * self.base[w]) => continue,
                    _ => return Ok(q),
                }
            }
            Err(Error::Parameter("ratio cap rejects every draw".into()))
        };
        let mut min_slack = f64::INFINITY;
        let mut violations = 0;
        let mut worst = None;
        for _ in 0..trials {
            let q = draw()?;
            let q_prime = draw()?;
            let gap = self.bregman_h(&q, &q_prime)?;
            let delta: Vec<f64> = q.iter().zip(&q_prime).map(|(a, b)| a - b).collect();
            let dist = cert.norm.eval(&delta)?;
            let slack = gap - cert.alpha / 2.0 * dist.powf(cert.regime.exponent());
            if slack < -CONVEXITY_TOL {
                violations += 1;
            }
            if slack < min_slack {
                min_slack = slack;
                worst = Some((q, q_prime));
            }
        }
        Ok(ConvexityReport {
            divergence: self.name(),
            alpha: cert.alpha,
            trials,
            min_slack,
            violations,
            worst,
        })
    }
}

/// Slack below which a convexity audit counts a violation.
pub const CONVEXITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SingleLetter {
    pub per_coordinate: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub divergence: String,
    pub alpha: f64,
    pub trials: usize,
    pub min_slack: f64,
    pub violations: usize,
    /// The pair `(Q, Q')` attaining `min_slack`.
    pub worst: Option<(Vec<f64>, Vec<f64>)>,
}

fn phi_value(phi: PhiId, x: f64) -> f64 {
    match phi {
        PhiId::Hellinger => (x.sqrt() - 1.0).powi(2),
        PhiId::Tsallis(a) => (x.powf(a) - a * x + a - 1.0) / (a * (a - 1.0)),
    }
}

fn phi_derivative(phi: PhiId, x: f64) -> f64 {
    match phi {
        PhiId::Hellinger => 1.0 - 1.0 / x.sqrt(),
        PhiId::Tsallis(a) => (x.powf(a - 1.0) - 1.0) / (a - 1.0),
    }
}

/// `KL(p || q)` between vectors, `+inf` without absolute continuity.
pub fn kl_vec(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        if *a == 0.0 {
            continue;
        }
        if *b == 0.0 {
            return f64::INFINITY;
        }
        total += a * (a / b).ln();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{joint_from_kernel, product_measure, InstanceSpace, Kernel};

    const HALF: [f64; 2] = [0.5, 0.5];

    fn spec(name: &str, base: &[f64]) -> DivergenceSpec {
        DivergenceSpec::parse(name, base.to_vec(), None).unwrap()
    }

    #[test]
    fn h_examples() {
        assert_eq!(spec("kl", &HALF).h_eval(&HALF), 0.0);
        assert!((spec("kl", &HALF).h_eval(&[1.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((spec("chi2", &HALF).h_eval(&[1.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(spec("kl", &[1.0, 0.0]).h_eval(&HALF), f64::INFINITY);
        assert_eq!(spec("itakura-saito", &HALF).h_eval(&[1.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn pnorm_squared_at_two_is_chi_squared() {
        let base = [0.2, 0.3, 0.5];
        let q = [0.6, 0.1, 0.3];
        let a = spec("pnorm2:2", &base).h_eval(&q);
        let b = spec("chi2", &base).h_eval(&q);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn certificates() {
        assert_eq!(spec("kl", &HALF).certificate().unwrap().alpha, 1.0);
        assert_eq!(spec("pnorm2:2", &HALF).certificate().unwrap().alpha, 2.0);
        assert_eq!(spec("hellinger:4", &HALF).certificate().unwrap().alpha, 1.0 / 16.0);
        let c = spec("pnormp:3", &HALF).certificate().unwrap();
        assert_eq!((c.alpha, c.regime), (2.0, Regime::PUniform(3)));
        assert!(spec("tsallis:2", &HALF).certificate().is_err());
        assert!(DivergenceSpec::parse("renyi:2", HALF.to_vec(), None).is_err());
    }

    #[test]
    fn subgradients_match_closed_forms() {
        let base = [0.2, 0.3, 0.5];
        let q = [0.4, 0.4, 0.2];
        let g = spec("chi2", &base).h_subgradient(&q).unwrap();
        for w in 0..3 {
            assert!((g[w] - 2.0 * (q[w] / base[w] - 1.0)).abs() < 1e-12);
        }
        let g = spec("hellinger", &base).h_subgradient(&q).unwrap();
        let raw: Vec<f64> = (0..3).map(|w| 1.0 - (q[w] / base[w]).powf(-0.5)).collect();
        let mean: f64 = raw.iter().zip(&base).map(|(a, b)| a * b).sum();
        for w in 0..3 {
            assert!((g[w] - (raw[w] - mean)).abs() < 1e-12);
        }
        assert!(spec("kl", &HALF).h_subgradient(&HALF).unwrap().iter().all(|x| *x == 0.0));
        assert!(matches!(
            spec("kl", &HALF).h_subgradient(&[1.0, 0.0]),
            Err(Error::BoundarySubgradient(_))
        ));
    }

    #[test]
    fn kl_bregman_is_kl() {
        let base = [0.2, 0.3, 0.5];
        let (q, qp) = ([0.5, 0.25, 0.25], [0.1, 0.6, 0.3]);
        let b = spec("kl", &base).bregman_h(&q, &qp).unwrap();
        assert!((b - kl_vec(&q, &qp)).abs() < 1e-12);
        assert!(spec("kl", &base).bregman_h(&q, &q).unwrap().abs() < 1e-12);
    }

    #[test]
    fn smoothed_kl_bregman_is_smoothed_kl() {
        let pts = vec![0.0, 0.5, 1.5];
        let s = DivergenceSpec::smoothed_kl(0.5, vec![0.3, 0.3, 0.4], pts.clone()).unwrap();
        let (q, qp) = ([0.6, 0.2, 0.2], [0.2, 0.5, 0.3]);
        let b = s.bregman_h(&q, &qp).unwrap();
        let direct = smoothed_kl(
            &PointCloud::from_1d(&pts, q.to_vec()).unwrap(),
            &PointCloud::from_1d(&pts, qp.to_vec()).unwrap(),
            0.5,
        )
        .unwrap()
        .value;
        assert!((b - direct).abs() < 1e-5, "{b} vs {direct}");
    }

    #[test]
    fn pinsker_example() {
        let s = spec("kl", &HALF);
        let slack = s.h_eval(&[1.0, 0.0]) - 0.5;
        assert!(slack > 0.19);
        let r = s.verify_convexity(200, 3).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn chi_squared_convexity_is_tight() {
        let r = spec("chi2", &[0.2, 0.3, 0.5]).verify_convexity(100, 1).unwrap();
        assert!(r.min_slack.abs() < 1e-12);
    }

    #[test]
    fn lift_matches_joint_relative_entropy() {
        let mu = InstanceSpace::from_probs(vec![0.3, 0.7]).unwrap();
        let ds = product_measure(&mu, 2).unwrap();
        let kernel = Kernel::from_fn(3, &ds, |t| {
            let a = 1.0 + t[0] as f64;
            let b = 1.0 + 2.0 * t[1] as f64;
            let z = a + b + 1.0;
            vec![a / z, b / z, 1.0 / z]
        })
        .unwrap();
        let p = joint_from_kernel(&kernel, &ds).unwrap();
        let q0 = p.hypothesis_marginal();
        let p0 = JointDistribution::product(&q0, &ds);
        let flat = |t: &ndarray::Array2<f64>| t.iter().cloned().collect::<Vec<_>>();
        let joint = kl_vec(&flat(p.table()), &flat(p0.table()));
        let lifted = spec("kl", &q0).H_eval(&p, &ds).unwrap();
        assert!((joint - lifted).abs() < 1e-10);
        let chi_joint: f64 = p
            .table()
            .iter()
            .zip(p0.table().iter())
            .map(|(a, b)| (a - b) * (a - b) / b)
            .sum();
        assert!((chi_joint - spec("chi2", &q0).H_eval(&p, &ds).unwrap()).abs() < 1e-10);

        let single = spec("kl", &q0).single_letter_H(&p, &ds).unwrap();
        assert!(single.per_coordinate.iter().sum::<f64>() <= lifted + 1e-10);
    }
}
