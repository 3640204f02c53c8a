//! Single-pass SGD on a one-dimensional quadratic loss with Gaussian data.
//!
//! With `l(w, z) = scale (w - z)^2` and a constant step `eta`, every iterate is
//! affine in the data: `W_n = (1 - a)^n w0 + sum_t c_t z_t` with
//! `a = 2 scale eta` and `c_t = a (1 - a)^{n - t}`. So `P_{n|S}` is a point
//! mass, `Q0` is Gaussian, and the smoothed divergence and the generalization
//! error have closed forms. A seeded Monte Carlo run cross-checks the latter.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::{smoothed_dual_bound, DerivativeBounds};
use crate::rng::stream;
use crate::transport::{gaussian_kl, integrate_1d, QuadratureOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub sd: f64,
    /// Loss scale.
    #[serde(default = "half")]
    pub scale: f64,
    #[serde(default)]
    pub w0: f64,
    #[serde(default = "half")]
    pub sigma: f64,
    /// Constant step size; `None` means `1/n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub ns: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Half-width of the certified window for iterates; defaults to
    /// `|w0| + |mean| + 8 sd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_runs() -> usize {
    100_000
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            mean: 0.0,
            sd: 1.0,
            scale: 0.5,
            w0: 0.0,
            sigma: 0.5,
            step: None,
            ns: vec![4, 8, 16, 32, 64],
            runs: default_runs(),
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdRow {
    pub n: usize,
    pub step: f64,
    /// `E_S D_sigma(P_{n|S} || Q0)`.
    pub smoothed_divergence: f64,
    /// Upper bound on `E_Z ||l(., Z)||_{sigma,*}^2`.
    pub dual_moment: f64,
    pub bound: f64,
    pub bound_sqrt_n: f64,
    pub gen_closed_form: f64,
    pub mc_mean: f64,
    /// Three standard errors.
    pub mc_ci: f64,
    /// `bound >= |mc_mean| - mc_ci`.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdSweep {
    pub rows: Vec<SgdRow>,
    /// `max / min` of `bound * sqrt(n)` over the sweep.
    pub band_ratio: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd > 0.0 && self.sigma > 0.0 && self.scale > 0.0) {
            return Err(Error::Config("sgd: sd, sigma and scale must be positive".into()));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(Error::Config("sgd: ns must be nonempty and positive".into()));
        }
        if self.runs < 2 {
            return Err(Error::Config("sgd: runs must be at least 2".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> f64 {
        self.window
            .unwrap_or(self.w0.abs() + self.mean.abs() + 8.0 * self.sd)
    }

    fn step_for(&self, n: usize) -> f64 {
        self.step.unwrap_or(1.0 / n as f64)
    }

    /// `(c_t)` and the deterministic offset of `W_n`.
    fn coefficients(&self, n: usize) -> (Vec<f64>, f64) {
        let a = 2.0 * self.scale * self.step_for(n);
        let c = (1..=n).map(|t| a * (1.0 - a).powi((n - t) as i32)).collect();
        (c, (1.0 - a).powi(n as i32) * self.w0)
    }

    /// `E gen = -(2 scale / n) sd^2 sum_t c_t`.
    pub fn gen_closed_form(&self, n: usize) -> f64 {
        let (c, _) = self.coefficients(n);
        -2.0 * self.scale / n as f64 * self.sd * self.sd * c.iter().sum::<f64>()
    }

    /// `E_S KL(N(W_n(S), sigma^2) || N(m_W, v_W + sigma^2))`.
    pub fn smoothed_divergence(&self, n: usize) -> f64 {
        let (c, _) = self.coefficients(n);
        let vw = self.sd * self.sd * c.iter().map(|x| x * x).sum::<f64>();
        let s2 = self.sigma * self.sigma;
        // the mean term averages to v_W / (v_W + sigma^2)
        gaussian_kl(0.0, s2, 0.0, vw + s2) + 0.5 * vw / (vw + s2)
    }

    /// `E_Z (beta_0(Z) + sigma beta_1(Z))^2` for the centered loss
    /// `scale (-2 w x + x^2 + 2 m x - sd^2)`, `x = z - m`, on `|w| <= window`.
    pub fn dual_moment(&self) -> Result<f64> {
        let (r, s, m, k) = (self.window(), self.sd, self.mean, self.scale);
        let opts = QuadratureOptions {
            tol: 1e-8,
            max_halvings: 10,
            ..QuadratureOptions::default()
        };
        let density = Normal::new(0.0, s).map_err(|e| Error::Parameter(e.to_string()))?;
        // nonnegative finite sequences always sum
        let q = integrate_1d(-12.0 * s, 12.0 * s, s, &opts, |x| {
            let b = DerivativeBounds::Sequence(vec![
                k * (2.0 * r * x.abs() + (x * x + 2.0 * m * x - s * s).abs()),
                2.0 * k * x.abs(),
            ]);
            let v = smoothed_dual_bound(&b, self.sigma, 1).unwrap_or(f64::NAN);
            v * v * normal_pdf(&density, x)
        });
        if !q.converged {
            return Err(Error::Quadrature {
                achieved: q.achieved,
                wanted: opts.tol,
            });
        }
        Ok(q.value)
    }

    pub fn bound(&self, n: usize) -> Result<f64> {
        Ok((4.0 * self.smoothed_divergence(n) * self.dual_moment()? / n as f64).sqrt())
    }

    /// Monte Carlo mean of `(1/n) sum_i lbar(W_n, z_i)` and three standard errors.
    pub fn monte_carlo(&self, n: usize, seed: u64) -> Result<(f64, f64)> {
        const BLOCK: usize = 1000;
        let blocks = self.runs.div_ceil(BLOCK);
        let eta = self.step_for(n);
        let window = self.window();
        let normal = Normal::new(self.mean, self.sd).map_err(|e| Error::Parameter(e.to_string()))?;
        let (m, s2, k) = (self.mean, self.sd * self.sd, self.scale);
        let sums = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream(seed, "sgd", &format!("n{n}-block{b}"));
                let count = BLOCK.min(self.runs - b * BLOCK);
                let (mut s1, mut s2sum) = (0.0, 0.0);
                let mut z = vec![0.0; n];
                for _ in 0..count {
                    let mut w = self.w0;
                    for zt in z.iter_mut() {
                        *zt = normal.sample(&mut rng);
                        w -= eta * 2.0 * k * (w - *zt);
                        if w.abs() > window {
                            return Err(Error::WindowViolation { radius: window, value: w });
                        }
                    }
                    let g: f64 = z
                        .iter()
                        .map(|zi| k * ((w - zi).powi(2) - (w - m).powi(2) - s2))
                        .sum::<f64>()
                        / n as f64;
                    s1 += g;
                    s2sum += g * g;
                }
                Ok((s1, s2sum))
            })
            .collect::<Result<Vec<_>>>()?;
        let (s1, sq) = sums.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let r = self.runs as f64;
        let mean = s1 / r;
        let var = ((sq - r * mean * mean) / (r - 1.0)).max(0.0);
        Ok((mean, 3.0 * (var / r).sqrt()))
    }

    pub fn sweep(&self, seed: u64) -> Result<SgdSweep> {
        self.validate()?;
        let moment = self.dual_moment()?;
        let rows = self
            .ns
            .iter()
            .map(|&n| {
                let d = self.smoothed_divergence(n);
                let bound = (4.0 * d * moment / n as f64).sqrt();
                let (mc_mean, mc_ci) = self.monte_carlo(n, seed)?;
                Ok(SgdRow {
                    n,
                    step: self.step_for(n),
                    smoothed_divergence: d,
                    dual_moment: moment,
                    bound,
                    bound_sqrt_n: bound * (n as f64).sqrt(),
                    gen_closed_form: self.gen_closed_form(n),
                    mc_mean,
                    mc_ci,
                    valid: bound >= mc_mean.abs() - mc_ci,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let hi = rows.iter().map(|r| r.bound_sqrt_n).fold(f64::NEG_INFINITY, f64::max);
        let lo = rows.iter().map(|r| r.bound_sqrt_n).fold(f64::INFINITY, f64::min);
        Ok(SgdSweep {
            rows,
            band_ratio: hi / lo,
        })
    }
}

fn normal_pdf(d: &Normal<f64>, x: f64) -> f64 {
    let (m, s) = (d.mean(), d.std_dev());
    (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step_is_independent() {
        let c = SgdConfig {
            step: Some(0.0),
            ns: vec![4],
            runs: 100,
            ..SgdConfig::default()
        };
        assert_eq!(c.smoothed_divergence(4), 0.0);
        assert_eq!(c.bound(4).unwrap(), 0.0);
        assert_eq!(c.gen_closed_form(4), 0.0);
    }

    #[test]
    fn closed_form_generalization_matches_direct_expectation() {
        // n = 1, w0 = 0: W = a z, gen = E[scale((az - z)^2 - (az - m)^2 - s^2)]
        let c = SgdConfig {
            mean: 0.3,
            sd: 1.2,
            scale: 0.5,
            step: Some(0.4),
            ..SgdConfig::default()
        };
        let a = 2.0 * 0.5 * 0.4;
        let (m, s2) = (0.3, 1.44);
        let ez2 = s2 + m * m;
        let direct = 0.5 * ((a - 1.0) * (a - 1.0) * ez2 - (a * a * ez2 - 2.0 * a * m * m + m * m) - s2);
        assert!((c.gen_closed_form(1) - direct).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let c = SgdConfig {
            runs: 20_000,
            ..SgdConfig::default()
        };
        let (mean, ci) = c.monte_carlo(8, 1).unwrap();
        assert!((mean - c.gen_closed_form(8)).abs() <= ci, "{mean} +- {ci}");
        assert_eq!(c.monte_carlo(8, 1).unwrap(), (mean, ci));
    }

    #[test]
    fn window_violation_is_reported() {
        let c = SgdConfig {
            window: Some(0.01),
            runs: 10,
            ..SgdConfig::default()
        };
        assert!(matches!(c.monte_carlo(4, 1), Err(Error::WindowViolation { .. })));
    }
}
