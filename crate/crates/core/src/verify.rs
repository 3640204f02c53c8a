//! Property suites run over the built-in battery.
//!
//! A suite produces [`CheckRecord`]s. Each record groups the trials of one
//! inequality on one instance and keeps the worst slack and every violation.
//! Records are assembled in a fixed order, so output does not depend on
//! scheduling.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::eta_grid;
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::ghost::{verify_improvement, verify_zero_pairing, HullPoint, MixedBagFamily, IDENTITY_TOL, INEQUALITY_TOL};
use crate::norm::{smoothed_dual_bound, smoothed_tv_dual_lp, DerivativeBounds, EXACT_DUAL_MAX_SUPPORT};
use crate::oracle::{discretize_gaussian, w2_permutation};
use crate::potential::{
    dv_conjugate_closed_form, ftrl_trajectory, phi_eval, phi_grid_oracle, verify_lemma3, verify_lemma6,
    verify_theorem2, PotentialOptions,
};
use crate::prob::{partial_average_loss, JointFunction};
use crate::rng::{dirichlet_ones, stream};
use crate::scenario::{battery, Scenario};
use crate::transport::{verify_lemma10, w2_exact, w2_gaussian, PointCloud};

/// Tolerance for the potential inequalities.
pub const CHAIN_TOL: f64 = 1e-7;
/// Divergences with strong-convexity certificates audited by the chain suites.
pub const CHAIN_DIVERGENCES: [&str; 4] = ["kl", "chi2", "pnorm2:1.5", "hellinger"];
/// Families and parameters audited by the convexity suite.
pub const CONVEXITY_FAMILIES: [&str; 10] = [
    "kl",
    "chi2",
    "pnorm2:1.25",
    "pnorm2:1.5",
    "pnorm2:2",
    "pnormp:2",
    "pnormp:3",
    "pnormp:4",
    "hellinger:2",
    "itakura-saito",
];
pub const CONVEXITY_TRIALS: usize = 1000;
pub const IMPROVEMENT_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    All,
    Thm2,
    Lemma3,
    Lemma6,
    Lemma7,
    Lemma10,
    Convexity,
    Ghost,
    Ftrl,
    Dv,
}

impl Suite {
    pub const EACH: [Suite; 9] = [
        Suite::Thm2,
        Suite::Lemma3,
        Suite::Lemma6,
        Suite::Lemma7,
        Suite::Lemma10,
        Suite::Convexity,
        Suite::Ghost,
        Suite::Ftrl,
        Suite::Dv,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Thm2 => "thm2",
            Suite::Lemma3 => "lemma3",
            Suite::Lemma6 => "lemma6",
            Suite::Lemma7 => "lemma7",
            Suite::Lemma10 => "lemma10",
            Suite::Convexity => "convexity",
            Suite::Ghost => "ghost",
            Suite::Ftrl => "ftrl",
            Suite::Dv => "dv",
        }
    }

    pub fn expand(&self) -> Vec<Suite> {
        match self {
            Suite::All => Suite::EACH.to_vec(),
            s => vec![*s],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        std::iter::once(Suite::All)
            .chain(Suite::EACH)
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::UnknownRegistry(format!("suite {s}")))
    }
}

fn tagged<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&x.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub parameters: String,
    #[serde(serialize_with = "tagged")]
    pub slack: f64,
}

/// One inequality on one instance. The check passes when every trial has
/// `slack >= -tol` and no trial errored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub suite: String,
    pub instance: String,
    pub check: String,
    pub trials: usize,
    pub tol: f64,
    #[serde(serialize_with = "tagged")]
    pub worst_slack: f64,
    pub worst_parameters: String,
    pub violations: Vec<Violation>,
    pub errors: Vec<String>,
    pub passed: bool,
}

struct Check {
    record: CheckRecord,
}

impl Check {
    fn new(suite: Suite, instance: &str, check: impl Into<String>, tol: f64) -> Self {
        Self {
            record: CheckRecord {
                suite: suite.name().into(),
                instance: instance.into(),
                check: check.into(),
                trials: 0,
                tol,
                worst_slack: f64::INFINITY,
                worst_parameters: String::new(),
                violations: Vec::new(),
                errors: Vec::new(),
                passed: true,
            },
        }
    }

    fn observe(&mut self, parameters: impl Fn() -> String, slack: f64) {
        let r = &mut self.record;
        r.trials += 1;
        // NaN compares false and lands in the violation branch
        if !(slack >= -r.tol) {
            r.violations.push(Violation { parameters: parameters(), slack });
            r.passed = false;
        }
        if slack < r.worst_slack || slack.is_nan() {
            r.worst_slack = slack;
            r.worst_parameters = parameters();
        }
    }

    fn result<T>(&mut self, parameters: impl Fn() -> String, value: Result<T>) -> Option<T> {
        match value {
            Ok(v) => Some(v),
            Err(e) => {
                self.record.trials += 1;
                self.record.errors.push(format!("{}: {e}", parameters()));
                self.record.passed = false;
                None
            }
        }
    }

    fn finish(self) -> CheckRecord {
        self.record
    }
}

/// A battery scenario with its mixed-bag family.
pub struct Instance {
    pub scenario: Scenario,
    pub family: MixedBagFamily,
}

pub fn battery_instances() -> Result<Vec<Instance>> {
    battery()
        .par_iter()
        .map(|c| {
            let scenario = c.build(c.n.unwrap_or(1))?;
            let family = scenario.family()?;
            Ok(Instance { scenario, family })
        })
        .collect()
}

/// Everything a suite run needs.
pub struct VerifyContext {
    pub seed: u64,
    pub opts: PotentialOptions,
    pub instances: Vec<Instance>,
}

impl VerifyContext {
    pub fn new(seed: u64) -> Result<Self> {
        Ok(Self {
            seed,
            opts: PotentialOptions::default(),
            instances: battery_instances()?,
        })
    }

    /// Maximizer distances converge like the square root of the objective gap,
    /// so the distance check asks the solver for a much smaller gap.
    fn fine_opts(&self) -> PotentialOptions {
        PotentialOptions {
            tol: 1e-12,
            ..self.opts
        }
    }

    fn spec(&self, inst: &Instance, name: &str) -> Result<DivergenceSpec> {
        DivergenceSpec::parse(name, inst.family.base_marginal(), inst.scenario.points_1d().as_deref())
    }

    /// `(instance, divergence)` pairs for the chain suites, in battery order.
    fn chain_pairs(&self) -> Vec<(&Instance, &'static str)> {
        self.instances
            .iter()
            .flat_map(|i| CHAIN_DIVERGENCES.iter().map(move |d| (i, *d)))
            .collect()
    }

    pub fn run(&self, suite: Suite) -> Vec<CheckRecord> {
        suite.expand().into_iter().flat_map(|s| self.run_one(s)).collect()
    }

    fn run_one(&self, suite: Suite) -> Vec<CheckRecord> {
        match suite {
            Suite::All => self.run(Suite::All),
            Suite::Thm2 => self.telescoping(),
            Suite::Lemma3 => self.step_bound(),
            Suite::Lemma6 => self.smoothness(),
            Suite::Lemma7 => self.smoothed_dual(),
            Suite::Lemma10 => self.transport(),
            Suite::Convexity => self.convexity(),
            Suite::Ghost => self.ghost(),
            Suite::Ftrl => self.ftrl(),
            Suite::Dv => self.conjugate(),
        }
    }

    fn telescoping(&self) -> Vec<CheckRecord> {
        self.chain_pairs()
            .par_iter()
            .map(|(inst, name)| {
                let mut c = Check::new(Suite::Thm2, &inst.scenario.id, format!("telescoping:{name}"), CHAIN_TOL);
                if let Some(spec) = c.result(|| name.to_string(), self.spec(inst, name)) {
                    for eta in eta_grid() {
                        let p = || format!("eta={eta}");
                        let r = verify_theorem2(&inst.family, &spec, &inst.scenario.centered, eta, &self.opts);
                        if let Some(r) = c.result(p, r) {
                            c.observe(p, r.slack);
                        }
                    }
                }
                c.finish()
            })
            .collect()
    }

    fn step_bound(&self) -> Vec<CheckRecord> {
        self.chain_pairs()
            .par_iter()
            .map(|(inst, name)| {
                let mut c = Check::new(Suite::Lemma3, &inst.scenario.id, format!("step-bound:{name}"), CHAIN_TOL);
                let spec = c.result(|| name.to_string(), self.spec(inst, name));
                let cert = spec.as_ref().and_then(|s| c.result(|| name.to_string(), s.certificate()));
                if let (Some(spec), Some(cert)) = (spec, cert) {
                    for eta in eta_grid() {
                        for i in 1..=inst.family.n() {
                            let p = || format!("eta={eta} i={i}");
                            let r = verify_lemma3(&inst.family, &spec, &inst.scenario.centered, eta, i, &cert, &self.opts);
                            if let Some(r) = c.result(p, r) {
                                c.observe(p, r.slack);
                            }
                        }
                    }
                }
                c.finish()
            })
            .collect()
    }

    fn smoothness(&self) -> Vec<CheckRecord> {
        self.chain_pairs()
            .par_iter()
            .flat_map_iter(|(inst, name)| {
                let id = &inst.scenario.id;
                let mut smooth = Check::new(Suite::Lemma6, id, format!("bregman-smoothness:{name}"), CHAIN_TOL);
                let mut dist = Check::new(Suite::Lemma6, id, format!("maximizer-distance:{name}"), CHAIN_TOL);
                let spec = smooth.result(|| name.to_string(), self.spec(inst, name));
                let cert = spec.as_ref().and_then(|s| smooth.result(|| name.to_string(), s.certificate()));
                if let (Some(spec), Some(cert)) = (spec, cert) {
                    let ds = inst.family.datasets();
                    let losses: Vec<JointFunction> = (0..=inst.family.n())
                        .map(|i| partial_average_loss(&inst.scenario.centered, ds, i).expect("index in range"))
                        .collect();
                    for eta in eta_grid() {
                        for i in 1..=inst.family.n() {
                            let p = || format!("eta={eta} i={i}");
                            let (f, fp) = (&losses[i] * eta, &losses[i - 1] * eta);
                            let r = verify_lemma6(&inst.family, &spec, &f, &fp, &cert, &self.fine_opts());
                            if let Some(r) = smooth.result(p, r) {
                                smooth.observe(p, r.smoothness.slack);
                                dist.observe(p, r.distance.slack);
                            }
                        }
                    }
                }
                [smooth.finish(), dist.finish()]
            })
            .collect()
    }

    /// The derivative-series bound on the smoothed dual norm against the
    /// exact LP value, and its value `2 beta` at `sigma = 1/(2 sqrt d)`.
    fn smoothed_dual(&self) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        for sigma in [0.25, 0.5, 1.0] {
            let mut c = Check::new(Suite::Lemma7, "random-trigonometric", format!("dominates-lp:sigma={sigma}"), 0.0);
            let mut rng = stream(self.seed, "smoothed-dual", &format!("sigma={sigma}"));
            for trial in 0..20 {
                let k = rng.random_range(2..=EXACT_DUAL_MAX_SUPPORT);
                let points: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (amp, freq, phase) = (
                    rng.random_range(0.1..2.0),
                    rng.random_range(0.1..1.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                );
                // sup |f^(j)| = amp freq^j <= amp for freq <= 1
                let f: Vec<f64> = points.iter().map(|x| amp * (freq * x + phase).cos()).collect();
                let p = || format!("trial={trial} k={k} amp={amp} freq={freq} phase={phase}");
                let lp = c.result(p, smoothed_tv_dual_lp(&f, &points, sigma));
                let geometric = DerivativeBounds::Geometric { beta: amp, ratio: freq };
                if let Some(lp) = lp {
                    if let Some(b) = c.result(p, smoothed_dual_bound(&geometric, sigma, 1)) {
                        c.observe(|| format!("{} geometric", p()), b - lp);
                    }
                    if sigma < 1.0 {
                        if let Some(b) = c.result(p, smoothed_dual_bound(&DerivativeBounds::Uniform(amp), sigma, 1)) {
                            c.observe(|| format!("{} uniform", p()), b - lp);
                        }
                    }
                }
            }
            out.push(c.finish());
        }
        let mut c = Check::new(Suite::Lemma7, "uniform-beta", "equals-two-beta", 1e-12);
        for d in 1..=4 {
            for beta in [0.5, 1.0, 3.0] {
                let sigma = 1.0 / (2.0 * (d as f64).sqrt());
                let p = || format!("d={d} beta={beta}");
                if let Some(v) = c.result(p, smoothed_dual_bound(&DerivativeBounds::Uniform(beta), sigma, d)) {
                    c.observe(p, -(v - 2.0 * beta).abs());
                }
            }
        }
        out.push(c.finish());
        out
    }

    fn transport(&self) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        for sigma in [0.25, 0.5, 1.0] {
            let mut c = Check::new(Suite::Lemma10, "random-clouds", format!("smoothed-kl-below-w2:sigma={sigma}"), 1e-6);
            let mut rng = stream(self.seed, "transport", &format!("sigma={sigma}"));
            for trial in 0..20 {
                let mut cloud = || {
                    let k = rng.random_range(1..=6);
                    let pts: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
                    PointCloud::from_1d(&pts, dirichlet_ones(&mut rng, k))
                };
                let (a, b) = (cloud(), cloud());
                let p = || format!("trial={trial}");
                if let (Some(a), Some(b)) = (c.result(p, a), c.result(p, b)) {
                    if let Some(r) = c.result(p, verify_lemma10(&a, &b, sigma)) {
                        c.observe(p, r.slack);
                    }
                }
            }
            out.push(c.finish());

            let mut c = Check::new(Suite::Lemma10, "point-masses-0-1", format!("equality:sigma={sigma}"), 1e-6);
            let p = || format!("sigma={sigma}");
            let r = verify_lemma10(&PointCloud::point_mass(vec![0.0]), &PointCloud::point_mass(vec![1.0]), sigma);
            if let Some(r) = c.result(p, r) {
                let target = 1.0 / (2.0 * sigma * sigma);
                c.observe(|| format!("sigma={sigma} side=kl"), -(r.smoothed_kl - target).abs());
                c.observe(|| format!("sigma={sigma} side=w2"), -(r.transport_bound - target).abs());
            }
            out.push(c.finish());
        }

        let mut c = Check::new(Suite::Lemma10, "equal-weight-clouds", "w2-matches-permutations", 1e-12);
        let mut rng = stream(self.seed, "transport", "permutation");
        for trial in 0..30 {
            let k = rng.random_range(1..=6);
            let d = rng.random_range(1..=2);
            let mut pts = || -> Vec<Vec<f64>> {
                (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
            };
            let (a, b) = (pts(), pts());
            let p = || format!("trial={trial} k={k} d={d}");
            let w = vec![1.0 / k as f64; k];
            let exact = PointCloud::new(a.clone(), w.clone())
                .and_then(|x| PointCloud::new(b.clone(), w.clone()).and_then(|y| w2_exact(&x, &y)));
            let brute = w2_permutation(&a, &b);
            if let (Some(e), Some(o)) = (c.result(p, exact), c.result(p, brute)) {
                c.observe(p, -(e.cost - o).abs() / o.max(1.0));
            }
        }
        out.push(c.finish());

        let mut c = Check::new(Suite::Lemma10, "gaussian-pairs", "w2-gaussian-vs-discretized", 1e-3);
        for (m1, s1, m2, s2) in [(0.0, 1.0, 1.0, 1.0), (0.0, 1.0, 1.0, 1.5), (-1.0, 0.5, 1.0, 1.0), (0.5, 2.0, 0.0, 1.75)] {
            let p = || format!("N({m1},{s1}^2) vs N({m2},{s2}^2)");
            let exact = discretize_gaussian(m1, s1, 64)
                .and_then(|a| discretize_gaussian(m2, s2, 64).and_then(|b| w2_exact(&a, &b)));
            if let Some(plan) = c.result(p, exact) {
                c.observe(p, -(plan.cost.sqrt() - w2_gaussian(m1, s1, m2, s2).sqrt()).abs());
            }
        }
        out.push(c.finish());
        out
    }

    fn convexity(&self) -> Vec<CheckRecord> {
        let bases: [(&str, Vec<f64>); 2] = [("base-3", vec![0.5, 0.3, 0.2]), ("base-4", vec![0.25; 4])];
        let cells: Vec<(&str, &Vec<f64>, &str)> = bases
            .iter()
            .flat_map(|(id, b)| CONVEXITY_FAMILIES.iter().map(move |f| (*id, b, *f)))
            .collect();
        cells
            .par_iter()
            .map(|(id, base, name)| {
                let mut c = Check::new(Suite::Convexity, id, format!("certificate:{name}"), crate::divergence::CONVEXITY_TOL);
                let spec = c.result(|| name.to_string(), DivergenceSpec::parse(name, base.to_vec(), None));
                let seed = self.seed;
                if let Some(r) = spec.and_then(|s| c.result(|| name.to_string(), s.verify_convexity(CONVEXITY_TRIALS, seed))) {
                    // one observation per record keeps the trial count honest
                    c.record.trials = r.trials - 1;
                    let worst = r.worst.clone();
                    c.observe(move || format!("alpha={} worst={:?}", r.alpha, worst), r.min_slack);
                    if r.violations > 0 {
                        c.record.errors.push(format!("{} of {} trials violate", r.violations, r.trials));
                        c.record.passed = false;
                    }
                }
                c.finish()
            })
            .collect()
    }

    fn ghost(&self) -> Vec<CheckRecord> {
        self.instances
            .par_iter()
            .flat_map_iter(|inst| {
                let id = &inst.scenario.id;
                let fam = &inst.family;
                let n = fam.n();
                let mut zero = Check::new(Suite::Ghost, id, "zero-pairing", IDENTITY_TOL);
                if let Some(m) = zero.result(|| "all".into(), verify_zero_pairing(fam, &inst.scenario.centered)) {
                    for k in 0..n {
                        for i in (k + 1)..=n {
                            zero.observe(|| format!("k={k} i={i}"), -m[[k, i - 1]]);
                        }
                    }
                }
                let mut improve = Check::new(Suite::Ghost, id, "improvement", INEQUALITY_TOL);
                let mut pairing = Check::new(Suite::Ghost, id, "improvement-pairing-identity", IDENTITY_TOL);
                let mut entropy = Check::new(Suite::Ghost, id, "improvement-divergence-decrease", IDENTITY_TOL);
                let mut rng = stream(self.seed, "ghost", id);
                let grid = eta_grid();
                if let Some(spec) = improve.result(|| "kl".into(), self.spec(inst, "kl")) {
                    for draw in 0..IMPROVEMENT_DRAWS {
                        let alpha = dirichlet_ones(&mut rng, n + 1);
                        let i = rng.random_range(1..=n);
                        let eta = grid[rng.random_range(0..grid.len())];
                        let p = || format!("draw={draw} i={i} eta={eta} alpha={alpha:?}");
                        let r = HullPoint::new(alpha.clone())
                            .and_then(|a| verify_improvement(fam, &inst.scenario.centered, &spec, &a, i, eta));
                        if let Some(r) = improve.result(p, r) {
                            improve.observe(p, r.slack);
                            pairing.observe(p, -r.pairing_gap.abs());
                            entropy.observe(p, -r.h_gap);
                        }
                    }
                }
                [zero.finish(), improve.finish(), pairing.finish(), entropy.finish()]
            })
            .collect()
    }

    fn ftrl(&self) -> Vec<CheckRecord> {
        self.instances
            .par_iter()
            .flat_map_iter(|inst| {
                let id = &inst.scenario.id;
                let mut pairing = Check::new(Suite::Ftrl, id, "leader-pairing", 1e-8);
                let mut decomposition = Check::new(Suite::Ftrl, id, "regret-decomposition", 1e-8);
                if let Some(spec) = pairing.result(|| "kl".into(), self.spec(inst, "kl")) {
                    for eta in eta_grid() {
                        let p = || format!("eta={eta}");
                        let r = ftrl_trajectory(&inst.family, &spec, &inst.scenario.centered, eta, &self.opts);
                        if let Some(r) = pairing.result(p, r) {
                            pairing.observe(p, -r.max_abs_pairing);
                            decomposition.observe(p, -r.decomposition_error);
                        }
                    }
                }
                [pairing.finish(), decomposition.finish()]
            })
            .collect()
    }

    /// The potential against the relative-entropy conjugate and the grid oracle.
    fn conjugate(&self) -> Vec<CheckRecord> {
        self.instances
            .par_iter()
            .flat_map_iter(|inst| {
                let id = &inst.scenario.id;
                let fam = &inst.family;
                let n = fam.n();
                let mut dv = Check::new(Suite::Dv, id, "below-dv-conjugate", 1e-9);
                let mut grid = Check::new(Suite::Dv, id, "grid-oracle", 1e-4);
                let mut rng = stream(self.seed, "dv", id);
                let shape = (fam.n_hyp(), fam.datasets().len());
                let mut tests: Vec<(String, JointFunction)> = (0..5)
                    .map(|k| {
                        let f = JointFunction::from_shape_fn(shape, |_| rng.random_range(-3.0..3.0));
                        (format!("random-{k}"), f)
                    })
                    .collect();
                if let Ok(l) = partial_average_loss(&inst.scenario.centered, fam.datasets(), n) {
                    for eta in [-4.0, -1.0, 1.0, 4.0] {
                        tests.push((format!("eta={eta}"), &l * eta));
                    }
                }
                if let Some(spec) = dv.result(|| "kl".into(), self.spec(inst, "kl")) {
                    for (label, f) in &tests {
                        let p = || label.clone();
                        if let Some(r) = dv.result(p, phi_eval(fam, &spec, f, &self.opts)) {
                            dv.observe(p, dv_conjugate_closed_form(fam.member(0), f) - r.value);
                            if n <= 3 && (label == "random-0" || label == "eta=4") {
                                if let Some(g) = grid.result(p, phi_grid_oracle(fam, &spec, f, 1.0 / 200.0)) {
                                    grid.observe(p, -(r.value - g).abs());
                                }
                            }
                        }
                    }
                }
                let mut out = vec![dv.finish()];
                if n <= 3 {
                    out.push(grid.finish());
                }
                out
            })
            .collect()
    }
}

/// Run `suite` on the battery.
pub fn verify(suite: Suite, seed: u64) -> Result<Vec<CheckRecord>> {
    Ok(VerifyContext::new(seed)?.run(suite))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in std::iter::once(Suite::All).chain(Suite::EACH) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("lemma99".parse::<Suite>().is_err());
        assert_eq!(Suite::All.expand().len(), 9);
    }

    #[test]
    fn nan_slack_is_a_violation() {
        let mut c = Check::new(Suite::Dv, "x", "y", 1e-9);
        c.observe(|| "a".into(), 0.5);
        c.observe(|| "b".into(), f64::NAN);
        let r = c.finish();
        assert!(!r.passed);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.trials, 2);
    }
}
