//! Experiment drivers and their serialized outputs.
//!
//! Manifests hold only deterministic content. Timing lives outside them so
//! repeated runs with the same configuration and seed are byte-identical.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bounds::{bound_for, bound_sgd_1d, BoundReport};
use crate::error::{Error, Result};
use crate::scenario::{battery, RunConfig};
use crate::verify::{CheckRecord, Suite, VerifyContext};

pub const ARTIFACT: &str = "genbound";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub checks: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical JSON form of the inputs.
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub summary: Vec<SuiteSummary>,
    pub checks: Vec<CheckRecord>,
    /// Cells that could not be computed; the run continues past them.
    pub errors: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config_hash: String, seed: u64, checks: Vec<CheckRecord>, errors: Vec<String>) -> Self {
        let mut summary: Vec<SuiteSummary> = Vec::new();
        for c in &checks {
            match summary.iter_mut().find(|s| s.suite == c.suite) {
                Some(s) => {
                    s.checks += 1;
                    s.failed += usize::from(!c.passed);
                }
                None => summary.push(SuiteSummary {
                    suite: c.suite.clone(),
                    checks: 1,
                    failed: usize::from(!c.passed),
                }),
            }
        }
        Self {
            artifact: ARTIFACT.into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash,
            seed,
            passed: checks.iter().all(|c| c.passed),
            summary,
            checks,
            errors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// 0 when every check passed, 1 on a violation, 2 when only cell errors occurred.
    pub fn exit_code(&self) -> i32 {
        if !self.passed {
            1
        } else if !self.errors.is_empty() {
            2
        } else {
            0
        }
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Run the named suites on the battery.
pub fn verify_manifest(suite: Suite, seed: u64) -> Result<RunManifest> {
    let ctx = VerifyContext::new(seed)?;
    let checks = ctx.run(suite);
    let hash = hash_json(&(suite.name(), seed, battery(), ctx.opts));
    Ok(RunManifest::new(&format!("verify {suite}"), hash, seed, checks, Vec::new()))
}

pub struct RunOutput {
    pub reports: Vec<BoundReport>,
    pub manifest: RunManifest,
}

fn bound_check(r: &BoundReport) -> CheckRecord {
    let parameters = format!("n={}", r.n);
    let passed = r.holds();
    CheckRecord {
        suite: "bounds".into(),
        instance: r.scenario.clone(),
        check: r.divergence.clone(),
        trials: 1,
        tol: r.tol,
        worst_slack: r.slack,
        worst_parameters: parameters.clone(),
        violations: if passed {
            Vec::new()
        } else {
            vec![crate::verify::Violation { parameters, slack: r.slack }]
        },
        errors: Vec::new(),
        passed,
    }
}

/// Every bound for every `(scenario, n, divergence)` cell, in configuration order.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let mut cells = Vec::new();
    for sc in &config.scenarios {
        for n in sc.sizes()? {
            cells.push((sc, n));
        }
    }
    let computed: Vec<Vec<std::result::Result<BoundReport, String>>> = cells
        .par_iter()
        .map(|(cfg, n)| match cfg.build(*n) {
            Err(e) => vec![Err(format!("{} n={n}: {e}", cfg.id))],
            Ok(sc) => sc
                .divergence_names()
                .iter()
                .map(|d| bound_for(&sc, d).map_err(|e| format!("{} n={n} {d}: {e}", cfg.id)))
                .collect(),
        })
        .collect();
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for r in computed.into_iter().flatten() {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => errors.push(e),
        }
    }
    if let Some(sgd) = &config.sgd {
        sgd.validate()?;
        for &n in &sgd.ns {
            match bound_sgd_1d(sgd, n, config.seed) {
                Ok(r) => reports.push(r),
                Err(e) => errors.push(format!("sgd n={n}: {e}")),
            }
        }
    }
    let checks = reports.iter().map(bound_check).collect();
    let manifest = RunManifest::new("run", hash_json(config), config.seed, checks, errors);
    Ok(RunOutput { reports, manifest })
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Fixed columns; floats use the shortest representation that round-trips.
pub fn reports_csv(reports: &[BoundReport]) -> Result<String> {
    csv_string(&BoundReport::CSV_HEADER, reports.iter().map(BoundReport::csv_record))
}

pub fn reports_json(reports: &[BoundReport]) -> String {
    #[derive(Serialize)]
    struct Reports<'a> {
        reports: &'a [BoundReport],
    }
    serde_json::to_string_pretty(&Reports { reports }).expect("reports serialize") + "\n"
}

pub const RATE_HEADER: [&str; 9] = [
    "scenario",
    "n",
    "divergence",
    "gen_true",
    "bound",
    "rate_factor",
    "ln_n",
    "ln_abs_gen",
    "ln_bound",
];

/// Per-`n` bounds with log columns for plotting. `rate_factor` is `n^{-1/p}`
/// for the uniform-convexity bounds and `n^{-1/2}` otherwise.
pub fn rate_table(reports: &[BoundReport]) -> Result<String> {
    csv_string(
        &RATE_HEADER,
        reports.iter().map(|r| {
            let nf = r.n as f64;
            let rate = r.diagnostics.get("rate_factor").copied().unwrap_or(1.0 / nf.sqrt());
            vec![
                r.scenario.clone(),
                r.n.to_string(),
                r.divergence.clone(),
                r.gen_true.to_string(),
                r.bound.to_string(),
                rate.to_string(),
                nf.ln().to_string(),
                r.gen_true.abs().ln().to_string(),
                r.bound.ln().to_string(),
            ]
        }),
    )
}

pub const SGD_HEADER: [&str; 10] = [
    "n",
    "step",
    "smoothed_divergence",
    "dual_moment",
    "bound",
    "bound_sqrt_n",
    "gen_closed_form",
    "mc_mean",
    "mc_ci",
    "valid",
];

pub fn sgd_table(sweep: &crate::sgd::SgdSweep) -> Result<String> {
    csv_string(
        &SGD_HEADER,
        sweep.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.step.to_string(),
                r.smoothed_divergence.to_string(),
                r.dual_moment.to_string(),
                r.bound.to_string(),
                r.bound_sqrt_n.to_string(),
                r.gen_closed_form.to_string(),
                r.mc_mean.to_string(),
                r.mc_ci.to_string(),
                r.valid.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let ok = RunManifest::new("x", String::new(), 1, Vec::new(), Vec::new());
        assert_eq!(ok.exit_code(), 0);
        let err = RunManifest::new("x", String::new(), 1, Vec::new(), vec!["bad cell".into()]);
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        assert_eq!(hash_json(&(1, "a")), hash_json(&(1, "a")));
        assert_ne!(hash_json(&(1, "a")), hash_json(&(2, "a")));
        assert_eq!(hash_json(&0).len(), 64);
    }
}
