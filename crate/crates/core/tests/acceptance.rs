//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::time::{Duration, Instant};

use genbound::report::{run, verify_manifest, RunManifest};
use genbound::scenario::{battery, RunConfig};
use genbound::sgd::SgdConfig;
use genbound::verify::{CheckRecord, Suite};

const SEED: u64 = 7;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn records(m: &RunManifest, suite: Suite) -> Vec<&CheckRecord> {
    m.checks.iter().filter(|c| c.suite == suite.name()).collect()
}

/// Passes when the suite produced checks and none failed.
fn suite_outcome(m: &RunManifest, suites: &[Suite]) -> Outcome {
    let mut total = 0;
    let mut failed = Vec::new();
    let mut worst = f64::INFINITY;
    for &s in suites {
        for c in records(m, s) {
            total += 1;
            worst = worst.min(c.worst_slack);
            if !c.passed {
                failed.push(format!("{}/{}/{} (worst slack {:e}, {} errors)", c.suite, c.instance, c.check, c.worst_slack, c.errors.len()));
            }
        }
    }
    let detail = if failed.is_empty() {
        format!("{total} checks, worst slack {worst:e}")
    } else {
        format!("{} of {total} checks failed: {}", failed.len(), failed.join("; "))
    };
    outcome(total > 0 && failed.is_empty(), detail)
}

fn master_soundness() -> Outcome {
    let config = RunConfig {
        seed: SEED,
        potential: Default::default(),
        scenarios: battery(),
        sgd: None,
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let started = Instant::now();
    let output = match pool.install(|| run(&config)) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let elapsed = started.elapsed();
    let finite: Vec<_> = output.reports.iter().filter(|r| !r.vacuous).collect();
    let bad: Vec<String> = finite
        .iter()
        .filter(|r| !(r.slack >= -1e-7))
        .map(|r| format!("{} {} slack {:e}", r.scenario, r.divergence, r.slack))
        .collect();
    let worst = finite.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let passed = bad.is_empty()
        && output.manifest.errors.is_empty()
        && config.scenarios.len() >= 20
        && elapsed < Duration::from_secs(300);
    outcome(
        passed,
        format!(
            "{} scenarios, {} finite bounds, {} vacuous, worst slack {worst:e}, {} errors, {:.1}s{}",
            config.scenarios.len(),
            finite.len(),
            output.reports.len() - finite.len(),
            output.manifest.errors.len(),
            elapsed.as_secs_f64(),
            if bad.is_empty() { String::new() } else { format!("; violations: {}", bad.join("; ")) }
        ),
    )
}

fn sgd_scenario() -> Outcome {
    let cfg = SgdConfig::default();
    let started = Instant::now();
    let sweep = match cfg.sweep(SEED) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let elapsed = started.elapsed();
    let covered = sweep.rows.iter().all(|r| r.bound >= r.mc_mean.abs() - r.mc_ci);
    let band = sweep.band_ratio <= 2.0;
    let rows: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("n={} bound={:.4} |gen|={:.4}", r.n, r.bound, r.mc_mean.abs()))
        .collect();
    outcome(
        covered && band && elapsed < Duration::from_secs(600),
        format!(
            "bound covers MC estimate: {covered}; bound*sqrt(n) band ratio {:.3} (limit 2); {:.1}s; {}",
            sweep.band_ratio,
            elapsed.as_secs_f64(),
            rows.join(", ")
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "master soundness", master_soundness()));

    let first = verify_manifest(Suite::All, SEED).expect("verify all");
    results.push((2, "proof chain", suite_outcome(&first, &[Suite::Thm2, Suite::Lemma3, Suite::Lemma6])));
    results.push((3, "ghost identities", suite_outcome(&first, &[Suite::Ghost])));
    results.push((4, "conjugate oracles", suite_outcome(&first, &[Suite::Dv])));
    results.push((5, "certificate audits", suite_outcome(&first, &[Suite::Convexity])));
    results.push((6, "transport and smoothing", suite_outcome(&first, &[Suite::Lemma10])));
    results.push((7, "smoothed dual norm", suite_outcome(&first, &[Suite::Lemma7])));
    results.push((8, "leader identity", suite_outcome(&first, &[Suite::Ftrl])));
    results.push((9, "sgd scenario", sgd_scenario()));

    let second = verify_manifest(Suite::All, SEED).expect("verify all");
    let same = first.to_json() == second.to_json();
    results.push((10, "determinism", outcome(same, format!("manifests byte-identical: {same}"))));

    for (k, name, o) in &results {
        println!("criterion {k:>2} [{}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.passed).map(|(k, _, _)| *k).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
