use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use genbound::report::{rate_table, reports_csv, reports_json, run, sgd_table, verify_manifest, RunManifest};
use genbound::scenario::RunConfig;
use genbound::verify::Suite;
use genbound::{Error, Result};

#[derive(Parser)]
#[command(name = "genbound", version, about = "Exact generalization-bound laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Compute every configured bound and audit it against the exact error.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Write reports, manifest and timing here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite on the built-in battery.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate bounds across sample sizes, plus the SGD sweep when configured.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn io<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(e.to_string())
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::from_json(&fs::read_to_string(path).map_err(io)?)
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io)?;
            fs::write(dir.join(name), text).map_err(io)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn finish(out: Option<&Path>, manifest: &RunManifest, started: Instant, print_manifest: bool) -> Result<i32> {
    let seconds = started.elapsed().as_secs_f64();
    if let Some(dir) = out {
        emit(Some(dir), "manifest.json", &manifest.to_json())?;
        emit(Some(dir), "timing.json", &format!("{{\"wall_clock_seconds\": {seconds}}}\n"))?;
    } else if print_manifest {
        print!("{}", manifest.to_json());
    }
    for s in &manifest.summary {
        eprintln!("{}: {} checks, {} failed", s.suite, s.checks, s.failed);
    }
    for e in &manifest.errors {
        eprintln!("error: {e}");
    }
    eprintln!("wall clock: {seconds:.2}s");
    Ok(manifest.exit_code())
}

fn execute(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    match cli.command {
        Command::Run { config, format, out } => {
            let cfg = load(&config)?;
            let output = run(&cfg)?;
            let out = out.as_deref();
            match format {
                Format::Csv => emit(out, "reports.csv", &reports_csv(&output.reports)?)?,
                Format::Json => emit(out, "reports.json", &reports_json(&output.reports))?,
            }
            finish(out, &output.manifest, started, false)
        }
        Command::Verify { suite, seed, out } => {
            let suite: Suite = suite.parse()?;
            let manifest = verify_manifest(suite, seed)?;
            finish(out.as_deref(), &manifest, started, true)
        }
        Command::Sweep { config, out } => {
            let cfg = load(&config)?;
            let out = out.as_deref();
            let mut sgd_cfg = cfg.clone();
            let sgd = sgd_cfg.sgd.take();
            let output = run(&sgd_cfg)?;
            let mut code = 0;
            if !output.reports.is_empty() {
                emit(out, "rates.csv", &rate_table(&output.reports)?)?;
                code = output.manifest.exit_code();
            }
            if let Some(sgd) = sgd {
                let sweep = sgd.sweep(cfg.seed)?;
                if out.is_none() && !output.reports.is_empty() {
                    println!();
                }
                emit(out, "sgd.csv", &sgd_table(&sweep)?)?;
                eprintln!("sgd: bound * sqrt(n) spans a factor {}", sweep.band_ratio);
                if sweep.rows.iter().any(|r| !r.valid) && code == 0 {
                    code = 1;
                }
            }
            finish(out, &output.manifest, started, false).map(|c| c.max(code))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("GENBOUND_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
