use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eegrid::experiment::{
    compare_reports, extract, run_experiment_on, run_extract, run_interp_dump, sample_set_path,
    ExperimentConfig, Report,
};
use eegrid::sample::load_sample_set;
use eegrid::selftest::run_selftest;

/// Spatially aware EEG classification experiments.
#[derive(Parser)]
#[command(name = "eegrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and persist the sample set of a config.
    Extract(Run),
    /// Cross-validate a config; one JSON record per fold on stdout.
    Experiment(Run),
    /// Run two configs over the same folds and test candidate > baseline.
    Compare(CompareArgs),
    /// Write every interpolated slice of one window as PGM and CSV.
    InterpDump(DumpArgs),
    /// Check the numerical core against brute-force oracles.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Worker threads for extraction and folds.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Config overrides as `--key value` or `--key=value`; dotted keys reach
    /// nested tables (`--train.epochs 20`).
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Run {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long)]
    candidate: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    subject: String,
    #[arg(long, default_value_t = 0)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            bail!("expected a --key flag, got {arg:?}");
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().with_context(|| format!("--{flag} needs a value"))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let overrides = parse_overrides(overrides)?;
    ExperimentConfig::from_toml_with_overrides(&text, &overrides)
        .with_context(|| format!("config {}", path.display()))
}

/// Uses the persisted sample set when present, extracting otherwise.
fn evaluate(cfg: &ExperimentConfig, jobs: usize) -> Result<Report> {
    let path = sample_set_path(cfg);
    let set = if path.exists() {
        load_sample_set(&path).with_context(|| format!("loading {}", path.display()))?
    } else {
        extract(cfg, jobs)?
    };
    Ok(run_experiment_on(cfg, &set, jobs)?)
}

fn write_summary(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Extract(run) => {
            let cfg = load_config(&run.config, &run.common.overrides)?;
            let (path, set) = run_extract(&cfg, run.common.jobs)?;
            println!(
                "{}",
                serde_json::json!({
                    "config_hash": cfg.hash(),
                    "samples": set.len(),
                    "shape": set.shape,
                    "path": path,
                })
            );
        }
        Command::Experiment(run) => {
            let cfg = load_config(&run.config, &run.common.overrides)?;
            let report = evaluate(&cfg, run.common.jobs)?;
            print!("{}", report.to_jsonl());
            let summary = serde_json::json!({ "config": cfg, "report": report });
            let path = write_summary(&cfg.output_root(), &format!("summary-{}.json", report.config_hash), &summary)?;
            eprintln!("summary written to {}", path.display());
        }
        Command::Compare(args) => {
            let base = load_config(&args.baseline, &args.common.overrides)?;
            let cand = load_config(&args.candidate, &args.common.overrides)?;
            let a = evaluate(&base, args.common.jobs)?;
            let b = evaluate(&cand, args.common.jobs)?;
            let cmp = compare_reports(&a, &b)?;
            println!("{}", serde_json::to_string(&cmp)?);
            let summary = serde_json::json!({ "baseline": a, "candidate": b, "comparison": cmp });
            let name = format!("compare-{}-{}.json", cmp.baseline_hash, cmp.candidate_hash);
            let path = write_summary(&cand.output_root(), &name, &summary)?;
            eprintln!("summary written to {}", path.display());
        }
        Command::InterpDump(args) => {
            let cfg = load_config(&args.config, &args.common.overrides)?;
            for p in run_interp_dump(&cfg, &args.subject, args.window, &args.out)? {
                println!("{}", p.display());
            }
        }
        Command::Selftest { seed } => {
            let checks = run_selftest(seed);
            for c in &checks {
                println!("{}", serde_json::to_string(c)?);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                bail!("{failed} of {} checks failed", checks.len());
            }
        }
    }
    Ok(())
}
