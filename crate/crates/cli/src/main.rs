mod discover;
mod eval;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;
use syflow::data::{synth_generate, write_csv, SynthConfig, TargetDist};
use syflow::gradcheck::{run_all, GradcheckOptions, Suite};

use crate::report::{Tool, Truth};

/// Subgroup discovery with soft rules and spline-flow target densities.
#[derive(Parser)]
#[command(name = "syflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover subgroups with exceptional target distributions.
    Discover(discover::DiscoverArgs),
    /// Generate a synthetic dataset with one planted subgroup.
    Synth(SynthArgs),
    /// Score membership columns against a dataset.
    Eval(eval::EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    /// Features constrained by the planted rule.
    #[arg(long, default_value_t = 4)]
    c: usize,
    /// Fraction of the unit hypercube covered by the planted rule.
    #[arg(long, default_value_t = 0.1)]
    volume: f64,
    /// Target distribution inside the subgroup.
    #[arg(long, default_value = "normal")]
    dist: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per suite.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Corrupt one gradient of the named suite (checker self-test).
    #[arg(long, hide = true)]
    inject_sign_flip: Option<String>,
}

/// An error together with the exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            code: 1,
            error: e.into(),
        }
    }
}

pub fn training_failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_truth(path: &Path) -> anyhow::Result<Truth> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Truth labels, checked against the number of usable data rows.
pub fn read_labels(path: &Path, n: usize) -> anyhow::Result<Vec<bool>> {
    let labels = read_truth(path)?.labels;
    if labels.len() != n {
        bail!(
            "truth has {} labels but the data has {n} usable rows",
            labels.len()
        );
    }
    Ok(labels)
}

pub fn create_out_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let dist: TargetDist = args.dist.parse()?;
    let cfg = SynthConfig {
        n: args.n,
        p: args.p,
        c: args.c,
        volume: args.volume,
        target_dist: dist,
        seed: args.seed,
    };
    let synth = synth_generate(&cfg)?;
    create_out_dir(&args.out)?;
    write_csv(&synth.dataset, args.out.join("data.csv"))?;
    let positives = synth.truth.iter().filter(|&&t| t).count();
    let truth = Truth {
        tool: Tool::current(),
        seed: cfg.seed,
        n: cfg.n,
        p: cfg.p,
        c: cfg.c,
        volume: cfg.volume,
        target_dist: dist.name().into(),
        target_dist_description: dist.description().into(),
        target_standardization: if dist.is_heavy_tailed() {
            "quantiles"
        } else {
            "moments"
        }
        .into(),
        planted_rule_text: synth.planted.render(&synth.dataset.feature_names),
        planted_rule: synth.planted,
        positive_fraction: positives as f64 / cfg.n as f64,
        labels: synth.truth,
    };
    write_json(&args.out.join("truth.json"), &truth)?;
    eprintln!(
        "wrote {} rows ({} in subgroup) to {}",
        cfg.n,
        positives,
        args.out.display()
    );
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> CmdResult {
    let sign_flip = args
        .inject_sign_flip
        .as_deref()
        .map(str::parse::<Suite>)
        .transpose()?;
    let opts = GradcheckOptions {
        seed: args.seed,
        instances: args.instances,
        sign_flip,
        ..GradcheckOptions::default()
    };
    let reports = run_all(&opts).map_err(training_failure)?;
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<20} {:.3e} {verdict}", r.suite.name(), r.max_rel_error);
    }
    if reports.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(training_failure(anyhow!("gradient check failed")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version requests are not errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Discover(args) => discover::run(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Eval(args) => eval::run(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
