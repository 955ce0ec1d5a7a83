use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::ValueEnum;
use syflow::data::{load_csv, Dataset};
use syflow::discovery::{crisp_memberships, discover_k, SubgroupFit, SubgroupResult, TrainConfig};
use syflow::flows::{log_prob_batch, SplineFlowParams};
use syflow::metrics::{evaluate_subgroup, f1};
use syflow::objective::KlNormalization;

use crate::report::{
    DatasetSummary, FailedRound, Profiles, RunConfig, RunReport, SubgroupReport, Timing, Tool,
};
use crate::{create_out_dir, read_labels, training_failure, write_json, CmdResult, Failure};

const DENSITY_GRID: usize = 512;

#[derive(Clone, Copy, ValueEnum)]
pub enum Profile {
    RealWorld,
    Synthetic,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FitArg {
    Weighted,
    Mixture,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum NormalizationArg {
    Population,
    Subgroup,
}

#[derive(clap::Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    data: PathBuf,
    /// Name of the target column.
    #[arg(long)]
    target: String,
    /// Hyperparameter profile for every flag left unset.
    #[arg(long, value_enum, default_value = "real-world")]
    profile: Profile,
    /// Number of subgroups to discover [real-world: 5].
    #[arg(long)]
    k: Option<usize>,
    /// Size correction exponent [real-world: 0.3].
    #[arg(long)]
    gamma: Option<f64>,
    /// Diversity regularizer strength [real-world: 2.0].
    #[arg(long)]
    lambda: Option<f64>,
    /// Initial temperature [0.2].
    #[arg(long)]
    t0: Option<f64>,
    /// [real-world: 1000]
    #[arg(long)]
    epochs_marginal: Option<usize>,
    /// [real-world: 1000]
    #[arg(long)]
    epochs_subgroup: Option<usize>,
    /// [5e-2]
    #[arg(long)]
    lr_flow: Option<f64>,
    /// [2e-2]
    #[arg(long)]
    lr_rule: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Truth sidecar from `syflow synth`; adds F1 per subgroup.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Standardize the target by median/IQR (heavy-tailed targets).
    #[arg(long)]
    robust_target: bool,
    #[arg(long, value_enum)]
    subgroup_fit: Option<FitArg>,
    #[arg(long, value_enum)]
    normalization: Option<NormalizationArg>,
}

impl DiscoverArgs {
    fn train_config(&self) -> TrainConfig {
        let base = match self.profile {
            Profile::RealWorld => TrainConfig::real_world(),
            Profile::Synthetic => TrainConfig::synthetic(),
        };
        TrainConfig {
            k_subgroups: self.k.unwrap_or(base.k_subgroups),
            gamma: self.gamma.unwrap_or(base.gamma),
            lambda: self.lambda.unwrap_or(base.lambda),
            t0: self.t0.unwrap_or(base.t0),
            epochs_marginal: self.epochs_marginal.unwrap_or(base.epochs_marginal),
            epochs_subgroup: self.epochs_subgroup.unwrap_or(base.epochs_subgroup),
            lr_flow: self.lr_flow.unwrap_or(base.lr_flow),
            lr_rule: self.lr_rule.unwrap_or(base.lr_rule),
            robust_target: self.robust_target || base.robust_target,
            subgroup_fit: match self.subgroup_fit {
                Some(FitArg::Weighted) => SubgroupFit::Weighted,
                Some(FitArg::Mixture) => SubgroupFit::Mixture,
                None => base.subgroup_fit,
            },
            normalization: match self.normalization {
                Some(NormalizationArg::Population) => KlNormalization::Population,
                Some(NormalizationArg::Subgroup) => KlNormalization::Subgroup,
                None => base.normalization,
            },
            seed: self.seed,
            ..base
        }
    }
}

pub fn run(args: DiscoverArgs) -> CmdResult {
    let started = Instant::now();
    let cfg = args.train_config();
    cfg.validate()?;
    let loaded = load_csv(&args.data, &args.target)?;
    if loaded.dropped_rows > 0 {
        eprintln!("dropped {} rows with unparsable cells", loaded.dropped_rows);
    }
    let dataset = loaded.dataset;
    let truth = args
        .truth
        .as_deref()
        .map(|p| read_labels(p, dataset.n_samples()))
        .transpose()?;

    let discovery = discover_k(&dataset, &cfg).map_err(training_failure)?;
    let discovery_seconds = started.elapsed().as_secs_f64();

    let mut subgroups = Vec::new();
    let mut failed_rounds = Vec::new();
    let mut crisp = Vec::new();
    for (round, outcome) in discovery.rounds.iter().enumerate() {
        match outcome {
            Ok(result) => {
                let mask = crisp_memberships(&dataset, result).map_err(training_failure)?;
                subgroups.push(subgroup_report(
                    round,
                    result,
                    &dataset,
                    &mask,
                    truth.as_deref(),
                )?);
                crisp.push(mask);
            }
            Err(e) => {
                eprintln!("round {round} failed: {e}");
                failed_rounds.push(FailedRound {
                    round,
                    error: e.to_string(),
                });
            }
        }
    }

    let successes: Vec<&SubgroupResult> = discovery.successes().collect();
    create_out_dir(&args.out)?;
    write_rules(&args.out, &successes)?;
    write_memberships(&args.out, dataset.n_samples(), &successes, &crisp)?;
    write_densities(
        &args.out,
        &dataset.target,
        &discovery.marginal_flow,
        &successes,
    )?;

    let report = RunReport {
        tool: Tool::current(),
        seed: args.seed,
        config: RunConfig {
            data: args.data.display().to_string(),
            target: args.target.clone(),
            truth: args.truth.as_ref().map(|p| p.display().to_string()),
            profile: match args.profile {
                Profile::RealWorld => "real_world",
                Profile::Synthetic => "synthetic",
            }
            .into(),
            train: cfg,
            profiles: Profiles {
                real_world: TrainConfig::real_world(),
                synthetic: TrainConfig::synthetic(),
            },
        },
        dataset: DatasetSummary {
            n_samples: dataset.n_samples(),
            n_features: dataset.n_features(),
            dropped_rows: loaded.dropped_rows,
            feature_names: dataset.feature_names.clone(),
            target_name: dataset.target_name.clone(),
            target_standardization: if cfg.robust_target {
                "quantiles"
            } else {
                "moments"
            }
            .into(),
        },
        evaluation_gamma: 1.0,
        marginal_flow: discovery.marginal_flow.to_serialized(),
        subgroups,
        failed_rounds,
        timing: Timing {
            discovery_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
    };
    write_json(&args.out.join("report.json"), &report)?;
    for s in &report.subgroups {
        println!("{:.4}  {}", s.kl_score, s.rule_text);
    }
    if report.subgroups.is_empty() {
        return Err(training_failure(anyhow!("every discovery round failed")));
    }
    Ok(())
}

fn subgroup_report(
    round: usize,
    result: &SubgroupResult,
    dataset: &Dataset,
    mask: &[bool],
    truth: Option<&[bool]>,
) -> Result<SubgroupReport, Failure> {
    Ok(SubgroupReport {
        round,
        rule_text: result.rule_text.clone(),
        crisp_rule: result.crisp_rule.clone(),
        kl_score: result.kl_score,
        size_frac: result.size_frac,
        objective_value: result.objective_value,
        crisp_size: mask.iter().filter(|&&m| m).count(),
        // an empty crisp subgroup has no histogram to compare
        evaluation: evaluate_subgroup(&dataset.target, mask, 1.0).ok(),
        f1: truth.map(|t| f1(mask, t)).transpose()?,
        subgroup_flow: result.subgroup_flow.to_serialized(),
    })
}

fn write_rules(out: &Path, results: &[&SubgroupResult]) -> anyhow::Result<()> {
    let text: String = results
        .iter()
        .map(|r| format!("{}\n", r.rule_text))
        .collect();
    let path = out.join("rules.txt");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_memberships(
    out: &Path,
    n: usize,
    results: &[&SubgroupResult],
    crisp: &[Vec<bool>],
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(out.join("memberships.csv"))?;
    let mut header = vec!["row_index".to_string()];
    for k in 1..=results.len() {
        header.push(format!("soft_{k}"));
        header.push(format!("crisp_{k}"));
    }
    w.write_record(&header)?;
    for i in 0..n {
        let mut row = vec![i.to_string()];
        for (r, c) in results.iter().zip(crisp) {
            row.push(r.memberships[i].to_string());
            row.push(u8::from(c[i]).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_densities(
    out: &Path,
    target: &[f64],
    marginal: &SplineFlowParams,
    results: &[&SubgroupResult],
) -> anyhow::Result<()> {
    let lo = target.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let (start, end) = (lo - 0.5 * range, hi + 0.5 * range);
    let grid: Vec<f64> = (0..DENSITY_GRID)
        .map(|i| start + (end - start) * i as f64 / (DENSITY_GRID - 1) as f64)
        .collect();
    let mut columns = vec![log_prob_batch(marginal, &grid)?];
    for r in results {
        columns.push(log_prob_batch(&r.subgroup_flow, &grid)?);
    }

    let mut w = csv::Writer::from_path(out.join("densities.csv"))?;
    let mut header = vec!["y".to_string(), "marginal".to_string()];
    header.extend((1..=results.len()).map(|k| format!("subgroup_{k}")));
    w.write_record(&header)?;
    for (i, y) in grid.iter().enumerate() {
        let mut row = vec![y.to_string()];
        row.extend(columns.iter().map(|c| c[i].exp().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
