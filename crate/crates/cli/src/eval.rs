use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use syflow::data::load_csv;
use syflow::metrics::{evaluate_subgroup, f1};

use crate::report::{ColumnMetrics, EvalReport, Tool};
use crate::{create_out_dir, read_labels, write_json, CmdResult};

/// Size correction exponent for reported scores.
const GAMMA: f64 = 1.0;
const THRESHOLD: f64 = 0.5;

#[derive(clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    /// CSV of membership columns, one row per data row; a `row_index`
    /// column is ignored. Values >= 0.5 count as members.
    #[arg(long)]
    memberships: PathBuf,
    /// Truth sidecar from `syflow synth`; adds F1 per column.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Membership columns by name, thresholded to crisp masks.
fn read_memberships(path: &Path) -> anyhow::Result<Vec<(String, Vec<bool>)>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&j| headers[j] != "row_index")
        .collect();
    let mut columns: Vec<(String, Vec<bool>)> = keep
        .iter()
        .map(|&j| (headers[j].clone(), Vec::new()))
        .collect();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (col, &j) in columns.iter_mut().zip(&keep) {
            let cell = record.get(j).unwrap_or("").trim();
            let v: f64 = cell.parse().with_context(|| {
                format!(
                    "row {}: `{cell}` in column `{}` is not a number",
                    line + 1,
                    headers[j]
                )
            })?;
            col.1.push(v >= THRESHOLD);
        }
    }
    Ok(columns)
}

pub fn run(args: EvalArgs) -> CmdResult {
    let dataset = load_csv(&args.data, &args.target)?.dataset;
    let n = dataset.n_samples();
    let columns = read_memberships(&args.memberships)?;
    if columns.is_empty() {
        return Err(anyhow!("{} has no membership columns", args.memberships.display()).into());
    }
    if columns[0].1.len() != n {
        return Err(anyhow!(
            "{} has {} rows but the data has {n} usable rows",
            args.memberships.display(),
            columns[0].1.len()
        )
        .into());
    }
    let truth = args
        .truth
        .as_deref()
        .map(|p| read_labels(p, n))
        .transpose()?;

    let mut scored = Vec::with_capacity(columns.len());
    for (name, mask) in columns {
        scored.push(ColumnMetrics {
            crisp_size: mask.iter().filter(|&&m| m).count(),
            evaluation: evaluate_subgroup(&dataset.target, &mask, GAMMA).ok(),
            f1: truth.as_deref().map(|t| f1(&mask, t)).transpose()?,
            column: name,
        });
    }
    let report = EvalReport {
        tool: Tool::current(),
        data: args.data.display().to_string(),
        target: args.target,
        memberships: args.memberships.display().to_string(),
        truth: args.truth.as_ref().map(|p| p.display().to_string()),
        gamma: GAMMA,
        threshold: THRESHOLD,
        columns: scored,
    };
    create_out_dir(&args.out)?;
    write_json(&args.out.join("metrics.json"), &report)?;
    for c in &report.columns {
        match &c.evaluation {
            Some(m) => println!(
                "{}: size {:.4} bc {:.4} kl {:.4} amd {:.4}",
                c.column, m.size_frac, m.bc, m.kl_size_corrected, m.amd_size_corrected
            ),
            None => println!("{}: empty", c.column),
        }
    }
    Ok(())
}
