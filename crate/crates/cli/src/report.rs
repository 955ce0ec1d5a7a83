//! Serialized outputs of the commands.

use serde::{Deserialize, Serialize};
use syflow::discovery::TrainConfig;
use syflow::metrics::SubgroupMetrics;
use syflow::rules::CrispRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Tool {
    pub fn current() -> Self {
        Self {
            name: "syflow".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: String,
    pub target: String,
    pub truth: Option<String>,
    /// Defaults profile the unset flags came from.
    pub profile: String,
    pub train: TrainConfig,
    pub profiles: Profiles,
}

/// Both built-in hyperparameter profiles, echoed for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub real_world: TrainConfig,
    pub synthetic: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub n_features: usize,
    pub dropped_rows: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// `moments` (mean/std) or `quantiles` (median/IQR).
    pub target_standardization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub round: usize,
    pub rule_text: String,
    pub crisp_rule: CrispRule,
    pub kl_score: f64,
    pub size_frac: f64,
    pub objective_value: f64,
    pub crisp_size: usize,
    /// Histogram metrics of the crisp subgroup; absent when it is empty.
    pub evaluation: Option<SubgroupMetrics>,
    pub f1: Option<f64>,
    /// Flat flow parameters: widths, heights, derivatives, B, shift, scale.
    pub subgroup_flow: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRound {
    pub round: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub discovery_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: Tool,
    pub seed: u64,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    /// Size correction exponent used for `evaluation`.
    pub evaluation_gamma: f64,
    pub marginal_flow: Vec<f64>,
    pub subgroups: Vec<SubgroupReport>,
    pub failed_rounds: Vec<FailedRound>,
    pub timing: Timing,
}

/// Sidecar written next to a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub tool: Tool,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub c: usize,
    pub volume: f64,
    pub target_dist: String,
    pub target_dist_description: String,
    /// Standardization to use for this target: `quantiles` for heavy tails.
    pub target_standardization: String,
    pub planted_rule: CrispRule,
    pub planted_rule_text: String,
    pub positive_fraction: f64,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMetrics {
    pub column: String,
    pub crisp_size: usize,
    pub evaluation: Option<SubgroupMetrics>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: Tool,
    pub data: String,
    pub target: String,
    pub memberships: String,
    pub truth: Option<String>,
    pub gamma: f64,
    /// Soft membership columns are thresholded at this value.
    pub threshold: f64,
    pub columns: Vec<ColumnMetrics>,
}
