//! The alternating training loop.
//!
//! A discovery round fits a soft rule and a subgroup flow together: each
//! epoch takes one Adam step on the rule against the regularized KL
//! objective (flows frozen), then one Adam step on the subgroup flow against
//! the membership-weighted likelihood (rule frozen). The temperature halves
//! at the half and three-quarter marks.
//! Rounds are repeated to find several subgroups, each new round pushed away
//! from the densities of earlier ones.

use serde::{Deserialize, Serialize};

use crate::data::{feature_standardizer, Dataset};
use crate::flows::{
    fit_marginal, fit_weighted, fit_weighted_pair, init_identity, log_prob_batch, FlowTrainer,
    SplineFlowParams, Standardization, DEFAULT_BINS, DEFAULT_TAIL_BOUND,
};
use crate::objective::{
    kl_estimate, rule_loss_and_grad, total_objective, DensityTerms, KlNormalization,
    ObjectiveConfig,
};
use crate::optim::{adam_step, anneal_temperature, AdamState};
use crate::rules::{extract_crisp_rule, soft_rule_batch, CrispRule, SoftRuleParams};
use crate::{Error, Result};

/// How the subgroup flow follows the current soft memberships.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupFit {
    /// Maximize `sum_i s_i ln p_sg(y_i) / sum_i s_i`: the flow tracks the
    /// membership-weighted target distribution.
    #[default]
    Weighted,
    /// Maximize the two-component mixture likelihood
    /// `ln[s p_sg(y) + (1 - s) p_comp(y)]` over a subgroup and a complement
    /// flow. Only identified once memberships are close to crisp.
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_marginal: usize,
    pub epochs_subgroup: usize,
    pub lr_flow: f64,
    pub lr_rule: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub t0: f64,
    pub k_subgroups: usize,
    pub spline_bins: usize,
    pub spline_tail_bound: f64,
    /// Standardize the target by median/IQR instead of mean/std.
    pub robust_target: bool,
    pub subgroup_fit: SubgroupFit,
    /// Normalization of the objective optimized during training.
    pub normalization: KlNormalization,
    /// Recorded for provenance; training itself draws no random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl TrainConfig {
    /// Settings used for the planted-subgroup benchmarks.
    pub fn synthetic() -> Self {
        Self {
            epochs_marginal: 2000,
            epochs_subgroup: 1500,
            lr_flow: 5e-2,
            lr_rule: 2e-2,
            gamma: 0.5,
            lambda: 0.5,
            t0: 0.2,
            k_subgroups: 1,
            spline_bins: DEFAULT_BINS,
            spline_tail_bound: DEFAULT_TAIL_BOUND,
            robust_target: false,
            subgroup_fit: SubgroupFit::Weighted,
            normalization: KlNormalization::Population,
            seed: 0,
        }
    }

    /// Settings for real-world tabular data.
    pub fn real_world() -> Self {
        Self {
            epochs_marginal: 1000,
            epochs_subgroup: 1000,
            gamma: 0.3,
            lambda: 2.0,
            k_subgroups: 5,
            ..Self::synthetic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_flow", self.lr_flow),
            ("lr_rule", self.lr_rule),
            ("t0", self.t0),
            ("spline_tail_bound", self.spline_tail_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.k_subgroups == 0 {
            return Err(Error::InvalidInput("k_subgroups must be at least 1".into()));
        }
        if self.spline_bins == 0 {
            return Err(Error::InvalidInput("spline_bins must be at least 1".into()));
        }
        self.objective().validate()
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            gamma: self.gamma,
            lambda: self.lambda,
            normalization: self.normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupResult {
    /// Rule in original feature units.
    pub crisp_rule: CrispRule,
    pub rule_text: String,
    /// Soft rule in standardized feature units.
    pub soft_params: SoftRuleParams,
    pub memberships: Vec<f64>,
    pub subgroup_flow: SplineFlowParams,
    pub kl_score: f64,
    pub size_frac: f64,
    pub objective_value: f64,
    /// Objective at every epoch, before that epoch's rule update.
    pub objective_trace: Vec<f64>,
}

fn target_standardization(target: &[f64], cfg: &TrainConfig) -> Result<Standardization> {
    if cfg.robust_target {
        Standardization::from_quantiles(target)
    } else {
        Standardization::from_moments(target)
    }
}

fn fresh_flow(std: Standardization, cfg: &TrainConfig) -> SplineFlowParams {
    init_identity(cfg.spline_bins, cfg.spline_tail_bound).with_standardization(std)
}

/// Maximum-likelihood fit of the marginal target density.
pub fn fit_marginal_flow(dataset: &Dataset, cfg: &TrainConfig) -> Result<SplineFlowParams> {
    cfg.validate()?;
    if dataset.n_samples() == 0 {
        return Err(Error::DegenerateData("dataset is empty".into()));
    }
    let std = target_standardization(&dataset.target, cfg)?;
    fit_marginal(
        &dataset.target,
        fresh_flow(std, cfg),
        cfg.epochs_marginal,
        cfg.lr_flow,
    )
}

/// One discovery round against a fitted marginal and frozen prior subgroup
/// densities.
pub fn discover_one(
    dataset: &Dataset,
    marginal: &SplineFlowParams,
    prior_flows: &[SplineFlowParams],
    cfg: &TrainConfig,
) -> Result<SubgroupResult> {
    cfg.validate()?;
    let (scaled, scaler) = feature_standardizer(dataset);
    let features = &scaled.features;
    let target = &dataset.target;
    let obj_cfg = cfg.objective();

    let mut rule = SoftRuleParams::spanning(&scaled.feature_ranges, cfg.t0)?;
    let min_gaps: Vec<f64> = scaled
        .feature_ranges
        .iter()
        .map(|&(lo, hi)| 1e-6 * (hi - lo).max(1.0))
        .collect();
    let mut rule_theta = rule.to_flat();
    let mut rule_adam = AdamState::new(rule_theta.len());

    let std = marginal.standardization;
    let mut subgroup = FlowTrainer::new(fresh_flow(std, cfg));
    let mut complement = match cfg.subgroup_fit {
        SubgroupFit::Weighted => None,
        SubgroupFit::Mixture => Some(FlowTrainer::new(fresh_flow(std, cfg))),
    };

    let mut terms = DensityTerms::evaluate(target, &subgroup.params, marginal, prior_flows)?;
    let epochs = cfg.epochs_subgroup;
    let mut trace = Vec::with_capacity(epochs);
    let mut temperature = cfg.t0;
    for epoch in 0..epochs {
        temperature = anneal_temperature(epoch, epochs, temperature);
        rule.temperature = temperature;

        terms.logp_sg = log_prob_batch(&subgroup.params, target)?;
        let (value, grad) = rule_loss_and_grad(features, &rule, &terms, &obj_cfg)?;
        trace.push(value.objective);
        adam_step(
            &mut rule_theta,
            &grad.to_flat(),
            &mut rule_adam,
            cfg.lr_rule,
        )?;
        rule.set_flat(&rule_theta);
        rule.project(&min_gaps);
        rule_theta = rule.to_flat();

        let s = soft_rule_batch(features, &rule)?;
        match complement.as_mut() {
            None => fit_weighted(target, &s, &mut subgroup, cfg.lr_flow)?,
            Some(comp) => {
                fit_weighted_pair(target, &s, &mut subgroup, comp, cfg.lr_flow)?;
            }
        }
    }

    let memberships = soft_rule_batch(features, &rule)?;
    let logp_sg = log_prob_batch(&subgroup.params, target)?;
    let kl_score = kl_estimate(&memberships, &logp_sg, &terms.logp_marg)?;
    let objective_value = total_objective(
        &memberships,
        &logp_sg,
        &terms.logp_marg,
        &terms.prior_logps,
        &obj_cfg,
    )?;
    let size_frac = memberships.iter().sum::<f64>() / memberships.len() as f64;
    let scaled_rule = extract_crisp_rule(&rule, &scaled.feature_ranges, &scaled.feature_kinds)?;
    let crisp_rule = scaler.unscale_rule(&scaled_rule);
    let rule_text = crisp_rule.render(&dataset.feature_names);
    Ok(SubgroupResult {
        crisp_rule,
        rule_text,
        soft_params: rule,
        memberships,
        subgroup_flow: subgroup.into_params(),
        kl_score,
        size_frac,
        objective_value,
        objective_trace: trace,
    })
}

/// Outcome of [`discover_k`]: the shared marginal and one entry per round.
#[derive(Debug)]
pub struct Discovery {
    pub marginal_flow: SplineFlowParams,
    pub rounds: Vec<Result<SubgroupResult>>,
}

impl Discovery {
    pub fn successes(&self) -> impl Iterator<Item = &SubgroupResult> {
        self.rounds.iter().filter_map(|r| r.as_ref().ok())
    }
}

/// Fits the marginal once, then runs `k_subgroups` rounds, each regularized
/// against the subgroup flows of all earlier successful rounds. A failed
/// round is recorded and the remaining rounds still run.
pub fn discover_k(dataset: &Dataset, cfg: &TrainConfig) -> Result<Discovery> {
    let marginal_flow = fit_marginal_flow(dataset, cfg)?;
    let mut priors: Vec<SplineFlowParams> = Vec::new();
    let mut rounds = Vec::with_capacity(cfg.k_subgroups);
    for _ in 0..cfg.k_subgroups {
        let round = discover_one(dataset, &marginal_flow, &priors, cfg);
        if let Ok(result) = &round {
            priors.push(result.subgroup_flow.clone());
        }
        rounds.push(round);
    }
    Ok(Discovery {
        marginal_flow,
        rounds,
    })
}

/// Crisp membership of every row under a result's rule.
pub fn crisp_memberships(dataset: &Dataset, result: &SubgroupResult) -> Result<Vec<bool>> {
    crate::rules::crisp_eval_batch(&result.crisp_rule, &dataset.features)
}
