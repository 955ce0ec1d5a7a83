//! Size-corrected, diversity-regularized KL objective for a soft subgroup.
//!
//! With memberships `s`, subgroup log-density `a`, marginal log-density `b`
//! and frozen prior subgroup log-densities `c_j`:
//!
//! ```text
//! KL     = sum_k s_k (a_k - b_k) / sum_k s_k
//! D_j    = sum_k s_k (a_k - c_jk) / sum_k s_k
//! obj    = (mean s)^gamma * KL + lambda * mean_j D_j
//! ```
//!
//! Under [`KlNormalization::Population`] both divergence terms are divided by
//! `n` instead of `sum_k s_k`, i.e. each is multiplied by `mean s`. This is the
//! form used while training: the extra size factor counteracts the way soft
//! boundaries leak membership to nearby outside samples.
//!
//! Training minimizes `-obj` over the rule parameters with the flows held
//! fixed.

use serde::{Deserialize, Serialize};

use crate::flows::{log_prob_batch, SplineFlowParams};
use crate::rules::{soft_rule_backward, soft_rule_batch, RuleGrad, SoftRuleParams};
use crate::{Error, Matrix, Result};

/// Relative floor on membership mass: `sum s <= EMPTY_MASS_FRACTION * n` is
/// an empty subgroup.
pub const EMPTY_MASS_FRACTION: f64 = 1e-6;

/// Denominator of the membership-weighted log-ratio sums in the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlNormalization {
    /// Divide by the membership mass: a conditional-mean divergence estimate.
    #[default]
    Subgroup,
    /// Divide by the sample count.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub gamma: f64,
    pub lambda: f64,
    #[serde(default)]
    pub normalization: KlNormalization,
}

impl ObjectiveConfig {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        let cfg = Self {
            gamma,
            lambda,
            normalization: KlNormalization::Subgroup,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_normalization(self, normalization: KlNormalization) -> Self {
        Self {
            normalization,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

pub fn subgroup_size_frac(s: &[f64]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::InvalidInput("no memberships".into()));
    }
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn membership_mass(s: &[f64]) -> Result<f64> {
    let mass: f64 = s.iter().sum();
    let threshold = EMPTY_MASS_FRACTION * s.len() as f64;
    if mass.is_nan() || mass <= threshold {
        return Err(Error::EmptySubgroup { mass, threshold });
    }
    Ok(mass)
}

/// Membership-weighted mean of `logp_sg - logp_ref`.
pub fn kl_estimate(s: &[f64], logp_sg: &[f64], logp_ref: &[f64]) -> Result<f64> {
    check_len(s.len(), logp_sg.len())?;
    check_len(s.len(), logp_ref.len())?;
    let mass = membership_mass(s)?;
    let weighted: f64 = s
        .iter()
        .zip(logp_sg.iter().zip(logp_ref))
        .map(|(w, (a, b))| w * (a - b))
        .sum();
    Ok(weighted / mass)
}

/// Mean of [`kl_estimate`] against each prior subgroup density; 0 with no priors.
pub fn diversity_penalty(s: &[f64], logp_sg: &[f64], prior_logps: &[Vec<f64>]) -> Result<f64> {
    if prior_logps.is_empty() {
        check_len(s.len(), logp_sg.len())?;
        return Ok(0.0);
    }
    let mut total = 0.0;
    for prior in prior_logps {
        total += kl_estimate(s, logp_sg, prior)?;
    }
    Ok(total / prior_logps.len() as f64)
}

pub fn total_objective(
    s: &[f64],
    logp_sg: &[f64],
    logp_marg: &[f64],
    prior_logps: &[Vec<f64>],
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    let kl = kl_estimate(s, logp_sg, logp_marg)?;
    let size = subgroup_size_frac(s)?;
    let penalty = diversity_penalty(s, logp_sg, prior_logps)?;
    let norm = match cfg.normalization {
        KlNormalization::Subgroup => 1.0,
        KlNormalization::Population => size,
    };
    Ok(norm * (size.powf(cfg.gamma) * kl + cfg.lambda * penalty))
}

/// Objective value and its components at one set of memberships.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub objective: f64,
    pub kl: f64,
    pub size_frac: f64,
    pub penalty: f64,
}

/// Objective and `d objective / d s_k` for every sample.
pub fn objective_and_membership_grad(
    s: &[f64],
    logp_sg: &[f64],
    logp_marg: &[f64],
    prior_logps: &[Vec<f64>],
    cfg: &ObjectiveConfig,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    cfg.validate()?;
    let n = s.len();
    let kl = kl_estimate(s, logp_sg, logp_marg)?;
    let penalty = diversity_penalty(s, logp_sg, prior_logps)?;
    let mass = membership_mass(s)?;
    let size = mass / n as f64;
    let size_factor = size.powf(cfg.gamma);
    // d(size^gamma)/ds_k = gamma size^(gamma-1) / n, zero when gamma = 0
    let size_slope = if cfg.gamma == 0.0 {
        0.0
    } else {
        cfg.gamma * size.powf(cfg.gamma - 1.0) / n as f64
    };
    let prior_scale = if prior_logps.is_empty() {
        0.0
    } else {
        cfg.lambda / prior_logps.len() as f64
    };
    let (objective, grad) = match cfg.normalization {
        KlNormalization::Subgroup => {
            let mut grad: Vec<f64> = (0..n)
                .map(|k| {
                    let ratio = logp_sg[k] - logp_marg[k];
                    size_slope * kl + size_factor * (ratio - kl) / mass
                })
                .collect();
            if prior_scale != 0.0 {
                for prior in prior_logps {
                    let d = kl_estimate(s, logp_sg, prior)?;
                    for (k, g) in grad.iter_mut().enumerate() {
                        *g += prior_scale * (logp_sg[k] - prior[k] - d) / mass;
                    }
                }
            }
            (size_factor * kl + cfg.lambda * penalty, grad)
        }
        KlNormalization::Population => {
            // size * KL = sum_k s_k r_k / n, so each term is linear in s
            let kl_pop = size * kl;
            let mut grad: Vec<f64> = (0..n)
                .map(|k| {
                    let ratio = logp_sg[k] - logp_marg[k];
                    size_slope * kl_pop + size_factor * ratio / n as f64
                })
                .collect();
            if prior_scale != 0.0 {
                for prior in prior_logps {
                    for (k, g) in grad.iter_mut().enumerate() {
                        *g += prior_scale * (logp_sg[k] - prior[k]) / n as f64;
                    }
                }
            }
            (size * (size_factor * kl + cfg.lambda * penalty), grad)
        }
    };
    let value = ObjectiveValue {
        objective,
        kl,
        size_frac: size,
        penalty,
    };
    Ok((value, grad))
}

/// Log-densities the rule objective needs, with flows held constant.
#[derive(Debug, Clone)]
pub struct DensityTerms {
    pub logp_sg: Vec<f64>,
    pub logp_marg: Vec<f64>,
    pub prior_logps: Vec<Vec<f64>>,
}

impl DensityTerms {
    pub fn evaluate(
        target: &[f64],
        flow_sg: &SplineFlowParams,
        flow_marg: &SplineFlowParams,
        prior_flows: &[SplineFlowParams],
    ) -> Result<Self> {
        Ok(Self {
            logp_sg: log_prob_batch(flow_sg, target)?,
            logp_marg: log_prob_batch(flow_marg, target)?,
            prior_logps: prior_flows
                .iter()
                .map(|f| log_prob_batch(f, target))
                .collect::<Result<_>>()?,
        })
    }
}

/// Loss `-objective` and its gradient with respect to the rule parameters.
pub fn rule_loss_and_grad(
    features: &Matrix,
    rule: &SoftRuleParams,
    terms: &DensityTerms,
    cfg: &ObjectiveConfig,
) -> Result<(ObjectiveValue, RuleGrad)> {
    let s = soft_rule_batch(features, rule)?;
    let (value, ds) = objective_and_membership_grad(
        &s,
        &terms.logp_sg,
        &terms.logp_marg,
        &terms.prior_logps,
        cfg,
    )?;
    let upstream: Vec<f64> = ds.iter().map(|g| -g).collect();
    let grad = soft_rule_backward(features, rule, &upstream)?;
    Ok((value, grad))
}

/// Gradient of `-total_objective` with respect to every rule parameter.
pub fn objective_grads(
    features: &Matrix,
    target: &[f64],
    rule: &SoftRuleParams,
    flow_sg: &SplineFlowParams,
    flow_marg: &SplineFlowParams,
    prior_flows: &[SplineFlowParams],
    cfg: &ObjectiveConfig,
) -> Result<RuleGrad> {
    check_len(features.rows(), target.len())?;
    let terms = DensityTerms::evaluate(target, flow_sg, flow_marg, prior_flows)?;
    Ok(rule_loss_and_grad(features, rule, &terms, cfg)?.1)
}
