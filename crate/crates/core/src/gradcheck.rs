//! Randomized finite-difference checks of every analytic gradient used in
//! training.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{stream_rng, Stream};
use crate::flows::{
    init_identity, log_prob_batch, mixture_log_likelihood_grads, weighted_log_prob_grads,
    SplineFlowParams,
};
use crate::objective::{objective_grads, total_objective, KlNormalization, ObjectiveConfig};
use crate::optim::finite_diff_check;
use crate::rules::{
    soft_predicate, soft_predicate_grads, soft_rule_backward, soft_rule_batch, SoftPredicateParams,
    SoftRuleParams,
};
use crate::{Error, Matrix, Result};

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

const KNOT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    SoftPredicate,
    SoftRule,
    FlowLogLikelihood,
    MixtureLikelihood,
    Objective,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::SoftPredicate,
        Suite::SoftRule,
        Suite::FlowLogLikelihood,
        Suite::MixtureLikelihood,
        Suite::Objective,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::SoftPredicate => "soft_predicate",
            Suite::SoftRule => "soft_rule",
            Suite::FlowLogLikelihood => "flow_log_likelihood",
            Suite::MixtureLikelihood => "mixture_likelihood",
            Suite::Objective => "objective",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown gradient suite `{s}`")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub instances: usize,
    pub step: f64,
    /// Negate one analytic gradient coordinate in this suite; used to confirm
    /// the checker actually fails on a wrong gradient.
    pub sign_flip: Option<Suite>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 100,
            step: 1e-5,
            sign_flip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub instances: usize,
    pub max_rel_error: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

pub fn run_all(opts: &GradcheckOptions) -> Result<Vec<SuiteReport>> {
    Suite::ALL.into_iter().map(|s| run_suite(s, opts)).collect()
}

pub fn run_suite(suite: Suite, opts: &GradcheckOptions) -> Result<SuiteReport> {
    // each suite gets its own stream position so they can run independently
    let mut rng = stream_rng(opts.seed.wrapping_add(suite as u64), Stream::Gradcheck);
    let flip = opts.sign_flip == Some(suite);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.instances {
        let (params, mut analytic, loss): Instance = match suite {
            Suite::SoftPredicate => predicate_instance(&mut rng)?,
            Suite::SoftRule => rule_instance(&mut rng)?,
            Suite::FlowLogLikelihood => flow_instance(&mut rng)?,
            Suite::MixtureLikelihood => mixture_instance(&mut rng)?,
            Suite::Objective => objective_instance(&mut rng)?,
        };
        if flip {
            analytic[0] = -analytic[0];
        }
        worst = worst.max(finite_diff_check(&loss, &analytic, &params, opts.step));
    }
    Ok(SuiteReport {
        suite,
        instances: opts.instances,
        max_rel_error: worst,
    })
}

type Instance = (Vec<f64>, Vec<f64>, Box<dyn Fn(&[f64]) -> f64>);

fn predicate_instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let alpha = rng.gen_range(-1.0..0.5);
    let beta = alpha + rng.gen_range(0.2..1.5);
    let t = rng.gen_range(0.2..1.0);
    let x = rng.gen_range(alpha - t..beta + t);
    let (da, db) = soft_predicate_grads(x, &SoftPredicateParams::new(alpha, beta), t)?;
    let loss = move |p: &[f64]| {
        soft_predicate(x, &SoftPredicateParams::new(p[0], p[1]), t).expect("finite inputs")
    };
    Ok((vec![alpha, beta], vec![da, db], Box::new(loss)))
}

fn random_rule(rng: &mut ChaCha8Rng, p: usize) -> Result<SoftRuleParams> {
    let mut preds = Vec::with_capacity(p);
    let mut weights = Vec::with_capacity(p);
    for i in 0..p {
        let alpha = rng.gen_range(-0.2..0.4);
        preds.push(SoftPredicateParams::new(
            alpha,
            alpha + rng.gen_range(0.3..1.0),
        ));
        // keep clear of the ReLU kink; the last predicate is sometimes pruned
        let w = if i == p - 1 && rng.gen_bool(0.3) {
            rng.gen_range(-1.0..-0.2)
        } else {
            rng.gen_range(0.2..2.0)
        };
        weights.push(w);
    }
    SoftRuleParams::new(preds, weights, rng.gen_range(0.2..1.0))
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Result<Matrix> {
    let data = (0..n * p).map(|_| rng.gen_range(0.0..1.0)).collect();
    Matrix::new(n, p, data)
}

fn rule_instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (n, p) = (6, 4);
    let rule = random_rule(rng, p)?;
    let x = random_features(rng, n, p)?;
    let upstream: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let analytic = soft_rule_backward(&x, &rule, &upstream)?.to_flat();
    let theta = rule.to_flat();
    let loss = move |flat: &[f64]| {
        let mut r = rule.clone();
        r.set_flat(flat);
        let s = soft_rule_batch(&x, &r).expect("valid rule");
        s.iter().zip(&upstream).map(|(a, b)| a * b).sum()
    };
    Ok((theta, analytic, Box::new(loss)))
}

fn random_flow(rng: &mut ChaCha8Rng) -> SplineFlowParams {
    let mut p = init_identity(8, 4.0);
    let theta: Vec<f64> = (0..p.trainable_len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    p.set_trainable(&theta);
    p
}

/// Jittered grid over the spline support so every bin holds samples.
/// Points right next to a knot are dropped: a finite-difference step can move
/// the knot across them, where the density has a kink in the parameters.
fn covering_targets(rng: &mut ChaCha8Rng, n: usize, flows: &[&SplineFlowParams]) -> Vec<f64> {
    let step = 7.6 / n as f64;
    let knots: Vec<f64> = flows.iter().flat_map(|f| f.interior_knots()).collect();
    (0..n)
        .map(|i| -3.8 + step * (i as f64 + rng.gen_range(0.1..0.9)))
        .filter(|y| knots.iter().all(|k| (y - k).abs() > KNOT_MARGIN))
        .collect()
}

/// `sum_i w_i (v_i - base_i)`. Subtracting the per-sample values at the
/// instance point leaves the gradient unchanged but keeps the accumulated
/// terms small, so summation round-off stays below the difference quotient.
fn centered_sum(values: &[f64], base: &[f64], weights: &[f64]) -> f64 {
    values
        .iter()
        .zip(base)
        .zip(weights)
        .map(|((v, b), w)| w * (v - b))
        .sum()
}

/// Mean log-likelihood, or a membership-weighted mean for half the instances.
fn flow_instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let flow = random_flow(rng);
    let ys = covering_targets(rng, 200, &[&flow]);
    let mut weights: Vec<f64> = if rng.gen_bool(0.5) {
        ys.iter().map(|_| rng.gen_range(0.05..1.0)).collect()
    } else {
        vec![1.0; ys.len()]
    };
    let mass: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= mass);
    let analytic = weighted_log_prob_grads(&flow, &ys, &weights)?;
    let theta = flow.trainable();
    let base = log_prob_batch(&flow, &ys)?;
    let loss = move |flat: &[f64]| {
        let mut f = flow.clone();
        f.set_trainable(flat);
        let lp = log_prob_batch(&f, &ys).expect("valid flow");
        centered_sum(&lp, &base, &weights)
    };
    Ok((theta, analytic, Box::new(loss)))
}

fn mixture_instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let sg = random_flow(rng);
    let comp = random_flow(rng);
    let ys = covering_targets(rng, 200, &[&sg, &comp]);
    let s: Vec<f64> = ys.iter().map(|_| rng.gen_range(0.05..0.95)).collect();
    let (_, g_sg, g_comp) = mixture_log_likelihood_grads(&ys, &s, &sg, &comp)?;
    let k = sg.trainable_len();
    let mut theta = sg.trainable();
    theta.extend(comp.trainable());
    let analytic = [g_sg, g_comp].concat();
    let mixture_ll = move |a: &SplineFlowParams, b: &SplineFlowParams| -> Vec<f64> {
        let la = log_prob_batch(a, &ys).expect("valid flow");
        let lb = log_prob_batch(b, &ys).expect("valid flow");
        la.iter()
            .zip(&lb)
            .zip(&s)
            .map(|((&x, &y), &si)| {
                let (x, y) = (x + si.ln(), y + (1.0 - si).ln());
                let m = x.max(y);
                m + ((x - m).exp() + (y - m).exp()).ln()
            })
            .collect()
    };
    let base = mixture_ll(&sg, &comp);
    let weights = vec![1.0 / base.len() as f64; base.len()];
    let loss = move |flat: &[f64]| {
        let (mut a, mut b) = (sg.clone(), comp.clone());
        a.set_trainable(&flat[..k]);
        b.set_trainable(&flat[k..]);
        centered_sum(&mixture_ll(&a, &b), &base, &weights)
    };
    Ok((theta, analytic, Box::new(loss)))
}

fn objective_instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    let (n, p) = (30, 3);
    let rule = random_rule(rng, p)?;
    let x = random_features(rng, n, p)?;
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let sg = random_flow(rng);
    let marg = random_flow(rng);
    let priors = vec![random_flow(rng), random_flow(rng)];
    let normalization = if rng.gen_bool(0.5) {
        KlNormalization::Subgroup
    } else {
        KlNormalization::Population
    };
    let cfg = ObjectiveConfig::new(rng.gen_range(0.2..1.0), rng.gen_range(0.0..1.0))?
        .with_normalization(normalization);
    let analytic = objective_grads(&x, &y, &rule, &sg, &marg, &priors, &cfg)?.to_flat();
    let theta = rule.to_flat();
    let lp_sg = log_prob_batch(&sg, &y)?;
    let lp_marg = log_prob_batch(&marg, &y)?;
    let lp_priors: Vec<Vec<f64>> = priors
        .iter()
        .map(|f| log_prob_batch(f, &y))
        .collect::<Result<_>>()?;
    let loss = move |flat: &[f64]| {
        let mut r = rule.clone();
        r.set_flat(flat);
        let s = soft_rule_batch(&x, &r).expect("valid rule");
        -total_objective(&s, &lp_sg, &lp_marg, &lp_priors, &cfg).expect("non-empty subgroup")
    };
    Ok((theta, analytic, Box::new(loss)))
}
