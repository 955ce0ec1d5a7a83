//! Soft predicates, soft binning, the weighted-harmonic-mean conjunction and
//! crisp rule extraction.
//!
//! A soft predicate is the middle output of a three-bin soft binning with
//! thresholds `(alpha, beta)`: as the temperature goes to zero it becomes the
//! indicator of `alpha < x < beta`. Predicates are combined into a soft rule by
//! a weighted harmonic mean whose ReLU-ed weights can switch predicates off.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ensure_finite;
use crate::{Error, Matrix, Result};

/// Lower clamp on predicate values before harmonic inversion.
pub const PREDICATE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftPredicateParams {
    pub alpha: f64,
    pub beta: f64,
}

impl SoftPredicateParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Learnable parameters of a soft conjunction over all `p` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftRuleParams {
    pub predicates: Vec<SoftPredicateParams>,
    pub raw_weights: Vec<f64>,
    pub temperature: f64,
}

impl SoftRuleParams {
    pub fn new(
        predicates: Vec<SoftPredicateParams>,
        raw_weights: Vec<f64>,
        temperature: f64,
    ) -> Result<Self> {
        if predicates.len() != raw_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: predicates.len(),
                actual: raw_weights.len(),
            });
        }
        let params = Self {
            predicates,
            raw_weights,
            temperature,
        };
        params.validate()?;
        Ok(params)
    }

    /// Bounds spanning each feature's range with unit weights.
    pub fn spanning(ranges: &[(f64, f64)], temperature: f64) -> Result<Self> {
        let predicates = ranges
            .iter()
            .map(|&(lo, hi)| SoftPredicateParams::new(lo, hi))
            .collect();
        Self::new(predicates, vec![1.0; ranges.len()], temperature)
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        relu(self.raw_weights[i])
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.raw_weights.iter().map(|&w| relu(w))
    }

    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        for (p, w) in self.predicates.iter().zip(&self.raw_weights) {
            ensure_finite("alpha", p.alpha)?;
            ensure_finite("beta", p.beta)?;
            ensure_finite("raw weight", *w)?;
        }
        Ok(())
    }

    /// Flat layout `[alpha.., beta.., raw_weights..]` used by the optimizer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(3 * self.len());
        flat.extend(self.predicates.iter().map(|p| p.alpha));
        flat.extend(self.predicates.iter().map(|p| p.beta));
        flat.extend_from_slice(&self.raw_weights);
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let p = self.len();
        assert_eq!(flat.len(), 3 * p, "flat rule parameter length");
        for (i, pred) in self.predicates.iter_mut().enumerate() {
            pred.alpha = flat[i];
            pred.beta = flat[p + i];
        }
        self.raw_weights.copy_from_slice(&flat[2 * p..]);
    }

    /// Restores `beta_i >= alpha_i + min_gap_i` and keeps at least one weight
    /// alive. Applied after every optimizer step.
    pub fn project(&mut self, min_gaps: &[f64]) {
        for (pred, &gap) in self.predicates.iter_mut().zip(min_gaps) {
            if pred.beta < pred.alpha + gap {
                let mid = 0.5 * (pred.alpha + pred.beta);
                pred.alpha = mid - 0.5 * gap;
                pred.beta = mid + 0.5 * gap;
            }
        }
        if !self.raw_weights.is_empty() && self.raw_weights.iter().all(|&w| w <= 0.0) {
            let best = argmax(&self.raw_weights);
            self.raw_weights[best] = MIN_LIVE_WEIGHT;
        }
    }
}

const MIN_LIVE_WEIGHT: f64 = 1e-6;

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[inline]
fn relu(w: f64) -> f64 {
    if w > 0.0 {
        w
    } else {
        0.0
    }
}

/// Softmax over three logits `(x, 2x - alpha, 3x - alpha - beta) / t`.
#[inline]
fn predicate_softmax(x: f64, alpha: f64, beta: f64, t: f64) -> [f64; 3] {
    let l = [x / t, (2.0 * x - alpha) / t, (3.0 * x - alpha - beta) / t];
    let m = l[0].max(l[1]).max(l[2]);
    let e = [(l[0] - m).exp(), (l[1] - m).exp(), (l[2] - m).exp()];
    let z = e[0] + e[1] + e[2];
    [e[0] / z, e[1] / z, e[2] / z]
}

fn check_predicate_inputs(x: f64, params: &SoftPredicateParams, t: f64) -> Result<()> {
    ensure_finite("x", x)?;
    ensure_finite("alpha", params.alpha)?;
    ensure_finite("beta", params.beta)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive, got {t}"
        )));
    }
    Ok(())
}

/// Smooth relaxation of `alpha < x < beta`, sharpened as `t -> 0`.
pub fn soft_predicate(x: f64, params: &SoftPredicateParams, t: f64) -> Result<f64> {
    check_predicate_inputs(x, params, t)?;
    Ok(predicate_softmax(x, params.alpha, params.beta, t)[1])
}

/// Partial derivatives `(d/d alpha, d/d beta)` of [`soft_predicate`].
pub fn soft_predicate_grads(x: f64, params: &SoftPredicateParams, t: f64) -> Result<(f64, f64)> {
    check_predicate_inputs(x, params, t)?;
    let [below, inside, above] = predicate_softmax(x, params.alpha, params.beta, t);
    Ok((-inside * below / t, inside * above / t))
}

/// Softmax soft binning of `x` into `thresholds.len() + 1` bins.
///
/// Logit `j` (1-based) is `j * x - sum_{k<j} thresholds[k]`, divided by `t`.
pub fn soft_binning(x: f64, thresholds: &[f64], t: f64) -> Result<Vec<f64>> {
    ensure_finite("x", x)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive, got {t}"
        )));
    }
    if thresholds.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("non-finite threshold".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "thresholds must be strictly increasing".into(),
        ));
    }
    let mut logits = Vec::with_capacity(thresholds.len() + 1);
    let mut bias = 0.0;
    for j in 0..=thresholds.len() {
        logits.push(((j + 1) as f64 * x + bias) / t);
        if let Some(b) = thresholds.get(j) {
            bias -= b;
        }
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

fn check_row(x: &[f64], params: &SoftRuleParams) -> Result<()> {
    if x.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// Membership of a single sample; no input validation.
fn membership(x: &[f64], params: &SoftRuleParams) -> Result<f64> {
    let t = params.temperature;
    let mut total = 0.0;
    let mut inverse = 0.0;
    for ((&xi, pred), &raw) in x.iter().zip(&params.predicates).zip(&params.raw_weights) {
        let a = relu(raw);
        if a == 0.0 {
            continue;
        }
        let pi = predicate_softmax(xi, pred.alpha, pred.beta, t)[1].max(PREDICATE_FLOOR);
        total += a;
        inverse += a / pi;
    }
    if total == 0.0 {
        return Err(Error::DegenerateRule);
    }
    Ok(total / inverse)
}

/// Weighted harmonic mean of the soft predicates of one sample.
pub fn soft_rule(x: &[f64], params: &SoftRuleParams) -> Result<f64> {
    params.validate()?;
    check_row(x, params)?;
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite feature value {v}")));
    }
    membership(x, params)
}

/// [`soft_rule`] applied to every row of `features`.
pub fn soft_rule_batch(features: &Matrix, params: &SoftRuleParams) -> Result<Vec<f64>> {
    params.validate()?;
    if features.rows() > 0 && features.cols() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: features.cols(),
        });
    }
    features
        .iter_rows()
        .map(|x| membership(x, params))
        .collect()
}

/// Gradient of a scalar with respect to every rule parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleGrad {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub raw_weights: Vec<f64>,
}

impl RuleGrad {
    pub fn zeros(p: usize) -> Self {
        Self {
            alpha: vec![0.0; p],
            beta: vec![0.0; p],
            raw_weights: vec![0.0; p],
        }
    }

    /// Same layout as [`SoftRuleParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(3 * self.alpha.len());
        flat.extend_from_slice(&self.alpha);
        flat.extend_from_slice(&self.beta);
        flat.extend_from_slice(&self.raw_weights);
        flat
    }
}

/// Adds `scale * d membership(x) / d params` into `grad`, returning the
/// membership itself.
fn accumulate_membership_grad(
    x: &[f64],
    params: &SoftRuleParams,
    scale: f64,
    grad: &mut RuleGrad,
    scratch: &mut Vec<[f64; 3]>,
) -> Result<f64> {
    let t = params.temperature;
    scratch.clear();
    let mut total = 0.0;
    let mut inverse = 0.0;
    for ((&xi, pred), &raw) in x.iter().zip(&params.predicates).zip(&params.raw_weights) {
        let probs = predicate_softmax(xi, pred.alpha, pred.beta, t);
        let a = relu(raw);
        if a > 0.0 {
            total += a;
            inverse += a / probs[1].max(PREDICATE_FLOOR);
        }
        scratch.push(probs);
    }
    if total == 0.0 {
        return Err(Error::DegenerateRule);
    }
    let s = total / inverse;
    if scale == 0.0 {
        return Ok(s);
    }
    for (i, probs) in scratch.iter().enumerate() {
        let a = relu(params.raw_weights[i]);
        if a == 0.0 {
            // dead ReLU: no gradient reaches alpha, beta or the weight
            continue;
        }
        let [below, inside, above] = *probs;
        let clamped = inside < PREDICATE_FLOOR;
        let pi = inside.max(PREDICATE_FLOOR);
        // ds/dw_i through the ReLU (active branch)
        grad.raw_weights[i] += scale * (1.0 - s / pi) / inverse;
        if !clamped {
            // ds/dpi_i = a_i s^2 / (A pi_i^2)
            let ds_dpi = a * s * s / (total * pi * pi);
            grad.alpha[i] += scale * ds_dpi * (-inside * below / t);
            grad.beta[i] += scale * ds_dpi * (inside * above / t);
        }
    }
    Ok(s)
}

/// Per-sample gradients of every membership with respect to all parameters.
pub fn soft_rule_grads(features: &Matrix, params: &SoftRuleParams) -> Result<Vec<RuleGrad>> {
    params.validate()?;
    if features.rows() > 0 && features.cols() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: features.cols(),
        });
    }
    let mut scratch = Vec::with_capacity(params.len());
    features
        .iter_rows()
        .map(|x| {
            let mut g = RuleGrad::zeros(params.len());
            accumulate_membership_grad(x, params, 1.0, &mut g, &mut scratch)?;
            Ok(g)
        })
        .collect()
}

/// Vector-Jacobian product: returns `sum_k upstream[k] * d s_k / d params`.
pub fn soft_rule_backward(
    features: &Matrix,
    params: &SoftRuleParams,
    upstream: &[f64],
) -> Result<RuleGrad> {
    params.validate()?;
    if upstream.len() != features.rows() {
        return Err(Error::DimensionMismatch {
            expected: features.rows(),
            actual: upstream.len(),
        });
    }
    if features.rows() > 0 && features.cols() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: features.cols(),
        });
    }
    let mut grad = RuleGrad::zeros(params.len());
    let mut scratch = Vec::with_capacity(params.len());
    for (x, &u) in features.iter_rows().zip(upstream) {
        accumulate_membership_grad(x, params, u, &mut grad, &mut scratch)?;
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    /// Strict `lo < x < hi`.
    Interval {
        lo: f64,
        hi: f64,
    },
    EqualsZero,
    EqualsOne,
    AlwaysTrue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub feature: usize,
    #[serde(flatten)]
    pub condition: Condition,
}

impl Clause {
    pub fn holds(&self, value: f64) -> bool {
        match self.condition {
            Condition::Interval { lo, hi } => lo < value && value < hi,
            Condition::EqualsZero => value == 0.0,
            Condition::EqualsOne => value == 1.0,
            Condition::AlwaysTrue => true,
        }
    }
}

/// A conjunction of per-feature conditions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrispRule {
    pub clauses: Vec<Clause>,
}

impl CrispRule {
    /// Number of clauses that actually constrain a feature.
    pub fn active_len(&self) -> usize {
        self.clauses
            .iter()
            .filter(|c| c.condition != Condition::AlwaysTrue)
            .count()
    }

    /// Canonical text form, e.g. `0.2 < age < 0.8 & sex=0`.
    pub fn render(&self, names: &[String]) -> String {
        let parts: Vec<String> = self
            .clauses
            .iter()
            .filter_map(|c| {
                let name = names
                    .get(c.feature)
                    .cloned()
                    .unwrap_or_else(|| format!("x{}", c.feature));
                match c.condition {
                    Condition::Interval { lo, hi } => Some(format!(
                        "{} < {} < {}",
                        format_sig6(lo),
                        name,
                        format_sig6(hi)
                    )),
                    Condition::EqualsZero => Some(format!("{name}=0")),
                    Condition::EqualsOne => Some(format!("{name}=1")),
                    Condition::AlwaysTrue => None,
                }
            })
            .collect();
        if parts.is_empty() {
            "TRUE".to_string()
        } else {
            parts.join(" & ")
        }
    }

    /// Maps interval bounds of every clause through `f(feature, value)`.
    pub fn map_bounds(&self, mut f: impl FnMut(usize, f64) -> f64) -> CrispRule {
        let clauses = self
            .clauses
            .iter()
            .map(|c| match c.condition {
                Condition::Interval { lo, hi } => Clause {
                    feature: c.feature,
                    condition: Condition::Interval {
                        lo: f(c.feature, lo),
                        hi: f(c.feature, hi),
                    },
                },
                _ => *c,
            })
            .collect();
        CrispRule { clauses }
    }
}

impl fmt::Display for CrispRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

/// Formats like C's `%.6g`: six significant digits, trailing zeros dropped.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa.to_string()),
            sign,
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Rounds a soft rule into a readable conjunction.
///
/// `ranges` and `kinds` describe the training data in the same units as the
/// rule bounds.
pub fn extract_crisp_rule(
    params: &SoftRuleParams,
    ranges: &[(f64, f64)],
    kinds: &[FeatureKind],
) -> Result<CrispRule> {
    if ranges.len() != params.len() || kinds.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: ranges.len().min(kinds.len()),
        });
    }
    let clauses = params
        .predicates
        .iter()
        .enumerate()
        .map(|(i, pred)| {
            let (min, max) = ranges[i];
            let (alpha, beta) = (pred.alpha, pred.beta);
            let condition = if params.weight(i) == 0.0 || (alpha <= min && beta >= max) {
                Condition::AlwaysTrue
            } else if kinds[i] == FeatureKind::Binary {
                let has_zero = alpha < 0.0 && 0.0 < beta;
                let has_one = alpha < 1.0 && 1.0 < beta;
                match (has_zero, has_one) {
                    (true, false) => Condition::EqualsZero,
                    (false, true) => Condition::EqualsOne,
                    (true, true) => Condition::AlwaysTrue,
                    (false, false) => clipped_interval(alpha, beta, min, max),
                }
            } else {
                clipped_interval(alpha, beta, min, max)
            };
            Clause {
                feature: i,
                condition,
            }
        })
        .collect();
    Ok(CrispRule { clauses })
}

fn clipped_interval(alpha: f64, beta: f64, min: f64, max: f64) -> Condition {
    let lo = alpha.max(min);
    let hi = beta.min(max);
    if lo < hi {
        Condition::Interval { lo, hi }
    } else {
        // interval misses the observed range entirely; keep it unsatisfiable
        Condition::Interval {
            lo: alpha,
            hi: beta.max(alpha + f64::EPSILON * alpha.abs().max(1.0)),
        }
    }
}

/// True iff every clause holds for `x`.
pub fn crisp_eval(rule: &CrispRule, x: &[f64]) -> Result<bool> {
    let mut all = true;
    for clause in &rule.clauses {
        let value = *x.get(clause.feature).ok_or(Error::IndexOutOfRange {
            index: clause.feature,
            len: x.len(),
        })?;
        all &= clause.holds(value);
    }
    Ok(all)
}

/// [`crisp_eval`] on every row.
pub fn crisp_eval_batch(rule: &CrispRule, features: &Matrix) -> Result<Vec<bool>> {
    features.iter_rows().map(|x| crisp_eval(rule, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(alpha: f64, beta: f64) -> SoftPredicateParams {
        SoftPredicateParams::new(alpha, beta)
    }

    fn rule(bounds: &[(f64, f64)], weights: &[f64], t: f64) -> SoftRuleParams {
        SoftRuleParams::new(
            bounds.iter().map(|&(a, b)| pred(a, b)).collect(),
            weights.to_vec(),
            t,
        )
        .unwrap()
    }

    #[test]
    fn predicate_limits_and_closed_form() {
        let at_bound = soft_predicate(-0.3, &pred(-0.3, 2.0), 1e-6).unwrap();
        assert!((at_bound - 0.5).abs() < 1e-3);
        let inside = soft_predicate(0.0, &pred(-1.0, 1.0), 1e-6).unwrap();
        assert!((inside - 1.0).abs() < 1e-3);
        // e / (2 + e), frozen from a 30-digit evaluation
        let warm = soft_predicate(0.0, &pred(-1.0, 1.0), 1.0).unwrap();
        assert!((warm - 0.576_116_884_765_829_1).abs() < 1e-12);
    }

    #[test]
    fn predicate_rejects_bad_input() {
        assert!(soft_predicate(f64::NAN, &pred(0.0, 1.0), 1.0).is_err());
        assert!(soft_predicate(0.5, &pred(f64::INFINITY, 1.0), 1.0).is_err());
        assert!(soft_predicate(0.5, &pred(0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn predicate_grads_saturate_and_are_symmetric() {
        let (da, db) = soft_predicate_grads(0.5, &pred(0.0, 1.0), 1e-3).unwrap();
        assert!(da.abs() < 1e-6 && db.abs() < 1e-6);
        let (da, db) = soft_predicate_grads(0.35, &pred(-0.2, 0.9), 0.3).unwrap();
        assert!((da.abs() - db.abs()).abs() < 1e-12);
        assert!(da < 0.0 && db > 0.0);
    }

    #[test]
    fn binning_cases() {
        let hot = soft_binning(0.5, &[0.0, 1.0], 1e-6).unwrap();
        for (v, e) in hot.iter().zip([0.0, 1.0, 0.0]) {
            assert!((v - e).abs() < 1e-6);
        }
        let warm = soft_binning(0.5, &[0.0, 1.0], 1.0).unwrap();
        let expected = [
            0.274_068_619_061_197,
            0.451_862_761_877_606,
            0.274_068_619_061_197,
        ];
        for (v, e) in warm.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(soft_binning(0.5, &[1.0, 0.0], 1.0).is_err());
        assert!(soft_binning(0.5, &[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn harmonic_mean_cases() {
        // soft predicate values (1, 0.5, 1) reached via saturated / on-bound inputs
        let params = rule(
            &[(-1.0, 1.0), (0.0, 1.0), (-1.0, 1.0)],
            &[2.0, 1.0, 0.0],
            1e-9,
        );
        let s = soft_rule(&[0.0, 0.0, 0.0], &params).unwrap();
        assert!((s - 0.75).abs() < 1e-9, "{s}");

        let ones = rule(&[(-1.0, 1.0); 3], &[1.0, 3.0, 0.5], 1e-9);
        assert!((soft_rule(&[0.0; 3], &ones).unwrap() - 1.0).abs() < 1e-12);

        let floor = rule(&[(-1.0, 1.0), (-1.0, 1.0)], &[1.0, 1.0], 1e-9);
        let s = soft_rule(&[0.0, 5.0], &floor).unwrap();
        assert!(s <= 2.0 * PREDICATE_FLOOR);
    }

    #[test]
    fn degenerate_rule_is_an_error() {
        let params = rule(&[(0.0, 1.0); 2], &[0.0, -1.0], 0.1);
        assert!(matches!(
            soft_rule(&[0.5, 0.5], &params),
            Err(Error::DegenerateRule)
        ));
    }

    #[test]
    fn batch_matches_single_rows() {
        let params = rule(&[(0.1, 0.7), (0.3, 0.9)], &[1.0, 0.4], 0.2);
        let empty = Matrix::zeros(0, 2);
        assert!(soft_rule_batch(&empty, &params).unwrap().is_empty());
        let x = Matrix::from_rows(&[vec![0.2, 0.5]]).unwrap();
        assert_eq!(
            soft_rule_batch(&x, &params).unwrap(),
            vec![soft_rule(&[0.2, 0.5], &params).unwrap()]
        );
        let wide = Matrix::from_rows(&[vec![0.2, 0.5, 0.1]]).unwrap();
        assert!(soft_rule_batch(&wide, &params).is_err());
    }

    #[test]
    fn dead_weight_gets_no_gradient() {
        let params = rule(&[(0.1, 0.7), (0.3, 0.9)], &[1.0, -0.5], 0.2);
        let x = Matrix::from_rows(&[vec![0.2, 0.5], vec![0.6, 0.95]]).unwrap();
        for g in soft_rule_grads(&x, &params).unwrap() {
            assert_eq!((g.alpha[1], g.beta[1], g.raw_weights[1]), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn saturated_rule_has_flat_weights() {
        let params = rule(&[(-1.0, 1.0); 3], &[1.0, 2.0, 0.5], 1e-3);
        let x = Matrix::from_rows(&[vec![0.0, 0.1, -0.2]]).unwrap();
        let g = &soft_rule_grads(&x, &params).unwrap()[0];
        assert!(g.raw_weights.iter().all(|w| w.abs() < 1e-12));
    }

    #[test]
    fn projection_orders_bounds_and_revives_weights() {
        let mut params = rule(&[(0.6, 0.4), (0.0, 1.0)], &[-1.0, -2.0], 0.2);
        params.project(&[1e-6, 1e-6]);
        let p = params.predicates[0];
        assert!(p.beta >= p.alpha + 1e-6 - 1e-15);
        assert!((p.alpha + p.beta - 1.0).abs() < 1e-12);
        assert_eq!(params.raw_weights, vec![MIN_LIVE_WEIGHT, -2.0]);
    }

    #[test]
    fn extraction_cases() {
        let kinds = [
            FeatureKind::Continuous,
            FeatureKind::Binary,
            FeatureKind::Continuous,
        ];
        let ranges = [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)];
        let params = rule(&[(-0.1, 1.2), (-0.3, 0.4), (0.2, 0.8)], &[1.0; 3], 0.05);
        let r = extract_crisp_rule(&params, &ranges, &kinds).unwrap();
        assert_eq!(r.clauses[0].condition, Condition::AlwaysTrue);
        assert_eq!(r.clauses[1].condition, Condition::EqualsZero);
        assert_eq!(
            r.clauses[2].condition,
            Condition::Interval { lo: 0.2, hi: 0.8 }
        );
        let names: Vec<String> = ["a", "sex", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(r.render(&names), "sex=0 & 0.2 < c < 0.8");

        let one = rule(&[(0.5, 1.5)], &[1.0], 0.05);
        let r = extract_crisp_rule(&one, &[(0.0, 1.0)], &[FeatureKind::Binary]).unwrap();
        assert_eq!(r.clauses[0].condition, Condition::EqualsOne);

        let pruned = rule(&[(0.2, 0.3)], &[-0.1], 0.05);
        let r = extract_crisp_rule(&pruned, &[(0.0, 1.0)], &[FeatureKind::Continuous]).unwrap();
        assert_eq!(r.render(&[]), "TRUE");

        let clipped = rule(&[(-3.0, 0.5)], &[1.0], 0.05);
        let r = extract_crisp_rule(&clipped, &[(0.0, 1.0)], &[FeatureKind::Continuous]).unwrap();
        assert_eq!(
            r.clauses[0].condition,
            Condition::Interval { lo: 0.0, hi: 0.5 }
        );
    }

    #[test]
    fn crisp_eval_cases() {
        let empty = CrispRule::default();
        assert!(crisp_eval(&empty, &[1.0]).unwrap());
        let r = CrispRule {
            clauses: vec![
                Clause {
                    feature: 0,
                    condition: Condition::Interval { lo: 0.0, hi: 1.0 },
                },
                Clause {
                    feature: 1,
                    condition: Condition::EqualsOne,
                },
            ],
        };
        assert!(crisp_eval(&r, &[0.5, 1.0]).unwrap());
        assert!(!crisp_eval(&r, &[1.0, 1.0]).unwrap());
        assert!(!crisp_eval(&r, &[0.5, 0.0]).unwrap());
        assert!(matches!(
            crisp_eval(&r, &[0.5]),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(0.2), "0.2");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(-0.123_456_78), "-0.123457");
        assert_eq!(format_sig6(123_456.7), "123457");
        assert_eq!(format_sig6(1_234_567.0), "1.23457e+06");
        assert_eq!(format_sig6(0.000_012_345_67), "1.23457e-05");
        assert_eq!(format_sig6(0.000_123_456_7), "0.000123457");
        assert_eq!(format_sig6(999_999.9), "1e+06");
        assert_eq!(format_sig6(0.0), "0");
    }
}
