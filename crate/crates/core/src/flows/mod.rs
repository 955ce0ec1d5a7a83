//! One-dimensional density estimation with a monotone rational-quadratic
//! spline flow.
//!
//! The data-to-base map is `z = T((y - shift) / scale)` where `T` is a
//! rational-quadratic spline on `[-B, B]` with `K` bins and identity tails.
//! Boundary knot derivatives are pinned to 1 so the density is continuous at
//! `±B`. The density of `y` is `N(z; 0, 1) * T'(u) / scale`.

mod dual;

use serde::{Deserialize, Serialize};

use self::dual::{Dual, Real};
use crate::error::ensure_finite;
use crate::metrics::percentile;
use crate::optim::{adam_step, AdamState};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 8;
pub const DEFAULT_TAIL_BOUND: f64 = 4.0;
/// Smallest bin width or height as a fraction of the interval length `2B`.
pub const MIN_BIN_FRACTION: f64 = 1e-3;
pub const MIN_DERIVATIVE: f64 = 1e-3;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Affine pre-transform `u = (y - shift) / scale` applied before the spline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: f64,
    pub scale: f64,
}

impl Default for Standardization {
    fn default() -> Self {
        Self {
            shift: 0.0,
            scale: 1.0,
        }
    }
}

impl Standardization {
    /// Mean and population standard deviation.
    pub fn from_moments(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::DegenerateData("empty target".into()));
        }
        let (values, weights) = distinct_with_weights(y);
        let mean: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let var: f64 = values
            .iter()
            .zip(&weights)
            .map(|(v, w)| w * (v - mean).powi(2))
            .sum();
        Self::checked(mean, var.sqrt())
    }

    /// Median and IQR scaled to match a Gaussian's standard deviation; for
    /// heavy-tailed targets where moments are meaningless.
    pub fn from_quantiles(y: &[f64]) -> Result<Self> {
        let median = percentile(y, 50.0)?;
        let iqr = percentile(y, 75.0)? - percentile(y, 25.0)?;
        Self::checked(median, iqr / 1.348_979_500_392_163_5)
    }

    fn checked(shift: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) {
            return Err(Error::DegenerateData(format!(
                "cannot standardize target (location {shift}, scale {scale})"
            )));
        }
        Ok(Self { shift, scale })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFlowParams {
    pub raw_widths: Vec<f64>,
    pub raw_heights: Vec<f64>,
    /// Interior knot derivatives, `K - 1` of them.
    pub raw_derivs: Vec<f64>,
    pub tail_bound: f64,
    pub standardization: Standardization,
}

/// Raw derivative value whose effective derivative is exactly 1.
fn identity_raw_deriv() -> f64 {
    ((1.0 - MIN_DERIVATIVE).exp() - 1.0).ln()
}

/// Parameters of the identity transform with `bins` bins on `[-tail_bound, tail_bound]`.
pub fn init_identity(bins: usize, tail_bound: f64) -> SplineFlowParams {
    assert!(bins >= 1, "spline needs at least one bin");
    assert!(
        tail_bound > 0.0 && tail_bound.is_finite(),
        "tail bound must be positive"
    );
    SplineFlowParams {
        raw_widths: vec![0.0; bins],
        raw_heights: vec![0.0; bins],
        raw_derivs: vec![identity_raw_deriv(); bins - 1],
        tail_bound,
        standardization: Standardization::default(),
    }
}

impl SplineFlowParams {
    pub fn with_standardization(mut self, standardization: Standardization) -> Self {
        self.standardization = standardization;
        self
    }

    pub fn bins(&self) -> usize {
        self.raw_widths.len()
    }

    /// Number of trainable reals: `3K - 1`.
    pub fn trainable_len(&self) -> usize {
        self.raw_widths.len() + self.raw_heights.len() + self.raw_derivs.len()
    }

    pub fn trainable(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.trainable_len());
        v.extend_from_slice(&self.raw_widths);
        v.extend_from_slice(&self.raw_heights);
        v.extend_from_slice(&self.raw_derivs);
        v
    }

    pub fn set_trainable(&mut self, flat: &[f64]) {
        let k = self.bins();
        assert_eq!(flat.len(), self.trainable_len(), "flow parameter length");
        self.raw_widths.copy_from_slice(&flat[..k]);
        self.raw_heights.copy_from_slice(&flat[k..2 * k]);
        self.raw_derivs.copy_from_slice(&flat[2 * k..]);
    }

    /// Flat serialization: widths, heights, derivatives, `B`, shift, scale.
    pub fn to_serialized(&self) -> Vec<f64> {
        let mut v = self.trainable();
        v.extend([
            self.tail_bound,
            self.standardization.shift,
            self.standardization.scale,
        ]);
        v
    }

    pub fn from_serialized(flat: &[f64]) -> Result<Self> {
        // 3K - 1 trainable values followed by three scalars
        if flat.len() < 5 || !(flat.len() - 2).is_multiple_of(3) {
            return Err(Error::InvalidInput(format!(
                "serialized flow has invalid length {}",
                flat.len()
            )));
        }
        let k = (flat.len() - 2) / 3;
        let mut params = init_identity(k, 1.0);
        params.set_trainable(&flat[..3 * k - 1]);
        params.tail_bound = flat[3 * k - 1];
        params.standardization = Standardization::checked(flat[3 * k], flat[3 * k + 1])?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.bins();
        if k == 0 || self.raw_heights.len() != k || self.raw_derivs.len() + 1 != k {
            return Err(Error::InvalidInput(format!(
                "inconsistent spline sizes: {} widths, {} heights, {} derivatives",
                k,
                self.raw_heights.len(),
                self.raw_derivs.len()
            )));
        }
        if !(self.tail_bound > 0.0 && self.tail_bound.is_finite()) {
            return Err(Error::InvalidInput("tail bound must be positive".into()));
        }
        for v in self.trainable() {
            ensure_finite("flow parameter", v)?;
        }
        Standardization::checked(self.standardization.shift, self.standardization.scale)?;
        Ok(())
    }

    fn spline(&self) -> Spline {
        Spline::new(self)
    }

    /// Interior spline knots in data units. The log-density is only C1 in
    /// the parameters away from these points.
    pub(crate) fn interior_knots(&self) -> Vec<f64> {
        let sp = self.spline();
        let st = self.standardization;
        let k = sp.xs.len() - 1;
        sp.xs[1..k]
            .iter()
            .map(|x| x * st.scale + st.shift)
            .collect()
    }
}

fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= z);
    e
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Effective knots of a parameter set.
struct Spline {
    bound: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    widths: Vec<f64>,
    heights: Vec<f64>,
    derivs: Vec<f64>,
    width_softmax: Vec<f64>,
    height_softmax: Vec<f64>,
}

impl Spline {
    fn new(p: &SplineFlowParams) -> Self {
        let k = p.bins();
        let b = p.tail_bound;
        let span = 2.0 * b * (1.0 - k as f64 * MIN_BIN_FRACTION);
        let floor = 2.0 * b * MIN_BIN_FRACTION;
        let width_softmax = softmax(&p.raw_widths);
        let height_softmax = softmax(&p.raw_heights);
        let widths: Vec<f64> = width_softmax.iter().map(|s| floor + span * s).collect();
        let heights: Vec<f64> = height_softmax.iter().map(|s| floor + span * s).collect();
        let knots = |sizes: &[f64]| {
            let mut out = Vec::with_capacity(k + 1);
            let mut acc = -b;
            out.push(acc);
            for s in &sizes[..k - 1] {
                acc += s;
                out.push(acc);
            }
            out.push(b);
            out
        };
        let mut derivs = Vec::with_capacity(k + 1);
        derivs.push(1.0);
        derivs.extend(p.raw_derivs.iter().map(|&r| MIN_DERIVATIVE + softplus(r)));
        derivs.push(1.0);
        Self {
            bound: b,
            xs: knots(&widths),
            ys: knots(&heights),
            widths,
            heights,
            derivs,
            width_softmax,
            height_softmax,
        }
    }

    fn bins(&self) -> usize {
        self.widths.len()
    }

    fn inside(&self, u: f64) -> bool {
        (-self.bound..=self.bound).contains(&u)
    }

    /// Bin containing `u` among knots `xs[0..=K]`.
    fn bin_of(knots: &[f64], u: f64) -> usize {
        let k = knots.len() - 1;
        knots[1..k].partition_point(|&x| x <= u)
    }

    fn forward(&self, u: f64) -> (f64, f64) {
        if !self.inside(u) {
            return (u, 0.0);
        }
        let k = Self::bin_of(&self.xs, u);
        segment(
            u,
            self.xs[k],
            self.widths[k],
            self.ys[k],
            self.heights[k],
            self.derivs[k],
            self.derivs[k + 1],
        )
    }

    fn inverse(&self, z: f64) -> f64 {
        if !self.inside(z) {
            return z;
        }
        let k = Self::bin_of(&self.ys, z);
        let (w, h) = (self.widths[k], self.heights[k]);
        let (dk, dk1) = (self.derivs[k], self.derivs[k + 1]);
        let s = h / w;
        let dz = z - self.ys[k];
        let curv = dk1 + dk - 2.0 * s;
        let a = h * (s - dk) + dz * curv;
        let b = h * dk - dz * curv;
        let c = -s * dz;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        let xi = (2.0 * c) / (-b - disc.sqrt());
        self.xs[k] + xi.clamp(0.0, 1.0) * w
    }
}

/// Rational-quadratic segment: returns `(T(u), ln T'(u))`.
#[inline]
fn segment<T: Real>(u: f64, xk: T, w: T, yk: T, h: T, dk: T, dk1: T) -> (T, T) {
    let xi = (T::constant(u) - xk) / w;
    let one_minus = T::constant(1.0) - xi;
    let xo = xi * one_minus;
    let s = h / w;
    let den = s + (dk1 + dk - s * 2.0) * xo;
    let z = yk + h * (s * xi * xi + dk * xo) / den;
    let slope_num = s * s * (dk1 * xi * xi + s * xo * 2.0 + dk * one_minus * one_minus);
    (z, slope_num.ln() - den.ln() * 2.0)
}

fn check_y(y: f64) -> Result<()> {
    ensure_finite("target value", y)
}

/// Data-to-base map: returns `(z, ln |dz/dy|)`.
pub fn flow_forward(params: &SplineFlowParams, y: f64) -> Result<(f64, f64)> {
    params.validate()?;
    check_y(y)?;
    let st = params.standardization;
    let (z, ld) = params.spline().forward((y - st.shift) / st.scale);
    Ok((z, ld - st.scale.ln()))
}

/// Base-to-data map, the inverse of [`flow_forward`].
pub fn flow_inverse(params: &SplineFlowParams, z: f64) -> Result<f64> {
    params.validate()?;
    ensure_finite("base value", z)?;
    let st = params.standardization;
    Ok(params.spline().inverse(z) * st.scale + st.shift)
}

pub fn log_prob(params: &SplineFlowParams, y: f64) -> Result<f64> {
    Ok(log_prob_batch(params, &[y])?[0])
}

/// Log-density at each element of `ys`.
pub fn log_prob_batch(params: &SplineFlowParams, ys: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    let spline = params.spline();
    let st = params.standardization;
    let offset = -HALF_LN_2PI - st.scale.ln();
    ys.iter()
        .map(|&y| {
            check_y(y)?;
            let (z, ld) = spline.forward((y - st.shift) / st.scale);
            Ok(-0.5 * z * z + ld + offset)
        })
        .collect()
}

/// Gradient of `sum_i weights[i] * log_prob(ys[i])` with respect to the
/// trainable parameters, in [`SplineFlowParams::trainable`] order.
pub fn weighted_log_prob_grads(
    params: &SplineFlowParams,
    ys: &[f64],
    weights: &[f64],
) -> Result<Vec<f64>> {
    params.validate()?;
    if ys.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: ys.len(),
            actual: weights.len(),
        });
    }
    let spline = params.spline();
    let k = spline.bins();
    let st = params.standardization;
    // gradients w.r.t. lower knot positions, sizes and knot derivatives
    let mut g_x = vec![0.0; k];
    let mut g_w = vec![0.0; k];
    let mut g_y = vec![0.0; k];
    let mut g_h = vec![0.0; k];
    let mut g_d = vec![0.0; k + 1];
    for (&y, &c) in ys.iter().zip(weights) {
        check_y(y)?;
        let u = (y - st.shift) / st.scale;
        if c == 0.0 || !spline.inside(u) {
            continue;
        }
        let b = Spline::bin_of(&spline.xs, u);
        let (z, ld) = segment(
            u,
            Dual::<6>::variable(spline.xs[b], 0),
            Dual::variable(spline.widths[b], 1),
            Dual::variable(spline.ys[b], 2),
            Dual::variable(spline.heights[b], 3),
            Dual::variable(spline.derivs[b], 4),
            Dual::variable(spline.derivs[b + 1], 5),
        );
        // d/dtheta of (-z^2 / 2 + ln T')
        let dz = -z.v;
        let local: [f64; 6] = std::array::from_fn(|i| c * (dz * z.d[i] + ld.d[i]));
        g_x[b] += local[0];
        g_w[b] += local[1];
        g_y[b] += local[2];
        g_h[b] += local[3];
        g_d[b] += local[4];
        g_d[b + 1] += local[5];
    }

    // knot j sits at -B + sum_{i<j} size_i, so size_i moves every later knot
    let through_knots = |g_size: &mut [f64], g_knot: &[f64]| {
        let mut suffix = 0.0;
        for i in (0..k).rev() {
            g_size[i] += suffix;
            suffix += g_knot[i];
        }
    };
    through_knots(&mut g_w, &g_x);
    through_knots(&mut g_h, &g_y);

    let span = 2.0 * spline.bound * (1.0 - k as f64 * MIN_BIN_FRACTION);
    let through_softmax = |sm: &[f64], g: &[f64]| -> Vec<f64> {
        let dot: f64 = sm.iter().zip(g).map(|(s, g)| s * g).sum();
        sm.iter()
            .zip(g)
            .map(|(s, g)| span * s * (g - dot))
            .collect()
    };
    let mut out = Vec::with_capacity(params.trainable_len());
    out.extend(through_softmax(&spline.width_softmax, &g_w));
    out.extend(through_softmax(&spline.height_softmax, &g_h));
    out.extend(
        params
            .raw_derivs
            .iter()
            .enumerate()
            .map(|(i, &r)| g_d[i + 1] * sigmoid(r)),
    );
    Ok(out)
}

/// Gradient of the mean log-likelihood of `ys`; zero for an empty batch.
pub fn log_prob_grads(params: &SplineFlowParams, ys: &[f64]) -> Result<Vec<f64>> {
    if ys.is_empty() {
        params.validate()?;
        return Ok(vec![0.0; params.trainable_len()]);
    }
    let w = vec![1.0 / ys.len() as f64; ys.len()];
    weighted_log_prob_grads(params, ys, &w)
}

/// A flow together with its private optimizer state.
#[derive(Debug, Clone)]
pub struct FlowTrainer {
    pub params: SplineFlowParams,
    adam: AdamState,
}

impl FlowTrainer {
    pub fn new(params: SplineFlowParams) -> Self {
        let adam = AdamState::new(params.trainable_len());
        Self { params, adam }
    }

    /// Gradient-ascent step on an objective whose gradient is `grad`.
    pub fn ascend(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut theta = self.params.trainable();
        adam_step(&mut theta, &descent, &mut self.adam, lr)?;
        self.params.set_trainable(&theta);
        Ok(())
    }

    pub fn into_params(self) -> SplineFlowParams {
        self.params
    }
}

/// Sorted distinct values of `y` with their relative frequencies.
///
/// Sums over this form do not depend on row order, and duplicating every row
/// reproduces them bit for bit: counts and `n` double together, so each
/// weight `count / n` is the same correctly rounded quotient.
fn distinct_with_weights(y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for v in sorted {
        if values.last() == Some(&v) {
            *counts.last_mut().expect("paired with values") += 1;
        } else {
            values.push(v);
            counts.push(1);
        }
    }
    let weights = counts.into_iter().map(|c| c as f64 / n).collect();
    (values, weights)
}

/// Full-batch maximum likelihood from `init` for `epochs` Adam steps.
pub fn fit_marginal(
    y: &[f64],
    init: SplineFlowParams,
    epochs: usize,
    lr: f64,
) -> Result<SplineFlowParams> {
    if y.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 target values to fit a flow, got {}",
            y.len()
        )));
    }
    init.validate()?;
    let (values, weights) = distinct_with_weights(y);
    let mut trainer = FlowTrainer::new(init);
    for _ in 0..epochs {
        let g = weighted_log_prob_grads(&trainer.params, &values, &weights)?;
        trainer.ascend(&g, lr)?;
    }
    Ok(trainer.into_params())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Mean mixture log-likelihood
/// `(1/n) sum_i ln[p_sg(y_i) s_i + p_comp(y_i) (1 - s_i)]`
/// and its gradients with respect to both flows.
pub fn mixture_log_likelihood_grads(
    ys: &[f64],
    memberships: &[f64],
    subgroup: &SplineFlowParams,
    complement: &SplineFlowParams,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if ys.len() != memberships.len() {
        return Err(Error::DimensionMismatch {
            expected: ys.len(),
            actual: memberships.len(),
        });
    }
    if let Some(s) = memberships.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidInput(format!(
            "membership {s} outside [0, 1]"
        )));
    }
    let n = ys.len().max(1) as f64;
    let lp_sg = log_prob_batch(subgroup, ys)?;
    let lp_comp = log_prob_batch(complement, ys)?;
    let mut total = 0.0;
    let mut w_sg = Vec::with_capacity(ys.len());
    let mut w_comp = Vec::with_capacity(ys.len());
    for ((&s, &a), &b) in memberships.iter().zip(&lp_sg).zip(&lp_comp) {
        let in_term = s.ln() + a;
        let out_term = (1.0 - s).ln() + b;
        let lm = log_add_exp(in_term, out_term);
        total += lm;
        w_sg.push((in_term - lm).exp() / n);
        w_comp.push((out_term - lm).exp() / n);
    }
    let g_sg = weighted_log_prob_grads(subgroup, ys, &w_sg)?;
    let g_comp = weighted_log_prob_grads(complement, ys, &w_comp)?;
    Ok((total / n, g_sg, g_comp))
}

/// One Adam step on both flows of the membership-weighted mixture; returns
/// the mixture log-likelihood before the step.
pub fn fit_weighted_pair(
    ys: &[f64],
    memberships: &[f64],
    subgroup: &mut FlowTrainer,
    complement: &mut FlowTrainer,
    lr: f64,
) -> Result<f64> {
    let (ll, g_sg, g_comp) =
        mixture_log_likelihood_grads(ys, memberships, &subgroup.params, &complement.params)?;
    subgroup.ascend(&g_sg, lr)?;
    complement.ascend(&g_comp, lr)?;
    Ok(ll)
}

/// One Adam step on the membership-weighted mean log-likelihood
/// `sum_i s_i ln p(y_i) / sum_i s_i` of a single flow.
pub fn fit_weighted(
    ys: &[f64],
    memberships: &[f64],
    flow: &mut FlowTrainer,
    lr: f64,
) -> Result<()> {
    if ys.len() != memberships.len() {
        return Err(Error::DimensionMismatch {
            expected: ys.len(),
            actual: memberships.len(),
        });
    }
    if let Some(s) = memberships.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidInput(format!(
            "membership {s} outside [0, 1]"
        )));
    }
    let mass: f64 = memberships.iter().sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::EmptySubgroup {
            mass,
            threshold: 0.0,
        });
    }
    let w: Vec<f64> = memberships.iter().map(|s| s / mass).collect();
    let g = weighted_log_prob_grads(&flow.params, ys, &w)?;
    flow.ascend(&g, lr)
}
