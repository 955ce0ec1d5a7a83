//! Adam, the temperature schedule and a central-difference gradient checker.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state with the usual defaults (0.9, 0.999, 1e-8).
    pub fn new(len: usize) -> Self {
        Self::with_hyperparameters(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step_count: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Fails without touching `params` or `state` if any gradient is non-finite.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grads.len().min(state.m.len()),
        });
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Temperature for `epoch`: halved at the half and three-quarter marks.
pub fn anneal_temperature(epoch: usize, total_epochs: usize, t: f64) -> f64 {
    if epoch == total_epochs / 2 || epoch == 3 * total_epochs / 4 {
        t / 2.0
    } else {
        t
    }
}

/// Central-difference derivative of `f` along every coordinate of `params`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|fd - analytic| / (|analytic| + 1e-8)` over all coordinates.
pub fn finite_diff_check(
    loss: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    params: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(analytic.len(), params.len(), "gradient length");
    finite_diff_grad(loss, params, h)
        .iter()
        .zip(analytic)
        .map(|(fd, a)| (fd - a).abs() / (a.abs() + 1e-8))
        .fold(0.0, f64::max)
}
