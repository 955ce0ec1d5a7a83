//! Histogram-based evaluation of a discovered subgroup against the
//! population, plus F1 against ground-truth labels.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor applied to reference-histogram bins in [`kl_hist`].
pub const KL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Percentile with linear interpolation between order statistics
/// (`q` in `[0, 100]`).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::DegenerateData("percentile of empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, q))
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Freedman–Diaconis bin edges over `[min, max]`, falling back to Sturges'
/// rule when the interquartile range is zero.
pub fn fd_bin_edges(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 values for binning, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let range = max - min;
    if range <= 0.0 {
        return Err(Error::DegenerateData("all values are equal".into()));
    }
    let n = sorted.len() as f64;
    let iqr = percentile_sorted(&sorted, 75.0) - percentile_sorted(&sorted, 25.0);
    let bins = if iqr > 0.0 {
        let width = 2.0 * iqr / n.cbrt();
        ((range / width).ceil() as usize).max(1)
    } else {
        n.log2().ceil() as usize + 1
    };
    let step = range / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| min + step * i as f64).collect();
    edges.push(max);
    Ok(edges)
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "histogram edges must be strictly increasing with at least 2 entries".into(),
        ));
    }
    Ok(())
}

/// Normalized counts; out-of-range values land in the terminal bins.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::DegenerateData("histogram of empty sample".into()));
    }
    check_edges(edges)?;
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for &v in values {
        // bins are [e_i, e_{i+1}) except the last, which is closed
        let idx = edges[1..bins].partition_point(|&e| e <= v);
        counts[idx] += 1;
    }
    let n = values.len() as f64;
    Ok(Histogram {
        edges: edges.to_vec(),
        probs: counts.iter().map(|&c| c as f64 / n).collect(),
    })
}

fn check_same_edges(p: &Histogram, q: &Histogram) -> Result<()> {
    if p.edges != q.edges || p.probs.len() != q.probs.len() {
        return Err(Error::InvalidInput(
            "histograms have different edges".into(),
        ));
    }
    Ok(())
}

/// Bhattacharyya coefficient `sum_i sqrt(p_i q_i)`.
pub fn bhattacharyya(p: &Histogram, q: &Histogram) -> Result<f64> {
    check_same_edges(p, q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a * b).sqrt())
        .sum())
}

/// `sum_{p_i > 0} p_i ln(p_i / max(q_i, KL_FLOOR))`.
pub fn kl_hist(p: &Histogram, q: &Histogram) -> Result<f64> {
    check_same_edges(p, q)?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b.max(KL_FLOOR)).ln())
        .sum())
}

fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::DegenerateData("mean of empty sample".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Absolute difference of sample means.
pub fn amd(sub_values: &[f64], all_values: &[f64]) -> Result<f64> {
    Ok((mean(sub_values)? - mean(all_values)?).abs())
}

pub fn size_corrected(value: f64, size_frac: f64, gamma: f64) -> f64 {
    size_frac.powf(gamma) * value
}

/// `2 TP / (2 TP + FP + FN)`, or 0 when nothing is positive.
pub fn f1(pred: &[bool], truth: &[bool]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    })
}

/// Jaccard index of two boolean masks; 0 when both are empty.
pub fn jaccard(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Evaluation of one subgroup against the full target sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupMetrics {
    pub size_frac: f64,
    pub bc: f64,
    pub kl: f64,
    pub amd: f64,
    pub kl_size_corrected: f64,
    pub amd_size_corrected: f64,
}

/// BC, KL and AMD of the rows selected by `mask` against all rows, with bin
/// edges fixed by the full sample and size correction exponent `gamma`.
pub fn evaluate_subgroup(target: &[f64], mask: &[bool], gamma: f64) -> Result<SubgroupMetrics> {
    if mask.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            actual: mask.len(),
        });
    }
    let sub: Vec<f64> = target
        .iter()
        .zip(mask)
        .filter_map(|(&y, &m)| m.then_some(y))
        .collect();
    if sub.is_empty() {
        return Err(Error::DegenerateData("subgroup is empty".into()));
    }
    let edges = fd_bin_edges(target)?;
    let all = histogram(target, &edges)?;
    let part = histogram(&sub, &edges)?;
    let size_frac = sub.len() as f64 / target.len() as f64;
    let kl = kl_hist(&part, &all)?;
    let amd = amd(&sub, target)?;
    Ok(SubgroupMetrics {
        size_frac,
        bc: bhattacharyya(&part, &all)?,
        kl,
        amd,
        kl_size_corrected: size_corrected(kl, size_frac, gamma),
        amd_size_corrected: size_corrected(amd, size_frac, gamma),
    })
}
