//! Synthetic benchmark: uniform features, a planted hypercube subgroup and a
//! re-sampled target inside it.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Cauchy, Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::rng::{stream_rng, Stream};
use super::Dataset;
use crate::rules::{crisp_eval, Clause, Condition, CrispRule};
use crate::{Error, Matrix, Result};

/// Target distribution inside the planted subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDist {
    /// N(1.5, 0.5)
    Normal,
    /// U(0.5, 1.5)
    UniformShift,
    /// Exponential with rate 0.5 (mean 2)
    Exponential,
    /// Rayleigh with scale 2
    Rayleigh,
    /// Cauchy(0, 1)
    Cauchy,
    /// Beta(0.2, 0.2)
    Beta,
    /// Fair mixture of N(-1.5, 0.5) and N(1.5, 0.5)
    Bimodal,
}

impl TargetDist {
    pub const ALL: [TargetDist; 7] = [
        TargetDist::Normal,
        TargetDist::UniformShift,
        TargetDist::Exponential,
        TargetDist::Rayleigh,
        TargetDist::Cauchy,
        TargetDist::Beta,
        TargetDist::Bimodal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TargetDist::Normal => "normal",
            TargetDist::UniformShift => "uniform_shift",
            TargetDist::Exponential => "exponential",
            TargetDist::Rayleigh => "rayleigh",
            TargetDist::Cauchy => "cauchy",
            TargetDist::Beta => "beta",
            TargetDist::Bimodal => "bimodal",
        }
    }

    /// Parameterization as recorded in output metadata.
    pub fn description(self) -> &'static str {
        match self {
            TargetDist::Normal => "normal(mean=1.5, std=0.5)",
            TargetDist::UniformShift => "uniform(0.5, 1.5)",
            TargetDist::Exponential => "exponential(rate=0.5, mean=2)",
            TargetDist::Rayleigh => "rayleigh(scale=2)",
            TargetDist::Cauchy => "cauchy(location=0, scale=1)",
            TargetDist::Beta => "beta(0.2, 0.2)",
            TargetDist::Bimodal => "0.5*normal(-1.5, 0.5) + 0.5*normal(1.5, 0.5)",
        }
    }

    /// Moments are useless for standardizing these; use quantiles instead.
    pub fn is_heavy_tailed(self) -> bool {
        self == TargetDist::Cauchy
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for TargetDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown distribution `{s}`; valid names: {}",
                    Self::valid_names()
                ))
            })
    }
}

fn draw<R: Rng>(dist: TargetDist, rng: &mut R) -> f64 {
    // parameters are constants, so the constructors cannot fail
    match dist {
        TargetDist::Normal => Normal::new(1.5, 0.5).unwrap().sample(rng),
        TargetDist::UniformShift => Uniform::new(0.5, 1.5).sample(rng),
        TargetDist::Exponential => Exp::new(0.5).unwrap().sample(rng),
        TargetDist::Rayleigh => {
            let u: f64 = rng.gen();
            2.0 * (-2.0 * (1.0 - u).ln()).sqrt()
        }
        TargetDist::Cauchy => Cauchy::new(0.0, 1.0).unwrap().sample(rng),
        TargetDist::Beta => Beta::new(0.2, 0.2).unwrap().sample(rng),
        TargetDist::Bimodal => {
            let mean = if rng.gen::<bool>() { 1.5 } else { -1.5 };
            Normal::new(mean, 0.5).unwrap().sample(rng)
        }
    }
}

/// `n` i.i.d. draws of `dist` from the seed's subgroup-target stream.
pub fn sample_target(dist: TargetDist, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::SubgroupTarget);
    (0..n).map(|_| draw(dist, &mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub p: usize,
    /// Number of features constrained by the planted rule.
    pub c: usize,
    /// Fraction of the unit hypercube covered by the planted rule.
    pub volume: f64,
    pub target_dist: TargetDist,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            p: 10,
            c: 4,
            volume: 0.1,
            target_dist: TargetDist::Normal,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidInput("n and p must be positive".into()));
        }
        if self.c == 0 || self.c > self.p {
            return Err(Error::InvalidInput(format!(
                "c must be in 1..={}, got {}",
                self.p, self.c
            )));
        }
        if !(self.volume > 0.0 && self.volume <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "volume must be in (0, 1], got {}",
                self.volume
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    pub truth: Vec<bool>,
    pub planted: CrispRule,
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut feature_rng = stream_rng(cfg.seed, Stream::Features);
    let data: Vec<f64> = (0..cfg.n * cfg.p)
        .map(|_| feature_rng.gen::<f64>())
        .collect();
    let features = Matrix::new(cfg.n, cfg.p, data)?;

    let mut placement_rng = stream_rng(cfg.seed, Stream::Placement);
    let mut order: Vec<usize> = (0..cfg.p).collect();
    order.shuffle(&mut placement_rng);
    let mut chosen = order[..cfg.c].to_vec();
    chosen.sort_unstable();
    let width = cfg.volume.powf(1.0 / cfg.c as f64);
    let clauses = chosen
        .into_iter()
        .map(|feature| {
            let lo = placement_rng.gen::<f64>() * (1.0 - width);
            Clause {
                feature,
                condition: Condition::Interval { lo, hi: lo + width },
            }
        })
        .collect();
    let planted = CrispRule { clauses };
    let truth = features
        .iter_rows()
        .map(|x| crisp_eval(&planted, x))
        .collect::<Result<Vec<bool>>>()?;

    let mut background = stream_rng(cfg.seed, Stream::BackgroundTarget);
    let mut target: Vec<f64> = (0..cfg.n).map(|_| background.gen::<f64>()).collect();
    let inside = truth.iter().filter(|&&t| t).count();
    let resampled = sample_target(cfg.target_dist, inside, cfg.seed);
    for (y, v) in target
        .iter_mut()
        .zip(&truth)
        .filter_map(|(y, &t)| t.then_some(y))
        .zip(resampled)
    {
        *y = v;
    }

    let names = (0..cfg.p).map(|j| format!("x{j}")).collect();
    let dataset = Dataset::new(features, target, names, "y")?;
    Ok(SynthData {
        dataset,
        truth,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        for d in TargetDist::ALL {
            assert_eq!(d.name().parse::<TargetDist>().unwrap(), d);
        }
        let err = "nosuch".parse::<TargetDist>().unwrap_err().to_string();
        assert!(err.contains("bimodal") && err.contains("normal"));
    }

    #[test]
    fn planted_fraction_near_volume() {
        let s = synth_generate(&SynthConfig::default()).unwrap();
        let frac = s.truth.iter().filter(|&&t| t).count() as f64 / 20_000.0;
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
        assert_eq!(s.planted.active_len(), 4);
    }

    #[test]
    fn full_volume_selects_everything() {
        let cfg = SynthConfig {
            n: 2_000,
            volume: 1.0,
            ..SynthConfig::default()
        };
        let s = synth_generate(&cfg).unwrap();
        assert!(s.truth.iter().all(|&t| t));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n: 500,
            target_dist: TargetDist::Bimodal,
            seed: 42,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.planted, b.planted);
        let c = synth_generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.dataset.target, c.dataset.target);
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::default();
        assert!(synth_generate(&SynthConfig { c: 11, ..base }).is_err());
        assert!(synth_generate(&SynthConfig {
            volume: 0.0,
            ..base
        })
        .is_err());
        assert!(synth_generate(&SynthConfig {
            volume: 1.5,
            ..base
        })
        .is_err());
        assert!(synth_generate(&SynthConfig { n: 0, ..base }).is_err());
    }

    #[test]
    fn sample_moments() {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let normal = sample_target(TargetDist::Normal, 100_000, 1);
        let m = mean(&normal);
        let sd = (normal.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 1e5).sqrt();
        assert!((m - 1.5).abs() < 0.02 && (sd - 0.5).abs() < 0.02);
        assert!(mean(&sample_target(TargetDist::Bimodal, 100_000, 2)).abs() < 0.03);
        assert!((mean(&sample_target(TargetDist::Beta, 100_000, 3)) - 0.5).abs() < 0.02);
    }
}
