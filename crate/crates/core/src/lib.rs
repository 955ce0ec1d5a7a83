//! Subgroup discovery by end-to-end gradient optimization.
//!
//! A subgroup is described by a conjunction of interval predicates over the
//! features. During training each predicate is relaxed into a smooth
//! [`rules::soft_predicate`] and the conjunction into a weighted harmonic mean,
//! so the rule can be fitted by gradient ascent on a KL-divergence score. The
//! target densities inside the subgroup and over the whole population are
//! modelled with one-dimensional rational-quadratic spline flows
//! ([`flows`]). Once training has annealed the temperature, the soft rule is
//! rounded into a readable [`rules::CrispRule`].
//!
//! Module map:
//!
//! | module        | contents                                                  |
//! |---------------|-----------------------------------------------------------|
//! | [`rules`]     | soft predicates, soft binning, soft conjunction, crisp rules |
//! | [`flows`]     | spline flow density, inverse, gradients, fitting          |
//! | [`objective`] | Monte-Carlo KL, size correction, diversity regularizer    |
//! | [`optim`]     | Adam, temperature annealing, finite-difference checks     |
//! | [`discovery`] | the alternating training loop and iterative discovery     |
//! | [`metrics`]   | histogram based evaluation metrics and F1                 |
//! | [`data`]      | CSV ingestion, feature scaling, synthetic benchmarks      |
//! | [`gradcheck`] | randomized gradient test suites                           |

pub mod data;
pub mod discovery;
mod error;
pub mod flows;
pub mod gradcheck;
pub mod matrix;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod rules;

pub use error::{Error, Result};
pub use matrix::Matrix;
