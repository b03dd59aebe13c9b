//! Proximity variational inference.
//!
//! Gradient ascent on the evidence lower bound where consecutive iterates are
//! kept close under a chosen statistic of the variational parameters
//! (entropy, KL to the prior, mean/variance, Gram matrices of weights) and a
//! distance on that statistic. The crate provides the constraint machinery
//! ([`proximity`]), the optimizers ([`optim`]), three reference models
//! ([`model`]), held-out estimators ([`eval`]), data loading ([`data`]) and
//! the experiment harness used by the `pvi` command-line tool ([`harness`]).

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod math;
pub mod model;
pub mod optim;
pub mod params;
pub mod proximity;

pub use error::{Error, Result};
pub use optim::{GradientEstimate, Method, Objective, OptimizerState, StepReport, TrainSettings};
pub use params::{Layout, ParamVector, SliceKind};
pub use proximity::{Distance, ProximityConfig, Schedule, StatisticKind, StatisticValue};

/// The random number generator used for every seeded run.
pub type SeededRng = rand_chacha::ChaCha8Rng;
