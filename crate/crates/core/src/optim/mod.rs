//! Gradient-based optimizers for the ELBO: plain and Adam-transformed
//! gradient ascent, linearized and inner-loop proximity updates, and
//! deterministic annealing.

mod adam;
mod state;
mod train;

pub use adam::{adam_transform, Adam};
pub use state::{
    annealing_temperature, init_anchor, GradientEstimate, InnerLoop, InnerReport, OptimizerState,
    StepReport,
};
pub use train::{train, Method, Objective, TrainOutcome, TrainRow, TrainSettings};
