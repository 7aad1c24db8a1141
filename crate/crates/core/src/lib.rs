//! Simulation, dataset generation and recurrent flow-function surrogates for
//! conductance-based spiking neurons.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`neuron`] builds conductance models from the shipped model catalogue,
//! 2. [`integrator`] integrates them under piecewise-constant inputs
//!    ([`controls`]) with a variable-order BDF method,
//! 3. [`dataset`] samples trajectories on Latin hypercube time grids, prunes
//!    them by rejection sampling and splits them,
//! 4. [`surrogate`] and [`training`] fit an encoder / LSTM / decoder network
//!    that maps `(t, x, u)` to the output trajectory.

pub mod controls;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod integrator;
pub mod neuron;
pub mod plot;
pub mod spikes;
pub mod surrogate;
pub mod training;
mod util;

pub use controls::PiecewiseConstantControl;
pub use dataset::{Dataset, GenerationConfig, TrajectoryRecord};
pub use error::{Error, Result};
pub use integrator::{integrate, IntegratorConfig, SolutionPath, VectorField};
pub use neuron::{build_fast_spiking, build_feedforward_pair, ConductanceModel};
pub use surrogate::{Surrogate, SurrogateConfig, SurrogateParams};
pub use training::{fit, TrainConfig, TrainReport, WindowSpec};
pub use util::sha256_hex;
