//! Likelihood-free inference with sequential Monte Carlo.
//!
//! The crate provides three samplers over a pluggable [`Model`]:
//!
//! * ABC rejection, used to build the first population,
//! * ABC SMC, which resamples the previous population by its importance
//!   weights and perturbs with a gaussian product kernel,
//! * ABC SMC with adaptive weights, which first reweights every particle by
//!   how close its simulated data lies to the observation under an x-space
//!   kernel before resampling.
//!
//! The four benchmark models (scalar and multivariate normal mixtures, the
//! toggle switch and the M/G/1 queue) live in [`models`]; pilot studies,
//! efficiency tables and density exports live in [`diagnostics`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod engine;
mod error;
pub mod kernels;
pub mod models;
pub mod particle;
pub mod rng;
pub mod stats;

pub use engine::{
    abc_rejection_init, compute_adaptive_weights, run, smc_step, smc_weight_update, RunConfig,
    RunTrace, StepRecord, ThresholdSchedule, Variant, XKernelChoice,
};
pub use error::{Error, Result};
pub use kernels::{BandwidthRule, Block, KernelKind, KernelSpec};
pub use models::{Model, SimRng};
pub use particle::{AdaptiveWeights, Particle, ParticleSystem};
