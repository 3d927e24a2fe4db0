//! SolarBoost: forecasting an aggregate output series that is generated by
//! `K` latent, nonnegative, time-varying capacities multiplying a shared
//! per-unit output function of grid-level features.
//!
//! The model alternates two updates:
//!
//! * a Newton-boosted regression tree round for the unit output function,
//!   driven by per-sample gradients/Hessians of a convex surrogate of the
//!   squared aggregate error ([`surrogate`], [`gbtree`]);
//! * a Kalman-filter refresh of the latent capacities with a time-varying
//!   sensing matrix built from the ensemble predictions ([`capfilter`]).
//!
//! [`solver`] ties the two together, [`synthgen`] produces the benchmark
//! datasets, [`baselines`] and [`evalbench`] hold the reference methods and
//! the evaluation/experiment harness.
//!
//! With the default `parallel` feature the data-parallel inner loops
//! (per-step sensing matrices, gradient batches, split search) run on
//! rayon; without it everything falls back to sequential loops with
//! identical results.

pub mod baselines;
pub mod capfilter;
pub mod data;
pub mod error;
pub mod evalbench;
pub mod gbtree;
pub(crate) mod linalg;
pub(crate) mod par;
pub mod solver;
pub mod surrogate;
pub mod synthgen;

pub use error::{Error, Result};
