//! Post-processing of ensemble weather forecasts into parametric predictive
//! distributions.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the numerical
//! core: ensemble statistics, the four zero-bounded predictive families with
//! closed-form CRPS and gradients, EMOS link functions and their optimum-score
//! fitting, a small feed-forward network engine trained by Adam, the
//! rolling-window calibration workflows built on top of it, forecast
//! verification and a seeded scenario generator.
//!
//! File formats, the model store and the command-line interface live in the
//! companion `enspost` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod dist;
pub mod emos;
mod error;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod special;
pub mod stats;
pub mod synthetic;
pub mod verify;

pub use data::{Dataset, EnsembleForecast, ForecastCase, Observation, Variable};
pub use dist::{Family, PredictiveDistribution};
pub use error::{Error, Result};
pub use stats::EnsembleSummary;

/// Number of exchangeable (perturbed) members.
pub const N_EXCHANGEABLE: usize = 10;
/// Total ensemble size: one control run plus the exchangeable members.
pub const N_MEMBERS: usize = N_EXCHANGEABLE + 1;
/// Minutes per day.
pub const MINUTES_PER_DAY: i64 = 1440;
/// Forecast horizon of one run in minutes (48 h).
pub const HORIZON_MINUTES: u32 = 2880;
