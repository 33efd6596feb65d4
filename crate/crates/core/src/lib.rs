//! Capacity expansion, dispatch and shadow-price analysis for fuel-free
//! electricity systems built from wind, solar and storage.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` case.

pub mod demand;
pub mod dispatch;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DemandModel = demand::DemandModel<f64>;
pub type SystemConfig = model::SystemConfig<f64>;
pub type CapacitySet = model::CapacitySet<f64>;
pub type ProblemSpec = solver::ProblemSpec<f64>;
pub type SolutionBundle = solver::SolutionBundle<f64>;
pub type KktReport = solver::KktReport<f64>;
pub type RunResult = dispatch::RunResult<f64>;
