//! Periodic traveling capillary-gravity waves for Darcy flow (one-phase
//! Muskat / vertical Hele-Shaw) with a graph free surface.
//!
//! The numerical modules are generic over the scalar type; the aliases
//! below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod continuation;
pub mod curvature;
pub mod dtn;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod run;
pub mod sampling;
pub mod scalar;
pub mod smallwave;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = spectral::Grid<f64>;
pub type GridFunction = spectral::GridFunction<f64>;
pub type Depth = spectral::Depth<f64>;
pub type FluidParams = spectral::FluidParams<f64>;
pub type MultiplierSymbol = spectral::MultiplierSymbol<f64>;
pub type DtnConfig = dtn::DtnConfig<f64>;
pub type EllipticWorkspace = dtn::EllipticWorkspace<f64>;
pub type BulkField = dtn::BulkField<f64>;
pub type CurvatureConfig = curvature::CurvatureConfig<f64>;
pub type PicardReport = smallwave::PicardReport<f64>;
pub type SigmaSweep = smallwave::SigmaSweep<f64>;
pub type StepConfig = continuation::StepConfig<f64>;
pub type StopConfig = continuation::StopConfig<f64>;
pub type BranchTrace = continuation::BranchTrace<f64>;
pub type BranchPoint = continuation::BranchPoint<f64>;
pub type EvolutionConfig = dynamics::EvolutionConfig<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
