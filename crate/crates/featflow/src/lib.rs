//! Mesh-free solver for time-dependent, strongly nonlinear PDE systems.
//!
//! Space is discretized by random feature functions over a partitioned
//! rectangular domain (value fits by rescaled block least squares with
//! explicit interface-continuity constraints); time by explicit Runge-Kutta,
//! with every stage evaluated in truncated derivative jets so no automatic
//! differentiation is needed. A multiphase cell-migration model and a
//! manufactured-solution verification harness ride on top.
//!
//! The numeric core is generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`); the aliases below fix `f64`, which is what the solver
//! configurations in `featflow-cli` use.

pub mod assembly;
pub mod basis;
pub mod cellmodel;
pub mod geometry;
pub mod integrator;
pub mod jets;
pub mod scalar;
pub mod verify;

pub use scalar::Real;

/// f64 aliases for the commonly used types.
pub type DomainBox64 = geometry::DomainBox<f64>;
pub type Partition64 = geometry::Partition<f64>;
pub type CollocationSet64 = geometry::CollocationSet<f64>;
pub type TestGrid64 = geometry::TestGrid<f64>;
pub type FeatureBasis64 = basis::FeatureBasis<f64>;
pub type Jets64 = jets::Jets<f64>;
pub type FittedField64 = assembly::FittedField<f64>;
pub type LinearSystem64 = assembly::LinearSystem<f64>;
pub type RKTableau64 = integrator::RKTableau<f64>;
pub type CellParams64 = cellmodel::CellParams<f64>;
pub type CellModel64 = cellmodel::CellModel<f64>;
