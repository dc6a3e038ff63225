//! Explicit co-simulation of ODE subsystems.
//!
//! A coupled system is split into [`coupling::Subsystem`] blocks that are
//! integrated independently between exchange times. Three master schemes
//! are provided:
//!
//! * plain input extrapolation (constant, linear or linear Hermite),
//! * balance correction, which refeeds the previous interval's integral
//!   error of each exchanged signal through a unit-mass hat function,
//! * power negotiation, where both sides of an energetic interface agree on
//!   one antisymmetric interface power and reconstruct one input component
//!   from it so that the energy leaving one block enters the other.
//!
//! The [`models`] module carries the benchmark systems (2D linear problems,
//! the split spring-mass oscillator, generic gradient flows) and the
//! [`analysis`] module turns traces into convergence orders and energy
//! reports.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coupling;
pub mod extrapolation;
pub mod models;
pub mod quadrature;
pub mod solvers;

pub use analysis::{ConvergenceStudy, EnergyReport};
pub use coupling::{
    run_master, Connection, CoupledSystem, MasterConfig, PowerInverse, Scheme, SimulationTrace,
    Subsystem,
};
pub use extrapolation::{Extrapolant, SampleHistory};
pub use solvers::{DenseSolution, IntegratorConfig, Method};

/// Crate-level error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Solver(#[from] solvers::SolverError),
    #[error(transparent)]
    Extrapolation(#[from] extrapolation::ExtrapolationError),
    #[error(transparent)]
    Coupling(#[from] coupling::CouplingError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}
