//! Deterministic exclusion dynamics of point particles moving through a
//! continuum with obstacles.
//!
//! The crate provides the parallel-update map and its runners
//! ([`dynamics`]), extended obstacle chains ([`obstacles`]), density and
//! velocity statistics ([`stats`]), the dynamical coupling of two processes
//! ([`coupling`]), the lattice zero-range process ([`zerorange`]) and
//! configuration generators ([`scenarios`]). Every computation is generic
//! over [`Scalar`], implemented by `f64` and by exact rationals ([`Exact`]).

pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod obstacles;
pub mod scalar;
pub mod scenarios;
pub mod stats;
pub mod sweep;
pub mod zerorange;

pub use dynamics::{local_velocity, run, step, Dynamics, ServiceDiscipline, SimState, TrajectorySummary};
pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{gap, Domain, ParticleConfig, Position};
pub use obstacles::{build_extended, modified_gap, refine_waiting, ChainDensity, ExtendedObstacleField, ObstacleField};
pub use scalar::{ArithmeticMode, Distance, Exact, Scalar};
