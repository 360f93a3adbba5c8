//! Generalized phase-type distributions built from a mixture of two
//! absorbing Markov chains that share a state space and differ in speed.
//!
//! The crate is layered: [`numkernel`] supplies dense matrix numerics,
//! [`markov`] validated generators, [`mixture`] the two-regime process and
//! its posterior weights, and the remaining modules the distributional
//! quantities built on them.

pub mod competing;
pub mod curve;
pub mod error;
pub mod gph;
pub mod hazard;
pub mod markov;
pub mod mixture;
pub mod montecarlo;
pub mod numkernel;
pub mod scenario;
pub mod sojourn;

pub use competing::{CauseLabel, CompetingModel, SubDistribution, UnconditionalFamily};
pub use curve::CurveGrid;
pub use error::{Error, Result};
pub use gph::{ClassicalPH, DenseApproximation, GphDistribution};
pub use hazard::{IntensityCurve, IntensityKind};
pub use markov::{ExitMatrix, Generator, SubIntensity};
pub use mixture::{
    GeneratorEstimate, InformationRegime, InformationState, MixtureModel, PathRecord, Regime,
    SpeedMatrix,
};
pub use montecarlo::{SimulatedPath, SimulationConfig};
pub use numkernel::{EigenSystem, Matrix, Vector};
pub use sojourn::OccupationQuery;
