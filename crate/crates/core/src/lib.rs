//! Numerical engine for magnetic and nonholonomic Hamiltonian systems on
//! flat cotangent bundles `T*ℝⁿ`.

// `!(x > tol)` is used on purpose so that NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod hj;
pub mod integrator;
pub mod linalg;
pub mod magnetic;
pub mod nonholonomic;
pub mod reduction;
pub mod sampling;
pub mod scenario;
pub mod suite;
pub mod synth;
pub mod tolerance;

pub use error::{MagnoError, Result};
pub use geometry::{PhasePoint, TangentPhaseVector, TwoFormField};
pub use hj::{HjReport, Verdict};
pub use integrator::{FieldKind, Trajectory};
pub use magnetic::{HamiltonianSpec, MagneticStructure};
pub use nonholonomic::ConstraintDistribution;
pub use scenario::{CheckReport, Scenario, ScenarioSpec, SuiteReport};
pub use tolerance::Tolerances;
