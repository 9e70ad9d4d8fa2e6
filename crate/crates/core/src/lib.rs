//! Dimension theory of shrinking targets and recurrence sets for self-affine
//! iterated function systems.
//!
//! The crate computes singular value functions of affine cocycles, brackets
//! the ordinary and modified pressures by enumerating word trees, solves for
//! their zeros, and simulates the recurrence measures the dimension formulas
//! are built from. Every routine is generic over [`Scalar`] (`f32` or `f64`);
//! the `*64` aliases below are the instantiations the CLI uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod ifs;
pub mod logsum;
pub mod measures;
pub mod pressure;
pub mod scalar;
pub mod solver;
pub mod svf;
pub mod symbolic;
mod tree;

pub use error::{Error, Result};
pub use ifs::{AffineContraction, AffineSystem, Cone, ProjectedPoint, QuasiMultReport, ValidationReport, Violation};
pub use logsum::{log_sum_exp, LogSumExp};
pub use measures::{
    cylinder_mass, energy_diagnostic, gibbs_check, mu_k_mass, simulate_recurrence, spaced_times, CylinderMeasure,
    EnergyReport, GibbsReport, MassTable, MeasureKind, RecurrenceRow, SeriesBehaviour, SeriesVerdict, SimulationReport,
};
pub use pressure::{
    chi_estimate, log_sum_phi, modified_pressure, ordinary_pressure, ChiEstimate, ModifiedPressureEstimate,
    PressureBracket,
};
pub use scalar::Scalar;
pub use solver::{
    pressure_profile, solve_affinity_dimension, solve_shrinking_target_dimension, DimensionKind, DimensionResult,
    ProfileRow, Regime, SolveOptions,
};
pub use svf::{log_phi, matrix_product, singular_values, Matrix, SingularSpectrum, SvfExponent};
pub use symbolic::{LengthSchedule, LimitKind, ScheduleLimit, ScheduleValue, TargetKind, TargetPoint, Word};
pub use tree::TreeConfig;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type AffineSystem64 = AffineSystem<f64>;
pub type AffineSystem32 = AffineSystem<f32>;
pub type PressureBracket64 = PressureBracket<f64>;
pub type DimensionResult64 = DimensionResult<f64>;
