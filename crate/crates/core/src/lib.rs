//! Numerical extrinsic geometry of codimension-one foliations of
//! (α,β)-metric Finsler spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`phi`] — one-dimensional profile functions φ and their ρ-coefficients,
//! * [`tensor`] — pointwise fundamental tensor `g_y`, its Hessian oracle and
//!   the volume ratio `σ_g`,
//! * [`frame`] — the Finsler normal `n` of a hyperplane and the γ-quantities
//!   attached to it,
//! * [`grid`] / [`calculus`] — periodic chart grids on the torus with
//!   fourth-order finite differences and deterministic quadrature,
//! * [`foliation`] — background shape operator, normal-flow curvature and
//!   deformation tensors,
//! * [`frame_field`] / [`operators`] — the normal frame and the leaf
//!   operators of the perturbed metric `g` as per-node fields, each paired
//!   with a direct connection-based oracle,
//! * [`integrals`] — Reeb-type integral-formula residuals,
//! * [`scenario`] / [`report`] — the analytic scenario catalog, run
//!   orchestration and machine-readable reports.

pub mod calculus;
pub mod error;
pub mod foliation;
pub mod frame;
pub mod frame_field;
pub mod grid;
pub mod integrals;
pub mod operators;
pub mod phi;
pub mod report;
pub mod scenario;
pub mod tensor;

pub use error::CoreError;
pub use frame::{HyperplaneData, PointwiseFrame};
pub use frame_field::FrameField;
pub use grid::{ChartGrid, MetricField, OneFormField, ScalarField, VectorField};
pub use phi::{PhiFamily, RhoCoeffs};
pub use report::{converge, run_scenario, ConvergenceTable, RunReport};
pub use scenario::{Family, Geometry, ScenarioConfig, ScenarioId};
pub use tensor::AlphaBetaPoint;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, CoreError>;
