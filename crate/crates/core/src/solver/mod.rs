//! Levenberg-Marquardt minimization, weight schedules and constrained
//! minimization by tangent-space projection.

mod lm;
mod problem;
mod projection;
mod schedule;

pub use lm::{
    lm_minimize, window_stagnated, LmConfig, LmResult, LmSolver, Problem, Step, Termination, Trace,
    TraceRow, Update,
};
pub use problem::{NormalRefresh, RoundHook, SystemProblem};
pub use projection::{
    constrained_minimize, max_weighted_row, project_tangent, ConstrainedResult, ConstrainedStatus,
    OuterRecord, Projected, ProjectionConfig,
};
pub use schedule::{schedule_weights, trace_stagnated, ScheduleDecision, Stage};

use thiserror::Error;

use crate::mesh::MeshError;
use crate::residuals::ResidualError;
use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("normal equations could not be solved: {0}")]
    LinearSolveFailure(SparseError),
    #[error("non-finite residual (row {row})")]
    NonFiniteResidual { row: usize },
    #[error("tangent projection left orthogonality error {orthogonality:e}")]
    GramSingular { orthogonality: f64 },
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
