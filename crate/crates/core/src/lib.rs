//! Developable quad meshes: per-face developability residuals on
//! checkerboard normals and rulings, a Levenberg-Marquardt optimizer with
//! weight schedules, lofting, gliding, handles, guided approximation,
//! strip decomposition and interactive sessions.

// `!(x > 0.0)` comparisons reject NaN; errors carry their context inline
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::result_large_err)]

pub mod cli;
pub mod geometry;
pub mod io;
pub mod measure;
pub mod mesh;
pub mod optimize;
pub mod residuals;
pub mod session;
pub mod solver;
pub mod sparse;
pub mod tools;
