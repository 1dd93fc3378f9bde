//! Files: OBJ meshes and line sets, TOML job configs, validation reports and
//! CSV dumps.

pub mod config;
pub mod obj;
pub mod report;

use thiserror::Error;

use crate::mesh::MeshError;

pub use config::{
    FixedSpec, GlideSpec, HandleSpec, JobConfig, LoftSpec, OutputSpec, ReferenceSpec, StripSpec,
    SCHEMA_VERSION,
};
pub use obj::{
    load_mesh, load_obj, parse_obj, quad_mesh_from_obj, read_quad_mesh, save_line_set, save_mesh,
    write_line_set, write_quad_mesh, ObjData,
};
pub use report::{
    validate, write_residual_csv, write_trace_csv, BlockEnergy, FaceReport, ValidationReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("config: {0}")]
    Config(String),
}
