//! Validation reports and CSV dumps of traces and residual rows.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::measure::DevMeasure;
use crate::mesh::{MeshError, QuadMesh};
use crate::optimize::{OptimizeOutcome, RunStatus};
use crate::residuals::{State, System};
use crate::solver::{Termination, Trace};
use crate::tools::gauss_image;

use super::IoError;

/// Developability of one interior face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceReport {
    pub face: usize,
    /// Squared norm of the vector residual.
    pub dev_vector: f64,
    /// Squared determinant residual.
    pub dev_determinant: f64,
    pub gauss_degeneracy: f64,
}

/// Energy of one residual block at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEnergy {
    pub block: String,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub faces: usize,
    pub interior_faces: usize,
    pub per_face: Vec<FaceReport>,
    pub dev_total: f64,
    pub dev_total_determinant: f64,
    /// `dev_total / interior_faces`.
    pub dev_per_face: f64,
    pub dev_per_face_determinant: f64,
    pub dev_max: f64,
    pub dev_median: f64,
    pub gauss_max_degeneracy: f64,
    pub gauss_mean_degeneracy: f64,
    /// Mean normal distance of edge-adjacent faces.
    pub gauss_neighbor_gap: f64,
    /// Block energies of the last trace row.
    pub blocks: Vec<BlockEnergy>,
    /// Largest displacement of a fixed vertex.
    pub max_boundary_drift: Option<f64>,
    pub iterations: Option<usize>,
    pub elapsed_seconds: Option<f64>,
    pub status: Option<RunStatus>,
    pub termination: Option<Termination>,
    pub warnings: Vec<String>,
}

/// Measures a mesh with normals and rulings derived from its vertices.
pub fn validate(mesh: &QuadMesh) -> Result<ValidationReport, MeshError> {
    let dev = DevMeasure::rederived(mesh)?;
    let gauss = gauss_image(mesh)?;
    let per_face: Vec<FaceReport> = dev
        .faces
        .iter()
        .zip(&dev.vector)
        .zip(&dev.determinant)
        .zip(&gauss.degeneracy)
        .map(|(((f, &v), &d), &(gf, g))| {
            debug_assert_eq!(*f, gf);
            FaceReport {
                face: f.idx(),
                dev_vector: v,
                dev_determinant: d,
                gauss_degeneracy: g,
            }
        })
        .collect();
    let n = gauss.degeneracy.len();
    Ok(ValidationReport {
        faces: mesh.face_count(),
        interior_faces: mesh.interior_face_count(),
        per_face,
        dev_total: dev.total(),
        dev_total_determinant: dev.total_determinant(),
        dev_per_face: dev.per_face(),
        dev_per_face_determinant: dev.per_face_determinant(),
        dev_max: dev.max(),
        dev_median: dev.median(),
        gauss_max_degeneracy: gauss.max_degeneracy(),
        gauss_mean_degeneracy: if n == 0 {
            0.0
        } else {
            gauss.degeneracy.iter().map(|&(_, d)| d).sum::<f64>() / n as f64
        },
        gauss_neighbor_gap: gauss.mean_neighbor_gap(mesh),
        blocks: Vec::new(),
        max_boundary_drift: None,
        iterations: None,
        elapsed_seconds: None,
        status: None,
        termination: None,
        warnings: Vec::new(),
    })
}

impl ValidationReport {
    /// Report of an optimization result; `original` and `fixed` give the
    /// boundary drift.
    pub fn of_run(
        outcome: &OptimizeOutcome,
        original: &[Vec3],
        fixed: &[bool],
    ) -> Result<Self, MeshError> {
        let mut r = validate(&outcome.mesh)?;
        if let Some(last) = outcome.trace.rows.last() {
            r.blocks = outcome
                .trace
                .names
                .iter()
                .zip(&last.energies)
                .map(|(b, &e)| BlockEnergy {
                    block: b.clone(),
                    energy: e,
                })
                .collect();
        }
        r.max_boundary_drift = Some(
            outcome
                .mesh
                .positions()
                .iter()
                .zip(original)
                .zip(fixed.iter().chain(std::iter::repeat(&false)))
                .filter(|(_, &f)| f)
                .map(|((a, b), _)| (a - b).norm())
                .fold(0.0, f64::max),
        );
        r.iterations = Some(outcome.iterations);
        r.elapsed_seconds = Some(outcome.elapsed.as_secs_f64());
        r.status = Some(outcome.status);
        r.termination = Some(outcome.termination);
        r.warnings = outcome.warnings.clone();
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-face table.
    pub fn write_csv(&self, w: impl Write) -> Result<(), IoError> {
        let mut out = csv::Writer::from_writer(w);
        for f in &self.per_face {
            out.serialize(f).map_err(|e| IoError::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| IoError::Io(e.to_string()))
    }

    /// Writes CSV for a `.csv` path and JSON otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(file)
        } else {
            let mut w = std::io::BufWriter::new(file);
            w.write_all(self.to_json().as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| IoError::Io(e.to_string()))
        }
    }
}

/// One line per trace row: iteration, total, block energies, damping,
/// acceptance and event.
pub fn write_trace_csv(trace: &Trace, w: impl Write) -> Result<(), IoError> {
    let err = |e: csv::Error| IoError::Io(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string(), "total".to_string()];
    header.extend(trace.names.iter().cloned());
    header.extend(["damping", "accepted", "event"].map(String::from));
    out.write_record(&header).map_err(err)?;
    for row in &trace.rows {
        let mut rec = vec![row.iteration.to_string(), format!("{:e}", row.total)];
        rec.extend(row.energies.iter().map(|e| format!("{e:e}")));
        rec.push(format!("{:e}", row.damping));
        rec.push(row.accepted.to_string());
        rec.push(row.event.clone().unwrap_or_default());
        out.write_record(&rec).map_err(err)?;
    }
    out.flush().map_err(|e| IoError::Io(e.to_string()))
}

/// Every residual row: block, term index, row within the term, raw value
/// and weighted value.
pub fn write_residual_csv(system: &System, state: &State, w: impl Write) -> Result<(), IoError> {
    let err = |e: csv::Error| IoError::Io(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["block", "term", "row", "residual", "weighted"])
        .map_err(err)?;
    for block in &system.blocks {
        let s = block.weight.sqrt();
        for (t, term) in block.terms.iter().enumerate() {
            let rows = System::eval_term(term, state);
            for (k, r) in rows.residual[..term.rows()].iter().enumerate() {
                out.write_record([
                    block.family.name().to_string(),
                    t.to_string(),
                    k.to_string(),
                    format!("{r:e}"),
                    format!("{:e}", s * r),
                ])
                .map_err(err)?;
            }
        }
    }
    out.flush().map_err(|e| IoError::Io(e.to_string()))
}
