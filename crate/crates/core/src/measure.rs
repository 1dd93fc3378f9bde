//! Developability measures of a mesh or an optimization state.

use serde::Serialize;

use crate::mesh::{FaceId, MeshError, QuadMesh};
use crate::residuals::{dev_residual, dev_residual_det, face_cycle, State};

/// Squared developability residual of every interior face, in both the
/// vector and the determinant form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevMeasure {
    pub faces: Vec<FaceId>,
    pub vector: Vec<f64>,
    pub determinant: Vec<f64>,
}

fn median_of(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl DevMeasure {
    /// Uses the normals and rulings stored in `state`.
    pub fn from_state(mesh: &QuadMesh, state: &State) -> Self {
        let faces: Vec<FaceId> = mesh
            .face_ids()
            .filter(|&f| mesh.is_interior_face(f))
            .collect();
        let mut vector = Vec::with_capacity(faces.len());
        let mut determinant = Vec::with_capacity(faces.len());
        for &f in &faces {
            let r = face_cycle(f).map(|h| state.rulings[h.idx()]);
            vector.push(dev_residual(r).norm_squared());
            determinant.push(dev_residual_det(r, state.normals[f.idx()]).powi(2));
        }
        DevMeasure {
            faces,
            vector,
            determinant,
        }
    }

    /// Re-derives normals from the vertex positions and rulings from the
    /// normals before measuring.
    pub fn rederived(mesh: &QuadMesh) -> Result<Self, MeshError> {
        Ok(Self::from_state(mesh, &State::from_mesh(mesh)?))
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Sum over interior faces; `+0.0` when there are none.
    pub fn total(&self) -> f64 {
        self.vector.iter().fold(0.0, |a, b| a + b)
    }

    pub fn total_determinant(&self) -> f64 {
        self.determinant.iter().fold(0.0, |a, b| a + b)
    }

    /// Total divided by the number of interior faces.
    pub fn per_face(&self) -> f64 {
        if self.faces.is_empty() {
            0.0
        } else {
            self.total() / self.faces.len() as f64
        }
    }

    pub fn per_face_determinant(&self) -> f64 {
        if self.faces.is_empty() {
            0.0
        } else {
            self.total_determinant() / self.faces.len() as f64
        }
    }

    pub fn max(&self) -> f64 {
        self.vector.iter().copied().fold(0.0, f64::max)
    }

    pub fn median(&self) -> f64 {
        median_of(&self.vector)
    }
}
