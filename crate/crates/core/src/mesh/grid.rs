use crate::geometry::{vec3, Vec3};

use super::{FaceId, MeshError, QuadMesh, VertexId};

/// A structured quad grid: `rows x cols` vertices, optionally periodic in
/// either direction. Vertex `(i, j)` has index `i * cols + j`; `j` runs along
/// a row ("u"), `i` across rows ("v").
#[derive(Debug, Clone)]
pub struct Grid {
    rows: usize,
    cols: usize,
    closed_u: bool,
    closed_v: bool,
    mesh: QuadMesh,
}

impl Grid {
    pub fn from_fn(
        rows: usize,
        cols: usize,
        closed_u: bool,
        closed_v: bool,
        mut point: impl FnMut(usize, usize) -> Vec3,
    ) -> Result<Self, MeshError> {
        let mut positions = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                positions.push(point(i, j));
            }
        }
        Self::from_positions(rows, cols, closed_u, closed_v, positions)
    }

    pub fn from_positions(
        rows: usize,
        cols: usize,
        closed_u: bool,
        closed_v: bool,
        positions: Vec<Vec3>,
    ) -> Result<Self, MeshError> {
        let frows = if closed_v {
            rows
        } else {
            rows.saturating_sub(1)
        };
        let fcols = if closed_u {
            cols
        } else {
            cols.saturating_sub(1)
        };
        let idx = |i: usize, j: usize| (i % rows) * cols + (j % cols);
        let mut faces = Vec::with_capacity(frows * fcols);
        for i in 0..frows {
            for j in 0..fcols {
                faces.push([idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j)]);
            }
        }
        let mesh = QuadMesh::new(positions, faces)?;
        Ok(Grid {
            rows,
            cols,
            closed_u,
            closed_v,
            mesh,
        })
    }

    /// Flat grid in the z = 0 plane with the given spacing.
    pub fn planar(rows: usize, cols: usize, spacing: f64) -> Self {
        Self::from_fn(rows, cols, false, false, |i, j| {
            vec3(j as f64 * spacing, i as f64 * spacing, 0.0)
        })
        .expect("planar grid is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn closed_u(&self) -> bool {
        self.closed_u
    }

    pub fn closed_v(&self) -> bool {
        self.closed_v
    }

    pub fn face_rows(&self) -> usize {
        if self.closed_v {
            self.rows
        } else {
            self.rows - 1
        }
    }

    pub fn face_cols(&self) -> usize {
        if self.closed_u {
            self.cols
        } else {
            self.cols - 1
        }
    }

    pub fn vertex(&self, i: usize, j: usize) -> VertexId {
        VertexId(((i % self.rows) * self.cols + (j % self.cols)) as u32)
    }

    pub fn face(&self, i: usize, j: usize) -> FaceId {
        FaceId((i * self.face_cols() + j) as u32)
    }

    pub fn row(&self, i: usize) -> Vec<VertexId> {
        (0..self.cols).map(|j| self.vertex(i, j)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<VertexId> {
        (0..self.rows).map(|i| self.vertex(i, j)).collect()
    }

    pub fn row_positions(&self, i: usize) -> Vec<Vec3> {
        self.row(i)
            .into_iter()
            .map(|v| self.mesh.position(v))
            .collect()
    }

    pub fn mesh(&self) -> &QuadMesh {
        &self.mesh
    }

    pub fn mesh_mut(&mut self) -> &mut QuadMesh {
        &mut self.mesh
    }

    pub fn into_mesh(self) -> QuadMesh {
        self.mesh
    }

    /// Same grid structure with new positions (row-major).
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Grid, MeshError> {
        let mut g = self.clone();
        g.mesh.set_positions(positions)?;
        Ok(g)
    }

    /// Boundary vertices of all non-periodic sides.
    pub fn boundary_vertices(&self) -> Vec<VertexId> {
        self.mesh.boundary_vertices()
    }
}
