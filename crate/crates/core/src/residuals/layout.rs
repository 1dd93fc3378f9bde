//! Unknowns of the optimization and their flat index map.

use crate::geometry::Vec3;
use crate::mesh::{build_frames, FaceId, HalfedgeId, MeshError, QuadMesh, VertexId};

/// One 3-vector unknown (or a held-fixed vertex).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarSlot {
    Vertex(VertexId),
    Normal(FaceId),
    Ruling(HalfedgeId),
}

/// Geometric state: vertex positions, face normals and one ruling vector per
/// halfedge (zero on boundary halfedges, which carry no unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub rulings: Vec<Vec3>,
}

impl State {
    /// Initial state: normals from the checkerboard frames, rulings as the
    /// cross product of the normals left and right of each halfedge.
    pub fn from_mesh(mesh: &QuadMesh) -> Result<State, MeshError> {
        let normals: Vec<Vec3> = build_frames(mesh)?.iter().map(|f| f.normal).collect();
        let rulings = exact_rulings(mesh, &normals);
        Ok(State {
            positions: mesh.positions().to_vec(),
            normals,
            rulings,
        })
    }

    pub fn get(&self, slot: VarSlot) -> Vec3 {
        match slot {
            VarSlot::Vertex(v) => self.positions[v.idx()],
            VarSlot::Normal(f) => self.normals[f.idx()],
            VarSlot::Ruling(h) => self.rulings[h.idx()],
        }
    }

    /// Recomputes every ruling from the current normals.
    pub fn rederive_rulings(&mut self, mesh: &QuadMesh) {
        self.rulings = exact_rulings(mesh, &self.normals);
    }
}

/// `n_left x n_right` for every interior halfedge, zero elsewhere.
pub fn exact_rulings(mesh: &QuadMesh, normals: &[Vec3]) -> Vec<Vec3> {
    mesh.halfedges()
        .map(|h| match mesh.right_face(h) {
            Some(r) => normals[h.face().idx()].cross(&normals[r.idx()]),
            None => Vec3::zeros(),
        })
        .collect()
}

const FIXED: u32 = u32::MAX;

/// Bijection between free unknowns and a contiguous flat vector: free vertex
/// coordinates first, then all face normals, then rulings of interior
/// halfedges. Fixed vertices are held constant and get no column.
#[derive(Debug, Clone)]
pub struct VariableLayout {
    vertex_col: Vec<u32>,
    normal_base: usize,
    ruling_col: Vec<u32>,
    len: usize,
}

impl VariableLayout {
    pub fn new(mesh: &QuadMesh, fixed: &[bool]) -> Self {
        let mut col = 0usize;
        let vertex_col = (0..mesh.vertex_count())
            .map(|v| {
                if fixed.get(v).copied().unwrap_or(false) {
                    FIXED
                } else {
                    let c = col as u32;
                    col += 3;
                    c
                }
            })
            .collect();
        let normal_base = col;
        col += 3 * mesh.face_count();
        let ruling_col = mesh
            .halfedges()
            .map(|h| {
                if mesh.is_boundary_halfedge(h) {
                    FIXED
                } else {
                    let c = col as u32;
                    col += 3;
                    c
                }
            })
            .collect();
        VariableLayout {
            vertex_col,
            normal_base,
            ruling_col,
            len: col,
        }
    }

    /// Layout with every vertex free.
    pub fn all_free(mesh: &QuadMesh) -> Self {
        Self::new(mesh, &[])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn vertex_range(&self) -> std::ops::Range<usize> {
        0..self.normal_base
    }

    pub fn normal_range(&self) -> std::ops::Range<usize> {
        self.normal_base..self.normal_base + 3 * self.face_count()
    }

    pub fn ruling_range(&self) -> std::ops::Range<usize> {
        self.normal_base + 3 * self.face_count()..self.len
    }

    fn face_count(&self) -> usize {
        self.ruling_col.len() / 4
    }

    pub fn is_fixed_vertex(&self, v: VertexId) -> bool {
        self.vertex_col[v.idx()] == FIXED
    }

    /// First of the three columns of a slot, `None` for constants.
    #[inline]
    pub fn column(&self, slot: VarSlot) -> Option<usize> {
        let c = match slot {
            VarSlot::Vertex(v) => self.vertex_col[v.idx()],
            VarSlot::Normal(f) => return Some(self.normal_base + 3 * f.idx()),
            VarSlot::Ruling(h) => self.ruling_col[h.idx()],
        };
        (c != FIXED).then_some(c as usize)
    }

    /// Reads a slot from the flat vector, falling back to `state` for constants.
    #[inline]
    pub fn read(&self, x: &[f64], state: &State, slot: VarSlot) -> Vec3 {
        match self.column(slot) {
            Some(c) => Vec3::new(x[c], x[c + 1], x[c + 2]),
            None => state.get(slot),
        }
    }

    pub fn gather(&self, state: &State) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        let mut put = |c: u32, v: &Vec3| {
            if c != FIXED {
                let c = c as usize;
                x[c..c + 3].copy_from_slice(v.as_slice());
            }
        };
        for (c, p) in self.vertex_col.iter().zip(&state.positions) {
            put(*c, p);
        }
        for (f, n) in state.normals.iter().enumerate() {
            put((self.normal_base + 3 * f) as u32, n);
        }
        for (c, r) in self.ruling_col.iter().zip(&state.rulings) {
            put(*c, r);
        }
        x
    }

    /// Writes free unknowns back into `state`; fixed vertices are untouched.
    pub fn scatter(&self, x: &[f64], state: &mut State) {
        let get = |c: usize| Vec3::new(x[c], x[c + 1], x[c + 2]);
        for (c, p) in self.vertex_col.iter().zip(state.positions.iter_mut()) {
            if *c != FIXED {
                *p = get(*c as usize);
            }
        }
        for (f, n) in state.normals.iter_mut().enumerate() {
            *n = get(self.normal_base + 3 * f);
        }
        for (c, r) in self.ruling_col.iter().zip(state.rulings.iter_mut()) {
            if *c != FIXED {
                *r = get(*c as usize);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use crate::mesh::Grid;

    #[test]
    fn torus_has_eighteen_unknowns_per_face() {
        let g = Grid::from_fn(6, 8, true, true, |i, j| {
            let u = j as f64 / 8.0 * std::f64::consts::TAU;
            let v = i as f64 / 6.0 * std::f64::consts::TAU;
            let r = 3.0 + v.cos();
            vec3(r * u.cos(), r * u.sin(), v.sin())
        })
        .unwrap();
        let m = g.mesh();
        assert_eq!(m.vertex_count(), m.face_count());
        let layout = VariableLayout::all_free(m);
        assert_eq!(layout.len(), 18 * m.face_count());
    }

    #[test]
    fn open_grid_count_and_roundtrip() {
        let g = Grid::planar(4, 5, 1.0);
        let m = g.mesh();
        let interior = m.interior_halfedges().count();
        let layout = VariableLayout::all_free(m);
        assert_eq!(
            layout.len(),
            3 * m.vertex_count() + 3 * m.face_count() + 3 * interior
        );

        let mut fixed = vec![false; m.vertex_count()];
        fixed[0] = true;
        fixed[7] = true;
        let layout = VariableLayout::new(m, &fixed);
        assert_eq!(
            layout.len(),
            3 * (m.vertex_count() - 2) + 3 * m.face_count() + 3 * interior
        );
        let state = State::from_mesh(m).unwrap();
        let x = layout.gather(&state);
        let mut back = state.clone();
        back.positions
            .iter_mut()
            .for_each(|p| *p += vec3(1.0, 1.0, 1.0));
        layout.scatter(&x, &mut back);
        assert_eq!(back.positions[1], state.positions[1]);
        assert_eq!(back.positions[0], state.positions[0] + vec3(1.0, 1.0, 1.0));
        assert_eq!(back.normals, state.normals);
    }
}
