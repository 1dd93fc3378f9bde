//! Quad meshes with halfedge connectivity.
//!
//! Every face owns four halfedges: halfedge `4 * f + i` runs from corner `i`
//! to corner `i + 1` of face `f`, so the face lies to its left. Interior
//! halfedges are paired with an opposite halfedge of the neighbouring face;
//! boundary halfedges have none. Connectivity is fixed once the mesh is
//! built; only vertex positions change during optimization.

mod frame;
mod grid;
mod polylines;

pub use frame::{
    build_frame, build_frames, orient_and_refresh_normals, CheckerboardFrame, RefreshStats,
    DEGENERATE_FACE_TOLERANCE,
};
pub use grid::Grid;
pub use polylines::{trace_polylines, FaceStrip, Polyline, Polylines};

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{Aabb, Vec3};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn idx(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            #[inline]
            fn from(i: usize) -> Self {
                $name(i as u32)
            }
        }
    };
}

id_type!(
    /// Index of a vertex.
    VertexId
);
id_type!(
    /// Index of a quad face.
    FaceId
);
id_type!(
    /// Index of a halfedge (`4 * face + corner`).
    HalfedgeId
);

impl HalfedgeId {
    #[inline]
    pub fn face(self) -> FaceId {
        FaceId(self.0 / 4)
    }

    /// Position of this halfedge in its face's boundary cycle.
    #[inline]
    pub fn corner(self) -> usize {
        (self.0 % 4) as usize
    }

    #[inline]
    pub fn next(self) -> HalfedgeId {
        HalfedgeId((self.0 & !3) | ((self.0 + 1) & 3))
    }

    #[inline]
    pub fn prev(self) -> HalfedgeId {
        HalfedgeId((self.0 & !3) | ((self.0 + 3) & 3))
    }

    #[inline]
    pub fn of(face: FaceId, corner: usize) -> HalfedgeId {
        HalfedgeId(face.0 * 4 + (corner as u32 & 3))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("face {face} has {count} vertices, only quads are supported")]
    NonQuadFace { face: usize, count: usize },
    #[error("face {face} repeats vertex {vertex}")]
    RepeatedVertex { face: usize, vertex: usize },
    #[error("face {face} references vertex {vertex}, but the mesh has {vertex_count} vertices")]
    VertexOutOfRange {
        face: usize,
        vertex: usize,
        vertex_count: usize,
    },
    #[error("edge {from}->{to} is traversed in the same direction by faces {first} and {second}")]
    InconsistentOrientation {
        from: usize,
        to: usize,
        first: usize,
        second: usize,
    },
    #[error("edge {a}-{b} is shared by more than two faces ({faces:?})")]
    NonManifoldEdge {
        a: usize,
        b: usize,
        faces: Vec<usize>,
    },
    #[error("vertex {vertex} has a non-manifold neighbourhood")]
    NonManifoldVertex { vertex: usize },
    #[error("face {face} is degenerate: diagonal cross product {cross_norm:e} below tolerance {tolerance:e}")]
    DegenerateFace {
        face: usize,
        cross_norm: f64,
        tolerance: f64,
    },
    #[error("non-finite coordinate at vertex {vertex}")]
    NonFinite { vertex: usize },
    #[error("expected {expected} positions, got {got}")]
    PositionCount { expected: usize, got: usize },
}

/// Ordered one-ring of a vertex.
#[derive(Debug, Clone, Default)]
pub struct VertexRing {
    /// Neighbours in rotational order. For boundary vertices the first and
    /// last entries are the two boundary neighbours.
    pub neighbors: Vec<VertexId>,
    pub face_count: usize,
    pub boundary: bool,
}

impl VertexRing {
    pub fn valence(&self) -> usize {
        self.neighbors.len()
    }
}

/// A quad mesh with halfedge connectivity.
#[derive(Debug, Clone)]
pub struct QuadMesh {
    positions: Vec<Vec3>,
    faces: Vec<[VertexId; 4]>,
    opposite: Vec<Option<HalfedgeId>>,
    rings: Vec<VertexRing>,
    singular: Vec<bool>,
    edge_lookup: HashMap<(u32, u32), HalfedgeId>,
}

impl QuadMesh {
    /// Builds connectivity for the given vertices and faces.
    ///
    /// Faces must be consistently oriented quads with four distinct
    /// vertices; every edge may be shared by at most two faces.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        let nv = positions.len();
        for (i, p) in positions.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(MeshError::NonFinite { vertex: i });
            }
        }
        let mut quad_faces = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter().enumerate() {
            for (k, &v) in face.iter().enumerate() {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange {
                        face: f,
                        vertex: v,
                        vertex_count: nv,
                    });
                }
                if face[..k].contains(&v) {
                    return Err(MeshError::RepeatedVertex { face: f, vertex: v });
                }
            }
            quad_faces.push(face.map(VertexId::from));
        }

        // Directed edge -> halfedge.
        let mut edge_lookup: HashMap<(u32, u32), HalfedgeId> =
            HashMap::with_capacity(faces.len() * 4);
        let mut undirected: HashMap<(u32, u32), Vec<usize>> =
            HashMap::with_capacity(faces.len() * 2);
        for (f, face) in quad_faces.iter().enumerate() {
            for i in 0..4 {
                let a = face[i].0;
                let b = face[(i + 1) % 4].0;
                let key = (a.min(b), a.max(b));
                undirected.entry(key).or_default().push(f);
                let h = HalfedgeId::of(FaceId(f as u32), i);
                if let Some(prev) = edge_lookup.insert((a, b), h) {
                    let inc = &undirected[&key];
                    if inc.len() > 2 {
                        return Err(MeshError::NonManifoldEdge {
                            a: key.0 as usize,
                            b: key.1 as usize,
                            faces: inc.clone(),
                        });
                    }
                    return Err(MeshError::InconsistentOrientation {
                        from: a as usize,
                        to: b as usize,
                        first: prev.face().idx(),
                        second: f,
                    });
                }
            }
        }
        let mut keys: Vec<_> = undirected.iter().filter(|(_, fs)| fs.len() > 2).collect();
        keys.sort_by_key(|(k, _)| **k);
        if let Some((k, fs)) = keys.first() {
            return Err(MeshError::NonManifoldEdge {
                a: k.0 as usize,
                b: k.1 as usize,
                faces: (*fs).clone(),
            });
        }

        let mut opposite = vec![None; quad_faces.len() * 4];
        for (f, face) in quad_faces.iter().enumerate() {
            for i in 0..4 {
                let a = face[i].0;
                let b = face[(i + 1) % 4].0;
                opposite[f * 4 + i] = edge_lookup.get(&(b, a)).copied();
            }
        }

        let mut mesh = QuadMesh {
            positions,
            faces: quad_faces,
            opposite,
            rings: Vec::new(),
            singular: Vec::new(),
            edge_lookup,
        };
        mesh.build_rings()?;
        Ok(mesh)
    }

    fn build_rings(&mut self) -> Result<(), MeshError> {
        let nv = self.positions.len();
        let mut outgoing: Vec<Vec<HalfedgeId>> = vec![Vec::new(); nv];
        for h in 0..self.faces.len() * 4 {
            let h = HalfedgeId(h as u32);
            outgoing[self.origin(h).idx()].push(h);
        }
        let mut rings = Vec::with_capacity(nv);
        let mut singular = vec![false; nv];
        for (v, outs) in outgoing.iter().enumerate() {
            if outs.is_empty() {
                rings.push(VertexRing::default());
                continue;
            }
            let starts: Vec<HalfedgeId> = outs
                .iter()
                .copied()
                .filter(|&h| self.opposite[h.idx()].is_none())
                .collect();
            if starts.len() > 1 {
                return Err(MeshError::NonManifoldVertex { vertex: v });
            }
            let boundary = !starts.is_empty();
            let start = starts.first().copied().unwrap_or(outs[0]);
            let mut neighbors = Vec::with_capacity(outs.len() + 1);
            let mut h = start;
            let mut visited = 0;
            loop {
                neighbors.push(self.target(h));
                visited += 1;
                let p = h.prev();
                match self.opposite[p.idx()] {
                    Some(o) => {
                        h = o;
                        if h == start {
                            break;
                        }
                    }
                    None => {
                        neighbors.push(self.origin(p));
                        break;
                    }
                }
                if visited > outs.len() {
                    return Err(MeshError::NonManifoldVertex { vertex: v });
                }
            }
            if visited != outs.len() {
                return Err(MeshError::NonManifoldVertex { vertex: v });
            }
            if !boundary && neighbors.len() != 4 {
                singular[v] = true;
            }
            rings.push(VertexRing {
                neighbors,
                face_count: outs.len(),
                boundary,
            });
        }
        self.rings = rings;
        self.singular = singular;
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn halfedge_count(&self) -> usize {
        self.faces.len() * 4
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn position(&self, v: VertexId) -> Vec3 {
        self.positions[v.idx()]
    }

    /// Replaces all vertex positions; connectivity is untouched.
    pub fn set_positions(&mut self, positions: Vec<Vec3>) -> Result<(), MeshError> {
        if positions.len() != self.positions.len() {
            return Err(MeshError::PositionCount {
                expected: self.positions.len(),
                got: positions.len(),
            });
        }
        self.positions = positions;
        Ok(())
    }

    pub fn positions_mut(&mut self) -> &mut [Vec3] {
        &mut self.positions
    }

    pub fn faces(&self) -> &[[VertexId; 4]] {
        &self.faces
    }

    pub fn face(&self, f: FaceId) -> [VertexId; 4] {
        self.faces[f.idx()]
    }

    pub fn face_positions(&self, f: FaceId) -> [Vec3; 4] {
        self.faces[f.idx()].map(|v| self.positions[v.idx()])
    }

    pub fn origin(&self, h: HalfedgeId) -> VertexId {
        self.faces[h.face().idx()][h.corner()]
    }

    pub fn target(&self, h: HalfedgeId) -> VertexId {
        self.faces[h.face().idx()][(h.corner() + 1) % 4]
    }

    pub fn opposite(&self, h: HalfedgeId) -> Option<HalfedgeId> {
        self.opposite[h.idx()]
    }

    pub fn is_boundary_halfedge(&self, h: HalfedgeId) -> bool {
        self.opposite[h.idx()].is_none()
    }

    /// Face on the right of `h` (the face of its opposite).
    pub fn right_face(&self, h: HalfedgeId) -> Option<FaceId> {
        self.opposite[h.idx()].map(HalfedgeId::face)
    }

    pub fn halfedges(&self) -> impl Iterator<Item = HalfedgeId> + '_ {
        (0..self.halfedge_count() as u32).map(HalfedgeId)
    }

    /// Halfedges with faces on both sides.
    pub fn interior_halfedges(&self) -> impl Iterator<Item = HalfedgeId> + '_ {
        self.halfedges()
            .filter(|h| self.opposite[h.idx()].is_some())
    }

    pub fn find_halfedge(&self, from: VertexId, to: VertexId) -> Option<HalfedgeId> {
        self.edge_lookup.get(&(from.0, to.0)).copied()
    }

    /// Halfedge between `a` and `b` in either direction.
    pub fn find_edge(&self, a: VertexId, b: VertexId) -> Option<HalfedgeId> {
        self.find_halfedge(a, b)
            .or_else(|| self.find_halfedge(b, a))
    }

    /// Neighbouring face across local edge `corner` of face `f`.
    pub fn neighbor(&self, f: FaceId, corner: usize) -> Option<FaceId> {
        self.right_face(HalfedgeId::of(f, corner))
    }

    /// True when all four edges of the face are interior.
    pub fn is_interior_face(&self, f: FaceId) -> bool {
        (0..4).all(|i| self.opposite[f.idx() * 4 + i].is_some())
    }

    pub fn interior_face_count(&self) -> usize {
        (0..self.faces.len())
            .filter(|&f| self.is_interior_face(FaceId(f as u32)))
            .count()
    }

    pub fn ring(&self, v: VertexId) -> &VertexRing {
        &self.rings[v.idx()]
    }

    pub fn is_boundary_vertex(&self, v: VertexId) -> bool {
        self.rings[v.idx()].boundary
    }

    pub fn boundary_vertices(&self) -> Vec<VertexId> {
        (0..self.vertex_count())
            .filter(|&v| self.rings[v].boundary)
            .map(VertexId::from)
            .collect()
    }

    /// Interior vertices whose valence differs from four.
    pub fn is_singular(&self, v: VertexId) -> bool {
        self.singular[v.idx()]
    }

    pub fn singular_vertices(&self) -> Vec<VertexId> {
        (0..self.vertex_count())
            .filter(|&v| self.singular[v])
            .map(VertexId::from)
            .collect()
    }

    /// Continues a mesh polyline arriving at `v` from `from`.
    ///
    /// At regular interior vertices this is the neighbour across from
    /// `from`; along the boundary a valence-3 vertex passes the polyline
    /// on to the other boundary neighbour. Everywhere else the polyline ends.
    pub fn straight_continuation(&self, from: VertexId, v: VertexId) -> Option<VertexId> {
        let ring = &self.rings[v.idx()];
        let k = ring.neighbors.iter().position(|&u| u == from)?;
        if !ring.boundary {
            if ring.neighbors.len() == 4 {
                return Some(ring.neighbors[(k + 2) % 4]);
            }
            return None;
        }
        if ring.neighbors.len() == 3 && ring.face_count == 2 {
            return match k {
                0 => Some(ring.neighbors[2]),
                2 => Some(ring.neighbors[0]),
                _ => None,
            };
        }
        None
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.positions.iter())
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for h in self.halfedges() {
            let o = self.opposite[h.idx()];
            if o.is_none_or(|o| o.0 > h.0) {
                total += (self.position(self.target(h)) - self.position(self.origin(h))).norm();
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Vertex centroid of a face.
    pub fn face_centroid(&self, f: FaceId) -> Vec3 {
        let p = self.face_positions(f);
        (p[0] + p[1] + p[2] + p[3]) * 0.25
    }

    pub fn face_ids(&self) -> impl Iterator<Item = FaceId> + '_ {
        (0..self.faces.len() as u32).map(FaceId)
    }

    /// Faces as plain index quadruples.
    pub fn face_indices(&self) -> Vec<[usize; 4]> {
        self.faces.iter().map(|f| f.map(|v| v.idx())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;

    fn two_quads() -> (Vec<Vec3>, Vec<[usize; 4]>) {
        let p = vec![
            vec3(0.0, 0.0, 0.0),
            vec3(1.0, 0.0, 0.0),
            vec3(2.0, 0.0, 0.0),
            vec3(0.0, 1.0, 0.0),
            vec3(1.0, 1.0, 0.0),
            vec3(2.0, 1.0, 0.0),
        ];
        (p, vec![[0, 1, 4, 3], [1, 2, 5, 4]])
    }

    #[test]
    fn halfedge_links() {
        let (p, f) = two_quads();
        let m = QuadMesh::new(p, f).unwrap();
        assert_eq!(m.halfedge_count(), 8);
        let h = m.find_halfedge(VertexId(1), VertexId(4)).unwrap();
        let o = m.opposite(h).unwrap();
        assert_eq!(m.origin(o), VertexId(4));
        assert_eq!(m.target(o), VertexId(1));
        assert_eq!(m.opposite(o), Some(h));
        assert_eq!(m.interior_halfedges().count(), 2);
        assert_eq!(h.next().prev(), h);
        assert_eq!(m.interior_face_count(), 0);
        assert!(m.singular_vertices().is_empty());
    }

    #[test]
    fn same_direction_edge_is_inconsistent() {
        let (p, _) = two_quads();
        // Second face reversed: edge 1->4 used twice.
        let err = QuadMesh::new(p, vec![[0, 1, 4, 3], [1, 4, 5, 2]]).unwrap_err();
        assert!(
            matches!(err, MeshError::InconsistentOrientation { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn repeated_and_out_of_range_vertices() {
        let (p, _) = two_quads();
        assert!(matches!(
            QuadMesh::new(p.clone(), vec![[0, 1, 1, 3]]),
            Err(MeshError::RepeatedVertex { face: 0, vertex: 1 })
        ));
        assert!(matches!(
            QuadMesh::new(p, vec![[0, 1, 4, 9]]),
            Err(MeshError::VertexOutOfRange { vertex: 9, .. })
        ));
    }

    #[test]
    fn three_faces_on_an_edge() {
        let mut p = two_quads().0;
        p.push(vec3(1.0, 0.5, 1.0));
        p.push(vec3(1.0, 0.5, -1.0));
        let err = QuadMesh::new(p, vec![[0, 1, 4, 3], [4, 1, 2, 5], [1, 4, 6, 7]]).unwrap_err();
        assert!(
            matches!(
                err,
                MeshError::NonManifoldEdge { .. } | MeshError::InconsistentOrientation { .. }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn grid_rings_and_continuation() {
        let g = Grid::planar(3, 3, 1.0);
        let m = g.mesh();
        let center = g.vertex(1, 1);
        assert_eq!(m.ring(center).valence(), 4);
        assert!(!m.is_boundary_vertex(center));
        let left = g.vertex(1, 0);
        assert_eq!(m.straight_continuation(left, center), Some(g.vertex(1, 2)));
        // boundary vertex in the middle of the bottom row
        let b = g.vertex(0, 1);
        assert_eq!(
            m.straight_continuation(g.vertex(0, 0), b),
            Some(g.vertex(0, 2))
        );
        assert_eq!(m.straight_continuation(center, b), None);
    }
}
