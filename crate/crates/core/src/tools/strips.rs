//! Decomposition of a quad mesh into strips along designer-chosen edge
//! polylines. Vertices on the cut polylines are fixed in every strip that
//! contains them, so strips can be optimized independently.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::{FaceId, HalfedgeId, MeshError, QuadMesh, VertexId};

/// Narrowest strip accepted, in faces across.
pub const MIN_STRIP_WIDTH: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StripError {
    #[error("cut polyline {polyline} has fewer than two vertices")]
    ShortPolyline { polyline: usize },
    #[error("cut polyline {polyline}: vertices {a} and {b} are not joined by a mesh edge")]
    NotAnEdge { polyline: usize, a: usize, b: usize },
    #[error("vertex {vertex} is out of range")]
    VertexOutOfRange { vertex: usize },
    #[error("cut polyline {polyline} does not separate the faces on its two sides")]
    NonSeparating { polyline: usize },
    #[error("strip {strip} is {width} faces wide, at least {min} are required")]
    StripTooNarrow {
        strip: usize,
        width: usize,
        min: usize,
    },
    #[error("face {face} is listed in strips {first} and {second}")]
    OverlappingStrips {
        face: usize,
        first: usize,
        second: usize,
    },
    #[error("face {face} is out of range")]
    FaceOutOfRange { face: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// One strip as a standalone mesh.
#[derive(Debug, Clone)]
pub struct Strip {
    /// Faces of the original mesh, in submesh order.
    pub faces: Vec<FaceId>,
    /// `vertices[i]` is the original vertex of submesh vertex `i`.
    pub vertices: Vec<VertexId>,
    pub mesh: QuadMesh,
    /// Submesh vertices on a cut polyline.
    pub fixed: Vec<bool>,
    /// Faces across the strip, measured from its cut edges.
    pub width: usize,
}

/// Strips covering every face of a mesh exactly once.
#[derive(Debug, Clone)]
pub struct StripDecomposition {
    pub strips: Vec<Strip>,
    /// Original vertices shared by two or more strips, ascending.
    pub shared: Vec<VertexId>,
}

/// Text form of a decomposition: face groups and fixed vertices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripSidecar {
    pub strips: Vec<Vec<usize>>,
    pub fixed: Vec<usize>,
}

fn edge_key(a: VertexId, b: VertexId) -> (u32, u32) {
    (a.0.min(b.0), a.0.max(b.0))
}

fn halfedge_key(mesh: &QuadMesh, h: HalfedgeId) -> (u32, u32) {
    edge_key(mesh.origin(h), mesh.target(h))
}

/// Splits `mesh` along `cuts`, each a vertex sequence following mesh edges.
pub fn decompose_strips(
    mesh: &QuadMesh,
    cuts: &[Vec<VertexId>],
) -> Result<StripDecomposition, StripError> {
    let mut cut_edges: HashMap<(u32, u32), usize> = HashMap::new();
    for (i, cut) in cuts.iter().enumerate() {
        if cut.len() < 2 {
            return Err(StripError::ShortPolyline { polyline: i });
        }
        if let Some(v) = cut.iter().find(|v| v.idx() >= mesh.vertex_count()) {
            return Err(StripError::VertexOutOfRange { vertex: v.idx() });
        }
        for w in cut.windows(2) {
            if mesh.find_edge(w[0], w[1]).is_none() {
                return Err(StripError::NotAnEdge {
                    polyline: i,
                    a: w[0].idx(),
                    b: w[1].idx(),
                });
            }
            cut_edges.insert(edge_key(w[0], w[1]), i);
        }
    }
    let component = label_components(mesh, &cut_edges);
    for (i, cut) in cuts.iter().enumerate() {
        let mut interior = 0;
        for w in cut.windows(2) {
            let h = mesh.find_edge(w[0], w[1]).expect("checked above");
            if let Some(o) = mesh.opposite(h) {
                interior += 1;
                if component[h.face().idx()] == component[o.face().idx()] {
                    return Err(StripError::NonSeparating { polyline: i });
                }
            }
        }
        if interior == 0 {
            return Err(StripError::NonSeparating { polyline: i });
        }
    }
    let count = component.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); count];
    for (f, &c) in component.iter().enumerate() {
        groups[c].push(FaceId(f as u32));
    }
    let on_cut: HashSet<VertexId> = cuts.iter().flatten().copied().collect();
    build(mesh, groups, |v| on_cut.contains(&v), &cut_edges)
}

fn label_components(mesh: &QuadMesh, cut_edges: &HashMap<(u32, u32), usize>) -> Vec<usize> {
    let mut component = vec![usize::MAX; mesh.face_count()];
    let mut next = 0;
    for seed in 0..mesh.face_count() {
        if component[seed] != usize::MAX {
            continue;
        }
        component[seed] = next;
        let mut stack = vec![FaceId(seed as u32)];
        while let Some(f) = stack.pop() {
            for corner in 0..4 {
                let h = HalfedgeId::of(f, corner);
                if cut_edges.contains_key(&halfedge_key(mesh, h)) {
                    continue;
                }
                if let Some(g) = mesh.opposite(h).map(|o| o.face()) {
                    if component[g.idx()] == usize::MAX {
                        component[g.idx()] = next;
                        stack.push(g);
                    }
                }
            }
        }
        next += 1;
    }
    component
}

/// Faces crossed by the narrowest straight face walk that enters the strip
/// through a cut edge; `None` when the strip touches no cut.
fn strip_width(
    mesh: &QuadMesh,
    member: &[bool],
    cut_edges: &HashMap<(u32, u32), usize>,
) -> Option<usize> {
    let leaves = |h: HalfedgeId| {
        cut_edges.contains_key(&halfedge_key(mesh, h))
            || mesh.opposite(h).is_none_or(|o| !member[o.face().idx()])
    };
    let mut width: Option<usize> = None;
    for f in (0..mesh.face_count()).filter(|&f| member[f]) {
        for corner in 0..4 {
            let entry = HalfedgeId::of(FaceId(f as u32), corner);
            if !cut_edges.contains_key(&halfedge_key(mesh, entry)) {
                continue;
            }
            let mut h = entry;
            let mut n = 1;
            loop {
                let exit = h.next().next();
                if leaves(exit) || n > mesh.face_count() {
                    break;
                }
                h = mesh.opposite(exit).expect("interior by `leaves`");
                n += 1;
            }
            width = Some(width.map_or(n, |w| w.min(n)));
        }
    }
    width
}

fn build(
    mesh: &QuadMesh,
    groups: Vec<Vec<FaceId>>,
    fixed: impl Fn(VertexId) -> bool,
    cut_edges: &HashMap<(u32, u32), usize>,
) -> Result<StripDecomposition, StripError> {
    let mut strips = Vec::with_capacity(groups.len());
    let mut uses = vec![0usize; mesh.vertex_count()];
    for (s, faces) in groups.into_iter().enumerate() {
        let mut member = vec![false; mesh.face_count()];
        for f in &faces {
            member[f.idx()] = true;
        }
        let width = strip_width(mesh, &member, cut_edges).unwrap_or(usize::MAX);
        if width < MIN_STRIP_WIDTH {
            return Err(StripError::StripTooNarrow {
                strip: s,
                width,
                min: MIN_STRIP_WIDTH,
            });
        }
        let mut local = HashMap::new();
        let mut vertices = Vec::new();
        let mut quads = Vec::with_capacity(faces.len());
        for &f in &faces {
            let q = mesh.face(f).map(|v| {
                *local.entry(v).or_insert_with(|| {
                    vertices.push(v);
                    vertices.len() - 1
                })
            });
            quads.push(q);
        }
        for v in &vertices {
            uses[v.idx()] += 1;
        }
        let positions: Vec<Vec3> = vertices.iter().map(|&v| mesh.position(v)).collect();
        let sub = QuadMesh::new(positions, quads)?;
        strips.push(Strip {
            fixed: vertices.iter().map(|&v| fixed(v)).collect(),
            faces,
            vertices,
            mesh: sub,
            width,
        });
    }
    let shared = (0..mesh.vertex_count())
        .filter(|&v| uses[v] > 1)
        .map(|v| VertexId(v as u32))
        .collect();
    Ok(StripDecomposition { strips, shared })
}

impl StripDecomposition {
    /// Rebuilds a decomposition from its text form. Listed fixed vertices
    /// are fixed in every strip; widths are measured across edges between
    /// different strips.
    pub fn from_sidecar(mesh: &QuadMesh, sidecar: &StripSidecar) -> Result<Self, StripError> {
        let mut owner = vec![usize::MAX; mesh.face_count()];
        for (s, group) in sidecar.strips.iter().enumerate() {
            for &f in group {
                if f >= mesh.face_count() {
                    return Err(StripError::FaceOutOfRange { face: f });
                }
                if owner[f] != usize::MAX {
                    return Err(StripError::OverlappingStrips {
                        face: f,
                        first: owner[f],
                        second: s,
                    });
                }
                owner[f] = s;
            }
        }
        if let Some(f) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(StripError::FaceOutOfRange { face: f });
        }
        if let Some(&v) = sidecar.fixed.iter().find(|&&v| v >= mesh.vertex_count()) {
            return Err(StripError::VertexOutOfRange { vertex: v });
        }
        let mut cut_edges = HashMap::new();
        for h in mesh.interior_halfedges() {
            let o = mesh.opposite(h).expect("interior");
            if owner[h.face().idx()] != owner[o.face().idx()] {
                cut_edges.insert(halfedge_key(mesh, h), 0);
            }
        }
        let fixed: HashSet<usize> = sidecar.fixed.iter().copied().collect();
        let groups = sidecar
            .strips
            .iter()
            .map(|g| g.iter().map(|&f| FaceId(f as u32)).collect())
            .collect();
        build(mesh, groups, |v| fixed.contains(&v.idx()), &cut_edges)
    }

    pub fn to_sidecar(&self) -> StripSidecar {
        let mut fixed: Vec<usize> = self
            .strips
            .iter()
            .flat_map(|s| {
                s.vertices
                    .iter()
                    .zip(&s.fixed)
                    .filter(|(_, &f)| f)
                    .map(|(v, _)| v.idx())
            })
            .collect();
        fixed.sort_unstable();
        fixed.dedup();
        StripSidecar {
            strips: self
                .strips
                .iter()
                .map(|s| s.faces.iter().map(|f| f.idx()).collect())
                .collect(),
            fixed,
        }
    }

    /// Writes per-strip positions back into a copy of `positions`. Shared
    /// vertices take the value of the last strip that contains them.
    pub fn assemble(&self, positions: &[Vec3], strip_positions: &[Vec<Vec3>]) -> Vec<Vec3> {
        let mut out = positions.to_vec();
        for (strip, pos) in self.strips.iter().zip(strip_positions) {
            for (v, p) in strip.vertices.iter().zip(pos) {
                out[v.idx()] = *p;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;

    fn column_cut(g: &Grid, j: usize) -> Vec<VertexId> {
        g.column(j)
    }

    #[test]
    fn middle_cut_gives_two_strips_with_shared_fixed_vertices() {
        let g = Grid::planar(5, 7, 1.0);
        let d = decompose_strips(g.mesh(), &[column_cut(&g, 3)]).unwrap();
        assert_eq!(d.strips.len(), 2);
        assert_eq!(
            d.strips.iter().map(|s| s.faces.len()).sum::<usize>(),
            g.mesh().face_count()
        );
        assert_eq!(d.shared, g.column(3));
        for s in &d.strips {
            assert_eq!(s.width, 3);
            for (v, &f) in s.vertices.iter().zip(&s.fixed) {
                assert_eq!(f, g.column(3).contains(v));
            }
        }
    }

    #[test]
    fn narrow_strip_is_rejected() {
        let g = Grid::planar(5, 7, 1.0);
        let err = decompose_strips(g.mesh(), &[column_cut(&g, 2)]).unwrap_err();
        assert_eq!(
            err,
            StripError::StripTooNarrow {
                strip: 0,
                width: 2,
                min: 3
            }
        );
    }

    #[test]
    fn cut_that_does_not_split_is_rejected() {
        let g = Grid::planar(7, 7, 1.0);
        // runs from the boundary into the interior and stops
        let partial: Vec<VertexId> = (0..4).map(|i| g.vertex(i, 3)).collect();
        assert_eq!(
            decompose_strips(g.mesh(), &[partial]).unwrap_err(),
            StripError::NonSeparating { polyline: 0 }
        );
        assert_eq!(
            decompose_strips(g.mesh(), &[g.row(0)]).unwrap_err(),
            StripError::NonSeparating { polyline: 0 }
        );
    }

    #[test]
    fn off_edge_polyline_is_rejected() {
        let g = Grid::planar(4, 4, 1.0);
        let diagonal = vec![g.vertex(0, 0), g.vertex(1, 1)];
        assert!(matches!(
            decompose_strips(g.mesh(), &[diagonal]),
            Err(StripError::NotAnEdge { .. })
        ));
    }

    #[test]
    fn sidecar_round_trip() {
        let g = Grid::planar(5, 10, 1.0);
        let d = decompose_strips(g.mesh(), &[column_cut(&g, 3), column_cut(&g, 6)]).unwrap();
        assert_eq!(d.strips.len(), 3);
        let side = d.to_sidecar();
        let text = toml::to_string(&side).unwrap();
        let back: StripSidecar = toml::from_str(&text).unwrap();
        assert_eq!(back, side);
        let e = StripDecomposition::from_sidecar(g.mesh(), &back).unwrap();
        assert_eq!(e.to_sidecar(), side);
        assert_eq!(e.shared, d.shared);
    }

    #[test]
    fn assemble_restores_unchanged_positions() {
        let g = Grid::planar(5, 7, 1.0);
        let d = decompose_strips(g.mesh(), &[column_cut(&g, 3)]).unwrap();
        let per: Vec<Vec<Vec3>> = d
            .strips
            .iter()
            .map(|s| s.mesh.positions().to_vec())
            .collect();
        assert_eq!(d.assemble(g.mesh().positions(), &per), g.mesh().positions());
    }
}
