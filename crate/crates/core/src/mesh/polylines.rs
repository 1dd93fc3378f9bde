use std::collections::HashSet;

use super::{FaceId, HalfedgeId, QuadMesh, VertexId};

/// A maximal vertex polyline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polyline {
    pub vertices: Vec<VertexId>,
    pub closed: bool,
}

impl Polyline {
    /// Consecutive vertex triples; closed loops wrap around.
    pub fn triples(&self) -> Vec<[VertexId; 3]> {
        consecutive_triples(&self.vertices, self.closed)
    }
}

/// A maximal sequence of faces linked through opposite edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceStrip {
    pub faces: Vec<FaceId>,
    /// `crossings[i]` is the halfedge of `faces[i]` shared with the next face
    /// (wrapping to the first face for closed strips).
    pub crossings: Vec<HalfedgeId>,
    /// Exit halfedges at the two open ends (boundary halfedges); `None` for
    /// closed strips.
    pub ends: Option<[HalfedgeId; 2]>,
    pub closed: bool,
}

impl FaceStrip {
    pub fn triples(&self) -> Vec<[FaceId; 3]> {
        consecutive_triples(&self.faces, self.closed)
    }
}

fn consecutive_triples<T: Copy>(items: &[T], closed: bool) -> Vec<[T; 3]> {
    let n = items.len();
    if closed {
        if n < 3 {
            return Vec::new();
        }
        (0..n)
            .map(|i| [items[(i + n - 1) % n], items[i], items[(i + 1) % n]])
            .collect()
    } else {
        items.windows(3).map(|w| [w[0], w[1], w[2]]).collect()
    }
}

/// Vertex polylines and face strips of a mesh.
#[derive(Debug, Clone, Default)]
pub struct Polylines {
    pub polylines: Vec<Polyline>,
    pub face_strips: Vec<FaceStrip>,
}

impl Polylines {
    pub fn vertex_triples(&self) -> Vec<[VertexId; 3]> {
        self.polylines.iter().flat_map(|p| p.triples()).collect()
    }

    pub fn face_triples(&self) -> Vec<[FaceId; 3]> {
        self.face_strips.iter().flat_map(|s| s.triples()).collect()
    }
}

/// Traces every maximal vertex polyline and face strip.
///
/// Polylines pass straight through regular vertices and end at singular
/// vertices, corners and where they meet the boundary transversally.
pub fn trace_polylines(mesh: &QuadMesh) -> Polylines {
    Polylines {
        polylines: trace_vertex_polylines(mesh),
        face_strips: trace_face_strips(mesh),
    }
}

fn edge_key(a: VertexId, b: VertexId) -> (u32, u32) {
    (a.0.min(b.0), a.0.max(b.0))
}

fn trace_vertex_polylines(mesh: &QuadMesh) -> Vec<Polyline> {
    let mut visited: HashSet<(u32, u32)> = HashSet::new();
    let mut out = Vec::new();
    for h in mesh.halfedges() {
        let (a, b) = (mesh.origin(h), mesh.target(h));
        // visit each undirected edge once, from its first halfedge
        if let Some(o) = mesh.opposite(h) {
            if o.0 < h.0 {
                continue;
            }
        }
        if !visited.insert(edge_key(a, b)) {
            continue;
        }
        let start_key = edge_key(a, b);
        let mut forward = vec![a, b];
        let mut closed = false;
        let (mut prev, mut cur) = (a, b);
        while let Some(next) = mesh.straight_continuation(prev, cur) {
            let key = edge_key(cur, next);
            if key == start_key {
                closed = true;
                break;
            }
            if !visited.insert(key) {
                break;
            }
            forward.push(next);
            prev = cur;
            cur = next;
        }
        if closed {
            // the closing edge re-entered the start vertex
            forward.pop();
        } else {
            let mut backward = Vec::new();
            let (mut prev, mut cur) = (b, a);
            while let Some(next) = mesh.straight_continuation(prev, cur) {
                if !visited.insert(edge_key(cur, next)) {
                    break;
                }
                backward.push(next);
                prev = cur;
                cur = next;
            }
            backward.reverse();
            backward.extend(forward);
            forward = backward;
        }
        out.push(Polyline {
            vertices: forward,
            closed,
        });
    }
    out
}

fn trace_face_strips(mesh: &QuadMesh) -> Vec<FaceStrip> {
    let nf = mesh.face_count();
    // visited[f * 2 + d]: face f traversed through its edge pair {d, d + 2}
    let mut visited = vec![false; nf * 2];
    let mut out = Vec::new();
    for f in 0..nf {
        for d in 0..2 {
            if visited[f * 2 + d] {
                continue;
            }
            let start = FaceId(f as u32);
            visited[f * 2 + d] = true;
            // forward: leave through edge d + 2
            let mut faces = vec![start];
            let mut crossings = Vec::new();
            let mut exit = HalfedgeId::of(start, d + 2);
            let mut closed = false;
            while let Some(o) = mesh.opposite(exit) {
                let g = o.face();
                let pair = o.corner() % 2;
                if g == start && pair == d {
                    crossings.push(exit);
                    closed = true;
                    break;
                }
                if visited[g.idx() * 2 + pair] {
                    break;
                }
                visited[g.idx() * 2 + pair] = true;
                crossings.push(exit);
                faces.push(g);
                exit = HalfedgeId::of(g, o.corner() + 2);
            }
            let forward_end = exit;
            if closed {
                out.push(FaceStrip {
                    faces,
                    crossings,
                    ends: None,
                    closed: true,
                });
                continue;
            }
            // backward: leave the start face through edge d
            let mut back_faces = Vec::new();
            let mut back_crossings = Vec::new();
            let mut exit = HalfedgeId::of(start, d);
            while let Some(o) = mesh.opposite(exit) {
                let g = o.face();
                let pair = o.corner() % 2;
                if visited[g.idx() * 2 + pair] {
                    break;
                }
                visited[g.idx() * 2 + pair] = true;
                // crossing from g towards the strip start is `o`
                back_crossings.push(o);
                back_faces.push(g);
                exit = HalfedgeId::of(g, o.corner() + 2);
            }
            let backward_end = exit;
            back_faces.reverse();
            back_crossings.reverse();
            back_faces.extend(faces);
            back_crossings.extend(crossings);
            out.push(FaceStrip {
                faces: back_faces,
                crossings: back_crossings,
                ends: Some([backward_end, forward_end]),
                closed: false,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use crate::mesh::Grid;

    #[test]
    fn grid_counts() {
        for (n, m) in [(2, 2), (3, 5), (6, 4)] {
            let g = Grid::planar(n, m, 1.0);
            let p = trace_polylines(g.mesh());
            assert_eq!(p.polylines.len(), n + m, "{n}x{m}");
            assert_eq!(p.face_strips.len(), (n - 1) + (m - 1), "{n}x{m}");
            let total: usize = p.face_strips.iter().map(|s| s.faces.len()).sum();
            assert_eq!(total, 2 * g.mesh().face_count());
            for s in &p.face_strips {
                assert_eq!(s.crossings.len() + 1, s.faces.len());
                for (i, &h) in s.crossings.iter().enumerate() {
                    assert_eq!(h.face(), s.faces[i]);
                    assert_eq!(g.mesh().right_face(h), Some(s.faces[i + 1]));
                }
            }
        }
    }

    #[test]
    fn polyline_rows_are_straight() {
        let g = Grid::planar(4, 5, 1.0);
        let p = trace_polylines(g.mesh());
        let row = g.row(2);
        let found = p.polylines.iter().any(|pl| {
            pl.vertices == row || pl.vertices.iter().rev().copied().collect::<Vec<_>>() == row
        });
        assert!(found);
        assert_eq!(p.vertex_triples().len(), 4 * 3 + 5 * 2);
    }

    #[test]
    fn torus_loops_are_closed() {
        let (n, m) = (5, 7);
        let g = Grid::from_fn(n, m, true, true, |i, j| {
            let u = j as f64 / m as f64 * std::f64::consts::TAU;
            let v = i as f64 / n as f64 * std::f64::consts::TAU;
            let r = 3.0 + v.cos();
            vec3(r * u.cos(), r * u.sin(), v.sin())
        })
        .unwrap();
        let p = trace_polylines(g.mesh());
        assert_eq!(p.polylines.len(), n + m);
        for pl in &p.polylines {
            assert!(pl.closed);
            assert_eq!(pl.triples().len(), pl.vertices.len());
        }
        assert!(p.face_strips.iter().all(|s| s.closed));
        assert_eq!(p.face_strips.len(), n + m);
        assert_eq!(p.face_triples().len(), 2 * g.mesh().face_count());
    }

    #[test]
    fn cylinder_strips() {
        let g = Grid::from_fn(4, 6, true, false, |i, j| {
            let u = j as f64 / 6.0 * std::f64::consts::TAU;
            vec3(u.cos(), u.sin(), i as f64)
        })
        .unwrap();
        let p = trace_polylines(g.mesh());
        let closed = p.polylines.iter().filter(|l| l.closed).count();
        assert_eq!(closed, 4);
        assert_eq!(p.polylines.len(), 4 + 6);
    }

    #[test]
    fn valence_three_vertex_ends_polylines() {
        // Three quads around a central vertex, embedded in a larger patch
        // of regular quads would be complex; a simple closed fan suffices:
        // centre 0, ring 1..6, faces [0,1,2,3],[0,3,4,5],[0,5,6,1].
        let mut p = vec![vec3(0.0, 0.0, 0.0)];
        for k in 0..6 {
            let a = k as f64 / 6.0 * std::f64::consts::TAU;
            let r = if k % 2 == 0 { 1.0 } else { 1.4 };
            p.push(vec3(r * a.cos(), r * a.sin(), 0.0));
        }
        let mesh = QuadMesh::new(p, vec![[0, 1, 2, 3], [0, 3, 4, 5], [0, 5, 6, 1]]).unwrap();
        assert!(mesh.is_singular(VertexId(0)));
        let pl = trace_polylines(&mesh);
        for l in &pl.polylines {
            if let Some(k) = l.vertices.iter().position(|&v| v == VertexId(0)) {
                assert!(
                    k == 0 || k == l.vertices.len() - 1,
                    "singular vertex must end polylines"
                );
            }
        }
    }
}
