//! The Gauss image of a quad mesh: face normals on the unit sphere, linked
//! along face strips, with a per-face area measure that vanishes for
//! developable meshes.

use crate::geometry::Vec3;
use crate::mesh::{build_frames, trace_polylines, FaceId, MeshError, QuadMesh};

/// Face normals as points on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussImage {
    /// `points[f]` is the unit normal of face `f`.
    pub points: Vec<Vec3>,
    /// Pairs of faces adjacent within a face strip.
    pub segments: Vec<[FaceId; 2]>,
    /// Interior faces with their measure
    /// `|det(n_{f1} - n_{f3}, n_{f0} - n_{f2}, n_f)|`, where `f_i` is the
    /// neighbor across edge `i`.
    pub degeneracy: Vec<(FaceId, f64)>,
}

impl GaussImage {
    pub fn max_degeneracy(&self) -> f64 {
        self.degeneracy.iter().map(|&(_, d)| d).fold(0.0, f64::max)
    }

    /// Mean distance between the normals of edge-adjacent faces.
    pub fn mean_neighbor_gap(&self, mesh: &QuadMesh) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for h in mesh.interior_halfedges() {
            let o = mesh.opposite(h).expect("interior");
            sum += (self.points[h.face().idx()] - self.points[o.face().idx()]).norm();
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Segment end points on the sphere.
    pub fn segment_points(&self) -> Vec<[Vec3; 2]> {
        self.segments
            .iter()
            .map(|[a, b]| [self.points[a.idx()], self.points[b.idx()]])
            .collect()
    }
}

/// Gauss image of `mesh`; normals follow the face orientation.
pub fn gauss_image(mesh: &QuadMesh) -> Result<GaussImage, MeshError> {
    let points: Vec<Vec3> = build_frames(mesh)?.into_iter().map(|f| f.normal).collect();
    let segments = trace_polylines(mesh)
        .face_strips
        .iter()
        .flat_map(|s| {
            let n = s.faces.len();
            let pairs = if s.closed { n } else { n.saturating_sub(1) };
            (0..pairs).map(move |i| [s.faces[i], s.faces[(i + 1) % n]])
        })
        .collect();
    let degeneracy = mesh
        .face_ids()
        .filter(|&f| mesh.is_interior_face(f))
        .map(|f| {
            let g = |i| points[mesh.neighbor(f, i).expect("interior face").idx()];
            let n = points[f.idx()];
            (f, (g(1) - g(3)).cross(&(g(0) - g(2))).dot(&n).abs())
        })
        .collect();
    Ok(GaussImage {
        points,
        segments,
        degeneracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use crate::mesh::Grid;

    #[test]
    fn plane_maps_to_one_point() {
        let g = Grid::planar(4, 4, 1.0);
        let im = gauss_image(g.mesh()).unwrap();
        assert!(im.points.iter().all(|p| *p == vec3(0.0, 0.0, 1.0)));
        assert_eq!(im.max_degeneracy(), 0.0);
        // 3 rows and 3 columns of 3 faces each
        assert_eq!(im.segments.len(), 12);
    }

    #[test]
    fn cylinder_maps_to_the_equator() {
        let g = Grid::from_fn(5, 16, true, false, |i, j| {
            let t = j as f64 / 16.0 * std::f64::consts::TAU;
            vec3(t.cos(), t.sin(), 0.25 * i as f64)
        })
        .unwrap();
        let im = gauss_image(g.mesh()).unwrap();
        for p in &im.points {
            assert!(p.z.abs() < 1e-15);
            assert!((p.norm() - 1.0).abs() < 1e-15);
        }
        assert!(im.max_degeneracy() < 1e-15);
        assert_eq!(im.degeneracy.len(), 2 * 16);
    }

    #[test]
    fn sphere_patch_spreads_over_an_area() {
        let g = Grid::from_fn(7, 7, false, false, |i, j| {
            let (u, v) = (0.15 * (j as f64 - 3.0), 0.15 * (i as f64 - 3.0));
            vec3(u, v, 1.0).normalize()
        })
        .unwrap();
        let im = gauss_image(g.mesh()).unwrap();
        assert!(
            im.degeneracy.iter().all(|&(_, d)| d > 1e-4),
            "{:?}",
            im.degeneracy
        );
    }
}
