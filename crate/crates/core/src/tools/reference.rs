//! Closest-point queries on triangle meshes and oriented point clouds.

use thiserror::Error;

use crate::geometry::{try_normalize, Aabb, Vec3};
use crate::mesh::QuadMesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("reference surface is empty")]
    EmptyReference,
    #[error("triangle {triangle} references vertex {vertex} out of range")]
    VertexOutOfRange { triangle: usize, vertex: usize },
    #[error("point cloud has {points} points but {normals} normals")]
    NormalCount { points: usize, normals: usize },
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    /// Unit normal at `point`.
    pub normal: Vec3,
    /// Primitive the point lies on: the owning face for meshes, the point
    /// index for clouds.
    pub id: usize,
    pub distance_squared: f64,
}

impl ClosestPoint {
    pub fn distance(&self) -> f64 {
        self.distance_squared.sqrt()
    }

    /// Signed distance of `q` from the tangent plane at the closest point.
    pub fn plane_distance(&self, q: &Vec3) -> f64 {
        (q - self.point).dot(&self.normal)
    }
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `start..start + count` into the primitive order. Inner: `count`
    /// is 0 and `start` is the right child; the left child follows the node.
    start: u32,
    count: u32,
}

/// Bounding volume hierarchy over primitive boxes.
#[derive(Debug, Clone)]
struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    fn build(boxes: &[Aabb]) -> Bvh {
        let mut order: Vec<u32> = (0..boxes.len() as u32).collect();
        let centers: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if !boxes.is_empty() {
            Self::split(&mut nodes, &mut order, 0, boxes, &centers);
        }
        Bvh { nodes, order }
    }

    fn split(
        nodes: &mut Vec<Node>,
        order: &mut [u32],
        offset: usize,
        boxes: &[Aabb],
        centers: &[Vec3],
    ) -> usize {
        let bounds = order
            .iter()
            .fold(Aabb::empty(), |b, &i| b.merge(&boxes[i as usize]));
        let me = nodes.len();
        nodes.push(Node {
            bounds,
            start: offset as u32,
            count: order.len() as u32,
        });
        if order.len() <= LEAF_SIZE {
            return me;
        }
        let cb = Aabb::from_points(order.iter().map(|&i| &centers[i as usize]));
        let axis = cb.longest_axis();
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            centers[a as usize][axis]
                .total_cmp(&centers[b as usize][axis])
                .then(a.cmp(&b))
        });
        let (left, right) = order.split_at_mut(mid);
        Self::split(nodes, left, offset, boxes, centers);
        let r = Self::split(nodes, right, offset + mid, boxes, centers);
        nodes[me].start = r as u32;
        nodes[me].count = 0;
        me
    }

    /// Visits primitives in nodes whose box is not farther than the running
    /// best; `test` returns the squared distance to a primitive.
    fn nearest(&self, q: &Vec3, mut test: impl FnMut(usize) -> f64) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let bd = node.bounds.distance_squared(q);
            if best.is_some_and(|(_, d)| bd > d) {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for &p in &self.order[s..s + node.count as usize] {
                    let p = p as usize;
                    let d = test(p);
                    let better = match best {
                        None => true,
                        Some((bp, bd)) => d < bd || (d == bd && p < bp),
                    };
                    if better {
                        best = Some((p, d));
                    }
                }
            } else {
                let (l, r) = (n + 1, node.start as usize);
                let (dl, dr) = (
                    self.nodes[l].bounds.distance_squared(q),
                    self.nodes[r].bounds.distance_squared(q),
                );
                // nearer child on top of the stack
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }
}

/// Closest point on triangle `abc` to `p` with its barycentric coordinates.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + v * ab, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + w * ac, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + w * (c - b), [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[derive(Debug, Clone)]
enum Kind {
    Triangles {
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        owners: Vec<u32>,
        vertex_normals: Vec<Vec3>,
        triangle_normals: Vec<Vec3>,
    },
    Cloud {
        points: Vec<Vec3>,
        normals: Vec<Vec3>,
    },
}

/// A triangle mesh or an oriented point cloud with a spatial index.
#[derive(Debug, Clone)]
pub struct ReferenceSurface {
    kind: Kind,
    bvh: Bvh,
}

impl ReferenceSurface {
    /// Triangle mesh; each triangle is its own primitive.
    pub fn from_triangles(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self, ReferenceError> {
        let owners = (0..triangles.len() as u32).collect();
        Self::with_owners(vertices, triangles, owners)
    }

    /// Quad mesh split into two triangles per face; reported ids are faces.
    pub fn from_quad_mesh(mesh: &QuadMesh) -> Self {
        Self::from_quads(mesh, mesh.positions())
    }

    /// Faces of `mesh` placed at `positions`.
    pub fn from_quads(mesh: &QuadMesh, positions: &[Vec3]) -> Self {
        let mut triangles = Vec::with_capacity(2 * mesh.face_count());
        let mut owners = Vec::with_capacity(2 * mesh.face_count());
        for (f, q) in mesh.face_indices().into_iter().enumerate() {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
            owners.extend([f as u32, f as u32]);
        }
        Self::with_owners(positions.to_vec(), triangles, owners).expect("mesh indices are in range")
    }

    fn with_owners(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        owners: Vec<u32>,
    ) -> Result<Self, ReferenceError> {
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(ReferenceError::VertexOutOfRange {
                    triangle: t,
                    vertex: v,
                });
            }
        }
        let triangles: Vec<[u32; 3]> = triangles.iter().map(|t| t.map(|v| v as u32)).collect();
        let mut vertex_normals = vec![Vec3::zeros(); vertices.len()];
        let mut triangle_normals = Vec::with_capacity(triangles.len());
        let mut boxes = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let [a, b, c] = t.map(|v| vertices[v as usize]);
            let area_normal = (b - a).cross(&(c - a));
            for &v in t {
                vertex_normals[v as usize] += area_normal;
            }
            triangle_normals.push(try_normalize(&area_normal, 0.0).unwrap_or_else(Vec3::zeros));
            boxes.push(Aabb::from_points([a, b, c].iter()));
        }
        for n in &mut vertex_normals {
            *n = try_normalize(n, 0.0).unwrap_or_else(Vec3::zeros);
        }
        Ok(ReferenceSurface {
            bvh: Bvh::build(&boxes),
            kind: Kind::Triangles {
                vertices,
                triangles,
                owners,
                vertex_normals,
                triangle_normals,
            },
        })
    }

    /// Oriented point cloud; normals are normalized.
    pub fn from_point_cloud(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self, ReferenceError> {
        if points.len() != normals.len() {
            return Err(ReferenceError::NormalCount {
                points: points.len(),
                normals: normals.len(),
            });
        }
        let boxes: Vec<Aabb> = points.iter().map(|p| Aabb::from_points([p])).collect();
        let normals = normals
            .iter()
            .map(|n| try_normalize(n, 0.0).unwrap_or_else(Vec3::zeros))
            .collect();
        Ok(ReferenceSurface {
            bvh: Bvh::build(&boxes),
            kind: Kind::Cloud { points, normals },
        })
    }

    pub fn is_empty(&self) -> bool {
        self.bvh.nodes.is_empty()
    }

    pub fn bbox(&self) -> Aabb {
        self.bvh
            .nodes
            .first()
            .map(|n| n.bounds)
            .unwrap_or_else(Aabb::empty)
    }

    /// Exact closest point. Ties go to the lowest primitive index.
    pub fn closest_point(&self, q: &Vec3) -> Result<ClosestPoint, ReferenceError> {
        match &self.kind {
            Kind::Triangles {
                vertices,
                triangles,
                owners,
                vertex_normals,
                triangle_normals,
            } => {
                let tri = |t: usize| triangles[t].map(|v| vertices[v as usize]);
                let (t, d) = self
                    .bvh
                    .nearest(q, |t| {
                        let [a, b, c] = tri(t);
                        (closest_point_on_triangle(q, &a, &b, &c).0 - q).norm_squared()
                    })
                    .ok_or(ReferenceError::EmptyReference)?;
                let [a, b, c] = tri(t);
                let (point, bary) = closest_point_on_triangle(q, &a, &b, &c);
                let vn = triangles[t].map(|v| vertex_normals[v as usize]);
                let smooth = vn[0] * bary[0] + vn[1] * bary[1] + vn[2] * bary[2];
                let normal = try_normalize(&smooth, 1e-12).unwrap_or(triangle_normals[t]);
                Ok(ClosestPoint {
                    point,
                    normal,
                    id: owners[t] as usize,
                    distance_squared: d,
                })
            }
            Kind::Cloud { points, normals } => {
                let (i, d) = self
                    .bvh
                    .nearest(q, |i| (points[i] - q).norm_squared())
                    .ok_or(ReferenceError::EmptyReference)?;
                Ok(ClosestPoint {
                    point: points[i],
                    normal: normals[i],
                    id: i,
                    distance_squared: d,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use proptest::prelude::*;

    fn square() -> ReferenceSurface {
        ReferenceSurface::from_triangles(
            vec![
                vec3(0.0, 0.0, 0.0),
                vec3(1.0, 0.0, 0.0),
                vec3(1.0, 1.0, 0.0),
                vec3(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn point_on_surface() {
        let s = square();
        let q = vec3(0.3, 0.2, 0.0);
        let c = s.closest_point(&q).unwrap();
        assert_eq!(c.point, q);
        assert_eq!(c.distance_squared, 0.0);
    }

    #[test]
    fn foot_point_above_square() {
        let s = square();
        let q = vec3(0.25, 0.75, 1.0);
        let c = s.closest_point(&q).unwrap();
        assert!((c.point - vec3(0.25, 0.75, 0.0)).norm() < 1e-15);
        assert!((c.plane_distance(&q) - 1.0).abs() < 1e-15);
        assert_eq!(c.normal, vec3(0.0, 0.0, 1.0));
    }

    #[test]
    fn ties_pick_lowest_primitive() {
        // on the shared diagonal both triangles are at distance 1
        let s = square();
        let c = s.closest_point(&vec3(0.5, 0.5, 1.0)).unwrap();
        assert_eq!(c.id, 0);
        // two separate triangles mirrored about x = 0
        let s = ReferenceSurface::from_triangles(
            vec![
                vec3(1.0, 0.0, 0.0),
                vec3(2.0, 0.0, 0.0),
                vec3(1.0, 1.0, 0.0),
                vec3(-1.0, 0.0, 0.0),
                vec3(-2.0, 0.0, 0.0),
                vec3(-1.0, 1.0, 0.0),
            ],
            vec![[3, 4, 5], [0, 1, 2]],
        )
        .unwrap();
        assert_eq!(s.closest_point(&vec3(0.0, 0.2, 0.0)).unwrap().id, 0);
    }

    #[test]
    fn empty_reference() {
        let s = ReferenceSurface::from_triangles(vec![], vec![]).unwrap();
        assert_eq!(
            s.closest_point(&Vec3::zeros()),
            Err(ReferenceError::EmptyReference)
        );
        let c = ReferenceSurface::from_point_cloud(vec![], vec![]).unwrap();
        assert_eq!(
            c.closest_point(&Vec3::zeros()),
            Err(ReferenceError::EmptyReference)
        );
    }

    #[test]
    fn cloud_nearest_neighbour() {
        let pts = vec![
            vec3(0.0, 0.0, 0.0),
            vec3(1.0, 0.0, 0.0),
            vec3(0.0, 3.0, 0.0),
        ];
        let ns = vec![vec3(0.0, 0.0, 2.0); 3];
        let c = ReferenceSurface::from_point_cloud(pts, ns).unwrap();
        let r = c.closest_point(&vec3(0.9, 0.2, 0.0)).unwrap();
        assert_eq!(r.id, 1);
        assert_eq!(r.normal, vec3(0.0, 0.0, 1.0));
    }

    proptest! {
        #[test]
        fn bvh_matches_brute_force(seed in 0u64..1000, qx in -2.0f64..3.0, qy in -2.0f64..3.0, qz in -1.0f64..1.0) {
            let (n, m) = (7, 9);
            let mut vertices = Vec::new();
            for i in 0..n {
                for j in 0..m {
                    let (x, y) = (j as f64 / 8.0, i as f64 / 6.0);
                    let wobble = ((seed as f64 + 1.0) * (x * 3.1 + y * 1.7)).sin() * 0.2;
                    vertices.push(vec3(x, y, wobble));
                }
            }
            let mut tris = Vec::new();
            for i in 0..n - 1 {
                for j in 0..m - 1 {
                    let v = |a: usize, b: usize| a * m + b;
                    tris.push([v(i, j), v(i, j + 1), v(i + 1, j + 1)]);
                    tris.push([v(i, j), v(i + 1, j + 1), v(i + 1, j)]);
                }
            }
            let s = ReferenceSurface::from_triangles(vertices.clone(), tris.clone()).unwrap();
            let q = vec3(qx, qy, qz);
            let got = s.closest_point(&q).unwrap();
            let mut best = (usize::MAX, f64::INFINITY);
            for (t, tri) in tris.iter().enumerate() {
                let [a, b, c] = tri.map(|v| vertices[v]);
                let d = (closest_point_on_triangle(&q, &a, &b, &c).0 - q).norm_squared();
                if d < best.1 {
                    best = (t, d);
                }
            }
            prop_assert_eq!(got.distance_squared, best.1);
            prop_assert_eq!(got.id, best.0);
            prop_assert!((got.normal.norm() - 1.0).abs() < 1e-12);
        }
    }
}
