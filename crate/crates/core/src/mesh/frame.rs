use crate::geometry::Vec3;

use super::{FaceId, MeshError, QuadMesh};

/// Relative tolerance for degenerate faces, scaled by the squared bounding
/// box diagonal.
pub const DEGENERATE_FACE_TOLERANCE: f64 = 1e-12;

/// The inscribed midpoint parallelogram of a face and its tangent plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckerboardFrame {
    /// `midpoints[i]` is the midpoint of edge `v_i v_{i+1}`.
    pub midpoints: [Vec3; 4],
    pub barycenter: Vec3,
    pub normal: Vec3,
}

impl CheckerboardFrame {
    /// Signed distance of `p` from the tangent plane.
    pub fn plane_distance(&self, p: &Vec3) -> f64 {
        (p - self.barycenter).dot(&self.normal)
    }
}

fn degenerate_tolerance(mesh: &QuadMesh) -> f64 {
    let d = mesh.bbox().diagonal();
    DEGENERATE_FACE_TOLERANCE * d * d
}

fn frame_from_corners(
    p: &[Vec3; 4],
    face: usize,
    tolerance: f64,
) -> Result<CheckerboardFrame, MeshError> {
    let midpoints = [
        (p[0] + p[1]) * 0.5,
        (p[1] + p[2]) * 0.5,
        (p[2] + p[3]) * 0.5,
        (p[3] + p[0]) * 0.5,
    ];
    let cross = (p[2] - p[0]).cross(&(p[3] - p[1]));
    let norm = cross.norm();
    if !(norm > tolerance) {
        return Err(MeshError::DegenerateFace {
            face,
            cross_norm: norm,
            tolerance,
        });
    }
    Ok(CheckerboardFrame {
        midpoints,
        barycenter: (p[0] + p[1] + p[2] + p[3]) * 0.25,
        normal: cross / norm,
    })
}

/// Checkerboard frame of a face; the normal follows the face's vertex order.
pub fn build_frame(mesh: &QuadMesh, face: FaceId) -> Result<CheckerboardFrame, MeshError> {
    frame_from_corners(
        &mesh.face_positions(face),
        face.idx(),
        degenerate_tolerance(mesh),
    )
}

/// Frames of all faces.
pub fn build_frames(mesh: &QuadMesh) -> Result<Vec<CheckerboardFrame>, MeshError> {
    let tol = degenerate_tolerance(mesh);
    (0..mesh.face_count())
        .map(|f| frame_from_corners(&mesh.face_positions(FaceId(f as u32)), f, tol))
        .collect()
}

/// Outcome of a normal refresh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefreshStats {
    /// Faces whose recomputed normal had to be negated to stay on the
    /// previous side.
    pub flipped: usize,
}

/// Recomputes face normals from vertex positions, keeping for every face the
/// sign that agrees with its previous normal.
pub fn orient_and_refresh_normals(
    mesh: &QuadMesh,
    previous: &mut [Vec3],
) -> Result<RefreshStats, MeshError> {
    let tol = degenerate_tolerance(mesh);
    let mut stats = RefreshStats::default();
    for (f, prev) in previous.iter_mut().enumerate() {
        let frame = frame_from_corners(&mesh.face_positions(FaceId(f as u32)), f, tol)?;
        let n = frame.normal;
        if n.dot(prev) < 0.0 {
            *prev = -n;
            stats.flipped += 1;
        } else {
            *prev = n;
        }
    }
    Ok(stats)
}
