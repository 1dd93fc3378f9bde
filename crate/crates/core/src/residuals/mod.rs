//! Constraint and energy residuals with analytic Jacobians.
//!
//! Every family is a list of [`Term`]s. A term reads a few 3-vector unknowns
//! (vertex positions, face normals, halfedge rulings) and produces up to four
//! scalar rows. Blocks of terms carry a weight; [`Assembly`] flattens a
//! [`System`] into a sparse least-squares problem.

mod layout;
mod system;
mod terms;

pub use layout::{exact_rulings, State, VarSlot, VariableLayout};
pub use system::{
    dev_terms, diagonal_invariants, face_cycle, fair_normal_terms, fair_vertex_terms, handle_terms,
    iso_terms, normal_terms, ruling_terms, Assembly, DevForm, Family, ResidualBlock, ResidualError,
    System, Weights, NORM_WEIGHT,
};
pub use terms::{LocalRows, SlotList, Term, MAX_ROWS, MAX_SLOTS};

use crate::geometry::Vec3;
use crate::mesh::{FaceId, HalfedgeId, Polylines, QuadMesh, VertexId};

/// Default proximity regularizer `lambda`.
pub const DEFAULT_PROX_LAMBDA: f64 = 0.01;

fn eval_values(term: &Term, values: &[Vec3]) -> LocalRows {
    let mut out = LocalRows::default();
    term.eval(values, false, &mut out);
    out
}

fn dummy_face() -> FaceId {
    FaceId(0)
}

fn dummy_corners() -> [VertexId; 4] {
    [VertexId(0); 4]
}

fn dummy_cycle() -> [HalfedgeId; 4] {
    [HalfedgeId(0); 4]
}

/// `(<n, v2 - v0>, <n, v3 - v1>, |n|^2 - 1)`.
pub fn normal_residuals(normal: Vec3, corners: [Vec3; 4]) -> [f64; 3] {
    let t = Term::Normal {
        face: dummy_face(),
        corners: dummy_corners(),
    };
    let r = eval_values(
        &t,
        &[normal, corners[0], corners[1], corners[2], corners[3]],
    )
    .residual;
    [r[0], r[1], r[2]]
}

/// `r - n_left x n_right`.
pub fn ruling_residual(ruling: Vec3, left: Vec3, right: Vec3) -> Vec3 {
    let t = Term::Ruling {
        halfedge: HalfedgeId(0),
        left: dummy_face(),
        right: dummy_face(),
    };
    let r = eval_values(&t, &[ruling, left, right]).residual;
    Vec3::new(r[0], r[1], r[2])
}

/// `(r1 - r3) x (r0 - r2)` for the rulings of a face's boundary cycle.
pub fn dev_residual(rulings: [Vec3; 4]) -> Vec3 {
    let t = Term::Dev {
        face: dummy_face(),
        cycle: dummy_cycle(),
    };
    let r = eval_values(&t, &rulings).residual;
    Vec3::new(r[0], r[1], r[2])
}

/// `det(r1 - r3, r0 - r2, n)`.
pub fn dev_residual_det(rulings: [Vec3; 4], normal: Vec3) -> f64 {
    let t = Term::DevDet {
        face: dummy_face(),
        cycle: dummy_cycle(),
    };
    eval_values(
        &t,
        &[rulings[0], rulings[1], rulings[2], rulings[3], normal],
    )
    .residual[0]
}

/// `v_i - 2 v_j + v_k` for every consecutive polyline triple.
pub fn fairness_vertex_residuals(positions: &[Vec3], polylines: &Polylines) -> Vec<Vec3> {
    polylines
        .vertex_triples()
        .into_iter()
        .map(|[a, b, c]| positions[a.idx()] - 2.0 * positions[b.idx()] + positions[c.idx()])
        .collect()
}

/// `n_i - 2 n_j + n_k` for every consecutive face-strip triple.
pub fn fairness_normal_residuals(normals: &[Vec3], polylines: &Polylines) -> Vec<Vec3> {
    polylines
        .face_triples()
        .into_iter()
        .map(|[a, b, c]| normals[a.idx()] - 2.0 * normals[b.idx()] + normals[c.idx()])
        .collect()
}

/// Differences of squared diagonals and of the diagonal product between a
/// face and its paired reference face.
pub fn iso_residuals(face: [Vec3; 4], reference: [Vec3; 4]) -> [f64; 3] {
    let t = Term::Iso {
        corners: dummy_corners(),
        reference: diagonal_invariants(reference),
    };
    let r = eval_values(&t, &face).residual;
    [r[0], r[1], r[2]]
}

/// `v - target` for each handle.
pub fn handle_residuals(
    positions: &[Vec3],
    targets: &[(VertexId, Vec3)],
) -> Result<Vec<Vec3>, ResidualError> {
    targets
        .iter()
        .map(|&(v, target)| {
            positions
                .get(v.idx())
                .map(|p| p - target)
                .ok_or(ResidualError::UnknownVertex {
                    vertex: v.idx(),
                    count: positions.len(),
                })
        })
        .collect()
}

/// `<p - b, n>`: distance of a cloud point from a face's tangent plane.
pub fn glide_residual(point: Vec3, barycenter: Vec3, normal: Vec3) -> f64 {
    (point - barycenter).dot(&normal)
}

/// `(<v - v*, n*>, sqrt(lambda) (v - v*))`.
pub fn prox_residuals(v: Vec3, foot: Vec3, normal: Vec3, lambda: f64) -> (f64, Vec3) {
    let d = v - foot;
    (d.dot(&normal), lambda.sqrt() * d)
}

/// A cloud point matched to the face it projects onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlidePoint {
    pub point: Vec3,
    pub face: FaceId,
}

pub fn glide_terms(mesh: &QuadMesh, points: &[GlidePoint]) -> Vec<Term> {
    points
        .iter()
        .map(|g| Term::Glide {
            point: g.point,
            face: g.face,
            corners: mesh.face(g.face),
        })
        .collect()
}

/// Closest point `v*` and unit normal `n*` on a reference surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Foot {
    pub point: Vec3,
    pub normal: Vec3,
}

/// Proximity rows for every free vertex. `query` returns the foot point of
/// a position, or `None` when the reference has none.
pub fn prox_terms(
    positions: &[Vec3],
    include: impl Fn(VertexId) -> bool,
    lambda: f64,
    query: impl Fn(Vec3) -> Option<Foot>,
) -> Result<Vec<Term>, ResidualError> {
    let sqrt_lambda = lambda.sqrt();
    positions
        .iter()
        .enumerate()
        .filter(|(i, _)| include(VertexId(*i as u32)))
        .map(|(i, p)| {
            let foot = query(*p).ok_or(ResidualError::ReferenceQueryFailure { vertex: i })?;
            Ok(Term::Prox {
                vertex: VertexId(i as u32),
                foot: foot.point,
                normal: foot.normal,
                sqrt_lambda,
            })
        })
        .collect()
}

/// Largest disagreement between analytic and finite-difference Jacobians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCheck {
    /// `|J_fd - J| / max(|J|, 1)` maximized over all entries.
    pub max_relative_error: f64,
    pub row: usize,
    pub column: usize,
}

/// Compares the analytic Jacobian of `system` against central differences
/// with step `step * max(|x_j|, 1)`.
pub fn check_jacobian(
    system: &System,
    layout: &VariableLayout,
    state: &State,
    step: f64,
) -> JacobianCheck {
    let asm = Assembly::new(system, layout);
    let x = layout.gather(state);
    let (m, n) = (asm.rows(), layout.len());
    let mut r = vec![0.0; m];
    let mut jv = vec![0.0; asm.nnz()];
    asm.eval(system, layout, state, &x, &mut r, Some(&mut jv));
    let mut dense = vec![0.0; m * n];
    let pattern = asm.pattern();
    for i in 0..m {
        for k in pattern.row_range(i) {
            dense[i * n + pattern.row(i)[k - pattern.row_range(i).start] as usize] += jv[k];
        }
    }
    let mut worst = JacobianCheck {
        max_relative_error: 0.0,
        row: 0,
        column: 0,
    };
    let (mut rp, mut rm) = (vec![0.0; m], vec![0.0; m]);
    let mut xp = x.clone();
    for j in 0..n {
        let h = step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        asm.eval(system, layout, state, &xp, &mut rp, None);
        xp[j] = x[j] - h;
        asm.eval(system, layout, state, &xp, &mut rm, None);
        xp[j] = x[j];
        for i in 0..m {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            let an = dense[i * n + j];
            let err = (fd - an).abs() / an.abs().max(1.0);
            if err > worst.max_relative_error {
                worst = JacobianCheck {
                    max_relative_error: err,
                    row: i,
                    column: j,
                };
            }
        }
    }
    worst
}
