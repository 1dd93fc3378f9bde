//! Residual rows of every family with their analytic derivatives.

use crate::geometry::Vec3;
use crate::mesh::{FaceId, HalfedgeId, VertexId};

use super::layout::VarSlot;

pub const MAX_ROWS: usize = 4;
pub const MAX_SLOTS: usize = 5;

/// One residual term: a handful of scalar rows depending on a few 3-vector
/// unknowns.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `<n, v2 - v0>`, `<n, v3 - v1>`, `|n|^2 - 1`.
    Normal {
        face: FaceId,
        corners: [VertexId; 4],
    },
    /// `r_h - n_left x n_right`.
    Ruling {
        halfedge: HalfedgeId,
        left: FaceId,
        right: FaceId,
    },
    /// `(r1 - r3) x (r0 - r2)` over the face's boundary cycle.
    Dev {
        face: FaceId,
        cycle: [HalfedgeId; 4],
    },
    /// `det(r1 - r3, r0 - r2, n)`.
    DevDet {
        face: FaceId,
        cycle: [HalfedgeId; 4],
    },
    /// `v_i - 2 v_j + v_k`.
    FairVertex([VertexId; 3]),
    /// `n_i - 2 n_j + n_k`.
    FairNormal([FaceId; 3]),
    /// Squared diagonals and diagonal product against reference values.
    Iso {
        corners: [VertexId; 4],
        reference: [f64; 3],
    },
    /// `v - target`.
    Handle { vertex: VertexId, target: Vec3 },
    /// `<p - b_f, n_f>` for a cloud point `p`.
    Glide {
        point: Vec3,
        face: FaceId,
        corners: [VertexId; 4],
    },
    /// `<v - foot, n_foot>` and `sqrt(lambda) (v - foot)`.
    Prox {
        vertex: VertexId,
        foot: Vec3,
        normal: Vec3,
        sqrt_lambda: f64,
    },
}

/// Inline list of at most [`MAX_SLOTS`] slots.
#[derive(Debug, Clone, Copy)]
pub struct SlotList {
    items: [VarSlot; MAX_SLOTS],
    len: usize,
}

impl Default for SlotList {
    fn default() -> Self {
        SlotList {
            items: [VarSlot::Vertex(VertexId(0)); MAX_SLOTS],
            len: 0,
        }
    }
}

impl SlotList {
    fn push(&mut self, s: VarSlot) {
        self.items[self.len] = s;
        self.len += 1;
    }
}

impl std::ops::Deref for SlotList {
    type Target = [VarSlot];
    fn deref(&self) -> &[VarSlot] {
        &self.items[..self.len]
    }
}

/// Dense local output of a term: `jac[row][slot]` is the gradient of the row
/// with respect to the slot's three components.
#[derive(Debug, Clone, Copy)]
pub struct LocalRows {
    pub residual: [f64; MAX_ROWS],
    pub jac: [[Vec3; MAX_SLOTS]; MAX_ROWS],
}

impl Default for LocalRows {
    fn default() -> Self {
        LocalRows {
            residual: [0.0; MAX_ROWS],
            jac: [[Vec3::zeros(); MAX_SLOTS]; MAX_ROWS],
        }
    }
}

/// Rows of `[a]_x` (so that `[a]_x b = a x b`).
#[inline]
fn skew_rows(a: &Vec3) -> [Vec3; 3] {
    [
        Vec3::new(0.0, -a.z, a.y),
        Vec3::new(a.z, 0.0, -a.x),
        Vec3::new(-a.y, a.x, 0.0),
    ]
}

#[inline]
fn unit(k: usize) -> Vec3 {
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    e
}

impl Term {
    pub fn rows(&self) -> usize {
        match self {
            Term::Normal { .. } => 3,
            Term::Ruling { .. } => 3,
            Term::Dev { .. } => 3,
            Term::DevDet { .. } => 1,
            Term::FairVertex(_) | Term::FairNormal(_) => 3,
            Term::Iso { .. } => 3,
            Term::Handle { .. } => 3,
            Term::Glide { .. } => 1,
            Term::Prox { .. } => 4,
        }
    }

    /// Unknowns the term depends on, in derivative order.
    pub fn slots(&self) -> SlotList {
        use VarSlot::*;
        let mut s = SlotList::default();
        match self {
            Term::Normal { face, corners } => {
                s.push(Normal(*face));
                corners.iter().for_each(|&v| s.push(Vertex(v)));
            }
            Term::Ruling {
                halfedge,
                left,
                right,
            } => {
                s.push(Ruling(*halfedge));
                s.push(Normal(*left));
                s.push(Normal(*right));
            }
            Term::Dev { cycle, .. } => cycle.iter().for_each(|&h| s.push(Ruling(h))),
            Term::DevDet { face, cycle } => {
                cycle.iter().for_each(|&h| s.push(Ruling(h)));
                s.push(Normal(*face));
            }
            Term::FairVertex(v) => v.iter().for_each(|&v| s.push(Vertex(v))),
            Term::FairNormal(f) => f.iter().for_each(|&f| s.push(Normal(f))),
            Term::Iso { corners, .. } => corners.iter().for_each(|&v| s.push(Vertex(v))),
            Term::Handle { vertex, .. } | Term::Prox { vertex, .. } => s.push(Vertex(*vertex)),
            Term::Glide { face, corners, .. } => {
                corners.iter().for_each(|&v| s.push(Vertex(v)));
                s.push(Normal(*face));
            }
        }
        s
    }

    /// Evaluates residual rows, and derivatives when `with_jacobian` is set.
    /// `values` holds the current value of each slot, in [`Term::slots`] order.
    pub fn eval(&self, values: &[Vec3], with_jacobian: bool, out: &mut LocalRows) {
        let r = &mut out.residual;
        let j = &mut out.jac;
        match self {
            Term::Normal { .. } => {
                let (n, v0, v1, v2, v3) = (values[0], values[1], values[2], values[3], values[4]);
                let d1 = v2 - v0;
                let d2 = v3 - v1;
                r[0] = n.dot(&d1);
                r[1] = n.dot(&d2);
                r[2] = n.norm_squared() - 1.0;
                if with_jacobian {
                    j[0] = [d1, -n, Vec3::zeros(), n, Vec3::zeros()];
                    j[1] = [d2, Vec3::zeros(), -n, Vec3::zeros(), n];
                    j[2] = [
                        n * 2.0,
                        Vec3::zeros(),
                        Vec3::zeros(),
                        Vec3::zeros(),
                        Vec3::zeros(),
                    ];
                }
            }
            Term::Ruling { .. } => {
                let (rv, nl, nr) = (values[0], values[1], values[2]);
                let res = rv - nl.cross(&nr);
                r[..3].copy_from_slice(res.as_slice());
                if with_jacobian {
                    // d(a x b)/da = -[b]_x, d(a x b)/db = [a]_x
                    let sb = skew_rows(&nr);
                    let sa = skew_rows(&nl);
                    for k in 0..3 {
                        j[k][0] = unit(k);
                        j[k][1] = sb[k];
                        j[k][2] = -sa[k];
                    }
                }
            }
            Term::Dev { .. } => {
                let a = values[1] - values[3];
                let b = values[0] - values[2];
                let res = a.cross(&b);
                r[..3].copy_from_slice(res.as_slice());
                if with_jacobian {
                    let sb = skew_rows(&b);
                    let sa = skew_rows(&a);
                    for k in 0..3 {
                        // d/da = -[b]_x, d/db = [a]_x
                        j[k][0] = sa[k];
                        j[k][1] = -sb[k];
                        j[k][2] = -sa[k];
                        j[k][3] = sb[k];
                    }
                }
            }
            Term::DevDet { .. } => {
                let a = values[1] - values[3];
                let b = values[0] - values[2];
                let n = values[4];
                let axb = a.cross(&b);
                r[0] = axb.dot(&n);
                if with_jacobian {
                    let da = b.cross(&n);
                    let db = n.cross(&a);
                    j[0] = [db, da, -db, -da, axb];
                }
            }
            Term::FairVertex(_) | Term::FairNormal(_) => {
                let res = values[0] - values[1] * 2.0 + values[2];
                r[..3].copy_from_slice(res.as_slice());
                if with_jacobian {
                    for (k, row) in j.iter_mut().take(3).enumerate() {
                        let e = unit(k);
                        row[0] = e;
                        row[1] = e * -2.0;
                        row[2] = e;
                    }
                }
            }
            Term::Iso { reference, .. } => {
                let d1 = values[2] - values[0];
                let d2 = values[3] - values[1];
                r[0] = d1.norm_squared() - reference[0];
                r[1] = d2.norm_squared() - reference[1];
                r[2] = d1.dot(&d2) - reference[2];
                if with_jacobian {
                    let z = Vec3::zeros();
                    j[0] = [d1 * -2.0, z, d1 * 2.0, z, z];
                    j[1] = [z, d2 * -2.0, z, d2 * 2.0, z];
                    j[2] = [-d2, -d1, d2, d1, z];
                }
            }
            Term::Handle { target, .. } => {
                let res = values[0] - target;
                r[..3].copy_from_slice(res.as_slice());
                if with_jacobian {
                    for (k, row) in j.iter_mut().take(3).enumerate() {
                        row[0] = unit(k);
                    }
                }
            }
            Term::Glide { point, .. } => {
                let b = (values[0] + values[1] + values[2] + values[3]) * 0.25;
                let n = values[4];
                r[0] = (point - b).dot(&n);
                if with_jacobian {
                    let g = n * -0.25;
                    j[0] = [g, g, g, g, point - b];
                }
            }
            Term::Prox {
                foot,
                normal,
                sqrt_lambda,
                ..
            } => {
                let d = values[0] - foot;
                r[0] = d.dot(normal);
                r[1] = sqrt_lambda * d.x;
                r[2] = sqrt_lambda * d.y;
                r[3] = sqrt_lambda * d.z;
                if with_jacobian {
                    j[0][0] = *normal;
                    for k in 0..3 {
                        j[k + 1][0] = unit(k) * *sqrt_lambda;
                    }
                }
            }
        }
    }
}
