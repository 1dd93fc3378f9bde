//! Weighted residual blocks and their flat, parallel assembly.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::{FaceId, HalfedgeId, Polylines, QuadMesh, VertexId};
use crate::sparse::JacobianPattern;

use super::layout::{State, VariableLayout};
use super::terms::{LocalRows, Term, MAX_SLOTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResidualError {
    #[error("vertex {vertex} does not exist (mesh has {count} vertices)")]
    UnknownVertex { vertex: usize, count: usize },
    #[error("reference surface has no closest point for vertex {vertex}")]
    ReferenceQueryFailure { vertex: usize },
    #[error("negative weight {value} for block {family}")]
    NegativeWeight { family: Family, value: f64 },
}

/// Residual family of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Norm,
    Rul,
    Dev,
    FairV,
    FairN,
    Iso,
    Handle,
    Glide,
    Prox,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Norm,
        Family::Rul,
        Family::Dev,
        Family::FairV,
        Family::FairN,
        Family::Iso,
        Family::Handle,
        Family::Glide,
        Family::Prox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Norm => "norm",
            Family::Rul => "rul",
            Family::Dev => "dev",
            Family::FairV => "fair_v",
            Family::FairN => "fair_n",
            Family::Iso => "iso",
            Family::Handle => "handle",
            Family::Glide => "glide",
            Family::Prox => "prox",
        }
    }

    /// Families treated as hard constraints by the projection method.
    pub fn is_constraint(self) -> bool {
        matches!(self, Family::Norm | Family::Rul | Family::Dev | Family::Iso)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Block weights. `pos` applies to handle, gliding and proximity rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub norm: f64,
    pub rul: f64,
    pub dev: f64,
    pub fair_v: f64,
    pub fair_n: f64,
    pub iso: f64,
    pub pos: f64,
}

/// Default weight of the normal constraints. Normals that drift from the
/// face normals let steps lower the developability energy without moving
/// vertices, so the constraint is held stiff.
pub const NORM_WEIGHT: f64 = 300.0;

impl Default for Weights {
    fn default() -> Self {
        Weights {
            norm: NORM_WEIGHT,
            rul: 1.0,
            dev: 10.0,
            fair_v: 0.1,
            fair_n: 0.01,
            iso: 0.0,
            pos: 100.0,
        }
    }
}

impl Weights {
    pub fn get(&self, family: Family) -> f64 {
        match family {
            Family::Norm => self.norm,
            Family::Rul => self.rul,
            Family::Dev => self.dev,
            Family::FairV => self.fair_v,
            Family::FairN => self.fair_n,
            Family::Iso => self.iso,
            Family::Handle | Family::Glide | Family::Prox => self.pos,
        }
    }

    pub fn validate(&self) -> Result<(), ResidualError> {
        for family in Family::ALL {
            let value = self.get(family);
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ResidualError::NegativeWeight { family, value });
            }
        }
        Ok(())
    }

    /// Regularizers are zero.
    pub fn regularizers_off(&self) -> bool {
        self.fair_v == 0.0 && self.fair_n == 0.0 && self.iso == 0.0
    }

    pub fn without_regularizers(mut self) -> Self {
        self.fair_v = 0.0;
        self.fair_n = 0.0;
        self.iso = 0.0;
        self
    }
}

/// Which developability residual is optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevForm {
    /// `(r1 - r3) x (r0 - r2)`, three rows per face.
    #[default]
    Vector,
    /// `det(r1 - r3, r0 - r2, n)`, one row per face.
    Determinant,
}

/// One family of residual terms with a common weight. The block energy is
/// `weight * sum(row^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub family: Family,
    pub weight: f64,
    pub terms: Vec<Term>,
}

impl ResidualBlock {
    pub fn rows(&self) -> usize {
        self.terms.iter().map(Term::rows).sum()
    }
}

/// The four halfedges of a face, in cycle order.
pub fn face_cycle(face: FaceId) -> [HalfedgeId; 4] {
    [0, 1, 2, 3].map(|c| HalfedgeId::of(face, c))
}

pub fn normal_terms(mesh: &QuadMesh) -> Vec<Term> {
    mesh.face_ids()
        .map(|face| Term::Normal {
            face,
            corners: mesh.face(face),
        })
        .collect()
}

pub fn ruling_terms(mesh: &QuadMesh) -> Vec<Term> {
    mesh.interior_halfedges()
        .map(|h| Term::Ruling {
            halfedge: h,
            left: h.face(),
            right: mesh.right_face(h).expect("interior halfedge"),
        })
        .collect()
}

/// Developability rows for faces whose four halfedges are interior.
pub fn dev_terms(mesh: &QuadMesh, form: DevForm) -> Vec<Term> {
    mesh.face_ids()
        .filter(|&f| mesh.is_interior_face(f))
        .map(|face| {
            let cycle = face_cycle(face);
            match form {
                DevForm::Vector => Term::Dev { face, cycle },
                DevForm::Determinant => Term::DevDet { face, cycle },
            }
        })
        .collect()
}

pub fn fair_vertex_terms(polylines: &Polylines) -> Vec<Term> {
    polylines
        .vertex_triples()
        .into_iter()
        .map(Term::FairVertex)
        .collect()
}

pub fn fair_normal_terms(polylines: &Polylines) -> Vec<Term> {
    polylines
        .face_triples()
        .into_iter()
        .map(Term::FairNormal)
        .collect()
}

/// Diagonal reference values `(|d1|^2, |d2|^2, <d1, d2>)` of a quad.
pub fn diagonal_invariants(p: [Vec3; 4]) -> [f64; 3] {
    let d1 = p[2] - p[0];
    let d2 = p[3] - p[1];
    [d1.norm_squared(), d2.norm_squared(), d1.dot(&d2)]
}

/// Isometry rows pairing every face with the same face of `reference`.
pub fn iso_terms(mesh: &QuadMesh, reference: &[Vec3]) -> Vec<Term> {
    mesh.face_ids()
        .map(|f| {
            let corners = mesh.face(f);
            Term::Iso {
                corners,
                reference: diagonal_invariants(corners.map(|v| reference[v.idx()])),
            }
        })
        .collect()
}

pub fn handle_terms(
    mesh: &QuadMesh,
    targets: &[(VertexId, Vec3)],
) -> Result<Vec<Term>, ResidualError> {
    targets
        .iter()
        .map(|&(vertex, target)| {
            if vertex.idx() >= mesh.vertex_count() {
                Err(ResidualError::UnknownVertex {
                    vertex: vertex.idx(),
                    count: mesh.vertex_count(),
                })
            } else {
                Ok(Term::Handle { vertex, target })
            }
        })
        .collect()
}

/// The weighted residual system.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct System {
    pub blocks: Vec<ResidualBlock>,
}

impl System {
    pub fn new() -> Self {
        System::default()
    }

    /// Normal, ruling, developability and fairness blocks.
    pub fn developability(
        mesh: &QuadMesh,
        polylines: &Polylines,
        weights: &Weights,
        form: DevForm,
    ) -> Self {
        let mut s = System::new();
        s.push(Family::Norm, weights.norm, normal_terms(mesh));
        s.push(Family::Rul, weights.rul, ruling_terms(mesh));
        s.push(Family::Dev, weights.dev, dev_terms(mesh, form));
        s.push(Family::FairV, weights.fair_v, fair_vertex_terms(polylines));
        s.push(Family::FairN, weights.fair_n, fair_normal_terms(polylines));
        s
    }

    /// Appends a block, merging into an existing block of the same family.
    pub fn push(&mut self, family: Family, weight: f64, terms: Vec<Term>) {
        match self.blocks.iter_mut().find(|b| b.family == family) {
            Some(b) => {
                b.weight = weight;
                b.terms.extend(terms);
            }
            None => self.blocks.push(ResidualBlock {
                family,
                weight,
                terms,
            }),
        }
    }

    /// Replaces the terms of a family, creating the block if needed.
    pub fn set_terms(&mut self, family: Family, weight: f64, terms: Vec<Term>) {
        match self.blocks.iter_mut().find(|b| b.family == family) {
            Some(b) => {
                b.weight = weight;
                b.terms = terms;
            }
            None => self.blocks.push(ResidualBlock {
                family,
                weight,
                terms,
            }),
        }
    }

    pub fn block(&self, family: Family) -> Option<&ResidualBlock> {
        self.blocks.iter().find(|b| b.family == family)
    }

    pub fn block_mut(&mut self, family: Family) -> Option<&mut ResidualBlock> {
        self.blocks.iter_mut().find(|b| b.family == family)
    }

    pub fn apply_weights(&mut self, weights: &Weights) {
        for b in &mut self.blocks {
            b.weight = weights.get(b.family);
        }
    }

    pub fn rows(&self) -> usize {
        self.blocks.iter().map(ResidualBlock::rows).sum()
    }

    /// Keeps only the blocks accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(Family) -> bool) -> System {
        System {
            blocks: self
                .blocks
                .iter()
                .filter(|b| keep(b.family))
                .cloned()
                .collect(),
        }
    }

    /// Unweighted rows of one term at the given state.
    pub fn eval_term(term: &Term, state: &State) -> LocalRows {
        let slots = term.slots();
        let mut values = [Vec3::zeros(); MAX_SLOTS];
        for (v, s) in values.iter_mut().zip(slots.iter()) {
            *v = state.get(*s);
        }
        let mut out = LocalRows::default();
        term.eval(&values[..slots.len()], false, &mut out);
        out
    }

    /// Unweighted squared norm of every term of a family.
    pub fn term_energies(&self, family: Family, state: &State) -> Vec<f64> {
        self.block(family)
            .map(|b| {
                b.terms
                    .par_iter()
                    .map(|t| {
                        let out = Self::eval_term(t, state);
                        out.residual[..t.rows()].iter().map(|r| r * r).sum()
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Weighted energy of every block, in block order.
    pub fn block_energies(&self, state: &State) -> Vec<(Family, f64)> {
        self.blocks
            .iter()
            .map(|b| {
                let sum: f64 = self.term_energies(b.family, state).iter().sum();
                (b.family, b.weight * sum)
            })
            .collect()
    }
}

/// A term, its weight's square root and its residual and Jacobian slices.
type TermWork<'a> = (&'a Term, f64, (&'a mut [f64], &'a mut [f64]));

/// Flat layout of a [`System`]: row ranges, Jacobian value ranges and the
/// sparsity pattern with respect to a [`VariableLayout`].
#[derive(Debug, Clone)]
pub struct Assembly {
    pattern: JacobianPattern,
    term_rows: Vec<usize>,
    term_values: Vec<usize>,
    block_terms: Vec<Range<usize>>,
}

impl Assembly {
    pub fn new(system: &System, layout: &VariableLayout) -> Self {
        let mut pattern = JacobianPattern::new(layout.len());
        let mut term_rows = vec![0];
        let mut term_values = vec![0];
        let mut block_terms = Vec::with_capacity(system.blocks.len());
        let mut cols: Vec<u32> = Vec::with_capacity(3 * MAX_SLOTS);
        for b in &system.blocks {
            let start = term_rows.len() - 1;
            for t in &b.terms {
                cols.clear();
                for s in t.slots().iter() {
                    if let Some(c) = layout.column(*s) {
                        cols.extend([c as u32, c as u32 + 1, c as u32 + 2]);
                    }
                }
                for _ in 0..t.rows() {
                    pattern.push_row(cols.iter().copied());
                }
                term_rows.push(pattern.nrows());
                term_values.push(pattern.nnz());
            }
            block_terms.push(start..term_rows.len() - 1);
        }
        Assembly {
            pattern,
            term_rows,
            term_values,
            block_terms,
        }
    }

    pub fn pattern(&self) -> &JacobianPattern {
        &self.pattern
    }

    pub fn rows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Row range of each block.
    pub fn block_rows(&self, block: usize) -> Range<usize> {
        let t = &self.block_terms[block];
        self.term_rows[t.start]..self.term_rows[t.end]
    }

    /// Weighted residuals (`sqrt(w) r`) and optionally the weighted Jacobian
    /// values, in pattern order. `x` holds the free unknowns; constant slots
    /// are read from `state`.
    pub fn eval(
        &self,
        system: &System,
        layout: &VariableLayout,
        state: &State,
        x: &[f64],
        residual: &mut [f64],
        jacobian: Option<&mut [f64]>,
    ) {
        let with_jac = jacobian.is_some();
        let mut jac_store;
        let jac: &mut [f64] = match jacobian {
            Some(j) => j,
            None => {
                jac_store = Vec::new();
                &mut jac_store
            }
        };
        let work = self.split(residual, jac, with_jac);
        let items: Vec<TermWork> = system
            .blocks
            .iter()
            .flat_map(|b| {
                let s = b.weight.sqrt();
                b.terms.iter().map(move |t| (t, s))
            })
            .zip(work)
            .map(|((t, s), w)| (t, s, w))
            .collect();
        items
            .into_par_iter()
            .with_min_len(256)
            .for_each(|(term, sw, (res, jac))| {
                let slots = term.slots();
                let mut values = [Vec3::zeros(); MAX_SLOTS];
                for (v, s) in values.iter_mut().zip(slots.iter()) {
                    *v = layout.read(x, state, *s);
                }
                let mut out = LocalRows::default();
                term.eval(&values[..slots.len()], with_jac, &mut out);
                let rows = term.rows();
                for (r, o) in res.iter_mut().zip(&out.residual[..rows]) {
                    *r = sw * o;
                }
                if with_jac {
                    let mut k = 0;
                    for row in 0..rows {
                        for (si, s) in slots.iter().enumerate() {
                            if layout.column(*s).is_some() {
                                let g = out.jac[row][si];
                                jac[k] = sw * g.x;
                                jac[k + 1] = sw * g.y;
                                jac[k + 2] = sw * g.z;
                                k += 3;
                            }
                        }
                    }
                }
            });
    }

    /// Disjoint per-term output slices in term order.
    fn split<'a>(
        &self,
        mut residual: &'a mut [f64],
        mut jac: &'a mut [f64],
        with_jac: bool,
    ) -> Vec<(&'a mut [f64], &'a mut [f64])> {
        let n = self.term_rows.len() - 1;
        let mut out = Vec::with_capacity(n);
        for t in 0..n {
            let (r, rest) = residual.split_at_mut(self.term_rows[t + 1] - self.term_rows[t]);
            residual = rest;
            let (j, rest) = if with_jac {
                jac.split_at_mut(self.term_values[t + 1] - self.term_values[t])
            } else {
                jac.split_at_mut(0)
            };
            jac = rest;
            out.push((r, j));
        }
        out
    }

    /// Energy of each block from weighted residuals.
    pub fn block_energies(&self, residual: &[f64]) -> Vec<f64> {
        (0..self.block_terms.len())
            .map(|b| residual[self.block_rows(b)].iter().map(|r| r * r).sum())
            .collect()
    }
}
