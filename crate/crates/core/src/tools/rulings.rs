//! Ruling lines predicted from the unoptimized mesh: the intersection lines
//! of the tangent planes of adjacent faces.

use std::collections::HashMap;

use crate::geometry::{line_angle, Vec3};
use crate::mesh::{build_frames, HalfedgeId, MeshError, QuadMesh, VertexId};

/// Directions shorter than this (sine of the normal angle) are flagged zero.
pub const ZERO_RULING_TOLERANCE: f64 = 1e-9;
/// Rulings closer than this angle to a boundary edge count as tangent.
pub const TANGENCY_ANGLE_DEG: f64 = 15.0;
/// Consecutive boundary edges with tangent rulings needed for a flag.
pub const TANGENCY_RUN: usize = 3;

/// The predicted ruling through one interior edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RulingLine {
    /// The halfedge of the lower-indexed face.
    pub edge: HalfedgeId,
    /// Midpoint of the edge; both tangent planes contain it.
    pub anchor: Vec3,
    /// `n_f x n_g`, unnormalized.
    pub direction: Vec3,
    /// Adjacent tangent planes are parallel.
    pub zero: bool,
    /// Part of a run of near-tangent rulings along the boundary.
    pub tangent: bool,
}

/// Predicted rulings of all interior edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RulingLineField {
    pub lines: Vec<RulingLine>,
    /// Boundary halfedge runs along which the rulings are nearly tangent.
    pub tangent_runs: Vec<Vec<HalfedgeId>>,
}

impl RulingLineField {
    pub fn zero_count(&self) -> usize {
        self.lines.iter().filter(|l| l.zero).count()
    }

    pub fn tangent_count(&self) -> usize {
        self.lines.iter().filter(|l| l.tangent).count()
    }

    /// Line segments of half-length `half` centered at the anchors, skipping
    /// zero rulings.
    pub fn segments(&self, half: f64) -> Vec<[Vec3; 2]> {
        self.lines
            .iter()
            .filter(|l| !l.zero)
            .map(|l| {
                let d = l.direction.normalize() * half;
                [l.anchor - d, l.anchor + d]
            })
            .collect()
    }
}

/// Ruling lines of the discrete tangent planes of `mesh` and tangency flags
/// along its boundary.
pub fn prospective_rulings(mesh: &QuadMesh) -> Result<RulingLineField, MeshError> {
    let frames = build_frames(mesh)?;
    let mut lines = Vec::new();
    let mut line_of = HashMap::new();
    for h in mesh.interior_halfedges() {
        let o = mesh.opposite(h).expect("interior");
        if o.0 < h.0 {
            continue;
        }
        let (nf, ng) = (frames[h.face().idx()].normal, frames[o.face().idx()].normal);
        let direction = nf.cross(&ng);
        line_of.insert(h, lines.len());
        line_of.insert(o, lines.len());
        lines.push(RulingLine {
            edge: h,
            anchor: (mesh.position(mesh.origin(h)) + mesh.position(mesh.target(h))) * 0.5,
            direction,
            zero: direction.norm() <= ZERO_RULING_TOLERANCE,
            tangent: false,
        });
    }
    let threshold = TANGENCY_ANGLE_DEG.to_radians();
    let mut tangent_runs = Vec::new();
    for boundary_loop in boundary_loops(mesh) {
        let near: Vec<bool> = boundary_loop
            .iter()
            .map(|&b| {
                let t = mesh.position(mesh.target(b)) - mesh.position(mesh.origin(b));
                line_of
                    .get(&across(b))
                    .map(|&i| &lines[i])
                    .is_some_and(|l| !l.zero && line_angle(&l.direction, &t) < threshold)
            })
            .collect();
        for run in runs(&near, is_closed(mesh, &boundary_loop)) {
            if run.len() < TANGENCY_RUN {
                continue;
            }
            let run: Vec<HalfedgeId> = run.iter().map(|&i| boundary_loop[i]).collect();
            for &b in &run {
                let i = line_of[&across(b)];
                lines[i].tangent = true;
            }
            tangent_runs.push(run);
        }
    }
    Ok(RulingLineField {
        lines,
        tangent_runs,
    })
}

/// The edge of a boundary face opposite its boundary edge; its ruling is
/// the one that leaves the boundary.
fn across(b: HalfedgeId) -> HalfedgeId {
    b.next().next()
}

fn is_closed(mesh: &QuadMesh, l: &[HalfedgeId]) -> bool {
    l.len() > 1 && mesh.target(*l.last().expect("nonempty")) == mesh.origin(l[0])
}

/// Boundary halfedges grouped into chains, each in walking order.
fn boundary_loops(mesh: &QuadMesh) -> Vec<Vec<HalfedgeId>> {
    let boundary: Vec<HalfedgeId> = mesh
        .halfedges()
        .filter(|&h| mesh.is_boundary_halfedge(h))
        .collect();
    let mut from: HashMap<VertexId, HalfedgeId> = HashMap::new();
    let mut has_pred = HashMap::new();
    for &h in &boundary {
        from.entry(mesh.origin(h)).or_insert(h);
    }
    for &h in &boundary {
        if let Some(&n) = from.get(&mesh.target(h)) {
            has_pred.insert(n, h);
        }
    }
    let mut seen = HashMap::new();
    let mut loops = Vec::new();
    // open chains first, from their heads, then the remaining cycles
    let heads = boundary.iter().filter(|h| !has_pred.contains_key(h));
    let rest = boundary.iter();
    for &start in heads.chain(rest) {
        if seen.contains_key(&start) {
            continue;
        }
        let mut chain = Vec::new();
        let mut h = start;
        while seen.insert(h, ()).is_none() {
            chain.push(h);
            match from.get(&mesh.target(h)) {
                Some(&n) => h = n,
                None => break,
            }
        }
        loops.push(chain);
    }
    loops
}

/// Maximal runs of `true`, joined across the seam when `closed`.
fn runs(flags: &[bool], closed: bool) -> Vec<Vec<usize>> {
    let n = flags.len();
    if n == 0 {
        return Vec::new();
    }
    if flags.iter().all(|&f| f) {
        return vec![(0..n).collect()];
    }
    let start = if closed {
        flags.iter().position(|&f| !f).expect("some false")
    } else {
        0
    };
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for k in 0..n {
        let i = (start + k) % n;
        if flags[i] {
            cur.push(i);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
