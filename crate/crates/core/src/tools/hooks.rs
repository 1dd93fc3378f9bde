//! Round hooks that rebuild gliding and proximity rows from closest-point
//! queries.

use std::sync::Arc;

use crate::geometry::Vec3;
use crate::mesh::{FaceId, QuadMesh, VertexId};
use crate::residuals::{glide_terms, prox_terms, Family, Foot, GlidePoint, State, System};
use crate::solver::{RoundHook, SolverError, Update};

use super::reference::ReferenceSurface;

/// Mean length of all mesh edges at `positions`.
pub fn mean_edge_length(mesh: &QuadMesh, positions: &[Vec3]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for q in mesh.faces() {
        for i in 0..4 {
            let (a, b) = (q[i], q[(i + 1) % 4]);
            // interior edges are seen from both sides
            sum += (positions[a.idx()] - positions[b.idx()]).norm();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Gliding rows for the cloud points near the current mesh. A point is
/// active when its distance to the mesh is at most `radius_factor` times the
/// mean edge length; its face is the face of its closest point.
#[derive(Debug, Clone)]
pub struct GlideHook {
    cloud: Vec<Vec3>,
    radius_factor: f64,
    active: Vec<GlidePoint>,
    warned: bool,
}

/// Default activity radius in mean edge lengths.
pub const DEFAULT_GLIDE_RADIUS: f64 = 2.0;

impl GlideHook {
    pub fn new(cloud: Vec<Vec3>, radius_factor: f64) -> Self {
        GlideHook {
            cloud,
            radius_factor,
            active: Vec::new(),
            warned: false,
        }
    }

    /// Active points of the last round.
    pub fn active(&self) -> &[GlidePoint] {
        &self.active
    }

    /// Computes the active set at `positions`.
    pub fn active_set(&self, mesh: &QuadMesh, positions: &[Vec3]) -> Vec<GlidePoint> {
        let surface = ReferenceSurface::from_quads(mesh, positions);
        let radius = self.radius_factor * mean_edge_length(mesh, positions);
        self.cloud
            .iter()
            .filter_map(|&p| {
                let c = surface.closest_point(&p).ok()?;
                (c.distance() <= radius).then_some(GlidePoint {
                    point: p,
                    face: FaceId(c.id as u32),
                })
            })
            .collect()
    }
}

impl RoundHook for GlideHook {
    fn update(
        &mut self,
        mesh: &QuadMesh,
        state: &State,
        system: &mut System,
    ) -> Result<Update, SolverError> {
        let active = self.active_set(mesh, &state.positions);
        if active.is_empty() && !self.warned && !self.cloud.is_empty() {
            log::warn!("gliding: no cloud point is within the activity radius");
            self.warned = true;
        }
        if active == self.active {
            return Ok(Update::Unchanged);
        }
        self.active = active;
        let terms = glide_terms(mesh, &self.active);
        let weight = system.block(Family::Glide).map_or(0.0, |b| b.weight);
        system.set_terms(Family::Glide, weight, terms);
        Ok(Update::Structure)
    }
}

/// Proximity rows of the free vertices to a reference surface, with feet
/// recomputed every round.
#[derive(Debug, Clone)]
pub struct ProxHook {
    reference: Arc<ReferenceSurface>,
    free: Vec<bool>,
    lambda: f64,
}

impl ProxHook {
    /// `free[v]` selects the vertices that receive rows.
    pub fn new(reference: Arc<ReferenceSurface>, free: Vec<bool>, lambda: f64) -> Self {
        ProxHook {
            reference,
            free,
            lambda,
        }
    }
}

impl RoundHook for ProxHook {
    fn update(
        &mut self,
        _mesh: &QuadMesh,
        state: &State,
        system: &mut System,
    ) -> Result<Update, SolverError> {
        let terms = prox_terms(
            &state.positions,
            |v: VertexId| self.free.get(v.idx()).copied().unwrap_or(false),
            self.lambda,
            |q| {
                self.reference.closest_point(&q).ok().map(|c| Foot {
                    point: c.point,
                    normal: c.normal,
                })
            },
        )?;
        let weight = system.block(Family::Prox).map_or(0.0, |b| b.weight);
        let structure = system
            .block(Family::Prox)
            .is_none_or(|b| b.terms.len() != terms.len());
        system.set_terms(Family::Prox, weight, terms);
        Ok(if structure {
            Update::Structure
        } else {
            Update::Values
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use crate::mesh::Grid;

    #[test]
    fn glide_active_set_respects_radius() {
        let g = Grid::planar(4, 4, 1.0);
        let mut hook = GlideHook::new(
            vec![
                vec3(1.5, 1.5, 0.5),
                vec3(0.2, 0.2, 1.9),
                vec3(1.5, 1.5, 2.5),
            ],
            DEFAULT_GLIDE_RADIUS,
        );
        let state = State::from_mesh(g.mesh()).unwrap();
        let mut system = System::new();
        system.push(Family::Glide, 3.0, Vec::new());
        assert_eq!(
            hook.update(g.mesh(), &state, &mut system).unwrap(),
            Update::Structure
        );
        assert_eq!(hook.active().len(), 2);
        assert_eq!(hook.active()[0].face, FaceId(4));
        assert_eq!(hook.active()[1].face, FaceId(0));
        assert_eq!(system.block(Family::Glide).unwrap().terms.len(), 2);
        assert_eq!(system.block(Family::Glide).unwrap().weight, 3.0);
        // same geometry, same active set
        assert_eq!(
            hook.update(g.mesh(), &state, &mut system).unwrap(),
            Update::Unchanged
        );
        let energies = system.term_energies(Family::Glide, &state);
        assert!((energies[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_active_set_is_not_an_error() {
        let g = Grid::planar(3, 3, 1.0);
        let mut hook = GlideHook::new(vec![vec3(0.0, 0.0, 50.0)], DEFAULT_GLIDE_RADIUS);
        let state = State::from_mesh(g.mesh()).unwrap();
        let mut system = System::new();
        hook.update(g.mesh(), &state, &mut system).unwrap();
        assert!(hook.active().is_empty());
    }

    #[test]
    fn prox_rows_for_free_vertices() {
        let g = Grid::planar(3, 3, 1.0);
        let plane = ReferenceSurface::from_triangles(
            vec![
                vec3(-50.0, -50.0, 1.0),
                vec3(50.0, -50.0, 1.0),
                vec3(0.0, 50.0, 1.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let mut free = vec![true; 9];
        free[0] = false;
        let mut hook = ProxHook::new(Arc::new(plane), free, 0.01);
        let state = State::from_mesh(g.mesh()).unwrap();
        let mut system = System::new();
        system.push(Family::Prox, 1.0, Vec::new());
        assert_eq!(
            hook.update(g.mesh(), &state, &mut system).unwrap(),
            Update::Structure
        );
        assert_eq!(
            hook.update(g.mesh(), &state, &mut system).unwrap(),
            Update::Values
        );
        let e = system.term_energies(Family::Prox, &state);
        assert_eq!(e.len(), 8);
        // each vertex sits at unit distance below the plane
        for v in e {
            assert!((v - 1.01).abs() < 1e-12);
        }
    }
}
