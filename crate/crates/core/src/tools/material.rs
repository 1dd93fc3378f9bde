//! Isometry pairing modes for interactive deformation.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::mesh::QuadMesh;
use crate::residuals::{diagonal_invariants, iso_terms, Family, State, System, Term};
use crate::solver::{RoundHook, SolverError, Update};

/// How faces are paired for isometry rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialMode {
    /// No isometry rows.
    #[default]
    None,
    /// Every face is paired with the same face of the starting mesh.
    Elastic,
    /// Every face is paired with the same face of the previous iterate.
    Plastic,
}

/// Isometry rows and the per-round hook a mode needs.
pub struct MaterialSetup {
    /// Rows of the isometry block, empty for [`MaterialMode::None`].
    pub terms: Vec<Term>,
    pub hook: Option<PlasticHook>,
}

/// Builds the isometry rows of `mode` for `mesh` starting at `positions`.
pub fn material_mode(mode: MaterialMode, mesh: &QuadMesh, positions: &[Vec3]) -> MaterialSetup {
    match mode {
        MaterialMode::None => MaterialSetup {
            terms: Vec::new(),
            hook: None,
        },
        MaterialMode::Elastic => MaterialSetup {
            terms: iso_terms(mesh, positions),
            hook: None,
        },
        MaterialMode::Plastic => MaterialSetup {
            terms: iso_terms(mesh, positions),
            hook: Some(PlasticHook),
        },
    }
}

/// Re-anchors isometry references at the current positions after every
/// accepted iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlasticHook;

impl RoundHook for PlasticHook {
    fn update(
        &mut self,
        _mesh: &QuadMesh,
        state: &State,
        system: &mut System,
    ) -> Result<Update, SolverError> {
        let Some(block) = system.block_mut(Family::Iso) else {
            return Ok(Update::Unchanged);
        };
        for term in &mut block.terms {
            if let Term::Iso { corners, reference } = term {
                *reference = diagonal_invariants(corners.map(|v| state.positions[v.idx()]));
            }
        }
        Ok(Update::Values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use crate::mesh::Grid;

    #[test]
    fn modes() {
        let g = Grid::planar(3, 4, 1.0);
        let m = g.mesh();
        assert!(material_mode(MaterialMode::None, m, m.positions())
            .terms
            .is_empty());
        let e = material_mode(MaterialMode::Elastic, m, m.positions());
        assert_eq!(e.terms.len(), m.face_count());
        assert!(e.hook.is_none());
        assert!(material_mode(MaterialMode::Plastic, m, m.positions())
            .hook
            .is_some());
    }

    #[test]
    fn plastic_rows_vanish_against_themselves() {
        let g = Grid::from_fn(4, 4, false, false, |i, j| {
            vec3(j as f64, i as f64, 0.1 * (i * j) as f64)
        })
        .unwrap();
        let m = g.mesh();
        let setup = material_mode(MaterialMode::Plastic, m, g.mesh().positions());
        let mut system = System::new();
        system.push(Family::Iso, 1.0, setup.terms);
        let mut state = State::from_mesh(m).unwrap();
        for p in &mut state.positions {
            p.z += 0.3 * p.x * p.y;
        }
        assert!(system
            .term_energies(Family::Iso, &state)
            .iter()
            .any(|&e| e > 1e-3));
        let update = setup.hook.unwrap().update(m, &state, &mut system).unwrap();
        assert_eq!(update, Update::Values);
        assert!(system
            .term_energies(Family::Iso, &state)
            .iter()
            .all(|&e| e == 0.0));
    }
}
