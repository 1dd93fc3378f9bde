//! Growing a developable patch over a reference surface ring by ring until
//! it leaves an approximation tolerance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::{trace_polylines, Grid, MeshError, QuadMesh};
use crate::residuals::{DevForm, Family, State, System, VariableLayout, Weights};
use crate::solver::{constrained_minimize, ConstrainedResult, ProjectionConfig, SolverError};

use super::hooks::ProxHook;
use super::reference::ReferenceSurface;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid growth options: {0}")]
    InvalidOptions(String),
}

/// Sides of a grid patch that receive new rows or columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sides {
    /// Before row 0.
    pub first_row: bool,
    /// After the last row.
    pub last_row: bool,
    pub first_column: bool,
    pub last_column: bool,
}

impl Default for Sides {
    fn default() -> Self {
        Sides {
            first_row: true,
            last_row: true,
            first_column: true,
            last_column: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowOptions {
    /// Largest vertex distance to the reference that is accepted.
    pub tolerance: f64,
    pub sides: Sides,
    pub max_rings: usize,
    /// Constraint weights (norm, rul, dev) and fairness weights.
    pub weights: Weights,
    /// Weight of the proximity objective.
    pub proximity: f64,
    pub prox_lambda: f64,
    pub projection: ProjectionConfig,
}

impl Default for GrowOptions {
    fn default() -> Self {
        GrowOptions {
            tolerance: f64::INFINITY,
            sides: Sides::default(),
            max_rings: 8,
            weights: Weights {
                fair_v: 1e-3,
                fair_n: 1e-3,
                ..Weights::default()
            },
            proximity: 1.0,
            prox_lambda: crate::residuals::DEFAULT_PROX_LAMBDA,
            projection: ProjectionConfig::default(),
        }
    }
}

/// Why growth ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowStop {
    /// The next ring exceeded the tolerance.
    Tolerance,
    MaxRings,
}

#[derive(Debug, Clone)]
pub struct GrowResult {
    /// Last accepted patch.
    pub grid: Grid,
    pub rings: usize,
    /// Largest vertex distance of `grid` to the reference.
    pub max_distance: f64,
    /// Largest vertex distance of the rejected ring, if any.
    pub rejected_distance: Option<f64>,
    pub stop: GrowStop,
}

/// Largest distance of `points` to `reference`.
pub fn max_distance(reference: &ReferenceSurface, points: &[Vec3]) -> f64 {
    points
        .iter()
        .filter_map(|p| reference.closest_point(p).ok())
        .map(|c| c.distance())
        .fold(0.0, f64::max)
}

/// Adds one row or column on each selected side by linear extrapolation.
pub fn extend(grid: &Grid, sides: Sides) -> Result<Grid, MeshError> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let p = grid.mesh().positions();
    let at = |i: usize, j: usize| p[i * cols + j];
    let (r0, c0) = (sides.first_row as usize, sides.first_column as usize);
    let new_rows = rows + r0 + sides.last_row as usize;
    let new_cols = cols + c0 + sides.last_column as usize;
    // source index and extrapolation step along one direction
    let map = |k: usize, n: usize, before: usize| -> (usize, isize) {
        if k < before {
            (0, -1)
        } else if k - before >= n {
            (n - 1, 1)
        } else {
            (k - before, 0)
        }
    };
    Grid::from_fn(new_rows, new_cols, false, false, |i, j| {
        let (si, di) = map(i, rows, r0);
        let (sj, dj) = map(j, cols, c0);
        let base = at(si, sj);
        let mut q = base;
        if di != 0 {
            let inner = (si as isize - di) as usize;
            q += base - at(inner, sj);
        }
        if dj != 0 {
            let inner = (sj as isize - dj) as usize;
            q += base - at(si, inner);
        }
        if di != 0 && dj != 0 {
            // corners extrapolate bilinearly
            let (ii, jj) = ((si as isize - di) as usize, (sj as isize - dj) as usize);
            q += base - at(ii, sj) - at(si, jj) + at(ii, jj);
        }
        q
    })
}

/// Fits `mesh` to `reference`: the developability rows (normal, ruling
/// and developability families) are constraints; fairness and proximity
/// form the objective. Uses the weights, proximity and projection settings
/// of `options`; vertices flagged in `fixed` stay put.
pub fn approximate(
    mesh: &QuadMesh,
    fixed: &[bool],
    reference: &Arc<ReferenceSurface>,
    options: &GrowOptions,
) -> Result<ConstrainedResult, GrowError> {
    options
        .weights
        .validate()
        .map_err(|e| GrowError::InvalidOptions(e.to_string()))?;
    if !fixed.is_empty() && fixed.len() != mesh.vertex_count() {
        return Err(GrowError::InvalidOptions(format!(
            "fixed mask has {} entries for {} vertices",
            fixed.len(),
            mesh.vertex_count()
        )));
    }
    let fixed = if fixed.is_empty() {
        vec![false; mesh.vertex_count()]
    } else {
        fixed.to_vec()
    };
    let polylines = trace_polylines(mesh);
    let full = System::developability(mesh, &polylines, &options.weights, DevForm::Vector);
    let constraints = full.filtered(|f| f.is_constraint());
    let mut objective = full.filtered(|f| !f.is_constraint());
    objective.push(Family::Prox, options.proximity, Vec::new());
    let layout = VariableLayout::new(mesh, &fixed);
    let free = fixed.iter().map(|f| !f).collect();
    let mut hook = ProxHook::new(reference.clone(), free, options.prox_lambda);
    let state = State::from_mesh(mesh)?;
    Ok(constrained_minimize(
        mesh,
        &layout,
        state,
        &constraints,
        objective,
        &options.projection,
        Some(&mut hook),
    )?)
}

fn fit(
    grid: &Grid,
    reference: &Arc<ReferenceSurface>,
    options: &GrowOptions,
) -> Result<Grid, GrowError> {
    let out = approximate(grid.mesh(), &[], reference, options)?;
    Ok(grid.with_positions(out.state.positions)?)
}

/// Grows `seed` over `reference`. Every ring is extrapolated, then fitted
/// to the reference under the developability constraints; growth stops at
/// the first ring whose largest vertex distance exceeds the tolerance.
pub fn grow_patch(
    seed: &Grid,
    reference: Arc<ReferenceSurface>,
    options: &GrowOptions,
) -> Result<GrowResult, GrowError> {
    if seed.closed_u() || seed.closed_v() {
        return Err(GrowError::InvalidOptions(
            "seed must be an open grid".into(),
        ));
    }
    let s = options.sides;
    if !(s.first_row || s.last_row || s.first_column || s.last_column) {
        return Err(GrowError::InvalidOptions("no side selected".into()));
    }
    if options.tolerance.is_nan() || options.tolerance < 0.0 {
        return Err(GrowError::InvalidOptions(format!(
            "tolerance must be nonnegative, got {}",
            options.tolerance
        )));
    }
    let mut grid = seed.clone();
    let mut current = max_distance(&reference, grid.mesh().positions());
    for ring in 0..options.max_rings {
        let next = fit(&extend(&grid, s)?, &reference, options)?;
        let d = max_distance(&reference, next.mesh().positions());
        if d > options.tolerance {
            return Ok(GrowResult {
                grid,
                rings: ring,
                max_distance: current,
                rejected_distance: Some(d),
                stop: GrowStop::Tolerance,
            });
        }
        grid = next;
        current = d;
    }
    Ok(GrowResult {
        grid,
        rings: options.max_rings,
        max_distance: current,
        rejected_distance: None,
        stop: GrowStop::MaxRings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;

    fn cylinder_reference() -> Arc<ReferenceSurface> {
        let g = Grid::from_fn(41, 41, false, false, |i, j| {
            let t = (j as f64 - 20.0) * 0.05;
            vec3(t.sin(), (i as f64 - 20.0) * 0.05, t.cos())
        })
        .unwrap();
        Arc::new(ReferenceSurface::from_quad_mesh(g.mesh()))
    }

    fn seed() -> Grid {
        Grid::from_fn(3, 3, false, false, |i, j| {
            vec3(0.1 * (j as f64 - 1.0), 0.1 * (i as f64 - 1.0), 1.0)
        })
        .unwrap()
    }

    #[test]
    fn extension_is_linear() {
        let g = Grid::planar(2, 3, 1.0);
        let e = extend(&g, Sides::default()).unwrap();
        assert_eq!((e.rows(), e.cols()), (4, 5));
        let p = e.mesh().positions();
        for i in 0..4 {
            for j in 0..5 {
                let q = p[i * 5 + j];
                assert!((q - vec3(j as f64 - 1.0, i as f64 - 1.0, 0.0)).norm() < 1e-15);
            }
        }
        let only = extend(
            &g,
            Sides {
                first_row: false,
                last_row: true,
                first_column: false,
                last_column: false,
            },
        )
        .unwrap();
        assert_eq!((only.rows(), only.cols()), (3, 3));
    }

    #[test]
    fn unlimited_tolerance_grows_to_max_rings() {
        let out = grow_patch(
            &seed(),
            cylinder_reference(),
            &GrowOptions {
                max_rings: 2,
                ..GrowOptions::default()
            },
        )
        .unwrap();
        assert_eq!(out.stop, GrowStop::MaxRings);
        assert_eq!(out.rings, 2);
        assert_eq!(out.grid.rows(), 7);
        // the cylinder is developable: the patch follows it closely
        assert!(out.max_distance < 1e-3, "{}", out.max_distance);
    }

    #[test]
    fn zero_tolerance_returns_the_seed() {
        let out = grow_patch(
            &Grid::from_fn(3, 3, false, false, |i, j| {
                vec3(0.1 * j as f64, 0.1 * i as f64, 1.5)
            })
            .unwrap(),
            cylinder_reference(),
            &GrowOptions {
                tolerance: 0.0,
                ..GrowOptions::default()
            },
        )
        .unwrap();
        assert_eq!(out.stop, GrowStop::Tolerance);
        assert_eq!(out.rings, 0);
        assert_eq!(out.grid.rows(), 3);
    }
}
