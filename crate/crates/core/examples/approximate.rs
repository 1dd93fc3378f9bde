//! Approximates a sphere with a developable patch: a small seed grid is
//! grown ring by ring, every ring fitted to the sphere under developability
//! constraints, until the next ring would leave the distance tolerance.
//!
//! Run with `cargo run --release --example approximate`.

use std::sync::Arc;

use devquad::geometry::vec3;
use devquad::mesh::Grid;
use devquad::tools::{grow_patch, GrowOptions, ReferenceSurface};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // unit sphere cap sampled as a fine quad mesh
    let m = 61;
    let sphere = Grid::from_fn(m, m, false, false, |i, j| {
        let (u, v) = (
            1.6 * (j as f64 / (m - 1) as f64 - 0.5),
            1.6 * (i as f64 / (m - 1) as f64 - 0.5),
        );
        vec3(u, v, 1.0).normalize()
    })?;
    let reference = Arc::new(ReferenceSurface::from_quad_mesh(sphere.mesh()));
    let h = 0.06;
    let seed = Grid::from_fn(3, 3, false, false, |i, j| {
        vec3(h * (j as f64 - 1.0), h * (i as f64 - 1.0), 1.0).normalize()
    })?;
    for tolerance in [2e-3, 1e-2] {
        let out = grow_patch(
            &seed,
            reference.clone(),
            &GrowOptions {
                tolerance,
                ..GrowOptions::default()
            },
        )?;
        println!(
            "tolerance {tolerance:e}: {} rings ({:?}), {}x{} grid, max distance {:.3e}, next ring {}",
            out.rings,
            out.stop,
            out.grid.rows(),
            out.grid.cols(),
            out.max_distance,
            out.rejected_distance.map_or("-".into(), |d| format!("{d:.3e}"))
        );
    }
    Ok(())
}
