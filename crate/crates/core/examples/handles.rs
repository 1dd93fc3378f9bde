//! Drags a corner of a flat sheet upwards with a handle while the opposite
//! edge stays fixed, once per material mode. Elastic isometry rows pair
//! faces with the starting sheet; plastic rows pair them with the previous
//! iterate, so the sheet may stretch over many iterations.
//!
//! Run with `cargo run --release --example handles`.

use devquad::geometry::vec3;
use devquad::mesh::Grid;
use devquad::optimize::{optimize, OptimizeOptions, Targets};
use devquad::residuals::Weights;
use devquad::tools::MaterialMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 9;
    let grid = Grid::planar(n, n, 1.0 / (n - 1) as f64);
    let mesh = grid.mesh();
    let mut fixed = vec![false; mesh.vertex_count()];
    for v in grid.row(0) {
        fixed[v.idx()] = true;
    }
    let corner = grid.vertex(n - 1, n - 1);
    let target = vec3(1.0, 0.8, 0.5);
    let weights = Weights {
        iso: 10.0,
        ..Weights::default()
    };
    for material in [
        MaterialMode::None,
        MaterialMode::Elastic,
        MaterialMode::Plastic,
    ] {
        let targets = Targets {
            fixed: fixed.clone(),
            handles: vec![(corner, target)],
            material,
            ..Targets::default()
        };
        let out = optimize(mesh, &targets, OptimizeOptions::with_weights(weights))?;
        let reached = (out.mesh.position(corner) - target).norm();
        // isometry rows compare face diagonals with the starting sheet
        let stretch = mesh
            .faces()
            .iter()
            .flat_map(|q| [(q[0], q[2]), (q[1], q[3])])
            .map(|(a, b)| {
                let before = (mesh.position(a) - mesh.position(b)).norm();
                let after = (out.mesh.position(a) - out.mesh.position(b)).norm();
                (after / before - 1.0).abs()
            })
            .fold(0.0, f64::max);
        println!(
            "{material:?}: {:?} in {} iterations, handle off by {reached:.3e}, per-face E_dev {:.3e}, max diagonal stretch {:.1}%",
            out.status,
            out.iterations,
            out.dev.per_face(),
            100.0 * stretch
        );
    }
    Ok(())
}
