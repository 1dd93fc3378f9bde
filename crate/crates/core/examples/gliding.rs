//! A flat sheet with one fixed edge glides along a space curve: cloud
//! points near the sheet pull it towards them through tangent-plane
//! distances, so the sheet may slide along the curve instead of pinning
//! fixed correspondences.
//!
//! Run with `cargo run --release --example gliding`.

use devquad::geometry::vec3;
use devquad::mesh::Grid;
use devquad::optimize::{OptimizeOptions, Optimizer, Targets};
use devquad::residuals::{State, Weights};
use devquad::tools::GlideHook;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 11;
    let grid = Grid::from_fn(n, n, false, false, |i, j| {
        vec3(j as f64 / (n - 1) as f64, i as f64 / (n - 1) as f64, 0.0)
    })?;
    let mesh = grid.mesh();
    let mut fixed = vec![false; mesh.vertex_count()];
    for v in grid.row(0) {
        fixed[v.idx()] = true;
    }
    // a rising line above the far part of the sheet
    let curve: Vec<_> = (0..=40)
        .map(|k| {
            let x = k as f64 / 40.0;
            vec3(x, 0.8, 0.15 * x)
        })
        .collect();
    let targets = Targets {
        fixed: fixed.clone(),
        glide: curve.clone(),
        ..Targets::default()
    };
    let weights = Weights {
        fair_v: 0.01,
        ..Weights::default()
    };
    let mut opt = Optimizer::new(mesh, &targets, OptimizeOptions::with_weights(weights))?;
    opt.run()?;
    println!("active gliding rows: {}", opt.glide_rows());
    let out = opt.finish()?;

    let state = State::from_mesh(&out.mesh)?;
    let hook = GlideHook::new(curve, devquad::tools::DEFAULT_GLIDE_RADIUS);
    let active = hook.active_set(&out.mesh, out.mesh.positions());
    let worst = active
        .iter()
        .map(|g| {
            let f = out.mesh.face_positions(g.face);
            let b = (f[0] + f[1] + f[2] + f[3]) * 0.25;
            (g.point - b).dot(&state.normals[g.face.idx()]).abs()
        })
        .fold(0.0, f64::max);
    let drift = out
        .mesh
        .positions()
        .iter()
        .zip(mesh.positions())
        .zip(&fixed)
        .filter(|(_, &f)| f)
        .map(|((a, b), _)| (a - b).norm())
        .fold(0.0, f64::max);
    println!(
        "{:?}: per-face E_dev {:.3e}; {} active points, worst tangent-plane distance {:.3e} (bbox diagonal {:.3}); fixed drift {drift}",
        out.status,
        out.dev.per_face(),
        active.len(),
        worst,
        out.mesh.bbox().diagonal()
    );
    Ok(())
}
