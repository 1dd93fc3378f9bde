//! Splits a doubly curved patch into strips along designer-given cut
//! polylines, optimizes every strip on its own with the cuts fixed and
//! reassembles. Each strip becomes developable while neighbors still meet
//! along the shared cut vertices.
//!
//! Run with `cargo run --release --example strips`.

use devquad::geometry::vec3;
use devquad::io::validate;
use devquad::mesh::Grid;
use devquad::optimize::{optimize, OptimizeOptions, Targets};
use devquad::tools::decompose_strips;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (rows, cols) = (9, 13);
    // a paraboloid patch: no single developable covers it well
    let grid = Grid::from_fn(rows, cols, false, false, |i, j| {
        let (x, y) = (
            j as f64 / (cols - 1) as f64 - 0.5,
            i as f64 / (rows - 1) as f64 - 0.5,
        );
        vec3(x, y, 0.5 * (x * x + y * y))
    })?;
    let mesh = grid.mesh();
    let cuts = vec![grid.column(4), grid.column(8)];
    let decomposition = decompose_strips(mesh, &cuts)?;
    println!(
        "{} strips of widths {:?}; {} shared vertices",
        decomposition.strips.len(),
        decomposition
            .strips
            .iter()
            .map(|s| s.width)
            .collect::<Vec<_>>(),
        decomposition.shared.len()
    );
    println!(
        "whole patch before: per-face E_dev {:.3e}",
        validate(mesh)?.dev_per_face
    );

    let mut optimized = Vec::new();
    for (k, strip) in decomposition.strips.iter().enumerate() {
        let out = optimize(
            &strip.mesh,
            &Targets::fixed(strip.fixed.clone()),
            OptimizeOptions::default(),
        )?;
        println!(
            "strip {k}: {} faces, {:?}, per-face E_dev {:.3e}",
            strip.mesh.face_count(),
            out.status,
            out.dev.per_face()
        );
        optimized.push(out.mesh.positions().to_vec());
    }
    let mut result = mesh.clone();
    result.set_positions(decomposition.assemble(mesh.positions(), &optimized))?;
    let moved = decomposition
        .shared
        .iter()
        .map(|&v| (result.position(v) - mesh.position(v)).norm())
        .fold(0.0, f64::max);
    println!("shared vertices moved by at most {moved}");
    let sidecar = toml::to_string_pretty(&decomposition.to_sidecar())?;
    let dir = std::env::temp_dir().join("devquad-examples");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("strips.toml"), sidecar)?;
    println!("wrote {}", dir.join("strips.toml").display());
    Ok(())
}
