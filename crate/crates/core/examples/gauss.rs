//! The Gauss image of a developable is a curve: the normals of a face strip
//! trace a polyline on the unit sphere, and consecutive normal differences
//! are coplanar. This example optimizes a perturbed cone and compares the
//! Gauss degeneracy before and after.
//!
//! Run with `cargo run --release --example gauss`.

use devquad::geometry::vec3;
use devquad::io::save_line_set;
use devquad::mesh::Grid;
use devquad::optimize::{optimize, OptimizeOptions, Targets};
use devquad::tools::gauss_image;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (rows, cols) = (10, 16);
    let grid = Grid::from_fn(rows, cols, false, false, |i, j| {
        let t = 1.2 * j as f64 / (cols - 1) as f64;
        let r = 1.0 + i as f64 / (rows - 1) as f64;
        // a cone with a small bump
        let bump = 0.03 * (3.0 * t).sin() * (i as f64 * 0.7).cos();
        vec3(r * t.cos(), r * t.sin(), 0.8 * r + bump)
    })?;
    let mesh = grid.mesh();
    let mut fixed = vec![false; mesh.vertex_count()];
    for v in grid.row(0) {
        fixed[v.idx()] = true;
    }
    let before = gauss_image(mesh)?;
    let out = optimize(mesh, &Targets::fixed(fixed), OptimizeOptions::default())?;
    let after = gauss_image(&out.mesh)?;
    for (name, g) in [("before", &before), ("after", &after)] {
        println!(
            "{name}: {} points, {} segments, max degeneracy {:.3e}",
            g.points.len(),
            g.segments.len(),
            g.max_degeneracy()
        );
    }
    let dir = std::env::temp_dir().join("devquad-examples");
    std::fs::create_dir_all(&dir)?;
    save_line_set(&after.segment_points(), dir.join("gauss.obj"))?;
    println!("wrote {}", dir.join("gauss.obj").display());
    Ok(())
}
