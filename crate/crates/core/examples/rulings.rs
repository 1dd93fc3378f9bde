//! Prospective rulings predict the rulings a strip would get before it is
//! optimized. On the saddle z = xy the rulings follow the coordinate
//! directions: a grid aligned with them gets rulings across its boundary,
//! while a grid rotated by 45 degrees gets rulings running along its
//! boundary, which the tangency check flags as a likely failure.
//!
//! Run with `cargo run --release --example rulings`.

use devquad::geometry::vec3;
use devquad::io::save_line_set;
use devquad::mesh::Grid;
use devquad::tools::prospective_rulings;

fn saddle(rotation: f64) -> Result<Grid, devquad::mesh::MeshError> {
    let n = 9;
    let (c, s) = (rotation.cos(), rotation.sin());
    Grid::from_fn(n, n, false, false, |i, j| {
        let (u, v) = (
            j as f64 / (n - 1) as f64 - 0.5,
            i as f64 / (n - 1) as f64 - 0.5,
        );
        let (x, y) = (c * u - s * v, s * u + c * v);
        vec3(x, y, x * y)
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("devquad-examples");
    std::fs::create_dir_all(&dir)?;
    for (name, angle) in [("aligned", 0.0), ("rotated", std::f64::consts::FRAC_PI_4)] {
        let grid = saddle(angle)?;
        let field = prospective_rulings(grid.mesh())?;
        println!(
            "{name}: {} ruling lines, {} zero, {} nearly tangent to the boundary in {} runs",
            field.lines.len(),
            field.zero_count(),
            field.tangent_count(),
            field.tangent_runs.len()
        );
        let path = dir.join(format!("rulings-{name}.obj"));
        save_line_set(&field.segments(0.5 * grid.mesh().mean_edge_length()), &path)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
