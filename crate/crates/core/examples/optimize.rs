//! The file-based workflow: write a noisy cylinder as OBJ, describe the job
//! in a TOML config and run it through the command-line entry point, then
//! read back the JSON report.
//!
//! Run with `cargo run --release --example optimize`.

use devquad::geometry::vec3;
use devquad::io::{save_mesh, ValidationReport};
use devquad::mesh::Grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("devquad-examples");
    std::fs::create_dir_all(&dir)?;
    let (rows, cols) = (12, 24);
    let grid = Grid::from_fn(rows, cols, false, false, |i, j| {
        let t = 2.0 * j as f64 / (cols - 1) as f64;
        let z = i as f64 / (rows - 1) as f64;
        // deterministic wobble so the start is not developable
        let r = 1.0 + 0.02 * ((7 * i + 3 * j) as f64).sin();
        vec3(r * t.cos(), r * t.sin(), z)
    })?;
    save_mesh(grid.mesh(), dir.join("noisy.obj"))?;
    std::fs::write(
        dir.join("job.toml"),
        r#"schema_version = 1
input = "noisy.obj"
fixed = "boundary"

[output]
mesh = "noisy-opt.obj"
report = "noisy-report.json"
trace = "noisy-trace.csv"

[optimize]
dev_tolerance = 1e-8
"#,
    )?;
    let job = dir.join("job.toml");
    let status = devquad::cli::run([
        "devquad",
        "optimize",
        "--config",
        job.to_str().ok_or("path")?,
    ]);
    let report: ValidationReport =
        serde_json::from_str(&std::fs::read_to_string(dir.join("noisy-report.json"))?)?;
    println!(
        "exit status {status}; {} iterations; per-face E_dev {:.3e}; boundary drift {:e}",
        report.iterations.unwrap_or(0),
        report.dev_per_face,
        report.max_boundary_drift.unwrap_or(f64::NAN)
    );
    for b in &report.blocks {
        println!("  {:>8}: {:.3e}", b.block, b.energy);
    }
    Ok(())
}
