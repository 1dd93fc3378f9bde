//! Lofts a circle to an ellipse, optimizes the ruled initialization with both
//! boundary loops fixed and writes the result as OBJ.
//!
//! Run with `cargo run --release --example loft`.

use devquad::io::{save_mesh, ValidationReport};
use devquad::optimize::{loft_schedule, optimize, OptimizeOptions, Targets};
use devquad::tools::{ellipse, loft_init, LoftOptions, MaterialMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 32;
    let loft = loft_init(
        &ellipse(1.0, 1.0, 0.0, n),
        &ellipse(1.3, 0.7, 1.0, n),
        LoftOptions {
            rows: 32,
            samples: None,
            closed: true,
        },
    )?;
    let mesh = loft.grid.mesh();
    let before = devquad::io::validate(mesh)?;
    println!(
        "ruled start: {} faces, per-face E_dev {:.3e}",
        mesh.face_count(),
        before.dev_per_face
    );

    // four stiff-fairness iterations, then the relaxed stage; isometry pairs
    // every face with the previous iterate
    let options = OptimizeOptions {
        stages: loft_schedule(),
        ..OptimizeOptions::default()
    };
    let mut targets = Targets::fixed(loft.fixed.clone());
    targets.material = MaterialMode::Plastic;
    let out = optimize(mesh, &targets, options)?;

    for row in &out.trace.rows {
        if row.accepted {
            println!(
                "{:>4}  total {:.3e}  {}",
                row.iteration,
                row.total,
                row.event.as_deref().unwrap_or("")
            );
        }
    }
    let report = ValidationReport::of_run(&out, mesh.positions(), &loft.fixed)?;
    println!(
        "{:?} after {} iterations in {:.2?}: per-face E_dev {:.3e}, max {:.3e}, boundary drift {:e}",
        out.status,
        out.iterations,
        out.elapsed,
        report.dev_per_face,
        report.dev_max,
        report.max_boundary_drift.unwrap_or(0.0)
    );
    let dir = std::env::temp_dir().join("devquad-examples");
    std::fs::create_dir_all(&dir)?;
    save_mesh(&out.mesh, dir.join("loft.obj"))?;
    report.save(dir.join("loft-report.json"))?;
    println!("wrote {}", dir.join("loft.obj").display());
    Ok(())
}
