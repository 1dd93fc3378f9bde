//! Lofting between two skew lines has no developable solution. The
//! optimizer reports the run as unreachable and concentrates the remaining
//! error on few faces, which marks where the design must change.
//!
//! Run with `cargo run --release --example skew_lines`.

use devquad::geometry::vec3;
use devquad::optimize::{loft_schedule, optimize, OptimizeOptions, RunStatus, Targets};
use devquad::tools::{loft_init, segment, LoftOptions, MaterialMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 43;
    let a = segment(vec3(-1.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), n);
    let b = segment(vec3(0.0, -1.0, 1.0), vec3(0.0, 1.0, 1.0), n);
    let loft = loft_init(
        &a,
        &b,
        LoftOptions {
            rows: n,
            samples: None,
            closed: false,
        },
    )?;
    let options = OptimizeOptions {
        stages: loft_schedule(),
        ..OptimizeOptions::default()
    };
    let mut targets = Targets::fixed(loft.fixed.clone());
    targets.material = MaterialMode::Plastic;
    let out = optimize(loft.grid.mesh(), &targets, options)?;
    println!(
        "{} faces: {:?} ({:?}), per-face E_dev {:.3e}",
        loft.grid.mesh().face_count(),
        out.status,
        out.termination,
        out.dev.per_face()
    );
    println!(
        "max {:.3e} / median {:.3e} = {:.0}",
        out.dev.max(),
        out.dev.median(),
        out.dev.max() / out.dev.median()
    );
    let mut worst: Vec<(usize, f64)> = out
        .dev
        .faces
        .iter()
        .map(|f| f.idx())
        .zip(out.dev.vector.iter().copied())
        .collect();
    worst.sort_by(|x, y| y.1.total_cmp(&x.1));
    println!("worst faces: {:?}", &worst[..5]);
    assert_eq!(out.status, RunStatus::Unreachable);
    Ok(())
}
