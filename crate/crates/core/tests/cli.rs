//! End-to-end runs of the command-line interface on files.

use std::path::{Path, PathBuf};

use devquad::cli::{run, EXIT_ERROR, EXIT_SUCCESS, EXIT_UNREACHABLE};
use devquad::geometry::{vec3, Vec3};
use devquad::io::{load_mesh, load_obj, save_mesh};
use devquad::mesh::Grid;
use devquad::tools::{ellipse, segment};

fn write_curve(path: &Path, points: &[Vec3]) {
    let text: String = points
        .iter()
        .map(|p| format!("v {} {} {}\n", p.x, p.y, p.z))
        .collect();
    std::fs::write(path, text).unwrap();
}

fn devquad(args: &[&str]) -> i32 {
    run(std::iter::once("devquad").chain(args.iter().copied()))
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn file(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn validate_plane_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, out) = (file(&dir, "plane.obj"), file(&dir, "plane.json"));
    save_mesh(Grid::planar(6, 7, 0.5).mesh(), &mesh).unwrap();
    assert_eq!(
        devquad(&["validate", s(&mesh), "--report", s(&out)]),
        EXIT_SUCCESS
    );
    let r = report(&out);
    assert_eq!(r["interior_faces"], 3 * 4);
    assert_eq!(r["dev_total"].as_f64(), Some(0.0));
    assert_eq!(r["dev_max"].as_f64(), Some(0.0));
    assert!(!std::fs::read_to_string(&out).unwrap().contains("-0.0"));
}

#[test]
fn skew_loft_is_unreachable_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (file(&dir, "a.obj"), file(&dir, "b.obj"));
    write_curve(&a, &segment(vec3(-1.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), 43));
    write_curve(&b, &segment(vec3(0.0, -1.0, 1.0), vec3(0.0, 1.0, 1.0), 43));
    let (mesh, out) = (file(&dir, "skew.obj"), file(&dir, "skew.json"));
    let code = devquad(&[
        "loft",
        "--curve-a",
        s(&a),
        "--curve-b",
        s(&b),
        "--rows",
        "43",
        "-o",
        s(&mesh),
        "--report",
        s(&out),
    ]);
    assert_eq!(code, EXIT_UNREACHABLE);
    let r = report(&out);
    assert_eq!(r["status"], "unreachable");
    assert_eq!(r["max_boundary_drift"].as_f64(), Some(0.0));
    assert_eq!(load_mesh(&mesh).unwrap().face_count(), 42 * 42);
}

#[test]
fn closed_loft_converges_and_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (file(&dir, "a.obj"), file(&dir, "b.obj"));
    write_curve(&a, &ellipse(1.0, 1.0, 0.0, 24));
    write_curve(&b, &ellipse(1.2, 0.8, 1.0, 24));
    let (mesh, out, trace, rows) = (
        file(&dir, "loft.obj"),
        file(&dir, "loft.json"),
        file(&dir, "trace.csv"),
        file(&dir, "rows.csv"),
    );
    let code = devquad(&[
        "loft",
        "--curve-a",
        s(&a),
        "--curve-b",
        s(&b),
        "--rows",
        "16",
        "--closed",
        "-o",
        s(&mesh),
        "--report",
        s(&out),
        "--trace",
        s(&trace),
        "--residuals",
        s(&rows),
    ]);
    assert_eq!(code, EXIT_SUCCESS);
    let r = report(&out);
    assert_eq!(r["status"], "converged");
    assert!(r["dev_per_face"].as_f64().unwrap() <= 1e-10);
    assert_eq!(load_mesh(&mesh).unwrap().face_count(), 15 * 24);
    let header = std::fs::read_to_string(&trace).unwrap();
    assert!(header.lines().next().unwrap().contains("dev"), "{header}");
    assert!(std::fs::read_to_string(&rows).unwrap().lines().count() > 1);
}

#[test]
fn optimize_keeps_the_boundary_and_derived_outputs_exist() {
    let dir = tempfile::tempdir().unwrap();
    let input = file(&dir, "bump.obj");
    let g = Grid::from_fn(7, 7, false, false, |i, j| {
        let (x, y) = (j as f64 / 6.0 - 0.5, i as f64 / 6.0 - 0.5);
        vec3(x, y, 0.2 * (x * x - 0.5 * y * y) + 0.05 * (3.0 * x).sin())
    })
    .unwrap();
    save_mesh(g.mesh(), &input).unwrap();
    let (mesh, out) = (file(&dir, "out.obj"), file(&dir, "out.json"));
    let code = devquad(&[
        "optimize",
        s(&input),
        "--fixed-boundary",
        "-o",
        s(&mesh),
        "--report",
        s(&out),
    ]);
    assert_eq!(code, EXIT_SUCCESS);
    assert_eq!(report(&out)["max_boundary_drift"].as_f64(), Some(0.0));

    let (lines, gauss) = (file(&dir, "rulings.obj"), file(&dir, "gauss.obj"));
    assert_eq!(
        devquad(&["rulings", s(&mesh), "-o", s(&lines)]),
        EXIT_SUCCESS
    );
    assert!(!load_obj(&lines).unwrap().lines.is_empty());
    assert_eq!(devquad(&["gauss", s(&mesh), "-o", s(&gauss)]), EXIT_SUCCESS);
    let image = load_obj(&gauss).unwrap();
    assert!(image.vertices.iter().all(|p| (p.norm() - 1.0).abs() < 1e-9));
}

#[test]
fn bad_inputs_exit_with_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let tri = file(&dir, "tri.obj");
    std::fs::write(&tri, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    assert_eq!(devquad(&["validate", s(&tri)]), EXIT_ERROR);
    assert_eq!(devquad(&["teleport"]), EXIT_ERROR);
    assert_eq!(
        devquad(&["optimize", s(&tri), "--tolerance", "fast"]),
        EXIT_ERROR
    );
}
