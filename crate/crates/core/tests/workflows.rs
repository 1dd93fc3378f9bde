//! Library workflows end to end: OBJ exchange, strips, patch growth, the
//! Gauss image and rulings of optimized meshes.

use std::sync::Arc;

use proptest::prelude::*;

use devquad::geometry::vec3;
use devquad::io::{read_quad_mesh, write_quad_mesh, ValidationReport};
use devquad::measure::DevMeasure;
use devquad::mesh::Grid;
use devquad::optimize::{optimize, OptimizeOptions, RunStatus, Targets};
use devquad::tools::{
    decompose_strips, gauss_image, grow_patch, prospective_rulings, GrowOptions, GrowStop,
    ReferenceSurface, StripDecomposition,
};

fn wavy(rows: usize, cols: usize, a: f64, b: f64) -> Grid {
    Grid::from_fn(rows, cols, false, false, |i, j| {
        let (x, y) = (
            j as f64 / (cols - 1) as f64 - 0.5,
            i as f64 / (rows - 1) as f64 - 0.5,
        );
        vec3(x, y, a * x * x + b * x * y + 0.1 * (2.0 * y).sin())
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn obj_round_trip_is_exact(rows in 2usize..7, cols in 2usize..7, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let g = wavy(rows, cols, a, b);
        let mut text = Vec::new();
        write_quad_mesh(g.mesh(), &mut text).unwrap();
        let back = read_quad_mesh(text.as_slice()).unwrap();
        prop_assert_eq!(back.positions(), g.mesh().positions());
        prop_assert_eq!(back.face_indices(), g.mesh().face_indices());
    }

    #[test]
    fn gauss_degeneracy_is_the_determinant_residual(rows in 4usize..7, cols in 4usize..7, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let g = wavy(rows, cols, a, b);
        let image = gauss_image(g.mesh()).unwrap();
        let dev = DevMeasure::rederived(g.mesh()).unwrap();
        prop_assert_eq!(image.degeneracy.len(), dev.len());
        for ((f, d), (&gf, e)) in image.degeneracy.iter().zip(dev.faces.iter().zip(&dev.determinant)) {
            prop_assert_eq!(*f, gf);
            prop_assert!((d * d - e).abs() <= 1e-12 * e.max(1e-30), "{} vs {}", d * d, e);
        }
    }
}

#[test]
fn optimized_mesh_has_a_degenerate_gauss_image() {
    let g = wavy(8, 8, 0.6, 0.4);
    let fixed =
        g.boundary_vertices()
            .iter()
            .fold(vec![false; g.mesh().vertex_count()], |mut m, v| {
                m[v.idx()] = true;
                m
            });
    let before = gauss_image(g.mesh()).unwrap().max_degeneracy();
    let out = optimize(
        g.mesh(),
        &Targets::fixed(fixed.clone()),
        OptimizeOptions::default(),
    )
    .unwrap();
    assert_eq!(out.status, RunStatus::Converged);
    let after = gauss_image(&out.mesh).unwrap().max_degeneracy();
    assert!(after < 1e-6 * before, "{before:e} -> {after:e}");
    let report = ValidationReport::of_run(&out, g.mesh().positions(), &fixed).unwrap();
    assert_eq!(report.max_boundary_drift, Some(0.0));
    assert!(report.gauss_max_degeneracy < 1e-6 * before);
    // one ruling per interior edge pair
    let field = prospective_rulings(&out.mesh).unwrap();
    assert_eq!(field.lines.len(), out.mesh.interior_halfedges().count() / 2);
}

#[test]
fn strips_optimize_independently_and_reassemble() {
    let g = Grid::from_fn(9, 13, false, false, |i, j| {
        let (x, y) = (j as f64 / 12.0 - 0.5, i as f64 / 8.0 - 0.5);
        vec3(x, y, 0.5 * (x * x + y * y))
    })
    .unwrap();
    let mesh = g.mesh();
    let d = decompose_strips(mesh, &[g.column(4), g.column(8)]).unwrap();
    assert_eq!(d.strips.len(), 3);
    let mut positions = Vec::new();
    for strip in &d.strips {
        let out = optimize(
            &strip.mesh,
            &Targets::fixed(strip.fixed.clone()),
            OptimizeOptions::default(),
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        positions.push(out.mesh.positions().to_vec());
    }
    let merged = d.assemble(mesh.positions(), &positions);
    for &v in &d.shared {
        assert_eq!(merged[v.idx()], mesh.position(v));
    }
    // the sidecar reproduces the decomposition
    let again = StripDecomposition::from_sidecar(mesh, &d.to_sidecar()).unwrap();
    assert_eq!(again.strips.len(), d.strips.len());
    for (a, b) in again.strips.iter().zip(&d.strips) {
        assert_eq!(a.faces, b.faces);
    }
}

#[test]
fn growth_on_a_cylinder_reaches_the_ring_limit() {
    let m = 41;
    let cylinder = Grid::from_fn(m, m, false, false, |i, j| {
        let t = 1.6 * (j as f64 / (m - 1) as f64 - 0.5);
        vec3(1.6 * (i as f64 / (m - 1) as f64 - 0.5), t.sin(), t.cos())
    })
    .unwrap();
    let reference = Arc::new(ReferenceSurface::from_quad_mesh(cylinder.mesh()));
    let h = 0.08;
    let seed = Grid::from_fn(3, 3, false, false, |i, j| {
        let t = h * (j as f64 - 1.0);
        vec3(h * (i as f64 - 1.0), t.sin(), t.cos())
    })
    .unwrap();
    let options = GrowOptions {
        tolerance: 1e-3,
        max_rings: 3,
        ..GrowOptions::default()
    };
    let out = grow_patch(&seed, reference, &options).unwrap();
    // a developable reference never forces growth to stop early
    assert_eq!(out.stop, GrowStop::MaxRings);
    assert_eq!((out.grid.rows(), out.grid.cols()), (9, 9));
    assert!(out.max_distance <= 1e-3, "{}", out.max_distance);
}
