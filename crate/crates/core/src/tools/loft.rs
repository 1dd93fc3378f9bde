//! Ruled initial meshes between two boundary curves.

use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::{Grid, MeshError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoftError {
    #[error("curves cannot be matched: {0}")]
    CountMismatch(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Options of [`loft_init`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoftOptions {
    /// Vertex rows between and including the two curves; at least 4.
    pub rows: usize,
    /// Samples per curve. `None` keeps equal-count inputs verbatim and
    /// resamples unequal ones to the larger count.
    pub samples: Option<usize>,
    /// Both curves are closed loops.
    pub closed: bool,
}

/// A lofted grid with its boundary rows marked fixed.
#[derive(Debug, Clone)]
pub struct Loft {
    pub grid: Grid,
    pub fixed: Vec<bool>,
}

/// Resamples a polyline to `n` points equally spaced in arc length. Open
/// curves keep both end points; closed curves start at the first point.
pub fn resample_arc_length(curve: &[Vec3], n: usize, closed: bool) -> Result<Vec<Vec3>, LoftError> {
    let min = if closed { 3 } else { 2 };
    if curve.len() < min || n < min {
        return Err(LoftError::CountMismatch(format!(
            "need at least {min} points, have {} and {n} requested",
            curve.len()
        )));
    }
    let mut pts = curve.to_vec();
    if closed {
        pts.push(curve[0]);
    }
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(LoftError::CountMismatch("curve has zero length".into()));
    }
    let segments = if closed { n } else { n - 1 };
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let s = total * i as f64 / segments as f64;
        while k + 2 < cum.len() && cum[k + 1] < s {
            k += 1;
        }
        let len = cum[k + 1] - cum[k];
        let t = if len > 0.0 {
            ((s - cum[k]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(pts[k] + (pts[k + 1] - pts[k]) * t);
    }
    if !closed {
        out[n - 1] = *curve.last().unwrap();
    }
    Ok(out)
}

/// Connects two curves by a ruled quad grid: row `k` interpolates the
/// matched samples linearly at `t = k / (rows - 1)`. Rows 0 and `rows - 1`
/// are the (possibly resampled) inputs and are marked fixed.
pub fn loft_init(
    curve_a: &[Vec3],
    curve_b: &[Vec3],
    options: LoftOptions,
) -> Result<Loft, LoftError> {
    let m = options.rows;
    if m < 4 {
        return Err(LoftError::DegenerateInput(format!(
            "need at least 4 rows, got {m}"
        )));
    }
    let target = options.samples.unwrap_or(curve_a.len().max(curve_b.len()));
    let take = |c: &[Vec3]| {
        if c.len() == target {
            Ok(c.to_vec())
        } else {
            resample_arc_length(c, target, options.closed)
        }
    };
    let a = take(curve_a)?;
    let b = take(curve_b)?;
    let min = if options.closed { 3 } else { 2 };
    if a.len() < min {
        return Err(LoftError::CountMismatch(format!(
            "curves have only {} samples",
            a.len()
        )));
    }
    let gap = a
        .iter()
        .zip(&b)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max);
    let scale = a
        .iter()
        .chain(&b)
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    if gap <= 1e-12 * scale {
        return Err(LoftError::DegenerateInput("curves coincide".into()));
    }
    let n = a.len();
    let grid = Grid::from_fn(m, n, options.closed, false, |i, j| {
        if i == 0 {
            a[j]
        } else if i == m - 1 {
            b[j]
        } else {
            let t = i as f64 / (m - 1) as f64;
            a[j] * (1.0 - t) + b[j] * t
        }
    })?;
    let mut fixed = vec![false; m * n];
    for j in 0..n {
        fixed[j] = true;
        fixed[(m - 1) * n + j] = true;
    }
    Ok(Loft { grid, fixed })
}

/// Circle of radii `(rx, ry)` in the plane `z = z`, sampled with `n` points.
pub fn ellipse(rx: f64, ry: f64, z: f64, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|k| {
            let t = k as f64 / n as f64 * std::f64::consts::TAU;
            Vec3::new(rx * t.cos(), ry * t.sin(), z)
        })
        .collect()
}

/// `n` equally spaced points from `a` to `b`.
pub fn segment(a: Vec3, b: Vec3, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|k| a + (b - a) * (k as f64 / (n - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;

    #[test]
    fn parallel_segments_give_planar_grid() {
        let a = segment(vec3(0.0, 0.0, 0.0), vec3(3.0, 0.0, 0.0), 7);
        let b = segment(vec3(0.0, 2.0, 0.0), vec3(3.0, 2.0, 0.0), 7);
        let l = loft_init(
            &a,
            &b,
            LoftOptions {
                rows: 5,
                samples: None,
                closed: false,
            },
        )
        .unwrap();
        assert_eq!(l.grid.mesh().face_count(), 4 * 6);
        assert!(l.grid.mesh().positions().iter().all(|p| p.z == 0.0));
        assert_eq!(l.grid.row_positions(0), a);
        assert_eq!(l.grid.row_positions(4), b);
        assert_eq!(l.fixed.iter().filter(|&&f| f).count(), 14);
    }

    #[test]
    fn unequal_counts_are_resampled() {
        let a = segment(vec3(0.0, 0.0, 0.0), vec3(3.0, 0.0, 0.0), 4);
        let b = segment(vec3(0.0, 2.0, 0.0), vec3(3.0, 2.0, 0.0), 7);
        let l = loft_init(
            &a,
            &b,
            LoftOptions {
                rows: 4,
                samples: None,
                closed: false,
            },
        )
        .unwrap();
        assert_eq!(l.grid.cols(), 7);
        assert_eq!(l.grid.row_positions(3), b);
        assert!((l.grid.row_positions(0)[1] - vec3(0.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn closed_resampling_is_uniform() {
        let sq = vec![
            vec3(0.0, 0.0, 0.0),
            vec3(1.0, 0.0, 0.0),
            vec3(1.0, 1.0, 0.0),
            vec3(0.0, 1.0, 0.0),
        ];
        let r = resample_arc_length(&sq, 8, true).unwrap();
        assert_eq!(r.len(), 8);
        for k in 0..8 {
            let d = (r[(k + 1) % 8] - r[k]).norm();
            assert!((d - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let a = segment(vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), 5);
        let opts = LoftOptions {
            rows: 5,
            samples: None,
            closed: false,
        };
        assert!(matches!(
            loft_init(&a, &a, opts),
            Err(LoftError::DegenerateInput(_))
        ));
        assert!(matches!(
            loft_init(&a, &[vec3(0.0, 1.0, 0.0)], opts),
            Err(LoftError::CountMismatch(_))
        ));
        let b = segment(vec3(0.0, 1.0, 0.0), vec3(1.0, 1.0, 0.0), 5);
        assert!(matches!(
            loft_init(&a, &b, LoftOptions { rows: 3, ..opts }),
            Err(LoftError::DegenerateInput(_))
        ));
    }
}
