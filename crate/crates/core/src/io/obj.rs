//! Wavefront OBJ: quad meshes, triangle references, point clouds and line
//! sets.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::geometry::{vec3, Vec3};
use crate::mesh::{MeshError, QuadMesh};

use super::IoError;

/// Raw OBJ content: vertices, polygon faces and polyline elements, with
/// zero-based indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjData {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Vec<usize>>,
    pub lines: Vec<Vec<usize>>,
}

fn parse_index(token: &str, count: usize, line: usize) -> Result<usize, IoError> {
    let head = token.split('/').next().unwrap_or("");
    let i: i64 = head.parse().map_err(|_| IoError::Parse {
        line,
        message: format!("bad index `{token}`"),
    })?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(IoError::Parse {
            line,
            message: format!("index {i} out of range for {count} vertices"),
        });
    }
    Ok(resolved as usize)
}

/// Parses vertices, faces and lines; other records are ignored.
pub fn parse_obj(reader: impl BufRead) -> Result<ObjData, IoError> {
    let mut data = ObjData::default();
    for (n, text) in reader.lines().enumerate() {
        let line = n + 1;
        let text = text.map_err(|e| IoError::Io(e.to_string()))?;
        let mut tokens = text.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let c: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| IoError::Parse {
                        line,
                        message: format!("bad coordinate: {e}"),
                    })?;
                if c.len() != 3 {
                    return Err(IoError::Parse {
                        line,
                        message: "vertex needs three coordinates".into(),
                    });
                }
                data.vertices.push(vec3(c[0], c[1], c[2]));
            }
            Some(kind @ ("f" | "l")) => {
                let count = data.vertices.len();
                let idx = tokens
                    .map(|t| parse_index(t, count, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if kind == "f" {
                    data.faces.push(idx);
                } else {
                    data.lines.push(idx);
                }
            }
            _ => {}
        }
    }
    Ok(data)
}

/// Builds a quad mesh; any face with a different vertex count fails.
pub fn quad_mesh_from_obj(data: ObjData) -> Result<QuadMesh, IoError> {
    let mut quads = Vec::with_capacity(data.faces.len());
    for (f, face) in data.faces.iter().enumerate() {
        if face.len() != 4 {
            return Err(MeshError::NonQuadFace {
                face: f,
                count: face.len(),
            }
            .into());
        }
        quads.push([face[0], face[1], face[2], face[3]]);
    }
    Ok(QuadMesh::new(data.vertices, quads)?)
}

pub fn read_quad_mesh(reader: impl BufRead) -> Result<QuadMesh, IoError> {
    quad_mesh_from_obj(parse_obj(reader)?)
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, IoError> {
    let file =
        std::fs::File::open(path).map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
    Ok(std::io::BufReader::new(file))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, IoError> {
    let file =
        std::fs::File::create(path).map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

/// Loads a quad mesh; vertex order in the file defines orientation.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<QuadMesh, IoError> {
    read_quad_mesh(open(path.as_ref())?)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<ObjData, IoError> {
    parse_obj(open(path.as_ref())?)
}

/// Writes coordinates in shortest round-trip form, so reading back is exact.
pub fn write_quad_mesh(mesh: &QuadMesh, mut w: impl Write) -> Result<(), IoError> {
    let io = |e: std::io::Error| IoError::Io(e.to_string());
    for p in mesh.positions() {
        writeln!(w, "v {:e} {:e} {:e}", p.x, p.y, p.z).map_err(io)?;
    }
    for q in mesh.faces() {
        writeln!(
            w,
            "f {} {} {} {}",
            q[0].0 + 1,
            q[1].0 + 1,
            q[2].0 + 1,
            q[3].0 + 1
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_mesh(mesh: &QuadMesh, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_quad_mesh(mesh, create(path.as_ref())?)
}

/// Writes segments as two-vertex line elements.
pub fn write_line_set(segments: &[[Vec3; 2]], mut w: impl Write) -> Result<(), IoError> {
    let io = |e: std::io::Error| IoError::Io(e.to_string());
    for [a, b] in segments {
        writeln!(w, "v {:e} {:e} {:e}", a.x, a.y, a.z).map_err(io)?;
        writeln!(w, "v {:e} {:e} {:e}", b.x, b.y, b.z).map_err(io)?;
    }
    for i in 0..segments.len() {
        writeln!(w, "l {} {}", 2 * i + 1, 2 * i + 2).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_line_set(segments: &[[Vec3; 2]], path: impl AsRef<Path>) -> Result<(), IoError> {
    write_line_set(segments, create(path.as_ref())?)
}

impl ObjData {
    /// Faces fanned into triangles.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        self.faces
            .iter()
            .filter(|f| f.len() >= 3)
            .flat_map(|f| (1..f.len() - 1).map(move |i| [f[0], f[i], f[i + 1]]))
            .collect()
    }

    /// All vertices, plus points inserted along line elements so that no
    /// gap exceeds `spacing`.
    pub fn sample_points(&self, spacing: Option<f64>) -> Vec<Vec3> {
        let mut out = self.vertices.clone();
        let Some(h) = spacing.filter(|h| *h > 0.0) else {
            return out;
        };
        for line in &self.lines {
            for w in line.windows(2) {
                let (a, b) = (self.vertices[w[0]], self.vertices[w[1]]);
                let n = ((b - a).norm() / h).ceil() as usize;
                out.extend((1..n).map(|k| a + (b - a) * (k as f64 / n as f64)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;

    fn read(text: &str) -> Result<QuadMesh, IoError> {
        read_quad_mesh(text.as_bytes())
    }

    #[test]
    fn two_by_two_grid() {
        let text = "# 2x2\nv 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nv 1 1 0\nv 2 1 0\nv 0 2 0\nv 1 2 0\nv 2 2 0\n\
                    f 1 2 5 4\nf 2/1 3/2 6/3 5/4\nf 4//1 5//1 8//1 7//1\nf -5 -4 -1 -2\n";
        let m = read(text).unwrap();
        assert_eq!(m.vertex_count(), 9);
        assert_eq!(m.face_count(), 4);
        assert!(m.singular_vertices().is_empty());
    }

    #[test]
    fn triangle_is_rejected() {
        let err = read("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\nf 1 2 3\n").unwrap_err();
        assert_eq!(
            err,
            IoError::Mesh(MeshError::NonQuadFace { face: 1, count: 3 })
        );
    }

    #[test]
    fn same_direction_edge_is_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 2 0 0\nv 2 1 0\nf 1 2 3 4\nf 2 3 6 5\n";
        assert!(matches!(
            read(text).unwrap_err(),
            IoError::Mesh(MeshError::InconsistentOrientation { from: 1, to: 2, .. })
        ));
    }

    #[test]
    fn bad_records() {
        assert!(matches!(
            read("v 0 0\n"),
            Err(IoError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read("v 0 0 0\nf 1 2 3 4\n"),
            Err(IoError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let g = Grid::from_fn(4, 5, false, false, |i, j| {
            vec3(
                0.1 * j as f64,
                (i as f64).sqrt(),
                std::f64::consts::PI * (i * j) as f64,
            )
        })
        .unwrap();
        let mut buf = Vec::new();
        write_quad_mesh(g.mesh(), &mut buf).unwrap();
        let back = read_quad_mesh(buf.as_slice()).unwrap();
        assert_eq!(back.positions(), g.mesh().positions());
        assert_eq!(back.faces(), g.mesh().faces());
    }

    #[test]
    fn line_sets_and_sampling() {
        let seg = [[vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0)]];
        let mut buf = Vec::new();
        write_line_set(&seg, &mut buf).unwrap();
        let data = parse_obj(buf.as_slice()).unwrap();
        assert_eq!(data.lines, vec![vec![0, 1]]);
        let pts = data.sample_points(Some(0.3));
        assert_eq!(pts.len(), 2 + 3);
        assert_eq!(data.sample_points(None).len(), 2);
    }

    #[test]
    fn fan_triangulation() {
        let data = parse_obj(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 2 0 0\nf 1 2 3 4\nf 2 5 3\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(data.triangles(), vec![[0, 1, 2], [0, 2, 3], [1, 4, 2]]);
    }
}
