//! Versioned TOML job description shared by the command line and tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::optimize::OptimizeOptions;
use crate::solver::ProjectionConfig;
use crate::tools::{GrowOptions, MaterialMode};

use super::IoError;

/// The only schema version this build reads.
pub const SCHEMA_VERSION: u32 = 1;

/// Which vertices are excluded from the unknowns.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedSpec {
    #[default]
    None,
    Boundary,
    Vertices(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandleSpec {
    pub vertex: usize,
    pub target: [f64; 3],
}

/// Point cloud or polylines to glide along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlideSpec {
    /// OBJ with `v` records and optional `l` polylines.
    pub path: PathBuf,
    /// Activity radius in mean edge lengths.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Largest gap between points sampled along polylines.
    #[serde(default)]
    pub spacing: Option<f64>,
}

/// Reference surface for proximity rows and approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// OBJ with polygon faces, fanned into triangles.
    pub path: PathBuf,
    #[serde(default)]
    pub lambda: Option<f64>,
}

/// Strips given either as a sidecar file or as cut polylines.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripSpec {
    pub sidecar: Option<PathBuf>,
    /// Vertex index sequences along mesh edges.
    pub cuts: Vec<Vec<usize>>,
}

/// Two boundary curves to loft between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoftSpec {
    /// OBJ polylines: vertex order of each file is the curve order.
    pub curve_a: PathBuf,
    pub curve_b: PathBuf,
    pub rows: usize,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub closed: bool,
}

/// Output files; any may be omitted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub mesh: Option<PathBuf>,
    /// JSON report; a `.csv` extension writes the per-face table instead.
    pub report: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub residuals: Option<PathBuf>,
    pub rulings: Option<PathBuf>,
    pub gauss: Option<PathBuf>,
    /// Strip sidecar written by decompositions.
    pub strips: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub optimize: OptimizeOptions,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub fixed: FixedSpec,
    #[serde(default)]
    pub handles: Vec<HandleSpec>,
    #[serde(default)]
    pub glide: Option<GlideSpec>,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub material: MaterialMode,
    #[serde(default)]
    pub strips: Option<StripSpec>,
    #[serde(default)]
    pub loft: Option<LoftSpec>,
    #[serde(default)]
    pub grow: Option<GrowOptions>,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            schema_version: SCHEMA_VERSION,
            input: None,
            output: OutputSpec::default(),
            optimize: OptimizeOptions::default(),
            projection: ProjectionConfig::default(),
            fixed: FixedSpec::None,
            handles: Vec::new(),
            glide: None,
            reference: None,
            material: MaterialMode::None,
            strips: None,
            loft: None,
            grow: None,
        }
    }
}

impl JobConfig {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let config: JobConfig = toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string_pretty(self).map_err(|e| IoError::Config(e.to_string()))
    }

    /// Reads a config; relative paths inside it resolve against its folder.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        let o = &mut self.output;
        [
            &mut self.input,
            &mut o.mesh,
            &mut o.report,
            &mut o.trace,
            &mut o.residuals,
            &mut o.rulings,
            &mut o.gauss,
            &mut o.strips,
        ]
        .into_iter()
        .flatten()
        .for_each(fix);
        if let Some(g) = &mut self.glide {
            fix(&mut g.path);
        }
        if let Some(r) = &mut self.reference {
            fix(&mut r.path);
        }
        if let Some(s) = self.strips.as_mut().and_then(|s| s.sidecar.as_mut()) {
            fix(s);
        }
        if let Some(l) = &mut self.loft {
            fix(&mut l.curve_a);
            fix(&mut l.curve_b);
        }
    }

    /// Checks the schema version and that weights and tolerances are valid.
    pub fn validate(&self) -> Result<(), IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let bad = |m: String| Err(IoError::Config(m));
        for (i, stage) in self.optimize.stages.iter().enumerate() {
            if let Err(e) = stage.weights.validate() {
                return bad(format!("optimize.stages[{i}]: {e}"));
            }
        }
        if self.optimize.stages.is_empty() {
            return bad("optimize.stages must not be empty".into());
        }
        if let Err(e) = self.optimize.lm.validate() {
            return bad(format!("optimize.lm: {e}"));
        }
        if let Err(e) = self.projection.validate() {
            return bad(format!("projection: {e}"));
        }
        if !(self.optimize.dev_tolerance >= 0.0) {
            return bad("optimize.dev_tolerance must be nonnegative".into());
        }
        if let Some(g) = &self.grow {
            if let Err(e) = g.weights.validate() {
                return bad(format!("grow.weights: {e}"));
            }
        }
        let nonneg = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x >= 0.0 && x.is_finite()) => Err(IoError::Config(format!(
                "{name} must be nonnegative, got {x}"
            ))),
            _ => Ok(()),
        };
        nonneg("glide.radius", self.glide.as_ref().and_then(|g| g.radius))?;
        nonneg("glide.spacing", self.glide.as_ref().and_then(|g| g.spacing))?;
        nonneg(
            "reference.lambda",
            self.reference.as_ref().and_then(|r| r.lambda),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = JobConfig::from_toml("schema_version = 1\ninput = \"a.obj\"\n").unwrap();
        assert_eq!(c.input, Some(PathBuf::from("a.obj")));
        assert_eq!(c.optimize, OptimizeOptions::default());
        assert_eq!(c.fixed, FixedSpec::None);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
schema_version = 1
input = "in.obj"
material = "plastic"
fixed = "boundary"

[output]
mesh = "out.obj"
report = "report.json"

[optimize]
dev_form = "determinant"
dev_tolerance = 1e-7

[[optimize.stages]]
iterations = 4
weights = { fair_v = 0.1, fair_n = 1.0, rul = 10.0, dev = 10.0, iso = 0.1 }

[[optimize.stages]]
weights = { fair_v = 0.01, fair_n = 0.1, rul = 10.0, dev = 10.0, iso = 0.1 }

[[handles]]
vertex = 3
target = [0.0, 1.0, 2.0]

[glide]
path = "curve.obj"
spacing = 0.05
"#;
        let c = JobConfig::from_toml(text).unwrap();
        assert_eq!(c.optimize.stages.len(), 2);
        assert_eq!(c.optimize.stages[0].iterations, Some(4));
        assert_eq!(c.material, MaterialMode::Plastic);
        assert_eq!(c.fixed, FixedSpec::Boundary);
        let back = JobConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(JobConfig::from_toml("schema_version = 1\nspeed = 3\n").is_err());
        assert!(JobConfig::from_toml("schema_version = 1\n[optimize]\nturbo = true\n").is_err());
        assert!(JobConfig::from_toml(
            "schema_version = 1\n[[optimize.stages]]\nweights = { devv = 1.0 }\n"
        )
        .is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(JobConfig::from_toml("schema_version = 2\n").is_err());
        assert!(JobConfig::from_toml("input = \"a.obj\"\n").is_err());
        let neg = "schema_version = 1\n[[optimize.stages]]\nweights = { dev = -1.0 }\n";
        let err = JobConfig::from_toml(neg).unwrap_err();
        assert!(err.to_string().contains("stages[0]"), "{err}");
    }

    #[test]
    fn relative_paths_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("job.toml");
        std::fs::write(
            &path,
            "schema_version = 1\ninput = \"m.obj\"\n[output]\nmesh = \"/abs/o.obj\"\n",
        )
        .unwrap();
        let c = JobConfig::load(&path).unwrap();
        assert_eq!(c.input.unwrap(), dir.path().join("m.obj"));
        assert_eq!(c.output.mesh.unwrap(), PathBuf::from("/abs/o.obj"));
    }
}
