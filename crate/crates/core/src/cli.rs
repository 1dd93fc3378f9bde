//! Command-line workflows. Every subcommand reads an optional TOML job
//! config, applies flag overrides, runs, and writes its outputs.
//!
//! Exit status: 0 on success, 2 when the developability tolerance is not
//! reached (outputs and report are still written), 1 on errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{vec3, Vec3};
use crate::io::{
    load_mesh, load_obj, save_line_set, save_mesh, validate, write_residual_csv, write_trace_csv,
    FixedSpec, HandleSpec, IoError, JobConfig, LoftSpec, ValidationReport,
};
use crate::mesh::{Grid, MeshError, QuadMesh, VertexId};
use crate::optimize::{
    loft_schedule, OptimizeError, OptimizeOptions, Optimizer, RunStatus, Targets,
};
use crate::residuals::DevForm;
use crate::session::{serve, SessionService};
use crate::tools::{
    approximate, gauss_image, grow_patch, loft_init, prospective_rulings, GrowError, LoftError,
    LoftOptions, MaterialMode, ReferenceError, ReferenceSurface, StripDecomposition, StripError,
};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNREACHABLE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Grow(#[from] GrowError),
    #[error(transparent)]
    Loft(#[from] LoftError),
    #[error(transparent)]
    Strip(#[from] StripError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "devquad",
    version,
    about = "Developable quad meshes: optimization, lofting, approximation and diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormArg {
    Vector,
    Determinant,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MaterialArg {
    None,
    Elastic,
    Plastic,
}

/// Flags shared by the optimizing subcommands; they override the config.
#[derive(Debug, Args)]
struct Common {
    /// TOML job config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output mesh (OBJ).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    /// Report path: JSON, or the per-face table for a `.csv` extension.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Energy trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Every final residual row (CSV).
    #[arg(long)]
    residuals: Option<PathBuf>,
    /// Per-interior-face developability counted as converged.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Developability residual form.
    #[arg(long, value_enum)]
    form: Option<FormArg>,
    #[arg(long, value_enum)]
    material: Option<MaterialArg>,
    /// Fix every boundary vertex.
    #[arg(long)]
    fixed_boundary: bool,
    /// LM iteration limit per stage.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize a quad mesh for developability.
    Optimize {
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        /// Handle as `vertex:x,y,z`; repeatable.
        #[arg(long = "handle", value_parser = parse_handle)]
        handles: Vec<HandleSpec>,
        /// OBJ point cloud or polylines to glide along.
        #[arg(long)]
        glide: Option<PathBuf>,
        /// Sampling gap along gliding polylines.
        #[arg(long)]
        glide_spacing: Option<f64>,
        /// Reference surface (OBJ) the mesh stays close to.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Strip sidecar (TOML); strips are optimized separately.
        #[arg(long)]
        strips: Option<PathBuf>,
    },
    /// Loft between two boundary curves and optimize with both fixed.
    Loft {
        /// First curve: OBJ whose vertex order is the curve order.
        #[arg(long)]
        curve_a: Option<PathBuf>,
        #[arg(long)]
        curve_b: Option<PathBuf>,
        /// Vertex rows between and including the curves.
        #[arg(long)]
        rows: Option<usize>,
        /// Samples per curve; defaults to the larger vertex count.
        #[arg(long)]
        samples: Option<usize>,
        /// Closed curves (cylinder topology).
        #[arg(long)]
        closed: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a developable mesh to a reference surface under developability
    /// constraints; optionally grow a grid patch ring by ring.
    Approximate {
        input: Option<PathBuf>,
        /// Reference surface (OBJ polygons).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Grow the input, a `ROWSxCOLS` grid, until the distance exceeds
        /// `--grow-tolerance`.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
        #[arg(long)]
        grow_tolerance: Option<f64>,
        #[arg(long)]
        max_rings: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Prospective rulings as an OBJ line set, with tangency warnings.
    Rulings {
        input: PathBuf,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
        /// Summary (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Half-length of each segment in mean edge lengths.
        #[arg(long, default_value_t = 0.5)]
        half_length: f64,
    },
    /// Gauss image as an OBJ line set on the unit sphere.
    Gauss {
        input: PathBuf,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Measure developability without optimizing.
    Validate {
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve interactive sessions over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
    },
}

fn parse_handle(s: &str) -> Result<HandleSpec, String> {
    let err = || format!("expected `vertex:x,y,z`, got `{s}`");
    let (v, t) = s.split_once(':').ok_or_else(err)?;
    let vertex = v.trim().parse().map_err(|_| err())?;
    let c: Vec<f64> = t
        .split(',')
        .map(|x| x.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| err())?;
    let target: [f64; 3] = c.try_into().map_err(|_| err())?;
    Ok(HandleSpec { vertex, target })
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let err = || format!("expected `ROWSxCOLS`, got `{s}`");
    let (r, c) = s.split_once('x').ok_or_else(err)?;
    Ok((r.parse().map_err(|_| err())?, c.parse().map_err(|_| err())?))
}

/// Parses `args` (including the program name) and runs; returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_SUCCESS
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("run `devquad --help` for usage");
            }
            EXIT_ERROR
        }
    }
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Optimize {
            input,
            common,
            handles,
            glide,
            glide_spacing,
            reference,
            strips,
        } => {
            let mut job = job_config(&common)?;
            job.input = input.or(job.input);
            job.handles.extend(handles);
            if let Some(path) = glide {
                job.glide = Some(crate::io::GlideSpec {
                    path,
                    radius: None,
                    spacing: glide_spacing,
                });
            } else if let (Some(g), Some(s)) = (&mut job.glide, glide_spacing) {
                g.spacing = Some(s);
            }
            if let Some(path) = reference {
                job.reference = Some(crate::io::ReferenceSpec { path, lambda: None });
            }
            if let Some(path) = strips {
                job.strips = Some(crate::io::StripSpec {
                    sidecar: Some(path),
                    cuts: Vec::new(),
                });
            }
            job.validate()?;
            optimize_job(&job)
        }
        Command::Loft {
            curve_a,
            curve_b,
            rows,
            samples,
            closed,
            common,
        } => {
            let mut job = job_config(&common)?;
            match (curve_a, curve_b, rows) {
                (Some(a), Some(b), Some(rows)) => {
                    job.loft = Some(LoftSpec {
                        curve_a: a,
                        curve_b: b,
                        rows,
                        samples,
                        closed,
                    })
                }
                (None, None, None) => {}
                _ => {
                    return Err(CliError::Usage(
                        "loft needs --curve-a, --curve-b and --rows together".into(),
                    ))
                }
            }
            loft_job(&job)
        }
        Command::Approximate {
            input,
            reference,
            grid,
            grow_tolerance,
            max_rings,
            common,
        } => {
            let mut job = job_config(&common)?;
            job.input = input.or(job.input);
            if let Some(path) = reference {
                job.reference = Some(crate::io::ReferenceSpec { path, lambda: None });
            }
            let mut grow = job.grow.clone().unwrap_or_default();
            if let Some(t) = grow_tolerance {
                grow.tolerance = t;
            }
            if let Some(m) = max_rings {
                grow.max_rings = m;
            }
            if job.grow.is_some() || grid.is_some() {
                job.grow = Some(grow);
            }
            job.validate()?;
            approximate_job(&job, grid)
        }
        Command::Rulings {
            input,
            output,
            report,
            half_length,
        } => {
            let mesh = load_mesh(&input)?;
            let field = prospective_rulings(&mesh)?;
            if let Some(path) = output {
                save_line_set(&field.segments(half_length * mesh.mean_edge_length()), path)?;
            }
            let summary = RulingsSummary {
                lines: field.lines.len(),
                zero: field.zero_count(),
                tangent: field.tangent_count(),
                tangent_runs: field
                    .tangent_runs
                    .iter()
                    .map(|r| r.iter().map(|h| h.idx()).collect())
                    .collect(),
            };
            for run in &summary.tangent_runs {
                eprintln!(
                    "warning: rulings nearly tangent to the boundary along halfedges {run:?}"
                );
            }
            emit(&summary, report.as_deref())?;
            Ok(EXIT_SUCCESS)
        }
        Command::Gauss {
            input,
            output,
            report,
        } => {
            let mesh = load_mesh(&input)?;
            let image = gauss_image(&mesh)?;
            if let Some(path) = output {
                save_line_set(&image.segment_points(), path)?;
            }
            let n = image.degeneracy.len();
            let summary = GaussSummary {
                points: image.points.len(),
                segments: image.segments.len(),
                max_degeneracy: image.max_degeneracy(),
                mean_degeneracy: if n == 0 {
                    0.0
                } else {
                    image.degeneracy.iter().map(|d| d.1).sum::<f64>() / n as f64
                },
                neighbor_gap: image.mean_neighbor_gap(&mesh),
            };
            emit(&summary, report.as_deref())?;
            Ok(EXIT_SUCCESS)
        }
        Command::Validate { input, report } => {
            let mesh = load_mesh(&input)?;
            let r = validate(&mesh)?;
            match report {
                Some(path) => {
                    r.save(&path)?;
                    print_summary(&r);
                }
                None => println!("{}", r.to_json()),
            }
            Ok(EXIT_SUCCESS)
        }
        Command::Serve { bind } => {
            let listener =
                TcpListener::bind(&bind).map_err(|e| IoError::Io(format!("{bind}: {e}")))?;
            eprintln!(
                "serving sessions on {}",
                listener
                    .local_addr()
                    .map_err(|e| IoError::Io(e.to_string()))?
            );
            serve(listener, SessionService::default()).map_err(|e| IoError::Io(e.to_string()))?;
            Ok(EXIT_SUCCESS)
        }
    }
}

#[derive(Serialize)]
struct RulingsSummary {
    lines: usize,
    zero: usize,
    tangent: usize,
    tangent_runs: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct GaussSummary {
    points: usize,
    segments: usize,
    max_degeneracy: f64,
    mean_degeneracy: f64,
    neighbor_gap: f64,
}

fn emit(summary: &impl Serialize, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(summary).expect("summaries serialize");
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| IoError::Io(format!("{}: {e}", p.display())))?
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn job_config(common: &Common) -> Result<JobConfig, CliError> {
    let mut job = match &common.config {
        Some(path) => JobConfig::load(path)?,
        None => JobConfig::default(),
    };
    let o = &mut job.output;
    for (slot, flag) in [
        (&mut o.mesh, &common.output),
        (&mut o.report, &common.report),
        (&mut o.trace, &common.trace),
        (&mut o.residuals, &common.residuals),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(t) = common.tolerance {
        job.optimize.dev_tolerance = t;
    }
    if let Some(f) = common.form {
        job.optimize.dev_form = match f {
            FormArg::Vector => DevForm::Vector,
            FormArg::Determinant => DevForm::Determinant,
        };
    }
    if let Some(m) = common.material {
        job.material = match m {
            MaterialArg::None => MaterialMode::None,
            MaterialArg::Elastic => MaterialMode::Elastic,
            MaterialArg::Plastic => MaterialMode::Plastic,
        };
    }
    if common.fixed_boundary {
        job.fixed = FixedSpec::Boundary;
    }
    if let Some(n) = common.max_iterations {
        job.optimize.lm.max_iterations = n;
    }
    if let Some(t) = common.time_limit {
        job.optimize.time_limit = Some(t);
    }
    job.validate()?;
    Ok(job)
}

fn input_mesh(job: &JobConfig) -> Result<QuadMesh, CliError> {
    let path = job
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("no input mesh given".into()))?;
    Ok(load_mesh(path)?)
}

fn fixed_mask(mesh: &QuadMesh, spec: &FixedSpec) -> Result<Vec<bool>, CliError> {
    let mut mask = vec![false; mesh.vertex_count()];
    match spec {
        FixedSpec::None => {}
        FixedSpec::Boundary => mesh
            .boundary_vertices()
            .into_iter()
            .for_each(|v| mask[v.idx()] = true),
        FixedSpec::Vertices(list) => {
            for &v in list {
                *mask
                    .get_mut(v)
                    .ok_or_else(|| CliError::Usage(format!("fixed vertex {v} out of range")))? =
                    true;
            }
        }
    }
    Ok(mask)
}

fn load_reference(path: &Path) -> Result<Arc<ReferenceSurface>, CliError> {
    let data = load_obj(path)?;
    let triangles = data.triangles();
    if triangles.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: reference has no faces",
            path.display()
        )));
    }
    Ok(Arc::new(ReferenceSurface::from_triangles(
        data.vertices,
        triangles,
    )?))
}

fn targets_of(job: &JobConfig, mesh: &QuadMesh, fixed: Vec<bool>) -> Result<Targets, CliError> {
    let mut targets = Targets::fixed(fixed);
    targets.material = job.material;
    for h in &job.handles {
        if h.vertex >= mesh.vertex_count() {
            return Err(CliError::Usage(format!(
                "handle vertex {} out of range",
                h.vertex
            )));
        }
        targets.handles.push((
            VertexId::from(h.vertex),
            vec3(h.target[0], h.target[1], h.target[2]),
        ));
    }
    if let Some(g) = &job.glide {
        targets.glide = load_obj(&g.path)?.sample_points(g.spacing);
        targets.glide_radius = g.radius;
    }
    if let Some(r) = &job.reference {
        targets.reference = Some(load_reference(&r.path)?);
        targets.prox_lambda = r.lambda;
    }
    Ok(targets)
}

/// One optimization run with its residual dump taken before finishing.
fn run_optimizer(
    mesh: &QuadMesh,
    targets: &Targets,
    options: OptimizeOptions,
    residuals: Option<&Path>,
) -> Result<crate::optimize::OptimizeOutcome, CliError> {
    let mut opt = Optimizer::new(mesh, targets, options)?;
    opt.run()?;
    if let Some(path) = residuals {
        let file =
            File::create(path).map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
        write_residual_csv(opt.system(), &opt.state(), BufWriter::new(file))?;
    }
    Ok(opt.finish()?)
}

fn status_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Converged => EXIT_SUCCESS,
        RunStatus::Unreachable => EXIT_UNREACHABLE,
    }
}

fn print_summary(r: &ValidationReport) {
    println!(
        "faces {} (interior {}), per-face E_dev {:.3e}, max {:.3e}, median {:.3e}{}",
        r.faces,
        r.interior_faces,
        r.dev_per_face,
        r.dev_max,
        r.dev_median,
        r.status
            .map(|s| format!(", status {s:?}"))
            .unwrap_or_default()
    );
}

/// Writes mesh, report and trace; returns the exit status of `report`.
fn finish_run(
    job: &JobConfig,
    mesh: &QuadMesh,
    report: &ValidationReport,
    trace: Option<&crate::solver::Trace>,
) -> Result<i32, CliError> {
    let out = &job.output;
    if let Some(p) = &out.mesh {
        save_mesh(mesh, p)?;
    }
    if let Some(p) = &out.report {
        report.save(p)?;
    }
    if let (Some(p), Some(t)) = (&out.trace, trace) {
        let file = File::create(p).map_err(|e| IoError::Io(format!("{}: {e}", p.display())))?;
        write_trace_csv(t, BufWriter::new(file))?;
    }
    if let Some(p) = &out.rulings {
        save_line_set(
            &prospective_rulings(mesh)?.segments(0.5 * mesh.mean_edge_length()),
            p,
        )?;
    }
    if let Some(p) = &out.gauss {
        save_line_set(&gauss_image(mesh)?.segment_points(), p)?;
    }
    print_summary(report);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(report.status.map_or(EXIT_SUCCESS, status_code))
}

fn optimize_job(job: &JobConfig) -> Result<i32, CliError> {
    let mesh = input_mesh(job)?;
    let fixed = fixed_mask(&mesh, &job.fixed)?;
    if let Some(spec) = &job.strips {
        return optimize_strips(job, &mesh, fixed, spec);
    }
    let targets = targets_of(job, &mesh, fixed.clone())?;
    let outcome = run_optimizer(
        &mesh,
        &targets,
        job.optimize.clone(),
        job.output.residuals.as_deref(),
    )?;
    let report = ValidationReport::of_run(&outcome, mesh.positions(), &fixed)?;
    finish_run(job, &outcome.mesh, &report, Some(&outcome.trace))
}

/// Optimizes every strip with the cut vertices fixed, then reassembles.
fn optimize_strips(
    job: &JobConfig,
    mesh: &QuadMesh,
    fixed: Vec<bool>,
    spec: &crate::io::StripSpec,
) -> Result<i32, CliError> {
    if !job.handles.is_empty() || job.glide.is_some() || job.reference.is_some() {
        return Err(CliError::Usage(
            "strip jobs take no handles, gliding or reference targets".into(),
        ));
    }
    let decomposition = match &spec.sidecar {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
            let sidecar = toml::from_str(&text).map_err(|e| IoError::Config(e.to_string()))?;
            StripDecomposition::from_sidecar(mesh, &sidecar)?
        }
        None => {
            let cuts: Vec<Vec<VertexId>> = spec
                .cuts
                .iter()
                .map(|c| c.iter().map(|&v| VertexId::from(v)).collect())
                .collect();
            crate::tools::decompose_strips(mesh, &cuts)?
        }
    };
    if let Some(p) = &job.output.strips {
        let text = toml::to_string_pretty(&decomposition.to_sidecar())
            .map_err(|e| IoError::Config(e.to_string()))?;
        std::fs::write(p, text).map_err(|e| IoError::Io(format!("{}: {e}", p.display())))?;
    }
    let mut positions = Vec::with_capacity(decomposition.strips.len());
    let mut worst = RunStatus::Converged;
    let mut iterations = 0;
    let mut elapsed = 0.0;
    let mut warnings = Vec::new();
    for (k, strip) in decomposition.strips.iter().enumerate() {
        let strip_fixed: Vec<bool> = strip
            .vertices
            .iter()
            .zip(&strip.fixed)
            .map(|(v, &f)| f || fixed[v.idx()])
            .collect();
        let mut targets = Targets::fixed(strip_fixed);
        targets.material = job.material;
        let outcome = run_optimizer(&strip.mesh, &targets, job.optimize.clone(), None)?;
        if outcome.status == RunStatus::Unreachable {
            worst = RunStatus::Unreachable;
            warnings.push(format!("strip {k}: tolerance not reached"));
        }
        iterations += outcome.iterations;
        elapsed += outcome.elapsed.as_secs_f64();
        warnings.extend(outcome.warnings.iter().map(|w| format!("strip {k}: {w}")));
        positions.push(outcome.mesh.positions().to_vec());
    }
    let mut result = mesh.clone();
    result.set_positions(decomposition.assemble(mesh.positions(), &positions))?;
    let mut report = validate(&result)?;
    report.max_boundary_drift = Some(
        result
            .positions()
            .iter()
            .zip(mesh.positions())
            .zip(&fixed)
            .filter(|(_, &f)| f)
            .map(|((a, b), _)| (a - b).norm())
            .fold(0.0, f64::max),
    );
    report.iterations = Some(iterations);
    report.elapsed_seconds = Some(elapsed);
    report.status = Some(worst);
    report.warnings = warnings;
    finish_run(job, &result, &report, None)
}

fn curve(path: &Path) -> Result<Vec<Vec3>, CliError> {
    Ok(load_obj(path)?.vertices)
}

fn loft_job(job: &JobConfig) -> Result<i32, CliError> {
    let spec = job.loft.as_ref().ok_or_else(|| {
        CliError::Usage("loft needs --curve-a, --curve-b and --rows or a [loft] config".into())
    })?;
    let loft = loft_init(
        &curve(&spec.curve_a)?,
        &curve(&spec.curve_b)?,
        LoftOptions {
            rows: spec.rows,
            samples: spec.samples,
            closed: spec.closed,
        },
    )?;
    let mesh = loft.grid.mesh();
    let mut options = job.optimize.clone();
    // lofts default to the staged schedule with plastic isometry
    if options.stages == OptimizeOptions::default().stages {
        options.stages = loft_schedule();
    }
    let mut targets = targets_of(job, mesh, loft.fixed.clone())?;
    if job.material == MaterialMode::None {
        targets.material = MaterialMode::Plastic;
    }
    let outcome = run_optimizer(mesh, &targets, options, job.output.residuals.as_deref())?;
    let report = ValidationReport::of_run(&outcome, mesh.positions(), &loft.fixed)?;
    finish_run(job, &outcome.mesh, &report, Some(&outcome.trace))
}

fn approximate_job(job: &JobConfig, grid: Option<(usize, usize)>) -> Result<i32, CliError> {
    let mesh = input_mesh(job)?;
    let reference_path = &job
        .reference
        .as_ref()
        .ok_or_else(|| CliError::Usage("approximate needs --reference".into()))?
        .path;
    let reference = load_reference(reference_path)?;
    let mut options = job.grow.clone().unwrap_or_default();
    if let Some(l) = job.reference.as_ref().and_then(|r| r.lambda) {
        options.prox_lambda = l;
    }
    options.projection = job.projection;
    let (result, warnings) = match grid {
        Some((rows, cols)) => {
            let seed = Grid::from_positions(rows, cols, false, false, mesh.positions().to_vec())?;
            if seed.mesh().faces() != mesh.faces() {
                return Err(CliError::Usage(format!(
                    "input is not a row-major {rows}x{cols} grid"
                )));
            }
            let out = grow_patch(&seed, reference, &options)?;
            let note = format!(
                "grew {} rings ({:?}); max distance {:.3e}{}",
                out.rings,
                out.stop,
                out.max_distance,
                out.rejected_distance
                    .map(|d| format!(", next ring {d:.3e}"))
                    .unwrap_or_default()
            );
            (out.grid.into_mesh(), vec![note])
        }
        None => {
            let fixed = fixed_mask(&mesh, &job.fixed)?;
            let out = approximate(&mesh, &fixed, &reference, &options)?;
            let mut m = mesh.clone();
            m.set_positions(out.state.positions)?;
            (m, vec![format!("constrained projection: {:?}", out.status)])
        }
    };
    let mut report = validate(&result)?;
    let met = report.dev_per_face <= job.optimize.dev_tolerance;
    report.status = Some(if met {
        RunStatus::Converged
    } else {
        RunStatus::Unreachable
    });
    report.warnings = warnings;
    finish_run(job, &result, &report, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_parsers() {
        assert_eq!(
            parse_handle("4:1,2.5,-3").unwrap(),
            HandleSpec {
                vertex: 4,
                target: [1.0, 2.5, -3.0]
            }
        );
        assert!(parse_handle("4:1,2").is_err());
        assert!(parse_handle("x:1,2,3").is_err());
        assert_eq!(parse_grid("5x7").unwrap(), (5, 7));
        assert!(parse_grid("5*7").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["devquad"]), EXIT_ERROR);
        assert_eq!(run(["devquad", "frobnicate"]), EXIT_ERROR);
        assert_eq!(run(["devquad", "validate"]), EXIT_ERROR);
        assert_eq!(
            run(["devquad", "validate", "/nonexistent/m.obj"]),
            EXIT_ERROR
        );
        assert_eq!(run(["devquad", "--help"]), EXIT_SUCCESS);
        assert_eq!(run(["devquad", "loft", "--rows", "5"]), EXIT_ERROR);
    }

    #[test]
    fn flags_override_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("job.toml");
        std::fs::write(
            &cfg,
            "schema_version = 1\n[optimize]\ndev_tolerance = 1e-3\n[output]\nmesh = \"a.obj\"\n",
        )
        .unwrap();
        let cli = Cli::try_parse_from([
            "devquad",
            "optimize",
            "--config",
            cfg.to_str().unwrap(),
            "--tolerance",
            "1e-9",
            "--form",
            "determinant",
        ])
        .unwrap();
        let Command::Optimize { common, .. } = cli.command else {
            panic!()
        };
        let job = job_config(&common).unwrap();
        assert_eq!(job.optimize.dev_tolerance, 1e-9);
        assert_eq!(job.optimize.dev_form, DevForm::Determinant);
        assert_eq!(job.output.mesh, Some(dir.path().join("a.obj")));
    }
}
