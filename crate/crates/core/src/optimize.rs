//! Developability optimization of a quad mesh: staged weights, regularizer
//! switch-off on stagnation, handles, gliding, proximity and material modes.

use std::borrow::Cow;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::measure::DevMeasure;
use crate::mesh::{trace_polylines, MeshError, QuadMesh, VertexId};
use crate::residuals::{
    handle_terms, DevForm, Family, ResidualError, State, System, VariableLayout, Weights,
    DEFAULT_PROX_LAMBDA, NORM_WEIGHT,
};
use crate::solver::{
    schedule_weights, LmConfig, LmSolver, NormalRefresh, ScheduleDecision, SolverError, Stage,
    Step, SystemProblem, Termination, Trace,
};
use crate::tools::{
    material_mode, GlideHook, MaterialMode, ProxHook, ReferenceSurface, DEFAULT_GLIDE_RADIUS,
};

/// Default tolerance on the per-interior-face developability energy.
pub const DEFAULT_DEV_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Whether the developability tolerance was met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    Unreachable,
}

/// Solver settings of an optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub lm: LmConfig,
    /// Weight stages; the last stage runs until stagnation.
    pub stages: Vec<Stage>,
    /// Zero the regularizers once the last stage stagnates.
    pub regularizer_switch: bool,
    pub dev_form: DevForm,
    pub normal_refresh: NormalRefresh,
    /// Per-interior-face developability energy counted as converged.
    pub dev_tolerance: f64,
    /// Wall-clock budget; the run stops with [`Termination::MaxIterations`]
    /// once exceeded.
    pub time_limit: Option<f64>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            lm: LmConfig::default(),
            stages: vec![Stage::open(Weights::default())],
            regularizer_switch: true,
            dev_form: DevForm::Vector,
            normal_refresh: NormalRefresh::default(),
            dev_tolerance: DEFAULT_DEV_TOLERANCE,
            time_limit: None,
        }
    }
}

impl OptimizeOptions {
    pub fn with_weights(weights: Weights) -> Self {
        OptimizeOptions {
            stages: vec![Stage::open(weights)],
            ..Self::default()
        }
    }
}

/// Geometric goals beyond developability.
#[derive(Debug, Clone, Default)]
pub struct Targets {
    /// Vertices excluded from the unknowns; empty means none.
    pub fixed: Vec<bool>,
    /// Handle vertices pulled towards targets.
    pub handles: Vec<(VertexId, Vec3)>,
    /// Point cloud the mesh should glide along.
    pub glide: Vec<Vec3>,
    /// Activity radius of gliding points in mean edge lengths.
    pub glide_radius: Option<f64>,
    /// Surface the free vertices are kept close to.
    pub reference: Option<Arc<ReferenceSurface>>,
    pub prox_lambda: Option<f64>,
    pub material: MaterialMode,
}

impl Targets {
    pub fn fixed(fixed: Vec<bool>) -> Self {
        Targets {
            fixed,
            ..Self::default()
        }
    }
}

/// Result of one call to [`Optimizer::step`].
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    Accepted {
        iteration: usize,
        energy: f64,
    },
    Rejected {
        iteration: usize,
    },
    /// Weights changed; the annotation is in the trace.
    WeightsChanged {
        iteration: usize,
        label: String,
    },
    Finished,
}

/// Final state of an optimization.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub mesh: QuadMesh,
    pub state: State,
    pub trace: Trace,
    pub termination: Termination,
    pub status: RunStatus,
    /// Developability of the returned mesh with normals and rulings
    /// re-derived from its vertices.
    pub dev: DevMeasure,
    pub iterations: usize,
    pub elapsed: Duration,
    pub warnings: Vec<String>,
}

/// A stepwise optimization run over a borrowed or owned mesh.
pub struct Optimizer<'m> {
    problem: SystemProblem<'m>,
    solver: LmSolver,
    options: OptimizeOptions,
    stage: usize,
    stage_accepted: usize,
    weights: Weights,
    switched: bool,
    started: Instant,
    warnings: Vec<String>,
    termination: Option<Termination>,
}

impl Optimizer<'static> {
    /// An optimizer that owns its mesh, for use on worker threads.
    pub fn owned(
        mesh: QuadMesh,
        state: State,
        targets: &Targets,
        options: OptimizeOptions,
    ) -> Result<Self, OptimizeError> {
        Self::build(Cow::Owned(mesh), state, targets, options)
    }
}

impl<'m> Optimizer<'m> {
    pub fn new(
        mesh: &'m QuadMesh,
        targets: &Targets,
        options: OptimizeOptions,
    ) -> Result<Self, OptimizeError> {
        Self::with_state(mesh, State::from_mesh(mesh)?, targets, options)
    }

    /// Starts from an explicit state, e.g. a previous run's normals and rulings.
    pub fn with_state(
        mesh: &'m QuadMesh,
        state: State,
        targets: &Targets,
        options: OptimizeOptions,
    ) -> Result<Self, OptimizeError> {
        Self::build(Cow::Borrowed(mesh), state, targets, options)
    }

    fn build(
        mesh_cow: Cow<'m, QuadMesh>,
        state: State,
        targets: &Targets,
        options: OptimizeOptions,
    ) -> Result<Self, OptimizeError> {
        let mesh: &QuadMesh = &mesh_cow;
        let Some(first) = options.stages.first() else {
            return Err(OptimizeError::InvalidInput(
                "at least one weight stage is required".into(),
            ));
        };
        for s in &options.stages {
            s.weights.validate()?;
        }
        if !(options.dev_tolerance > 0.0) {
            return Err(OptimizeError::InvalidInput(
                "dev_tolerance must be positive".into(),
            ));
        }
        let fixed = if targets.fixed.is_empty() {
            vec![false; mesh.vertex_count()]
        } else if targets.fixed.len() == mesh.vertex_count() {
            targets.fixed.clone()
        } else {
            return Err(OptimizeError::InvalidInput(format!(
                "fixed mask has {} entries for {} vertices",
                targets.fixed.len(),
                mesh.vertex_count()
            )));
        };
        let weights = first.weights;
        let polylines = trace_polylines(mesh);
        let mut system = System::developability(mesh, &polylines, &weights, options.dev_form);
        if !targets.handles.is_empty() {
            system.push(
                Family::Handle,
                weights.pos,
                handle_terms(mesh, &targets.handles)?,
            );
        }
        let material = material_mode(targets.material, mesh, &state.positions);
        if targets.material != MaterialMode::None {
            system.push(Family::Iso, weights.iso, material.terms);
        }
        if !targets.glide.is_empty() {
            system.push(Family::Glide, weights.pos, Vec::new());
        }
        if targets.reference.is_some() {
            system.push(Family::Prox, weights.pos, Vec::new());
        }
        let layout = VariableLayout::new(mesh, &fixed);
        let mut problem = SystemProblem::from_cow(mesh_cow.clone(), system, layout, state)
            .with_refresh(options.normal_refresh);
        if let Some(hook) = material.hook {
            problem.add_hook(Box::new(hook));
        }
        if !targets.glide.is_empty() {
            let radius = targets.glide_radius.unwrap_or(DEFAULT_GLIDE_RADIUS);
            problem.add_hook(Box::new(GlideHook::new(targets.glide.clone(), radius)));
        }
        if let Some(reference) = &targets.reference {
            if reference.is_empty() {
                return Err(ResidualError::ReferenceQueryFailure { vertex: 0 }.into());
            }
            let free = fixed.iter().map(|f| !f).collect();
            let lambda = targets.prox_lambda.unwrap_or(DEFAULT_PROX_LAMBDA);
            problem.add_hook(Box::new(ProxHook::new(reference.clone(), free, lambda)));
        }
        problem.run_hooks()?;
        let mut warnings = Vec::new();
        if !targets.glide.is_empty()
            && problem
                .system()
                .block(Family::Glide)
                .is_none_or(|b| b.terms.is_empty())
        {
            warnings.push("gliding: empty active set".to_string());
        }
        let x = problem.gather();
        let solver = LmSolver::new(&mut problem, x, options.lm)?;
        Ok(Optimizer {
            problem,
            solver,
            options,
            stage: 0,
            stage_accepted: 0,
            weights,
            switched: false,
            started: Instant::now(),
            warnings,
            termination: None,
        })
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn trace(&self) -> &Trace {
        self.solver.trace()
    }

    pub fn iteration(&self) -> usize {
        self.solver.iteration()
    }

    pub fn is_finished(&self) -> bool {
        self.termination.is_some()
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn system(&self) -> &System {
        self.problem.system()
    }

    /// Current state with positions, normals and rulings of the same iterate.
    pub fn state(&self) -> State {
        let mut s = self.problem.state().clone();
        self.problem.layout().scatter(self.solver.x(), &mut s);
        s
    }

    /// Active gliding rows of the current round.
    pub fn glide_rows(&self) -> usize {
        self.problem
            .system()
            .block(Family::Glide)
            .map_or(0, |b| b.terms.len())
    }

    /// Stops the run; the next [`step`](Self::step) reports `Finished`.
    pub fn cancel(&mut self) {
        self.termination.get_or_insert(Termination::Cancelled);
    }

    fn switch_weights(
        &mut self,
        weights: Weights,
        label: String,
    ) -> Result<StepEvent, OptimizeError> {
        self.weights = weights;
        self.problem.set_weights(&weights);
        self.solver
            .objective_changed(&mut self.problem, false, Some(label.clone()))?;
        self.stage_accepted = 0;
        Ok(StepEvent::WeightsChanged {
            iteration: self.solver.iteration(),
            label,
        })
    }

    /// The current stage has run its course; move on or stop.
    fn stage_done(&mut self, termination: Termination) -> Result<StepEvent, OptimizeError> {
        if self.stage + 1 < self.options.stages.len() {
            self.stage += 1;
            let w = self.options.stages[self.stage].weights;
            return self.switch_weights(w, format!("stage {}", self.stage + 1));
        }
        let retry = matches!(
            termination,
            Termination::Stagnated | Termination::SmallStep | Termination::SmallGradient
        );
        if retry
            && self.options.regularizer_switch
            && !self.switched
            && !self.weights.regularizers_off()
        {
            self.switched = true;
            return self.switch_weights(
                self.weights.without_regularizers(),
                "regularizers off".into(),
            );
        }
        self.termination = Some(termination);
        Ok(StepEvent::Finished)
    }

    /// Runs one LM iteration, a weight change, or the final bookkeeping.
    pub fn step(&mut self) -> Result<StepEvent, OptimizeError> {
        if self.termination.is_some() {
            return Ok(StepEvent::Finished);
        }
        if let Some(limit) = self.options.time_limit {
            if self.started.elapsed().as_secs_f64() > limit {
                self.warnings
                    .push(format!("time limit of {limit} s reached"));
                self.termination = Some(Termination::MaxIterations);
                return Ok(StepEvent::Finished);
            }
        }
        let stage = self.options.stages[self.stage];
        if stage.iterations.is_some_and(|n| self.stage_accepted >= n) {
            return self.stage_done(Termination::MaxIterations);
        }
        match self.solver.step(&mut self.problem)? {
            Step::Accepted { energy } => {
                self.stage_accepted += 1;
                if stage.iterations.is_none()
                    && self.options.regularizer_switch
                    && !self.switched
                    && self.stage + 1 == self.options.stages.len()
                {
                    let cfg = self.solver.config();
                    if let ScheduleDecision::Switch(w) = schedule_weights(
                        &self.weights,
                        self.solver.trace(),
                        cfg.stagnation_window,
                        cfg.stagnation_tolerance,
                    ) {
                        self.switched = true;
                        return self.switch_weights(w, "regularizers off".into());
                    }
                }
                Ok(StepEvent::Accepted {
                    iteration: self.solver.iteration(),
                    energy,
                })
            }
            Step::Rejected => Ok(StepEvent::Rejected {
                iteration: self.solver.iteration(),
            }),
            Step::Done(Termination::MaxIterations) | Step::Done(Termination::Cancelled) => {
                self.termination = self.solver.termination();
                Ok(StepEvent::Finished)
            }
            Step::Done(t) if t.is_converged() => {
                self.termination = Some(t);
                Ok(StepEvent::Finished)
            }
            Step::Done(t) => self.stage_done(t),
        }
    }

    /// Steps until finished.
    pub fn run(&mut self) -> Result<(), OptimizeError> {
        while self.step()? != StepEvent::Finished {}
        Ok(())
    }

    /// Mesh at the current positions with its re-derived developability.
    pub fn current_mesh(&self) -> Result<(QuadMesh, DevMeasure), OptimizeError> {
        let state = self.state();
        let mut mesh = self.problem.mesh().clone();
        mesh.set_positions(state.positions)?;
        let dev = DevMeasure::rederived(&mesh)?;
        Ok((mesh, dev))
    }

    pub fn finish(self) -> Result<OptimizeOutcome, OptimizeError> {
        let (mesh, dev) = self.current_mesh()?;
        let state = self.state();
        let status = if dev.per_face() <= self.options.dev_tolerance {
            RunStatus::Converged
        } else {
            RunStatus::Unreachable
        };
        let iterations = self.solver.iteration();
        Ok(OptimizeOutcome {
            mesh,
            state,
            termination: self.termination.unwrap_or(Termination::Cancelled),
            status,
            dev,
            iterations,
            elapsed: self.started.elapsed(),
            warnings: self.warnings,
            trace: self.solver.into_trace(),
        })
    }
}

/// Optimizes `mesh` to completion.
pub fn optimize(
    mesh: &QuadMesh,
    targets: &Targets,
    options: OptimizeOptions,
) -> Result<OptimizeOutcome, OptimizeError> {
    let mut opt = Optimizer::new(mesh, targets, options)?;
    opt.run()?;
    opt.finish()
}

/// Weight stages of the simple cylinder-topology loft: four iterations at
/// `(fair_v, fair_n, rul, dev) = (0.1, 1, 10, 10)`, then
/// `(0.01, 0.1, 10, 10)`, with isometry weight 0.1 to the previous iterate
/// and the default normal weight.
pub fn loft_schedule() -> Vec<Stage> {
    let first = Weights {
        norm: NORM_WEIGHT,
        rul: 10.0,
        dev: 10.0,
        fair_v: 0.1,
        fair_n: 1.0,
        iso: 0.1,
        pos: 0.0,
    };
    let second = Weights {
        fair_v: 0.01,
        fair_n: 0.1,
        ..first
    };
    vec![
        Stage {
            weights: first,
            iterations: Some(4),
        },
        Stage {
            weights: second,
            iterations: None,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec3;
    use crate::mesh::Grid;
    use crate::tools::{ellipse, loft_init, LoftOptions};

    #[test]
    fn plane_converges_immediately() {
        let g = Grid::planar(5, 5, 1.0);
        let out = optimize(g.mesh(), &Targets::default(), OptimizeOptions::default()).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert_eq!(out.dev.total(), 0.0);
    }

    #[test]
    fn bumped_grid_becomes_developable_with_fixed_boundary() {
        let g = Grid::from_fn(8, 8, false, false, |i, j| {
            let (x, y) = (j as f64 / 7.0, i as f64 / 7.0);
            vec3(
                x,
                y,
                0.15 * (x * (1.0 - x) * y * (1.0 - y)).sqrt() + 0.2 * x * x,
            )
        })
        .unwrap();
        let mesh = g.mesh();
        let fixed: Vec<bool> = (0..mesh.vertex_count())
            .map(|v| {
                let (i, j) = (v / 8, v % 8);
                i == 0 || j == 0 || i == 7 || j == 7
            })
            .collect();
        let before = DevMeasure::rederived(mesh).unwrap();
        let out = optimize(
            mesh,
            &Targets::fixed(fixed.clone()),
            OptimizeOptions::default(),
        )
        .unwrap();
        assert!(
            out.dev.per_face() < 1e-2 * before.per_face(),
            "{} vs {}",
            out.dev.per_face(),
            before.per_face()
        );
        for (v, f) in fixed.iter().enumerate() {
            if *f {
                assert_eq!(out.mesh.positions()[v], mesh.positions()[v]);
            }
        }
        let accepted: Vec<f64> = out.trace.accepted().map(|r| r.total).collect();
        assert!(!accepted.is_empty());
    }

    #[test]
    fn staged_weights_annotate_the_trace() {
        let loft = loft_init(
            &ellipse(1.0, 1.0, 0.0, 12),
            &ellipse(1.2, 0.8, 1.0, 12),
            LoftOptions {
                rows: 6,
                samples: None,
                closed: true,
            },
        )
        .unwrap();
        let options = OptimizeOptions {
            stages: loft_schedule(),
            ..OptimizeOptions::default()
        };
        let targets = Targets {
            fixed: loft.fixed.clone(),
            material: MaterialMode::Plastic,
            ..Targets::default()
        };
        let out = optimize(loft.grid.mesh(), &targets, options).unwrap();
        let events: Vec<&str> = out
            .trace
            .rows
            .iter()
            .filter_map(|r| r.event.as_deref())
            .collect();
        assert_eq!(events.first(), Some(&"stage 2"));
        let first = out
            .trace
            .rows
            .iter()
            .position(|r| r.event.is_some())
            .unwrap();
        assert_eq!(
            out.trace.rows[1..first]
                .iter()
                .filter(|r| r.accepted)
                .count(),
            4
        );
    }

    #[test]
    fn cancel_finishes() {
        let g = Grid::planar(4, 4, 1.0);
        let mut opt =
            Optimizer::new(g.mesh(), &Targets::default(), OptimizeOptions::default()).unwrap();
        opt.cancel();
        assert_eq!(opt.step().unwrap(), StepEvent::Finished);
        assert_eq!(opt.finish().unwrap().termination, Termination::Cancelled);
    }

    #[test]
    fn bad_inputs() {
        let g = Grid::planar(4, 4, 1.0);
        let t = Targets::fixed(vec![true; 3]);
        assert!(matches!(
            Optimizer::new(g.mesh(), &t, OptimizeOptions::default()),
            Err(OptimizeError::InvalidInput(_))
        ));
        let w = Weights {
            dev: -1.0,
            ..Weights::default()
        };
        assert!(matches!(
            Optimizer::new(
                g.mesh(),
                &Targets::default(),
                OptimizeOptions::with_weights(w)
            ),
            Err(OptimizeError::Residual(
                ResidualError::NegativeWeight { .. }
            ))
        ));
    }
}
