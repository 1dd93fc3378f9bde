//! [`Problem`] implementation over a weighted residual [`System`].

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::geometry::try_normalize;
use crate::mesh::QuadMesh;
use crate::residuals::{Assembly, State, System, VariableLayout, Weights};
use crate::sparse::JacobianPattern;

use super::lm::{Problem, Update};
use super::SolverError;

/// When face normals and rulings are recomputed from vertex positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalRefresh {
    /// Normals and rulings are plain unknowns.
    Off,
    /// Replaced after every accepted iteration; the energy may rise.
    Always,
    /// Replaced at every trial point before it is evaluated, so accepted
    /// iterations never raise the energy.
    #[default]
    Trial,
}

/// Per-round update of residual terms that depend on the current geometry
/// (closest points, active sets, previous-iterate references).
pub trait RoundHook: Send {
    fn update(
        &mut self,
        mesh: &QuadMesh,
        state: &State,
        system: &mut System,
    ) -> Result<Update, SolverError>;
}

/// A residual system bound to a mesh, a variable layout and a state that
/// supplies constant slots.
pub struct SystemProblem<'a> {
    mesh: Cow<'a, QuadMesh>,
    system: System,
    layout: VariableLayout,
    state: State,
    assembly: Assembly,
    refresh: NormalRefresh,
    hooks: Vec<Box<dyn RoundHook + 'a>>,
}

impl<'a> SystemProblem<'a> {
    pub fn new(mesh: &'a QuadMesh, system: System, layout: VariableLayout, state: State) -> Self {
        Self::from_cow(Cow::Borrowed(mesh), system, layout, state)
    }

    /// Like [`SystemProblem::new`] for a borrowed or owned mesh.
    pub fn from_cow(
        mesh: Cow<'a, QuadMesh>,
        system: System,
        layout: VariableLayout,
        state: State,
    ) -> Self {
        let assembly = Assembly::new(&system, &layout);
        SystemProblem {
            mesh,
            system,
            layout,
            state,
            assembly,
            refresh: NormalRefresh::Off,
            hooks: Vec::new(),
        }
    }

    pub fn with_refresh(mut self, refresh: NormalRefresh) -> Self {
        self.refresh = refresh;
        self
    }

    pub fn add_hook(&mut self, hook: Box<dyn RoundHook + 'a>) {
        self.hooks.push(hook);
    }

    pub fn mesh(&self) -> &QuadMesh {
        &self.mesh
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    /// State as of the last [`sync`](Self::sync) or accepted iteration.
    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn gather(&self) -> Vec<f64> {
        self.layout.gather(&self.state)
    }

    /// Copies unknowns into the state.
    pub fn sync(&mut self, x: &[f64]) {
        self.layout.scatter(x, &mut self.state);
    }

    pub fn set_weights(&mut self, weights: &Weights) {
        self.system.apply_weights(weights);
    }

    /// Edits the system; the assembly is rebuilt afterwards.
    pub fn edit_system(&mut self, edit: impl FnOnce(&mut System)) {
        edit(&mut self.system);
        self.assembly = Assembly::new(&self.system, &self.layout);
    }

    /// Runs all round hooks against the current state.
    pub fn run_hooks(&mut self) -> Result<Update, SolverError> {
        let mut update = Update::Unchanged;
        for hook in &mut self.hooks {
            match hook.update(&self.mesh, &self.state, &mut self.system)? {
                Update::Structure => update = Update::Structure,
                Update::Values if update == Update::Unchanged => update = Update::Values,
                _ => {}
            }
        }
        if update == Update::Structure {
            self.assembly = Assembly::new(&self.system, &self.layout);
        }
        Ok(update)
    }

    /// Replaces the normals in `x` by the frame normals of its positions,
    /// each kept on the side of its previous value, and the rulings by the
    /// cross products of the new normals. Degenerate faces keep their normal.
    fn refreshed(&self, x: &mut [f64]) {
        let mut s = self.state.clone();
        self.layout.scatter(x, &mut s);
        for (f, corners) in self.mesh.faces().iter().enumerate() {
            let p = corners.map(|v| s.positions[v.idx()]);
            let cross = (p[2] - p[0]).cross(&(p[3] - p[1]));
            let Some(n) = try_normalize(&cross, 1e-300) else {
                continue;
            };
            s.normals[f] = if n.dot(&s.normals[f]) < 0.0 { -n } else { n };
        }
        s.rederive_rulings(&self.mesh);
        x.copy_from_slice(&self.layout.gather(&s));
    }
}

impl Problem for SystemProblem<'_> {
    fn unknowns(&self) -> usize {
        self.layout.len()
    }

    fn pattern(&self) -> &JacobianPattern {
        self.assembly.pattern()
    }

    fn evaluate(&mut self, x: &[f64], residual: &mut [f64], jacobian: Option<&mut [f64]>) {
        self.assembly.eval(
            &self.system,
            &self.layout,
            &self.state,
            x,
            residual,
            jacobian,
        );
    }

    fn block_names(&self) -> Vec<String> {
        self.system
            .blocks
            .iter()
            .map(|b| b.family.name().to_string())
            .collect()
    }

    fn block_energies(&self, residual: &[f64]) -> Vec<f64> {
        self.assembly.block_energies(residual)
    }

    fn adjust_trial(&mut self, x: &mut [f64]) {
        if self.refresh == NormalRefresh::Trial {
            self.refreshed(x);
        }
    }

    fn after_accept(&mut self, x: &mut [f64]) -> Result<Update, SolverError> {
        let mut update = Update::Unchanged;
        if self.refresh == NormalRefresh::Always {
            self.refreshed(x);
            update = Update::Values;
        }
        self.sync(x);
        match self.run_hooks()? {
            Update::Unchanged => Ok(update),
            other => Ok(other),
        }
    }
}
