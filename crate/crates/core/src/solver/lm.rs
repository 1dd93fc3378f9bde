//! Sparse Levenberg-Marquardt with gain-ratio damping control.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::sparse::{Factor, JacobianPattern, NormalMatrix, SparseError};

use super::SolverError;

/// Outcome of a problem's post-acceptance hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    /// Nothing changed.
    Unchanged,
    /// Residual values changed; the sparsity pattern is the same.
    Values,
    /// The set of rows changed; the pattern must be rebuilt.
    Structure,
}

/// A sparse nonlinear least-squares problem `min |r(x)|^2`.
pub trait Problem {
    fn unknowns(&self) -> usize;
    fn pattern(&self) -> &JacobianPattern;
    /// Writes residuals and, if requested, Jacobian values in pattern order.
    fn evaluate(&mut self, x: &[f64], residual: &mut [f64], jacobian: Option<&mut [f64]>);
    /// Column labels for the energy trace.
    fn block_names(&self) -> Vec<String>;
    fn block_energies(&self, residual: &[f64]) -> Vec<f64>;
    /// Called on every trial point before it is evaluated; may modify `x`
    /// in place. Acceptance is decided on the modified point.
    fn adjust_trial(&mut self, _x: &mut [f64]) {}
    /// Called after every accepted step; may modify `x` in place.
    fn after_accept(&mut self, _x: &mut [f64]) -> Result<Update, SolverError> {
        Ok(Update::Unchanged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    /// Initial damping relative to the largest diagonal entry of `J^T J`.
    pub initial_damping: f64,
    pub max_iterations: usize,
    /// Stop once the total energy falls below this value.
    pub energy_threshold: f64,
    /// Stop once every residual row is below this value in magnitude.
    pub row_threshold: f64,
    /// Accepted iterations over which stagnation is measured.
    pub stagnation_window: usize,
    /// Relative energy decrease over the window below which the run stagnates.
    pub stagnation_tolerance: f64,
    /// Stop when `|J^T r|_inf` falls below this value.
    pub gradient_tolerance: f64,
    /// Stop when the step is below this fraction of `|x|`.
    pub step_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_damping: 1e-6,
            max_iterations: 200,
            energy_threshold: 1e-20,
            row_threshold: 0.0,
            stagnation_window: 5,
            stagnation_tolerance: 1e-6,
            gradient_tolerance: 1e-15,
            step_tolerance: 1e-15,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |name: &str, v: f64| {
            SolverError::InvalidConfig(format!("{name} must be positive, got {v}"))
        };
        if !(self.initial_damping > 0.0) {
            return Err(bad("initial_damping", self.initial_damping));
        }
        if !(self.energy_threshold > 0.0) {
            return Err(bad("energy_threshold", self.energy_threshold));
        }
        if !(self.stagnation_tolerance > 0.0) {
            return Err(bad("stagnation_tolerance", self.stagnation_tolerance));
        }
        if self.stagnation_window == 0 {
            return Err(SolverError::InvalidConfig(
                "stagnation_window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EnergyThreshold,
    RowThreshold,
    SmallGradient,
    SmallStep,
    Stagnated,
    MaxIterations,
    Cancelled,
}

impl Termination {
    /// Stopping because the residual itself is small.
    pub fn is_converged(self) -> bool {
        matches!(
            self,
            Termination::EnergyThreshold | Termination::RowThreshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub total: f64,
    pub energies: Vec<f64>,
    pub damping: f64,
    pub accepted: bool,
    /// Annotation such as a weight change.
    pub event: Option<String>,
}

/// Per-iteration energies. Row 0 is the initial state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.accepted)
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Energy column of a named block.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r.energies[k]).collect())
    }

    /// Appends another trace, renumbering its iterations.
    pub fn extend(&mut self, other: &Trace) {
        let base = self.rows.last().map(|r| r.iteration).unwrap_or(0);
        let skip = usize::from(!self.rows.is_empty());
        if self.names.is_empty() {
            self.names = other.names.clone();
        }
        for r in other.rows.iter().skip(skip) {
            let mut r = r.clone();
            r.iteration += base;
            self.rows.push(r);
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["iteration".to_string(), "total".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend([
            "damping".to_string(),
            "accepted".to_string(),
            "event".to_string(),
        ]);
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.iteration.to_string(), format!("{:e}", r.total)];
            rec.extend(r.energies.iter().map(|e| format!("{e:e}")));
            rec.push(format!("{:e}", r.damping));
            rec.push(u8::from(r.accepted).to_string());
            rec.push(r.event.clone().unwrap_or_default());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Result of a single [`LmSolver::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Accepted { energy: f64 },
    Rejected,
    Done(Termination),
}

/// Stepwise LM driver over a [`Problem`].
pub struct LmSolver {
    config: LmConfig,
    x: Vec<f64>,
    residual: Vec<f64>,
    jacobian: Vec<f64>,
    gradient: Vec<f64>,
    normal: NormalMatrix,
    energy: f64,
    mu: f64,
    nu: f64,
    iteration: usize,
    /// Energies of accepted iterations since the last objective change.
    window: Vec<f64>,
    trace: Trace,
    pending_event: Option<String>,
    done: Option<Termination>,
}

/// Compares the best of the last `window` energies with the best before
/// them. Equals the plain relative decrease over the window for monotone
/// sequences.
pub fn window_stagnated(energies: &[f64], window: usize, tolerance: f64) -> bool {
    if energies.len() <= window {
        return false;
    }
    let split = energies.len() - window;
    let old = energies[..split]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let new = energies[split..]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    old - new <= tolerance * old.abs()
}

fn energy_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

impl LmSolver {
    pub fn new<P: Problem + ?Sized>(
        problem: &mut P,
        x: Vec<f64>,
        config: LmConfig,
    ) -> Result<Self, SolverError> {
        config.validate()?;
        if x.len() != problem.unknowns() {
            return Err(SolverError::InvalidConfig(format!(
                "start vector has {} entries, problem has {} unknowns",
                x.len(),
                problem.unknowns()
            )));
        }
        let normal =
            NormalMatrix::new(problem.pattern()).map_err(SolverError::LinearSolveFailure)?;
        let mut s = LmSolver {
            config,
            x,
            residual: Vec::new(),
            jacobian: Vec::new(),
            gradient: Vec::new(),
            normal,
            energy: 0.0,
            mu: 0.0,
            nu: 2.0,
            iteration: 0,
            window: Vec::new(),
            trace: Trace {
                names: problem.block_names(),
                rows: Vec::new(),
            },
            pending_event: None,
            done: None,
        };
        s.linearize(problem)?;
        s.mu = config.initial_damping
            * s.normal
                .diagonal()
                .into_iter()
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
        s.window.push(s.energy);
        s.record(problem, true);
        s.check_converged();
        Ok(s)
    }

    fn linearize<P: Problem + ?Sized>(&mut self, problem: &mut P) -> Result<(), SolverError> {
        let p = problem.pattern();
        self.residual.resize(p.nrows(), 0.0);
        self.jacobian.resize(p.nnz(), 0.0);
        self.gradient.resize(p.ncols(), 0.0);
        problem.evaluate(&self.x, &mut self.residual, Some(&mut self.jacobian));
        if let Some(i) = self.residual.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteResidual { row: i });
        }
        if self.jacobian.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteResidual { row: usize::MAX });
        }
        self.energy = energy_of(&self.residual);
        let p = problem.pattern();
        p.transpose_mul(&self.jacobian, &self.residual, &mut self.gradient);
        self.normal.assemble(p, &self.jacobian);
        Ok(())
    }

    fn record<P: Problem + ?Sized>(&mut self, problem: &P, accepted: bool) {
        self.trace.rows.push(TraceRow {
            iteration: self.iteration,
            total: self.energy,
            energies: problem.block_energies(&self.residual),
            damping: self.mu,
            accepted,
            event: self.pending_event.take(),
        });
    }

    fn check_converged(&mut self) {
        if self.energy <= self.config.energy_threshold {
            self.done = Some(Termination::EnergyThreshold);
        } else if self.config.row_threshold > 0.0
            && self
                .residual
                .iter()
                .all(|r| r.abs() <= self.config.row_threshold)
        {
            self.done = Some(Termination::RowThreshold);
        } else if self.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()))
            <= self.config.gradient_tolerance
        {
            self.done = Some(Termination::SmallGradient);
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn into_x(self) -> Vec<f64> {
        self.x
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn damping(&self) -> f64 {
        self.mu
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn termination(&self) -> Option<Termination> {
        self.done
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn set_max_iterations(&mut self, n: usize) {
        self.config.max_iterations = n;
    }

    /// True when the last `stagnation_window` accepted iterations improved
    /// on the best earlier energy by less than the stagnation tolerance
    /// (relative).
    pub fn stagnated(&self) -> bool {
        window_stagnated(
            &self.window,
            self.config.stagnation_window,
            self.config.stagnation_tolerance,
        )
    }

    /// Re-evaluates after the problem's objective changed (new weights,
    /// terms or unknown values). Resets stagnation tracking and annotates
    /// the next trace row with `event`. An event also restarts the damping,
    /// since the damping reached under the old weights says nothing about
    /// the new objective.
    pub fn objective_changed<P: Problem + ?Sized>(
        &mut self,
        problem: &mut P,
        structure: bool,
        event: Option<String>,
    ) -> Result<(), SolverError> {
        if structure {
            self.normal =
                NormalMatrix::new(problem.pattern()).map_err(SolverError::LinearSolveFailure)?;
        }
        self.linearize(problem)?;
        if event.is_some() {
            self.mu = self.config.initial_damping
                * self
                    .normal
                    .diagonal()
                    .into_iter()
                    .fold(0.0, f64::max)
                    .max(f64::MIN_POSITIVE);
            self.nu = 2.0;
        }
        self.window.clear();
        self.window.push(self.energy);
        self.done = None;
        self.pending_event = event;
        self.check_converged();
        Ok(())
    }

    /// Replaces the current unknowns.
    pub fn set_x<P: Problem + ?Sized>(
        &mut self,
        problem: &mut P,
        x: Vec<f64>,
    ) -> Result<(), SolverError> {
        self.x = x;
        self.objective_changed(problem, false, None)
    }

    fn factor(&mut self) -> Result<Factor, SolverError> {
        let mut last = None;
        for _ in 0..30 {
            match self.normal.factor_damped(self.mu) {
                Ok(f) => return Ok(f),
                Err(e @ SparseError::NotPositiveDefinite { .. }) => {
                    last = Some(e);
                    self.mu *= self.nu;
                    self.nu *= 2.0;
                }
                Err(e) => return Err(SolverError::LinearSolveFailure(e)),
            }
        }
        Err(SolverError::LinearSolveFailure(
            last.expect("at least one attempt"),
        ))
    }

    /// Performs one damped Gauss-Newton trial.
    pub fn step<P: Problem + ?Sized>(&mut self, problem: &mut P) -> Result<Step, SolverError> {
        if let Some(t) = self.done {
            return Ok(Step::Done(t));
        }
        if self.iteration >= self.config.max_iterations {
            self.done = Some(Termination::MaxIterations);
            return Ok(Step::Done(Termination::MaxIterations));
        }
        let factor = self.factor()?;
        let mut h: Vec<f64> = self.gradient.iter().map(|g| -g).collect();
        factor.solve(&mut h);
        self.iteration += 1;
        let h_norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x_norm = self.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !h_norm.is_finite() {
            return Err(SolverError::NonFiniteResidual { row: usize::MAX });
        }
        if h_norm <= self.config.step_tolerance * (x_norm + self.config.step_tolerance) {
            self.done = Some(Termination::SmallStep);
            return Ok(Step::Done(Termination::SmallStep));
        }
        let mut x_new: Vec<f64> = self.x.iter().zip(&h).map(|(a, b)| a + b).collect();
        problem.adjust_trial(&mut x_new);
        let mut r_new = vec![0.0; self.residual.len()];
        problem.evaluate(&x_new, &mut r_new, None);
        let e_new = energy_of(&r_new);
        // predicted decrease of |r|^2: h^T (mu h - g)
        let predicted: f64 = h
            .iter()
            .zip(&self.gradient)
            .map(|(hi, gi)| hi * (self.mu * hi - gi))
            .sum();
        let rho = if e_new.is_finite() && predicted > 0.0 {
            (self.energy - e_new) / predicted
        } else {
            f64::NEG_INFINITY
        };
        if rho > 0.0 {
            self.x = x_new;
            let update = problem.after_accept(&mut self.x)?;
            if update == Update::Structure {
                self.normal = NormalMatrix::new(problem.pattern())
                    .map_err(SolverError::LinearSolveFailure)?;
            }
            self.linearize(problem)?;
            self.mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            self.nu = 2.0;
            if update == Update::Structure {
                // rows were added or removed; energies before and after are not comparable
                self.window.clear();
            }
            self.window.push(self.energy);
            self.record(problem, true);
            self.check_converged();
            if self.done.is_none() && self.stagnated() {
                self.done = Some(Termination::Stagnated);
            }
            Ok(Step::Accepted {
                energy: self.energy,
            })
        } else {
            self.mu *= self.nu;
            self.nu *= 2.0;
            self.record(problem, false);
            if !self.mu.is_finite() || self.mu > 1e300 {
                self.done = Some(Termination::Stagnated);
            }
            Ok(Step::Rejected)
        }
    }

    /// Steps until a termination condition holds.
    pub fn run<P: Problem + ?Sized>(
        &mut self,
        problem: &mut P,
    ) -> Result<Termination, SolverError> {
        loop {
            if let Step::Done(t) = self.step(problem)? {
                return Ok(t);
            }
        }
    }
}

/// Result of [`lm_minimize`].
#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    pub trace: Trace,
    pub termination: Termination,
    pub energy: f64,
}

/// Minimizes `|r(x)|^2` from `x0`.
pub fn lm_minimize<P: Problem + ?Sized>(
    problem: &mut P,
    x0: Vec<f64>,
    config: LmConfig,
) -> Result<LmResult, SolverError> {
    let mut solver = LmSolver::new(problem, x0, config)?;
    let termination = solver.run(problem)?;
    let energy = solver.energy();
    Ok(LmResult {
        energy,
        termination,
        trace: solver.trace.clone(),
        x: solver.into_x(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense toy problem given by closures.
    struct Toy<F: Fn(&[f64], &mut [f64], &mut [f64])> {
        n: usize,
        pattern: JacobianPattern,
        f: F,
    }

    impl<F: Fn(&[f64], &mut [f64], &mut [f64])> Toy<F> {
        fn new(m: usize, n: usize, f: F) -> Self {
            let mut pattern = JacobianPattern::new(n);
            for _ in 0..m {
                pattern.push_row(0..n as u32);
            }
            Toy { n, pattern, f }
        }
    }

    impl<F: Fn(&[f64], &mut [f64], &mut [f64])> Problem for Toy<F> {
        fn unknowns(&self) -> usize {
            self.n
        }
        fn pattern(&self) -> &JacobianPattern {
            &self.pattern
        }
        fn evaluate(&mut self, x: &[f64], r: &mut [f64], j: Option<&mut [f64]>) {
            let mut scratch = vec![0.0; self.pattern.nnz()];
            match j {
                Some(j) => (self.f)(x, r, j),
                None => (self.f)(x, r, &mut scratch),
            }
        }
        fn block_names(&self) -> Vec<String> {
            vec!["all".into()]
        }
        fn block_energies(&self, r: &[f64]) -> Vec<f64> {
            vec![energy_of(r)]
        }
    }

    #[test]
    fn quadratic_root() {
        let mut p = Toy::new(1, 1, |x, r, j| {
            r[0] = x[0] * x[0] - 4.0;
            j[0] = 2.0 * x[0];
        });
        let res = lm_minimize(&mut p, vec![3.0], LmConfig::default()).unwrap();
        assert!((res.x[0] - 2.0).abs() < 1e-10, "{:?}", res.x);
        assert!(res.trace.rows.last().unwrap().iteration < 20);
        assert!(res.termination.is_converged() || res.termination == Termination::SmallGradient);
    }

    #[test]
    fn zero_residual_start_returns_immediately() {
        let mut p = Toy::new(1, 1, |x, r, j| {
            r[0] = x[0] * x[0] - 4.0;
            j[0] = 2.0 * x[0];
        });
        let res = lm_minimize(&mut p, vec![2.0], LmConfig::default()).unwrap();
        assert_eq!(res.trace.len(), 1);
        assert_eq!(res.x, vec![2.0]);
        assert_eq!(res.termination, Termination::EnergyThreshold);
    }

    #[test]
    fn rosenbrock_is_monotone() {
        let mut p = Toy::new(2, 2, |x, r, j| {
            r[0] = 10.0 * (x[1] - x[0] * x[0]);
            r[1] = 1.0 - x[0];
            j[0] = -20.0 * x[0];
            j[1] = 10.0;
            j[2] = -1.0;
            j[3] = 0.0;
        });
        let cfg = LmConfig {
            max_iterations: 500,
            ..LmConfig::default()
        };
        let res = lm_minimize(&mut p, vec![-1.2, 1.0], cfg).unwrap();
        assert!(
            (res.x[0] - 1.0).abs() < 1e-8 && (res.x[1] - 1.0).abs() < 1e-8,
            "{:?}",
            res.x
        );
        let acc: Vec<f64> = res.trace.accepted().map(|r| r.total).collect();
        assert!(acc.windows(2).all(|w| w[1] <= w[0]));
        let mut buf = Vec::new();
        res.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,total,all,damping,accepted,event\n"));
    }

    #[test]
    fn stagnation_on_inconsistent_system() {
        // x = 1 and x = 2 cannot both hold
        let mut p = Toy::new(2, 1, |x, r, j| {
            r[0] = x[0] - 1.0;
            r[1] = x[0] - 2.0;
            j[0] = 1.0;
            j[1] = 1.0;
        });
        let res = lm_minimize(&mut p, vec![10.0], LmConfig::default()).unwrap();
        assert!(!res.termination.is_converged());
        assert!((res.x[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn invalid_config() {
        let cfg = LmConfig {
            initial_damping: 0.0,
            ..LmConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
