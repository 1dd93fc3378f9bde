//! Minimization of a soft objective on the zero set of hard constraints by
//! alternating soft steps, tangent-space projection and constraint solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::mesh::QuadMesh;
use crate::residuals::{State, System, VariableLayout};
use crate::sparse::{JacobianPattern, NormalMatrix};

use super::lm::{lm_minimize, LmConfig, Problem, Termination};
use super::problem::{RoundHook, SystemProblem};
use super::SolverError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    /// Weight of the objective relative to the constraints in the soft step.
    pub mu: f64,
    /// Iteration cap of the soft step.
    pub soft_iterations: usize,
    /// Gram diagonal shift relative to its mean diagonal entry.
    pub gram_regularization: f64,
    /// Required `|<h', g_i>| / (|h'| |g_i|)` after projection.
    pub orthogonality_tolerance: f64,
    /// Orthogonality accepted for the predictor step inside
    /// [`constrained_minimize`], which the constraint solve corrects.
    pub predictor_orthogonality: f64,
    /// Gram systems up to this many rows are factored densely.
    pub dense_limit: usize,
    /// Largest weighted constraint row accepted at the end of a constraint solve.
    pub constraint_tolerance: f64,
    pub constraint_iterations: usize,
    /// Outer loops stop when the objective improves by less than this fraction.
    pub stagnation_tolerance: f64,
    pub max_outer: usize,
    /// Halvings of the projected step tried when a loop fails to improve.
    pub backtracking: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            mu: 1.0,
            soft_iterations: 5,
            gram_regularization: 1e-12,
            orthogonality_tolerance: 1e-10,
            predictor_orthogonality: 1e-6,
            dense_limit: 2000,
            constraint_tolerance: 1e-9,
            constraint_iterations: 50,
            stagnation_tolerance: 1e-6,
            max_outer: 50,
            backtracking: 4,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.mu > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.constraint_tolerance > 0.0 && self.gram_regularization >= 0.0) {
            return Err(SolverError::InvalidConfig(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Output of [`project_tangent`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub h: Vec<f64>,
    /// Largest `|<h', g_i>| / (|h'| |g_i|)` over nonzero gradients.
    pub orthogonality: f64,
    pub refinements: usize,
}

fn orthogonality(pattern: &JacobianPattern, grads: &[f64], h: &[f64], h_ref: f64) -> f64 {
    let hn = h
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(1e-8 * h_ref);
    if hn == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for i in 0..pattern.nrows() {
        let r = pattern.row_range(i);
        let g = &grads[r.clone()];
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            continue;
        }
        let dot: f64 = pattern
            .row(i)
            .iter()
            .zip(g)
            .map(|(&c, v)| v * h[c as usize])
            .sum();
        worst = worst.max(dot.abs() / (gn * hn));
    }
    worst
}

enum Gram {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Sparse(crate::sparse::Factor),
}

impl Gram {
    fn solve(&self, rhs: &mut [f64]) {
        match self {
            Gram::Dense(c) => {
                let x = c.solve(&DVector::from_column_slice(rhs));
                rhs.copy_from_slice(x.as_slice());
            }
            Gram::Sparse(f) => f.solve(rhs),
        }
    }
}

/// Removes from `h` its components along the constraint gradients (the rows
/// of the Jacobian given by `pattern` and `grads`):
/// `h' = h + J^T l` with `(J J^T + d I) l = -J h`, refined iteratively.
pub fn project_tangent(
    h: &[f64],
    pattern: &JacobianPattern,
    grads: &[f64],
    config: &ProjectionConfig,
) -> Result<Projected, SolverError> {
    let m = pattern.nrows();
    let h_ref = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if m == 0 || h_ref == 0.0 {
        return Ok(Projected {
            h: h.to_vec(),
            orthogonality: 0.0,
            refinements: 0,
        });
    }
    let (jt, jt_values) = pattern.transpose(grads);
    let mut gram = NormalMatrix::new(&jt).map_err(SolverError::LinearSolveFailure)?;
    gram.assemble(&jt, &jt_values);
    let diag = gram.diagonal();
    let trace: f64 = diag.iter().sum();
    if trace == 0.0 {
        return Ok(Projected {
            h: h.to_vec(),
            orthogonality: 0.0,
            refinements: 0,
        });
    }
    let delta = config.gram_regularization * trace / m as f64;
    // rows with zero gradient get a unit pivot so they decouple
    let shift: Vec<f64> = diag
        .iter()
        .map(|&d| if d == 0.0 { 1.0 } else { delta })
        .collect();
    let factor = if m <= config.dense_limit {
        let mut a = DMatrix::from_column_slice(m, m, &gram.to_dense());
        for (i, s) in shift.iter().enumerate() {
            a[(i, i)] += s;
        }
        Gram::Dense(a.cholesky().ok_or(SolverError::GramSingular {
            orthogonality: f64::INFINITY,
        })?)
    } else {
        Gram::Sparse(
            gram.factor_shifted(&shift)
                .map_err(SolverError::LinearSolveFailure)?,
        )
    };

    let mut hp = h.to_vec();
    let mut jh = vec![0.0; m];
    let mut step = vec![0.0; h.len()];
    let mut refinements = 0;
    let mut ortho = f64::INFINITY;
    for pass in 0..6 {
        pattern.mul(grads, &hp, &mut jh);
        jh.iter_mut().for_each(|v| *v = -*v);
        factor.solve(&mut jh);
        pattern.transpose_mul(grads, &jh, &mut step);
        hp.iter_mut().zip(&step).for_each(|(a, b)| *a += b);
        refinements = pass;
        ortho = orthogonality(pattern, grads, &hp, h_ref);
        // one refinement always runs to remove the regularizer's bias
        if pass >= 1 && ortho <= config.orthogonality_tolerance {
            break;
        }
    }
    if ortho > config.orthogonality_tolerance {
        return Err(SolverError::GramSingular {
            orthogonality: ortho,
        });
    }
    Ok(Projected {
        h: hp,
        orthogonality: ortho,
        refinements,
    })
}

/// Outcome of [`constrained_minimize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstrainedStatus {
    /// The objective stopped improving after at least one accepted loop.
    Converged,
    /// No loop improved the objective.
    NoProgress,
    MaxOuter,
}

/// One accepted outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub objective: f64,
    /// Largest weighted constraint row.
    pub constraint_max_row: f64,
    /// Fraction of the projected step that was used.
    pub step_scale: f64,
    pub orthogonality: f64,
}

#[derive(Debug, Clone)]
pub struct ConstrainedResult {
    pub state: State,
    pub objective: System,
    pub status: ConstrainedStatus,
    /// Record 0 describes the start state after the initial constraint solve.
    pub outer: Vec<OuterRecord>,
}

/// Largest weighted row of a system.
pub fn max_weighted_row(system: &System, state: &State) -> f64 {
    system
        .blocks
        .iter()
        .flat_map(|b| {
            let s = b.weight.sqrt();
            b.terms.iter().map(move |t| {
                let out = System::eval_term(t, state);
                out.residual[..t.rows()]
                    .iter()
                    .fold(0.0f64, |m, r| m.max(s * r.abs()))
            })
        })
        .fold(0.0, f64::max)
}

fn total_energy(system: &System, state: &State) -> f64 {
    system.block_energies(state).iter().map(|(_, e)| e).sum()
}

struct ConstraintSolve {
    state: State,
    max_row: f64,
    ok: bool,
}

fn solve_constraints(
    mesh: &QuadMesh,
    layout: &VariableLayout,
    constraints: &System,
    start: State,
    config: &ProjectionConfig,
) -> Result<ConstraintSolve, SolverError> {
    let mut problem = SystemProblem::new(mesh, constraints.clone(), layout.clone(), start);
    let x0 = problem.gather();
    let lm = LmConfig {
        max_iterations: config.constraint_iterations,
        energy_threshold: f64::MIN_POSITIVE,
        row_threshold: config.constraint_tolerance,
        ..LmConfig::default()
    };
    let res = lm_minimize(&mut problem, x0, lm)?;
    problem.sync(&res.x);
    let state = problem.state().clone();
    let max_row = max_weighted_row(constraints, &state);
    Ok(ConstraintSolve {
        ok: res.termination == Termination::RowThreshold || max_row <= config.constraint_tolerance,
        state,
        max_row,
    })
}

/// Minimizes `objective` subject to `constraints = 0`.
///
/// Each outer loop takes a few LM steps on `constraints + mu * objective`,
/// projects the resulting step onto the tangent space of the constraints,
/// and returns to the constraint set with LM on the constraints alone. A
/// loop is kept only if the objective, re-evaluated after `hook` updates its
/// terms at the new state, decreases.
pub fn constrained_minimize(
    mesh: &QuadMesh,
    layout: &VariableLayout,
    state: State,
    constraints: &System,
    mut objective: System,
    config: &ProjectionConfig,
    mut hook: Option<&mut dyn RoundHook>,
) -> Result<ConstrainedResult, SolverError> {
    config.validate()?;
    let start = solve_constraints(mesh, layout, constraints, state, config)?;
    let mut state = start.state;
    if let Some(h) = hook.as_deref_mut() {
        h.update(mesh, &state, &mut objective)?;
    }
    let mut current = total_energy(&objective, &state);
    let mut outer = vec![OuterRecord {
        objective: current,
        constraint_max_row: start.max_row,
        step_scale: 0.0,
        orthogonality: 0.0,
    }];
    let mut status = ConstrainedStatus::MaxOuter;
    for _ in 0..config.max_outer {
        // step 1: soft minimization of C + mu E
        let mut soft = constraints.clone();
        for b in &objective.blocks {
            soft.blocks.push(crate::residuals::ResidualBlock {
                family: b.family,
                weight: b.weight * config.mu,
                terms: b.terms.clone(),
            });
        }
        let mut soft_problem = SystemProblem::new(mesh, soft, layout.clone(), state.clone());
        let x = soft_problem.gather();
        let soft_lm = LmConfig {
            max_iterations: config.soft_iterations,
            energy_threshold: f64::MIN_POSITIVE,
            ..LmConfig::default()
        };
        let res = lm_minimize(&mut soft_problem, x.clone(), soft_lm)?;
        let h: Vec<f64> = res.x.iter().zip(&x).map(|(a, b)| a - b).collect();

        // step 2: tangent projection at x
        let mut cproblem =
            SystemProblem::new(mesh, constraints.clone(), layout.clone(), state.clone());
        let pattern = cproblem.pattern().clone();
        let mut r = vec![0.0; pattern.nrows()];
        let mut grads = vec![0.0; pattern.nnz()];
        cproblem.evaluate(&x, &mut r, Some(&mut grads));
        let predictor = ProjectionConfig {
            orthogonality_tolerance: config
                .predictor_orthogonality
                .max(config.orthogonality_tolerance),
            ..*config
        };
        let projected = project_tangent(&h, &pattern, &grads, &predictor)?;

        // step 3: back to the constraint set, with backtracking
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=config.backtracking {
            let trial_x: Vec<f64> = x
                .iter()
                .zip(&projected.h)
                .map(|(a, b)| a + scale * b)
                .collect();
            let mut trial = state.clone();
            layout.scatter(&trial_x, &mut trial);
            let solved = solve_constraints(mesh, layout, constraints, trial, config)?;
            if solved.ok {
                let mut obj = objective.clone();
                if let Some(h) = hook.as_deref_mut() {
                    h.update(mesh, &solved.state, &mut obj)?;
                }
                let e = total_energy(&obj, &solved.state);
                if e < current {
                    accepted = Some((solved, obj, e));
                    break;
                }
            }
            scale *= 0.5;
        }

        // step 4: repeat from the new point while the objective improves
        let Some((solved, obj, e)) = accepted else {
            status = if outer.len() == 1 {
                ConstrainedStatus::NoProgress
            } else {
                ConstrainedStatus::Converged
            };
            break;
        };
        let improvement = current - e;
        state = solved.state;
        objective = obj;
        outer.push(OuterRecord {
            objective: e,
            constraint_max_row: solved.max_row,
            step_scale: scale,
            orthogonality: projected.orthogonality,
        });
        let done = improvement <= config.stagnation_tolerance * current;
        current = e;
        if done {
            status = ConstrainedStatus::Converged;
            break;
        }
    }
    Ok(ConstrainedResult {
        state,
        objective,
        status,
        outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradients(rows: &[&[f64]]) -> (JacobianPattern, Vec<f64>) {
        let n = rows[0].len();
        let mut p = JacobianPattern::new(n);
        let mut v = Vec::new();
        for r in rows {
            p.push_row(0..n as u32);
            v.extend_from_slice(r);
        }
        (p, v)
    }

    #[test]
    fn projection_examples() {
        let cfg = ProjectionConfig::default();
        let (p, g) = gradients(&[&[1.0, 0.0, 0.0]]);
        let out = project_tangent(&[0.0, 2.0, 5.0], &p, &g, &cfg).unwrap();
        assert_eq!(out.h, vec![0.0, 2.0, 5.0]);

        let out = project_tangent(&[1.0, 1.0, 0.0], &p, &g, &cfg).unwrap();
        assert!((out.h[0]).abs() < 1e-12 && (out.h[1] - 1.0).abs() < 1e-12 && out.h[2] == 0.0);

        let (p, g) = gradients(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let out = project_tangent(&[1.0, 2.0, 3.0], &p, &g, &cfg).unwrap();
        for (a, b) in out.h.iter().zip([0.0, 0.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_with_dependent_and_zero_gradients() {
        let cfg = ProjectionConfig::default();
        let (p, g) = gradients(&[
            &[1.0, 1.0, 0.0, 0.0],
            &[2.0, 2.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, -1.0, 3.0],
        ]);
        let out = project_tangent(&[0.3, -1.0, 2.0, 0.7], &p, &g, &cfg).unwrap();
        assert!(out.orthogonality <= 1e-10, "{out:?}");
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                (0..8)
                    .map(|j| (((i * 7 + j * 3) % 5) as f64) - 2.0)
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let (p, g) = gradients(&refs);
        let h: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let dense = project_tangent(&h, &p, &g, &ProjectionConfig::default()).unwrap();
        let sparse = project_tangent(
            &h,
            &p,
            &g,
            &ProjectionConfig {
                dense_limit: 0,
                ..ProjectionConfig::default()
            },
        )
        .unwrap();
        for (a, b) in dense.h.iter().zip(&sparse.h) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(sparse.orthogonality <= 1e-10);
    }
}
