//! Weight schedules: explicit stages and switching regularizers off when
//! progress stalls.

use serde::{Deserialize, Serialize};

use crate::residuals::Weights;

use super::lm::{window_stagnated, Trace};

/// Weights used for a number of accepted iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub weights: Weights,
    /// Accepted iterations before moving to the next stage; `None` runs
    /// until the stage stagnates.
    #[serde(default)]
    pub iterations: Option<usize>,
}

impl Stage {
    pub fn open(weights: Weights) -> Self {
        Stage {
            weights,
            iterations: None,
        }
    }
}

/// What to do with the weights given the trace so far.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleDecision {
    Keep,
    /// Switch to the returned weights.
    Switch(Weights),
    Terminate,
}

/// True when the accepted rows after the last annotated row stopped
/// improving: the best total of the last `window` rows is within
/// `tolerance` (relative) of the best total before them.
pub fn trace_stagnated(trace: &Trace, window: usize, tolerance: f64) -> bool {
    let start = trace
        .rows
        .iter()
        .rposition(|r| r.event.is_some())
        .unwrap_or(0);
    let acc: Vec<f64> = trace.rows[start..]
        .iter()
        .enumerate()
        .filter(|(i, r)| *i == 0 || r.accepted)
        .map(|(_, r)| r.total)
        .collect();
    window_stagnated(&acc, window, tolerance)
}

/// Zeroes vertex fairness, normal fairness and isometry weights once the
/// trace stagnates; if they are already zero the run should end.
pub fn schedule_weights(
    weights: &Weights,
    trace: &Trace,
    window: usize,
    tolerance: f64,
) -> ScheduleDecision {
    if !trace_stagnated(trace, window, tolerance) {
        ScheduleDecision::Keep
    } else if weights.regularizers_off() {
        ScheduleDecision::Terminate
    } else {
        ScheduleDecision::Switch(weights.without_regularizers())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::lm::TraceRow;

    fn trace(totals: &[f64]) -> Trace {
        Trace {
            names: vec![],
            rows: totals
                .iter()
                .enumerate()
                .map(|(i, &t)| TraceRow {
                    iteration: i,
                    total: t,
                    energies: vec![],
                    damping: 1e-6,
                    accepted: true,
                    event: None,
                })
                .collect(),
        }
    }

    #[test]
    fn improving_trace_keeps_weights() {
        let t = trace(&[1.0, 0.5, 0.25, 0.1, 0.05, 0.01, 0.001]);
        assert_eq!(
            schedule_weights(&Weights::default(), &t, 5, 1e-6),
            ScheduleDecision::Keep
        );
    }

    #[test]
    fn stagnation_zeroes_regularizers_once() {
        let t = trace(&[1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        let w = Weights::default();
        match schedule_weights(&w, &t, 5, 1e-6) {
            ScheduleDecision::Switch(n) => {
                assert!(n.regularizers_off());
                assert_eq!(n.dev, w.dev);
                assert_eq!(
                    schedule_weights(&n, &t, 5, 1e-6),
                    ScheduleDecision::Terminate
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn window_restarts_after_event() {
        let mut t = trace(&[1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        t.rows[4].event = Some("weights".into());
        assert_eq!(
            schedule_weights(&Weights::default(), &t, 5, 1e-6),
            ScheduleDecision::Keep
        );
    }
}
