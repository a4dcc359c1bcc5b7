//! Reference Governor: filters the Operator's target power through
//! surrogate-predicted trajectories so pointwise-in-time constraints on pump
//! flows and the IHX outlet temperature are never knowingly violated.
//!
//! The admissible region is evaluated online: a candidate setpoint
//! `previous + kappa (target - previous)` is rolled out on the surrogate over
//! the prediction horizon and checked against every (buffered) constraint at
//! every step; bisection finds the largest feasible `kappa`, rounding down at
//! the feasibility boundary. Holding the setpoint constant over the horizon
//! and re-governing every interval keeps the filter tracking the
//! EnKF-updated surrogate instead of a stale precomputed admissible set.

use serde::{Deserialize, Serialize};

use crate::plant::{FULL_POWER, MIN_POWER_FRAC};
use crate::state::{SystemState, VarId};
use crate::surrogate::{PumpContext, SurrogateError, SurrogateInput, SurrogateNet};

#[derive(Debug, thiserror::Error)]
pub enum GovernorError {
    #[error("target {0:.3e} W outside the governed band")]
    TargetOutOfBand(f64),
    #[error(
        "previous setpoint is itself predicted infeasible ({var} violates by {excess:.3e} at \
         step {step}); holding previous and raising an alarm"
    )]
    PreviousInfeasible {
        var: &'static str,
        excess: f64,
        step: usize,
    },
    #[error("constraint set invalid: {0}")]
    InvalidConstraints(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Variable must stay at or above the bound.
    Min,
    /// Variable must stay at or below the bound.
    Max,
}

/// One pointwise-in-time constraint with an optional conservatism buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub var: VarId,
    pub bound: f64,
    pub direction: Direction,
    /// Margin added on the feasible side during prediction; zero reproduces
    /// the bare bounds.
    pub buffer: f64,
}

impl Constraint {
    /// Buffered excess: positive when violated.
    fn excess(&self, value: f64) -> f64 {
        match self.direction {
            Direction::Min => (self.bound + self.buffer) - value,
            Direction::Max => value - (self.bound - self.buffer),
        }
    }

    /// Unbuffered excess against the bare bound.
    pub fn excess_unbuffered(&self, value: f64) -> f64 {
        match self.direction {
            Direction::Min => self.bound - value,
            Direction::Max => value - self.bound,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    /// The plant's three operating constraints.
    pub fn defaults() -> Self {
        ConstraintSet {
            constraints: vec![
                Constraint {
                    var: VarId::MDotPP,
                    bound: 720.0,
                    direction: Direction::Min,
                    buffer: 0.0,
                },
                Constraint {
                    var: VarId::MDotPS,
                    bound: 1000.0,
                    direction: Direction::Min,
                    buffer: 0.0,
                },
                Constraint {
                    var: VarId::TIhxSOut,
                    bound: 890.0,
                    direction: Direction::Max,
                    buffer: 0.0,
                },
            ],
        }
    }

    pub fn with_relative_buffers(mut self, fraction: f64) -> Self {
        for c in &mut self.constraints {
            c.buffer = fraction * c.bound.abs();
        }
        self
    }

    pub fn validate(&self) -> Result<(), GovernorError> {
        for c in &self.constraints {
            if !c.bound.is_finite() {
                return Err(GovernorError::InvalidConstraints(format!(
                    "{} bound not finite",
                    c.var
                )));
            }
            if c.buffer < 0.0 {
                return Err(GovernorError::InvalidConstraints(format!(
                    "{} buffer negative",
                    c.var
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GovernorConfig {
    /// Prediction horizon in surrogate steps (one setpoint interval plus a
    /// settling pad).
    pub horizon_steps: usize,
    /// Bisection resolution on kappa.
    pub kappa_tol: f64,
    /// Keep the full predicted trajectory on the decision (tests and plots).
    pub keep_trajectory: bool,
    /// Buffer fraction used when re-checking the hold point (kappa = 0).
    /// A setpoint accepted at the full buffer stays acceptable under small
    /// recalibration wobble instead of raising an alarm every interval.
    pub hold_buffer_factor: f64,
}

impl Default for GovernorConfig {
    fn default() -> Self {
        GovernorConfig {
            horizon_steps: 1440,
            kappa_tol: 1e-3,
            keep_trajectory: false,
            hold_buffer_factor: 0.5,
        }
    }
}

/// Worst margin of one constraint over a predicted trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictedMargin {
    pub var: VarId,
    /// Buffered margin; always >= 0 on emitted decisions.
    pub min_margin: f64,
    /// Step index where the margin is tightest.
    pub at_step: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GovernorDecision {
    /// Admissible setpoint sent to the plant [W].
    pub admissible: f64,
    /// Applied scaling kappa* in [0, 1].
    pub kappa: f64,
    /// Binding constraint when kappa* < 1.
    pub binding: Option<VarId>,
    /// Bisection iterations used.
    pub iterations: usize,
    /// Per-constraint worst margins of the emitted trajectory.
    pub margins: Vec<PredictedMargin>,
    /// Full predicted trajectory when requested.
    pub trajectory: Option<Vec<SystemState>>,
}

struct RolloutOutcome {
    violation: Option<(usize, usize, f64)>, // (constraint, step, excess)
    margins: Vec<PredictedMargin>,
    trajectory: Option<Vec<SystemState>>,
}

/// Roll the surrogate forward under a held setpoint, checking buffered
/// constraints pointwise.
#[allow(clippy::too_many_arguments)]
fn rollout(
    net: &SurrogateNet,
    lag2: &SystemState,
    lag1: &SystemState,
    pumps: &PumpContext,
    setpoint: f64,
    constraints: &ConstraintSet,
    config: &GovernorConfig,
    collect: bool,
) -> Result<RolloutOutcome, SurrogateError> {
    let mut margins: Vec<PredictedMargin> = constraints
        .constraints
        .iter()
        .map(|c| PredictedMargin {
            var: c.var,
            min_margin: f64::INFINITY,
            at_step: 0,
        })
        .collect();
    let mut trajectory = if collect {
        Some(Vec::with_capacity(config.horizon_steps))
    } else {
        None
    };
    let mut prev = *lag2;
    let mut curr = *lag1;
    for step in 0..config.horizon_steps {
        let u = SurrogateInput {
            t: curr[VarId::T],
            target_power: setpoint,
        };
        let next = net.eval_step_with(&prev, &curr, &u, pumps, &[])?;
        for (i, c) in constraints.constraints.iter().enumerate() {
            let e = c.excess(next[c.var]);
            let margin = -e;
            if margin < margins[i].min_margin {
                margins[i].min_margin = margin;
                margins[i].at_step = step;
            }
            if e > 0.0 {
                return Ok(RolloutOutcome {
                    violation: Some((i, step, e)),
                    margins,
                    trajectory,
                });
            }
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(next);
        }
        prev = curr;
        curr = next;
    }
    Ok(RolloutOutcome {
        violation: None,
        margins,
        trajectory,
    })
}

/// Filter a target power through the surrogate: returns the largest
/// admissible step toward it.
#[allow(clippy::too_many_arguments)]
pub fn govern(
    target: f64,
    previous: f64,
    net: &SurrogateNet,
    lag2: &SystemState,
    lag1: &SystemState,
    pumps: &PumpContext,
    constraints: &ConstraintSet,
    config: &GovernorConfig,
) -> Result<GovernorDecision, GovernorError> {
    constraints.validate()?;
    if !(MIN_POWER_FRAC * FULL_POWER..=FULL_POWER).contains(&target) {
        return Err(GovernorError::TargetOutOfBand(target));
    }
    let setpoint_at = |kappa: f64| previous + kappa * (target - previous);

    // Fast path: the target itself.
    let full = rollout(
        net,
        lag2,
        lag1,
        pumps,
        setpoint_at(1.0),
        constraints,
        config,
        config.keep_trajectory,
    )?;
    if full.violation.is_none() {
        return Ok(GovernorDecision {
            admissible: setpoint_at(1.0),
            kappa: 1.0,
            binding: None,
            iterations: 0,
            margins: full.margins,
            trajectory: full.trajectory,
        });
    }
    let mut binding = full.violation.map(|(i, _, _)| constraints.constraints[i].var);

    // The previous setpoint must at least be feasible to scale from. The
    // hold check runs with relaxed buffers so a setpoint parked on the
    // admissible boundary survives small surrogate recalibration wobble.
    let hold_constraints = ConstraintSet {
        constraints: constraints
            .constraints
            .iter()
            .map(|c| Constraint {
                buffer: c.buffer * config.hold_buffer_factor.clamp(0.0, 1.0),
                ..c.clone()
            })
            .collect(),
    };
    let hold = rollout(net, lag2, lag1, pumps, setpoint_at(0.0), &hold_constraints, config, false)?;
    if let Some((i, step, excess)) = hold.violation {
        return Err(GovernorError::PreviousInfeasible {
            var: constraints.constraints[i].var.name(),
            excess,
            step,
        });
    }

    // Bisection: lo stays feasible, hi stays infeasible; round kappa* down.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let max_iters = (1.0 / config.kappa_tol).log2().ceil() as usize;
    let mut iterations = 0;
    while hi - lo > config.kappa_tol && iterations < max_iters {
        let mid = 0.5 * (lo + hi);
        let probe = rollout(net, lag2, lag1, pumps, setpoint_at(mid), constraints, config, false)?;
        match probe.violation {
            None => lo = mid,
            Some((i, _, _)) => {
                binding = Some(constraints.constraints[i].var);
                hi = mid;
            }
        }
        iterations += 1;
    }

    // Re-evaluate the emitted setpoint to attach verified margins. When no
    // forward step is feasible at the full buffers, the decision is a hold
    // inside the hysteresis band and its margins come from the relaxed set.
    let mut fin = rollout(
        net,
        lag2,
        lag1,
        pumps,
        setpoint_at(lo),
        constraints,
        config,
        config.keep_trajectory,
    )?;
    if fin.violation.is_some() && lo == 0.0 {
        fin = rollout(
            net,
            lag2,
            lag1,
            pumps,
            setpoint_at(0.0),
            &hold_constraints,
            config,
            config.keep_trajectory,
        )?;
    }
    debug_assert!(fin.violation.is_none());
    Ok(GovernorDecision {
        admissible: setpoint_at(lo),
        kappa: lo,
        binding,
        iterations,
        margins: fin.margins,
        trajectory: fin.trajectory,
    })
}

/// Cause classes for truth-side constraint violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCause {
    /// Within the post-shock window of a boundary-condition change the
    /// governor had no prior knowledge of.
    ShockWindow,
    /// Within the settling window after a setpoint change (surrogate
    /// micro-dynamics error).
    TransitionWindow,
    /// Neither: plain model error.
    ModelError,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationEvent {
    pub time: f64,
    pub var: VarId,
    pub excess: f64,
    pub cause: ViolationCause,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ViolationReport {
    pub events: Vec<ViolationEvent>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn unexplained(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.cause == ViolationCause::ModelError)
            .count()
    }
}

/// Context for attributing truth-side violations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditContext {
    /// Times of boundary-condition shocks [s].
    pub shock_times: Vec<f64>,
    /// Times of applied setpoint changes [s].
    pub setpoint_change_times: Vec<f64>,
    /// Attribution window after a shock [s].
    pub shock_window: f64,
    /// Attribution window after a setpoint change [s].
    pub transition_window: f64,
}

impl Default for AuditContext {
    fn default() -> Self {
        AuditContext {
            shock_times: Vec::new(),
            setpoint_change_times: Vec::new(),
            shock_window: 7200.0,
            transition_window: 900.0,
        }
    }
}

/// List every unbuffered bound crossing in a truth trajectory and attribute
/// it to a shock window, a transition window, or plain model error.
pub fn audit_violations(
    truth: &[SystemState],
    constraints: &ConstraintSet,
    context: &AuditContext,
) -> ViolationReport {
    let mut events = Vec::new();
    for sys in truth {
        let t = sys[VarId::T];
        for c in &constraints.constraints {
            let excess = c.excess_unbuffered(sys[c.var]);
            if excess > 0.0 {
                let in_shock = context
                    .shock_times
                    .iter()
                    .any(|s| t >= *s && t - s <= context.shock_window);
                let in_transition = context
                    .setpoint_change_times
                    .iter()
                    .any(|s| t >= *s && t - s <= context.transition_window);
                let cause = if in_shock {
                    ViolationCause::ShockWindow
                } else if in_transition {
                    ViolationCause::TransitionWindow
                } else {
                    ViolationCause::ModelError
                };
                events.push(ViolationEvent {
                    time: t,
                    var: c.var,
                    excess,
                    cause,
                });
            }
        }
    }
    ViolationReport { events }
}

#[cfg(test)]
mod tests;
