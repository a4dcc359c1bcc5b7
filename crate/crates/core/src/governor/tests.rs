use proptest::prelude::*;

use super::*;
use crate::plant::PlantState;
use crate::test_fixtures;

fn lags_at(frac: f64) -> (SystemState, SystemState) {
    let st = PlantState::commissioning(frac, 1.0, 1.0, test_fixtures::consts()).sys;
    (st, st)
}

fn cfg() -> GovernorConfig {
    GovernorConfig::default()
}

#[test]
fn feasible_target_passes_through() {
    let net = test_fixtures::original_net();
    let (lag2, lag1) = lags_at(0.9);
    let d = govern(
        0.85 * FULL_POWER,
        0.9 * FULL_POWER,
        net,
        &lag2,
        &lag1,
        &PumpContext::default(),
        &ConstraintSet::defaults(),
        &cfg(),
    )
    .unwrap();
    assert_eq!(d.kappa, 1.0);
    assert!(d.binding.is_none());
    assert_eq!(d.admissible, 0.85 * FULL_POWER);
    assert!(d.margins.iter().all(|m| m.min_margin >= 0.0));
}

/// Demanding power below the flow-feasible band forces kappa < 1 with the
/// binding constraint recorded, and the emitted decision's own prediction
/// satisfies every constraint.
#[test]
fn infeasible_demand_is_clipped_with_binding_constraint() {
    let net = test_fixtures::original_net();
    let (lag2, lag1) = lags_at(0.8);
    let d = govern(
        0.5 * FULL_POWER,
        0.8 * FULL_POWER,
        net,
        &lag2,
        &lag1,
        &PumpContext::default(),
        &ConstraintSet::defaults(),
        &cfg(),
    )
    .unwrap();
    assert!(d.kappa < 1.0, "kappa {}", d.kappa);
    assert!(d.binding.is_some());
    assert!(d.admissible > 0.5 * FULL_POWER);
    assert!(
        d.margins.iter().all(|m| m.min_margin >= 0.0),
        "emitted decision predicts a violation: {:?}",
        d.margins
    );
    // The binding constraint should be one of the two minimum-flow bounds.
    let b = d.binding.unwrap();
    assert!(b == VarId::MDotPP || b == VarId::MDotPS, "binding {b}");
}

#[test]
fn governing_a_settled_admissible_point_is_identity() {
    let net = test_fixtures::original_net();
    let (lag2, lag1) = lags_at(0.85);
    let d = govern(
        0.85 * FULL_POWER,
        0.85 * FULL_POWER,
        net,
        &lag2,
        &lag1,
        &PumpContext::default(),
        &ConstraintSet::defaults(),
        &cfg(),
    )
    .unwrap();
    assert_eq!(d.kappa, 1.0);
    assert_eq!(d.admissible, 0.85 * FULL_POWER);
}

#[test]
fn bisection_respects_iteration_budget() {
    let net = test_fixtures::original_net();
    let (lag2, lag1) = lags_at(0.8);
    let d = govern(
        0.5 * FULL_POWER,
        0.8 * FULL_POWER,
        net,
        &lag2,
        &lag1,
        &PumpContext::default(),
        &ConstraintSet::defaults(),
        &cfg(),
    )
    .unwrap();
    let budget = (1.0 / cfg().kappa_tol).log2().ceil() as usize;
    assert!(d.iterations <= budget, "{} > {budget}", d.iterations);
}

#[test]
fn out_of_band_target_is_rejected() {
    let net = test_fixtures::original_net();
    let (lag2, lag1) = lags_at(0.8);
    assert!(matches!(
        govern(
            0.3 * FULL_POWER,
            0.8 * FULL_POWER,
            net,
            &lag2,
            &lag1,
            &PumpContext::default(),
            &ConstraintSet::defaults(),
            &cfg(),
        ),
        Err(GovernorError::TargetOutOfBand(_))
    ));
}

/// A previous setpoint already predicted infeasible cannot be scaled from:
/// the governor holds and raises an alarm.
#[test]
fn infeasible_previous_setpoint_raises_alarm() {
    let net = test_fixtures::original_net();
    let (lag2, lag1) = lags_at(0.55);
    let result = govern(
        0.6 * FULL_POWER,
        0.55 * FULL_POWER,
        net,
        &lag2,
        &lag1,
        &PumpContext::default(),
        &ConstraintSet::defaults(),
        &cfg(),
    );
    assert!(matches!(result, Err(GovernorError::PreviousInfeasible { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    /// Monotone conservatism: enlarging buffers never increases kappa*.
    #[test]
    fn larger_buffers_never_increase_kappa(buf in 0.0f64..0.02) {
        let net = test_fixtures::original_net();
        let (lag2, lag1) = lags_at(0.8);
        let pumps = PumpContext::default();
        let base = govern(
            0.55 * FULL_POWER, 0.8 * FULL_POWER, net, &lag2, &lag1, &pumps,
            &ConstraintSet::defaults(), &cfg(),
        ).unwrap();
        match govern(
            0.55 * FULL_POWER, 0.8 * FULL_POWER, net, &lag2, &lag1, &pumps,
            &ConstraintSet::defaults().with_relative_buffers(buf), &cfg(),
        ) {
            Ok(buffered) => prop_assert!(buffered.kappa <= base.kappa + 1e-12),
            // Buffers large enough to make even holding infeasible are the
            // conservative extreme.
            Err(GovernorError::PreviousInfeasible { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }
}

#[test]
fn audit_classifies_causes() {
    let consts = test_fixtures::consts();
    let inside = PlantState::commissioning(0.8, 1.0, 1.0, consts).sys;
    let report = audit_violations(
        &[inside; 10],
        &ConstraintSet::defaults(),
        &AuditContext::default(),
    );
    assert!(report.is_empty());

    // Fabricate violating samples at controlled times.
    let mut low_flow = inside;
    low_flow[VarId::MDotPP] = 700.0;
    let mk = |t: f64| {
        let mut s = low_flow;
        s[VarId::T] = t;
        s
    };
    let ctx = AuditContext {
        shock_times: vec![45_000.0],
        setpoint_change_times: vec![3_600.0],
        ..AuditContext::default()
    };
    let report = audit_violations(&[mk(3_700.0), mk(45_100.0), mk(20_000.0)], &ConstraintSet::defaults(), &ctx);
    assert_eq!(report.events.len(), 3);
    assert_eq!(report.events[0].cause, ViolationCause::TransitionWindow);
    assert_eq!(report.events[1].cause, ViolationCause::ShockWindow);
    assert_eq!(report.events[2].cause, ViolationCause::ModelError);
    assert_eq!(report.unexplained(), 1);
}
