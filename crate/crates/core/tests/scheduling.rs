//! Scheduler-level integration: timescale bookkeeping, clean-room replay,
//! and the assimilation-cadence comparison.

use fhr_twin::runtime::config::{DemandConfig, ScenarioConfig, TimescaleConfig};
use fhr_twin::runtime::log::write_state_csv;
use fhr_twin::runtime::{demos, prepare_scenario, run_prepared, run_scenario};
use fhr_twin::state::VarId;

fn short_config() -> ScenarioConfig {
    ScenarioConfig {
        name: "sched".into(),
        duration_hours: 4.0,
        seed: 11,
        start_frac: 0.9,
        timescales: TimescaleConfig {
            dt: 5.0,
            beta_steps: 720,
            beta_offset_steps: 360,
            gamma_steps: 720,
            delta_steps: 1440,
        },
        demand: DemandConfig::Hourly {
            fracs: vec![0.9, 0.8, 0.85, 0.75],
        },
        ..ScenarioConfig::default()
    }
}

/// Over any run: floor(T/delta) plans, floor(T/gamma) governor decisions,
/// floor(T/beta) assimilation updates respecting the phase offset.
#[test]
fn timescale_counts_are_exact() {
    let config = short_config();
    let log = run_scenario(&config).unwrap();
    let steps = config.duration_steps();
    assert_eq!(log.plans.len(), steps / config.timescales.delta_steps);
    assert_eq!(log.governor.len(), steps / config.timescales.gamma_steps);
    assert_eq!(log.assimilation.len(), steps / config.timescales.beta_steps);
    // Measurements land at the configured offset inside each interval.
    for (i, rec) in log.assimilation.iter().enumerate() {
        let expected = (i * config.timescales.beta_steps
            + config.timescales.beta_offset_steps
            + 1) as f64
            * config.timescales.dt;
        assert!(
            (rec.t - expected).abs() < 1e-9,
            "assimilation {i} at {} expected {expected}",
            rec.t
        );
    }
    // When beta == gamma the measurement cadence and the setpoint cadence
    // interleave once per hour.
    assert_eq!(log.governor.len(), log.assimilation.len());
}

/// Same config and seeds reproduce byte-identical CSV output.
#[test]
fn clean_room_replay_is_byte_identical() {
    let config = short_config();
    let dir = std::env::temp_dir().join("fhr_twin_replay");
    std::fs::create_dir_all(&dir).unwrap();
    let mut bytes = Vec::new();
    for pass in 0..2 {
        let log = run_scenario(&config).unwrap();
        let path = dir.join(format!("truth_{pass}.csv"));
        write_state_csv(&path, &log.truth).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

/// The high-frequency cadence refines the transition regions: on the later
/// ramps its errors are smaller than the hourly cadence's.
#[test]
fn high_frequency_assimilation_refines_late_transitions() {
    let seed = 42;
    let mut errors = Vec::new();
    for beta in [720usize, 50] {
        let config = demos::demo_short_term(beta, seed);
        let prep = prepare_scenario(&config).unwrap();
        let log = run_prepared(&config, &prep).unwrap();
        // Ramps 3 and 4 start at hours 2 and 3; score the 20-minute windows
        // from each ramp onset.
        let mut window_err = 0.0;
        let mut count = 0usize;
        for (a, b) in log.truth.iter().zip(&log.virtual_mean) {
            let hr = a[VarId::T] / 3600.0;
            let in_ramp3 = (2.0..2.33).contains(&hr);
            let in_ramp4 = (3.0..3.33).contains(&hr);
            if in_ramp3 || in_ramp4 {
                window_err +=
                    (b[VarId::QDotRx] - a[VarId::QDotRx]).abs() / a[VarId::QDotRx].abs();
                count += 1;
            }
        }
        errors.push(window_err / count.max(1) as f64);
    }
    assert!(
        errors[1] < errors[0],
        "beta=50 ramp error {:.4}% vs beta=720 {:.4}%",
        100.0 * errors[1],
        100.0 * errors[0]
    );
}

/// Shock-demo scheduling: the governor reacts differently at hour 13 than a
/// shock-free baseline.
#[test]
fn shock_changes_the_governed_setpoint_after_onset() {
    let shocked = run_scenario(&demos::demo_shock(42)).unwrap();
    let mut baseline_cfg = demos::demo_shock(42);
    baseline_cfg.shocks.clear();
    baseline_cfg.name = "shock-baseline".into();
    let baseline = run_scenario(&baseline_cfg).unwrap();

    let decision_at = |log: &fhr_twin::runtime::RunLog, hour: f64| -> f64 {
        log.governor
            .iter()
            .find(|g| (g.t - hour * 3600.0).abs() < 1.0)
            .map(|g| g.applied)
            .unwrap_or(f64::NAN)
    };
    // Identical before the shock, different afterwards.
    let pre = (decision_at(&shocked, 5.0) - decision_at(&baseline, 5.0)).abs();
    let post: f64 = (13..18)
        .map(|h| (decision_at(&shocked, h as f64) - decision_at(&baseline, h as f64)).abs())
        .sum();
    assert!(pre < 1.0, "pre-shock decisions diverged by {pre}");
    assert!(
        post > 1e5,
        "post-shock decisions identical (sum |diff| = {post})"
    );
}
