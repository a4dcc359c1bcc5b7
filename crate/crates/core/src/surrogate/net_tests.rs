//! Network-level tests: wiring, parameter addressing, checkpoints, and the
//! offline-fit acceptance gates against the truth emulator.

use super::net::*;
use super::*;
use crate::plant::{PlantConstants, PlantState, FULL_POWER};
use crate::runtime::prep::{
    core_power_mape, generate_trajectory, prepare_original_net, prepare_shock_net,
    synth_hourly_targets, STEPS_PER_HOUR,
};
use crate::seed::SeedTree;
use crate::state::VarId;

fn consts() -> PlantConstants {
    PlantConstants::default()
}

fn small_net(consts: &PlantConstants) -> SurrogateNet {
    // Identity-dynamics blocks: enough structure for wiring and addressing
    // tests without a fit.
    let specs = original_block_specs();
    let norm = Normalization::at_full_power(
        &PlantState::commissioning(1.0, 1.0, 1.0, consts).sys,
    );
    let blocks = specs
        .into_iter()
        .map(|spec| {
            let n = spec.vars.len();
            let mut params = VarmaxParams::zeros(n, spec.n_u(), 2, 1, true);
            params.ar[0] = nalgebra::DMatrix::identity(n, n);
            Block {
                spec,
                params,
                eps: vec![nalgebra::DVector::zeros(n)],
            }
        })
        .collect();
    SurrogateNet {
        variant: NetVariant::Original,
        blocks,
        normalization: norm,
        xenon: consts.xenon.clone(),
        pump: PumpPhysics {
            primary: consts.primary_pump.clone(),
            secondary: consts.secondary_pump.clone(),
            rho_primary: consts.thermal.rho_primary,
            rho_secondary: consts.thermal.rho_secondary,
            cp_primary: consts.thermal.cp_primary,
        },
        dt: 5.0,
    }
}

#[test]
fn original_wiring_is_valid_and_covers_all_variables() {
    let c = consts();
    let net = small_net(&c);
    net.validate_wiring().unwrap();
}

#[test]
fn forward_feed_is_rejected() {
    let c = consts();
    let mut net = small_net(&c);
    // Block I illegally feeds on a block-II product.
    net.blocks[0].spec.feeds.push(Feed::Current(VarId::QDotRx));
    let mut p = VarmaxParams::zeros(3, 3, 2, 1, true);
    p.ar[0] = nalgebra::DMatrix::identity(3, 3);
    net.blocks[0].params = p;
    assert!(matches!(
        net.validate_wiring(),
        Err(SurrogateError::Wiring(_))
    ));
}

#[test]
fn duplicate_producer_is_rejected() {
    let c = consts();
    let mut net = small_net(&c);
    net.blocks[1].spec.vars[0] = VarId::MDotC; // already produced by block I
    let mut p = VarmaxParams::zeros(2, 6, 2, 1, true);
    p.ar[0] = nalgebra::DMatrix::identity(2, 2);
    net.blocks[1].params = p;
    assert!(matches!(
        net.validate_wiring(),
        Err(SurrogateError::Wiring(_))
    ));
}

#[test]
fn study_population_of_flow_and_power_blocks_is_49() {
    let c = consts();
    let net = small_net(&c);
    let i = net.block_index("I").unwrap();
    let ii = net.block_index("II").unwrap();
    let d = net.point_coef_refs(i).len() + net.point_coef_refs(ii).len();
    assert_eq!(d, 49);
}

#[test]
fn theta_roundtrip_and_labels() {
    let c = consts();
    let mut net = small_net(&c);
    let refs = vec![
        ParamRef {
            block: 1,
            kind: CoefKind::Ar(0),
            row: 0,
            col: 1,
        },
        ParamRef {
            block: 1,
            kind: CoefKind::Input,
            row: 1,
            col: 2,
        },
        ParamRef {
            block: 0,
            kind: CoefKind::Intercept,
            row: 2,
            col: 0,
        },
    ];
    net.set_theta(&refs, &[0.25, -0.5, 0.125]).unwrap();
    assert_eq!(net.theta(&refs).unwrap(), vec![0.25, -0.5, 0.125]);
    for r in &refs {
        let label = r.label(&net);
        let parsed = net.parse_label(&label).unwrap();
        assert_eq!(parsed, *r);
    }
    assert_eq!(refs[0].label(&net), "A1[II][0,1]");
    assert!(net.parse_label("A9[II][0,0]").is_err());
}

#[test]
fn override_equals_mutation() {
    let c = consts();
    let st = PlantState::commissioning(0.9, 1.0, 1.0, &c).sys;
    let net = small_net(&c);
    let u = SurrogateInput {
        t: 0.0,
        target_power: 0.9 * FULL_POWER,
    };
    let pumps = PumpContext::default();
    let r = ParamRef {
        block: 1,
        kind: CoefKind::Ar(0),
        row: 0,
        col: 0,
    };
    let over = net
        .eval_step_with(&st, &st, &u, &pumps, &[(r, 1.37)])
        .unwrap();
    let mut mutated = net.clone();
    mutated.set_theta(&[r], &[1.37]).unwrap();
    let direct = mutated.eval_step_with(&st, &st, &u, &pumps, &[]).unwrap();
    for (a, b) in over.0.iter().zip(direct.0.iter()) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn missing_lag_is_an_error() {
    let c = consts();
    let mut net = small_net(&c);
    let st = PlantState::commissioning(1.0, 1.0, 1.0, &c).sys;
    let u = SurrogateInput {
        t: 0.0,
        target_power: FULL_POWER,
    };
    assert!(matches!(
        surrogate_step(&mut net, None, &st, &u, &PumpContext::default()),
        Err(SurrogateError::MissingLag)
    ));
}

#[test]
fn checkpoint_roundtrip_preserves_predictions() {
    let c = consts();
    let net = small_net(&c);
    let ck = Checkpoint::new(net.clone(), vec!["A1[II][0,1]".into()], Default::default());
    let json = ck.to_json().unwrap();
    let back = Checkpoint::from_json(&json).unwrap();
    let st = PlantState::commissioning(0.8, 1.0, 1.0, &c).sys;
    let u = SurrogateInput {
        t: 10.0,
        target_power: 0.8 * FULL_POWER,
    };
    let pumps = PumpContext::default();
    let a = net.eval_step_with(&st, &st, &u, &pumps, &[]).unwrap();
    let b = back.net.eval_step_with(&st, &st, &u, &pumps, &[]).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(back.theta_a, ck.theta_a);
}

/// Offline-fit gate 1: held at the 100% fixed point, the fitted net drifts
/// less than 0.1% over one hour.
#[test]
fn fitted_net_fixed_point_drift_under_a_tenth_percent() {
    let c = consts();
    let seed = SeedTree::new(1234);
    let (mut net, _) = prepare_original_net(&c, &seed, 36).unwrap();

    let fixed = PlantState::commissioning(1.0, 1.0, 1.0, &c).sys;
    let mut lag2 = fixed;
    let mut lag1 = fixed;
    let pumps = PumpContext::default();
    let mut worst: f64 = 0.0;
    for k in 0..STEPS_PER_HOUR {
        let u = SurrogateInput {
            t: (k as f64) * 5.0,
            target_power: FULL_POWER,
        };
        let next = net.step(&lag2, &lag1, &u, &pumps).unwrap();
        let drift = (next[VarId::QDotRx] - FULL_POWER).abs() / FULL_POWER;
        worst = worst.max(drift);
        lag2 = lag1;
        lag1 = next;
    }
    assert!(worst < 1e-3, "fixed-point drift {:.4}% over 1 h", worst * 100.0);
}

/// Offline-fit gate 2: mean absolute percent error of the core power over a
/// held-out 24 h load-follow stays under 1% without any assimilation.
#[test]
fn fitted_net_holdout_core_power_mape_under_one_percent() {
    let c = consts();
    let seed = SeedTree::new(1234);
    let (net, reports) = prepare_original_net(&c, &seed, 36).unwrap();
    assert!(reports.contains_key("II"));

    let holdout_targets = synth_hourly_targets(&SeedTree::new(777).child("holdout"), 24, 0.55, 1.0);
    let holdout = generate_trajectory(&c, &holdout_targets, 1.0, 1.0, &[]).unwrap();
    let mape = core_power_mape(&net, &holdout).unwrap();
    assert!(mape < 1.0, "held-out core power MAPE {mape:.3}%");
}

/// The shock net must refuse training sets without boundary perturbations.
#[test]
fn shock_net_requires_shock_coverage() {
    let c = consts();
    let targets = synth_hourly_targets(&SeedTree::new(5).child("x"), 8, 0.62, 1.0);
    let nominal = generate_trajectory(&c, &targets, 1.0, 1.0, &[]).unwrap();
    let set = ShockTrainingSet {
        with_shock: vec![nominal.clone()],
        without_shock: vec![nominal],
    };
    assert!(matches!(
        build_shock_surrogate(&set, &c, &FitOptions::default()),
        Err(SurrogateError::Coverage(_))
    ));
}

/// Nominal replay: on shock-free data the shock net tracks the truth about
/// as well as its fit residuals, and a +5 K shock with the secondary flow
/// corrected from measurements shifts downstream temperatures the right way.
#[test]
fn shock_net_nominal_replay_and_shock_direction() {
    let c = consts();
    let seed = SeedTree::new(99);
    let (mut net, _) = prepare_shock_net(&c, &seed, 21).unwrap();

    // Nominal replay, one-step-ahead (teacher forcing): residuals small.
    let targets = synth_hourly_targets(&SeedTree::new(31).child("replay"), 6, 0.65, 0.95);
    let replay = generate_trajectory(&c, &targets, 1.0, 1.0, &[]).unwrap();
    let pumps = PumpContext::default();
    let mut err_sum = 0.0;
    let mut n = 0;
    for k in 2..replay.len() {
        let u = SurrogateInput {
            t: replay.states[k - 1][VarId::T],
            target_power: replay.targets[k],
        };
        let pred = net
            .step(&replay.states[k - 2], &replay.states[k - 1], &u, &pumps)
            .unwrap();
        let truth = replay.states[k][VarId::QDotRx];
        err_sum += (pred[VarId::QDotRx] - truth).abs() / truth;
        n += 1;
    }
    let mean_err = err_sum / n as f64;
    assert!(mean_err < 5e-3, "nominal replay one-step error {:.4}%", 100.0 * mean_err);

    // Shock direction: feed the truth's secondary flow (the measured state)
    // into the rollout, once from the shocked truth and once from the nominal
    // truth, and check the net moves the IHX secondary temperatures in the
    // shocked direction. The magnitude is expected to be under-predicted
    // (the model cannot see the boundary condition directly), which is why
    // the governor can be pierced right after a shock.
    let shocked = generate_trajectory(&c, &targets, 1.0, 1.0, &[(1, 5.0)]).unwrap();
    let k0 = 3 * STEPS_PER_HOUR;
    let rollout = |truth: &Trajectory, net: &SurrogateNet| -> f64 {
        let mut net = net.clone();
        let mut lag2 = truth.states[k0 - 2];
        let mut lag1 = truth.states[k0 - 1];
        let mut t_ihx = 0.0;
        for k in k0..k0 + 240 {
            let u = SurrogateInput {
                t: lag1[VarId::T],
                target_power: truth.targets[k],
            };
            let mut next = net.step(&lag2, &lag1, &u, &pumps).unwrap();
            // Measured correction of the current secondary pump flow.
            next[VarId::MDotPS] = truth.states[k][VarId::MDotPS];
            next[VarId::MDotS] = next[VarId::MDotPS];
            next[VarId::MDotSg] = next[VarId::MDotPS];
            t_ihx = next[VarId::TIhxSIn];
            lag2 = lag1;
            lag1 = next;
        }
        t_ihx
    };
    let t_shocked = rollout(&shocked, &net);
    let t_nominal = rollout(&replay, &net);
    assert!(
        t_shocked > t_nominal + 1.0,
        "shocked IHX inlet {t_shocked:.2} K vs nominal rollout {t_nominal:.2} K"
    );
}
