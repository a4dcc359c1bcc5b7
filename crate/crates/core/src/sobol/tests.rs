//! Estimator tests against analytic oracles.

use std::f64::consts::PI;

use super::*;
use crate::seed::SeedTree;

/// Ishigami function with its closed-form indices.
fn ishigami(x: &[f64]) -> f64 {
    let (a, b) = (7.0, 0.1);
    x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
}

fn ishigami_analytic() -> ([f64; 3], [f64; 3]) {
    let (a, b): (f64, f64) = (7.0, 0.1);
    let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v = 0.5 + a * a / 8.0 + b * PI.powi(4) / 5.0 + b * b * PI.powi(8) / 18.0;
    let vt3 = 8.0 * b * b * PI.powi(8) / 225.0;
    (
        [v1 / v, v2 / v, 0.0],
        [(v1 + vt3) / v, v2 / v, vt3 / v],
    )
}

fn ishigami_errors(n: usize, seed: u64) -> f64 {
    let bounds = [(-PI, PI); 3];
    let tree = SeedTree::new(seed);
    let sample = saltelli_sample(3, n, &bounds, &tree).unwrap();
    let evals: Vec<f64> = sample.rows.iter().map(|r| ishigami(r)).collect();
    let est = sobol_indices(&sample, &evals, &tree).unwrap();
    let (s, st) = ishigami_analytic();
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        worst = worst.max((est[j].first - s[j]).abs());
        worst = worst.max((est[j].total - st[j]).abs());
    }
    worst
}

#[test]
fn sample_counts_match_the_cross_sampling_formula() {
    let tree = SeedTree::new(1);
    let m = saltelli_sample(49, 1 << 13, &[(0.0, 1.0); 49], &tree).unwrap();
    assert_eq!(m.n_rows(), 819_200);
    assert_eq!(m.rows.len(), 819_200);
    assert!(!m.power_of_two_warning);

    let m = saltelli_sample(1, 4, &[(0.0, 1.0)], &tree).unwrap();
    assert_eq!(m.n_rows(), 16);
}

#[test]
fn non_power_of_two_warns_but_proceeds() {
    let tree = SeedTree::new(2);
    let m = saltelli_sample(2, 100, &[(0.0, 1.0); 2], &tree).unwrap();
    assert!(m.power_of_two_warning);
    assert_eq!(m.n_rows(), 600);
}

#[test]
fn ishigami_indices_within_tolerance_at_production_sample_size() {
    let worst = ishigami_errors(1 << 13, 11);
    assert!(worst <= 0.02, "worst index error {worst:.4}");
}

/// Index error decreases (within noise) as N doubles.
#[test]
fn ishigami_error_shrinks_with_sample_size() {
    let ladder: Vec<f64> = [8usize, 9, 10, 11, 12, 13]
        .iter()
        .map(|k| ishigami_errors(1 << k, 17))
        .collect();
    for w in ladder.windows(2) {
        assert!(
            w[1] <= w[0] * 1.3 + 2e-3,
            "non-monotone beyond noise: {ladder:?}"
        );
    }
    assert!(
        ladder.last().unwrap() < &(ladder[0] / 2.0),
        "no overall convergence: {ladder:?}"
    );
}

/// Additive model: first-order indices sum to one and totals equal firsts.
#[test]
fn additive_model_has_no_interactions() {
    let tree = SeedTree::new(5);
    let d = 4;
    let sample = saltelli_sample(d, 1 << 11, &[(0.0, 1.0); 4], &tree).unwrap();
    let coef = [1.0, 2.0, 3.0, 4.0];
    let evals: Vec<f64> = sample
        .rows
        .iter()
        .map(|r| r.iter().zip(coef).map(|(x, c)| c * x).sum())
        .collect();
    let est = sobol_indices(&sample, &evals, &tree).unwrap();
    let sum: f64 = est.iter().map(|e| e.first).sum();
    assert!((sum - 1.0).abs() < 0.03, "sum S = {sum}");
    for e in &est {
        assert!((e.total - e.first).abs() < 0.03);
    }
}

#[test]
fn constant_model_reports_zero_variance() {
    let tree = SeedTree::new(6);
    let sample = saltelli_sample(2, 64, &[(0.0, 1.0); 2], &tree).unwrap();
    let evals = vec![3.5; sample.n_rows()];
    assert!(matches!(
        sobol_indices(&sample, &evals, &tree),
        Err(SobolError::ZeroVariance)
    ));
}

/// Estimator sanity: total-order dominates first-order up to CI width.
#[test]
fn total_dominates_first_within_ci() {
    let tree = SeedTree::new(7);
    let d = 3;
    let sample = saltelli_sample(d, 1 << 11, &[(0.0, 1.0); 3], &tree).unwrap();
    // Interacting model: x0*x1 + x2.
    let evals: Vec<f64> = sample.rows.iter().map(|r| r[0] * r[1] + r[2]).collect();
    let est = sobol_indices(&sample, &evals, &tree).unwrap();
    for e in &est {
        let ci_width = (e.first_ci.1 - e.first_ci.0).max(e.total_ci.1 - e.total_ci.0);
        assert!(e.total >= e.first - ci_width, "{e:?}");
    }
}

#[test]
fn selection_rules_threshold_union_and_forced_dedup() {
    let mk = |first: f64, total: f64| IndexEstimate {
        first,
        first_ci: (first - 0.01, first + 0.01),
        total,
        total_ci: (total - 0.01, total + 0.01),
    };
    let study = SobolStudy {
        parameter_labels: vec!["p0".into(), "p1".into(), "p2".into()],
        outputs: vec![crate::state::VarId::QDotRx, crate::state::VarId::MDotPS],
        n: 64,
        halfwidth: 0.5,
        estimates: vec![
            vec![mk(0.4, 0.5), mk(0.15, 0.05), mk(0.01, 0.02)],
            vec![mk(0.0, 0.0), mk(0.3, 0.4), mk(0.01, 0.02)],
        ],
        power_of_two_warning: false,
    };
    // p0 passes on output 0; p1 passes only on output 1 (its total fails on
    // output 0); p2 never passes.
    let sel = study.select(0.10, &[]).unwrap();
    assert_eq!(sel, vec!["p0".to_string(), "p1".to_string()]);

    let sel = study.select(0.10, &["p0".into(), "p2".into()]).unwrap();
    assert_eq!(
        sel,
        vec!["p0".to_string(), "p1".to_string(), "p2".to_string()]
    );

    match study.select(1.1, &[]) {
        Err(SobolError::EmptySelection { diagnostic, .. }) => {
            assert!(diagnostic.contains("p0"));
        }
        other => panic!("expected empty selection, got {other:?}"),
    }
}

#[test]
fn selection_is_deterministic_for_fixed_seed() {
    let run = |seed: u64| -> Vec<String> {
        let tree = SeedTree::new(seed);
        let sample = saltelli_sample(3, 1 << 9, &[(-PI, PI); 3], &tree).unwrap();
        let evals: Vec<f64> = sample.rows.iter().map(|r| ishigami(r)).collect();
        let est = sobol_indices(&sample, &evals, &tree).unwrap();
        let study = SobolStudy {
            parameter_labels: vec!["x1".into(), "x2".into(), "x3".into()],
            outputs: vec![crate::state::VarId::QDotRx],
            n: 1 << 9,
            halfwidth: PI,
            estimates: vec![est],
            power_of_two_warning: false,
        };
        study.select(0.10, &[]).unwrap()
    };
    assert_eq!(run(42), run(42));
    assert_eq!(run(42), vec!["x1".to_string(), "x2".to_string()]);
}
