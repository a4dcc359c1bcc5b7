//! Variance-based global sensitivity analysis: Saltelli sampling and Sobol
//! first/total-order index estimation, used to select the assimilated
//! parameter vector.
//!
//! Sampling follows the cross-sampling construction over a base
//! low-discrepancy sequence in 2D dimensions, producing `N(2D+2)` rows per
//! study: for each base sample, the A row, the D rows with one column
//! swapped in from B, the D mirrored rows, and the B row. First-order
//! indices use the Saltelli-2010 estimator and total-order indices the
//! Jansen estimator, each averaged over both the direct and mirrored row
//! families; bootstrap percentile intervals quantify estimator noise.

pub mod sequence;

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::plant::{PlantState, FULL_POWER};
use crate::seed::SeedTree;
use crate::state::VarId;
use crate::surrogate::{ParamRef, PumpContext, SurrogateInput, SurrogateNet};
use sequence::SobolSequence;

#[derive(Debug, thiserror::Error)]
pub enum SobolError {
    #[error("zero output variance: indices are undefined for a constant model")]
    ZeroVariance,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty selection at threshold {threshold}; top candidates: {diagnostic}")]
    EmptySelection { threshold: f64, diagnostic: String },
    #[error(transparent)]
    Surrogate(#[from] crate::surrogate::SurrogateError),
}

/// Saltelli cross-sampling plan: `n (2d + 2)` rows.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    /// Row-major samples, each of length `d`.
    pub rows: Vec<Vec<f64>>,
    pub d: usize,
    pub n: usize,
    /// Set when `n` is not a power of two (sequence balance caveat).
    pub power_of_two_warning: bool,
}

impl SampleMatrix {
    pub fn n_rows(&self) -> usize {
        self.n * (2 * self.d + 2)
    }

    fn block(&self) -> usize {
        2 * self.d + 2
    }
}

/// Generate the Saltelli sample over the given per-parameter bounds.
pub fn saltelli_sample(
    d: usize,
    n: usize,
    bounds: &[(f64, f64)],
    seed: &SeedTree,
) -> Result<SampleMatrix, SobolError> {
    if bounds.len() != d {
        return Err(SobolError::Dimension(format!(
            "{} bounds for {d} parameters",
            bounds.len()
        )));
    }
    if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
        return Err(SobolError::Dimension("bounds must be finite".into()));
    }
    let power_of_two_warning = n == 0 || (n & (n - 1)) != 0;
    let mut seq = SobolSequence::new(2 * d, seed);
    let map = |col: usize, u: f64| -> f64 {
        let (lo, hi) = bounds[col];
        lo + u * (hi - lo)
    };
    let mut rows = Vec::with_capacity(n * (2 * d + 2));
    for _ in 0..n {
        let base = seq.next_point();
        let a: Vec<f64> = (0..d).map(|j| map(j, base[j])).collect();
        let b: Vec<f64> = (0..d).map(|j| map(j, base[d + j])).collect();
        rows.push(a.clone());
        for j in 0..d {
            let mut ab = a.clone();
            ab[j] = b[j];
            rows.push(ab);
        }
        for j in 0..d {
            let mut ba = b.clone();
            ba[j] = a[j];
            rows.push(ba);
        }
        rows.push(b);
    }
    Ok(SampleMatrix {
        rows,
        d,
        n,
        power_of_two_warning,
    })
}

/// First/total-order estimate with bootstrap confidence intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEstimate {
    pub first: f64,
    pub first_ci: (f64, f64),
    pub total: f64,
    pub total_ci: (f64, f64),
}

fn estimate_from_samples(
    f_a: &[f64],
    f_b: &[f64],
    f_ab: &[Vec<f64>],
    f_ba: &[Vec<f64>],
    idx: &[usize],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let d = f_ab.len();
    let n = idx.len() as f64;
    let mut mean = 0.0;
    for &i in idx {
        mean += f_a[i] + f_b[i];
    }
    mean /= 2.0 * n;
    let mut var = 0.0;
    for &i in idx {
        var += (f_a[i] - mean).powi(2) + (f_b[i] - mean).powi(2);
    }
    var /= 2.0 * n;
    if var <= 0.0 {
        return None;
    }
    let mut first = vec![0.0; d];
    let mut total = vec![0.0; d];
    for j in 0..d {
        let mut v_direct = 0.0;
        let mut v_mirror = 0.0;
        let mut e_direct = 0.0;
        let mut e_mirror = 0.0;
        for &i in idx {
            v_direct += f_b[i] * (f_ab[j][i] - f_a[i]);
            v_mirror += f_a[i] * (f_ba[j][i] - f_b[i]);
            e_direct += (f_a[i] - f_ab[j][i]).powi(2);
            e_mirror += (f_b[i] - f_ba[j][i]).powi(2);
        }
        first[j] = 0.5 * (v_direct + v_mirror) / n / var;
        total[j] = 0.25 * (e_direct + e_mirror) / n / var;
    }
    Some((first, total))
}

/// Estimate indices for one output from evaluations over the sample rows
/// (in [`saltelli_sample`] row order).
pub fn sobol_indices(
    sample: &SampleMatrix,
    evals: &[f64],
    seed: &SeedTree,
) -> Result<Vec<IndexEstimate>, SobolError> {
    let (d, n, block) = (sample.d, sample.n, sample.block());
    if evals.len() != sample.n_rows() {
        return Err(SobolError::Dimension(format!(
            "{} evaluations for {} rows",
            evals.len(),
            sample.n_rows()
        )));
    }
    if evals.iter().any(|v| !v.is_finite()) {
        return Err(SobolError::Dimension("non-finite evaluation".into()));
    }
    let f_a: Vec<f64> = (0..n).map(|i| evals[i * block]).collect();
    let f_b: Vec<f64> = (0..n).map(|i| evals[i * block + block - 1]).collect();
    let f_ab: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..n).map(|i| evals[i * block + 1 + j]).collect())
        .collect();
    let f_ba: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..n).map(|i| evals[i * block + 1 + d + j]).collect())
        .collect();

    let all: Vec<usize> = (0..n).collect();
    let (first, total) =
        estimate_from_samples(&f_a, &f_b, &f_ab, &f_ba, &all).ok_or(SobolError::ZeroVariance)?;

    // Bootstrap percentile intervals over base-sample resampling.
    let reps = 100;
    let mut boot_first = vec![Vec::with_capacity(reps); d];
    let mut boot_total = vec![Vec::with_capacity(reps); d];
    let boot_seed = seed.child("bootstrap");
    for r in 0..reps {
        let mut rng = boot_seed.index(r as u64).rng();
        let idx: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
        if let Some((f, t)) = estimate_from_samples(&f_a, &f_b, &f_ab, &f_ba, &idx) {
            for j in 0..d {
                boot_first[j].push(f[j]);
                boot_total[j].push(t[j]);
            }
        }
    }
    let pct = |v: &mut Vec<f64>, q: f64| -> f64 {
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let w = pos - lo as f64;
        v[lo] * (1.0 - w) + v[hi] * w
    };
    Ok((0..d)
        .map(|j| {
            let mut bf = boot_first[j].clone();
            let mut bt = boot_total[j].clone();
            IndexEstimate {
                first: first[j],
                first_ci: (pct(&mut bf, 0.025), pct(&mut bf, 0.975)),
                total: total[j],
                total_ci: (pct(&mut bt, 0.025), pct(&mut bt, 0.975)),
            }
        })
        .collect())
}

/// A complete study: parameter labels, per-output index estimates, and the
/// sampling metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SobolStudy {
    pub parameter_labels: Vec<String>,
    pub outputs: Vec<VarId>,
    pub n: usize,
    pub halfwidth: f64,
    /// `estimates[output][parameter]`.
    pub estimates: Vec<Vec<IndexEstimate>>,
    pub power_of_two_warning: bool,
}

impl SobolStudy {
    /// Parameters whose first- AND total-order indices exceed the threshold
    /// for at least one output.
    pub fn select(
        &self,
        threshold: f64,
        forced: &[String],
    ) -> Result<Vec<String>, SobolError> {
        let mut picked: Vec<String> = Vec::new();
        for (p, label) in self.parameter_labels.iter().enumerate() {
            let hit = self
                .estimates
                .iter()
                .any(|out| out[p].first > threshold && out[p].total > threshold);
            if hit {
                picked.push(label.clone());
            }
        }
        for f in forced {
            if !picked.contains(f) {
                picked.push(f.clone());
            }
        }
        if picked.is_empty() {
            // Diagnostic: the top candidates by max(min(S, ST)) over outputs.
            let mut ranked: Vec<(f64, &String)> = self
                .parameter_labels
                .iter()
                .enumerate()
                .map(|(p, label)| {
                    let score = self
                        .estimates
                        .iter()
                        .map(|out| out[p].first.min(out[p].total))
                        .fold(f64::NEG_INFINITY, f64::max);
                    (score, label)
                })
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
            let diagnostic = ranked
                .iter()
                .take(5)
                .map(|(s, l)| format!("{l}={s:.3}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(SobolError::EmptySelection {
                threshold,
                diagnostic,
            });
        }
        Ok(picked)
    }
}

/// Run the one-step evaluation protocol on a surrogate network: perturb the
/// given coefficients inside `center +/- halfwidth` boxes and record the
/// outputs of one deterministic step at the 100%-power fixed point.
#[allow(clippy::too_many_arguments)]
pub fn run_surrogate_study(
    net: &SurrogateNet,
    refs: &[ParamRef],
    outputs: &[VarId],
    halfwidth: f64,
    n: usize,
    consts: &crate::plant::PlantConstants,
    seed: &SeedTree,
    parallel: bool,
) -> Result<SobolStudy, SobolError> {
    let d = refs.len();
    let centers = net.theta(refs)?;
    let bounds: Vec<(f64, f64)> = centers
        .iter()
        .map(|c| (c - halfwidth, c + halfwidth))
        .collect();
    let sample = saltelli_sample(d, n, &bounds, &seed.child("saltelli"))?;

    let anchor = PlantState::commissioning(1.0, 1.0, 1.0, consts).sys;
    let u = SurrogateInput {
        t: anchor[VarId::T],
        target_power: FULL_POWER,
    };
    let pumps = PumpContext::default();

    let evals: Vec<Vec<f64>> = exec::map_indexed(sample.rows.len(), parallel, |r| {
        let overrides: Vec<(ParamRef, f64)> = refs
            .iter()
            .copied()
            .zip(sample.rows[r].iter().copied())
            .collect();
        match net.eval_step_with(&anchor, &anchor, &u, &pumps, &overrides) {
            Ok(next) => outputs.iter().map(|o| next[*o]).collect(),
            Err(_) => vec![f64::NAN; outputs.len()],
        }
    });

    let mut estimates = Vec::with_capacity(outputs.len());
    for (oi, _) in outputs.iter().enumerate() {
        let series: Vec<f64> = evals.iter().map(|row| row[oi]).collect();
        estimates.push(sobol_indices(&sample, &series, &seed.child("ci"))?);
    }
    Ok(SobolStudy {
        parameter_labels: refs.iter().map(|r| r.label(net)).collect(),
        outputs: outputs.to_vec(),
        n,
        halfwidth,
        estimates,
        power_of_two_warning: sample.power_of_two_warning,
    })
}

#[cfg(test)]
mod tests;
