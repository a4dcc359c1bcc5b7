//! Two-stage least-squares VARMAX estimation.
//!
//! Stage one fits a long autoregression and keeps its residuals as a proxy
//! for the unobserved white-noise terms; stage two regresses jointly on the
//! lagged states, the exogenous input, and the lagged residual proxies. All
//! regressions demean columns and targets and apply a small ridge, so a
//! constant series collapses to an intercept-only model instead of failing.
//! Coefficients of a VARMAX are not unique; tests downstream assert
//! predictions, never coefficient values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::varmax::{count_params, VarmaxParams};
use super::SurrogateError;

/// One training series: `states[k]` with aligned `inputs[k]`.
#[derive(Debug, Clone)]
pub struct Series {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Relative ridge strength.
    pub ridge: f64,
    /// Fraction of each series' tail held out for the fit report.
    pub holdout_fraction: f64,
    /// Long-AR order for the stage-one residual proxy; defaults to p + q + 2.
    pub long_ar_order: Option<usize>,
    /// Input columns whose coefficients are pinned to zero (e.g. a raw time
    /// column that must not carry dynamics).
    pub zero_input_cols: Vec<usize>,
    /// Treat rank deficiency as an error instead of a report entry.
    pub strict_rank: bool,
    pub diagonal_omega: bool,
    /// Extra weight on steady rows (lag-1 state and input unchanged within
    /// tolerance). The true steady map is affine and inside the model class;
    /// upweighting steady rows pins it, which is what keeps long open-loop
    /// rollouts from drifting (steady bias is amplified by 1/(1-rho)).
    pub steady_weight: f64,
    /// Clamp the fitted AR companion spectral radius to `1 - margin`
    /// (least squares on slow, strongly autocorrelated series routinely puts
    /// roots just outside the unit circle, which explodes open-loop rollout).
    /// The intercept is recomputed so the training-mean operating point is
    /// preserved. `None` disables the clamp.
    pub stability_margin: Option<f64>,
    /// After the dynamics are fixed (and possibly clamped), refit the
    /// intercept and input matrix on steady rows alone. This pins the model's
    /// steady-state map to the observed operating points: steady offsets are
    /// then bounded by the affine interpolation error of the true steady
    /// manifold instead of being amplified by 1/(1-rho).
    pub steady_refit: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge: 1e-8,
            holdout_fraction: 0.2,
            long_ar_order: None,
            zero_input_cols: Vec::new(),
            strict_rank: false,
            diagonal_omega: true,
            steady_weight: 100.0,
            stability_margin: Some(1e-4),
            steady_refit: false,
        }
    }
}

/// Diagnostics recorded with every fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub n_train_rows: usize,
    pub n_holdout_rows: usize,
    /// Per-variable one-step RMSE on the training rows.
    pub rmse_train: Vec<f64>,
    /// Per-variable one-step RMSE on the held-out tail.
    pub rmse_holdout: Vec<f64>,
    /// Near-null regressor directions (insufficient excitation), described as
    /// dominant-column labels.
    pub deficient_directions: Vec<String>,
    /// Smallest-to-largest singular value ratio of the centered regressors.
    pub condition: f64,
    /// Whether the steady-map refit ran (enough steady rows).
    pub steady_refit_applied: bool,
}

/// Fit one VARMAX(p, q) block on one or more series.
pub fn fit_varmax(
    series: &[Series],
    p: usize,
    q: usize,
    opts: &FitOptions,
) -> Result<(VarmaxParams, FitReport), SurrogateError> {
    if series.is_empty() || series.iter().all(|s| s.is_empty()) {
        return Err(SurrogateError::SeriesTooShort {
            needed: p + q + 2,
            got: 0,
        });
    }
    let n_x = series[0].states[0].len();
    let n_u = series[0].inputs[0].len();
    for s in series {
        if s.states.len() != s.inputs.len() {
            return Err(SurrogateError::Dimension(
                "states/inputs length mismatch".into(),
            ));
        }
    }
    let long_order = opts.long_ar_order.unwrap_or(p + q + 2).max(p);
    let needed = count_params(p, q, n_x, n_u, opts.diagonal_omega) as usize;
    let usable: usize = series
        .iter()
        .map(|s| s.len().saturating_sub(long_order + q))
        .sum();
    if usable < needed {
        return Err(SurrogateError::SeriesTooShort {
            needed,
            got: usable,
        });
    }

    // Stage one: residual proxies from a long AR-X regression.
    let residuals: Vec<Vec<DVector<f64>>> = series
        .iter()
        .map(|s| long_ar_residuals(s, long_order, opts))
        .collect::<Result<_, _>>()?;

    // Stage two: joint regression on lags, inputs, and lagged residuals.
    // Rows start where both p lags and q residual lags exist.
    let mut rows: Vec<(usize, usize)> = Vec::new(); // (series, k)
    for (si, s) in series.iter().enumerate() {
        for k in (long_order + q).max(p)..s.len() {
            rows.push((si, k));
        }
    }
    let holdout = ((rows.len() as f64) * opts.holdout_fraction).round() as usize;
    let n_train = rows.len() - holdout;

    let n_cols = p * n_x + n_u + q * n_x;
    let build_row = |si: usize, k: usize, reg: &mut [f64]| {
        let s = &series[si];
        let mut c = 0;
        for lag in 1..=p {
            for j in 0..n_x {
                reg[c] = s.states[k - lag][j];
                c += 1;
            }
        }
        for j in 0..n_u {
            reg[c] = s.inputs[k][j];
            c += 1;
        }
        for lag in 1..=q {
            // residuals[si][i] corresponds to sample index long_order + i
            let eps = &residuals[si][k - lag - long_order];
            for j in 0..n_x {
                reg[c] = eps[j];
                c += 1;
            }
        }
        debug_assert_eq!(c, n_cols);
    };

    let mut x = DMatrix::zeros(n_train, n_cols);
    let mut y = DMatrix::zeros(n_train, n_x);
    let mut weights = vec![1.0f64; n_train];
    for (r, (si, k)) in rows[..n_train].iter().enumerate() {
        let mut row = vec![0.0; n_cols];
        build_row(*si, *k, &mut row);
        for (c, v) in row.iter().enumerate() {
            x[(r, c)] = *v;
        }
        for j in 0..n_x {
            y[(r, j)] = series[*si].states[*k][j];
        }
        if opts.steady_weight > 1.0 && is_steady_row(&series[*si], *k) {
            weights[r] = opts.steady_weight;
        }
    }

    // Pin declared input columns to zero by removing them from the regression.
    let pinned: Vec<usize> = opts
        .zero_input_cols
        .iter()
        .filter(|c| **c < n_u)
        .map(|c| p * n_x + c)
        .collect();
    let active: Vec<usize> = (0..n_cols).filter(|c| !pinned.contains(c)).collect();

    let solved = ridge_solve(&x, &y, &active, &weights, opts)?;

    // Assemble parameters.
    let mut params = VarmaxParams::zeros(n_x, n_u, p, q, opts.diagonal_omega);
    for (ai, &c) in active.iter().enumerate() {
        let coef_row = solved.coefs.row(ai);
        if c < p * n_x {
            let lag = c / n_x;
            let j = c % n_x;
            for i in 0..n_x {
                params.ar[lag][(i, j)] = coef_row[i];
            }
        } else if c < p * n_x + n_u {
            let j = c - p * n_x;
            for i in 0..n_x {
                params.input[(i, j)] = coef_row[i];
            }
        } else {
            let rest = c - p * n_x - n_u;
            let lag = rest / n_x;
            let j = rest % n_x;
            for i in 0..n_x {
                params.ma[lag][(i, j)] = coef_row[i];
            }
        }
    }
    params.intercept = solved.intercept;

    if opts.strict_rank && !solved.deficient.is_empty() {
        return Err(SurrogateError::RankDeficient(solved.deficient.join(", ")));
    }

    if let Some(margin) = opts.stability_margin {
        let radius = companion_spectral_radius(&params.ar);
        let target = 1.0 - margin.max(0.0);
        if radius > target {
            let shrink = target / radius;
            for (lag, a) in params.ar.iter_mut().enumerate() {
                *a *= shrink.powi(lag as i32 + 1);
            }
            // Recompute the intercept so the weighted-mean training point
            // still maps to the weighted-mean target under the shrunk
            // dynamics.
            let w_total: f64 = weights.iter().sum();
            let col_mean = |c: usize| -> f64 {
                (0..n_train).map(|r| weights[r] * x[(r, c)]).sum::<f64>() / w_total
            };
            let mut intercept = DVector::zeros(n_x);
            for t in 0..n_x {
                let mut v =
                    (0..n_train).map(|r| weights[r] * y[(r, t)]).sum::<f64>() / w_total;
                for lag in 0..p {
                    for j in 0..n_x {
                        v -= params.ar[lag][(t, j)] * col_mean(lag * n_x + j);
                    }
                }
                for j in 0..n_u {
                    v -= params.input[(t, j)] * col_mean(p * n_x + j);
                }
                for lag in 0..q {
                    for j in 0..n_x {
                        v -= params.ma[lag][(t, j)] * col_mean(p * n_x + n_u + lag * n_x + j);
                    }
                }
                intercept[t] = v;
            }
            params.intercept = intercept;
        }
    }

    // Steady-map refit: hold the dynamics fixed, resolve (a, B) from steady
    // operating segments so every observed regime is a consistent fixed
    // point. Rows are aggregated into per-segment means first; per-row jitter
    // otherwise swamps the small (I - sum A) x* signal and attenuates the
    // input gains.
    let active_inputs: Vec<usize> = (0..n_u)
        .filter(|c| !opts.zero_input_cols.contains(c))
        .collect();
    let refit_unknowns = 1 + active_inputs.len();
    let min_segment = 48usize;
    let mut segments: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new(); // (weight, mean reg, mean y)
    if opts.steady_refit {
        let mut current: Vec<usize> = Vec::new();
        let flush = |current: &mut Vec<usize>, segments: &mut Vec<(f64, Vec<f64>, Vec<f64>)>| {
            if current.len() >= min_segment {
                let mut reg_mean = vec![0.0; n_cols];
                let mut y_mean = vec![0.0; n_x];
                for &r in current.iter() {
                    for c in 0..n_cols {
                        reg_mean[c] += x[(r, c)];
                    }
                    for t in 0..n_x {
                        y_mean[t] += y[(r, t)];
                    }
                }
                let inv = 1.0 / current.len() as f64;
                reg_mean.iter_mut().for_each(|v| *v *= inv);
                y_mean.iter_mut().for_each(|v| *v *= inv);
                segments.push((current.len() as f64, reg_mean, y_mean));
            }
            current.clear();
        };
        for r in 0..n_train {
            let (si, k) = rows[r];
            let contiguous = current
                .last()
                .map(|&prev| {
                    let (psi, pk) = rows[prev];
                    psi == si && pk + 1 == k
                })
                .unwrap_or(true);
            if contiguous && is_steady_row(&series[si], k) {
                current.push(r);
            } else {
                flush(&mut current, &mut segments);
                if is_steady_row(&series[si], k) {
                    current.push(r);
                }
            }
        }
        flush(&mut current, &mut segments);
    }
    let steady_refit_applied = opts.steady_refit && segments.len() > refit_unknowns;
    if steady_refit_applied {
        let nr = segments.len();
        let mut xs = DMatrix::zeros(nr, refit_unknowns);
        let mut ys = DMatrix::zeros(nr, n_x);
        let mut weights_seg = vec![0.0; nr];
        for (ri, (w, reg, ym)) in segments.iter().enumerate() {
            weights_seg[ri] = *w;
            xs[(ri, 0)] = 1.0;
            for (ci, &c) in active_inputs.iter().enumerate() {
                xs[(ri, ci + 1)] = reg[p * n_x + c];
            }
            // Target: the part the AR and MA terms do not explain.
            for t in 0..n_x {
                let mut v = ym[t];
                for lag in 0..p {
                    for j in 0..n_x {
                        v -= params.ar[lag][(t, j)] * reg[lag * n_x + j];
                    }
                }
                for lag in 0..q {
                    for j in 0..n_x {
                        v -= params.ma[lag][(t, j)] * reg[p * n_x + n_u + lag * n_x + j];
                    }
                }
                ys[(ri, t)] = v;
            }
        }
        let all: Vec<usize> = (1..refit_unknowns).collect();
        let refit_opts = FitOptions {
            ridge: 1e-9,
            ..opts.clone()
        };
        let sol = ridge_solve(&xs, &ys, &all, &weights_seg, &refit_opts)?;
        params.intercept = sol.intercept;
        for (ci, &c) in active_inputs.iter().enumerate() {
            for t in 0..n_x {
                params.input[(t, c)] = sol.coefs[(ci, t)];
            }
        }
    }

    // Residual covariance and fit report.
    let mut rmse_train = vec![0.0; n_x];
    let mut omega = DMatrix::zeros(n_x, n_x);
    {
        let mut count = 0usize;
        let mut reg = vec![0.0; n_cols];
        for (si, k) in &rows[..n_train] {
            build_row(*si, *k, &mut reg);
            let pred = predict_from_row(&params, &reg, p, n_x, n_u, q);
            let truth = &series[*si].states[*k];
            let err = truth - pred;
            for i in 0..n_x {
                rmse_train[i] += err[i] * err[i];
            }
            omega += &err * err.transpose();
            count += 1;
        }
        for v in rmse_train.iter_mut() {
            *v = (*v / count.max(1) as f64).sqrt();
        }
        omega /= count.max(1) as f64;
    }
    if opts.diagonal_omega {
        let d = DVector::from_iterator(n_x, (0..n_x).map(|i| omega[(i, i)]));
        omega = DMatrix::from_diagonal(&d);
    }
    params.omega = omega;

    let mut rmse_holdout = vec![0.0; n_x];
    if holdout > 0 {
        let mut reg = vec![0.0; n_cols];
        for (si, k) in &rows[n_train..] {
            build_row(*si, *k, &mut reg);
            let pred = predict_from_row(&params, &reg, p, n_x, n_u, q);
            let err = &series[*si].states[*k] - pred;
            for i in 0..n_x {
                rmse_holdout[i] += err[i] * err[i];
            }
        }
        for v in rmse_holdout.iter_mut() {
            *v = (*v / holdout as f64).sqrt();
        }
    }

    let report = FitReport {
        n_train_rows: n_train,
        n_holdout_rows: holdout,
        rmse_train,
        rmse_holdout,
        deficient_directions: solved.deficient,
        condition: solved.condition,
        steady_refit_applied,
    };
    Ok((params, report))
}

fn predict_from_row(
    params: &VarmaxParams,
    reg: &[f64],
    p: usize,
    n_x: usize,
    n_u: usize,
    q: usize,
) -> DVector<f64> {
    let mut out = params.intercept.clone();
    let mut c = 0;
    for lag in 0..p {
        for j in 0..n_x {
            let v = reg[c];
            c += 1;
            for i in 0..n_x {
                out[i] += params.ar[lag][(i, j)] * v;
            }
        }
    }
    for j in 0..n_u {
        let v = reg[c];
        c += 1;
        for i in 0..n_x {
            out[i] += params.input[(i, j)] * v;
        }
    }
    for lag in 0..q {
        for j in 0..n_x {
            let v = reg[c];
            c += 1;
            for i in 0..n_x {
                out[i] += params.ma[lag][(i, j)] * v;
            }
        }
    }
    out
}

/// Spectral radius of the block companion matrix `[[A_1 .. A_p], [I, 0]]`.
fn companion_spectral_radius(ar: &[DMatrix<f64>]) -> f64 {
    let p = ar.len();
    if p == 0 {
        return 0.0;
    }
    let n = ar[0].nrows();
    let dim = p * n;
    let mut companion = DMatrix::zeros(dim, dim);
    for (lag, a) in ar.iter().enumerate() {
        companion.view_mut((0, lag * n), (n, n)).copy_from(a);
    }
    for lag in 1..p {
        companion
            .view_mut((lag * n, (lag - 1) * n), (n, n))
            .copy_from(&DMatrix::identity(n, n));
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

struct RidgeSolution {
    /// One row per active column, one column per target variable.
    coefs: DMatrix<f64>,
    intercept: DVector<f64>,
    deficient: Vec<String>,
    condition: f64,
}

/// A row is steady when the block state and input barely move across the
/// last lag (relative tolerance per entry).
fn is_steady_row(s: &Series, k: usize) -> bool {
    if k == 0 {
        return false;
    }
    let tol = |v: f64| 1e-4 * (1.0 + v.abs());
    let state_steady = s.states[k]
        .iter()
        .zip(s.states[k - 1].iter())
        .all(|(a, b)| (a - b).abs() <= tol(*a));
    let input_steady = s.inputs[k]
        .iter()
        .zip(s.inputs[k - 1].iter())
        .skip(1) // first input column is time, pinned to zero coefficient
        .all(|(a, b)| (a - b).abs() <= tol(*a));
    state_steady && input_steady
}

/// Weighted ridge regression with an explicit unpenalized intercept column.
/// Columns are standardized (raw-unit regressors such as watts next to
/// reactivities must not swamp the penalty); coefficients unfold back to
/// input scale. With collinear regressors the penalty pushes weight onto the
/// free intercept, so a constant series yields an intercept-only model.
fn ridge_solve(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    active: &[usize],
    weights: &[f64],
    opts: &FitOptions,
) -> Result<RidgeSolution, SurrogateError> {
    let n = x.nrows();
    let m = active.len();
    let n_y = y.ncols();
    let mut xa = DMatrix::zeros(n, m + 1);
    let mut yw = DMatrix::zeros(n, n_y);
    for r in 0..n {
        let sw = weights[r].sqrt();
        xa[(r, 0)] = sw;
        for (j, &c) in active.iter().enumerate() {
            xa[(r, j + 1)] = sw * x[(r, c)];
        }
        for t in 0..n_y {
            yw[(r, t)] = sw * y[(r, t)];
        }
    }
    let raw_rms = DVector::from_iterator(
        m + 1,
        (0..m + 1).map(|j| (xa.column(j).norm_squared() / n.max(1) as f64).sqrt()),
    );
    let max_rms = raw_rms.amax().max(1e-300);
    // Numerically dead columns (e.g. residual proxies of a constant series)
    // are excluded entirely; standardizing them would inflate noise into
    // huge unfolded coefficients.
    let alive: Vec<bool> = (0..m + 1)
        .map(|j| j == 0 || raw_rms[j] > 1e-10 * max_rms)
        .collect();
    let col_stds = DVector::from_iterator(
        m + 1,
        (0..m + 1).map(|j| if alive[j] && raw_rms[j] > 1e-300 { raw_rms[j] } else { 1.0 }),
    );
    for j in 0..m + 1 {
        for r in 0..n {
            if alive[j] {
                xa[(r, j)] /= col_stds[j];
            } else {
                xa[(r, j)] = 0.0;
            }
        }
    }

    let mut gram = xa.transpose() * &xa;
    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let max_ev = eig.eigenvalues.amax().max(1e-300);
    let mut deficient = Vec::new();
    let mut min_ev = f64::INFINITY;
    for (i, ev) in eig.eigenvalues.iter().enumerate() {
        min_ev = min_ev.min(ev.max(0.0));
        if *ev < 1e-10 * max_ev {
            // Describe the direction by its dominant regressor column.
            let col = eig.eigenvectors.column(i);
            let dom = col
                .iter()
                .enumerate()
                .skip(1)
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(j, _)| j);
            if let Some(j) = dom {
                deficient.push(format!("column {} (|v|={:.2e})", active[j - 1], col[j].abs()));
            }
        }
    }
    let condition = (min_ev / max_ev).sqrt();

    let lambda = opts.ridge * max_ev.max(1e-12);
    for j in 1..m + 1 {
        gram[(j, j)] += lambda;
    }
    // The free intercept column needs a whisper of regularization only to
    // keep the factorization well posed.
    gram[(0, 0)] += 1e-12 * max_ev;
    let rhs = xa.transpose() * &yw;
    let chol = nalgebra::Cholesky::new(gram)
        .ok_or_else(|| SurrogateError::RankDeficient("gram not PD after ridge".into()))?;
    let mut solved = chol.solve(&rhs);
    for j in 0..m + 1 {
        for t in 0..n_y {
            solved[(j, t)] /= col_stds[j];
        }
    }

    let intercept = DVector::from_iterator(n_y, (0..n_y).map(|t| solved[(0, t)]));
    let coefs = solved.rows(1, m).into_owned();
    Ok(RidgeSolution {
        coefs,
        intercept,
        deficient,
        condition,
    })
}

/// Stage-one long-AR residuals, one per sample index `long_order..len`.
fn long_ar_residuals(
    s: &Series,
    long_order: usize,
    opts: &FitOptions,
) -> Result<Vec<DVector<f64>>, SurrogateError> {
    let n_x = s.states[0].len();
    let n_u = s.inputs[0].len();
    if s.len() <= long_order + 1 {
        return Err(SurrogateError::SeriesTooShort {
            needed: long_order + 2,
            got: s.len(),
        });
    }
    let rows = s.len() - long_order;
    let n_cols = long_order * n_x + n_u;
    let mut x = DMatrix::zeros(rows, n_cols);
    let mut y = DMatrix::zeros(rows, n_x);
    for r in 0..rows {
        let k = long_order + r;
        let mut c = 0;
        for lag in 1..=long_order {
            for j in 0..n_x {
                x[(r, c)] = s.states[k - lag][j];
                c += 1;
            }
        }
        for j in 0..n_u {
            x[(r, c)] = s.inputs[k][j];
            c += 1;
        }
        for j in 0..n_x {
            y[(r, j)] = s.states[k][j];
        }
    }
    let pinned: Vec<usize> = opts
        .zero_input_cols
        .iter()
        .filter(|c| **c < n_u)
        .map(|c| long_order * n_x + c)
        .collect();
    let active: Vec<usize> = (0..n_cols).filter(|c| !pinned.contains(c)).collect();
    let uniform = vec![1.0f64; rows];
    let sol = ridge_solve(&x, &y, &active, &uniform, opts)?;

    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut pred = sol.intercept.clone();
        for (ai, &c) in active.iter().enumerate() {
            let v = x[(r, c)];
            for i in 0..n_x {
                pred[i] += sol.coefs[(ai, i)] * v;
            }
        }
        let mut e = DVector::zeros(n_x);
        for i in 0..n_x {
            e[i] = y[(r, i)] - pred[i];
        }
        out.push(e);
    }
    Ok(out)
}
