//! VARMAX block: `x(k) = a + sum_i A_i x(k-i) + B u(k) + sum_j M_j eps(k-j)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SurrogateError;

/// Coefficient set for one VARMAX block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarmaxParams {
    /// Intercept `a` (n_x).
    pub intercept: DVector<f64>,
    /// Autoregressive matrices `A_1..A_p` (n_x by n_x each).
    pub ar: Vec<DMatrix<f64>>,
    /// Input matrix `B` (n_x by n_u).
    pub input: DMatrix<f64>,
    /// Moving-average matrices `M_1..M_q` (n_x by n_x each).
    pub ma: Vec<DMatrix<f64>>,
    /// White-noise covariance (n_x by n_x), possibly structurally diagonal.
    pub omega: DMatrix<f64>,
    pub diagonal_omega: bool,
}

impl VarmaxParams {
    pub fn zeros(n_x: usize, n_u: usize, p: usize, q: usize, diagonal_omega: bool) -> Self {
        VarmaxParams {
            intercept: DVector::zeros(n_x),
            ar: (0..p).map(|_| DMatrix::zeros(n_x, n_x)).collect(),
            input: DMatrix::zeros(n_x, n_u),
            ma: (0..q).map(|_| DMatrix::zeros(n_x, n_x)).collect(),
            omega: DMatrix::zeros(n_x, n_x),
            diagonal_omega,
        }
    }

    pub fn n_x(&self) -> usize {
        self.intercept.len()
    }

    pub fn n_u(&self) -> usize {
        self.input.ncols()
    }

    pub fn p(&self) -> usize {
        self.ar.len()
    }

    pub fn q(&self) -> usize {
        self.ma.len()
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let n = self.n_x();
        for a in &self.ar {
            if a.nrows() != n || a.ncols() != n {
                return Err(SurrogateError::Dimension(format!(
                    "A matrix {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        for m in &self.ma {
            if m.nrows() != n || m.ncols() != n {
                return Err(SurrogateError::Dimension("M matrix shape".into()));
            }
        }
        if self.input.nrows() != n {
            return Err(SurrogateError::Dimension("B matrix rows".into()));
        }
        if self.omega.nrows() != n || self.omega.ncols() != n {
            return Err(SurrogateError::Dimension("Omega shape".into()));
        }
        // PSD check on the symmetric part.
        let sym = (&self.omega + self.omega.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym);
        let tol = -1e-10 * eig.eigenvalues.amax().max(1.0);
        if eig.eigenvalues.iter().any(|l| *l < tol) {
            return Err(SurrogateError::Dimension("Omega not PSD".into()));
        }
        Ok(())
    }

    /// Literal term-by-term count of stored free parameters: intercept, AR
    /// and MA matrices, B, and the distinct entries of the (symmetric or
    /// diagonal) noise covariance.
    pub fn param_count(&self) -> u64 {
        let n = self.n_x() as u64;
        let mut count = n; // intercept
        count += self.ar.len() as u64 * n * n;
        count += (self.input.nrows() * self.input.ncols()) as u64;
        count += self.ma.len() as u64 * n * n;
        count += if self.diagonal_omega { n } else { n * (n + 1) / 2 };
        count
    }
}

/// Closed-form parameter count for a VARMAX(p, q) block.
pub fn count_params(p: usize, q: usize, n_x: usize, n_u: usize, diagonal_omega: bool) -> u64 {
    let (p, q, n_x, n_u) = (p as u64, q as u64, n_x as u64, n_u as u64);
    if diagonal_omega {
        (p + q) * n_x * n_x + (2 + n_u) * n_x
    } else {
        // (p + q + 1/2) n_x^2 + (3/2 + n_u) n_x, exact in integers:
        // n_x^2 + 3 n_x is always even.
        ((2 * (p + q) + 1) * n_x * n_x + (3 + 2 * n_u) * n_x) / 2
    }
}

/// One-step VARMAX prediction. `lags[0]` is `x(k-1)`, `errors[0]` is
/// `eps(k-1)`. Deterministic given the error history.
pub fn varmax_predict(
    params: &VarmaxParams,
    lags: &[DVector<f64>],
    input: &DVector<f64>,
    errors: &[DVector<f64>],
) -> Result<DVector<f64>, SurrogateError> {
    if lags.len() != params.p() {
        return Err(SurrogateError::Dimension(format!(
            "expected {} lags, got {}",
            params.p(),
            lags.len()
        )));
    }
    if errors.len() != params.q() {
        return Err(SurrogateError::Dimension(format!(
            "expected {} error terms, got {}",
            params.q(),
            errors.len()
        )));
    }
    if input.len() != params.n_u() {
        return Err(SurrogateError::Dimension(format!(
            "expected input of length {}, got {}",
            params.n_u(),
            input.len()
        )));
    }
    let n = params.n_x();
    let mut x = params.intercept.clone();
    for (a, lag) in params.ar.iter().zip(lags) {
        if lag.len() != n {
            return Err(SurrogateError::Dimension("lag length".into()));
        }
        x += a * lag;
    }
    x += &params.input * input;
    for (m, eps) in params.ma.iter().zip(errors) {
        if eps.len() != n {
            return Err(SurrogateError::Dimension("error length".into()));
        }
        x += m * eps;
    }
    Ok(x)
}
