//! Gaussian-process regression with an RBF kernel, plus the confidence-bound
//! acquisition used by the Bayesian optimizer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    /// In normalized input units.
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub jitter: f64,
}

impl GpHyper {
    pub const DEFAULT_LENGTHSCALE: f64 = 0.2;

    /// Defaults tied to the observations: signal variance is the sample
    /// variance of `y` (at least 1e-6) and noise is 1e-6 of it.
    pub fn for_observations(y: &[f64]) -> Self {
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-6);
        Self {
            lengthscale: Self::DEFAULT_LENGTHSCALE,
            signal_variance: var,
            noise_variance: 1e-6 * var,
            jitter: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.lengthscale, self.signal_variance, self.noise_variance, self.jitter]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("GP hyperparameters must be positive: {self:?}")))
        }
    }
}

/// `sigma_f^2 * exp(-|a - b|^2 / (2 l^2))`.
pub fn rbf_kernel(a: &[f64], b: &[f64], hyper: &GpHyper) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    hyper.signal_variance * (-d2 / (2.0 * hyper.lengthscale * hyper.lengthscale)).exp()
}

pub fn gram_matrix(x: &[Vec<f64>], hyper: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| rbf_kernel(&x[i], &x[j], hyper))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub x: Vec<Vec<f64>>,
    /// Centered targets.
    pub y: Vec<f64>,
    /// Prior mean (sample mean of the raw targets).
    pub y_mean: f64,
    pub hyper: GpHyper,
    /// Lower Cholesky factor of `K + (noise + jitter) I`.
    pub chol: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Diagonal jitter actually used after escalation.
    pub jitter_used: f64,
}

/// Fits the posterior. Jitter is escalated tenfold up to three times if the
/// covariance is not numerically positive definite.
pub fn gp_fit(x: &[Vec<f64>], y: &[f64], hyper: &GpHyper) -> Result<GpModel> {
    hyper.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return Err(invalid(format!("{} inputs vs {} targets", x.len(), y.len())));
    }
    let dim = x[0].len();
    if x.iter().any(|row| row.len() != dim) {
        return Err(invalid("inputs have inconsistent dimensions"));
    }
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let k = gram_matrix(x, hyper);
    let n = x.len();

    let mut jitter = hyper.jitter;
    for _ in 0..=3 {
        let a = &k + DMatrix::identity(n, n) * (hyper.noise_variance + jitter);
        if let Some(chol) = a.cholesky() {
            let alpha = chol.solve(&DVector::from_column_slice(&centered));
            return Ok(GpModel {
                x: x.to_vec(),
                y: centered,
                y_mean,
                hyper: *hyper,
                chol: chol.l(),
                alpha,
                jitter_used: jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "covariance not positive definite after jitter {jitter:e}"
    )))
}

impl GpModel {
    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    /// Posterior mean and standard deviation of the latent function.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kstar = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| rbf_kernel(xi, x, &self.hyper)));
        let mean = self.y_mean + kstar.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&kstar)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.hyper.signal_variance - v.norm_squared()).max(0.0);
        (mean, var.sqrt())
    }

    /// Log marginal likelihood of the centered targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let y = DVector::from_column_slice(&self.y);
        let n = self.y.len() as f64;
        let log_det: f64 = self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * y.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

pub fn gp_predict(model: &GpModel, x: &[f64]) -> (f64, f64) {
    model.predict(x)
}

/// Refits with the lengthscale from a log-spaced grid in [0.05, 1] that maximizes
/// the marginal likelihood. Not used by default.
pub fn fit_lengthscale(x: &[Vec<f64>], y: &[f64], hyper: &GpHyper) -> Result<GpModel> {
    let mut best: Option<GpModel> = None;
    for i in 0..=20 {
        let ls = 0.05 * 20f64.powf(i as f64 / 20.0);
        let model = gp_fit(x, y, &GpHyper { lengthscale: ls, ..*hyper })?;
        let better = best
            .as_ref()
            .is_none_or(|b| model.log_marginal_likelihood() > b.log_marginal_likelihood());
        if better {
            best = Some(model);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Lower-confidence-bound acquisition `k * mean - (1 - k) * std`; minimized by the optimizer.
pub fn acquisition(model: &GpModel, x: &[f64], k: f64) -> f64 {
    let (mean, std) = model.predict(x);
    acquisition_value(mean, std, k)
}

pub fn acquisition_value(mean: f64, std: f64, k: f64) -> f64 {
    k * mean - (1.0 - k) * std
}
