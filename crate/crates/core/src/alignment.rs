//! Least-squares correction of joint misalignment between exoskeleton and human hip angle.
//!
//! The measured angle `x` and its derivatives are lifted to the basis
//! `[1, x, x', x'', x*x', x*x'', x'*x'']` and mapped linearly onto a reference
//! angle. Inputs are deliberately not normalized, so fitted weights span
//! several orders of magnitude.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::KinematicFrame;

pub const BASIS_LEN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MappingWeights(pub [f64; BASIS_LEN]);

impl MappingWeights {
    pub fn identity() -> Self {
        Self([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    /// Weights reported for the autonomyo hip mapping.
    pub fn autonomyo_reference() -> Self {
        Self([5.7, 6.7e-1, 3.3e-2, 3.1e-4, -4.6e-4, 5.7e-6, -2.5e-6])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; BASIS_LEN] = values
            .try_into()
            .map_err(|_| invalid(format!("expected {BASIS_LEN} weights, got {}", values.len())))?;
        if arr.iter().any(|w| !w.is_finite()) {
            return Err(invalid("mapping weights must be finite"));
        }
        Ok(Self(arr))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let values: Vec<f64> = serde_json::from_str(text)?;
        Self::from_slice(&values)
    }
}

pub fn basis(x: f64, dx: f64, ddx: f64) -> [f64; BASIS_LEN] {
    [1.0, x, dx, ddx, x * dx, x * ddx, dx * ddx]
}

fn frame_basis(frame: &KinematicFrame) -> Result<[f64; BASIS_LEN]> {
    match (frame.theta_dot, frame.theta_ddot) {
        (Some(dx), Some(ddx)) => Ok(basis(frame.theta_th, dx, ddx)),
        _ => Err(invalid(format!("frame at t = {} lacks derivatives", frame.t))),
    }
}

/// n x 7 design matrix, one basis row per frame.
pub fn design_matrix(frames: &[KinematicFrame]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(frames.len(), BASIS_LEN);
    for (i, f) in frames.iter().enumerate() {
        let row = frame_basis(f)?;
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingFit {
    pub weights: MappingWeights,
    /// Norm of the squared-error loss gradient at the solution.
    pub gradient_norm: f64,
    /// Set when the normal matrix was singular and the minimum-norm solution was used.
    pub rank_deficient: bool,
}

/// Gradient of `L(w) = |t - X w|^2`, i.e. `-2 X^T (t - X w)`.
pub fn loss_gradient(x: &DMatrix<f64>, t: &DVector<f64>, w: &MappingWeights) -> DVector<f64> {
    let w = DVector::from_column_slice(&w.0);
    -2.0 * x.transpose() * (t - x * w)
}

pub fn loss(x: &DMatrix<f64>, t: &DVector<f64>, w: &MappingWeights) -> f64 {
    let w = DVector::from_column_slice(&w.0);
    (t - x * w).norm_squared()
}

/// Solves the normal equations `(X^T X) w = X^T t` by Cholesky; falls back to the
/// SVD minimum-norm least-squares solution when `X^T X` is not positive definite.
pub fn fit_weights(x: &DMatrix<f64>, t: &DVector<f64>) -> Result<MappingFit> {
    if x.ncols() != BASIS_LEN {
        return Err(invalid(format!("design matrix must have {BASIS_LEN} columns")));
    }
    if x.nrows() != t.len() {
        return Err(invalid(format!("{} rows but {} targets", x.nrows(), t.len())));
    }
    if x.nrows() < BASIS_LEN {
        return Err(invalid(format!("need at least {BASIS_LEN} samples, got {}", x.nrows())));
    }
    let xtx = x.transpose() * x;
    let xtt = x.transpose() * t;

    // Condition check on the scaled normal matrix; unscaled inputs make raw
    // eigenvalues useless for deciding rank.
    let d: DVector<f64> = xtx.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    let scaled = DMatrix::from_fn(BASIS_LEN, BASIS_LEN, |i, j| xtx[(i, j)] * d[i] * d[j]);
    let eig = scaled.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    let full_rank = d.iter().all(|&v| v > 0.0) && min_eig > 1e-12;

    let (w, rank_deficient) = match (full_rank, scaled.cholesky()) {
        (true, Some(chol)) => {
            let z = chol.solve(&xtt.component_mul(&d));
            (z.component_mul(&d), false)
        }
        _ => {
            let svd = x.clone().svd(true, true);
            let tol = 1e-12 * svd.singular_values.max() * x.nrows().max(BASIS_LEN) as f64;
            let w = svd
                .solve(t, tol)
                .map_err(|e| crate::error::Error::Numerical(e.to_string()))?;
            (w, true)
        }
    };
    let weights = MappingWeights::from_slice(w.as_slice())?;
    Ok(MappingFit {
        gradient_norm: loss_gradient(x, t, &weights).norm(),
        weights,
        rank_deficient,
    })
}

/// Mapped angle `phi(x) . w` for one frame.
pub fn apply_map(weights: &MappingWeights, frame: &KinematicFrame) -> Result<f64> {
    let phi = frame_basis(frame)?;
    Ok(phi.iter().zip(&weights.0).map(|(p, w)| p * w).sum())
}

/// Replaces each frame's angle with its mapped value. Derivatives are dropped
/// so they get re-derived from the corrected angle.
pub fn map_frames(weights: &MappingWeights, frames: &[KinematicFrame]) -> Result<Vec<KinematicFrame>> {
    frames
        .iter()
        .map(|f| {
            Ok(KinematicFrame {
                theta_th: apply_map(weights, f)?,
                theta_dot: None,
                theta_ddot: None,
                ..*f
            })
        })
        .collect()
}

/// Linear interpolation of a cycle onto `n` equally spaced points.
pub fn resample_cycle(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if values.len() < 2 || n < 2 {
        return Err(invalid("resampling needs at least two input and two output points"));
    }
    let last = (values.len() - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let pos = k as f64 * last / (n - 1) as f64;
            let i = (pos.floor() as usize).min(values.len() - 2);
            let frac = pos - i as f64;
            values[i] * (1.0 - frac) + values[i + 1] * frac
        })
        .collect())
}

/// Resamples a cycle of frames (angle and both derivatives) onto `n` points.
pub fn resample_frames(frames: &[KinematicFrame], n: usize) -> Result<Vec<KinematicFrame>> {
    let field = |get: fn(&KinematicFrame) -> Option<f64>| -> Result<Vec<f64>> {
        let v: Option<Vec<f64>> = frames.iter().map(get).collect();
        resample_cycle(&v.ok_or_else(|| invalid("cycle frames lack derivatives"))?, n)
    };
    let theta = field(|f| Some(f.theta_th))?;
    let dot = field(|f| f.theta_dot)?;
    let ddot = field(|f| f.theta_ddot)?;
    let t = resample_cycle(&frames.iter().map(|f| f.t).collect::<Vec<_>>(), n)?;
    let grf = resample_cycle(&frames.iter().map(|f| f.grf).collect::<Vec<_>>(), n)?;
    Ok((0..n)
        .map(|k| KinematicFrame {
            t: t[k],
            theta_th: theta[k],
            theta_dot: Some(dot[k]),
            theta_ddot: Some(ddot[k]),
            grf: grf[k],
            label: frames[0].label,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingFitReport {
    pub rmse_before: f64,
    pub rmse_after: f64,
    /// Loss-gradient norm of `w` on the evaluated samples.
    pub residual_gradient_norm: f64,
    pub n_samples: usize,
    /// Mean per-cycle maximum (MHF) of measured, mapped and reference angles.
    pub mhf_mean_before: f64,
    pub mhf_mean_after: f64,
    pub mhf_mean_reference: f64,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Compares measured and mapped cycles against reference cycles of equal length.
pub fn evaluate_map(
    weights: &MappingWeights,
    measured_cycles: &[Vec<KinematicFrame>],
    reference_cycles: &[Vec<f64>],
) -> Result<MappingFitReport> {
    if measured_cycles.is_empty() || measured_cycles.len() != reference_cycles.len() {
        return Err(invalid(format!(
            "{} measured cycles vs {} reference cycles",
            measured_cycles.len(),
            reference_cycles.len()
        )));
    }
    let (mut before, mut after, mut reference) = (Vec::new(), Vec::new(), Vec::new());
    let (mut mhf_before, mut mhf_after, mut mhf_ref) = (0.0, 0.0, 0.0);
    let mut rows = Vec::new();
    for (k, (cycle, refc)) in measured_cycles.iter().zip(reference_cycles).enumerate() {
        if cycle.len() != refc.len() || cycle.is_empty() {
            return Err(invalid(format!(
                "cycle {k}: {} measured samples vs {} reference samples",
                cycle.len(),
                refc.len()
            )));
        }
        let mapped = cycle.iter().map(|f| apply_map(weights, f)).collect::<Result<Vec<_>>>()?;
        let raw: Vec<f64> = cycle.iter().map(|f| f.theta_th).collect();
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mhf_before += max(&raw);
        mhf_after += max(&mapped);
        mhf_ref += max(refc);
        before.extend(raw);
        after.extend(mapped);
        reference.extend_from_slice(refc);
        rows.extend_from_slice(cycle);
    }
    let n_cycles = measured_cycles.len() as f64;
    let x = design_matrix(&rows)?;
    let t = DVector::from_vec(reference.clone());
    Ok(MappingFitReport {
        rmse_before: rmse(&before, &reference),
        rmse_after: rmse(&after, &reference),
        residual_gradient_norm: loss_gradient(&x, &t, weights).norm(),
        n_samples: reference.len(),
        mhf_mean_before: mhf_before / n_cycles,
        mhf_mean_after: mhf_after / n_cycles,
        mhf_mean_reference: mhf_ref / n_cycles,
    })
}

/// Fits weights on time-normalized cycles: every cycle is resampled to `n_points`.
pub fn fit_cycles(
    measured_cycles: &[Vec<KinematicFrame>],
    reference_cycles: &[Vec<f64>],
    n_points: usize,
) -> Result<MappingFit> {
    if measured_cycles.len() != reference_cycles.len() {
        return Err(invalid("measured and reference cycle counts differ"));
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (cycle, refc) in measured_cycles.iter().zip(reference_cycles) {
        rows.extend(resample_frames(cycle, n_points)?);
        targets.extend(resample_cycle(refc, n_points)?);
    }
    fit_weights(&design_matrix(&rows)?, &DVector::from_vec(targets))
}
