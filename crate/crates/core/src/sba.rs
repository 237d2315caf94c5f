//! Statistics-based one-shot threshold rescaling.
//!
//! A trained threshold is scaled by the ratio of the new population's
//! `mean +/- std` to the training population's. Lower-bounded transitions
//! (bound type `Exceed`) use `+`, the others `-`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::thresholds::ThresholdSet;
use crate::transition::{BoundType, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcfStats {
    pub transition: Transition,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

pub fn compute_icf_stats(transition: Transition, samples: &[f64]) -> Result<IcfStats> {
    if samples.is_empty() {
        return Err(invalid(format!("{transition}: no ICF samples")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(IcfStats {
        transition,
        mean,
        std: var.sqrt(),
        n: samples.len(),
    })
}

fn spread(stats: &IcfStats, bound: BoundType) -> f64 {
    match bound {
        BoundType::Exceed => stats.mean + stats.std,
        BoundType::FallBelow => stats.mean - stats.std,
    }
}

/// Rescales one threshold. A zero denominator is reported as
/// [`Error::DegenerateStats`]; callers keep the old threshold in that case.
pub fn tune_sba(th_tr: f64, stats_tr: &IcfStats, stats_new: &IcfStats, bound: BoundType) -> Result<f64> {
    let denom = spread(stats_tr, bound);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateStats(format!(
            "{}: training mean {} and std {} give a zero denominator",
            stats_tr.transition, stats_tr.mean, stats_tr.std
        )));
    }
    Ok(th_tr * (spread(stats_new, bound) / denom))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbaOutcome {
    pub thresholds: ThresholdSet,
    /// Transitions left unchanged, with the reason.
    pub skipped: Vec<(Transition, String)>,
}

/// Applies [`tune_sba`] to every transition that has statistics for both populations.
pub fn tune_threshold_set(
    base: &ThresholdSet,
    training: &[IcfStats],
    subject: &[IcfStats],
) -> SbaOutcome {
    let mut out = *base;
    let mut skipped = Vec::new();
    for tr in Transition::ALL {
        let tr_stats = training.iter().find(|s| s.transition == tr);
        let new_stats = subject.iter().find(|s| s.transition == tr);
        let (Some(a), Some(b)) = (tr_stats, new_stats) else {
            skipped.push((tr, "missing statistics".to_string()));
            continue;
        };
        let th = base.get(tr);
        match tune_sba(th.value, a, b, th.bound) {
            Ok(v) => out.set_value(tr, v),
            Err(e) => skipped.push((tr, e.to_string())),
        }
    }
    SbaOutcome {
        thresholds: out,
        skipped,
    }
}
