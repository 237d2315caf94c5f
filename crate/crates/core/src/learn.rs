//! One-dimensional threshold learners that turn labeled ICF samples into scalar thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::thresholds::{SystemTag, Threshold, ThresholdSet};
use crate::transition::{BoundType, Transition};

/// ICF values labeled `true` when the sample belongs to the transition class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledIcfSet {
    pub transition: Transition,
    pub values: Vec<f64>,
    pub labels: Vec<bool>,
}

impl LabeledIcfSet {
    pub fn new(transition: Transition, values: Vec<f64>, labels: Vec<bool>) -> Self {
        Self {
            transition,
            values,
            labels,
        }
    }

    /// Builds a set from the two classes given separately.
    pub fn from_classes(transition: Transition, negative: &[f64], positive: &[f64]) -> Self {
        let values = negative.iter().chain(positive).copied().collect();
        let labels = std::iter::repeat_n(false, negative.len())
            .chain(std::iter::repeat_n(true, positive.len()))
            .collect();
        Self::new(transition, values, labels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.labels.len() {
            return Err(invalid(format!(
                "{}: {} values but {} labels",
                self.transition,
                self.values.len(),
                self.labels.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("{}: non-finite value {v}", self.transition)));
        }
        let positives = self.labels.iter().filter(|&&l| l).count();
        if positives == 0 || positives == self.labels.len() {
            return Err(invalid(format!("{}: both classes must be present", self.transition)));
        }
        Ok(())
    }

    /// True when some threshold classifies every sample correctly.
    pub fn is_separable(&self) -> bool {
        let class_range = |label: bool| {
            self.values
                .iter()
                .zip(&self.labels)
                .filter(|(_, &l)| l == label)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
                    (lo.min(v), hi.max(v))
                })
        };
        let (neg_lo, neg_hi) = class_range(false);
        let (pos_lo, pos_hi) = class_range(true);
        neg_hi < pos_lo || pos_hi < neg_lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticBoundary {
    /// Decision boundary in ICF units (where p = 0.5).
    pub threshold: f64,
    /// `Exceed` when larger values are more likely to be the transition class.
    pub orientation: BoundType,
    /// Slope and intercept in standardized units.
    pub slope: f64,
    pub intercept: f64,
    pub separable: bool,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fits `p(transition | v) = sigmoid(a * z + b)` on standardized `z` by full-batch
/// gradient descent on the mean cross-entropy and returns the p = 0.5 boundary.
///
/// For overlapping classes the boundary is still returned with `separable = false`.
/// If the slope collapses to zero the boundary falls back to the sample mean.
pub fn train_logistic_1d(set: &LabeledIcfSet, config: &LogisticConfig) -> Result<LogisticBoundary> {
    set.validate()?;
    let n = set.values.len() as f64;
    let mean = set.values.iter().sum::<f64>() / n;
    let var = set.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let z: Vec<f64> = set.values.iter().map(|v| (v - mean) / scale).collect();
    let y: Vec<f64> = set.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();

    let (mut a, mut b) = (0.0_f64, 0.0_f64);
    for _ in 0..config.epochs {
        let (mut ga, mut gb) = (0.0, 0.0);
        for (zi, yi) in z.iter().zip(&y) {
            let r = sigmoid(a * zi + b) - yi;
            ga += r * zi;
            gb += r;
        }
        a -= config.learning_rate * ga / n;
        b -= config.learning_rate * gb / n;
    }

    let threshold = if a.abs() > 1e-12 {
        mean + scale * (-b / a)
    } else {
        mean
    };
    Ok(LogisticBoundary {
        threshold,
        orientation: if a >= 0.0 {
            BoundType::Exceed
        } else {
            BoundType::FallBelow
        },
        slope: a,
        intercept: b,
        separable: set.is_separable(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StumpSplit {
    pub threshold: f64,
    /// Fraction of samples classified correctly.
    pub accuracy: f64,
    pub orientation: BoundType,
}

/// Exhaustive decision stump over midpoints of adjacent distinct values.
///
/// Ties on accuracy go to the candidate closest to the grand mean, then to the lower one.
pub fn train_stump_1d(set: &LabeledIcfSet) -> Result<StumpSplit> {
    set.validate()?;
    let n = set.values.len();
    let grand_mean = set.values.iter().sum::<f64>() / n as f64;
    let mut pairs: Vec<(f64, bool)> = set.values.iter().copied().zip(set.labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_pos = pairs.iter().filter(|p| p.1).count();

    // Scan left to right; after consuming a run of equal values the counts
    // describe "v <= value" for the candidate just above it.
    let mut best: Option<(usize, f64, BoundType)> = None;
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < n {
        let v = pairs[i].0;
        while i < n && pairs[i].0 == v {
            if pairs[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        if i == n {
            break;
        }
        let candidate = 0.5 * (v + pairs[i].0);
        // Exceed: predict transition above the split.
        let exceed_correct = neg_below + (total_pos - pos_below);
        let (correct, orientation) = if exceed_correct >= n - exceed_correct {
            (exceed_correct, BoundType::Exceed)
        } else {
            (n - exceed_correct, BoundType::FallBelow)
        };
        let better = match best {
            None => true,
            Some((bc, bt, _)) => {
                correct > bc
                    || (correct == bc
                        && (candidate - grand_mean).abs() < (bt - grand_mean).abs())
            }
        };
        if better {
            best = Some((correct, candidate, orientation));
        }
    }

    Ok(match best {
        Some((correct, threshold, orientation)) => StumpSplit {
            threshold,
            accuracy: correct as f64 / n as f64,
            orientation,
        },
        // All values equal: no split separates anything.
        None => StumpSplit {
            threshold: pairs[0].0,
            accuracy: total_pos.max(n - total_pos) as f64 / n as f64,
            orientation: BoundType::Exceed,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedThresholds {
    pub thresholds: ThresholdSet,
    pub warnings: Vec<String>,
}

/// Learns one threshold per transition with logistic regression. Bound types
/// follow the default convention; a learned orientation that disagrees, or a
/// non-separable set, is reported as a warning.
pub fn derive_threshold_set(
    sets: &[LabeledIcfSet],
    system: SystemTag,
    config: &LogisticConfig,
) -> Result<DerivedThresholds> {
    let mut out = ThresholdSet::defaults(system);
    let mut warnings = Vec::new();
    for tr in Transition::ALL {
        let set = sets
            .iter()
            .find(|s| s.transition == tr)
            .ok_or_else(|| Error::IncompleteConfig(format!("no training set for {tr}")))?;
        let fit = train_logistic_1d(set, config)?;
        let bound = tr.default_bound();
        if !fit.separable {
            warnings.push(format!("{tr}: classes overlap"));
        }
        if fit.orientation != bound {
            warnings.push(format!(
                "{tr}: learned orientation {:?} differs from configured {:?}",
                fit.orientation, bound
            ));
        }
        *out.get_mut(tr) = Threshold::new(fit.threshold, bound);
    }
    Ok(DerivedThresholds {
        thresholds: out,
        warnings,
    })
}
