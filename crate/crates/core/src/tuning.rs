//! Threshold personalization over one transition pair: the frame-mismatch
//! objective, Bayesian optimization with a GP surrogate and a grid-search baseline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::MappingWeights;
use crate::error::{invalid, Error, Result};
use crate::eval::{prepare_frames, Trial};
use crate::fsm::state_trajectory;
use crate::gp::{acquisition_value, fit_lengthscale, gp_fit, GpHyper, GpModel};
use crate::signal::{detect_events, DetectorConfig, GaitEvent};
use crate::thresholds::{search_range, ThresholdSet};
use crate::transition::{LocomotionState, TransitionPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub pair: TransitionPair,
    pub bounds: [(f64, f64); 2],
}

impl SearchSpace {
    pub fn for_pair(pair: TransitionPair) -> Self {
        let r = search_range(pair);
        Self { pair, bounds: [r, r] }
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!("search bounds [{lo}, {hi}] are not increasing")));
            }
        }
        Ok(())
    }

    /// Grid-search step in degrees.
    pub fn grid_step(&self) -> f64 {
        match self.pair {
            TransitionPair::WsSw => 10.0,
            TransitionPair::WsaSaw | TransitionPair::WsdSdw => 2.5,
        }
    }

    pub fn normalize(&self, th: [f64; 2]) -> [f64; 2] {
        let f = |d: usize| (th[d] - self.bounds[d].0) / (self.bounds[d].1 - self.bounds[d].0);
        [f(0), f(1)]
    }

    pub fn denormalize(&self, u: [f64; 2]) -> [f64; 2] {
        let f = |d: usize| self.bounds[d].0 + u[d] * (self.bounds[d].1 - self.bounds[d].0);
        [f(0), f(1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    /// Penalize components above the limit.
    Upper,
    /// Penalize components below the limit.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdLimit {
    pub value: f64,
    pub kind: LimitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub limit: Option<ThresholdLimit>,
}

impl ObjectiveConfig {
    pub fn for_pair(pair: TransitionPair) -> Self {
        let limit = match pair {
            TransitionPair::WsSw => None,
            TransitionPair::WsaSaw => Some(ThresholdLimit {
                value: 55.0,
                kind: LimitKind::Upper,
            }),
            TransitionPair::WsdSdw => Some(ThresholdLimit {
                value: 5.0,
                kind: LimitKind::Lower,
            }),
        };
        Self {
            c1: 0.005,
            c2: 0.001,
            alpha: 2e-5,
            limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > self.c2 && self.c2 > 0.0) {
            return Err(invalid(format!("need c1 > c2 > 0, got {} and {}", self.c1, self.c2)));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        Ok(())
    }

    /// `alpha/2 * sum(violation^2)`, each component counted only past the limit.
    pub fn penalty(&self, th: [f64; 2]) -> f64 {
        let Some(limit) = self.limit else { return 0.0 };
        let sq: f64 = th
            .iter()
            .map(|&v| {
                let over = match limit.kind {
                    LimitKind::Upper => v - limit.value,
                    LimitKind::Lower => limit.value - v,
                };
                over.max(0.0).powi(2)
            })
            .sum();
        0.5 * self.alpha * sq
    }
}

struct PreparedTrial {
    events: Vec<GaitEvent>,
    labels: Vec<LocomotionState>,
    start: LocomotionState,
}

/// The mismatch objective with detector events computed once per trial.
/// Only the thresholds change between evaluations, so replaying the FSM over
/// cached events is equivalent to a full replay.
pub struct ThresholdObjective {
    pair: TransitionPair,
    config: ObjectiveConfig,
    base: ThresholdSet,
    trials: Vec<PreparedTrial>,
}

impl ThresholdObjective {
    pub fn new(
        trials: &[Trial],
        pair: TransitionPair,
        config: ObjectiveConfig,
        base: ThresholdSet,
        detector: &DetectorConfig,
        map: Option<&MappingWeights>,
    ) -> Result<Self> {
        config.validate()?;
        if trials.is_empty() {
            return Err(invalid("objective needs at least one trial"));
        }
        let class1 = pair.target_state();
        let mut prepared = Vec::with_capacity(trials.len());
        for trial in trials {
            let labels = trial.labels().ok_or_else(|| {
                invalid(format!("trial {} has no ground-truth labels", trial.index))
            })?;
            if !trial
                .gt_transitions
                .iter()
                .any(|g| g.from == LocomotionState::Walk && g.to == class1)
            {
                return Err(invalid(format!(
                    "trial {} has no {} transition",
                    trial.index,
                    pair.members()[0]
                )));
            }
            let frames = prepare_frames(trial, detector, map)?;
            prepared.push(PreparedTrial {
                events: detect_events(&frames, detector)?,
                start: labels[0],
                labels,
            });
        }
        Ok(Self {
            pair,
            config,
            base,
            trials: prepared,
        })
    }

    pub fn pair(&self) -> TransitionPair {
        self.pair
    }

    /// Mismatch cost without the limit penalty.
    pub fn mismatch_cost(&self, th: [f64; 2]) -> f64 {
        let set = self.base.with_pair(self.pair, th);
        let class1 = self.pair.target_state();
        let mut j = 0.0;
        for trial in &self.trials {
            let (states, _) = state_trajectory(&trial.events, trial.labels.len(), trial.start, &set);
            j += frame_cost(&trial.labels, &states, class1, &self.config);
        }
        j
    }

    pub fn evaluate(&self, th: [f64; 2]) -> f64 {
        self.mismatch_cost(th) + self.config.penalty(th)
    }
}

/// Per-frame cost: `c1` while the target class is missed, `c2` while walking
/// is missed once the target class has been entered.
pub fn frame_cost(
    gt: &[LocomotionState],
    fsm: &[LocomotionState],
    class1: LocomotionState,
    config: &ObjectiveConfig,
) -> f64 {
    let (mut missed, mut late) = (0usize, 0usize);
    let mut seen_class1 = false;
    for (&g, &s) in gt.iter().zip(fsm) {
        if g == class1 {
            seen_class1 = true;
            missed += (s != class1) as usize;
        } else if seen_class1 && g == LocomotionState::Walk && s != LocomotionState::Walk {
            late += 1;
        }
    }
    missed as f64 * config.c1 + late as f64 * config.c2
}

/// One-shot objective evaluation.
pub fn objective(
    trials: &[Trial],
    th: [f64; 2],
    config: &ObjectiveConfig,
    base: &ThresholdSet,
    pair: TransitionPair,
    detector: &DetectorConfig,
) -> Result<f64> {
    Ok(ThresholdObjective::new(trials, pair, *config, *base, detector, None)?.evaluate(th))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub th: [f64; 2],
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMethod {
    Bo,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: TuneMethod,
    pub pair: TransitionPair,
    pub best_th: [f64; 2],
    pub best_j: f64,
    pub trace: Vec<TracePoint>,
    pub evaluations: usize,
    pub seed: Option<u64>,
    pub budget: usize,
}

impl TuneResult {
    fn from_trace(method: TuneMethod, pair: TransitionPair, trace: Vec<TracePoint>, seed: Option<u64>, budget: usize) -> Self {
        let mut best = trace[0];
        for p in &trace[1..] {
            if p.j < best.j {
                best = *p;
            }
        }
        Self {
            method,
            pair,
            best_th: best.th,
            best_j: best.j,
            evaluations: trace.len(),
            trace,
            seed,
            budget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    /// Total objective evaluations, initial design included.
    pub budget: usize,
    pub k: f64,
    pub initial_points: usize,
    /// Lattice points per axis for the acquisition search.
    pub resolution: usize,
    pub seed: u64,
    /// Stop once the best value has not improved for this many evaluations.
    pub patience: Option<usize>,
    /// Refit the kernel lengthscale by marginal likelihood after each evaluation.
    pub refit_lengthscale: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            k: 0.5,
            initial_points: 5,
            resolution: 101,
            seed: 0,
            patience: None,
            refit_lengthscale: false,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_points == 0 {
            return Err(invalid("initial design must have at least one point"));
        }
        if self.budget < self.initial_points {
            return Err(invalid(format!(
                "budget {} is smaller than the initial design {}",
                self.budget, self.initial_points
            )));
        }
        if self.resolution < 2 {
            return Err(invalid("acquisition lattice needs at least 2 points per axis"));
        }
        if !(0.0..=1.0).contains(&self.k) {
            return Err(invalid(format!("k must lie in [0, 1], got {}", self.k)));
        }
        if self.budget > self.resolution * self.resolution {
            return Err(invalid("budget exceeds the number of lattice points"));
        }
        Ok(())
    }
}

fn lattice_coord(index: usize, resolution: usize) -> [f64; 2] {
    let step = (resolution - 1) as f64;
    [(index / resolution) as f64 / step, (index % resolution) as f64 / step]
}

/// One acquisition lattice point, for plotting surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub th: [f64; 2],
    pub mean: f64,
    pub std: f64,
    pub acquisition: f64,
}

/// Posterior and acquisition over the `resolution x resolution` normalized
/// lattice, row-major in the first axis.
pub fn acquisition_lattice(model: &GpModel, space: &SearchSpace, resolution: usize, k: f64) -> Vec<LatticePoint> {
    (0..resolution * resolution)
        .map(|i| {
            let u = lattice_coord(i, resolution);
            let (mean, std) = model.predict(&u);
            LatticePoint {
                th: space.denormalize(u),
                mean,
                std,
                acquisition: acquisition_value(mean, std, k),
            }
        })
        .collect()
}

fn argmin_index(model: &GpModel, resolution: usize, k: f64, skip: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..resolution * resolution {
        if skip.get(i).copied().unwrap_or(false) {
            continue;
        }
        let (m, s) = model.predict(&lattice_coord(i, resolution));
        let a = acquisition_value(m, s, k);
        if best.is_none_or(|(_, b)| a < b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

/// Lattice point minimizing the acquisition; ties go to the lowest index.
pub fn argmin_acquisition(model: &GpModel, space: &SearchSpace, resolution: usize, k: f64) -> [f64; 2] {
    let res = resolution.max(2);
    let i = argmin_index(model, res, k, &[]).unwrap_or(0);
    space.denormalize(lattice_coord(i, res))
}

/// Seeded Latin hypercube snapped to the lattice. Duplicates after snapping are dropped.
fn initial_design(cfg: &BoConfig) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.initial_points;
    let step = (cfg.resolution - 1) as f64;
    let mut axes: Vec<Vec<usize>> = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        axes.push(
            strata
                .into_iter()
                .map(|s| {
                    let u = (s as f64 + rng.random::<f64>()) / n as f64;
                    (u * step).round() as usize
                })
                .collect(),
        );
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let idx = axes[0][i] * cfg.resolution + axes[1][i];
        if !out.contains(&idx) {
            out.push(idx);
        }
    }
    out
}

/// Minimizes `f` over `space`. Every call of `f` counts against the budget.
/// If `f` fails, the error carries the evaluations completed so far.
pub fn bo_optimize<F>(mut f: F, space: &SearchSpace, cfg: &BoConfig) -> Result<TuneResult>
where
    F: FnMut([f64; 2]) -> Result<f64>,
{
    space.validate()?;
    cfg.validate()?;
    let res = cfg.resolution;
    let mut evaluated = vec![false; res * res];
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;

    let mut eval = |idx: usize, trace: &mut Vec<TracePoint>| -> Result<f64> {
        let u = lattice_coord(idx, res);
        let th = space.denormalize(u);
        let j = f(th).map_err(|e| Error::ObjectiveFailed {
            source: Box::new(e),
            partial: trace.clone(),
        })?;
        if !j.is_finite() {
            return Err(Error::ObjectiveFailed {
                source: Box::new(Error::Numerical(format!("objective returned {j} at {th:?}"))),
                partial: trace.clone(),
            });
        }
        trace.push(TracePoint { th, j });
        Ok(j)
    };

    for idx in initial_design(cfg) {
        let j = eval(idx, &mut trace)?;
        evaluated[idx] = true;
        xs.push(lattice_coord(idx, res).to_vec());
        ys.push(j);
        best = best.min(j);
    }

    while trace.len() < cfg.budget {
        if cfg.patience.is_some_and(|p| since_best >= p) {
            break;
        }
        let hyper = GpHyper::for_observations(&ys);
        let model = if cfg.refit_lengthscale {
            fit_lengthscale(&xs, &ys, &hyper)
        } else {
            gp_fit(&xs, &ys, &hyper)
        }
        .map_err(|e| Error::ObjectiveFailed {
            source: Box::new(e),
            partial: trace.clone(),
        })?;
        let Some(idx) = argmin_index(&model, res, cfg.k, &evaluated) else {
            break;
        };
        let j = eval(idx, &mut trace)?;
        evaluated[idx] = true;
        xs.push(lattice_coord(idx, res).to_vec());
        ys.push(j);
        if j < best {
            best = j;
            since_best = 0;
        } else {
            since_best += 1;
        }
    }
    Ok(TuneResult::from_trace(TuneMethod::Bo, space.pair, trace, Some(cfg.seed), cfg.budget))
}

/// `low, low + step, ...` up to `high` inclusive.
pub fn grid_axis(low: f64, high: f64, step: f64) -> Vec<f64> {
    let n = ((high - low) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| low + k as f64 * step).collect()
}

/// Exhaustive search over the pair lattice, row-major in the first axis.
pub fn grid_search<F>(mut f: F, space: &SearchSpace) -> Result<TuneResult>
where
    F: FnMut([f64; 2]) -> Result<f64>,
{
    space.validate()?;
    let step = space.grid_step();
    let a0 = grid_axis(space.bounds[0].0, space.bounds[0].1, step);
    let a1 = grid_axis(space.bounds[1].0, space.bounds[1].1, step);
    let mut trace = Vec::with_capacity(a0.len() * a1.len());
    for &x in &a0 {
        for &y in &a1 {
            let th = [x, y];
            let j = f(th).map_err(|e| Error::ObjectiveFailed {
                source: Box::new(e),
                partial: trace.clone(),
            })?;
            trace.push(TracePoint { th, j });
        }
    }
    let n = trace.len();
    Ok(TuneResult::from_trace(TuneMethod::Grid, space.pair, trace, None, n))
}

/// First two instances train, the rest evaluate. A seed shuffles first.
pub fn split_train_eval<T: Clone>(instances: &[T], shuffle_seed: Option<u64>) -> Result<(Vec<T>, Vec<T>)> {
    if instances.len() < 5 {
        return Err(invalid(format!(
            "need at least 5 transition instances, got {}",
            instances.len()
        )));
    }
    let mut items = instances.to_vec();
    if let Some(seed) = shuffle_seed {
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let eval = items.split_off(2);
    Ok((items, eval))
}
