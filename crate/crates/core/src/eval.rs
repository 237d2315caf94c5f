//! Trial replay, transition accuracy with a one-step detection window, and trial CSV I/O.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{map_frames, MappingWeights};
use crate::error::{invalid, Error, Result};
use crate::fsm::{state_trajectory, TransitionEvent};
use crate::learn::LabeledIcfSet;
use crate::sba::{compute_icf_stats, IcfStats};
use crate::signal::{detect_events, ensure_derivatives, DetectorConfig, GaitEvent, KinematicFrame};
use crate::thresholds::{SystemTag, ThresholdSet};
use crate::transition::{EventKind, LocomotionState, Transition};

/// Ground-truth transition onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtTransition {
    pub t: f64,
    pub from: LocomotionState,
    pub to: LocomotionState,
}

impl GtTransition {
    pub fn transition(&self) -> Option<Transition> {
        Transition::between(self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub frames: Vec<KinematicFrame>,
    pub gt_transitions: Vec<GtTransition>,
    pub subject: String,
    pub system: SystemTag,
    pub index: usize,
}

/// Label changes between consecutive frames.
pub fn gt_from_labels(frames: &[KinematicFrame]) -> Result<Vec<GtTransition>> {
    let mut out = Vec::new();
    let labeled = frames.iter().filter(|f| f.label.is_some()).count();
    if labeled == 0 {
        return Ok(out);
    }
    if labeled != frames.len() {
        return Err(invalid("labels must be present on every frame or on none"));
    }
    for w in frames.windows(2) {
        let (Some(a), Some(b)) = (w[0].label, w[1].label) else { continue };
        if a != b {
            out.push(GtTransition { t: w[1].t, from: a, to: b });
        }
    }
    Ok(out)
}

impl Trial {
    /// Builds a trial whose ground truth comes from the frame labels.
    pub fn from_frames(frames: Vec<KinematicFrame>, subject: impl Into<String>, system: SystemTag, index: usize) -> Result<Self> {
        let gt_transitions = gt_from_labels(&frames)?;
        let trial = Self {
            frames,
            gt_transitions,
            subject: subject.into(),
            system,
            index,
        };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(invalid(format!("trial {} is empty", self.index)));
        }
        if self.frames.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(invalid(format!("trial {}: time is not strictly increasing", self.index)));
        }
        let mut state = self.initial_state();
        let mut last_t = f64::NEG_INFINITY;
        for g in &self.gt_transitions {
            if g.t < last_t {
                return Err(invalid(format!("trial {}: ground truth out of order at t={}", self.index, g.t)));
            }
            if g.from != state || g.transition().is_none() {
                return Err(invalid(format!(
                    "trial {}: invalid ground-truth transition {}→{} at t={}",
                    self.index,
                    g.from.label(),
                    g.to.label(),
                    g.t
                )));
            }
            state = g.to;
            last_t = g.t;
        }
        Ok(())
    }

    /// First ground-truth state, walking when unlabeled.
    pub fn initial_state(&self) -> LocomotionState {
        self.frames
            .first()
            .and_then(|f| f.label)
            .or_else(|| self.gt_transitions.first().map(|g| g.from))
            .unwrap_or(LocomotionState::Walk)
    }

    /// Per-frame labels if every frame carries one.
    pub fn labels(&self) -> Option<Vec<LocomotionState>> {
        self.frames.iter().map(|f| f.label).collect()
    }
}

/// Frames with derivatives, after the optional angle map.
pub fn prepare_frames(trial: &Trial, detector: &DetectorConfig, map: Option<&MappingWeights>) -> Result<Vec<KinematicFrame>> {
    if trial.frames.is_empty() {
        return Err(invalid(format!("trial {} is empty", trial.index)));
    }
    let frames = ensure_derivatives(&trial.frames, detector)?;
    match map {
        Some(w) => ensure_derivatives(&map_frames(w, &frames)?, detector),
        None => Ok(frames),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub detections: Vec<TransitionEvent>,
    pub events: Vec<GaitEvent>,
    pub states: Vec<LocomotionState>,
}

impl Replay {
    /// Times of detected heel strikes.
    pub fn hs_times(&self) -> Vec<f64> {
        self.events.iter().filter(|e| e.kind == EventKind::Hs).map(|e| e.t).collect()
    }
}

/// Runs detectors and a fresh FSM, started in the trial's first state, over the trial.
pub fn replay(trial: &Trial, thresholds: &ThresholdSet, detector: &DetectorConfig, map: Option<&MappingWeights>) -> Result<Replay> {
    let frames = prepare_frames(trial, detector, map)?;
    let events = detect_events(&frames, detector)?;
    let (states, detections) = state_trajectory(&events, frames.len(), trial.initial_state(), thresholds);
    Ok(Replay { detections, events, states })
}

/// End of each transition's detection window: the second heel strike strictly
/// after onset, else onset plus two step periods.
pub fn one_step_windows(gt: &[GtTransition], hs_times: &[f64], step_period: f64) -> Vec<f64> {
    gt.iter()
        .map(|g| {
            hs_times
                .iter()
                .filter(|&&t| t > g.t)
                .nth(1)
                .copied()
                .unwrap_or(g.t + 2.0 * step_period)
        })
        .collect()
}

/// Detected and total counts per transition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally(pub BTreeMap<Transition, (usize, usize)>);

impl Tally {
    pub fn merge(&mut self, other: &Tally) {
        for (tr, (d, n)) in &other.0 {
            let e = self.0.entry(*tr).or_default();
            e.0 += d;
            e.1 += n;
        }
    }

    pub fn scores(&self) -> BTreeMap<Transition, TransitionScore> {
        self.0
            .iter()
            .map(|(tr, &(n_cdt, n_tt))| (*tr, TransitionScore::new(n_cdt, n_tt)))
            .collect()
    }
}

/// Greedy chronological one-to-one matching of detections to ground truth.
/// `windows[i]` is the inclusive window end for `gt[i]`.
pub fn compute_accuracy(detections: &[TransitionEvent], gt: &[GtTransition], windows: &[f64]) -> Tally {
    let mut dets: Vec<&TransitionEvent> = detections.iter().collect();
    dets.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.from_state.cmp(&b.from_state))
            .then(a.to_state.cmp(&b.to_state))
    });
    let mut used = vec![false; dets.len()];
    let mut tally = Tally::default();
    for (g, &end) in gt.iter().zip(windows) {
        let Some(tr) = g.transition() else { continue };
        let hit = dets.iter().enumerate().position(|(i, d)| {
            !used[i] && d.from_state == g.from && d.to_state == g.to && d.t >= g.t && d.t <= end
        });
        if let Some(i) = hit {
            used[i] = true;
        }
        let e = tally.0.entry(tr).or_default();
        e.0 += hit.is_some() as usize;
        e.1 += 1;
    }
    tally
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionScore {
    pub n_cdt: usize,
    pub n_tt: usize,
    /// Percent; absent when the transition never occurs.
    pub accuracy: Option<f64>,
}

impl TransitionScore {
    pub fn new(n_cdt: usize, n_tt: usize) -> Self {
        Self {
            n_cdt,
            n_tt,
            accuracy: (n_tt > 0).then(|| 100.0 * n_cdt as f64 / n_tt as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub detector: DetectorConfig,
    /// Seconds; used for the window when no second heel strike follows onset.
    pub step_period: f64,
    pub excluded_subjects: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            step_period: 1.4,
            excluded_subjects: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pooled: BTreeMap<Transition, TransitionScore>,
    pub per_subject: BTreeMap<String, BTreeMap<Transition, TransitionScore>>,
}

impl EvaluationReport {
    pub fn accuracy(&self, tr: Transition) -> Option<f64> {
        self.pooled.get(&tr).and_then(|s| s.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Rows `subject,transition,n_cdt,n_tt,accuracy`; pooled rows use subject `all`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject", "transition", "n_cdt", "n_tt", "accuracy"])?;
        let rows = self
            .per_subject
            .iter()
            .map(|(s, m)| (s.as_str(), m))
            .chain(std::iter::once(("all", &self.pooled)));
        for (subject, scores) in rows {
            for (tr, s) in scores {
                w.write_record([
                    subject.to_string(),
                    tr.code().to_string(),
                    s.n_cdt.to_string(),
                    s.n_tt.to_string(),
                    s.accuracy.map(|a| a.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Tally for one trial under the window rule.
pub fn score_trial(trial: &Trial, thresholds: &ThresholdSet, cfg: &EvalConfig, map: Option<&MappingWeights>) -> Result<Tally> {
    let r = replay(trial, thresholds, &cfg.detector, map)?;
    let windows = one_step_windows(&trial.gt_transitions, &r.hs_times(), cfg.step_period);
    Ok(compute_accuracy(&r.detections, &trial.gt_transitions, &windows))
}

pub fn evaluate_trials(trials: &[Trial], thresholds: &ThresholdSet, cfg: &EvalConfig, map: Option<&MappingWeights>) -> Result<EvaluationReport> {
    let mut pooled = Tally::default();
    let mut per_subject: BTreeMap<String, Tally> = BTreeMap::new();
    for trial in trials {
        if cfg.excluded_subjects.contains(&trial.subject) {
            continue;
        }
        let t = score_trial(trial, thresholds, cfg, map)?;
        pooled.merge(&t);
        per_subject.entry(trial.subject.clone()).or_default().merge(&t);
    }
    Ok(EvaluationReport {
        pooled: pooled.scores(),
        per_subject: per_subject.into_iter().map(|(s, t)| (s, t.scores())).collect(),
    })
}

/// ICF samples of every trigger event together with the ground-truth label at that frame.
fn labeled_events(trial: &Trial, detector: &DetectorConfig, map: Option<&MappingWeights>) -> Result<(Vec<GaitEvent>, Vec<LocomotionState>)> {
    let labels = trial
        .labels()
        .ok_or_else(|| invalid(format!("trial {} has no ground-truth labels", trial.index)))?;
    let frames = prepare_frames(trial, detector, map)?;
    Ok((detect_events(&frames, detector)?, labels))
}

/// Training sets per transition. The first trigger event inside a ground-truth
/// transition's window is a positive; trigger events during steady `from`
/// state outside every such window are negatives.
pub fn labeled_icf_sets(
    trials: &[Trial],
    detector: &DetectorConfig,
    step_period: f64,
    map: Option<&MappingWeights>,
) -> Result<Vec<LabeledIcfSet>> {
    let mut pos: BTreeMap<Transition, Vec<f64>> = BTreeMap::new();
    let mut neg: BTreeMap<Transition, Vec<f64>> = BTreeMap::new();
    for trial in trials {
        let (events, labels) = labeled_events(trial, detector, map)?;
        let hs: Vec<f64> = events.iter().filter(|e| e.kind == EventKind::Hs).map(|e| e.t).collect();
        let windows = one_step_windows(&trial.gt_transitions, &hs, step_period);
        for tr in Transition::ALL {
            let samples: Vec<(f64, f64, LocomotionState)> = events
                .iter()
                .filter(|e| e.kind == tr.trigger())
                .filter_map(|e| e.icf().map(|s| (e.t, s.value, labels[e.index])))
                .collect();
            let instances: Vec<(f64, f64)> = trial
                .gt_transitions
                .iter()
                .zip(&windows)
                .filter(|(g, _)| g.transition() == Some(tr))
                .map(|(g, &end)| (g.t, end))
                .collect();
            for &(onset, end) in &instances {
                if let Some(&(_, v, _)) = samples.iter().find(|(t, _, _)| *t >= onset && *t <= end) {
                    pos.entry(tr).or_default().push(v);
                }
            }
            let in_window = |t: f64| {
                trial
                    .gt_transitions
                    .iter()
                    .zip(&windows)
                    .any(|(g, &end)| t >= g.t && t <= end)
            };
            for &(t, v, label) in &samples {
                if label == tr.from_state() && !in_window(t) {
                    neg.entry(tr).or_default().push(v);
                }
            }
        }
    }
    Ok(Transition::ALL
        .iter()
        .map(|tr| {
            LabeledIcfSet::from_classes(
                *tr,
                neg.get(tr).map_or(&[][..], |v| v),
                pos.get(tr).map_or(&[][..], |v| v),
            )
        })
        .collect())
}

/// Per-transition ICF statistics for threshold rescaling. Both transitions of
/// a pair use the samples taken while the ground truth is the pair's non-walk
/// class. Transitions without samples are omitted.
pub fn icf_population_stats(trials: &[Trial], detector: &DetectorConfig, map: Option<&MappingWeights>) -> Result<Vec<IcfStats>> {
    let mut samples: BTreeMap<Transition, Vec<f64>> = BTreeMap::new();
    for trial in trials {
        let (events, labels) = labeled_events(trial, detector, map)?;
        for e in &events {
            let Some(icf) = e.icf() else { continue };
            for tr in icf.transition_context.members() {
                if labels[e.index] == tr.pair().target_state() {
                    samples.entry(tr).or_default().push(icf.value);
                }
            }
        }
    }
    samples.into_iter().map(|(tr, v)| compute_icf_stats(tr, &v)).collect()
}

/// Column names for trial CSV files, plus a GRF scale applied on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub t: String,
    pub theta_th: String,
    pub theta_dot: Option<String>,
    pub grf: String,
    pub label: Option<String>,
    pub grf_scale: f64,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            t: "t".into(),
            theta_th: "theta_th".into(),
            theta_dot: Some("theta_dot".into()),
            grf: "grf".into(),
            label: Some("label".into()),
            grf_scale: 1.0,
        }
    }
}

impl ColumnMap {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn load_err(row: usize, message: impl Into<String>) -> Error {
    Error::Load {
        row,
        message: message.into(),
    }
}

/// Parses a trial from CSV. Row numbers in errors are 1-based file lines.
pub fn read_trial_csv<R: Read>(input: R, map: &ColumnMap, subject: &str, system: SystemTag, index: usize) -> Result<Trial> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| load_err(1, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| load_err(1, format!("missing column '{name}'")));
    let (ct, ctheta, cgrf) = (need(&map.t)?, need(&map.theta_th)?, need(&map.grf)?);
    let cdot = map.theta_dot.as_deref().and_then(find);
    let clabel = map.label.as_deref().and_then(find);

    let mut frames: Vec<KinematicFrame> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| load_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let num = |c: usize, name: &str| -> Result<f64> {
            let s = rec.get(c).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| load_err(row, format!("cannot parse {name} value '{s}'")))
        };
        let mut f = KinematicFrame::new(num(ct, &map.t)?, num(ctheta, &map.theta_th)?, num(cgrf, &map.grf)? * map.grf_scale);
        if let Some(c) = cdot {
            if !rec.get(c).unwrap_or("").is_empty() {
                f.theta_dot = Some(num(c, "theta_dot")?);
            }
        }
        if let Some(c) = clabel {
            let s = rec.get(c).unwrap_or("");
            if !s.is_empty() {
                f.label = Some(s.parse().map_err(|_| load_err(row, format!("unknown label '{s}'")))?);
            }
        }
        if let Some(prev) = frames.last() {
            if !(f.t > prev.t) {
                return Err(load_err(row, format!("time {} does not increase after {}", f.t, prev.t)));
            }
        }
        frames.push(f);
    }
    if frames.is_empty() {
        return Err(load_err(2, "no data rows"));
    }
    Trial::from_frames(frames, subject, system, index)
}

pub fn load_trial_csv(path: &Path, map: &ColumnMap, system: SystemTag, index: usize) -> Result<Trial> {
    let subject = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_trial_csv(std::fs::File::open(path)?, map, &subject, system, index)
}

/// Writes the canonical layout `t,theta_th,theta_dot,grf,label`.
pub fn write_trial_csv<W: Write>(out: W, frames: &[KinematicFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "theta_th", "theta_dot", "grf", "label"])?;
    for f in frames {
        w.write_record([
            f.t.to_string(),
            f.theta_th.to_string(),
            f.theta_dot.map(|v| v.to_string()).unwrap_or_default(),
            f.grf.to_string(),
            f.label.map(|l| l.label().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
