//! Kinematic frames, derivative estimation, gait-event detection and ICF extraction.
//!
//! The three detectors (MHF, HS, THR) share state: heel strike closes a step
//! cycle and carries the MHF angle of that cycle, and MHF detection is limited
//! to one event per cycle. They therefore run together in a single streaming
//! [`GaitEventDetector`]; [`detect_mhf`], [`detect_hs`] and
//! [`detect_thr_crossing`] are views over its output.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::transition::{EventKind, IcfId, LocomotionState, TransitionPair};

/// One time step of thigh kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicFrame {
    /// Seconds.
    pub t: f64,
    /// Thigh flexion angle in degrees, flexion positive.
    pub theta_th: f64,
    /// Degrees per second.
    pub theta_dot: Option<f64>,
    /// Degrees per second squared.
    pub theta_ddot: Option<f64>,
    /// Normalized load (fraction of body weight) or scaled sensor units.
    pub grf: f64,
    pub label: Option<LocomotionState>,
}

impl KinematicFrame {
    pub fn new(t: f64, theta_th: f64, grf: f64) -> Self {
        Self {
            t,
            theta_th,
            theta_dot: None,
            theta_ddot: None,
            grf,
            label: None,
        }
    }

    pub fn with_label(mut self, label: LocomotionState) -> Self {
        self.label = Some(label);
        self
    }

    pub fn has_derivatives(&self) -> bool {
        self.theta_dot.is_some() && self.theta_ddot.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrRange {
    pub low: f64,
    pub high: f64,
}

impl ThrRange {
    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.low && theta <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Half-width (deg/s) of the near-zero velocity band used to accept an MHF.
    pub mhf_velocity_band: f64,
    pub thr_range: ThrRange,
    pub grf_load_threshold: f64,
    /// Samples suppressed after each heel strike.
    pub grf_debounce: usize,
    /// Moving-average window (samples) applied before differentiation; 1 disables smoothing.
    pub smoothing_window: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::ewalk()
    }
}

impl DetectorConfig {
    pub fn ewalk() -> Self {
        Self {
            mhf_velocity_band: 5.0,
            thr_range: ThrRange { low: 62.0, high: 75.0 },
            grf_load_threshold: 0.2,
            grf_debounce: 5,
            smoothing_window: 5,
        }
    }

    pub fn autonomyo() -> Self {
        Self {
            thr_range: ThrRange { low: 55.0, high: 70.0 },
            ..Self::ewalk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.thr_range.low < self.thr_range.high) {
            return Err(invalid(format!(
                "THR range [{}, {}] is empty",
                self.thr_range.low, self.thr_range.high
            )));
        }
        if !(self.mhf_velocity_band > 0.0) {
            return Err(invalid("MHF velocity band must be positive"));
        }
        if self.smoothing_window == 0 {
            return Err(invalid("smoothing window must be at least 1 sample"));
        }
        Ok(())
    }
}

fn check_time(frames: &[KinematicFrame]) -> Result<()> {
    for (i, w) in frames.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(invalid(format!(
                "time is not strictly increasing at sample {} ({} -> {})",
                i + 1,
                w[0].t,
                w[1].t
            )));
        }
    }
    Ok(())
}

/// Centered moving average whose half-width shrinks symmetrically near the ends,
/// so linear trends pass through unchanged.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window.saturating_sub(1) / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let slice = &values[i - h..=i + h];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// First and second derivative of the quadratic through three samples, evaluated at `x`.
fn three_point(xs: [f64; 3], ys: [f64; 3], x: f64) -> (f64, f64) {
    let [x0, x1, x2] = xs;
    let d0 = (x0 - x1) * (x0 - x2);
    let d1 = (x1 - x0) * (x1 - x2);
    let d2 = (x2 - x0) * (x2 - x1);
    let first = ys[0] * (2.0 * x - x1 - x2) / d0
        + ys[1] * (2.0 * x - x0 - x2) / d1
        + ys[2] * (2.0 * x - x0 - x1) / d2;
    let second = 2.0 * (ys[0] / d0 + ys[1] / d1 + ys[2] / d2);
    (first, second)
}

/// Fills `theta_dot` and `theta_ddot` from the (smoothed) angle.
///
/// Interior samples use central three-point differences, the two endpoints
/// use one-sided three-point stencils. Both are exact on quadratics, also for
/// non-uniform spacing. Existing derivative values are overwritten.
pub fn estimate_derivatives(
    frames: &[KinematicFrame],
    config: &DetectorConfig,
) -> Result<Vec<KinematicFrame>> {
    if frames.len() < 3 {
        return Err(invalid(format!(
            "need at least 3 frames to differentiate, got {}",
            frames.len()
        )));
    }
    check_time(frames)?;
    let raw: Vec<f64> = frames.iter().map(|f| f.theta_th).collect();
    let smooth = moving_average(&raw, config.smoothing_window.max(1));
    let n = frames.len();
    let mut out = frames.to_vec();
    for i in 0..n {
        let c = i.clamp(1, n - 2);
        let xs = [frames[c - 1].t, frames[c].t, frames[c + 1].t];
        let ys = [smooth[c - 1], smooth[c], smooth[c + 1]];
        let (d1, d2) = three_point(xs, ys, frames[i].t);
        out[i].theta_dot = Some(d1);
        out[i].theta_ddot = Some(d2);
    }
    Ok(out)
}

/// Completes missing derivatives without mixing sources:
/// - every frame has both: unchanged;
/// - every frame has a measured velocity: acceleration is differentiated from it;
/// - otherwise both are derived from the angle, discarding partial velocities.
pub fn ensure_derivatives(
    frames: &[KinematicFrame],
    config: &DetectorConfig,
) -> Result<Vec<KinematicFrame>> {
    if frames.iter().all(KinematicFrame::has_derivatives) {
        check_time(frames)?;
        return Ok(frames.to_vec());
    }
    if frames.len() >= 3 && frames.iter().all(|f| f.theta_dot.is_some()) {
        check_time(frames)?;
        let vel: Vec<KinematicFrame> = frames
            .iter()
            .map(|f| KinematicFrame {
                theta_th: f.theta_dot.unwrap_or_default(),
                ..*f
            })
            .collect();
        let acc = estimate_derivatives(&vel, config)?;
        return Ok(frames
            .iter()
            .zip(acc)
            .map(|(f, a)| KinematicFrame {
                theta_ddot: a.theta_dot,
                ..*f
            })
            .collect());
    }
    estimate_derivatives(frames, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent {
    pub kind: EventKind,
    pub t: f64,
    /// Sample index at which the event was emitted.
    pub index: usize,
    /// Thigh angle at the event; for MHF the flexion maximum.
    pub theta_at_event: f64,
    pub theta_dot_at_event: f64,
    /// HS only: MHF angle of the step cycle this heel strike closes.
    pub mhf_angle: Option<f64>,
}

impl GaitEvent {
    /// The ICF this event carries, if any. An HS without a preceding MHF has none.
    pub fn icf(&self) -> Option<IcfSample> {
        let (icf_id, value) = match self.kind {
            EventKind::Mhf => (IcfId::Icf1, self.theta_at_event),
            EventKind::Hs => (IcfId::Icf2, self.mhf_angle? - self.theta_at_event),
            EventKind::Thr => (IcfId::Icf3, self.theta_dot_at_event),
        };
        Some(IcfSample {
            icf_id,
            value,
            t: self.t,
            transition_context: icf_id.pair(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcfSample {
    pub icf_id: IcfId,
    /// Degrees for ICF1/ICF2, degrees per second for ICF3.
    pub value: f64,
    pub t: f64,
    pub transition_context: TransitionPair,
}

/// Streaming MHF / HS / THR detector over frames that carry derivatives.
///
/// Events emitted for one sample come out in the order MHF, HS, THR.
#[derive(Debug, Clone)]
pub struct GaitEventDetector {
    config: DetectorConfig,
    index: usize,
    prev: Option<KinematicFrame>,
    /// Running maximum of the angle since the last HS or local minimum.
    cycle_peak: f64,
    mhf_done: bool,
    last_mhf: Option<f64>,
    hs_seen: bool,
    debounce_left: usize,
    thr_armed: bool,
}

impl GaitEventDetector {
    pub fn new(config: DetectorConfig) -> Self {
        Self {
            config,
            index: 0,
            prev: None,
            cycle_peak: f64::NEG_INFINITY,
            mhf_done: false,
            last_mhf: None,
            hs_seen: false,
            debounce_left: 0,
            thr_armed: false,
        }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Forgets all history: pending MHF, debounce timer and THR arming.
    pub fn reset(&mut self) {
        *self = Self::new(self.config);
    }

    /// MHF angle waiting for the next heel strike.
    pub fn pending_mhf(&self) -> Option<f64> {
        self.last_mhf
    }

    pub fn push(&mut self, frame: &KinematicFrame) -> Result<Vec<GaitEvent>> {
        let vel = frame
            .theta_dot
            .ok_or_else(|| invalid(format!("frame {} has no angular velocity", self.index)))?;
        let index = self.index;
        self.index += 1;
        let mut events = Vec::new();

        let Some(prev) = self.prev.replace(*frame) else {
            self.cycle_peak = frame.theta_th;
            self.thr_armed = !self.config.thr_range.contains(frame.theta_th);
            return Ok(events);
        };
        if !(frame.t > prev.t) {
            return Err(invalid(format!("time is not strictly increasing at sample {index}")));
        }
        let prev_vel = prev.theta_dot.unwrap_or(0.0);

        // Local minimum: a new flexion movement starts.
        if prev_vel < 0.0 && vel >= 0.0 {
            self.cycle_peak = prev.theta_th.min(frame.theta_th);
            if !self.hs_seen {
                // Without heel strikes there is nothing else to close a cycle.
                self.mhf_done = false;
            }
        }

        let band = self.config.mhf_velocity_band;
        if prev_vel > 0.0
            && vel <= 0.0
            && (prev_vel.abs() <= band || vel.abs() <= band)
            && !self.mhf_done
        {
            let peak = prev.theta_th.max(frame.theta_th);
            if peak >= self.cycle_peak {
                events.push(GaitEvent {
                    kind: EventKind::Mhf,
                    t: frame.t,
                    index,
                    theta_at_event: peak,
                    theta_dot_at_event: vel,
                    mhf_angle: None,
                });
                self.mhf_done = true;
                self.last_mhf = Some(peak);
            }
        }
        self.cycle_peak = self.cycle_peak.max(frame.theta_th);

        let threshold = self.config.grf_load_threshold;
        if self.debounce_left > 0 {
            self.debounce_left -= 1;
        } else if prev.grf < threshold && frame.grf >= threshold {
            events.push(GaitEvent {
                kind: EventKind::Hs,
                t: frame.t,
                index,
                theta_at_event: frame.theta_th,
                theta_dot_at_event: vel,
                mhf_angle: self.last_mhf.take(),
            });
            self.debounce_left = self.config.grf_debounce;
            self.hs_seen = true;
            self.mhf_done = false;
            self.cycle_peak = frame.theta_th;
        }

        let inside = self.config.thr_range.contains(frame.theta_th);
        if inside && self.thr_armed {
            events.push(GaitEvent {
                kind: EventKind::Thr,
                t: frame.t,
                index,
                theta_at_event: frame.theta_th,
                theta_dot_at_event: vel,
                mhf_angle: None,
            });
            self.thr_armed = false;
        } else if !inside {
            self.thr_armed = true;
        }

        Ok(events)
    }
}

/// Runs all three detectors over a trial. Frames must carry derivatives.
pub fn detect_events(frames: &[KinematicFrame], config: &DetectorConfig) -> Result<Vec<GaitEvent>> {
    config.validate()?;
    let mut detector = GaitEventDetector::new(*config);
    let mut out = Vec::new();
    for frame in frames {
        out.extend(detector.push(frame)?);
    }
    Ok(out)
}

fn detect_kind(
    frames: &[KinematicFrame],
    config: &DetectorConfig,
    kind: EventKind,
) -> Result<Vec<GaitEvent>> {
    Ok(detect_events(frames, config)?
        .into_iter()
        .filter(|e| e.kind == kind)
        .collect())
}

pub fn detect_mhf(frames: &[KinematicFrame], config: &DetectorConfig) -> Result<Vec<GaitEvent>> {
    detect_kind(frames, config, EventKind::Mhf)
}

pub fn detect_hs(frames: &[KinematicFrame], config: &DetectorConfig) -> Result<Vec<GaitEvent>> {
    detect_kind(frames, config, EventKind::Hs)
}

pub fn detect_thr_crossing(
    frames: &[KinematicFrame],
    config: &DetectorConfig,
) -> Result<Vec<GaitEvent>> {
    detect_kind(frames, config, EventKind::Thr)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IcfExtraction {
    pub samples: Vec<IcfSample>,
    /// Times of heel strikes that had no MHF in their cycle (ICF2 skipped).
    pub orphan_hs: Vec<f64>,
}

/// Converts an ordered event stream into ICF samples.
///
/// ICF2 is recomputed here from the stream itself: the MHF angle is the most
/// recent MHF since the previous heel strike.
pub fn extract_icf(events: &[GaitEvent]) -> Result<IcfExtraction> {
    let mut out = IcfExtraction::default();
    let mut last_mhf: Option<f64> = None;
    let mut last_t = f64::NEG_INFINITY;
    for e in events {
        if e.t < last_t {
            return Err(invalid(format!("events out of order at t = {}", e.t)));
        }
        last_t = e.t;
        match e.kind {
            EventKind::Mhf => {
                last_mhf = Some(e.theta_at_event);
                out.samples.push(e.icf().expect("MHF always has ICF1"));
            }
            EventKind::Hs => match last_mhf.take() {
                Some(mhf) => out.samples.push(IcfSample {
                    icf_id: IcfId::Icf2,
                    value: mhf - e.theta_at_event,
                    t: e.t,
                    transition_context: TransitionPair::WsdSdw,
                }),
                None => out.orphan_hs.push(e.t),
            },
            EventKind::Thr => out.samples.push(e.icf().expect("THR always has ICF3")),
        }
    }
    Ok(out)
}
