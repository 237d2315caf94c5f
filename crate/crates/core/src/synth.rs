//! Synthetic thigh-angle and GRF trials with exact ground-truth labels.
//!
//! Each stride is two half-cosines: a rise from the stride's starting minimum
//! to the flexion peak, then a fall to the next stride's minimum. The foot
//! loads (GRF steps from 0 to 1) on the fall, at the phase where the angle has
//! dropped `hs_drop` below the peak, so ICF-2 lands near `hs_drop`.
//! Sitting is a ramp up to the seated angle, a hold with the foot unloaded,
//! and a ramp back down whose foot reload clears the seated flexion peak.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::Trial;
use crate::signal::KinematicFrame;
use crate::thresholds::SystemTag;
use crate::transition::LocomotionState;

/// Per-mode stride geometry in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeShape {
    pub mhf: f64,
    pub min: f64,
    pub hs_drop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SitShape {
    pub angle: f64,
    /// Peak angular rate of the sit-down ramp, deg/s.
    pub descent_rate: f64,
    /// Peak angular rate of the stand-up ramp, deg/s.
    pub rise_rate: f64,
    /// Seconds seated.
    pub hold: f64,
    pub seated_grf: f64,
    /// Seconds after stand-up starts at which the foot reloads.
    pub reload_delay: f64,
}

impl Default for SitShape {
    fn default() -> Self {
        Self {
            angle: 90.0,
            descent_rate: 60.0,
            rise_rate: 50.0,
            hold: 3.0,
            seated_grf: 0.05,
            reload_delay: 0.2,
        }
    }
}

/// One bout. `strides` is ignored for sitting; `hold` only applies to sitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub mode: LocomotionState,
    #[serde(default)]
    pub strides: usize,
    #[serde(default)]
    pub shape: Option<ModeShape>,
    #[serde(default)]
    pub hold: Option<f64>,
}

impl Segment {
    pub fn gait(mode: LocomotionState, strides: usize) -> Self {
        Self {
            mode,
            strides,
            shape: None,
            hold: None,
        }
    }

    pub fn sit() -> Self {
        Self::gait(LocomotionState::Sit, 0)
    }

    pub fn with_shape(mut self, shape: ModeShape) -> Self {
        self.shape = Some(shape);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub segments: Vec<Segment>,
    /// Seconds per stride.
    pub step_period: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Stride phase of the flexion peak.
    pub mhf_phase: f64,
    pub walk: ModeShape,
    pub stair_ascent: ModeShape,
    pub stair_descent: ModeShape,
    pub sit: SitShape,
    /// Gaussian noise on the angle, degrees.
    pub noise_std: f64,
    /// Per-stride Gaussian jitter on the peak and on `hs_drop`, degrees.
    pub stride_jitter: f64,
    pub seed: u64,
    pub subject: String,
    pub system: SystemTag,
    pub index: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            segments: Self::all_transition_segments(),
            step_period: 1.4,
            sample_rate: 100.0,
            mhf_phase: 0.5,
            walk: ModeShape {
                mhf: 30.0,
                min: -15.0,
                hs_drop: 4.0,
            },
            stair_ascent: ModeShape {
                mhf: 57.0,
                min: 5.0,
                hs_drop: 4.0,
            },
            stair_descent: ModeShape {
                mhf: 35.0,
                min: -5.0,
                hs_drop: 16.0,
            },
            sit: SitShape::default(),
            noise_std: 0.0,
            stride_jitter: 0.0,
            seed: 0,
            subject: "synthetic".into(),
            system: SystemTag::Ewalk,
            index: 0,
        }
    }
}

impl ScenarioParams {
    fn all_transition_segments() -> Vec<Segment> {
        use LocomotionState::*;
        vec![
            Segment::gait(Walk, 3),
            Segment::sit(),
            Segment::gait(Walk, 3),
            Segment::gait(StairAscent, 4),
            Segment::gait(Walk, 3),
            Segment::gait(StairDescent, 4),
            Segment::gait(Walk, 3),
        ]
    }

    /// Every one of the six transitions once.
    pub fn all_transitions() -> Self {
        Self::default()
    }

    pub fn walk_only(strides: usize) -> Self {
        Self {
            segments: vec![Segment::gait(LocomotionState::Walk, strides)],
            ..Self::default()
        }
    }

    /// Walk, one bout of `mode`, walk.
    pub fn round_trip(mode: LocomotionState, strides: usize) -> Self {
        let bout = match mode {
            LocomotionState::Sit => Segment::sit(),
            m => Segment::gait(m, strides),
        };
        Self {
            segments: vec![
                Segment::gait(LocomotionState::Walk, 3),
                bout,
                Segment::gait(LocomotionState::Walk, 4),
            ],
            ..Self::default()
        }
    }

    fn default_shape(&self, mode: LocomotionState) -> ModeShape {
        match mode {
            LocomotionState::StairAscent => self.stair_ascent,
            LocomotionState::StairDescent => self.stair_descent,
            _ => self.walk,
        }
    }

    fn shape_of(&self, seg: &Segment) -> ModeShape {
        seg.shape.unwrap_or_else(|| self.default_shape(seg.mode))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.step_period) || !positive(self.sample_rate) {
            return Err(invalid("step period and sample rate must be positive"));
        }
        if !(self.mhf_phase > 0.0 && self.mhf_phase < 1.0) {
            return Err(invalid("MHF phase must lie in (0, 1)"));
        }
        if !(self.noise_std >= 0.0 && self.stride_jitter >= 0.0) {
            return Err(invalid("noise and jitter must be non-negative"));
        }
        let s = &self.sit;
        if !(positive(s.descent_rate) && positive(s.rise_rate) && s.hold >= 0.0 && s.reload_delay >= 0.0) {
            return Err(invalid("sit rates must be positive and durations non-negative"));
        }
        if s.seated_grf >= 0.2 {
            return Err(invalid("seated GRF must stay below the loading threshold"));
        }
        let segs = &self.segments;
        if segs.first().map(|s| s.mode) != Some(LocomotionState::Walk) {
            return Err(invalid("scenario must start walking"));
        }
        for (i, seg) in segs.iter().enumerate() {
            if seg.mode != LocomotionState::Walk {
                let walk = |j: Option<&Segment>| j.is_some_and(|s| s.mode == LocomotionState::Walk);
                if !walk(i.checked_sub(1).and_then(|j| segs.get(j))) || !walk(segs.get(i + 1)) {
                    return Err(invalid(format!("segment {i} ({}) is not bracketed by walking", seg.mode.label())));
                }
            }
            if seg.mode != LocomotionState::Sit {
                if seg.strides == 0 {
                    return Err(invalid(format!("segment {i} has no strides")));
                }
                let sh = self.shape_of(seg);
                if !(sh.min < sh.mhf && sh.hs_drop > 0.0) {
                    return Err(invalid(format!("segment {i}: need min < mhf and hs_drop > 0")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum PieceKind {
    Stride { start: f64, peak: f64, end: f64, phi_hs: f64 },
    /// Half-cosine ramp; GRF is `grf_before` until `switch` seconds in.
    Ramp { from: f64, to: f64, grf_before: f64, grf_after: f64, switch: f64 },
    Hold { angle: f64, grf: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    dur: f64,
    label: LocomotionState,
    kind: PieceKind,
}

fn half_cos(a: f64, b: f64, tau: f64) -> f64 {
    a + (b - a) * 0.5 * (1.0 - (PI * tau.clamp(0.0, 1.0)).cos())
}

impl Piece {
    fn sample(&self, local: f64, mhf_phase: f64) -> (f64, f64) {
        match self.kind {
            PieceKind::Stride { start, peak, end, phi_hs } => {
                let phi = local / self.dur;
                let theta = if phi < mhf_phase {
                    half_cos(start, peak, phi / mhf_phase)
                } else {
                    half_cos(peak, end, (phi - mhf_phase) / (1.0 - mhf_phase))
                };
                (theta, if phi < phi_hs { 0.0 } else { 1.0 })
            }
            PieceKind::Ramp { from, to, grf_before, grf_after, switch } => {
                let grf = if local < switch { grf_before } else { grf_after };
                (half_cos(from, to, local / self.dur), grf)
            }
            PieceKind::Hold { angle, grf } => (angle, grf),
        }
    }
}

fn ramp_duration(delta: f64, peak_rate: f64) -> f64 {
    PI * delta.abs() / (2.0 * peak_rate)
}

fn build_pieces(p: &ScenarioParams) -> Result<Vec<Piece>> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let segs = &p.segments;
    let mut theta = p.shape_of(&segs[0]).min;
    let mut pieces = Vec::new();
    for (i, seg) in segs.iter().enumerate() {
        let next_min = |own: f64| match segs.get(i + 1) {
            Some(n) if n.mode != LocomotionState::Sit => p.shape_of(n).min,
            _ => own,
        };
        if seg.mode == LocomotionState::Sit {
            let s = p.sit;
            pieces.push(Piece {
                dur: ramp_duration(s.angle - theta, s.descent_rate),
                label: LocomotionState::Sit,
                kind: PieceKind::Ramp { from: theta, to: s.angle, grf_before: 1.0, grf_after: 1.0, switch: 0.0 },
            });
            pieces.push(Piece {
                dur: seg.hold.unwrap_or(s.hold),
                label: LocomotionState::Sit,
                kind: PieceKind::Hold { angle: s.angle, grf: s.seated_grf },
            });
            let to = next_min(p.walk.min);
            pieces.push(Piece {
                dur: ramp_duration(s.angle - to, s.rise_rate),
                label: LocomotionState::Walk,
                kind: PieceKind::Ramp {
                    from: s.angle,
                    to,
                    grf_before: s.seated_grf,
                    grf_after: 1.0,
                    switch: s.reload_delay,
                },
            });
            theta = to;
            continue;
        }
        let shape = p.shape_of(seg);
        for k in 0..seg.strides {
            let end = if k + 1 < seg.strides { shape.min } else { next_min(shape.min) };
            let peak = shape.mhf + p.stride_jitter * unit.sample(&mut rng);
            let drop = shape.hs_drop + p.stride_jitter * unit.sample(&mut rng);
            if !(peak > theta && peak > end && drop > 0.0 && drop < peak - end) {
                return Err(invalid(format!(
                    "segment {i} stride {k}: peak {peak} and drop {drop} do not fit between {theta} and {end}"
                )));
            }
            let tau = (1.0 - 2.0 * drop / (peak - end)).acos() / PI;
            pieces.push(Piece {
                dur: p.step_period,
                label: seg.mode,
                kind: PieceKind::Stride {
                    start: theta,
                    peak,
                    end,
                    phi_hs: p.mhf_phase + (1.0 - p.mhf_phase) * tau,
                },
            });
            theta = end;
        }
    }
    Ok(pieces)
}

pub fn generate_synthetic_trial(params: &ScenarioParams) -> Result<Trial> {
    params.validate()?;
    let pieces = build_pieces(params)?;
    let total: f64 = pieces.iter().map(|p| p.dur).sum();
    let n = (total * params.sample_rate).floor() as usize;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, params.noise_std.max(0.0)).map_err(|e| invalid(e.to_string()))?;

    let mut frames = Vec::with_capacity(n);
    let mut piece = 0;
    let mut piece_start = 0.0;
    for i in 0..n {
        let t = i as f64 / params.sample_rate;
        while piece + 1 < pieces.len() && t >= piece_start + pieces[piece].dur {
            piece_start += pieces[piece].dur;
            piece += 1;
        }
        let pc = &pieces[piece];
        let (mut theta, grf) = pc.sample(t - piece_start, params.mhf_phase);
        if params.noise_std > 0.0 {
            theta += noise.sample(&mut noise_rng);
        }
        frames.push(KinematicFrame::new(t, theta, grf).with_label(pc.label));
    }
    Trial::from_frames(frames, params.subject.clone(), params.system, params.index)
}

/// Subject whose stair-descent strides have a small ICF-2: the default W-SD
/// threshold only fires in the trials whose entry in `sd_drops` exceeds it.
/// Each trial keeps walking for ten strides after the stairs.
pub fn descent_personalization_trials(sd_drops: &[f64], seed: u64) -> Result<Vec<Trial>> {
    use LocomotionState::*;
    sd_drops
        .iter()
        .enumerate()
        .map(|(i, &drop)| {
            let mut p = ScenarioParams {
                segments: vec![Segment::gait(Walk, 3), Segment::gait(StairDescent, 4), Segment::gait(Walk, 10)],
                ..ScenarioParams::default()
            };
            p.walk.hs_drop = 3.0;
            p.stair_descent.hs_drop = drop;
            p.stride_jitter = 0.2;
            p.seed = seed.wrapping_add(i as u64);
            p.subject = "personalized".into();
            p.index = i;
            generate_synthetic_trial(&p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{evaluate_trials, replay, EvalConfig};
    use crate::signal::{detect_events, ensure_derivatives, DetectorConfig};
    use crate::thresholds::ThresholdSet;
    use crate::transition::{EventKind, Transition};
    use LocomotionState::*;

    fn defaults() -> ThresholdSet {
        ThresholdSet::defaults(SystemTag::Ewalk)
    }

    #[test]
    fn walk_only_icf1_is_configured_peak() {
        let trial = generate_synthetic_trial(&ScenarioParams::walk_only(6)).unwrap();
        let cfg = DetectorConfig::default();
        let frames = ensure_derivatives(&trial.frames, &cfg).unwrap();
        let mhf: Vec<f64> = detect_events(&frames, &cfg)
            .unwrap()
            .iter()
            .filter(|e| e.kind == EventKind::Mhf)
            .map(|e| e.theta_at_event)
            .collect();
        assert_eq!(mhf.len(), 6);
        for v in mhf {
            assert!((v - 30.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn seeded_bit_identical() {
        let p = ScenarioParams {
            noise_std: 0.3,
            stride_jitter: 0.5,
            seed: 11,
            ..ScenarioParams::default()
        };
        let a = generate_synthetic_trial(&p).unwrap();
        let b = generate_synthetic_trial(&p).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_trial(&ScenarioParams { seed: 12, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn all_transitions_clean_defaults_score_full() {
        let trial = generate_synthetic_trial(&ScenarioParams::all_transitions()).unwrap();
        assert_eq!(trial.gt_transitions.len(), 6);
        let report = evaluate_trials(&[trial], &defaults(), &EvalConfig::default(), None).unwrap();
        for tr in Transition::ALL {
            assert_eq!(report.accuracy(tr), Some(100.0), "{tr}");
        }
    }

    #[test]
    fn stair_ascent_round_trip_two_detections() {
        let trial = generate_synthetic_trial(&ScenarioParams::round_trip(StairAscent, 4)).unwrap();
        let r = replay(&trial, &defaults(), &DetectorConfig::default(), None).unwrap();
        let codes: Vec<_> = r.detections.iter().map(|d| d.transition()).collect();
        assert_eq!(codes, vec![Transition::WalkToStairAscent, Transition::StairAscentToWalk]);
    }

    #[test]
    fn unreachable_thresholds_detect_nothing() {
        let trial = generate_synthetic_trial(&ScenarioParams::all_transitions()).unwrap();
        let mut set = defaults();
        set.set_value(Transition::WalkToSit, 1e9);
        set.set_value(Transition::WalkToStairAscent, 1e9);
        set.set_value(Transition::WalkToStairDescent, 1e9);
        let r = replay(&trial, &set, &DetectorConfig::default(), None).unwrap();
        assert!(r.detections.is_empty());
    }

    #[test]
    fn descent_gap_straddles_default() {
        let trial = generate_synthetic_trial(&ScenarioParams::round_trip(StairDescent, 4)).unwrap();
        let r = replay(&trial, &defaults(), &DetectorConfig::default(), None).unwrap();
        assert_eq!(r.detections.len(), 2);
        let again = replay(&trial, &defaults(), &DetectorConfig::default(), None).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn invalid_scenarios() {
        let mut p = ScenarioParams::default();
        p.segments.insert(0, Segment::sit());
        assert!(generate_synthetic_trial(&p).is_err());
        let p = ScenarioParams {
            segments: vec![Segment::gait(Walk, 2), Segment::gait(StairAscent, 2)],
            ..ScenarioParams::default()
        };
        assert!(generate_synthetic_trial(&p).is_err());
        let p = ScenarioParams {
            step_period: 0.0,
            ..ScenarioParams::default()
        };
        assert!(generate_synthetic_trial(&p).is_err());
    }

    #[test]
    fn personalization_defaults_miss_most() {
        let trials = descent_personalization_trials(&[9.0, 12.0, 9.0, 9.0, 9.0], 1).unwrap();
        let report = evaluate_trials(&trials, &defaults(), &EvalConfig::default(), None).unwrap();
        assert_eq!(report.accuracy(Transition::WalkToStairDescent), Some(20.0));
        assert_eq!(report.accuracy(Transition::StairDescentToWalk), Some(20.0));
    }
}
