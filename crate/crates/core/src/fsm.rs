//! Four-state locomotion FSM driven by gait events and single-ICF threshold tests.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::{DetectorConfig, GaitEvent, GaitEventDetector, IcfSample, KinematicFrame};
use crate::thresholds::ThresholdSet;
use crate::transition::{BoundType, EventKind, IcfId, LocomotionState, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub transition: Transition,
    pub from_state: LocomotionState,
    pub to_state: LocomotionState,
    pub icf_id: IcfId,
    pub trigger_event: EventKind,
    pub bound_type: BoundType,
    pub threshold: f64,
}

impl TransitionRule {
    pub fn from_thresholds(transition: Transition, thresholds: &ThresholdSet) -> Self {
        let th = thresholds.get(transition);
        Self {
            transition,
            from_state: transition.from_state(),
            to_state: transition.to_state(),
            icf_id: transition.icf(),
            trigger_event: transition.trigger(),
            bound_type: th.bound,
            threshold: th.value,
        }
    }
}

/// The six rules in declared evaluation order.
pub fn rules_for(thresholds: &ThresholdSet) -> Vec<TransitionRule> {
    Transition::ALL
        .iter()
        .map(|&tr| TransitionRule::from_thresholds(tr, thresholds))
        .collect()
}

pub fn evaluate_rule(rule: &TransitionRule, icf: &IcfSample) -> Result<bool> {
    if rule.icf_id != icf.icf_id {
        return Err(invalid(format!(
            "{} rule expects {:?}, got {:?}",
            rule.transition, rule.icf_id, icf.icf_id
        )));
    }
    Ok(rule.bound_type.fires(icf.value, rule.threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub t: f64,
    pub from_state: LocomotionState,
    pub to_state: LocomotionState,
    pub icf_value: f64,
    pub threshold_used: f64,
}

impl TransitionEvent {
    pub fn transition(&self) -> Transition {
        Transition::between(self.from_state, self.to_state)
            .expect("FSM only emits the six walk transitions")
    }
}

#[derive(Debug, Clone)]
pub struct TransitionFsm {
    state: LocomotionState,
    rules: Vec<TransitionRule>,
}

impl TransitionFsm {
    pub fn new(start: LocomotionState, thresholds: &ThresholdSet) -> Self {
        Self {
            state: start,
            rules: rules_for(thresholds),
        }
    }

    pub fn state(&self) -> LocomotionState {
        self.state
    }

    pub fn rules(&self) -> &[TransitionRule] {
        &self.rules
    }

    /// Only rules leaving the current state and triggered by this event kind
    /// are evaluated, in declared order; the first that fires wins.
    pub fn step(&mut self, event: &GaitEvent) -> (LocomotionState, Option<TransitionEvent>) {
        let Some(icf) = event.icf() else {
            return (self.state, None);
        };
        let fired = self
            .rules
            .iter()
            .filter(|r| r.from_state == self.state && r.trigger_event == event.kind)
            .find(|r| r.icf_id == icf.icf_id && r.bound_type.fires(icf.value, r.threshold))
            .copied();
        let Some(rule) = fired else {
            return (self.state, None);
        };
        let out = TransitionEvent {
            t: event.t,
            from_state: self.state,
            to_state: rule.to_state,
            icf_value: icf.value,
            threshold_used: rule.threshold,
        };
        self.state = rule.to_state;
        (self.state, Some(out))
    }

    pub fn reset(&mut self, state: LocomotionState) {
        self.state = state;
    }
}

/// Event detector and FSM run sample by sample, as on the device.
#[derive(Debug, Clone)]
pub struct OnlineClassifier {
    detector: GaitEventDetector,
    fsm: TransitionFsm,
}

impl OnlineClassifier {
    pub fn new(start: LocomotionState, thresholds: &ThresholdSet, config: DetectorConfig) -> Self {
        Self {
            detector: GaitEventDetector::new(config),
            fsm: TransitionFsm::new(start, thresholds),
        }
    }

    pub fn state(&self) -> LocomotionState {
        self.fsm.state()
    }

    pub fn pending_mhf(&self) -> Option<f64> {
        self.detector.pending_mhf()
    }

    /// Feeds one frame (with derivatives) and returns any transitions it caused.
    pub fn push(&mut self, frame: &KinematicFrame) -> Result<Vec<TransitionEvent>> {
        let mut out = Vec::new();
        for event in self.detector.push(frame)? {
            if let (_, Some(tr)) = self.fsm.step(&event) {
                out.push(tr);
            }
        }
        Ok(out)
    }

    /// Clears detector memory (pending MHF, debounce, THR arming) and sets the state.
    pub fn reset(&mut self, state: LocomotionState) {
        self.detector.reset();
        self.fsm.reset(state);
    }
}

/// State after each frame when `events` (from the detector) drive a fresh FSM.
pub fn state_trajectory(
    events: &[GaitEvent],
    n_frames: usize,
    start: LocomotionState,
    thresholds: &ThresholdSet,
) -> (Vec<LocomotionState>, Vec<TransitionEvent>) {
    let mut fsm = TransitionFsm::new(start, thresholds);
    let mut states = Vec::with_capacity(n_frames);
    let mut detections = Vec::new();
    let mut next = events.iter().peekable();
    for i in 0..n_frames {
        while let Some(e) = next.next_if(|e| e.index <= i) {
            if let (_, Some(tr)) = fsm.step(e) {
                detections.push(tr);
            }
        }
        states.push(fsm.state());
    }
    (states, detections)
}

/// Detection log as CSV: `t,from,to,icf,threshold`.
pub fn write_detection_csv<W: Write>(out: W, detections: &[TransitionEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "from", "to", "icf", "threshold"])?;
    for d in detections {
        w.write_record([
            d.t.to_string(),
            d.from_state.label().to_string(),
            d.to_state.label().to_string(),
            d.icf_value.to_string(),
            d.threshold_used.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
