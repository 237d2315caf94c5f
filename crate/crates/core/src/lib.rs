//! Threshold-based locomotion transition detection for hip exoskeletons.
//!
//! Gait events (maximum hip flexion, heel strike, thigh-range crossing) are
//! detected from thigh angle and foot load, turned into scalar features, and
//! fed to a four-state machine. Thresholds can be learned from labeled data,
//! rescaled to a new user from feature statistics, or tuned by Bayesian
//! optimization against a frame-level mismatch cost.

pub mod alignment;
pub mod error;
pub mod eval;
pub mod fsm;
pub mod gp;
pub mod learn;
pub mod sba;
pub mod signal;
pub mod synth;
pub mod thresholds;
pub mod transition;
pub mod tuning;

pub use error::{Error, Result};
pub use eval::{Trial, EvaluationReport};
pub use fsm::{TransitionEvent, TransitionFsm};
pub use signal::{DetectorConfig, GaitEvent, KinematicFrame};
pub use thresholds::{SystemTag, ThresholdSet};
pub use transition::{BoundType, LocomotionState, Transition, TransitionPair};
pub use tuning::{BoConfig, ObjectiveConfig, SearchSpace, TuneResult};
