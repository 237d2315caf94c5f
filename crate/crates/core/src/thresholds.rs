//! Per-transition thresholds and the built-in per-system defaults.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::signal::DetectorConfig;
use crate::transition::{BoundType, Transition, TransitionPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemTag {
    Ewalk,
    Autonomyo,
    Custom,
}

impl SystemTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemTag::Ewalk => "ewalk",
            SystemTag::Autonomyo => "autonomyo",
            SystemTag::Custom => "custom",
        }
    }

    /// Detector defaults; only the THR band differs between systems. Custom uses eWalk's.
    pub fn detector_config(self) -> DetectorConfig {
        match self {
            SystemTag::Autonomyo => DetectorConfig::autonomyo(),
            SystemTag::Ewalk | SystemTag::Custom => DetectorConfig::ewalk(),
        }
    }
}

impl fmt::Display for SystemTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ewalk" => Ok(SystemTag::Ewalk),
            "autonomyo" => Ok(SystemTag::Autonomyo),
            "custom" => Ok(SystemTag::Custom),
            other => Err(invalid(format!("unknown system `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub value: f64,
    pub bound: BoundType,
}

impl Threshold {
    pub fn new(value: f64, bound: BoundType) -> Self {
        Self { value, bound }
    }
}

/// Exactly one threshold per transition; field order fixes the serialized layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionThresholds {
    #[serde(rename = "W-S")]
    pub walk_to_sit: Threshold,
    #[serde(rename = "S-W")]
    pub sit_to_walk: Threshold,
    #[serde(rename = "W-SA")]
    pub walk_to_stair_ascent: Threshold,
    #[serde(rename = "SA-W")]
    pub stair_ascent_to_walk: Threshold,
    #[serde(rename = "W-SD")]
    pub walk_to_stair_descent: Threshold,
    #[serde(rename = "SD-W")]
    pub stair_descent_to_walk: Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSet {
    pub system: SystemTag,
    pub transitions: TransitionThresholds,
}

impl ThresholdSet {
    /// Builds a set from six values given in [`Transition::ALL`] order, with default bounds.
    pub fn from_values(system: SystemTag, values: [f64; 6]) -> Self {
        let th = |i: usize| Threshold::new(values[i], Transition::ALL[i].default_bound());
        Self {
            system,
            transitions: TransitionThresholds {
                walk_to_sit: th(0),
                sit_to_walk: th(1),
                walk_to_stair_ascent: th(2),
                stair_ascent_to_walk: th(3),
                walk_to_stair_descent: th(4),
                stair_descent_to_walk: th(5),
            },
        }
    }

    /// Offline-trained thresholds shipped for each exoskeleton. `Custom` starts from eWalk's.
    pub fn defaults(system: SystemTag) -> Self {
        let w_sd = match system {
            SystemTag::Autonomyo => 13.37,
            SystemTag::Ewalk | SystemTag::Custom => 10.37,
        };
        Self::from_values(system, [23.32, -4.32, 50.52, 51.21, w_sd, 9.62])
    }

    pub fn get(&self, tr: Transition) -> Threshold {
        let t = &self.transitions;
        match tr {
            Transition::WalkToSit => t.walk_to_sit,
            Transition::SitToWalk => t.sit_to_walk,
            Transition::WalkToStairAscent => t.walk_to_stair_ascent,
            Transition::StairAscentToWalk => t.stair_ascent_to_walk,
            Transition::WalkToStairDescent => t.walk_to_stair_descent,
            Transition::StairDescentToWalk => t.stair_descent_to_walk,
        }
    }

    pub fn get_mut(&mut self, tr: Transition) -> &mut Threshold {
        let t = &mut self.transitions;
        match tr {
            Transition::WalkToSit => &mut t.walk_to_sit,
            Transition::SitToWalk => &mut t.sit_to_walk,
            Transition::WalkToStairAscent => &mut t.walk_to_stair_ascent,
            Transition::StairAscentToWalk => &mut t.stair_ascent_to_walk,
            Transition::WalkToStairDescent => &mut t.walk_to_stair_descent,
            Transition::StairDescentToWalk => &mut t.stair_descent_to_walk,
        }
    }

    pub fn value(&self, tr: Transition) -> f64 {
        self.get(tr).value
    }

    pub fn set_value(&mut self, tr: Transition, value: f64) {
        self.get_mut(tr).value = value;
    }

    /// Substitutes `[walk -> X, X -> walk]` values for a pair.
    pub fn with_pair(mut self, pair: TransitionPair, values: [f64; 2]) -> Self {
        let [a, b] = pair.members();
        self.set_value(a, values[0]);
        self.set_value(b, values[1]);
        self
    }

    pub fn pair_values(&self, pair: TransitionPair) -> [f64; 2] {
        let [a, b] = pair.members();
        [self.value(a), self.value(b)]
    }

    /// Checks every value is finite and inside its pair's search range.
    pub fn validate(&self) -> Result<()> {
        for tr in Transition::ALL {
            let v = self.value(tr);
            let (lo, hi) = search_range(tr.pair());
            if !v.is_finite() || v < lo || v > hi {
                return Err(invalid(format!(
                    "{tr} threshold {v} outside search range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("threshold set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::IncompleteConfig(e.to_string()))
    }
}

/// Admissible threshold range for both members of a pair.
pub fn search_range(pair: TransitionPair) -> (f64, f64) {
    match pair {
        TransitionPair::WsSw => (-60.0, 60.0),
        TransitionPair::WsaSaw => (30.0, 65.0),
        TransitionPair::WsdSdw => (0.0, 25.0),
    }
}
