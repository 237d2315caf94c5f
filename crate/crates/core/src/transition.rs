//! Shared vocabulary: locomotion states, gait-event kinds, ICF identifiers and the six transitions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

/// FSM state. `Walk` also covers standing and ramp walking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocomotionState {
    #[serde(rename = "walk")]
    Walk,
    #[serde(rename = "sit")]
    Sit,
    #[serde(rename = "sa")]
    StairAscent,
    #[serde(rename = "sd")]
    StairDescent,
}

impl LocomotionState {
    pub const ALL: [LocomotionState; 4] = [
        LocomotionState::Walk,
        LocomotionState::Sit,
        LocomotionState::StairAscent,
        LocomotionState::StairDescent,
    ];

    /// Label used in trial CSV files.
    pub fn label(self) -> &'static str {
        match self {
            LocomotionState::Walk => "walk",
            LocomotionState::Sit => "sit",
            LocomotionState::StairAscent => "sa",
            LocomotionState::StairDescent => "sd",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            LocomotionState::Walk => "W",
            LocomotionState::Sit => "S",
            LocomotionState::StairAscent => "SA",
            LocomotionState::StairDescent => "SD",
        }
    }
}

impl fmt::Display for LocomotionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LocomotionState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk" | "w" => Ok(LocomotionState::Walk),
            "sit" | "s" => Ok(LocomotionState::Sit),
            "sa" | "stair_ascent" => Ok(LocomotionState::StairAscent),
            "sd" | "stair_descent" => Ok(LocomotionState::StairDescent),
            other => Err(invalid(format!("unknown locomotion label `{other}`"))),
        }
    }
}

/// Key gait moments the detectors emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventKind {
    /// Maximum hip flexion.
    Mhf,
    /// Heel strike.
    Hs,
    /// First entry of the thigh angle into the THR band.
    Thr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IcfId {
    /// Thigh angle at MHF.
    #[serde(rename = "ICF1")]
    Icf1,
    /// MHF angle minus HS angle.
    #[serde(rename = "ICF2")]
    Icf2,
    /// Thigh velocity on entering THR.
    #[serde(rename = "ICF3")]
    Icf3,
}

impl IcfId {
    pub fn trigger(self) -> EventKind {
        match self {
            IcfId::Icf1 => EventKind::Mhf,
            IcfId::Icf2 => EventKind::Hs,
            IcfId::Icf3 => EventKind::Thr,
        }
    }

    pub fn pair(self) -> TransitionPair {
        match self {
            IcfId::Icf1 => TransitionPair::WsaSaw,
            IcfId::Icf2 => TransitionPair::WsdSdw,
            IcfId::Icf3 => TransitionPair::WsSw,
        }
    }
}

/// Whether a rule fires when its ICF is above (`Exceed`) or below (`FallBelow`) the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundType {
    Exceed,
    FallBelow,
}

impl BoundType {
    pub fn flipped(self) -> Self {
        match self {
            BoundType::Exceed => BoundType::FallBelow,
            BoundType::FallBelow => BoundType::Exceed,
        }
    }

    /// Strict comparison of `value` against `threshold`.
    pub fn fires(self, value: f64, threshold: f64) -> bool {
        match self {
            BoundType::Exceed => value > threshold,
            BoundType::FallBelow => value < threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "W-S")]
    WalkToSit,
    #[serde(rename = "S-W")]
    SitToWalk,
    #[serde(rename = "W-SA")]
    WalkToStairAscent,
    #[serde(rename = "SA-W")]
    StairAscentToWalk,
    #[serde(rename = "W-SD")]
    WalkToStairDescent,
    #[serde(rename = "SD-W")]
    StairDescentToWalk,
}

impl Transition {
    /// Declared order; the FSM evaluates rules in this order.
    pub const ALL: [Transition; 6] = [
        Transition::WalkToSit,
        Transition::SitToWalk,
        Transition::WalkToStairAscent,
        Transition::StairAscentToWalk,
        Transition::WalkToStairDescent,
        Transition::StairDescentToWalk,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Transition::WalkToSit => "W-S",
            Transition::SitToWalk => "S-W",
            Transition::WalkToStairAscent => "W-SA",
            Transition::StairAscentToWalk => "SA-W",
            Transition::WalkToStairDescent => "W-SD",
            Transition::StairDescentToWalk => "SD-W",
        }
    }

    pub fn from_state(self) -> LocomotionState {
        use LocomotionState::*;
        match self {
            Transition::WalkToSit | Transition::WalkToStairAscent | Transition::WalkToStairDescent => {
                Walk
            }
            Transition::SitToWalk => Sit,
            Transition::StairAscentToWalk => StairAscent,
            Transition::StairDescentToWalk => StairDescent,
        }
    }

    pub fn to_state(self) -> LocomotionState {
        use LocomotionState::*;
        match self {
            Transition::WalkToSit => Sit,
            Transition::WalkToStairAscent => StairAscent,
            Transition::WalkToStairDescent => StairDescent,
            Transition::SitToWalk | Transition::StairAscentToWalk | Transition::StairDescentToWalk => {
                Walk
            }
        }
    }

    pub fn between(from: LocomotionState, to: LocomotionState) -> Option<Transition> {
        Transition::ALL
            .into_iter()
            .find(|tr| tr.from_state() == from && tr.to_state() == to)
    }

    pub fn icf(self) -> IcfId {
        self.pair().icf()
    }

    pub fn trigger(self) -> EventKind {
        self.icf().trigger()
    }

    /// Default bound convention: transitions out of Walk exceed, transitions back to Walk fall below.
    pub fn default_bound(self) -> BoundType {
        if self.from_state() == LocomotionState::Walk {
            BoundType::Exceed
        } else {
            BoundType::FallBelow
        }
    }

    pub fn pair(self) -> TransitionPair {
        match self {
            Transition::WalkToSit | Transition::SitToWalk => TransitionPair::WsSw,
            Transition::WalkToStairAscent | Transition::StairAscentToWalk => TransitionPair::WsaSaw,
            Transition::WalkToStairDescent | Transition::StairDescentToWalk => TransitionPair::WsdSdw,
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(['_', '/'], "-");
        Transition::ALL
            .into_iter()
            .find(|tr| tr.code() == norm)
            .ok_or_else(|| invalid(format!("unknown transition `{s}`")))
    }
}

/// A walk-out / walk-back pair of transitions that is tuned jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionPair {
    #[serde(rename = "ws")]
    WsSw,
    #[serde(rename = "wsa")]
    WsaSaw,
    #[serde(rename = "wsd")]
    WsdSdw,
}

impl TransitionPair {
    pub const ALL: [TransitionPair; 3] = [
        TransitionPair::WsSw,
        TransitionPair::WsaSaw,
        TransitionPair::WsdSdw,
    ];

    /// `[walk -> X, X -> walk]`.
    pub fn members(self) -> [Transition; 2] {
        match self {
            TransitionPair::WsSw => [Transition::WalkToSit, Transition::SitToWalk],
            TransitionPair::WsaSaw => [Transition::WalkToStairAscent, Transition::StairAscentToWalk],
            TransitionPair::WsdSdw => [Transition::WalkToStairDescent, Transition::StairDescentToWalk],
        }
    }

    /// The non-walk state reachable from Walk through this pair.
    pub fn target_state(self) -> LocomotionState {
        self.members()[0].to_state()
    }

    pub fn icf(self) -> IcfId {
        match self {
            TransitionPair::WsSw => IcfId::Icf3,
            TransitionPair::WsaSaw => IcfId::Icf1,
            TransitionPair::WsdSdw => IcfId::Icf2,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            TransitionPair::WsSw => "ws",
            TransitionPair::WsaSaw => "wsa",
            TransitionPair::WsdSdw => "wsd",
        }
    }
}

impl fmt::Display for TransitionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TransitionPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ws" | "sw" | "ws/sw" | "ws-sw" => Ok(TransitionPair::WsSw),
            "wsa" | "saw" | "wsa/saw" | "wsa-saw" => Ok(TransitionPair::WsaSaw),
            "wsd" | "sdw" | "wsd/sdw" | "wsd-sdw" => Ok(TransitionPair::WsdSdw),
            other => Err(invalid(format!("unknown transition pair `{other}`"))),
        }
    }
}
