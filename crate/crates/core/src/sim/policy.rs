//! Mitigation actions and scripted policies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MitigationAction {
    #[serde(rename = "no-op")]
    NoOp,
    /// emergency braking
    #[serde(rename = "eb")]
    Eb,
    /// full acceleration
    #[serde(rename = "acc")]
    Acc,
    /// lane change to the left
    #[serde(rename = "lcl")]
    Lcl,
    /// lane change to the right
    #[serde(rename = "lcr")]
    Lcr,
}

impl MitigationAction {
    pub fn name(self) -> &'static str {
        match self {
            Self::NoOp => "no-op",
            Self::Eb => "eb",
            Self::Acc => "acc",
            Self::Lcl => "lcl",
            Self::Lcr => "lcr",
        }
    }
}

impl fmt::Display for MitigationAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MitigationAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "no-op" | "noop" => Ok(Self::NoOp),
            "eb" => Ok(Self::Eb),
            "acc" => Ok(Self::Acc),
            "lcl" => Ok(Self::Lcl),
            "lcr" => Ok(Self::Lcr),
            other => Err(Error::InvalidAction(format!("unknown action {other:?}"))),
        }
    }
}

/// Ego motion as seen by a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoKinematics {
    pub position: Vec2,
    pub yaw: f64,
    pub speed: f64,
    pub accel: f64,
}

/// Another vehicle relative to the ego, world-aligned axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    pub offset: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: i64,
    pub scene_sti: f64,
    pub ego: EgoKinematics,
    pub npcs: Vec<RelativeState>,
}

pub trait MitigationPolicy: Send {
    fn name(&self) -> String;

    fn decide(&mut self, obs: &Observation) -> Result<MitigationAction>;
}

/// Never intervenes.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoOp;

impl MitigationPolicy for NoOp {
    fn name(&self) -> String {
        "noop".into()
    }

    fn decide(&mut self, _: &Observation) -> Result<MitigationAction> {
        Ok(MitigationAction::NoOp)
    }
}

/// Brakes at every step.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysEb;

impl MitigationPolicy for AlwaysEb {
    fn name(&self) -> String {
        "always-eb".into()
    }

    fn decide(&mut self, _: &Observation) -> Result<MitigationAction> {
        Ok(MitigationAction::Eb)
    }
}

/// Brakes while the scene STI exceeds `tau`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdBrake {
    pub tau: f64,
}

impl Default for ThresholdBrake {
    fn default() -> Self {
        Self { tau: 0.6 }
    }
}

impl MitigationPolicy for ThresholdBrake {
    fn name(&self) -> String {
        format!("threshold-brake(tau={})", self.tau)
    }

    fn decide(&mut self, obs: &Observation) -> Result<MitigationAction> {
        Ok(if obs.scene_sti > self.tau {
            MitigationAction::Eb
        } else {
            MitigationAction::NoOp
        })
    }
}

/// The built-in policies, constructible by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Noop,
    AlwaysEb,
    ThresholdBrake { tau: f64 },
}

impl PolicyKind {
    pub fn build(&self) -> Box<dyn MitigationPolicy> {
        match *self {
            Self::Noop => Box::new(NoOp),
            Self::AlwaysEb => Box::new(AlwaysEb),
            Self::ThresholdBrake { tau } => Box::new(ThresholdBrake { tau }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(sti: f64) -> Observation {
        Observation {
            t: 0,
            scene_sti: sti,
            ego: EgoKinematics { position: Vec2::new(0.0, 0.0), yaw: 0.0, speed: 8.0, accel: 0.0 },
            npcs: vec![],
        }
    }

    #[test]
    fn threshold_brake_triggers_strictly_above_tau() {
        let mut p = ThresholdBrake::default();
        assert_eq!(p.decide(&obs(0.6)).unwrap(), MitigationAction::NoOp);
        assert_eq!(p.decide(&obs(0.61)).unwrap(), MitigationAction::Eb);
    }

    #[test]
    fn action_names_roundtrip() {
        for a in [MitigationAction::NoOp, MitigationAction::Eb, MitigationAction::Acc, MitigationAction::Lcl, MitigationAction::Lcr] {
            assert_eq!(a.name().parse::<MitigationAction>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<MitigationAction>(&json).unwrap(), a);
        }
        assert!(matches!("brake".parse::<MitigationAction>(), Err(Error::InvalidAction(_))));
    }
}
