//! Per-step reward terms for mitigation policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Weights of the STI, path-completion, active-mitigation and comfort terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: [f64; 4],
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: [0.5, 0.5, 0.0, 0.0],
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::invariant("reward weights", "must be non-negative"));
        }
        let sum: f64 = self.alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invariant("reward weights", format!("sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    /// include the jerk penalty; off by default
    pub comfort: bool,
}

/// Ego motion over one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMotion {
    /// distance vector covered during the step, m
    pub displacement: Vec2,
    /// m/s³
    pub jerk_long: f64,
    pub jerk_lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub sti_term: f64,
    pub r_pc: f64,
    pub p_am: f64,
    pub r_comfort: f64,
    pub total: f64,
}

/// Reward for one step. `d_expected` is the distance the ego would cover
/// in one step on an empty road.
pub fn reward_step(
    sti: f64,
    motion: &StepMotion,
    goal_direction: Vec2,
    d_expected: f64,
    cfg: &RewardConfig,
) -> Result<RewardTerms> {
    if d_expected.is_nan() || d_expected <= 0.0 {
        return Err(Error::invariant("d_expected", "must be positive"));
    }
    let covered = motion.displacement.norm();
    let v_f = covered / d_expected;
    let u_ego = if covered > 0.0 {
        motion.displacement * (1.0 / covered)
    } else {
        Vec2::new(0.0, 0.0)
    };
    let u_goal = goal_direction * (1.0 / goal_direction.norm());
    let sti_term = (1.0 - sti) * v_f;
    let r_pc = u_ego.dot(u_goal) * v_f;
    let p_am = 0.0;
    let r_comfort = if cfg.comfort {
        -(motion.jerk_lat.abs() + motion.jerk_long.abs())
    } else {
        0.0
    };
    let [a0, a1, a2, a3] = cfg.weights.alpha;
    Ok(RewardTerms {
        sti_term,
        r_pc,
        p_am,
        r_comfort,
        total: a0 * sti_term + a1 * r_pc + a2 * p_am + a3 * r_comfort,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: Vec2 = Vec2 { x: 1.0, y: 0.0 };

    fn motion(dx: f64, dy: f64) -> StepMotion {
        StepMotion { displacement: Vec2::new(dx, dy), jerk_long: 0.0, jerk_lat: 0.0 }
    }

    #[test]
    fn expected_speed_along_goal() {
        let r = reward_step(0.0, &motion(0.8, 0.0), X, 0.8, &RewardConfig::default()).unwrap();
        assert_eq!((r.sti_term, r.r_pc, r.p_am, r.r_comfort), (1.0, 1.0, 0.0, 0.0));
        assert_eq!(r.total, 1.0);
    }

    #[test]
    fn stationary_ego_earns_nothing() {
        for sti in [0.0, 0.4, 1.0] {
            let r = reward_step(sti, &motion(0.0, 0.0), X, 0.8, &RewardConfig::default()).unwrap();
            assert_eq!((r.sti_term, r.r_pc, r.total), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn perpendicular_motion_has_no_path_reward() {
        let r = reward_step(0.2, &motion(0.0, 0.8), X, 0.8, &RewardConfig::default()).unwrap();
        assert_eq!(r.r_pc, 0.0);
        assert!((r.sti_term - 0.8).abs() < 1e-15);
    }

    #[test]
    fn comfort_term_and_weighted_total() {
        let cfg = RewardConfig { weights: RewardWeights { alpha: [0.25, 0.25, 0.25, 0.25] }, comfort: true };
        let m = StepMotion { displacement: Vec2::new(0.4, 0.0), jerk_long: -3.0, jerk_lat: 2.0 };
        let r = reward_step(0.5, &m, X, 0.8, &cfg).unwrap();
        assert_eq!(r.r_comfort, -5.0);
        assert_eq!(r.total, 0.25 * r.sti_term + 0.25 * r.r_pc + 0.25 * r.p_am + 0.25 * r.r_comfort);
        assert!(reward_step(0.5, &m, X, 0.0, &cfg).is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(RewardWeights::default().validate().is_ok());
        assert!(RewardWeights { alpha: [0.5, 0.6, 0.0, 0.0] }.validate().is_err());
        assert!(RewardWeights { alpha: [1.5, -0.5, 0.0, 0.0] }.validate().is_err());
    }
}
