//! Cut-in scenario: mutation grid and the scripted NPC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Vec2};
use crate::planner::QuinticPolynomial;

use super::SimConfig;

/// Aggressiveness of one cut-in. Shorter distances and higher lane-change
/// speeds make the merge more abrupt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutInParams {
    /// distance the NPC travels after passing the ego before it starts to merge, m
    pub dist_before_cutin: f64,
    /// distance travelled while merging, m
    pub dist_during_lanechange: f64,
    /// speed reached by the end of the merge, m/s
    pub lanechange_speed: f64,
}

impl CutInParams {
    pub const BEFORE_RANGE: (f64, f64) = (10.0, 20.0);
    pub const DURING_RANGE: (f64, f64) = (6.0, 16.0);
    pub const SPEED_RANGE: (f64, f64) = (9.0, 19.0);

    pub fn new(before: f64, during: f64, speed: f64) -> Result<Self> {
        let p = Self {
            dist_before_cutin: before,
            dist_during_lanechange: during,
            lanechange_speed: speed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("dist_before_cutin", self.dist_before_cutin, Self::BEFORE_RANGE),
            ("dist_during_lanechange", self.dist_during_lanechange, Self::DURING_RANGE),
            ("lanechange_speed", self.lanechange_speed, Self::SPEED_RANGE),
        ];
        for (field, v, (lo, hi)) in checks {
            if !(v >= lo && v < hi) {
                return Err(Error::invariant(field, format!("{v} outside [{lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// Median of each range, used as the representative single scenario.
    pub fn median() -> Self {
        Self {
            dist_before_cutin: 15.0,
            dist_during_lanechange: 11.0,
            lanechange_speed: 14.0,
        }
    }
}

/// Every combination of the three parameters, each stepped by 1 from its
/// lower bound: 1000 scenarios, ordered with the lane-change speed varying
/// fastest.
pub fn generate_mutations() -> Vec<CutInParams> {
    let steps = |(lo, hi): (f64, f64)| (0..(hi - lo) as usize).map(move |i| lo + i as f64);
    let mut out = Vec::with_capacity(1000);
    for before in steps(CutInParams::BEFORE_RANGE) {
        for during in steps(CutInParams::DURING_RANGE) {
            for speed in steps(CutInParams::SPEED_RANGE) {
                out.push(CutInParams {
                    dist_before_cutin: before,
                    dist_during_lanechange: during,
                    lanechange_speed: speed,
                });
            }
        }
    }
    out
}

/// Pose of a scripted vehicle at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
}

/// The NPC's trajectory, fixed in advance against the ego's nominal
/// cruise: approach in the left lane, pass, merge, then lead.
#[derive(Debug, Clone)]
pub struct NpcScript {
    approach_speed: f64,
    spawn_x: f64,
    lane_y: f64,
    lanechange_speed: f64,
    /// seconds
    cutin_start: f64,
    cutin_duration: f64,
    cutin_x: f64,
    during: f64,
    lateral: QuinticPolynomial,
    length: f64,
    width: f64,
}

impl NpcScript {
    pub fn new(params: &CutInParams, cfg: &SimConfig) -> Result<Self> {
        params.validate()?;
        let closing = cfg.npc_approach_speed - cfg.ego_speed;
        if closing <= 0.0 {
            return Err(Error::invariant("npc_approach_speed", "must exceed the ego cruise speed"));
        }
        let spawn_x = -cfg.npc_spawn_behind;
        let passing = cfg.npc_spawn_behind / closing;
        let cutin_start = passing + params.dist_before_cutin / cfg.npc_approach_speed;
        // speed ramps linearly from the approach speed to the lane-change speed
        let cutin_duration = 2.0 * params.dist_during_lanechange / (cfg.npc_approach_speed + params.lanechange_speed);
        Ok(Self {
            approach_speed: cfg.npc_approach_speed,
            spawn_x,
            lane_y: cfg.lane_width,
            lanechange_speed: params.lanechange_speed,
            cutin_start,
            cutin_duration,
            cutin_x: spawn_x + cfg.npc_approach_speed * cutin_start,
            during: params.dist_during_lanechange,
            lateral: QuinticPolynomial::new([cfg.lane_width, 0.0, 0.0], [0.0, 0.0, 0.0], cutin_duration),
            length: cfg.vehicle_length,
            width: cfg.vehicle_width,
        })
    }

    /// Time at which the merge finishes, seconds.
    pub fn cutin_end(&self) -> f64 {
        self.cutin_start + self.cutin_duration
    }

    pub fn cutin_start(&self) -> f64 {
        self.cutin_start
    }

    pub fn pose(&self, time: f64) -> VehiclePose {
        if time <= self.cutin_start {
            return VehiclePose {
                x: self.spawn_x + self.approach_speed * time,
                y: self.lane_y,
                yaw: 0.0,
                speed: self.approach_speed,
            };
        }
        let tau = time - self.cutin_start;
        if tau >= self.cutin_duration {
            return VehiclePose {
                x: self.cutin_x + self.during + self.lanechange_speed * (tau - self.cutin_duration),
                y: 0.0,
                yaw: 0.0,
                speed: self.lanechange_speed,
            };
        }
        let ramp = (self.lanechange_speed - self.approach_speed) / self.cutin_duration;
        let vx = self.approach_speed + ramp * tau;
        let [y, vy, ..] = self.lateral.eval(tau);
        VehiclePose {
            x: self.cutin_x + self.approach_speed * tau + 0.5 * ramp * tau * tau,
            y,
            yaw: vy.atan2(vx),
            speed: vx.hypot(vy),
        }
    }

    pub fn footprint(&self, time: f64) -> OrientedBox {
        let p = self.pose(time);
        OrientedBox::new(Vec2::new(p.x, p.y), p.yaw, self.length, self.width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_grid() {
        let m = generate_mutations();
        assert_eq!(m.len(), 1000);
        assert_eq!(m[0], CutInParams::new(10.0, 6.0, 9.0).unwrap());
        assert_eq!(m[999], CutInParams::new(19.0, 15.0, 18.0).unwrap());
        let mut keys: Vec<_> = m
            .iter()
            .map(|p| (p.dist_before_cutin as i64, p.dist_during_lanechange as i64, p.lanechange_speed as i64))
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 1000);
        assert!(m.iter().all(|p| p.validate().is_ok()));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(CutInParams::new(20.0, 6.0, 9.0).is_err());
        assert!(CutInParams::new(10.0, 5.9, 9.0).is_err());
        assert!(CutInParams::new(10.0, 6.0, f64::NAN).is_err());
    }

    #[test]
    fn script_phases_are_continuous() {
        let cfg = SimConfig::default();
        let params = CutInParams::new(12.0, 8.0, 15.0).unwrap();
        let npc = NpcScript::new(&params, &cfg).unwrap();
        // passing point: NPC centre level with the nominal ego
        let passing = cfg.npc_spawn_behind / (cfg.npc_approach_speed - cfg.ego_speed);
        assert!((npc.pose(passing).x - cfg.ego_speed * passing).abs() < 1e-9);
        // travels dist_before_cutin after passing before merging
        let start = npc.pose(npc.cutin_start());
        assert!((start.x - npc.pose(passing).x - 12.0).abs() < 1e-9);
        let end = npc.pose(npc.cutin_end());
        assert!((end.x - start.x - 8.0).abs() < 1e-9 && end.y.abs() < 1e-9);
        assert!((end.speed - 15.0).abs() < 1e-9);
        for (a, b) in [(npc.cutin_start(), 0.0), (npc.cutin_end(), 0.0)] {
            let eps = 1e-7;
            let (p, q) = (npc.pose(a - eps), npc.pose(a + eps));
            assert!((p.x - q.x).abs() < 1e-5 && (p.y - q.y).abs() < 1e-5, "{b}");
        }
    }
}
