//! Closed-loop cut-in simulation with mitigation policies.
//!
//! The ego cruises in the right lane while a scripted NPC approaches from
//! behind in the left lane, passes and merges ahead. Each step the scene
//! STI is computed from the ego's current state and the NPC's scripted
//! future, a policy may override the nominal driver, and the ego is
//! integrated forward.

mod policy;
mod reward;
mod scenario;
mod stats;
mod sweep;

pub use policy::{
    AlwaysEb, EgoKinematics, MitigationAction, MitigationPolicy, NoOp, Observation, PolicyKind, RelativeState,
    ThresholdBrake,
};
pub use reward::{reward_step, RewardConfig, RewardTerms, RewardWeights, StepMotion};
pub use scenario::{generate_mutations, CutInParams, NpcScript, VehiclePose};
pub use stats::{bin_accident_probability, kolmogorov_q, ks_statistic, KsResult, StiBin};
pub use sweep::{run_sweep, RunSummary, Sweep, SweepSummary};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::{cruising_ego, straight_road};
use crate::geometry::{OrientedBox, Vec2};
use crate::planner::QuinticPolynomial;
use crate::reach::{sti_step, ReachConfig, Snapshot};
use crate::scene::{ActorState, ActorTrack, EgoState, LaneMap, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    /// STI horizon, steps
    pub k: usize,
    /// nominal cruise speed, m/s
    pub ego_speed: f64,
    /// acceleration the nominal driver uses to regain cruise speed, m/s²
    pub ego_recover_accel: f64,
    pub lane_width: f64,
    /// initial distance of the NPC behind the ego, m
    pub npc_spawn_behind: f64,
    /// NPC speed before the merge, m/s
    pub npc_approach_speed: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// ego disc radius used by the planner during STI queries, m
    pub ego_radius: f64,
    /// braking and acceleration magnitude of the EB and ACC actions, m/s²
    pub max_accel: f64,
    pub max_speed: f64,
    /// duration of an LCL or LCR manoeuvre, s
    pub lane_change_time: f64,
    /// simulated time after the merge completes, s
    pub tail_time: f64,
    /// drop the NPC entirely
    pub without_npc: bool,
    /// taken from the top-level `reward` section when loaded from a config file
    #[serde(skip)]
    pub reward: RewardConfig,
    /// steps within which an accident counts as following a given step
    pub accident_window: usize,
    pub sti_bins: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            k: 30,
            ego_speed: 8.0,
            ego_recover_accel: 2.0,
            lane_width: 3.5,
            npc_spawn_behind: 15.0,
            npc_approach_speed: 11.0,
            vehicle_length: 4.8,
            vehicle_width: 2.0,
            ego_radius: 1.0,
            max_accel: 4.0,
            max_speed: 27.7,
            lane_change_time: 2.0,
            tail_time: 2.5,
            without_npc: false,
            reward: RewardConfig::default(),
            accident_window: 30,
            sti_bins: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("ego_speed", self.ego_speed),
            ("ego_recover_accel", self.ego_recover_accel),
            ("lane_width", self.lane_width),
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
            ("max_accel", self.max_accel),
            ("max_speed", self.max_speed),
            ("lane_change_time", self.lane_change_time),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invariant(field, "must be positive"));
            }
        }
        if !(self.tail_time >= 0.0 && self.npc_spawn_behind >= 0.0 && self.ego_radius >= 0.0) {
            return Err(Error::invariant(
                "sim",
                "tail_time, npc_spawn_behind and ego_radius must be non-negative",
            ));
        }
        if self.k == 0 || self.sti_bins == 0 {
            return Err(Error::invariant("sim", "k and sti_bins must be at least 1"));
        }
        self.reward.weights.validate()
    }

    /// Two-lane straight road; lane 0 is the ego's lane at y = 0.
    pub fn lane_map(&self) -> LaneMap {
        straight_road(2, self.lane_width, -40.0, 400.0)
    }
}

/// Both boxes touch or overlap.
pub fn detect_accident(ego: &OrientedBox, npcs: &[OrientedBox]) -> bool {
    npcs.iter().any(|b| ego.overlaps(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoRecord {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: i64,
    pub ego: EgoRecord,
    pub npc: Option<VehiclePose>,
    pub sti: f64,
    /// action applied for the transition to `t + 1`; absent on the last step
    pub action: Option<MitigationAction>,
    pub reward: Option<RewardTerms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub params: CutInParams,
    pub policy: String,
    pub trace: Vec<StepRecord>,
    pub sti_series: Vec<f64>,
    pub accident: bool,
    pub accident_step: Option<i64>,
    /// half-open step ranges during which a mitigation action was active
    pub mitigation_windows: Vec<(i64, i64)>,
    pub reward_trace: Vec<RewardTerms>,
}

impl SimResult {
    pub fn mean_sti(&self) -> f64 {
        self.sti_series.iter().sum::<f64>() / self.sti_series.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
struct LaneShift {
    start: f64,
    poly: QuinticPolynomial,
}

/// Kinematic ego: longitudinal speed along +x, lateral motion only
/// through scripted lane shifts.
#[derive(Debug, Clone)]
struct Ego {
    x: f64,
    y: f64,
    speed: f64,
    accel: f64,
    lane: usize,
    shift: Option<LaneShift>,
}

impl Ego {
    /// Lateral (y, ẏ, ÿ) at `time`.
    fn lateral(&self, time: f64) -> [f64; 3] {
        match &self.shift {
            Some(s) => {
                let [y, v, a, _] = s.poly.eval((time - s.start).clamp(0.0, s.poly.duration()));
                [y, v, a]
            }
            None => [self.y, 0.0, 0.0],
        }
    }

    fn yaw(&self, time: f64) -> f64 {
        let [_, vy, _] = self.lateral(time);
        if self.speed > 0.1 {
            vy.atan2(self.speed)
        } else {
            0.0
        }
    }
}

fn ego_state(ego: &Ego, t: i64, time: f64) -> EgoState {
    let [y, vy, ay] = ego.lateral(time);
    EgoState {
        t,
        x: ego.x,
        y,
        yaw: ego.yaw(time),
        v_long: ego.speed.hypot(vy),
        v_lat: 0.0,
        a_long: ego.accel,
        a_lat: ay,
    }
}

/// Open-loop scene of one cut-in: the ego cruises unmitigated through the
/// merge and the NPC track extends `cfg.k` steps past the last ego step.
pub fn cut_in_scene(params: &CutInParams, cfg: &SimConfig) -> Result<Scene> {
    cfg.validate()?;
    let npc = NpcScript::new(params, cfg)?;
    let last_step = ((npc.cutin_end() + cfg.tail_time) / cfg.dt).ceil() as i64;
    let ego = (0..=last_step)
        .map(|t| cruising_ego(t, cfg.ego_speed * t as f64 * cfg.dt, 0.0, cfg.ego_speed))
        .collect();
    let states = (0..=last_step + cfg.k as i64)
        .map(|t| {
            let p = npc.pose(t as f64 * cfg.dt);
            ActorState {
                t,
                x: p.x,
                y: p.y,
                yaw: p.yaw,
                length: cfg.vehicle_length,
                width: cfg.vehicle_width,
            }
        })
        .collect();
    Ok(Scene {
        dt: cfg.dt,
        actors: vec![ActorTrack {
            actor_id: "npc".into(),
            states,
        }],
        ego,
        lane_map: cfg.lane_map(),
    })
}

/// Runs one cut-in scenario under `policy`.
pub fn simulate(
    params: &CutInParams,
    policy: &mut dyn MitigationPolicy,
    cfg: &SimConfig,
    reach: &ReachConfig,
) -> Result<SimResult> {
    cfg.validate()?;
    let npc = NpcScript::new(params, cfg)?;
    let mut reach = reach.clone();
    reach.planner.ego_radius = cfg.ego_radius;
    let lane_map = cfg.lane_map();
    let dt = cfg.dt;
    let last_step = ((npc.cutin_end() + cfg.tail_time) / dt).ceil() as i64;
    let lanes = lane_map.lanes.len();
    let mut ego = Ego {
        x: 0.0,
        y: 0.0,
        speed: cfg.ego_speed,
        accel: 0.0,
        lane: 0,
        shift: None,
    };
    let mut result = SimResult {
        params: *params,
        policy: policy.name(),
        trace: Vec::new(),
        sti_series: Vec::new(),
        accident: false,
        accident_step: None,
        mitigation_windows: Vec::new(),
        reward_trace: Vec::new(),
    };
    let mut window_start: Option<i64> = None;
    let mut prev_accel = (0.0, 0.0);
    for t in 0..=last_step {
        let time = t as f64 * dt;
        let state = ego_state(&ego, t, time);
        let ego_box = OrientedBox::new(state.position(), state.yaw, cfg.vehicle_length, cfg.vehicle_width);
        let npc_now = (!cfg.without_npc).then(|| npc.pose(time));
        let actors = if cfg.without_npc {
            vec![]
        } else {
            let boxes = (0..=cfg.k).map(|j| npc.footprint((t + j as i64) as f64 * dt)).collect();
            vec![("npc".to_string(), boxes)]
        };
        let snapshot = Snapshot::from_world(t, cfg.k, dt, &state, &lane_map, actors);
        let sti = sti_step(&snapshot, &reach).report.scene_sti;
        result.sti_series.push(sti);
        let mut record = StepRecord {
            t,
            ego: EgoRecord {
                x: state.x,
                y: state.y,
                yaw: state.yaw,
                speed: ego.speed,
                accel: ego.accel,
            },
            npc: npc_now,
            sti,
            action: None,
            reward: None,
        };
        let crashed = !cfg.without_npc && detect_accident(&ego_box, &[npc.footprint(time)]);
        if crashed || t == last_step {
            result.trace.push(record);
            if crashed {
                result.accident = true;
                result.accident_step = Some(t);
            }
            break;
        }

        let obs = Observation {
            t,
            scene_sti: sti,
            ego: EgoKinematics {
                position: state.position(),
                yaw: state.yaw,
                speed: ego.speed,
                accel: ego.accel,
            },
            npcs: npc_now
                .iter()
                .map(|p| RelativeState {
                    offset: Vec2::new(p.x - state.x, p.y - state.y),
                    velocity: Vec2::from_angle(p.yaw) * p.speed - Vec2::new(ego.speed, ego.lateral(time)[1]),
                })
                .collect(),
        };
        let action = policy.decide(&obs)?;
        match (action, window_start) {
            (MitigationAction::NoOp, Some(s)) => {
                result.mitigation_windows.push((s, t));
                window_start = None;
            }
            (a, None) if a != MitigationAction::NoOp => window_start = Some(t),
            _ => {}
        }

        // longitudinal command
        let accel = match action {
            MitigationAction::Eb => -cfg.max_accel,
            MitigationAction::Acc => cfg.max_accel,
            _ if ego.speed < cfg.ego_speed => cfg.ego_recover_accel,
            _ if ego.speed > cfg.ego_speed => -cfg.ego_recover_accel,
            _ => 0.0,
        };
        // lateral manoeuvres run to completion once started
        let shifting = ego.shift.as_ref().is_some_and(|s| time < s.start + s.poly.duration());
        if matches!(action, MitigationAction::Lcl | MitigationAction::Lcr) && !shifting {
            let target = match action {
                MitigationAction::Lcl if ego.lane + 1 < lanes => ego.lane + 1,
                MitigationAction::Lcr if ego.lane > 0 => ego.lane - 1,
                _ => return Err(Error::InvalidAction(format!("{action} at t={t}: no lane on that side"))),
            };
            let y0 = ego.lateral(time)[0];
            ego.shift = Some(LaneShift {
                start: time,
                poly: QuinticPolynomial::new(
                    [y0, 0.0, 0.0],
                    [target as f64 * cfg.lane_width, 0.0, 0.0],
                    cfg.lane_change_time,
                ),
            });
            ego.lane = target;
        }

        // integrate with the command held over the step, stopping at the speed limits
        let (x0, y0) = (ego.x, ego.y);
        let target_speed = match accel {
            a if a > 0.0 && matches!(action, MitigationAction::Acc) => cfg.max_speed,
            a if a > 0.0 => cfg.ego_speed,
            a if a < 0.0 && matches!(action, MitigationAction::Eb) => 0.0,
            a if a < 0.0 => cfg.ego_speed,
            _ => ego.speed,
        };
        let (dx, v1) = if accel == 0.0 {
            (ego.speed * dt, ego.speed)
        } else {
            let reach_time = ((target_speed - ego.speed) / accel).clamp(0.0, dt);
            let v_mid = ego.speed + accel * reach_time;
            (
                ego.speed * reach_time + 0.5 * accel * reach_time * reach_time + v_mid * (dt - reach_time),
                v_mid,
            )
        };
        ego.x += dx;
        ego.speed = v1;
        ego.accel = accel;
        let next_time = time + dt;
        ego.y = ego.lateral(next_time)[0];
        if ego.shift.as_ref().is_some_and(|s| next_time >= s.start + s.poly.duration()) {
            ego.shift = None;
        }

        let lat_accel = ego.lateral(next_time)[2];
        let motion = StepMotion {
            displacement: Vec2::new(ego.x - x0, ego.y - y0),
            jerk_long: (accel - prev_accel.0) / dt,
            jerk_lat: (lat_accel - prev_accel.1) / dt,
        };
        prev_accel = (accel, lat_accel);
        let terms = reward_step(sti, &motion, Vec2::new(1.0, 0.0), cfg.ego_speed * dt, &cfg.reward)?;
        record.action = Some(action);
        record.reward = Some(terms);
        result.reward_trace.push(terms);
        result.trace.push(record);
    }
    if let Some(s) = window_start {
        let end = result.trace.last().map_or(s, |r| r.t);
        result.mitigation_windows.push((s, end));
    }
    Ok(result)
}
