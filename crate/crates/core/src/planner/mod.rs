//! Frenet-frame trajectory sampling used as the reachability solver.
//!
//! For each goal cell a fixed lattice of quintic lateral and longitudinal
//! profiles is sampled on the owning lane's reference path. A goal is
//! reachable when any sample is dynamically feasible and keeps the required
//! clearance from every obstacle at every step.

mod obstacles;
mod path;
mod polynomial;

pub use obstacles::{DynamicObstacle, ObstacleSet};
pub use path::{frenet_roundtrip, CartesianState, FrenetState, PathFrame, ReferencePath};
pub use polynomial::QuinticPolynomial;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Vec2;
use crate::grid::GoalCell;
use crate::scene::{EgoState, Lane};
use path::frenet_components;

/// Below this speed curvature is reported as zero.
pub const CURVATURE_MIN_SPEED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// m/s
    pub max_speed: f64,
    /// m/s², bound on tangential acceleration magnitude
    pub max_accel: f64,
    /// 1/m
    pub max_curvature: f64,
    /// minimum distance to lane boundaries, m
    pub clearance_static: f64,
    /// minimum distance to NPC boxes, m
    pub clearance_dynamic: f64,
    /// ego treated as a disc of this radius; 0 means a point
    pub ego_radius: f64,
    pub lateral_samples: usize,
    pub speed_samples: usize,
    /// end times as fractions of the horizon `k * dt`, each in (0, 1]
    pub end_time_fractions: Vec<f64>,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            max_speed: 27.7,
            max_accel: 4.0,
            max_curvature: 0.2,
            clearance_static: 0.1,
            clearance_dynamic: 1.5,
            ego_radius: 0.0,
            lateral_samples: 3,
            speed_samples: 5,
            end_time_fractions: vec![0.5, 0.75, 1.0],
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        let positive = [
            ("planner.max_speed", self.max_speed),
            ("planner.max_accel", self.max_accel),
            ("planner.max_curvature", self.max_curvature),
            ("planner.clearance_static", self.clearance_static),
            ("planner.clearance_dynamic", self.clearance_dynamic),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invariant(name, "must be positive"));
            }
        }
        if self.ego_radius.is_nan() || self.ego_radius < 0.0 {
            return Err(Error::invariant("planner.ego_radius", "must be non-negative"));
        }
        if self.lateral_samples == 0 || self.speed_samples == 0 {
            return Err(Error::invariant("planner.*_samples", "sampling counts must be >= 1"));
        }
        if self.end_time_fractions.is_empty()
            || self
                .end_time_fractions
                .iter()
                .any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return Err(Error::invariant(
                "planner.end_time_fractions",
                "needs at least one fraction in (0, 1]",
            ));
        }
        Ok(())
    }

    /// Lattice end steps for a `k`-step horizon, ascending and deduplicated.
    pub fn end_steps(&self, k: usize) -> Vec<usize> {
        let mut steps: Vec<usize> = self
            .end_time_fractions
            .iter()
            .map(|f| ((f * k as f64).round() as usize).clamp(1, k.max(1)))
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    pub fn end_speeds(&self) -> Vec<f64> {
        evenly_spaced(0.0, self.max_speed, self.speed_samples)
    }

    /// Lateral end offsets relative to the cell center for a cell of width `w`.
    pub fn lateral_offsets(&self, w: f64) -> Vec<f64> {
        evenly_spaced(-w / 4.0, w / 4.0, self.lateral_samples)
    }
}

/// `n` evenly spaced values spanning `[lo, hi]`; a single sample is the midpoint.
fn evenly_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// A sampled trajectory with per-step kinematics, step 0 at the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrajectory {
    pub poses: Vec<Pose>,
    pub speeds: Vec<f64>,
    pub accels: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub cost: f64,
    pub dt: f64,
    pub lateral: QuinticPolynomial,
    pub longitudinal: QuinticPolynomial,
}

impl CandidateTrajectory {
    pub fn horizon_steps(&self) -> usize {
        self.poses.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.horizon_steps() as f64 * self.dt
    }
}

/// Kinematics of one trajectory step.
#[derive(Debug, Clone, Copy)]
struct StepSample {
    pose: Pose,
    speed: f64,
    accel: f64,
    curvature: f64,
    s_dot: f64,
    jerk_sq: f64,
}

#[inline]
fn step_sample(
    path: &ReferencePath,
    lon: &QuinticPolynomial,
    lat: &QuinticPolynomial,
    tau: f64,
) -> Option<StepSample> {
    let [s, s_dot, s_ddot, s_jerk] = lon.eval(tau);
    let [d, d_dot, d_ddot, d_jerk] = lat.eval(tau);
    let frame = path.frame(s);
    let st = FrenetState { s, s_dot, s_ddot, d, d_dot, d_ddot };
    let (vt, vn, at, an) = frenet_components(&frame, &st)?;
    let pos = frame.position + frame.normal * d;
    let speed = vt.hypot(vn);
    let accel = if speed > 1e-9 {
        (vt * at + vn * an) / speed
    } else {
        at.hypot(an)
    };
    let curvature = if speed > CURVATURE_MIN_SPEED {
        (vt * an - vn * at) / (speed * speed * speed)
    } else {
        0.0
    };
    Some(StepSample {
        pose: Pose {
            x: pos.x,
            y: pos.y,
            yaw: crate::geometry::wrap_angle(frame.heading + vn.atan2(vt)),
        },
        speed,
        accel,
        curvature,
        s_dot,
        jerk_sq: s_jerk * s_jerk + d_jerk * d_jerk,
    })
}

#[inline]
fn within_limits(sample: &StepSample, params: &PlannerParams) -> bool {
    sample.speed <= params.max_speed
        && sample.accel.abs() <= params.max_accel
        && sample.curvature.abs() <= params.max_curvature
}

/// One lattice entry before evaluation.
#[derive(Debug, Clone, Copy)]
struct LatticePoint {
    steps: usize,
    end_speed: f64,
    end_offset: f64,
}

fn lattice(goal: &GoalCell, k: usize, params: &PlannerParams) -> Vec<LatticePoint> {
    let mut out = Vec::new();
    let offsets = params.lateral_offsets(goal.w);
    for steps in params.end_steps(k) {
        for end_speed in params.end_speeds() {
            for &off in &offsets {
                out.push(LatticePoint {
                    steps,
                    end_speed,
                    end_offset: goal.d + off,
                });
            }
        }
    }
    out
}

fn polynomials(ego: &FrenetState, goal: &GoalCell, lp: &LatticePoint, dt: f64) -> (QuinticPolynomial, QuinticPolynomial) {
    let t_end = lp.steps as f64 * dt;
    let lon = QuinticPolynomial::new(
        [ego.s, ego.s_dot, ego.s_ddot],
        [goal.s, lp.end_speed, 0.0],
        t_end,
    );
    let lat = QuinticPolynomial::new([ego.d, ego.d_dot, ego.d_ddot], [lp.end_offset, 0.0, 0.0], t_end);
    (lon, lat)
}

/// Outcome of evaluating one lattice point step by step.
enum Evaluation {
    /// never left the forward-only, singularity-free domain
    Valid { feasible: bool },
    Invalid,
}

/// Streams a lattice point without materializing it. `visit` sees each
/// step; returning `false` stops early (reported as infeasible).
fn evaluate(
    path: &ReferencePath,
    lon: &QuinticPolynomial,
    lat: &QuinticPolynomial,
    steps: usize,
    dt: f64,
    params: &PlannerParams,
    mut visit: impl FnMut(usize, &StepSample) -> bool,
) -> Evaluation {
    let mut feasible = true;
    for i in 0..=steps {
        let Some(sample) = step_sample(path, lon, lat, i as f64 * dt) else {
            return Evaluation::Invalid;
        };
        if sample.s_dot < -1e-9 {
            return Evaluation::Invalid;
        }
        if feasible && !within_limits(&sample, params) {
            feasible = false;
        }
        if !visit(i, &sample) {
            return Evaluation::Valid { feasible: false };
        }
    }
    Evaluation::Valid { feasible }
}

fn materialize(
    path: &ReferencePath,
    lon: QuinticPolynomial,
    lat: QuinticPolynomial,
    steps: usize,
    dt: f64,
    end_offset_err: f64,
) -> Option<CandidateTrajectory> {
    let mut traj = CandidateTrajectory {
        poses: Vec::with_capacity(steps + 1),
        speeds: Vec::with_capacity(steps + 1),
        accels: Vec::with_capacity(steps + 1),
        curvatures: Vec::with_capacity(steps + 1),
        cost: 0.0,
        dt,
        lateral: lat,
        longitudinal: lon,
    };
    let mut jerk = 0.0;
    for i in 0..=steps {
        let sample = step_sample(path, &lon, &lat, i as f64 * dt)?;
        if sample.s_dot < -1e-9 {
            return None;
        }
        traj.poses.push(sample.pose);
        traj.speeds.push(sample.speed);
        traj.accels.push(sample.accel);
        traj.curvatures.push(sample.curvature);
        jerk += sample.jerk_sq * dt;
    }
    traj.cost = jerk + steps as f64 * dt + end_offset_err * end_offset_err;
    Some(traj)
}

/// Frenet state of the ego on `path`, from an ego-frame [`EgoState`].
pub fn ego_frenet_state(ego: &EgoState, path: &ReferencePath) -> Result<FrenetState> {
    let heading = Vec2::from_angle(ego.yaw);
    let lateral = heading.perp();
    let cart = CartesianState {
        position: ego.position(),
        velocity: heading * ego.v_long + lateral * ego.v_lat,
        acceleration: heading * ego.a_long + lateral * ego.a_lat,
    };
    path.cartesian_to_frenet(&cart)
}

pub fn build_reference_path(lane: &Lane) -> Result<ReferencePath> {
    ReferencePath::new(&lane.centerline)
}

/// All forward-only lattice trajectories that end inside `goal`, sorted by
/// cost. Feasibility is not applied here.
pub fn sample_candidates(
    path: &ReferencePath,
    ego: &FrenetState,
    goal: &GoalCell,
    horizon_steps: usize,
    dt: f64,
    params: &PlannerParams,
) -> Vec<CandidateTrajectory> {
    if goal.s <= ego.s {
        return Vec::new();
    }
    let mut out: Vec<CandidateTrajectory> = lattice(goal, horizon_steps, params)
        .iter()
        .filter_map(|lp| {
            let (lon, lat) = polynomials(ego, goal, lp, dt);
            let traj = materialize(path, lon, lat, lp.steps, dt, lp.end_offset - goal.d)?;
            let end = traj.poses.last()?.position();
            goal.contains_on(path, end).then_some(traj)
        })
        .collect();
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    out
}

pub fn feasible(traj: &CandidateTrajectory, params: &PlannerParams) -> bool {
    (0..traj.poses.len()).all(|i| {
        traj.speeds[i] <= params.max_speed
            && traj.accels[i].abs() <= params.max_accel
            && traj.curvatures[i].abs() <= params.max_curvature
    })
}

pub fn collision_free(traj: &CandidateTrajectory, obstacles: &ObstacleSet, params: &PlannerParams) -> bool {
    traj.poses.iter().enumerate().all(|(i, pose)| {
        let p = pose.position();
        obstacles.static_clear(p, params) && obstacles.dynamic_clear(i, p, params, None)
    })
}

/// First lattice trajectory to `goal` that is feasible and collision-free.
pub fn find_certificate(
    ego: &FrenetState,
    goal: &GoalCell,
    obstacles: &ObstacleSet,
    path: &ReferencePath,
    k: usize,
    dt: f64,
    params: &PlannerParams,
) -> Option<CandidateTrajectory> {
    if goal.s <= ego.s {
        return None;
    }
    for lp in lattice(goal, k, params) {
        let (lon, lat) = polynomials(ego, goal, &lp, dt);
        let eval = evaluate(path, &lon, &lat, lp.steps, dt, params, |i, smp| {
            within_limits(smp, params)
                && obstacles.static_clear(smp.pose.position(), params)
                && obstacles.dynamic_clear(i, smp.pose.position(), params, None)
        });
        if let Evaluation::Valid { feasible: true } = eval {
            let traj = materialize(path, lon, lat, lp.steps, dt, lp.end_offset - goal.d)?;
            if goal.contains_on(path, traj.poses.last()?.position()) {
                return Some(traj);
            }
        }
    }
    None
}

/// Whether any lattice trajectory reaches `goal` within `k` steps.
///
/// `ego` must be expressed in the same frame as `goal`, `obstacles` and
/// `path`. A Frenet singularity at the ego position makes the goal
/// unreachable.
pub fn goal_reachable(
    ego: &EgoState,
    goal: &GoalCell,
    obstacles: &ObstacleSet,
    path: &ReferencePath,
    k: usize,
    dt: f64,
    params: &PlannerParams,
) -> bool {
    match ego_frenet_state(ego, path) {
        Ok(fs) => find_certificate(&fs, goal, obstacles, path, k, dt, params).is_some(),
        Err(e) => {
            log::debug!("goal at ({:.1}, {:.1}) unreachable: {e}", goal.center.x, goal.center.y);
            false
        }
    }
}

/// Per-goal reachability summary across every actor masking.
///
/// Each feasible, statically clear candidate is tagged with the dynamic
/// obstacles it conflicts with. A goal is reachable under a mask iff some
/// candidate's conflicts are all masked out.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoalConflicts {
    /// reachable with every actor removed
    pub reachable_empty: bool,
    /// reachable with every actor present
    pub reachable_present: bool,
    /// obstacle indices `i` for which some candidate conflicts with `i` only
    pub single_blockers: Vec<usize>,
}

impl GoalConflicts {
    pub fn reachable_without(&self, obstacle: usize) -> bool {
        self.reachable_present || self.single_blockers.binary_search(&obstacle).is_ok()
    }
}

pub fn goal_conflicts(
    ego: &FrenetState,
    goal: &GoalCell,
    obstacles: &ObstacleSet,
    path: &ReferencePath,
    k: usize,
    dt: f64,
    params: &PlannerParams,
) -> GoalConflicts {
    let mut out = GoalConflicts::default();
    if goal.s <= ego.s {
        return out;
    }
    let n_dyn = obstacles.dynamic.len();
    let mut blocked = vec![false; n_dyn];
    for lp in lattice(goal, k, params) {
        let (lon, lat) = polynomials(ego, goal, &lp, dt);
        blocked.iter_mut().for_each(|b| *b = false);
        let mut n_blocked = 0usize;
        let empty_known = out.reachable_empty;
        let known_single = &out.single_blockers;
        let eval = evaluate(path, &lon, &lat, lp.steps, dt, params, |i, smp| {
            if !within_limits(smp, params) || !obstacles.static_clear(smp.pose.position(), params) {
                return false;
            }
            for (j, flag) in blocked.iter_mut().enumerate() {
                if !*flag && !obstacles.dynamic[j].clear_at(i, smp.pose.position(), params) {
                    *flag = true;
                    n_blocked += 1;
                    // nothing left to learn from this candidate
                    if empty_known
                        && (n_blocked >= 2 || known_single.binary_search(&j).is_ok())
                    {
                        return false;
                    }
                }
            }
            true
        });
        if !matches!(eval, Evaluation::Valid { feasible: true }) {
            continue;
        }
        // terminal lands in the cell by construction; keep the check explicit
        let end = step_sample(path, &lon, &lat, lp.steps as f64 * dt).map(|s| s.pose.position());
        if !end.is_some_and(|p| goal.contains_on(path, p)) {
            continue;
        }
        out.reachable_empty = true;
        match n_blocked {
            0 => {
                out.reachable_present = true;
                out.single_blockers.clear();
                return out;
            }
            1 => {
                let j = blocked.iter().position(|b| *b).unwrap();
                if let Err(pos) = out.single_blockers.binary_search(&j) {
                    out.single_blockers.insert(pos, j);
                }
            }
            _ => {}
        }
    }
    out
}
