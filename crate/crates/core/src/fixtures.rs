//! Deterministic scenes used by tests, benchmarks and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::planner::{QuinticPolynomial, ReferencePath};
use crate::scene::{ActorState, ActorTrack, EgoState, Lane, LaneDirection, LaneMap, Scene};

pub const LANE_WIDTH: f64 = 3.7;
pub const CAR_LENGTH: f64 = 4.5;
pub const CAR_WIDTH: f64 = 2.0;

/// Straight parallel same-direction lanes along +x, lane 0 at y = 0 and
/// further lanes to the left, with outer road boundaries.
pub fn straight_road(lanes: usize, lane_width: f64, x_start: f64, x_end: f64) -> LaneMap {
    let lanes_vec = (0..lanes)
        .map(|i| Lane {
            centerline: vec![
                Vec2::new(x_start, i as f64 * lane_width),
                Vec2::new(x_end, i as f64 * lane_width),
            ],
            width: lane_width,
            direction: LaneDirection::SameAsEgo,
        })
        .collect();
    let low = -lane_width / 2.0;
    let high = (lanes as f64 - 0.5) * lane_width;
    LaneMap {
        lanes: lanes_vec,
        boundaries: vec![
            vec![Vec2::new(x_start, low), Vec2::new(x_end, low)],
            vec![Vec2::new(x_start, high), Vec2::new(x_end, high)],
        ],
    }
}

pub fn cruising_ego(t: i64, x: f64, y: f64, v: f64) -> EgoState {
    EgoState {
        t,
        x,
        y,
        yaw: 0.0,
        v_long: v,
        v_lat: 0.0,
        a_long: 0.0,
        a_lat: 0.0,
    }
}

/// Track of a car moving at constant speed along +x that shifts laterally
/// from `y0` to `y1` between steps `shift_start` and `shift_start + shift_steps`.
#[allow(clippy::too_many_arguments)]
pub fn lane_change_track(
    id: &str,
    x0: f64,
    y0: f64,
    y1: f64,
    speed: f64,
    shift_start: i64,
    shift_steps: i64,
    steps: i64,
    dt: f64,
) -> ActorTrack {
    let duration = (shift_steps.max(1)) as f64 * dt;
    let lateral = QuinticPolynomial::new([y0, 0.0, 0.0], [y1, 0.0, 0.0], duration);
    let states = (0..=steps)
        .map(|t| {
            let x = x0 + speed * t as f64 * dt;
            let tau = ((t - shift_start) as f64 * dt).clamp(0.0, duration);
            let [y, vy, ..] = lateral.eval(tau);
            let vy = if t > shift_start && t < shift_start + shift_steps { vy } else { 0.0 };
            ActorState {
                t,
                x,
                y,
                yaw: vy.atan2(speed.max(1e-9)),
                length: CAR_LENGTH,
                width: CAR_WIDTH,
            }
        })
        .collect();
    ActorTrack {
        actor_id: id.to_string(),
        states,
    }
}

/// Geometry of the two-actor cut-in example: two lanes, twelve forward
/// goals, a left-lane actor merging ahead of the ego and a right-lane
/// actor driving ahead of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkedExample {
    /// x where the mapped lanes begin, ahead of the ego at the origin
    pub lane_start: f64,
    pub ego_speed: f64,
    pub ego_accel: f64,
    pub top_x: f64,
    pub top_speed: f64,
    pub top_shift_start: i64,
    pub top_shift_steps: i64,
    pub bottom_x: f64,
    pub bottom_speed: f64,
}

impl Default for WorkedExample {
    fn default() -> Self {
        Self {
            lane_start: 7.25,
            ego_speed: 7.25,
            ego_accel: 1.5,
            top_x: 6.0,
            top_speed: 3.5,
            top_shift_start: 10,
            top_shift_steps: 20,
            bottom_x: 19.0,
            bottom_speed: 4.5,
        }
    }
}

impl WorkedExample {
    pub const K: usize = 30;

    pub fn scene(&self) -> Scene {
        let dt = 0.1;
        let steps = Self::K as i64;
        Scene {
            dt,
            actors: vec![
                lane_change_track(
                    "top",
                    self.top_x,
                    LANE_WIDTH,
                    0.0,
                    self.top_speed,
                    self.top_shift_start,
                    self.top_shift_steps,
                    steps,
                    dt,
                ),
                lane_change_track("bottom", self.bottom_x, 0.0, 0.0, self.bottom_speed, 0, 1, steps, dt),
            ],
            ego: vec![EgoState {
                a_long: self.ego_accel,
                ..cruising_ego(0, 0.0, 0.0, self.ego_speed)
            }],
            // six cells per lane
            lane_map: straight_road(2, LANE_WIDTH, self.lane_start, self.lane_start + 27.0),
        }
    }
}

pub fn worked_example() -> Scene {
    WorkedExample::default().scene()
}

/// Parallel lanes offset to the left of `reference`, which becomes lane 0,
/// with boundaries along the outer edges.
pub fn parallel_lanes(reference: &[Vec2], lanes: usize, lane_width: f64) -> LaneMap {
    let path = ReferencePath::new(reference).expect("non-degenerate reference");
    let n = (path.total_length() / 2.0).ceil().max(1.0) as usize;
    let offset = |d: f64| -> Vec<Vec2> {
        (0..=n)
            .map(|i| {
                let f = path.frame(path.total_length() * i as f64 / n as f64);
                f.position + f.normal * d
            })
            .collect()
    };
    LaneMap {
        lanes: (0..lanes)
            .map(|i| Lane {
                centerline: offset(i as f64 * lane_width),
                width: lane_width,
                direction: LaneDirection::SameAsEgo,
            })
            .collect(),
        boundaries: vec![
            offset(-lane_width / 2.0),
            offset((lanes as f64 - 0.5) * lane_width),
        ],
    }
}

/// Circular arc of `length` metres starting at the origin heading +x;
/// positive radius turns left.
pub fn arc(radius: f64, length: f64, spacing: f64) -> Vec<Vec2> {
    let n = (length / spacing).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let theta = length * i as f64 / n as f64 / radius;
            Vec2::new(radius * theta.sin(), radius * (1.0 - theta.cos()))
        })
        .collect()
}

/// Track following `path` at constant arc-length speed, shifting its
/// lateral offset from `d0` to `d1` over `shift_steps` steps.
#[allow(clippy::too_many_arguments)]
pub fn frenet_track(
    id: &str,
    path: &ReferencePath,
    s0: f64,
    d0: f64,
    d1: f64,
    speed: f64,
    shift_start: i64,
    shift_steps: i64,
    first: i64,
    last: i64,
    dt: f64,
) -> ActorTrack {
    let duration = shift_steps.max(1) as f64 * dt;
    let lateral = QuinticPolynomial::new([d0, 0.0, 0.0], [d1, 0.0, 0.0], duration);
    let states = (first..=last)
        .map(|t| {
            let s = s0 + speed * (t - first) as f64 * dt;
            let tau = ((t - shift_start) as f64 * dt).clamp(0.0, duration);
            let [d, dd, ..] = lateral.eval(tau);
            let moving = t > shift_start && t < shift_start + shift_steps;
            let f = path.frame(s);
            let p = f.position + f.normal * d;
            let slip = if moving { dd.atan2(speed.max(1e-9)) } else { 0.0 };
            ActorState {
                t,
                x: p.x,
                y: p.y,
                yaw: crate::geometry::wrap_angle(f.heading + slip),
                length: CAR_LENGTH,
                width: CAR_WIDTH,
            }
        })
        .collect();
    ActorTrack {
        actor_id: id.to_string(),
        states,
    }
}

/// Ego track following lane 0 of `path` at constant speed.
pub fn ego_track(path: &ReferencePath, s0: f64, speed: f64, steps: i64, dt: f64) -> Vec<EgoState> {
    (0..=steps)
        .map(|t| {
            let f = path.frame(s0 + speed * t as f64 * dt);
            EgoState {
                t,
                x: f.position.x,
                y: f.position.y,
                yaw: f.heading,
                v_long: speed,
                v_lat: 0.0,
                a_long: 0.0,
                a_lat: 0.0,
            }
        })
        .collect()
}

/// Random scene: 1 to 3 lanes, straight or curved, 1 to 8 actors, some
/// changing lanes, some appearing late or ending early. Deterministic in `seed`.
pub fn random_scene(seed: u64, ego_steps: i64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 0.1;
    let lanes = rng.gen_range(1..=3usize);
    let width = rng.gen_range(3.2..3.9);
    let length = 130.0;
    let reference = if rng.gen_bool(0.4) {
        let radius = rng.gen_range(60.0..250.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        arc(radius, length, 2.0)
    } else {
        vec![Vec2::new(0.0, 0.0), Vec2::new(length, 0.0)]
    };
    let lane_map = parallel_lanes(&reference, lanes, width);
    let path = ReferencePath::new(&lane_map.lanes[0].centerline).expect("lane 0");
    let ego_speed = rng.gen_range(0.0..18.0);
    let ego = ego_track(&path, 10.0, ego_speed, ego_steps, dt);
    let horizon = ego_steps + 30;
    let n_actors = rng.gen_range(1..=8usize);
    let actors = (0..n_actors)
        .map(|i| {
            let lane = rng.gen_range(0..lanes);
            let target = if lanes > 1 && rng.gen_bool(0.3) {
                if lane == 0 { 1 } else { lane - 1 }
            } else {
                lane
            };
            let s0 = rng.gen_range(0.0..100.0);
            let speed = rng.gen_range(0.0..16.0);
            let first = if rng.gen_bool(0.2) { rng.gen_range(0..=ego_steps) } else { 0 };
            let last = if rng.gen_bool(0.2) { rng.gen_range(first..=horizon) } else { horizon };
            frenet_track(
                &format!("a{i}"),
                &path,
                s0,
                lane as f64 * width,
                target as f64 * width,
                speed,
                first + rng.gen_range(0..20),
                rng.gen_range(10..30),
                first,
                last,
                dt,
            )
        })
        .collect();
    Scene {
        dt,
        actors,
        ego,
        lane_map,
    }
}

/// Straight-road scene whose actors all move at constant velocity for the
/// whole span, so a constant-velocity predictor is exact.
pub fn constant_velocity_scene(seed: u64, ego_steps: i64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 0.1;
    let lanes = rng.gen_range(1..=3usize);
    let lane_map = straight_road(lanes, LANE_WIDTH, -10.0, 130.0);
    let path = ReferencePath::new(&lane_map.lanes[0].centerline).expect("lane 0");
    let ego_speed = rng.gen_range(2.0..15.0);
    let ego = ego_track(&path, 10.0, ego_speed, ego_steps, dt);
    let horizon = ego_steps + 30;
    let actors = (0..rng.gen_range(1..=6usize))
        .map(|i| {
            let d = rng.gen_range(0..lanes) as f64 * LANE_WIDTH;
            let s0 = rng.gen_range(15.0..80.0);
            frenet_track(&format!("a{i}"), &path, s0, d, d, rng.gen_range(0.0..12.0), 0, 1, 0, horizon, dt)
        })
        .collect();
    Scene {
        dt,
        actors,
        ego,
        lane_map,
    }
}

/// Three lanes of 44 cells each and ten actors: 132 goals under a 200 m
/// distance budget.
pub fn bench_scene() -> Scene {
    let dt = 0.1;
    let lane_map = straight_road(3, LANE_WIDTH, 0.5, 0.5 + 44.0 * 4.5);
    let path = ReferencePath::new(&lane_map.lanes[0].centerline).expect("lane 0");
    let mut rng = ChaCha8Rng::seed_from_u64(132);
    let actors = (0..10)
        .map(|i| {
            let d = (i % 3) as f64 * LANE_WIDTH;
            let s0 = 8.0 + 18.0 * i as f64 + rng.gen_range(0.0..6.0);
            frenet_track(&format!("a{i}"), &path, s0, d, d, rng.gen_range(4.0..12.0), 0, 1, 0, 30, dt)
        })
        .collect();
    Scene {
        dt,
        actors,
        ego: vec![cruising_ego(0, 0.0, 0.0, 12.0)],
        lane_map,
    }
}
