//! Counterfactual reachability and safety threat indicators.
//!
//! For one time step the engine counts reachable local goals with every
//! actor present (`R`), with every actor removed (`R∅`) and with each
//! actor `i` removed in turn (`R/i`):
//!
//! ```text
//! scene STI   = (|R∅| - |R|)   / |R∅|
//! actor STI_i = (|R/i| - |R|)  / |R∅|
//! ```
//!
//! Actor values are normalized by `|R∅|`, not by `|R/i|`, so they are
//! directly comparable with the scene value and need not sum to it.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FrameTransform, OrientedBox};
use crate::grid::{candidate_goals, discretize_with_paths, GoalSet, GridConfig, ReachBudget};
use crate::planner::{
    ego_frenet_state, find_certificate, goal_conflicts, goal_reachable, CandidateTrajectory, DynamicObstacle, FrenetState, GoalConflicts,
    ObstacleSet, PlannerParams, ReferencePath,
};
use crate::scene::{EgoState, LaneMap, Scene};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActorMask {
    AllPresent,
    AllRemoved,
    RemoveOne(String),
}

/// Engine settings shared by every reachability query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReachConfig {
    pub planner: PlannerParams,
    pub grid: GridConfig,
}

/// Everything one query needs, expressed in the ego frame at `t`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: i64,
    pub k: usize,
    pub dt: f64,
    pub ego: EgoState,
    pub lane_map: LaneMap,
    /// one entry per actor present at `t`, in scene order
    pub obstacles: ObstacleSet,
}

impl Snapshot {
    /// Builds the ego-frame view of `scene` at `t` with a `k`-step horizon.
    /// Actor poses beyond the end of a track hold the last recorded pose.
    pub fn from_scene(scene: &Scene, t: i64, k: usize) -> Result<Snapshot> {
        let actors = scene
            .actors_present_at(t)
            .map(|track| {
                let boxes = (0..=k)
                    .map(|j| {
                        track
                            .state_at_or_hold((t + j as i64) as f64)
                            .expect("track started by t")
                            .footprint()
                    })
                    .collect();
                (track.actor_id.clone(), boxes)
            })
            .collect();
        Self::with_actor_boxes(scene, t, k, actors)
    }

    /// Builds the view from world-frame actor boxes for steps `0..=k`,
    /// taking the ego state and lane map from `scene`.
    pub fn with_actor_boxes(
        scene: &Scene,
        t: i64,
        k: usize,
        actors: Vec<(String, Vec<OrientedBox>)>,
    ) -> Result<Snapshot> {
        let ego = scene.ego_at(t)?;
        Ok(Self::from_world(t, k, scene.dt, ego, &scene.lane_map, actors))
    }

    /// Builds the view from a world-frame ego state, lane map and actor
    /// boxes for steps `0..=k`.
    pub fn from_world(
        t: i64,
        k: usize,
        dt: f64,
        ego: &EgoState,
        lane_map: &LaneMap,
        actors: Vec<(String, Vec<OrientedBox>)>,
    ) -> Snapshot {
        let tf = FrameTransform::at(ego.position(), ego.yaw);
        let dynamic = actors
            .into_iter()
            .map(|(id, boxes)| {
                let boxes = boxes
                    .into_iter()
                    .map(|b| OrientedBox {
                        center: tf.point(b.center),
                        yaw: tf.heading(b.yaw),
                        ..b
                    })
                    .collect();
                DynamicObstacle::new(id, boxes)
            })
            .collect();
        let lane_map = lane_map.transformed(&tf);
        let boundaries = lane_map.boundaries.clone();
        Snapshot {
            t,
            k,
            dt,
            ego: EgoState {
                x: 0.0,
                y: 0.0,
                yaw: 0.0,
                ..*ego
            },
            lane_map,
            obstacles: ObstacleSet::new(dynamic, boundaries),
        }
    }

    pub fn actor_ids(&self) -> impl Iterator<Item = &str> {
        self.obstacles.dynamic.iter().map(|d| d.id.as_str())
    }

    fn masked_obstacles(&self, mask: &ActorMask) -> Result<ObstacleSet> {
        match mask {
            ActorMask::AllPresent => Ok(self.obstacles.clone()),
            ActorMask::AllRemoved => Ok(self.obstacles.filtered(|_| false)),
            ActorMask::RemoveOne(id) => {
                if !self.actor_ids().any(|a| a == id) {
                    return Err(Error::UnknownActor(id.clone()));
                }
                Ok(self.obstacles.filtered(|d| &d.id != id))
            }
        }
    }
}

/// Goals and reference paths prepared once per (t, k) and shared by every
/// counterfactual pass.
pub struct PreparedQuery<'a> {
    snapshot: &'a Snapshot,
    params: &'a PlannerParams,
    goals: Arc<GoalSet>,
    paths: Vec<Option<ReferencePath>>,
    ego_frenet: Vec<Option<FrenetState>>,
}

impl<'a> PreparedQuery<'a> {
    pub fn new(snapshot: &'a Snapshot, cfg: &'a ReachConfig) -> Self {
        let (cells, paths) =
            discretize_with_paths(&snapshot.lane_map, cfg.grid.cell_length, cfg.grid.cell_width);
        let budget = ReachBudget {
            k: snapshot.k,
            dt: snapshot.dt,
            v_ego: snapshot.ego.speed(),
            a_max: cfg.planner.max_accel,
            d_max: cfg.grid.d_max,
            rule: cfg.grid.threshold_rule,
        };
        let goals = Arc::new(candidate_goals(&cells, &snapshot.ego, &budget));
        let ego_frenet = paths
            .iter()
            .map(|p| {
                p.as_ref().and_then(|path| match ego_frenet_state(&snapshot.ego, path) {
                    Ok(fs) => Some(fs),
                    Err(e) => {
                        log::debug!("ego projection failed: {e}");
                        None
                    }
                })
            })
            .collect();
        Self {
            snapshot,
            params: &cfg.planner,
            goals,
            paths,
            ego_frenet,
        }
    }

    pub fn goals(&self) -> &Arc<GoalSet> {
        &self.goals
    }

    /// One counterfactual pass: each goal queried against the masked
    /// obstacle set.
    pub fn reachable(&self, mask: &ActorMask) -> Result<ReachabilityResult> {
        let obstacles = self.snapshot.masked_obstacles(mask)?;
        let snap = self.snapshot;
        let reachable = self
            .goals
            .cells
            .par_iter()
            .map(|goal| match &self.paths[goal.lane_index] {
                Some(path) => goal_reachable(&snap.ego, goal, &obstacles, path, snap.k, snap.dt, self.params),
                None => false,
            })
            .collect();
        Ok(ReachabilityResult {
            goals: Arc::clone(&self.goals),
            reachable,
            mask: mask.clone(),
            t: snap.t,
            k: snap.k,
        })
    }

    /// The trajectory certifying each goal under `mask`, if any.
    pub fn certificates(&self, mask: &ActorMask) -> Result<Vec<Option<CandidateTrajectory>>> {
        let obstacles = self.snapshot.masked_obstacles(mask)?;
        let snap = self.snapshot;
        Ok(self
            .goals
            .cells
            .par_iter()
            .map(|goal| match (&self.paths[goal.lane_index], &self.ego_frenet[goal.lane_index]) {
                (Some(path), Some(fs)) => {
                    find_certificate(fs, goal, &obstacles, path, snap.k, snap.dt, self.params)
                }
                _ => None,
            })
            .collect())
    }

    /// Conflict summaries for every goal, covering all masks at once.
    pub fn conflicts(&self) -> Vec<GoalConflicts> {
        let snap = self.snapshot;
        self.goals
            .cells
            .par_iter()
            .map(|goal| {
                match (&self.paths[goal.lane_index], &self.ego_frenet[goal.lane_index]) {
                    (Some(path), Some(fs)) => {
                        goal_conflicts(fs, goal, &snap.obstacles, path, snap.k, snap.dt, self.params)
                    }
                    _ => GoalConflicts::default(),
                }
            })
            .collect()
    }
}

/// Which goals of a shared goal set are reachable under one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityResult {
    pub goals: Arc<GoalSet>,
    pub reachable: Vec<bool>,
    pub mask: ActorMask,
    pub t: i64,
    pub k: usize,
}

impl ReachabilityResult {
    pub fn count(&self) -> usize {
        self.reachable.iter().filter(|r| **r).count()
    }

    /// No goals to reach at all.
    pub fn is_empty_goal_set(&self) -> bool {
        self.goals.is_empty()
    }

    fn comparable(&self, other: &ReachabilityResult) -> Result<()> {
        if self.t != other.t || self.k != other.k {
            return Err(Error::MismatchedGoals(format!(
                "(t, k) = ({}, {}) vs ({}, {})",
                self.t, self.k, other.t, other.k
            )));
        }
        if !Arc::ptr_eq(&self.goals, &other.goals) && self.goals != other.goals {
            return Err(Error::MismatchedGoals("goal sets differ".into()));
        }
        if self.reachable.len() != self.goals.len() || other.reachable.len() != other.goals.len() {
            return Err(Error::MismatchedGoals("result length differs from goal count".into()));
        }
        Ok(())
    }
}

/// Reachable goals of `scene` at `t` under `mask`, one planner query per goal.
pub fn reachable_set(
    scene: &Scene,
    t: i64,
    k: usize,
    mask: &ActorMask,
    cfg: &ReachConfig,
) -> Result<ReachabilityResult> {
    let snapshot = Snapshot::from_scene(scene, t, k)?;
    PreparedQuery::new(&snapshot, cfg).reachable(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSti {
    pub value: f64,
    /// `|R∅| = 0`: nothing is reachable even in the empty world
    pub degenerate: bool,
}

pub fn scene_sti(r_present: &ReachabilityResult, r_empty: &ReachabilityResult) -> Result<SceneSti> {
    r_present.comparable(r_empty)?;
    Ok(scene_sti_from_counts(r_present.count(), r_empty.count()))
}

pub fn scene_sti_from_counts(present: usize, empty: usize) -> SceneSti {
    if empty == 0 {
        return SceneSti { value: 0.0, degenerate: true };
    }
    let reduced = empty.saturating_sub(present);
    SceneSti {
        value: reduced as f64 / empty as f64,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorSti {
    pub value: f64,
    /// inputs violated `R ⊆ R/i ⊆ R∅` and the value was clamped
    pub clamped: bool,
}

pub fn actor_sti(
    r_present: &ReachabilityResult,
    r_without: &ReachabilityResult,
    r_empty: &ReachabilityResult,
) -> Result<ActorSti> {
    r_present.comparable(r_without)?;
    r_present.comparable(r_empty)?;
    Ok(actor_sti_from_counts(r_present.count(), r_without.count(), r_empty.count()))
}

pub fn actor_sti_from_counts(present: usize, without: usize, empty: usize) -> ActorSti {
    if empty == 0 {
        return ActorSti { value: 0.0, clamped: false };
    }
    let clamped = without < present || without > empty;
    let gain = without.clamp(present, empty.max(present)) - present;
    ActorSti {
        value: (gain as f64 / empty as f64).min(1.0),
        clamped,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StiCounts {
    pub present: usize,
    pub empty: usize,
    pub without: BTreeMap<String, usize>,
}

/// STI values for one time step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StiReport {
    pub t: i64,
    pub scene_sti: f64,
    pub degenerate: bool,
    pub actors: BTreeMap<String, f64>,
    pub counts: StiCounts,
    pub goals: usize,
    /// set when the step could not be analyzed; all values are then zero
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<String>,
}

/// The N + 2 reachability results behind one report.
#[derive(Debug, Clone)]
pub struct StiStep {
    pub report: StiReport,
    pub present: ReachabilityResult,
    pub empty: ReachabilityResult,
    pub without: Vec<ReachabilityResult>,
}

impl StiStep {
    /// Counterfactual passes represented: present, empty, one per actor.
    pub fn passes(&self) -> usize {
        2 + self.without.len()
    }
}

/// Evaluates every mask for one snapshot, sharing candidate evaluation
/// across masks.
pub fn sti_step(snapshot: &Snapshot, cfg: &ReachConfig) -> StiStep {
    let query = PreparedQuery::new(snapshot, cfg);
    let conflicts = query.conflicts();
    let make = |mask: ActorMask, reachable: Vec<bool>| ReachabilityResult {
        goals: Arc::clone(query.goals()),
        reachable,
        mask,
        t: snapshot.t,
        k: snapshot.k,
    };
    let present = make(ActorMask::AllPresent, conflicts.iter().map(|c| c.reachable_present).collect());
    let empty = make(ActorMask::AllRemoved, conflicts.iter().map(|c| c.reachable_empty).collect());
    let without: Vec<ReachabilityResult> = snapshot
        .obstacles
        .dynamic
        .iter()
        .enumerate()
        .map(|(i, d)| {
            make(
                ActorMask::RemoveOne(d.id.clone()),
                conflicts.iter().map(|c| c.reachable_without(i)).collect(),
            )
        })
        .collect();
    let report = assemble_report(snapshot.t, &present, &empty, &without);
    StiStep { report, present, empty, without }
}

/// Builds a report from already computed reachability results.
pub fn assemble_report(
    t: i64,
    present: &ReachabilityResult,
    empty: &ReachabilityResult,
    without: &[ReachabilityResult],
) -> StiReport {
    let (n_present, n_empty) = (present.count(), empty.count());
    let scene = scene_sti_from_counts(n_present, n_empty);
    let mut report = StiReport {
        t,
        scene_sti: scene.value,
        degenerate: scene.degenerate,
        goals: present.goals.len(),
        counts: StiCounts {
            present: n_present,
            empty: n_empty,
            without: BTreeMap::new(),
        },
        ..Default::default()
    };
    for r in without {
        let ActorMask::RemoveOne(id) = &r.mask else { continue };
        let n = r.count();
        let sti = actor_sti_from_counts(n_present, n, n_empty);
        if sti.clamped {
            log::warn!("actor {id} at t={t}: reachability not monotone, value clamped");
        }
        report.actors.insert(id.clone(), sti.value);
        report.counts.without.insert(id.clone(), n);
    }
    report
}

/// Per-step STI over every ego time step of `scene`. Steps that fail are
/// reported as gaps instead of aborting the profile.
pub fn sti_profile(scene: &Scene, k: usize, cfg: &ReachConfig) -> Vec<StiReport> {
    scene
        .ego
        .iter()
        .map(|e| match Snapshot::from_scene(scene, e.t, k) {
            Ok(snap) => sti_step(&snap, cfg).report,
            Err(err) => StiReport {
                t: e.t,
                gap: Some(err.to_string()),
                ..Default::default()
            },
        })
        .collect()
}
