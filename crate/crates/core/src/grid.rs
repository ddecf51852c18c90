//! Drivable-area discretization and candidate local goals.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::planner::ReferencePath;
use crate::scene::{EgoState, LaneDirection, LaneMap};

/// One drivable cell; its center is a candidate local goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalCell {
    pub center: Vec2,
    /// longitudinal extent along the lane, m
    pub l: f64,
    /// lateral extent, m
    pub w: f64,
    pub lane_index: usize,
    /// arc length of the center along the owning lane
    pub s: f64,
    /// lateral offset of the center from the owning lane's centerline
    pub d: f64,
}

impl GoalCell {
    /// Whether `p` falls inside the cell footprint measured in the Frenet
    /// frame of the owning lane's `path`.
    pub fn contains_on(&self, path: &ReferencePath, p: Vec2) -> bool {
        let (s, d) = path.project(p);
        (s - self.s).abs() <= 0.5 * self.l + 1e-9 && (d - self.d).abs() <= 0.5 * self.w + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// `max(d, d_max)`: the look-forward distance is a floor
    #[default]
    Max,
    /// `min(d, d_max)`: the look-forward distance is a cap
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub cell_length: f64,
    pub cell_width: f64,
    pub d_max: f64,
    pub threshold_rule: ThresholdRule,
    /// time budget in steps
    pub k: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_length: 4.5,
            cell_width: 3.7,
            d_max: 120.0,
            threshold_rule: ThresholdRule::Max,
            k: 30,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> crate::Result<()> {
        for (field, v) in [
            ("grid.cell_length", self.cell_length),
            ("grid.cell_width", self.cell_width),
            ("grid.d_max", self.d_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::invariant(field, format!("must be positive, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(crate::Error::invariant("grid.k", "time budget must be at least one step"));
        }
        Ok(())
    }
}

/// Kinematic budget bounding how far goals may lie.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachBudget {
    pub k: usize,
    pub dt: f64,
    pub v_ego: f64,
    pub a_max: f64,
    pub d_max: f64,
    pub rule: ThresholdRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    pub cells: Vec<GoalCell>,
    pub k: usize,
    pub d_threshold: f64,
}

impl GoalSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Tiles every same-direction lane with cells of pitch `l` along the
/// centerline. Each lane contributes one lateral column of width
/// `min(w, lane width)`. Lanes shorter than `l` contribute nothing.
pub fn discretize_drivable(lane_map: &LaneMap, l: f64, w: f64) -> Vec<GoalCell> {
    discretize_with_paths(lane_map, l, w).0
}

/// As [`discretize_drivable`], also returning the reference path of every
/// lane (`None` for opposing or degenerate lanes).
pub fn discretize_with_paths(
    lane_map: &LaneMap,
    l: f64,
    w: f64,
) -> (Vec<GoalCell>, Vec<Option<ReferencePath>>) {
    let mut cells = Vec::new();
    let mut paths = Vec::with_capacity(lane_map.lanes.len());
    for (lane_index, lane) in lane_map.lanes.iter().enumerate() {
        if lane.direction != LaneDirection::SameAsEgo {
            paths.push(None);
            continue;
        }
        let Ok(path) = ReferencePath::new(&lane.centerline) else {
            paths.push(None);
            continue;
        };
        let n = (path.total_length() / l + 1e-9).floor() as usize;
        let width = w.min(lane.width);
        for i in 0..n {
            let s = (i as f64 + 0.5) * l;
            cells.push(GoalCell {
                center: path.position(s),
                l,
                w: width,
                lane_index,
                s,
                d: 0.0,
            });
        }
        paths.push(Some(path));
    }
    (cells, paths)
}

/// Kinematic reach `d = v T + a_max T² / 2` over `T = k dt`, combined with
/// `d_max` by the configured rule.
pub fn max_reach_distance(budget: &ReachBudget) -> f64 {
    let horizon = budget.k as f64 * budget.dt;
    let d = budget.v_ego * horizon + 0.5 * budget.a_max * horizon * horizon;
    match budget.rule {
        ThresholdRule::Max => d.max(budget.d_max),
        ThresholdRule::Min => d.min(budget.d_max),
    }
}

/// Cells strictly ahead of the ego and within the distance threshold.
pub fn candidate_goals(cells: &[GoalCell], ego: &EgoState, budget: &ReachBudget) -> GoalSet {
    let d_threshold = max_reach_distance(budget);
    let heading = Vec2::from_angle(ego.yaw);
    let origin = ego.position();
    let cells = cells
        .iter()
        .filter(|c| {
            let rel = c.center - origin;
            rel.dot(heading) > 0.0 && rel.norm() <= d_threshold
        })
        .copied()
        .collect();
    GoalSet {
        cells,
        k: budget.k,
        d_threshold,
    }
}
