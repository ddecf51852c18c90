use crate::geometry::{point_segment_distance, OrientedBox, Vec2};

use super::PlannerParams;

/// One NPC footprint per horizon step, index 0 at the query time.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicObstacle {
    pub id: String,
    pub boxes: Vec<OrientedBox>,
    radii: Vec<f64>,
}

impl DynamicObstacle {
    pub fn new(id: impl Into<String>, boxes: Vec<OrientedBox>) -> Self {
        let radii = boxes.iter().map(OrientedBox::bounding_radius).collect();
        Self {
            id: id.into(),
            boxes,
            radii,
        }
    }

    /// Footprint at `step`, holding the last entry past the end.
    pub fn box_at(&self, step: usize) -> Option<&OrientedBox> {
        self.boxes.get(step.min(self.boxes.len().saturating_sub(1)))
    }

    #[inline]
    pub fn clear_at(&self, step: usize, p: Vec2, params: &PlannerParams) -> bool {
        if self.boxes.is_empty() {
            return true;
        }
        let i = step.min(self.boxes.len() - 1);
        let b = &self.boxes[i];
        let required = params.clearance_dynamic + params.ego_radius;
        // circumscribed-circle shortcut before the exact test
        if p.dist(b.center) - self.radii[i] >= required {
            return true;
        }
        b.distance_to_point(p) >= required
    }
}

/// Everything the ego must keep clear of during one reachability query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObstacleSet {
    pub dynamic: Vec<DynamicObstacle>,
    pub boundaries: Vec<Vec<Vec2>>,
    segments: Vec<(Vec2, Vec2)>,
}

impl ObstacleSet {
    pub fn new(dynamic: Vec<DynamicObstacle>, boundaries: Vec<Vec<Vec2>>) -> Self {
        let segments = boundaries
            .iter()
            .flat_map(|line| line.windows(2).map(|w| (w[0], w[1])))
            .collect();
        Self {
            dynamic,
            boundaries,
            segments,
        }
    }

    /// Copy keeping only the dynamic obstacles accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&DynamicObstacle) -> bool) -> Self {
        Self {
            dynamic: self.dynamic.iter().filter(|d| keep(d)).cloned().collect(),
            boundaries: self.boundaries.clone(),
            segments: self.segments.clone(),
        }
    }

    #[inline]
    pub fn static_clear(&self, p: Vec2, params: &PlannerParams) -> bool {
        let required = params.clearance_static + params.ego_radius;
        self.segments.iter().all(|&(a, b)| {
            // bounding-box shortcut
            if p.x + required < a.x.min(b.x)
                || p.x - required > a.x.max(b.x)
                || p.y + required < a.y.min(b.y)
                || p.y - required > a.y.max(b.y)
            {
                return true;
            }
            point_segment_distance(p, a, b) >= required
        })
    }

    #[inline]
    pub fn dynamic_clear(&self, step: usize, p: Vec2, params: &PlannerParams, skip: Option<usize>) -> bool {
        self.dynamic
            .iter()
            .enumerate()
            .all(|(j, d)| Some(j) == skip || d.clear_at(step, p, params))
    }
}
