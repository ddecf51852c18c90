//! Scene model: actors, lanes, the ego track and the JSON scene file.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lerp_angle, wrap_angle, FrameTransform, OrientedBox, Vec2};

/// Step duration used when a scene file omits `dt` (10 Hz logs).
pub const DEFAULT_DT: f64 = 0.1;
/// Speed ceiling applied when validating ego tracks, m/s.
pub const DEFAULT_MAX_SPEED: f64 = 27.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub t: i64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl ActorState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.position(), self.yaw, self.length, self.width)
    }
}

/// Interpolated actor pose at a possibly fractional time index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorPose {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl ActorPose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.position(), self.yaw, self.length, self.width)
    }
}

impl From<ActorState> for ActorPose {
    fn from(s: ActorState) -> Self {
        Self {
            t: s.t as f64,
            x: s.x,
            y: s.y,
            yaw: s.yaw,
            length: s.length,
            width: s.width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrack {
    #[serde(rename = "id", deserialize_with = "id_from_string_or_number")]
    pub actor_id: String,
    pub states: Vec<ActorState>,
}

fn id_from_string_or_number<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Text(String),
        Int(i64),
    }
    Ok(match Id::deserialize(de)? {
        Id::Text(s) => s,
        Id::Int(i) => i.to_string(),
    })
}

impl ActorTrack {
    pub fn first_t(&self) -> i64 {
        self.states.first().map_or(0, |s| s.t)
    }

    pub fn last_t(&self) -> i64 {
        self.states.last().map_or(0, |s| s.t)
    }

    /// State at time `t`, exact when recorded and interpolated otherwise.
    ///
    /// Position is interpolated linearly and heading along the shorter arc.
    pub fn state_at(&self, t: f64) -> Result<ActorPose> {
        let (first, last) = (self.first_t(), self.last_t());
        if self.states.is_empty() || !(t >= first as f64 && t <= last as f64) {
            return Err(Error::OutsideTrack { t, first, last });
        }
        let idx = self.states.partition_point(|s| (s.t as f64) < t);
        let hi = self.states[idx];
        if hi.t as f64 == t || idx == 0 {
            return Ok(hi.into());
        }
        let lo = self.states[idx - 1];
        let frac = (t - lo.t as f64) / (hi.t - lo.t) as f64;
        Ok(ActorPose {
            t,
            x: lo.x + (hi.x - lo.x) * frac,
            y: lo.y + (hi.y - lo.y) * frac,
            yaw: lerp_angle(lo.yaw, hi.yaw, frac),
            length: lo.length + (hi.length - lo.length) * frac,
            width: lo.width + (hi.width - lo.width) * frac,
        })
    }

    /// Like [`state_at`](Self::state_at) but holds the last recorded pose
    /// past the end of the track. `None` before the track starts.
    pub fn state_at_or_hold(&self, t: f64) -> Option<ActorPose> {
        if self.states.is_empty() || t < self.first_t() as f64 {
            return None;
        }
        let last = self.last_t() as f64;
        let mut pose = self.state_at(t.min(last)).ok()?;
        pose.t = t;
        Some(pose)
    }
}

/// Free helper mirroring [`ActorTrack::state_at`].
pub fn state_at(track: &ActorTrack, t: f64) -> Result<ActorPose> {
    track.state_at(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub t: i64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v_long: f64,
    pub v_lat: f64,
    pub a_long: f64,
    pub a_lat: f64,
}

impl EgoState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn speed(&self) -> f64 {
        self.v_long.hypot(self.v_lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaneDirection {
    SameAsEgo,
    Opposing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    #[serde(with = "points")]
    pub centerline: Vec<Vec2>,
    pub width: f64,
    pub direction: LaneDirection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaneMap {
    pub lanes: Vec<Lane>,
    pub boundaries: Vec<Vec<Vec2>>,
}

/// The ground-truth world: lanes, NPC tracks and the ego track.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dt: f64,
    pub actors: Vec<ActorTrack>,
    pub ego: Vec<EgoState>,
    pub lane_map: LaneMap,
}

/// On-disk layout; field order here fixes the canonical serialization.
#[derive(Serialize, Deserialize)]
struct SceneFile {
    #[serde(default = "default_dt")]
    dt: f64,
    lanes: Vec<Lane>,
    #[serde(default, with = "polylines")]
    boundaries: Vec<Vec<Vec2>>,
    #[serde(default)]
    actors: Vec<ActorTrack>,
    ego: Vec<EgoState>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

mod points {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geometry::Vec2;

    pub fn serialize<S: Serializer>(pts: &[Vec2], ser: S) -> Result<S::Ok, S::Error> {
        pts.iter()
            .map(|p| [p.x, p.y])
            .collect::<Vec<_>>()
            .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Vec2>, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(de)?;
        Ok(raw.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
    }
}

mod polylines {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geometry::Vec2;

    pub fn serialize<S: Serializer>(lines: &[Vec<Vec2>], ser: S) -> Result<S::Ok, S::Error> {
        lines
            .iter()
            .map(|l| l.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Vec<Vec2>>, D::Error> {
        let raw = Vec::<Vec<[f64; 2]>>::deserialize(de)?;
        Ok(raw
            .into_iter()
            .map(|l| l.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
            .collect())
    }
}

impl Scene {
    /// Parses and validates a scene document. Headings are wrapped into
    /// `[-π, π)` before validation.
    pub fn from_json(text: &str, context: &str) -> Result<Scene> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| Error::from_json(context, &e))?;
        let mut scene = Scene {
            dt: file.dt,
            actors: file.actors,
            ego: file.ego,
            lane_map: LaneMap {
                lanes: file.lanes,
                boundaries: file.boundaries,
            },
        };
        scene.canonicalize();
        scene.validate(DEFAULT_MAX_SPEED)?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            dt: self.dt,
            lanes: self.lane_map.lanes.clone(),
            boundaries: self.lane_map.boundaries.clone(),
            actors: self.actors.clone(),
            ego: self.ego.clone(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("scene serializes");
        out.push('\n');
        out
    }

    fn canonicalize(&mut self) {
        for track in &mut self.actors {
            for s in &mut track.states {
                s.yaw = wrap_angle(s.yaw);
            }
        }
        for e in &mut self.ego {
            e.yaw = wrap_angle(e.yaw);
        }
    }

    pub fn validate(&self, max_speed: f64) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invariant("dt", "must be a positive number of seconds"));
        }
        if self.ego.is_empty() {
            return Err(Error::invariant("ego", "ego track is empty"));
        }
        for (i, e) in self.ego.iter().enumerate() {
            let vals = [e.x, e.y, e.yaw, e.v_long, e.v_lat, e.a_long, e.a_lat];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::invariant(format!("ego[{i}]"), "non-finite value"));
            }
            if e.speed() > max_speed + 1e-9 {
                return Err(Error::invariant(
                    format!("ego[{i}].v_long"),
                    format!("speed {:.3} exceeds max_speed {max_speed}", e.speed()),
                ));
            }
            if i > 0 && e.t <= self.ego[i - 1].t {
                return Err(Error::invariant(
                    format!("ego[{i}].t"),
                    "time indices must be strictly increasing",
                ));
            }
        }
        let mut seen = HashSet::new();
        for track in &self.actors {
            if !seen.insert(track.actor_id.as_str()) {
                return Err(Error::DuplicateActor(track.actor_id.clone()));
            }
            if track.states.is_empty() {
                return Err(Error::invariant(
                    format!("actors[{}].states", track.actor_id),
                    "track has no states",
                ));
            }
            for (i, s) in track.states.iter().enumerate() {
                let field = |f: &str| format!("actors[{}].states[{i}].{f}", track.actor_id);
                if ![s.x, s.y, s.yaw, s.length, s.width]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(Error::invariant(field("x"), "non-finite value"));
                }
                if s.length <= 0.0 {
                    return Err(Error::invariant(field("length"), "must be positive"));
                }
                if s.width <= 0.0 {
                    return Err(Error::invariant(field("width"), "must be positive"));
                }
                if !(-PI..PI).contains(&s.yaw) {
                    return Err(Error::invariant(field("yaw"), "must lie in [-pi, pi)"));
                }
                if i > 0 && s.t <= track.states[i - 1].t {
                    return Err(Error::invariant(
                        field("t"),
                        "time indices must be strictly increasing",
                    ));
                }
            }
        }
        self.lane_map.validate()
    }

    /// Ego state recorded at time index `t`.
    pub fn ego_at(&self, t: i64) -> Result<&EgoState> {
        self.ego
            .binary_search_by_key(&t, |e| e.t)
            .map(|i| &self.ego[i])
            .map_err(|_| Error::MissingEgoState(t))
    }

    pub fn actor(&self, id: &str) -> Option<&ActorTrack> {
        self.actors.iter().find(|a| a.actor_id == id)
    }

    /// Actors whose track has started by `t`.
    pub fn actors_present_at(&self, t: i64) -> impl Iterator<Item = &ActorTrack> {
        self.actors.iter().filter(move |a| a.first_t() <= t)
    }
}

impl LaneMap {
    pub fn validate(&self) -> Result<()> {
        if !self
            .lanes
            .iter()
            .any(|l| l.direction == LaneDirection::SameAsEgo)
        {
            return Err(Error::invariant(
                "lanes",
                "at least one lane must travel in the ego direction",
            ));
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if lane.centerline.len() < 2 {
                return Err(Error::invariant(
                    format!("lanes[{i}].centerline"),
                    "needs at least two points",
                ));
            }
            if lane.centerline.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invariant(
                    format!("lanes[{i}].centerline"),
                    "consecutive points must be distinct",
                ));
            }
            if !(lane.width.is_finite() && lane.width > 0.0) {
                return Err(Error::invariant(format!("lanes[{i}].width"), "must be positive"));
            }
        }
        Ok(())
    }

    pub fn transformed(&self, tf: &FrameTransform) -> LaneMap {
        LaneMap {
            lanes: self
                .lanes
                .iter()
                .map(|l| Lane {
                    centerline: l.centerline.iter().map(|p| tf.point(*p)).collect(),
                    width: l.width,
                    direction: l.direction,
                })
                .collect(),
            boundaries: self
                .boundaries
                .iter()
                .map(|b| b.iter().map(|p| tf.point(*p)).collect())
                .collect(),
        }
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scene::from_json(&text, &path.display().to_string())
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scene.to_json()).map_err(|e| Error::io(path, e))
}

/// Re-expresses the whole scene in the ego frame at time index `t`: ego at
/// the origin heading along +x. Body-frame ego velocities are unchanged.
pub fn to_ego_frame(scene: &Scene, t: i64) -> Result<Scene> {
    let ego = scene.ego_at(t)?;
    let tf = FrameTransform::at(ego.position(), ego.yaw);
    Ok(transform_scene(scene, &tf))
}

pub fn transform_scene(scene: &Scene, tf: &FrameTransform) -> Scene {
    let actors = scene
        .actors
        .iter()
        .map(|a| ActorTrack {
            actor_id: a.actor_id.clone(),
            states: a
                .states
                .iter()
                .map(|s| {
                    let p = tf.point(s.position());
                    ActorState {
                        x: p.x,
                        y: p.y,
                        yaw: tf.heading(s.yaw),
                        ..*s
                    }
                })
                .collect(),
        })
        .collect();
    let ego = scene
        .ego
        .iter()
        .map(|e| {
            let p = tf.point(e.position());
            EgoState {
                x: p.x,
                y: p.y,
                yaw: tf.heading(e.yaw),
                ..*e
            }
        })
        .collect();
    Scene {
        dt: scene.dt,
        actors,
        ego,
        lane_map: scene.lane_map.transformed(tf),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> &'static str {
        r#"{
            "dt": 0.1,
            "lanes": [{"centerline": [[0, 0], [50, 0]], "width": 3.7, "direction": "same-as-ego"}],
            "boundaries": [],
            "actors": [],
            "ego": [{"t": 0, "x": 0, "y": 0, "yaw": 0, "v_long": 5, "v_lat": 0, "a_long": 0, "a_lat": 0}]
        }"#
    }

    #[test]
    fn minimal_scene_loads() {
        let scene = Scene::from_json(minimal_json(), "inline").unwrap();
        assert_eq!(scene.actors.len(), 0);
        assert_eq!(scene.ego.len(), 1);
    }

    #[test]
    fn duplicate_actor_rejected() {
        let text = r#"{
            "lanes": [{"centerline": [[0, 0], [50, 0]], "width": 3.7, "direction": "same-as-ego"}],
            "actors": [
                {"id": 7, "states": [{"t": 0, "x": 1, "y": 0, "yaw": 0, "length": 4, "width": 2}]},
                {"id": "7", "states": [{"t": 0, "x": 9, "y": 0, "yaw": 0, "length": 4, "width": 2}]}
            ],
            "ego": [{"t": 0, "x": 0, "y": 0, "yaw": 0, "v_long": 5, "v_lat": 0, "a_long": 0, "a_lat": 0}]
        }"#;
        let err = Scene::from_json(text, "inline").unwrap_err();
        assert!(err.to_string().contains("duplicate actor id"), "{err}");
    }

    #[test]
    fn parse_error_carries_position() {
        let err = Scene::from_json("{\n  \"dt\": 0.1,\n  \"lanes\": [oops]\n}", "bad.json")
            .unwrap_err();
        match err {
            Error::Parse { line, context, .. } => {
                assert_eq!(line, 3);
                assert_eq!(context, "bad.json");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn invariant_names_field() {
        let text = minimal_json().replace("\"width\": 3.7", "\"width\": -1");
        let err = Scene::from_json(&text, "inline").unwrap_err();
        assert!(err.to_string().contains("lanes[0].width"), "{err}");
    }

    #[test]
    fn opposing_only_map_rejected() {
        let text = minimal_json().replace("same-as-ego", "opposing");
        assert!(Scene::from_json(&text, "inline").is_err());
    }

    fn track() -> ActorTrack {
        ActorTrack {
            actor_id: "a".into(),
            states: vec![
                ActorState { t: 0, x: 0.0, y: 0.0, yaw: 3.0, length: 4.0, width: 2.0 },
                ActorState { t: 2, x: 2.0, y: 0.0, yaw: -3.0, length: 4.0, width: 2.0 },
            ],
        }
    }

    #[test]
    fn state_at_recorded_and_midpoint() {
        let tr = track();
        let s = tr.state_at(0.0).unwrap();
        assert_eq!(s, ActorPose::from(tr.states[0]));
        let mid = tr.state_at(1.0).unwrap();
        assert_eq!((mid.x, mid.y), (1.0, 0.0));
        // shortest arc from 3.0 to -3.0 passes through ±π
        let expected = wrap_angle(3.0 + (2.0 * PI - 6.0) / 2.0);
        assert!((mid.yaw - expected).abs() < 1e-12);
        assert!(tr.state_at(2.5).is_err());
        assert!(tr.state_at(-0.5).is_err());
    }

    #[test]
    fn hold_last_beyond_track() {
        let tr = track();
        let held = tr.state_at_or_hold(10.0).unwrap();
        assert_eq!((held.x, held.y), (2.0, 0.0));
        assert!(tr.state_at_or_hold(-1.0).is_none());
    }

    #[test]
    fn ego_frame_basic() {
        let mut scene = Scene::from_json(minimal_json(), "inline").unwrap();
        scene.ego[0].x = 10.0;
        scene.ego[0].y = 5.0;
        scene.ego[0].yaw = PI / 2.0;
        scene.actors.push(ActorTrack {
            actor_id: "ahead".into(),
            states: vec![ActorState { t: 0, x: 10.0, y: 8.0, yaw: PI / 2.0, length: 4.0, width: 2.0 }],
        });
        let local = to_ego_frame(&scene, 0).unwrap();
        let e = local.ego[0];
        assert!(e.x.abs() < 1e-12 && e.y.abs() < 1e-12 && e.yaw.abs() < 1e-12);
        let a = local.actors[0].states[0];
        assert!((a.x - 3.0).abs() < 1e-12 && a.y.abs() < 1e-12);
        assert!(to_ego_frame(&scene, 4).is_err());
    }
}
