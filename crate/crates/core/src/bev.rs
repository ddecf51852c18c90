//! Bird's-eye-view training samples: stacked binary drivability frames,
//! the ego feature vector and the reachable-goal indicator label.
//!
//! Image coordinates: `X` is lateral (positive to the ego's right), `Y` is
//! forward, both in metres in the ego frame at the sample time. Row `x`
//! indexes `X` and column `y` indexes `Y`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, OrientedBox, Vec2};
use crate::reach::{ActorMask, PreparedQuery, ReachConfig, ReachabilityResult, Snapshot};
use crate::scene::{LaneDirection, LaneMap, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BevConfig {
    /// image rows
    pub h: usize,
    /// image columns
    pub w: usize,
    /// lateral half-extent, m
    pub r_x: f64,
    /// longitudinal half-extent, m
    pub r_y: f64,
    /// label grid height, pixels
    pub a: usize,
    /// label grid width, pixels
    pub b: usize,
    /// pixels within this distance of a road boundary are undrivable, m
    pub boundary_margin: f64,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self {
            h: 128,
            w: 512,
            r_x: 17.5,
            r_y: 70.0,
            a: 11,
            b: 20,
            boundary_margin: 0.1,
        }
    }
}

impl BevConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.a == 0 || self.b == 0 {
            return Err(Error::invariant("bev", "image and grid sizes must be positive"));
        }
        if !(self.r_x > 0.0 && self.r_y > 0.0 && self.boundary_margin >= 0.0) {
            return Err(Error::invariant("bev", "view extents must be positive"));
        }
        if self.a > self.h || 2 * self.b > self.w {
            return Err(Error::invariant("bev", "label grid larger than the image"));
        }
        Ok(())
    }

    pub fn grid_rows(&self) -> usize {
        self.h / self.a
    }

    pub fn grid_cols(&self) -> usize {
        self.w / (2 * self.b)
    }

    pub fn label_len(&self) -> usize {
        self.grid_rows() * self.grid_cols()
    }

    fn pixel_center(&self, x: usize, y: usize) -> (f64, f64) {
        let sx = 2.0 * self.r_x / self.h as f64;
        let sy = 2.0 * self.r_y / self.w as f64;
        (-self.r_x + (x as f64 + 0.5) * sx, -self.r_y + (y as f64 + 0.5) * sy)
    }

    /// Inclusive pixel range covering metric interval `[lo, hi]` along one axis.
    fn span(lo: f64, hi: f64, r: f64, n: usize) -> Option<(usize, usize)> {
        let s = 2.0 * r / n as f64;
        let first = ((lo + r) / s - 0.5).ceil().max(0.0);
        let last = ((hi + r) / s - 0.5).floor().min(n as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    }
}

/// Ego-frame point (forward, left) to image coordinates (X, Y).
pub fn ego_to_image(p: Vec2) -> (f64, f64) {
    (-p.y, p.x)
}

fn image_to_ego(x_m: f64, y_m: f64) -> Vec2 {
    Vec2::new(y_m, -x_m)
}

/// Pixel (row, column) containing the image point `(X, Y)`.
pub fn pixel_transform(x_m: f64, y_m: f64, cfg: &BevConfig) -> Result<(usize, usize)> {
    let in_view = (-cfg.r_x..cfg.r_x).contains(&x_m) && (-cfg.r_y..cfg.r_y).contains(&y_m);
    if !in_view {
        return Err(Error::OutOfView { x: x_m, y: y_m });
    }
    let x = ((x_m + cfg.r_x) / (2.0 * cfg.r_x / cfg.h as f64)).floor() as usize;
    let y = ((y_m + cfg.r_y) / (2.0 * cfg.r_y / cfg.w as f64)).floor() as usize;
    // guard the upper edge against rounding in the division
    Ok((x.min(cfg.h - 1), y.min(cfg.w - 1)))
}

/// An H×W binary image, bit set = drivable, stored row-major in 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BevFrame {
    pub t: i64,
    pub h: usize,
    pub w: usize,
    words: Vec<u64>,
}

impl BevFrame {
    pub fn empty(t: i64, h: usize, w: usize) -> Self {
        Self {
            t,
            h,
            w,
            words: vec![0; (h * w).div_ceil(64)],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = x * self.w + y;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        let i = x * self.w + y;
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

fn fill_polygon(frame: &mut BevFrame, cfg: &BevConfig, poly: &[Vec2], value: bool) {
    let img: Vec<(f64, f64)> = poly.iter().map(|p| ego_to_image(*p)).collect();
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &img {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    let (Some((x0, x1)), Some((y0, y1))) = (
        BevConfig::span(xlo, xhi, cfg.r_x, cfg.h),
        BevConfig::span(ylo, yhi, cfg.r_y, cfg.w),
    ) else {
        return;
    };
    for x in x0..=x1 {
        for y in y0..=y1 {
            let (px, py) = cfg.pixel_center(x, y);
            if point_in_polygon((px, py), &img) {
                frame.set(x, y, value);
            }
        }
    }
}

/// Even-odd rule; points on an edge count as inside.
fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let within = p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1);
        if cross == 0.0 && within {
            return true;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let xi = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < xi {
                inside = !inside;
            }
        }
    }
    inside
}

/// Drivable lane area: one quad per centerline segment, with vertex
/// normals averaged so consecutive quads share edges.
fn lane_mask(lane_map: &LaneMap, t: i64, cfg: &BevConfig) -> BevFrame {
    let mut frame = BevFrame::empty(t, cfg.h, cfg.w);
    for lane in lane_map.lanes.iter().filter(|l| l.direction == LaneDirection::SameAsEgo) {
        let pts = &lane.centerline;
        if pts.len() < 2 {
            continue;
        }
        let seg_normals: Vec<Vec2> = pts
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let n = d.norm();
                if n > 0.0 { d.perp() * (1.0 / n) } else { Vec2::new(0.0, 0.0) }
            })
            .collect();
        let half = lane.width / 2.0;
        let vertex_normal = |i: usize| -> Vec2 {
            let a = seg_normals[i.saturating_sub(1).min(seg_normals.len() - 1)];
            let b = seg_normals[i.min(seg_normals.len() - 1)];
            let m = a + b;
            let n = m.norm();
            if n < 1e-12 {
                return b;
            }
            let m = m * (1.0 / n);
            // miter length keeps the lane width constant across the joint
            m * (1.0 / m.dot(b).max(0.5))
        };
        for i in 0..pts.len() - 1 {
            if seg_normals[i].norm() == 0.0 {
                continue;
            }
            let (n0, n1) = (vertex_normal(i), vertex_normal(i + 1));
            let quad = [
                pts[i] + n0 * half,
                pts[i + 1] + n1 * half,
                pts[i + 1] - n1 * half,
                pts[i] - n0 * half,
            ];
            fill_polygon(&mut frame, cfg, &quad, true);
        }
    }
    frame
}

fn clear_boundaries(frame: &mut BevFrame, boundaries: &[Vec<Vec2>], cfg: &BevConfig) {
    let m = cfg.boundary_margin;
    for line in boundaries {
        for seg in line.windows(2) {
            let (a, b) = (ego_to_image(seg[0]), ego_to_image(seg[1]));
            let (Some((x0, x1)), Some((y0, y1))) = (
                BevConfig::span(a.0.min(b.0) - m, a.0.max(b.0) + m, cfg.r_x, cfg.h),
                BevConfig::span(a.1.min(b.1) - m, a.1.max(b.1) + m, cfg.r_y, cfg.w),
            ) else {
                continue;
            };
            for x in x0..=x1 {
                for y in y0..=y1 {
                    let (px, py) = cfg.pixel_center(x, y);
                    if point_segment_distance(image_to_ego(px, py), seg[0], seg[1]) <= m {
                        frame.set(x, y, false);
                    }
                }
            }
        }
    }
}

fn clear_box(frame: &mut BevFrame, b: &OrientedBox, cfg: &BevConfig) {
    fill_polygon(frame, cfg, &b.corners(), false);
}

/// One frame: pixel is drivable iff its center lies in a same-direction
/// lane, outside every actor box and away from road boundaries. All inputs
/// are in the ego frame.
pub fn rasterize_frame(lane_map: &LaneMap, actors: &[OrientedBox], t: i64, cfg: &BevConfig) -> BevFrame {
    let mut frame = lane_mask(lane_map, t, cfg);
    clear_boundaries(&mut frame, &lane_map.boundaries, cfg);
    for b in actors {
        clear_box(&mut frame, b, cfg);
    }
    frame
}

/// Fixed-length indicator over the forward half of the image: bit
/// `row * grid_cols + col` is set iff that grid holds a reachable goal.
pub fn label_vector(reach: &ReachabilityResult, cfg: &BevConfig) -> Vec<bool> {
    let mut bits = vec![false; cfg.label_len()];
    for (goal, _) in reach.goals.cells.iter().zip(&reach.reachable).filter(|(_, r)| **r) {
        if let Some(i) = label_index(goal.center, cfg) {
            bits[i] = true;
        }
    }
    bits
}

/// Label bit of an ego-frame point, if it falls in a label grid.
pub fn label_index(p: Vec2, cfg: &BevConfig) -> Option<usize> {
    let (xm, ym) = ego_to_image(p);
    let (x, y) = pixel_transform(xm, ym, cfg).ok()?;
    let y = y.checked_sub(cfg.w / 2)?;
    let (row, col) = (x / cfg.a, y / cfg.b);
    (row < cfg.grid_rows() && col < cfg.grid_cols()).then_some(row * cfg.grid_cols() + col)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevSample {
    pub t: i64,
    pub cfg: BevConfig,
    /// frames for steps t..=t+k, all in the ego frame at t
    pub frames: Vec<BevFrame>,
    /// (v_long, a_long, v_lat, a_lat)
    pub ego_feature: [f64; 4],
    pub label: Vec<bool>,
}

pub fn build_sample(scene: &Scene, t: i64, k: usize, cfg: &BevConfig, reach: &ReachConfig) -> Result<BevSample> {
    cfg.validate()?;
    let snapshot = Snapshot::from_scene(scene, t, k)?;
    let base = lane_mask(&snapshot.lane_map, t, cfg);
    let mut road = base.clone();
    clear_boundaries(&mut road, &snapshot.lane_map.boundaries, cfg);
    let frames = (0..=k)
        .map(|j| {
            let mut f = road.clone();
            f.t = t + j as i64;
            for d in &snapshot.obstacles.dynamic {
                if let Some(b) = d.box_at(j) {
                    clear_box(&mut f, b, cfg);
                }
            }
            f
        })
        .collect();
    let present = PreparedQuery::new(&snapshot, reach).reachable(&ActorMask::AllPresent)?;
    let ego = &snapshot.ego;
    Ok(BevSample {
        t,
        cfg: *cfg,
        frames,
        ego_feature: [ego.v_long, ego.a_long, ego.v_lat, ego.a_lat],
        label: label_vector(&present, cfg),
    })
}

/// One sample per ego time step, built in parallel and returned in order.
pub fn build_samples(scene: &Scene, k: usize, cfg: &BevConfig, reach: &ReachConfig) -> Result<Vec<BevSample>> {
    scene
        .ego
        .par_iter()
        .map(|e| build_sample(scene, e.t, k, cfg, reach))
        .collect()
}

const FORMAT: &str = "sti-bev/1";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    t: i64,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: BevConfig,
    count: usize,
    /// blob layout, little-endian throughout
    layout: String,
    notes: String,
    samples: Vec<ManifestEntry>,
}

fn pack_bits(bits: impl Iterator<Item = bool>, out: &mut Vec<u8>) {
    let mut byte = 0u8;
    let mut n = 0;
    for b in bits {
        byte |= (b as u8) << n;
        n += 1;
        if n == 8 {
            out.push(byte);
            byte = 0;
            n = 0;
        }
    }
    if n > 0 {
        out.push(byte);
    }
}

fn encode(sample: &BevSample) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&sample.t.to_le_bytes());
    out.extend_from_slice(&(sample.frames.len() as u32).to_le_bytes());
    for f in &sample.frames {
        out.extend_from_slice(&f.t.to_le_bytes());
        pack_bits((0..f.h).flat_map(|x| (0..f.w).map(move |y| (x, y))).map(|(x, y)| f.get(x, y)), &mut out);
    }
    for v in sample.ego_feature {
        out.extend_from_slice(&v.to_le_bytes());
    }
    pack_bits(sample.label.iter().copied(), &mut out);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self.buf.get(self.pos..end).ok_or_else(|| Error::Dataset {
            path: self.path.to_path_buf(),
            reason: format!("truncated blob at byte {}", self.pos),
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bits(&mut self, n: usize) -> Result<Vec<bool>> {
        let bytes = self.take(n.div_ceil(8))?;
        Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
    }
}

fn decode(buf: &[u8], cfg: &BevConfig, path: &Path) -> Result<BevSample> {
    let mut r = Reader { buf, pos: 0, path };
    let t = r.i64()?;
    let n_frames = r.u32()? as usize;
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let mut f = BevFrame::empty(r.i64()?, cfg.h, cfg.w);
        for (i, bit) in r.bits(cfg.h * cfg.w)?.into_iter().enumerate() {
            if bit {
                f.set(i / cfg.w, i % cfg.w, true);
            }
        }
        frames.push(f);
    }
    let ego_feature = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
    let label = r.bits(cfg.label_len())?;
    if r.pos != buf.len() {
        return Err(Error::Dataset {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes", buf.len() - r.pos),
        });
    }
    Ok(BevSample {
        t,
        cfg: *cfg,
        frames,
        ego_feature,
        label,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `samples` under directory `dir` and returns the count written.
/// Every sample must have been built with `cfg`.
pub fn write_dataset(samples: &[BevSample], cfg: &BevConfig, dir: impl AsRef<Path>) -> Result<usize> {
    let dir = dir.as_ref();
    cfg.validate()?;
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.cfg != *cfg) {
        return Err(Error::ConfigMismatch(format!(
            "sample {i} (t={}) was built with {:?}, dataset uses {:?}",
            s.t, s.cfg, cfg
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let file = format!("sample_{i:06}.bin");
        let blob = encode(s);
        let path = dir.join(&file);
        fs::write(&path, &blob).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            file,
            t: s.t,
            sha256: sha256_hex(&blob),
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        config: *cfg,
        count: samples.len(),
        layout: "t:i64, frame_count:u32, per frame (t:i64, h*w bits row-major), \
                 ego_feature:4*f64, label bits; bits packed LSB-first, padded to bytes"
            .into(),
        notes: "ego_feature holds 4 values (v_long, a_long, v_lat, a_lat); some descriptions of the \
                approximator list a 5-element ego input"
            .into(),
        samples: entries,
    };
    let path = dir.join(MANIFEST);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::io(&path, e))?;
    Ok(samples.len())
}

/// Reads a dataset written by [`write_dataset`], verifying checksums.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<(BevConfig, Vec<BevSample>)> {
    let dir = dir.as_ref();
    let path: PathBuf = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::from_json(path.display().to_string(), &e))?;
    let bad = |reason: String| Error::Dataset {
        path: path.clone(),
        reason,
    };
    if manifest.format != FORMAT {
        return Err(bad(format!("unsupported format {:?}", manifest.format)));
    }
    if manifest.count != manifest.samples.len() {
        return Err(bad(format!("count {} but {} entries", manifest.count, manifest.samples.len())));
    }
    manifest.config.validate()?;
    let samples = manifest
        .samples
        .iter()
        .map(|entry| {
            let blob_path = dir.join(&entry.file);
            let blob = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
            if sha256_hex(&blob) != entry.sha256 {
                return Err(Error::Dataset {
                    path: blob_path,
                    reason: "checksum mismatch".into(),
                });
            }
            decode(&blob, &manifest.config, &blob_path)
        })
        .collect::<Result<_>>()?;
    Ok((manifest.config, samples))
}
