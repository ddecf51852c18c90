//! Realtime STI: Kalman estimation from noisy detections, constant-velocity
//! prediction, trajectory sampling and Monte-Carlo STI.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, SymmetricEigen, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Vec2};
use crate::reach::{sti_step, ReachConfig, Snapshot, StiReport};
use crate::scene::Scene;

/// Sensor and motion noise. Variances in m² and (m/s)², `process_q` in m²/s³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// measurement standard deviation along world x and y
    pub measurement_sigma: [f64; 2],
    /// white-noise acceleration spectral density, per axis
    pub process_q: f64,
    pub prior_position_var: f64,
    pub prior_velocity_var: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            measurement_sigma: [0.3, 0.3],
            process_q: 0.5,
            prior_position_var: 0.09,
            prior_velocity_var: 25.0,
        }
    }
}

impl NoiseModel {
    /// Exact detections and no process noise. The velocity prior stays
    /// open so that two detections pin the velocity.
    pub fn noiseless() -> Self {
        Self {
            measurement_sigma: [0.0, 0.0],
            process_q: 0.0,
            prior_position_var: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.measurement_sigma[0],
            self.measurement_sigma[1],
            self.process_q,
            self.prior_position_var,
            self.prior_velocity_var,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invariant("noise", "parameters must be finite and non-negative"));
        }
        Ok(())
    }

    fn measurement_cov(&self) -> Matrix2<f64> {
        let [sx, sy] = self.measurement_sigma;
        Matrix2::new(sx * sx, 0.0, 0.0, sy * sy)
    }

    fn prior_cov(&self) -> Matrix4<f64> {
        let (p, v) = (self.prior_position_var, self.prior_velocity_var);
        Matrix4::from_diagonal(&Vector4::new(p, p, v, v))
    }
}

/// A pre-associated bounding-box detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: i64,
    pub actor_id: String,
    pub center: Vec2,
    pub yaw: f64,
    /// (length, width)
    pub extent: (f64, f64),
}

/// Posterior over (x, y, v_x, v_y).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: i64,
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

fn process_cov(q: f64, dt: f64) -> Matrix4<f64> {
    let (a, b, c) = (q * dt.powi(3) / 3.0, q * dt * dt / 2.0, q * dt);
    let mut m = Matrix4::zeros();
    for axis in 0..2 {
        m[(axis, axis)] = a;
        m[(axis, axis + 2)] = b;
        m[(axis + 2, axis)] = b;
        m[(axis + 2, axis + 2)] = c;
    }
    m
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn symmetrize(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Constant-velocity Kalman filter over one actor's detections, which must
/// be in increasing time order.
pub fn estimate(history: &[Measurement], noise: &NoiseModel, dt: f64) -> Result<FilterState> {
    let (first, rest) = history.split_first().ok_or_else(|| Error::EmptySample("no measurements".into()))?;
    let h = observation();
    let r = noise.measurement_cov();
    let mut state = FilterState {
        t: first.t,
        mean: Vector4::new(first.center.x, first.center.y, 0.0, 0.0),
        covariance: noise.prior_cov(),
    };
    for m in rest {
        let steps = m.t - state.t;
        if steps <= 0 {
            return Err(Error::invariant("measurements", "time indices must increase"));
        }
        let span = steps as f64 * dt;
        let f = transition(span);
        let mean = f * state.mean;
        let cov = symmetrize(f * state.covariance * f.transpose() + process_cov(noise.process_q, span));
        let s = h * cov * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
            .unwrap_or_else(|| s.pseudo_inverse(1e-12).unwrap_or_else(|_| Matrix2::zeros()));
        let gain = cov * h.transpose() * s_inv;
        let innovation = Vector2::new(m.center.x, m.center.y) - h * mean;
        state = FilterState {
            t: m.t,
            mean: mean + gain * innovation,
            covariance: symmetrize((Matrix4::identity() - gain * h) * cov),
        };
    }
    Ok(state)
}

/// Per-step Gaussians over `[t, t + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDistribution {
    pub dt: f64,
    pub process_q: f64,
    pub means: Vec<Vector4<f64>>,
    pub covariances: Vec<Matrix4<f64>>,
}

pub fn predict(state: &FilterState, k: usize, dt: f64, noise: &NoiseModel) -> PredictedDistribution {
    let f = transition(dt);
    let q = process_cov(noise.process_q, dt);
    let mut means = Vec::with_capacity(k + 1);
    let mut covariances = Vec::with_capacity(k + 1);
    let (mut m, mut p) = (state.mean, state.covariance);
    for step in 0..=k {
        if step > 0 {
            m = f * m;
            p = symmetrize(f * p * f.transpose() + q);
        }
        means.push(m);
        covariances.push(p);
    }
    PredictedDistribution {
        dt,
        process_q: noise.process_q,
        means,
        covariances,
    }
}

/// Square root of a symmetric PSD matrix; a zero matrix maps to zero.
fn psd_sqrt(m: &Matrix4<f64>) -> Matrix4<f64> {
    if m.iter().all(|v| *v == 0.0) {
        return Matrix4::zeros();
    }
    let eig = SymmetricEigen::new(*m);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix4::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn gaussian(rng: &mut ChaCha8Rng, root: &Matrix4<f64>) -> Vector4<f64> {
    if root.iter().all(|v| *v == 0.0) {
        return Vector4::zeros();
    }
    let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    root * z
}

/// Draws one state trajectory: the initial state from the step-0
/// marginal, then propagated with per-step process noise.
pub fn sample_trajectory(pred: &PredictedDistribution, rng: &mut ChaCha8Rng) -> Vec<Vector4<f64>> {
    let f = transition(pred.dt);
    let q_root = psd_sqrt(&process_cov(pred.process_q, pred.dt));
    let mut x = pred.means[0] + gaussian(rng, &psd_sqrt(&pred.covariances[0]));
    let mut out = Vec::with_capacity(pred.means.len());
    out.push(x);
    for _ in 1..pred.means.len() {
        x = f * x + gaussian(rng, &q_root);
        out.push(x);
    }
    out
}

/// One drawn trajectory per actor.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectorySet {
    pub seed: u64,
    pub stream: u64,
    /// (actor id, positions over steps 0..=k)
    pub trajectories: Vec<(String, Vec<Vec2>)>,
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples every actor's trajectory from one random stream. `stream`
/// selects an independent sequence under the same master seed.
pub fn sample_set(
    predictions: &[(String, PredictedDistribution)],
    seed: u64,
    stream: u64,
) -> Result<SampledTrajectorySet> {
    if let Some((_, first)) = predictions.first() {
        if predictions.iter().any(|(_, p)| p.means.len() != first.means.len()) {
            return Err(Error::invariant("predictions", "actors predicted over different horizons"));
        }
    }
    let mut rng = sample_rng(seed, stream);
    let trajectories = predictions
        .iter()
        .map(|(id, pred)| {
            let states = sample_trajectory(pred, &mut rng);
            (id.clone(), states.iter().map(|s| Vec2::new(s[0], s[1])).collect())
        })
        .collect();
    Ok(SampledTrajectorySet { seed, stream, trajectories })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Sample mean and (n - 1) standard deviation. The mean is formed as
    /// first value plus mean deviation so identical samples reproduce the
    /// value exactly.
    pub fn of(values: &[f64]) -> Summary {
        let Some(&base) = values.first() else {
            return Summary::default();
        };
        let n = values.len() as f64;
        let mean = base + values.iter().map(|v| v - base).sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Monte-Carlo STI at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiDistribution {
    pub t: i64,
    pub n_samples: usize,
    pub single_sample: bool,
    /// samples whose empty-world reachable set was empty
    pub degenerate_samples: usize,
    pub scene: Summary,
    pub actors: BTreeMap<String, Summary>,
    pub samples: Vec<StiReport>,
}

/// Detections for every actor up to and including `t`, with Gaussian
/// position noise. Deterministic in `seed`.
pub fn measurements_from_scene(
    scene: &Scene,
    t: i64,
    noise: &NoiseModel,
    seed: u64,
) -> BTreeMap<String, Vec<Measurement>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [sx, sy] = noise.measurement_sigma;
    let mut out = BTreeMap::new();
    for track in &scene.actors {
        let history: Vec<Measurement> = track
            .states
            .iter()
            .filter(|s| s.t <= t)
            .map(|s| {
                let ex: f64 = rng.sample(StandardNormal);
                let ey: f64 = rng.sample(StandardNormal);
                Measurement {
                    t: s.t,
                    actor_id: track.actor_id.clone(),
                    center: Vec2::new(s.x + sx * ex, s.y + sy * ey),
                    yaw: s.yaw,
                    extent: (s.length, s.width),
                }
            })
            .collect();
        if !history.is_empty() {
            out.insert(track.actor_id.clone(), history);
        }
    }
    out
}

/// Realtime STI distribution at `t`: estimate each measured actor, predict
/// `k` steps, and run the reachability pipeline on `n_samples` drawn
/// trajectory sets. Sample `i` uses stream `i` of the master seed.
#[allow(clippy::too_many_arguments)]
pub fn mc_sti(
    scene: &Scene,
    measurements: &BTreeMap<String, Vec<Measurement>>,
    t: i64,
    k: usize,
    n_samples: usize,
    cfg: &ReachConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<StiDistribution> {
    if n_samples == 0 {
        return Err(Error::invariant("n_samples", "must be at least 1"));
    }
    noise.validate()?;
    scene.ego_at(t)?;
    let mut predictions = Vec::new();
    let mut shapes = Vec::new();
    for (id, history) in measurements {
        let history: Vec<Measurement> = history.iter().filter(|m| m.t <= t).cloned().collect();
        let Some(latest) = history.last() else { continue };
        let (yaw, extent) = (latest.yaw, latest.extent);
        let state = estimate(&history, noise, scene.dt)?;
        // the filter posterior sits at the latest detection; bring it to t
        let lag = (t - state.t) as usize;
        let pred = predict(&state, k + lag, scene.dt, noise);
        let pred = PredictedDistribution {
            means: pred.means[lag..].to_vec(),
            covariances: pred.covariances[lag..].to_vec(),
            ..pred
        };
        predictions.push((id.clone(), pred));
        shapes.push((yaw, extent));
    }
    let samples: Vec<StiReport> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<StiReport> {
            let set = sample_set(&predictions, seed, i)?;
            let actors = set
                .trajectories
                .into_iter()
                .zip(&shapes)
                .map(|((id, positions), &(yaw, (length, width)))| {
                    let boxes = positions
                        .into_iter()
                        .map(|c| OrientedBox::new(c, yaw, length, width))
                        .collect();
                    (id, boxes)
                })
                .collect();
            let snapshot = Snapshot::with_actor_boxes(scene, t, k, actors)?;
            Ok(sti_step(&snapshot, cfg).report)
        })
        .collect::<Result<_>>()?;
    let scene_values: Vec<f64> = samples.iter().map(|r| r.scene_sti).collect();
    let mut actors = BTreeMap::new();
    for (id, _) in &predictions {
        let values: Vec<f64> = samples.iter().map(|r| r.actors[id]).collect();
        actors.insert(id.clone(), Summary::of(&values));
    }
    Ok(StiDistribution {
        t,
        n_samples,
        single_sample: n_samples == 1,
        degenerate_samples: samples.iter().filter(|r| r.degenerate).count(),
        scene: Summary::of(&scene_values),
        actors,
        samples,
    })
}
