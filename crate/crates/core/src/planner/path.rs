//! Arc-length parameterized reference paths fitted through lane centerlines.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Natural cubic spline over strictly increasing knots.
#[derive(Debug, Clone)]
struct CubicSpline {
    knots: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl CubicSpline {
    fn new(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // second-derivative moments, natural end conditions
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                diag[i] = 2.0 * (h[i - 1] + h[i]);
                upper[i] = h[i];
                rhs[i] = 6.0
                    * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
            }
            // Thomas algorithm on rows 1..n-1
            for i in 2..n - 1 {
                let w = h[i - 1] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                let next = if i + 1 < n - 1 { m[i + 1] } else { 0.0 };
                m[i] = (rhs[i] - upper[i] * next) / diag[i];
            }
        }
        let mut a = Vec::with_capacity(n - 1);
        let mut b = Vec::with_capacity(n - 1);
        let mut c = Vec::with_capacity(n - 1);
        let mut d = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            a.push(values[i]);
            b.push((values[i + 1] - values[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0);
            c.push(m[i] / 2.0);
            d.push((m[i + 1] - m[i]) / (6.0 * h[i]));
        }
        Self {
            knots: knots.to_vec(),
            a,
            b,
            c,
            d,
        }
    }

    /// Value and first three derivatives on segment `i` at local offset `x`.
    fn eval(&self, i: usize, x: f64) -> [f64; 4] {
        let (a, b, c, d) = (self.a[i], self.b[i], self.c[i], self.d[i]);
        [
            a + x * (b + x * (c + x * d)),
            b + x * (2.0 * c + 3.0 * d * x),
            2.0 * c + 6.0 * d * x,
            6.0 * d,
        ]
    }
}

/// Local geometry of a path at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFrame {
    pub s: f64,
    pub position: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub heading: f64,
    pub curvature: f64,
    /// d(curvature)/ds
    pub curvature_rate: f64,
}

#[derive(Debug, Clone)]
enum Shape {
    /// All input points collinear with a single direction.
    Line { origin: Vec2, dir: Vec2 },
    Spline {
        x: CubicSpline,
        y: CubicSpline,
        /// true arc length at each knot
        arc: Vec<f64>,
    },
}

/// A smooth curve through a lane centerline, parameterized by arc length.
///
/// Queries outside `[0, total_length]` extend the curve along its end
/// tangents.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    shape: Shape,
    total_length: f64,
    /// coarse (s, position) table for projection seeds
    samples: Vec<(f64, Vec2)>,
}

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

const PROJECTION_SAMPLE_SPACING: f64 = 0.5;

impl ReferencePath {
    pub fn new(points: &[Vec2]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegeneratePath(
                "centerline needs at least two points".into(),
            ));
        }
        let mut chord = vec![0.0];
        for w in points.windows(2) {
            let len = w[0].dist(w[1]);
            if len == 0.0 || !len.is_finite() {
                return Err(Error::DegeneratePath(
                    "consecutive centerline points coincide".into(),
                ));
            }
            chord.push(chord.last().unwrap() + len);
        }
        let chord_len = *chord.last().unwrap();
        let dir = (points[points.len() - 1] - points[0]) * (1.0 / chord_len);
        let collinear = points.windows(2).all(|w| {
            let seg = w[1] - w[0];
            (seg.dot(dir) / seg.norm() - 1.0).abs() < 1e-12
        });
        let (shape, total_length) = if collinear {
            (
                Shape::Line {
                    origin: points[0],
                    dir,
                },
                chord_len,
            )
        } else {
            let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
            let x = CubicSpline::new(&chord, &xs);
            let y = CubicSpline::new(&chord, &ys);
            let mut arc = vec![0.0];
            for i in 0..points.len() - 1 {
                let seg = gauss_arc(&x, &y, i, chord[i + 1] - chord[i]);
                arc.push(arc.last().unwrap() + seg);
            }
            let total = *arc.last().unwrap();
            (Shape::Spline { x, y, arc }, total)
        };
        let mut path = Self {
            shape,
            total_length,
            samples: Vec::new(),
        };
        let n = (total_length / PROJECTION_SAMPLE_SPACING).ceil().max(1.0) as usize;
        path.samples = (0..=n)
            .map(|i| {
                let s = total_length * i as f64 / n as f64;
                (s, path.position(s))
            })
            .collect();
        Ok(path)
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn is_straight(&self) -> bool {
        matches!(self.shape, Shape::Line { .. })
    }

    pub fn position(&self, s: f64) -> Vec2 {
        self.frame(s).position
    }

    pub fn frame(&self, s: f64) -> PathFrame {
        match &self.shape {
            Shape::Line { origin, dir } => PathFrame {
                s,
                position: *origin + *dir * s,
                tangent: *dir,
                normal: dir.perp(),
                heading: dir.y.atan2(dir.x),
                curvature: 0.0,
                curvature_rate: 0.0,
            },
            Shape::Spline { x, y, arc } => {
                if s < 0.0 || s > self.total_length {
                    let end = if s < 0.0 { 0.0 } else { self.total_length };
                    let f = self.frame(end);
                    return PathFrame {
                        s,
                        position: f.position + f.tangent * (s - end),
                        curvature: 0.0,
                        curvature_rate: 0.0,
                        ..f
                    };
                }
                let (seg, u) = locate(x, y, arc, s);
                spline_frame(x, y, seg, u, s)
            }
        }
    }

    /// Projects `p` onto the path, returning `(s, d)` with `d` positive to
    /// the left of the direction of travel.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        if let Shape::Line { origin, dir } = &self.shape {
            let rel = p - *origin;
            return (rel.dot(*dir), rel.dot(dir.perp()));
        }
        let (mut s, _) = self
            .samples
            .iter()
            .map(|&(s, q)| (s, q.dist(p)))
            .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        for _ in 0..20 {
            let f = self.frame(s);
            let rel = p - f.position;
            let g = rel.dot(f.tangent);
            let dg = -1.0 + rel.dot(f.normal) * f.curvature;
            let step = if dg.abs() > 1e-9 { g / -dg } else { g };
            s += step;
            if step.abs() < 1e-12 {
                break;
            }
        }
        let f = self.frame(s);
        (s, (p - f.position).dot(f.normal))
    }
}

fn gauss_arc(x: &CubicSpline, y: &CubicSpline, seg: usize, upto: f64) -> f64 {
    let half = upto / 2.0;
    GAUSS_NODES
        .iter()
        .zip(GAUSS_WEIGHTS)
        .map(|(&n, w)| {
            let u = half * (n + 1.0);
            let dx = x.eval(seg, u)[1];
            let dy = y.eval(seg, u)[1];
            w * dx.hypot(dy)
        })
        .sum::<f64>()
        * half
}

/// Finds the spline segment and local parameter whose arc length is `s`.
fn locate(x: &CubicSpline, y: &CubicSpline, arc: &[f64], s: f64) -> (usize, f64) {
    let nseg = arc.len() - 1;
    let seg = arc.partition_point(|&a| a <= s).saturating_sub(1).min(nseg - 1);
    let h = x.knots[seg + 1] - x.knots[seg];
    let target = s - arc[seg];
    let seg_len = arc[seg + 1] - arc[seg];
    let mut u = (target / seg_len * h).clamp(0.0, h);
    for _ in 0..30 {
        let f = gauss_arc(x, y, seg, u) - target;
        let dx = x.eval(seg, u)[1];
        let dy = y.eval(seg, u)[1];
        let step = f / dx.hypot(dy);
        u = (u - step).clamp(0.0, h);
        if step.abs() < 1e-13 {
            break;
        }
    }
    (seg, u)
}

fn spline_frame(x: &CubicSpline, y: &CubicSpline, seg: usize, u: f64, s: f64) -> PathFrame {
    let [px, dx, ddx, dddx] = x.eval(seg, u);
    let [py, dy, ddy, dddy] = y.eval(seg, u);
    let speed_sq = dx * dx + dy * dy;
    let speed = speed_sq.sqrt();
    let tangent = Vec2::new(dx / speed, dy / speed);
    let num = dx * ddy - dy * ddx;
    let den = speed_sq * speed;
    let curvature = num / den;
    let dnum = dx * dddy - dy * dddx;
    let dden = 3.0 * speed * (dx * ddx + dy * ddy);
    let dk_du = (dnum * den - num * dden) / (den * den);
    PathFrame {
        s,
        position: Vec2::new(px, py),
        tangent,
        normal: tangent.perp(),
        heading: dy.atan2(dx),
        curvature,
        curvature_rate: dk_du / speed,
    }
}

/// Curvilinear state along a reference path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrenetState {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

/// Position, velocity and acceleration vectors in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartesianState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
}

impl CartesianState {
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Tangential and normal components of velocity and acceleration for a
/// Frenet state on `frame`. `None` at a singularity (`1 - κd <= 0`).
#[inline]
pub(crate) fn frenet_components(frame: &PathFrame, st: &FrenetState) -> Option<(f64, f64, f64, f64)> {
    let k = frame.curvature;
    let one_minus = 1.0 - k * st.d;
    if one_minus <= 0.0 {
        return None;
    }
    let vel_t = st.s_dot * one_minus;
    let vel_n = st.d_dot;
    let acc_t = st.s_ddot * one_minus
        - frame.curvature_rate * st.s_dot * st.s_dot * st.d
        - 2.0 * k * st.s_dot * st.d_dot;
    let acc_n = k * st.s_dot * st.s_dot * one_minus + st.d_ddot;
    Some((vel_t, vel_n, acc_t, acc_n))
}

impl ReferencePath {
    pub fn frenet_to_cartesian(&self, st: &FrenetState) -> Result<CartesianState> {
        let f = self.frame(st.s);
        let (vt, vn, at, an) = frenet_components(&f, st)
            .ok_or(Error::FrenetSingularity { s: st.s, d: st.d })?;
        Ok(CartesianState {
            position: f.position + f.normal * st.d,
            velocity: f.tangent * vt + f.normal * vn,
            acceleration: f.tangent * at + f.normal * an,
        })
    }

    pub fn cartesian_to_frenet(&self, c: &CartesianState) -> Result<FrenetState> {
        let (s, d) = self.project(c.position);
        let f = self.frame(s);
        let k = f.curvature;
        let one_minus = 1.0 - k * d;
        if one_minus <= 0.0 {
            return Err(Error::FrenetSingularity { s, d });
        }
        let s_dot = c.velocity.dot(f.tangent) / one_minus;
        let d_dot = c.velocity.dot(f.normal);
        let acc_t = c.acceleration.dot(f.tangent);
        let acc_n = c.acceleration.dot(f.normal);
        let d_ddot = acc_n - k * s_dot * s_dot * one_minus;
        let s_ddot = (acc_t + f.curvature_rate * s_dot * s_dot * d + 2.0 * k * s_dot * d_dot)
            / one_minus;
        Ok(FrenetState {
            s,
            s_dot,
            s_ddot,
            d,
            d_dot,
            d_ddot,
        })
    }
}

/// Converts to Cartesian and back. Fails outside the path or at a
/// singularity.
pub fn frenet_roundtrip(path: &ReferencePath, state: &FrenetState) -> Result<FrenetState> {
    if !(0.0..=path.total_length()).contains(&state.s) {
        return Err(Error::ArcLengthOutOfRange {
            s: state.s,
            length: path.total_length(),
        });
    }
    let cart = path.frenet_to_cartesian(state)?;
    path.cartesian_to_frenet(&cart)
}
