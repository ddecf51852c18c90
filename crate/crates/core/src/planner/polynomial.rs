/// Quintic polynomial matching position, velocity and acceleration at both
/// ends of `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticPolynomial {
    coeffs: [f64; 6],
    duration: f64,
}

impl QuinticPolynomial {
    pub fn new(start: [f64; 3], end: [f64; 3], duration: f64) -> Self {
        let [x0, v0, a0] = start;
        let [x1, v1, a1] = end;
        let t = duration;
        let (t2, t3) = (t * t, t * t * t);
        let h = x1 - x0 - v0 * t - 0.5 * a0 * t2;
        let hv = v1 - v0 - a0 * t;
        let ha = a1 - a0;
        let c3 = (10.0 * h - 4.0 * hv * t + 0.5 * ha * t2) / t3;
        let c4 = (-15.0 * h + 7.0 * hv * t - ha * t2) / (t3 * t);
        let c5 = (6.0 * h - 3.0 * hv * t + 0.5 * ha * t2) / (t3 * t2);
        Self {
            coeffs: [x0, v0, 0.5 * a0, c3, c4, c5],
            duration,
        }
    }

    pub fn coefficients(&self) -> [f64; 6] {
        self.coeffs
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Value, velocity, acceleration and jerk at `t`.
    #[inline]
    pub fn eval(&self, t: f64) -> [f64; 4] {
        let [c0, c1, c2, c3, c4, c5] = self.coeffs;
        let p = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
        let v = c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5)));
        let a = 2.0 * c2 + t * (6.0 * c3 + t * (12.0 * c4 + t * 20.0 * c5));
        let j = 6.0 * c3 + t * (24.0 * c4 + t * 60.0 * c5);
        [p, v, a, j]
    }
}
