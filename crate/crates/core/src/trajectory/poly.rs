use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Slack allowed when evaluating at the domain edges.
const DOMAIN_EPS: f64 = 1e-9;

/// `p(t) = c0 + c1 t + ... + c5 t^5` on `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuinticPoly {
    pub coeffs: [f64; 6],
    pub duration: f64,
}

/// Position, velocity, acceleration and jerk at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolySample {
    pub p: f64,
    pub v: f64,
    pub a: f64,
    pub jerk: f64,
}

/// Boundary tuple `(position, velocity, acceleration)`.
pub type Boundary = (f64, f64, f64);

/// Two-point quintic matching position, velocity and acceleration at both ends.
pub fn fit_quintic(start: Boundary, end: Boundary, duration: f64) -> Result<QuinticPoly> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let (p0, v0, a0) = start;
    let (p1, v1, a1) = end;
    let t = duration;
    let (t2, t3) = (t * t, t * t * t);
    // residuals left for the cubic, quartic and quintic terms
    let rp = p1 - (p0 + v0 * t + 0.5 * a0 * t2);
    let rv = v1 - (v0 + a0 * t);
    let ra = a1 - a0;
    let c3 = (10.0 * rp - 4.0 * rv * t + 0.5 * ra * t2) / t3;
    let c4 = (-15.0 * rp + 7.0 * rv * t - ra * t2) / (t3 * t);
    let c5 = (6.0 * rp - 3.0 * rv * t + 0.5 * ra * t2) / (t3 * t2);
    Ok(QuinticPoly {
        coeffs: [p0, v0, 0.5 * a0, c3, c4, c5],
        duration,
    })
}

impl QuinticPoly {
    pub fn zero(duration: f64) -> Self {
        Self {
            coeffs: [0.0; 6],
            duration,
        }
    }

    /// Evaluation without the domain check; callers guarantee `t` is in range.
    #[inline]
    pub(crate) fn sample_unchecked(&self, t: f64) -> PolySample {
        let [c0, c1, c2, c3, c4, c5] = self.coeffs;
        PolySample {
            p: c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5)))),
            v: c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5))),
            a: 2.0 * c2 + t * (6.0 * c3 + t * (12.0 * c4 + t * 20.0 * c5)),
            jerk: 6.0 * c3 + t * (24.0 * c4 + t * 60.0 * c5),
        }
    }

    pub fn eval(&self, t: f64) -> Result<PolySample> {
        if !(t >= -DOMAIN_EPS && t <= self.duration + DOMAIN_EPS) {
            return Err(Error::OutsideDomain {
                t,
                duration: self.duration,
            });
        }
        Ok(self.sample_unchecked(t.clamp(0.0, self.duration)))
    }

    /// Degree of the polynomial, ignoring exactly-zero leading coefficients.
    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }
}

/// Closed-form integral of the squared jerk over the whole domain.
pub fn integral_squared_jerk(poly: &QuinticPoly) -> f64 {
    // jerk(t) = a + b t + c t^2
    let a = 6.0 * poly.coeffs[3];
    let b = 24.0 * poly.coeffs[4];
    let c = 60.0 * poly.coeffs[5];
    let t = poly.duration;
    let (t2, t3, t4, t5) = (t * t, t * t * t, t * t * t * t, t * t * t * t * t);
    let value = a * a * t + a * b * t2 + (b * b + 2.0 * a * c) * t3 / 3.0 + b * c * t4 / 2.0
        + c * c * t5 / 5.0;
    value.max(0.0)
}
