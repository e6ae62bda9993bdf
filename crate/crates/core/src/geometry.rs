//! Planar linear algebra, polar lifts of sampled curves and winding numbers.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(r * c, r * s)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn l1_norm(self) -> f64 {
        self.x.abs() + self.y.abs()
    }

    pub fn arg(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counterclockwise quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2::new(self * v.x, self * v.y)
    }
}

/// A real 2x2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, 0.0, b)
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, -s, s, c)
    }

    /// Matrix with the given columns.
    pub fn from_cols(c1: Vec2, c2: Vec2) -> Self {
        Self::new(c1.x, c2.x, c1.y, c2.y)
    }

    /// Matrix with the given rows (gradients of the two components).
    pub fn from_rows(r1: Vec2, r2: Vec2) -> Self {
        Self::new(r1.x, r1.y, r2.x, r2.y)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Squared Frobenius norm `tr(A A^T)`.
    pub fn norm_sq(&self) -> f64 {
        self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a11 * v.x + self.a12 * v.y, self.a21 * v.x + self.a22 * v.y)
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d))
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, b: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * b.a11 + self.a12 * b.a21,
            self.a11 * b.a12 + self.a12 * b.a22,
            self.a21 * b.a11 + self.a22 * b.a21,
            self.a21 * b.a12 + self.a22 * b.a22,
        )
    }
}

impl Mul<Mat2> for f64 {
    type Output = Mat2;
    fn mul(self, m: Mat2) -> Mat2 {
        Mat2::new(self * m.a11, self * m.a12, self * m.a21, self * m.a22)
    }
}

/// Cofactor matrix: `cof([[a, b], [c, d]]) = [[d, -c], [-b, a]]`.
///
/// Satisfies `det A = <A nu, cof(A) nu>` and `|cof(A) nu| = |A nu_perp|` for unit `nu`.
pub fn cofactor(a: &Mat2) -> Mat2 {
    Mat2::new(a.a22, -a.a21, -a.a12, a.a11)
}

/// Central finite-difference Jacobian matrix with step `1e-6 * max(1, |x|)`.
pub fn fd_jacobian<F>(f: F, p: Vec2) -> Result<Mat2>
where
    F: Fn(Vec2) -> Result<Vec2>,
{
    let h = 1e-6 * p.norm().max(1.0);
    let dx = Vec2::new(h, 0.0);
    let dy = Vec2::new(0.0, h);
    let gx = f(p + dx)? - f(p - dx)?;
    let gy = f(p + dy)? - f(p - dy)?;
    let inv = 0.5 / h;
    Ok(Mat2::from_cols(inv * gx, inv * gy))
}

/// Values `u(r e^{i theta})` at `N` uniformly spaced angles starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleSamples {
    pub radius: f64,
    pub theta: Vec<f64>,
    pub values: Vec<Vec2>,
}

impl CircleSamples {
    pub const MIN_SAMPLES: usize = 16;

    pub fn from_fn<F: Fn(Vec2) -> Vec2>(radius: f64, n: usize, f: F) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::NonPositiveRadius(radius));
        }
        if n < Self::MIN_SAMPLES {
            return Err(Error::PreconditionViolated(format!(
                "need at least {} circle samples, got {n}",
                Self::MIN_SAMPLES
            )));
        }
        let theta: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let values: Vec<Vec2> = theta.iter().map(|&t| f(Vec2::from_polar(radius, t))).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let p = Vec2::from_polar(radius, theta[i]);
            return Err(Error::EvaluationFailure { x: p.x, y: p.y });
        }
        Ok(Self { radius, theta, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Modulus and continuous argument of a sampled closed curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarLift {
    pub psi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub winding: i64,
    /// `gamma(2 pi) - gamma(0) - 2 pi * winding`.
    pub closure_defect: f64,
}

impl PolarLift {
    pub fn reconstruct(&self) -> Vec<Vec2> {
        self.psi.iter().zip(&self.gamma).map(|(&r, &g)| Vec2::from_polar(r, g)).collect()
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Lift a sampled curve avoiding the origin to `psi * exp(i gamma)` with `gamma` continuous.
pub fn polar_lift(samples: &CircleSamples) -> Result<PolarLift> {
    let vals = &samples.values;
    if let Some(index) = vals.iter().position(|v| v.norm() == 0.0) {
        return Err(Error::OriginHit { index });
    }
    let n = vals.len();
    let psi: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
    let mut gamma = Vec::with_capacity(n);
    gamma.push(vals[0].arg());
    let mut total = gamma[0];
    for i in 0..n {
        let next = (i + 1) % n;
        let jump = wrap_angle(vals[next].arg() - vals[i].arg());
        if jump.abs() > 0.5 * PI {
            return Err(Error::UndersampledCurve { index: i, next, jump });
        }
        total += jump;
        if next != 0 {
            gamma.push(total);
        }
    }
    let turns = (total - gamma[0]) / TAU;
    let winding = turns.round() as i64;
    let closure_defect = total - gamma[0] - TAU * winding as f64;
    Ok(PolarLift { psi, gamma, winding, closure_defect })
}

/// Signed winding number of the closed polyline through `curve` around `point`.
///
/// Points closer than `1e-12 * diameter` to the polyline are rejected.
pub fn winding_number(curve: &[Vec2], point: Vec2) -> Result<i64> {
    let n = curve.len();
    if n < 3 {
        return Err(Error::PreconditionViolated("polyline needs at least 3 vertices".into()));
    }
    let tol = 1e-12 * polyline_diameter(curve).max(f64::MIN_POSITIVE);
    let mut w = 0i64;
    for i in 0..n {
        let a = curve[i];
        let b = curve[(i + 1) % n];
        if segment_distance(point, a, b) <= tol {
            return Err(Error::PointOnCurve { x: point.x, y: point.y });
        }
        let side = (b - a).cross(point - a);
        if a.y <= point.y {
            if b.y > point.y && side > 0.0 {
                w += 1;
            }
        } else if b.y <= point.y && side < 0.0 {
            w -= 1;
        }
    }
    Ok(w)
}

/// Bounding-box diagonal of a point set.
pub fn polyline_diameter(curve: &[Vec2]) -> f64 {
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in curve {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (hi - lo).norm()
}

pub fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

/// Jacobian and Dirichlet density of `psi e^{i gamma}` from polar partial derivatives.
///
/// Returns `((psi / r)(psi_r gamma_theta - psi_theta gamma_r),
/// psi_r^2 + (psi gamma_r)^2 + psi_theta^2 / r^2 + (psi gamma_theta)^2 / r^2)`.
pub fn polar_densities(
    psi_r: f64,
    psi_theta: f64,
    gamma_r: f64,
    gamma_theta: f64,
    psi: f64,
    r: f64,
) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    let jac = psi / r * (psi_r * gamma_theta - psi_theta * gamma_r);
    let density = psi_r * psi_r + (psi * gamma_r).powi(2) + (psi_theta / r).powi(2) + (psi * gamma_theta / r).powi(2);
    Ok((jac, density))
}
