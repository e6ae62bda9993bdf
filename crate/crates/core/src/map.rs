//! Evaluatable planar maps.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::Result;
use crate::geometry::{fd_jacobian, Mat2, Vec2};

/// Curves across which a map's derivative may jump.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Breaks {
    /// Origin-centred circles.
    pub radii: Vec<f64>,
    /// Rays from the origin, in radians.
    pub angles: Vec<f64>,
}

/// A map from (part of) the plane to the plane.
pub trait PlanarMap: Send + Sync {
    fn eval(&self, p: Vec2) -> Result<Vec2>;

    /// Derivative matrix; central finite differences unless a closed form is provided.
    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        fd_jacobian(|q| self.eval(q), p)
    }

    fn breaks(&self) -> Breaks {
        Breaks::default()
    }

    /// Angle at which angular quadrature partitions start.
    fn angle_origin(&self) -> f64 {
        0.0
    }

    /// Lower bound on the distance from `p` to the set where the map is not smooth.
    fn break_distance(&self, p: Vec2) -> f64 {
        polar_break_distance(&self.breaks(), p)
    }
}

/// Distance from `p` to the circles and rays of `breaks`.
pub fn polar_break_distance(breaks: &Breaks, p: Vec2) -> f64 {
    let r = p.norm();
    let mut d = f64::INFINITY;
    for &rb in &breaks.radii {
        d = d.min((r - rb).abs());
    }
    for &a in &breaks.angles {
        let dir = Vec2::from_polar(1.0, a);
        let along = p.dot(dir);
        d = d.min(if along > 0.0 { p.cross(dir).abs() } else { r });
    }
    d
}

impl<M: PlanarMap + ?Sized> PlanarMap for Arc<M> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        (**self).eval(p)
    }
    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        (**self).jacobian_matrix(p)
    }
    fn breaks(&self) -> Breaks {
        (**self).breaks()
    }
    fn angle_origin(&self) -> f64 {
        (**self).angle_origin()
    }
    fn break_distance(&self, p: Vec2) -> f64 {
        (**self).break_distance(p)
    }
}

impl<M: PlanarMap + ?Sized> PlanarMap for &M {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        (**self).eval(p)
    }
    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        (**self).jacobian_matrix(p)
    }
    fn breaks(&self) -> Breaks {
        (**self).breaks()
    }
    fn angle_origin(&self) -> f64 {
        (**self).angle_origin()
    }
    fn break_distance(&self, p: Vec2) -> f64 {
        (**self).break_distance(p)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl PlanarMap for Identity {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        Ok(p)
    }
    fn jacobian_matrix(&self, _p: Vec2) -> Result<Mat2> {
        Ok(Mat2::IDENTITY)
    }
}

/// `z -> A z`.
#[derive(Debug, Clone, Copy)]
pub struct Linear(pub Mat2);

impl PlanarMap for Linear {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        Ok(self.0.mul_vec(p))
    }
    fn jacobian_matrix(&self, _p: Vec2) -> Result<Mat2> {
        Ok(self.0)
    }
}

/// `z -> A u(z)` for a fixed matrix `A`.
pub struct PostLinear<M> {
    pub matrix: Mat2,
    pub inner: M,
}

impl<M: PlanarMap> PlanarMap for PostLinear<M> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        Ok(self.matrix.mul_vec(self.inner.eval(p)?))
    }
    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        Ok(self.matrix * self.inner.jacobian_matrix(p)?)
    }
    fn breaks(&self) -> Breaks {
        self.inner.breaks()
    }
    fn angle_origin(&self) -> f64 {
        self.inner.angle_origin()
    }
    fn break_distance(&self, p: Vec2) -> f64 {
        self.inner.break_distance(p)
    }
}

/// Precomposition with a rotation: `u_alpha(z) = u(e^{i alpha} z)`.
pub struct Rotated<M> {
    pub inner: M,
    pub alpha: f64,
}

pub fn rotated_family<M: PlanarMap>(inner: M, alpha: f64) -> Rotated<M> {
    Rotated { inner, alpha }
}

impl<M: PlanarMap> PlanarMap for Rotated<M> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        self.inner.eval(p.rotate(self.alpha))
    }
    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        Ok(self.inner.jacobian_matrix(p.rotate(self.alpha))? * Mat2::rotation(self.alpha))
    }
    fn breaks(&self) -> Breaks {
        let b = self.inner.breaks();
        Breaks { radii: b.radii, angles: b.angles.iter().map(|a| (a - self.alpha).rem_euclid(TAU)).collect() }
    }
    fn angle_origin(&self) -> f64 {
        (self.inner.angle_origin() - self.alpha).rem_euclid(TAU)
    }
    fn break_distance(&self, p: Vec2) -> f64 {
        self.inner.break_distance(p.rotate(self.alpha))
    }
}

/// Adapter for closures; derivatives by finite differences.
pub struct FnMap<F> {
    pub f: F,
    pub breaks: Breaks,
}

impl<F> FnMap<F> {
    pub fn new(f: F) -> Self {
        Self { f, breaks: Breaks::default() }
    }
}

impl<F: Fn(Vec2) -> Vec2 + Send + Sync> PlanarMap for FnMap<F> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        Ok((self.f)(p))
    }
    fn breaks(&self) -> Breaks {
        self.breaks.clone()
    }
}
