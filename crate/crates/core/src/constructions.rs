//! Explicit maps and data: the ball-to-square map, the shear and wedge maps, the assembled
//! non-symmetric competitor `u_eps`, the blow-up data `f_eps` and the non-uniqueness datum.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};
use crate::map::{polar_break_distance, Breaks, PlanarMap};
use crate::moser::MoserCorrector;
use crate::quadrature::adaptive;
use crate::radial::{profile_from_datum, Expr, Piece, RadialDatum, RadialProfile};

fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Maps whose branches are glued along known interfaces.
pub trait Piecewise {
    /// Largest disagreement between adjacent branches at `n` samples per interface.
    fn interface_mismatch(&self, n: usize) -> f64;
}

/// Ball-to-square map `eta`: `B_r` onto the square `R^{-1} Q_r`, with `J eta = 2 / pi`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BallToSquare;

pub fn ball_to_square() -> BallToSquare {
    BallToSquare
}

const ETA_C: f64 = 4.0 / (PI * std::f64::consts::SQRT_2);

impl BallToSquare {
    /// Branch `0` for `|y| < |x|`, branch `1` otherwise; both defined off the origin.
    pub fn branch(&self, which: usize, p: Vec2) -> Vec2 {
        let r = p.norm();
        if which == 0 {
            let s = sgn(p.x);
            Vec2::new(s * r * FRAC_1_SQRT_2, s * r * ETA_C * (p.y / p.x).atan())
        } else {
            let s = sgn(p.y);
            Vec2::new(s * r * ETA_C * (p.x / p.y).atan(), s * r * FRAC_1_SQRT_2)
        }
    }

    pub fn inverse(&self, q: Vec2) -> Vec2 {
        let side = q.x.abs().max(q.y.abs());
        if side == 0.0 {
            return Vec2::ZERO;
        }
        let r = std::f64::consts::SQRT_2 * side;
        if q.x.abs() > q.y.abs() {
            let phi = FRAC_PI_4 * q.y / q.x;
            sgn(q.x) * Vec2::from_polar(r, phi)
        } else {
            let phi = FRAC_PI_4 * q.x / q.y;
            sgn(q.y) * Vec2::new(r * phi.sin(), r * phi.cos())
        }
    }
}

impl PlanarMap for BallToSquare {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        if p == Vec2::ZERO {
            return Ok(Vec2::ZERO);
        }
        Ok(self.branch(usize::from(p.y.abs() >= p.x.abs()), p))
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        let r = p.norm();
        if r == 0.0 {
            return Err(Error::OriginEvaluation);
        }
        let (ex, ey) = (p.x / r, p.y / r);
        if p.y.abs() < p.x.abs() {
            let s = sgn(p.x);
            let a = (p.y / p.x).atan();
            Ok(Mat2::from_rows(
                (s * FRAC_1_SQRT_2) * Vec2::new(ex, ey),
                (s * ETA_C) * Vec2::new(ex * a - ey, ey * a + ex),
            ))
        } else {
            let s = sgn(p.y);
            let b = (p.x / p.y).atan();
            Ok(Mat2::from_rows(
                (s * ETA_C) * Vec2::new(ex * b + ey, ey * b - ex),
                (s * FRAC_1_SQRT_2) * Vec2::new(ex, ey),
            ))
        }
    }

    fn breaks(&self) -> Breaks {
        Breaks { radii: Vec::new(), angles: (0..4).map(|k| FRAC_PI_4 + 0.5 * PI * k as f64).collect() }
    }
}

impl Piecewise for BallToSquare {
    fn interface_mismatch(&self, n: usize) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..4 {
            let dir = Vec2::from_polar(1.0, FRAC_PI_4 + 0.5 * PI * k as f64);
            for i in 1..=n {
                let p = (3.0 * i as f64 / n as f64) * dir;
                worst = worst.max((self.branch(0, p) - self.branch(1, p)).norm());
            }
        }
        worst
    }
}

/// `R eta`, where `R` is the rotation by `pi / 4`; maps `S_r` onto `{|w|_1 = r}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RotatedEta;

fn rot() -> Mat2 {
    Mat2::rotation(FRAC_PI_4)
}

impl RotatedEta {
    pub fn inverse(&self, w: Vec2) -> Vec2 {
        BallToSquare.inverse(w.rotate(-FRAC_PI_4))
    }

    /// Derivative of the inverse at `w`.
    pub fn inverse_jacobian(&self, w: Vec2) -> Result<Mat2> {
        let z = self.inverse(w);
        let d = self.jacobian_matrix(z)?;
        d.inverse().ok_or(Error::EvaluationFailure { x: w.x, y: w.y })
    }
}

impl PlanarMap for RotatedEta {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        Ok(BallToSquare.eval(p)?.rotate(FRAC_PI_4))
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        Ok(rot() * BallToSquare.jacobian_matrix(p)?)
    }

    fn breaks(&self) -> Breaks {
        BallToSquare.breaks()
    }
}

/// The shear map `v_eps` on `Q_2`: `(x, eps y)` on `Q_1` and a vertical shear on `A_1(1, 2)`
/// that is the identity where `|x| > 1`.
#[derive(Debug, Clone, Copy)]
pub struct ShearMap {
    pub eps: f64,
}

pub fn shear_map(eps: f64) -> ShearMap {
    ShearMap { eps }
}

impl ShearMap {
    fn outer(&self, p: Vec2) -> Vec2 {
        if p.x.abs() >= 1.0 {
            p
        } else {
            let shift = (1.0 - self.eps) * (1.0 - p.x.abs());
            Vec2::new(p.x, p.y - sgn(p.y) * shift)
        }
    }

    /// Closed-form `J v_eps`: `eps` on `Q_1`, one elsewhere.
    pub fn jacobian_value(&self, p: Vec2) -> f64 {
        if p.l1_norm() < 1.0 {
            self.eps
        } else {
            1.0
        }
    }
}

impl PlanarMap for ShearMap {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        if p.l1_norm() < 1.0 {
            Ok(Vec2::new(p.x, self.eps * p.y))
        } else {
            Ok(self.outer(p))
        }
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        if p.l1_norm() < 1.0 {
            Ok(Mat2::diag(1.0, self.eps))
        } else if p.x.abs() >= 1.0 {
            Ok(Mat2::IDENTITY)
        } else {
            Ok(Mat2::new(1.0, 0.0, sgn(p.y) * (1.0 - self.eps) * sgn(p.x), 1.0))
        }
    }

    fn breaks(&self) -> Breaks {
        Breaks { radii: Vec::new(), angles: (0..4).map(|k| 0.5 * PI * k as f64).collect() }
    }

    fn break_distance(&self, p: Vec2) -> f64 {
        shear_break_distance(p)
    }
}

/// Distance to the kink set of `v_eps`: the diamonds `|z|_1 in {1, 2}`, the axes and `|x| = 1`.
fn shear_break_distance(p: Vec2) -> f64 {
    let l1 = p.l1_norm();
    let diamond = ((l1 - 1.0).abs()).min((l1 - 2.0).abs()) * FRAC_1_SQRT_2;
    diamond.min(p.x.abs()).min(p.y.abs()).min((p.x.abs() - 1.0).abs())
}

impl Piecewise for ShearMap {
    fn interface_mismatch(&self, n: usize) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..n {
            let x = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
            for sy in [1.0, -1.0] {
                let p = Vec2::new(x, sy * (1.0 - x.abs()));
                let inner = Vec2::new(p.x, self.eps * p.y);
                worst = worst.max((inner - self.outer(p)).norm());
            }
            // |x| = 1 inside A_1(1, 2)
            let y = x;
            for sx in [1.0, -1.0] {
                let p = Vec2::new(sx, y);
                let sheared = Vec2::new(p.x, p.y - sgn(p.y) * (1.0 - self.eps) * (1.0 - p.x.abs()));
                worst = worst.max((sheared - p).norm());
            }
        }
        worst
    }
}

/// The wedge `Lambda^+ = {x > 0, y > 0, 2 < x + y < 3}` and the map `tau_eps` on it.
#[derive(Debug, Clone, Copy)]
pub struct WedgeMap {
    pub eps: f64,
}

pub fn wedge_map(eps: f64) -> WedgeMap {
    WedgeMap { eps }
}

pub const WEDGE_TOLERANCE: f64 = 1e-9;

pub fn in_wedge(p: Vec2, tol: f64) -> bool {
    p.x >= -tol && p.y >= -tol && p.x + p.y >= 2.0 - tol && p.x + p.y <= 3.0 + tol
}

impl WedgeMap {
    fn branch_index(x: f64) -> usize {
        if x <= 1.0 {
            0
        } else if x <= 2.0 {
            1
        } else {
            2
        }
    }

    /// `tau_eps` by its polynomial formulas, without the domain check.
    pub fn formula(&self, p: Vec2) -> Vec2 {
        self.branch(Self::branch_index(p.x), p)
    }

    pub fn formula_jacobian(&self, p: Vec2) -> Mat2 {
        self.branch_jacobian(Self::branch_index(p.x), p)
    }

    /// Branch `0` (`x <= 1`), `1` (`1 < x <= 2`) or `2` (`x > 2`), evaluated anywhere.
    pub fn branch(&self, which: usize, p: Vec2) -> Vec2 {
        let (x, y, e) = (p.x, p.y, self.eps);
        let t2 = if which == 0 {
            0.5 * (2.0 * e * (x - 1.0) * (x + y - 3.0) - x * x + 3.0 * x + y * y - y)
        } else if which == 1 {
            0.5 * (x * (2.0 * y - 5.0) + x * x + y * y - 3.0 * y + 6.0)
        } else {
            0.5 * y * (x + y - 1.0)
        };
        Vec2::new(x, t2)
    }

    pub fn branch_jacobian(&self, which: usize, p: Vec2) -> Mat2 {
        let (x, y, e) = (p.x, p.y, self.eps);
        let (dx, dy) = if which == 0 {
            (e * (2.0 * x + y - 4.0) - x + 1.5, e * (x - 1.0) + y - 0.5)
        } else if which == 1 {
            (x + y - 2.5, x + y - 1.5)
        } else {
            (0.5 * y, 0.5 * (x - 1.0) + y)
        };
        Mat2::new(1.0, 0.0, dx, dy)
    }

    /// Closed-form `J tau_eps`.
    pub fn jacobian_value(&self, p: Vec2) -> f64 {
        self.formula_jacobian(p).a22
    }

    /// `(6 - eps) / 5`: image area over wedge area.
    pub fn target_constant(&self) -> f64 {
        (6.0 - self.eps) / 5.0
    }

    /// `min J tau_eps` over a sample grid of the closed wedge; at least `1/2`.
    pub fn min_jacobian(&self, n: usize) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let s = 2.0 + i as f64 / n as f64;
                let t = j as f64 / n as f64;
                m = m.min(self.jacobian_value(Vec2::new(s * (1.0 - t), s * t)));
            }
        }
        m
    }

    /// Largest jump of `J tau_eps` across `x = 1` and `x = 2`.
    pub fn jacobian_jump(&self, n: usize) -> f64 {
        let mut worst = 0.0f64;
        for (left, xb) in [(0usize, 1.0f64), (1, 2.0)] {
            for i in 0..=n {
                let p = Vec2::new(xb, (2.0 - xb).max(0.0) + i as f64 / n as f64);
                let jump = self.branch_jacobian(left, p).a22 - self.branch_jacobian(left + 1, p).a22;
                worst = worst.max(jump.abs());
            }
        }
        worst
    }
}

impl PlanarMap for WedgeMap {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        if !in_wedge(p, WEDGE_TOLERANCE) {
            return Err(Error::OutsideWedge { x: p.x, y: p.y });
        }
        Ok(self.formula(p))
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        if !in_wedge(p, WEDGE_TOLERANCE) {
            return Err(Error::OutsideWedge { x: p.x, y: p.y });
        }
        Ok(self.formula_jacobian(p))
    }

    fn break_distance(&self, p: Vec2) -> f64 {
        (p.x - 1.0).abs().min((p.x - 2.0).abs())
    }
}

impl Piecewise for WedgeMap {
    fn interface_mismatch(&self, n: usize) -> f64 {
        let mut worst = 0.0f64;
        for (left, xb) in [(0usize, 1.0f64), (1, 2.0)] {
            for i in 0..=n {
                let p = Vec2::new(xb, (2.0 - xb).max(0.0) + i as f64 / n as f64);
                worst = worst.max((self.branch(left, p) - self.branch(left + 1, p)).norm());
            }
        }
        worst
    }
}

/// Inner-edge data `gamma_eps(x, y) = (x, 1 + eps (y - 1))`.
pub fn gamma_eps(eps: f64, p: Vec2) -> Vec2 {
    Vec2::new(p.x, 1.0 + eps * (p.y - 1.0))
}

/// Extension of a first-quadrant map by reflections along the axes:
/// `u(+-x, +-y) = (+-u^1(x, y), +-u^2(x, y))`.
#[derive(Debug, Clone)]
pub struct Reflected<M> {
    pub inner: M,
}

/// Checks that `u^2 = 0` on the `x`-axis range and `u^1 = 0` on the `y`-axis range, so that the
/// reflected map is continuous.
pub fn reflect_extend<M: PlanarMap>(u: M, x_axis: (f64, f64), y_axis: (f64, f64)) -> Result<Reflected<M>> {
    const N: usize = 1000;
    let mut worst = 0.0f64;
    for i in 0..=N {
        let t = i as f64 / N as f64;
        let px = Vec2::new(x_axis.0 + t * (x_axis.1 - x_axis.0), 0.0);
        let py = Vec2::new(0.0, y_axis.0 + t * (y_axis.1 - y_axis.0));
        worst = worst.max(u.eval(px)?.y.abs()).max(u.eval(py)?.x.abs());
    }
    if worst > 1e-8 {
        return Err(Error::IncompatibleTrace(worst));
    }
    Ok(Reflected { inner: u })
}

impl<M: PlanarMap> PlanarMap for Reflected<M> {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        let (sx, sy) = (sgn(p.x), sgn(p.y));
        let v = self.inner.eval(Vec2::new(p.x.abs(), p.y.abs()))?;
        Ok(Vec2::new(sx * v.x, sy * v.y))
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        let s = Mat2::diag(sgn(p.x), sgn(p.y));
        Ok(s * self.inner.jacobian_matrix(Vec2::new(p.x.abs(), p.y.abs()))? * s)
    }

    fn breaks(&self) -> Breaks {
        Breaks { radii: self.inner.breaks().radii, angles: (0..4).map(|k| 0.5 * PI * k as f64).collect() }
    }

    fn break_distance(&self, p: Vec2) -> f64 {
        self.inner.break_distance(Vec2::new(p.x.abs(), p.y.abs())).min(p.x.abs()).min(p.y.abs())
    }
}

/// `tau_eps` composed with a flow map correcting its Jacobian toward a constant.
#[derive(Clone)]
pub struct CorrectedWedge {
    pub tau: WedgeMap,
    pub sigma: Arc<MoserCorrector>,
}

impl PlanarMap for CorrectedWedge {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        if !in_wedge(p, WEDGE_TOLERANCE) {
            return Err(Error::OutsideWedge { x: p.x, y: p.y });
        }
        Ok(self.tau.formula(self.sigma.eval(p)?))
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        let q = self.sigma.eval(p)?;
        Ok(self.tau.formula_jacobian(q) * self.sigma.jacobian_matrix(p)?)
    }

    fn break_distance(&self, p: Vec2) -> f64 {
        self.tau.break_distance(p).min(self.sigma.break_distance(p))
    }
}

/// `u~_eps` on the plane: `v_eps` on `Q_2`, the reflected wedge map on `A_1(2, 3)`, identity beyond.
#[derive(Clone)]
pub struct SquareModel {
    pub shear: ShearMap,
    pub wedge: Reflected<Arc<dyn PlanarMap>>,
}

impl PlanarMap for SquareModel {
    fn eval(&self, w: Vec2) -> Result<Vec2> {
        let l1 = w.l1_norm();
        if l1 <= 2.0 {
            self.shear.eval(w)
        } else if l1 <= 3.0 {
            self.wedge.eval(w)
        } else {
            Ok(w)
        }
    }

    fn jacobian_matrix(&self, w: Vec2) -> Result<Mat2> {
        let l1 = w.l1_norm();
        if l1 < 2.0 {
            self.shear.jacobian_matrix(w)
        } else if l1 < 3.0 {
            self.wedge.jacobian_matrix(w)
        } else {
            Ok(Mat2::IDENTITY)
        }
    }

    fn breaks(&self) -> Breaks {
        Breaks { radii: Vec::new(), angles: (0..4).map(|k| 0.5 * PI * k as f64).collect() }
    }

    fn break_distance(&self, w: Vec2) -> f64 {
        let l1 = w.l1_norm();
        let diamonds = [1.0, 2.0, 3.0].iter().map(|r| (l1 - r).abs()).fold(f64::INFINITY, f64::min) * FRAC_1_SQRT_2;
        let ax = w.x.abs();
        diamonds.min(ax).min(w.y.abs()).min((ax - 1.0).abs()).min((ax - 2.0).abs()).min(if (2.0..=3.0).contains(&l1) {
            self.wedge.break_distance(w)
        } else {
            f64::INFINITY
        })
    }
}

/// Upper bound for the Lipschitz constant of `R eta` (and of `eta`).
pub const ETA_LIPSCHITZ: f64 = 1.5;

/// `u_eps = (R eta)^{-1} o u~_eps o (R eta)` on the plane; the identity outside `B_3`.
#[derive(Clone)]
pub struct Counterexample {
    pub eps: f64,
    pub model: SquareModel,
    pub corrected: bool,
}

impl Counterexample {
    /// `J u~_eps (R eta z)`, which equals `J u_eps (z)`.
    pub fn model_jacobian(&self, z: Vec2) -> Result<f64> {
        Ok(self.model.jacobian_matrix(RotatedEta.eval(z)?)?.det())
    }
}

impl PlanarMap for Counterexample {
    fn eval(&self, z: Vec2) -> Result<Vec2> {
        let w = RotatedEta.eval(z)?;
        Ok(RotatedEta.inverse(self.model.eval(w)?))
    }

    fn jacobian_matrix(&self, z: Vec2) -> Result<Mat2> {
        let w = RotatedEta.eval(z)?;
        let y = self.model.eval(w)?;
        Ok(RotatedEta.inverse_jacobian(y)? * self.model.jacobian_matrix(w)? * RotatedEta.jacobian_matrix(z)?)
    }

    fn breaks(&self) -> Breaks {
        Breaks { radii: vec![1.0, 2.0, 3.0], angles: (0..8).map(|k| FRAC_PI_4 * k as f64).collect() }
    }

    fn break_distance(&self, z: Vec2) -> f64 {
        let polar = polar_break_distance(&self.breaks(), z);
        match RotatedEta.eval(z) {
            Ok(w) => polar.min(self.model.break_distance(w) / ETA_LIPSCHITZ),
            Err(_) => 0.0,
        }
    }
}

/// `f_eps = eps 1_{B_1} + 1_{A(1,2)} + (6 - eps)/5 1_{A(2,3)}`.
pub fn f_eps(eps: f64) -> RadialDatum {
    RadialDatum::piecewise_constant(&[0.0, 1.0, 2.0, 3.0], &[eps, 1.0, (6.0 - eps) / 5.0]).expect("valid datum")
}

pub fn rho_eps(eps: f64) -> RadialProfile {
    profile_from_datum(&f_eps(eps), 1).expect("f_eps is nonnegative")
}

/// `u_eps`; without a corrector the outer ring uses `tau_eps` directly.
pub fn assemble_counterexample(eps: f64, corrector: Option<Arc<MoserCorrector>>) -> Result<Counterexample> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::PreconditionViolated(format!("eps = {eps} outside [0, 1]")));
    }
    let tau = wedge_map(eps);
    let corrected = corrector.is_some();
    let wedge: Arc<dyn PlanarMap> = match corrector {
        Some(sigma) => Arc::new(CorrectedWedge { tau, sigma }),
        None => Arc::new(tau),
    };
    let wedge = reflect_extend(wedge, (2.0, 3.0), (2.0, 3.0))?;
    let model = SquareModel { shear: shear_map(eps), wedge };
    let mismatch = gluing_mismatch(&model, 1000)?;
    if mismatch > 1e-8 {
        return Err(Error::GluingMismatch(mismatch));
    }
    Ok(Counterexample { eps, model, corrected })
}

/// Disagreement of adjacent pieces of `u~_eps` along `|w|_1 = 2` and `|w|_1 = 3`.
pub fn gluing_mismatch(model: &SquareModel, n: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for q in 0..4 {
        let a = Vec2::from_polar(1.0, 0.5 * PI * q as f64);
        let b = Vec2::from_polar(1.0, 0.5 * PI * (q + 1) as f64);
        let (a, b) = (Vec2::new(a.x.round(), a.y.round()), Vec2::new(b.x.round(), b.y.round()));
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let e = (1.0 - t) * a + t * b;
            let inner = 2.0 * e;
            worst = worst.max((model.shear.eval(inner)? - model.wedge.eval(inner)?).norm());
            let outer = 3.0 * e;
            worst = worst.max((model.wedge.eval(outer)? - outer).norm());
        }
    }
    Ok(worst)
}

/// Largest `|u(z) - z|` over `n` points of `S_3`.
pub fn boundary_residual<M: PlanarMap + ?Sized>(u: &M, n: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in 0..n {
        let z = Vec2::from_polar(3.0, std::f64::consts::TAU * j as f64 / n as f64);
        worst = worst.max((u.eval(z)? - z).norm());
    }
    Ok(worst)
}

/// Sampled grid `x,y,ux,uy,J` over `[lo, hi]^2`; points where the map fails are skipped.
pub fn write_grid_csv<M: PlanarMap + ?Sized, W: Write>(
    u: &M,
    lo: f64,
    hi: f64,
    n: usize,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "x,y,ux,uy,J")?;
    for j in 0..n {
        for i in 0..n {
            let p =
                Vec2::new(lo + (hi - lo) * (i as f64 + 0.5) / n as f64, lo + (hi - lo) * (j as f64 + 0.5) / n as f64);
            if let (Ok(v), Ok(d)) = (u.eval(p), u.jacobian_matrix(p)) {
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", p.x, p.y, v.x, v.y, d.det())?;
            }
        }
    }
    Ok(())
}

/// Residuals of the constraints the non-uniqueness datum must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    /// `|int_{B_2} f| / pi`, by adaptive quadrature.
    pub inner_integral: f64,
    /// `|int_{R^2} f| / pi`.
    pub total_integral: f64,
    /// Largest value or slope jump at `r in {1, 2, 3}`.
    pub c1_jump: f64,
    /// Largest `|f(r) - (4 - r)^+|` for `r > 3`.
    pub tail_error: f64,
    pub sign_checks_passed: bool,
    /// Slope jump at `r = 4`, forced by the `(4 - r)^+` tail.
    pub kink_at_four: f64,
}

impl ConstraintReport {
    pub const TOLERANCE: f64 = 1e-8;

    pub fn passes(&self) -> bool {
        self.inner_integral < Self::TOLERANCE
            && self.total_integral < Self::TOLERANCE
            && self.c1_jump < Self::TOLERANCE
            && self.tail_error < Self::TOLERANCE
            && self.sign_checks_passed
    }
}

fn nonuniqueness_pieces(b: f64, m: f64) -> Vec<Piece> {
    let a = 3.5 * b;
    vec![
        Piece {
            r_min: 0.0,
            r_max: Some(1.0),
            expr: Expr::Poly { center: 0.0, coeffs: vec![-a, 0.0, 2.0 * a, 0.0, -a] },
        },
        Piece { r_min: 1.0, r_max: Some(2.0), expr: Expr::Poly { center: 1.0, coeffs: vec![0.0, 0.0, b] } },
        Piece {
            r_min: 2.0,
            r_max: Some(3.0),
            expr: Expr::Poly { center: 2.0, coeffs: vec![b, 2.0 * b, -7.0 * b + 4.0 + m, 4.0 * b - 3.0 - 2.0 * m, m] },
        },
        Piece { r_min: 3.0, r_max: Some(4.0), expr: Expr::Affine { a: 4.0, b: -1.0 } },
        Piece { r_min: 4.0, r_max: None, expr: Expr::Const(0.0) },
    ]
}

/// A `C^1` piecewise-polynomial datum with `f < 0` on `(0, 1)`, `f > 0` on `(1, 2)`,
/// `f = (4 - r)^+` beyond 3 and vanishing integrals over `B_2` and the plane.
///
/// On `(0, 1)` it is `-a (1 - r^2)^2`, on `(1, 2)` it is `b (r - 1)^2` with `a = 7b/2`, and on
/// `(2, 3)` a quartic bridge whose free coefficient carries the mass balancing the tail.
pub fn nonuniqueness_datum() -> Result<(RadialDatum, ConstraintReport)> {
    let b = 1.0;
    // the bridge mass is affine in the free coefficient m
    let bridge = |m: f64| -> Result<f64> {
        let d = RadialDatum::new(nonuniqueness_pieces(b, m), 1.0)?;
        Ok(d.cumulative(3.0) - d.cumulative(2.0))
    };
    let (i0, i1) = (bridge(0.0)?, bridge(1.0)?);
    if i1 == i0 {
        return Err(Error::ConstraintInfeasible("bridge mass does not depend on m".into()));
    }
    let m = (-10.0 / 3.0 - i0) / (i1 - i0);
    let datum = RadialDatum::new(nonuniqueness_pieces(b, m), 1.0)?;
    let report = constraint_report(&datum);
    if !report.passes() {
        return Err(Error::ConstraintInfeasible(format!("{report:?}")));
    }
    Ok((datum, report))
}

/// Independent quadrature audit of the non-uniqueness constraints.
pub fn constraint_report(f: &RadialDatum) -> ConstraintReport {
    let quad = |a: f64, b: f64| adaptive(|r| 2.0 * r * f.value(r), a, b, 1e-14, 1e-15).value;
    let inner: f64 = quad(0.0, 1.0) + quad(1.0, 2.0);
    let total = inner + quad(2.0, 3.0) + quad(3.0, 4.0);
    let h = 1e-7;
    let mut c1_jump = 0.0f64;
    for r in [1.0, 2.0, 3.0] {
        let value_gap = (f.value(r - 1e-12) - f.value(r)).abs();
        let slope_gap = (f.derivative(r - h) - f.derivative(r + h)).abs() - 4.0 * h * 40.0;
        c1_jump = c1_jump.max(value_gap).max(slope_gap.max(0.0));
    }
    let kink_at_four = (f.derivative(4.0 - h) - f.derivative(4.0 + h)).abs();
    let mut tail_error = 0.0f64;
    let mut signs = true;
    for i in 1..1024 {
        let t = i as f64 / 1024.0;
        signs &= f.value(t) < 0.0 && f.value(1.0 + t) > 0.0 && f.value(3.0 + t) > 0.0;
        for r in [3.0 + t, 4.0 + 3.0 * t] {
            tail_error = tail_error.max((f.value(r) - (4.0 - r).max(0.0)).abs());
        }
    }
    ConstraintReport {
        inner_integral: inner.abs(),
        total_integral: total.abs(),
        c1_jump,
        tail_error,
        sign_checks_passed: signs,
        kink_at_four,
    }
}

/// The degree `-1` profile of the non-uniqueness datum restricted to `B_2`.
pub fn nonuniqueness_inner_profile(f: &RadialDatum) -> Result<RadialProfile> {
    profile_from_datum(&f.truncate(2.0)?, -1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{derivative_consistency, jacobian_residual, lipschitz_estimate};
    use crate::geometry::fd_jacobian;
    use crate::region::{wedge_polygon, Region};
    use crate::sampling::Halton2;
    use proptest::prelude::*;

    #[test]
    fn eta_examples() {
        let e = BallToSquare.eval(Vec2::new(1.0, 0.0)).unwrap();
        assert!((e - Vec2::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        let w = RotatedEta.eval(Vec2::new(1.0, 0.0)).unwrap();
        assert!((w - Vec2::new(0.5, 0.5)).norm() < 1e-15);
        assert!(matches!(BallToSquare.jacobian_matrix(Vec2::ZERO), Err(Error::OriginEvaluation)));
        assert_eq!(BallToSquare.eval(Vec2::ZERO).unwrap(), Vec2::ZERO);
        assert!(BallToSquare.interface_mismatch(1000) < 1e-12);
    }

    #[test]
    fn eta_jacobian_and_norm_identity() {
        let d = Region::disc(3.0);
        let res = jacobian_residual(&BallToSquare, |_| 2.0 / PI, &d, 20_000, 3);
        assert!(res.max < 1e-5, "{res:?}");
        assert!(derivative_consistency(&BallToSquare, &d, 5000, 4).max < 1e-5);
        for (s, t) in Halton2::new(5).take(10_000) {
            let z = Vec2::new(6.0 * s - 3.0, 6.0 * t - 3.0);
            let w = RotatedEta.eval(z).unwrap();
            assert!((w.l1_norm() - z.norm()).abs() < 1e-10 * z.norm().max(1.0));
            assert!((RotatedEta.inverse(w) - z).norm() < 1e-12 * z.norm().max(1.0));
        }
    }

    #[test]
    fn eta_lipschitz_bounded() {
        let d = Region::disc(1.0);
        let a = lipschitz_estimate(&BallToSquare, &d, 2000, 1);
        let b = lipschitz_estimate(&BallToSquare, &d, 4000, 1);
        assert!((a - b).abs() < 0.05 * b);
        for (s, t) in Halton2::new(2).take(5000) {
            let z = Vec2::from_polar(t.max(1e-3), 6.3 * s);
            let m = BallToSquare.jacobian_matrix(z).unwrap();
            // operator norm from the singular values
            let n2 = m.norm_sq();
            let op = (0.5 * (n2 + (n2 * n2 - 4.0 * m.det().powi(2)).max(0.0).sqrt())).sqrt();
            assert!(op <= ETA_LIPSCHITZ);
        }
    }

    #[test]
    fn shear_examples() {
        let v = shear_map(0.5);
        assert_eq!(v.eval(Vec2::new(0.5, 0.0)).unwrap(), Vec2::new(0.5, 0.0));
        assert_eq!(v.eval(Vec2::new(0.5, 0.4)).unwrap(), Vec2::new(0.5, 0.2));
        for eps in [0.0, 0.1, 0.5, 1.0] {
            let v = shear_map(eps);
            assert!(v.interface_mismatch(1000) < 1e-12);
            let res = jacobian_residual(&v, |p| v.jacobian_value(p), &Region::L1Ball { radius: 2.0 }, 20_000, 1);
            assert!(res.max < 1e-6, "{res:?}");
        }
    }

    #[test]
    fn shear_boundary_matches_wedge_data() {
        // on the outer diamond v_eps is the identity only where |x| >= 1; elsewhere it is gamma_eps
        let eps = 0.3;
        let v = shear_map(eps);
        let tau = wedge_map(eps);
        for i in 0..=100 {
            let x = 2.0 * i as f64 / 100.0;
            let p = Vec2::new(x, 2.0 - x);
            let vv = v.eval(p).unwrap();
            assert!((vv - tau.eval(p).unwrap()).norm() < 1e-12);
            if x <= 1.0 {
                assert!((vv - gamma_eps(eps, p)).norm() < 1e-12);
            } else {
                assert!((vv - p).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn wedge_examples() {
        let tau = wedge_map(0.3);
        assert!((tau.jacobian_value(Vec2::new(1.5, 1.0)) - 1.0).abs() < 1e-15);
        assert!((tau.jacobian_value(Vec2::new(2.5, 0.5)) - 1.25).abs() < 1e-15);
        assert!(matches!(tau.eval(Vec2::new(0.5, 0.5)), Err(Error::OutsideWedge { .. })));
        for eps in [0.0, 0.5, 1.0] {
            let tau = wedge_map(eps);
            assert!(tau.min_jacobian(200) >= 0.5 - 1e-12);
            assert!(tau.jacobian_jump(200) < 1e-12);
            assert!(tau.interface_mismatch(200) < 1e-12);
            let res = jacobian_residual(&tau, |p| tau.jacobian_value(p), &wedge_polygon(), 20_000, 2);
            assert!(res.max < 1e-5, "{res:?}");
            assert!(derivative_consistency(&tau, &wedge_polygon(), 5000, 2).max < 1e-5);
            // identity on the outer edge, zero traces on the axes
            for i in 0..=50 {
                let t = 3.0 * i as f64 / 50.0;
                let p = Vec2::new(t, 3.0 - t);
                assert!((tau.eval(p).unwrap() - p).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn reflection_examples() {
        let id = reflect_extend(crate::map::Identity, (0.0, 1.0), (0.0, 1.0)).unwrap();
        for p in [Vec2::new(0.3, -0.7), Vec2::new(-1.2, 0.4), Vec2::new(-0.1, -0.2)] {
            assert_eq!(id.eval(p).unwrap(), p);
        }
        let tau = wedge_map(0.4);
        let ext = reflect_extend(tau, (2.0, 3.0), (2.0, 3.0)).unwrap();
        for (s, t) in Halton2::new(9).take(500) {
            let sc = 2.0 + s;
            let p = Vec2::new(sc * (1.0 - t), sc * t);
            if p.x < 1e-3 || p.y < 1e-3 || (p.x - 1.0).abs() < 1e-3 || (p.x - 2.0).abs() < 1e-3 {
                continue;
            }
            let base = ext.jacobian_matrix(p).unwrap().det();
            for q in [Vec2::new(p.x, -p.y), Vec2::new(-p.x, p.y), Vec2::new(-p.x, -p.y)] {
                let d = fd_jacobian(|z| ext.eval(z), q).unwrap().det();
                assert!((d - base).abs() < 1e-6);
            }
        }
        for i in 0..=100 {
            let x = 2.0 + i as f64 / 100.0;
            let up = ext.eval(Vec2::new(x, 1e-300)).unwrap();
            let down = ext.eval(Vec2::new(x, -1e-300)).unwrap();
            assert!((up - down).norm() < 1e-8);
        }
        let bad = crate::map::FnMap::new(|p: Vec2| Vec2::new(p.x + 1.0, p.y));
        assert!(matches!(reflect_extend(bad, (0.0, 1.0), (0.0, 1.0)), Err(Error::IncompatibleTrace(_))));
    }

    #[test]
    fn f_eps_examples() {
        let one = f_eps(1.0);
        for r in [0.2, 1.5, 2.9] {
            assert_eq!(one.value(r), 1.0);
        }
        for eps in [0.0, 0.3, 0.7] {
            assert!((f_eps(eps).ball_average(3.0) - 1.0).abs() < 1e-15);
        }
        assert!((rho_eps(0.1).rho(1.5) - 1.35f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn counterexample_assembly() {
        let u1 = assemble_counterexample(1.0, None).unwrap();
        assert!(boundary_residual(&u1, 2000).unwrap() < 1e-8);
        let res = jacobian_residual(&u1, |_| 1.0, &Region::disc(2.0), 20_000, 1);
        assert!(res.max < 1e-5, "{res:?}");
        for eps in [0.1, 0.01] {
            let u = assemble_counterexample(eps, None).unwrap();
            let f = f_eps(eps);
            let res = jacobian_residual(&u, |z| f.value(z.norm()), &Region::disc(2.0), 20_000, 7);
            assert!(res.max < 1e-5, "eps {eps}: {res:?}");
            assert!(boundary_residual(&u, 2000).unwrap() < 1e-8);
        }
    }

    #[test]
    fn counterexample_conjugation_identity() {
        let u = assemble_counterexample(0.2, None).unwrap();
        assert!(derivative_consistency(&u, &Region::disc(3.0), 5000, 11).max < 1e-4);
        for (s, t) in Halton2::new(3).take(2000) {
            let z = Vec2::from_polar(3.0 * s.sqrt(), std::f64::consts::TAU * t);
            if u.break_distance(z) < 1e-3 {
                continue;
            }
            let fd = fd_jacobian(|q| u.eval(q), z).unwrap().det();
            assert!((fd - u.model_jacobian(z).unwrap()).abs() < 1e-5);
        }
    }

    #[test]
    fn counterexample_lipschitz_stable() {
        let d = Region::disc(3.0);
        let ls: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&e| lipschitz_estimate(&assemble_counterexample(e, None).unwrap(), &d, 20_000, 5))
            .collect();
        let (lo, hi) = ls.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi < 2.0 * lo, "{ls:?}");
    }

    #[test]
    fn nonuniqueness_constraints() {
        let (f, rep) = nonuniqueness_datum().unwrap();
        assert!(rep.passes(), "{rep:?}");
        assert!((f.value(3.5) - 0.5).abs() < 1e-15);
        assert!(
            f.cumulative(2.0).abs() < 1e-12 && f.total_cumulative().abs() < 1e-12,
            "{} {}",
            f.cumulative(2.0),
            f.total_cumulative()
        );
        assert!(rep.kink_at_four > 0.9);
    }

    /// Simpson's rule on a mesh graded geometrically toward `r = 2`, with `rho^2` from its own
    /// running Simpson integral of `-2 r f`.
    fn inner_energy_oracle(f: &RadialDatum, delta: f64) -> f64 {
        let rho_sq = |r: f64| {
            let n = 2000;
            let h = r / n as f64;
            let g = |s: f64| -2.0 * s * f.value(s);
            let mut acc = g(0.0) + g(r);
            for i in 1..n {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
            }
            acc * h / 3.0
        };
        let integrand = |r: f64| (r * f.value(r)).powi(2) / rho_sq(r);
        // substitute r = 2 - e^{-t}
        let (t0, t1) = (0.0f64, (1.0 / delta).ln());
        let n = 4000;
        let h = (t1 - t0) / n as f64;
        let g = |t: f64| {
            let r = 2.0 - (-t).exp();
            integrand(r) * (-t).exp()
        };
        let mut acc = g(t0) + g(t1);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(t0 + i as f64 * h);
        }
        let tail = adaptive(integrand, 0.0, 1.0, 1e-10, 0.0).value;
        acc * h / 3.0 + tail
    }

    #[test]
    fn nonuniqueness_inner_profile_blows_up() {
        let (f, _) = nonuniqueness_datum().unwrap();
        let prof = nonuniqueness_inner_profile(&f).unwrap();
        let deltas = [1e-2, 1e-3, 1e-4, 1e-5];
        let xs: Vec<f64> = deltas.iter().map(|d: &f64| (1.0 / d).ln()).collect();
        let ys: Vec<f64> =
            deltas.iter().map(|&d| crate::radial::truncated_rho_dot_energy(&prof, 0.0, 2.0 - d)).collect();
        let oracle: Vec<f64> = deltas.iter().map(|&d| inner_energy_oracle(&f, d)).collect();
        let slope = crate::stats::ls_slope(&xs, &ys);
        let oracle_slope = crate::stats::ls_slope(&xs, &oracle);
        assert!((slope - oracle_slope).abs() < 0.25 * oracle_slope, "{slope} vs {oracle_slope}");
        assert!((slope - 1.0).abs() < 0.1);
    }

    proptest! {
        #[test]
        fn eta_inverse_round_trip(x in -3.0..3.0f64, y in -3.0..3.0f64) {
            let z = Vec2::new(x, y);
            let back = BallToSquare.inverse(BallToSquare.eval(z).unwrap());
            prop_assert!((back - z).norm() < 1e-12 * z.norm().max(1.0));
        }

        #[test]
        fn reflected_jacobian_preserved(x in 0.05..2.9f64, t in 0.05..0.95f64, eps in 0.0..1.0f64) {
            let s = 2.05 + 0.9 * t;
            let x = x.min(s - 0.05);
            let p = Vec2::new(x, s - x);
            let ext = Reflected { inner: wedge_map(eps) };
            let base = ext.jacobian_matrix(p).unwrap().det();
            for q in [Vec2::new(p.x, -p.y), Vec2::new(-p.x, p.y), Vec2::new(-p.x, -p.y)] {
                prop_assert!((ext.jacobian_matrix(q).unwrap().det() - base).abs() < 1e-14);
            }
        }
    }
}
