//! Radially symmetric data, generalised radial stretchings and the average condition.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fd_jacobian, Mat2, Vec2};
use crate::map::{Breaks, PlanarMap};
use crate::quadrature::{adaptive, graded_panels};

/// Closed-form expression for one piece of a radial datum, as a function of `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    /// `coef * r^exp`, `exp > -2`.
    Power {
        coef: f64,
        exp: f64,
    },
    /// `a + b r`.
    Affine {
        a: f64,
        b: f64,
    },
    /// `sum_i coeffs[i] (r - center)^i`.
    Poly {
        center: f64,
        coeffs: Vec<f64>,
    },
    /// `value` on `[lo, hi)`, zero elsewhere.
    Indicator {
        lo: f64,
        hi: f64,
        value: f64,
    },
    /// `amp * exp(-r^2 / width^2)`.
    Gaussian {
        amp: f64,
        width: f64,
    },
}

impl Expr {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Power { coef, exp } => coef * r.powf(*exp),
            Expr::Affine { a, b } => a + b * r,
            Expr::Poly { center, coeffs } => {
                let t = r - center;
                coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
            Expr::Indicator { lo, hi, value } => {
                if r >= *lo && r < *hi {
                    *value
                } else {
                    0.0
                }
            }
            Expr::Gaussian { amp, width } => amp * (-(r / width).powi(2)).exp(),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match self {
            Expr::Const(_) | Expr::Indicator { .. } => 0.0,
            Expr::Power { coef, exp } => coef * exp * r.powf(exp - 1.0),
            Expr::Affine { b, .. } => *b,
            Expr::Poly { center, coeffs } => {
                let t = r - center;
                coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, c)| acc * t + i as f64 * c)
            }
            Expr::Gaussian { amp, width } => -2.0 * r / (width * width) * amp * (-(r / width).powi(2)).exp(),
        }
    }

    /// An antiderivative of `s -> 2 s e(s)`.
    fn weighted_antiderivative(&self, s: f64) -> f64 {
        match self {
            Expr::Const(c) => c * s * s,
            Expr::Power { coef, exp } => 2.0 * coef * s.powf(exp + 2.0) / (exp + 2.0),
            Expr::Affine { a, b } => a * s * s + 2.0 * b * s * s * s / 3.0,
            Expr::Poly { center, coeffs } => {
                let t = s - center;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let i = i as i32;
                        2.0 * c * (t.powi(i + 2) / (i + 2) as f64 + center * t.powi(i + 1) / (i + 1) as f64)
                    })
                    .sum()
            }
            Expr::Indicator { lo, hi, value } => {
                let c = s.clamp(*lo, *hi);
                value * (c * c - lo * lo)
            }
            Expr::Gaussian { amp, width } => -amp * width * width * (-(s / width).powi(2)).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Expr::Const(c) => c.is_finite(),
            Expr::Power { coef, exp } => coef.is_finite() && exp.is_finite() && *exp > -2.0,
            Expr::Affine { a, b } => a.is_finite() && b.is_finite(),
            Expr::Poly { center, coeffs } => center.is_finite() && coeffs.iter().all(|c| c.is_finite()),
            Expr::Indicator { lo, hi, value } => lo <= hi && value.is_finite(),
            Expr::Gaussian { amp, width } => amp.is_finite() && *width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDatum(format!("bad expression {self:?}")))
        }
    }
}

/// One interval of a piecewise radial datum; `r_max = None` means unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub r_min: f64,
    pub r_max: Option<f64>,
    pub expr: Expr,
}

/// A radially symmetric function `f(|x|)` given piecewise in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialDatum {
    pub pieces: Vec<Piece>,
    /// Integrability exponent.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(skip)]
    offsets: Vec<f64>,
}

fn default_p() -> f64 {
    1.0
}

impl RadialDatum {
    pub fn new(pieces: Vec<Piece>, p: f64) -> Result<Self> {
        let mut d = Self { pieces, p, offsets: Vec::new() };
        d.prepare()?;
        Ok(d)
    }

    /// `f = c` on `[0, radius)` (or everywhere when `radius` is `None`).
    pub fn constant(c: f64, radius: Option<f64>) -> Self {
        Self::new(vec![Piece { r_min: 0.0, r_max: radius, expr: Expr::Const(c) }], 1.0)
            .expect("constant datum is valid")
    }

    /// Single-piece datum on `[0, radius)`.
    pub fn single(expr: Expr, radius: Option<f64>) -> Result<Self> {
        Self::new(vec![Piece { r_min: 0.0, r_max: radius, expr }], 1.0)
    }

    /// Piecewise-constant datum: `values[i]` on `[breaks[i], breaks[i + 1])`.
    pub fn piecewise_constant(breaks: &[f64], values: &[f64]) -> Result<Self> {
        if breaks.len() != values.len() + 1 {
            return Err(Error::InvalidDatum("need one more break than values".into()));
        }
        let pieces = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Piece { r_min: breaks[i], r_max: Some(breaks[i + 1]), expr: Expr::Const(v) })
            .collect();
        Self::new(pieces, 1.0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut d: RadialDatum = serde_json::from_str(text).map_err(|e| Error::InvalidDatum(e.to_string()))?;
        d.prepare()?;
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("datum serialises")
    }

    fn prepare(&mut self) -> Result<()> {
        if self.pieces.is_empty() {
            return Err(Error::InvalidDatum("no pieces".into()));
        }
        if !(self.p >= 1.0) {
            return Err(Error::InvalidDatum(format!("integrability exponent {} < 1", self.p)));
        }
        if self.pieces[0].r_min != 0.0 {
            return Err(Error::InvalidDatum("first piece must start at r = 0".into()));
        }
        for (i, piece) in self.pieces.iter().enumerate() {
            piece.expr.validate()?;
            match piece.r_max {
                Some(hi) if hi > piece.r_min => {}
                None if i + 1 == self.pieces.len() => {}
                _ => return Err(Error::InvalidDatum(format!("piece {i} has an empty or unbounded interior interval"))),
            }
            if i > 0 && self.pieces[i - 1].r_max != Some(piece.r_min) {
                return Err(Error::InvalidDatum(format!("pieces {} and {i} are not contiguous", i - 1)));
            }
        }
        let mut offsets = Vec::with_capacity(self.pieces.len());
        let mut acc = 0.0;
        for piece in &self.pieces {
            offsets.push(acc);
            if let Some(hi) = piece.r_max {
                acc += piece.expr.weighted_antiderivative(hi) - piece.expr.weighted_antiderivative(piece.r_min);
            }
        }
        self.offsets = offsets;
        Ok(())
    }

    /// End of the support, `None` when unbounded.
    pub fn support_radius(&self) -> Option<f64> {
        self.pieces.last().and_then(|p| p.r_max)
    }

    /// Interior piece boundaries (and the support radius, if finite).
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().filter_map(|p| p.r_max).collect()
    }

    fn piece_index(&self, r: f64) -> Option<usize> {
        if r < 0.0 {
            return None;
        }
        let idx = self.pieces.partition_point(|p| p.r_min <= r);
        let i = idx.checked_sub(1)?;
        match self.pieces[i].r_max {
            Some(hi) if r >= hi => None,
            _ => Some(i),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match self.piece_index(r) {
            Some(i) => self.pieces[i].expr.eval(r),
            None => 0.0,
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match self.piece_index(r) {
            Some(i) => self.pieces[i].expr.derivative(r),
            None => 0.0,
        }
    }

    /// `int_0^r 2 s f(s) ds`, from closed-form antiderivatives.
    pub fn cumulative(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self.piece_index(r) {
            Some(i) => {
                let piece = &self.pieces[i];
                self.offsets[i] + piece.expr.weighted_antiderivative(r)
                    - piece.expr.weighted_antiderivative(piece.r_min)
            }
            None => self.total_cumulative(),
        }
    }

    /// `int_0^infty 2 s f(s) ds`; `NaN` unless the datum vanishes beyond its last break.
    pub fn total_cumulative(&self) -> f64 {
        let last = self.pieces.len() - 1;
        let piece = &self.pieces[last];
        match piece.r_max {
            Some(hi) => {
                self.offsets[last] + piece.expr.weighted_antiderivative(hi)
                    - piece.expr.weighted_antiderivative(piece.r_min)
            }
            None if piece.expr == Expr::Const(0.0) => self.offsets[last],
            None => f64::NAN,
        }
    }

    /// Mean of `f` over the disc `B_r`.
    pub fn ball_average(&self, r: f64) -> f64 {
        self.cumulative(r) / (r * r)
    }

    /// The datum restricted to `[0, radius)`.
    pub fn truncate(&self, radius: f64) -> Result<Self> {
        let mut pieces = Vec::new();
        for piece in &self.pieces {
            if piece.r_min >= radius {
                break;
            }
            let hi = piece.r_max.map_or(radius, |h| h.min(radius));
            pieces.push(Piece { r_min: piece.r_min, r_max: Some(hi), expr: piece.expr.clone() });
        }
        Self::new(pieces, self.p)
    }

    /// `f(|x| / t)`.
    pub fn dilate(&self, t: f64) -> Result<Self> {
        let pieces = self
            .pieces
            .iter()
            .map(|piece| Piece {
                r_min: piece.r_min * t,
                r_max: piece.r_max.map(|h| h * t),
                expr: match &piece.expr {
                    Expr::Const(c) => Expr::Const(*c),
                    Expr::Power { coef, exp } => Expr::Power { coef: coef / t.powf(*exp), exp: *exp },
                    Expr::Affine { a, b } => Expr::Affine { a: *a, b: b / t },
                    Expr::Poly { center, coeffs } => Expr::Poly {
                        center: center * t,
                        coeffs: coeffs.iter().enumerate().map(|(i, c)| c / t.powi(i as i32)).collect(),
                    },
                    Expr::Indicator { lo, hi, value } => Expr::Indicator { lo: lo * t, hi: hi * t, value: *value },
                    Expr::Gaussian { amp, width } => Expr::Gaussian { amp: *amp, width: width * t },
                },
            })
            .collect();
        Self::new(pieces, self.p)
    }

    /// `(int_{B_R} |f|^q dx)^{1/q}`.
    pub fn lp_norm(&self, q: f64, radius: f64) -> f64 {
        let mut edges = vec![0.0];
        edges.extend(self.breakpoints().into_iter().filter(|&b| b < radius));
        edges.push(radius);
        let total: f64 = edges
            .windows(2)
            .map(|w| adaptive(|r| TAU * r * self.value(r).abs().powf(q), w[0], w[1], 1e-11, 1e-14).value)
            .sum();
        total.powf(1.0 / q)
    }

    /// Radii used when the caller has no grid of its own: 2048 log-uniform points.
    pub fn default_grid(&self) -> Vec<f64> {
        let hi = self.support_radius().unwrap_or_else(|| self.breakpoints().last().copied().unwrap_or(1.0));
        log_grid(1e-3 * hi, hi * (1.0 - 1e-9), 2048)
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// `rho` and `rho_dot` of a generalised radial stretching solving `J phi_k = f`.
///
/// Normalised as `rho^2 = sign(k) int_0^r 2 s f(s) ds`, so `phi_k = rho / sqrt|k| e^{ik theta}`
/// has Jacobian `f` for every degree `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    datum: RadialDatum,
    k: i32,
}

impl RadialProfile {
    pub const CLAMP_TOLERANCE: f64 = 1e-12;
    pub const ORIENTATION_TOLERANCE: f64 = 1e-6;

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn datum(&self) -> &RadialDatum {
        &self.datum
    }

    fn signed_cumulative(&self, r: f64) -> f64 {
        self.k.signum() as f64 * self.datum.cumulative(r)
    }

    pub fn rho_sq(&self, r: f64) -> f64 {
        self.signed_cumulative(r).max(0.0)
    }

    pub fn rho(&self, r: f64) -> f64 {
        self.rho_sq(r).sqrt()
    }

    /// Almost-everywhere derivative of `rho`.
    pub fn rho_dot(&self, r: f64) -> f64 {
        let rho = self.rho(r);
        let f = self.k.signum() as f64 * self.datum.value(r);
        if rho > 0.0 {
            r * f / rho
        } else if r == 0.0 && f > 0.0 {
            f.sqrt()
        } else {
            0.0
        }
    }

    /// `|D phi_k|^2 = rho_dot^2 / |k| + |k| rho^2 / r^2`.
    pub fn dirichlet_density(&self, r: f64) -> f64 {
        let k = self.k.unsigned_abs() as f64;
        let rd = self.rho_dot(r);
        if r == 0.0 {
            return rd * rd / k + k * rd * rd;
        }
        rd * rd / k + k * self.rho_sq(r) / (r * r)
    }
}

/// Build the profile for degree `k`, rejecting data whose cumulative mass has the wrong sign.
pub fn profile_from_datum(f: &RadialDatum, k: i32) -> Result<RadialProfile> {
    if k == 0 {
        return Err(Error::PreconditionViolated("degree k must be nonzero".into()));
    }
    let profile = RadialProfile { datum: f.clone(), k };
    let hi = f.support_radius().unwrap_or_else(|| f.breakpoints().last().copied().unwrap_or(1.0).max(1.0));
    let mut radii: Vec<f64> = (1..=4096).map(|i| hi * i as f64 / 4096.0).collect();
    radii.extend(f.breakpoints());
    for r in radii {
        let v = profile.signed_cumulative(r);
        if v < -RadialProfile::ORIENTATION_TOLERANCE {
            return Err(Error::OrientationMismatch { r, value: v });
        }
    }
    Ok(profile)
}

/// `phi_k(z) = rho(r) / sqrt|k| e^{i k theta}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralisedStretching {
    pub profile: RadialProfile,
}

impl GeneralisedStretching {
    pub fn new(profile: RadialProfile) -> Self {
        Self { profile }
    }

    pub fn from_datum(f: &RadialDatum, k: i32) -> Result<Self> {
        Ok(Self::new(profile_from_datum(f, k)?))
    }

    fn modulus(&self, r: f64) -> f64 {
        self.profile.rho(r) / (self.profile.k.unsigned_abs() as f64).sqrt()
    }
}

impl PlanarMap for GeneralisedStretching {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        let r = p.norm();
        if r == 0.0 {
            return Ok(Vec2::ZERO);
        }
        Ok(Vec2::from_polar(self.modulus(r), self.profile.k as f64 * p.arg()))
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        let r = p.norm();
        if r == 0.0 {
            if self.profile.k.abs() == 1 {
                let s = self.profile.rho_dot(0.0);
                return Ok(Mat2::diag(s, self.profile.k as f64 * s));
            }
            return Err(Error::EvaluationFailure { x: 0.0, y: 0.0 });
        }
        let theta = p.arg();
        let k = self.profile.k as f64;
        let sq = k.abs().sqrt();
        let psi = self.profile.rho(r) / sq;
        let psi_r = self.profile.rho_dot(r) / sq;
        let e = Vec2::from_polar(1.0, k * theta);
        let d_r = psi_r * e;
        let d_t = (k * psi / r) * e.perp();
        let frame = Mat2::from_cols(Vec2::from_polar(1.0, theta), Vec2::from_polar(1.0, theta).perp());
        Ok(Mat2::from_cols(d_r, d_t) * frame.transpose())
    }

    fn breaks(&self) -> Breaks {
        Breaks { radii: self.profile.datum.breakpoints(), angles: Vec::new() }
    }
}

/// A degree-one stretching with an extra radial twist `theta -> theta + amp sin(pi r / period)`.
///
/// The twist leaves the Jacobian unchanged and strictly increases the energy.
#[derive(Debug, Clone)]
pub struct TwistedStretching {
    pub profile: RadialProfile,
    pub amp: f64,
    pub period: f64,
}

impl PlanarMap for TwistedStretching {
    fn eval(&self, p: Vec2) -> Result<Vec2> {
        let r = p.norm();
        if r == 0.0 {
            return Ok(Vec2::ZERO);
        }
        let beta = self.amp * (PI * r / self.period).sin();
        let k = self.profile.k as f64;
        let rho = self.profile.rho(r) / k.abs().sqrt();
        Ok(Vec2::from_polar(rho, k * p.arg() + beta))
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        let r = p.norm();
        if r == 0.0 {
            return fd_jacobian(|q| self.eval(q), p);
        }
        let theta = p.arg();
        let k = self.profile.k as f64;
        let sq = k.abs().sqrt();
        let psi = self.profile.rho(r) / sq;
        let psi_r = self.profile.rho_dot(r) / sq;
        let beta = self.amp * (PI * r / self.period).sin();
        let beta_r = self.amp * PI / self.period * (PI * r / self.period).cos();
        let e = Vec2::from_polar(1.0, k * theta + beta);
        let d_r = psi_r * e + (psi * beta_r) * e.perp();
        let d_t = (k * psi / r) * e.perp();
        let frame = Mat2::from_cols(Vec2::from_polar(1.0, theta), Vec2::from_polar(1.0, theta).perp());
        Ok(Mat2::from_cols(d_r, d_t) * frame.transpose())
    }

    fn breaks(&self) -> Breaks {
        Breaks { radii: self.profile.datum.breakpoints(), angles: Vec::new() }
    }
}

/// Max of `|J phi_k - f|` over `radius_grid`, with `J` from finite differences.
pub fn stretching_jacobian_check(s: &GeneralisedStretching, f: &RadialDatum, radius_grid: &[f64]) -> f64 {
    const GOLDEN: f64 = 2.399_963_229_728_653;
    radius_grid
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > 0.0 && s.profile.rho(r) > 0.0)
        .filter_map(|(i, &r)| {
            let p = Vec2::from_polar(r, 0.3 + GOLDEN * i as f64);
            let jac = fd_jacobian(|q| s.eval(q), p).ok()?.det();
            Some((jac - f.value(r)).abs())
        })
        .fold(0.0, f64::max)
}

/// Which panels a sub-interval integral has to be graded toward.
fn singular_end(profile: &RadialProfile, a: f64, b: f64) -> (bool, bool) {
    let scale = profile.datum.cumulative(b).abs().max(profile.datum.cumulative(a).abs()).max(1e-300);
    let probe = 1e-9 * (b - a);
    let zero_at = |r: f64| r > 0.0 && profile.rho_sq(r) <= 1e-13 * scale;
    let left = zero_at(a) && profile.datum.value(a + probe) != 0.0;
    let right = zero_at(b) && profile.datum.value(b - probe) != 0.0;
    (left, right)
}

/// `2 pi int_0^R (rho_dot^2 / |k| + |k| rho^2 / r^2)^p r dr = int_{B_R} |D phi_k|^{2p}`.
///
/// Returns `f64::INFINITY` when the integral diverges at a zero of `rho`: halving the cutoff
/// twice must add more than 0.5 each time with no sign of saturation.
pub fn sobolev_energy_1d(s: &GeneralisedStretching, p: f64, radius: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::PreconditionViolated(format!("p = {p} < 1")));
    }
    if !(radius > 0.0) {
        return Err(Error::NonPositiveRadius(radius));
    }
    let profile = &s.profile;
    let integrand = |r: f64| TAU * profile.dirichlet_density(r).powf(p) * r;
    let mut edges = vec![0.0];
    edges.extend(profile.datum.breakpoints().into_iter().filter(|&b| b > 0.0 && b < radius));
    edges.push(radius);
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (left, right) = singular_end(profile, a, b);
        total += match (left, right) {
            (false, false) => adaptive(integrand, a, b, 1e-10, 1e-14).value,
            (true, true) => {
                let mid = 0.5 * (a + b);
                graded_integral(&integrand, a, mid, true)? + graded_integral(&integrand, mid, b, false)?
            }
            (true, false) => graded_integral(&integrand, a, b, true)?,
            (false, true) => graded_integral(&integrand, a, b, false)?,
        };
        if total.is_infinite() {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}

fn graded_integral<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, singular_at_left: bool) -> Result<f64> {
    let end = if singular_at_left { a } else { b };
    let min_width = 1e-13 * end.abs().max(1.0);
    let panels = graded_panels(f, a, b, singular_at_left, min_width, 1e-10);
    // divergence probe: increments at cutoffs around 1e-6 .. 1e-8 of the interval
    let len = b - a;
    let probe: Vec<f64> =
        panels.iter().filter(|(w, _)| *w <= 1e-6 * len && *w >= 1e-8 * len).map(|&(_, v)| v).collect();
    if probe.len() >= 2 {
        let (d1, d2) = (probe[probe.len() - 2], probe[probe.len() - 1]);
        if d1 > 0.5 && d2 > 0.5 && d2 >= 0.9 * d1 {
            return Ok(f64::INFINITY);
        }
    }
    let sum: f64 = panels.iter().map(|&(_, v)| v).sum();
    // geometric tail of the dropped sliver
    let n = panels.len();
    let tail = if n >= 2 {
        let (prev, last) = (panels[n - 2].1, panels[n - 1].1);
        let q = if prev != 0.0 { last / prev } else { 0.0 };
        if (0.0..0.95).contains(&q) {
            last * q / (1.0 - q)
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(sum + tail)
}

/// `int_a^b rho_dot(r)^2 dr`, split at the datum's breakpoints.
pub fn truncated_rho_dot_energy(profile: &RadialProfile, a: f64, b: f64) -> f64 {
    let mut edges = vec![a];
    edges.extend(profile.datum.breakpoints().into_iter().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.windows(2).map(|w| adaptive(|r| profile.rho_dot(r).powi(2), w[0], w[1], 1e-11, 1e-14).value).sum()
}

/// Sign behaviour of `r -> int_{B_r} f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Nonnegative,
    Nonpositive,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// Smallest `lambda` with `|f(r)| <= lambda * (mean of f over B_r)` on the grid.
    pub lambda_star: f64,
    /// The same constant from `|rho_dot| <= lambda rho / r`.
    pub lambda_star_radial: f64,
    pub average_condition_holds: bool,
    pub orientation: Orientation,
}

impl ConditionReport {
    pub const AVERAGE_TOLERANCE: f64 = 1e-9;
}

pub fn condition_report(f: &RadialDatum, radius_grid: &[f64]) -> ConditionReport {
    let tol = 1e-12;
    let cums: Vec<f64> = radius_grid.iter().map(|&r| f.cumulative(r)).collect();
    let scale = cums.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
    let pos = cums.iter().any(|&c| c > tol * scale);
    let neg = cums.iter().any(|&c| c < -tol * scale);
    let orientation = match (pos, neg) {
        (true, true) => Orientation::Mixed,
        (false, true) => Orientation::Nonpositive,
        _ => Orientation::Nonnegative,
    };
    let sign = if orientation == Orientation::Nonpositive { -1.0 } else { 1.0 };
    let mut lambda = 0.0f64;
    let mut lambda_radial = 0.0f64;
    let profile = RadialProfile { datum: f.clone(), k: sign as i32 };
    for (&r, &cum) in radius_grid.iter().zip(&cums) {
        let fr = f.value(r);
        if orientation == Orientation::Mixed {
            lambda = f64::INFINITY;
            lambda_radial = f64::INFINITY;
            break;
        }
        if sign * cum <= tol * scale {
            if fr != 0.0 {
                lambda = f64::INFINITY;
                lambda_radial = f64::INFINITY;
            }
            continue;
        }
        let avg = sign * cum / (r * r);
        lambda = lambda.max(fr.abs() / avg);
        let rho = profile.rho(r);
        lambda_radial = lambda_radial.max(profile.rho_dot(r).abs() * r / rho);
    }
    ConditionReport {
        lambda_star: lambda,
        lambda_star_radial: lambda_radial,
        average_condition_holds: lambda <= 1.0 + ConditionReport::AVERAGE_TOLERANCE,
        orientation,
    }
}

/// `Z(lambda) = (1 / lambda + lambda) / 2`.
pub fn zhukovsky(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    Ok(0.5 * (1.0 / lambda + lambda))
}

/// `psi(a, b) = a + b^2 / a` on `(0, infty) x R`.
pub fn psi(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::PreconditionViolated(format!("psi needs a > 0, got {a}")));
    }
    Ok(a + b * b / a)
}

/// Whether `psi(a2, b) <= Z(lambda) psi(a1, b) + 1e-12` given `a2 <= a1` and `|b| <= lambda a2`.
pub fn psi_bound_check(a1: f64, a2: f64, b: f64, lambda: f64) -> Result<bool> {
    if a2 > a1 {
        return Err(Error::PreconditionViolated(format!("a2 = {a2} > a1 = {a1}")));
    }
    if b.abs() > lambda * a2 {
        return Err(Error::PreconditionViolated(format!("|b| = {} > lambda a2 = {}", b.abs(), lambda * a2)));
    }
    Ok(psi(a2, b)? <= zhukovsky(lambda)? * psi(a1, b)? + 1e-12)
}
