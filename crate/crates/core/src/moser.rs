//! Prescribed-Jacobian correction on convex polygons: a Bogovskii solver for `div xi = h` and
//! the Moser flow built from it.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::constructions::WedgeMap;
use crate::error::{Error, Result};
use crate::geometry::{fd_jacobian, Mat2, Vec2};
use crate::map::PlanarMap;
use crate::quadrature::{pairwise_sum, GaussRule};
use crate::region::{polygon_area, polygon_contains, Region};
use crate::sampling::Halton2;

/// A convex polygon, star-shaped with respect to the ball `B(center, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarDomain {
    pub vertices: Vec<Vec2>,
    pub center: Vec2,
    pub radius: f64,
}

impl StarDomain {
    pub fn new(vertices: Vec<Vec2>, center: Vec2, radius: f64) -> Result<Self> {
        let d = Self { vertices, center, radius };
        let region = d.region();
        // reuse the region validation through a tiny grid
        region.quadrature_grid(1, &Default::default(), 0.0)?;
        if !(radius > 0.0) || d.boundary_distance(center) < radius {
            return Err(Error::DegenerateDomain("star ball must lie inside the polygon".into()));
        }
        Ok(d)
    }

    pub fn unit_square() -> Self {
        Self::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
            Vec2::new(0.5, 0.5),
            0.35,
        )
        .expect("valid square")
    }

    /// The wedge `{x > 0, y > 0, 2 < x + y < 3}`.
    pub fn wedge() -> Self {
        Self::new(
            vec![Vec2::new(2.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(0.0, 3.0), Vec2::new(0.0, 2.0)],
            Vec2::new(1.25, 1.25),
            0.3,
        )
        .expect("valid wedge")
    }

    pub fn region(&self) -> Region {
        Region::ConvexPolygon { vertices: self.vertices.clone() }
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        polygon_contains(&self.vertices, p)
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Signed distance to the boundary, positive inside.
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let e = b - a;
                e.cross(p - a) / e.norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Smooth minimum `(sum d_i^-4)^(-1/4)` of the edge distances; zero off the open polygon.
    pub fn weight(&self, p: Vec2) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.edges() {
            let e = b - a;
            let d = e.cross(p - a) / e.norm();
            if d <= 0.0 {
                return 0.0;
            }
            acc += d.powi(-4);
        }
        acc.powf(-0.25)
    }

    /// Nearest point of the closed polygon.
    pub fn project(&self, p: Vec2) -> Vec2 {
        if self.contains(p) {
            return p;
        }
        let mut best = p;
        let mut dist = f64::INFINITY;
        for (a, b) in self.edges() {
            let e = b - a;
            let t = ((p - a).dot(e) / e.norm_sq()).clamp(0.0, 1.0);
            let q = a + t * e;
            let d = (p - q).norm();
            if d < dist {
                dist = d;
                best = q;
            }
        }
        best
    }

    /// Distance from interior `x` to the boundary along the ray `x - t e`, `t > 0`.
    fn exit_distance(&self, x: Vec2, e: Vec2) -> f64 {
        let dir = -1.0 * e;
        let mut t_min = f64::INFINITY;
        for (a, b) in self.edges() {
            let edge = b - a;
            let denom = dir.cross(edge);
            if denom.abs() < 1e-300 {
                continue;
            }
            let t = (a - x).cross(edge) / denom;
            if t > 0.0 {
                t_min = t_min.min(t);
            }
        }
        t_min
    }

    fn bounding_box(&self) -> (Vec2, Vec2) {
        self.region().bounding_box()
    }
}

/// Scalar samples on a node grid over a box, read back by bilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    lo: Vec2,
    hi: Vec2,
    n: usize,
    values: Vec<f64>,
}

impl GridFn {
    fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.lo.x + (self.hi.x - self.lo.x) * i as f64 / self.n as f64,
            self.lo.y + (self.hi.y - self.lo.y) * j as f64 / self.n as f64,
        )
    }

    fn tabulate<F: Fn(Vec2) -> f64 + Sync>(lo: Vec2, hi: Vec2, n: usize, f: F) -> Self {
        let mut g = Self { lo, hi, n, values: Vec::new() };
        g.values = (0..(n + 1) * (n + 1)).into_par_iter().map(|k| f(g.node(k % (n + 1), k / (n + 1)))).collect();
        g
    }

    pub fn eval(&self, p: Vec2) -> f64 {
        let n = self.n as f64;
        let u = ((p.x - self.lo.x) / (self.hi.x - self.lo.x) * n).clamp(0.0, n);
        let v = ((p.y - self.lo.y) / (self.hi.y - self.lo.y) * n).clamp(0.0, n);
        let i = (u.floor() as usize).min(self.n - 1);
        let j = (v.floor() as usize).min(self.n - 1);
        let (s, t) = (u - i as f64, v - j as f64);
        let w = self.n + 1;
        let at = |a: usize, b: usize| self.values[b * w + a];
        (1.0 - s) * (1.0 - t) * at(i, j)
            + s * (1.0 - t) * at(i + 1, j)
            + (1.0 - s) * t * at(i, j + 1)
            + s * t * at(i + 1, j + 1)
    }

    /// Catmull-Rom interpolation, with linearly extrapolated ghost nodes; needs `n >= 2`.
    pub fn eval_cubic(&self, p: Vec2) -> f64 {
        let n = self.n as f64;
        let u = ((p.x - self.lo.x) / (self.hi.x - self.lo.x) * n).clamp(0.0, n);
        let v = ((p.y - self.lo.y) / (self.hi.y - self.lo.y) * n).clamp(0.0, n);
        let i = (u.floor() as usize).min(self.n - 1);
        let j = (v.floor() as usize).min(self.n - 1);
        let (s, t) = (u - i as f64, v - j as f64);
        let w = self.n + 1;
        let last = self.n as isize;
        let column = |b: usize| {
            let at = |a: isize| {
                if a < 0 {
                    2.0 * self.values[b * w] - self.values[b * w + 1]
                } else if a > last {
                    2.0 * self.values[b * w + self.n] - self.values[b * w + self.n - 1]
                } else {
                    self.values[b * w + a as usize]
                }
            };
            let a = i as isize;
            catmull_rom(at(a - 1), at(a), at(a + 1), at(a + 2), s)
        };
        let row = |b: isize| {
            if b < 0 {
                2.0 * column(0) - column(1)
            } else if b > last {
                2.0 * column(self.n) - column(self.n - 1)
            } else {
                column(b as usize)
            }
        };
        let b = j as isize;
        catmull_rom(row(b - 1), row(b), row(b + 1), row(b + 2), t)
    }
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    0.5 * (2.0 * p1
        + (p2 - p0) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
        + (3.0 * (p1 - p2) + p3 - p0) * t * t * t)
}

/// Solution of `div xi = h` with `xi = 0` off the open polygon, cached on grids.
///
/// Away from vertices the cache holds `xi / w` on a Cartesian grid, with `w` a smoothed
/// distance to the boundary, so the interpolant vanishes exactly on the boundary. Near a
/// vertex `xi` behaves like `r Phi(theta)`, which no Cartesian grid resolves; there `xi / r`
/// is cached on a polar grid about the vertex and blended in.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub domain: StarDomain,
    qx: GridFn,
    qy: GridFn,
    corners: Vec<CornerCache>,
    zero: bool,
    /// Largest `|div xi - h|` at interior cell centres (central differences).
    pub divergence_residual: f64,
}

/// `xi / r` on an `(r, theta)` grid over the sector of a vertex.
#[derive(Debug, Clone)]
struct CornerCache {
    vertex: Vec2,
    radius: f64,
    theta0: f64,
    qx: GridFn,
    qy: GridFn,
}

impl CornerCache {
    fn polar(&self, p: Vec2) -> Vec2 {
        let d = p - self.vertex;
        let span = self.qx.hi.y - self.theta0;
        let t = (d.arg() - self.theta0).rem_euclid(TAU);
        // directions just outside the sector wrap to the nearer edge
        let t = if t > span {
            if t - span < TAU - t {
                span
            } else {
                0.0
            }
        } else {
            t
        };
        Vec2::new(d.norm(), self.theta0 + t)
    }

    fn eval(&self, p: Vec2) -> Vec2 {
        let q = self.polar(p);
        q.x * Vec2::new(self.qx.eval_cubic(q), self.qy.eval_cubic(q))
    }
}

impl VectorField {
    fn zero(domain: &StarDomain) -> Self {
        let (lo, hi) = domain.bounding_box();
        let empty = GridFn { lo, hi, n: 1, values: vec![0.0; 4] };
        Self {
            domain: domain.clone(),
            qx: empty.clone(),
            qy: empty,
            corners: Vec::new(),
            zero: true,
            divergence_residual: 0.0,
        }
    }

    pub fn eval(&self, p: Vec2) -> Vec2 {
        if self.zero || !self.domain.contains(p) {
            return Vec2::ZERO;
        }
        let w = self.domain.weight(p);
        let cached = Vec2::new(w * self.qx.eval_cubic(p), w * self.qy.eval_cubic(p));
        for corner in &self.corners {
            let blend = corner_blend((p - corner.vertex).norm() / corner.radius);
            if blend > 0.0 {
                return cached + blend * (corner.eval(p) - cached);
            }
        }
        cached
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }
}

/// `1` below `1/2`, `0` above `1`, quintic smoothstep between.
fn corner_blend(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else if s <= 0.5 {
        1.0
    } else {
        let t = 2.0 * (1.0 - s);
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Radial and angular cells of each vertex cache.
const CORNER_CELLS: usize = 96;

/// Sector radius: half the shortest edge, so sectors never overlap, and clear of
/// non-adjacent edges.
fn corner_radius(domain: &StarDomain) -> f64 {
    let v = &domain.vertices;
    let n = v.len();
    let mut radius = f64::INFINITY;
    for i in 0..n {
        radius = radius.min(0.5 * (v[(i + 1) % n] - v[i]).norm());
        for j in 0..n {
            let (a, b) = (v[j], v[(j + 1) % n]);
            if j == i || (j + 1) % n == i {
                continue;
            }
            let e = b - a;
            radius = radius.min(0.9 * (e.cross(v[i] - a) / e.norm()).abs());
        }
    }
    radius
}

/// Normalised `C^3` bump `(1 - |z|^2)^4` on `B(center, radius)`.
///
/// The `C^infty` bump `exp(-1 / (1 - |z|^2))` is so steep near its edge that the resulting
/// field has structure far below any practical cache spacing.
#[derive(Debug, Clone, Copy)]
struct Bump {
    center: Vec2,
    radius: f64,
    scale: f64,
}

impl Bump {
    fn new(center: Vec2, radius: f64) -> Self {
        Self { center, radius, scale: 5.0 / (PI * radius * radius) }
    }

    fn eval(&self, p: Vec2) -> f64 {
        let s2 = (p - self.center).norm_sq() / (self.radius * self.radius);
        if s2 < 1.0 {
            self.scale * (1.0 - s2).powi(4)
        } else {
            0.0
        }
    }
}

struct Rules {
    angle_full: GaussRule,
    angle_window: GaussRule,
    chord: GaussRule,
    ray: GaussRule,
}

impl Rules {
    fn standard() -> Self {
        Self {
            angle_full: GaussRule::new(4),
            angle_window: GaussRule::new(48),
            chord: GaussRule::new(16),
            ray: GaussRule::new(8),
        }
    }
}

const FULL_PANELS: usize = 64;
const RAY_PANELS: usize = 4;

/// The Bogovskii integral at one interior point, in polar form about `x`:
/// `xi(x) = int e(phi) [W0 H0 + W1 H1] dphi`, with `W0 = int w(x + s e) s ds`,
/// `W1 = int w(x + s e) ds`, `H0 = int h(x - t e) dt`, `H1 = int h(x - t e) t dt`.
fn bogovskii_point<H: Fn(Vec2) -> f64>(x: Vec2, h: &H, domain: &StarDomain, bump: &Bump, rules: &Rules) -> Vec2 {
    let offset = x - bump.center;
    let d = offset.norm();
    let r0 = bump.radius;
    let mut acc = Vec2::ZERO;
    let mut direction = |phi: f64, weight: f64| {
        let e = Vec2::from_polar(1.0, phi);
        let b = e.dot(offset);
        let disc = b * b - (d * d - r0 * r0);
        if disc <= 0.0 {
            return;
        }
        let root = disc.sqrt();
        let (s0, s1) = ((-b - root).max(0.0), -b + root);
        if s1 <= s0 {
            return;
        }
        let (mut w0, mut w1) = (0.0, 0.0);
        for (s, ws) in rules.chord.on(s0, s1) {
            let v = ws * bump.eval(x + s * e);
            w0 += v * s;
            w1 += v;
        }
        if w0 == 0.0 && w1 == 0.0 {
            return;
        }
        let t_exit = domain.exit_distance(x, e);
        let (mut h0, mut h1) = (0.0, 0.0);
        for k in 0..RAY_PANELS {
            let (a, c) = (t_exit * k as f64 / RAY_PANELS as f64, t_exit * (k + 1) as f64 / RAY_PANELS as f64);
            for (t, wt) in rules.ray.on(a, c) {
                let v = wt * h(x - t * e);
                h0 += v;
                h1 += v * t;
            }
        }
        acc = acc + (weight * (w0 * h0 + w1 * h1)) * e;
    };
    // the exit distance kinks where the backward ray crosses a vertex
    let (start, end, panels, rule) = if d > 1.5 * r0 {
        let half = (r0 / d).asin();
        let mid = (-offset.y).atan2(-offset.x);
        (mid - half, mid + half, 1, &rules.angle_window)
    } else {
        (0.0, TAU, FULL_PANELS, &rules.angle_full)
    };
    let mut cuts: Vec<f64> = (0..=panels).map(|k| start + (end - start) * k as f64 / panels as f64).collect();
    for &v in &domain.vertices {
        let to = x - v;
        if to.norm() < 1e-14 {
            continue;
        }
        let a = to.arg();
        let shifted = start + (a - start).rem_euclid(TAU);
        if shifted > start && shifted < end {
            cuts.push(shifted);
        }
    }
    cuts.sort_by(f64::total_cmp);
    for pair in cuts.windows(2) {
        if pair[1] - pair[0] < 1e-15 {
            continue;
        }
        for (phi, w) in rule.on(pair[0], pair[1]) {
            direction(phi, w);
        }
    }
    acc
}

/// Integral of `f` over the domain by tensor Gauss-Legendre cells.
fn domain_integral<F: Fn(Vec2) -> f64 + Sync>(domain: &StarDomain, f: F) -> Result<f64> {
    let grid = domain.region().quadrature_grid(24, &Default::default(), 0.0)?;
    let terms: Vec<f64> = grid.nodes.par_iter().zip(&grid.weights).map(|(&p, &w)| w * f(p)).collect();
    Ok(pairwise_sum(&terms))
}

/// Bogovskii solution of `div xi = h`, `xi = 0` on the boundary, cached on a
/// `resolution x resolution` cell grid over the domain's bounding box.
pub fn bogovskii_field<H: Fn(Vec2) -> f64 + Sync>(h: H, domain: &StarDomain, resolution: usize) -> Result<VectorField> {
    let n = resolution.max(4);
    let (lo, hi) = domain.bounding_box();
    let mean = domain_integral(domain, &h)?;
    let scale = domain_integral(domain, |p| h(p).abs())?.max(1.0);
    if mean.abs() > 1e-8 * scale {
        return Err(Error::NonZeroMean(mean));
    }
    let probe = domain_integral(domain, |p| if h(p) == 0.0 { 0.0 } else { 1.0 })?;
    if probe == 0.0 {
        return Ok(VectorField::zero(domain));
    }
    let bump = Bump::new(domain.center, domain.radius);
    let rules = Rules::standard();
    let h_in = |p: Vec2| if domain.contains(p) { h(p) } else { 0.0 };
    let spacing = ((hi.x - lo.x) / n as f64).max((hi.y - lo.y) / n as f64);
    let w = n + 1;
    let node = |i: usize, j: usize| {
        Vec2::new(lo.x + (hi.x - lo.x) * i as f64 / n as f64, lo.y + (hi.y - lo.y) * j as f64 / n as f64)
    };
    // xi / w at nodes well inside; None elsewhere
    let raw: Vec<Option<Vec2>> = (0..w * w)
        .into_par_iter()
        .map(|k| {
            let x = node(k % w, k / w);
            let d = domain.boundary_distance(x);
            if d > 0.25 * spacing {
                Some((1.0 / domain.weight(x)) * bogovskii_point(x, &h_in, domain, &bump, &rules))
            } else {
                None
            }
        })
        .collect();
    let filled = extrapolate(&raw, w);
    let qx = GridFn { lo, hi, n, values: filled.iter().map(|v| v.x).collect() };
    let qy = GridFn { lo, hi, n, values: filled.iter().map(|v| v.y).collect() };
    let radius = corner_radius(domain);
    let corners = (0..domain.vertices.len()).map(|i| corner_cache(i, radius, &h_in, domain, &bump, &rules)).collect();
    let mut field = VectorField { domain: domain.clone(), qx, qy, corners, zero: false, divergence_residual: 0.0 };
    field.divergence_residual = divergence_residual(&field, &h, n);
    Ok(field)
}

fn corner_cache<H: Fn(Vec2) -> f64 + Sync>(
    i: usize,
    radius: f64,
    h: &H,
    domain: &StarDomain,
    bump: &Bump,
    rules: &Rules,
) -> CornerCache {
    let v = &domain.vertices;
    let n = v.len();
    let vertex = v[i];
    let theta0 = (v[(i + 1) % n] - vertex).arg();
    let span = ((v[(i + n - 1) % n] - vertex).arg() - theta0).rem_euclid(TAU);
    let m = CORNER_CELLS;
    let (lo, hi) = (Vec2::new(0.0, theta0), Vec2::new(radius, theta0 + span));
    let w = m + 1;
    // xi vanishes on both edges; the r = 0 column is extrapolated
    let values: Vec<Vec2> = (0..w * w)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k % w, k / w);
            if a == 0 || b == 0 || b == m {
                return Vec2::ZERO;
            }
            let r = radius * a as f64 / m as f64;
            let x = vertex + Vec2::from_polar(r, theta0 + span * b as f64 / m as f64);
            (1.0 / r) * bogovskii_point(x, h, domain, bump, rules)
        })
        .collect();
    let values: Vec<Vec2> = (0..w * w)
        .map(|k| if k % w == 0 && k / w != 0 && k / w != m { 2.0 * values[k + 1] - values[k + 2] } else { values[k] })
        .collect();
    CornerCache {
        vertex,
        radius,
        theta0,
        qx: GridFn { lo, hi, n: m, values: values.iter().map(|q| q.x).collect() },
        qy: GridFn { lo, hi, n: m, values: values.iter().map(|q| q.y).collect() },
    }
}

/// Fill missing nodes by linear extrapolation from interior neighbours.
fn extrapolate(raw: &[Option<Vec2>], w: usize) -> Vec<Vec2> {
    let get = |i: isize, j: isize| -> Option<Vec2> {
        if i < 0 || j < 0 || i >= w as isize || j >= w as isize {
            None
        } else {
            raw[j as usize * w + i as usize]
        }
    };
    let dirs = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)];
    (0..w * w)
        .map(|k| {
            if let Some(v) = raw[k] {
                return v;
            }
            let (i, j) = ((k % w) as isize, (k / w) as isize);
            let mut sum = Vec2::ZERO;
            let mut count = 0.0;
            for (di, dj) in dirs {
                if let (Some(a), Some(b)) = (get(i + di, j + dj), get(i + 2 * di, j + 2 * dj)) {
                    sum = sum + (2.0 * a - b);
                    count += 1.0;
                }
            }
            if count == 0.0 {
                for (di, dj) in dirs {
                    if let Some(a) = get(i + di, j + dj) {
                        sum = sum + a;
                        count += 1.0;
                    }
                }
            }
            if count == 0.0 {
                Vec2::ZERO
            } else {
                (1.0 / count) * sum
            }
        })
        .collect()
}

fn divergence_residual<H: Fn(Vec2) -> f64 + ?Sized>(field: &VectorField, h: &H, n: usize) -> f64 {
    let (lo, hi) = field.domain.bounding_box();
    let (dx, dy) = ((hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64);
    let step = 0.01 * dx.min(dy);
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let c = Vec2::new(lo.x + (i as f64 + 0.5) * dx, lo.y + (j as f64 + 0.5) * dy);
            if field.domain.boundary_distance(c) <= 2.0 * step {
                continue;
            }
            let ex = Vec2::new(step, 0.0);
            let ey = Vec2::new(0.0, step);
            let div = (field.eval(c + ex).x - field.eval(c - ex).x + field.eval(c + ey).y - field.eval(c - ey).y)
                / (2.0 * step);
            worst = worst.max((div - h(c)).abs());
        }
    }
    worst
}

/// Residuals of a flow map `sigma` against its target density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Largest `|J sigma - g|` at sample points.
    pub max_jacobian_residual: f64,
    /// Largest `|sigma(b) - b|` over boundary samples.
    pub boundary_displacement: f64,
    /// `|int J sigma - |D|| / |D|`.
    pub mass_error: f64,
    pub divergence_residual: f64,
}

/// Flow map `sigma` with `J sigma = g`, `sigma = id` on the boundary.
#[derive(Debug, Clone)]
pub struct MoserCorrector {
    pub domain: StarDomain,
    field: Arc<VectorField>,
    density: Arc<GridFn>,
    pub steps: usize,
    pub report: ResidualReport,
}

/// Options for [`moser_flow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Cells per direction of the cached field and density.
    pub resolution: usize,
    /// Initial RK4 step count; doubled while the flow escapes.
    pub steps: usize,
    /// Quasi-random points used for the residual report.
    pub samples: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { resolution: 128, steps: 64, samples: 2000 }
    }
}

const ESCAPE_TOLERANCE: f64 = 1e-9;

impl MoserCorrector {
    /// The identity map on `domain`.
    pub fn identity(domain: &StarDomain) -> Self {
        let (lo, hi) = domain.bounding_box();
        let one = GridFn { lo, hi, n: 1, values: vec![1.0; 4] };
        let field = VectorField::zero(domain);
        Self {
            domain: domain.clone(),
            field: Arc::new(field),
            density: Arc::new(one),
            steps: 64,
            report: ResidualReport {
                max_jacobian_residual: 0.0,
                boundary_displacement: 0.0,
                mass_error: 0.0,
                divergence_residual: 0.0,
            },
        }
    }

    pub fn is_identity(&self) -> bool {
        self.field.is_zero()
    }

    /// Target density (area-normalised) at `p`.
    pub fn density(&self, p: Vec2) -> f64 {
        self.density.eval(p)
    }

    fn flow(&self, y: Vec2, steps: usize) -> Vec2 {
        if self.field.is_zero() {
            return y;
        }
        let v = |s: f64, p: Vec2| {
            let xi = self.field.eval(p);
            if xi == Vec2::ZERO {
                return xi;
            }
            (1.0 / (s + (1.0 - s) * self.density.eval(p))) * xi
        };
        let dt = 1.0 / steps as f64;
        let mut p = y;
        for k in 0..steps {
            let s = k as f64 * dt;
            let k1 = v(s, p);
            let k2 = v(s + 0.5 * dt, p + (0.5 * dt) * k1);
            let k3 = v(s + 0.5 * dt, p + (0.5 * dt) * k2);
            let k4 = v(s + dt, p + dt * k3);
            p = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        p
    }
}

impl PlanarMap for MoserCorrector {
    fn eval(&self, y: Vec2) -> Result<Vec2> {
        let mut steps = self.steps;
        loop {
            let p = self.flow(y, steps);
            let outside = -self.domain.boundary_distance(p);
            if outside <= ESCAPE_TOLERANCE {
                return Ok(if outside > 0.0 { self.domain.project(p) } else { p });
            }
            if steps >= 1024 {
                return Err(Error::FlowEscapedDomain(outside));
            }
            steps *= 2;
        }
    }

    fn jacobian_matrix(&self, p: Vec2) -> Result<Mat2> {
        if self.field.is_zero() {
            return Ok(Mat2::IDENTITY);
        }
        fd_jacobian(|q| self.eval(q), p)
    }
}

/// Quasi-random interior points of the domain at least `margin` from the boundary.
fn interior_samples(domain: &StarDomain, count: usize, margin: f64, seed: u64) -> Vec<Vec2> {
    let (lo, hi) = domain.bounding_box();
    Halton2::new(seed)
        .map(|(s, t)| Vec2::new(lo.x + s * (hi.x - lo.x), lo.y + t * (hi.y - lo.y)))
        .filter(|&p| domain.boundary_distance(p) > margin)
        .take(count)
        .collect()
}

fn boundary_samples(domain: &StarDomain, per_edge: usize) -> Vec<Vec2> {
    domain.edges().flat_map(|(a, b)| (0..per_edge).map(move |i| a + (i as f64 / per_edge as f64) * (b - a))).collect()
}

/// `sigma` with `J sigma = g * |D| / int g`, from the Moser flow of the Bogovskii field of
/// `g - 1`; `g` is tabulated on the field grid first.
pub fn moser_flow<G: Fn(Vec2) -> f64 + Sync>(g: G, domain: &StarDomain, opts: FlowOptions) -> Result<MoserCorrector> {
    let (lo, hi) = domain.bounding_box();
    let n = opts.resolution.max(4);
    let table = GridFn::tabulate(lo, hi, n, |p| g(domain.project(p)));
    if let Some(&bad) = table.values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveDensity(bad));
    }
    let area = domain.area();
    let mass = domain_integral(domain, |p| table.eval(p))?;
    let norm = area / mass;
    let constant = table.values.iter().all(|&v| v == table.values[0]);
    let mut density = table;
    for v in &mut density.values {
        *v = if constant { 1.0 } else { *v * norm };
    }
    let field = if constant {
        VectorField::zero(domain)
    } else {
        let mean_one = domain_integral(domain, |p| density.eval(p))? / area;
        let table = Arc::new(density.clone());
        bogovskii_field(move |p| table.eval(p) - mean_one, domain, n)?
    };
    let divergence = field.divergence_residual;
    let mut sigma = MoserCorrector {
        domain: domain.clone(),
        field: Arc::new(field),
        density: Arc::new(density),
        steps: opts.steps,
        report: ResidualReport {
            max_jacobian_residual: 0.0,
            boundary_displacement: 0.0,
            mass_error: 0.0,
            divergence_residual: divergence,
        },
    };
    let pts = interior_samples(domain, opts.samples, 1e-4, 17);
    let worst = pts
        .par_iter()
        .map(|&p| Ok((sigma.jacobian_matrix(p)?.det() - sigma.density(p)).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let boundary = boundary_samples(domain, 250)
        .iter()
        .map(|&b| Ok((sigma.eval(b)? - b).norm()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    sigma.report.max_jacobian_residual = worst;
    sigma.report.boundary_displacement = boundary;
    sigma.report.mass_error = mass_error(&sigma)?;
    Ok(sigma)
}

/// `|int_D J sigma - |D|| / |D|`.
pub fn mass_error(sigma: &MoserCorrector) -> Result<f64> {
    let domain = &sigma.domain;
    let grid = domain.region().quadrature_grid(16, &Default::default(), 0.0)?;
    let terms = grid
        .nodes
        .par_iter()
        .zip(&grid.weights)
        .map(|(&p, &w)| Ok(w * sigma.jacobian_matrix(p)?.det()))
        .collect::<Result<Vec<f64>>>()?;
    Ok((pairwise_sum(&terms) - domain.area()).abs() / domain.area())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub max_residual: f64,
    pub mass_error: f64,
}

/// Result of [`constant_jacobian_corrector`].
#[derive(Debug, Clone)]
pub struct CorrectorOutcome {
    /// The best iterate; `tau o sigma` is the corrected wedge map.
    pub sigma: Arc<MoserCorrector>,
    pub target: f64,
    pub trace: Vec<TraceRow>,
    pub initial_residual: f64,
    pub final_residual: f64,
}

impl CorrectorOutcome {
    /// CSV with header `iter,max_residual,mass_error`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,max_residual,mass_error")?;
        for row in &self.trace {
            writeln!(out, "{},{:.16e},{:.16e}", row.iter, row.max_residual, row.mass_error)?;
        }
        Ok(())
    }
}

fn composed_residual(tau: &WedgeMap, sigma: &MoserCorrector, c: f64, pts: &[Vec2]) -> Result<f64> {
    Ok(pts
        .par_iter()
        .map(|&p| {
            let q = sigma.eval(p)?;
            let j = tau.jacobian_value(q) * sigma.jacobian_matrix(p)?.det();
            Ok((j - c).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Fixed-point iteration `sigma_{n+1} = moser_flow(c / J tau(sigma_n))` starting from the
/// identity, so that `J (tau o sigma) -> c` on the wedge.
///
/// Fails with `CorrectorDiverged` when the residual increases twice in a row.
pub fn constant_jacobian_corrector(
    tau: &WedgeMap,
    c: f64,
    iterations: usize,
    opts: FlowOptions,
) -> Result<CorrectorOutcome> {
    if !(c > 0.0) {
        return Err(Error::PreconditionViolated(format!("target constant {c} must be positive")));
    }
    let domain = StarDomain::wedge();
    let pts = interior_samples(&domain, opts.samples, 1e-4, 23);
    let mut current = Arc::new(MoserCorrector::identity(&domain));
    let initial = composed_residual(tau, &current, c, &pts)?;
    let mut trace = vec![TraceRow { iter: 0, max_residual: initial, mass_error: 0.0 }];
    let mut best = (initial, current.clone());
    let mut previous = initial;
    let mut rises = 0;
    for iter in 1..=iterations {
        let prev = current.clone();
        let g = move |p: Vec2| c / tau.jacobian_value(prev.eval(p).unwrap_or(p));
        let next = Arc::new(moser_flow(g, &domain, opts)?);
        let residual = composed_residual(tau, &next, c, &pts)?;
        trace.push(TraceRow { iter, max_residual: residual, mass_error: next.report.mass_error });
        if residual < best.0 {
            best = (residual, next.clone());
        }
        rises = if residual > previous { rises + 1 } else { 0 };
        if rises >= 2 {
            return Err(Error::CorrectorDiverged { best: best.0 });
        }
        previous = residual;
        current = next;
    }
    Ok(CorrectorOutcome { sigma: best.1, target: c, trace, initial_residual: initial, final_residual: best.0 })
}

/// Wedge residual of the corrector-free map: `max |J tau - c|` on the same samples.
pub fn wedge_initial_residual(tau: &WedgeMap, c: f64, samples: usize) -> f64 {
    let domain = StarDomain::wedge();
    interior_samples(&domain, samples, 1e-4, 23).iter().map(|&p| (tau.jacobian_value(p) - c).abs()).fold(0.0, f64::max)
}
