//! Planar domains and break-aligned tensor quadrature grids on them.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::map::Breaks;
use crate::quadrature::GaussRule;

/// Sector of the plane a region is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    UpperHalf,
    LowerHalf,
    RightHalf,
    LeftHalf,
    /// Quadrant `q` in `0..4`, counterclockwise from `{x > 0, y > 0}`.
    Quadrant(u8),
}

impl Restriction {
    /// Angular range `[start, end)` covered.
    pub fn angles(self) -> (f64, f64) {
        match self {
            Restriction::UpperHalf => (0.0, PI),
            Restriction::LowerHalf => (PI, TAU),
            Restriction::RightHalf => (-0.5 * PI, 0.5 * PI),
            Restriction::LeftHalf => (0.5 * PI, 1.5 * PI),
            Restriction::Quadrant(q) => {
                let a = 0.5 * PI * (q % 4) as f64;
                (a, a + 0.5 * PI)
            }
        }
    }

    pub fn contains(self, p: Vec2) -> bool {
        match self {
            Restriction::UpperHalf => p.y >= 0.0,
            Restriction::LowerHalf => p.y <= 0.0,
            Restriction::RightHalf => p.x >= 0.0,
            Restriction::LeftHalf => p.x <= 0.0,
            Restriction::Quadrant(q) => {
                let (sx, sy) = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)][(q % 4) as usize];
                sx * p.x >= 0.0 && sy * p.y >= 0.0
            }
        }
    }

    fn fraction(self) -> f64 {
        match self {
            Restriction::Quadrant(_) => 0.25,
            _ => 0.5,
        }
    }
}

/// A planar domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Region {
    Disc {
        radius: f64,
    },
    Annulus {
        inner: f64,
        outer: f64,
    },
    /// `{|z|_1 < radius}`.
    L1Ball {
        radius: f64,
    },
    /// `{inner < |z|_1 < outer}`.
    L1Annulus {
        inner: f64,
        outer: f64,
    },
    Restricted {
        base: Box<Region>,
        restriction: Restriction,
    },
    /// Counterclockwise vertices.
    ConvexPolygon {
        vertices: Vec<Vec2>,
    },
}

/// One quadrature cell: a parametrised patch of the region.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Polar {
        r0: f64,
        r1: f64,
        t0: f64,
        t1: f64,
    },
    /// Bilinear patch `(1-s)(1-t) p00 + s(1-t) p10 + (1-s) t p01 + s t p11`.
    Quad {
        p00: Vec2,
        p10: Vec2,
        p01: Vec2,
        p11: Vec2,
    },
}

impl Cell {
    fn push_nodes(&self, rule: &GaussRule, nodes: &mut Vec<Vec2>, weights: &mut Vec<f64>) {
        match *self {
            Cell::Polar { r0, r1, t0, t1 } => {
                for (r, wr) in rule.on(r0, r1) {
                    for (t, wt) in rule.on(t0, t1) {
                        nodes.push(Vec2::from_polar(r, t));
                        weights.push(wr * wt * r);
                    }
                }
            }
            Cell::Quad { p00, p10, p01, p11 } => {
                for (s, ws) in rule.on(0.0, 1.0) {
                    for (t, wt) in rule.on(0.0, 1.0) {
                        let p = (1.0 - s) * (1.0 - t) * p00 + s * (1.0 - t) * p10 + (1.0 - s) * t * p01 + s * t * p11;
                        let ds = (1.0 - t) * (p10 - p00) + t * (p11 - p01);
                        let dt = (1.0 - s) * (p01 - p00) + s * (p11 - p10);
                        nodes.push(p);
                        weights.push(ws * wt * ds.cross(dt).abs());
                    }
                }
            }
        }
    }
}

/// Tensor Gauss-Legendre nodes and weights covering a region.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub region: Region,
    /// Cells per direction.
    pub resolution: usize,
    pub nodes: Vec<Vec2>,
    pub weights: Vec<f64>,
    /// Whether every declared polar break of the map lies on cell edges.
    pub break_aligned: bool,
}

/// Nodes per cell edge of the tensor rule.
pub const CELL_ORDER: usize = 4;

/// Split `[a, b]` at `cuts` and subdivide each piece proportionally to its length.
fn partition(a: f64, b: f64, cuts: &[f64], n: usize) -> Vec<f64> {
    let mut edges: Vec<f64> = cuts.iter().copied().filter(|&c| c > a + 1e-12 && c < b - 1e-12).collect();
    edges.push(a);
    edges.push(b);
    edges.sort_by(|x, y| x.total_cmp(y));
    let mut out = vec![a];
    for w in edges.windows(2) {
        let m = ((n as f64 * (w[1] - w[0]) / (b - a)).round() as usize).max(1);
        for j in 1..=m {
            out.push(if j == m { w[1] } else { w[0] + (w[1] - w[0]) * j as f64 / m as f64 });
        }
    }
    out
}

/// Angles of `breaks` lifted into `[start, start + span)`.
fn lift_angles(angles: &[f64], start: f64, span: f64) -> Vec<f64> {
    angles.iter().map(|&a| start + (a - start).rem_euclid(TAU)).filter(|&a| a < start + span).collect()
}

impl Region {
    pub fn disc(radius: f64) -> Self {
        Region::Disc { radius }
    }

    pub fn restrict(self, restriction: Restriction) -> Self {
        Region::Restricted { base: Box::new(self), restriction }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            Region::Disc { radius } => p.norm() < *radius,
            Region::Annulus { inner, outer } => {
                let r = p.norm();
                r > *inner && r < *outer
            }
            Region::L1Ball { radius } => p.l1_norm() < *radius,
            Region::L1Annulus { inner, outer } => {
                let r = p.l1_norm();
                r > *inner && r < *outer
            }
            Region::Restricted { base, restriction } => base.contains(p) && restriction.contains(p),
            Region::ConvexPolygon { vertices } => polygon_contains(vertices, p),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Region::Disc { radius } => PI * radius * radius,
            Region::Annulus { inner, outer } => PI * (outer * outer - inner * inner),
            Region::L1Ball { radius } => 2.0 * radius * radius,
            Region::L1Annulus { inner, outer } => 2.0 * (outer * outer - inner * inner),
            Region::Restricted { base, restriction } => base.area() * restriction.fraction(),
            Region::ConvexPolygon { vertices } => polygon_area(vertices),
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match self {
            Region::Disc { radius } | Region::L1Ball { radius } => {
                (Vec2::new(-radius, -radius), Vec2::new(*radius, *radius))
            }
            Region::Annulus { outer, .. } | Region::L1Annulus { outer, .. } => {
                (Vec2::new(-outer, -outer), Vec2::new(*outer, *outer))
            }
            Region::Restricted { base, restriction } => {
                let (lo, hi) = base.bounding_box();
                let (mut lo, mut hi) = (lo, hi);
                match restriction {
                    Restriction::UpperHalf => lo.y = lo.y.max(0.0),
                    Restriction::LowerHalf => hi.y = hi.y.min(0.0),
                    Restriction::RightHalf => lo.x = lo.x.max(0.0),
                    Restriction::LeftHalf => hi.x = hi.x.min(0.0),
                    Restriction::Quadrant(q) => match q % 4 {
                        0 => {
                            lo.x = lo.x.max(0.0);
                            lo.y = lo.y.max(0.0)
                        }
                        1 => {
                            hi.x = hi.x.min(0.0);
                            lo.y = lo.y.max(0.0)
                        }
                        2 => {
                            hi.x = hi.x.min(0.0);
                            hi.y = hi.y.min(0.0)
                        }
                        _ => {
                            lo.x = lo.x.max(0.0);
                            hi.y = hi.y.min(0.0)
                        }
                    },
                }
                (lo, hi)
            }
            Region::ConvexPolygon { vertices } => {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vertices {
                    lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
                    hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
                }
                (lo, hi)
            }
        }
    }

    /// Whether the region is invariant under all rotations about the origin.
    pub fn is_rotation_invariant(&self) -> bool {
        matches!(self, Region::Disc { .. } | Region::Annulus { .. })
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::DegenerateDomain(msg.to_string()));
        match self {
            Region::Disc { radius } | Region::L1Ball { radius } if !(*radius > 0.0) => bad("radius must be positive"),
            Region::Annulus { inner, outer } | Region::L1Annulus { inner, outer }
                if !(*inner >= 0.0 && outer > inner) =>
            {
                bad("annulus needs 0 <= inner < outer")
            }
            Region::Restricted { base, .. } => match **base {
                Region::Restricted { .. } | Region::ConvexPolygon { .. } => {
                    bad("only balls and annuli can be restricted")
                }
                _ => base.validate(),
            },
            Region::ConvexPolygon { vertices } => {
                if vertices.len() < 3 || polygon_area(vertices) <= 0.0 {
                    return bad("polygon needs three counterclockwise vertices");
                }
                let n = vertices.len();
                for i in 0..n {
                    let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
                    if (b - a).cross(c - b) < 0.0 {
                        return bad("polygon is not convex");
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn cells(&self, n: usize, breaks: &Breaks, angle_origin: f64) -> Result<(Vec<Cell>, bool)> {
        self.validate()?;
        let (base, sector) = match self {
            Region::Restricted { base, restriction } => (base.as_ref(), Some(restriction.angles())),
            other => (other, None),
        };
        match base {
            Region::Disc { .. } | Region::Annulus { .. } => {
                let (r_in, r_out) = match base {
                    Region::Disc { radius } => (0.0, *radius),
                    Region::Annulus { inner, outer } => (*inner, *outer),
                    _ => unreachable!(),
                };
                let (t_start, span, mut cuts) = match sector {
                    Some((a, b)) => (a, b - a, Vec::new()),
                    None => (angle_origin, TAU, Vec::new()),
                };
                cuts.extend(lift_angles(&breaks.angles, t_start, span));
                if sector.is_some() {
                    cuts.extend(lift_angles(&[angle_origin], t_start, span));
                }
                let radii = partition(r_in, r_out, &breaks.radii, n);
                let angles = partition(t_start, t_start + span, &cuts, n);
                let mut cells = Vec::with_capacity(radii.len() * angles.len());
                for r in radii.windows(2) {
                    for t in angles.windows(2) {
                        cells.push(Cell::Polar { r0: r[0], r1: r[1], t0: t[0], t1: t[1] });
                    }
                }
                Ok((cells, true))
            }
            Region::L1Ball { .. } | Region::L1Annulus { .. } => {
                let (s_in, s_out) = match base {
                    Region::L1Ball { radius } => (0.0, *radius),
                    Region::L1Annulus { inner, outer } => (*inner, *outer),
                    _ => unreachable!(),
                };
                let quadrants: Vec<u8> = match sector {
                    None => vec![0, 1, 2, 3],
                    Some(_) => {
                        let Region::Restricted { restriction, .. } = self else { unreachable!() };
                        match restriction {
                            Restriction::UpperHalf => vec![0, 1],
                            Restriction::LowerHalf => vec![2, 3],
                            Restriction::RightHalf => vec![3, 0],
                            Restriction::LeftHalf => vec![1, 2],
                            Restriction::Quadrant(q) => vec![q % 4],
                        }
                    }
                };
                let levels = partition(s_in, s_out, &breaks.radii, n);
                let per = (n / 4).max(1);
                let mut cells = Vec::new();
                for q in quadrants {
                    let a = Vec2::from_polar(1.0, 0.5 * PI * q as f64);
                    let b = Vec2::from_polar(1.0, 0.5 * PI * (q + 1) as f64);
                    let a = Vec2::new(a.x.round(), a.y.round());
                    let b = Vec2::new(b.x.round(), b.y.round());
                    for s in levels.windows(2) {
                        for j in 0..per {
                            let t0 = j as f64 / per as f64;
                            let t1 = (j + 1) as f64 / per as f64;
                            let e0 = (1.0 - t0) * a + t0 * b;
                            let e1 = (1.0 - t1) * a + t1 * b;
                            cells.push(Cell::Quad { p00: s[0] * e0, p10: s[1] * e0, p01: s[0] * e1, p11: s[1] * e1 });
                        }
                    }
                }
                Ok((cells, breaks.angles.is_empty()))
            }
            Region::ConvexPolygon { vertices } => {
                let c = vertices.iter().fold(Vec2::ZERO, |acc, &v| acc + v);
                let c = (1.0 / vertices.len() as f64) * c;
                let m = n.max(1);
                let mut cells = Vec::new();
                for i in 0..vertices.len() {
                    let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
                    for si in 0..m {
                        let (s0, s1) = (si as f64 / m as f64, (si + 1) as f64 / m as f64);
                        for ti in 0..m {
                            let (t0, t1) = (ti as f64 / m as f64, (ti + 1) as f64 / m as f64);
                            let at = |s: f64, t: f64| c + s * ((1.0 - t) * (a - c) + t * (b - c));
                            cells.push(Cell::Quad {
                                p00: at(s0, t0),
                                p10: at(s1, t0),
                                p01: at(s0, t1),
                                p11: at(s1, t1),
                            });
                        }
                    }
                }
                Ok((cells, breaks.radii.is_empty() && breaks.angles.is_empty()))
            }
            Region::Restricted { .. } => unreachable!(),
        }
    }

    /// Quadrature grid with about `n` cells per direction and `CELL_ORDER^2` nodes per cell.
    pub fn quadrature_grid(&self, n: usize, breaks: &Breaks, angle_origin: f64) -> Result<QuadratureGrid> {
        let (cells, break_aligned) = self.cells(n.max(1), breaks, angle_origin)?;
        let rule = GaussRule::new(CELL_ORDER);
        let mut nodes = Vec::with_capacity(cells.len() * CELL_ORDER * CELL_ORDER);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for cell in &cells {
            cell.push_nodes(&rule, &mut nodes, &mut weights);
        }
        Ok(QuadratureGrid { region: self.clone(), resolution: n, nodes, weights, break_aligned })
    }
}

pub fn polygon_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    0.5 * (0..n).map(|i| vertices[i].cross(vertices[(i + 1) % n])).sum::<f64>()
}

/// Strict interior test for a counterclockwise convex polygon.
pub fn polygon_contains(vertices: &[Vec2], p: Vec2) -> bool {
    let n = vertices.len();
    (0..n).all(|i| (vertices[(i + 1) % n] - vertices[i]).cross(p - vertices[i]) > 0.0)
}

/// The wedge `{x > 0, y > 0, 2 < x + y < 3}`.
pub fn wedge_polygon() -> Region {
    Region::ConvexPolygon {
        vertices: vec![Vec2::new(2.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(0.0, 3.0), Vec2::new(0.0, 2.0)],
    }
}
