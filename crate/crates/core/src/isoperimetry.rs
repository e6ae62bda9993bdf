//! Image curves of circles, their winding-number fields and isoperimetric audits.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{polyline_diameter, segment_distance, winding_number, Vec2};
use crate::map::PlanarMap;

/// Closed polyline `theta -> u(r e^{i theta})`; the closing segment is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCurve {
    pub radius: f64,
    pub samples: Vec<Vec2>,
}

impl ImageCurve {
    pub const MIN_SAMPLES: usize = 256;

    pub fn from_map<M: PlanarMap + ?Sized>(u: &M, r: f64, n: usize) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::NonPositiveRadius(r));
        }
        let n = n.max(Self::MIN_SAMPLES);
        let samples =
            (0..n).map(|j| u.eval(Vec2::from_polar(r, TAU * j as f64 / n as f64))).collect::<Result<Vec<_>>>()?;
        Ok(Self { radius: r, samples })
    }

    pub fn from_points(radius: f64, samples: Vec<Vec2>) -> Self {
        Self { radius, samples }
    }

    fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.samples.len();
        (0..n).map(move |i| (self.samples[i], self.samples[(i + 1) % n]))
    }
}

pub fn curve_length(c: &ImageCurve) -> f64 {
    c.segments().map(|(a, b)| (b - a).norm()).sum()
}

/// Winding numbers of a curve on a cell-centred grid over its inflated bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct WindingField {
    pub lo: Vec2,
    pub hi: Vec2,
    pub nx: usize,
    pub ny: usize,
    /// Row-major values; `None` marks points too close to the curve.
    pub values: Vec<Option<i64>>,
}

impl WindingField {
    /// Grid of `resolution^2` points over the bounding box inflated by 10%.
    pub fn new(c: &ImageCurve, resolution: usize) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &c.samples {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let pad = Vec2::new(0.05 * (hi.x - lo.x), 0.05 * (hi.y - lo.y));
        let (lo, hi) = (lo - pad, hi + pad);
        let n = resolution.max(2);
        let tol = 1e-12 * polyline_diameter(&c.samples);
        let segs: Vec<(Vec2, Vec2)> = c.segments().collect();
        let dx = (hi.x - lo.x) / n as f64;
        let dy = (hi.y - lo.y) / n as f64;
        let rows: Vec<Vec<Option<i64>>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let y = lo.y + (j as f64 + 0.5) * dy;
                // signed crossings of the horizontal line through y, half-open in y
                let mut crossings: Vec<(f64, i64)> = segs
                    .iter()
                    .filter_map(|&(a, b)| {
                        let up = a.y <= y && b.y > y;
                        let down = a.y > y && b.y <= y;
                        if !(up || down) {
                            return None;
                        }
                        let x = a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x);
                        Some((x, if up { 1 } else { -1 }))
                    })
                    .collect();
                crossings.sort_by(|p, q| p.0.total_cmp(&q.0));
                let total: i64 = crossings.iter().map(|c| c.1).sum();
                let near: Vec<(Vec2, Vec2)> =
                    segs.iter().copied().filter(|(a, b)| a.y.min(b.y) - tol <= y && a.y.max(b.y) + tol >= y).collect();
                let mut k = 0;
                let mut left = 0i64;
                (0..n)
                    .map(|i| {
                        let x = lo.x + (i as f64 + 0.5) * dx;
                        while k < crossings.len() && crossings[k].0 <= x {
                            left += crossings[k].1;
                            k += 1;
                        }
                        let p = Vec2::new(x, y);
                        let masked = near.iter().any(|&(a, b)| {
                            x >= a.x.min(b.x) - tol && x <= a.x.max(b.x) + tol && segment_distance(p, a, b) <= tol
                        });
                        if masked {
                            None
                        } else {
                            Some(total - left)
                        }
                    })
                    .collect()
            })
            .collect();
        Self { lo, hi, nx: n, ny: n, values: rows.into_iter().flatten().collect() }
    }

    pub fn cell_area(&self) -> f64 {
        (self.hi.x - self.lo.x) / self.nx as f64 * (self.hi.y - self.lo.y) / self.ny as f64
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.lo.x + (i as f64 + 0.5) * (self.hi.x - self.lo.x) / self.nx as f64,
            self.lo.y + (j as f64 + 0.5) * (self.hi.y - self.lo.y) / self.ny as f64,
        )
    }

    pub fn masked(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// CSV dump with header `x,y,w`; masked points are skipped.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,w")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if let Some(w) = self.values[j * self.nx + i] {
                    let p = self.point(i, j);
                    writeln!(out, "{:.16e},{:.16e},{}", p.x, p.y, w)?;
                }
            }
        }
        Ok(())
    }
}

/// `(int deg dy, int deg^2 dy)` as Riemann sums over the winding field.
pub fn degree_moments(c: &ImageCurve, resolution: usize) -> Result<(f64, f64)> {
    let field = WindingField::new(c, resolution);
    let masked = field.masked();
    if masked * 100 >= field.values.len() {
        return Err(Error::ExcessiveMasking { masked, total: field.values.len() });
    }
    let (mut s1, mut s2) = (0i64, 0i64);
    for w in field.values.iter().flatten() {
        s1 += w;
        s2 += w * w;
    }
    let a = field.cell_area();
    Ok((s1 as f64 * a, s2 as f64 * a))
}

/// Algebraic (Kasa) circle fit: `(center, radius, max radial deviation)`.
pub fn circle_fit(points: &[Vec2]) -> (Vec2, f64, f64) {
    let n = points.len() as f64;
    let m = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
    let m = (1.0 / n) * m;
    // centred normal equations for x^2 + y^2 = 2 a x + 2 b y + c
    let (mut suu, mut suv, mut svv, mut suz, mut svz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &p in points {
        let (u, v) = (p.x - m.x, p.y - m.y);
        let z = u * u + v * v;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suz += u * z;
        svz += v * z;
    }
    let det = suu * svv - suv * suv;
    let (a, b) = if det.abs() > 0.0 {
        (0.5 * (suz * svv - svz * suv) / det, 0.5 * (svz * suu - suz * suv) / det)
    } else {
        (0.0, 0.0)
    };
    let center = Vec2::new(m.x + a, m.y + b);
    let radius = points.iter().map(|&p| (p - center).norm()).sum::<f64>() / n;
    let dev = points.iter().map(|&p| ((p - center).norm() - radius).abs()).fold(0.0, f64::max);
    (center, radius, dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsoperimetricReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
    pub equality: bool,
    pub circle_fit_residual: f64,
    pub winding: i64,
}

pub const EQUALITY_TOLERANCE: f64 = 1e-3;

/// `lhs = 4 pi |int_{B_r} Ju|` against `rhs = length^2`.
///
/// Equality needs the ratio within `1e-3` of one, a circle fit with residual below
/// `1e-3 * radius` and winding number `+-1` about the fitted centre.
pub fn isoperimetric_check(c: &ImageCurve, area_from_jacobian: f64) -> IsoperimetricReport {
    let lhs = 4.0 * PI * area_from_jacobian.abs();
    let len = curve_length(c);
    let rhs = len * len;
    let ratio = lhs / rhs;
    let (center, radius, dev) = circle_fit(&c.samples);
    let winding = winding_number(&c.samples, center).unwrap_or(0);
    let equality = (ratio - 1.0).abs() < EQUALITY_TOLERANCE && dev < EQUALITY_TOLERANCE * radius && winding.abs() == 1;
    IsoperimetricReport {
        lhs,
        rhs,
        ratio,
        holds: lhs <= rhs * (1.0 + EQUALITY_TOLERANCE),
        equality,
        circle_fit_residual: dev,
        winding,
    }
}

/// Closed curve `sum_k c_k e^{i k theta}` sampled at `n` angles.
pub fn fourier_curve(coeffs: &[(i32, Vec2)], n: usize) -> ImageCurve {
    let samples = (0..n)
        .map(|j| {
            let t = TAU * j as f64 / n as f64;
            coeffs.iter().fold(Vec2::ZERO, |acc, &(k, c)| acc + c.rotate(k as f64 * t))
        })
        .collect();
    ImageCurve::from_points(1.0, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{ball_to_square, shear_map, RotatedEta};
    use crate::map::{FnMap, PlanarMap};
    use crate::radial::{Expr, GeneralisedStretching, RadialDatum};
    use proptest::prelude::*;

    fn circle(radius: f64, turns: i32, n: usize) -> ImageCurve {
        fourier_curve(&[(turns, Vec2::new(radius, 0.0))], n)
    }

    #[test]
    fn length_examples() {
        assert!((curve_length(&circle(1.0, 1, 1024)) - TAU).abs() < 1e-4);
        let f = RadialDatum::single(Expr::Gaussian { amp: 1.0, width: 1.0 }, Some(3.0)).unwrap();
        for k in [1, 2, 3] {
            let phi = GeneralisedStretching::from_datum(&f, k).unwrap();
            let r = 1.3;
            let c = ImageCurve::from_map(&phi, r, 4096).unwrap();
            let oracle = TAU * (k as f64).sqrt() * phi.profile.rho(r);
            assert!((curve_length(&c) - oracle).abs() < 1e-5 * oracle);
        }
        let eta = ball_to_square();
        let c = ImageCurve::from_map(&eta, 1.0, 4096).unwrap();
        assert!((curve_length(&c) - 4.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn moments_examples() {
        let (i1, i2) = degree_moments(&circle(1.0, 1, 1024), 512).unwrap();
        assert!((i1 - PI).abs() < 2e-3 && (i2 - PI).abs() < 2e-3);
        let (i1, i2) = degree_moments(&circle(1.0, 2, 1024), 512).unwrap();
        assert!((i1 - TAU).abs() < 4e-3 && (i2 - 4.0 * PI).abs() < 8e-3);
        // image of S_2 under v_{1/2} composed with R eta encloses int_{Q_2} J v = 2 eps + 6
        let v = shear_map(0.5);
        let re = RotatedEta;
        let chain = FnMap::new(move |p: Vec2| v.eval(re.eval(p).unwrap()).unwrap());
        let c = ImageCurve::from_map(&chain, 2.0, 4096).unwrap();
        let (i1, _) = degree_moments(&c, 512).unwrap();
        assert!((i1 - 7.0).abs() < 0.07, "{i1}");
    }

    #[test]
    fn isoperimetric_examples() {
        let f = RadialDatum::single(Expr::Gaussian { amp: 1.0, width: 1.0 }, Some(3.0)).unwrap();
        let phi = GeneralisedStretching::from_datum(&f, 1).unwrap();
        for r in [0.3, 1.0, 2.5] {
            let rep = isoperimetric_check(&ImageCurve::from_map(&phi, r, 1024).unwrap(), PI * f.cumulative(r));
            assert!(rep.equality && rep.holds, "{rep:?}");
        }
        let ell = FnMap::new(|p: Vec2| Vec2::new(2.0 * p.x, p.y));
        let rep = isoperimetric_check(&ImageCurve::from_map(&ell, 1.0, 4096).unwrap(), 2.0 * PI);
        let perimeter = 9.688_448_220_547_675;
        assert!((rep.lhs - 8.0 * PI * PI).abs() < 1e-12);
        assert!((rep.rhs - perimeter * perimeter).abs() < 1e-4);
        assert!(rep.holds && !rep.equality);
    }

    #[test]
    fn winding_field_outside_is_zero() {
        let field = WindingField::new(&circle(1.0, 1, 512), 64);
        assert_eq!(field.values[0], Some(0));
        assert_eq!(field.values[32 * 64 + 32], Some(1));
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,y,w\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn generalised_inequality(a1 in 0.5..2.0f64, k in 2i32..5, b in 0.05..0.6f64, ph in 0.0..6.0f64, km in -3i32..0) {
            let c = fourier_curve(&[(1, Vec2::new(a1, 0.0)), (k, Vec2::from_polar(b, ph)), (km, Vec2::from_polar(0.3 * b, -ph))], 1024);
            let (i1, i2) = degree_moments(&c, 256).unwrap();
            let len = curve_length(&c);
            prop_assert!(i2 >= i1.abs() - 1e-12);
            prop_assert!(4.0 * PI * i2 <= len * len * (1.0 + 1e-3));
        }

        #[test]
        fn check_invariant_under_rotation(alpha in 0.0..6.3f64, shift in 0usize..1024) {
            let base = fourier_curve(&[(1, Vec2::new(1.0, 0.0)), (3, Vec2::new(0.2, 0.1))], 1024);
            let mut rotated: Vec<Vec2> = base.samples.iter().map(|p| p.rotate(alpha)).collect();
            rotated.rotate_left(shift);
            let a = isoperimetric_check(&base, 2.0);
            let b = isoperimetric_check(&ImageCurve::from_points(1.0, rotated), 2.0);
            prop_assert!((a.ratio - b.ratio).abs() < 1e-12 && a.holds == b.holds && a.equality == b.equality);
        }
    }
}
