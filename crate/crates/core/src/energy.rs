//! 2p-Dirichlet energies, Jacobian residuals and the Zhukovsky comparison.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{fd_jacobian, Vec2};
use crate::isoperimetry::{isoperimetric_check, ImageCurve};
use crate::map::PlanarMap;
use crate::quadrature::pairwise_sum;
use crate::radial::{condition_report, zhukovsky, GeneralisedStretching, RadialDatum};
use crate::region::Region;
use crate::sampling::Halton2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub value: f64,
    pub p: f64,
    pub region: Region,
    /// `|value(fine) - value(coarse)|` for grids of `n / 2` and `n` cells per direction.
    pub refinement_estimate: f64,
}

/// Default cells per direction; with 4x4 nodes per cell this is 1024^2 nodes.
pub const DEFAULT_CELLS: usize = 256;

fn energy_on_grid<M: PlanarMap + ?Sized>(u: &M, p: f64, region: &Region, n: usize) -> Result<f64> {
    let grid = region.quadrature_grid(n, &u.breaks(), u.angle_origin())?;
    let terms: Vec<f64> = grid
        .nodes
        .par_iter()
        .zip(grid.weights.par_iter())
        .map(|(&x, &w)| {
            let a = u.jacobian_matrix(x).map_err(|_| Error::EvaluationFailure { x: x.x, y: x.y })?;
            let v = w * a.norm_sq().powf(p);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::EvaluationFailure { x: x.x, y: x.y })
            }
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&terms))
}

/// `int_region |Du|^{2p}` on break-aligned grids with `n / 2` and `n` cells per direction.
pub fn region_energy_with<M: PlanarMap + ?Sized>(u: &M, p: f64, region: &Region, n: usize) -> Result<EnergyReport> {
    if !(p >= 1.0) {
        return Err(Error::PreconditionViolated(format!("p = {p} < 1")));
    }
    let n = n.max(2);
    let coarse = energy_on_grid(u, p, region, n / 2)?;
    let fine = energy_on_grid(u, p, region, n)?;
    Ok(EnergyReport { value: fine, p, region: region.clone(), refinement_estimate: (fine - coarse).abs() })
}

pub fn region_energy<M: PlanarMap + ?Sized>(u: &M, p: f64, region: &Region) -> Result<EnergyReport> {
    region_energy_with(u, p, region, DEFAULT_CELLS)
}

/// `int_0^{2 pi} |Du(r e^{i theta})|^{2p} d theta` by the periodic trapezoid rule with `n >= 256` nodes.
pub fn circle_energy_with<M: PlanarMap + ?Sized>(u: &M, p: f64, r: f64, n: usize) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    if u.breaks().radii.iter().any(|&b| (b - r).abs() < 1e-9) {
        return Err(Error::BreakRadius(r));
    }
    let n = n.max(256);
    let origin = u.angle_origin();
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = Vec2::from_polar(r, origin + TAU * (j as f64 + 0.5) / n as f64);
            let a = u.jacobian_matrix(x).map_err(|_| Error::EvaluationFailure { x: x.x, y: x.y })?;
            Ok(a.norm_sq().powf(p))
        })
        .collect::<Result<_>>()?;
    Ok(TAU / n as f64 * pairwise_sum(&terms))
}

pub fn circle_energy<M: PlanarMap + ?Sized>(u: &M, p: f64, r: f64) -> Result<f64> {
    circle_energy_with(u, p, r, 1024)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub max: f64,
    pub mean: f64,
    pub samples: usize,
}

/// Quasi-random points in `region` at least `10 h(x)` away from the map's breaks,
/// where `h` is the finite-difference step.
pub fn smooth_samples<M: PlanarMap + ?Sized>(u: &M, region: &Region, count: usize, seed: u64) -> Vec<Vec2> {
    let (lo, hi) = region.bounding_box();
    let mut out = Vec::with_capacity(count);
    let mut halton = Halton2::new(seed);
    let max_tries = 200 * count + 1000;
    for _ in 0..max_tries {
        if out.len() == count {
            break;
        }
        let (s, t) = halton.next().expect("infinite sequence");
        let x = Vec2::new(lo.x + s * (hi.x - lo.x), lo.y + t * (hi.y - lo.y));
        let h = 1e-6 * x.norm().max(1.0);
        if region.contains(x) && u.break_distance(x) >= 10.0 * h && x.norm() >= 10.0 * h {
            out.push(x);
        }
    }
    out
}

/// Statistics of `|det D_fd u(x) - f(x)|` over quasi-random smooth points, with the derivative
/// taken by central differences of `u.eval`.
pub fn jacobian_residual<M, F>(u: &M, f: F, region: &Region, count: usize, seed: u64) -> Residual
where
    M: PlanarMap + ?Sized,
    F: Fn(Vec2) -> f64 + Sync,
{
    let pts = smooth_samples(u, region, count, seed);
    let errs: Vec<f64> = pts
        .par_iter()
        .map(|&x| match fd_jacobian(|q| u.eval(q), x) {
            Ok(a) => (a.det() - f(x)).abs(),
            Err(_) => f64::INFINITY,
        })
        .collect();
    summarise(&errs)
}

/// Largest entrywise gap between the map's own derivative and central differences.
pub fn derivative_consistency<M: PlanarMap + ?Sized>(u: &M, region: &Region, count: usize, seed: u64) -> Residual {
    let pts = smooth_samples(u, region, count, seed);
    let errs: Vec<f64> = pts
        .par_iter()
        .map(|&x| match (u.jacobian_matrix(x), fd_jacobian(|q| u.eval(q), x)) {
            (Ok(a), Ok(b)) => {
                [a.a11 - b.a11, a.a12 - b.a12, a.a21 - b.a21, a.a22 - b.a22].iter().fold(0.0f64, |m, d| m.max(d.abs()))
            }
            _ => f64::INFINITY,
        })
        .collect();
    summarise(&errs)
}

fn summarise(errs: &[f64]) -> Residual {
    let max = errs.iter().copied().fold(0.0, f64::max);
    let mean = if errs.is_empty() { 0.0 } else { pairwise_sum(errs) / errs.len() as f64 };
    Residual { max, mean, samples: errs.len() }
}

/// Sampled lower bound for `ess sup |Du|` (Frobenius norm).
pub fn lipschitz_estimate<M: PlanarMap + ?Sized>(u: &M, region: &Region, count: usize, seed: u64) -> f64 {
    smooth_samples(u, region, count, seed)
        .par_iter()
        .filter_map(|&x| u.jacobian_matrix(x).ok())
        .map(|a| a.norm())
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZhukovskyRow {
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub lambda_star: f64,
    /// Whether the competitor satisfies the isoperimetric hypothesis on `S_r`.
    pub isoperimetric: bool,
}

/// Residual tolerance a competitor must meet before it is compared.
pub const COMPETITOR_TOLERANCE: f64 = 1e-3;

/// For each radius: `lhs = int_{S_r} |D phi_1|^{2p}` and `rhs = Z(lambda*) int_{S_r} |Du|^{2p}`.
pub fn zhukovsky_comparison<M: PlanarMap + ?Sized>(
    f: &RadialDatum,
    u: &M,
    p: f64,
    radii: &[f64],
) -> Result<Vec<ZhukovskyRow>> {
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    if !(r_max > 0.0) {
        return Err(Error::NonPositiveRadius(r_max));
    }
    let res = jacobian_residual(u, |x| f.value(x.norm()), &Region::disc(r_max), 4096, 0);
    if !(res.max < COMPETITOR_TOLERANCE) {
        return Err(Error::JacobianMismatch { residual: res.max, tolerance: COMPETITOR_TOLERANCE });
    }
    let grid = match f.support_radius() {
        Some(_) => f.default_grid(),
        None => crate::radial::log_grid(1e-3 * r_max, r_max, 2048),
    };
    let report = condition_report(f, &grid);
    if !report.lambda_star.is_finite() {
        return Err(Error::PreconditionViolated("lambda* is infinite".into()));
    }
    let z = zhukovsky(report.lambda_star)?;
    let phi = GeneralisedStretching::from_datum(f, 1)?;
    radii
        .iter()
        .map(|&r| {
            let lhs = circle_energy(&phi, p, r)?;
            let rhs = z * circle_energy(u, p, r)?;
            let curve = ImageCurve::from_map(u, r, 1024)?;
            let iso = isoperimetric_check(&curve, std::f64::consts::PI * f.cumulative(r));
            Ok(ZhukovskyRow {
                r,
                lhs,
                rhs,
                ratio: lhs / rhs,
                lambda_star: report.lambda_star,
                isoperimetric: iso.holds,
            })
        })
        .collect()
}
