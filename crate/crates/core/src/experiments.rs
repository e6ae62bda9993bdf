//! Experiment drivers behind the `pjac` binary. Each returns plain rows or a report; the
//! renderers below turn them into byte-stable CSV or JSON.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io;
use std::sync::Arc;

use serde::Serialize;

use crate::constructions::{
    assemble_counterexample, ball_to_square, boundary_residual, constraint_report, f_eps, gluing_mismatch,
    nonuniqueness_datum, nonuniqueness_inner_profile, shear_map, wedge_map, ConstraintReport, Counterexample,
    Piecewise,
};
use crate::energy::{
    derivative_consistency, jacobian_residual, lipschitz_estimate, region_energy_with, zhukovsky_comparison, Residual,
    ZhukovskyRow,
};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::isoperimetry::{isoperimetric_check, ImageCurve};
use crate::map::{rotated_family, PlanarMap};
use crate::moser::{constant_jacobian_corrector, CorrectorOutcome, FlowOptions, MoserCorrector};
use crate::radial::{log_grid, sobolev_energy_1d, Expr, GeneralisedStretching, RadialDatum};
use crate::region::{wedge_polygon, Region};
use crate::stats::ls_fit;

/// Fixed 17-significant-digit rendering used in every output file.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

struct FixedDigits;

impl serde_json::ser::Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_num(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with floats in the fixed format; non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits);
    value.serialize(&mut ser).expect("report types serialise");
    buf.push(b'\n');
    String::from_utf8(buf).expect("utf-8")
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::PreconditionViolated("empty epsilon list".into()));
    }
    if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(Error::PreconditionViolated(format!("epsilon {bad} outside (0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyGapRow {
    pub epsilon: f64,
    pub p: f64,
    pub e_radial: f64,
    pub e_competitor: f64,
    pub ratio: f64,
}

/// `int_{B_3} |D phi_eps|^{2p}` for the radial stretching of `f_eps`, by 1-D quadrature.
pub fn radial_energy(eps: f64, p: f64) -> Result<f64> {
    let phi = GeneralisedStretching::from_datum(&f_eps(eps), 1)?;
    sobolev_energy_1d(&phi, p, 3.0)
}

/// `int_{B_3} |D u_eps|^{2p}` on `cells` cells per direction.
pub fn competitor_energy(eps: f64, p: f64, cells: usize, corrector: Option<Arc<MoserCorrector>>) -> Result<f64> {
    let u = assemble_counterexample(eps, corrector)?;
    Ok(region_energy_with(&u, p, &Region::disc(3.0), cells)?.value)
}

/// Radial against competitor energy for each `eps`; the competitor is corrector-free unless
/// `corrector` is set, in which case three corrector iterations are run per `eps`.
pub fn run_energy_gap(eps: &[f64], p: f64, cells: usize, corrector: bool) -> Result<Vec<EnergyGapRow>> {
    check_eps(eps)?;
    eps.iter()
        .map(|&e| {
            let sigma = if corrector {
                let tau = wedge_map(e);
                Some(constant_jacobian_corrector(&tau, tau.target_constant(), 3, FlowOptions::default())?.sigma)
            } else {
                None
            };
            let e_radial = radial_energy(e, p)?;
            let e_competitor = competitor_energy(e, p, cells, sigma)?;
            Ok(EnergyGapRow { epsilon: e, p, e_radial, e_competitor, ratio: e_radial / e_competitor })
        })
        .collect()
}

pub fn energy_gap_csv(rows: &[EnergyGapRow]) -> String {
    let mut out = String::from("epsilon,p,E_radial,E_competitor,ratio\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(r.epsilon),
            fmt_num(r.p),
            fmt_num(r.e_radial),
            fmt_num(r.e_competitor),
            fmt_num(r.ratio)
        );
    }
    out
}

/// Least-squares `(slope, intercept)` of `values` against `log(1 / eps)`.
pub fn log_slope(eps: &[f64], values: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    ls_fit(&xs, values)
}

/// Named radial data: `one`, `power:<eps>` (`c r^eps` on `B_1`, `c = 2 / (2 + eps)`) and
/// `gaussian[:<width>]` (truncated to `B_2`). Anything else is read as a JSON datum file.
pub fn datum_preset(preset: &str) -> Result<RadialDatum> {
    let (name, arg) = preset.split_once(':').unwrap_or((preset, ""));
    let number = |default: f64| -> Result<f64> {
        if arg.is_empty() {
            Ok(default)
        } else {
            arg.parse().map_err(|_| Error::InvalidDatum(format!("bad parameter in {preset:?}")))
        }
    };
    match name {
        "one" => Ok(RadialDatum::constant(1.0, None)),
        "power" => {
            let eps = number(1.0)?;
            RadialDatum::single(Expr::Power { coef: 2.0 / (2.0 + eps), exp: eps }, Some(1.0))
        }
        "gaussian" => RadialDatum::single(Expr::Gaussian { amp: 1.0, width: number(1.0)? }, Some(2.0)),
        _ => {
            let text = std::fs::read_to_string(preset).map_err(|e| Error::InvalidDatum(format!("{preset}: {e}")))?;
            RadialDatum::from_json(&text)
        }
    }
}

/// A map with `Ju = f` built from the datum: `phi_k`, possibly precomposed with a rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Competitor {
    Stretching { k: i32 },
    Rotated { k: i32, alpha: f64 },
}

impl std::str::FromStr for Competitor {
    type Err = Error;

    /// `phi:<k>` or `rotated:<k>:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::PreconditionViolated(format!("unknown competitor {s:?}"));
        let k = |t: &str| t.parse::<i32>().ok().filter(|k| *k != 0).ok_or_else(bad);
        match parts.as_slice() {
            ["phi", kk] => Ok(Self::Stretching { k: k(kk)? }),
            ["rotated", kk, a] => Ok(Self::Rotated { k: k(kk)?, alpha: a.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

/// Cell midpoints `R (i + 1/2) / count`, with `R` the support radius (or 1).
pub fn zhukovsky_radii(f: &RadialDatum, count: usize) -> Vec<f64> {
    let outer = f.support_radius().unwrap_or(1.0);
    (0..count).map(|i| outer * (i as f64 + 0.5) / count as f64).collect()
}

pub fn run_zhukovsky(f: &RadialDatum, competitor: Competitor, p: f64, count: usize) -> Result<Vec<ZhukovskyRow>> {
    if count == 0 {
        return Err(Error::PreconditionViolated("need at least one radius".into()));
    }
    let radii = zhukovsky_radii(f, count);
    match competitor {
        Competitor::Stretching { k } => {
            let u = GeneralisedStretching::from_datum(f, k)?;
            zhukovsky_comparison(f, &u, p, &radii)
        }
        Competitor::Rotated { k, alpha } => {
            let u = rotated_family(GeneralisedStretching::from_datum(f, k)?, alpha);
            zhukovsky_comparison(f, &u, p, &radii)
        }
    }
}

pub fn zhukovsky_csv(rows: &[ZhukovskyRow]) -> String {
    let mut out = String::from("r,lhs,rhs,ratio,lambda_star\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(r.r),
            fmt_num(r.lhs),
            fmt_num(r.rhs),
            fmt_num(r.ratio),
            fmt_num(r.lambda_star)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonuniquenessReport {
    pub constraint_residuals: ConstraintReport,
    /// Slope of the truncated inner energy against `log(1 / delta)`.
    pub truncated_energy_slope: f64,
    /// `(delta, int_{B_{2 - delta}} |D phi|^2)`.
    pub truncated_energies: Vec<(f64, f64)>,
    /// `(max - min) / mean` of the energy over the rotated family.
    pub rotation_energy_spread: f64,
    /// `(alpha, energy)`.
    pub rotation_energies: Vec<(f64, f64)>,
}

/// Cutoffs used for the truncated inner energy.
pub fn truncation_deltas() -> Vec<f64> {
    log_grid(1e-6, 1e-2, 9)
}

/// Rotation angles of the rotated family.
pub const ROTATION_ANGLES: [f64; 3] = [0.0, PI / 3.0, 1.0];

/// `int_{B_{2 - delta}} |D phi|^2` for the degree `-1` inner profile of the non-uniqueness datum.
pub fn truncated_inner_energy(f: &RadialDatum, delta: f64) -> Result<f64> {
    let phi = GeneralisedStretching::new(nonuniqueness_inner_profile(f)?);
    sobolev_energy_1d(&phi, 1.0, 2.0 - delta)
}

/// Constraint audit, log-divergence fit of the inner energy, and the energy spread of the
/// rotated copies `u(e^{i alpha} z)` of `u_{1/2}` on `B_3` at `cells` cells per direction.
pub fn run_nonuniqueness(cells: usize) -> Result<NonuniquenessReport> {
    let (f, _) = nonuniqueness_datum()?;
    let constraint_residuals = constraint_report(&f);
    let deltas = truncation_deltas();
    let energies = deltas.iter().map(|&d| truncated_inner_energy(&f, d)).collect::<Result<Vec<f64>>>()?;
    let (slope, _) = log_slope(&deltas, &energies);
    let u = assemble_counterexample(0.5, None)?;
    let rotation_energies = ROTATION_ANGLES
        .iter()
        .map(|&a| Ok((a, region_energy_with(&rotated_family(&u, a), 1.0, &Region::disc(3.0), cells)?.value)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let values: Vec<f64> = rotation_energies.iter().map(|e| e.1).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(NonuniquenessReport {
        constraint_residuals,
        truncated_energy_slope: slope,
        truncated_energies: deltas.into_iter().zip(energies).collect(),
        rotation_energy_spread: (max - min) / mean,
        rotation_energies,
    })
}

/// Constructions known to `check-map`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Eta,
    Shear,
    Wedge,
    Counterexample,
    Stretching,
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "eta" => Self::Eta,
            "shear" => Self::Shear,
            "wedge" => Self::Wedge,
            "counterexample" => Self::Counterexample,
            "stretching" => Self::Stretching,
            _ => return Err(Error::PreconditionViolated(format!("unknown construction {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsoperimetryRow {
    pub r: f64,
    pub ratio: f64,
    pub holds: bool,
    pub equality: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapAudit {
    pub construction: Construction,
    pub epsilon: f64,
    /// `|det D_fd u - J|` against the closed-form Jacobian.
    pub jacobian_residual: Residual,
    /// Closed-form derivative against central differences.
    pub derivative_consistency: Residual,
    pub lipschitz_estimate: f64,
    /// Largest disagreement of adjacent pieces along their interfaces.
    pub continuity: f64,
    /// Image circles `u(S_r)`; empty for maps not defined on discs.
    pub isoperimetry: Vec<IsoperimetryRow>,
}

const AUDIT_RADII: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

fn audit<M, F>(u: &M, jac: F, region: &Region, samples: usize, seed: u64) -> (Residual, Residual, f64)
where
    M: PlanarMap + ?Sized,
    F: Fn(Vec2) -> f64 + Sync,
{
    (
        jacobian_residual(u, jac, region, samples, seed),
        derivative_consistency(u, region, samples.min(20_000), seed.wrapping_add(1)),
        lipschitz_estimate(u, region, samples.min(20_000), seed.wrapping_add(2)),
    )
}

fn isoperimetry_rows<M: PlanarMap + ?Sized>(u: &M, area: impl Fn(f64) -> f64) -> Result<Vec<IsoperimetryRow>> {
    AUDIT_RADII
        .iter()
        .map(|&r| {
            let rep = isoperimetric_check(&ImageCurve::from_map(u, r, 2048)?, area(r));
            Ok(IsoperimetryRow { r, ratio: rep.ratio, holds: rep.holds, equality: rep.equality })
        })
        .collect()
}

/// Jacobian, derivative, Lipschitz, continuity and isoperimetry audits of one construction.
pub fn run_check_map(construction: Construction, eps: f64, samples: usize, seed: u64) -> Result<MapAudit> {
    check_eps(&[eps])?;
    let disc = Region::disc(3.0);
    let (jr, dc, lip, continuity, isoperimetry) = match construction {
        Construction::Eta => {
            let u = ball_to_square();
            let (a, b, c) = audit(&u, |_| 2.0 / PI, &disc, samples, seed);
            (a, b, c, u.interface_mismatch(1000), isoperimetry_rows(&u, |r| 2.0 * r * r)?)
        }
        Construction::Shear => {
            let u = shear_map(eps);
            let (a, b, c) = audit(&u, |p| u.jacobian_value(p), &Region::L1Ball { radius: 2.0 }, samples, seed);
            (a, b, c, u.interface_mismatch(1000), Vec::new())
        }
        Construction::Wedge => {
            let u = wedge_map(eps);
            let (a, b, c) = audit(&u, |p| u.jacobian_value(p), &wedge_polygon(), samples, seed);
            (a, b, c, u.interface_mismatch(1000), Vec::new())
        }
        Construction::Counterexample => {
            let u = assemble_counterexample(eps, None)?;
            let (a, b, c) = audit(&u, |z| u.model_jacobian(z).unwrap_or(f64::NAN), &disc, samples, seed);
            let gluing = gluing_mismatch(&u.model, 1000)?;
            let boundary = boundary_residual(&u, 1000)?;
            let area = |r: f64| jacobian_integral(&u, r).unwrap_or(f64::NAN);
            (a, b, c, gluing.max(boundary), isoperimetry_rows(&u, area)?)
        }
        Construction::Stretching => {
            let f = f_eps(eps);
            let u = GeneralisedStretching::from_datum(&f, 1)?;
            let (a, b, c) = audit(&u, |z| f.value(z.norm()), &disc, samples, seed);
            (a, b, c, 0.0, isoperimetry_rows(&u, |r| PI * f.cumulative(r))?)
        }
    };
    Ok(MapAudit {
        construction,
        epsilon: eps,
        jacobian_residual: jr,
        derivative_consistency: dc,
        lipschitz_estimate: lip,
        continuity,
        isoperimetry,
    })
}

/// `int_{B_r} J u_eps` by quadrature of the closed-form Jacobian.
fn jacobian_integral(u: &Counterexample, r: f64) -> Result<f64> {
    let grid = Region::disc(r).quadrature_grid(64, &u.breaks(), u.angle_origin())?;
    let mut total = 0.0;
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        total += w * u.model_jacobian(x)?;
    }
    Ok(total)
}

/// Corrector run on the wedge at one `eps`; the outcome carries the iteration trace.
pub fn run_moser_demo(eps: f64, iterations: usize, resolution: usize) -> Result<CorrectorOutcome> {
    check_eps(&[eps])?;
    let tau = wedge_map(eps);
    let opts = FlowOptions { resolution, ..FlowOptions::default() };
    constant_jacobian_corrector(&tau, tau.target_constant(), iterations, opts)
}

pub fn moser_trace_csv(outcome: &CorrectorOutcome) -> String {
    let mut out = String::from("iter,max_residual,mass_error\n");
    for row in &outcome.trace {
        let _ = writeln!(out, "{},{},{}", row.iter, fmt_num(row.max_residual), fmt_num(row.mass_error));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_num(-0.00125), "-1.2500000000000000e-3");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: f64,
        }
        assert_eq!(to_json(&S { a: 0.5, b: f64::NAN }), "{\"a\":5.0000000000000000e-1,\"b\":null}\n");
        let back: serde_json::Value = serde_json::from_str(&to_json(&S { a: 0.1, b: 2.0 })).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn presets_and_competitors_parse() {
        assert!(datum_preset("one").unwrap().support_radius().is_none());
        assert!((datum_preset("power:0.5").unwrap().value(0.25) - 0.8 * 0.5).abs() < 1e-15);
        assert!(datum_preset("power:x").is_err());
        assert_eq!("phi:2".parse::<Competitor>().unwrap(), Competitor::Stretching { k: 2 });
        assert!("phi:0".parse::<Competitor>().is_err());
        assert!(matches!("rotated:1:0.5".parse::<Competitor>().unwrap(), Competitor::Rotated { k: 1, .. }));
        assert!("wedge".parse::<Construction>().is_ok() && "cube".parse::<Construction>().is_err());
    }

    #[test]
    fn energy_gap_first_row() {
        let rows = run_energy_gap(&[1.0], 1.0, 32, false).unwrap();
        assert!((rows[0].e_radial - 18.0 * PI).abs() < 1e-8);
        assert!(energy_gap_csv(&rows).starts_with("epsilon,p,E_radial,E_competitor,ratio\n1.0000000000000000e0,"));
        assert!(run_energy_gap(&[0.0], 1.0, 32, false).is_err());
    }

    #[test]
    fn zhukovsky_rows() {
        let rows = run_zhukovsky(&datum_preset("one").unwrap(), Competitor::Stretching { k: 2 }, 1.0, 4).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| (r.ratio - 0.8).abs() < 1e-10));
    }
}
