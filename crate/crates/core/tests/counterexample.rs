use pjac::constructions::{assemble_counterexample, f_eps, wedge_map};
use pjac::geometry::fd_jacobian;
use pjac::moser::{constant_jacobian_corrector, FlowOptions};
use pjac::sampling::Halton2;
use pjac::{PlanarMap, Vec2};

/// Largest `|det D_fd u - f_eps|` over quasi-random points of `B_3` at least `margin` from the breaks.
fn residual_away_from_breaks<M: PlanarMap>(u: &M, eps: f64, margin: f64, count: usize) -> (f64, usize) {
    let f = f_eps(eps);
    let mut worst = 0.0f64;
    let mut used = 0;
    for (s, t) in Halton2::new(17).take(count) {
        let z = Vec2::new(6.0 * s - 3.0, 6.0 * t - 3.0);
        if z.norm() >= 3.0 - margin || z.norm() < margin || u.break_distance(z) < margin {
            continue;
        }
        let det = fd_jacobian(|q| u.eval(q), z).unwrap().det();
        worst = worst.max((det - f.value(z.norm())).abs());
        used += 1;
    }
    (worst, used)
}

#[test]
fn corrected_assembly_jacobian_residual() {
    let eps = 0.5;
    let tau = wedge_map(eps);
    let outcome = constant_jacobian_corrector(&tau, tau.target_constant(), 3, FlowOptions::default()).unwrap();
    let plain = assemble_counterexample(eps, None).unwrap();
    let corrected = assemble_counterexample(eps, Some(outcome.sigma)).unwrap();
    let (before, n) = residual_away_from_breaks(&plain, eps, 1e-2, 6000);
    let (after, m) = residual_away_from_breaks(&corrected, eps, 1e-2, 6000);
    assert!(n > 2000 && m == n);
    // the uncorrected wedge Jacobian ranges over [1/2, Jmax], so the plain residual is large
    assert!(before > 0.2, "{before}");
    assert!(after < 5e-2, "corrected residual {after}, uncorrected {before}");
}
