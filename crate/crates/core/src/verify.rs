//! The acceptance criteria as runnable checks, shared by the test suite and
//! the command line.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::asymptotics::{remainder_bound_fit, small_radius_energy_fit, w_profile_residual};
use crate::curvature::{bianchi_residual, curvature_bundle};
use crate::diagnostics::{classify, default_eps_probe, default_points, Case};
use crate::fit;
use crate::metric::MetricFamily;
use crate::quat::S3Point;
use crate::reduction::{find_critical, OptimizerConfig, Reducer, SolverConfig};
use crate::spectral::{SphereField, SphereGrid};
use crate::surface::graph_sphere;
use crate::willmore::{default_grid_lmax, normal_ricci, WillmoreEvaluator};
use crate::{Error, Result};

/// Identifiers and titles of the criteria.
pub const CRITERIA: [(u8, &str); 9] = [
    (1, "round-geometry exactness"),
    (2, "curvature anchor"),
    (3, "spectral law"),
    (4, "second-variation match"),
    (5, "reduction solver"),
    (6, "small-radius energy law"),
    (7, "w-profile law"),
    (8, "critical point"),
    (9, "classification trichotomy"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    /// `criterion N (name): PASS|FAIL  detail`.
    pub fn line(&self) -> String {
        format!(
            "criterion {} ({}): {}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// Runs criterion `id`; numerical errors count as failures.
pub fn run(id: u8) -> Result<CriterionResult> {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown criterion {id}")))?
        .1;
    let start = Instant::now();
    let outcome = match id {
        1 => round_geometry(),
        2 => curvature_anchor(),
        3 => spectral_law(),
        4 => second_variation(),
        5 => reduction_solver(),
        6 => energy_law(),
        7 => profile_law(),
        8 => critical_point(),
        _ => trichotomy(),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CriterionResult {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every criterion in order.
pub fn run_all() -> Vec<CriterionResult> {
    CRITERIA.iter().map(|c| run(c.0).expect("known id")).collect()
}

type Outcome = Result<(bool, String)>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn round_geometry() -> Outcome {
    let grid = Arc::new(SphereGrid::new(default_grid_lmax(16)));
    let (mut h_err, mut a_err, mut energy) = (0.0f64, 0.0f64, 0.0f64);
    for rho in [0.3, FRAC_PI_2, 2.2] {
        let s = graph_sphere(&MetricFamily::round(), &S3Point::identity(), rho, &SphereField::zeros(16), grid.clone())?;
        let h = (2.0 * rho).sin() / rho.sin().powi(2);
        let a2 = (2.0 * rho).sin().powi(2) / (2.0 * rho.sin().powi(4));
        for node in &s.nodes {
            h_err = h_err.max(if h.abs() > 1e-12 { rel(node.h, h) } else { node.h.abs() });
            a_err = a_err.max(if a2 > 1e-12 { rel(node.a_norm2, a2) } else { node.a_norm2.abs() });
        }
        energy = energy.max(crate::willmore::energy(&s).i.abs());
    }
    let ok = h_err < 1e-7 && a_err < 1e-7 && energy < 1e-9;
    Ok((ok, format!("max rel err H {h_err:.2e}, |A|^2 {a_err:.2e}; max I {energy:.2e}")))
}

fn curvature_anchor() -> Outcome {
    let round = MetricFamily::round();
    let (mut r_err, mut ric0) = (0.0f64, 0.0f64);
    for p in default_points() {
        let b = curvature_bundle(&round, &p)?;
        r_err = r_err.max((b.scalar - 6.0).abs());
        ric0 = ric0.max(b.ric0_norm2.sqrt());
    }
    let grid = Arc::new(SphereGrid::new(default_grid_lmax(8)));
    let mut nu_err = 0.0f64;
    for (p, rho) in default_points().into_iter().zip([0.4, 1.3, 2.5]) {
        let s = graph_sphere(&round, &p, rho, &SphereField::zeros(8), grid.clone())?;
        nu_err = nu_err.max(max_abs(normal_ricci(&s)?.into_iter().map(|v| v - 2.0)));
    }
    let ok = r_err < 1e-8 && nu_err < 1e-8 && ric0 < 1e-8;
    Ok((ok, format!("|R-6| {r_err:.2e}, |Ric(nu,nu)-2| {nu_err:.2e}, |Ric0| {ric0:.2e}")))
}

fn spectral_law() -> Outcome {
    let lmax = 8;
    let grid = SphereGrid::new(default_grid_lmax(lmax));
    let lap = |f: &SphereField| grid.analyze(&grid.divergence(&grid.gradient_ambient(f), lmax), lmax);
    let (mut kernel, mut eig) = (0.0f64, 0.0f64);
    for l in 0..=2usize {
        for m in -(l as i64)..=(l as i64) {
            let y = SphereField::harmonic(lmax, l, m);
            let d = lap(&y);
            let out = lap(&d).axpy(2.0, &d);
            if l <= 1 {
                kernel = kernel.max(out.norm());
            } else {
                eig = eig.max(out.axpy(-24.0, &y).norm());
            }
        }
    }
    let ok = kernel < 1e-12 && eig < 1e-12;
    Ok((ok, format!("kernel image {kernel:.2e}, l=2 eigenvalue error {eig:.2e}")))
}

fn second_variation() -> Outcome {
    let lmax = 16;
    let grid = Arc::new(SphereGrid::new(default_grid_lmax(lmax)));
    let t = 1e-3;
    let (mut err, mut flat) = (0.0f64, 0.0f64);
    for rho in [0.6, FRAC_PI_2] {
        let mut ev = WillmoreEvaluator::new(&MetricFamily::round(), &S3Point::identity(), rho, grid.clone());
        let i0 = ev.energy(&SphereField::zeros(lmax))?;
        for l in 0..=3usize {
            for m in -(l as i64)..=(l as i64) {
                let y = SphereField::harmonic(lmax, l, m);
                let f = |ev: &mut WillmoreEvaluator, s: f64| ev.energy(&y.scaled(s * t));
                // Five-point stencil, exact up to quartic terms.
                let second = (-f(&mut ev, 2.0)? + 16.0 * f(&mut ev, 1.0)? - 30.0 * i0 + 16.0 * f(&mut ev, -1.0)? - f(&mut ev, -2.0)?) / (12.0 * t * t);
                if l <= 1 {
                    flat = flat.max(second.abs());
                } else {
                    let k = (l * (l + 1)) as f64;
                    err = err.max(rel(second, k * (k - 2.0) / (2.0 * rho.sin().powi(2))));
                }
            }
        }
    }
    let ok = err < 1e-3 && flat < 1e-6;
    Ok((ok, format!("max rel err {err:.2e}, kernel curvature {flat:.2e}")))
}

fn reduction_solver() -> Outcome {
    let cfg = SolverConfig::default();
    let p = S3Point::identity();
    let rho = 0.8;
    let mut norms = Vec::new();
    for eps in [0.02, 0.04, 0.08] {
        norms.push(Reducer::new(&MetricFamily::berger_direction(eps)?, &cfg)?.phi(&p, rho)?.w.norm());
    }
    let slope = fit::loglog(&[0.02, 0.04, 0.08], &norms)?.0;
    let reducer = Reducer::new(&MetricFamily::berger_direction(0.05)?, &cfg)?;
    let a = reducer.solve_from(&p, rho, &SphereField::zeros(cfg.lmax))?;
    let seed = SphereField::harmonic(cfg.lmax, 2, 1)
        .scaled(2e-3)
        .axpy(-1e-3, &SphereField::harmonic(cfg.lmax, 4, -3));
    let b = reducer.solve_from(&p, rho, &seed)?;
    let spread = a.w.axpy(-1.0, &b.w).norm();
    let ok = (slope - 1.0).abs() <= 0.1 && a.converged && b.converged && spread < 10.0 * cfg.tol;
    Ok((ok, format!("slope {slope:.4}, multi-start |dw| {spread:.2e}")))
}

fn energy_law() -> Outcome {
    let fam = MetricFamily::berger_direction(0.05)?;
    let p = S3Point::identity();
    let cfg = SolverConfig::default();
    let rhos = [0.05, 0.07, 0.1, 0.14, 0.2, 0.25];
    let f = small_radius_energy_fit(&fam, &p, &rhos, 0.05, &cfg)?;
    let b = remainder_bound_fit(&fam, &p, &[0.025, 0.05], &rhos, &cfg)?;
    let (Some(k), Some(err)) = (f.fitted_exponent, f.relative_error) else {
        return Ok((false, "no power law fitted".into()));
    };
    let ratio = b.bound_ratio.unwrap_or(f64::INFINITY);
    let ok = (k - 4.0).abs() <= 0.15 && err < 0.1 && ratio <= 3.0;
    Ok((ok, format!("exponent {k:.3}, coefficient rel err {err:.3}, remainder ratio {ratio:.2}")))
}

fn profile_law() -> Outcome {
    let cfg = SolverConfig::default();
    let p = S3Point::identity();
    let rhos = [0.05, 0.1, 0.2];
    let res: Vec<f64> = rhos
        .iter()
        .map(|r| w_profile_residual(&MetricFamily::berger_direction(0.05)?, &p, *r, 0.05, &cfg))
        .collect::<Result<_>>()?;
    let slope = fit::loglog(&rhos, &res)?.0;
    let round = w_profile_residual(&MetricFamily::round(), &p, 0.1, 0.0, &cfg)?;
    let ok = slope >= 0.8 && round == 0.0;
    Ok((
        ok,
        format!("residuals {:.3e} {:.3e} {:.3e}, slope {slope:.3}, round {round:.1e}", res[0], res[1], res[2]),
    ))
}

fn critical_point() -> Outcome {
    let cfg = SolverConfig::default();
    let reducer = Reducer::new(&MetricFamily::berger_direction(0.05)?, &cfg)?;
    let a = find_critical(&reducer, &OptimizerConfig::default())?;
    let other = S3Point::new([0.6, -0.3, 0.5, 0.54]);
    let b = find_critical(
        &reducer,
        &OptimizerConfig {
            start: other,
            ..Default::default()
        },
    )?;
    let kmax = max_abs(a.point.kernel_coeffs);
    let interior = a.point.rho > cfg.delta && a.point.rho < PI - cfg.delta && !a.window_collapse;
    let dphi = (a.point.phi - b.point.phi).abs();
    let ok = interior && a.point.gradient_norm < 1e-5 && kmax < 10.0 * cfg.tol && dphi < 1e-7;
    Ok((
        ok,
        format!(
            "rho* {:.6}, Phi {:.9e}, |grad| {:.2e}, max|A| {kmax:.2e}, |dPhi| {dphi:.2e}",
            a.point.rho, a.point.phi, a.point.gradient_norm
        ),
    ))
}

fn trichotomy() -> Outcome {
    let pts = default_points();
    let probe = default_eps_probe();
    let round = classify(&MetricFamily::round(), &pts, &probe)?;
    let homothety = classify(&MetricFamily::homothety(1.1)?, &pts, &probe)?;
    let berger = classify(&MetricFamily::berger_direction(0.05)?, &pts, &probe)?;
    let r_ok = homothety.r.is_some_and(|r| (r - 1.1).abs() < 1e-6);
    let mut bianchi = 0.0f64;
    for fam in [MetricFamily::round(), MetricFamily::homothety(1.1)?, MetricFamily::berger_direction(0.05)?] {
        for p in &pts {
            bianchi = bianchi.max(max_abs(bianchi_residual(&fam, p)?));
        }
    }
    let ok = round.case == Case::III && homothety.case == Case::III && r_ok && berger.case == Case::I && berger.k0 == Some(2) && bianchi < 1e-4;
    Ok((
        ok,
        format!(
            "round {:?}, homothety {:?} r {:?}, Berger {:?} k0 {:?}, Bianchi {bianchi:.2e}",
            round.case, homothety.case, homothety.r, berger.case, berger.k0
        ),
    ))
}
