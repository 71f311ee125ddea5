use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use willmore_core::asymptotics::{profile_energies, remainder_bound_fit, small_radius_energy_fit, w_profile_residual, AsymptoticSample};
use willmore_core::curvature::{bianchi_residual, curvature_bundle};
use willmore_core::diagnostics;
use willmore_core::quat::S3Point;
use willmore_core::reduction::{self, Reducer};
use willmore_core::spectral::{degrees, SphereField, SphereGrid};
use willmore_core::surface::graph_sphere;
use willmore_core::verify;
use willmore_core::willmore::{self, default_grid_lmax};

use crate::config::RunConfig;
use crate::{Failure, SphereArgs};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.out.join(name), text)?;
        Ok(())
    }

    fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_path(self.out.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn done(&self, files: &[&str]) {
        for f in files {
            println!("{}", self.out.join(f).display());
        }
    }
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    result: T,
}

#[derive(Serialize)]
struct CurvatureRow {
    q0: f64,
    q1: f64,
    q2: f64,
    q3: f64,
    scalar: f64,
    ric0_norm2: f64,
    ric0_trace: f64,
    bianchi: f64,
    decomposition: f64,
}

fn quat_cols(p: &S3Point) -> (f64, f64, f64, f64) {
    let q = p.q();
    (q[0], q[1], q[2], q[3])
}

pub fn curvature(ctx: &Context) -> Result<(), Failure> {
    let fam = &ctx.cfg.metric;
    let pts = ctx.cfg.probe_points();
    let mut rows = Vec::new();
    let mut bundles = Vec::new();
    for p in &pts {
        let b = curvature_bundle(fam, p)?;
        let bianchi = bianchi_residual(fam, p)?.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (q0, q1, q2, q3) = quat_cols(p);
        rows.push(CurvatureRow {
            q0,
            q1,
            q2,
            q3,
            scalar: b.scalar,
            ric0_norm2: b.ric0_norm2,
            ric0_trace: b.ric0_trace(),
            bianchi,
            decomposition: b.ricci_decomposition_residual(),
        });
        bundles.push(b);
    }
    #[derive(Serialize)]
    struct Report<'a> {
        constancy: diagnostics::ConstancyReport,
        homothety_r: Option<f64>,
        bundles: &'a [willmore_core::curvature::CurvatureBundle],
    }
    let h = diagnostics::homothety_detect(fam, &pts)?;
    let report = Report {
        constancy: h.certificate,
        homothety_r: h.r,
        bundles: &bundles,
    };
    ctx.write_csv("curvature.csv", &rows)?;
    ctx.write_json(
        "curvature.json",
        &RunRecord {
            config: &ctx.cfg,
            result: report,
        },
    )?;
    ctx.done(&["curvature.csv", "curvature.json"]);
    Ok(())
}

#[derive(Serialize)]
struct NodeRow {
    theta: f64,
    phi: f64,
    weight: f64,
    h: f64,
    a_norm2: f64,
    a0_norm2: f64,
    d: f64,
    area_el: f64,
    normal_ricci: f64,
}

fn sphere_grid(ctx: &Context) -> Arc<SphereGrid> {
    Arc::new(SphereGrid::new(ctx.cfg.solver.grid_lmax.unwrap_or(default_grid_lmax(ctx.cfg.solver.lmax))))
}

pub fn sphere(ctx: &Context, a: &SphereArgs) -> Result<(), Failure> {
    let grid = sphere_grid(ctx);
    let s = graph_sphere(
        &ctx.cfg.metric,
        &S3Point::new(a.p),
        a.rho,
        &SphereField::zeros(ctx.cfg.solver.lmax),
        grid.clone(),
    )?;
    let ric = willmore::normal_ricci(&s)?;
    let rows: Vec<NodeRow> = s
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let (theta, phi) = grid.angles(k);
            NodeRow {
                theta,
                phi,
                weight: grid.weight(k),
                h: n.h,
                a_norm2: n.a_norm2,
                a0_norm2: n.a0_norm2,
                d: n.d,
                area_el: n.area_el,
                normal_ricci: ric[k],
            }
        })
        .collect();
    #[derive(Serialize)]
    struct Summary {
        rho: f64,
        center: S3Point,
        area: f64,
        residuals: willmore_core::surface::SurfaceResiduals,
    }
    ctx.write_csv("sphere.csv", &rows)?;
    let summary = Summary {
        rho: a.rho,
        center: S3Point::new(a.p),
        area: s.area(),
        residuals: s.invariant_residuals(),
    };
    ctx.write_json(
        "sphere.json",
        &RunRecord {
            config: &ctx.cfg,
            result: summary,
        },
    )?;
    ctx.done(&["sphere.csv", "sphere.json"]);
    Ok(())
}

pub fn energy(ctx: &Context, a: &SphereArgs) -> Result<(), Failure> {
    let s = graph_sphere(
        &ctx.cfg.metric,
        &S3Point::new(a.p),
        a.rho,
        &SphereField::zeros(ctx.cfg.solver.lmax),
        sphere_grid(ctx),
    )?;
    #[derive(Serialize)]
    struct Energy {
        rho: f64,
        center: S3Point,
        energy: willmore::EnergyReport,
    }
    let result = Energy {
        rho: a.rho,
        center: S3Point::new(a.p),
        energy: willmore::energy(&s),
    };
    ctx.write_json("energy.json", &RunRecord { config: &ctx.cfg, result })?;
    ctx.done(&["energy.json"]);
    Ok(())
}

#[derive(Serialize)]
struct CoeffRow {
    l: usize,
    m: i64,
    coeff: f64,
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    residual: f64,
}

pub fn reduce(ctx: &Context, a: &SphereArgs) -> Result<(), Failure> {
    let reducer = Reducer::new(&ctx.cfg.metric, &ctx.cfg.solver)?;
    let r = reducer.solve(&S3Point::new(a.p), a.rho)?;
    let coeffs: Vec<CoeffRow> = degrees(r.w.lmax).zip(&r.w.coeffs).map(|((l, m), c)| CoeffRow { l, m, coeff: *c }).collect();
    let history: Vec<HistoryRow> = r
        .residual_history
        .iter()
        .enumerate()
        .map(|(iteration, residual)| HistoryRow {
            iteration,
            residual: *residual,
        })
        .collect();
    ctx.write_csv("w.csv", &coeffs)?;
    ctx.write_csv("residuals.csv", &history)?;
    ctx.write_json("reduced.json", &RunRecord { config: &ctx.cfg, result: &r })?;
    ctx.done(&["w.csv", "residuals.csv", "reduced.json"]);
    if !r.converged {
        return Err(Failure::Numerical(format!(
            "auxiliary equation not solved: residual {:.3e} after {} iterations",
            r.aux_residual, r.iterations
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TrailRow {
    stage: &'static str,
    q0: f64,
    q1: f64,
    q2: f64,
    q3: f64,
    rho: f64,
    phi: f64,
    aux_residual: f64,
    kernel_max: f64,
    converged: bool,
}

pub fn find_critical(ctx: &Context) -> Result<(), Failure> {
    let reducer = Reducer::new(&ctx.cfg.metric, &ctx.cfg.solver)?;
    let search = reduction::find_critical(&reducer, &ctx.cfg.optimizer)?;
    let rows: Vec<TrailRow> = search
        .trail
        .iter()
        .map(|t| {
            let (q0, q1, q2, q3) = quat_cols(&t.p);
            TrailRow {
                stage: t.stage,
                q0,
                q1,
                q2,
                q3,
                rho: t.rho,
                phi: t.phi,
                aux_residual: t.aux_residual,
                kernel_max: t.kernel_max,
                converged: t.converged,
            }
        })
        .collect();
    #[derive(Serialize)]
    struct Incumbent<'a> {
        critical: bool,
        flat: bool,
        window_collapse: bool,
        point: &'a reduction::ReducedPoint,
    }
    ctx.write_csv("trail.csv", &rows)?;
    let result = Incumbent {
        critical: search.critical,
        flat: search.flat,
        window_collapse: search.window_collapse,
        point: &search.point,
    };
    ctx.write_json("incumbent.json", &RunRecord { config: &ctx.cfg, result })?;
    ctx.done(&["trail.csv", "incumbent.json"]);
    if !(search.critical || search.flat) {
        return Err(Failure::Numerical(format!(
            "no certified critical point: aux residual {:.3e}, kernel coefficients {:?}",
            search.point.aux_residual, search.point.kernel_coeffs
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ProfileRow {
    rho: f64,
    residual: f64,
}

pub fn asymptotics(ctx: &Context) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let a = &c.asymptotics;
    let p = c.probe_points()[0];
    let energy = small_radius_energy_fit(&c.metric, &p, &a.rhos, a.eps, &c.solver)?;
    let remainder = remainder_bound_fit(&c.metric, &p, &a.eps_list, &a.rhos, &c.solver)?;
    let profile: Vec<ProfileRow> = a
        .profile_rhos
        .iter()
        .map(|r| {
            Ok(ProfileRow {
                rho: *r,
                residual: w_profile_residual(&c.metric, &p, *r, a.eps, &c.solver)?,
            })
        })
        .collect::<Result<_, Failure>>()?;
    let fam = c.metric.with_epsilon(a.eps);
    let energies: Vec<_> = if curvature_bundle(&fam, &p)?.ric0_norm2 > 0.0 {
        a.profile_rhos
            .iter()
            .map(|r| profile_energies(&fam, &p, *r, &c.solver))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    ctx.write_csv::<AsymptoticSample>("energy_law.csv", &energy.samples)?;
    ctx.write_csv::<AsymptoticSample>("remainder.csv", &remainder.samples)?;
    ctx.write_csv("profile.csv", &profile)?;
    ctx.write_csv("profile_energies.csv", &energies)?;
    #[derive(Serialize)]
    struct Fits {
        center: S3Point,
        energy_law: willmore_core::asymptotics::AsymptoticFit,
        remainder: willmore_core::asymptotics::AsymptoticFit,
    }
    ctx.write_json(
        "fits.json",
        &RunRecord {
            config: c,
            result: Fits {
                center: p,
                energy_law: energy,
                remainder,
            },
        },
    )?;
    ctx.done(&["energy_law.csv", "remainder.csv", "profile.csv", "profile_energies.csv", "fits.json"]);
    Ok(())
}

#[derive(Serialize)]
struct DegeneracyRow {
    q0: f64,
    q1: f64,
    q2: f64,
    q3: f64,
    k0: Option<usize>,
    coefficient: Option<f64>,
    floor: f64,
}

pub fn classify(ctx: &Context) -> Result<(), Failure> {
    let pts = ctx.cfg.probe_points();
    let c = diagnostics::classify(&ctx.cfg.metric, &pts, &ctx.cfg.eps_probe())?;
    let rows: Vec<DegeneracyRow> = c
        .degeneracy
        .iter()
        .map(|d| {
            let (q0, q1, q2, q3) = quat_cols(&d.point);
            DegeneracyRow {
                q0,
                q1,
                q2,
                q3,
                k0: d.k0,
                coefficient: d.coefficient,
                floor: d.floor,
            }
        })
        .collect();
    ctx.write_csv("degeneracy.csv", &rows)?;
    ctx.write_json("classification.json", &RunRecord { config: &ctx.cfg, result: &c })?;
    println!("case {:?}, k0 {:?}, r {:?}", c.case, c.k0, c.r);
    ctx.done(&["degeneracy.csv", "classification.json"]);
    Ok(())
}

/// Criterion ids of a named suite.
pub fn suite_ids(suite: &str) -> Option<Vec<u8>> {
    Some(match suite {
        "round" => vec![1],
        "curvature" => vec![2],
        "spectral" => vec![3],
        "variation" => vec![4],
        "reduction" => vec![5],
        "energy-law" => vec![6],
        "profile" => vec![7],
        "critical" => vec![8],
        "classify" => vec![9],
        "quick" => vec![1, 2, 3, 4, 9],
        "all" => verify::CRITERIA.iter().map(|c| c.0).collect(),
        _ => return None,
    })
}

#[derive(Serialize)]
struct VerifyRow {
    id: u8,
    name: String,
    passed: bool,
    detail: String,
}

pub fn verify(ctx: &Context, suite: &str) -> Result<(), Failure> {
    let ids = suite_ids(suite).ok_or_else(|| Failure::Config(format!("unknown suite {suite:?}")))?;
    let mut rows = Vec::new();
    for id in ids {
        let r = verify::run(id)?;
        println!("{}", r.line());
        rows.push(VerifyRow {
            id: r.id,
            name: r.name,
            passed: r.passed,
            detail: r.detail,
        });
    }
    ctx.write_csv("verify.csv", &rows)?;
    ctx.done(&["verify.csv"]);
    let failed: Vec<u8> = rows.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("failed criteria {failed:?}")))
    }
}
