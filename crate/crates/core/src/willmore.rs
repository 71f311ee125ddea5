//! The conformal Willmore functional `I = ∫(H²/4 − D) dμ`, its gradient with
//! respect to the graph function, the Jacobi operator and numerical checks of
//! the first-variation formulas.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curvature::{self, CurvatureBundle};
use crate::metric::{MetricFamily, MetricKind};
use crate::quat::S3Point;
use crate::spectral::{SphereField, SphereGrid};
use crate::surface::{self, ImmersedSphere, NodeGeometry, RadialShells, ShellOptions};
use crate::tensor::{self, Vec3};
use crate::{Error, Result};

/// Integrated quantities of a surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `∫(H²/4 − D) dμ`.
    #[serde(rename = "I")]
    pub i: f64,
    /// `∫(H²/4 + 1) dμ`.
    #[serde(rename = "W")]
    pub w: f64,
    pub area: f64,
    /// `½∫|A°|² dμ`.
    #[serde(rename = "half_A0_sq")]
    pub half_a0_sq: f64,
}

pub fn energy(surface: &ImmersedSphere) -> EnergyReport {
    let g = &surface.grid;
    let field = |f: &dyn Fn(&NodeGeometry) -> f64| g.integrate(&surface.nodes.iter().map(|n| f(n) * n.area_el).collect::<Vec<_>>());
    EnergyReport {
        i: field(&|n| n.h * n.h / 4.0 - n.d),
        w: field(&|n| n.h * n.h / 4.0 + 1.0),
        area: field(&|_| 1.0),
        half_a0_sq: field(&|n| 0.5 * n.a0_norm2),
    }
}

/// How the gradient of `I` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    /// Exact derivative of the discrete energy through the node jets.
    #[default]
    Jet,
    /// Central differences of the energy in each coefficient.
    Fd,
    /// `½LH + H³/4 + H` on the surface; round metric only.
    Analytic,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jet" => Ok(Self::Jet),
            "fd" => Ok(Self::Fd),
            "analytic" => Ok(Self::Analytic),
            _ => Err(Error::InvalidArgument(format!("unknown gradient mode `{s}`"))),
        }
    }
}

/// Coefficient step of [`GradientMode::Fd`].
pub const FD_COEFF_STEP: f64 = 1e-4;

/// Quadrature grid used for a band limit `lmax` of the graph function.
pub fn default_grid_lmax(lmax: usize) -> usize {
    lmax + lmax.div_ceil(2).max(2)
}

fn is_round(family: &MetricFamily) -> bool {
    family.epsilon == 0.0 || matches!(family.kind, MetricKind::Round)
}

/// Energy and gradient of graphs over one geodesic sphere, reusing the radial
/// shells across evaluations.
#[derive(Debug, Clone)]
pub struct WillmoreEvaluator {
    family: MetricFamily,
    p: S3Point,
    rho: f64,
    grid: Arc<SphereGrid>,
    shells: Option<RadialShells>,
}

impl WillmoreEvaluator {
    pub fn new(family: &MetricFamily, p: &S3Point, rho: f64, grid: Arc<SphereGrid>) -> Self {
        Self {
            family: family.clone(),
            p: *p,
            rho,
            grid,
            shells: None,
        }
    }

    /// Starts from existing shells of the same sphere.
    pub fn with_shells(shells: RadialShells) -> Self {
        Self {
            family: shells.family().clone(),
            p: *shells.center(),
            rho: shells.rho(),
            grid: shells.grid().clone(),
            shells: Some(shells),
        }
    }

    pub fn shells(&self) -> Option<&RadialShells> {
        self.shells.as_ref()
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    fn ready(&mut self, w: &SphereField) -> Result<&RadialShells> {
        let values = self.grid.synthesize(w);
        let sup = surface::check_graph(&values, self.rho)?;
        let fits = self.shells.as_ref().is_some_and(|s| s.covers(&values));
        if !fits {
            let options = if 2.0 * sup <= ShellOptions::default().half_width {
                ShellOptions::default()
            } else {
                ShellOptions {
                    half_width: 2.0 * sup,
                    ..ShellOptions::wide(self.rho)
                }
            };
            self.shells = Some(RadialShells::build(&self.family, &self.p, self.rho, self.grid.clone(), &options)?);
        }
        Ok(self.shells.as_ref().expect("shells built above"))
    }

    /// `½∫|A°|² dμ` of the graph of `w`.
    pub fn energy(&mut self, w: &SphereField) -> Result<f64> {
        Ok(self.ready(w)?.energy_gradient(w, false)?.0)
    }

    pub fn surface(&mut self, w: &SphereField) -> Result<ImmersedSphere> {
        let nodes = self.ready(w)?.geometry(w)?;
        Ok(ImmersedSphere {
            grid: self.grid.clone(),
            family: self.family.clone(),
            center: self.p,
            rho: self.rho,
            w: w.clone(),
            nodes,
        })
    }

    /// Energy and its L²(S²) gradient in the coefficients of `w`.
    pub fn energy_gradient(&mut self, w: &SphereField, mode: GradientMode) -> Result<(f64, SphereField)> {
        match mode {
            GradientMode::Jet => {
                let (e, g) = self.ready(w)?.energy_gradient(w, true)?;
                Ok((e, g.expect("gradient requested")))
            }
            GradientMode::Fd => {
                let e = self.energy(w)?;
                let h = FD_COEFF_STEP;
                // Make sure one set of shells covers every probe.
                let mut widest = w.clone();
                widest.coeffs[0] += 2.0 * h * w.coeffs[0].signum();
                self.ready(&widest)?;
                let shells = self.shells.as_ref().expect("shells built above");
                let probe = |k: usize, t: f64| -> Result<f64> {
                    let mut x = w.clone();
                    x.coeffs[k] += t;
                    Ok(shells.energy_gradient(&x, false)?.0)
                };
                let mut g = SphereField::zeros(w.lmax);
                for k in 0..g.coeffs.len() {
                    let d1 = (probe(k, h)? - probe(k, -h)?) / (2.0 * h);
                    let d2 = (probe(k, 0.5 * h)? - probe(k, -0.5 * h)?) / h;
                    g.coeffs[k] = (4.0 * d2 - d1) / 3.0;
                }
                Ok((e, g))
            }
            GradientMode::Analytic => {
                if !is_round(&self.family) {
                    return Err(Error::InvalidArgument("the analytic gradient needs the round metric".into()));
                }
                let s = self.surface(w)?;
                let e = energy(&s).half_a0_sq;
                let hf = self.grid.analyze(&s.H(), self.grid.lmax());
                let lh = jacobi_nodal(&s, &hf, &vec![2.0; s.nodes.len()]);
                let f: Vec<f64> = s
                    .nodes
                    .iter()
                    .zip(&lh)
                    .map(|(n, lh)| (0.5 * lh + n.h.powi(3) / 4.0 + n.h) * n.area_el * n.radial_dot_nu)
                    .collect();
                Ok((e, self.grid.analyze(&f, w.lmax)))
            }
        }
    }
}

/// The L²(S²) gradient of `I` at the graph of `w` over `S_{p,ρ}`.
pub fn willmore_gradient(family: &MetricFamily, p: &S3Point, rho: f64, w: &SphereField, mode: GradientMode) -> Result<SphereField> {
    let grid = Arc::new(SphereGrid::new(default_grid_lmax(w.lmax)));
    Ok(WillmoreEvaluator::new(family, p, rho, grid).energy_gradient(w, mode)?.1)
}

/// Curvature data at every node of a surface; a single bundle for
/// left-invariant metrics, whose frame components do not depend on the point.
fn bundles(family: &MetricFamily, points: &[S3Point]) -> Result<Vec<CurvatureBundle>> {
    if family.is_left_invariant() {
        let b = curvature::curvature_bundle(family, &S3Point::identity())?;
        Ok(vec![b; points.len()])
    } else {
        points.iter().map(|p| curvature::curvature_bundle(family, p)).collect()
    }
}

/// `Ric(ν, ν)` at every node.
pub fn normal_ricci(surface: &ImmersedSphere) -> Result<Vec<f64>> {
    let b = bundles(&surface.family, &surface.position())?;
    Ok(surface.nodes.iter().zip(&b).map(|(n, b)| b.ric_quad(&n.nu)).collect())
}

fn jacobi_nodal(surface: &ImmersedSphere, u: &SphereField, ric_nn: &[f64]) -> Vec<f64> {
    let lap = surface.laplacian_local(u);
    let vals = surface.grid.synthesize(&u.resized(surface.grid.lmax()));
    surface
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| -lap[k] - (ric_nn[k] + n.a_norm2) * vals[k])
        .collect()
}

/// `Lu = −Δ_Σ u − (Ric(ν,ν) + |A|²) u`, expanded on the surface grid.
pub fn jacobi_apply(surface: &ImmersedSphere, u: &SphereField) -> Result<SphereField> {
    let ric = normal_ricci(surface)?;
    let v = jacobi_nodal(surface, &u.resized(surface.grid.lmax()), &ric);
    Ok(surface.grid.analyze(&v, surface.grid.lmax()))
}

/// Sup-norm residuals of the first-variation formulas for the normal speed
/// `u`, after removing the tangential part of the graph variation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VariationResiduals {
    /// `∂_s dμ = uH dμ`.
    pub area_element: f64,
    /// `∂_s H = Lu`.
    pub mean_curvature: f64,
    /// `∂_s Ric(ν,ν) = u ∇_νRic(ν,ν) − 2 Ric(∇u, ν)`.
    pub normal_ricci: f64,
    /// `∂_s|A|² = −2u tr A³ − 2A^{ij}∇_i∇_j u − 2u A^{ij} R(e_i,ν,ν,e_j)`.
    pub second_fundamental_form: f64,
    /// `[∂_s, Δ]z = −uHΔz`, only on umbilic spheres of the round metric.
    pub commutator: Option<f64>,
    /// Difference between the 3- and 5-point derivative stencils.
    pub truncation: f64,
}

struct Snapshot {
    nodes: Vec<NodeGeometry>,
    ric_nn: Vec<f64>,
    lap_z: Option<Vec<f64>>,
}

fn sup(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

fn trace_with(gi: &[[f64; 2]; 2], a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    s += gi[i][k] * gi[j][l] * a[i][j] * b[k][l];
                }
            }
        }
    }
    s
}

/// Checks the first-variation formulas at the graph of `w` by differentiating
/// the family of graphs `w + sφ`, `φ = u / g(∂_r, ν)`, with the 5-point
/// stencil of step `ds`.
pub fn variation_identity_residuals(family: &MetricFamily, p: &S3Point, rho: f64, w: &SphereField, u: &SphereField, ds: f64) -> Result<VariationResiduals> {
    if !(ds > 0.0) {
        return Err(Error::InvalidArgument("variation step must be positive".into()));
    }
    let grid = Arc::new(SphereGrid::new(default_grid_lmax(w.lmax.max(u.lmax))));
    let lg = grid.lmax();
    let w = w.resized(lg);
    let mut ev = WillmoreEvaluator::new(family, p, rho, grid.clone());
    let base = ev.surface(&w)?;
    let u_vals = grid.synthesize(&u.resized(lg));
    let phi_vals: Vec<f64> = u_vals.iter().zip(&base.nodes).map(|(u, n)| u / n.radial_dot_nu).collect();
    let phi = grid.analyze(&phi_vals, lg);
    let umbilic_round = is_round(family) && base.nodes.iter().all(|n| n.a0_norm2 < 1e-16);
    let z = SphereField::harmonic(lg, 2.min(lg), 1.min(lg as i64));

    let snapshot = |ev: &mut WillmoreEvaluator, s: f64| -> Result<Snapshot> {
        let surf = ev.surface(&w.axpy(s, &phi))?;
        let ric_nn = normal_ricci(&surf)?;
        let lap_z = umbilic_round.then(|| surf.laplacian_local(&z));
        Ok(Snapshot {
            nodes: surf.nodes,
            ric_nn,
            lap_z,
        })
    };
    // Cover the whole stencil with one set of shells.
    ev.surface(&w.axpy(2.0 * ds, &phi))?;
    ev.surface(&w.axpy(-2.0 * ds, &phi))?;
    let snaps: Vec<Snapshot> = [-2.0, -1.0, 1.0, 2.0].iter().map(|k| snapshot(&mut ev, k * ds)).collect::<Result<_>>()?;
    let center = snapshot(&mut ev, 0.0)?;

    let n = grid.len();
    let mut truncation = 0.0f64;
    let mut deriv = |f: &dyn Fn(&Snapshot, usize) -> f64| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let v: Vec<f64> = snaps.iter().map(|s| f(s, k)).collect();
                let d5 = (8.0 * (v[2] - v[1]) - (v[3] - v[0])) / (12.0 * ds);
                let d3 = (v[2] - v[1]) / (2.0 * ds);
                truncation = truncation.max((d5 - d3).abs() / (1.0 + d5.abs()));
                d5
            })
            .collect()
    };
    let d_area = deriv(&|s, k| s.nodes[k].area_el);
    let d_h = deriv(&|s, k| s.nodes[k].h);
    let d_ric = deriv(&|s, k| s.ric_nn[k]);
    let d_a2 = deriv(&|s, k| s.nodes[k].a_norm2);
    let d_lap = umbilic_round.then(|| deriv(&|s, k| s.lap_z.as_ref().expect("umbilic snapshots")[k]));
    if truncation > 1e-2 {
        return Err(Error::StepTooLarge { ds });
    }

    let nodes = &center.nodes;
    // Tangential velocity X = φ (∂_r − g(∂_r,ν)ν) in the chart basis.
    let phi_nodal = grid.synthesize(&phi);
    let x_chart: Vec<[f64; 2]> = nodes
        .iter()
        .zip(&phi_nodal)
        .map(|(nd, ph)| {
            let gi = nd.gamma_inv();
            let r: [f64; 2] = std::array::from_fn(|j| tensor::quad(&nd.metric, &nd.radial, &nd.tangents[j]));
            std::array::from_fn(|i| ph * (gi[i][0] * r[0] + gi[i][1] * r[1]))
        })
        .collect();
    let along = |values: &[f64]| -> Vec<f64> {
        let jets = grid.jets(&grid.analyze(values, lg));
        jets.iter().zip(&x_chart).map(|(j, x)| x[0] * j[1] + x[1] * j[2]).collect()
    };
    let div_mx = {
        let amb: Vec<[f64; 3]> = (0..n)
            .map(|k| {
                let [_, et, ep] = grid.frame(k);
                let m = nodes[k].area_el;
                std::array::from_fn(|a| m * (x_chart[k][0] * et[a] + x_chart[k][1] * ep[a]))
            })
            .collect();
        grid.divergence(&amb, lg)
    };
    let h_vals: Vec<f64> = nodes.iter().map(|n| n.h).collect();
    let a2_vals: Vec<f64> = nodes.iter().map(|n| n.a_norm2).collect();
    let (x_h, x_ric, x_a2) = (along(&h_vals), along(&center.ric_nn), along(&a2_vals));

    let positions: Vec<S3Point> = nodes.iter().map(|n| S3Point::new(n.q)).collect();
    let bundles = bundles(family, &positions)?;
    let u_jets = grid.jets(&u.resized(lg));
    let lap_u = {
        let surf = ImmersedSphere {
            grid: grid.clone(),
            family: family.clone(),
            center: *p,
            rho,
            w: w.clone(),
            nodes: nodes.clone(),
        };
        surf.laplacian_local(&u.resized(lg))
    };

    let mut res = VariationResiduals {
        truncation,
        ..Default::default()
    };
    for k in 0..n {
        let nd = &nodes[k];
        let uk = u_vals[k];
        let b = &bundles[k];
        res.area_element = res.area_element.max((d_area[k] - uk * nd.h * nd.area_el - div_mx[k]).abs());
        let lu = -lap_u[k] - (center.ric_nn[k] + nd.a_norm2) * uk;
        res.mean_curvature = res.mean_curvature.max((d_h[k] - lu - x_h[k]).abs());

        let gi = nd.gamma_inv();
        let grad_u: Vec3 = std::array::from_fn(|c| {
            let x1 = gi[0][0] * u_jets[k][1] + gi[0][1] * u_jets[k][2];
            let x2 = gi[1][0] * u_jets[k][1] + gi[1][1] * u_jets[k][2];
            x1 * nd.tangents[0][c] + x2 * nd.tangents[1][c]
        });
        let nabla_ric_nnn = if family.is_left_invariant() {
            let s = |_: &crate::quat::Quat| Ok(b.ric);
            let d = curvature::covariant_derivative(&s, &b.gamma, &nd.q, curvature::OUTER_FD_STEP)?;
            nabla_contract(&d, &nd.nu)
        } else {
            let s = |q: &crate::quat::Quat| curvature::curvature_bundle(family, &S3Point::new(*q)).map(|c| c.ric);
            let d = curvature::covariant_derivative(&s, &b.gamma, &nd.q, curvature::OUTER_FD_STEP)?;
            nabla_contract(&d, &nd.nu)
        };
        let pred_ric = uk * nabla_ric_nnn - 2.0 * tensor::quad(&b.ric, &grad_u, &nd.nu);
        res.normal_ricci = res.normal_ricci.max((d_ric[k] - pred_ric - x_ric[k]).abs());

        // A^♯ = γ⁻¹ A, tr A³ and the normal sectional curvatures.
        let am: [[f64; 2]; 2] = std::array::from_fn(|i| std::array::from_fn(|j| gi[i][0] * nd.a[0][j] + gi[i][1] * nd.a[1][j]));
        let a2m = [
            [am[0][0] * am[0][0] + am[0][1] * am[1][0], am[0][0] * am[0][1] + am[0][1] * am[1][1]],
            [am[1][0] * am[0][0] + am[1][1] * am[1][0], am[1][0] * am[0][1] + am[1][1] * am[1][1]],
        ];
        let tr_a3 = (0..2).map(|i| (0..2).map(|j| a2m[i][j] * am[j][i]).sum::<f64>()).sum::<f64>();
        let tij: [[f64; 2]; 2] = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut s = 0.0;
                for a in 0..3 {
                    for bb in 0..3 {
                        for c in 0..3 {
                            for d in 0..3 {
                                s += b.riem.get(a, bb, c, d) * nd.tangents[i][a] * nd.nu[bb] * nd.tangents[j][c] * nd.nu[d];
                            }
                        }
                    }
                }
                s
            })
        });
        let hess = nd.hessian(&u_jets[k]);
        let pred_a2 = -2.0 * uk * tr_a3 - 2.0 * trace_with(&gi, &nd.a, &hess) - 2.0 * uk * trace_with(&gi, &nd.a, &tij);
        res.second_fundamental_form = res.second_fundamental_form.max((d_a2[k] - pred_a2 - x_a2[k]).abs());
    }
    if let (Some(d_lap), Some(lap_z)) = (d_lap, center.lap_z.as_ref()) {
        res.commutator = Some(sup((0..n).map(|k| d_lap[k] + u_vals[k] * nodes[k].h * lap_z[k])));
    }
    Ok(res)
}

fn nabla_contract(d: &[tensor::Mat3; 3], v: &Vec3) -> f64 {
    let mut s = 0.0;
    for a in 0..3 {
        s += v[a] * tensor::quad(&d[a], v, v);
    }
    s
}
