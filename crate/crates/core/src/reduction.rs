//! Lyapunov-Schmidt reduction: the auxiliary equation on K^⊥, the reduced
//! functional `Φ(p, ρ)` and the search for its critical points.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::metric::MetricFamily;
use crate::nelder_mead::{self, NelderMeadOptions};
use crate::quat::{self, S3Point};
use crate::spectral::{SphereField, SphereGrid, KERNEL_INDICES};
use crate::surface::{RadialShells, ShellOptions};
use crate::willmore::{default_grid_lmax, GradientMode, WillmoreEvaluator};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Band limit of `w`.
    pub lmax: usize,
    /// Band limit of the quadrature grid; derived from `lmax` when absent.
    pub grid_lmax: Option<usize>,
    /// Target `‖P I′‖_{L²}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Admissible radii are `[delta, π − delta]`.
    pub delta: f64,
    pub mode: GradientMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lmax: 16,
            grid_lmax: None,
            tol: 1e-8,
            max_iter: 60,
            delta: 0.15,
            mode: GradientMode::Jet,
        }
    }
}

impl SolverConfig {
    pub fn grid_lmax(&self) -> usize {
        self.grid_lmax.unwrap_or_else(|| default_grid_lmax(self.lmax))
    }
}

/// Solution of the auxiliary equation at one `(p, ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedPoint {
    pub epsilon: f64,
    pub p: S3Point,
    pub rho: f64,
    /// Graph function, orthogonal to degrees 0 and 1.
    pub w: SphereField,
    /// `Φ(p, ρ) = I(S_{p,ρ}(w))`.
    pub phi: f64,
    /// `‖P I′‖_{L²}` at `w`.
    pub aux_residual: f64,
    /// Components `A_0..A_3` of `I′` along the kernel basis.
    pub kernel_coeffs: [f64; 4],
    /// `‖I′‖_{L²}` including the kernel part.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

/// Components of the full gradient along the kernel basis.
pub fn kernel_coefficients(reduced: &ReducedPoint) -> [f64; 4] {
    reduced.kernel_coeffs
}

const CACHE_LIMIT: usize = 12;

/// Solves the auxiliary equation for one metric, caching radial shells of
/// left-invariant metrics by radius.
#[derive(Debug)]
pub struct Reducer {
    family: MetricFamily,
    cfg: SolverConfig,
    grid: Arc<SphereGrid>,
    cache: Mutex<HashMap<u64, RadialShells>>,
}

impl Reducer {
    pub fn new(family: &MetricFamily, cfg: &SolverConfig) -> Result<Self> {
        family.validate()?;
        if cfg.lmax < 2 || !(cfg.tol > 0.0) || !(cfg.delta > 0.0 && cfg.delta < PI / 2.0) {
            return Err(Error::InvalidArgument("solver config needs lmax >= 2, tol > 0 and 0 < delta < π/2".into()));
        }
        if cfg.grid_lmax() < cfg.lmax {
            return Err(Error::InvalidArgument("grid_lmax must be at least lmax".into()));
        }
        Ok(Self {
            family: family.clone(),
            cfg: cfg.clone(),
            grid: Arc::new(SphereGrid::new(cfg.grid_lmax())),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn in_window(&self, rho: f64) -> bool {
        rho >= self.cfg.delta && rho <= PI - self.cfg.delta
    }

    fn evaluator(&self, p: &S3Point, rho: f64) -> Result<WillmoreEvaluator> {
        if !self.family.is_left_invariant() {
            return Ok(WillmoreEvaluator::new(&self.family, p, rho, self.grid.clone()));
        }
        let key = rho.to_bits();
        let cached = self.cache.lock().expect("cache lock").get(&key).cloned();
        let shells = match cached {
            Some(s) => s,
            None => {
                let s = RadialShells::build(&self.family, &S3Point::identity(), rho, self.grid.clone(), &ShellOptions::wide(rho))?;
                let mut cache = self.cache.lock().expect("cache lock");
                if cache.len() >= CACHE_LIMIT {
                    cache.clear();
                }
                cache.insert(key, s.clone());
                s
            }
        };
        let shells = shells.translated(p).expect("left-invariant family");
        Ok(WillmoreEvaluator::with_shells(shells))
    }

    /// Preconditioned fixed-point iteration `w ← w − (sin²ρ I₀″)⁻¹ P I′(w)`
    /// from `P seed`. Running out of iterations gives a flagged point.
    pub fn solve_from(&self, p: &S3Point, rho: f64, seed: &SphereField) -> Result<ReducedPoint> {
        if !self.in_window(rho) {
            return Err(Error::InvalidArgument(format!(
                "radius {rho} outside [{}, π − {}]",
                self.cfg.delta, self.cfg.delta
            )));
        }
        let mut ev = self.evaluator(p, rho)?;
        let s2 = rho.sin().powi(2);
        let mut w = seed.resized(self.cfg.lmax).project_kperp();
        let mut history = Vec::new();
        let mut iterations = 0;
        loop {
            let (phi, grad) = ev.energy_gradient(&w, self.cfg.mode)?;
            let pg = grad.project_kperp();
            let residual = pg.norm();
            history.push(residual);
            let converged = residual < self.cfg.tol;
            // Growth well past the start means the iteration is not contracting.
            let diverged = !residual.is_finite() || (iterations >= 3 && residual > 2.0 * history[0]);
            if converged || iterations >= self.cfg.max_iter || diverged {
                return Ok(ReducedPoint {
                    epsilon: self.family.epsilon,
                    p: *p,
                    rho,
                    w,
                    phi,
                    aux_residual: residual,
                    kernel_coeffs: KERNEL_INDICES.map(|k| grad.coeffs[k]),
                    gradient_norm: grad.norm(),
                    iterations,
                    converged,
                    residual_history: history,
                });
            }
            w = w.axpy(-1.0 / s2, &pg.invert_i0pp(rho)?);
            iterations += 1;
        }
    }

    pub fn solve(&self, p: &S3Point, rho: f64) -> Result<ReducedPoint> {
        self.solve_from(p, rho, &SphereField::zeros(self.cfg.lmax))
    }

    /// `Φ(p, ρ)`, failing when the auxiliary equation is not solved.
    pub fn phi(&self, p: &S3Point, rho: f64) -> Result<ReducedPoint> {
        let r = self.solve(p, rho)?;
        if !r.converged {
            return Err(Error::NoConvergence {
                iterations: r.iterations,
                residual: r.aux_residual,
            });
        }
        Ok(r)
    }
}

/// Solves the auxiliary equation at `(p, ρ)` starting from `w = 0`.
pub fn solve_auxiliary(family: &MetricFamily, p: &S3Point, rho: f64, cfg: &SolverConfig) -> Result<ReducedPoint> {
    Reducer::new(family, cfg)?.solve(p, rho)
}

/// The converged reduced point at `(p, ρ)`; its `phi` is `Φ(p, ρ)`.
pub fn reduced_functional(family: &MetricFamily, p: &S3Point, rho: f64, cfg: &SolverConfig) -> Result<ReducedPoint> {
    Reducer::new(family, cfg)?.phi(p, rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Number of interior radii of the coarse grid.
    pub grid_rho: usize,
    /// Left translation applied to the 24-cell design of centers.
    pub start: S3Point,
    pub max_evals: usize,
    pub xtol: f64,
    /// Newton steps on the kernel coefficients after the simplex stage.
    pub polish_steps: usize,
    pub polish_fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_rho: 8,
            start: S3Point::identity(),
            max_evals: 300,
            xtol: 1e-5,
            polish_steps: 8,
            polish_fd_step: 1e-4,
        }
    }
}

/// One evaluation of `Φ` during a search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrailRecord {
    pub stage: &'static str,
    pub p: S3Point,
    pub rho: f64,
    pub phi: f64,
    pub aux_residual: f64,
    pub kernel_max: f64,
    pub converged: bool,
}

impl TrailRecord {
    fn from_point(stage: &'static str, r: &ReducedPoint) -> Self {
        let kernel_max = r.kernel_coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        Self {
            stage,
            p: r.p,
            rho: r.rho,
            phi: r.phi,
            aux_residual: r.aux_residual,
            kernel_max,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalSearch {
    pub point: ReducedPoint,
    /// Aux residual and every `|A_i|` below `10·tol`.
    pub critical: bool,
    /// `Φ` varies by less than `1e-10` over the coarse grid: a manifold of
    /// critical points rather than an isolated maximum.
    pub flat: bool,
    /// The maximiser sits at the edge of the radius window.
    pub window_collapse: bool,
    pub trail: Vec<TrailRecord>,
}

/// Spread below which the coarse landscape counts as flat.
pub const FLAT_SPREAD: f64 = 1e-10;

/// Maximises `Φ` over centers and radii in the window of `reducer`.
pub fn find_critical(reducer: &Reducer, opt: &OptimizerConfig) -> Result<CriticalSearch> {
    let cfg = reducer.config();
    let (lo, hi) = (cfg.delta, PI - cfg.delta);
    if opt.grid_rho == 0 {
        return Err(Error::InvalidArgument("grid_rho must be positive".into()));
    }
    let radii: Vec<f64> = (0..opt.grid_rho).map(|k| lo + (hi - lo) * (k + 1) as f64 / (opt.grid_rho + 1) as f64).collect();
    let centers: Vec<S3Point> = quat::cell24().iter().map(|c| c.left_translate(opt.start.q())).collect();
    let jobs: Vec<(S3Point, f64)> = radii.iter().flat_map(|r| centers.iter().map(move |c| (*c, *r))).collect();
    let run = |(c, r): &(S3Point, f64)| reducer.solve(c, *r);
    #[cfg(feature = "parallel")]
    let coarse: Vec<Result<ReducedPoint>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let coarse: Vec<Result<ReducedPoint>> = jobs.iter().map(run).collect();
    let coarse: Vec<ReducedPoint> = coarse.into_iter().collect::<Result<_>>()?;
    let mut trail: Vec<TrailRecord> = coarse.iter().map(|r| TrailRecord::from_point("grid", r)).collect();
    let good: Vec<&ReducedPoint> = coarse.iter().filter(|r| r.converged).collect();
    let Some(first) = good.first() else {
        let worst = coarse.iter().map(|r| r.aux_residual).fold(0.0, f64::max);
        return Err(Error::NoConvergence {
            iterations: cfg.max_iter,
            residual: worst,
        });
    };
    // Largest Φ; ties broken lexicographically on (ρ, q).
    let key = |r: &ReducedPoint| (r.rho, *r.p.q());
    let mut best = *first;
    for r in &good {
        let better = r.phi > best.phi || (r.phi == best.phi && key(r).partial_cmp(&key(best)) == Some(std::cmp::Ordering::Less));
        if better {
            best = r;
        }
    }
    let (pmin, pmax) = good.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.phi), b.max(r.phi)));
    let tol10 = 10.0 * cfg.tol;
    if pmax - pmin < FLAT_SPREAD {
        let point = best.clone();
        let critical = point.aux_residual < tol10 && point.kernel_coeffs.iter().all(|a| a.abs() < tol10);
        return Ok(CriticalSearch {
            point,
            critical,
            flat: true,
            window_collapse: false,
            trail,
        });
    }

    // Simplex refinement in (exponential chart at the incumbent, ρ). Left
    // translations are isometries of left-invariant metrics, so there only ρ
    // is searched.
    let base = best.p;
    let radial_only = reducer.family().is_left_invariant();
    let dims = if radial_only { 1 } else { 4 };
    let locate = |z: &[f64]| -> (S3Point, f64) {
        if radial_only {
            (base, z[0])
        } else {
            (base.exp_chart(&[z[0], z[1], z[2]]), z[3])
        }
    };
    let mut evals: Vec<ReducedPoint> = Vec::new();
    let objective = |z: &[f64], evals: &mut Vec<ReducedPoint>| -> Result<f64> {
        let (p, rho) = locate(z);
        if rho < lo || rho > hi {
            return Ok(f64::INFINITY);
        }
        let r = reducer.solve(&p, rho)?;
        let v = if r.converged { -r.phi } else { f64::INFINITY };
        evals.push(r);
        Ok(v)
    };
    let step = (hi - lo) / (opt.grid_rho + 1) as f64 * 0.5;
    let (steps, z0) = if radial_only {
        (vec![step], vec![best.rho])
    } else {
        (vec![0.2, 0.2, 0.2, step], vec![0.0, 0.0, 0.0, best.rho])
    };
    let nm = NelderMeadOptions {
        steps,
        xtol: opt.xtol,
        ftol: 1e-14,
        max_evals: opt.max_evals,
    };
    let m = nelder_mead::minimize(|z| objective(z, &mut evals), &z0, &nm)?;
    trail.extend(evals.iter().map(|r| TrailRecord::from_point("simplex", r)));
    let (mut z, mut point) = if m.f.is_finite() {
        let (p, rho) = locate(&m.x);
        (m.x.clone(), reducer.phi(&p, rho)?)
    } else {
        (z0, best.clone())
    };

    // Newton polish of the kernel coefficients, A(z) = 0, with a
    // pseudo-inverse of the difference Jacobian.
    let h = opt.polish_fd_step;
    let coeffs = |z: &[f64]| -> Result<ReducedPoint> {
        let (p, rho) = locate(z);
        reducer.phi(&p, rho)
    };
    let size = |r: &ReducedPoint| r.kernel_coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    for _ in 0..opt.polish_steps {
        let rho = locate(&z).1;
        if size(&point) < 0.1 * cfg.tol || rho - 2.0 * h < lo || rho + 2.0 * h > hi {
            break;
        }
        let mut jac = DMatrix::zeros(4, dims);
        for j in 0..dims {
            let mut zp = z.clone();
            zp[j] += h;
            let mut zm = z.clone();
            zm[j] -= h;
            let (ap, am) = (coeffs(&zp)?.kernel_coeffs, coeffs(&zm)?.kernel_coeffs);
            for i in 0..4 {
                jac[(i, j)] = (ap[i] - am[i]) / (2.0 * h);
            }
        }
        let svd = jac.svd(true, true);
        let cutoff = 1e-6 * svd.singular_values.max();
        let a = DVector::from_column_slice(&point.kernel_coeffs);
        let dz = svd.solve(&a, cutoff).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(z, d)| z - d).collect();
        let trial_rho = locate(&trial).1;
        if trial_rho < lo || trial_rho > hi {
            break;
        }
        let next = coeffs(&trial)?;
        trail.push(TrailRecord::from_point("polish", &next));
        if size(&next) >= size(&point) {
            break;
        }
        point = next;
        z = trial;
    }
    let critical = point.aux_residual < tol10 && point.kernel_coeffs.iter().all(|a| a.abs() < tol10);
    let window_collapse = point.rho - lo < 1e-3 || hi - point.rho < 1e-3;
    Ok(CriticalSearch {
        point,
        critical,
        flat: false,
        window_collapse,
        trail,
    })
}
