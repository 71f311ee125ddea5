//! Levi-Civita connection and curvature in the left-invariant frame.
//!
//! Conventions:
//!
//! * `∇_{E_a} E_b = Γ^c_ab E_c`, `gamma[c][a][b] = Γ^c_ab`.
//! * `Riem_{ijkl} = g(R(E_i, E_j) E_l, E_k)` with
//!   `R(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]`, so the unit sphere has
//!   `Riem_{ijkl} = g_ik g_jl − g_il g_jk`.
//! * `Ric_jl = g^{ik} Riem_{ijkl}`, `R = g^{jl} Ric_jl`, `Ric̊ = Ric − (R/3) g`.
//! * Divergence `(δS)_b = g^{ac} (∇_a S)_{cb}`; with this sign the contracted
//!   Bianchi identity reads `dR = 6 δRic̊`.
//!
//! Frame derivatives `E_a(f)(q) = d/dt f(q·exp(t e_a))` vanish for
//! left-invariant metrics, which makes the Koszul formula exact there. Other
//! metrics use 4th-order centered differences with one Richardson step.

use serde::{Deserialize, Serialize};

use crate::metric::MetricFamily;
use crate::quat::{self, Quat, S3Point};
use crate::tensor::{self, kulkarni_nomizu, levi, Mat3, Tensor4, Vec3};
use crate::{Error, Result};

pub type Christoffel = [[[f64; 3]; 3]; 3];

/// Step of the inner (metric) finite differences.
pub const FD_STEP: f64 = 1e-3;
/// Step of finite differences of curvature quantities.
pub const OUTER_FD_STEP: f64 = 1e-2;

/// Structure constants `c^e_ab` with `[E_a, E_b] = c^e_ab E_e`.
pub fn structure_constant(e: usize, a: usize, b: usize) -> f64 {
    2.0 * levi(a, b, e)
}

/// Frame derivative of a vector-valued function along `E_a` at `q`.
/// Returns the Richardson-refined value and the disagreement between the
/// two 4th-order estimates.
pub fn frame_derivative<const N: usize>(f: &impl Fn(&Quat) -> Result<[f64; N]>, q: &Quat, a: usize, h: f64) -> Result<([f64; N], f64)> {
    if !(h > 1e-8) {
        return Err(Error::FiniteDifferenceStepUnderflow(format!("step {h:e} below 1e-8")));
    }
    let at = |t: f64| {
        let mut e = [0.0; 3];
        e[a] = t;
        f(&quat::mul(q, &quat::exp_pure(&e)))
    };
    let (p1, m1, p2, m2, p4, m4) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?, at(4.0 * h)?, at(-4.0 * h)?);
    let mut out = [0.0; N];
    let mut dis: f64 = 0.0;
    for k in 0..N {
        let d1 = (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * h);
        let d2 = (8.0 * (p2[k] - m2[k]) - (p4[k] - m4[k])) / (24.0 * h);
        out[k] = (16.0 * d1 - d2) / 15.0;
        dis = dis.max((d1 - d2).abs());
    }
    Ok((out, dis))
}

fn flat9(m: &Mat3) -> [f64; 9] {
    std::array::from_fn(|k| m[k / 3][k % 3])
}

fn unflat9(v: &[f64; 9]) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| v[3 * i + j]))
}

/// Christoffel symbols from the frame metric and its frame derivatives
/// `dg[a] = E_a(g)` (Koszul formula for a non-holonomic frame).
pub fn christoffel_from(g: &Mat3, dg: &[Mat3; 3]) -> Christoffel {
    let ginv = tensor::inv3(g);
    let c = |a: usize, b: usize, d: usize| (0..3).map(|e| structure_constant(e, a, b) * g[e][d]).sum::<f64>();
    let mut lower = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for d in 0..3 {
                lower[a][b][d] = 0.5 * (dg[a][b][d] + dg[b][a][d] - dg[d][a][b] + c(a, b, d) - c(a, d, b) - c(b, d, a));
            }
        }
    }
    std::array::from_fn(|k| std::array::from_fn(|a| std::array::from_fn(|b| (0..3).map(|d| ginv[k][d] * lower[a][b][d]).sum())))
}

fn metric_derivatives(family: &MetricFamily, q: &Quat, h: f64) -> Result<[Mat3; 3]> {
    if family.is_left_invariant() {
        return Ok([tensor::zeros3(); 3]);
    }
    let f = |p: &Quat| family.frame_metric(p).map(|g| flat9(&g));
    let mut out = [tensor::zeros3(); 3];
    for (a, o) in out.iter_mut().enumerate() {
        *o = unflat9(&frame_derivative(&f, q, a, h)?.0);
    }
    Ok(out)
}

/// Christoffel symbols of `family` at `q`.
pub fn christoffel(family: &MetricFamily, q: &Quat) -> Result<Christoffel> {
    let g = family.frame_metric(q)?;
    let dg = metric_derivatives(family, q, FD_STEP)?;
    Ok(christoffel_from(&g, &dg))
}

fn flat27(c: &Christoffel) -> [f64; 27] {
    std::array::from_fn(|k| c[k / 9][(k / 3) % 3][k % 3])
}

/// All curvature data of a metric at one point, in the frame `E_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBundle {
    pub point: S3Point,
    /// `E_a(q)` as vectors of R⁴.
    pub frame: [[f64; 4]; 3],
    pub metric: Mat3,
    pub gamma: Christoffel,
    pub riem: Tensor4,
    pub ric: Mat3,
    pub scalar: f64,
    pub ric0: Mat3,
    pub ric0_norm2: f64,
}

impl CurvatureBundle {
    fn assemble(point: S3Point, g: Mat3, gamma: Christoffel, dgamma: [Christoffel; 3]) -> Self {
        let ginv = tensor::inv3(&g);
        // R^e_{cab}
        let mut r = [[[[0.0; 3]; 3]; 3]; 3];
        for e in 0..3 {
            for c in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        let mut v = dgamma[a][e][b][c] - dgamma[b][e][a][c];
                        for d in 0..3 {
                            v += gamma[d][b][c] * gamma[e][a][d] - gamma[d][a][c] * gamma[e][b][d];
                            v -= structure_constant(d, a, b) * gamma[e][d][c];
                        }
                        r[e][c][a][b] = v;
                    }
                }
            }
        }
        let riem = Tensor4::from_fn(|i, j, k, l| (0..3).map(|e| g[k][e] * r[e][l][i][j]).sum());
        let ric: Mat3 = std::array::from_fn(|j| {
            std::array::from_fn(|l| {
                let mut s = 0.0;
                for i in 0..3 {
                    for k in 0..3 {
                        s += ginv[i][k] * riem.get(i, j, k, l);
                    }
                }
                s
            })
        });
        let scalar = (0..9).map(|k| ginv[k / 3][k % 3] * ric[k / 3][k % 3]).sum::<f64>();
        let ric0: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| ric[i][j] - scalar / 3.0 * g[i][j]));
        let ric0_norm2 = norm2(&ginv, &ric0);
        let frame = std::array::from_fn(|a| quat::frame_vector(point.q(), a));
        Self {
            point,
            frame,
            metric: g,
            gamma,
            riem,
            ric,
            scalar,
            ric0,
            ric0_norm2,
        }
    }

    /// `tr_g Ric̊`.
    pub fn ric0_trace(&self) -> f64 {
        let ginv = tensor::inv3(&self.metric);
        (0..9).map(|k| ginv[k / 3][k % 3] * self.ric0[k / 3][k % 3]).sum()
    }

    /// Largest component of `Riem − (R/12) g·g − Ric̊·g`, which vanishes in
    /// dimension three.
    pub fn ricci_decomposition_residual(&self) -> f64 {
        let gg = kulkarni_nomizu(&self.metric, &self.metric).scaled(self.scalar / 12.0);
        let rg = kulkarni_nomizu(&self.ric0, &self.metric);
        self.riem.sub(&gg).sub(&rg).max_abs()
    }

    /// `Ric(v, v)` for frame components `v`.
    pub fn ric_quad(&self, v: &Vec3) -> f64 {
        tensor::quad(&self.ric, v, v)
    }
}

/// `|S|²_g = g^{ac} g^{bd} S_ab S_cd`.
pub fn norm2(ginv: &Mat3, s: &Mat3) -> f64 {
    let a = tensor::mat_mul(&tensor::mat_mul(ginv, s), &tensor::mat_mul(ginv, s));
    a[0][0] + a[1][1] + a[2][2]
}

/// Curvature of `family` at `pt`: exact Koszul algebra for left-invariant
/// metrics, finite differences otherwise.
pub fn curvature_bundle(family: &MetricFamily, pt: &S3Point) -> Result<CurvatureBundle> {
    if family.is_left_invariant() {
        let g = family.frame_metric(pt.q())?;
        let gamma = christoffel_from(&g, &[tensor::zeros3(); 3]);
        Ok(CurvatureBundle::assemble(*pt, g, gamma, [[[[0.0; 3]; 3]; 3]; 3]))
    } else {
        curvature_bundle_fd(family, pt)
    }
}

/// Curvature by finite differences regardless of the family kind.
pub fn curvature_bundle_fd(family: &MetricFamily, pt: &S3Point) -> Result<CurvatureBundle> {
    let g = family.frame_metric(pt.q())?;
    let inner = |p: &Quat| -> Result<[f64; 27]> {
        let gp = family.frame_metric(p)?;
        let f = |x: &Quat| family.frame_metric(x).map(|m| flat9(&m));
        let mut dg = [tensor::zeros3(); 3];
        for (a, d) in dg.iter_mut().enumerate() {
            *d = unflat9(&frame_derivative(&f, p, a, FD_STEP)?.0);
        }
        Ok(flat27(&christoffel_from(&gp, &dg)))
    };
    let gamma_flat = inner(pt.q())?;
    let gamma: Christoffel = std::array::from_fn(|k| std::array::from_fn(|a| std::array::from_fn(|b| gamma_flat[9 * k + 3 * a + b])));
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
    for (a, dga) in dgamma.iter_mut().enumerate() {
        let (d, _) = frame_derivative(&inner, pt.q(), a, FD_STEP)?;
        *dga = std::array::from_fn(|k| std::array::from_fn(|i| std::array::from_fn(|j| d[9 * k + 3 * i + j])));
    }
    Ok(CurvatureBundle::assemble(*pt, g, gamma, dgamma))
}

/// Covariant derivative `(∇_a S)_{bc}` of a symmetric tensor field, given as
/// a function of the point, at `q`.
pub fn covariant_derivative(s: &impl Fn(&Quat) -> Result<Mat3>, gamma: &Christoffel, q: &Quat, h: f64) -> Result<[Mat3; 3]> {
    let f = |p: &Quat| s(p).map(|m| flat9(&m));
    let s0 = s(q)?;
    let mut out = [tensor::zeros3(); 3];
    for (a, o) in out.iter_mut().enumerate() {
        let d = unflat9(&frame_derivative(&f, q, a, h)?.0);
        for b in 0..3 {
            for c in 0..3 {
                let mut v = d[b][c];
                for e in 0..3 {
                    v -= gamma[e][a][b] * s0[e][c] + gamma[e][a][c] * s0[b][e];
                }
                o[b][c] = v;
            }
        }
    }
    Ok(out)
}

/// `dR − 6 δRic̊` at `pt`, by finite differences of curvature bundles.
pub fn bianchi_residual(family: &MetricFamily, pt: &S3Point) -> Result<Vec3> {
    let cb = curvature_bundle(family, pt)?;
    let ric0 = |p: &Quat| curvature_bundle(family, &S3Point::new(*p)).map(|c| c.ric0);
    let scalar = |p: &Quat| curvature_bundle(family, &S3Point::new(*p)).map(|c| [c.scalar]);
    let nabla = covariant_derivative(&ric0, &cb.gamma, pt.q(), OUTER_FD_STEP)?;
    let ginv = tensor::inv3(&cb.metric);
    let mut out = [0.0; 3];
    for (b, o) in out.iter_mut().enumerate() {
        let dr = frame_derivative(&scalar, pt.q(), b, OUTER_FD_STEP)?.0[0];
        let mut div = 0.0;
        for a in 0..3 {
            for c in 0..3 {
                div += ginv[a][c] * nabla[a][c][b];
            }
        }
        *o = dr - 6.0 * div;
    }
    Ok(out)
}

/// First-order response of the traceless Ricci tensor to the family's
/// perturbation direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicciLinearization {
    /// `D = d/dε Ric̊(g₀ + εh)` at `ε = 0`, frame components.
    pub d: Mat3,
    /// `T⁽²⁾(h) = |D|²` in the round metric.
    pub t2: f64,
    pub disagreement: f64,
}

/// Step and tolerance of the ε-derivative.
pub const EPS_STEP: f64 = 1e-2;
pub const EPS_TOL: f64 = 1e-6;

pub fn traceless_ricci_linearization(family: &MetricFamily, pt: &S3Point) -> Result<RicciLinearization> {
    let at = |e: f64| curvature_bundle(&family.with_epsilon(e), pt).map(|c| c.ric0);
    let h = EPS_STEP;
    let (p1, m1, p2, m2, p4, m4) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?, at(4.0 * h)?, at(-4.0 * h)?);
    let mut d = tensor::zeros3();
    let mut dis: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..3 {
        for j in 0..3 {
            let d1 = (8.0 * (p1[i][j] - m1[i][j]) - (p2[i][j] - m2[i][j])) / (12.0 * h);
            let d2 = (8.0 * (p2[i][j] - m2[i][j]) - (p4[i][j] - m4[i][j])) / (24.0 * h);
            d[i][j] = (16.0 * d1 - d2) / 15.0;
            dis = dis.max((d1 - d2).abs());
            scale = scale.max(d[i][j].abs());
        }
    }
    if dis > EPS_TOL * scale {
        return Err(Error::NonConvergentDerivative { disagreement: dis });
    }
    let t2 = (0..9).map(|k| d[k / 3][k % 3].powi(2)).sum();
    Ok(RicciLinearization { d, t2, disagreement: dis })
}
