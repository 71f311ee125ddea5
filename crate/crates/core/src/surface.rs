//! Normal graphs `Ψ(Θ) = exp_p((ρ + w(Θ)) Θ)` over geodesic spheres.
//!
//! For every grid direction `Θ` the radial geodesic is integrated once over a
//! window of radii around `ρ`, together with the Jacobi fields of the two
//! angular directions and, from neighbouring geodesics, their covariant
//! derivatives across directions. All of these are stored as Chebyshev series
//! in the radius, so the geometry of any graph `w` inside the window is a
//! pointwise function of the 2-jet of `w` at the node.
//!
//! Angular derivatives use the gnomonic chart `s ↦ (Θ + s_1 e_θ + s_2 e_φ)/|·|`
//! at each node, whose Christoffel symbols vanish at `s = 0`: its first and
//! second partials of `w` are the jet of [`SphereGrid::jets`].

use std::sync::Arc;

use serde::Serialize;

use crate::dual::{Dual, Real};
use crate::geodesic::{self, ConnectionField};
use crate::integrate::Gbs;
use crate::metric::MetricFamily;
use crate::quat::{self, Quat, S3Point};
use crate::spectral::{SphereField, SphereGrid};
use crate::tensor::{self, Mat3, Vec3};
use crate::{Error, Result};

// Layout of the per-node radial quantities.
const Q: usize = 0;
const T: usize = 4;
const J: usize = 7;
const DJ: usize = 13;
const K: usize = 19;
const GM: usize = 28;
const NQ: usize = 34;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellOptions {
    /// Half width of the radial window.
    pub half_width: f64,
    /// Chebyshev points in the radial window.
    pub cheb: usize,
    /// Angular step of the neighbouring geodesics.
    pub fd_step: f64,
    pub tol: f64,
}

impl Default for ShellOptions {
    fn default() -> Self {
        Self {
            half_width: 0.05,
            cheb: 12,
            fd_step: 1e-3,
            tol: geodesic::TOL,
        }
    }
}

impl ShellOptions {
    /// A window wide enough for any admissible graph over radius `rho`, with
    /// enough Chebyshev points to keep the interpolation at rounding level.
    pub fn wide(rho: f64) -> Self {
        Self {
            half_width: 0.2f64.min(0.75 * rho.min(std::f64::consts::PI - rho)),
            cheb: 18,
            ..Default::default()
        }
    }
}

/// Largest admissible `sup|w|` for a graph over the sphere of radius `rho`.
pub fn graph_limit(rho: f64) -> f64 {
    0.5 * rho.min(std::f64::consts::PI - rho)
}

/// Checks the graph condition on nodal values.
pub fn check_graph(values: &[f64], rho: f64) -> Result<f64> {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let limit = graph_limit(rho);
    if !(sup < limit) {
        return Err(Error::GraphTooLarge { sup, limit });
    }
    Ok(sup)
}

/// Radial geodesic data of every grid direction over a window of radii.
#[derive(Debug, Clone)]
pub struct RadialShells {
    family: MetricFamily,
    p: S3Point,
    rho: f64,
    lo: f64,
    hi: f64,
    grid: Arc<SphereGrid>,
    cheb: usize,
    // Per node: NQ value series then NQ derivative series, `cheb` each.
    coeffs: Vec<f64>,
}

fn cheb_nodes(n: usize) -> Vec<f64> {
    // Ascending nodes of the first kind on [-1, 1].
    (0..n).map(|k| -(std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos()).collect()
}

fn cheb_fit(values: &[f64], xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|m| {
            let s: f64 = values.iter().zip(xs).map(|(v, x)| v * (m as f64 * x.acos()).cos()).sum();
            let c = 2.0 * s / n as f64;
            if m == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

/// Coefficients of the x-derivative of a Chebyshev series.
fn cheb_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut d = vec![0.0; n + 1];
    for m in (1..n).rev() {
        d[m - 1] = d[m + 1] + 2.0 * m as f64 * c[m];
    }
    d[0] *= 0.5;
    d.truncate(n);
    d
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}

impl RadialShells {
    /// Integrates all radial geodesics of the grid over `[rho - a, rho + a]`
    /// with `a = min(options.half_width, 0.75 min(rho, π - rho))`.
    pub fn build(family: &MetricFamily, p: &S3Point, rho: f64, grid: Arc<SphereGrid>, options: &ShellOptions) -> Result<Self> {
        if !(rho > 0.0 && rho < std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!("radius {rho} outside (0, π)")));
        }
        let a = options.half_width.min(0.75 * rho.min(std::f64::consts::PI - rho));
        let (lo, hi) = (rho - a, rho + a);
        let xs = cheb_nodes(options.cheb);
        let radii: Vec<f64> = xs.iter().map(|x| rho + a * x).collect();
        let conn = ConnectionField::new(family)?;
        let g0 = family.frame_metric(p.q())?;
        let b = tensor::sym_inv_sqrt(&g0);
        let node = |n: usize| -> Result<Vec<f64>> { node_series(&conn, p, &b, &grid, n, &radii, &xs, a, options) };
        #[cfg(feature = "parallel")]
        let per_node: Vec<Result<Vec<f64>>> = {
            use rayon::prelude::*;
            (0..grid.len()).into_par_iter().map(node).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let per_node: Vec<Result<Vec<f64>>> = (0..grid.len()).map(node).collect();
        let mut coeffs = Vec::with_capacity(grid.len() * 2 * NQ * options.cheb);
        for r in per_node {
            coeffs.extend(r?);
        }
        Ok(Self {
            family: family.clone(),
            p: *p,
            rho,
            lo,
            hi,
            grid,
            cheb: options.cheb,
            coeffs,
        })
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn center(&self) -> &S3Point {
        &self.p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Radial window `[lo, hi]`.
    pub fn window(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// True when every `rho + w` lies strictly inside the window.
    pub fn covers(&self, w_values: &[f64]) -> bool {
        let margin = 0.02 * (self.hi - self.lo);
        w_values.iter().all(|w| {
            let r = self.rho + w;
            r > self.lo + margin && r < self.hi - margin
        })
    }

    /// For a left-invariant metric, the shells of the same radius centered at
    /// `p`, obtained by left translation.
    pub fn translated(&self, p: &S3Point) -> Option<Self> {
        if !self.family.is_left_invariant() {
            return None;
        }
        let rel = quat::mul(p.q(), &quat::conj(self.p.q()));
        let mut out = self.clone();
        out.p = *p;
        let stride = 2 * NQ * self.cheb;
        for n in 0..self.grid.len() {
            for part in 0..2 {
                let base = n * stride + part * NQ * self.cheb;
                for k in 0..self.cheb {
                    let q: Quat = std::array::from_fn(|i| self.coeffs[base + (Q + i) * self.cheb + k]);
                    let t = quat::mul(&rel, &q);
                    for i in 0..4 {
                        out.coeffs[base + (Q + i) * self.cheb + k] = t[i];
                    }
                }
            }
        }
        Some(out)
    }

    fn x_of(&self, r: f64) -> f64 {
        (2.0 * r - self.lo - self.hi) / (self.hi - self.lo)
    }

    /// Values and radial derivatives of all quantities of node `n` at `r`.
    fn interpolate(&self, n: usize, r: f64, with_slope: bool) -> ([f64; NQ], [f64; NQ]) {
        let x = self.x_of(r);
        let dxdr = 2.0 / (self.hi - self.lo);
        let stride = 2 * NQ * self.cheb;
        let base = n * stride;
        let mut v = [0.0; NQ];
        let mut d = [0.0; NQ];
        for q in 0..NQ {
            let c = &self.coeffs[base + q * self.cheb..base + (q + 1) * self.cheb];
            v[q] = clenshaw(c, x);
            if with_slope {
                let dc = &self.coeffs[base + (NQ + q) * self.cheb..base + (NQ + q + 1) * self.cheb];
                d[q] = clenshaw(dc, x) * dxdr;
            }
        }
        (v, d)
    }

    fn jets_checked(&self, w: &SphereField) -> Result<Vec<[f64; 6]>> {
        let jets = self.grid.jets(w);
        let values: Vec<f64> = jets.iter().map(|j| j[0]).collect();
        check_graph(&values, self.rho)?;
        if !self.covers(&values) {
            return Err(Error::InvalidArgument("graph leaves the radial window of the shells".into()));
        }
        Ok(jets)
    }

    /// Geometry of the graph of `w` at every node.
    pub fn geometry(&self, w: &SphereField) -> Result<Vec<NodeGeometry>> {
        let jets = self.jets_checked(w)?;
        Ok(jets
            .iter()
            .enumerate()
            .map(|(n, jet)| {
                let (v, _) = self.interpolate(n, self.rho + jet[0], false);
                let inp = LocalInput::<f64>::from_values(&v);
                let out = local_geometry(&inp, jet);
                NodeGeometry::from_local(&v, &inp, &out)
            })
            .collect())
    }

    /// Conformal Willmore energy `½∫|A°|² dμ` of the graph of `w` and, when
    /// requested, its exact gradient with respect to the SH coefficients of
    /// `w` (band limit of `w`).
    pub fn energy_gradient(&self, w: &SphereField, with_gradient: bool) -> Result<(f64, Option<SphereField>)> {
        let jets = self.jets_checked(w)?;
        let mut energy = 0.0;
        let mut sens = vec![[0.0; 6]; jets.len()];
        for (n, jet) in jets.iter().enumerate() {
            let wt = self.grid.weight(n);
            let (v, d) = self.interpolate(n, self.rho + jet[0], with_gradient);
            if with_gradient {
                let inp = LocalInput::<Dual<6>>::from_values_slopes(&v, &d);
                let jd: [Dual<6>; 6] = std::array::from_fn(|k| Dual::var(jet[k], k));
                let out = local_geometry(&inp, &jd);
                let e = out.a0_norm2 * out.area_el;
                energy += 0.5 * wt * e.v;
                sens[n] = e.d.map(|x| 0.5 * wt * x);
            } else {
                let inp = LocalInput::<f64>::from_values(&v);
                let out = local_geometry(&inp, jet);
                energy += 0.5 * wt * out.a0_norm2 * out.area_el;
            }
        }
        let grad = with_gradient.then(|| self.grid.jets_adjoint(&sens, w.lmax));
        Ok((energy, grad))
    }
}

#[allow(clippy::too_many_arguments)]
fn node_series(
    conn: &ConnectionField,
    p: &S3Point,
    b: &Mat3,
    grid: &SphereGrid,
    n: usize,
    radii: &[f64],
    xs: &[f64],
    half: f64,
    options: &ShellOptions,
) -> Result<Vec<f64>> {
    let [theta, e1, e2] = grid.frame(n);
    let e = [e1, e2];
    let mut gbs = Gbs::new(options.tol);
    let v0 = tensor::mat_vec(b, &theta);
    let dv0 = [tensor::mat_vec(b, &e1), tensor::mat_vec(b, &e2)];
    let center = geodesic::shoot(conn, p.q(), &v0, &dv0, radii, &mut gbs)?;
    let h = options.fd_step;
    // d/ds_j of the Jacobi fields, per radius: dj[j][i][k] = ∂_{s_j} ξ_i at radius k.
    let mut dj = vec![[[[0.0; 3]; 2]; 2]; radii.len()];
    for (j, ej) in e.iter().enumerate() {
        let mut tracks = Vec::with_capacity(4);
        for s in [-2.0 * h, -h, h, 2.0 * h] {
            let x: Vec3 = std::array::from_fn(|c| theta[c] + s * ej[c]);
            let len = tensor::dot3(&x, &x).sqrt();
            let u = x.map(|c| c / len);
            let dvs: Vec<Vec3> = e
                .iter()
                .map(|ei| {
                    let ue = tensor::dot3(&u, ei);
                    let t: Vec3 = std::array::from_fn(|c| (ei[c] - ue * u[c]) / len);
                    tensor::mat_vec(b, &t)
                })
                .collect();
            let v = tensor::mat_vec(b, &u);
            tracks.push(geodesic::replay(conn, p.q(), &v, &dvs, radii, &center.plan, &mut gbs)?);
        }
        for k in 0..radii.len() {
            for i in 0..2 {
                for c in 0..3 {
                    let f = |t: usize| tracks[t][k].xi[i][c];
                    dj[k][j][i][c] = (8.0 * (f(2) - f(1)) - (f(3) - f(0))) / (12.0 * h);
                }
            }
        }
    }
    let mut table = vec![[0.0; NQ]; radii.len()];
    for (k, s) in center.samples.iter().enumerate() {
        let row = &mut table[k];
        row[Q..Q + 4].copy_from_slice(&s.q);
        row[T..T + 3].copy_from_slice(&s.v);
        for i in 0..2 {
            row[J + 3 * i..J + 3 * i + 3].copy_from_slice(&s.xi[i]);
            let d = s.jacobi_derivative(conn, i)?;
            row[DJ + 3 * i..DJ + 3 * i + 3].copy_from_slice(&d);
        }
        let gamma = conn.gamma(&s.q)?;
        // K_ij = ∇_{s_j} J_i, symmetrised.
        let kij = |i: usize, j: usize| -> Vec3 {
            std::array::from_fn(|c| {
                let mut v = dj[k][j][i][c];
                for a in 0..3 {
                    for bb in 0..3 {
                        v += gamma[c][a][bb] * s.xi[j][a] * s.xi[i][bb];
                    }
                }
                v
            })
        };
        let (k11, k22) = (kij(0, 0), kij(1, 1));
        let (k12, k21) = (kij(0, 1), kij(1, 0));
        row[K..K + 3].copy_from_slice(&k11);
        for c in 0..3 {
            row[K + 3 + c] = 0.5 * (k12[c] + k21[c]);
        }
        row[K + 6..K + 9].copy_from_slice(&k22);
        let g = conn.family().frame_metric(&s.q)?;
        row[GM..GM + 6].copy_from_slice(&[g[0][0], g[0][1], g[0][2], g[1][1], g[1][2], g[2][2]]);
    }
    let mut out = vec![0.0; 2 * NQ * radii.len()];
    let m = radii.len();
    for q in 0..NQ {
        let vals: Vec<f64> = table.iter().map(|r| r[q]).collect();
        let c = cheb_fit(&vals, xs);
        let d = cheb_derivative(&c);
        out[q * m..(q + 1) * m].copy_from_slice(&c);
        out[(NQ + q) * m..(NQ + q + 1) * m].copy_from_slice(&d);
    }
    let _ = half;
    Ok(out)
}

/// Radial quantities at one node, in a scalar type of choice.
struct LocalInput<S> {
    t: [S; 3],
    j: [[S; 3]; 2],
    dj: [[S; 3]; 2],
    k: [[S; 3]; 3],
    g: [S; 6],
}

impl LocalInput<f64> {
    fn from_values(v: &[f64; NQ]) -> Self {
        Self::build(|i| v[i])
    }
}

impl LocalInput<Dual<6>> {
    /// Radial quantities at `r = ρ + w` with `w` the first jet variable.
    fn from_values_slopes(v: &[f64; NQ], d: &[f64; NQ]) -> Self {
        Self::build(|i| Dual::with_slope(v[i], 0, d[i]))
    }
}

impl<S: Real> LocalInput<S> {
    fn build(f: impl Fn(usize) -> S) -> Self {
        Self {
            t: std::array::from_fn(|c| f(T + c)),
            j: std::array::from_fn(|i| std::array::from_fn(|c| f(J + 3 * i + c))),
            dj: std::array::from_fn(|i| std::array::from_fn(|c| f(DJ + 3 * i + c))),
            k: std::array::from_fn(|i| std::array::from_fn(|c| f(K + 3 * i + c))),
            g: std::array::from_fn(|c| f(GM + c)),
        }
    }
}

struct LocalOutput<S> {
    v: [[S; 3]; 2],
    s: [[S; 3]; 3],
    nu: [S; 3],
    t_nu: S,
    gamma: [S; 3],
    a: [S; 3],
    h: S,
    a_norm2: S,
    a0_norm2: S,
    d: S,
    area_el: S,
}

fn sym_full<S: Real>(g: &[S; 6]) -> [[S; 3]; 3] {
    [[g[0], g[1], g[2]], [g[1], g[3], g[4]], [g[2], g[4], g[5]]]
}

fn quad_form<S: Real>(g: &[[S; 3]; 3], a: &[S; 3], b: &[S; 3]) -> S {
    let mut s = S::cst(0.0);
    for i in 0..3 {
        let row = g[i][0] * b[0] + g[i][1] * b[1] + g[i][2] * b[2];
        s = s + a[i] * row;
    }
    s
}

/// 2×2 symmetric `[11, 12, 22]`: `tr(γ⁻¹ X γ⁻¹ X)`.
fn norm2_2<S: Real>(gi: &[S; 3], x: &[S; 3]) -> S {
    let m11 = gi[0] * x[0] + gi[1] * x[1];
    let m12 = gi[0] * x[1] + gi[1] * x[2];
    let m21 = gi[1] * x[0] + gi[2] * x[1];
    let m22 = gi[1] * x[1] + gi[2] * x[2];
    m11 * m11 + (m12 * m21).scale(2.0) + m22 * m22
}

fn local_geometry<S: Real>(x: &LocalInput<S>, jet: &[S; 6]) -> LocalOutput<S> {
    let (w1, w2, w11, w12, w22) = (jet[1], jet[2], jet[3], jet[4], jet[5]);
    let t = &x.t;
    let v: [[S; 3]; 2] = [std::array::from_fn(|c| x.j[0][c] + w1 * t[c]), std::array::from_fn(|c| x.j[1][c] + w2 * t[c])];
    let s: [[S; 3]; 3] = [
        std::array::from_fn(|c| x.k[0][c] + w11 * t[c] + (w1 * x.dj[0][c]).scale(2.0)),
        std::array::from_fn(|c| x.k[1][c] + w12 * t[c] + w2 * x.dj[0][c] + w1 * x.dj[1][c]),
        std::array::from_fn(|c| x.k[2][c] + w22 * t[c] + (w2 * x.dj[1][c]).scale(2.0)),
    ];
    let g = sym_full(&x.g);
    let gamma = [quad_form(&g, &v[0], &v[0]), quad_form(&g, &v[0], &v[1]), quad_form(&g, &v[1], &v[1])];
    // Normal covector and its g-length.
    let n = [
        v[0][1] * v[1][2] - v[0][2] * v[1][1],
        v[0][2] * v[1][0] - v[0][0] * v[1][2],
        v[0][0] * v[1][1] - v[0][1] * v[1][0],
    ];
    let cof: [[S; 3]; 3] = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, e) = ((i + 1) % 3, (i + 2) % 3);
            g[a][c] * g[b][e] - g[a][e] * g[b][c]
        })
    });
    let det_g = g[0][0] * cof[0][0] + g[0][1] * cof[1][0] + g[0][2] * cof[2][0];
    let ginv_n: [S; 3] = std::array::from_fn(|i| (cof[i][0] * n[0] + cof[i][1] * n[1] + cof[i][2] * n[2]) / det_g);
    let nn = n[0] * ginv_n[0] + n[1] * ginv_n[1] + n[2] * ginv_n[2];
    let nlen = nn.sqrt();
    let n_t = n[0] * t[0] + n[1] * t[1] + n[2] * t[2];
    let sign = if n_t.value() >= 0.0 { 1.0 } else { -1.0 };
    let inv = S::cst(sign) / nlen;
    let nu: [S; 3] = std::array::from_fn(|c| ginv_n[c] * inv);
    let a: [S; 3] = std::array::from_fn(|k| -(n[0] * s[k][0] + n[1] * s[k][1] + n[2] * s[k][2]) * inv);
    let det_gamma = gamma[0] * gamma[2] - gamma[1] * gamma[1];
    let gi = [gamma[2] / det_gamma, -gamma[1] / det_gamma, gamma[0] / det_gamma];
    let h = gi[0] * a[0] + (gi[1] * a[1]).scale(2.0) + gi[2] * a[2];
    let half_h = h.scale(0.5);
    let a0 = [a[0] - half_h * gamma[0], a[1] - half_h * gamma[1], a[2] - half_h * gamma[2]];
    LocalOutput {
        v,
        s,
        nu,
        t_nu: n_t * inv,
        gamma,
        a,
        h,
        a_norm2: norm2_2(&gi, &a),
        a0_norm2: norm2_2(&gi, &a0),
        d: (a[0] * a[2] - a[1] * a[1]) / det_gamma,
        area_el: det_gamma.sqrt(),
    }
}

/// Extrinsic geometry of a graph at one node. Matrices are components in the
/// orthonormal frame `(e_θ, e_φ)` of the parameter sphere; vectors are frame
/// components on S³.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeGeometry {
    pub q: Quat,
    /// Unit radial direction `∂_r` of the geodesic.
    pub radial: Vec3,
    pub tangents: [Vec3; 2],
    pub nu: Vec3,
    /// `g(∂_r, ν)`, the factor relating graph and normal speeds.
    pub radial_dot_nu: f64,
    pub metric: Mat3,
    pub gamma: [[f64; 2]; 2],
    pub a: [[f64; 2]; 2],
    pub a0: [[f64; 2]; 2],
    pub h: f64,
    pub a_norm2: f64,
    pub a0_norm2: f64,
    pub d: f64,
    pub area_el: f64,
    /// Christoffel symbols `Γ^k_ij` of the induced metric in the gnomonic
    /// chart of the node.
    pub christoffel: [[[f64; 2]; 2]; 2],
}

fn sym2(x: &[f64; 3]) -> [[f64; 2]; 2] {
    [[x[0], x[1]], [x[1], x[2]]]
}

impl NodeGeometry {
    fn from_local(v: &[f64; NQ], inp: &LocalInput<f64>, out: &LocalOutput<f64>) -> Self {
        let q = quat::normalize(&[v[Q], v[Q + 1], v[Q + 2], v[Q + 3]]);
        let g = sym_full(&inp.g);
        let hh = 0.5 * out.h;
        let a0 = [out.a[0] - hh * out.gamma[0], out.a[1] - hh * out.gamma[1], out.a[2] - hh * out.gamma[2]];
        let gamma = sym2(&out.gamma);
        let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
        let gi = [[gamma[1][1] / det, -gamma[0][1] / det], [-gamma[1][0] / det, gamma[0][0] / det]];
        let sij = |i: usize, j: usize| &out.s[i + j];
        let lower: [[[f64; 2]; 2]; 2] = std::array::from_fn(|l| std::array::from_fn(|i| std::array::from_fn(|j| tensor::quad(&g, sij(i, j), &out.v[l]))));
        let christoffel = std::array::from_fn(|k| std::array::from_fn(|i| std::array::from_fn(|j| gi[k][0] * lower[0][i][j] + gi[k][1] * lower[1][i][j])));
        Self {
            q,
            radial: inp.t,
            tangents: out.v,
            nu: out.nu,
            radial_dot_nu: out.t_nu,
            metric: g,
            gamma,
            a: sym2(&out.a),
            a0: sym2(&a0),
            h: out.h,
            a_norm2: out.a_norm2,
            a0_norm2: out.a0_norm2,
            d: out.d,
            area_el: out.area_el,
            christoffel,
        }
    }

    /// Covariant Hessian `∇²f` of the induced metric from a jet of `f`.
    pub fn hessian(&self, jet: &[f64; 6]) -> [[f64; 2]; 2] {
        let d2 = [[jet[3], jet[4]], [jet[4], jet[5]]];
        std::array::from_fn(|i| std::array::from_fn(|j| d2[i][j] - self.christoffel[0][i][j] * jet[1] - self.christoffel[1][i][j] * jet[2]))
    }

    pub fn gamma_inv(&self) -> [[f64; 2]; 2] {
        let g = &self.gamma;
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]]
    }
}

/// A sampled normal graph over a geodesic sphere.
#[derive(Debug, Clone, Serialize)]
pub struct ImmersedSphere {
    #[serde(skip)]
    pub grid: Arc<SphereGrid>,
    pub family: MetricFamily,
    pub center: S3Point,
    pub rho: f64,
    pub w: SphereField,
    pub nodes: Vec<NodeGeometry>,
}

impl ImmersedSphere {
    pub fn position(&self) -> Vec<S3Point> {
        self.nodes.iter().map(|n| S3Point::new(n.q)).collect()
    }

    pub fn nu(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.nu).collect()
    }

    pub fn gamma(&self) -> Vec<[[f64; 2]; 2]> {
        self.nodes.iter().map(|n| n.gamma).collect()
    }

    pub fn area_el(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.area_el).collect()
    }

    #[allow(non_snake_case)]
    pub fn A(&self) -> Vec<[[f64; 2]; 2]> {
        self.nodes.iter().map(|n| n.a).collect()
    }

    #[allow(non_snake_case)]
    pub fn H(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.h).collect()
    }

    #[allow(non_snake_case)]
    pub fn A0(&self) -> Vec<[[f64; 2]; 2]> {
        self.nodes.iter().map(|n| n.a0).collect()
    }

    #[allow(non_snake_case)]
    pub fn D(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.d).collect()
    }

    pub fn area(&self) -> f64 {
        self.grid.integrate(&self.area_el())
    }

    /// Largest pointwise violations of the identities `H = tr_γ A`,
    /// `H²/4 − D = ½|A°|²`, `g(ν,ν) = 1` and `g(ν, ∂Ψ) = 0`, relative to
    /// `1 + |A|²` for the curvature identities.
    pub fn invariant_residuals(&self) -> SurfaceResiduals {
        let mut r = SurfaceResiduals::default();
        for n in &self.nodes {
            let gi = n.gamma_inv();
            let tr = gi[0][0] * n.a[0][0] + 2.0 * gi[0][1] * n.a[0][1] + gi[1][1] * n.a[1][1];
            let scale = 1.0 + n.a_norm2;
            r.mean_curvature = r.mean_curvature.max((tr - n.h).abs() / scale.sqrt());
            r.integrands = r.integrands.max((n.h * n.h / 4.0 - n.d - 0.5 * n.a0_norm2).abs() / scale);
            r.normal_length = r.normal_length.max((tensor::quad(&n.metric, &n.nu, &n.nu) - 1.0).abs());
            for t in &n.tangents {
                let len = tensor::quad(&n.metric, t, t).sqrt();
                r.normal_tangency = r.normal_tangency.max((tensor::quad(&n.metric, &n.nu, t) / len).abs());
            }
        }
        r
    }

    /// Ambient (R³) components of the `γ`-gradient of `f` on the parameter
    /// sphere, scaled by the area element: `m γ⁻¹ df`.
    fn weighted_gradient(&self, jets: &[[f64; 6]]) -> Vec<[f64; 3]> {
        self.nodes
            .iter()
            .zip(jets)
            .enumerate()
            .map(|(k, (n, j))| {
                let gi = n.gamma_inv();
                let x1 = gi[0][0] * j[1] + gi[0][1] * j[2];
                let x2 = gi[1][0] * j[1] + gi[1][1] * j[2];
                let [_, et, ep] = self.grid.frame(k);
                std::array::from_fn(|a| n.area_el * (x1 * et[a] + x2 * ep[a]))
            })
            .collect()
    }

    /// Nodal values of the Laplace-Beltrami operator of the induced metric
    /// applied to `f` (a function of the parameter sphere).
    pub fn laplacian(&self, f: &SphereField) -> Vec<f64> {
        let jets = self.grid.jets(f);
        let div = self.grid.divergence(&self.weighted_gradient(&jets), self.grid.lmax());
        div.iter().zip(&self.nodes).map(|(d, n)| d / n.area_el).collect()
    }

    /// Same operator as [`Self::laplacian`], as the trace of the pointwise
    /// covariant Hessian.
    pub fn laplacian_local(&self, f: &SphereField) -> Vec<f64> {
        self.grid
            .jets(f)
            .iter()
            .zip(&self.nodes)
            .map(|(j, n)| {
                let (h, gi) = (n.hessian(j), n.gamma_inv());
                gi[0][0] * h[0][0] + 2.0 * gi[0][1] * h[0][1] + gi[1][1] * h[1][1]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SurfaceResiduals {
    pub mean_curvature: f64,
    pub integrands: f64,
    pub normal_length: f64,
    pub normal_tangency: f64,
}

/// Builds the graph of `w` over the geodesic sphere `S_{p,ρ}` on `grid`.
pub fn graph_sphere(family: &MetricFamily, p: &S3Point, rho: f64, w: &SphereField, grid: Arc<SphereGrid>) -> Result<ImmersedSphere> {
    let values = grid.synthesize(w);
    let sup = check_graph(&values, rho)?;
    let options = ShellOptions {
        half_width: (2.0 * sup).max(ShellOptions::default().half_width),
        ..Default::default()
    };
    let shells = RadialShells::build(family, p, rho, grid.clone(), &options)?;
    let nodes = shells.geometry(w)?;
    Ok(ImmersedSphere {
        grid,
        family: family.clone(),
        center: *p,
        rho,
        w: w.clone(),
        nodes,
    })
}

/// The field on the parameter sphere whose value at `Θ` is the sample of `u`
/// at the node image `exp_p(ρΘ)`; grid-node pullback.
pub fn pullback_field(grid: &SphereGrid, u_on_sphere: &[f64]) -> SphereField {
    grid.analyze(u_on_sphere, grid.lmax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::lm_index;
    use std::f64::consts::PI;

    fn round_sphere(rho: f64, lmax: usize) -> ImmersedSphere {
        let grid = Arc::new(SphereGrid::new(lmax));
        graph_sphere(
            &MetricFamily::round(),
            &S3Point::new([0.3, 0.1, -0.5, 0.8]),
            rho,
            &SphereField::zeros(lmax),
            grid,
        )
        .unwrap()
    }

    #[test]
    fn chebyshev_tools() {
        let xs = cheb_nodes(12);
        let f = |x: f64| (1.3 * x).sin() + x * x;
        let c = cheb_fit(&xs.iter().map(|x| f(*x)).collect::<Vec<_>>(), &xs);
        let d = cheb_derivative(&c);
        for x in [-0.9, -0.2, 0.4, 0.99] {
            assert!((clenshaw(&c, x) - f(x)).abs() < 1e-10, "{}", clenshaw(&c, x) - f(x));
            let e = clenshaw(&d, x) - (1.3 * (1.3 * x).cos() + 2.0 * x);
            assert!(e.abs() < 1e-8, "{e}");
        }
    }

    #[test]
    fn round_umbilic_spheres() {
        for rho in [0.3, 0.7, PI / 2.0, 2.2] {
            let s = round_sphere(rho, 8);
            let h = rho.sin().powi(2).recip() * (2.0 * rho).sin();
            let a2 = (2.0 * rho).sin().powi(2) / (2.0 * rho.sin().powi(4));
            for n in &s.nodes {
                assert!((n.h - h).abs() < 1e-9 * h.abs().max(1.0), "{} {}", n.h, h);
                assert!((n.a_norm2 - a2).abs() < 1e-9 * a2.max(1.0));
                assert!(n.a0_norm2.sqrt() < 1e-7);
                assert!((n.radial_dot_nu - 1.0).abs() < 1e-12);
            }
            assert!((s.area() - 4.0 * PI * rho.sin().powi(2)).abs() < 1e-8);
            let r = s.invariant_residuals();
            assert!(r.mean_curvature < 1e-8 && r.integrands < 1e-8 && r.normal_length < 1e-8 && r.normal_tangency < 1e-8);
        }
    }

    #[test]
    fn rho_symmetry() {
        let a = round_sphere(0.9, 8);
        let b = round_sphere(PI - 0.9, 8);
        assert!((a.nodes[5].h.abs() - b.nodes[5].h.abs()).abs() < 1e-8);
        assert!((a.area() - b.area()).abs() < 1e-8);
    }

    #[test]
    fn pullback_laplacian_scaling() {
        let rho = 0.7;
        let lmax = 10;
        let s = round_sphere(rho, lmax);
        let y20 = SphereField::harmonic(lmax, 2, 0);
        let values = s.grid.synthesize(&y20);
        let w = pullback_field(&s.grid, &values);
        assert!((w.get(2, 0) - 1.0).abs() < 1e-12);
        let lap = s.laplacian(&w);
        let lap_s2 = s.grid.synthesize(&w.laplace_beltrami());
        for n in 0..s.grid.len() {
            assert!((lap[n] - lap_s2[n] / rho.sin().powi(2)).abs() < 1e-6 * lap_s2[n].abs().max(1.0));
        }
        let c = pullback_field(&s.grid, &vec![2.5; s.grid.len()]);
        assert!((c.get(0, 0) - 2.5 * (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!(c.coeffs[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn laplacian_forms_agree() {
        let lmax = 12;
        let grid = Arc::new(SphereGrid::new(lmax));
        let fam = MetricFamily::berger_direction(0.2).unwrap();
        let mut w = SphereField::harmonic(lmax, 2, 1).scaled(0.03);
        w.coeffs[lm_index(3, -2)] = 0.02;
        let s = graph_sphere(&fam, &S3Point::identity(), 1.0, &w, grid).unwrap();
        let f = SphereField::harmonic(lmax, 2, 0).axpy(0.5, &SphereField::harmonic(lmax, 1, 1));
        let (a, b) = (s.laplacian(&f), s.laplacian_local(&f));
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-3 * scale, "{x} {y}");
        }
    }

    #[test]
    fn graph_too_large() {
        let grid = Arc::new(SphereGrid::new(8));
        let w = SphereField::harmonic(8, 0, 0).scaled(1.0);
        let r = graph_sphere(&MetricFamily::round(), &S3Point::identity(), 0.3, &w, grid);
        assert!(matches!(r, Err(Error::GraphTooLarge { .. })));
    }

    #[test]
    fn constant_graph_is_larger_sphere() {
        // w = c is the geodesic sphere of radius ρ + c/√(4π)... times Y00.
        let grid = Arc::new(SphereGrid::new(8));
        let c = 0.02;
        let w = SphereField::harmonic(8, 0, 0).scaled(c * (4.0 * PI).sqrt());
        let s = graph_sphere(&MetricFamily::round(), &S3Point::identity(), 0.8, &w, grid).unwrap();
        let r = 0.8 + c;
        for n in &s.nodes {
            assert!((n.h - 2.0 / r.tan()).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let lmax = 8;
        let grid = Arc::new(SphereGrid::new(lmax));
        let fam = MetricFamily::berger_direction(0.1).unwrap();
        let p = S3Point::new([0.2, 0.9, 0.1, -0.3]);
        let shells = RadialShells::build(&fam, &p, 0.9, grid, &ShellOptions::default()).unwrap();
        let mut w = SphereField::zeros(lmax);
        w.coeffs[5] = 0.01;
        w.coeffs[11] = -0.004;
        let (_, g) = shells.energy_gradient(&w, true).unwrap();
        let g = g.unwrap();
        for k in [0, 2, 5, 9, 20] {
            let h = 1e-5;
            let mut wp = w.clone();
            wp.coeffs[k] += h;
            let mut wm = w.clone();
            wm.coeffs[k] -= h;
            let fd = (shells.energy_gradient(&wp, false).unwrap().0 - shells.energy_gradient(&wm, false).unwrap().0) / (2.0 * h);
            assert!((fd - g.coeffs[k]).abs() < 1e-8 * g.norm().max(1e-3), "{k}: {fd} {}", g.coeffs[k]);
        }
    }

    #[test]
    fn left_translation_of_shells() {
        let grid = Arc::new(SphereGrid::new(6));
        let fam = MetricFamily::berger_direction(0.2).unwrap();
        let p = S3Point::new([0.5, -0.5, 0.5, 0.5]);
        let a = RadialShells::build(&fam, &S3Point::identity(), 1.1, grid.clone(), &ShellOptions::default()).unwrap();
        let b = RadialShells::build(&fam, &p, 1.1, grid, &ShellOptions::default()).unwrap();
        let t = a.translated(&p).unwrap();
        let w = SphereField::harmonic(6, 3, 1).scaled(0.01);
        let (gb, gt) = (b.geometry(&w).unwrap(), t.geometry(&w).unwrap());
        for (x, y) in gb.iter().zip(&gt) {
            for i in 0..4 {
                assert!((x.q[i] - y.q[i]).abs() < 1e-12);
            }
            assert!((x.h - y.h).abs() < 1e-12);
        }
    }
}
