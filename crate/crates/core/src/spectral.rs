//! Real spherical harmonics on a Gauss-Legendre grid.
//!
//! Basis: `Y_{l,0} = P̄_l^0(cos θ)`, `Y_{l,m} = √2 P̄_l^m(cos θ) cos(mφ)` and
//! `Y_{l,-m} = √2 P̄_l^m(cos θ) sin(mφ)` for `m > 0`, orthonormal in L²(S²)
//! with no Condon-Shortley phase. Coefficients are stored flat at index
//! `l² + l + m`, so the degree-one harmonics proportional to `x, y, z` sit at
//! indices 3, 1, 2.
//!
//! Jets of a field at a node are `[f, f_1, f_2, f_11, f_12, f_22]` in the
//! orthonormal frame `(e_θ, e_φ)`, with the covariant Hessian of the unit
//! sphere.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result};

pub fn lm_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Number of coefficients up to degree `lmax`.
pub fn ncoeffs(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// `(l, m)` for every flat index up to `lmax`, in storage order.
pub fn degrees(lmax: usize) -> impl Iterator<Item = (usize, i64)> {
    (0..=lmax).flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m)))
}

fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Gauss-Legendre nodes and weights on [-1, 1], nodes descending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre grid with `(lmax+1)` colatitudes and `(2 lmax + 2)`
/// longitudes, plus tabulated associated Legendre functions.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    lmax: usize,
    nlat: usize,
    nlon: usize,
    theta: Vec<f64>,
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
    phi: Vec<f64>,
    wlat: Vec<f64>,
    // Per latitude, triangular (l, m >= 0) tables of P̄, dP̄/dθ, d²P̄/dθ².
    p: Vec<f64>,
    dp: Vec<f64>,
    d2p: Vec<f64>,
    // Per longitude and m: √2 cos(mφ), √2 sin(mφ) (plain 1 for m = 0).
    cos_m: Vec<f64>,
    sin_m: Vec<f64>,
}

impl SphereGrid {
    pub fn new(lmax: usize) -> Self {
        assert!(lmax >= 1, "grid band limit must be at least 1");
        let nlat = lmax + 1;
        let nlon = 2 * lmax + 2;
        let (x, w) = gauss_legendre(nlat);
        let theta: Vec<f64> = x.iter().map(|z| z.acos()).collect();
        let cos_t = x.clone();
        let sin_t: Vec<f64> = x.iter().map(|z| (1.0 - z * z).sqrt()).collect();
        let phi: Vec<f64> = (0..nlon).map(|j| 2.0 * PI * j as f64 / nlon as f64).collect();
        let wlat: Vec<f64> = w.iter().map(|wi| wi * 2.0 * PI / nlon as f64).collect();
        let nt = tri(lmax, lmax) + 1;
        let mut p = vec![0.0; nlat * nt];
        let mut dp = vec![0.0; nlat * nt];
        let mut d2p = vec![0.0; nlat * nt];
        for i in 0..nlat {
            let (c, s) = (cos_t[i], sin_t[i]);
            let row = &mut p[i * nt..(i + 1) * nt];
            legendre_row(lmax, c, s, row);
            for l in 0..=lmax {
                for m in 0..=l {
                    let plm = row[tri(l, m)];
                    let prev = if l > m { row[tri(l - 1, m)] } else { 0.0 };
                    let a = if l > m {
                        (((2 * l + 1) * (l - m) * (l + m)) as f64 / (2 * l - 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                    let d1 = (l as f64 * c * plm - a * prev) / s;
                    let d2 = -c / s * d1 + ((m * m) as f64 / (s * s) - (l * (l + 1)) as f64) * plm;
                    dp[i * nt + tri(l, m)] = d1;
                    d2p[i * nt + tri(l, m)] = d2;
                }
            }
        }
        let mut cos_m = vec![0.0; nlon * (lmax + 1)];
        let mut sin_m = vec![0.0; nlon * (lmax + 1)];
        for j in 0..nlon {
            for m in 0..=lmax {
                let f = if m == 0 { 1.0 } else { 2f64.sqrt() };
                cos_m[j * (lmax + 1) + m] = f * (m as f64 * phi[j]).cos();
                sin_m[j * (lmax + 1) + m] = f * (m as f64 * phi[j]).sin();
            }
        }
        Self {
            lmax,
            nlat,
            nlon,
            theta,
            cos_t,
            sin_t,
            phi,
            wlat,
            p,
            dp,
            d2p,
            cos_m,
            sin_m,
        }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(θ, φ)` of node `n`.
    pub fn angles(&self, n: usize) -> (f64, f64) {
        (self.theta[n / self.nlon], self.phi[n % self.nlon])
    }

    /// Quadrature weight of node `n`; the weights sum to 4π.
    pub fn weight(&self, n: usize) -> f64 {
        self.wlat[n / self.nlon]
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.weight(n)).collect()
    }

    /// Unit direction `Θ`, and the orthonormal tangent vectors `e_θ`, `e_φ`
    /// at node `n`; `e_θ × e_φ = Θ`.
    pub fn frame(&self, n: usize) -> [[f64; 3]; 3] {
        let i = n / self.nlon;
        let (c, s) = (self.cos_t[i], self.sin_t[i]);
        let (sp, cp) = self.phi[n % self.nlon].sin_cos();
        [[s * cp, s * sp, c], [c * cp, c * sp, -s], [-sp, cp, 0.0]]
    }

    fn nt(&self) -> usize {
        tri(self.lmax, self.lmax) + 1
    }

    /// Nodal values of `f`.
    pub fn synthesize(&self, f: &SphereField) -> Vec<f64> {
        self.synth(f, false).into_iter().map(|j| j[0]).collect()
    }

    /// Nodal jets `[f, f_1, f_2, f_11, f_12, f_22]` of `f`.
    pub fn jets(&self, f: &SphereField) -> Vec<[f64; 6]> {
        self.synth(f, true)
    }

    fn synth(&self, f: &SphereField, derivs: bool) -> Vec<[f64; 6]> {
        let lf = f.lmax.min(self.lmax);
        let nt = self.nt();
        let lm1 = self.lmax + 1;
        let mut out = vec![[0.0; 6]; self.len()];
        // Per m: cos/sin parts for P̄, dP̄, d²P̄.
        let mut a = vec![[0.0; 6]; lf + 1];
        for i in 0..self.nlat {
            let (p, dp, d2p) = (&self.p[i * nt..(i + 1) * nt], &self.dp[i * nt..(i + 1) * nt], &self.d2p[i * nt..(i + 1) * nt]);
            for (m, am) in a.iter_mut().enumerate() {
                *am = [0.0; 6];
                for l in m..=lf {
                    let t = tri(l, m);
                    let cc = f.coeffs[lm_index(l, m as i64)];
                    let cs = if m > 0 { f.coeffs[lm_index(l, -(m as i64))] } else { 0.0 };
                    am[0] += cc * p[t];
                    am[1] += cs * p[t];
                    if derivs {
                        am[2] += cc * dp[t];
                        am[3] += cs * dp[t];
                        am[4] += cc * d2p[t];
                        am[5] += cs * d2p[t];
                    }
                }
            }
            let (c, s) = (self.cos_t[i], self.sin_t[i]);
            for j in 0..self.nlon {
                let cm = &self.cos_m[j * lm1..];
                let sm = &self.sin_m[j * lm1..];
                let (mut v, mut vt, mut vp, mut vtt, mut vtp, mut vpp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for (m, am) in a.iter().enumerate() {
                    let (co, si) = (cm[m], sm[m]);
                    let mf = m as f64;
                    v += am[0] * co + am[1] * si;
                    if derivs {
                        vp += mf * (-am[0] * si + am[1] * co);
                        vpp -= mf * mf * (am[0] * co + am[1] * si);
                        vt += am[2] * co + am[3] * si;
                        vtp += mf * (-am[2] * si + am[3] * co);
                        vtt += am[4] * co + am[5] * si;
                    }
                }
                let o = &mut out[i * self.nlon + j];
                if derivs {
                    let cot = c / s;
                    *o = [v, vt, vp / s, vtt, (vtp - cot * vp) / s, vpp / (s * s) + cot * vt];
                } else {
                    o[0] = v;
                }
            }
        }
        out
    }

    /// Adjoint of [`SphereGrid::jets`]: returns `g_lm = Σ_n Σ_k s[n][k] ·
    /// jet_k(Y_lm)(n)` for degrees up to `lmax`. No quadrature weights are
    /// applied.
    pub fn jets_adjoint(&self, sens: &[[f64; 6]], lmax: usize) -> SphereField {
        assert_eq!(sens.len(), self.len());
        let lf = lmax.min(self.lmax);
        let nt = self.nt();
        let lm1 = self.lmax + 1;
        let mut out = SphereField::zeros(lmax);
        let mut a = vec![[0.0; 6]; lf + 1];
        for i in 0..self.nlat {
            let (c, s) = (self.cos_t[i], self.sin_t[i]);
            let cot = c / s;
            for am in a.iter_mut() {
                *am = [0.0; 6];
            }
            for j in 0..self.nlon {
                let sk = &sens[i * self.nlon + j];
                // Sensitivities with respect to the polar partials.
                let sf = sk[0];
                let st = sk[1] + cot * sk[5];
                let sp = sk[2] / s - cot / s * sk[4];
                let stt = sk[3];
                let stp = sk[4] / s;
                let spp = sk[5] / (s * s);
                let cm = &self.cos_m[j * lm1..];
                let sm = &self.sin_m[j * lm1..];
                for (m, am) in a.iter_mut().enumerate() {
                    let (co, si) = (cm[m], sm[m]);
                    let mf = m as f64;
                    am[0] += sf * co - mf * sp * si - mf * mf * spp * co;
                    am[1] += sf * si + mf * sp * co - mf * mf * spp * si;
                    am[2] += st * co - mf * stp * si;
                    am[3] += st * si + mf * stp * co;
                    am[4] += stt * co;
                    am[5] += stt * si;
                }
            }
            let (p, dp, d2p) = (&self.p[i * nt..(i + 1) * nt], &self.dp[i * nt..(i + 1) * nt], &self.d2p[i * nt..(i + 1) * nt]);
            for (m, am) in a.iter().enumerate() {
                for l in m..=lf {
                    let t = tri(l, m);
                    out.coeffs[lm_index(l, m as i64)] += am[0] * p[t] + am[2] * dp[t] + am[4] * d2p[t];
                    if m > 0 {
                        out.coeffs[lm_index(l, -(m as i64))] += am[1] * p[t] + am[3] * dp[t] + am[5] * d2p[t];
                    }
                }
            }
        }
        out
    }

    /// Quadrature projection of nodal values onto degrees `<= lmax`.
    pub fn analyze(&self, values: &[f64], lmax: usize) -> SphereField {
        let sens: Vec<[f64; 6]> = values.iter().enumerate().map(|(n, v)| [v * self.weight(n), 0.0, 0.0, 0.0, 0.0, 0.0]).collect();
        self.jets_adjoint(&sens, lmax)
    }

    /// Quadrature of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().enumerate().map(|(n, v)| v * self.weight(n)).sum()
    }

    /// Ambient (R³) components of the S² gradient of `f` at each node.
    pub fn gradient_ambient(&self, f: &SphereField) -> Vec<[f64; 3]> {
        self.jets(f)
            .iter()
            .enumerate()
            .map(|(n, j)| {
                let [_, et, ep] = self.frame(n);
                std::array::from_fn(|a| j[1] * et[a] + j[2] * ep[a])
            })
            .collect()
    }

    /// S² divergence of a tangent field given by nodal ambient components,
    /// each component resolved to degree `lmax` by quadrature.
    pub fn divergence(&self, v: &[[f64; 3]], lmax: usize) -> Vec<f64> {
        let mut div = vec![0.0; self.len()];
        for a in 0..3 {
            let comp: Vec<f64> = v.iter().map(|x| x[a]).collect();
            let field = self.analyze(&comp, lmax);
            for (n, j) in self.jets(&field).iter().enumerate() {
                let [_, et, ep] = self.frame(n);
                div[n] += j[1] * et[a] + j[2] * ep[a];
            }
        }
        div
    }
}

fn legendre_row(lmax: usize, c: f64, s: f64, row: &mut [f64]) {
    row[0] = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            row[tri(m, m)] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s * row[tri(m - 1, m - 1)];
        }
        if m < lmax {
            row[tri(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * c * row[tri(m, m)];
        }
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            row[tri(l, m)] = a * (c * row[tri(l - 1, m)] - b * row[tri(l - 2, m)]);
        }
    }
}

/// A band-limited real function on S² in the real SH basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereField {
    pub lmax: usize,
    pub coeffs: Vec<f64>,
}

impl SphereField {
    pub fn zeros(lmax: usize) -> Self {
        Self {
            lmax,
            coeffs: vec![0.0; ncoeffs(lmax)],
        }
    }

    pub fn from_coeffs(lmax: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), ncoeffs(lmax), "coefficient count does not match lmax");
        Self { lmax, coeffs }
    }

    /// The single harmonic `Y_{l,m}`.
    pub fn harmonic(lmax: usize, l: usize, m: i64) -> Self {
        assert!(l <= lmax && m.unsigned_abs() as usize <= l);
        let mut f = Self::zeros(lmax);
        f.coeffs[lm_index(l, m)] = 1.0;
        f
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        if l > self.lmax {
            0.0
        } else {
            self.coeffs[lm_index(l, m)]
        }
    }

    /// Same function with band limit `lmax` (truncating or zero padding).
    pub fn resized(&self, lmax: usize) -> Self {
        let mut out = Self::zeros(lmax);
        let n = ncoeffs(lmax.min(self.lmax));
        out.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        out
    }

    /// L²(S²) inner product (fields may differ in band limit).
    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lmax: self.lmax,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self + s * other`, with the band limit of `self`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for (o, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *o += s * b;
        }
        out
    }

    fn map_degrees(&self, f: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        for (c, (l, _)) in out.coeffs.iter_mut().zip(degrees(self.lmax)) {
            *c *= f(l);
        }
        out
    }

    pub fn laplace_beltrami(&self) -> Self {
        self.map_degrees(|l| -((l * (l + 1)) as f64))
    }

    /// L²-orthogonal projector onto K^⊥, the complement of degrees 0 and 1.
    pub fn project_kperp(&self) -> Self {
        self.map_degrees(|l| if l <= 1 { 0.0 } else { 1.0 })
    }

    /// Squared L² norm of the degree 0 and 1 part.
    pub fn kernel_energy(&self) -> f64 {
        self.coeffs.iter().take(4).map(|c| c * c).sum()
    }

    /// `Δ(Δ+2)/(2 sin⁴ρ)`, the second variation of the unperturbed energy at
    /// the geodesic sphere of radius `rho` in the L²(Σ) pairing.
    pub fn apply_i0pp(&self, rho: f64) -> Self {
        let s4 = rho.sin().powi(4);
        self.map_degrees(|l| i0pp_symbol(l) / (2.0 * s4))
    }

    /// Inverse of [`SphereField::apply_i0pp`] on K^⊥.
    pub fn invert_i0pp(&self, rho: f64) -> Result<Self> {
        let energy = self.kernel_energy();
        if energy > 1e-12 {
            return Err(Error::KernelComponentPresent { energy });
        }
        let s4 = rho.sin().powi(4);
        Ok(self.map_degrees(|l| if l <= 1 { 0.0 } else { 2.0 * s4 / i0pp_symbol(l) }))
    }
}

/// Spectral symbol `l(l+1)(l(l+1) − 2)` of `Δ(Δ+2)`.
pub fn i0pp_symbol(l: usize) -> f64 {
    let k = (l * (l + 1)) as f64;
    k * (k - 2.0)
}

/// Orthonormal basis `q_0 = 1/√(4π)` and `q_1, q_2, q_3 ∝ x, y, z` of the
/// kernel of `Δ(Δ+2)`.
pub fn kernel_basis(lmax: usize) -> [SphereField; 4] {
    [
        SphereField::harmonic(lmax, 0, 0),
        SphereField::harmonic(lmax, 1, 1),
        SphereField::harmonic(lmax, 1, -1),
        SphereField::harmonic(lmax, 1, 0),
    ]
}

/// Flat indices of the kernel basis, in the order of [`kernel_basis`].
pub const KERNEL_INDICES: [usize; 4] = [0, 3, 1, 2];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_field(lmax: usize, seed: u64) -> SphereField {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let coeffs = (0..ncoeffs(lmax))
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        SphereField::from_coeffs(lmax, coeffs)
    }

    #[test]
    fn total_weight_is_four_pi() {
        for lmax in [8, 16, 24] {
            let g = SphereGrid::new(lmax);
            let total: f64 = g.weights().iter().sum();
            assert!((total - 4.0 * PI).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn quadrature_orthonormality() {
        let lmax = 10;
        let g = SphereGrid::new(lmax);
        let vals: Vec<Vec<f64>> = (0..ncoeffs(lmax))
            .map(|k| g.synthesize(&SphereField::harmonic(lmax, 0, 0).tap_set(k)))
            .collect();
        for a in 0..vals.len() {
            for b in 0..=a {
                let ip: f64 = (0..g.len()).map(|n| vals[a][n] * vals[b][n] * g.weight(n)).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "({a},{b}) {ip}");
            }
        }
    }

    impl SphereField {
        fn tap_set(mut self, k: usize) -> Self {
            self.coeffs.iter_mut().for_each(|c| *c = 0.0);
            self.coeffs[k] = 1.0;
            self
        }
    }

    #[test]
    fn degree_one_harmonics_are_coordinates() {
        let g = SphereGrid::new(8);
        let c = (3.0 / (4.0 * PI)).sqrt();
        let fx = g.synthesize(&SphereField::harmonic(8, 1, 1));
        let fy = g.synthesize(&SphereField::harmonic(8, 1, -1));
        let fz = g.synthesize(&SphereField::harmonic(8, 1, 0));
        for n in 0..g.len() {
            let [x, _, _] = g.frame(n);
            assert!((fx[n] - c * x[0]).abs() < 1e-14);
            assert!((fy[n] - c * x[1]).abs() < 1e-14);
            assert!((fz[n] - c * x[2]).abs() < 1e-14);
        }
    }

    #[test]
    fn jets_match_finite_differences_in_gnomonic_chart() {
        // The jet is the 2-jet at 0 of s ↦ f(normalize(Θ + s1 e_θ + s2 e_φ)).
        let lmax = 6;
        let g = SphereGrid::new(lmax);
        let f = random_field(lmax, 3);
        let eval = |x: [f64; 3]| -> f64 {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let (ct, th) = (x[2] / r, (x[2] / r).acos());
            let ph = x[1].atan2(x[0]);
            let mut v = 0.0;
            for (l, m) in degrees(lmax) {
                let mut row = vec![0.0; tri(lmax, lmax) + 1];
                legendre_row(lmax, ct, th.sin(), &mut row);
                let p = row[tri(l, m.unsigned_abs() as usize)];
                let t = match m {
                    0 => 1.0,
                    m if m > 0 => 2f64.sqrt() * (m as f64 * ph).cos(),
                    m => 2f64.sqrt() * ((-m) as f64 * ph).sin(),
                };
                v += f.coeffs[lm_index(l, m)] * p * t;
            }
            v
        };
        let jets = g.jets(&f);
        for n in [0, 7, 25, g.len() - 3] {
            let [th, e1, e2] = g.frame(n);
            let at = |s1: f64, s2: f64| eval(std::array::from_fn(|a| th[a] + s1 * e1[a] + s2 * e2[a]));
            let h = 1e-4;
            let f1 = (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h);
            let f2 = (at(0.0, h) - at(0.0, -h)) / (2.0 * h);
            let f11 = (at(h, 0.0) - 2.0 * at(0.0, 0.0) + at(-h, 0.0)) / (h * h);
            let f22 = (at(0.0, h) - 2.0 * at(0.0, 0.0) + at(0.0, -h)) / (h * h);
            let f12 = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
            let j = jets[n];
            assert!((j[0] - at(0.0, 0.0)).abs() < 1e-12);
            for (a, b) in [(j[1], f1), (j[2], f2)] {
                assert!((a - b).abs() < 1e-6, "{a} {b}");
            }
            for (a, b) in [(j[3], f11), (j[4], f12), (j[5], f22)] {
                assert!((a - b).abs() < 1e-5, "{a} {b}");
            }
        }
    }

    #[test]
    fn laplacian_of_jets_matches_spectrum() {
        let lmax = 12;
        let g = SphereGrid::new(lmax);
        let f = random_field(lmax, 11);
        let lap = g.synthesize(&f.laplace_beltrami());
        for (n, j) in g.jets(&f).iter().enumerate() {
            assert!((j[3] + j[5] - lap[n]).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let g = SphereGrid::new(10);
        let f = random_field(6, 5).resized(10);
        let div = g.divergence(&g.gradient_ambient(&f), 10);
        let lap = g.synthesize(&f.laplace_beltrami());
        for n in 0..g.len() {
            assert!((div[n] - lap[n]).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_examples() {
        let y11 = SphereField::harmonic(8, 1, 1);
        assert_eq!(y11.laplace_beltrami(), y11.scaled(-2.0));
        let y32 = SphereField::harmonic(8, 3, 2);
        assert_eq!(y32.laplace_beltrami(), y32.scaled(-12.0));
        assert_eq!(SphereField::harmonic(8, 0, 0).laplace_beltrami().norm(), 0.0);
        let f = SphereField::harmonic(8, 0, 0).axpy(1.0, &SphereField::harmonic(8, 2, 0));
        assert_eq!(f.project_kperp(), SphereField::harmonic(8, 2, 0));
        let y2 = SphereField::harmonic(8, 2, 1);
        assert!((y2.apply_i0pp(PI / 2.0).get(2, 1) - 12.0).abs() < 1e-12);
        assert!((SphereField::harmonic(8, 2, 0).invert_i0pp(PI / 2.0).unwrap().get(2, 0) - 1.0 / 12.0).abs() < 1e-15);
        let rho = (0.5f64.sqrt().sqrt()).asin();
        let inv = SphereField::harmonic(8, 2, 1).scaled(24.0).invert_i0pp(rho).unwrap();
        assert!((inv.get(2, 1) - 1.0).abs() < 1e-12);
        assert!(matches!(y11.invert_i0pp(1.0), Err(Error::KernelComponentPresent { .. })));
        assert_eq!(SphereField::zeros(8).invert_i0pp(1.0).unwrap().norm(), 0.0);
    }

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilated() {
        let lmax = 24;
        let g = SphereGrid::new(lmax);
        let basis = kernel_basis(lmax);
        let vals: Vec<Vec<f64>> = basis.iter().map(|q| g.synthesize(q)).collect();
        for a in 0..4 {
            for b in 0..4 {
                let ip = g.integrate(&(0..g.len()).map(|n| vals[a][n] * vals[b][n]).collect::<Vec<_>>());
                assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
            assert!(basis[a].apply_i0pp(1.0).norm() < 1e-15);
            assert_eq!(basis[a].coeffs[KERNEL_INDICES[a]], 1.0);
        }
        assert!((vals[0][0] - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spectrum_of_biharmonic_symbol() {
        assert_eq!(i0pp_symbol(0), 0.0);
        assert_eq!(i0pp_symbol(1), 0.0);
        assert_eq!(i0pp_symbol(2), 24.0);
        let f = SphereField::harmonic(16, 2, -2);
        let lap = f.laplace_beltrami();
        let dd = lap.laplace_beltrami().axpy(2.0, &lap);
        assert!((dd.get(2, -2) - 24.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn analysis_synthesis_roundtrip(seed in any::<u64>(), lmax in 2usize..14) {
            let g = SphereGrid::new(lmax);
            let f = random_field(lmax, seed);
            let back = g.analyze(&g.synthesize(&f), lmax);
            for (a, b) in f.coeffs.iter().zip(&back.coeffs) {
                prop_assert!((a - b).abs() < 1e-11);
            }
        }

        #[test]
        fn parseval(seed in any::<u64>(), lmax in 2usize..14) {
            let g = SphereGrid::new(lmax);
            let f = random_field(lmax, seed);
            let v = g.synthesize(&f);
            let q = g.integrate(&v.iter().map(|x| x * x).collect::<Vec<_>>());
            prop_assert!((q - f.dot(&f)).abs() < 1e-10);
        }

        #[test]
        fn jets_adjoint_is_adjoint(seed in any::<u64>()) {
            let g = SphereGrid::new(7);
            let f = random_field(7, seed);
            let s: Vec<[f64; 6]> = (0..g.len())
                .map(|n| std::array::from_fn(|k| ((n * 7 + k * 13 + seed as usize % 17) % 11) as f64 - 5.0))
                .collect();
            let lhs: f64 = g.jets(&f).iter().zip(&s).map(|(j, s)| (0..6).map(|k| j[k] * s[k]).sum::<f64>()).sum();
            let rhs = g.jets_adjoint(&s, 7).dot(&f);
            prop_assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn projector_is_idempotent_and_self_adjoint(a in any::<u64>(), b in any::<u64>()) {
            let f = random_field(9, a);
            let h = random_field(9, b);
            let pf = f.project_kperp();
            prop_assert_eq!(pf.project_kperp(), pf.clone());
            prop_assert!((pf.dot(&h) - f.dot(&h.project_kperp())).abs() < 1e-13);
        }

        #[test]
        fn i0pp_inverse_roundtrip(seed in any::<u64>(), rho in 0.1f64..3.0) {
            let f = random_field(12, seed).project_kperp();
            let back = f.invert_i0pp(rho).unwrap().apply_i0pp(rho);
            for (x, y) in f.coeffs.iter().zip(&back.coeffs) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            let sym = f.apply_i0pp(PI - rho);
            let out = f.apply_i0pp(rho);
            for (x, y) in sym.coeffs.iter().zip(&out.coeffs) {
                prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
            }
        }
    }
}
