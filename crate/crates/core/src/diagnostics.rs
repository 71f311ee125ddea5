//! Diagnostics of how far a metric family is from the round one: the order in
//! `ε` at which `|Ric̊|²` starts, constancy of curvature, the normal-coordinate
//! expansion of the metric and detection of homotheties.

use serde::Serialize;

use crate::curvature::{self, CurvatureBundle};
use crate::fit;
use crate::geodesic::{self, ConnectionField};
use crate::integrate::Gbs;
use crate::metric::MetricFamily;
use crate::quat::S3Point;
use crate::tensor::{self, kulkarni_nomizu, Mat3, Vec3};
use crate::{Error, Result};

/// Smallest `ε`-coefficient of `|Ric̊|²` counted as nonzero.
pub const COEFF_FLOOR: f64 = 1e-10;
/// The same floor for metrics whose curvature comes from finite differences.
pub const COEFF_FLOOR_FD: f64 = 1e-6;
/// Largest constant-curvature residual and scalar spread of a homothety.
pub const HOMOTHETY_TOL: f64 = 1e-6;
/// Highest power of `ε` fitted in [`degeneracy_order`].
pub const MAX_FIT_POWER: usize = 10;

/// Default probe values of `ε`: 24 values, symmetric, up to `|ε| = 0.03`.
pub fn default_eps_probe() -> Vec<f64> {
    (1..=12).flat_map(|k| [-0.0025 * k as f64, 0.0025 * k as f64]).collect()
}

/// Detection floor suited to how the curvature of `family` is computed.
pub fn coefficient_floor(family: &MetricFamily) -> f64 {
    if family.is_left_invariant() {
        COEFF_FLOOR
    } else {
        COEFF_FLOOR_FD
    }
}

/// Default probe points.
pub fn default_points() -> Vec<S3Point> {
    vec![
        S3Point::new([0.9, 0.2, -0.3, 0.25]),
        S3Point::new([0.2, 0.4, -0.7, 0.5]),
        S3Point::new([-0.6, 0.1, 0.3, -0.7]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyReport {
    /// Lowest power of `ε` with coefficient above [`COEFF_FLOOR`]; `None`
    /// means infinite.
    pub k0: Option<usize>,
    /// Coefficient of `ε^k0`.
    pub coefficient: Option<f64>,
    /// Fitted coefficients of `ε¹..ε^K`.
    pub coefficients: Vec<f64>,
    pub probe_eps: Vec<f64>,
    pub point: S3Point,
    pub floor: f64,
}

/// Polynomial fit of `ε ↦ |Ric̊(g₀ + εh)|²` at `pt`, with the floor of
/// [`coefficient_floor`].
pub fn degeneracy_order(family: &MetricFamily, pt: &S3Point, eps_probe: &[f64]) -> Result<DegeneracyReport> {
    degeneracy_order_with_floor(family, pt, eps_probe, coefficient_floor(family))
}

pub fn degeneracy_order_with_floor(family: &MetricFamily, pt: &S3Point, eps_probe: &[f64], floor: f64) -> Result<DegeneracyReport> {
    if eps_probe.len() < 5 {
        return Err(Error::FitIllConditioned(format!("{} probe values, need 5", eps_probe.len())));
    }
    let values: Vec<f64> = eps_probe
        .iter()
        .map(|e| curvature::curvature_bundle(&family.with_epsilon(*e), pt).map(|b| b.ric0_norm2))
        .collect::<Result<_>>()?;
    let top = MAX_FIT_POWER.min(eps_probe.len() - 1);
    let powers: Vec<i32> = (1..=top as i32).collect();
    let f = fit::power_fit(eps_probe, &values, &powers)?;
    let first = f.coeffs.iter().position(|c| c.abs() > floor);
    Ok(DegeneracyReport {
        k0: first.map(|i| i + 1),
        coefficient: first.map(|i| f.coeffs[i]),
        coefficients: f.coeffs,
        probe_eps: eps_probe.to_vec(),
        point: *pt,
        floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstancyReport {
    /// `max |Riem − (R(p̄)/12) g⊙g|` over the points, `p̄` the first.
    pub residual: f64,
    /// `max R − min R` over the points.
    pub scalar_spread: f64,
    pub reference_scalar: f64,
}

fn bundles(family: &MetricFamily, pts: &[S3Point]) -> Result<Vec<CurvatureBundle>> {
    pts.iter().map(|p| curvature::curvature_bundle(family, p)).collect()
}

/// How far `family` is from constant sectional curvature on `pts`.
pub fn constant_curvature_residual(family: &MetricFamily, pts: &[S3Point]) -> Result<ConstancyReport> {
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("constancy needs at least two points".into()));
    }
    let b = bundles(family, pts)?;
    let r0 = b[0].scalar;
    let residual = b
        .iter()
        .map(|c| c.riem.sub(&kulkarni_nomizu(&c.metric, &c.metric).scaled(r0 / 12.0)).max_abs())
        .fold(0.0, f64::max);
    let (lo, hi) = b
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), c| (a.min(c.scalar), z.max(c.scalar)));
    Ok(ConstancyReport {
        residual,
        scalar_spread: hi - lo,
        reference_scalar: r0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomothetyReport {
    /// `√(6/R)` when the metric is a constant multiple of the round one.
    pub r: Option<f64>,
    pub certificate: ConstancyReport,
}

pub fn homothety_detect(family: &MetricFamily, pts: &[S3Point]) -> Result<HomothetyReport> {
    let c = constant_curvature_residual(family, pts)?;
    let r = (c.residual < HOMOTHETY_TOL && c.scalar_spread < HOMOTHETY_TOL && c.reference_scalar > 0.0).then(|| (6.0 / c.reference_scalar).sqrt());
    Ok(HomothetyReport { r, certificate: c })
}

/// Radius of the sample ball in normal coordinates.
pub const BALL_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalExpansion {
    pub order: usize,
    /// Fitted `c[r][s][i][j]`: coefficient of `x^i x^j` in `g_rs`, symmetric
    /// in `(i, j)`.
    pub quadratic: [[Mat3; 3]; 3],
    /// `−(1/3) R_{irjs}` from the curvature tensor.
    pub predicted: [[Mat3; 3]; 3],
    /// Largest `|quadratic − predicted|`.
    pub coefficient_error: f64,
    /// Largest misfit of the polynomial on the samples.
    pub residual: f64,
    /// Largest `|exp⁻¹(exp x) − x|` on the samples.
    pub inversion_residual: f64,
}

fn ball_design() -> Vec<Vec3> {
    // Fibonacci directions and their antipodes on three shells.
    let n = 30;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut dirs: Vec<Vec3> = Vec::with_capacity(2 * n);
    for k in 0..n {
        let z = 1.0 - (2 * k + 1) as f64 / n as f64;
        let r = (1.0 - z * z).sqrt();
        let t = golden * k as f64;
        let d = [r * t.cos(), r * t.sin(), z];
        dirs.push(d);
        dirs.push(d.map(|c| -c));
    }
    [1.0, 0.7, 0.4]
        .iter()
        .flat_map(|r| dirs.iter().map(move |d| d.map(|c| c * r * BALL_RADIUS)))
        .collect()
}

fn monomials(order: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for deg in 2..=order as u32 {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                out.push([a, b, deg - a - b]);
            }
        }
    }
    out
}

/// Expands the metric in normal coordinates at `q` up to `order` (2 to 4),
/// with respect to a `g`-orthonormal basis `e_a = G^{-1/2} E_a`.
pub fn normal_coordinate_expansion(family: &MetricFamily, q: &S3Point, order: usize) -> Result<NormalExpansion> {
    if !(2..=4).contains(&order) {
        return Err(Error::InvalidArgument("expansion order must be 2, 3 or 4".into()));
    }
    let conn = ConnectionField::new(family)?;
    let g0 = family.frame_metric(q.q())?;
    let b = tensor::sym_inv_sqrt(&g0);
    let basis: [Vec3; 3] = std::array::from_fn(|a| std::array::from_fn(|c| b[c][a]));
    let design = ball_design();
    let mut gbs = Gbs::new(geodesic::TOL);
    let mut samples: Vec<[[f64; 3]; 3]> = Vec::with_capacity(design.len());
    let mut inversion_residual = 0.0f64;
    for x in &design {
        let v: Vec3 = std::array::from_fn(|c| (0..3).map(|a| x[a] * basis[a][c]).sum());
        let shot = geodesic::shoot(&conn, q.q(), &v, &basis, &[1.0], &mut gbs)?;
        let end = &shot.samples[0];
        let g = family.frame_metric(&end.q)?;
        samples.push(std::array::from_fn(|r| std::array::from_fn(|s| tensor::quad(&g, &end.xi[r], &end.xi[s]))));
        let back = geodesic::exp_inverse(family, q, &S3Point::new(end.q))?;
        // Back to orthonormal components: x = G^{1/2} v.
        let binv = tensor::inv3(&b);
        let xb = tensor::mat_vec(&binv, &back);
        inversion_residual = inversion_residual.max((0..3).map(|a| (xb[a] - x[a]).abs()).fold(0.0, f64::max));
    }
    let mons = monomials(order);
    let rows: Vec<Vec<f64>> = design
        .iter()
        .map(|x| {
            mons.iter()
                .map(|m| x[0].powi(m[0] as i32) * x[1].powi(m[1] as i32) * x[2].powi(m[2] as i32))
                .collect()
        })
        .collect();
    let mut quadratic = [[[[0.0; 3]; 3]; 3]; 3];
    let mut residual = 0.0f64;
    for r in 0..3 {
        for s in r..3 {
            let y: Vec<f64> = samples.iter().map(|g| g[r][s] - if r == s { 1.0 } else { 0.0 }).collect();
            let f = fit::least_squares(&rows, &y)?;
            for (row, yy) in rows.iter().zip(&y) {
                let pred: f64 = row.iter().zip(&f.coeffs).map(|(a, c)| a * c).sum();
                residual = residual.max((pred - yy).abs());
            }
            for (m, c) in mons.iter().zip(&f.coeffs) {
                if m.iter().sum::<u32>() != 2 {
                    continue;
                }
                let idx: Vec<usize> = (0..3).flat_map(|i| std::iter::repeat_n(i, m[i] as usize)).collect();
                let (i, j) = (idx[0], idx[1]);
                let v = if i == j { *c } else { 0.5 * c };
                quadratic[r][s][i][j] = v;
                quadratic[r][s][j][i] = v;
                quadratic[s][r][i][j] = v;
                quadratic[s][r][j][i] = v;
            }
        }
    }
    let cb = curvature::curvature_bundle(family, q)?;
    let riem_on = |i: usize, j: usize, k: usize, l: usize| -> f64 {
        let mut t = 0.0;
        for a in 0..3 {
            for bb in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        t += basis[i][a] * basis[j][bb] * basis[k][c] * basis[l][d] * cb.riem.get(a, bb, c, d);
                    }
                }
            }
        }
        t
    };
    let predicted: [[Mat3; 3]; 3] =
        std::array::from_fn(|r| std::array::from_fn(|s| std::array::from_fn(|i| std::array::from_fn(|j| -riem_on(i, r, j, s) / 3.0))));
    let mut coefficient_error = 0.0f64;
    for r in 0..3 {
        for s in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    // Only the symmetrisation in (i, j) is determined by g_rs.
                    let p = 0.5 * (predicted[r][s][i][j] + predicted[r][s][j][i]);
                    coefficient_error = coefficient_error.max((quadratic[r][s][i][j] - p).abs());
                }
            }
        }
    }
    Ok(NormalExpansion {
        order,
        quadratic,
        predicted,
        coefficient_error,
        residual,
        inversion_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Case {
    /// `|Ric̊|²` starts at order `ε²`.
    I,
    /// `|Ric̊|²` starts at a higher even order.
    II,
    /// The family stays homothetic to the round metric.
    III,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResiduals {
    pub constant_curvature: f64,
    pub scalar_spread: f64,
    /// `max |dR − 6 δRic̊|` over the probe points.
    pub bianchi: f64,
    /// `max |Riem − (R/12) g⊙g − Ric̊⊙g|` over the probe points.
    pub ricci_decomposition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub case: Case,
    pub k0: Option<usize>,
    pub residuals: ClassificationResiduals,
    pub r: Option<f64>,
    pub degeneracy: Vec<DegeneracyReport>,
}

/// Sorts the family into the three cases from the degeneracy order of its
/// path `ε ↦ g₀ + εh` and the homothety test at its own `ε`.
pub fn classify(family: &MetricFamily, pts: &[S3Point], eps_probe: &[f64]) -> Result<Classification> {
    let degeneracy: Vec<DegeneracyReport> = pts.iter().map(|p| degeneracy_order(family, p, eps_probe)).collect::<Result<_>>()?;
    let k0 = degeneracy.iter().filter_map(|d| d.k0).min();
    let h = homothety_detect(family, pts)?;
    let mut bianchi = 0.0f64;
    let mut decomposition = 0.0f64;
    for p in pts {
        bianchi = bianchi.max(curvature::bianchi_residual(family, p)?.iter().fold(0.0, |m, x| m.max(x.abs())));
        decomposition = decomposition.max(curvature::curvature_bundle(family, p)?.ricci_decomposition_residual());
    }
    let case = match k0 {
        Some(2) => Case::I,
        Some(_) => Case::II,
        None => Case::III,
    };
    Ok(Classification {
        case,
        k0,
        residuals: ClassificationResiduals {
            constant_curvature: h.certificate.residual,
            scalar_spread: h.certificate.scalar_spread,
            bianchi,
            ricci_decomposition: decomposition,
        },
        r: h.r,
        degeneracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{BuiltinTensor, MetricKind, TensorSource};

    fn pts() -> Vec<S3Point> {
        default_points()
    }

    #[test]
    fn degeneracy_orders() {
        let p = pts()[0];
        let round = degeneracy_order(&MetricFamily::round(), &p, &default_eps_probe()).unwrap();
        assert_eq!(round.k0, None);
        let homo = degeneracy_order(&MetricFamily::homothety(1.1).unwrap(), &p, &default_eps_probe()).unwrap();
        assert_eq!(homo.k0, None);
        let berger = degeneracy_order(&MetricFamily::berger_direction(0.1).unwrap(), &p, &default_eps_probe()).unwrap();
        assert_eq!(berger.k0, Some(2));
        assert!((berger.coefficient.unwrap() - 32.0 / 3.0).abs() < 1e-6);
        assert!(degeneracy_order(&MetricFamily::round(), &p, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn conformal_linear_family_starts_at_fourth_order() {
        let fam = MetricFamily::new(
            MetricKind::RoundPlusTensor {
                h: TensorSource::Builtin(BuiltinTensor::ConformalLinear),
                scale: 1.0,
            },
            0.1,
        )
        .unwrap();
        for p in pts() {
            let d = degeneracy_order(&fam, &p, &default_eps_probe()).unwrap();
            assert_eq!(d.k0, Some(4), "{d:?}");
            assert_eq!(d.floor, COEFF_FLOOR_FD);
        }
    }

    #[test]
    fn constancy_and_homothety() {
        let c = constant_curvature_residual(&MetricFamily::round(), &pts()).unwrap();
        assert!(c.residual < 1e-14 && c.scalar_spread < 1e-14);
        let h = homothety_detect(&MetricFamily::homothety(1.1).unwrap(), &pts()).unwrap();
        assert!(h.certificate.residual < 1e-7 && h.certificate.scalar_spread < 1e-8);
        assert!((h.r.unwrap() - 1.1).abs() < 1e-6);
        assert!((homothety_detect(&MetricFamily::round(), &pts()).unwrap().r.unwrap() - 1.0).abs() < 1e-12);
        let b = homothety_detect(&MetricFamily::berger_direction(0.1).unwrap(), &pts()).unwrap();
        assert!(b.r.is_none() && b.certificate.residual > 1e-3);
        assert!(constant_curvature_residual(&MetricFamily::round(), &pts()[..1]).is_err());
    }

    #[test]
    fn normal_coordinates_round() {
        let e = normal_coordinate_expansion(&MetricFamily::round(), &pts()[0], 2).unwrap();
        // Quartic terms leak into a quadratic-only fit at order r².
        assert!(e.coefficient_error < 1e-3, "{e:?}");
        assert!(e.residual < 1e-4 && e.residual > 1e-8);
        assert!(e.inversion_residual < 1e-9);
        // g_11 has −(1/3)(x_2² + x_3²).
        assert!((e.predicted[0][0][1][1] + 1.0 / 3.0).abs() < 1e-12 && e.predicted[0][0][0][0].abs() < 1e-12);
    }

    #[test]
    fn normal_coordinates_berger_and_homothety() {
        let e = normal_coordinate_expansion(&MetricFamily::berger_direction(0.1).unwrap(), &pts()[1], 4).unwrap();
        assert!(e.coefficient_error < 1e-4, "{e:?}");
        assert!(e.residual < 1e-6);
        let round = normal_coordinate_expansion(&MetricFamily::round(), &pts()[0], 4).unwrap();
        let scaled = normal_coordinate_expansion(&MetricFamily::homothety(1.1).unwrap(), &pts()[0], 4).unwrap();
        for r in 0..3 {
            for s in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((scaled.quadratic[r][s][i][j] * 1.21 - round.quadratic[r][s][i][j]).abs() < 1e-5);
                    }
                }
            }
        }
        assert!(normal_coordinate_expansion(&MetricFamily::round(), &pts()[0], 5).is_err());
    }

    #[test]
    fn trichotomy() {
        let probe = default_eps_probe();
        let c = classify(&MetricFamily::round(), &pts(), &probe).unwrap();
        assert_eq!((c.case, c.k0), (Case::III, None));
        let c = classify(&MetricFamily::homothety(1.1).unwrap(), &pts(), &probe).unwrap();
        assert_eq!(c.case, Case::III);
        assert!((c.r.unwrap() - 1.1).abs() < 1e-6);
        let c = classify(&MetricFamily::berger_direction(0.05).unwrap(), &pts(), &probe).unwrap();
        assert_eq!((c.case, c.k0), (Case::I, Some(2)));
        assert!(c.residuals.bianchi < 1e-4 && c.r.is_none());
    }
}
