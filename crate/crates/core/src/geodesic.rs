//! Geodesics and Jacobi fields in the left-invariant frame.
//!
//! The state is the point `q` (unit quaternion) and the frame components `v`
//! of the velocity, `q' = q·v`, `v'^c = −Γ^c_ab v^a v^b`. A variation of the
//! geodesic is carried as the frame components `ξ` of `δq = q·ξ` and the
//! velocity variation `δv`:
//!
//! `ξ' = δv − 2 v×ξ`, `δv' = −(∂_ξ Γ)(v,v) − Γ(δv,v) − Γ(v,δv)`.
//!
//! `ξ` is then the Jacobi field, and its covariant derivative along the
//! geodesic is `δv − 2 v×ξ + Γ(v, ξ)`.

use crate::curvature::{self, Christoffel};
use crate::integrate::{Gbs, Step};
use crate::metric::MetricFamily;
use crate::quat::{self, Quat, S3Point};
use crate::tensor::{self, Vec3};
use crate::{Error, Result};

/// Relative and absolute tolerance of geodesic integration.
pub const TOL: f64 = 1e-13;

/// Christoffel symbols as a field on S³.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    family: MetricFamily,
    constant: Option<Christoffel>,
}

const DGAMMA_STEP: f64 = 1e-3;

impl ConnectionField {
    pub fn new(family: &MetricFamily) -> Result<Self> {
        let constant = if family.is_left_invariant() {
            Some(curvature::christoffel(family, &quat::ONE)?)
        } else {
            None
        };
        Ok(Self {
            family: family.clone(),
            constant,
        })
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    pub fn gamma(&self, q: &Quat) -> Result<Christoffel> {
        match &self.constant {
            Some(c) => Ok(*c),
            None => curvature::christoffel(&self.family, q),
        }
    }

    /// Derivative of the Christoffel components along `ξ` (frame components).
    pub fn dgamma(&self, q: &Quat, xi: &Vec3) -> Result<Christoffel> {
        let n = tensor::dot3(xi, xi).sqrt();
        if self.constant.is_some() || n == 0.0 {
            return Ok([[[0.0; 3]; 3]; 3]);
        }
        let dir = xi.map(|c| c / n);
        let at = |t: f64| self.gamma(&quat::mul(q, &quat::exp_pure(&dir.map(|c| c * t))));
        let h = DGAMMA_STEP;
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        Ok(std::array::from_fn(|k| {
            std::array::from_fn(|a| std::array::from_fn(|b| n * (8.0 * (p1[k][a][b] - m1[k][a][b]) - (p2[k][a][b] - m2[k][a][b])) / (12.0 * h)))
        }))
    }
}

fn contract(g: &Christoffel, a: &Vec3, b: &Vec3) -> Vec3 {
    std::array::from_fn(|c| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += g[c][i][j] * a[i] * b[j];
            }
        }
        s
    })
}

/// Right-hand side of the geodesic system with `y.len() = 7 + 6k`.
pub fn rhs(conn: &ConnectionField, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let q = [y[0], y[1], y[2], y[3]];
    let v = [y[4], y[5], y[6]];
    let dq = quat::mul(&q, &quat::pure(&v));
    dy[..4].copy_from_slice(&dq);
    let g = conn.gamma(&q)?;
    let acc = contract(&g, &v, &v);
    for c in 0..3 {
        dy[4 + c] = -acc[c];
    }
    let fields = (y.len() - 7) / 6;
    for k in 0..fields {
        let o = 7 + 6 * k;
        let xi = [y[o], y[o + 1], y[o + 2]];
        let dv = [y[o + 3], y[o + 4], y[o + 5]];
        let vx = tensor::cross(&v, &xi);
        let a = contract(&g, &dv, &v);
        let b = contract(&g, &v, &dv);
        let mut d = [0.0; 3];
        if !conn.is_constant() {
            d = contract(&conn.dgamma(&q, &xi)?, &v, &v);
        }
        for c in 0..3 {
            dy[o + c] = dv[c] - 2.0 * vx[c];
            dy[o + 3 + c] = -d[c] - a[c] - b[c];
        }
    }
    Ok(())
}

fn renormalize(y: &mut [f64]) {
    let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3]).sqrt();
    for c in y.iter_mut().take(4) {
        *c /= n;
    }
}

/// State of a geodesic and its variations at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: Quat,
    pub v: Vec3,
    pub xi: Vec<Vec3>,
    pub dv: Vec<Vec3>,
}

impl Sample {
    fn from_state(t: f64, y: &[f64]) -> Self {
        let k = (y.len() - 7) / 6;
        let xi = (0..k).map(|i| [y[7 + 6 * i], y[8 + 6 * i], y[9 + 6 * i]]).collect();
        let dv = (0..k).map(|i| [y[10 + 6 * i], y[11 + 6 * i], y[12 + 6 * i]]).collect();
        Self {
            t,
            q: [y[0], y[1], y[2], y[3]],
            v: [y[4], y[5], y[6]],
            xi,
            dv,
        }
    }

    /// Covariant derivative of Jacobi field `k` along the geodesic.
    pub fn jacobi_derivative(&self, conn: &ConnectionField, k: usize) -> Result<Vec3> {
        let g = conn.gamma(&self.q)?;
        let vx = tensor::cross(&self.v, &self.xi[k]);
        let gx = contract(&g, &self.v, &self.xi[k]);
        Ok(std::array::from_fn(|c| self.dv[k][c] - 2.0 * vx[c] + gx[c]))
    }
}

/// A shot geodesic: samples at the requested parameters and the step plan of
/// every segment between them.
#[derive(Debug, Clone)]
pub struct Shot {
    pub samples: Vec<Sample>,
    pub plan: Vec<Vec<Step>>,
}

fn initial_state(p: &Quat, v0: &Vec3, dv0: &[Vec3]) -> Vec<f64> {
    let mut y = vec![0.0; 7 + 6 * dv0.len()];
    y[..4].copy_from_slice(p);
    y[4..7].copy_from_slice(v0);
    for (k, d) in dv0.iter().enumerate() {
        y[10 + 6 * k..13 + 6 * k].copy_from_slice(d);
    }
    y
}

/// Integrates the geodesic from `p` with initial velocity `v0`, carrying
/// Jacobi fields with `ξ(0) = 0`, `δv(0) = dv0[k]`, and samples it at the
/// increasing parameters `ts`.
pub fn shoot(conn: &ConnectionField, p: &Quat, v0: &Vec3, dv0: &[Vec3], ts: &[f64], gbs: &mut Gbs) -> Result<Shot> {
    let mut y = initial_state(p, v0, dv0);
    let mut f = |y: &[f64], d: &mut [f64]| rhs(conn, y, d);
    let mut t = 0.0;
    let mut h = 0.1;
    let mut samples = Vec::with_capacity(ts.len());
    let mut plan = Vec::with_capacity(ts.len());
    for &tk in ts {
        let mut seg = Vec::new();
        if tk > t {
            gbs.integrate(&mut f, &mut y, tk - t, &mut h, &mut seg, &mut renormalize)?;
        }
        t = tk;
        samples.push(Sample::from_state(t, &y));
        plan.push(seg);
    }
    Ok(Shot { samples, plan })
}

/// Re-integrates with the step plan of an earlier [`shoot`].
pub fn replay(conn: &ConnectionField, p: &Quat, v0: &Vec3, dv0: &[Vec3], ts: &[f64], plan: &[Vec<Step>], gbs: &mut Gbs) -> Result<Vec<Sample>> {
    let mut y = initial_state(p, v0, dv0);
    let mut f = |y: &[f64], d: &mut [f64]| rhs(conn, y, d);
    let mut out = Vec::with_capacity(ts.len());
    for (tk, seg) in ts.iter().zip(plan) {
        gbs.replay(&mut f, &mut y, seg, &mut renormalize)?;
        out.push(Sample::from_state(*tk, &y));
    }
    Ok(out)
}

/// `g`-length of a tangent vector in frame components.
pub fn speed(family: &MetricFamily, q: &Quat, v: &Vec3) -> Result<f64> {
    let g = family.frame_metric(q)?;
    Ok(tensor::quad(&g, v, v).sqrt())
}

/// Exponential map at `p` of the tangent vector with frame components `v`.
pub fn exp_map(family: &MetricFamily, p: &S3Point, v: &Vec3) -> Result<S3Point> {
    let len = speed(family, p.q(), v)?;
    if len > std::f64::consts::PI + 0.5 {
        return Err(Error::InvalidArgument(format!("tangent vector too long for the exponential map: {len:.4}")));
    }
    if len == 0.0 {
        return Ok(*p);
    }
    let conn = ConnectionField::new(family)?;
    let shot = shoot(&conn, p.q(), v, &[], &[1.0], &mut Gbs::new(TOL))?;
    Ok(S3Point::new(shot.samples[0].q))
}

/// Inverse of the exponential map near `p` by Newton iteration on the Jacobi
/// differential; returns frame components at `p`.
pub fn exp_inverse(family: &MetricFamily, p: &S3Point, target: &S3Point) -> Result<Vec3> {
    let conn = ConnectionField::new(family)?;
    let mut gbs = Gbs::new(TOL);
    let c = quat::dot(p.q(), target.q()).clamp(-1.0, 1.0);
    let tang = quat::frame_components(p.q(), target.q());
    let tn = tensor::dot3(&tang, &tang).sqrt();
    let mut x = if tn > 0.0 { tang.map(|t| t / tn * c.acos()) } else { [0.0; 3] };
    let basis = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut residual = f64::INFINITY;
    for _ in 0..40 {
        let shot = shoot(&conn, p.q(), &x, &basis, &[1.0], &mut gbs)?;
        let s = &shot.samples[0];
        let diff: Quat = std::array::from_fn(|i| target.q()[i] - s.q[i]);
        residual = quat::norm(&diff);
        if residual < 1e-13 {
            return Ok(x);
        }
        let r = quat::frame_components(&s.q, &diff);
        let j = nalgebra::Matrix3::from_fn(|c, k| s.xi[k][c]);
        let dx = j
            .lu()
            .solve(&nalgebra::Vector3::new(r[0], r[1], r[2]))
            .ok_or(Error::ExpInversionFailure { residual })?;
        for k in 0..3 {
            x[k] += dx[k];
        }
    }
    Err(Error::ExpInversionFailure { residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{BuiltinTensor, MetricKind, TensorSource};

    #[test]
    fn round_matches_closed_form() {
        let p = S3Point::new([0.4, -0.3, 0.8, 0.2]);
        for v in [[0.3, -1.1, 0.4], [1.0, 0.5, 2.0], [0.0, 0.0, 3.5]] {
            let q = exp_map(&MetricFamily::round(), &p, &v).unwrap();
            let n = tensor::dot3(&v, &v).sqrt();
            let dir = quat::mul(p.q(), &quat::pure(&v.map(|c| c / n)));
            for i in 0..4 {
                let expect = n.cos() * p.q()[i] + n.sin() * dir[i];
                assert!((q.q()[i] - expect).abs() < 1e-9);
            }
        }
        let q = exp_map(&MetricFamily::round(), &p, &[std::f64::consts::FRAC_PI_2, 0.0, 0.0]).unwrap();
        assert!(quat::dot(q.q(), p.q()).abs() < 1e-12);
        assert_eq!(exp_map(&MetricFamily::round(), &p, &[0.0; 3]).unwrap(), p);
    }

    #[test]
    fn berger_arc_length() {
        let f = MetricFamily::new(MetricKind::Berger { lambda: 1.2 }, 1.0).unwrap();
        let p = S3Point::new([0.1, 0.7, -0.2, 0.6]);
        let v = [0.9, -0.6, 1.3];
        let len = speed(&f, p.q(), &v).unwrap();
        // Polygonal length through independently integrated points,
        // Richardson-extrapolated in the number of chords.
        let poly = |n: usize| -> f64 {
            let pts: Vec<S3Point> = (0..=n).map(|k| exp_map(&f, &p, &v.map(|c| c * k as f64 / n as f64)).unwrap()).collect();
            pts.windows(2)
                .map(|w| {
                    let mid = quat::normalize(&std::array::from_fn(|i| w[0].q()[i] + w[1].q()[i]));
                    let d = quat::frame_components(&mid, &std::array::from_fn(|i| w[1].q()[i] - w[0].q()[i]));
                    speed(&f, &mid, &d).unwrap()
                })
                .sum()
        };
        let (a, b) = (poly(200), poly(400));
        let extrap = (4.0 * b - a) / 3.0;
        assert!((extrap - len).abs() < 1e-6, "{extrap} {len}");
    }

    #[test]
    fn jacobi_fields_match_endpoint_differences() {
        let f = MetricFamily::new(
            MetricKind::RoundPlusTensor {
                h: TensorSource::Builtin(BuiltinTensor::Bump),
                scale: 1.0,
            },
            0.1,
        )
        .unwrap();
        let conn = ConnectionField::new(&f).unwrap();
        let p = S3Point::new([0.9, 0.2, -0.1, 0.3]);
        let v = [0.4, 0.2, -0.5];
        let dv = [0.3, -0.2, 0.7];
        let mut gbs = Gbs::new(TOL);
        let shot = shoot(&conn, p.q(), &v, &[dv], &[1.0], &mut gbs).unwrap();
        let h = 1e-4;
        let end = |s: f64| exp_map(&f, &p, &std::array::from_fn(|i| v[i] + s * dv[i])).unwrap();
        let (a, b) = (end(h), end(-h));
        let fd = quat::frame_components(&shot.samples[0].q, &std::array::from_fn(|i| (a.q()[i] - b.q()[i]) / (2.0 * h)));
        for c in 0..3 {
            assert!((fd[c] - shot.samples[0].xi[0][c]).abs() < 1e-7, "{fd:?} {:?}", shot.samples[0].xi[0]);
        }
    }

    #[test]
    fn exp_inverse_roundtrip() {
        let f = MetricFamily::berger_direction(0.1).unwrap();
        let p = S3Point::new([0.3, 0.3, -0.6, 0.2]);
        let v = [0.05, -0.07, 0.02];
        let q = exp_map(&f, &p, &v).unwrap();
        let back = exp_inverse(&f, &p, &q).unwrap();
        for c in 0..3 {
            assert!((back[c] - v[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn long_vector_is_refused() {
        let r = exp_map(&MetricFamily::round(), &S3Point::identity(), &[4.0, 0.0, 0.0]);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
