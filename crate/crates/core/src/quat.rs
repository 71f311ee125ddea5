//! Unit quaternions as points of S³ and the left-invariant frame.
//!
//! A quaternion is stored as `[w, x, y, z]` meaning `w + x i + y j + z k`.
//! The left-invariant frame is `E_a(q) = q · e_a` with `e_1 = i`, `e_2 = j`,
//! `e_3 = k`, so `[E_a, E_b] = 2 ε_abc E_c` and the frame is orthonormal for
//! the round metric of curvature one.

use serde::{Deserialize, Serialize};

pub type Quat = [f64; 4];

pub const ONE: Quat = [1.0, 0.0, 0.0, 0.0];

pub fn mul(a: &Quat, b: &Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn conj(a: &Quat) -> Quat {
    [a[0], -a[1], -a[2], -a[3]]
}

pub fn dot(a: &Quat, b: &Quat) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn norm(a: &Quat) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &Quat) -> Quat {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n, a[3] / n]
}

/// Pure quaternion with imaginary part `v`.
pub fn pure(v: &[f64; 3]) -> Quat {
    [0.0, v[0], v[1], v[2]]
}

/// `exp` of the pure quaternion `v`, a unit quaternion.
pub fn exp_pure(v: &[f64; 3]) -> Quat {
    let t = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let s = if t < 1e-8 { 1.0 - t * t / 6.0 } else { t.sin() / t };
    [t.cos(), s * v[0], s * v[1], s * v[2]]
}

/// Frame vector `E_a(q) = q · e_a` as an R⁴ vector, `a ∈ {0,1,2}`.
pub fn frame_vector(q: &Quat, a: usize) -> Quat {
    let mut e = [0.0; 4];
    e[a + 1] = 1.0;
    mul(q, &e)
}

/// Components of an R⁴ vector `x` along `E_1, E_2, E_3` at `q`
/// (the Euclidean projection onto the tangent space of S³ at `q`).
pub fn frame_components(q: &Quat, x: &Quat) -> [f64; 3] {
    let y = mul(&conj(q), x);
    [y[1], y[2], y[3]]
}

/// A point of S³, renormalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct S3Point {
    q: Quat,
}

impl S3Point {
    pub fn new(q: Quat) -> Self {
        Self { q: normalize(&q) }
    }

    pub fn identity() -> Self {
        Self { q: ONE }
    }

    pub fn q(&self) -> &Quat {
        &self.q
    }

    /// The antipodal point `-q`.
    pub fn antipode(&self) -> Self {
        Self {
            q: [-self.q[0], -self.q[1], -self.q[2], -self.q[3]],
        }
    }

    /// Left translation `a · q`.
    pub fn left_translate(&self, a: &Quat) -> Self {
        Self::new(mul(a, &self.q))
    }

    /// Moves along the left-invariant direction `v` (frame components) by
    /// `q · exp(v)`; a chart of S³ around `q`.
    pub fn exp_chart(&self, v: &[f64; 3]) -> Self {
        Self::new(mul(&self.q, &exp_pure(v)))
    }
}

impl From<[f64; 4]> for S3Point {
    fn from(q: [f64; 4]) -> Self {
        Self::new(q)
    }
}

impl From<S3Point> for [f64; 4] {
    fn from(p: S3Point) -> Self {
        p.q
    }
}

/// The 24 unit Hurwitz quaternions (vertices of the 24-cell), in a fixed order.
pub fn cell24() -> Vec<S3Point> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for s in [1.0, -1.0] {
            let mut q = [0.0; 4];
            q[a] = s;
            out.push(S3Point::new(q));
        }
    }
    for bits in 0..16u32 {
        let sign = |k: u32| if bits & (1 << k) == 0 { 0.5 } else { -0.5 };
        out.push(S3Point::new([sign(0), sign(1), sign(2), sign(3)]));
    }
    out
}
