//! Forward-mode dual numbers for exact local derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type usable by the local surface geometry.
pub trait Real: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> {
    fn cst(x: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn scale(self, s: f64) -> Self;
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

/// Value plus gradient with respect to `N` independent variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn var(v: f64, k: usize) -> Self {
        let mut d = [0.0; N];
        d[k] = 1.0;
        Self { v, d }
    }

    /// `v + dv · e_k`.
    pub fn with_slope(v: f64, k: usize, dv: f64) -> Self {
        let mut d = [0.0; N];
        d[k] = dv;
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            d: std::array::from_fn(|k| self.d[k] + o.d[k]),
        }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            v: self.v - o.v,
            d: std::array::from_fn(|k| self.d[k] - o.d[k]),
        }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d: std::array::from_fn(|k| self.d[k] * o.v + self.v * o.d[k]),
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        Self {
            v: q,
            d: std::array::from_fn(|k| (self.d[k] - q * o.d[k]) * inv),
        }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            d: self.d.map(|x| -x),
        }
    }
}

impl<const N: usize> Real for Dual<N> {
    fn cst(x: f64) -> Self {
        Self { v: x, d: [0.0; N] }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let f = 0.5 / s;
        Self {
            v: s,
            d: self.d.map(|x| x * f),
        }
    }
    fn scale(self, s: f64) -> Self {
        Self {
            v: self.v * s,
            d: self.d.map(|x| x * s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: T, y: T) -> T {
        (x * x * y + T::cst(1.0)).sqrt() / (y - x.scale(0.5))
    }

    #[test]
    fn gradient_matches_difference_quotients() {
        let (x, y) = (0.7, 1.9);
        let d = f(Dual::<2>::var(x, 0), Dual::<2>::var(y, 1));
        let h = 1e-6;
        let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        assert!((d.v - f(x, y)).abs() < 1e-15);
        assert!((d.d[0] - fx).abs() < 1e-8);
        assert!((d.d[1] - fy).abs() < 1e-8);
    }
}
