//! Small fixed-size tensors in a 3-dimensional frame.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn zeros3() -> Mat3 {
    [[0.0; 3]; 3]
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inv3(m: &Mat3) -> Mat3 {
    let d = det3(m);
    let mut r = zeros3();
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, e) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[a][c] * m[b][e] - m[a][e] * m[b][c]) / d;
        }
    }
    r
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn quad(m: &Mat3, u: &Vec3, v: &Vec3) -> f64 {
    let mv = mat_vec(m, v);
    u[0] * mv[0] + u[1] * mv[1] + u[2] * mv[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat3) -> Vec3 {
    let mat = nalgebra::Matrix3::from_fn(|i, j| 0.5 * (m[i][j] + m[j][i]));
    let mut e: Vec<f64> = mat.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    [e[0], e[1], e[2]]
}

/// Inverse square root of a symmetric positive-definite matrix.
pub fn sym_inv_sqrt(m: &Mat3) -> Mat3 {
    let mat = nalgebra::Matrix3::from_fn(|i, j| 0.5 * (m[i][j] + m[j][i]));
    let eig = mat.symmetric_eigen();
    let d = nalgebra::Matrix3::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / x.sqrt()));
    let r = eig.eigenvectors * d * eig.eigenvectors.transpose();
    std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)]))
}

/// Levi-Civita symbol.
pub fn levi(a: usize, b: usize, c: usize) -> f64 {
    if a == b || b == c || a == c {
        0.0
    } else if (b + 3 - a) % 3 == 1 && (c + 3 - b) % 3 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Covariant 4-tensor `T_{ijkl}` in a 3-dimensional frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor4(pub [[[[f64; 3]; 3]; 3]; 3]);

impl Tensor4 {
    pub fn zeros() -> Self {
        Self([[[[0.0; 3]; 3]; 3]; 3])
    }

    pub fn from_fn(f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        Self(std::array::from_fn(|i| {
            std::array::from_fn(|j| std::array::from_fn(|k| std::array::from_fn(|l| f(i, j, k, l))))
        }))
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.0[i][j][k][l]
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::from_fn(|i, j, k, l| self.get(i, j, k, l) - o.get(i, j, k, l))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_fn(|i, j, k, l| s * self.get(i, j, k, l))
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().flatten().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest violation of the algebraic curvature symmetries: antisymmetry
    /// in each pair, pair exchange, and the first Bianchi identity.
    pub fn curvature_symmetry_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let t = self.get(i, j, k, l);
                        r = r.max((t + self.get(j, i, k, l)).abs());
                        r = r.max((t + self.get(i, j, l, k)).abs());
                        r = r.max((t - self.get(k, l, i, j)).abs());
                        r = r.max((t + self.get(j, k, i, l) + self.get(k, i, j, l)).abs());
                    }
                }
            }
        }
        r
    }
}

/// Kulkarni-Nomizu product
/// `(a·b)_{ijkl} = a_ik b_jl + a_jl b_ik − a_il b_jk − a_jk b_il`.
pub fn kulkarni_nomizu(a: &Mat3, b: &Mat3) -> Tensor4 {
    Tensor4::from_fn(|i, j, k, l| a[i][k] * b[j][l] + a[j][l] * b[i][k] - a[i][l] * b[j][k] - a[j][k] * b[i][l])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(v: [f64; 6]) -> Mat3 {
        [[v[0], v[1], v[2]], [v[1], v[3], v[4]], [v[2], v[4], v[5]]]
    }

    #[test]
    fn kn_of_identity() {
        let t = kulkarni_nomizu(&IDENTITY, &IDENTITY);
        for (i, j, k, l) in (0..81).map(|n| (n / 27, (n / 9) % 3, (n / 3) % 3, n % 3)) {
            let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            assert_eq!(t.get(i, j, k, l), 2.0 * (d(i, k) * d(j, l) - d(i, l) * d(j, k)));
        }
        assert_eq!(kulkarni_nomizu(&zeros3(), &IDENTITY).max_abs(), 0.0);
    }

    #[test]
    fn inverse_and_levi() {
        let m = sym([2.0, 0.3, -0.1, 1.5, 0.2, 1.1]);
        let p = mat_mul(&m, &inv3(&m));
        for i in 0..3 {
            for j in 0..3 {
                assert!((p[i][j] - IDENTITY[i][j]).abs() < 1e-14);
            }
        }
        assert_eq!(levi(0, 1, 2), 1.0);
        assert_eq!(levi(1, 2, 0), 1.0);
        assert_eq!(levi(1, 0, 2), -1.0);
        assert_eq!(levi(0, 0, 2), 0.0);
        let r = sym_inv_sqrt(&m);
        let back = mat_mul(&mat_mul(&r, &m), &r);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[i][j] - IDENTITY[i][j]).abs() < 1e-13);
            }
        }
    }

    proptest! {
        #[test]
        fn kn_has_curvature_symmetries(a in proptest::array::uniform6(-2.0f64..2.0), b in proptest::array::uniform6(-2.0f64..2.0)) {
            let t = kulkarni_nomizu(&sym(a), &sym(b));
            prop_assert!(t.curvature_symmetry_residual() < 1e-13);
            let u = kulkarni_nomizu(&sym(b), &sym(a));
            prop_assert!(t.sub(&u).max_abs() < 1e-14);
        }
    }
}
