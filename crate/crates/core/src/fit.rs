//! Small least-squares fits.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::{Error, Result};

/// Largest accepted ratio of extreme singular values of a design matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub coeffs: Vec<f64>,
    /// Euclidean norm of the residual vector.
    pub residual: f64,
    pub condition: f64,
}

/// Solves `min |X c − y|` by SVD. `rows` holds the rows of `X`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n == 0 || k == 0 || n < k || y.len() != n || rows.iter().any(|r| r.len() != k) {
        return Err(Error::FitIllConditioned(format!("{n} samples for {k} unknowns")));
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::FitIllConditioned("non-finite data".into()));
    }
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    // Column scaling keeps the condition number meaningful.
    let scale: Vec<f64> = (0..k).map(|j| x.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    let xs = DMatrix::from_fn(n, k, |i, j| x[(i, j)] / scale[j]);
    let svd = xs.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::FitIllConditioned(format!("condition number {condition:.3e}")));
    }
    let yv = DVector::from_column_slice(y);
    let c = svd.solve(&yv, 0.0).map_err(|e| Error::FitIllConditioned(e.to_string()))?;
    let residual = (&xs * &c - &yv).norm();
    Ok(LinearFit {
        coeffs: (0..k).map(|j| c[j] / scale[j]).collect(),
        residual,
        condition,
    })
}

/// Fit of `y ≈ Σ c_k x^{p_k}`.
pub fn power_fit(x: &[f64], y: &[f64], powers: &[i32]) -> Result<LinearFit> {
    let rows: Vec<Vec<f64>> = x.iter().map(|x| powers.iter().map(|p| x.powi(*p)).collect()).collect();
    least_squares(&rows, y)
}

/// Slope and intercept of `log y ≈ a log x + b`.
pub fn loglog(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::FitIllConditioned("log-log fit needs positive data".into()));
    }
    let rows: Vec<Vec<f64>> = x.iter().map(|x| vec![x.ln(), 1.0]).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let f = least_squares(&rows, &ly)?;
    Ok((f.coeffs[0], f.coeffs[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_polynomial() {
        let x = [0.1, 0.2, 0.3, 0.5, 0.8];
        let y: Vec<f64> = x.iter().map(|x| 2.0 - x + 3.0 * x * x).collect();
        let f = power_fit(&x, &y, &[0, 1, 2]).unwrap();
        for (a, b) in f.coeffs.iter().zip([2.0, -1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(power_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], &[0, 1]).is_err());
        assert!(power_fit(&[1.0], &[1.0], &[0, 1]).is_err());
        assert!(loglog(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn loglog_recovers_power_laws(a in -5.0f64..5.0, c in 0.1f64..10.0) {
            let x = [0.05f64, 0.1, 0.2, 0.4];
            let y: Vec<f64> = x.iter().map(|x| c * x.powf(a)).collect();
            let (s, b) = loglog(&x, &y).unwrap();
            prop_assert!((s - a).abs() < 1e-10);
            prop_assert!((b.exp() - c).abs() < 1e-9 * c);
        }
    }
}
