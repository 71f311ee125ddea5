//! Derivative-free simplex minimisation.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NelderMeadOptions {
    /// Initial edge lengths per coordinate.
    pub steps: Vec<f64>,
    /// Stop when the simplex diameter is below this.
    pub xtol: f64,
    /// Stop when the spread of values is below this.
    pub ftol: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0`. Non-finite values count as `+∞`.
pub fn minimize<E>(mut f: impl FnMut(&[f64]) -> Result<f64, E>, x0: &[f64], opts: &NelderMeadOptions) -> Result<Minimum, E> {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64, E> {
        *evals += 1;
        let v = f(x)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.steps[i];
        pts.push(x);
    }
    let mut vals = Vec::with_capacity(n + 1);
    for p in &pts {
        vals.push(eval(p, &mut evals)?);
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect() };
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let diameter = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = vals[n] - vals[0];
        let converged = diameter < opts.xtol && spread.abs() < opts.ftol;
        if converged || evals >= opts.max_evals {
            return Ok(Minimum {
                x: pts[0].clone(),
                f: vals[0],
                evals,
                converged,
            });
        }
        let centroid: Vec<f64> = (0..n).map(|i| pts[..n].iter().map(|p| p[i]).sum::<f64>() / n as f64).collect();
        let xr = combine(&centroid, &pts[n], -1.0);
        let fr = eval(&xr, &mut evals)?;
        if fr < vals[0] {
            let xe = combine(&centroid, &pts[n], -2.0);
            let fe = eval(&xe, &mut evals)?;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = combine(&centroid, &pts[n], -0.5);
                let v = eval(&x, &mut evals)?;
                (x, v)
            } else {
                let x = combine(&centroid, &pts[n], 0.5);
                let v = eval(&x, &mut evals)?;
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    pts[i] = combine(&pts[0], &pts[i], 0.5);
                    vals[i] = eval(&pts[i], &mut evals)?;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> NelderMeadOptions {
        NelderMeadOptions {
            steps: vec![0.5; n],
            xtol: 1e-9,
            ftol: 1e-14,
            max_evals: 5000,
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| -> Result<f64, ()> { Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)) };
        let m = minimize(f, &[-1.2, 1.0], &opts(2)).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_in_four_variables() {
        let c = [0.3, -1.0, 2.0, 0.5];
        let f = |x: &[f64]| -> Result<f64, ()> { Ok(x.iter().zip(&c).enumerate().map(|(i, (x, c))| (i + 1) as f64 * (x - c).powi(2)).sum()) };
        let m = minimize(f, &[0.0; 4], &opts(4)).unwrap();
        for (x, c) in m.x.iter().zip(&c) {
            assert!((x - c).abs() < 1e-6);
        }
    }

    #[test]
    fn errors_propagate() {
        let f = |_: &[f64]| -> Result<f64, &'static str> { Err("boom") };
        assert_eq!(minimize(f, &[0.0], &opts(1)), Err("boom"));
    }
}
