//! Adaptive Gragg-Bulirsch-Stoer integration of autonomous ODEs.
//!
//! Accepted steps can be recorded as a plan and replayed on a nearby initial
//! condition. Replayed solutions depend smoothly on the initial data, which
//! keeps finite differences across neighbouring trajectories free of
//! step-selection noise.

use crate::{Error, Result};

const SEQUENCE: [usize; 8] = [2, 4, 6, 8, 10, 12, 14, 16];

/// One accepted macro step: size and extrapolation depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub h: f64,
    pub levels: usize,
}

#[derive(Debug, Clone)]
pub struct Gbs {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
    work: Vec<Vec<f64>>,
    z0: Vec<f64>,
    z1: Vec<f64>,
    dz: Vec<f64>,
    table: Vec<f64>,
    result: Vec<f64>,
}

impl Gbs {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_min: 1e-12,
            h_max: 0.5,
            work: Vec::new(),
            z0: Vec::new(),
            z1: Vec::new(),
            dz: Vec::new(),
            table: Vec::new(),
            result: Vec::new(),
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.z0.len() != n {
            self.work = vec![vec![0.0; n]; SEQUENCE.len()];
            self.z0 = vec![0.0; n];
            self.z1 = vec![0.0; n];
            self.dz = vec![0.0; n];
            self.table = vec![0.0; SEQUENCE.len() * SEQUENCE.len() * n];
            self.result = vec![0.0; n];
        }
    }

    /// Modified midpoint rule with `steps` substeps over `h`, into `out`.
    fn midpoint<F>(&mut self, f: &mut F, y: &[f64], h: f64, steps: usize, row: usize) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        let hs = h / steps as f64;
        f(y, &mut self.dz)?;
        self.z0.copy_from_slice(y);
        for i in 0..n {
            self.z1[i] = y[i] + hs * self.dz[i];
        }
        for _ in 1..steps {
            f(&self.z1, &mut self.dz)?;
            for i in 0..n {
                let next = self.z0[i] + 2.0 * hs * self.dz[i];
                self.z0[i] = self.z1[i];
                self.z1[i] = next;
            }
        }
        f(&self.z1, &mut self.dz)?;
        let out = &mut self.work[row];
        for i in 0..n {
            out[i] = 0.5 * (self.z0[i] + self.z1[i] + hs * self.dz[i]);
        }
        Ok(())
    }

    /// One macro step of size `h`. Returns the extrapolated state, the depth
    /// used and whether the error test passed (always true for `fixed`).
    fn macro_step<F>(&mut self, f: &mut F, y: &[f64], h: f64, fixed: Option<usize>) -> Result<(usize, bool)>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = y.len();
        self.ensure(n);
        let kmax = SEQUENCE.len();
        let at = |k: usize, j: usize, i: usize| (k * kmax + j) * n + i;
        let max_k = fixed.unwrap_or(kmax);
        for k in 0..max_k {
            self.midpoint(f, y, h, SEQUENCE[k], k)?;
            for i in 0..n {
                self.table[at(k, 0, i)] = self.work[k][i];
            }
            for j in 1..=k {
                let ratio = (SEQUENCE[k] as f64 / SEQUENCE[k - j] as f64).powi(2) - 1.0;
                for i in 0..n {
                    let cur = self.table[at(k, j - 1, i)];
                    let prev = self.table[at(k - 1, j - 1, i)];
                    self.table[at(k, j, i)] = cur + (cur - prev) / ratio;
                }
            }
            if fixed.is_none() && k >= 2 {
                let mut err: f64 = 0.0;
                for i in 0..n {
                    let scale = self.atol + self.rtol * y[i].abs();
                    err = err.max((self.table[at(k, k, i)] - self.table[at(k, k - 1, i)]).abs() / scale);
                }
                if err <= 1.0 {
                    for i in 0..n {
                        self.result[i] = self.table[at(k, k, i)];
                    }
                    return Ok((k + 1, true));
                }
            }
        }
        let k = max_k - 1;
        for i in 0..n {
            self.result[i] = self.table[at(k, k, i)];
        }
        Ok((max_k, fixed.is_some()))
    }

    /// Integrates `y' = f(y)` over a span of length `t`, starting with step
    /// `*h` and leaving the last proposed step in `*h`. Accepted steps are
    /// appended to `plan`; `post` runs after every accepted step.
    pub fn integrate<F, P>(&mut self, f: &mut F, y: &mut [f64], t: f64, h: &mut f64, plan: &mut Vec<Step>, post: &mut P) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
        P: FnMut(&mut [f64]),
    {
        let mut done = 0.0;
        let dir = t.signum();
        let total = t.abs();
        while done < total {
            let remaining = total - done;
            let mut step = h.abs().min(self.h_max).min(remaining);
            let last = step >= remaining * (1.0 - 1e-12);
            if last {
                step = remaining;
            }
            let (levels, ok) = self.macro_step(f, y, dir * step, None)?;
            if !ok {
                *h = 0.5 * step;
                if *h < self.h_min {
                    return Err(Error::IntegratorFailure(format!("step size {:.3e} below minimum", *h)));
                }
                continue;
            }
            y.copy_from_slice(&self.result);
            post(y);
            plan.push(Step { h: dir * step, levels });
            done = if last { total } else { done + step };
            let grow = match levels {
                0..=3 => 2.0,
                4..=5 => 1.3,
                6 => 1.0,
                _ => 0.7,
            };
            if !last || grow < 1.0 {
                *h = step * grow;
            }
        }
        Ok(())
    }

    /// Replays a recorded plan from a new initial condition.
    pub fn replay<F, P>(&mut self, f: &mut F, y: &mut [f64], plan: &[Step], post: &mut P) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
        P: FnMut(&mut [f64]),
    {
        for s in plan {
            self.macro_step(f, y, s.h, Some(s.levels))?;
            y.copy_from_slice(&self.result);
            post(y);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let mut f = |y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
            Ok(())
        };
        let mut g = Gbs::new(1e-13);
        let mut y = [1.0, 0.0];
        let mut h = 0.1;
        let mut plan = Vec::new();
        g.integrate(&mut f, &mut y, 5.0, &mut h, &mut plan, &mut |_| {}).unwrap();
        assert!((y[0] - 5f64.cos()).abs() < 1e-11, "{}", y[0] - 5f64.cos());
        assert!((y[1] + 5f64.sin()).abs() < 1e-11);
        let mut z = [1.0 + 1e-3, 0.0];
        g.replay(&mut f, &mut z, &plan, &mut |_| {}).unwrap();
        assert!((z[0] - 1.001 * 5f64.cos()).abs() < 1e-11);
        let mut back = y;
        g.integrate(&mut f, &mut back, -5.0, &mut h, &mut Vec::new(), &mut |_| {}).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-11 && back[1].abs() < 1e-11);
    }

    #[test]
    fn failure_is_reported() {
        let mut f = |y: &[f64], d: &mut [f64]| {
            d[0] = y[0] * y[0];
            Ok(())
        };
        let mut g = Gbs::new(1e-12);
        let mut y = [1.0];
        let mut h = 0.1;
        let r = g.integrate(&mut f, &mut y, 2.0, &mut h, &mut Vec::new(), &mut |_| {});
        assert!(matches!(r, Err(Error::IntegratorFailure(_))));
    }
}
