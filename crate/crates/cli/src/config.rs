use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use willmore_core::asymptotics::RHO_WINDOW;
use willmore_core::diagnostics::{default_eps_probe, default_points};
use willmore_core::metric::MetricFamily;
use willmore_core::quat::S3Point;
use willmore_core::reduction::{OptimizerConfig, SolverConfig};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsConfig {
    /// `ε` of the energy-law fit.
    pub eps: f64,
    pub rhos: Vec<f64>,
    /// `ε` grid of the remainder bound.
    pub eps_list: Vec<f64>,
    pub profile_rhos: Vec<f64>,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            eps: 0.05,
            rhos: vec![0.05, 0.07, 0.1, 0.14, 0.2, 0.25],
            eps_list: vec![0.025, 0.05],
            profile_rhos: vec![0.05, 0.1, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub metric: MetricFamily,
    pub solver: SolverConfig,
    pub optimizer: OptimizerConfig,
    pub asymptotics: AsymptoticsConfig,
    /// Probe points; the three default points when empty.
    pub points: Vec<S3Point>,
    /// Extra uniformly random probe points drawn from `seed`.
    pub random_points: usize,
    pub seed: u64,
    /// `ε` values of the degeneracy fit; the default probe when absent.
    pub eps_probe: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            metric: MetricFamily::round(),
            solver: SolverConfig::default(),
            optimizer: OptimizerConfig::default(),
            asymptotics: AsymptoticsConfig::default(),
            points: Vec::new(),
            random_points: 0,
            seed: 0,
            eps_probe: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    /// Parses and validates; serde errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.metric.validate().map_err(|e| format!("metric: {e}"))?;
        let s = &self.solver;
        if !(2..=48).contains(&s.lmax) {
            return Err(format!("solver.lmax must lie in [2, 48], got {}", s.lmax));
        }
        if let Some(g) = s.grid_lmax {
            if g < s.lmax || g > 96 {
                return Err(format!("solver.grid_lmax must lie in [lmax, 96], got {g}"));
            }
        }
        if !(s.tol > 0.0 && s.tol <= 1e-2) {
            return Err(format!("solver.tol must lie in (0, 1e-2], got {}", s.tol));
        }
        if !(1..=10_000).contains(&s.max_iter) {
            return Err(format!("solver.max_iter must lie in [1, 10000], got {}", s.max_iter));
        }
        if !(s.delta > 0.0 && s.delta < FRAC_PI_2) {
            return Err(format!("solver.delta must lie in (0, pi/2), got {}", s.delta));
        }
        let o = &self.optimizer;
        if o.grid_rho == 0 || o.max_evals == 0 || !(o.xtol > 0.0) || !(o.polish_fd_step > 0.0) {
            return Err("optimizer: grid_rho, max_evals, xtol and polish_fd_step must be positive".into());
        }
        let a = &self.asymptotics;
        for r in a.rhos.iter().chain(&a.profile_rhos) {
            if !(*r >= RHO_WINDOW.0 && *r <= RHO_WINDOW.1) {
                return Err(format!("asymptotics radii must lie in [{}, {}], got {r}", RHO_WINDOW.0, RHO_WINDOW.1));
            }
        }
        if self.random_points > 1000 {
            return Err(format!("random_points must be at most 1000, got {}", self.random_points));
        }
        if let Some(p) = &self.eps_probe {
            if p.len() < 3 || p.iter().any(|e| !e.is_finite() || *e == 0.0) {
                return Err("eps_probe needs at least 3 finite nonzero values".into());
            }
        }
        Ok(())
    }

    /// Configured points, then the random ones, in a fixed order.
    pub fn probe_points(&self) -> Vec<S3Point> {
        let mut pts = if self.points.is_empty() { default_points() } else { self.points.clone() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let target = pts.len() + self.random_points;
        while pts.len() < target {
            let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n2: f64 = q.iter().map(|x| x * x).sum();
            if n2 > 1e-4 && n2 <= 1.0 {
                pts.push(S3Point::new(q));
            }
        }
        pts
    }

    pub fn eps_probe(&self) -> Vec<f64> {
        self.eps_probe.clone().unwrap_or_else(default_eps_probe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_configs() {
        let c = RunConfig::parse("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        let c = RunConfig::parse(r#"{"metric": {"kind": "berger", "lambda": 1.2}, "solver": {"lmax": 8}}"#).unwrap();
        assert_eq!(c.solver.lmax, 8);
        assert_eq!(c.solver.tol, 1e-8);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("{\n  \"solver\": {\n    \"lmax\": \"x\"\n  }\n}").unwrap_err();
        assert!(e.contains("line 3"), "{e}");
        let e = RunConfig::parse("{\n  \"sovler\": {}\n}").unwrap_err();
        assert!(e.contains("unknown field") && e.contains("line 2"), "{e}");
        assert!(RunConfig::parse(r#"{"solver": {"tol": 0.5}}"#).unwrap_err().contains("tol"));
        assert!(RunConfig::parse(r#"{"asymptotics": {"rhos": [0.5]}}"#).is_err());
    }

    #[test]
    fn probe_points_are_seeded() {
        let a = RunConfig {
            random_points: 4,
            seed: 9,
            ..Default::default()
        };
        let b = a.clone();
        assert_eq!(a.probe_points(), b.probe_points());
        assert_eq!(a.probe_points().len(), 7);
        let c = RunConfig { seed: 10, ..a.clone() };
        assert_ne!(a.probe_points(), c.probe_points());
    }
}
