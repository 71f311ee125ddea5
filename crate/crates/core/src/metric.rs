//! Metric families `g_ε` on S³, evaluated in the left-invariant frame.
//!
//! Every family is written as `g_ε = g₀ + ε h` in the frame `E_a(q) = q·e_a`:
//!
//! * `berger` and `left_invariant` take `h = diag(λ) − I`, so the frame
//!   metric is `I + ε(diag(λ) − I)`. The default `ε = 1` gives the metric
//!   `diag(λ)` itself; `ε` scales the departure from round.
//! * `round_plus_tensor` takes a builtin or tabulated tensor `h`. Builtins
//!   `constant` (`h = g₀`) and `berger` (`h = diag(1,0,0)`) are
//!   left-invariant, `conformal_linear` is `h = −2 Re(q) g₀`, and `bump`
//!   and coefficient tables are given in the stereographic chart
//!   `x = Im q / (1 + Re q)` centered at `1`, whose antipode `−1` is excluded.

use serde::{Deserialize, Serialize};

use crate::quat::{self, Quat, S3Point};
use crate::tensor::{self, Mat3, IDENTITY};
use crate::{Error, Result};

/// Smallest admissible eigenvalue of the frame metric on the validity design.
pub const VALIDITY_FLOOR: f64 = 0.1;

/// Distance to the chart antipode below which a chart tensor is refused.
const CHART_EXCLUSION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinTensor {
    /// `h = g₀`.
    Constant,
    /// `h = diag(1, 0, 0)` in the left-invariant frame.
    Berger,
    /// `h = −2 Re(q) g₀`, first-order trivial but not homothetic.
    ConformalLinear,
    /// `h_ij(x) = κ(x) e^{−|x|²}(x_i x_j + x_1 δ_ij)` in the chart, with
    /// `κ = 4/(1+|x|²)²` the round conformal factor.
    Bump,
}

/// One monomial `coeff · x^powers` placed in components `(i, j)` and `(j, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorTerm {
    pub i: usize,
    pub j: usize,
    pub coeff: f64,
    #[serde(default)]
    pub powers: [u32; 3],
}

/// Chart tensor `h_ij(x) = κ(x) e^{−|x|²} Σ_terms coeff x^powers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub terms: Vec<TensorTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TensorSource {
    Builtin(BuiltinTensor),
    Table(CoefficientTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    Round,
    Berger {
        lambda: f64,
    },
    LeftInvariant {
        lambdas: [f64; 3],
    },
    RoundPlusTensor {
        h: TensorSource,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// A metric family at a fixed perturbation size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFamily {
    #[serde(flatten)]
    pub kind: MetricKind,
    #[serde(default = "one")]
    pub epsilon: f64,
}

impl MetricFamily {
    /// Builds and validates a family.
    pub fn new(kind: MetricKind, epsilon: f64) -> Result<Self> {
        let f = Self { kind, epsilon };
        f.validate()?;
        Ok(f)
    }

    pub fn round() -> Self {
        Self {
            kind: MetricKind::Round,
            epsilon: 0.0,
        }
    }

    /// Berger metric with frame metric `diag(1 + ε, 1, 1)`.
    pub fn berger_direction(epsilon: f64) -> Result<Self> {
        Self::new(MetricKind::Berger { lambda: 2.0 }, epsilon)
    }

    /// The homothetic metric `s² g₀`.
    pub fn homothety(s: f64) -> Result<Self> {
        Self::new(
            MetricKind::RoundPlusTensor {
                h: TensorSource::Builtin(BuiltinTensor::Constant),
                scale: 1.0,
            },
            s * s - 1.0,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("metric JSON: {e}")))?;
        f.validate()?;
        Ok(f)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            epsilon,
        }
    }

    /// True when the frame metric is the same at every point, so curvature
    /// follows exactly from the structure constants.
    pub fn is_left_invariant(&self) -> bool {
        match &self.kind {
            MetricKind::Round | MetricKind::Berger { .. } | MetricKind::LeftInvariant { .. } => true,
            MetricKind::RoundPlusTensor { h, .. } => {
                matches!(h, TensorSource::Builtin(BuiltinTensor::Constant | BuiltinTensor::Berger))
            }
        }
    }

    /// True when evaluation goes through the stereographic chart.
    pub fn uses_chart(&self) -> bool {
        matches!(
            &self.kind,
            MetricKind::RoundPlusTensor {
                h: TensorSource::Builtin(BuiltinTensor::Bump) | TensorSource::Table(_),
                ..
            }
        )
    }

    /// The perturbation tensor `h` in the frame at `q`.
    pub fn perturbation(&self, q: &Quat) -> Result<Mat3> {
        Ok(match &self.kind {
            MetricKind::Round => tensor::zeros3(),
            MetricKind::Berger { lambda } => diag(*lambda - 1.0, 0.0, 0.0),
            MetricKind::LeftInvariant { lambdas } => diag(lambdas[0] - 1.0, lambdas[1] - 1.0, lambdas[2] - 1.0),
            MetricKind::RoundPlusTensor { h, scale } => {
                let m = match h {
                    TensorSource::Builtin(BuiltinTensor::Constant) => IDENTITY,
                    TensorSource::Builtin(BuiltinTensor::Berger) => diag(1.0, 0.0, 0.0),
                    TensorSource::Builtin(BuiltinTensor::ConformalLinear) => {
                        let c = -2.0 * q[0];
                        diag(c, c, c)
                    }
                    TensorSource::Builtin(BuiltinTensor::Bump) => chart_tensor(q, bump)?,
                    TensorSource::Table(t) => chart_tensor(q, |x| table(t, x))?,
                };
                m.map(|r| r.map(|x| x * scale))
            }
        })
    }

    /// Frame metric `g(E_a, E_b)` at `q`, without the positivity check.
    pub fn frame_metric(&self, q: &Quat) -> Result<Mat3> {
        let h = self.perturbation(q)?;
        Ok(std::array::from_fn(|i| std::array::from_fn(|j| IDENTITY[i][j] + self.epsilon * h[i][j])))
    }

    /// Checks the validity bound on the fixed 26-point design.
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument("epsilon must be finite".into()));
        }
        match &self.kind {
            MetricKind::Berger { lambda } if *lambda <= 0.0 => return Err(Error::InvalidArgument("Berger lambda must be positive".into())),
            MetricKind::LeftInvariant { lambdas } if lambdas.iter().any(|l| *l <= 0.0) => {
                return Err(Error::InvalidArgument("left-invariant lambdas must be positive".into()))
            }
            MetricKind::RoundPlusTensor { h: TensorSource::Table(t), .. } if t.terms.iter().any(|term| term.i > 2 || term.j > 2) => {
                return Err(Error::InvalidArgument("tensor term index out of range 0..=2".into()))
            }
            _ => {}
        }
        let min_eig = validity_design()
            .iter()
            .map(|p| self.frame_metric(p.q()).map(|g| tensor::sym_eigenvalues(&g)[0]))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig <= VALIDITY_FLOOR {
            return Err(Error::NonPositiveDefinite { min_eig });
        }
        Ok(())
    }
}

fn diag(a: f64, b: f64, c: f64) -> Mat3 {
    [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
}

/// The 24-cell rotated off the chart antipode, plus two generic points.
pub fn validity_design() -> Vec<S3Point> {
    let r = quat::normalize(&[0.95, 0.11, -0.19, 0.23]);
    let mut pts: Vec<S3Point> = quat::cell24().iter().map(|p| p.left_translate(&r)).collect();
    pts.push(S3Point::new([0.2, 0.4, -0.7, 0.5]));
    pts.push(S3Point::new([-0.6, 0.1, 0.3, -0.7]));
    pts
}

/// Evaluates the metric at `pt` as a matrix in the left-invariant frame.
pub fn eval_metric(family: &MetricFamily, pt: &S3Point) -> Result<nalgebra::Matrix3<f64>> {
    let g = family.frame_metric(pt.q())?;
    let min_eig = tensor::sym_eigenvalues(&g)[0];
    if min_eig <= 0.0 {
        return Err(Error::NonPositiveDefinite { min_eig });
    }
    Ok(nalgebra::Matrix3::from_fn(|i, j| g[i][j]))
}

/// Pulls a chart tensor `x ↦ h_ij(x)` back to the frame at `q`.
fn chart_tensor(q: &Quat, h: impl Fn(&[f64; 3]) -> Mat3) -> Result<Mat3> {
    let s1 = 1.0 + q[0];
    if s1 < CHART_EXCLUSION {
        return Err(Error::ChartSingularity);
    }
    let v = [q[1], q[2], q[3]];
    let x = v.map(|c| c / s1);
    // Differential of the chart applied to E_a = q · e_a.
    let d: [[f64; 3]; 3] = std::array::from_fn(|a| {
        let e = quat::frame_vector(q, a);
        std::array::from_fn(|i| e[i + 1] / s1 - v[i] * e[0] / (s1 * s1))
    });
    let hx = h(&x);
    Ok(std::array::from_fn(|a| std::array::from_fn(|b| tensor::quad(&hx, &d[a], &d[b]))))
}

fn envelope(x: &[f64; 3]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    4.0 / ((1.0 + r2) * (1.0 + r2)) * (-r2).exp()
}

fn bump(x: &[f64; 3]) -> Mat3 {
    let k = envelope(x);
    std::array::from_fn(|i| std::array::from_fn(|j| k * (x[i] * x[j] + if i == j { x[0] } else { 0.0 })))
}

fn table(t: &CoefficientTable, x: &[f64; 3]) -> Mat3 {
    let k = envelope(x);
    let mut h = tensor::zeros3();
    for term in &t.terms {
        let mono = term.coeff * (0..3).map(|a| x[a].powi(term.powers[a] as i32)).product::<f64>();
        h[term.i][term.j] += k * mono;
        if term.i != term.j {
            h[term.j][term.i] += k * mono;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt() -> S3Point {
        S3Point::new([0.3, -0.5, 0.2, 0.7])
    }

    #[test]
    fn round_and_trivial_group_metrics_are_identity() {
        let g = eval_metric(&MetricFamily::round(), &pt()).unwrap();
        assert_eq!(g, nalgebra::Matrix3::identity());
        let b = MetricFamily::new(MetricKind::Berger { lambda: 1.0 }, 1.0).unwrap();
        assert_eq!(eval_metric(&b, &pt()).unwrap(), nalgebra::Matrix3::identity());
        for kind in [
            MetricKind::RoundPlusTensor {
                h: TensorSource::Builtin(BuiltinTensor::Bump),
                scale: 1.0,
            },
            MetricKind::LeftInvariant { lambdas: [1.3, 0.8, 1.1] },
        ] {
            let f = MetricFamily::new(kind, 0.0).unwrap();
            assert_eq!(eval_metric(&f, &pt()).unwrap(), nalgebra::Matrix3::identity());
        }
    }

    #[test]
    fn left_invariant_is_diagonal_lambda() {
        let f = MetricFamily::new(MetricKind::LeftInvariant { lambdas: [1.3, 0.8, 1.1] }, 1.0).unwrap();
        for p in validity_design() {
            let g = eval_metric(&f, &p).unwrap();
            assert_eq!(g, nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.3, 0.8, 1.1)));
        }
    }

    #[test]
    fn chart_constant_matches_frame_constant() {
        // κ δ_ij in the chart is the round metric itself.
        let t = CoefficientTable {
            terms: (0..3)
                .map(|i| TensorTerm {
                    i,
                    j: i,
                    coeff: 1.0,
                    powers: [0; 3],
                })
                .collect(),
        };
        let f = MetricFamily::new(
            MetricKind::RoundPlusTensor {
                h: TensorSource::Table(t),
                scale: 1.0,
            },
            0.2,
        )
        .unwrap();
        let q = pt();
        let x2 = {
            let s1 = 1.0 + q.q()[0];
            (q.q()[1] * q.q()[1] + q.q()[2] * q.q()[2] + q.q()[3] * q.q()[3]) / (s1 * s1)
        };
        let g = f.frame_metric(q.q()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = IDENTITY[i][j] * (1.0 + 0.2 * (-x2).exp());
                assert!((g[i][j] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn validity_and_chart_errors() {
        let f = MetricFamily::berger_direction(-0.95);
        assert!(matches!(f, Err(Error::NonPositiveDefinite { .. })));
        let bump = MetricFamily::new(
            MetricKind::RoundPlusTensor {
                h: TensorSource::Builtin(BuiltinTensor::Bump),
                scale: 1.0,
            },
            0.05,
        )
        .unwrap();
        assert_eq!(bump.frame_metric(&[-1.0, 0.0, 0.0, 0.0]), Err(Error::ChartSingularity));
        assert!(!bump.is_left_invariant() && bump.uses_chart());
    }

    #[test]
    fn json_round_trip() {
        let f = MetricFamily::from_json(r#"{"kind":"berger","lambda":1.2,"epsilon":0.05}"#).unwrap();
        assert_eq!(f.kind, MetricKind::Berger { lambda: 1.2 });
        let t = MetricFamily::from_json(r#"{"kind":"round_plus_tensor","h":"bump","epsilon":0.05}"#).unwrap();
        assert!(t.uses_chart());
        let c = MetricFamily::from_json(r#"{"kind":"round_plus_tensor","h":{"terms":[{"i":0,"j":1,"coeff":0.5,"powers":[1,0,0]}]},"epsilon":0.1}"#).unwrap();
        let back: MetricFamily = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(MetricFamily::from_json(r#"{"kind":"berger"}"#).is_err());
        let d = MetricFamily::from_json(r#"{"kind":"left_invariant","lambdas":[1.1,1.0,0.9]}"#).unwrap();
        assert_eq!(d.epsilon, 1.0);
    }

    #[test]
    fn homothety_scales_metric() {
        let f = MetricFamily::homothety(1.1).unwrap();
        let g = f.frame_metric(pt().q()).unwrap();
        assert!((g[1][1] - 1.21).abs() < 1e-14);
        assert!(f.is_left_invariant());
    }
}
