//! Browser bindings: Berger curvature, pointwise maps of the reduced surface
//! and the reduced functional along the radius.

use std::f64::consts::PI;
use std::sync::Arc;

use wasm_bindgen::prelude::*;
use willmore_core::curvature::curvature_bundle;
use willmore_core::metric::{MetricFamily, MetricKind};
use willmore_core::quat::S3Point;
use willmore_core::reduction::{Reducer, SolverConfig};
use willmore_core::spectral::SphereGrid;
use willmore_core::surface::graph_sphere;
use willmore_core::{Error, Result};

/// Largest band limit offered to the page.
const MAX_LMAX: usize = 12;

fn berger(lambda: f64, epsilon: f64) -> Result<MetricFamily> {
    MetricFamily::new(MetricKind::Berger { lambda }, epsilon)
}

fn solver(lmax: usize) -> Result<SolverConfig> {
    if !(2..=MAX_LMAX).contains(&lmax) {
        return Err(Error::InvalidArgument(format!("lmax must lie in [2, {MAX_LMAX}]")));
    }
    Ok(SolverConfig { lmax, ..Default::default() })
}

/// Scalar curvature, `|Ric̊|²` and the frame components of `Ric` of the
/// Berger metric `diag(λ, 1, 1)`, as JSON.
pub fn curvature_json(lambda: f64) -> Result<String> {
    let b = curvature_bundle(&berger(lambda, 1.0)?, &S3Point::identity())?;
    let ric = [b.ric[0][0], b.ric[1][1], b.ric[2][2]];
    Ok(serde_json::json!({ "scalar": b.scalar, "ric0_norm2": b.ric0_norm2, "ric_diagonal": ric }).to_string())
}

/// Nodal values on the latitude-longitude grid, row-major by latitude.
#[wasm_bindgen]
pub struct SurfaceMap {
    nlat: usize,
    nlon: usize,
    values: Vec<f64>,
    phi: f64,
}

#[wasm_bindgen]
impl SurfaceMap {
    #[wasm_bindgen(getter)]
    pub fn nlat(&self) -> usize {
        self.nlat
    }

    #[wasm_bindgen(getter)]
    pub fn nlon(&self) -> usize {
        self.nlon
    }

    #[wasm_bindgen(getter)]
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// `|A°|²` (`quantity = "a0"`) or `H` (`"h"`) on the reduced surface over the
/// sphere of radius `rho` centered at the identity.
pub fn surface_map_native(lambda: f64, epsilon: f64, rho: f64, quantity: &str, lmax: usize) -> Result<SurfaceMap> {
    let fam = berger(lambda, epsilon)?;
    let cfg = solver(lmax)?;
    let p = S3Point::identity();
    let r = Reducer::new(&fam, &cfg)?.phi(&p, rho)?;
    let grid = Arc::new(SphereGrid::new(cfg.grid_lmax()));
    let s = graph_sphere(&fam, &p, rho, &r.w, grid.clone())?;
    let values = match quantity {
        "a0" => s.nodes.iter().map(|n| n.a0_norm2).collect(),
        "h" => s.nodes.iter().map(|n| n.h).collect(),
        _ => return Err(Error::InvalidArgument(format!("unknown quantity {quantity:?}"))),
    };
    Ok(SurfaceMap {
        nlat: grid.nlat(),
        nlon: grid.nlon(),
        values,
        phi: r.phi,
    })
}

/// `[ρ₀, Φ₀, ρ₁, Φ₁, …]` at `n` radii spread over `[δ, π − δ]`, with `NaN`
/// where the auxiliary equation is not solved.
pub fn phi_curve_native(lambda: f64, epsilon: f64, n: usize, lmax: usize) -> Result<Vec<f64>> {
    if !(2..=200).contains(&n) {
        return Err(Error::InvalidArgument("n must lie in [2, 200]".into()));
    }
    let cfg = solver(lmax)?;
    let reducer = Reducer::new(&berger(lambda, epsilon)?, &cfg)?;
    let (lo, hi) = (cfg.delta, PI - cfg.delta);
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let rho = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        let phi = match reducer.phi(&S3Point::identity(), rho) {
            Ok(r) => r.phi,
            Err(Error::NoConvergence { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        out.extend([rho, phi]);
    }
    Ok(out)
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn berger_curvature(lambda: f64) -> std::result::Result<String, JsError> {
    curvature_json(lambda).map_err(js)
}

#[wasm_bindgen]
pub fn surface_map(lambda: f64, epsilon: f64, rho: f64, quantity: &str, lmax: usize) -> std::result::Result<SurfaceMap, JsError> {
    surface_map_native(lambda, epsilon, rho, quantity, lmax).map_err(js)
}

#[wasm_bindgen]
pub fn phi_curve(lambda: f64, epsilon: f64, n: usize, lmax: usize) -> std::result::Result<Vec<f64>, JsError> {
    phi_curve_native(lambda, epsilon, n, lmax).map_err(js)
}
