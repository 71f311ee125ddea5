use proptest::prelude::*;
use willmore_core::asymptotics::{small_radius_config, w_profile};
use willmore_core::curvature::{curvature_bundle, traceless_ricci_linearization};
use willmore_core::fit::power_fit;
use willmore_core::metric::{BuiltinTensor, MetricFamily, MetricKind, TensorSource};
use willmore_core::quat::S3Point;
use willmore_core::reduction::{Reducer, SolverConfig};
use willmore_core::spectral::SphereGrid;
use willmore_core::surface::graph_sphere;

fn small() -> SolverConfig {
    SolverConfig { lmax: 8, ..Default::default() }
}

fn bump(eps: f64) -> MetricFamily {
    MetricFamily::new(
        MetricKind::RoundPlusTensor {
            h: TensorSource::Builtin(BuiltinTensor::Bump),
            scale: 1.0,
        },
        eps,
    )
    .unwrap()
}

fn unit_quat() -> impl Strategy<Value = S3Point> {
    proptest::array::uniform4(-1.0f64..1.0)
        .prop_filter("nonzero", |q| q.iter().map(|x| x * x).sum::<f64>() > 0.05)
        .prop_map(S3Point::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reduced_functional_is_left_invariant_and_nonnegative(p in unit_quat(), eps in -0.08f64..0.08) {
        let red = Reducer::new(&MetricFamily::berger_direction(eps).unwrap(), &small()).unwrap();
        let a = red.phi(&p, 1.1).unwrap();
        let b = red.phi(&S3Point::identity(), 1.1).unwrap();
        prop_assert!((a.phi - b.phi).abs() < 1e-10, "{} {}", a.phi, b.phi);
        prop_assert!(a.phi >= -1e-12);
    }

    #[test]
    fn ricci_decomposition_holds(p in unit_quat(), l in proptest::array::uniform3(0.6f64..1.6), eps in -0.1f64..0.1) {
        let li = MetricFamily::new(MetricKind::LeftInvariant { lambdas: l }, 1.0).unwrap();
        prop_assert!(curvature_bundle(&li, &p).unwrap().ricci_decomposition_residual() < 1e-10);
        prop_assume!(p.q()[0] > -0.9);
        let b = curvature_bundle(&bump(eps), &p).unwrap();
        prop_assert!(b.ricci_decomposition_residual() < 1e-6);
        prop_assert!(b.ric0_trace().abs() < 1e-6);
    }
}

#[test]
fn second_order_coefficient_is_the_linearization() {
    let probe = [-0.04, -0.02, -0.01, 0.01, 0.02, 0.04];
    let p = S3Point::new([0.9, 0.2, -0.3, 0.25]);
    for (fam, odd_tol) in [(MetricFamily::berger_direction(1.0).unwrap(), 1e-8), (bump(1.0), f64::INFINITY)] {
        let y: Vec<f64> = probe.iter().map(|e| curvature_bundle(&fam.with_epsilon(*e), &p).unwrap().ric0_norm2).collect();
        let f = power_fit(&probe, &y, &[2, 3, 4]).unwrap();
        let t2 = traceless_ricci_linearization(&fam, &p).unwrap().t2;
        assert!((f.coeffs[0] - t2).abs() < 1e-4 * t2.max(1.0), "{f:?} vs {t2}");
        assert!(f.coeffs[1].abs() < odd_tol, "{f:?}");
    }
}

#[test]
fn berger_residuals_decrease_and_w_is_lipschitz_in_eps() {
    let p = S3Point::identity();
    let eps = [0.02, 0.04, 0.06, 0.08];
    let mut ws = Vec::new();
    for e in eps {
        let r = Reducer::new(&MetricFamily::berger_direction(e).unwrap(), &small())
            .unwrap()
            .phi(&p, 0.8)
            .unwrap();
        assert!(r.residual_history.windows(2).skip(2).all(|w| w[1] < w[0]), "{:?}", r.residual_history);
        ws.push(r.w);
    }
    let mut slopes = Vec::new();
    for i in 0..eps.len() {
        for j in i + 1..eps.len() {
            slopes.push(ws[i].axpy(-1.0, &ws[j]).norm() / (eps[j] - eps[i]));
        }
    }
    let (lo, hi) = slopes.iter().fold((f64::INFINITY, 0.0f64), |(a, b), s| (a.min(*s), b.max(*s)));
    assert!(hi / lo < 1.3, "{slopes:?}");
}

#[test]
fn profile_seed_and_zero_seed_agree() {
    let fam = MetricFamily::berger_direction(0.05).unwrap();
    let cfg = small_radius_config(&small());
    let red = Reducer::new(&fam, &cfg).unwrap();
    let p = S3Point::identity();
    let grid = SphereGrid::new(cfg.grid_lmax());
    let seed = w_profile(&fam, &p, 0.2, &grid, cfg.lmax).unwrap().project_kperp();
    let a = red.solve(&p, 0.2).unwrap();
    let b = red.solve_from(&p, 0.2, &seed).unwrap();
    assert!(a.converged && b.converged);
    assert!(a.w.axpy(-1.0, &b.w).norm() < 10.0 * cfg.tol);
}

#[test]
fn small_spheres_look_euclidean() {
    let fam = MetricFamily::berger_direction(0.3).unwrap();
    let grid = std::sync::Arc::new(SphereGrid::new(10));
    let rhos = [0.1, 0.05, 0.025];
    let mut h = Vec::new();
    let mut a2 = Vec::new();
    for rho in rhos {
        let s = graph_sphere(&fam, &S3Point::identity(), rho, &willmore_core::spectral::SphereField::zeros(6), grid.clone()).unwrap();
        let n = s.nodes.len() as f64;
        h.push(rho * s.nodes.iter().map(|x| x.h).sum::<f64>() / n);
        a2.push(rho * rho * s.nodes.iter().map(|x| x.a_norm2).sum::<f64>() / n);
    }
    // Richardson: the corrections are even in ρ.
    let h0 = power_fit(&rhos, &h, &[0, 2, 4]).unwrap().coeffs[0];
    let a0 = power_fit(&rhos, &a2, &[0, 2, 4]).unwrap().coeffs[0];
    assert!((h0 - 2.0).abs() < 1e-6, "{h0}");
    assert!((a0 - 2.0).abs() < 1e-6, "{a0}");
}
