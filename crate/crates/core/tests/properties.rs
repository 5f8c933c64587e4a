//! Property tests for the structural invariants of θ, `f`, `g` and the
//! discrete operators.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use quasidual::dual_transform::DualTransform;
use quasidual::mesh::DomainMesh;
use quasidual::nonlinearity::{require_positive, Nonlinearity};
use quasidual::quadrature::integrate;
use quasidual::solver::{invert_u, recover_u, Problem, SolveConfig, Start};
use quasidual::theta::{catalog, ThetaSpec};

fn transforms() -> &'static [Arc<DualTransform>] {
    static T: OnceLock<Vec<Arc<DualTransform>>> = OnceLock::new();
    T.get_or_init(|| {
        catalog(1.5)
            .unwrap()
            .into_iter()
            .map(|spec| Arc::new(DualTransform::with_defaults(spec).unwrap()))
            .collect()
    })
}

fn theta1() -> Arc<DualTransform> {
    transforms()[0].clone()
}

/// Magnitudes spread over many decades.
fn magnitude() -> impl Strategy<Value = f64> {
    (-6.0f64..5.5).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn catalog_theta_is_even_and_at_least_one(i in 0usize..6, s in -1e3f64..1e3) {
        let spec = transforms()[i].theta();
        prop_assert_eq!(spec.eval(s), spec.eval(-s));
        prop_assert!(spec.eval(s) >= 1.0);
        prop_assert_eq!(spec.deriv(s), -spec.deriv(-s));
    }

    #[test]
    fn transform_inequalities(i in 0usize..6, s in magnitude()) {
        let tr = &transforms()[i];
        let (f, df) = tr.f_and_prime(s).unwrap();
        prop_assert!(df > 0.0 && df <= 1.0);
        prop_assert!(f <= s * (1.0 + 1e-12));
        let m = df * s;
        prop_assert!(m >= 0.5 * f * (1.0 - 1e-9) && m <= f * (1.0 + 1e-9), "{} {} {}", s, f, m);
    }

    #[test]
    fn transform_is_odd_and_invertible(i in 0usize..6, s in magnitude()) {
        let tr = &transforms()[i];
        let f = tr.f_eval(s).unwrap();
        prop_assert_eq!(tr.f_eval(-s).unwrap(), -f);
        let back = tr.f_inverse(f).unwrap();
        prop_assert!((back - s).abs() <= 1e-8 * s.max(1.0), "{} -> {} -> {}", s, f, back);
    }

    #[test]
    fn sqrt_growth_is_nondecreasing(s in magnitude(), k in 1.0001f64..3.0) {
        let tr = theta1();
        let t = (s * k).min(tr.s_max());
        let a = tr.f_eval(s).unwrap() / s.sqrt();
        let b = tr.f_eval(t).unwrap() / t.sqrt();
        prop_assert!(b >= a * (1.0 - 1e-9));
    }

    #[test]
    fn g_is_odd_and_g_prime_even(i in 0usize..6, q in 0.3f64..8.0, s in magnitude()) {
        let nl = Nonlinearity::new(q, transforms()[i].clone()).unwrap();
        prop_assert_eq!(nl.g(-s).unwrap(), -nl.g(s).unwrap());
        prop_assert_eq!(nl.g_prime(-s).unwrap(), nl.g_prime(s).unwrap());
        prop_assert_eq!(nl.G(-s).unwrap(), nl.G(s).unwrap());
    }

    #[test]
    fn primitive_matches_quadrature(q in 0.5f64..6.0, s in 0.01f64..50.0) {
        let nl = Nonlinearity::new(q, theta1()).unwrap();
        let quad = integrate(|x| nl.g(x).unwrap(), 0.0, s, 1e-12, 0.0).unwrap();
        let big = nl.G(s).unwrap();
        prop_assert!((big - quad).abs() <= 1e-7 * big.max(1e-300), "{} vs {}", big, quad);
    }

    #[test]
    fn slope_envelope_below_three(q in 0.5f64..2.9, s in 1.0f64..1e6) {
        // g(s)/s ≤ l^{q+1} s^{(q-3)/2}, l = (8/α²)^{1/4}
        let nl = Nonlinearity::new(q, theta1()).unwrap();
        let l = (8.0f64 / 2.0).powf(0.25);
        let bound = l.powf(q + 1.0) * s.powf((q - 3.0) / 2.0);
        prop_assert!(nl.slope(s).unwrap() <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn recovery_round_trip(vals in prop::collection::vec(-1e4f64..1e4, 1..20)) {
        let tr = theta1();
        let u = recover_u(&tr, &vals).unwrap();
        for (a, b) in u.iter().zip(&vals) {
            prop_assert!(a.abs() <= b.abs() * (1.0 + 1e-12));
        }
        let back = invert_u(&tr, &u).unwrap();
        for (a, b) in back.iter().zip(&vals) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn nonpositive_lambda_is_refused(l in -1e3f64..=0.0) {
        prop_assert!(require_positive(l).unwrap_err().is_refusal());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_is_symmetric(
        n in 3usize..12,
        dim2 in any::<bool>(),
        seed in prop::collection::vec(-1.0f64..1.0, 288),
    ) {
        let mesh = if dim2 {
            DomainMesh::rectangle((0.0, 1.0), (0.0, 2.0), n).unwrap()
        } else {
            DomainMesh::unit_interval(n).unwrap()
        };
        let len = mesh.len();
        let (a, b) = (&seed[..len], &seed[144..144 + len]);
        let la = mesh.laplacian_apply(a).unwrap();
        let lb = mesh.laplacian_apply(b).unwrap();
        let lhs = mesh.inner(&la, b);
        let rhs = mesh.inner(a, &lb);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (lhs.abs() + 1.0));
        prop_assert!(mesh.inner(&la, a) > 0.0 || a.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn maximum_principle(
        n in 3usize..30,
        k in 0.0f64..50.0,
        rhs in prop::collection::vec(0.0f64..1.0, 30),
    ) {
        let mesh = DomainMesh::unit_interval(n).unwrap();
        let x = mesh.solve_shifted_poisson(&rhs[..n], k, None).unwrap();
        prop_assert!(x.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn sublinear_solution_is_unique(lambda in 0.05f64..50.0) {
        let p = Problem::new(DomainMesh::unit_interval(60).unwrap(), Nonlinearity::new(0.5, theta1()).unwrap()).unwrap();
        let cfg = SolveConfig::new(lambda).with_tol(1e-10);
        let a = p.solve(&cfg, Start::FromSub).unwrap();
        let b = p.solve(&cfg, Start::FromSuper).unwrap();
        prop_assert!(a.converged && b.converged);
        let gap = a.v.iter().zip(b.v.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(gap <= 1e-6 * b.sup_v);
        prop_assert!(a.residual_sup <= a.tol * (1.0 + lambda));
        prop_assert!(a.sup_u <= a.sup_v);
    }
}

#[test]
fn unit_theta_is_catalogued_last() {
    let names: Vec<String> = transforms().iter().map(|t| t.theta().name().to_string()).collect();
    assert_eq!(names.last().map(String::as_str), Some(ThetaSpec::unit().name()));
}
