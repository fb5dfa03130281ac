use proptest::prelude::*;

use probode::bayes::Prior;
use probode::calibration::bhattacharyya_gaussian;
use probode::fem1d::{assemble_deterministic, solve_system, CoefficientField, EllipticProblem, Mesh1D};
use probode::stats::log_mean_exp;

proptest! {
    #[test]
    fn log_mean_exp_lies_between_extremes(xs in prop::collection::vec(-700.0f64..700.0, 1..30)) {
        let lme = log_mean_exp(&xs);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lme >= lo - 1e-9 && lme <= hi + 1e-9);
    }

    #[test]
    fn bhattacharyya_symmetric_nonnegative(
        m1 in -5.0f64..5.0, m2 in -5.0f64..5.0, v1 in 1e-6f64..10.0, v2 in 1e-6f64..10.0,
    ) {
        let a = bhattacharyya_gaussian(m1, v1, m2, v2).unwrap();
        let b = bhattacharyya_gaussian(m2, v2, m1, v1).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn prior_internal_roundtrip(mu in -3.0f64..3.0, sd in 0.1f64..2.0, x in 1e-3f64..1e3) {
        let p = Prior::LogNormal { log_mean: mu, log_sd: sd };
        let z = p.to_internal(x).unwrap();
        prop_assert!((p.from_internal(z) - x).abs() <= 1e-12 * x);
        prop_assert!(p.to_internal(-x).is_none());
    }

    #[test]
    fn linear_fem_matches_exact_at_nodes(kappa in prop::array::uniform9(0.2f64..5.0), pieces in 1usize..5) {
        let problem = EllipticProblem::standard(CoefficientField::from_free(&kappa).unwrap());
        let exact = probode::fem1d::ExactSolution::new(&problem);
        let mesh = Mesh1D::new(10 * pieces).unwrap();
        let sol = solve_system(&assemble_deterministic(&mesh, &problem)).unwrap();
        for j in 0..=mesh.n_elements() {
            let x = mesh.node(j);
            prop_assert!((sol.nodal[j] - exact.eval(x)).abs() < 1e-10 * (1.0 + exact.eval(x).abs()));
        }
    }
}
