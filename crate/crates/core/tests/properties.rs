use std::sync::Arc;

use gaugeopt::apps::{haar_analysis, haar_synthesis, pr_make_operator, MaskKind, PhaseRetrievalSpec};
use gaugeopt::dual::{constraint_value, dual_objective, project_feasible, DualProblem};
use gaugeopt::eig::EigRequest;
use gaugeopt::harness::{metric_xerr, metric_xerr_vector};
use gaugeopt::linalg::{deinterleave, interleave, random_cmat, random_cvec, random_rvec};
use gaugeopt::operator::{DenseMap, MeasurementMap};
use gaugeopt::recover::{balance_blocks, recover_s};
use gaugeopt::{CMat, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_lands_in_the_feasible_set(seed in any::<u64>(), m in 1usize..12, frac in 0.0f64..0.95, scale in 0.01f64..100.0) {
        let mut r = rng(seed);
        let b = random_rvec(&mut r, m);
        let eps = frac * b.norm();
        let y = random_rvec(&mut r, m) * scale;
        let p = project_feasible(&b, eps, &y);
        prop_assert!(constraint_value(&b, eps, &p) >= 1.0 - 1e-8);
        prop_assert!((project_feasible(&b, eps, &p) - &p).norm() <= 1e-8 * p.norm().max(1.0));
        if constraint_value(&b, eps, &y) >= 1.0 {
            prop_assert!((&p - &y).norm() <= 1e-10 * y.norm().max(1.0));
        }
    }

    #[test]
    fn projection_is_no_farther_than_any_feasible_point(seed in any::<u64>(), m in 2usize..8) {
        let mut r = rng(seed);
        let b = random_rvec(&mut r, m);
        let eps = 0.3 * b.norm();
        let y = random_rvec(&mut r, m);
        let p = project_feasible(&b, eps, &y);
        for _ in 0..20 {
            let q = project_feasible(&b, eps, &(random_rvec(&mut r, m) * 5.0));
            prop_assert!((&p - &y).norm() <= (&q - &y).norm() + 1e-9);
        }
    }

    #[test]
    fn phase_adjoint_identity(seed in any::<u64>(), n in 1usize..40, l in 1usize..5, octanary in any::<bool>()) {
        let kind = if octanary { MaskKind::Octanary } else { MaskKind::Gaussian };
        let map = pr_make_operator(&PhaseRetrievalSpec::random(n, l, kind, seed)).unwrap();
        let mut r = rng(seed ^ 1);
        let z = random_cmat(&mut r, n, 1);
        let y = random_rvec(&mut r, map.m());
        let lhs = y.dot(&map.forward_factored(&z).unwrap());
        let rhs = z.column(0).dotc(&map.adjoint_apply(&y, &z.column(0).into_owned()).unwrap()).re;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn forward_is_nonnegative_for_psd_arguments(seed in any::<u64>(), n in 1usize..24, l in 1usize..4) {
        let map = pr_make_operator(&PhaseRetrievalSpec::random(n, l, MaskKind::Gaussian, seed)).unwrap();
        let z = random_cmat(&mut rng(seed), n, 2);
        prop_assert!(map.forward_factored(&z).unwrap().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn haar_round_trip(seed in any::<u64>(), k in 0u32..8) {
        let n = 1usize << k;
        let x = random_rvec(&mut rng(seed), n);
        let c = haar_analysis(x.as_slice()).unwrap();
        let back = haar_synthesis(&c).unwrap();
        let err: f64 = back.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let energy: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-12 * x.norm().max(1.0));
        prop_assert!((energy - x.norm()).abs() <= 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn lifted_error_ignores_global_phase(seed in any::<u64>(), n in 1usize..30, theta in 0.0f64..6.3) {
        let x = random_cmat(&mut rng(seed), n, 1);
        let rotated = &x * C64::from_polar(1.0, theta);
        prop_assert!(metric_xerr(&x, &rotated) <= 1e-7);
        prop_assert!(metric_xerr_vector(&x.column(0).into_owned(), &rotated.column(0).into_owned()) <= 1e-10);
    }

    #[test]
    fn block_balancing_keeps_the_product(seed in any::<u64>(), n1 in 1usize..10, n2 in 1usize..10, s in 0.01f64..100.0) {
        let mut z = random_cmat(&mut rng(seed), n1 + n2, 1);
        z.rows_mut(0, n1).scale_mut(s);
        let bal = balance_blocks(&z, n1);
        let before = z.rows(0, n1) * z.rows(n1, n2).adjoint();
        let after = bal.rows(0, n1) * bal.rows(n1, n2).adjoint();
        prop_assert!((&before - &after).norm() <= 1e-10 * before.norm().max(1e-300));
        prop_assert!(bal.norm_squared() <= z.norm_squared() * (1.0 + 1e-12));
    }

    #[test]
    fn rank_one_recovery_is_nonnegative(seed in any::<u64>(), n in 2usize..7) {
        let mut r = rng(seed);
        let m = 3 * n;
        let map = Arc::new(DenseMap::random(&mut r, n, m));
        let prob = DualProblem::new(map, random_rvec(&mut r, m), 0.0).unwrap();
        let y = random_rvec(&mut r, m);
        let (_, eig) = dual_objective(&prob, &y, &EigRequest::default(), None).unwrap();
        let rec = recover_s(&prob, &eig, &y, 1).unwrap();
        prop_assert!(rec.s_scalar.unwrap() >= 0.0);
        let fitted = prob.map.forward_factored(&rec.factor.z).unwrap();
        let target = prob.shifted_target(&y);
        prop_assert!((fitted - &target).norm() <= target.norm() + 1e-12);
    }

    #[test]
    fn interleave_round_trip(seed in any::<u64>(), n in 0usize..20) {
        let v = random_cvec(&mut rng(seed), n);
        prop_assert_eq!(deinterleave(&interleave(v.as_slice())), v.as_slice().to_vec());
    }
}

#[test]
fn zero_vector_has_unit_vector_error() {
    let x = random_cmat(&mut rng(0), 4, 1).column(0).into_owned();
    let z = CMat::zeros(4, 1).column(0).into_owned();
    assert_eq!(metric_xerr_vector(&x, &z), 1.0);
}
