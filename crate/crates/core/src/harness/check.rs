//! Property and oracle suite behind the `check` subcommand.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::apps::deconv::{bd_make_operator, BlindDeconvSpec, SignalBasis};
use crate::apps::phase::{pr_make_operator, MaskKind, PhaseRetrievalSpec};
use crate::apps::weighted::{weighted_nuclear_dual, weighted_trace_dual, DenseWeight, WeightedMap};
use crate::dual::{
    constraint_value, dual_objective, infeasibility_certificate, project_feasible, subgradient_with, DualProblem,
    SubgradientChoice, CERTIFICATE_TOL,
};
use crate::eig::{rightmost_eigpairs, EigRequest, WeightFactor};
use crate::error::Result;
use crate::harness::instance::{gen_certified_noisy_instance, Truth};
use crate::linalg::{hermitian_eig_desc, random_cmat, random_cvec, random_hermitian, random_rvec, CMat, CVec, RVec, C64};
use crate::operator::{embed_asymmetric, AsymmetricMap, DenseAsymmetricMap, DenseMap, MeasurementMap};
use crate::recover::{dense_adjoint, optimality_terms, primal_objective_grad, recover_s};

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn real_dot(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Worst relative mismatch of `<A(Z Z^*), y> = <Z, (A^* y) Z>`.
fn hermitian_adjoint_error(map: &dyn MeasurementMap, rng: &mut ChaCha8Rng, trials: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let z = random_cmat(rng, map.n(), 2);
        let y = random_rvec(rng, map.m());
        let lhs = map.forward_factored(&z)?.dot(&y);
        let rhs = real_dot(&z, &map.adjoint_apply_cols(&y, &z)?);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    Ok(worst)
}

/// Worst relative mismatch of both asymmetric adjoint identities.
fn asymmetric_adjoint_error(map: &dyn AsymmetricMap, rng: &mut ChaCha8Rng, trials: usize) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let u = random_cvec(rng, map.n1());
        let v = random_cvec(rng, map.n2());
        let y = if map.real_measurements() {
            random_rvec(rng, map.m()).map(C64::from)
        } else {
            random_cvec(rng, map.m())
        };
        let z1 = CMat::from_column_slice(u.len(), 1, u.as_slice());
        let z2 = CMat::from_column_slice(v.len(), 1, v.as_slice());
        let ax = map.apply_forward(&z1, &z2);
        // sum_k y_k conj(A(u v^*)_k) = u^* (A^* y) v
        let lhs: C64 = y.iter().zip(ax.iter()).map(|(a, b)| a * b.conj()).sum();
        let lhs = if map.real_measurements() { C64::from(lhs.re) } else { lhs };
        let rhs = u.dotc(&map.apply_adjoint(&y, &v));
        let rhs_h = map.apply_adjoint_h(&y, &u).dotc(&v);
        let scale = lhs.norm().max(1.0);
        let (rhs, rhs_h) = if map.real_measurements() {
            (C64::from(rhs.re), C64::from(rhs_h.re))
        } else {
            (rhs, rhs_h)
        };
        worst = worst.max((lhs - rhs).norm() / scale).max((lhs - rhs_h).norm() / scale);
    }
    worst
}

fn check_adjoints() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut report = Vec::new();
    let mut worst = 0.0f64;
    let mut note = |name: &str, e: f64| {
        worst = worst.max(e);
        report.push(format!("{name}={e:.1e}"));
    };

    let dense = DenseMap::random(&mut rng, 7, 15);
    note("dense", hermitian_adjoint_error(&dense, &mut rng, 20)?);
    for kind in [MaskKind::Gaussian, MaskKind::Octanary] {
        let pr = pr_make_operator(&PhaseRetrievalSpec::random(16, 4, kind, 3))?;
        note(
            if kind == MaskKind::Gaussian { "phase-gaussian" } else { "phase-octanary" },
            hermitian_adjoint_error(&pr, &mut rng, 20)?,
        );
    }
    let bd: Arc<dyn AsymmetricMap> = Arc::new(bd_make_operator(&BlindDeconvSpec {
        m: 32,
        n1: 8,
        n2: 6,
        basis: SignalBasis::Haar,
        seed: 0,
    })?);
    note("deconv", asymmetric_adjoint_error(bd.as_ref(), &mut rng, 20));
    note("deconv-embedded", hermitian_adjoint_error(&embed_asymmetric(bd), &mut rng, 20)?);
    let da: Arc<dyn AsymmetricMap> = Arc::new(DenseAsymmetricMap::random(&mut rng, 4, 5, 12));
    note("dense-asym", asymmetric_adjoint_error(da.as_ref(), &mut rng, 20));
    note("dense-asym-embedded", hermitian_adjoint_error(&embed_asymmetric(da), &mut rng, 20)?);
    let c = random_spd(&mut rng, 7);
    let weight: Arc<dyn WeightFactor> = Arc::new(DenseWeight::from_matrix(&c)?);
    let inner: Arc<dyn MeasurementMap> = Arc::new(DenseMap::random(&mut rng, 7, 11));
    note("weighted", hermitian_adjoint_error(&WeightedMap::new(inner, weight)?, &mut rng, 20)?);

    Ok((worst <= 1e-10, report.join(" ")))
}

fn check_gradient() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let pr = pr_make_operator(&PhaseRetrievalSpec::random(8, 3, MaskKind::Gaussian, 5))?;
    let dense = DenseMap::random(&mut rng, 6, 12);
    let maps: [&dyn MeasurementMap; 2] = [&pr, &dense];
    let mut worst = 0.0f64;
    for map in maps {
        for _ in 0..10 {
            let z = random_cmat(&mut rng, map.n(), 2);
            let target = random_rvec(&mut rng, map.m());
            let d = random_cmat(&mut rng, map.n(), 2);
            let (_, grad, _) = primal_objective_grad(map, &z, &target)?;
            let h = 1e-5;
            let (fp, _, _) = primal_objective_grad(map, &(&z + &d * C64::from(h)), &target)?;
            let (fm, _, _) = primal_objective_grad(map, &(&z - &d * C64::from(h)), &target)?;
            let fd = (fp - fm) / (2.0 * h);
            let an = real_dot(&grad, &d);
            worst = worst.max((fd - an).abs() / an.abs().max(1.0));
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.1e}")))
}

fn check_projection() -> Result<(bool, String)> {
    let b = RVec::from_vec(vec![1.0, 0.0]);
    let z = project_feasible(&b, 0.5, &RVec::zeros(2));
    let analytic = (&z - RVec::from_vec(vec![2.0, 0.0])).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst_feas = 0.0f64;
    let mut worst_idem = 0.0f64;
    for trial in 0..500 {
        let b = random_rvec(&mut rng, 5);
        let eps = if trial % 2 == 0 { 0.0 } else { b.norm() * rng.random::<f64>() * 0.9 };
        let y = random_rvec(&mut rng, 5) * 3.0;
        let p = project_feasible(&b, eps, &y);
        worst_feas = worst_feas.max((1.0 - constraint_value(&b, eps, &p)).max(0.0));
        worst_idem = worst_idem.max((project_feasible(&b, eps, &p) - &p).norm());
    }
    let passed = analytic <= 1e-8 && worst_feas <= 1e-8 && worst_idem <= 1e-8;
    Ok((
        passed,
        format!("analytic {analytic:.1e}, feasibility {worst_feas:.1e}, idempotence {worst_idem:.1e}"),
    ))
}

fn check_subgradient() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let map = Arc::new(DenseMap::random(&mut rng, 6, 10));
    let prob = DualProblem::new(map, random_rvec(&mut rng, 10), 0.0)?;
    let req = EigRequest::default().with_tol(1e-12);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let y = random_rvec(&mut rng, 10);
        let y2 = random_rvec(&mut rng, 10);
        let (f, eig) = dual_objective(&prob, &y, &req, None)?;
        let g = subgradient_with(&prob, &eig, SubgradientChoice::Leading)?;
        let (f2, _) = dual_objective(&prob, &y2, &req, None)?;
        worst = worst.min(f2 - f - g.dot(&(&y2 - &y)));
    }
    Ok((worst >= -1e-9, format!("min slack {worst:.1e} over 100 pairs")))
}

fn check_lanczos() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for n in [4usize, 16, 33, 64] {
        let h = random_hermitian(&mut rng, n);
        let (dense, _) = hermitian_eig_desc(&h);
        let req = EigRequest::default().with_k(3.min(n)).with_tol(1e-12);
        let eig = rightmost_eigpairs(|v: &CVec| &h * v, n, &req)?;
        for (a, b) in eig.values.iter().zip(dense.iter()) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    Ok((worst <= 1e-8, format!("max eigenvalue error {worst:.1e}")))
}

fn check_rank_one_recovery() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let map = Arc::new(DenseMap::random(&mut rng, 6, 14));
        let prob = DualProblem::new(map.clone(), random_rvec(&mut rng, 14).map(f64::abs), 0.0)?;
        let y = random_rvec(&mut rng, 14);
        let (_, eig) = dual_objective(&prob, &y, &EigRequest::default().with_tol(1e-13), None)?;
        let rec = recover_s(&prob, &eig, &y, 1)?;
        // oracle: grid-free scalar least squares with the dense eigenvector
        let ay = dense_adjoint(map.as_ref(), &y)?;
        let (_, vecs) = hermitian_eig_desc(&ay);
        let u = vecs.columns(0, 1).into_owned();
        let a = map.forward_factored(&u)?;
        let target = prob.shifted_target(&y);
        let s_oracle = (a.dot(&target) / a.norm_squared()).max(0.0);
        let s = rec.s_scalar.unwrap_or(f64::NAN);
        worst = worst.max((s - s_oracle).abs() / s_oracle.max(1.0));
    }
    Ok((worst <= 1e-8, format!("max scale error {worst:.1e}")))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let g = random_cmat(rng, n, n);
    &g * g.adjoint() + CMat::identity(n, n) * C64::from(0.5)
}

fn check_weighted() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let req = EigRequest::default().with_tol(1e-13);

    let map: Arc<dyn MeasurementMap> = Arc::new(DenseMap::random(&mut rng, 6, 9));
    let c = random_spd(&mut rng, 6);
    let prob = DualProblem::new(map.clone(), random_rvec(&mut rng, 9), 0.0)?
        .with_weight(Arc::new(DenseWeight::from_matrix(&c)?))?;
    let y = random_rvec(&mut rng, 9);
    let (f, _) = weighted_trace_dual(&prob, &y, &req)?;
    // lambda_1 of the pencil via C^{-1/2} (A^* y) C^{-1/2}
    let (vals, vecs) = hermitian_eig_desc(&c);
    let d = CVec::from_iterator(6, vals.iter().map(|v| C64::from(1.0 / v.sqrt())));
    let s = &vecs * CMat::from_diagonal(&d) * vecs.adjoint();
    let (dense, _) = hermitian_eig_desc(&(&s * dense_adjoint(map.as_ref(), &y)? * &s));
    let trace_err = (f - dense[0]).abs() / dense[0].abs().max(1.0);

    let da = DenseAsymmetricMap::random(&mut rng, 4, 5, 10);
    let r1 = random_cmat(&mut rng, 4, 4) + CMat::identity(4, 4) * C64::from(2.0);
    let r2 = random_cmat(&mut rng, 5, 5) + CMat::identity(5, 5) * C64::from(2.0);
    let w1 = DenseWeight::from_factor(&r1)?;
    let w2 = DenseWeight::from_factor(&r2)?;
    let yc = random_cvec(&mut rng, 10);
    let ay = da.adjoint_matrix(&yc);
    let r1_inv = r1.try_inverse().expect("invertible factor");
    let r2_inv = r2.try_inverse().expect("invertible factor");
    let oracle = (&r1_inv * &ay * r2_inv.adjoint()).singular_values().max();
    let amap: Arc<dyn AsymmetricMap> = Arc::new(da);
    let (sigma, _) = weighted_nuclear_dual(amap, Arc::new(w1), Arc::new(w2), &yc, &req)?;
    let nuc_err = (sigma - oracle).abs() / oracle.max(1.0);

    Ok((
        trace_err <= 1e-10 && nuc_err <= 1e-10,
        format!("trace dual {trace_err:.1e}, nuclear dual {nuc_err:.1e}"),
    ))
}

fn check_certified_instances() -> Result<(bool, String)> {
    let req = EigRequest::default().with_tol(1e-13);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (n, l) in [(16usize, 6usize), (32, 9)] {
        for eta in [0.0, 0.001, 0.01] {
            for seed in 0..3u64 {
                let inst = gen_certified_noisy_instance(n, l, eta, seed)?;
                let Truth::Lifted { x0 } = &inst.truth else { continue };
                let y = inst.y_opt.as_ref().expect("certified instances carry a dual optimum");
                let t = optimality_terms(&inst.prob, x0, y, &req)?;
                worst = worst.max(t.max_violation()).max(t.gap.abs());
                count += 1;
            }
        }
    }
    Ok((worst <= 1e-8, format!("{count} instances, max violation {worst:.1e}")))
}

fn check_infeasibility() -> Result<(bool, String)> {
    // A_k = -e_k e_k^*, b = e_1: y = e_1 is feasible with A^* y <= 0
    let n = 3;
    let coeffs = (0..n)
        .map(|k| {
            let mut a = CMat::zeros(n, n);
            a[(k, k)] = C64::from(-1.0);
            a
        })
        .collect();
    let map = Arc::new(DenseMap::new(coeffs)?);
    let b = RVec::from_vec(vec![1.0, 0.0, 0.0]);
    let prob = DualProblem::new(map, b.clone(), 0.0)?;
    let (f, _) = dual_objective(&prob, &b, &EigRequest::default(), None)?;
    let fired = prob.is_feasible(&b) && infeasibility_certificate(f, CERTIFICATE_TOL);
    Ok((fired, format!("lambda_1 = {f:.1e}")))
}

/// Run every property and oracle check.
pub fn run_checks() -> Vec<CheckOutcome> {
    vec![
        outcome("adjoint consistency", check_adjoints()),
        outcome("primal gradient vs finite differences", check_gradient()),
        outcome("dual projection", check_projection()),
        outcome("subgradient inequality", check_subgradient()),
        outcome("lanczos vs dense eigensolver", check_lanczos()),
        outcome("rank-one recovery vs least squares", check_rank_one_recovery()),
        outcome("weighted dual identities", check_weighted()),
        outcome("certified instance optimality", check_certified_instances()),
        outcome("infeasibility certificate", check_infeasibility()),
    ]
}
