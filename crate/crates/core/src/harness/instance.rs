//! Seeded problem instances with known ground truth.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apps::deconv::{bd_make_operator, BlindDeconvMap, BlindDeconvSpec, SignalBasis};
use crate::apps::phase::{draw_masks, MaskKind, PhaseRetrievalMap};
use crate::dual::DualProblem;
use crate::eig::{rightmost_eigpairs, EigRequest};
use crate::error::{GaugeError, Result};
use crate::linalg::{hermitian_eig_desc, random_cvec, random_rvec, CMat, CVec, RVec, C64};
use crate::operator::{embed_asymmetric, AsymmetricMap, DenseMap, EmbeddedMap, MeasurementMap};
use crate::recover::dense_adjoint;

/// Ground truth for scoring a solve.
#[derive(Clone)]
pub enum Truth {
    /// `X0 = x0 x0^*` (or a general low-rank factor).
    Lifted { x0: CMat },
    /// `X0 = x1 x2^*` observed through an embedded asymmetric map.
    Bilinear {
        x1: CVec,
        x2: CVec,
        amap: Arc<BlindDeconvMap>,
        emb: Arc<EmbeddedMap>,
        /// Complex measurements before embedding.
        b: CVec,
    },
}

#[derive(Clone)]
pub struct Instance {
    pub prob: DualProblem,
    pub truth: Truth,
    /// Known dual optimum, when the generator constructs one.
    pub y_opt: Option<RVec>,
}

const MAX_RESAMPLES: usize = 100;

/// Phase retrieval with Gaussian masks and a Gaussian signal; `eps = 0`.
///
/// The signal is drawn before the masks, so instances sharing a seed share
/// `x0` across different mask counts.
pub fn gen_gaussian_instance(n: usize, l: usize, seed: u64) -> Result<Instance> {
    if n == 0 || l == 0 {
        return Err(GaugeError::Contract("need n, L >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = random_cvec(&mut rng, n);
    let masks = draw_masks(&mut rng, n, l, MaskKind::Gaussian);
    let map = Arc::new(PhaseRetrievalMap::new(masks)?);
    let x0 = CMat::from_column_slice(n, 1, x0.as_slice());
    let b = map.forward_factored(&x0)?;
    let prob = DualProblem::new(map, b, 0.0)?;
    Ok(Instance {
        prob,
        truth: Truth::Lifted { x0 },
        y_opt: None,
    })
}

/// Unit-norm rightmost eigenvector of `A^* y`.
fn top_eigenvector(map: &dyn MeasurementMap, y: &RVec) -> Result<(f64, CVec)> {
    if map.n() <= 512 {
        let (vals, vecs) = hermitian_eig_desc(&dense_adjoint(map, y)?);
        Ok((vals[0], vecs.column(0).into_owned()))
    } else {
        let req = EigRequest::default().with_k(2).with_tol(1e-13);
        let eig = rightmost_eigpairs(|v: &CVec| map.apply_adjoint(y, v), map.n(), &req)?;
        Ok((eig.values[0], eig.vectors.column(0).into_owned()))
    }
}

/// Noise level `eps` solving `eps = eta ||a + eps u||` for unit `u`.
pub fn certified_eps(a: &RVec, u: &RVec, eta: f64) -> f64 {
    let au = a.dot(u);
    let aa = a.norm_squared();
    let e2 = eta * eta;
    (e2 * au + (e2 * e2 * au * au + (1.0 - e2) * e2 * aa).sqrt()) / (1.0 - e2)
}

/// Phase-retrieval instance whose optimal pair is known in closed form.
///
/// Draws octanary masks and a Gaussian `y`, takes `x0` as the unit rightmost
/// eigenvector of `A^* y`, and sets `b = A(x0 x0^*) + eps y / ||y||` with
/// `eps = eta ||b||`. After rescaling `y` so that `<b, y> - eps ||y|| = 1`,
/// `(x0 x0^*, y)` satisfies every optimality condition. `eta = 0` gives a
/// noiseless instance with the same certificate.
pub fn gen_certified_noisy_instance(n: usize, l: usize, eta: f64, seed: u64) -> Result<Instance> {
    if n == 0 || l == 0 {
        return Err(GaugeError::Contract("need n, L >= 1".into()));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(GaugeError::Contract(format!("noise level must lie in [0, 1), got {eta}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = draw_masks(&mut rng, n, l, MaskKind::Octanary);
    let map = Arc::new(PhaseRetrievalMap::new(masks)?);
    for _ in 0..MAX_RESAMPLES {
        let y = random_rvec(&mut rng, map.m());
        let (lambda1, x0) = top_eigenvector(map.as_ref(), &y)?;
        if lambda1 <= 0.0 {
            continue;
        }
        let x0 = CMat::from_column_slice(n, 1, x0.as_slice());
        let a = map.forward_factored(&x0)?;
        let u = &y / y.norm();
        let eps = certified_eps(&a, &u, eta);
        let b = &a + &u * eps;
        // <b, y> - eps ||y|| = <a, y> = lambda_1(A^* y)
        let scale = a.dot(&y);
        if scale <= 0.0 {
            continue;
        }
        let y_opt = y / scale;
        let prob = DualProblem::new(map, b, eps)?;
        return Ok(Instance {
            prob,
            truth: Truth::Lifted { x0 },
            y_opt: Some(y_opt),
        });
    }
    Err(GaugeError::ResampleLimit(MAX_RESAMPLES))
}

/// Blind deconvolution: real Gaussian `x1` (Haar coefficients) and `x2`
/// (mask values), noiseless real measurements, Hermitian embedding.
pub fn gen_blind_deconv_instance(m: usize, n1: usize, n2: usize, seed: u64) -> Result<Instance> {
    let spec = BlindDeconvSpec {
        m,
        n1,
        n2,
        basis: SignalBasis::Haar,
        seed,
    };
    let amap = Arc::new(bd_make_operator(&spec)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = random_rvec(&mut rng, n1).map(C64::from);
    let x2 = random_rvec(&mut rng, n2).map(C64::from);
    let z1 = CMat::from_column_slice(n1, 1, x1.as_slice());
    let z2 = CMat::from_column_slice(n2, 1, x2.as_slice());
    let b = amap.apply_forward(&z1, &z2);
    let dyn_map: Arc<dyn AsymmetricMap> = amap.clone();
    let emb = Arc::new(embed_asymmetric(dyn_map));
    let b_real = emb.lift_measurements(&b);
    let prob = DualProblem::new(emb.clone(), b_real, 0.0)?;
    Ok(Instance {
        prob,
        truth: Truth::Bilinear { x1, x2, amap, emb, b },
        y_opt: None,
    })
}

/// Random Hermitian dense map with a Gaussian rank-one truth; `eps = 0`.
pub fn gen_dense_instance(n: usize, m: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = random_cvec(&mut rng, n);
    let map = Arc::new(DenseMap::random(&mut rng, n, m));
    let x0 = CMat::from_column_slice(n, 1, x0.as_slice());
    let b = map.forward_factored(&x0)?;
    let prob = DualProblem::new(map, b, 0.0)?;
    Ok(Instance {
        prob,
        truth: Truth::Lifted { x0 },
        y_opt: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recover::optimality_terms;

    #[test]
    fn gaussian_instance_is_reproducible() {
        let a = gen_gaussian_instance(8, 3, 11).unwrap();
        let b = gen_gaussian_instance(8, 3, 11).unwrap();
        assert_eq!(a.prob.b, b.prob.b);
        assert!(a.prob.b.iter().all(|&v| v >= 0.0));
        // same signal for a different number of masks
        let c = gen_gaussian_instance(8, 5, 11).unwrap();
        let (Truth::Lifted { x0: xa }, Truth::Lifted { x0: xc }) = (&a.truth, &c.truth) else {
            panic!("lifted truth expected");
        };
        assert_eq!(xa, xc);
    }

    #[test]
    fn certified_instances_satisfy_optimality() {
        let req = EigRequest::default().with_tol(1e-13);
        for (seed, eta) in [(1u64, 0.001), (2, 0.01), (3, 0.0), (4, 0.2)] {
            let inst = gen_certified_noisy_instance(12, 4, eta, seed).unwrap();
            let Truth::Lifted { x0 } = &inst.truth else { unreachable!() };
            let y = inst.y_opt.as_ref().unwrap();
            let t = optimality_terms(&inst.prob, x0, y, &req).unwrap();
            assert!(t.max_violation() < 1e-8, "{t:?}");
            assert!(t.gap.abs() < 1e-8);
            assert!((inst.prob.eps - eta * inst.prob.b.norm()).abs() < 1e-12 * inst.prob.b.norm());
        }
    }

    #[test]
    fn small_eta_limit() {
        let a = RVec::from_vec(vec![3.0, 4.0]);
        let u = RVec::from_vec(vec![0.0, 1.0]);
        assert_eq!(certified_eps(&a, &u, 0.0), 0.0);
        assert!(certified_eps(&a, &u, 1e-6) < 1e-5);
    }

    #[test]
    fn blind_deconv_instance_measurements() {
        let inst = gen_blind_deconv_instance(16, 4, 4, 3).unwrap();
        let Truth::Bilinear { x1, x2, emb, .. } = &inst.truth else { unreachable!() };
        let mut z = CMat::zeros(8, 1);
        z.rows_mut(0, 4).copy_from(x1);
        z.rows_mut(4, 4).copy_from(x2);
        let meas = emb.forward_factored(&z).unwrap();
        assert!((meas - &inst.prob.b).norm() < 1e-12 * inst.prob.b.norm());
    }
}
