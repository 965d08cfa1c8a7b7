//! Recovery error metrics.

use crate::linalg::{CMat, CVec};

/// `||X0 X0^* - Z Z^*||_F / ||X0 X0^*||_F` without forming anything `n x n`.
///
/// The concatenated factor `[X0, Z] = Q R` reduces both terms to the small
/// triangular blocks, `R_x R_x^* - R_z R_z^*`, which avoids the cancellation
/// of expanding the squared norm through Gram matrices.
pub fn metric_xerr(x0: &CMat, zhat: &CMat) -> f64 {
    let (n, k0, k1) = (x0.nrows(), x0.ncols(), zhat.ncols());
    let mut w = CMat::zeros(n, k0 + k1);
    w.columns_mut(0, k0).copy_from(x0);
    w.columns_mut(k0, k1).copy_from(zhat);
    let r = w.qr().r();
    let rx = r.columns(0, k0);
    let rz = r.columns(k0, k1);
    let target = rx * rx.adjoint();
    let diff = &target - rz * rz.adjoint();
    diff.norm() / target.norm().max(f64::MIN_POSITIVE)
}

/// `min_c ||x - c xhat|| / ||x||` over complex scalars `c`.
pub fn metric_xerr_vector(x: &CVec, xhat: &CVec) -> f64 {
    let nx = x.norm();
    let nh2 = xhat.norm_squared();
    if nh2 == 0.0 {
        return 1.0;
    }
    let c = xhat.dotc(x) / nh2;
    (x - xhat * c).norm() / nx.max(f64::MIN_POSITIVE)
}

/// `||b - b_hat|| / ||b||`.
pub fn metric_rerr<T: nalgebra::ComplexField<RealField = f64>>(b: &nalgebra::DVector<T>, bhat: &nalgebra::DVector<T>) -> f64 {
    (b - bhat).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_cmat, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simple_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_cmat(&mut rng, 6, 1);
        assert!(metric_xerr(&x, &x) < 1e-7);
        let rotated = &x * C64::from_polar(1.0, 0.7);
        assert!(metric_xerr(&x, &rotated) < 1e-7);
        let e1 = CMat::from_column_slice(2, 1, &[C64::from(1.0), C64::from(0.0)]);
        let e2 = CMat::from_column_slice(2, 1, &[C64::from(0.0), C64::from(1.0)]);
        assert!((metric_xerr(&e1, &e2) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn factored_form_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [4usize, 17, 64] {
            let x = random_cmat(&mut rng, n, 1);
            let mut z = random_cmat(&mut rng, n, 2) * C64::from(0.3);
            z.set_column(0, &(z.column(0) + x.column(0)));
            let dense = (&x * x.adjoint() - &z * z.adjoint()).norm() / x.norm_squared();
            assert!((metric_xerr(&x, &z) - dense).abs() < 1e-10);
        }
    }

    #[test]
    fn vector_error_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_cmat(&mut rng, 5, 1).column(0).into_owned();
        assert!(metric_xerr_vector(&x, &(&x * C64::new(-2.0, 0.5))) < 1e-14);
    }
}
