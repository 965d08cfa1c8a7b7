//! Matrix-free linear measurement maps.
//!
//! A [`MeasurementMap`] sends Hermitian `n x n` matrices to real `m`-vectors.
//! The solver only ever touches it through two kernels: the forward map on a
//! factored PSD argument `A(Z Z^*)`, and the adjoint applied to a vector,
//! `(A^* y) v`. The real inner product on Hermitian matrices is
//! `<X, Y> = Re tr(X Y^*)`, and every map satisfies
//! `<A(X), y> = <X, A^* y>`.
//!
//! Rectangular (nuclear-norm) problems use an [`AsymmetricMap`] and are turned
//! into Hermitian problems by [`embed_asymmetric`].

use std::ops::Sub;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GaugeError, Result};
use crate::linalg::{random_hermitian, CMat, CVec, RVec, C64};

/// Monotone counters of costed kernel applications.
///
/// One unit is one application of a transform of the map's native length
/// (forward and inverse DFTs count the same), or one dense coefficient-matrix
/// product for dense maps.
#[derive(Debug, Default)]
pub struct OpCounter {
    dft: AtomicU64,
    dwt: AtomicU64,
    dense: AtomicU64,
}

impl OpCounter {
    pub fn add_dft(&self, count: u64) {
        self.dft.fetch_add(count, Ordering::Relaxed);
    }

    pub fn add_dwt(&self, count: u64) {
        self.dwt.fetch_add(count, Ordering::Relaxed);
    }

    pub fn add_dense(&self, count: u64) {
        self.dense.fetch_add(count, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            dft: self.dft.load(Ordering::Relaxed),
            dwt: self.dwt.load(Ordering::Relaxed),
            dense: self.dense.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub dft: u64,
    pub dwt: u64,
    pub dense: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.dft + self.dwt + self.dense
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            dft: self.dft.saturating_sub(rhs.dft),
            dwt: self.dwt.saturating_sub(rhs.dwt),
            dense: self.dense.saturating_sub(rhs.dense),
        }
    }
}

/// Linear map from Hermitian `n x n` matrices to `R^m`, accessed matrix-free.
///
/// Implementors provide the unchecked kernels; callers should use the checked
/// [`forward_factored`](MeasurementMap::forward_factored) and
/// [`adjoint_apply`](MeasurementMap::adjoint_apply).
pub trait MeasurementMap: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn counter(&self) -> &OpCounter;

    /// `A(Z Z^*)` for an `n x r` factor. Dimensions are already validated.
    fn apply_forward(&self, z: &CMat) -> RVec;

    /// `(A^* y) v`. Dimensions are already validated.
    fn apply_adjoint(&self, y: &RVec, v: &CVec) -> CVec;

    /// Row offset splitting the argument into `[[U, X], [X^*, V]]` blocks,
    /// for maps produced by [`embed_asymmetric`].
    fn block_split(&self) -> Option<usize> {
        None
    }

    fn forward_factored(&self, z: &CMat) -> Result<RVec> {
        check_dim("forward_factored rows", self.n(), z.nrows())?;
        if z.ncols() == 0 {
            return Err(GaugeError::Contract("factor must have at least one column".into()));
        }
        Ok(self.apply_forward(z))
    }

    fn adjoint_apply(&self, y: &RVec, v: &CVec) -> Result<CVec> {
        check_dim("adjoint_apply measurements", self.m(), y.len())?;
        check_dim("adjoint_apply vector", self.n(), v.len())?;
        Ok(self.apply_adjoint(y, v))
    }

    /// `(A^* y) V` column by column.
    fn adjoint_apply_cols(&self, y: &RVec, v: &CMat) -> Result<CMat> {
        check_dim("adjoint_apply measurements", self.m(), y.len())?;
        check_dim("adjoint_apply rows", self.n(), v.nrows())?;
        let mut out = CMat::zeros(v.nrows(), v.ncols());
        for j in 0..v.ncols() {
            let col = self.apply_adjoint(y, &v.column(j).into_owned());
            out.set_column(j, &col);
        }
        Ok(out)
    }

    /// `A((U V^* + V U^*) / 2)` by polarization of the factored forward map.
    fn forward_sym(&self, u: &CMat, v: &CMat) -> Result<RVec> {
        check_dim("forward_sym rows", self.n(), u.nrows())?;
        check_dim("forward_sym rows", self.n(), v.nrows())?;
        check_dim("forward_sym cols", u.ncols(), v.ncols())?;
        let plus = self.apply_forward(&(u + v));
        let minus = self.apply_forward(&(u - v));
        Ok((plus - minus) * 0.25)
    }
}

/// Map given by explicit Hermitian coefficient matrices, `A(X)_k = <A_k, X>`.
///
/// Intended for tests and small problems; each coefficient product counts as
/// one dense unit.
pub struct DenseMap {
    n: usize,
    coeffs: Vec<CMat>,
    counter: OpCounter,
}

impl DenseMap {
    pub fn new(coeffs: Vec<CMat>) -> Result<Self> {
        let n = coeffs
            .first()
            .map(|a| a.nrows())
            .ok_or_else(|| GaugeError::Contract("dense map needs at least one coefficient".into()))?;
        for a in &coeffs {
            check_dim("dense coefficient rows", n, a.nrows())?;
            check_dim("dense coefficient cols", n, a.ncols())?;
            let skew = (a - a.adjoint()).norm();
            if skew > 1e-12 * a.norm().max(1.0) {
                return Err(GaugeError::Contract("dense coefficient is not Hermitian".into()));
            }
        }
        Ok(Self {
            n,
            coeffs,
            counter: OpCounter::default(),
        })
    }

    /// Random Hermitian coefficients with complex normal entries.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Self {
        let coeffs = (0..m).map(|_| random_hermitian(rng, n)).collect();
        Self::new(coeffs).expect("random coefficients are Hermitian")
    }

    /// `A(X) = diag(X)`.
    pub fn diagonal_extraction(n: usize) -> Self {
        let coeffs = (0..n)
            .map(|k| {
                let mut a = CMat::zeros(n, n);
                a[(k, k)] = C64::from(1.0);
                a
            })
            .collect();
        Self::new(coeffs).expect("unit diagonals are Hermitian")
    }

    pub fn coefficients(&self) -> &[CMat] {
        &self.coeffs
    }
}

impl MeasurementMap for DenseMap {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.coeffs.len()
    }

    fn counter(&self) -> &OpCounter {
        &self.counter
    }

    fn apply_forward(&self, z: &CMat) -> RVec {
        self.counter.add_dense((self.coeffs.len() * z.ncols()) as u64);
        RVec::from_iterator(
            self.coeffs.len(),
            self.coeffs.iter().map(|a| {
                let az = a * z;
                z.iter().zip(az.iter()).map(|(zi, ai)| (zi.conj() * ai).re).sum::<f64>()
            }),
        )
    }

    fn apply_adjoint(&self, y: &RVec, v: &CVec) -> CVec {
        self.counter.add_dense(self.coeffs.len() as u64);
        let mut out = CVec::zeros(self.n);
        for (a, &yk) in self.coeffs.iter().zip(y.iter()) {
            if yk != 0.0 {
                out += a * v * C64::from(yk);
            }
        }
        out
    }
}

/// Linear map from complex `n1 x n2` matrices to `C^m` (or `R^m` when only
/// real parts are measured), accessed through factored forward products and
/// adjoint applications.
///
/// The adjoint is taken with respect to `Re <X, Y> = Re tr(X Y^*)` and the
/// real inner product on `C^m`.
pub trait AsymmetricMap: Send + Sync {
    fn n1(&self) -> usize;
    fn n2(&self) -> usize;
    /// Number of complex measurements.
    fn m(&self) -> usize;
    /// Only the real parts of the measurements are used.
    fn real_measurements(&self) -> bool {
        false
    }
    fn counter(&self) -> &OpCounter;

    /// `A(Z1 Z2^*)`.
    fn apply_forward(&self, z1: &CMat, z2: &CMat) -> CVec;
    /// `(A^* y) v` for `v` in `C^{n2}`.
    fn apply_adjoint(&self, y: &CVec, v: &CVec) -> CVec;
    /// `(A^* y)^* u` for `u` in `C^{n1}`.
    fn apply_adjoint_h(&self, y: &CVec, u: &CVec) -> CVec;
}

/// Map with explicit complex coefficients, `A(X)_k = <X, A_k> = tr(X A_k^*)`,
/// so that `A^* y = sum_k y_k A_k`.
pub struct DenseAsymmetricMap {
    n1: usize,
    n2: usize,
    coeffs: Vec<CMat>,
    real_only: bool,
    counter: OpCounter,
}

impl DenseAsymmetricMap {
    pub fn new(coeffs: Vec<CMat>, real_only: bool) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| GaugeError::Contract("asymmetric map needs coefficients".into()))?;
        let (n1, n2) = first.shape();
        for a in &coeffs {
            check_dim("asymmetric coefficient rows", n1, a.nrows())?;
            check_dim("asymmetric coefficient cols", n2, a.ncols())?;
        }
        Ok(Self {
            n1,
            n2,
            coeffs,
            real_only,
            counter: OpCounter::default(),
        })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n1: usize, n2: usize, m: usize) -> Self {
        let coeffs = (0..m).map(|_| crate::linalg::random_cmat(rng, n1, n2)).collect();
        Self::new(coeffs, false).expect("consistent shapes")
    }

    pub fn coefficients(&self) -> &[CMat] {
        &self.coeffs
    }

    /// Dense `A^* y`.
    pub fn adjoint_matrix(&self, y: &CVec) -> CMat {
        let mut out = CMat::zeros(self.n1, self.n2);
        for (a, yk) in self.coeffs.iter().zip(y.iter()) {
            out += a * *yk;
        }
        out
    }
}

impl AsymmetricMap for DenseAsymmetricMap {
    fn n1(&self) -> usize {
        self.n1
    }

    fn n2(&self) -> usize {
        self.n2
    }

    fn m(&self) -> usize {
        self.coeffs.len()
    }

    fn real_measurements(&self) -> bool {
        self.real_only
    }

    fn counter(&self) -> &OpCounter {
        &self.counter
    }

    fn apply_forward(&self, z1: &CMat, z2: &CMat) -> CVec {
        self.counter.add_dense((self.coeffs.len() * z1.ncols()) as u64);
        CVec::from_iterator(
            self.coeffs.len(),
            self.coeffs.iter().map(|a| {
                // tr(Z1 Z2^* A^*) = sum_j conj(z1_j^* A z2_j)
                let az2 = a * z2;
                z1.iter().zip(az2.iter()).map(|(p, q)| p.conj() * q).sum::<C64>().conj()
            }),
        )
    }

    fn apply_adjoint(&self, y: &CVec, v: &CVec) -> CVec {
        self.counter.add_dense(self.coeffs.len() as u64);
        let mut out = CVec::zeros(self.n1);
        for (a, yk) in self.coeffs.iter().zip(y.iter()) {
            out += a * v * *yk;
        }
        out
    }

    fn apply_adjoint_h(&self, y: &CVec, u: &CVec) -> CVec {
        self.counter.add_dense(self.coeffs.len() as u64);
        let mut out = CVec::zeros(self.n2);
        for (a, yk) in self.coeffs.iter().zip(y.iter()) {
            out += a.adjoint() * u * yk.conj();
        }
        out
    }
}

/// Hermitian embedding of an asymmetric map on side `n1 + n2`.
///
/// For `W = Z Z^*` with `Z = [Z1; Z2]`, the embedded forward map returns
/// `2 Re A(Z1 Z2^*)` followed (for complex measurements) by `2 Im A(Z1 Z2^*)`.
/// Its adjoint is `[[0, A^* y], [(A^* y)^*, 0]]`, whose rightmost eigenvalue
/// is the largest singular value of `A^* y`. Because the off-diagonal block
/// enters twice, measurement data and tolerances are doubled by
/// [`EmbeddedMap::lift_measurements`].
pub struct EmbeddedMap {
    inner: Arc<dyn AsymmetricMap>,
}

pub fn embed_asymmetric(amap: Arc<dyn AsymmetricMap>) -> EmbeddedMap {
    EmbeddedMap { inner: amap }
}

impl EmbeddedMap {
    pub fn inner(&self) -> &Arc<dyn AsymmetricMap> {
        &self.inner
    }

    pub fn n1(&self) -> usize {
        self.inner.n1()
    }

    pub fn n2(&self) -> usize {
        self.inner.n2()
    }

    /// Real measurement vector for complex data `b`, scaled by two.
    pub fn lift_measurements(&self, b: &CVec) -> RVec {
        let m = self.inner.m();
        if self.inner.real_measurements() {
            RVec::from_iterator(m, b.iter().map(|c| 2.0 * c.re))
        } else {
            RVec::from_iterator(2 * m, b.iter().map(|c| 2.0 * c.re).chain(b.iter().map(|c| 2.0 * c.im)))
        }
    }

    /// Complex measurement vector matching a real embedded dual vector.
    pub fn complex_dual(&self, y: &RVec) -> CVec {
        let m = self.inner.m();
        if self.inner.real_measurements() {
            CVec::from_iterator(m, y.iter().map(|&v| C64::from(v)))
        } else {
            CVec::from_fn(m, |k, _| C64::new(y[k], y[m + k]))
        }
    }

    /// Split a Hermitian-side factor into its `(Z1, Z2)` blocks.
    pub fn split_factor(&self, z: &CMat) -> (CMat, CMat) {
        let n1 = self.inner.n1();
        let n2 = self.inner.n2();
        (
            z.rows(0, n1).into_owned(),
            z.rows(n1, n2).into_owned(),
        )
    }
}

impl MeasurementMap for EmbeddedMap {
    fn n(&self) -> usize {
        self.inner.n1() + self.inner.n2()
    }

    fn m(&self) -> usize {
        if self.inner.real_measurements() {
            self.inner.m()
        } else {
            2 * self.inner.m()
        }
    }

    fn counter(&self) -> &OpCounter {
        self.inner.counter()
    }

    fn apply_forward(&self, z: &CMat) -> RVec {
        let (z1, z2) = self.split_factor(z);
        let c = self.inner.apply_forward(&z1, &z2);
        self.lift_measurements(&c)
    }

    fn apply_adjoint(&self, y: &RVec, v: &CVec) -> CVec {
        let n1 = self.inner.n1();
        let n2 = self.inner.n2();
        let yc = self.complex_dual(y);
        let v1 = v.rows(0, n1).into_owned();
        let v2 = v.rows(n1, n2).into_owned();
        let top = self.inner.apply_adjoint(&yc, &v2);
        let bottom = self.inner.apply_adjoint_h(&yc, &v1);
        let mut out = CVec::zeros(n1 + n2);
        out.rows_mut(0, n1).copy_from(&top);
        out.rows_mut(n1, n2).copy_from(&bottom);
        out
    }

    fn block_split(&self) -> Option<usize> {
        Some(self.inner.n1())
    }
}
