//! Weighted trace and weighted nuclear-norm problems.
//!
//! A weight `C = R R^*` turns `min <C, X>` into the unweighted problem for
//! `X' = R^* X R` with map `A_C(X') = A(R^{-*} X' R^{-1})`, whose adjoint is
//! `R^{-1} (A^* y) R^{-*}`. [`WeightedMap`] is that composition; the solver
//! runs on it unchanged and maps factors back with `Z = R^{-*} Z'`.

use std::sync::Arc;

use nalgebra::linalg::{Cholesky, LU};
use nalgebra::Dyn;

use crate::dual::{dual_objective, DualProblem};
use crate::eig::{rightmost_eigpairs, EigRequest, EigResult, WeightFactor};
use crate::error::{check_dim, GaugeError, Result};
use crate::linalg::{hermitian_eig_desc, CMat, CVec, RVec, C64};
use crate::operator::{embed_asymmetric, AsymmetricMap, MeasurementMap, OpCounter};
use crate::recover::PrimalFactor;

/// `C = c I` with `c > 0`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledIdentity {
    pub n: usize,
    pub c: f64,
}

impl ScaledIdentity {
    pub fn new(n: usize, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(GaugeError::NotPositiveDefinite);
        }
        Ok(Self { n, c })
    }
}

impl WeightFactor for ScaledIdentity {
    fn n(&self) -> usize {
        self.n
    }

    fn apply_r_inv(&self, v: &CVec) -> CVec {
        v / C64::from(self.c.sqrt())
    }

    fn apply_r_inv_adj(&self, v: &CVec) -> CVec {
        v / C64::from(self.c.sqrt())
    }

    fn apply_c(&self, v: &CVec) -> CVec {
        v * C64::from(self.c)
    }
}

/// Dense weight with an explicit factor.
///
/// Built either from a Hermitian positive definite `C` (Cholesky, `R = L`) or
/// from any invertible `R`, in which case `C = R R^*`. The second form also
/// serves the nonsymmetric weights of the nuclear-norm problem, where only
/// `R^{-1}` and `R^{-*}` are used.
#[derive(Clone, Debug)]
pub struct DenseWeight {
    c: CMat,
    lu: LU<C64, Dyn, Dyn>,
    lu_adj: LU<C64, Dyn, Dyn>,
}

impl DenseWeight {
    pub fn from_matrix(c: &CMat) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(GaugeError::Contract("weight must be square".into()));
        }
        if (c - c.adjoint()).norm() > 1e-12 * c.norm().max(1.0) {
            return Err(GaugeError::Contract("weight must be Hermitian".into()));
        }
        let chol = Cholesky::new(c.clone()).ok_or(GaugeError::NotPositiveDefinite)?;
        if chol.l_dirty().diagonal().iter().any(|d| !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re) {
            return Err(GaugeError::NotPositiveDefinite);
        }
        Self::from_factor(&chol.l()).map(|mut w| {
            w.c = c.clone();
            w
        })
    }

    pub fn from_factor(r: &CMat) -> Result<Self> {
        if r.nrows() != r.ncols() {
            return Err(GaugeError::Contract("factor must be square".into()));
        }
        let lu = LU::new(r.clone());
        if !lu.is_invertible() {
            return Err(GaugeError::Singular);
        }
        let min_pivot = lu.u().diagonal().iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        if min_pivot <= 1e-14 * r.norm() {
            return Err(GaugeError::Singular);
        }
        let lu_adj = LU::new(r.adjoint());
        Ok(Self {
            c: r * r.adjoint(),
            lu,
            lu_adj,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.c
    }
}

impl WeightFactor for DenseWeight {
    fn n(&self) -> usize {
        self.c.nrows()
    }

    fn apply_r_inv(&self, v: &CVec) -> CVec {
        self.lu.solve(v).expect("factor checked invertible")
    }

    fn apply_r_inv_adj(&self, v: &CVec) -> CVec {
        self.lu_adj.solve(v).expect("factor checked invertible")
    }

    fn apply_c(&self, v: &CVec) -> CVec {
        &self.c * v
    }
}

/// `C = (delta I + Z Z^*)^{-1}` kept in low-rank-plus-identity form.
///
/// With `Z Z^* = Q diag(s^2) Q^*`, the symmetric factor `R = C^{1/2}` has
/// `R^{-1} = R^{-*} = sqrt(delta) I + Q diag(sqrt(delta + s^2) - sqrt(delta)) Q^*`.
#[derive(Clone, Debug)]
pub struct LowRankWeight {
    n: usize,
    delta: f64,
    q: CMat,
    sigma2: Vec<f64>,
}

impl LowRankWeight {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn apply_diag(&self, v: &CVec, base: f64, f: impl Fn(f64) -> f64) -> CVec {
        let mut out = v * C64::from(base);
        if self.q.ncols() > 0 {
            let coeffs = self.q.adjoint() * v;
            let scaled = CVec::from_fn(coeffs.len(), |i, _| coeffs[i] * f(self.sigma2[i]));
            out += &self.q * scaled;
        }
        out
    }

    /// Dense `C`; only for small checks.
    pub fn dense(&self) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for j in 0..self.n {
            let mut e = CVec::zeros(self.n);
            e[j] = C64::from(1.0);
            out.set_column(j, &self.apply_c(&e));
        }
        out
    }
}

impl WeightFactor for LowRankWeight {
    fn n(&self) -> usize {
        self.n
    }

    fn apply_r_inv(&self, v: &CVec) -> CVec {
        let sd = self.delta.sqrt();
        self.apply_diag(v, sd, |s2| (self.delta + s2).sqrt() - sd)
    }

    fn apply_r_inv_adj(&self, v: &CVec) -> CVec {
        self.apply_r_inv(v)
    }

    fn apply_c(&self, v: &CVec) -> CVec {
        let inv = 1.0 / self.delta;
        self.apply_diag(v, inv, |s2| 1.0 / (self.delta + s2) - inv)
    }
}

/// Reweighting matrix `C = (delta I + Z Z^*)^{-1}` for the next trace
/// minimization in an iteratively reweighted sequence.
pub fn reweight(zhat: &PrimalFactor, delta: f64) -> Result<LowRankWeight> {
    if !(delta > 0.0) {
        return Err(GaugeError::Contract("reweighting needs delta > 0".into()));
    }
    let z = &zhat.z;
    let n = z.nrows();
    let gram = z.adjoint() * z;
    let (vals, w) = hermitian_eig_desc(&gram);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-14 * top && vals[i] > 0.0).collect();
    let mut q = CMat::zeros(n, keep.len());
    let mut sigma2 = Vec::with_capacity(keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let col = z * w.column(i) / C64::from(vals[i].sqrt());
        q.set_column(c, &col);
        sigma2.push(vals[i]);
    }
    Ok(LowRankWeight { n, delta, q, sigma2 })
}

/// The composed map `A_C(Z Z^*) = A((R^{-*} Z)(R^{-*} Z)^*)`.
pub struct WeightedMap {
    inner: Arc<dyn MeasurementMap>,
    weight: Arc<dyn WeightFactor>,
}

impl WeightedMap {
    pub fn new(inner: Arc<dyn MeasurementMap>, weight: Arc<dyn WeightFactor>) -> Result<Self> {
        check_dim("weight dimension", inner.n(), weight.n())?;
        Ok(Self { inner, weight })
    }

    fn transform(&self, z: &CMat) -> CMat {
        let mut out = CMat::zeros(z.nrows(), z.ncols());
        for j in 0..z.ncols() {
            out.set_column(j, &self.weight.apply_r_inv_adj(&z.column(j).into_owned()));
        }
        out
    }
}

impl MeasurementMap for WeightedMap {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn m(&self) -> usize {
        self.inner.m()
    }

    fn counter(&self) -> &OpCounter {
        self.inner.counter()
    }

    fn apply_forward(&self, z: &CMat) -> RVec {
        self.inner.apply_forward(&self.transform(z))
    }

    fn apply_adjoint(&self, y: &RVec, v: &CVec) -> CVec {
        let w = self.inner.apply_adjoint(y, &self.weight.apply_r_inv_adj(v));
        self.weight.apply_r_inv(&w)
    }

    fn block_split(&self) -> Option<usize> {
        self.inner.block_split()
    }
}

/// `lambda_1(A^* y, C)` for a weighted problem; the eigenvectors are the
/// generalized ones used for primal recovery.
pub fn weighted_trace_dual(prob: &DualProblem, y: &RVec, req: &EigRequest) -> Result<(f64, EigResult)> {
    dual_objective(prob, y, req, None)
}

/// Asymmetric map `A_W(X) = A(C1^{-*} X C2^{-1})`, whose adjoint is
/// `C1^{-1} (A^* y) C2^{-*}`.
pub struct WeightedAsymmetricMap {
    inner: Arc<dyn AsymmetricMap>,
    c1: Arc<dyn WeightFactor>,
    c2: Arc<dyn WeightFactor>,
}

impl WeightedAsymmetricMap {
    /// `c1` and `c2` act through `apply_r_inv` (`C^{-1}`) and
    /// `apply_r_inv_adj` (`C^{-*}`).
    pub fn new(inner: Arc<dyn AsymmetricMap>, c1: Arc<dyn WeightFactor>, c2: Arc<dyn WeightFactor>) -> Result<Self> {
        check_dim("left weight", inner.n1(), c1.n())?;
        check_dim("right weight", inner.n2(), c2.n())?;
        Ok(Self { inner, c1, c2 })
    }
}

fn map_cols(m: &CMat, f: impl Fn(&CVec) -> CVec) -> CMat {
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        out.set_column(j, &f(&m.column(j).into_owned()));
    }
    out
}

impl AsymmetricMap for WeightedAsymmetricMap {
    fn n1(&self) -> usize {
        self.inner.n1()
    }

    fn n2(&self) -> usize {
        self.inner.n2()
    }

    fn m(&self) -> usize {
        self.inner.m()
    }

    fn real_measurements(&self) -> bool {
        self.inner.real_measurements()
    }

    fn counter(&self) -> &OpCounter {
        self.inner.counter()
    }

    fn apply_forward(&self, z1: &CMat, z2: &CMat) -> CVec {
        let w1 = map_cols(z1, |v| self.c1.apply_r_inv_adj(v));
        let w2 = map_cols(z2, |v| self.c2.apply_r_inv_adj(v));
        self.inner.apply_forward(&w1, &w2)
    }

    fn apply_adjoint(&self, y: &CVec, v: &CVec) -> CVec {
        let w = self.inner.apply_adjoint(y, &self.c2.apply_r_inv_adj(v));
        self.c1.apply_r_inv(&w)
    }

    fn apply_adjoint_h(&self, y: &CVec, u: &CVec) -> CVec {
        let w = self.inner.apply_adjoint_h(y, &self.c1.apply_r_inv_adj(u));
        self.c2.apply_r_inv(&w)
    }
}

/// `||C1^{-1} (A^* y) C2^{-*}||_2` through the Hermitian embedding, together
/// with the eigenpairs whose leading vectors stack the top left and right
/// singular vectors (each scaled by `1/sqrt(2)`).
pub fn weighted_nuclear_dual(
    amap: Arc<dyn AsymmetricMap>,
    c1: Arc<dyn WeightFactor>,
    c2: Arc<dyn WeightFactor>,
    y: &CVec,
    req: &EigRequest,
) -> Result<(f64, EigResult)> {
    check_dim("measurement vector", amap.m(), y.len())?;
    let real_only = amap.real_measurements();
    let weighted: Arc<dyn AsymmetricMap> = Arc::new(WeightedAsymmetricMap::new(amap, c1, c2)?);
    let emb = embed_asymmetric(weighted);
    let m = y.len();
    let y_real = if real_only {
        RVec::from_iterator(m, y.iter().map(|c| c.re))
    } else {
        RVec::from_iterator(2 * m, y.iter().map(|c| c.re).chain(y.iter().map(|c| c.im)))
    };
    let eig = rightmost_eigpairs(|v: &CVec| emb.apply_adjoint(&y_real, v), emb.n(), req)?;
    Ok((eig.values[0].max(0.0), eig))
}
