//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;
pub type RVec = DVector<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Standard complex normal sample (E|z|^2 = 1).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cvec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng))
}

pub fn random_cmat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_normal(rng))
}

pub fn random_rvec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RVec {
    RVec::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random Hermitian matrix with standard complex normal off-diagonal entries.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_cmat(rng, n, n);
    (&g + g.adjoint()) * C64::from(0.5)
}

/// Real part of the Hilbert-Schmidt inner product `tr(X Y^*)`.
pub fn real_inner(x: &CMat, y: &CMat) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a * b.conj()).re).sum()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn hermitian_eig_desc(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let herm = (h + h.adjoint()) * C64::from(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Hermitian PSD square root after clipping negative eigenvalues to zero.
pub fn psd_sqrt(s: &CMat) -> CMat {
    let (values, vectors) = hermitian_eig_desc(s);
    let d = DVector::from_iterator(
        values.len(),
        values.iter().map(|v| C64::from(v.max(0.0).sqrt())),
    );
    &vectors * DMatrix::from_diagonal(&d) * vectors.adjoint()
}

/// Euclidean projection of a Hermitian matrix onto the PSD cone.
pub fn psd_project(s: &CMat) -> CMat {
    let (values, vectors) = hermitian_eig_desc(s);
    let d = DVector::from_iterator(values.len(), values.iter().map(|v| C64::from(v.max(0.0))));
    &vectors * DMatrix::from_diagonal(&d) * vectors.adjoint()
}

/// Squared Frobenius norm.
pub fn frob2(z: &CMat) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

pub fn is_finite_c(v: &[C64]) -> bool {
    v.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// Flat interleaved `[re, im, re, im, ...]` encoding used in JSON output.
pub fn interleave(values: &[C64]) -> Vec<f64> {
    values.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn deinterleave(values: &[f64]) -> Vec<C64> {
    values.chunks(2).map(|p| C64::new(p[0], *p.get(1).unwrap_or(&0.0))).collect()
}
