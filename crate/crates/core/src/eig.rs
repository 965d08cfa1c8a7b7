//! Rightmost eigenpairs of matrix-free Hermitian operators.
//!
//! [`rightmost_eigpairs`] runs a thick-restart Lanczos iteration (Krylov-Schur
//! form) with full reorthogonalization. [`generalized_rightmost`] reduces the
//! pencil `(A, C)` with `C = R R^*` to the standard problem for
//! `R^{-1} A R^{-*}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, GaugeError, Result};
use crate::linalg::{hermitian_eig_desc, is_finite_c, random_cvec, CMat, CVec, C64, ZERO};

/// Relative width of the cluster counted as the top eigenvalue's multiplicity.
pub const MULTIPLICITY_RTOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct EigRequest {
    pub k: usize,
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov dimension per cycle; `None` means `max(2k + 8, 20)`.
    pub subspace_dim: Option<usize>,
    pub seed: u64,
}

impl Default for EigRequest {
    fn default() -> Self {
        Self {
            k: 2,
            tol: 1e-8,
            max_restarts: 300,
            subspace_dim: None,
            seed: 0x5eed,
        }
    }
}

impl EigRequest {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn dims(&self, n: usize) -> Result<(usize, usize)> {
        if self.k == 0 {
            return Err(GaugeError::Contract("eigenpair count must be positive".into()));
        }
        let k = self.k.min(n);
        let m = self.subspace_dim.unwrap_or((2 * self.k + 8).max(20)).max(k).min(n);
        Ok((k, m))
    }
}

#[derive(Clone, Debug)]
pub struct EigResult {
    /// Descending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub vectors: CMat,
    /// Residual norms `||Op v - lambda v||`.
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    /// Number of returned eigenvalues clustered at the top.
    pub r1: usize,
    pub matvecs: usize,
}

impl EigResult {
    pub fn lambda1(&self) -> f64 {
        self.values[0]
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Leading `r` eigenvectors.
    pub fn top(&self, r: usize) -> CMat {
        self.vectors.columns(0, r.min(self.vectors.ncols())).into_owned()
    }

    /// Spectral gap between the top cluster and the next returned value.
    pub fn isolated(&self) -> bool {
        self.r1 == 1
    }

    fn from_parts(values: Vec<f64>, vectors: CMat, residuals: Vec<f64>, tol: f64, matvecs: usize) -> Self {
        let scale = values[0].abs().max(1.0);
        let converged = residuals.iter().map(|&r| r <= tol * scale).collect();
        let r1 = multiplicity(&values);
        Self {
            values,
            vectors,
            residuals,
            converged,
            r1,
            matvecs,
        }
    }
}

/// Count of values within `MULTIPLICITY_RTOL * max(1, |v_0|)` of the first.
pub fn multiplicity(values: &[f64]) -> usize {
    let thresh = MULTIPLICITY_RTOL * values[0].abs().max(1.0);
    values.iter().take_while(|&&v| values[0] - v <= thresh).count().max(1)
}

fn cdot(a: &CVec, b: &CVec) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn orthogonalize(w: &mut CVec, basis: &[CVec], coeffs: Option<&mut [C64]>) {
    let mut acc = vec![ZERO; basis.len()];
    for _ in 0..2 {
        for (i, v) in basis.iter().enumerate() {
            let c = cdot(v, w);
            w.axpy(-c, v, C64::from(1.0));
            acc[i] += c;
        }
    }
    if let Some(out) = coeffs {
        out.copy_from_slice(&acc);
    }
}

fn checked_apply<F: FnMut(&CVec) -> CVec>(apply: &mut F, v: &CVec, n: usize) -> Result<CVec> {
    let w = apply(v);
    check_dim("eigen operator output", n, w.len())?;
    if !is_finite_c(w.as_slice()) {
        return Err(GaugeError::NonFinite("eigen operator output"));
    }
    Ok(w)
}

/// `k` algebraically largest eigenpairs of a Hermitian operator.
pub fn rightmost_eigpairs<F: FnMut(&CVec) -> CVec>(apply: F, n: usize, req: &EigRequest) -> Result<EigResult> {
    rightmost_eigpairs_from(apply, n, req, None)
}

/// As [`rightmost_eigpairs`], seeding the Krylov space with `start` when given.
pub fn rightmost_eigpairs_from<F: FnMut(&CVec) -> CVec>(
    mut apply: F,
    n: usize,
    req: &EigRequest,
    start: Option<&CVec>,
) -> Result<EigResult> {
    if n == 0 {
        return Err(GaugeError::Contract("operator dimension must be positive".into()));
    }
    let (k, m) = req.dims(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);

    if n == 1 {
        let one = CVec::from_element(1, C64::from(1.0));
        let w = checked_apply(&mut apply, &one, 1)?;
        let vectors = CMat::from_element(1, 1, C64::from(1.0));
        return Ok(EigResult::from_parts(vec![w[0].re], vectors, vec![0.0], req.tol, 1));
    }

    let mut v0 = match start {
        Some(s) if s.len() == n && s.norm() > 0.0 && is_finite_c(s.as_slice()) => s.clone(),
        _ => random_cvec(&mut rng, n),
    };
    v0.unscale_mut(v0.norm());

    let mut basis: Vec<CVec> = Vec::with_capacity(m + 1);
    basis.push(v0);
    let mut h = CMat::zeros(m + 1, m);
    let mut kept = 0usize;
    let mut matvecs = 0usize;
    let mut restart = 0usize;

    loop {
        let mut width = m;
        for j in kept..m {
            let mut w = checked_apply(&mut apply, &basis[j], n)?;
            matvecs += 1;
            let scale = w.norm();
            let mut coeffs = vec![ZERO; j + 1];
            orthogonalize(&mut w, &basis[..=j], Some(&mut coeffs));
            for (i, c) in coeffs.into_iter().enumerate() {
                h[(i, j)] = c;
            }
            let beta = w.norm();
            if beta > 1e-12 * scale.max(f64::MIN_POSITIVE) && beta > 0.0 {
                h[(j + 1, j)] = C64::from(beta);
                w.unscale_mut(beta);
                basis.push(w);
            } else {
                h[(j + 1, j)] = ZERO;
                if basis.len() == n {
                    width = j + 1;
                    break;
                }
                let mut fresh = random_cvec(&mut rng, n);
                orthogonalize(&mut fresh, &basis, None);
                let norm = fresh.norm();
                fresh.unscale_mut(norm);
                basis.push(fresh);
            }
        }

        let hm = h.view((0, 0), (width, width)).into_owned();
        let (theta, y) = hermitian_eig_desc(&hm);
        let fnorm = if width < basis.len() { h[(width, width - 1)].re } else { 0.0 };
        let residuals: Vec<f64> = (0..width).map(|i| (fnorm * y[(width - 1, i)].norm()).abs()).collect();
        let scale = theta[0].abs().max(1.0);
        let done = residuals[..k].iter().all(|&r| r <= req.tol * scale);
        let exhausted = width == n && fnorm == 0.0;

        if done || exhausted || restart >= req.max_restarts {
            let mut vectors = CMat::zeros(n, k);
            for i in 0..k {
                let mut col = CVec::zeros(n);
                for (j, v) in basis.iter().take(width).enumerate() {
                    col.axpy(y[(j, i)], v, C64::from(1.0));
                }
                vectors.set_column(i, &col);
            }
            return Ok(EigResult::from_parts(
                theta[..k].to_vec(),
                vectors,
                residuals[..k].to_vec(),
                req.tol,
                matvecs,
            ));
        }

        let p = (k + (width - k) / 2).clamp(k, width - 1);
        let mut next: Vec<CVec> = Vec::with_capacity(m + 1);
        for i in 0..p {
            let mut col = CVec::zeros(n);
            for (j, v) in basis.iter().take(width).enumerate() {
                col.axpy(y[(j, i)], v, C64::from(1.0));
            }
            next.push(col);
        }
        next.push(basis[width].clone());
        let mut hn = CMat::zeros(m + 1, m);
        for i in 0..p {
            hn[(i, i)] = C64::from(theta[i]);
            hn[(p, i)] = C64::from(fnorm) * y[(width - 1, i)];
        }
        basis = next;
        h = hn;
        kept = p;
        restart += 1;
    }
}

/// Action of a factor `R` of a Hermitian positive definite weight `C = R R^*`.
pub trait WeightFactor: Send + Sync {
    fn n(&self) -> usize;
    /// `R^{-1} v`.
    fn apply_r_inv(&self, v: &CVec) -> CVec;
    /// `R^{-*} v`.
    fn apply_r_inv_adj(&self, v: &CVec) -> CVec;
    /// `C v`.
    fn apply_c(&self, v: &CVec) -> CVec;
    /// Lets callers skip the transform entirely.
    fn is_identity(&self) -> bool {
        false
    }
}

/// Identity weight.
#[derive(Clone, Copy, Debug)]
pub struct IdentityWeight(pub usize);

impl WeightFactor for IdentityWeight {
    fn n(&self) -> usize {
        self.0
    }

    fn apply_r_inv(&self, v: &CVec) -> CVec {
        v.clone()
    }

    fn apply_r_inv_adj(&self, v: &CVec) -> CVec {
        v.clone()
    }

    fn apply_c(&self, v: &CVec) -> CVec {
        v.clone()
    }

    fn is_identity(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug)]
pub struct GeneralizedEig {
    /// Eigenpairs of the reduced operator `R^{-1} A R^{-*}`.
    pub reduced: EigResult,
    /// Generalized eigenvectors `U = R^{-*} W`, with `u^* C u = 1`.
    pub vectors: CMat,
}

/// Rightmost eigenpairs of the pencil `(A, C)`.
pub fn generalized_rightmost<F: FnMut(&CVec) -> CVec>(
    mut apply_a: F,
    weight: &dyn WeightFactor,
    req: &EigRequest,
    start: Option<&CVec>,
) -> Result<GeneralizedEig> {
    let n = weight.n();
    if weight.is_identity() {
        let reduced = rightmost_eigpairs_from(apply_a, n, req, start)?;
        let vectors = reduced.vectors.clone();
        return Ok(GeneralizedEig { reduced, vectors });
    }
    let reduced = rightmost_eigpairs_from(
        |v: &CVec| weight.apply_r_inv(&apply_a(&weight.apply_r_inv_adj(v))),
        n,
        req,
        start,
    )?;
    let mut vectors = CMat::zeros(n, reduced.vectors.ncols());
    for j in 0..reduced.vectors.ncols() {
        let u = weight.apply_r_inv_adj(&reduced.vectors.column(j).into_owned());
        vectors.set_column(j, &u);
    }
    Ok(GeneralizedEig { reduced, vectors })
}
