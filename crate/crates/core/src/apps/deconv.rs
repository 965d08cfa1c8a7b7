//! Blind deconvolution by lifting.
//!
//! The observation is the circular convolution `b = (B1 x1) * (B2 x2)` of a
//! signal that is sparse in a known basis `B1` and a mask supported on a known
//! set `B2`. Lifting `X = x1 x2^*` makes `b` linear in `X`:
//!
//! ```text
//! A(Z1 Z2^*) = sum_j circconv(B1 z1_j, conj(B2 z2_j))
//! ```
//!
//! Only the real parts of the measurements are used.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::apps::haar::{haar_analysis, haar_synthesis};
use crate::error::{GaugeError, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::operator::{AsymmetricMap, OpCounter};

/// Column family for the signal basis `B1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalBasis {
    /// First `n1` columns of the Haar synthesis matrix (coarse to fine).
    #[default]
    Haar,
    /// First `n1` columns of the identity.
    Identity,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlindDeconvSpec {
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub basis: SignalBasis,
    pub seed: u64,
}

impl BlindDeconvSpec {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || !self.m.is_power_of_two() {
            return Err(GaugeError::Contract(format!("measurement length must be a power of two, got {}", self.m)));
        }
        if self.n1 == 0 || self.n2 == 0 || self.n1 > self.m || self.n2 > self.m {
            return Err(GaugeError::Contract("need 1 <= n1, n2 <= m".into()));
        }
        Ok(())
    }
}

pub struct BlindDeconvMap {
    spec: BlindDeconvSpec,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    counter: OpCounter,
}

pub fn bd_make_operator(spec: &BlindDeconvSpec) -> Result<BlindDeconvMap> {
    spec.validate()?;
    let mut planner = FftPlanner::new();
    Ok(BlindDeconvMap {
        fft: planner.plan_fft_forward(spec.m),
        ifft: planner.plan_fft_inverse(spec.m),
        spec: spec.clone(),
        counter: OpCounter::default(),
    })
}

impl BlindDeconvMap {
    pub fn spec(&self) -> &BlindDeconvSpec {
        &self.spec
    }

    /// `B1 x`.
    pub fn synthesize_signal(&self, x: &[C64]) -> Vec<C64> {
        let mut padded = vec![C64::from(0.0); self.spec.m];
        padded[..x.len()].copy_from_slice(x);
        match self.spec.basis {
            SignalBasis::Identity => padded,
            SignalBasis::Haar => {
                self.counter.add_dwt(1);
                haar_synthesis(&padded).expect("power-of-two length")
            }
        }
    }

    /// `B1^* s`.
    fn analyze_signal(&self, s: &[C64]) -> CVec {
        let coeffs = match self.spec.basis {
            SignalBasis::Identity => s.to_vec(),
            SignalBasis::Haar => {
                self.counter.add_dwt(1);
                haar_analysis(s).expect("power-of-two length")
            }
        };
        CVec::from_column_slice(&coeffs[..self.spec.n1])
    }

    /// `B2 x`.
    pub fn embed_mask(&self, x: &[C64]) -> Vec<C64> {
        let mut padded = vec![C64::from(0.0); self.spec.m];
        padded[..x.len()].copy_from_slice(x);
        padded
    }

    fn dft(&self, v: &mut [C64]) {
        self.fft.process(v);
    }

    fn idft(&self, v: &mut [C64]) {
        self.ifft.process(v);
        let s = 1.0 / self.spec.m as f64;
        for x in v.iter_mut() {
            *x *= s;
        }
    }

    /// Cross-correlation `c_l = sum_j y_{j+l} s_j` via the DFT.
    fn correlate(&self, y: &CVec, s: &[C64]) -> Vec<C64> {
        let mut fy: Vec<C64> = y.iter().cloned().collect();
        let mut fs: Vec<C64> = s.iter().map(|c| c.conj()).collect();
        self.dft(&mut fy);
        self.dft(&mut fs);
        let mut out: Vec<C64> = fy.iter().zip(fs.iter()).map(|(a, b)| a * b.conj()).collect();
        self.idft(&mut out);
        self.counter.add_dft(3);
        out
    }

    /// Dense coefficient matrices `A_k` with `A(X)_k = <X, A_k>`; for tests.
    pub fn dense_coefficients(&self) -> Vec<CMat> {
        let (m, n1, n2) = (self.spec.m, self.spec.n1, self.spec.n2);
        let b1: Vec<Vec<C64>> = (0..n1)
            .map(|a| {
                let mut e = vec![C64::from(0.0); n1];
                e[a] = C64::from(1.0);
                self.synthesize_signal(&e)
            })
            .collect();
        (0..m)
            .map(|k| {
                // M_k[a, b] = sum_l B1[l, a] conj(B2[k - l, b]), A_k = conj(M_k)
                CMat::from_fn(n1, n2, |a, b| {
                    let l = (k + m - b) % m;
                    b1[a][l].conj()
                })
            })
            .collect()
    }
}

impl AsymmetricMap for BlindDeconvMap {
    fn n1(&self) -> usize {
        self.spec.n1
    }

    fn n2(&self) -> usize {
        self.spec.n2
    }

    fn m(&self) -> usize {
        self.spec.m
    }

    fn real_measurements(&self) -> bool {
        true
    }

    fn counter(&self) -> &OpCounter {
        &self.counter
    }

    fn apply_forward(&self, z1: &CMat, z2: &CMat) -> CVec {
        let m = self.spec.m;
        let mut acc = vec![C64::from(0.0); m];
        for j in 0..z1.ncols() {
            let mut s1 = self.synthesize_signal(z1.column(j).as_slice());
            let mut s2: Vec<C64> = self.embed_mask(z2.column(j).as_slice()).iter().map(|c| c.conj()).collect();
            self.dft(&mut s1);
            self.dft(&mut s2);
            for (a, (p, q)) in acc.iter_mut().zip(s1.iter().zip(s2.iter())) {
                *a += p * q;
            }
            self.counter.add_dft(2);
        }
        self.idft(&mut acc);
        self.counter.add_dft(1);
        CVec::from_vec(acc)
    }

    fn apply_adjoint(&self, y: &CVec, v: &CVec) -> CVec {
        // ((A^* y) v)_a = sum_l conj(B1[l, a]) c_l,  c_l = sum_k y_k (B2 v)_{k - l}
        let s = self.embed_mask(v.as_slice());
        let c = self.correlate(y, &s);
        self.analyze_signal(&c)
    }

    fn apply_adjoint_h(&self, y: &CVec, u: &CVec) -> CVec {
        // ((A^* y)^* u)_b = e_b,  e_j = sum_l conj(y_{l + j}) (B1 u)_l
        let t = self.synthesize_signal(u.as_slice());
        let e = self.correlate(&y.map(|c| c.conj()), &t);
        CVec::from_column_slice(&e[..self.spec.n2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_cmat, random_cvec, random_rvec};
    use crate::operator::{embed_asymmetric, DenseAsymmetricMap, MeasurementMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(m: usize, n1: usize, n2: usize, basis: SignalBasis) -> BlindDeconvSpec {
        BlindDeconvSpec {
            m,
            n1,
            n2,
            basis,
            seed: 0,
        }
    }

    #[test]
    fn delta_convolved_with_delta() {
        let map = bd_make_operator(&spec(2, 2, 2, SignalBasis::Identity)).unwrap();
        let e1 = CMat::from_column_slice(2, 1, &[C64::from(1.0), C64::from(0.0)]);
        let b = map.apply_forward(&e1, &e1);
        assert!((b[0] - C64::from(1.0)).norm() < 1e-15 && b[1].norm() < 1e-15);
        let b0 = map.apply_forward(&e1, &CMat::zeros(2, 1));
        assert_eq!(b0.norm(), 0.0);
    }

    #[test]
    fn matches_direct_circular_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let map = bd_make_operator(&spec(16, 6, 5, SignalBasis::Haar)).unwrap();
        let x1 = random_cvec(&mut rng, 6);
        let x2 = random_cvec(&mut rng, 5);
        let s1 = map.synthesize_signal(x1.as_slice());
        let s2 = map.embed_mask(x2.as_slice());
        let direct: Vec<C64> = (0..16)
            .map(|k| (0..16).map(|l| s1[l] * s2[(k + 16 - l) % 16].conj()).sum())
            .collect();
        let z1 = CMat::from_column_slice(6, 1, x1.as_slice());
        let z2 = CMat::from_column_slice(5, 1, x2.as_slice());
        let b = map.apply_forward(&z1, &z2);
        for k in 0..16 {
            assert!((b[k] - direct[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let map = bd_make_operator(&spec(8, 4, 4, SignalBasis::Haar)).unwrap();
        let dense = DenseAsymmetricMap::new(map.dense_coefficients(), true).unwrap();
        let z1 = random_cmat(&mut rng, 4, 2);
        let z2 = random_cmat(&mut rng, 4, 2);
        assert!((map.apply_forward(&z1, &z2) - dense.apply_forward(&z1, &z2)).norm() < 1e-10);
        let y = random_cvec(&mut rng, 8);
        let v = random_cvec(&mut rng, 4);
        let u = random_cvec(&mut rng, 4);
        assert!((map.apply_adjoint(&y, &v) - dense.apply_adjoint(&y, &v)).norm() < 1e-10);
        assert!((map.apply_adjoint_h(&y, &u) - dense.apply_adjoint_h(&y, &u)).norm() < 1e-10);
    }

    #[test]
    fn embedded_adjoint_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let amap: Arc<dyn AsymmetricMap> = Arc::new(bd_make_operator(&spec(16, 4, 6, SignalBasis::Haar)).unwrap());
        let emb = embed_asymmetric(amap);
        for _ in 0..20 {
            let z = random_cmat(&mut rng, 10, 2);
            let y = random_rvec(&mut rng, emb.m());
            let lhs = emb.forward_factored(&z).unwrap().dot(&y);
            let az = emb.adjoint_apply_cols(&y, &z).unwrap();
            let rhs: f64 = z.iter().zip(az.iter()).map(|(a, b)| (a.conj() * b).re).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn counts_transforms() {
        let map = bd_make_operator(&spec(8, 4, 4, SignalBasis::Haar)).unwrap();
        let z = CMat::from_element(4, 1, C64::from(1.0));
        map.apply_forward(&z, &z);
        let c = map.counter().snapshot();
        assert_eq!((c.dft, c.dwt), (3, 1));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(bd_make_operator(&spec(12, 4, 4, SignalBasis::Haar)).is_err());
        assert!(bd_make_operator(&spec(8, 9, 4, SignalBasis::Haar)).is_err());
    }
}
