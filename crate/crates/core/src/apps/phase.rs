//! Coded-diffraction phase retrieval.
//!
//! Measurements are `b_k = |F C_k x|^2` for `L` diagonal masks `C_k` and the
//! unitary DFT `F`, stacked mask by mask. The lifted map acts on `X = Z Z^*`
//! as `A(X) = [diag(F C_k X C_k^* F^*)]_k`, with adjoint
//! `A^* y = sum_k C_k^* F^* Diag(y_k) F C_k`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GaugeError, Result};
use crate::linalg::{complex_normal, CMat, CVec, RVec, C64};
use crate::operator::{MeasurementMap, OpCounter};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    /// Independent standard complex normal entries.
    #[default]
    Gaussian,
    /// `d1 d2` with `d1` uniform on `{1, -1, i, -i}` and `d2` equal to
    /// `sqrt(2)/2` with probability 4/5, `sqrt(3)` otherwise.
    Octanary,
}

#[derive(Clone, Debug)]
pub struct PhaseRetrievalSpec {
    pub n: usize,
    pub l: usize,
    pub masks: Vec<CVec>,
    pub kind: MaskKind,
    pub seed: u64,
}

impl PhaseRetrievalSpec {
    pub fn random(n: usize, l: usize, kind: MaskKind, seed: u64) -> Self {
        Self {
            n,
            l,
            masks: pr_make_masks(n, l, kind, seed),
            kind,
            seed,
        }
    }
}

/// Draw `l` masks of length `n` from a dedicated seeded stream.
pub fn pr_make_masks(n: usize, l: usize, kind: MaskKind, seed: u64) -> Vec<CVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_masks(&mut rng, n, l, kind)
}

pub fn draw_masks<R: Rng + ?Sized>(rng: &mut R, n: usize, l: usize, kind: MaskKind) -> Vec<CVec> {
    (0..l)
        .map(|_| CVec::from_fn(n, |_, _| draw_mask_entry(rng, kind)))
        .collect()
}

fn draw_mask_entry<R: Rng + ?Sized>(rng: &mut R, kind: MaskKind) -> C64 {
    match kind {
        MaskKind::Gaussian => complex_normal(rng),
        MaskKind::Octanary => {
            let phase = match rng.random_range(0..4u8) {
                0 => C64::new(1.0, 0.0),
                1 => C64::new(-1.0, 0.0),
                2 => C64::new(0.0, 1.0),
                _ => C64::new(0.0, -1.0),
            };
            let mag = if rng.random::<f64>() < 0.8 {
                std::f64::consts::FRAC_1_SQRT_2
            } else {
                3f64.sqrt()
            };
            phase * mag
        }
    }
}

pub struct PhaseRetrievalMap {
    n: usize,
    masks: Vec<CVec>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scale: f64,
    counter: OpCounter,
}

pub fn pr_make_operator(spec: &PhaseRetrievalSpec) -> Result<PhaseRetrievalMap> {
    PhaseRetrievalMap::new(spec.masks.clone())
}

impl PhaseRetrievalMap {
    pub fn new(masks: Vec<CVec>) -> Result<Self> {
        let n = masks
            .first()
            .map(|m| m.len())
            .ok_or_else(|| GaugeError::Contract("phase retrieval needs at least one mask".into()))?;
        if n == 0 {
            return Err(GaugeError::Contract("signal length must be positive".into()));
        }
        for m in &masks {
            check_dim("mask length", n, m.len())?;
            if m.iter().all(|c| c.norm() == 0.0) {
                return Err(GaugeError::Contract("masks must be nonzero".into()));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            scale: 1.0 / (n as f64).sqrt(),
            masks,
            counter: OpCounter::default(),
        })
    }

    pub fn masks(&self) -> &[CVec] {
        &self.masks
    }

    pub fn num_masks(&self) -> usize {
        self.masks.len()
    }

    /// `F C_k v` for one mask.
    fn coded(&self, mask: &CVec, v: &[C64], buf: &mut [C64]) {
        for ((o, c), x) in buf.iter_mut().zip(mask.iter()).zip(v.iter()) {
            *o = c * x;
        }
        self.fft.process(buf);
        for o in buf.iter_mut() {
            *o *= self.scale;
        }
    }

    /// Dense coefficient matrices `A_{k,i} = w w^*` with `w^*` the `i`-th row
    /// of `F C_k`; for tests.
    pub fn dense_coefficients(&self) -> Vec<CMat> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.m());
        for mask in &self.masks {
            for i in 0..n {
                // row i of F C_k is conj(w)
                let w = CVec::from_fn(n, |j, _| {
                    let angle = -2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64;
                    (C64::from_polar(self.scale, angle) * mask[j]).conj()
                });
                out.push(&w * w.adjoint());
            }
        }
        out
    }
}

impl MeasurementMap for PhaseRetrievalMap {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.n * self.masks.len()
    }

    fn counter(&self) -> &OpCounter {
        &self.counter
    }

    fn apply_forward(&self, z: &CMat) -> RVec {
        let n = self.n;
        let mut out = RVec::zeros(self.m());
        let mut buf = vec![C64::from(0.0); n];
        for j in 0..z.ncols() {
            let col = z.column(j);
            let col = col.as_slice();
            for (k, mask) in self.masks.iter().enumerate() {
                self.coded(mask, col, &mut buf);
                for (i, w) in buf.iter().enumerate() {
                    out[k * n + i] += w.norm_sqr();
                }
            }
        }
        self.counter.add_dft((self.masks.len() * z.ncols()) as u64);
        out
    }

    fn apply_adjoint(&self, y: &RVec, v: &CVec) -> CVec {
        let n = self.n;
        let mut out = CVec::zeros(n);
        let mut buf = vec![C64::from(0.0); n];
        for (k, mask) in self.masks.iter().enumerate() {
            self.coded(mask, v.as_slice(), &mut buf);
            for (i, w) in buf.iter_mut().enumerate() {
                *w *= y[k * n + i];
            }
            self.ifft.process(&mut buf);
            for ((o, c), w) in out.iter_mut().zip(mask.iter()).zip(buf.iter()) {
                *o += c.conj() * w * self.scale;
            }
        }
        self.counter.add_dft(2 * self.masks.len() as u64);
        out
    }
}
