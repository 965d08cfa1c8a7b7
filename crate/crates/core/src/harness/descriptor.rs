//! JSON problem descriptors.
//!
//! ```json
//! {"type": "phase-retrieval", "n": 128, "L": 12, "mask_kind": "gaussian", "seed": 0}
//! {"type": "phase-retrieval", "n": 32, "L": 9, "eta": 0.01, "certified": true}
//! {"type": "blind-deconv", "m": 64, "n1": 16, "n2": 16}
//! {"type": "dense", "n": 8, "m": 40}
//! ```

use serde::{Deserialize, Serialize};

use crate::apps::phase::MaskKind;
use crate::error::{GaugeError, Result};
use crate::harness::instance::{
    gen_blind_deconv_instance, gen_certified_noisy_instance, gen_dense_instance, gen_gaussian_instance, Instance,
};
use crate::recover::{SolveMode, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemType {
    PhaseRetrieval,
    BlindDeconv,
    Dense,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub tol_feas: Option<f64>,
    pub tol_gap: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    #[serde(rename = "type")]
    pub kind: ProblemType,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default, rename = "L")]
    pub l: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default)]
    pub n2: Option<usize>,
    #[serde(default)]
    pub mask_kind: Option<MaskKind>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub certified: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Option<SolveMode>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn need(v: Option<usize>, name: &str) -> Result<usize> {
    v.ok_or_else(|| GaugeError::Config(format!("descriptor is missing `{name}`")))
}

impl ProblemDescriptor {
    pub fn phase_retrieval(n: usize, l: usize) -> Self {
        Self {
            kind: ProblemType::PhaseRetrieval,
            n: Some(n),
            l: Some(l),
            m: None,
            n1: None,
            n2: None,
            mask_kind: None,
            eta: None,
            certified: false,
            seed: 0,
            mode: None,
            tolerances: Tolerances::default(),
        }
    }

    pub fn certified(n: usize, l: usize, eta: f64) -> Self {
        Self {
            eta: Some(eta),
            certified: true,
            mask_kind: Some(MaskKind::Octanary),
            ..Self::phase_retrieval(n, l)
        }
    }

    pub fn blind_deconv(m: usize, n1: usize, n2: usize) -> Self {
        Self {
            kind: ProblemType::BlindDeconv,
            n: None,
            l: None,
            m: Some(m),
            n1: Some(n1),
            n2: Some(n2),
            ..Self::phase_retrieval(0, 0)
        }
    }

    pub fn dense(n: usize, m: usize) -> Self {
        Self {
            kind: ProblemType::Dense,
            l: None,
            m: Some(m),
            ..Self::phase_retrieval(n, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProblemType::PhaseRetrieval => {
                need(self.n, "n")?;
                need(self.l, "L")?;
                if self.certified {
                    if self.mask_kind == Some(MaskKind::Gaussian) {
                        return Err(GaugeError::Config("certified instances use octanary masks".into()));
                    }
                } else if self.eta.is_some_and(|e| e != 0.0) {
                    return Err(GaugeError::Config("a noise level needs `certified: true`".into()));
                } else if self.mask_kind == Some(MaskKind::Octanary) {
                    return Err(GaugeError::Config("uncertified instances use gaussian masks".into()));
                }
            }
            ProblemType::BlindDeconv => {
                need(self.m, "m")?;
                need(self.n1, "n1")?;
                need(self.n2, "n2")?;
            }
            ProblemType::Dense => {
                need(self.n, "n")?;
                need(self.m, "m")?;
            }
        }
        Ok(())
    }

    /// Instance for a given per-instance seed.
    pub fn build(&self, seed: u64) -> Result<Instance> {
        self.validate()?;
        match self.kind {
            ProblemType::PhaseRetrieval => {
                let (n, l) = (need(self.n, "n")?, need(self.l, "L")?);
                if self.certified {
                    gen_certified_noisy_instance(n, l, self.eta.unwrap_or(0.0), seed)
                } else {
                    gen_gaussian_instance(n, l, seed)
                }
            }
            ProblemType::BlindDeconv => {
                gen_blind_deconv_instance(need(self.m, "m")?, need(self.n1, "n1")?, need(self.n2, "n2")?, seed)
            }
            ProblemType::Dense => gen_dense_instance(need(self.n, "n")?, need(self.m, "m")?, seed),
        }
    }

    /// Solver options with the descriptor's tolerances applied over `base`.
    pub fn options(&self, base: &SolveOptions) -> SolveOptions {
        let mut opts = base.clone();
        if let Some(mode) = self.mode {
            opts.mode = mode;
        }
        if let Some(t) = self.tolerances.tol_feas {
            opts.tol_feas = t;
        }
        if let Some(t) = self.tolerances.tol_gap {
            opts.tol_gap = t;
        }
        if let Some(k) = self.tolerances.max_iter {
            opts.max_iter = k;
        }
        opts
    }

    /// Side dimension reported in tables.
    pub fn size(&self) -> usize {
        match self.kind {
            ProblemType::BlindDeconv => self.m.unwrap_or(0),
            _ => self.n.unwrap_or(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_forms() {
        let d: ProblemDescriptor =
            serde_json::from_str(r#"{"type": "phase-retrieval", "n": 16, "L": 6, "mask_kind": "gaussian", "seed": 1}"#)
                .unwrap();
        assert_eq!(d.l, Some(6));
        assert!(d.validate().is_ok());
        let d: ProblemDescriptor =
            serde_json::from_str(r#"{"type": "blind-deconv", "m": 64, "n1": 16, "n2": 16, "mode": "gauge-feas"}"#)
                .unwrap();
        assert_eq!(d.mode, Some(SolveMode::GaugeFeas));
        let d: ProblemDescriptor = serde_json::from_str(
            r#"{"type": "phase-retrieval", "n": 8, "L": 4, "eta": 0.01, "certified": true, "tolerances": {"tol_gap": 1e-6}}"#,
        )
        .unwrap();
        assert_eq!(d.tolerances.tol_gap, Some(1e-6));
        assert!(d.build(0).is_ok());
    }

    #[test]
    fn rejects_incomplete_descriptors() {
        let d: ProblemDescriptor = serde_json::from_str(r#"{"type": "dense", "n": 4}"#).unwrap();
        assert!(d.validate().is_err());
        assert!(serde_json::from_str::<ProblemDescriptor>(r#"{"type": "sphere"}"#).is_err());
        let mut d = ProblemDescriptor::phase_retrieval(8, 2);
        d.eta = Some(0.1);
        assert!(d.validate().is_err());
    }
}
