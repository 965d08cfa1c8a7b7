//! Concrete measurement operators and weighted problem constructions.

pub mod deconv;
pub mod haar;
pub mod phase;
pub mod weighted;

pub use deconv::{bd_make_operator, BlindDeconvMap, BlindDeconvSpec, SignalBasis};
pub use haar::{haar_analysis, haar_synthesis, haar_transform, HaarDirection};
pub use phase::{pr_make_masks, pr_make_operator, MaskKind, PhaseRetrievalMap, PhaseRetrievalSpec};
pub use weighted::{
    reweight, weighted_nuclear_dual, weighted_trace_dual, DenseWeight, LowRankWeight, ScaledIdentity,
    WeightedAsymmetricMap, WeightedMap,
};
