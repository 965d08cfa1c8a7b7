//! Instance generation, metrics, experiment sweeps, and the property suite.

pub mod check;
pub mod descriptor;
pub mod experiment;
pub mod instance;
pub mod metrics;

pub use check::{run_checks, CheckOutcome};
pub use descriptor::{ProblemDescriptor, ProblemType, Tolerances};
pub use experiment::{run_experiment, run_experiment_with, score, Aggregate, Execution, ExperimentConfig, ExperimentTable, RunRecord};
pub use instance::{
    gen_blind_deconv_instance, gen_certified_noisy_instance, gen_dense_instance, gen_gaussian_instance, Instance, Truth,
};
pub use metrics::{metric_rerr, metric_xerr, metric_xerr_vector};
