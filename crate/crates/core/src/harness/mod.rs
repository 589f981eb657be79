//! Batch experiments with shielded and unshielded twins, run metrics,
//! the training reward, and black-box falsification of controllers.

mod experiment;
mod falsify;
mod metrics;

use thiserror::Error;

pub use experiment::{run_experiment, sample_initial_states, ExperimentResult, ExperimentSpec, InitBound, MetricsSummary, RunPair};
pub use falsify::{falsify_controller, rollout, FalsifyOptions, FalsifyReport, Witness};
pub use metrics::{convergence, reward_eval, run_convergence, stat, Convergence, Stat, DEFAULT_EPSILON, DEFAULT_REWARD_WEIGHT};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Certify(#[from] crate::certify::CertifyError),
    #[error(transparent)]
    Switchgen(#[from] crate::switchgen::SwitchgenError),
    #[error(transparent)]
    Runtime(#[from] crate::runtime::RuntimeError),
    #[error(transparent)]
    Poly(#[from] crate::poly::PolyError),
}
