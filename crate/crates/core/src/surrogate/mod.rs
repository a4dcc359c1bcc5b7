//! Hybrid VARMAX surrogate of the plant (the Virtual Asset).

pub mod fit;
pub mod net;
pub mod varmax;
pub mod xenon;

pub use fit::{fit_varmax, FitOptions, FitReport, Series};
pub use net::{
    build_shock_surrogate, fit_original_net, original_block_specs, shock_block_specs,
    surrogate_step, Block, BlockSpec, Checkpoint, CoefKind, Feed, NetVariant, Normalization,
    ParamRef, PumpContext, ShockTrainingSet, SurrogateInput, SurrogateNet, Trajectory,
};
pub use varmax::{count_params, varmax_predict, VarmaxParams};
pub use xenon::{xenon_equilibrium, xenon_update};

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("missing lagged state x(k-2)")]
    MissingLag,
    #[error("series too short: need at least {needed} usable rows, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("rank-deficient regression (insufficient excitation): {0}")]
    RankDeficient(String),
    #[error("surrogate diverged: non-finite prediction for {0}")]
    NonFinite(String),
    #[error("invalid wiring: {0}")]
    Wiring(String),
    #[error("training set lacks required coverage: {0}")]
    Coverage(String),
    #[error("unknown parameter reference: {0}")]
    UnknownParam(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[cfg(test)]
mod net_tests;
