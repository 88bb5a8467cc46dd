//! Heteroscedastic MLP regressors: MC-dropout networks and adversarially
//! trained deep ensembles, optionally fitted with the quantile regularizer.

mod adam;
mod ensemble;
mod io;
mod mlp;
mod train;

pub use adam::{adam_step, AdamState};
pub use ensemble::{
    ensemble_train_predict, member_seeds, train_ensemble, train_ensemble_with_seeds, Ensemble, EnsembleConfig,
};
pub use io::{FORMAT_VERSION, MAGIC};
pub use mlp::{mlp_forward, DropoutMasks, MlpParams, DEFAULT_HIDDEN};
pub use train::{epoch_batches, fgsm_perturb, mc_dropout_predict, train, train_logged, TrainConfig, TrainLog};

/// Default number of stochastic passes for MC-dropout prediction.
pub const DEFAULT_MC_PASSES: usize = 10;
