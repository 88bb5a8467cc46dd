use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use super::train::{fit, Regime, TrainConfig};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::gaussian::{aggregate_ensemble, GaussianPrediction};
use crate::ndgrad::Tensor;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig<T> {
    pub size: usize,
    /// FGSM step as a multiple of each feature's training range.
    pub adv_eps_scale: T,
}

impl<T: Real> Default for EnsembleConfig<T> {
    fn default() -> Self {
        EnsembleConfig {
            size: 5,
            adv_eps_scale: T::lit(0.01),
        }
    }
}

impl<T: Real> EnsembleConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("ensemble size must be at least 1"));
        }
        if !(self.adv_eps_scale >= T::zero()) {
            return Err(Error::invalid(format!("adv_eps_scale must be >= 0, got {}", self.adv_eps_scale)));
        }
        Ok(())
    }
}

/// Independently trained members, combined as a uniform mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<T> {
    pub members: Vec<MlpParams<T>>,
}

impl<T: Real> Ensemble<T> {
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<GaussianPrediction<T>>> {
        let runs = self.members.iter().map(|m| m.predict(x, None)).collect::<Result<Vec<_>>>()?;
        (0..x.rows())
            .map(|i| aggregate_ensemble(&runs.iter().map(|r| r[i]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Default member seeds: `base, base + 1, ...`.
pub fn member_seeds(base: u64, size: usize) -> Vec<u64> {
    (0..size as u64).map(|k| base.wrapping_add(k)).collect()
}

/// Trains one member per seed without dropout, with FGSM augmentation when
/// `adv_eps_scale > 0`.
pub fn train_ensemble_with_seeds<T: Real>(
    data: &Dataset,
    cfg: &TrainConfig<T>,
    ens: &EnsembleConfig<T>,
    seeds: &[u64],
) -> Result<Ensemble<T>> {
    ens.validate()?;
    if seeds.is_empty() {
        return Err(Error::Empty("ensemble seeds"));
    }
    let eps: Vec<T> = data.feature_ranges().iter().map(|&r| ens.adv_eps_scale * T::lit(r)).collect();
    let regime = Regime {
        dropout: false,
        adv_eps: (ens.adv_eps_scale > T::zero()).then_some(eps),
    };
    let members = seeds
        .iter()
        .map(|&seed| {
            let member_cfg = TrainConfig { seed, ..cfg.clone() };
            fit(data, &member_cfg, &regime).map(|(p, _)| p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { members })
}

pub fn train_ensemble<T: Real>(data: &Dataset, cfg: &TrainConfig<T>, ens: &EnsembleConfig<T>) -> Result<Ensemble<T>> {
    train_ensemble_with_seeds(data, cfg, ens, &member_seeds(cfg.seed, ens.size))
}

/// Trains on `data` and predicts the rows of `x`.
pub fn ensemble_train_predict<T: Real>(
    data: &Dataset,
    x: &Tensor<T>,
    cfg: &TrainConfig<T>,
    ens: &EnsembleConfig<T>,
) -> Result<Vec<GaussianPrediction<T>>> {
    train_ensemble(data, cfg, ens)?.predict(x)
}
