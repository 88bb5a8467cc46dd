//! One experiment = one dataset, one model family, one or more λ settings,
//! each evaluated on every split.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use qrcal::datasets::{make_splits, Dataset, Split, Standardizer};
use qrcal::metrics::{calibration_error, MetricsReport};
use qrcal::models::{mc_dropout_predict, member_seeds, train, train_ensemble_with_seeds, Ensemble};
use qrcal::recalib::{fit_calibration_map, recalibrated_pits};
use qrcal::{GaussianPrediction, MlpParams};

use crate::config::{CalibSplit, ExperimentConfig, ModelKind};
use crate::data;
use crate::error::CliError;

/// Dataset plus its seeded splits.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub label: String,
    pub data: Dataset,
    pub splits: Vec<Split>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    let data = data::resolve(&cfg.dataset, &cfg.descriptor_dir)?;
    let splits = make_splits(data.len(), &cfg.splits).map_err(CliError::run("splitting"))?;
    Ok(Prepared {
        label: cfg.dataset_label(),
        data,
        splits,
    })
}

/// Seed of the model(s) trained on split `k`.
pub fn model_seed(cfg: &ExperimentConfig, k: usize) -> u64 {
    cfg.train.seed.wrapping_add(1000 * k as u64)
}

/// Row sets used for one split.
#[derive(Clone, Debug)]
pub struct SplitRows {
    /// Rows the network is fitted on.
    pub fit: Vec<usize>,
    /// Rows the recalibration map is fitted on.
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_rows(cfg: &ExperimentConfig, split: &Split) -> Result<SplitRows, CliError> {
    Ok(match cfg.calib_split {
        CalibSplit::Train => SplitRows {
            fit: split.train.clone(),
            calib: split.train.clone(),
            test: split.test.clone(),
        },
        CalibSplit::Holdout => {
            let (fit, calib) = split
                .carve_holdout(cfg.holdout_fraction, model_seed(cfg, split.index) ^ 0x401d)
                .map_err(CliError::run("carving holdout"))?;
            SplitRows {
                fit,
                calib,
                test: split.test.clone(),
            }
        }
    })
}

/// Trained networks for one split: one for MC dropout, `size` for ensembles.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub members: Vec<MlpParams>,
}

impl TrainedModel {
    pub fn predict(&self, cfg: &ExperimentConfig, x: &qrcal::Tensor, seed: u64) -> qrcal::Result<Vec<GaussianPrediction>> {
        match self.kind {
            ModelKind::McDropout => mc_dropout_predict(&self.members[0], x, cfg.mc_passes, cfg.train.dropout_rate, seed),
            ModelKind::Ensemble => Ensemble {
                members: self.members.clone(),
            }
            .predict(x),
        }
    }

    pub fn file_names(&self, stem: &str) -> Vec<String> {
        match self.kind {
            ModelKind::McDropout => vec![format!("{stem}.bin")],
            ModelKind::Ensemble => (0..self.members.len()).map(|j| format!("{stem}_m{j}.bin")).collect(),
        }
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let mut paths = Vec::new();
        for (m, name) in self.members.iter().zip(self.file_names(stem)) {
            let p = dir.join(name);
            m.save(&p).map_err(CliError::run("saving model"))?;
            paths.push(p);
        }
        Ok(paths)
    }

    pub fn load(kind: ModelKind, size: usize, dir: &Path, stem: &str) -> Result<Self, CliError> {
        let probe = TrainedModel {
            kind,
            members: vec![],
        };
        let names = match kind {
            ModelKind::McDropout => probe.file_names(stem),
            ModelKind::Ensemble => (0..size).map(|j| format!("{stem}_m{j}.bin")).collect(),
        };
        let members = names
            .iter()
            .map(|n| {
                let p = dir.join(n);
                if !p.exists() {
                    return Err(CliError::Other(format!("model artifact {} not found (run `train` first)", p.display())));
                }
                MlpParams::load(&p).map_err(CliError::run("loading model"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrainedModel { kind, members })
    }
}

pub fn lambda_tag(lambda: f64) -> String {
    format!("lam{lambda}")
}

pub fn model_stem(label: &str, cfg: &ExperimentConfig, lambda: f64, split: usize) -> String {
    format!("{label}_{}_{}_split{split}", cfg.model.as_str(), lambda_tag(lambda))
}

/// Everything measured on one split for one λ.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitOutcome {
    pub split: usize,
    pub lambda: f64,
    /// Test metrics in original target units.
    pub test: MetricsReport,
    /// Calibration error after isotonic recalibration fitted on the calib rows.
    pub test_iso_calib_error: f64,
    pub model: TrainedModel,
}

fn standardized(data: &Dataset, st: &Standardizer, rows: &[usize]) -> Dataset {
    st.transform(&data.subset(rows))
}

pub fn fit_split(cfg: &ExperimentConfig, data: &Dataset, split: &Split, lambda: f64) -> Result<TrainedModel, CliError> {
    let rows = split_rows(cfg, split)?;
    let st = Standardizer::fit(&data.subset(&rows.fit)).map_err(CliError::run("standardizing"))?;
    let train_set = standardized(data, &st, &rows.fit);
    let tcfg = qrcal::TrainConfig {
        lambda,
        seed: model_seed(cfg, split.index),
        ..cfg.train.clone()
    };
    let ctx = format!("training split {} (lambda {lambda})", split.index);
    let members = match cfg.model {
        ModelKind::McDropout => vec![train(&train_set, &tcfg).map_err(CliError::run(ctx))?],
        ModelKind::Ensemble => {
            let seeds = member_seeds(tcfg.seed, cfg.ensemble.size);
            train_ensemble_with_seeds(&train_set, &tcfg, &cfg.ensemble, &seeds)
                .map_err(CliError::run(ctx))?
                .members
        }
    };
    Ok(TrainedModel {
        kind: cfg.model,
        members,
    })
}

/// Predictions for `rows` in original units.
fn predict_rows(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    data: &Dataset,
    st: &Standardizer,
    rows: &[usize],
    seed: u64,
) -> Result<Vec<GaussianPrediction>, CliError> {
    let x = standardized(data, st, rows).feature_tensor::<f64>();
    if x.cols() != model.members[0].input_dim() {
        return Err(CliError::Other(format!(
            "model expects {} features, dataset provides {}",
            model.members[0].input_dim(),
            x.cols()
        )));
    }
    Ok(model
        .predict(cfg, &x, seed)
        .map_err(CliError::run("predicting"))?
        .iter()
        .map(|p| p.destandardize(st.target_mean, st.target_std))
        .collect())
}

/// Evaluates a trained model on its split, including isotonic recalibration.
pub fn evaluate_split(
    cfg: &ExperimentConfig,
    data: &Dataset,
    split: &Split,
    lambda: f64,
    model: TrainedModel,
) -> Result<SplitOutcome, CliError> {
    let rows = split_rows(cfg, split)?;
    let st = Standardizer::fit(&data.subset(&rows.fit)).map_err(CliError::run("standardizing"))?;
    let seed = model_seed(cfg, split.index) ^ 0xc0ffee;
    let test_preds = predict_rows(cfg, &model, data, &st, &rows.test, seed)?;
    let test_y: Vec<f64> = rows.test.iter().map(|&i| data.targets()[i]).collect();
    let test = MetricsReport::evaluate(&test_preds, &test_y, &cfg.metrics).map_err(CliError::run("metrics"))?;

    let calib_preds = predict_rows(cfg, &model, data, &st, &rows.calib, seed.wrapping_add(1))?;
    let calib_y: Vec<f64> = rows.calib.iter().map(|&i| data.targets()[i]).collect();
    let map = fit_calibration_map(&calib_preds, &calib_y).map_err(CliError::run("isotonic fit"))?;
    let post: Vec<f64> = recalibrated_pits(&map, &test_preds, &test_y)
        .map_err(CliError::run("isotonic apply"))?
        .into_iter()
        .map(|p| p.value())
        .collect();
    let test_iso_calib_error = calibration_error(&post, &cfg.metrics).map_err(CliError::run("metrics"))?;
    Ok(SplitOutcome {
        split: split.index,
        lambda,
        test,
        test_iso_calib_error,
        model,
    })
}

/// Trains and evaluates every split for one λ, in split order.
pub fn run_setting(cfg: &ExperimentConfig, prep: &Prepared, lambda: f64) -> Result<Vec<SplitOutcome>, CliError> {
    info!("{}: {} lambda={lambda} on {} splits", prep.label, cfg.model.as_str(), prep.splits.len());
    prep.splits
        .par_iter()
        .map(|s| {
            let model = fit_split(cfg, &prep.data, s, lambda)?;
            evaluate_split(cfg, &prep.data, s, lambda, model)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.dataset.name = Some("synth_hetero".into());
        c.dataset.n = 120;
        c.train.epochs = 3;
        c.train.hidden = 8;
        c.train.batch_size = 32;
        c.splits.n_splits = 2;
        c.mc_passes = 3;
        c
    }

    #[test]
    fn run_is_deterministic_and_ordered() {
        let cfg = tiny();
        let prep = prepare(&cfg).unwrap();
        let a = run_setting(&cfg, &prep, 20.0).unwrap();
        let b = run_setting(&cfg, &prep, 20.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|o| o.split).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(a[0].test.n, 24);
    }

    #[test]
    fn holdout_rows_are_disjoint_from_fit_rows() {
        let mut cfg = tiny();
        cfg.calib_split = CalibSplit::Holdout;
        let prep = prepare(&cfg).unwrap();
        let r = split_rows(&cfg, &prep.splits[0]).unwrap();
        assert!(r.calib.iter().all(|i| !r.fit.contains(i)));
        assert_eq!(r.fit.len() + r.calib.len(), prep.splits[0].train.len());
    }

    #[test]
    fn ensemble_artifacts_round_trip() {
        let mut cfg = tiny();
        cfg.model = ModelKind::Ensemble;
        cfg.ensemble.size = 2;
        let prep = prepare(&cfg).unwrap();
        let m = fit_split(&cfg, &prep.data, &prep.splits[0], 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path(), "x").unwrap();
        assert_eq!(TrainedModel::load(ModelKind::Ensemble, 2, dir.path(), "x").unwrap(), m);
        assert!(TrainedModel::load(ModelKind::Ensemble, 3, dir.path(), "x").is_err());
    }
}
