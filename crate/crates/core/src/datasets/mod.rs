//! Regression datasets: CSV ingestion, train-only standardization,
//! seeded train/test resampling and synthetic generators with known truth.

mod load;
mod splits;
mod synth;

pub use load::{load_csv, CsvOptions, Delimiter, TargetColumn};
pub use splits::{make_splits, Split, SplitSpec};
pub use synth::{synth_hetero, synth_linear, SynthHetero};

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::scalar::Real;

/// In-memory regression table, features stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Vec<f64>,
    targets: Vec<f64>,
    n_features: usize,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<f64>, targets: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let d = feature_names.len();
        if d == 0 || features.len() != targets.len() * d {
            return Err(Error::invalid(format!(
                "dataset: {} feature values for {} rows of {} columns",
                features.len(),
                targets.len(),
                d
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset: non-finite value"));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            targets,
            n_features: d,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// `(N, D)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.len(), self.n_features)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        let mut targets = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            name: self.name.clone(),
            features,
            targets,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Feature matrix as an `N×D` tensor.
    pub fn feature_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.features.iter().map(|&v| T::lit(v)).collect();
        Tensor::matrix(self.len(), self.n_features, data).expect("consistent dataset")
    }

    pub fn target_vec<T: Real>(&self) -> Vec<T> {
        self.targets.iter().map(|&v| T::lit(v)).collect()
    }

    /// Per-feature `max - min`.
    pub fn feature_ranges(&self) -> Vec<f64> {
        (0..self.n_features)
            .map(|j| {
                let col = (0..self.len()).map(|i| self.features[i * self.n_features + j]);
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                if self.is_empty() {
                    0.0
                } else {
                    hi - lo
                }
            })
            .collect()
    }
}

/// Z-scoring statistics estimated on training rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    /// Source columns that survive (nonzero training variance).
    pub kept: Vec<usize>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

const MIN_STD: f64 = 1e-12;

impl Standardizer {
    /// Population mean/std of the training rows. Constant feature columns
    /// are dropped with a warning.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::invalid("standardize: need at least two training rows"));
        }
        let d = train.n_features;
        let mut kept = Vec::new();
        let mut feature_mean = Vec::new();
        let mut feature_std = Vec::new();
        for j in 0..d {
            let (m, s) = mean_std((0..train.len()).map(|i| train.features[i * d + j]));
            if s <= MIN_STD {
                log::warn!("dropping constant feature column {:?}", train.feature_names[j]);
                continue;
            }
            kept.push(j);
            feature_mean.push(m);
            feature_std.push(s);
        }
        if kept.is_empty() {
            return Err(Error::invalid("standardize: every feature column is constant"));
        }
        let (target_mean, target_std) = mean_std(train.targets.iter().copied());
        if target_std <= MIN_STD {
            return Err(Error::invalid("standardize: target is constant on the training rows"));
        }
        Ok(Standardizer {
            kept,
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        })
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        let d = data.n_features;
        let mut features = Vec::with_capacity(data.len() * self.kept.len());
        for i in 0..data.len() {
            for (k, &j) in self.kept.iter().enumerate() {
                features.push((data.features[i * d + j] - self.feature_mean[k]) / self.feature_std[k]);
            }
        }
        Dataset {
            name: data.name.clone(),
            features,
            targets: data.targets.iter().map(|&y| self.target(y)).collect(),
            n_features: self.kept.len(),
            feature_names: self.kept.iter().map(|&j| data.feature_names[j].clone()).collect(),
        }
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn inverse_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    /// Undoes [`transform`](Self::transform) on a standardized dataset.
    pub fn inverse(&self, data: &Dataset) -> Dataset {
        let k = self.kept.len();
        let mut features = Vec::with_capacity(data.len() * k);
        for i in 0..data.len() {
            for j in 0..k {
                features.push(data.features[i * k + j] * self.feature_std[j] + self.feature_mean[j]);
            }
        }
        Dataset {
            name: data.name.clone(),
            features,
            targets: data.targets.iter().map(|&z| self.inverse_target(z)).collect(),
            n_features: k,
            feature_names: data.feature_names.clone(),
        }
    }
}

/// Fits on `train` rows and returns the whole dataset standardized with it.
pub fn standardize(data: &Dataset, train: &[usize]) -> Result<(Dataset, Standardizer)> {
    let st = Standardizer::fit(&data.subset(train))?;
    Ok((st.transform(data), st))
}
