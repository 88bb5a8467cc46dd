use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Dataset;
use crate::gaussian::GaussianPrediction;

/// Heteroscedastic toy task `y = sin(2x) + (0.1 + 0.4|x|) ε`, `x ~ U[-2, 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthHetero {
    pub data: Dataset,
}

impl SynthHetero {
    pub fn true_mu(x: f64) -> f64 {
        (2.0 * x).sin()
    }

    pub fn true_sigma(x: f64) -> f64 {
        0.1 + 0.4 * x.abs()
    }

    pub fn truth(x: f64) -> GaussianPrediction<f64> {
        GaussianPrediction {
            mu: Self::true_mu(x),
            sigma: Self::true_sigma(x),
        }
    }

    /// True conditional distribution of every row.
    pub fn true_predictions(&self) -> Vec<GaussianPrediction<f64>> {
        (0..self.data.len()).map(|i| Self::truth(self.data.row(i)[0])).collect()
    }
}

pub fn synth_hetero(n: usize, seed: u64) -> SynthHetero {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-2.0..=2.0);
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(SynthHetero::true_mu(x) + SynthHetero::true_sigma(x) * e);
    }
    SynthHetero {
        data: Dataset::new("synth_hetero", xs, ys, vec!["x".into()]).expect("finite synthetic data"),
    }
}

/// `y = 2x + ε`, `ε ~ N(0, 0.01)`, `x ~ U[-1, 1]`.
pub fn synth_linear(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-1.0..=1.0);
        let e: f64 = rng.sample(StandardNormal);
        xs.push(x);
        ys.push(2.0 * x + 0.1 * e);
    }
    Dataset::new("synth_linear", xs, ys, vec!["x".into()]).expect("finite synthetic data")
}
