use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::mlp::{mlp_forward, DropoutMasks, MlpParams, DEFAULT_HIDDEN};
use crate::ckl::{total_loss, DEFAULT_LAMBDA};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::gaussian::{aggregate_mc, gaussian_nll_var, GaussianPrediction};
use crate::ndgrad::{GradError, Tape, Tensor};
use crate::scalar::Real;
use crate::softsort::{SoftSortConfig, DEFAULT_TAU};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig<T> {
    /// Weight of the quantile regularizer.
    pub lambda: T,
    pub learning_rate: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: T,
    pub seed: u64,
    /// Soft sort temperature.
    pub tau: T,
    pub hidden: usize,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            lambda: T::lit(DEFAULT_LAMBDA),
            learning_rate: T::lit(1e-2),
            batch_size: 512,
            epochs: 100,
            dropout_rate: T::lit(0.25),
            seed: 0,
            tau: T::lit(DEFAULT_TAU),
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.lambda >= T::zero()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.learning_rate > T::zero()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.dropout_rate >= T::zero() && self.dropout_rate < T::one()) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.tau > T::zero()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden == 0 {
            return bad("batch_size, epochs and hidden must be positive".into());
        }
        Ok(())
    }
}

/// How the network is fitted besides the loss weights.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Regime<T> {
    /// Dropout on the hidden layers during training.
    pub dropout: bool,
    /// Per-feature FGSM step; `None` disables adversarial augmentation.
    pub adv_eps: Option<Vec<T>>,
}

/// Per-epoch mean of the minibatch losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

/// Row index batches for one epoch. A trailing batch of one row joins the
/// previous batch so the regularizer always sees at least two points.
pub fn epoch_batches<R: rand::Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("nonempty");
        batches.last_mut().expect("nonempty").extend(last);
    }
    batches
}

fn gather_rows<T: Real>(x: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let d = x.cols();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        data.extend_from_slice(x.row(r));
    }
    Tensor::matrix(rows.len(), d, data).expect("sized")
}

/// `x + eps ⊙ sign(∂NLL/∂x)` with the network run deterministically.
pub fn fgsm_perturb<T: Real>(params: &MlpParams<T>, x: &Tensor<T>, y: &[T], eps: &[T]) -> Result<Tensor<T>> {
    if eps.len() != x.cols() {
        return Err(Error::Length {
            what: "fgsm eps vector",
            left: eps.len(),
            right: x.cols(),
        });
    }
    if eps.iter().all(|e| *e == T::zero()) {
        return Ok(x.clone());
    }
    let tape = Tape::new();
    let vars = params.on_tape(&tape, false);
    let xv = tape.param(x.clone());
    let (mu, sigma) = mlp_forward(&vars, xv, None)?;
    let nll = gaussian_nll_var(&Tensor::vector(y.to_vec()), mu, sigma)?;
    let g = tape.gradients(nll, &[xv])?.pop().expect("one input");
    let d = x.cols();
    let mut out = x.clone();
    for (k, (v, gk)) in out.data_mut().iter_mut().zip(g.data()).enumerate() {
        let s = if *gk > T::zero() {
            T::one()
        } else if *gk < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        *v = *v + eps[k % d] * s;
    }
    Ok(out)
}

fn diverged(epoch: usize, batch: usize, loss: f64) -> Error {
    Error::Diverged { epoch, batch, loss }
}

pub(crate) fn fit<T: Real>(data: &Dataset, cfg: &TrainConfig<T>, regime: &Regime<T>) -> Result<(MlpParams<T>, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("train"));
    }
    if cfg.lambda > T::zero() && data.len() < 2 {
        return Err(Error::invalid("the quantile regularizer needs at least two training rows"));
    }
    let x = data.feature_tensor::<T>();
    let y = data.target_vec::<T>();
    let soft = SoftSortConfig::ascending(cfg.tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParams::init(data.n_features(), cfg.hidden, &mut rng)?;
    let mut adam = AdamState::new(&params.blocks);
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(data.len(), cfg.batch_size, &mut rng);
        let mut acc = 0.0;
        for (b, rows) in batches.iter().enumerate() {
            let xb = gather_rows(&x, rows);
            let yb = Tensor::vector(rows.iter().map(|&r| y[r]).collect());
            let masks = regime
                .dropout
                .then(|| DropoutMasks::sample(rows.len(), cfg.hidden, cfg.dropout_rate, &mut rng));
            let x_adv = match &regime.adv_eps {
                Some(eps) => Some(fgsm_perturb(&params, &xb, yb.data(), eps)?),
                None => None,
            };

            let tape = Tape::new();
            let vars = params.on_tape(&tape, true);
            let step = || -> Result<_> {
                let (mu, sigma) = mlp_forward(&vars, tape.constant(xb.clone()), masks.as_ref())?;
                let mut loss = total_loss(&yb, mu, sigma, cfg.lambda, &soft)?;
                if let Some(xa) = &x_adv {
                    let (mu, sigma) = mlp_forward(&vars, tape.constant(xa.clone()), masks.as_ref())?;
                    let adv = total_loss(&yb, mu, sigma, cfg.lambda, &soft)?;
                    loss = loss.add(adv)?.scale(T::lit(0.5))?;
                }
                let grads = tape.gradients(loss, &vars)?;
                Ok((loss.item(), grads))
            };
            let (loss, grads) = match step() {
                Ok(v) => v,
                Err(Error::Grad(GradError::NonFinite { .. })) => return Err(diverged(epoch + 1, b + 1, f64::NAN)),
                Err(e) => return Err(e),
            };
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(diverged(epoch + 1, b + 1, loss));
            }
            adam_step(&mut params.blocks, &grads, MlpParams::<T>::block_names(), &mut adam, cfg.learning_rate)?;
            if let Some(i) = params.blocks.iter().position(|p| !p.all_finite()) {
                return Err(Error::NonFinite {
                    what: "parameter",
                    block: MlpParams::<T>::block_names()[i].into(),
                });
            }
            acc += loss;
        }
        log.epoch_loss.push(acc / batches.len() as f64);
    }
    Ok((params, log))
}

/// Fits the MC-dropout network (dropout active during training).
pub fn train<T: Real>(data: &Dataset, cfg: &TrainConfig<T>) -> Result<MlpParams<T>> {
    Ok(train_logged(data, cfg)?.0)
}

pub fn train_logged<T: Real>(data: &Dataset, cfg: &TrainConfig<T>) -> Result<(MlpParams<T>, TrainLog)> {
    fit(
        data,
        cfg,
        &Regime {
            dropout: true,
            adv_eps: None,
        },
    )
}

/// `passes` stochastic forwards with freshly sampled masks, moment-matched
/// per row. The mask stream is `ChaCha8Rng::seed_from_u64(seed)`, drawing
/// `hidden1` then `hidden2` for each pass.
pub fn mc_dropout_predict<T: Real>(
    params: &MlpParams<T>,
    x: &Tensor<T>,
    passes: usize,
    rate: T,
    seed: u64,
) -> Result<Vec<GaussianPrediction<T>>> {
    if passes == 0 {
        return Err(Error::invalid("mc_dropout_predict needs at least one pass"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let runs = (0..passes)
        .map(|_| {
            let masks = DropoutMasks::sample(x.rows(), params.hidden(), rate, &mut rng);
            params.predict(x, Some(&masks))
        })
        .collect::<Result<Vec<_>>>()?;
    (0..x.rows())
        .map(|i| {
            let per_row: Vec<_> = runs.iter().map(|r| r[i]).collect();
            aggregate_mc(&per_row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{standardize, synth_linear};
    use crate::metrics::rmse;

    fn quick_cfg(lambda: f64) -> TrainConfig<f64> {
        TrainConfig {
            lambda,
            epochs: 100,
            hidden: 128,
            batch_size: 128,
            ..TrainConfig::default()
        }
    }

    fn linear_task() -> (Dataset, Dataset, crate::datasets::Standardizer) {
        let raw = synth_linear(2000, 11);
        let train_idx: Vec<usize> = (0..1600).collect();
        let test_idx: Vec<usize> = (1600..2000).collect();
        let (z, st) = standardize(&raw, &train_idx).unwrap();
        (z.subset(&train_idx), raw.subset(&test_idx), st)
    }

    fn test_rmse(p: &MlpParams<f64>, test: &Dataset, st: &crate::datasets::Standardizer) -> f64 {
        let preds: Vec<_> = p
            .predict(&st.transform(test).feature_tensor(), None)
            .unwrap()
            .iter()
            .map(|g| g.destandardize(st.target_mean, st.target_std))
            .collect();
        rmse(&preds, test.targets()).unwrap()
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::<f64>::default();
        assert_eq!((c.learning_rate, c.batch_size, c.epochs, c.dropout_rate, c.tau), (1e-2, 512, 100, 0.25, 0.1));
        assert_eq!((c.lambda, c.hidden), (20.0, 128));
    }

    #[test]
    fn batches_merge_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = epoch_batches(1025, 512, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![512, 513]);
        let b = epoch_batches(1030, 512, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![512, 512, 6]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..1030).collect::<Vec<_>>());
    }

    #[test]
    fn linear_fit_and_regularized_rmse() {
        let (train_z, test, st) = linear_task();
        let (p0, log0) = train_logged(&train_z, &quick_cfg(0.0)).unwrap();
        let (p20, log20) = train_logged(&train_z, &quick_cfg(20.0)).unwrap();
        let r0 = test_rmse(&p0, &test, &st);
        let r20 = test_rmse(&p20, &test, &st);
        assert!(r0 < 0.15, "{r0}");
        assert!(r20 <= 1.1 * r0 || r20 < 0.11, "lambda 0: {r0}, lambda 20: {r20}");
        for log in [&log0, &log20] {
            assert!(log.epoch_loss.last().unwrap() < &log.epoch_loss[0]);
        }
    }

    #[test]
    fn deterministic_replay() {
        let data = synth_linear(300, 2);
        let cfg = TrainConfig::<f64> {
            epochs: 3,
            hidden: 16,
            batch_size: 64,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train(&data, &TrainConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn divergence_is_reported() {
        let data = synth_linear(64, 3);
        let cfg = TrainConfig {
            learning_rate: 1e200,
            lambda: 0.0,
            epochs: 5,
            hidden: 8,
            batch_size: 16,
            ..TrainConfig::default()
        };
        match train(&data, &cfg) {
            Err(Error::Diverged { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config() {
        let data = synth_linear(10, 0);
        for cfg in [
            TrainConfig { lambda: -1.0, ..TrainConfig::default() },
            TrainConfig { dropout_rate: 1.0, ..TrainConfig::default() },
            TrainConfig { tau: 0.0, ..TrainConfig::default() },
        ] {
            assert!(train(&data, &cfg).is_err());
        }
    }

    fn small_params() -> (MlpParams<f64>, Tensor<f64>) {
        let p = MlpParams::init(3, 16, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = Tensor::matrix(5, 3, (0..15).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect()).unwrap();
        (p, x)
    }

    #[test]
    fn mc_single_pass_is_verbatim() {
        let (p, x) = small_params();
        let got = mc_dropout_predict(&p, &x, 1, 0.25, 3).unwrap();
        let masks = DropoutMasks::sample(5, 16, 0.25, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(got, p.predict(&x, Some(&masks)).unwrap());
    }

    #[test]
    fn mc_without_dropout_is_deterministic() {
        let (p, x) = small_params();
        let got = mc_dropout_predict(&p, &x, 10, 0.0, 3).unwrap();
        for (g, e) in got.iter().zip(p.predict(&x, None).unwrap()) {
            assert!((g.mu - e.mu).abs() < 1e-15);
            assert!((g.sigma * g.sigma - e.sigma * e.sigma).abs() < 1e-14);
        }
    }

    #[test]
    fn mc_matches_hand_rolled_loop() {
        let (p, x) = small_params();
        let got = mc_dropout_predict(&p, &x, 10, 0.25, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut mus = vec![vec![]; 5];
        let mut vars = vec![vec![]; 5];
        for _ in 0..10 {
            let m = DropoutMasks::sample(5, 16, 0.25, &mut rng);
            for (i, g) in p.predict(&x, Some(&m)).unwrap().iter().enumerate() {
                mus[i].push(g.mu);
                vars[i].push(g.sigma * g.sigma);
            }
        }
        for i in 0..5 {
            let mbar = mus[i].iter().sum::<f64>() / 10.0;
            let v = vars[i].iter().sum::<f64>() / 10.0 + mus[i].iter().map(|m| (m - mbar).powi(2)).sum::<f64>() / 10.0;
            assert!((got[i].mu - mbar).abs() < 1e-12);
            assert!((got[i].sigma - v.sqrt()).abs() < 1e-12);
        }
        assert!(mc_dropout_predict(&p, &x, 0, 0.25, 8).is_err());
    }

    #[test]
    fn fgsm_cases() {
        let (p, x) = small_params();
        let y = [0.3, -0.2, 1.0, 0.0, 2.0];
        assert_eq!(fgsm_perturb(&p, &x, &y, &[0.0; 3]).unwrap(), x);

        let eps = [0.05, 0.1, 0.2];
        let xa = fgsm_perturb(&p, &x, &y, &eps).unwrap();
        // sign oracle: recompute dNLL/dx on a separate tape
        let tape = Tape::new();
        let vars = p.on_tape(&tape, false);
        let xv = tape.param(x.clone());
        let (mu, sigma) = mlp_forward(&vars, xv, None).unwrap();
        let nll = gaussian_nll_var(&Tensor::vector(y.to_vec()), mu, sigma).unwrap();
        let g = tape.gradients(nll, &[xv]).unwrap().pop().unwrap();
        for k in 0..15 {
            let delta = xa.data()[k] - x.data()[k];
            assert!((delta.abs() - eps[k % 3]).abs() < 1e-15);
            assert_eq!(delta.signum(), g.data()[k].signum());
        }
    }

    #[test]
    fn fgsm_scalar_sign() {
        // one feature, zero hidden weights except a path making mu increase with x
        let mut p = MlpParams::<f64>::init(1, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        p.blocks[0] = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        p.blocks[1] = Tensor::vector(vec![0.0]);
        p.blocks[2] = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        p.blocks[3] = Tensor::vector(vec![0.0]);
        p.blocks[4] = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        p.blocks[5] = Tensor::vector(vec![0.0, 0.0]);
        // mu = x for x > 0; y below mu makes dNLL/dx positive
        let x = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let xa = fgsm_perturb(&p, &x, &[0.0], &[0.1]).unwrap();
        assert!((xa.item() - 1.1).abs() < 1e-15);
    }
}
