use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianPrediction, SIGMA_FLOOR};
use crate::ndgrad::{Tape, Tensor, Var};
use crate::scalar::Real;

pub const DEFAULT_HIDDEN: usize = 128;

const BLOCK_NAMES: [&str; 6] = ["hidden1.weight", "hidden1.bias", "hidden2.weight", "hidden2.bias", "head.weight", "head.bias"];

/// Weights of an `input -> hidden -> hidden -> (mu, sigma_raw)` ReLU network.
///
/// Blocks are stored in layer order: `W1 (D×H), b1 (H), W2 (H×H), b2 (H),
/// W3 (H×2), b3 (2)`; weights act on row vectors (`x W + b`).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    pub(crate) blocks: Vec<Tensor<T>>,
}

impl<T: Real> MlpParams<T> {
    /// Seeded uniform fan-in initialisation, weights in `±1 / sqrt(fan_in)`
    /// and zero biases. Wider ranges make the heteroscedastic NLL blow up
    /// early at `lr = 1e-2`.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::invalid(format!("mlp dims must be positive (input {input_dim}, hidden {hidden})")));
        }
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
            Tensor::matrix(rows, cols, data).expect("sized")
        };
        let w1 = uniform(input_dim, hidden);
        let w2 = uniform(hidden, hidden);
        let w3 = uniform(hidden, 2);
        Ok(MlpParams {
            blocks: vec![w1, Tensor::zeros(&[hidden]), w2, Tensor::zeros(&[hidden]), w3, Tensor::zeros(&[2])],
        })
    }

    /// Builds from explicit blocks, checking that the shapes chain.
    pub fn from_blocks(blocks: Vec<Tensor<T>>) -> Result<Self> {
        let bad = |msg: String| Err(Error::invalid(format!("mlp blocks: {msg}")));
        if blocks.len() != 6 {
            return bad(format!("expected 6 blocks, got {}", blocks.len()));
        }
        let dims2 = |t: &Tensor<T>| (t.shape().len() == 2).then(|| (t.shape()[0], t.shape()[1]));
        let (Some((d, h)), Some((h2a, h2b)), Some((h3, out))) = (dims2(&blocks[0]), dims2(&blocks[2]), dims2(&blocks[4])) else {
            return bad("weights must be matrices".into());
        };
        if h2a != h || h2b != h || h3 != h || out != 2 || d == 0 || h == 0 {
            return bad(format!("inconsistent shapes {d}x{h}, {h2a}x{h2b}, {h3}x{out}"));
        }
        for (i, len) in [(1, h), (3, h), (5, 2)] {
            if blocks[i].shape() != [len] {
                return bad(format!("{} has shape {:?}, expected [{len}]", BLOCK_NAMES[i], blocks[i].shape()));
            }
        }
        if let Some(i) = blocks.iter().position(|b| !b.all_finite()) {
            return Err(Error::NonFinite {
                what: "parameter",
                block: BLOCK_NAMES[i].into(),
            });
        }
        Ok(MlpParams { blocks })
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.blocks[0].shape()[1]
    }

    pub fn blocks(&self) -> &[Tensor<T>] {
        &self.blocks
    }

    pub fn block_names() -> &'static [&'static str] {
        &BLOCK_NAMES
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(Tensor::len).sum()
    }

    /// Leaves on `tape`; trainable ones receive gradients.
    pub fn on_tape<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Vec<Var<'t, T>> {
        self.blocks
            .iter()
            .map(|b| if trainable { tape.param(b.clone()) } else { tape.constant(b.clone()) })
            .collect()
    }

    /// Plain forward pass returning one prediction per row.
    pub fn predict(&self, x: &Tensor<T>, masks: Option<&DropoutMasks<T>>) -> Result<Vec<GaussianPrediction<T>>> {
        let tape = Tape::new();
        let vars = self.on_tape(&tape, false);
        let (mu, sigma) = mlp_forward(&vars, tape.constant(x.clone()), masks)?;
        let (mu, sigma) = (mu.value(), sigma.value());
        Ok(mu
            .data()
            .iter()
            .zip(sigma.data())
            .map(|(&mu, &sigma)| GaussianPrediction { mu, sigma })
            .collect())
    }
}

/// Keep masks (entries 0 or 1) for both hidden layers plus the drop rate
/// used for inverted scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks<T> {
    pub rate: T,
    pub hidden1: Tensor<T>,
    pub hidden2: Tensor<T>,
}

impl<T: Real> DropoutMasks<T> {
    /// Each unit kept independently with probability `1 - rate`.
    pub fn sample<R: Rng>(rows: usize, hidden: usize, rate: T, rng: &mut R) -> Self {
        let r = rate.as_f64();
        let mut draw = || {
            let data = (0..rows * hidden)
                .map(|_| if rng.gen::<f64>() >= r { T::one() } else { T::zero() })
                .collect();
            Tensor::matrix(rows, hidden, data).expect("sized")
        };
        let hidden1 = draw();
        let hidden2 = draw();
        DropoutMasks { rate, hidden1, hidden2 }
    }

    pub fn ones(rows: usize, hidden: usize, rate: T) -> Self {
        DropoutMasks {
            rate,
            hidden1: Tensor::ones(&[rows, hidden]),
            hidden2: Tensor::ones(&[rows, hidden]),
        }
    }
}

/// `(mu, sigma)` column vectors for the rows of `x`; `sigma` is
/// `softplus(raw) + 1e-6`. With masks, both hidden activations are dropped
/// and rescaled by `1 / (1 - rate)`.
pub fn mlp_forward<'t, T: Real>(
    params: &[Var<'t, T>],
    x: Var<'t, T>,
    masks: Option<&DropoutMasks<T>>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    if params.len() != 6 {
        return Err(Error::invalid(format!("mlp_forward: expected 6 parameter blocks, got {}", params.len())));
    }
    let xs = x.shape();
    let ws = params[0].shape();
    if xs.len() != 2 || xs[1] != ws[0] {
        return Err(Error::Length {
            what: "mlp_forward feature width",
            left: xs.last().copied().unwrap_or(0),
            right: ws[0],
        });
    }
    let rows = xs[0];
    if let Some(m) = masks {
        let want = [rows, ws[1]];
        if m.hidden1.shape() != want || m.hidden2.shape() != want {
            return Err(Error::invalid(format!(
                "dropout masks {:?}/{:?} do not match hidden activations {want:?}",
                m.hidden1.shape(),
                m.hidden2.shape()
            )));
        }
    }
    let mut h = x.matmul(params[0])?.add_row(params[1])?.relu()?;
    if let Some(m) = masks {
        h = h.dropout(&m.hidden1, m.rate)?;
    }
    h = h.matmul(params[2])?.add_row(params[3])?.relu()?;
    if let Some(m) = masks {
        h = h.dropout(&m.hidden2, m.rate)?;
    }
    let out = h.matmul(params[4])?.add_row(params[5])?;
    let mu = out.column(0)?;
    let sigma = out.column(1)?.softplus()?.add_scalar(T::lit(SIGMA_FLOOR))?;
    Ok((mu, sigma))
}
