use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::scalar::Real;

/// First/second moment estimates for a list of parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    /// Zero moments shaped like `blocks`, `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(blocks: &[Tensor<T>]) -> Self {
        let zeros: Vec<Tensor<T>> = blocks.iter().map(|b| Tensor::zeros(b.shape())).collect();
        AdamState {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place. Nothing is modified
/// when any gradient is non-finite.
pub fn adam_step<T: Real>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    names: &[&str],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Length {
            what: "adam_step blocks",
            left: params.len(),
            right: grads.len(),
        });
    }
    let name = |i: usize| names.get(i).map_or_else(|| format!("#{i}"), |s| s.to_string());
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::invalid(format!("adam_step: gradient shape {:?} for block {} of shape {:?}", g.shape(), name(i), p.shape())));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite {
                what: "gradient",
                block: name(i),
            });
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = T::one() - b1.powi(state.step);
    let c2 = T::one() - b2.powi(state.step);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let (pd, gd, md, vd) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for k in 0..gd.len() {
            md[k] = b1 * md[k] + (T::one() - b1) * gd[k];
            vd[k] = b2 * vd[k] + (T::one() - b2) * gd[k] * gd[k];
            let mhat = md[k] / c1;
            let vhat = vd[k] / c2;
            pd[k] = pd[k] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
