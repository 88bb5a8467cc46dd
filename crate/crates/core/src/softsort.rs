//! Differentiable relaxation of sorting (NeuralSort-style soft permutation).
//!
//! Row `i` of the descending relaxation is
//! `softmax(((n + 1 - 2i) s - A 1) / tau)` with `A[j, k] = |s_j - s_k|`;
//! ascending order reverses the row index. Rows sum to one, columns need
//! not, so the relaxed sort does not preserve the sum of its input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{Tape, Tensor, Var};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Ascending,
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftSortConfig<T> {
    pub tau: T,
    pub order: SortOrder,
}

pub const DEFAULT_TAU: f64 = 0.1;

impl<T: Real> SoftSortConfig<T> {
    pub fn new(tau: T, order: SortOrder) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::invalid(format!("soft sort temperature must be positive, got {tau}")));
        }
        Ok(SoftSortConfig { tau, order })
    }

    pub fn ascending(tau: T) -> Result<Self> {
        Self::new(tau, SortOrder::Ascending)
    }
}

impl<T: Real> Default for SoftSortConfig<T> {
    fn default() -> Self {
        SoftSortConfig {
            tau: T::lit(DEFAULT_TAU),
            order: SortOrder::Ascending,
        }
    }
}

fn row_coefficients<T: Real>(n: usize, order: SortOrder) -> Tensor<T> {
    let coeff = (1..=n).map(|i| {
        let row = match order {
            SortOrder::Descending => i,
            SortOrder::Ascending => n + 1 - i,
        };
        T::lit((n + 1) as f64 - 2.0 * row as f64)
    });
    Tensor::matrix(n, 1, coeff.collect()).expect("n×1")
}

/// Row-stochastic `n×n` soft permutation of the vector `s`.
pub fn soft_permutation_var<'t, T: Real>(s: Var<'t, T>, cfg: &SoftSortConfig<T>) -> Result<Var<'t, T>> {
    let shape = s.shape();
    if shape.len() != 1 || shape[0] == 0 {
        return Err(Error::invalid(format!("soft sort expects a nonempty vector, got shape {shape:?}")));
    }
    if !(cfg.tau > T::zero()) {
        return Err(Error::invalid("soft sort temperature must be positive"));
    }
    let n = shape[0];
    let tape = s.tape();
    let ones = tape.constant(Tensor::ones(&[n, 1]));
    let coeff = tape.constant(row_coefficients(n, cfg.order));

    let spread = s.pairwise_abs_diff()?.matmul(ones)?.reshape(&[n])?;
    let scores = coeff
        .matmul(s.reshape(&[1, n])?)?
        .add_row(spread.neg()?)?
        .scale(T::one() / cfg.tau)?;
    Ok(scores.softmax_rows()?)
}

/// `P̂ · s`: the relaxed sorted vector, differentiable in `s`.
pub fn soft_sorted_var<'t, T: Real>(s: Var<'t, T>, cfg: &SoftSortConfig<T>) -> Result<Var<'t, T>> {
    let n = s.shape().iter().product::<usize>();
    let p = soft_permutation_var(s, cfg)?;
    Ok(p.matmul(s.reshape(&[n, 1])?)?.reshape(&[n])?)
}

pub fn soft_permutation<T: Real>(s: &[T], cfg: &SoftSortConfig<T>) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let v = tape.constant(Tensor::vector(s.to_vec()));
    Ok(soft_permutation_var(v, cfg)?.value())
}

pub fn soft_sorted<T: Real>(s: &[T], cfg: &SoftSortConfig<T>) -> Result<Vec<T>> {
    let tape = Tape::new();
    let v = tape.constant(Tensor::vector(s.to_vec()));
    Ok(soft_sorted_var(v, cfg)?.value().into_data())
}
