//! Cumulative residual entropy and cumulative KL divergence to
//! `Uniform[0, 1]`, both as a plug-in estimate over samples and as a
//! differentiable training loss (the quantile regularizer).
//!
//! For a sample with order statistics `s_(1) <= ... <= s_(n)` the estimate is
//!
//! ```text
//! sum_{i=1}^{n-1} ((n-i)/n) ln((n-i)/n) (s_(i+1) - s_(i))
//!     + (1/n) sum_i (1 - s_i) ln(1 - s_i) + 1/2
//! ```
//!
//! The first sum is minus the cumulative residual entropy of the empirical
//! survival function. The whole expression equals the exact cumulative KL
//! divergence between the empirical distribution and the uniform one.

use crate::error::{Error, Result};
use crate::gaussian::{gaussian_nll_var, z_scores};
use crate::ndgrad::{Tensor, Var};
use crate::scalar::Real;
use crate::softsort::{soft_sorted_var, SoftSortConfig, SortOrder};

/// PIT values inside the loss are kept within `[PIT_EPS, 1 - PIT_EPS]`.
pub const PIT_EPS: f64 = 1e-6;

/// Regularization weight used for every reported experiment.
pub const DEFAULT_LAMBDA: f64 = 20.0;

const RANGE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CklEstimate<T> {
    /// Estimated divergence in nats.
    pub value: T,
    /// Gap-weighted first sum; equals minus the empirical residual entropy.
    pub cre_term: T,
    /// Sample mean of `(1 - s) ln(1 - s)`.
    pub expectation_term: T,
}

/// `((n-i)/n) ln((n-i)/n)` for `i = 1..n-1`.
pub fn gap_weights<T: Real>(n: usize) -> Vec<T> {
    let nf = n as f64;
    (1..n)
        .map(|i| {
            let q = (n - i) as f64 / nf;
            T::lit(q * q.ln())
        })
        .collect()
}

fn one_minus_log<T: Real>(s: T) -> T {
    let r = T::one() - s;
    if r <= T::zero() {
        T::zero()
    } else {
        r * r.ln()
    }
}

/// Cumulative residual entropy of the empirical distribution of an
/// ascending sample.
pub fn cre_empirical<T: Real>(sorted: &[T]) -> Result<T> {
    if sorted.is_empty() {
        return Err(Error::Empty("cre_empirical"));
    }
    let w = gap_weights::<T>(sorted.len());
    let sum: T = sorted.windows(2).zip(&w).map(|(pair, &wi)| wi * (pair[1] - pair[0])).sum();
    Ok(-sum)
}

/// Plug-in cumulative KL divergence between the sample and `Uniform[0, 1]`.
pub fn ckl_uniform<T: Real>(samples: &[T]) -> Result<CklEstimate<T>> {
    if samples.is_empty() {
        return Err(Error::Empty("ckl_uniform"));
    }
    let slack = T::lit(RANGE_SLACK);
    let mut sorted = Vec::with_capacity(samples.len());
    for &s in samples {
        if !(s >= -slack && s <= T::one() + slack) {
            return Err(Error::invalid(format!("ckl_uniform: sample {s} outside [0, 1]")));
        }
        sorted.push(s.max(T::zero()).min(T::one()));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let cre_term = -cre_empirical(&sorted)?;
    let n = T::lit(sorted.len() as f64);
    let expectation_term = sorted.iter().map(|&s| one_minus_log(s)).sum::<T>() / n;
    Ok(CklEstimate {
        value: cre_term + expectation_term + T::lit(0.5),
        cre_term,
        expectation_term,
    })
}

/// Differentiable quantile regularizer on a batch.
///
/// PIT values are clamped to `[PIT_EPS, 1 - PIT_EPS]` and soft-sorted
/// ascending with `cfg.tau`; the gap sum reads the soft-sorted vector while
/// the permutation-invariant `(1 - c) ln(1 - c)` mean reads the clamped PIT
/// values directly. `cfg.order` is ignored.
pub fn quantile_reg_loss<'t, T: Real>(
    y: &Tensor<T>,
    mu: Var<'t, T>,
    sigma: Var<'t, T>,
    cfg: &SoftSortConfig<T>,
) -> Result<Var<'t, T>> {
    let n = y.len();
    if n < 2 {
        return Err(Error::invalid(format!("quantile regularizer needs a batch of at least 2, got {n}")));
    }
    let eps = T::lit(PIT_EPS);
    let pit = z_scores(y, mu, sigma)?.std_normal_cdf()?.clamp(eps, T::one() - eps)?;
    quantile_reg_from_pit(pit, cfg)
}

/// Regularizer on already-computed (clamped) PIT values.
pub fn quantile_reg_from_pit<'t, T: Real>(pit: Var<'t, T>, cfg: &SoftSortConfig<T>) -> Result<Var<'t, T>> {
    let n = pit.shape().iter().product::<usize>();
    if n < 2 {
        return Err(Error::invalid(format!("quantile regularizer needs a batch of at least 2, got {n}")));
    }
    let asc = SoftSortConfig {
        tau: cfg.tau,
        order: SortOrder::Ascending,
    };
    let sorted = soft_sorted_var(pit, &asc)?;
    let gaps = sorted.slice(1, n - 1)?.sub(sorted.slice(0, n - 1)?)?;
    let cre_term = gaps.mul_const(&Tensor::vector(gap_weights(n)))?.sum()?;

    let rest = pit.neg()?.add_scalar(T::one())?;
    let expectation = rest.mul(rest.ln()?)?.mean()?;
    Ok(cre_term.add(expectation)?.add_scalar(T::lit(0.5))?)
}

/// `NLL + lambda * quantile regularizer`; `lambda == 0` returns the NLL node itself.
pub fn total_loss<'t, T: Real>(
    y: &Tensor<T>,
    mu: Var<'t, T>,
    sigma: Var<'t, T>,
    lambda: T,
    cfg: &SoftSortConfig<T>,
) -> Result<Var<'t, T>> {
    if !(lambda >= T::zero()) {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    let nll = gaussian_nll_var(y, mu, sigma)?;
    if lambda == T::zero() {
        return Ok(nll);
    }
    let reg = quantile_reg_loss(y, mu, sigma, cfg)?;
    Ok(nll.add(reg.scale(lambda)?)?)
}
