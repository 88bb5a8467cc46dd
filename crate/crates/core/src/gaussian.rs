//! Gaussian predictive distributions, PIT values and moment aggregation.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{Tensor, Var};
use crate::scalar::{self, Real};

/// Smallest predictive standard deviation, in standardized target units.
pub const SIGMA_FLOOR: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

static SIGMA_FLOOR_HITS: AtomicUsize = AtomicUsize::new(0);

/// Number of times an NLL evaluation had to lift a sigma up to [`SIGMA_FLOOR`].
pub fn sigma_floor_hits() -> usize {
    SIGMA_FLOOR_HITS.load(Ordering::Relaxed)
}

/// Predictive `Normal(mu, sigma^2)` for one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Real> GaussianPrediction<T> {
    pub fn new(mu: T, sigma: T) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= T::zero() {
            return Err(Error::invalid(format!("invalid gaussian (mu={mu}, sigma={sigma})")));
        }
        Ok(GaussianPrediction { mu, sigma })
    }

    pub fn cdf(&self, y: T) -> T {
        scalar::std_normal_cdf((y - self.mu) / self.sigma)
    }

    pub fn nll(&self, y: T) -> T {
        let sigma = self.sigma.max(T::lit(SIGMA_FLOOR));
        let z = (y - self.mu) / sigma;
        T::lit(HALF_LN_2PI) + sigma.ln() + T::lit(0.5) * z * z
    }

    /// Maps a prediction made in standardized units back to original units.
    pub fn destandardize(&self, mean: T, std: T) -> Self {
        GaussianPrediction {
            mu: self.mu * std + mean,
            sigma: self.sigma * std,
        }
    }

    pub fn variance(&self) -> T {
        self.sigma * self.sigma
    }
}

/// Probability integral transform value `[F(x)](y)`, always inside `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PitSample<T>(T);

impl<T: Real> PitSample<T> {
    pub fn new(c: T) -> Self {
        PitSample(c.max(T::zero()).min(T::one()))
    }

    pub fn value(self) -> T {
        self.0
    }

    /// Value pushed into `[eps, 1 - eps]`.
    pub fn clamped(self, eps: T) -> T {
        self.0.max(eps).min(T::one() - eps)
    }
}

pub fn pit<T: Real>(pred: &GaussianPrediction<T>, y: T) -> Result<PitSample<T>> {
    if !y.is_finite() {
        return Err(Error::invalid(format!("pit: non-finite target {y}")));
    }
    Ok(PitSample::new(pred.cdf(y)))
}

pub fn pits<T: Real>(preds: &[GaussianPrediction<T>], ys: &[T]) -> Result<Vec<PitSample<T>>> {
    check_aligned("pit", preds.len(), ys.len())?;
    preds.iter().zip(ys).map(|(p, &y)| pit(p, y)).collect()
}

pub(crate) fn check_aligned(what: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::Length { what, left, right });
    }
    if left == 0 {
        return Err(Error::Empty(what));
    }
    Ok(())
}

/// Mean Gaussian negative log-likelihood. Sigmas below the floor are
/// lifted to it and counted (see [`sigma_floor_hits`]).
pub fn gaussian_nll<T: Real>(preds: &[GaussianPrediction<T>], ys: &[T]) -> Result<T> {
    check_aligned("gaussian_nll", preds.len(), ys.len())?;
    let floor = T::lit(SIGMA_FLOOR);
    let lifted = preds.iter().filter(|p| p.sigma < floor).count();
    if lifted > 0 {
        SIGMA_FLOOR_HITS.fetch_add(lifted, Ordering::Relaxed);
    }
    let total: T = preds.iter().zip(ys).map(|(p, &y)| p.nll(y)).sum();
    Ok(total / T::lit(preds.len() as f64))
}

/// Standardized residuals `(y - mu) / sigma` on the tape.
pub fn z_scores<'t, T: Real>(y: &Tensor<T>, mu: Var<'t, T>, sigma: Var<'t, T>) -> Result<Var<'t, T>> {
    let yv = mu.tape().constant(y.clone());
    Ok(yv.sub(mu)?.div(sigma)?)
}

/// Differentiable mean NLL over a batch of vectors `y`, `mu`, `sigma`.
pub fn gaussian_nll_var<'t, T: Real>(y: &Tensor<T>, mu: Var<'t, T>, sigma: Var<'t, T>) -> Result<Var<'t, T>> {
    if y.shape() != mu.shape().as_slice() || mu.shape() != sigma.shape() {
        return Err(Error::Length {
            what: "gaussian_nll",
            left: y.len(),
            right: sigma.shape().iter().product(),
        });
    }
    let floor = T::lit(SIGMA_FLOOR);
    let lifted = sigma.value().data().iter().filter(|&&s| s < floor).count();
    if lifted > 0 {
        SIGMA_FLOOR_HITS.fetch_add(lifted, Ordering::Relaxed);
    }
    let sigma = sigma.clamp(floor, T::max_value())?;
    let z = z_scores(y, mu, sigma)?;
    let quad = z.mul(z)?.scale(T::lit(0.5))?;
    let per = sigma.ln()?.add(quad)?;
    Ok(per.mean()?.add_scalar(T::lit(HALF_LN_2PI))?)
}

/// Moments of `T` stochastic forward passes: mean of the means, and
/// average variance plus the spread of the means around their average.
pub fn aggregate_mc<T: Real>(preds: &[GaussianPrediction<T>]) -> Result<GaussianPrediction<T>> {
    if preds.is_empty() {
        return Err(Error::Empty("aggregate_mc"));
    }
    let t = T::lit(preds.len() as f64);
    let mean = preds.iter().map(|p| p.mu).sum::<T>() / t;
    let avg_var = preds.iter().map(|p| p.variance()).sum::<T>() / t;
    let spread = preds.iter().map(|p| (p.mu - mean) * (p.mu - mean)).sum::<T>() / t;
    GaussianPrediction::new(mean, (avg_var + spread).sqrt())
}

/// Moment-matched Gaussian of a uniform mixture of ensemble members.
pub fn aggregate_ensemble<T: Real>(preds: &[GaussianPrediction<T>]) -> Result<GaussianPrediction<T>> {
    if preds.is_empty() {
        return Err(Error::Empty("aggregate_ensemble"));
    }
    let m = T::lit(preds.len() as f64);
    let mean = preds.iter().map(|p| p.mu).sum::<T>() / m;
    let second = preds.iter().map(|p| p.variance() + p.mu * p.mu).sum::<T>() / m;
    // second - mean^2 may lose a few ulps below the average member variance
    let floor = preds.iter().map(|p| p.variance()).fold(T::infinity(), T::min) / m;
    let var = (second - mean * mean).max(floor);
    GaussianPrediction::new(mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndgrad::{finite_diff_check, Tape};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn g(mu: f64, sigma: f64) -> GaussianPrediction<f64> {
        GaussianPrediction::new(mu, sigma).unwrap()
    }

    /// 0.5 + Simpson integral of the standard normal density from 0 to z.
    fn quadrature_cdf(z: f64) -> f64 {
        let n = 20_000;
        let h = z / n as f64;
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = f(0.0) + f(z);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn pit_examples() {
        assert_eq!(pit(&g(2.0, 1.0), 2.0).unwrap().value(), 0.5);
        let oracle = quadrature_cdf(1.96);
        assert!((oracle - 0.975).abs() < 1e-5);
        assert!((pit(&g(0.0, 1.0), 1.96).unwrap().value() - oracle).abs() < 1e-10);
        let oracle = quadrature_cdf(-1.96);
        assert!((pit(&g(0.0, 2.0), -3.92).unwrap().value() - oracle).abs() < 1e-10);
        assert!((oracle - 0.025).abs() < 1e-5);
        assert!(pit(&g(0.0, 1.0), f64::NAN).is_err());
    }

    #[test]
    fn nll_examples() {
        let n0 = gaussian_nll(&[g(1.0, 1.0)], &[1.0]).unwrap();
        assert!((n0 - 0.918_939).abs() < 1e-6);
        let n1 = gaussian_nll(&[g(2.0, 1.0)], &[1.0]).unwrap();
        assert!((n1 - 1.418_939).abs() < 1e-6);
        assert!(gaussian_nll(&[g(2.0, 1.0)], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nll_matches_density_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let preds: Vec<_> = (0..50).map(|_| g(rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0))).collect();
        let ys: Vec<f64> = (0..50).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let direct: f64 = preds
            .iter()
            .zip(&ys)
            .map(|(p, &y)| {
                let dens = (-(y - p.mu).powi(2) / (2.0 * p.sigma * p.sigma)).exp()
                    / (2.0 * std::f64::consts::PI * p.sigma * p.sigma).sqrt();
                -dens.ln()
            })
            .sum::<f64>()
            / 50.0;
        assert!((gaussian_nll(&preds, &ys).unwrap() - direct).abs() < 1e-12);

        let tape = Tape::new();
        let mu = tape.param(Tensor::vector(preds.iter().map(|p| p.mu).collect()));
        let sigma = tape.param(Tensor::vector(preds.iter().map(|p| p.sigma).collect()));
        let v = gaussian_nll_var(&Tensor::vector(ys.clone()), mu, sigma).unwrap();
        assert!((v.item() - direct).abs() < 1e-12);
    }

    #[test]
    fn nll_floor_counts() {
        let before = sigma_floor_hits();
        let p = GaussianPrediction { mu: 0.0, sigma: 1e-9 };
        let v: f64 = gaussian_nll(&[p], &[0.0]).unwrap();
        assert!(v.is_finite());
        assert!(sigma_floor_hits() > before);
    }

    #[test]
    fn nll_var_gradient() {
        let y = Tensor::vector(vec![0.3, -1.0, 2.0]);
        let x = Tensor::vector(vec![0.1, -0.4, 1.1, 0.7, 1.3, 0.5]);
        let err: f64 = finite_diff_check(
            |v| -> Result<_> {
                let mu = v.slice(0, 3)?;
                let s = v.slice(3, 3)?;
                gaussian_nll_var(&y, mu, s)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn mc_aggregation() {
        let one = aggregate_mc(&[g(3.0, 2.0)]).unwrap();
        assert_eq!((one.mu, one.sigma), (3.0, 2.0));
        let two = aggregate_mc(&[g(0.0, 1.0), g(2.0, 1.0)]).unwrap();
        assert_eq!(two.mu, 1.0);
        assert!((two.variance() - 2.0).abs() < 1e-12);
        assert!(aggregate_mc::<f64>(&[]).is_err());
    }

    #[test]
    fn mc_aggregation_matches_mixture_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let preds: Vec<_> = (0..10).map(|_| g(rng.gen_range(-2.0..2.0), rng.gen_range(0.2..2.0))).collect();
        // brute force: E[Y] and E[Y^2] of the equal-weight mixture
        let ey: f64 = preds.iter().map(|p| p.mu).sum::<f64>() / 10.0;
        let ey2: f64 = preds.iter().map(|p| p.sigma * p.sigma + p.mu * p.mu).sum::<f64>() / 10.0;
        let agg = aggregate_mc(&preds).unwrap();
        assert!((agg.mu - ey).abs() < 1e-12);
        assert!((agg.variance() - (ey2 - ey * ey)).abs() < 1e-12);
    }

    #[test]
    fn ensemble_aggregation() {
        let one = aggregate_ensemble(&[g(1.5, 0.7)]).unwrap();
        assert!((one.mu - 1.5).abs() < 1e-15 && (one.sigma - 0.7).abs() < 1e-12);
        let two = aggregate_ensemble(&[g(0.0, 1.0), g(0.0, 3.0)]).unwrap();
        assert_eq!(two.mu, 0.0);
        assert!((two.variance() - 5.0).abs() < 1e-12);
        assert!(aggregate_ensemble::<f64>(&[]).is_err());
    }

    #[test]
    fn ensemble_aggregation_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let preds: Vec<_> = (0..5).map(|_| g(rng.gen_range(-2.0..2.0), rng.gen_range(0.3..1.5))).collect();
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let p = &preds[rng.gen_range(0..5)];
            let z: f64 = StandardNormal.sample(&mut rng);
            let y = p.mu + p.sigma * z;
            s1 += y;
            s2 += y * y;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let agg = aggregate_ensemble(&preds).unwrap();
        let se_mean = (agg.variance() / n as f64).sqrt();
        assert!((agg.mu - mean).abs() < 3.0 * se_mean);
        // var of the sample variance ~ (m4 - var^2)/n; bound m4 by 9 var^2 for this mixture
        let se_var = (8.0 * agg.variance().powi(2) / n as f64).sqrt();
        assert!((agg.variance() - var).abs() < 3.0 * se_var);
    }

    proptest! {
        #[test]
        fn pit_monotone_in_y(mu in -5.0..5.0f64, sigma in 0.01..5.0f64, a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let p = g(mu, sigma);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(pit(&p, lo).unwrap().value() <= pit(&p, hi).unwrap().value());
            prop_assert_eq!(pit(&p, mu).unwrap().value(), 0.5);
        }

        #[test]
        fn pit_affine_equivariance(mu in -5.0..5.0f64, sigma in 0.1..5.0f64, y in -10.0..10.0f64,
                                   a in 0.1..10.0f64, b in -10.0..10.0f64) {
            let base = pit(&g(mu, sigma), y).unwrap().value();
            let moved = pit(&g(a * mu + b, a * sigma), a * y + b).unwrap().value();
            prop_assert!((base - moved).abs() < 1e-12);
        }

        #[test]
        fn aggregates_dominate_spread(mus in proptest::collection::vec(-3.0..3.0f64, 1..12),
                                      sig in proptest::collection::vec(0.05..2.0f64, 12)) {
            let preds: Vec<_> = mus.iter().zip(&sig).map(|(&m, &s)| g(m, s)).collect();
            let k = preds.len() as f64;
            let mean = mus.iter().sum::<f64>() / k;
            let spread = mus.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / k;
            let min_var = preds.iter().map(|p| p.variance()).fold(f64::INFINITY, f64::min);
            for agg in [aggregate_mc(&preds).unwrap(), aggregate_ensemble(&preds).unwrap()] {
                prop_assert!(agg.variance() >= min_var / k * (1.0 - 1e-12));
                prop_assert!(agg.variance() >= spread * (1.0 - 1e-12));
            }
        }
    }
}
