//! Quantile calibration error, RMSE, predictive NLL and reliability curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{check_aligned, GaussianPrediction};
use crate::scalar::Real;

pub const DEFAULT_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Number of equidistant levels `p_i = i / M`, `i = 1..=M`.
    pub bins: usize,
    /// Report the calibration error multiplied by 100.
    pub percent: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            bins: DEFAULT_BINS,
            percent: true,
        }
    }
}

impl MetricConfig {
    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.bins as f64;
        (1..=self.bins).map(move |i| i as f64 / m)
    }

    fn check(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::invalid("metric bins must be at least 1"));
        }
        Ok(())
    }
}

fn sorted_f64<T: Real>(pits: &[T]) -> Vec<f64> {
    let mut v: Vec<f64> = pits.iter().map(|p| p.as_f64()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical coverage `P̂(p_i)` at each level.
pub fn reliability_curve<T: Real>(pits: &[T], cfg: &MetricConfig) -> Result<Vec<(f64, f64)>> {
    cfg.check()?;
    if pits.is_empty() {
        return Err(Error::Empty("reliability_curve"));
    }
    let sorted = sorted_f64(pits);
    let n = sorted.len() as f64;
    Ok(cfg
        .levels()
        .map(|p| (p, sorted.partition_point(|&c| c <= p) as f64 / n))
        .collect())
}

/// Mean over levels of the squared gap between empirical and nominal coverage.
pub fn calibration_error<T: Real>(pits: &[T], cfg: &MetricConfig) -> Result<f64> {
    if pits.is_empty() {
        return Err(Error::Empty("calibration_error"));
    }
    let curve = reliability_curve(pits, cfg)?;
    let ce = curve.iter().map(|(p, q)| (q - p) * (q - p)).sum::<f64>() / cfg.bins as f64;
    Ok(if cfg.percent { ce * 100.0 } else { ce })
}

pub fn rmse<T: Real>(preds: &[GaussianPrediction<T>], ys: &[T]) -> Result<f64> {
    check_aligned("rmse", preds.len(), ys.len())?;
    let sse: f64 = preds
        .iter()
        .zip(ys)
        .map(|(p, &y)| {
            let r = (y - p.mu).as_f64();
            r * r
        })
        .sum();
    Ok((sse / preds.len() as f64).sqrt())
}

/// Mean Gaussian NLL of predictions expressed in the units of `ys`.
pub fn predictive_nll<T: Real>(preds: &[GaussianPrediction<T>], ys: &[T]) -> Result<f64> {
    Ok(crate::gaussian::gaussian_nll(preds, ys)?.as_f64())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub calib_error: f64,
    pub rmse: f64,
    pub nll: f64,
    pub n: usize,
    pub reliability: Vec<(f64, f64)>,
}

impl MetricsReport {
    /// Evaluates predictions against targets; both in original units.
    pub fn evaluate<T: Real>(preds: &[GaussianPrediction<T>], ys: &[T], cfg: &MetricConfig) -> Result<Self> {
        let pits: Vec<T> = crate::gaussian::pits(preds, ys)?.into_iter().map(|p| p.value()).collect();
        Self::from_pits(&pits, preds, ys, cfg)
    }

    /// Uses externally supplied PIT values (e.g. after recalibration) for
    /// the calibration columns.
    pub fn from_pits<T: Real>(pits: &[T], preds: &[GaussianPrediction<T>], ys: &[T], cfg: &MetricConfig) -> Result<Self> {
        Ok(MetricsReport {
            calib_error: calibration_error(pits, cfg)?,
            rmse: rmse(preds, ys)?,
            nll: predictive_nll(preds, ys)?,
            n: ys.len(),
            reliability: reliability_curve(pits, cfg)?,
        })
    }

    /// `key = value` lines.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "calib_error = {}", self.calib_error);
        let _ = writeln!(s, "rmse = {}", self.rmse);
        let _ = writeln!(s, "nll = {}", self.nll);
        let _ = writeln!(s, "n = {}", self.n);
        let pts: Vec<String> = self.reliability.iter().map(|(p, q)| format!("{p}:{q}")).collect();
        let _ = writeln!(s, "reliability = {}", pts.join(" "));
        s
    }

    pub const CSV_COLUMNS: [&'static str; 4] = ["calib_error", "rmse", "nll", "n"];

    pub fn csv_fields(&self) -> [String; 4] {
        [
            self.calib_error.to_string(),
            self.rmse.to_string(),
            self.nll.to_string(),
            self.n.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RAW: MetricConfig = MetricConfig { bins: 2, percent: false };

    fn brute_force_ce(c: &[f64], m: usize) -> f64 {
        let mut acc = 0.0;
        for i in 1..=m {
            let p = i as f64 / m as f64;
            let mut count = 0.0;
            for &cj in c {
                if cj <= p {
                    count += 1.0 / c.len() as f64;
                }
            }
            acc += (count - p) * (count - p);
        }
        acc / m as f64
    }

    #[test]
    fn hand_examples() {
        assert_eq!(calibration_error(&[0.5, 1.0], &RAW).unwrap(), 0.0);
        assert_eq!(calibration_error(&[0.0, 0.0], &RAW).unwrap(), 0.125);
        let pct = MetricConfig { bins: 2, percent: true };
        assert_eq!(calibration_error(&[0.0, 0.0], &pct).unwrap(), 12.5);
        assert!(calibration_error::<f64>(&[], &RAW).is_err());
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let c: Vec<f64> = (0..500).map(|_| rng.gen::<f64>().powf(1.3)).collect();
        let cfg = MetricConfig { bins: 20, percent: false };
        assert!((calibration_error(&c, &cfg).unwrap() - brute_force_ce(&c, 20)).abs() < 1e-12);
    }

    #[test]
    fn rmse_and_nll() {
        let g = |mu: f64, sigma: f64| GaussianPrediction::new(mu, sigma).unwrap();
        assert_eq!(rmse(&[g(1.0, 1.0), g(2.0, 1.0)], &[1.0, 2.0]).unwrap(), 0.0);
        let r = rmse(&[g(0.0, 1.0), g(0.0, 1.0)], &[3.0, -4.0]).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(rmse::<f64>(&[], &[]).is_err());

        let n1 = predictive_nll(&[g(2.0, 1.0)], &[2.0]).unwrap();
        assert!((n1 - 0.918_939).abs() < 1e-6);
        let n2 = predictive_nll(&[g(2.0, 2.0)], &[2.0]).unwrap();
        assert!((n2 - n1 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let preds: Vec<_> = (0..64)
            .map(|_| GaussianPrediction::new(rng.gen_range(-2.0..2.0), 1.0).unwrap())
            .collect();
        let ys: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut acc = 0.0;
        for i in 0..64 {
            acc += (ys[i] - preds[i].mu).powi(2);
        }
        assert!((rmse(&preds, &ys).unwrap() - (acc / 64.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nll_change_of_variables() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let (mean, std) = (12.0, 3.5);
        let preds: Vec<_> = (0..30)
            .map(|_| GaussianPrediction::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.3..1.5)).unwrap())
            .collect();
        let ys: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let std_nll = predictive_nll(&preds, &ys).unwrap();
        let orig: Vec<_> = preds.iter().map(|p| p.destandardize(mean, std)).collect();
        let ys_orig: Vec<f64> = ys.iter().map(|y| y * std + mean).collect();
        let orig_nll = predictive_nll(&orig, &ys_orig).unwrap();
        assert!((orig_nll - (std_nll + std.ln())).abs() < 1e-12);
    }

    #[test]
    fn reliability_examples() {
        let cfg = MetricConfig { bins: 10, percent: false };
        let n = 100;
        let grid: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        for (p, q) in reliability_curve(&grid, &cfg).unwrap() {
            assert!((p - q).abs() <= 1.0 / n as f64 + 1e-12);
        }
        for (_, q) in reliability_curve(&[0.0; 7], &cfg).unwrap() {
            assert_eq!(q, 1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let c: Vec<f64> = (0..80).map(|_| rng.gen()).collect();
        for (p, q) in reliability_curve(&c, &cfg).unwrap() {
            let count = c.iter().filter(|&&v| v <= p).count() as f64 / 80.0;
            assert_eq!(q, count);
        }
    }

    #[test]
    fn report_serializations() {
        let preds = vec![GaussianPrediction::new(0.0, 1.0).unwrap(); 4];
        let ys = [0.1, -0.3, 0.7, 1.5];
        let r = MetricsReport::evaluate(&preds, &ys, &MetricConfig::default()).unwrap();
        let text = r.to_kv_text();
        assert!(text.contains("calib_error = ") && text.contains("n = 4"));
        assert_eq!(r.csv_fields()[3], "4");
        assert_eq!(r.reliability.len(), 20);
    }

    proptest! {
        #[test]
        fn invariants(c in proptest::collection::vec(0.0..=1.0f64, 1..100), m in 1usize..30, seed in 0u64..50) {
            let raw = MetricConfig { bins: m, percent: false };
            let pct = MetricConfig { bins: m, percent: true };
            let ce = calibration_error(&c, &raw).unwrap();
            prop_assert!(ce >= 0.0);
            let bound = raw.levels().map(|p| (p * p).max((1.0 - p) * (1.0 - p))).fold(0.0, f64::max);
            prop_assert!(ce <= bound);
            prop_assert_eq!(calibration_error(&c, &pct).unwrap(), 100.0 * ce);
            let mut shuffled = c.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(calibration_error(&shuffled, &raw).unwrap(), ce);

            let curve = reliability_curve(&c, &raw).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
            prop_assert!(curve.iter().all(|&(_, q)| (0.0..=1.0).contains(&q)));
            prop_assert_eq!(curve.last().unwrap().1, 1.0);
            prop_assert_eq!(ce == 0.0, curve.iter().all(|&(p, q)| p == q));
        }
    }
}
