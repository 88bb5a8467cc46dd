//! Post-hoc isotonic recalibration.
//!
//! A recalibration dataset pairs every PIT value `c_i` with the empirical
//! CDF of all PIT values at that point. Isotonic least squares on it gives
//! a monotone map `R`, and `R ∘ F` is the recalibrated model. Because the
//! empirical CDF is already nondecreasing in `c`, the isotonic fit
//! reproduces it exactly: the map interpolates the fitting data.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussian::{check_aligned, pit, GaussianPrediction, PitSample};
use crate::scalar::Real;

/// Pool-adjacent-violators: least-squares projection of `ys` onto the
/// nondecreasing cone. `xs` only fixes the order and must be ascending.
pub fn pav<T: Real>(xs: &[T], ys: &[T]) -> Result<Vec<T>> {
    if xs.len() != ys.len() {
        return Err(Error::Length {
            what: "pav",
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("pav: xs must be ascending"));
    }
    Ok(pav_values(ys))
}

/// PAV on values already in order.
pub fn pav_values<T: Real>(ys: &[T]) -> Vec<T> {
    // blocks of (sum, count)
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            // mean0 > mean1 without dividing
            if s0 * T::lit(c1 as f64) > s1 * T::lit(c0 as f64) {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(ys.len());
    for (s, c) in blocks {
        let m = s / T::lit(c as f64);
        out.extend(std::iter::repeat(m).take(c));
    }
    out
}

/// `(c_i, P̂(c_i))` sorted by `c_i`, where `P̂(p)` is the share of PIT
/// values at or below `p`.
pub fn build_recalibration_dataset<T: Real>(preds: &[GaussianPrediction<T>], ys: &[T]) -> Result<Vec<(T, T)>> {
    check_aligned("recalibration dataset", preds.len(), ys.len())?;
    let mut c: Vec<T> = preds
        .iter()
        .zip(ys)
        .map(|(p, &y)| pit(p, y).map(PitSample::value))
        .collect::<Result<_>>()?;
    Ok(empirical_cdf_pairs(&mut c))
}

fn empirical_cdf_pairs<T: Real>(c: &mut [T]) -> Vec<(T, T)> {
    c.sort_by(|a, b| a.partial_cmp(b).expect("finite PIT"));
    let n = c.len();
    let nf = T::lit(n as f64);
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        // all ties share the count of values <= c[i]
        let mut j = i;
        while j + 1 < n && c[j + 1] == c[i] {
            j += 1;
        }
        let p_hat = T::lit((j + 1) as f64) / nf;
        for k in i..=j {
            out.push((c[k], p_hat));
        }
        i = j + 1;
    }
    out
}

/// Piecewise-linear monotone map of `[0, 1]` onto itself.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationMap<T> {
    knots: Vec<(T, T)>,
}

impl<T: Real> CalibrationMap<T> {
    pub fn identity() -> Self {
        CalibrationMap {
            knots: vec![(T::zero(), T::zero()), (T::one(), T::one())],
        }
    }

    /// Builds a map from arbitrary knots, adding the `(0,0)` and `(1,1)`
    /// endpoints and checking monotonicity.
    pub fn from_knots(mut knots: Vec<(T, T)>) -> Result<Self> {
        for &(p, r) in &knots {
            if !(p >= T::zero() && p <= T::one() && r >= T::zero() && r <= T::one()) {
                return Err(Error::invalid(format!("calibration knot ({p}, {r}) outside the unit square")));
            }
        }
        knots.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite knot"));
        let mut clean: Vec<(T, T)> = vec![(T::zero(), T::zero())];
        for (p, r) in knots {
            if p <= T::zero() || p >= T::one() {
                continue;
            }
            match clean.last_mut() {
                Some(last) if last.0 == p => last.1 = last.1.max(r),
                _ => clean.push((p, r)),
            }
        }
        clean.push((T::one(), T::one()));
        if clean.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::invalid("calibration knots are not monotone"));
        }
        Ok(CalibrationMap { knots: clean })
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }

    /// Linear interpolation between the bracketing knots.
    pub fn apply(&self, p: T) -> Result<T> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::invalid(format!("calibration map input {p} outside [0, 1]")));
        }
        let idx = self.knots.partition_point(|k| k.0 <= p);
        if idx >= self.knots.len() {
            return Ok(self.knots[self.knots.len() - 1].1);
        }
        let (x0, y0) = self.knots[idx - 1];
        let (x1, y1) = self.knots[idx];
        let t = (p - x0) / (x1 - x0);
        Ok(y0 + t * (y1 - y0))
    }

    /// Two-column CSV with a `p,r` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "p,r")?;
        for (p, r) in &self.knots {
            writeln!(w, "{},{}", p.as_f64(), r.as_f64())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut knots = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::invalid(format!("calibration map: {e}")))?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = || -> Result<T> {
                let cell = cols.next().ok_or_else(|| Error::invalid(format!("line {}: missing column", lineno + 1)))?;
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("line {}: bad number {cell:?}", lineno + 1)))?;
                Ok(T::lit(v))
            };
            knots.push((next()?, next()?));
        }
        Self::from_knots(knots)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Isotonic map fitted on the recalibration dataset of `(preds, ys)`.
pub fn fit_calibration_map<T: Real>(preds: &[GaussianPrediction<T>], ys: &[T]) -> Result<CalibrationMap<T>> {
    let pairs = build_recalibration_dataset(preds, ys)?;
    let xs: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let targets: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let fitted = pav(&xs, &targets)?;
    CalibrationMap::from_knots(xs.into_iter().zip(fitted).collect())
}

pub fn apply_map<T: Real>(map: &CalibrationMap<T>, p: T) -> Result<T> {
    map.apply(p)
}

/// PIT of the composed model `R ∘ F`.
pub fn recalibrated_pit<T: Real>(map: &CalibrationMap<T>, pred: &GaussianPrediction<T>, y: T) -> Result<PitSample<T>> {
    Ok(PitSample::new(map.apply(pit(pred, y)?.value())?))
}

pub fn recalibrated_pits<T: Real>(
    map: &CalibrationMap<T>,
    preds: &[GaussianPrediction<T>],
    ys: &[T],
) -> Result<Vec<PitSample<T>>> {
    check_aligned("recalibrated pit", preds.len(), ys.len())?;
    preds.iter().zip(ys).map(|(p, &y)| recalibrated_pit(map, p, y)).collect()
}
