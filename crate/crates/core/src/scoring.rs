//! Proper scores for quantile forecasts: interval score, weighted interval score
//! with its decomposition, interval coverage, bias and median absolute error.
//!
//! Decomposition labels: `overprediction` is the penalty paid when the
//! observation falls below the interval (the forecast was too high);
//! `underprediction` is paid when it falls above.

use thiserror::Error;

use crate::forecast::QUANTILES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("interval lower bound {0} exceeds upper bound {1}")]
    InvertedInterval(f64, f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("{0} forecasts but {1} observations")]
    LengthMismatch(usize, usize),
    #[error("nothing to score")]
    Empty,
    #[error("coverage level must be 0.5 or 0.9, got {0}")]
    UnsupportedLevel(f64),
    #[error("quantiles are not monotone")]
    NonMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalScore {
    pub score: f64,
    pub underprediction: f64,
    pub overprediction: f64,
    pub sharpness: f64,
}

/// Interval score of the central `(1 - alpha)` interval `[l, u]` at observation `y`.
pub fn interval_score(l: f64, u: f64, alpha: f64, y: f64) -> Result<IntervalScore, ScoreError> {
    if l > u {
        return Err(ScoreError::InvertedInterval(l, u));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ScoreError::InvalidAlpha(alpha));
    }
    let overprediction = if y < l { 2.0 / alpha * (l - y) } else { 0.0 };
    let underprediction = if y > u { 2.0 / alpha * (y - u) } else { 0.0 };
    let sharpness = u - l;
    Ok(IntervalScore { score: sharpness + underprediction + overprediction, underprediction, overprediction, sharpness })
}

/// Five-quantile forecast `[q05, q25, q50, q75, q95]` of one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileForecast {
    pub q: [f64; 5],
}

impl QuantileForecast {
    pub fn new(q: [f64; 5]) -> Result<Self, ScoreError> {
        if q.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(ScoreError::NonMonotone);
        }
        Ok(Self { q })
    }

    pub fn median(&self) -> f64 {
        self.q[2]
    }

    /// Central interval for `level` 0.5 or 0.9.
    pub fn interval(&self, level: f64) -> Result<(f64, f64), ScoreError> {
        if (level - 0.5).abs() < 1e-12 {
            Ok((self.q[1], self.q[3]))
        } else if (level - 0.9).abs() < 1e-12 {
            Ok((self.q[0], self.q[4]))
        } else {
            Err(ScoreError::UnsupportedLevel(level))
        }
    }
}

/// Weighted interval score with the 50% and 90% intervals and the median.
/// The components are weighted like the score, so
/// `wis = sharpness + underprediction + overprediction`.
pub fn wis(f: &QuantileForecast, y: f64) -> Result<IntervalScore, ScoreError> {
    const ALPHAS: [(f64, usize, usize); 2] = [(0.5, 1, 3), (0.1, 0, 4)];
    let norm = ALPHAS.len() as f64 + 0.5;
    let m = f.median();
    // the median term counts as an interval of zero width
    let mut out = IntervalScore {
        score: 0.0,
        underprediction: 0.5 * (y - m).max(0.0),
        overprediction: 0.5 * (m - y).max(0.0),
        sharpness: 0.0,
    };
    for (alpha, lo, hi) in ALPHAS {
        let is = interval_score(f.q[lo], f.q[hi], alpha, y)?;
        let w = alpha / 2.0;
        out.underprediction += w * is.underprediction;
        out.overprediction += w * is.overprediction;
        out.sharpness += w * is.sharpness;
    }
    out.underprediction /= norm;
    out.overprediction /= norm;
    out.sharpness /= norm;
    out.score = out.sharpness + out.underprediction + out.overprediction;
    Ok(out)
}

/// Pinball (quantile) loss.
pub fn pinball(q: f64, tau: f64, y: f64) -> f64 {
    if y >= q {
        tau * (y - q)
    } else {
        (1.0 - tau) * (q - y)
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), ScoreError> {
    if a != b {
        return Err(ScoreError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(ScoreError::Empty);
    }
    Ok(())
}

/// Fraction of observations inside the central interval, bounds included.
pub fn coverage(forecasts: &[QuantileForecast], obs: &[f64], level: f64) -> Result<f64, ScoreError> {
    check_lengths(forecasts.len(), obs.len())?;
    let mut hits = 0usize;
    for (f, &y) in forecasts.iter().zip(obs) {
        let (l, u) = f.interval(level)?;
        if l <= y && y <= u {
            hits += 1;
        }
    }
    Ok(hits as f64 / obs.len() as f64)
}

/// `1 - 2 tau*`, where `tau*` is the largest level on `{0, quantile levels, 1}`
/// whose quantile lies at or below `y`. Positive values mean overprediction.
pub fn bias(f: &QuantileForecast, y: f64) -> f64 {
    let tau_star = if y < f.q[0] {
        0.0
    } else if y > f.q[4] {
        1.0
    } else {
        let k = f.q.iter().rposition(|&q| q <= y).expect("y is at or above q05");
        QUANTILES[k]
    };
    1.0 - 2.0 * tau_star
}

/// Median of a non-empty slice; the mean of the two central values for even length.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute error of point forecasts.
pub fn mae(point: &[f64], obs: &[f64]) -> Result<f64, ScoreError> {
    check_lengths(point.len(), obs.len())?;
    let errors: Vec<f64> = point.iter().zip(obs).map(|(p, y)| (p - y).abs()).collect();
    Ok(median(&errors))
}

/// Summary of a batch of forecasts of one model at one level and horizon bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub model: String,
    pub level: String,
    pub horizon: String,
    pub interval_score: f64,
    pub underprediction: f64,
    pub overprediction: f64,
    pub mae: f64,
    pub coverage_50: f64,
    pub coverage_90: f64,
    pub bias: f64,
    pub n: usize,
}

/// Means of the WIS components, coverages, mean bias and median absolute error.
pub fn summarize(
    model: &str,
    level: &str,
    horizon: &str,
    forecasts: &[QuantileForecast],
    obs: &[f64],
) -> Result<ScoreReport, ScoreError> {
    check_lengths(forecasts.len(), obs.len())?;
    let n = obs.len() as f64;
    let (mut score, mut under, mut over, mut b) = (0.0, 0.0, 0.0, 0.0);
    for (f, &y) in forecasts.iter().zip(obs) {
        let w = wis(f, y)?;
        score += w.score;
        under += w.underprediction;
        over += w.overprediction;
        b += bias(f, y);
    }
    let medians: Vec<f64> = forecasts.iter().map(QuantileForecast::median).collect();
    Ok(ScoreReport {
        model: model.to_string(),
        level: level.to_string(),
        horizon: horizon.to_string(),
        interval_score: score / n,
        underprediction: under / n,
        overprediction: over / n,
        mae: mae(&medians, obs)?,
        coverage_50: coverage(forecasts, obs, 0.5)?,
        coverage_90: coverage(forecasts, obs, 0.9)?,
        bias: b / n,
        n: obs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(m: f64) -> QuantileForecast {
        QuantileForecast::new([m; 5]).unwrap()
    }

    #[test]
    fn hand_cases() {
        let covered = interval_score(0.0, 10.0, 0.2, 5.0).unwrap();
        assert_eq!((covered.score, covered.underprediction, covered.overprediction), (10.0, 0.0, 0.0));
        let above = interval_score(0.0, 10.0, 0.2, 15.0).unwrap();
        assert_eq!(above.score, 60.0);
        assert_eq!(above.underprediction, 50.0);
        let below = interval_score(0.0, 10.0, 0.2, -5.0).unwrap();
        assert_eq!(below.overprediction, 50.0);
        assert_eq!(interval_score(3.0, 3.0, 0.1, 3.0).unwrap().score, 0.0);
        assert!(matches!(interval_score(2.0, 1.0, 0.1, 0.0), Err(ScoreError::InvertedInterval(..))));
    }

    #[test]
    fn degenerate_forecast_scores_its_error() {
        for delta in [0.0, 1.5, -4.0, 12.25] {
            assert_eq!(wis(&flat(20.0), 20.0 + delta).unwrap().score, delta.abs());
        }
    }

    #[test]
    fn bias_grid() {
        let f = QuantileForecast::new([1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(bias(&f, 0.0), 1.0);
        assert_eq!(bias(&f, 3.0), 0.0);
        assert_eq!(bias(&f, 4.5), -0.5);
        assert_eq!(bias(&f, 9.0), -1.0);
    }

    #[test]
    fn coverage_cases() {
        let fs = vec![QuantileForecast::new([1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(); 4];
        assert_eq!(coverage(&fs, &[3.0; 4], 0.5).unwrap(), 1.0);
        assert_eq!(coverage(&fs, &[3.0; 4], 0.9).unwrap(), 1.0);
        assert_eq!(coverage(&fs, &[6.0; 4], 0.9).unwrap(), 0.0);
        // 1.0 and 5.0 on the 90% bounds, 2.0 on the 50% bound, 0.5 outside
        let obs = [1.0, 5.0, 2.0, 0.5];
        assert_eq!(coverage(&fs, &obs, 0.9).unwrap(), 3.0 / 4.0);
        assert_eq!(coverage(&fs, &obs, 0.5).unwrap(), 1.0 / 4.0);
        assert!(matches!(coverage(&fs, &obs[..2], 0.5), Err(ScoreError::LengthMismatch(4, 2))));
    }

    #[test]
    fn median_absolute_error() {
        assert_eq!(mae(&[0.0; 3], &[1.0, 2.0, 100.0]).unwrap(), 2.0);
        assert_eq!(mae(&[0.0; 2], &[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mae(&[4.0, 5.0], &[4.0, 5.0]).unwrap(), 0.0);
    }
}
