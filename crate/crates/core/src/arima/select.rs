//! Unit-root and seasonal-differencing tests and the stepwise order search.

use std::collections::BTreeSet;

use super::{difference, poly, fit_order_with, mean, ArimaError, ArimaFit, ArimaOrder, Method, SEASON};

/// 5% critical value of the KPSS level-stationarity test.
pub const KPSS_CRITICAL_5PCT: f64 = 0.463;

/// Seasonal strength above which one seasonal difference is taken.
pub const SEASONAL_STRENGTH_THRESHOLD: f64 = 0.64;

/// Cap on models evaluated by the stepwise search.
pub const MAX_MODELS: usize = 94;

/// Candidates with any AR or MA root closer to the unit circle than this are
/// passed over during the search.
pub const SEARCH_ROOT_MARGIN: f64 = 1.01;

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| (v - x[0]).abs() < 1e-12)
}

/// KPSS statistic for level stationarity with a Bartlett long-run variance
/// using `trunc(4 (n / 100)^(1/4))` lags.
pub fn kpss_statistic(x: &[f64]) -> f64 {
    let n = x.len();
    let m = mean(x);
    let e: Vec<f64> = x.iter().map(|v| v - m).collect();
    let lags = (4.0 * (n as f64 / 100.0).powf(0.25)).trunc() as usize;
    let mut s2 = e.iter().map(|v| v * v).sum::<f64>() / n as f64;
    for l in 1..=lags.min(n - 1) {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let cov: f64 = (l..n).map(|t| e[t] * e[t - l]).sum::<f64>() / n as f64;
        s2 += 2.0 * w * cov;
    }
    let mut partial = 0.0;
    let mut sum_sq = 0.0;
    for v in &e {
        partial += v;
        sum_sq += partial * partial;
    }
    sum_sq / ((n * n) as f64 * s2)
}

/// Number of first differences (at most 2) needed for KPSS to stop rejecting.
pub fn ndiffs(x: &[f64]) -> usize {
    let mut cur = x.to_vec();
    let mut d = 0;
    while d < 2 && cur.len() > 2 && !is_constant(&cur) && kpss_statistic(&cur) > KPSS_CRITICAL_5PCT {
        cur = difference(&cur, 1, 0, 1).expect("length checked");
        d += 1;
    }
    d
}

/// Strength of the period-`s` component from a moving-average decomposition:
/// `max(0, 1 - var(remainder) / var(seasonal + remainder))`.
pub fn seasonal_strength(x: &[f64], s: usize) -> f64 {
    let n = x.len();
    if n < 2 * s + 1 || s < 2 {
        return 0.0;
    }
    // centred moving average over one period (2 x s average for even s)
    let half = s / 2;
    let trend = |t: usize| -> f64 {
        if s % 2 == 1 {
            x[t - half..=t + half].iter().sum::<f64>() / s as f64
        } else {
            (0.5 * x[t - half] + x[t - half + 1..t + half].iter().sum::<f64>() + 0.5 * x[t + half]) / s as f64
        }
    };
    let range = half..n - half;
    let detrended: Vec<(usize, f64)> = range.map(|t| (t, x[t] - trend(t))).collect();
    let mut sums = vec![0.0; s];
    let mut counts = vec![0usize; s];
    for &(t, v) in &detrended {
        sums[t % s] += v;
        counts[t % s] += 1;
    }
    let mut seasonal: Vec<f64> = sums.iter().zip(&counts).map(|(a, &c)| a / c as f64).collect();
    let centre = mean(&seasonal);
    for v in &mut seasonal {
        *v -= centre;
    }
    let remainder: Vec<f64> = detrended.iter().map(|&(t, v)| v - seasonal[t % s]).collect();
    let detr: Vec<f64> = detrended.iter().map(|&(_, v)| v).collect();
    let var = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let total = var(&detr);
    if total <= 0.0 {
        return 0.0;
    }
    (1.0 - var(&remainder) / total).max(0.0)
}

/// One seasonal difference when the seasonal strength exceeds the threshold.
pub fn nsdiffs(x: &[f64], s: usize) -> usize {
    usize::from(seasonal_strength(x, s) > SEASONAL_STRENGTH_THRESHOLD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    p: usize,
    q: usize,
    sp: usize,
    sq: usize,
    constant: bool,
}

struct Search<'a> {
    z: &'a [f64],
    d: usize,
    sd: usize,
    tried: BTreeSet<Candidate>,
}

impl Search<'_> {
    fn evaluate(&mut self, c: Candidate) -> Option<ArimaFit> {
        if self.tried.contains(&c) || self.tried.len() >= MAX_MODELS {
            return None;
        }
        if c.p > 5 || c.q > 5 || c.sp > 2 || c.sq > 2 {
            return None;
        }
        self.tried.insert(c);
        let order = ArimaOrder::new(c.p, self.d, c.q, c.sp, self.sd, c.sq);
        let fit = fit_order_with(self.z, order, c.constant, Method::Ml).ok()?;
        if !fit.aicc.is_finite() || !roots_clear(&fit, SEARCH_ROOT_MARGIN) {
            return None;
        }
        Some(fit)
    }
}

fn roots_clear(fit: &ArimaFit, radius: f64) -> bool {
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    poly::roots_outside(&fit.ar, radius)
        && poly::roots_outside(&fit.sar, radius)
        && poly::roots_outside(&neg(&fit.ma), radius)
        && poly::roots_outside(&neg(&fit.sma), radius)
}

/// Strictly better criterion, or equal within rounding with fewer parameters.
fn improves(new: &ArimaFit, best: &ArimaFit) -> bool {
    let tol = 1e-9 * best.aicc.abs().max(1.0);
    new.aicc < best.aicc - tol || ((new.aicc - best.aicc).abs() <= tol && new.n_params() < best.n_params())
}

fn neighbours(c: Candidate, allow_constant: bool) -> Vec<Candidate> {
    let step = |v: usize, by: i32| -> Option<usize> { usize::try_from(v as i32 + by).ok() };
    let mut out = Vec::new();
    let moves: [(i32, i32, i32, i32); 12] = [
        (0, 0, -1, 0),
        (0, 0, 1, 0),
        (0, 0, 0, -1),
        (0, 0, 0, 1),
        (0, 0, -1, -1),
        (0, 0, 1, 1),
        (-1, 0, 0, 0),
        (1, 0, 0, 0),
        (0, -1, 0, 0),
        (0, 1, 0, 0),
        (-1, -1, 0, 0),
        (1, 1, 0, 0),
    ];
    for (dp, dq, dsp, dsq) in moves {
        if let (Some(p), Some(q), Some(sp), Some(sq)) = (step(c.p, dp), step(c.q, dq), step(c.sp, dsp), step(c.sq, dsq)) {
            out.push(Candidate { p, q, sp, sq, constant: c.constant });
        }
    }
    if allow_constant {
        out.push(Candidate { constant: !c.constant, ..c });
    }
    out
}

fn random_walk(z: &[f64]) -> Result<ArimaFit, ArimaError> {
    let mut fit = fit_order_with(z, ArimaOrder::non_seasonal(0, 1, 0), false, Method::Ml)?;
    fit.fallback = true;
    Ok(fit)
}

/// Stepwise order selection minimizing AICc. The seasonal difference is chosen
/// by seasonal strength, then `d` by repeated KPSS tests; the search starts from
/// four standard models (exact likelihood throughout) and moves one or two orders at a time until no
/// neighbour improves.
pub fn auto_select(z: &[f64]) -> Result<ArimaFit, ArimaError> {
    if z.len() < 21 {
        return Err(ArimaError::SeriesTooShort { len: z.len(), needed: 21 });
    }
    let s = SEASON;
    let sd = nsdiffs(z, s);
    let seasonal = difference(z, 0, sd, s)?;
    let d = ndiffs(&seasonal).min(2 - sd);
    let allow_constant = d + sd <= 1;
    let mut search = Search { z, d, sd, tried: BTreeSet::new() };

    let c = allow_constant;
    let starts = [
        Candidate { p: 2, q: 2, sp: 1, sq: 1, constant: c },
        Candidate { p: 0, q: 0, sp: 0, sq: 0, constant: c },
        Candidate { p: 1, q: 0, sp: 1, sq: 0, constant: c },
        Candidate { p: 0, q: 1, sp: 0, sq: 1, constant: c },
    ];
    let mut best: Option<(Candidate, ArimaFit)> = None;
    for cand in starts {
        if let Some(fit) = search.evaluate(cand) {
            if best.as_ref().is_none_or(|(_, b)| improves(&fit, b)) {
                best = Some((cand, fit));
            }
        }
    }
    let Some((mut current, _)) = best.clone() else {
        return random_walk(z).map_err(|_| ArimaError::AllCandidatesFailed);
    };
    'outer: while search.tried.len() < MAX_MODELS {
        for cand in neighbours(current, allow_constant) {
            if let Some(fit) = search.evaluate(cand) {
                let (_, b) = best.as_ref().expect("set above");
                if improves(&fit, b) {
                    best = Some((cand, fit));
                    current = cand;
                    continue 'outer;
                }
            }
        }
        break;
    }

    Ok(best.expect("set above").1)
}
