//! Seasonal ARIMA baseline on `ln(x + 1)` transformed counts: exact Gaussian
//! likelihood estimation, automatic order selection and Gaussian predictive
//! quantiles mapped back to the count scale.

mod kalman;
mod optim;
pub mod poly;
mod select;

use chrono::{Duration, NaiveDate};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::forecast::{ForecastSet, Level};
use kalman::StateSpace;

pub use select::{auto_select, kpss_statistic, ndiffs, nsdiffs, seasonal_strength, KPSS_CRITICAL_5PCT, MAX_MODELS, SEASONAL_STRENGTH_THRESHOLD};

/// Weekly period of daily data.
pub const SEASON: usize = 7;

/// Minimum modulus of any AR or MA root on an accepted fit.
pub const ROOT_MARGIN: f64 = 1.0 + 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArimaError {
    #[error("negative count {0}")]
    NegativeInput(f64),
    #[error("series has {len} points, needs more than {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("estimate is not stationary or not invertible")]
    NonStationaryEstimate,
    #[error("optimizer failed")]
    OptimFailure,
    #[error("invalid order {0}")]
    InvalidOrder(String),
    #[error("no candidate model could be fitted")]
    AllCandidatesFailed,
}

/// `(p, d, q)(sp, sd, sq)_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub sp: usize,
    pub sd: usize,
    pub sq: usize,
    pub s: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize, sp: usize, sd: usize, sq: usize) -> Self {
        Self { p, d, q, sp, sd, sq, s: SEASON }
    }

    pub fn non_seasonal(p: usize, d: usize, q: usize) -> Self {
        Self::new(p, d, q, 0, 0, 0)
    }

    pub fn validate(&self) -> Result<(), ArimaError> {
        if self.p > 5 || self.q > 5 || self.d > 2 || self.sp > 2 || self.sq > 2 || self.sd > 1 || self.s == 0 {
            return Err(ArimaError::InvalidOrder(self.to_string()));
        }
        Ok(())
    }

    pub fn n_coefficients(&self) -> usize {
        self.p + self.q + self.sp + self.sq
    }

    /// Observations lost to differencing.
    pub fn lost(&self) -> usize {
        self.d + self.sd * self.s
    }
}

impl std::fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})({},{},{})[{}]", self.p, self.d, self.q, self.sp, self.sd, self.sq, self.s)
    }
}

/// Estimation criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Exact likelihood, started from conditional-sum-of-squares estimates.
    Ml,
    /// Conditional sum of squares only, used to rank candidates on long series.
    Css,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sar: Vec<f64>,
    pub sma: Vec<f64>,
    /// Mean of the differenced series (a drift when `d + sd = 1`); zero when no
    /// constant is included.
    pub intercept: f64,
    pub include_constant: bool,
    pub sigma2: f64,
    pub loglik: f64,
    pub aicc: f64,
    /// Length of the differenced series.
    pub n_used: usize,
    /// Transformed series the model was fitted to.
    pub history: Vec<f64>,
    /// Set when order selection failed and a random walk was substituted.
    pub fallback: bool,
    pub method: Method,
}

impl ArimaFit {
    /// Estimated parameters including the innovation variance.
    pub fn n_params(&self) -> usize {
        self.order.n_coefficients() + usize::from(self.include_constant) + 1
    }

    /// Expanded AR polynomial `phi(B) Phi(B^s)`.
    pub fn full_ar(&self) -> Vec<f64> {
        poly::multiply_seasonal(&self.ar, &self.sar, self.order.s)
    }

    /// Expanded MA polynomial `theta(B) Theta(B^s)`, `+` convention.
    pub fn full_ma(&self) -> Vec<f64> {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        neg(&poly::multiply_seasonal(&neg(&self.ma), &neg(&self.sma), self.order.s))
    }
}

pub fn aicc(loglik: f64, k: usize, n: usize) -> f64 {
    let (k, n) = (k as f64, n as f64);
    if n - k - 1.0 <= 0.0 {
        return f64::INFINITY;
    }
    -2.0 * loglik + 2.0 * k * n / (n - k - 1.0)
}

/// `ln(x + 1)` of every count.
pub fn transform(x: &[f64]) -> Result<Vec<f64>, ArimaError> {
    x.iter()
        .map(|&v| if v >= 0.0 { Ok(v.ln_1p()) } else { Err(ArimaError::NegativeInput(v)) })
        .collect()
}

/// `exp(z) - 1`, floored at zero.
pub fn inverse_transform(z: f64) -> f64 {
    z.exp_m1().max(0.0)
}

/// Applies `(1 - B)^d (1 - B^s)^D`.
pub fn difference(z: &[f64], d: usize, big_d: usize, s: usize) -> Result<Vec<f64>, ArimaError> {
    let lost = d + big_d * s;
    if z.len() <= lost {
        return Err(ArimaError::SeriesTooShort { len: z.len(), needed: lost });
    }
    let mut out = z.to_vec();
    for _ in 0..big_d {
        out = (s..out.len()).map(|t| out[t] - out[t - s]).collect();
    }
    for _ in 0..d {
        out = (1..out.len()).map(|t| out[t] - out[t - 1]).collect();
    }
    Ok(out)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Coefficients and mean implied by an unconstrained parameter vector.
struct Parametrization {
    order: ArimaOrder,
    include_constant: bool,
    center: f64,
    scale: f64,
}

struct Coefficients {
    ar: Vec<f64>,
    ma: Vec<f64>,
    sar: Vec<f64>,
    sma: Vec<f64>,
    mu: f64,
}

impl Coefficients {
    fn full(&self, s: usize) -> (Vec<f64>, Vec<f64>) {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let phi = poly::multiply_seasonal(&self.ar, &self.sar, s);
        let theta = neg(&poly::multiply_seasonal(&neg(&self.ma), &neg(&self.sma), s));
        (phi, theta)
    }
}

impl Parametrization {
    fn dim(&self) -> usize {
        self.order.n_coefficients() + usize::from(self.include_constant)
    }

    fn decode(&self, x: &[f64]) -> Coefficients {
        let o = &self.order;
        let (a, rest) = x.split_at(o.p);
        let (m, rest) = rest.split_at(o.q);
        let (sa, rest) = rest.split_at(o.sp);
        let (sm, rest) = rest.split_at(o.sq);
        let ar = poly::from_unconstrained(a);
        let ma: Vec<f64> = poly::from_unconstrained(m).iter().map(|v| -v).collect();
        let sar = poly::from_unconstrained(sa);
        let sma: Vec<f64> = poly::from_unconstrained(sm).iter().map(|v| -v).collect();
        let mu = if self.include_constant { self.center + self.scale * rest[0] } else { 0.0 };
        Coefficients { ar, ma, sar, sma, mu }
    }
}

/// Conditional sum of squares residuals of `w - mu` under the ARMA model.
fn css_objective(w: &[f64], phi: &[f64], theta: &[f64], mu: f64) -> f64 {
    let start = phi.len();
    if w.len() <= start {
        return f64::NAN;
    }
    let mut e = vec![0.0; w.len()];
    let mut ssq = 0.0;
    for t in start..w.len() {
        let mut v = w[t] - mu;
        for (i, c) in phi.iter().enumerate() {
            v -= c * (w[t - i - 1] - mu);
        }
        for (j, c) in theta.iter().enumerate() {
            if t > j {
                v -= c * e[t - j - 1];
            }
        }
        e[t] = v;
        ssq += v * v;
    }
    0.5 * (ssq / (w.len() - start) as f64).ln()
}

fn exact_objective(w: &[f64], phi: &[f64], theta: &[f64], mu: f64) -> f64 {
    let centred: Vec<f64> = w.iter().map(|v| v - mu).collect();
    StateSpace::new(phi, theta).filter(&centred).profile_objective()
}

/// Exact Gaussian log-likelihood of `w` under a zero-mean-after-`mu` ARMA model
/// with innovation variance `sigma2`.
pub fn exact_loglik(w: &[f64], phi: &[f64], theta: &[f64], mu: f64, sigma2: f64) -> f64 {
    let centred: Vec<f64> = w.iter().map(|v| v - mu).collect();
    StateSpace::new(phi, theta).filter(&centred).loglik(sigma2)
}

/// Fits one order to the transformed series `z`, with a constant when `d + sd <= 1`.
pub fn fit_order(z: &[f64], order: ArimaOrder) -> Result<ArimaFit, ArimaError> {
    fit_order_with(z, order, order.d + order.sd <= 1, Method::Ml)
}

pub fn fit_order_with(z: &[f64], order: ArimaOrder, include_constant: bool, method: Method) -> Result<ArimaFit, ArimaError> {
    order.validate()?;
    let w = difference(z, order.d, order.sd, order.s)?;
    let k = order.n_coefficients() + usize::from(include_constant);
    let needed = 10 + k;
    if w.len() < needed {
        return Err(ArimaError::SeriesTooShort { len: w.len(), needed });
    }
    let center = mean(&w);
    let var = w.iter().map(|v| (v - center).powi(2)).sum::<f64>() / w.len() as f64;
    let param = Parametrization { order, include_constant, center, scale: var.sqrt().max(1e-8) };

    let coefs = if var <= 1e-20 {
        // flat series: nothing to estimate beyond the level
        param.decode(&vec![0.0; param.dim()])
    } else {
        let s = order.s;
        let css = |x: &[f64]| {
            let c = param.decode(x);
            let (phi, theta) = c.full(s);
            css_objective(&w, &phi, &theta, c.mu)
        };
        let start = optim::bfgs(css, &vec![0.0; param.dim()]).ok_or(ArimaError::OptimFailure)?;
        let best = match method {
            Method::Css => start,
            Method::Ml => {
                let exact = |x: &[f64]| {
                    let c = param.decode(x);
                    let (phi, theta) = c.full(s);
                    exact_objective(&w, &phi, &theta, c.mu)
                };
                // fall back to the origin when the CSS estimate is unusable
                let x0 = if exact(&start.x).is_finite() { start.x } else { vec![0.0; param.dim()] };
                optim::bfgs(exact, &x0).ok_or(ArimaError::OptimFailure)?
            }
        };
        param.decode(&best.x)
    };

    for (c, is_ar) in [(&coefs.ar, true), (&coefs.sar, true), (&coefs.ma, false), (&coefs.sma, false)] {
        let lag: Vec<f64> = if is_ar { c.clone() } else { c.iter().map(|v| -v).collect() };
        if !poly::roots_outside(&lag, ROOT_MARGIN) {
            return Err(ArimaError::NonStationaryEstimate);
        }
    }

    let (phi, theta) = coefs.full(order.s);
    let (sigma2, loglik) = match method {
        Method::Ml => {
            let centred: Vec<f64> = w.iter().map(|v| v - coefs.mu).collect();
            let filt = StateSpace::new(&phi, &theta).filter(&centred);
            let sigma2 = filt.sigma2().max(1e-10);
            (sigma2, filt.loglik(sigma2))
        }
        Method::Css => {
            let obj = css_objective(&w, &phi, &theta, coefs.mu);
            let sigma2 = (2.0 * obj).exp().max(1e-10);
            // scaled to the full differenced length so candidates with different
            // conditioning lags stay comparable
            let n = w.len() as f64;
            (sigma2, -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0))
        }
    };
    if !loglik.is_finite() {
        return Err(ArimaError::OptimFailure);
    }
    let n_params = k + 1;
    Ok(ArimaFit {
        order,
        ar: coefs.ar,
        ma: coefs.ma,
        sar: coefs.sar,
        sma: coefs.sma,
        intercept: coefs.mu,
        include_constant,
        sigma2,
        loglik,
        aicc: aicc(loglik, n_params, w.len()),
        n_used: w.len(),
        history: z.to_vec(),
        fallback: false,
        method,
    })
}

/// Point forecasts and error variances on the transformed scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaForecast {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub taus: Vec<f64>,
    /// Back-transformed quantiles, `quantiles[k][h]` for `taus[k]`.
    pub quantiles: Vec<Vec<f64>>,
}

impl ArimaForecast {
    pub fn to_forecast_set(&self, level: Level, series_id: &str, first_date: NaiveDate) -> ForecastSet {
        ForecastSet {
            level,
            series_id: series_id.to_string(),
            dates: (0..self.mean.len()).map(|h| first_date + Duration::days(h as i64)).collect(),
            taus: self.taus.clone(),
            values: self.quantiles.clone(),
            sample_paths: None,
        }
    }
}

/// Psi weights of the integrated model, `psi_0 = 1`.
fn psi_weights(fit: &ArimaFit, horizon: usize) -> Vec<f64> {
    let o = &fit.order;
    let ar = poly::multiply(&fit.full_ar(), &poly::differencing(o.d, o.sd, o.s));
    let ma = fit.full_ma();
    let mut psi = vec![0.0; horizon];
    psi[0] = 1.0;
    for j in 1..horizon {
        let mut v = ma.get(j - 1).copied().unwrap_or(0.0);
        for i in 1..=j.min(ar.len()) {
            v += ar[i - 1] * psi[j - i];
        }
        psi[j] = v;
    }
    psi
}

pub fn forecast_arima(fit: &ArimaFit, horizon: usize, taus: &[f64]) -> ArimaForecast {
    assert!(horizon >= 1);
    let o = &fit.order;
    let z = &fit.history;
    let w = difference(z, o.d, o.sd, o.s).expect("series was long enough to fit");
    let ss = StateSpace::new(&fit.full_ar(), &fit.full_ma());
    let centred: Vec<f64> = w.iter().map(|v| v - fit.intercept).collect();
    let filt = ss.filter(&centred);
    let w_hat: Vec<f64> = ss.project(&filt.next_state, horizon).iter().map(|v| v + fit.intercept).collect();

    // undo the differencing: z_t = w_t + sum delta_k z_{t-k}
    let delta = poly::differencing(o.d, o.sd, o.s);
    let mut ext = z.clone();
    for wh in &w_hat {
        let t = ext.len();
        let v = wh + delta.iter().enumerate().map(|(k, c)| c * ext[t - k - 1]).sum::<f64>();
        ext.push(v);
    }
    let mean = ext[z.len()..].to_vec();

    let psi = psi_weights(fit, horizon);
    let mut acc = 0.0;
    let variance: Vec<f64> = psi
        .iter()
        .map(|p| {
            acc += p * p;
            fit.sigma2 * acc
        })
        .collect();

    let normal = Normal::standard();
    let quantiles = taus
        .iter()
        .map(|&tau| {
            let zq = normal.inverse_cdf(tau);
            mean.iter().zip(&variance).map(|(m, v)| inverse_transform(m + zq * v.sqrt())).collect()
        })
        .collect();
    ArimaForecast { mean, variance, taus: taus.to_vec(), quantiles }
}

/// Transforms a count series, selects and fits a model.
pub fn fit_counts(counts: &[f64]) -> Result<ArimaFit, ArimaError> {
    auto_select(&transform(counts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_values() {
        assert_eq!(transform(&[0.0]).unwrap(), vec![0.0]);
        assert!((transform(&[999.0]).unwrap()[0] - 1000f64.ln()).abs() < 1e-12);
        assert!(matches!(transform(&[-1.0]), Err(ArimaError::NegativeInput(_))));
        for x in [0u64, 1, 2, 17, 1000, 65_537, 999_999, 1_000_000] {
            let z = transform(&[x as f64]).unwrap()[0];
            assert_eq!(inverse_transform(z).round(), x as f64);
            assert!((inverse_transform(z) - x as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn differencing_cases() {
        assert_eq!(difference(&[1.0, 2.0, 4.0], 1, 0, 7).unwrap(), vec![1.0, 2.0]);
        let ramp: Vec<f64> = (0..20).map(|t| 3.0 + 0.5 * t as f64).collect();
        assert!(difference(&ramp, 1, 0, 7).unwrap().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let saw: Vec<f64> = (0..30).map(|t| (t % 7) as f64).collect();
        let sd = difference(&saw, 0, 1, 7).unwrap();
        assert_eq!(sd.len(), 23);
        assert!(sd.iter().all(|&v| v == 0.0));
        assert!(matches!(difference(&[1.0; 7], 0, 1, 7), Err(ArimaError::SeriesTooShort { .. })));
    }

    #[test]
    fn aicc_recomputes() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::rng::stream(4, crate::rng::Stream::ArimaMonteCarlo);
        let z: Vec<f64> = (0..80).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f = fit_order(&z, ArimaOrder::non_seasonal(1, 0, 1)).unwrap();
        assert_eq!(f.aicc, aicc(f.loglik, f.n_params(), f.n_used));
    }
}
