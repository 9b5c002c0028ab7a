//! Negative binomial with log link, parameterised by its mean `mu` and size `theta`
//! so that `Var(y) = mu + mu^2 / theta`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

/// Smallest fitted mean used anywhere in the fit.
pub const MU_FLOOR: f64 = 1e-10;
const ETA_CAP: f64 = 700.0;

#[inline]
pub fn mean(eta: f64) -> f64 {
    eta.min(ETA_CAP).exp().max(MU_FLOOR)
}

#[inline]
pub fn variance(mu: f64, theta: f64) -> f64 {
    mu + mu * mu / theta
}

/// Fisher working weight for the log link, `mu^2 / V(mu)`.
#[inline]
pub fn working_weight(mu: f64, theta: f64) -> f64 {
    mu / (1.0 + mu / theta)
}

#[inline]
pub fn unit_deviance(y: f64, mu: f64, theta: f64) -> f64 {
    let mu = mu.max(MU_FLOOR);
    let tail = 2.0 * (y + theta) * ((y - mu) / (mu + theta)).ln_1p();
    if y > 0.0 {
        2.0 * y * (y / mu).ln() - tail
    } else {
        -tail
    }
}

pub fn deviance(y: &[f64], mu: &[f64], theta: f64) -> f64 {
    y.iter().zip(mu).map(|(&y, &m)| unit_deviance(y, m, theta)).sum()
}

#[inline]
pub fn log_density(y: f64, mu: f64, theta: f64) -> f64 {
    let mu = mu.max(MU_FLOOR);
    let log_p = (mu / theta).ln_1p();
    ln_gamma(y + theta) - ln_gamma(theta) - ln_gamma(y + 1.0) - theta * log_p
        + y * (mu.ln() - theta.ln() - log_p)
}

pub fn log_likelihood(y: &[f64], mu: &[f64], theta: f64) -> f64 {
    y.iter().zip(mu).map(|(&y, &m)| log_density(y, m, theta)).sum()
}

/// Means and Gamma rates are capped here so that wild coefficient draws cannot
/// overflow the Poisson sampler or later integer sums.
pub const MAX_RATE: f64 = 1e15;

/// Draws one negative binomial count with mean `mu` and size `theta`.
pub fn draw_negative_binomial<R: Rng + ?Sized>(rng: &mut R, mu: f64, theta: f64) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    let mu = mu.min(MAX_RATE);
    let rate = Gamma::new(theta, mu / theta).expect("positive shape and scale").sample(rng);
    if !(rate > 0.0) {
        return 0;
    }
    Poisson::new(rate.min(MAX_RATE)).expect("positive finite rate").sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviance_zero_at_saturation() {
        for y in [0.0, 1.0, 17.0] {
            assert!(unit_deviance(y, y.max(MU_FLOOR), 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deviance_is_twice_loglik_gap() {
        let (y, mu, theta) = (7.0, 4.2, 2.5);
        let gap = 2.0 * (log_density(y, y, theta) - log_density(y, mu, theta));
        assert!((gap - unit_deviance(y, mu, theta)).abs() < 1e-10);
        let gap0 = 2.0 * (log_density(0.0, MU_FLOOR, theta) - log_density(0.0, mu, theta));
        assert!((gap0 - unit_deviance(0.0, mu, theta)).abs() < 1e-8);
    }

    #[test]
    fn density_sums_to_one() {
        let total: f64 = (0..400).map(|y| log_density(y as f64, 12.0, 1.7).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
