//! Penalized iteratively re-weighted least squares for the negative binomial log-link model.

use super::design::DesignBlocks;
use super::family;
use super::solver::{Factor, Lambdas, Structure};
use super::GamError;

pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Intercept assigned when every count is zero and the MLE runs off to minus infinity.
pub const INTERCEPT_FLOOR: f64 = -30.0;
const MAX_HALVINGS: usize = 30;

/// Result of one P-IRLS run at fixed `theta` and smoothing parameters.
#[derive(Debug, Clone)]
pub struct PirlsFit {
    pub beta: Vec<f64>,
    /// Linear predictor including the offset.
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub deviance: f64,
    pub penalized_deviance: f64,
    pub edf: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized deviance of every accepted iterate.
    pub trace: Vec<f64>,
    pub(crate) factor: Option<Factor>,
}

impl PirlsFit {
    /// Generalized cross-validation score `n D / (n - edf)^2`.
    pub fn gcv(&self) -> f64 {
        gcv_score(self.mu.len(), self.deviance, self.edf)
    }
}

pub fn gcv_score(n: usize, deviance: f64, edf: f64) -> f64 {
    let n = n as f64;
    n * deviance / ((n - edf) * (n - edf))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PirlsControl<'w> {
    pub warm_start: Option<&'w [f64]>,
    /// Refactor at the final iterate so `factor` matches the returned weights.
    pub final_factor: bool,
    /// Skip the trace computation; `edf` is then NaN.
    pub skip_edf: bool,
    pub max_iter: usize,
}

impl Default for PirlsControl<'_> {
    fn default() -> Self {
        Self { warm_start: None, final_factor: false, skip_edf: false, max_iter: DEFAULT_MAX_ITER }
    }
}

pub(crate) fn means(eta: &[f64]) -> Vec<f64> {
    eta.iter().map(|&e| family::mean(e)).collect()
}

/// Working weights and response of the linearised model at `(eta, mu)`.
pub(crate) fn working(design: &DesignBlocks, eta: &[f64], mu: &[f64], theta: f64, w: &mut [f64], z: &mut [f64]) {
    let y = &design.response;
    for i in 0..y.len() {
        w[i] = family::working_weight(mu[i], theta);
        z[i] = eta[i] - design.offset[i] + (y[i] - mu[i]) / mu[i];
    }
}

pub(crate) fn run(
    structure: &Structure,
    design: &DesignBlocks,
    theta: f64,
    lambdas: &Lambdas,
    control: PirlsControl<'_>,
) -> Result<PirlsFit, GamError> {
    let y = &design.response;
    let pen = structure.penalty(lambdas);
    let p = structure.n_cols();

    if y.iter().all(|&v| v == 0.0) {
        let mut beta = vec![0.0; p];
        beta[0] = INTERCEPT_FLOOR;
        let eta = design.linear_predictor(&beta);
        let mu = means(&eta);
        let deviance = family::deviance(y, &mu, theta);
        return Ok(PirlsFit {
            beta,
            eta,
            mu,
            deviance,
            penalized_deviance: deviance,
            edf: 1.0,
            iterations: 0,
            converged: false,
            trace: vec![deviance],
            factor: None,
        });
    }

    let pen_dev = |beta: &[f64], mu: &[f64]| {
        family::deviance(y, mu, theta) + structure.quadratic(&pen, beta)
    };

    let (mut beta, mut eta, mut mu, mut pd_old) = match control.warm_start {
        Some(b) => {
            let eta = design.linear_predictor(b);
            let mu = means(&eta);
            let pd = pen_dev(b, &mu);
            (b.to_vec(), eta, mu, pd)
        }
        None => {
            let mu: Vec<f64> = y.iter().map(|&v| v + 0.1).collect();
            let eta = mu.iter().map(|m| m.ln()).collect();
            (vec![0.0; p], eta, mu, f64::INFINITY)
        }
    };

    let mut trace = Vec::new();
    let mut factor = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut w = vec![0.0; y.len()];
    let mut z = vec![0.0; y.len()];
    while iterations < control.max_iter {
        iterations += 1;
        working(design, &eta, &mu, theta, &mut w, &mut z);
        let normal = structure.accumulate(&w, &z);
        let f = structure.factor(&normal, &pen)?;
        let mut candidate = structure.solve(&f, &normal);
        factor = Some(f);

        let mut cand_eta = design.linear_predictor(&candidate);
        let mut cand_mu = means(&cand_eta);
        let mut pd = pen_dev(&candidate, &cand_mu);
        let mut halvings = 0;
        while !(pd <= pd_old) && pd_old.is_finite() && halvings < MAX_HALVINGS {
            for (c, b) in candidate.iter_mut().zip(&beta) {
                *c = 0.5 * (*c + b);
            }
            cand_eta = design.linear_predictor(&candidate);
            cand_mu = means(&cand_eta);
            pd = pen_dev(&candidate, &cand_mu);
            halvings += 1;
        }
        if !(pd <= pd_old) && pd_old.is_finite() {
            // no descent direction left at working precision
            converged = (pd - pd_old).abs() <= 1e-6 * (0.1 + pd_old.abs());
            break;
        }
        let change = (pd - pd_old).abs() / (0.1 + pd.abs());
        beta = candidate;
        eta = cand_eta;
        mu = cand_mu;
        pd_old = pd;
        trace.push(pd);
        if change < DEFAULT_TOLERANCE {
            converged = true;
            break;
        }
    }

    if control.final_factor || factor.is_none() {
        working(design, &eta, &mu, theta, &mut w, &mut z);
        let normal = structure.accumulate(&w, &z);
        factor = Some(structure.factor(&normal, &pen)?);
    }
    let f = factor.expect("factorised at least once");
    let edf = if control.skip_edf { f64::NAN } else { structure.edf(&f, &pen) };
    let deviance = family::deviance(y, &mu, theta);
    if !converged {
        log::warn!("P-IRLS did not converge in {iterations} iterations");
    }
    Ok(PirlsFit {
        beta,
        eta,
        mu,
        deviance,
        penalized_deviance: pd_old,
        edf,
        iterations,
        converged,
        trace,
        factor: Some(f),
    })
}

/// Fits the model at fixed `theta` and smoothing parameters.
pub fn fit_pirls(design: &DesignBlocks, theta: f64, lambdas: &Lambdas) -> Result<PirlsFit, GamError> {
    let structure = Structure::new(design);
    run(&structure, design, theta, lambdas, PirlsControl { final_factor: true, ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gam::design::intercept_only;
    use crate::gam::family::draw_negative_binomial;
    use crate::rng::{stream, Stream};

    #[test]
    fn intercept_matches_closed_form() {
        let mut rng = stream(3, Stream::Generator);
        let pop = 250_000.0f64;
        let y: Vec<f64> = (0..400).map(|_| draw_negative_binomial(&mut rng, 35.0, 4.0) as f64).collect();
        let design = intercept_only(y.clone(), vec![pop.ln(); y.len()]);
        let fit = fit_pirls(&design, 4.0, &Lambdas::new()).unwrap();
        let expected = (y.iter().sum::<f64>() / (pop * y.len() as f64)).ln();
        assert!(fit.converged);
        assert!((fit.beta[0] - expected).abs() < 1e-8, "{} vs {expected}", fit.beta[0]);
        assert!((fit.edf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_response_hits_floor() {
        let design = intercept_only(vec![0.0; 50], vec![10.0; 50]);
        let fit = fit_pirls(&design, 4.0, &Lambdas::new()).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.beta[0], INTERCEPT_FLOOR);
        assert!(fit.deviance.is_finite());
    }

    #[test]
    fn gcv_definition() {
        assert!((gcv_score(100, 50.0, 10.0) - 100.0 * 50.0 / 8100.0).abs() < 1e-15);
    }
}
