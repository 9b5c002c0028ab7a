//! Outer hyperparameters: the negative binomial size `theta` by profile likelihood
//! and the smoothing parameters by GCV coordinate descent on a log grid.
//!
//! Each class is scanned on the working linear model of the current converged
//! fit (fixed weights and working response); the fit is then re-converged at the
//! chosen value before the next class is scanned.

use super::design::{DesignBlocks, PenaltyClass};
use super::family;
use super::pirls::{self, gcv_score, PirlsControl, PirlsFit};
use super::solver::{Lambdas, Structure};
use super::{GamError, ModelSpec};

const GOLDEN_TOL: f64 = 1e-2;
const GCV_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaBound {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub log_likelihood: f64,
    pub at_bound: Option<ThetaBound>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambdas: Lambdas,
    pub gcv: f64,
    pub deviance: f64,
    pub edf: f64,
    pub n: usize,
}

/// Shared state for repeated inner fits on one design.
pub(crate) struct Engine<'a> {
    pub design: &'a DesignBlocks,
    pub structure: Structure,
    warm: Option<Vec<f64>>,
}

impl<'a> Engine<'a> {
    pub fn new(design: &'a DesignBlocks) -> Self {
        Self { design, structure: Structure::new(design), warm: None }
    }

    pub fn pirls(&mut self, theta: f64, lambdas: &Lambdas, final_factor: bool) -> Result<PirlsFit, GamError> {
        self.run(theta, lambdas, final_factor, false)
    }

    fn run(&mut self, theta: f64, lambdas: &Lambdas, final_factor: bool, skip_edf: bool) -> Result<PirlsFit, GamError> {
        let fit = pirls::run(
            &self.structure,
            self.design,
            theta,
            lambdas,
            PirlsControl { warm_start: self.warm.as_deref(), final_factor, skip_edf, ..Default::default() },
        )?;
        if fit.beta.iter().all(|b| b.is_finite()) {
            self.warm = Some(fit.beta.clone());
        }
        Ok(fit)
    }

    fn profile(&mut self, log_theta: f64, lambdas: &Lambdas) -> Result<f64, GamError> {
        let theta = log_theta.exp();
        let fit = self.run(theta, lambdas, false, true)?;
        Ok(family::log_likelihood(&self.design.response, &fit.mu, theta))
    }

    /// Golden-section maximum of the profile over `[a, b]` in log theta.
    fn golden(&mut self, lambdas: &Lambdas, mut a: f64, mut b: f64) -> Result<(f64, f64), GamError> {
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = self.profile(c, lambdas)?;
        let mut fd = self.profile(d, lambdas)?;
        while b - a > GOLDEN_TOL {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = self.profile(c, lambdas)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = self.profile(d, lambdas)?;
            }
        }
        Ok(if fc >= fd { (c, fc) } else { (d, fd) })
    }

    /// Re-estimates theta near a previous estimate, searching `center * e^[-1, 1]`
    /// first and the full bounds only when the optimum sits on that bracket's edge.
    pub fn refine_theta(&mut self, lambdas: &Lambdas, bounds: (f64, f64), center: f64) -> Result<ThetaEstimate, GamError> {
        let (lo, hi) = (bounds.0.ln(), bounds.1.ln());
        let (a, b) = ((center.ln() - 1.0).max(lo), (center.ln() + 1.0).min(hi));
        if !(a < b) || a <= lo || b >= hi {
            return self.estimate_theta(lambdas, bounds);
        }
        let (best, f_best) = self.golden(lambdas, a, b)?;
        if best - a < 2.0 * GOLDEN_TOL || b - best < 2.0 * GOLDEN_TOL {
            return self.estimate_theta(lambdas, bounds);
        }
        Ok(ThetaEstimate { theta: best.exp(), log_likelihood: f_best, at_bound: None, warnings: Vec::new() })
    }

    pub fn estimate_theta(&mut self, lambdas: &Lambdas, bounds: (f64, f64)) -> Result<ThetaEstimate, GamError> {
        let (lo, hi) = bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(GamError::InvalidSpec(format!("theta bounds {bounds:?}")));
        }
        let (mut best, mut f_best) = self.golden(lambdas, lo.ln(), hi.ln())?;
        let mut at_bound = None;
        let mut warnings = Vec::new();
        let f_hi = self.profile(hi.ln(), lambdas)?;
        if f_hi >= f_best {
            best = hi.ln();
            f_best = f_hi;
            at_bound = Some(ThetaBound::High);
            warnings.push(format!(
                "theta profile increases up to the upper bound {hi}; data look Poisson-like"
            ));
        } else {
            let f_lo = self.profile(lo.ln(), lambdas)?;
            if f_lo >= f_best {
                best = lo.ln();
                f_best = f_lo;
                at_bound = Some(ThetaBound::Low);
                warnings.push(format!("theta profile peaks at the lower bound {lo}"));
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let theta = match at_bound {
            Some(ThetaBound::High) => hi,
            Some(ThetaBound::Low) => lo,
            None => best.exp().clamp(lo, hi),
        };
        Ok(ThetaEstimate { theta, log_likelihood: f_best, at_bound, warnings })
    }

    /// GCV of every grid value of `class` on the working model of `fit`, holding the
    /// other smoothing parameters at `lambdas`. Singular candidates are skipped.
    fn scan_class(
        &self,
        fit: &PirlsFit,
        theta: f64,
        lambdas: &Lambdas,
        class: PenaltyClass,
        grid: &[f64],
    ) -> Vec<(f64, f64)> {
        let n = self.design.n_rows();
        let (mut w, mut z) = (vec![0.0; n], vec![0.0; n]);
        pirls::working(self.design, &fit.eta, &fit.mu, theta, &mut w, &mut z);
        let normal = self.structure.accumulate(&w, &z);
        let mut out = Vec::with_capacity(grid.len());
        // global-only classes leave the local factorisation unchanged across the grid
        let partial = if self.structure.is_global(class) {
            self.structure.partial(&normal, &self.structure.penalty(lambdas)).ok()
        } else {
            None
        };
        for &lambda in grid {
            let mut trial = lambdas.clone();
            trial.insert(class, lambda);
            let pen = self.structure.penalty(&trial);
            let factor = match &partial {
                Some(p) => self.structure.factor_from(p, &pen),
                None => self.structure.factor(&normal, &pen),
            };
            let Ok(factor) = factor else { continue };
            let beta = self.structure.solve(&factor, &normal);
            let mu = pirls::means(&self.design.linear_predictor(&beta));
            let deviance = family::deviance(&self.design.response, &mu, theta);
            let edf = match &partial {
                Some(p) => self.structure.edf_from(p, &factor, &pen),
                None => self.structure.edf(&factor, &pen),
            };
            let g = gcv_score(n, deviance, edf);
            if g.is_finite() {
                out.push((lambda, g));
            }
        }
        out
    }

    pub fn select_lambdas(
        &mut self,
        spec: &ModelSpec,
        theta: f64,
        start: &Lambdas,
    ) -> Result<LambdaSelection, GamError> {
        let classes = self.design.classes();
        let mut lambdas = start.clone();
        let mut fit = self.run(theta, &lambdas, false, true)?;
        for _sweep in 0..2 {
            for &class in &classes {
                let scores = self.scan_class(&fit, theta, &lambdas, class, spec.grid(class));
                let mut best: Option<(f64, f64)> = None;
                for (lambda, g) in scores {
                    // ascending grid: `<=` hands ties to the larger (smoother) value
                    if best.is_none_or(|(_, b)| g <= b * (1.0 + GCV_TIE)) {
                        best = Some((lambda, g));
                    }
                }
                if let Some((lambda, _)) = best {
                    if lambda != lambdas[&class] {
                        lambdas.insert(class, lambda);
                        fit = self.run(theta, &lambdas, false, true)?;
                    }
                }
            }
        }
        if fit.edf.is_nan() {
            fit = self.pirls(theta, &lambdas, false)?;
        }
        Ok(LambdaSelection {
            gcv: fit.gcv(),
            deviance: fit.deviance,
            edf: fit.edf,
            lambdas,
            n: self.design.n_rows(),
        })
    }
}

/// Profile-likelihood estimate of `theta` at fixed smoothing parameters.
pub fn estimate_theta(
    design: &DesignBlocks,
    lambdas: &Lambdas,
    bounds: (f64, f64),
) -> Result<ThetaEstimate, GamError> {
    Engine::new(design).estimate_theta(lambdas, bounds)
}

/// GCV-optimal smoothing parameters on the model's grids, at fixed `theta`.
/// Starts every class from the top of its grid.
pub fn select_lambdas(design: &DesignBlocks, spec: &ModelSpec, theta: f64) -> Result<LambdaSelection, GamError> {
    Engine::new(design).select_lambdas(spec, theta, &spec.initial_lambdas(design))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gam::design::intercept_only;
    use crate::gam::family::draw_negative_binomial;
    use crate::rng::{stream, Stream};
    use rand_distr::{Distribution, Poisson};

    fn nb_sample(n: usize, mu: f64, theta: f64, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Stream::Generator);
        (0..n).map(|_| draw_negative_binomial(&mut rng, mu, theta) as f64).collect()
    }

    #[test]
    fn recovers_theta() {
        let y = nb_sample(10_000, 20.0, 5.0, 11);
        let design = intercept_only(y, vec![0.0; 10_000]);
        let est = estimate_theta(&design, &Lambdas::new(), (0.1, 1000.0)).unwrap();
        assert!((4.0..=6.0).contains(&est.theta), "theta {}", est.theta);
        assert!(est.at_bound.is_none());
    }

    #[test]
    fn poisson_data_hits_upper_bound() {
        let mut rng = stream(12, Stream::Generator);
        let pois = Poisson::new(200.0).unwrap();
        let y: Vec<f64> = (0..10_000).map(|_| pois.sample(&mut rng)).collect();
        let design = intercept_only(y, vec![0.0; 10_000]);
        let est = estimate_theta(&design, &Lambdas::new(), (0.1, 1000.0)).unwrap();
        assert_eq!(est.theta, 1000.0);
        assert_eq!(est.at_bound, Some(ThetaBound::High));
        assert!(!est.warnings.is_empty());
    }

    #[test]
    fn theta_agrees_with_grid_search() {
        let y = nb_sample(2_000, 8.0, 2.5, 13);
        let design = intercept_only(y.clone(), vec![0.0; 2_000]);
        let est = estimate_theta(&design, &Lambdas::new(), (0.1, 1000.0)).unwrap();
        // intercept-only fit has mu = mean(y) at every theta
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let mu = vec![mean; y.len()];
        let grid = crate::gam::log_grid(0.1, 1000.0, 200);
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| family::log_likelihood(&y, &mu, *a).total_cmp(&family::log_likelihood(&y, &mu, *b)))
            .unwrap();
        assert!((est.theta / best - 1.0).abs() < 0.05, "{} vs {best}", est.theta);
    }

    #[test]
    fn refined_theta_matches_full_search() {
        let y = nb_sample(5_000, 15.0, 4.0, 14);
        let design = intercept_only(y, vec![0.0; 5_000]);
        let bounds = (0.1, 1000.0);
        let full = estimate_theta(&design, &Lambdas::new(), bounds).unwrap();
        for center in [full.theta * 0.7, full.theta * 1.5] {
            let near = Engine::new(&design).refine_theta(&Lambdas::new(), bounds, center).unwrap();
            assert!((near.theta / full.theta - 1.0).abs() < 0.02, "{} vs {}", near.theta, full.theta);
        }
        // an optimum outside the bracket falls back to the full search
        let far = Engine::new(&design).refine_theta(&Lambdas::new(), bounds, full.theta * 20.0).unwrap();
        assert!((far.theta / full.theta - 1.0).abs() < 0.02);
        let pinned = Engine::new(&design).refine_theta(&Lambdas::new(), bounds, 1000.0).unwrap();
        assert_eq!(pinned, full);
    }
}
