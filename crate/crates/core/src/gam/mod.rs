//! Hierarchical negative binomial GAM.
//!
//! ```text
//! log E[y_i(t)] = b0 + f_nat(t) + f_unit_i(t) + f_mrf(i) + d_region(i)
//!                 + d_dow(t),region(i) + d_dow(t),unit(i) + log p_i
//! ```
//!
//! Smooths are thin-plate regression splines; the unit smooths share one smoothing
//! parameter; the MRF intercept is penalized by the adjacency-graph Laplacian; the
//! remaining effects are ridge-penalized random effects. Fitting is P-IRLS at fixed
//! `(theta, lambda)`, wrapped in GCV smoothing-parameter selection and profile
//! likelihood for `theta`.

mod design;
pub mod family;
mod linalg;
mod pirls;
mod selection;
mod solver;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use thiserror::Error;

pub use design::{assemble_design, DesignBlock, DesignBlocks, DesignLayout, PenaltyClass};
pub use pirls::{fit_pirls, gcv_score, PirlsFit, INTERCEPT_FLOOR};
pub use selection::{estimate_theta, select_lambdas, LambdaSelection, ThetaBound, ThetaEstimate};
pub use solver::{CovarianceSampler, Lambdas};

use crate::data::{AdjacencyGraph, AdmissionsPanel, CalendarFeatures, DataError, Geography};
use crate::spline::BasisError;
use selection::Engine;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GamError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("fitting window has {found} days, model expects {expected}")]
    WindowMismatch { expected: usize, found: usize },
    #[error("calendar does not start on the first day of the panel")]
    CalendarMismatch,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("penalized normal equations are singular")]
    SingularSystem,
    #[error("model fit has not converged")]
    NotConverged,
}

/// Model structure and hyperparameter search ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub t_length: usize,
    pub t_d_national: f64,
    pub t_d_group: f64,
    pub horizon: usize,
    pub theta_bounds: (f64, f64),
    /// Ascending smoothing-parameter grid per penalty class.
    pub lambda_grid: BTreeMap<PenaltyClass, Vec<f64>>,
}

/// `n` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl Default for ModelSpec {
    fn default() -> Self {
        let grid = log_grid(1e-4, 1e4, 13);
        Self {
            t_length: 63,
            t_d_national: 5.0,
            t_d_group: 5.0,
            horizon: 14,
            theta_bounds: (0.1, 1000.0),
            lambda_grid: PenaltyClass::ALL.iter().map(|&c| (c, grid.clone())).collect(),
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), GamError> {
        if self.horizon < 1 {
            return Err(GamError::InvalidSpec("horizon must be at least 1".into()));
        }
        let (lo, hi) = self.theta_bounds;
        if !(lo > 0.0 && lo < hi) {
            return Err(GamError::InvalidSpec(format!("theta bounds ({lo}, {hi})")));
        }
        for class in PenaltyClass::ALL {
            let grid = self.grid(class);
            if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0)) {
                return Err(GamError::InvalidSpec(format!("lambda grid for {class}")));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GamError::InvalidSpec(format!("lambda grid for {class} is not sorted")));
            }
        }
        Ok(())
    }

    pub fn grid(&self, class: PenaltyClass) -> &[f64] {
        self.lambda_grid.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest (smoothest) grid value for every class present in `design`.
    pub fn initial_lambdas(&self, design: &DesignBlocks) -> Lambdas {
        design
            .classes()
            .into_iter()
            .map(|c| {
                let g = self.grid(c);
                (c, g[g.len() - 1])
            })
            .collect()
    }
}

/// A converged (or flagged) model fit with everything needed to forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedGAM {
    pub layout: DesignLayout,
    /// First day of the fitting window.
    pub start: NaiveDate,
    pub beta: Vec<f64>,
    /// Inverse penalized Fisher information at the fit.
    pub cov_beta: DMatrix<f64>,
    pub sampler: CovarianceSampler,
    pub theta: f64,
    pub lambdas: Lambdas,
    pub deviance: f64,
    pub edf: f64,
    pub gcv: f64,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

impl FittedGAM {
    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    pub fn n_cols(&self) -> usize {
        self.beta.len()
    }

    /// Last in-sample day index.
    pub fn t_max(&self) -> i64 {
        self.layout.t_length as i64 - 1
    }

    /// Linear predictor for `unit` on day index `day` (offset included) under `beta`.
    pub fn linear_predictor_with(&self, beta: &[f64], unit: usize, day: i64) -> f64 {
        self.layout.offset(unit)
            + self.layout.row(unit, day).iter().map(|&(j, v)| v * beta[j]).sum::<f64>()
    }

    pub fn mean(&self, unit: usize, day: i64) -> f64 {
        family::mean(self.linear_predictor_with(&self.beta, unit, day))
    }

    /// Fitted means over the window, unit-major.
    pub fn fitted_means(&self) -> Vec<f64> {
        let t = self.layout.t_length as i64;
        (0..self.layout.n_units()).flat_map(|u| (0..t).map(move |d| (u, d))).map(|(u, d)| self.mean(u, d)).collect()
    }

    /// Day-of-week effect (regional plus unit deviation) of each unit.
    pub fn unit_dow_effects(&self, unit: usize) -> [f64; 7] {
        let region = self.layout.unit_region[unit];
        let reg = self.layout.dow_region_columns(region);
        let mut out = [0.0; 7];
        for (d, o) in out.iter_mut().enumerate() {
            *o = self.beta[reg.start + d];
            if let Some(u) = self.layout.dow_unit_columns(unit) {
                *o += self.beta[u.start + d];
            }
        }
        out
    }

    pub fn region_dow_effects(&self, region: usize) -> [f64; 7] {
        let reg = self.layout.dow_region_columns(region);
        std::array::from_fn(|d| self.beta[reg.start + d])
    }
}

fn finish(
    engine: &mut Engine<'_>,
    start: NaiveDate,
    theta: f64,
    lambdas: Lambdas,
    mut warnings: Vec<String>,
) -> Result<FittedGAM, GamError> {
    let fit = engine.pirls(theta, &lambdas, true)?;
    let factor = fit.factor.as_ref().ok_or(GamError::SingularSystem)?;
    let cov_beta = engine.structure.covariance(factor);
    let sampler = engine.structure.sampler(factor);
    warnings.extend(engine.design.warnings.iter().cloned());
    Ok(FittedGAM {
        layout: engine.design.layout.clone(),
        start,
        gcv: fit.gcv(),
        beta: fit.beta,
        cov_beta,
        sampler,
        theta,
        lambdas,
        deviance: fit.deviance,
        edf: fit.edf,
        converged: fit.converged,
        iterations: fit.iterations,
        warnings,
    })
}

/// Fits an assembled design at fixed `theta` and smoothing parameters.
pub fn fit_fixed(
    design: &DesignBlocks,
    start: NaiveDate,
    theta: f64,
    lambdas: &Lambdas,
) -> Result<FittedGAM, GamError> {
    let mut engine = Engine::new(design);
    finish(&mut engine, start, theta, lambdas.clone(), Vec::new())
}

/// Fits an assembled design with `theta` and the smoothing parameters estimated:
/// a preliminary `theta` at the smoothest grid values, GCV selection at that `theta`,
/// then `theta` again (near the first value) at the selected smoothing, then the final fit.
pub fn fit_design(design: &DesignBlocks, start: NaiveDate, spec: &ModelSpec) -> Result<FittedGAM, GamError> {
    spec.validate()?;
    let mut engine = Engine::new(design);
    let initial = spec.initial_lambdas(design);
    let mut warnings = Vec::new();
    let first = engine.estimate_theta(&initial, spec.theta_bounds)?;
    let selection = engine.select_lambdas(spec, first.theta, &initial)?;
    let theta = engine.refine_theta(&selection.lambdas, spec.theta_bounds, first.theta)?;
    warnings.extend(theta.warnings);
    finish(&mut engine, start, theta.theta, selection.lambdas, warnings)
}

/// Assembles and fits the full model on one window.
pub fn fit(
    panel: &AdmissionsPanel,
    geo: &Geography,
    graph: &AdjacencyGraph,
    cal: &CalendarFeatures,
    spec: &ModelSpec,
) -> Result<FittedGAM, GamError> {
    let design = assemble_design(panel, geo, graph, cal, spec)?;
    fit_design(&design, panel.start(), spec)
}
