use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use flu_hgam::arima::{self, ArimaFit};
use flu_hgam::data::PanelPolicy;
use flu_hgam::forecast::{ForecastSet, Level, QUANTILES};
use flu_hgam::gam::FittedGAM;
use flu_hgam::harness::eval::{forecast_origin, gam_forecast, DataBundle};
use flu_hgam::harness::{
    axis_range_ratio, generate_synthetic, ingest, run_rolling_evaluation, run_tuning_sweep, weekly_dates, HarnessError,
    RunConfig, SyntheticSpec,
};
use flu_hgam::io;
use flu_hgam::scoring::{self, QuantileForecast, ScoreReport};

fn harness_err(e: HarnessError) -> PyErr {
    if e.exit_code() == 1 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    s.parse().map_err(|e| PyValueError::new_err(format!("bad date {s:?}: {e}")))
}

fn parse_levels(names: &[String]) -> PyResult<Vec<Level>> {
    names.iter().map(|s| s.parse().map_err(PyValueError::new_err)).collect()
}

/// Run settings shared by forecasting, evaluation and the sweep.
#[pyclass(module = "flu_hgam_py", name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    #[pyo3(get, set)]
    t_length: usize,
    #[pyo3(get, set)]
    horizon: usize,
    #[pyo3(get, set)]
    td_nat: f64,
    #[pyo3(get, set)]
    td_grp: f64,
    #[pyo3(get, set)]
    seed: u64,
    #[pyo3(get, set)]
    n_samples: usize,
    /// ISO dates; empty means every feasible weekly origin.
    #[pyo3(get, set)]
    forecast_dates: Vec<String>,
    #[pyo3(get, set)]
    arima_levels: Vec<String>,
    #[pyo3(get, set)]
    out_dir: Option<PathBuf>,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (t_length=63, horizon=14, td_nat=5.0, td_grp=5.0, seed=1, n_samples=2000, forecast_dates=Vec::new(), arima_levels=None, out_dir=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        t_length: usize,
        horizon: usize,
        td_nat: f64,
        td_grp: f64,
        seed: u64,
        n_samples: usize,
        forecast_dates: Vec<String>,
        arima_levels: Option<Vec<String>>,
        out_dir: Option<PathBuf>,
    ) -> Self {
        let arima_levels =
            arima_levels.unwrap_or_else(|| Level::ALL.iter().map(|l| l.as_str().to_string()).collect());
        Self { t_length, horizon, td_nat, td_grp, seed, n_samples, forecast_dates, arima_levels, out_dir }
    }
}

impl PyRunConfig {
    fn build(&self, bundle: &DataBundle) -> PyResult<RunConfig> {
        let forecast_dates = if self.forecast_dates.is_empty() {
            weekly_dates(&bundle.panel, self.t_length, self.horizon)
        } else {
            self.forecast_dates.iter().map(|d| parse_date(d)).collect::<PyResult<_>>()?
        };
        Ok(RunConfig {
            t_length: self.t_length,
            horizon: self.horizon,
            t_d_national: self.td_nat,
            t_d_group: self.td_grp,
            forecast_dates,
            taus: QUANTILES.to_vec(),
            seed: self.seed,
            n_samples: self.n_samples,
            arima_levels: parse_levels(&self.arima_levels)?,
            out_dir: self.out_dir.clone(),
        })
    }
}

fn config_or_default(config: Option<PyRunConfig>) -> PyRunConfig {
    config.unwrap_or_else(|| PyRunConfig::new(63, 14, 5.0, 5.0, 1, 2000, Vec::new(), None, None))
}

/// Quantile forecasts of one series.
#[pyclass(module = "flu_hgam_py", name = "ForecastSet", frozen)]
struct PyForecastSet(ForecastSet);

#[pymethods]
impl PyForecastSet {
    #[getter]
    fn level(&self) -> &'static str {
        self.0.level.as_str()
    }

    #[getter]
    fn series_id(&self) -> &str {
        &self.0.series_id
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.0.dates.iter().map(ToString::to_string).collect()
    }

    #[getter]
    fn taus(&self) -> Vec<f64> {
        self.0.taus.clone()
    }

    /// `values[k][h]` is quantile `taus[k]` on `dates[h]`.
    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.0.values.clone()
    }

    fn median(&self) -> Vec<f64> {
        self.0.median().to_vec()
    }

    /// Joint sample paths `[sample][step]`, when kept.
    fn sample_paths(&self) -> Option<Vec<Vec<u64>>> {
        self.0.sample_paths.clone()
    }

    fn __repr__(&self) -> String {
        format!("ForecastSet({}, {:?}, {} days)", self.0.level.as_str(), self.0.series_id, self.0.dates.len())
    }
}

fn wrap_sets(sets: Vec<ForecastSet>) -> Vec<PyForecastSet> {
    sets.into_iter().map(PyForecastSet).collect()
}

/// A fitted hierarchical GAM.
#[pyclass(module = "flu_hgam_py", name = "FittedModel", frozen)]
struct PyFittedModel(FittedGAM);

#[pymethods]
impl PyFittedModel {
    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    #[getter]
    fn edf(&self) -> f64 {
        self.0.edf
    }

    #[getter]
    fn deviance(&self) -> f64 {
        self.0.deviance
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.0.intercept()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    #[getter]
    fn unit_ids(&self) -> Vec<String> {
        self.0.layout.unit_ids().to_vec()
    }

    /// Fitted means over the window, one list per unit.
    fn fitted_means(&self) -> Vec<Vec<f64>> {
        let t = self.0.layout.t_length();
        self.0.fitted_means().chunks(t).map(<[f64]>::to_vec).collect()
    }

    /// Expected count of `unit` on day index `day` (0 is the window's first day).
    fn mean(&self, unit: usize, day: i64) -> PyResult<f64> {
        if unit >= self.0.layout.n_units() {
            return Err(PyValueError::new_err(format!("unit index {unit} out of range")));
        }
        Ok(self.0.mean(unit, day))
    }
}

/// A fitted ARIMA model of one log1p-transformed count series.
#[pyclass(module = "flu_hgam_py", name = "ArimaModel", frozen)]
struct PyArimaModel(ArimaFit);

#[pymethods]
impl PyArimaModel {
    #[getter]
    fn order(&self) -> String {
        self.0.order.to_string()
    }

    #[getter]
    fn aicc(&self) -> f64 {
        self.0.aicc
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.0.sigma2
    }

    #[getter]
    fn fallback(&self) -> bool {
        self.0.fallback
    }

    /// Back-transformed quantiles `[k][h]` for `taus`.
    #[pyo3(signature = (horizon=14, taus=None))]
    fn forecast(&self, horizon: usize, taus: Option<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        if horizon == 0 {
            return Err(PyValueError::new_err("horizon must be at least 1"));
        }
        let taus = taus.unwrap_or_else(|| QUANTILES.to_vec());
        if taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(PyValueError::new_err("quantile levels must lie in (0, 1)"));
        }
        Ok(arima::forecast_arima(&self.0, horizon, &taus).quantiles)
    }

    fn __repr__(&self) -> String {
        format!("ArimaModel({}, aicc={:.3})", self.0.order, self.0.aicc)
    }
}

/// Select and fit a seasonal ARIMA to daily counts.
#[pyfunction]
fn fit_arima(counts: Vec<f64>) -> PyResult<PyArimaModel> {
    arima::fit_counts(&counts).map(PyArimaModel).map_err(value_err)
}

fn report_dict<'py>(py: Python<'py>, r: &ScoreReport) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("model", &r.model)?;
    d.set_item("level", &r.level)?;
    d.set_item("horizon", &r.horizon)?;
    d.set_item("interval_score", r.interval_score)?;
    d.set_item("underprediction", r.underprediction)?;
    d.set_item("overprediction", r.overprediction)?;
    d.set_item("mae", r.mae)?;
    d.set_item("coverage_50", r.coverage_50)?;
    d.set_item("coverage_90", r.coverage_90)?;
    d.set_item("bias", r.bias)?;
    d.set_item("n", r.n)?;
    Ok(d)
}

/// Panel, geography and adjacency checked against each other.
#[pyclass(module = "flu_hgam_py", name = "Dataset", frozen)]
struct PyDataset(DataBundle);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (panel, geo, adj, strict=false))]
    fn load(panel: PathBuf, geo: PathBuf, adj: PathBuf, strict: bool) -> PyResult<Self> {
        let policy = PanelPolicy { strict, ..Default::default() };
        ingest(&panel, &geo, &adj, policy).map(Self).map_err(harness_err)
    }

    #[staticmethod]
    #[pyo3(signature = (seed=1, n_units=42, n_regions=7, n_days=119, theta=10.0))]
    fn synthetic(seed: u64, n_units: usize, n_regions: usize, n_days: usize, theta: f64) -> PyResult<Self> {
        if n_units == 0 || n_regions == 0 || n_regions > n_units || !(theta > 0.0) || n_days == 0 {
            return Err(PyValueError::new_err("need 1 <= n_regions <= n_units, n_days >= 1 and theta > 0"));
        }
        let spec = SyntheticSpec { seed, n_units, n_regions, n_days, theta, ..Default::default() };
        let data = generate_synthetic(&spec);
        DataBundle::new(data.panel, data.geo, &data.graph.pairs(), Vec::new()).map(Self).map_err(harness_err)
    }

    /// Write panel.csv, geo.csv and adj.csv into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        let b = &self.0;
        io::write_panel(&dir.join("panel.csv"), &b.panel).map_err(value_err)?;
        io::write_geography(&dir.join("geo.csv"), b.geo.units()).map_err(value_err)?;
        io::write_adjacency(&dir.join("adj.csv"), &b.graph.pairs()).map_err(value_err)
    }

    #[getter]
    fn unit_ids(&self) -> Vec<String> {
        self.0.panel.units().to_vec()
    }

    #[getter]
    fn regions(&self) -> Vec<String> {
        self.0.geo.regions().to_vec()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        (0..self.0.panel.n_days()).map(|d| self.0.panel.date(d).to_string()).collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.warnings.clone()
    }

    fn counts(&self, unit_id: &str) -> PyResult<Vec<u64>> {
        let u = self.0.panel.unit_index(unit_id).ok_or_else(|| PyValueError::new_err(format!("unknown unit {unit_id:?}")))?;
        Ok(self.0.panel.series(u).to_vec())
    }

    /// Weekly origins with a full window and a full horizon.
    #[pyo3(signature = (t_length=63, horizon=14))]
    fn weekly_dates(&self, t_length: usize, horizon: usize) -> Vec<String> {
        weekly_dates(&self.0.panel, t_length, horizon).iter().map(ToString::to_string).collect()
    }

    /// Fit the GAM on the window ending at `origin` (default: last day) and
    /// forecast every unit, region and the nation.
    #[pyo3(signature = (origin=None, config=None))]
    fn forecast(
        &self,
        py: Python<'_>,
        origin: Option<&str>,
        config: Option<PyRunConfig>,
    ) -> PyResult<(Vec<PyForecastSet>, PyFittedModel)> {
        let origin = origin.map(parse_date).transpose()?.unwrap_or_else(|| self.0.panel.end());
        let mut cfg = config_or_default(config);
        cfg.forecast_dates = vec![origin.to_string()];
        let cfg = cfg.build(&self.0)?;
        let (sets, fit) = py.detach(|| gam_forecast(&self.0, &cfg, origin)).map_err(harness_err)?;
        Ok((wrap_sets(sets), PyFittedModel(fit)))
    }

    /// GAM and ARIMA forecasts from one origin.
    #[pyo3(signature = (origin=None, config=None))]
    fn forecast_both(
        &self,
        py: Python<'_>,
        origin: Option<&str>,
        config: Option<PyRunConfig>,
    ) -> PyResult<(Vec<PyForecastSet>, Vec<PyForecastSet>)> {
        let origin = origin.map(parse_date).transpose()?.unwrap_or_else(|| self.0.panel.end());
        let cfg = config_or_default(config).build(&self.0)?;
        let r = py.detach(|| forecast_origin(&self.0, &cfg, origin)).map_err(harness_err)?;
        Ok((wrap_sets(r.gam), wrap_sets(r.arima)))
    }

    /// Rolling evaluation; returns the pooled score rows as dicts.
    #[pyo3(signature = (config=None))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        config: Option<PyRunConfig>,
    ) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
        let cfg = config_or_default(config).build(&self.0)?;
        let eval = py.detach(|| run_rolling_evaluation(&self.0, &cfg)).map_err(harness_err)?;
        eval.scores.iter().map(|r| report_dict(py, r)).collect()
    }

    /// National scores over a t_d grid, as `(td_nat, td_grp, metrics or None)`,
    /// plus the national-to-group range ratio of the interval score.
    #[pyo3(signature = (td_nat_grid, td_grp_grid, config=None))]
    #[allow(clippy::type_complexity)]
    fn sweep(
        &self,
        py: Python<'_>,
        td_nat_grid: Vec<f64>,
        td_grp_grid: Vec<f64>,
        config: Option<PyRunConfig>,
    ) -> PyResult<(Vec<(f64, f64, Option<(f64, f64, f64, f64)>)>, Option<f64>)> {
        let mut cfg = config_or_default(config).build(&self.0)?;
        cfg.out_dir = None;
        let rows = py.detach(|| run_tuning_sweep(&self.0, &cfg, &td_nat_grid, &td_grp_grid)).map_err(harness_err)?;
        let ratio = axis_range_ratio(&rows, |m| m.interval_score);
        let rows = rows
            .iter()
            .map(|r| (r.td_nat, r.td_grp, r.metrics.map(|m| (m.interval_score, m.mae, m.bias, m.coverage_90))))
            .collect();
        Ok((rows, ratio))
    }
}

fn quantiles(q: Vec<f64>) -> PyResult<QuantileForecast> {
    let q: [f64; 5] = q.try_into().map_err(|_| PyValueError::new_err("expected five quantiles q05..q95"))?;
    QuantileForecast::new(q).map_err(value_err)
}

/// Weighted interval score of `[q05, q25, q50, q75, q95]` at `y`, as
/// `(score, sharpness, underprediction, overprediction)`.
#[pyfunction]
fn wis(q: Vec<f64>, y: f64) -> PyResult<(f64, f64, f64, f64)> {
    let s = scoring::wis(&quantiles(q)?, y).map_err(value_err)?;
    Ok((s.score, s.sharpness, s.underprediction, s.overprediction))
}

/// Interval score of the central `(1 - alpha)` interval `[lower, upper]`.
#[pyfunction]
fn interval_score(lower: f64, upper: f64, alpha: f64, y: f64) -> PyResult<f64> {
    scoring::interval_score(lower, upper, alpha, y).map(|s| s.score).map_err(value_err)
}

#[pyfunction]
fn pinball(q: f64, tau: f64, y: f64) -> f64 {
    scoring::pinball(q, tau, y)
}

#[pyfunction]
fn basis_dimension(t_length: usize, t_d: f64) -> PyResult<usize> {
    flu_hgam::spline::basis_dimension(flu_hgam::spline::BasisConfig { t_length, t_d }).map_err(value_err)
}

#[pymodule]
fn flu_hgam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyForecastSet>()?;
    m.add_class::<PyFittedModel>()?;
    m.add_class::<PyArimaModel>()?;
    m.add_function(wrap_pyfunction!(fit_arima, m)?)?;
    m.add_function(wrap_pyfunction!(wis, m)?)?;
    m.add_function(wrap_pyfunction!(interval_score, m)?)?;
    m.add_function(wrap_pyfunction!(pinball, m)?)?;
    m.add_function(wrap_pyfunction!(basis_dimension, m)?)?;
    m.add("QUANTILES", QUANTILES.to_vec())?;
    Ok(())
}
