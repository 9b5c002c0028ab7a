//! Data ingestion, rolling out-of-sample evaluation of the GAM against the ARIMA
//! baseline, and the smoothing-dimension sweep.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use thiserror::Error;

use crate::arima::{self, ArimaError};
use crate::data::{build_adjacency, validate_panel, AdjacencyGraph, AdmissionsPanel, CalendarFeatures, DataError, Geography, PanelPolicy};
use crate::forecast::{forecast_hierarchy, sample_paths, ForecastError, ForecastSet, Level, SamplerConfig, UnitPaths, QUANTILES};
use crate::gam::{self, GamError, ModelSpec};
use crate::io::{self, fmt_num, IoError};
use crate::scoring::{summarize, QuantileForecast, ScoreError, ScoreReport};
use crate::spline::{basis_dimension, BasisConfig, BasisError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("unknown ids: {}", .0.join(", "))]
    Referential(Vec<String>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("forecast date {0} is infeasible: {1}")]
    InfeasibleDate(NaiveDate, String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Gam(#[from] GamError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Arima(#[from] ArimaError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl HarnessError {
    /// 1 for invalid input or configuration, 2 for model failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Gam(_) | HarnessError::Forecast(_) | HarnessError::Arima(_) => 2,
            _ => 1,
        }
    }
}

/// Panel, geography and adjacency restricted to the same units, in panel order.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    pub panel: AdmissionsPanel,
    pub geo: Geography,
    pub graph: AdjacencyGraph,
    pub warnings: Vec<String>,
}

impl DataBundle {
    /// Checks cross-references and builds the adjacency graph over the units that
    /// survive panel validation. Adjacency pairs touching dropped units are discarded.
    pub fn new(
        panel: AdmissionsPanel,
        geo: Geography,
        pairs: &[(String, String)],
        mut warnings: Vec<String>,
    ) -> Result<Self, HarnessError> {
        let orphans: Vec<String> = panel.units().iter().filter(|u| geo.unit_index(u).is_none()).cloned().collect();
        if !orphans.is_empty() {
            return Err(HarnessError::Referential(orphans));
        }
        let mut unknown: Vec<String> = pairs
            .iter()
            .flat_map(|(a, b)| [a, b])
            .filter(|id| geo.unit_index(id).is_none())
            .cloned()
            .collect();
        unknown.sort();
        unknown.dedup();
        if !unknown.is_empty() {
            return Err(HarnessError::Referential(unknown));
        }
        let surviving: HashSet<&str> = panel.units().iter().map(String::as_str).collect();
        let kept: Vec<(String, String)> = pairs
            .iter()
            .filter(|(a, b)| surviving.contains(a.as_str()) && surviving.contains(b.as_str()))
            .cloned()
            .collect();
        if kept.len() < pairs.len() {
            warnings.push(format!("{} adjacency pairs reference units outside the panel", pairs.len() - kept.len()));
        }
        let geo = geo.subset(panel.units())?;
        let graph = build_adjacency(geo.units(), &kept)?;
        Ok(Self { panel, geo, graph, warnings })
    }
}

/// Reads and cross-validates the three input files.
pub fn ingest(panel: &Path, geo: &Path, adjacency: &Path, policy: PanelPolicy) -> Result<DataBundle, HarnessError> {
    let rows = io::read_panel(panel)?;
    let validated = validate_panel(&rows, policy)?;
    let geo = Geography::new(io::read_geography(geo)?)?;
    let pairs = io::read_adjacency(adjacency)?;
    DataBundle::new(validated.panel, geo, &pairs, validated.warnings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_length: usize,
    pub horizon: usize,
    pub t_d_national: f64,
    pub t_d_group: f64,
    /// Forecast origins: the last observed day of each fitting window.
    pub forecast_dates: Vec<NaiveDate>,
    pub taus: Vec<f64>,
    pub seed: u64,
    pub n_samples: usize,
    /// Levels at which ARIMA baselines are fitted; empty skips the baseline.
    pub arima_levels: Vec<Level>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_length: 63,
            horizon: 14,
            t_d_national: 5.0,
            t_d_group: 5.0,
            forecast_dates: Vec::new(),
            taus: QUANTILES.to_vec(),
            seed: 1,
            n_samples: 2000,
            arima_levels: Level::ALL.to_vec(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            t_length: self.t_length,
            t_d_national: self.t_d_national,
            t_d_group: self.t_d_group,
            horizon: self.horizon,
            ..ModelSpec::default()
        }
    }

    fn validate(&self, panel: &AdmissionsPanel) -> Result<(), HarnessError> {
        if self.horizon < 1 {
            return Err(HarnessError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.n_samples < 1 {
            return Err(HarnessError::InvalidConfig("n_samples must be at least 1".into()));
        }
        if QUANTILES.iter().any(|q| !self.taus.iter().any(|t| (t - q).abs() < 1e-12)) {
            return Err(HarnessError::InvalidConfig("quantile set must include 0.05, 0.25, 0.5, 0.75, 0.95".into()));
        }
        for td in [self.t_d_national, self.t_d_group] {
            basis_dimension(BasisConfig { t_length: self.t_length, t_d: td })?;
        }
        if self.forecast_dates.is_empty() {
            return Err(HarnessError::InvalidConfig("no forecast dates".into()));
        }
        for &date in &self.forecast_dates {
            origin_index(panel, date, self.t_length)?;
        }
        Ok(())
    }
}

fn origin_index(panel: &AdmissionsPanel, date: NaiveDate, t_length: usize) -> Result<usize, HarnessError> {
    let idx = panel
        .day_index(date)
        .ok_or_else(|| HarnessError::InfeasibleDate(date, "outside the panel".into()))?;
    if idx + 1 < t_length {
        return Err(HarnessError::InfeasibleDate(date, format!("only {} days of data up to it", idx + 1)));
    }
    Ok(idx)
}

/// Weekly origins from the first with a full window to the last with a full
/// horizon of observed truth.
pub fn weekly_dates(panel: &AdmissionsPanel, t_length: usize, horizon: usize) -> Vec<NaiveDate> {
    let n = panel.n_days();
    if n < t_length + horizon {
        return Vec::new();
    }
    (t_length - 1..n - horizon).step_by(7).map(|d| panel.date(d)).collect()
}

/// Daily counts of every series at one level: units, region sums or the national sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSeries {
    pub level: Level,
    pub ids: Vec<String>,
    /// `values[series][day]`
    pub values: Vec<Vec<f64>>,
}

pub fn level_series(panel: &AdmissionsPanel, geo: &Geography, level: Level) -> LevelSeries {
    let n_days = panel.n_days();
    let unit = |u: usize| -> Vec<f64> { panel.series(u).iter().map(|&c| c as f64).collect() };
    let sum = |members: &[usize]| -> Vec<f64> {
        (0..n_days).map(|d| members.iter().map(|&u| panel.count(u, d) as f64).sum()).collect()
    };
    let local = geo.subset(panel.units()).expect("bundle units are in the geography");
    match level {
        Level::Unit => LevelSeries { level, ids: panel.units().to_vec(), values: (0..panel.n_units()).map(unit).collect() },
        Level::Region => LevelSeries {
            level,
            ids: local.regions().to_vec(),
            values: local.region_members().iter().map(|m| sum(m)).collect(),
        },
        Level::Nation => {
            let all: Vec<usize> = (0..panel.n_units()).collect();
            LevelSeries { level, ids: vec![crate::forecast::NATION_ID.to_string()], values: vec![sum(&all)] }
        }
    }
}

/// Selected baseline model for one series at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaRecord {
    pub origin: NaiveDate,
    pub level: Level,
    pub series_id: String,
    pub order: String,
    pub include_constant: bool,
    pub aicc: f64,
    pub fallback: bool,
}

/// Forecasts made at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginResult {
    pub origin: NaiveDate,
    pub gam: Vec<ForecastSet>,
    pub arima: Vec<ForecastSet>,
    pub arima_models: Vec<ArimaRecord>,
    pub theta: f64,
    pub edf: f64,
    pub warnings: Vec<String>,
}

fn window_for(bundle: &DataBundle, cfg: &RunConfig, origin: NaiveDate) -> Result<AdmissionsPanel, HarnessError> {
    let idx = origin_index(&bundle.panel, origin, cfg.t_length)?;
    Ok(bundle.panel.window(idx + 1 - cfg.t_length, cfg.t_length))
}

/// GAM forecasts at every level from data up to and including `origin`.
pub fn gam_forecast(bundle: &DataBundle, cfg: &RunConfig, origin: NaiveDate) -> Result<(Vec<ForecastSet>, gam::FittedGAM), HarnessError> {
    let window = window_for(bundle, cfg, origin)?;
    let cal = CalendarFeatures::for_panel(&window);
    let fit = gam::fit(&window, &bundle.geo, &bundle.graph, &cal, &cfg.model_spec())?;
    let sampler = SamplerConfig { n_samples: cfg.n_samples, seed: cfg.seed, mean_path_mode: false };
    let UnitPaths::Counts(paths) = sample_paths(&fit, cfg.horizon, &sampler)? else {
        unreachable!("random draws requested")
    };
    let sets = forecast_hierarchy(&fit, &paths, &cfg.taus)?;
    Ok((sets, fit))
}

/// ARIMA forecasts for every series of the configured levels, each fitted
/// independently on the same window.
pub fn arima_forecast(
    bundle: &DataBundle,
    cfg: &RunConfig,
    origin: NaiveDate,
) -> Result<(Vec<ForecastSet>, Vec<ArimaRecord>), HarnessError> {
    let window = window_for(bundle, cfg, origin)?;
    let first = origin + Duration::days(1);
    let mut sets = Vec::new();
    let mut records = Vec::new();
    for &level in Level::ALL.iter().filter(|l| cfg.arima_levels.contains(l)) {
        let series = level_series(&window, &bundle.geo, level);
        for (id, values) in series.ids.iter().zip(&series.values) {
            let fit = arima::fit_counts(values)?;
            if fit.fallback {
                log::warn!("{origin} {level} {id}: order selection failed, random walk used");
            }
            let fc = arima::forecast_arima(&fit, cfg.horizon, &cfg.taus);
            sets.push(fc.to_forecast_set(level, id, first));
            records.push(ArimaRecord {
                origin,
                level,
                series_id: id.clone(),
                order: fit.order.to_string(),
                include_constant: fit.include_constant,
                aicc: fit.aicc,
                fallback: fit.fallback,
            });
        }
    }
    Ok((sets, records))
}

pub fn forecast_origin(bundle: &DataBundle, cfg: &RunConfig, origin: NaiveDate) -> Result<OriginResult, HarnessError> {
    let (gam, fit) = gam_forecast(bundle, cfg, origin)?;
    let (arima, arima_models) =
        if cfg.arima_levels.is_empty() { (Vec::new(), Vec::new()) } else { arima_forecast(bundle, cfg, origin)? };
    Ok(OriginResult { origin, gam, arima, arima_models, theta: fit.theta, edf: fit.edf, warnings: fit.warnings })
}

/// Horizons scored individually; "overall" pools them.
pub fn scored_horizons(horizon: usize) -> Vec<usize> {
    let hs: Vec<usize> = [7, 14].into_iter().filter(|&h| h <= horizon).collect();
    if hs.is_empty() {
        vec![horizon]
    } else {
        hs
    }
}

/// A forecast paired with its observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub model: String,
    pub origin: NaiveDate,
    pub level: Level,
    pub series_id: String,
    pub horizon: usize,
    pub forecast: QuantileForecast,
    pub observed: f64,
}

/// Observed values for each (level, series id, date) of `panel`.
pub struct Truth {
    values: BTreeMap<(Level, String), (NaiveDate, Vec<f64>)>,
}

impl Truth {
    pub fn new(panel: &AdmissionsPanel, geo: &Geography) -> Self {
        let mut values = BTreeMap::new();
        for level in Level::ALL {
            let s = level_series(panel, geo, level);
            for (id, v) in s.ids.into_iter().zip(s.values) {
                values.insert((level, id), (panel.start(), v));
            }
        }
        Self { values }
    }

    pub fn get(&self, level: Level, id: &str, date: NaiveDate) -> Option<f64> {
        let (start, v) = self.values.get(&(level, id.to_string()))?;
        let d = (date - *start).num_days();
        (d >= 0).then(|| v.get(d as usize).copied()).flatten()
    }
}

/// Pairs forecasts at the scored horizons with observations that exist.
pub fn targets(model: &str, origin: NaiveDate, sets: &[ForecastSet], truth: &Truth, horizons: &[usize]) -> Result<Vec<Target>, HarnessError> {
    let mut out = Vec::new();
    for set in sets {
        for &h in horizons {
            let Some(&date) = set.dates.get(h - 1) else { continue };
            let Some(y) = truth.get(set.level, &set.series_id, date) else { continue };
            let q = QUANTILES.map(|tau| set.quantile(tau).expect("quantile set validated")[h - 1]);
            out.push(Target {
                model: model.to_string(),
                origin,
                level: set.level,
                series_id: set.series_id.clone(),
                horizon: h,
                forecast: QuantileForecast::new(q)?,
                observed: y,
            });
        }
    }
    Ok(out)
}

/// Score reports per model, level and horizon bucket (each scored horizon, then
/// "overall"), in model, level, bucket order.
pub fn score_targets(targets: &[Target], horizons: &[usize]) -> Result<Vec<ScoreReport>, HarnessError> {
    let mut models: Vec<&str> = targets.iter().map(|t| t.model.as_str()).collect();
    models.sort();
    models.dedup();
    let mut out = Vec::new();
    for model in models {
        for level in Level::ALL {
            let mut buckets: Vec<(String, Vec<usize>)> = horizons.iter().map(|h| (h.to_string(), vec![*h])).collect();
            buckets.push(("overall".to_string(), horizons.to_vec()));
            for (name, hs) in buckets {
                let sel: Vec<&Target> =
                    targets.iter().filter(|t| t.model == model && t.level == level && hs.contains(&t.horizon)).collect();
                if sel.is_empty() {
                    continue;
                }
                let f: Vec<QuantileForecast> = sel.iter().map(|t| t.forecast).collect();
                let y: Vec<f64> = sel.iter().map(|t| t.observed).collect();
                out.push(summarize(model, level.as_str(), &name, &f, &y)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub origins: Vec<OriginResult>,
    pub targets: Vec<Target>,
    pub scores: Vec<ScoreReport>,
    pub scores_by_date: Vec<(NaiveDate, ScoreReport)>,
}

pub const GAM: &str = "gam";
pub const ARIMA: &str = "arima";

/// Fits, forecasts and scores every origin in `cfg.forecast_dates`. Each
/// origin sees only the `t_length` days ending on it.
pub fn run_rolling_evaluation(bundle: &DataBundle, cfg: &RunConfig) -> Result<Evaluation, HarnessError> {
    cfg.validate(&bundle.panel)?;
    let truth = Truth::new(&bundle.panel, &bundle.geo);
    let horizons = scored_horizons(cfg.horizon);
    let mut dates = cfg.forecast_dates.clone();
    dates.sort();
    dates.dedup();
    let mut origins = Vec::new();
    let mut all_targets = Vec::new();
    let mut by_date = Vec::new();
    for origin in dates {
        let result = forecast_origin(bundle, cfg, origin)?;
        let mut t = targets(GAM, origin, &result.gam, &truth, &horizons)?;
        t.extend(targets(ARIMA, origin, &result.arima, &truth, &horizons)?);
        for report in score_targets(&t, &horizons)? {
            by_date.push((origin, report));
        }
        all_targets.extend(t);
        origins.push(result);
    }
    let scores = score_targets(&all_targets, &horizons)?;
    let eval = Evaluation { origins, targets: all_targets, scores, scores_by_date: by_date };
    if let Some(dir) = &cfg.out_dir {
        write_evaluation(dir, &eval)?;
    }
    Ok(eval)
}

pub const SCORES_BY_DATE_HEADER: &str =
    "date,model,level,horizon,interval_score,underprediction,overprediction,mae,coverage_50,coverage_90,bias";
pub const ARIMA_MODELS_HEADER: &str = "date,level,series_id,order,constant,aicc,fallback";

pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<(), HarnessError> {
    io::write_scores(&dir.join("scores.csv"), &eval.scores)?;
    io::write_lines(
        &dir.join("scores_by_date.csv"),
        SCORES_BY_DATE_HEADER,
        eval.scores_by_date.iter().map(|(d, r)| format!("{d},{},{}", io::score_row(r), fmt_num(r.bias))),
    )?;
    for o in &eval.origins {
        io::write_forecasts(&dir.join("forecasts").join(format!("gam_{}.csv", o.origin)), &o.gam)?;
        if !o.arima.is_empty() {
            io::write_forecasts(&dir.join("forecasts").join(format!("arima_{}.csv", o.origin)), &o.arima)?;
        }
    }
    io::write_lines(
        &dir.join("arima_models.csv"),
        ARIMA_MODELS_HEADER,
        eval.origins.iter().flat_map(|o| &o.arima_models).map(|m| {
            format!("{},{},{},{},{},{},{}", m.origin, m.level, m.series_id, m.order, m.include_constant, fmt_num(m.aicc), m.fallback)
        }),
    )?;
    Ok(())
}

/// One cell of the smoothing-dimension sweep; metrics are `None` when the cell failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub td_nat: f64,
    pub td_grp: f64,
    pub metrics: Option<SweepMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMetrics {
    pub interval_score: f64,
    pub mae: f64,
    pub bias: f64,
    pub coverage_90: f64,
}

pub const SWEEP_HEADER: &str = "td_nat,td_grp,interval_score,mae,bias,coverage_90";

/// Level whose overall GAM scores the sweep reports.
pub const SWEEP_LEVEL: Level = Level::Nation;

/// GAM-only rolling evaluation for every `(t_d national, t_d group)` pair. The
/// grid is checked before any fitting.
pub fn run_tuning_sweep(bundle: &DataBundle, cfg: &RunConfig, td_nat: &[f64], td_grp: &[f64]) -> Result<Vec<SweepRow>, HarnessError> {
    for &td in td_nat.iter().chain(td_grp) {
        basis_dimension(BasisConfig { t_length: cfg.t_length, t_d: td })?;
        if !(1.0..=14.0).contains(&td) {
            return Err(HarnessError::InvalidConfig(format!("t_d {td} outside [1, 14]")));
        }
    }
    let mut rows = Vec::new();
    for &n in td_nat {
        for &g in td_grp {
            let cell = RunConfig { t_d_national: n, t_d_group: g, arima_levels: Vec::new(), out_dir: None, ..cfg.clone() };
            let metrics = match run_rolling_evaluation(bundle, &cell) {
                Ok(eval) => eval
                    .scores
                    .iter()
                    .find(|r| r.model == GAM && r.level == SWEEP_LEVEL.as_str() && r.horizon == "overall")
                    .map(|r| SweepMetrics { interval_score: r.interval_score, mae: r.mae, bias: r.bias, coverage_90: r.coverage_90 }),
                Err(e) => {
                    log::warn!("sweep cell ({n}, {g}) failed: {e}");
                    None
                }
            };
            rows.push(SweepRow { td_nat: n, td_grp: g, metrics });
        }
    }
    if let Some(dir) = &cfg.out_dir {
        write_sweep(&dir.join("sweep.csv"), &rows)?;
    }
    Ok(rows)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    io::write_lines(
        path,
        SWEEP_HEADER,
        rows.iter().map(|r| {
            let m = r.metrics.map_or([f64::NAN; 4], |m| [m.interval_score, m.mae, m.bias, m.coverage_90]);
            format!("{},{},{},{},{},{}", fmt_num(r.td_nat), fmt_num(r.td_grp), fmt_num(m[0]), fmt_num(m[1]), fmt_num(m[2]), fmt_num(m[3]))
        }),
    )?;
    Ok(())
}

/// Range of `metric` along the national axis (averaged over group values) divided
/// by the range along the group axis (averaged over national values).
pub fn axis_range_ratio(rows: &[SweepRow], metric: impl Fn(&SweepMetrics) -> f64) -> Option<f64> {
    let mut nat: Vec<f64> = rows.iter().map(|r| r.td_nat).collect();
    let mut grp: Vec<f64> = rows.iter().map(|r| r.td_grp).collect();
    for v in [&mut nat, &mut grp] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let value = |n: f64, g: f64| rows.iter().find(|r| r.td_nat == n && r.td_grp == g).and_then(|r| r.metrics.as_ref()).map(&metric);
    let range = |vals: Vec<Option<f64>>| -> Option<f64> {
        let v: Vec<f64> = vals.into_iter().collect::<Option<_>>()?;
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        Some(hi - lo)
    };
    let along_nat: Vec<f64> = grp.iter().map(|&g| range(nat.iter().map(|&n| value(n, g)).collect())).collect::<Option<_>>()?;
    let along_grp: Vec<f64> = nat.iter().map(|&n| range(grp.iter().map(|&g| value(n, g)).collect())).collect::<Option<_>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Some(mean(&along_nat) / mean(&along_grp))
}

/// Scores a forecast file against observed truth. Each series' earliest date is
/// taken as horizon 1.
pub fn score_records(model: &str, records: &[io::ForecastRecord], truth: &Truth) -> Result<Vec<ScoreReport>, HarnessError> {
    let mut first: BTreeMap<(Level, &str), NaiveDate> = BTreeMap::new();
    for r in records {
        let e = first.entry((r.level, r.series_id.as_str())).or_insert(r.date);
        *e = (*e).min(r.date);
    }
    let max_h = records
        .iter()
        .map(|r| (r.date - first[&(r.level, r.series_id.as_str())]).num_days() as usize + 1)
        .max()
        .unwrap_or(0);
    let horizons = scored_horizons(max_h);
    let mut out = Vec::new();
    for r in records {
        let h = (r.date - first[&(r.level, r.series_id.as_str())]).num_days() as usize + 1;
        if !horizons.contains(&h) {
            continue;
        }
        let Some(y) = truth.get(r.level, &r.series_id, r.date) else { continue };
        out.push(Target {
            model: model.to_string(),
            origin: first[&(r.level, r.series_id.as_str())] - Duration::days(1),
            level: r.level,
            series_id: r.series_id.clone(),
            horizon: h,
            forecast: QuantileForecast::new([r.q05, r.q25, r.q50, r.q75, r.q95])?,
            observed: y,
        });
    }
    if out.is_empty() {
        return Err(HarnessError::InvalidConfig("no forecast rows match observed data".into()));
    }
    score_targets(&out, &horizons)
}
