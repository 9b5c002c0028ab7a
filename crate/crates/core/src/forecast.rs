//! Probabilistic forecasts from a fitted GAM: coefficient draws from the
//! approximate posterior, linear continuation of the smooths past the window,
//! negative binomial observation noise, and bottom-up reconciliation.

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::gam::family::{self, draw_negative_binomial};
use crate::gam::FittedGAM;
use crate::rng::{substream, Stream};

/// Quantile levels reported for every forecast.
pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Samples drawn from one random sub-stream.
const SAMPLE_BLOCK: usize = 250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("model fit has not converged")]
    NotConverged,
    #[error("{0} units given but the membership map has {1} entries")]
    MisalignedSamples(usize, usize),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Unit,
    Region,
    Nation,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Unit, Level::Region, Level::Nation];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Unit => "unit",
            Level::Region => "region",
            Level::Nation => "nation",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit" => Ok(Level::Unit),
            "region" => Ok(Level::Region),
            "nation" => Ok(Level::Nation),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Return the plug-in mean path instead of random draws.
    pub mean_path_mode: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_samples: 2000, seed: 1, mean_path_mode: false }
    }
}

/// Paths for several series, all with the same sample count and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet<T> {
    pub series_ids: Vec<String>,
    /// First forecast date.
    pub first_date: NaiveDate,
    pub n_samples: usize,
    pub horizon: usize,
    /// `[series][sample][step]`, row-major.
    pub values: Vec<T>,
}

impl<T: Copy> PathSet<T> {
    pub fn n_series(&self) -> usize {
        self.series_ids.len()
    }

    pub fn path(&self, series: usize, sample: usize) -> &[T] {
        let start = (series * self.n_samples + sample) * self.horizon;
        &self.values[start..start + self.horizon]
    }

    pub fn get(&self, series: usize, sample: usize, step: usize) -> T {
        self.values[(series * self.n_samples + sample) * self.horizon + step]
    }

    /// All samples of `series` at forecast step `step`.
    pub fn column(&self, series: usize, step: usize) -> Vec<T> {
        (0..self.n_samples).map(|s| self.get(series, s, step)).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.horizon).map(|h| self.first_date + Duration::days(h as i64)).collect()
    }
}

/// Unit forecasts: integer draws, or real-valued means in mean-path mode.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitPaths {
    Counts(PathSet<u64>),
    Means(PathSet<f64>),
}

/// Design rows for every unit and future day.
fn future_rows(fit: &FittedGAM, horizon: usize) -> Vec<Vec<(usize, f64)>> {
    let t_max = fit.t_max();
    (0..fit.layout.n_units())
        .flat_map(|u| (1..=horizon as i64).map(move |h| (u, t_max + h)))
        .map(|(u, d)| fit.layout.row(u, d))
        .collect()
}

fn eta(row: &[(usize, f64)], offset: f64, beta: &[f64]) -> f64 {
    offset + row.iter().map(|&(j, v)| v * beta[j]).sum::<f64>()
}

/// Forecast paths for every unit over `horizon` days after the window.
pub fn sample_paths(fit: &FittedGAM, horizon: usize, cfg: &SamplerConfig) -> Result<UnitPaths, ForecastError> {
    if !fit.converged {
        return Err(ForecastError::NotConverged);
    }
    if horizon == 0 {
        return Err(ForecastError::InvalidConfig("horizon must be at least 1".into()));
    }
    let n_units = fit.layout.n_units();
    let first_date = fit.start + Duration::days(fit.t_max() + 1);
    let series_ids = fit.layout.unit_ids().to_vec();
    let rows = future_rows(fit, horizon);

    if cfg.mean_path_mode {
        let values = rows
            .iter()
            .enumerate()
            .map(|(k, row)| family::mean(eta(row, fit.layout.offset(k / horizon), &fit.beta)))
            .collect();
        return Ok(UnitPaths::Means(PathSet { series_ids, first_date, n_samples: 1, horizon, values }));
    }
    if cfg.n_samples == 0 {
        return Err(ForecastError::InvalidConfig("n_samples must be at least 1".into()));
    }

    let n = cfg.n_samples;
    let p = fit.n_cols();
    let mut values = vec![0u64; n_units * n * horizon];
    let mut z = vec![0.0; p];
    let mut beta = vec![0.0; p];
    for block_start in (0..n).step_by(SAMPLE_BLOCK) {
        let mut rng = substream(cfg.seed, Stream::GamSampler, (block_start / SAMPLE_BLOCK) as u64);
        for s in block_start..(block_start + SAMPLE_BLOCK).min(n) {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let delta = fit.sampler.transform(&z);
            for ((b, hat), d) in beta.iter_mut().zip(&fit.beta).zip(&delta) {
                *b = hat + d;
            }
            for u in 0..n_units {
                let offset = fit.layout.offset(u);
                for h in 0..horizon {
                    let mu = family::mean(eta(&rows[u * horizon + h], offset, &beta));
                    values[(u * n + s) * horizon + h] = draw_negative_binomial(&mut rng, mu, fit.theta);
                }
            }
        }
    }
    Ok(UnitPaths::Counts(PathSet { series_ids, first_date, n_samples: n, horizon, values }))
}

/// Unit, region and national paths with identical sample alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy<T> {
    pub unit: PathSet<T>,
    pub region: PathSet<T>,
    pub nation: PathSet<T>,
}

impl<T: Copy> Hierarchy<T> {
    pub fn level(&self, level: Level) -> &PathSet<T> {
        match level {
            Level::Unit => &self.unit,
            Level::Region => &self.region,
            Level::Nation => &self.nation,
        }
    }
}

/// Name of the single national series.
pub const NATION_ID: &str = "nation";

fn sum_groups<T: Copy + Default + AddAssign>(paths: &PathSet<T>, membership: &[usize], ids: Vec<String>) -> PathSet<T> {
    let (n, h) = (paths.n_samples, paths.horizon);
    let mut values = vec![T::default(); ids.len() * n * h];
    for (series, &group) in membership.iter().enumerate() {
        let src = &paths.values[series * n * h..(series + 1) * n * h];
        let dst = &mut values[group * n * h..(group + 1) * n * h];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    PathSet { series_ids: ids, first_date: paths.first_date, n_samples: n, horizon: h, values }
}

/// Sums unit paths into regions, and regions into the nation, sample by sample.
pub fn aggregate_bottom_up<T: Copy + Default + AddAssign>(
    units: &PathSet<T>,
    unit_region: &[usize],
    region_ids: &[String],
) -> Result<Hierarchy<T>, ForecastError> {
    if unit_region.len() != units.n_series() {
        return Err(ForecastError::MisalignedSamples(units.n_series(), unit_region.len()));
    }
    if let Some(&bad) = unit_region.iter().find(|&&r| r >= region_ids.len()) {
        return Err(ForecastError::InvalidConfig(format!("region index {bad} out of range")));
    }
    let region = sum_groups(units, unit_region, region_ids.to_vec());
    let nation = sum_groups(&region, &vec![0; region_ids.len()], vec![NATION_ID.to_string()]);
    Ok(Hierarchy { unit: units.clone(), region, nation })
}

/// Nearest-rank empirical quantile of sorted data: the smallest value with at
/// least a fraction `tau` of the sample at or below it.
pub fn nearest_rank(sorted: &[f64], tau: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = (tau * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Quantile forecast of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub level: Level,
    pub series_id: String,
    pub dates: Vec<NaiveDate>,
    pub taus: Vec<f64>,
    /// `values[k][h]` is quantile `taus[k]` on `dates[h]`.
    pub values: Vec<Vec<f64>>,
    pub sample_paths: Option<Vec<Vec<u64>>>,
}

impl ForecastSet {
    pub fn quantile(&self, tau: f64) -> Option<&[f64]> {
        self.taus.iter().position(|&t| (t - tau).abs() < 1e-12).map(|k| self.values[k].as_slice())
    }

    pub fn median(&self) -> &[f64] {
        self.quantile(0.5).expect("median is always reported")
    }
}

/// Path values that can be summarised as reals.
pub trait PathValue: Copy {
    fn to_f64(self) -> f64;
}

impl PathValue for u64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl PathValue for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Per-date nearest-rank quantiles of every series in `paths`.
pub fn to_quantiles<T: PathValue>(paths: &PathSet<T>, level: Level, taus: &[f64]) -> Vec<ForecastSet> {
    let dates = paths.dates();
    (0..paths.n_series())
        .map(|series| {
            let mut values = vec![vec![0.0; paths.horizon]; taus.len()];
            for h in 0..paths.horizon {
                let mut col: Vec<f64> = paths.column(series, h).into_iter().map(PathValue::to_f64).collect();
                col.sort_by(f64::total_cmp);
                for (k, &tau) in taus.iter().enumerate() {
                    values[k][h] = nearest_rank(&col, tau);
                }
            }
            ForecastSet {
                level,
                series_id: paths.series_ids[series].clone(),
                dates: dates.clone(),
                taus: taus.to_vec(),
                values,
                sample_paths: None,
            }
        })
        .collect()
}

/// Quantile forecasts at every level from unit count paths, each carrying its
/// aggregated sample paths.
pub fn forecast_hierarchy(
    fit: &FittedGAM,
    units: &PathSet<u64>,
    taus: &[f64],
) -> Result<Vec<ForecastSet>, ForecastError> {
    let h = aggregate_bottom_up(units, fit.layout.unit_region(), fit.layout.region_ids())?;
    let mut out = Vec::new();
    for level in Level::ALL {
        let paths = h.level(level);
        for (i, mut set) in to_quantiles(paths, level, taus).into_iter().enumerate() {
            set.sample_paths = Some((0..paths.n_samples).map(|s| paths.path(i, s).to_vec()).collect());
            out.push(set);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(series: usize, n: usize, h: usize, mut f: impl FnMut(usize, usize, usize) -> u64) -> PathSet<u64> {
        let mut values = Vec::new();
        for i in 0..series {
            for s in 0..n {
                for t in 0..h {
                    values.push(f(i, s, t));
                }
            }
        }
        PathSet {
            series_ids: (0..series).map(|i| format!("U{i}")).collect(),
            first_date: NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(),
            n_samples: n,
            horizon: h,
            values,
        }
    }

    #[test]
    fn point_mass_quantiles() {
        let paths = toy(1, 200, 3, |_, _, _| 7);
        let q = to_quantiles(&paths, Level::Unit, &QUANTILES);
        assert!(q[0].values.iter().flatten().all(|&v| v == 7.0));
    }

    #[test]
    fn nearest_rank_definition() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&xs, 0.5), 50.0);
        assert_eq!(nearest_rank(&xs, 0.05), 5.0);
        assert_eq!(nearest_rank(&xs, 0.95), 95.0);
        assert_eq!(nearest_rank(&xs, 0.951), 96.0);
        assert_eq!(nearest_rank(&xs, 0.0), 1.0);
        assert_eq!(nearest_rank(&xs, 1.0), 100.0);
    }

    #[test]
    fn quantiles_match_sort_oracle() {
        let mut rng = crate::rng::stream(5, Stream::GamSampler);
        let paths = toy(2, 1000, 2, |_, _, _| rng.random_range(0..500));
        let q = to_quantiles(&paths, Level::Unit, &QUANTILES);
        for series in 0..2 {
            for h in 0..2 {
                let mut col = paths.column(series, h);
                col.sort_unstable();
                for (k, &tau) in QUANTILES.iter().enumerate() {
                    // smallest x with #{x_i <= x} >= tau n
                    let need = (tau * 1000.0_f64).ceil() as usize;
                    let oracle = *col.iter().find(|&&x| col.iter().filter(|&&y| y <= x).count() >= need).unwrap();
                    assert_eq!(q[series].values[k][h], oracle as f64);
                }
            }
        }
    }

    #[test]
    fn regions_sum_members() {
        let mut rng = crate::rng::stream(6, Stream::GamSampler);
        let draws: Vec<u64> = (0..3 * 50 * 4).map(|_| rng.random_range(0..1000)).collect();
        let paths = toy(3, 50, 4, |i, s, t| draws[(i * 50 + s) * 4 + t]);
        let membership = [1, 0, 1];
        let ids = vec!["A".to_string(), "B".to_string()];
        let h = aggregate_bottom_up(&paths, &membership, &ids).unwrap();
        for s in 0..50 {
            for t in 0..4 {
                let a = draws[(50 + s) * 4 + t];
                let b = draws[s * 4 + t] + draws[(2 * 50 + s) * 4 + t];
                assert_eq!(h.region.get(0, s, t), a);
                assert_eq!(h.region.get(1, s, t), b);
                assert_eq!(h.nation.get(0, s, t), a + b);
            }
        }
    }

    #[test]
    fn single_unit_nation_equals_unit() {
        let paths = toy(1, 20, 3, |_, s, t| (s * 3 + t) as u64);
        let h = aggregate_bottom_up(&paths, &[0], &["R".to_string()]).unwrap();
        assert_eq!(h.nation.values, paths.values);
        assert_eq!(h.region.values, paths.values);
    }

    #[test]
    fn misaligned_membership_is_an_error() {
        let paths = toy(3, 5, 2, |_, _, _| 1);
        assert_eq!(
            aggregate_bottom_up(&paths, &[0, 0], &["R".to_string()]),
            Err(ForecastError::MisalignedSamples(3, 2))
        );
    }
}
