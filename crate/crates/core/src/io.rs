//! CSV readers and writers for panels, geographies, adjacency lists, forecasts
//! and score tables.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;

use crate::data::{AdmissionsPanel, GeoUnit, RawRow};
use crate::forecast::{ForecastSet, Level};
use crate::scoring::ScoreReport;

pub const PANEL_HEADER: &str = "date,unit_id,count";
pub const GEO_HEADER: &str = "unit_id,region_id,population,centroid_x,centroid_y";
pub const ADJACENCY_HEADER: &str = "unit_a,unit_b";
pub const FORECAST_HEADER: &str = "level,series_id,date,q05,q25,q50,q75,q95";
pub const SCORE_HEADER: &str =
    "model,level,horizon,interval_score,underprediction,overprediction,mae,coverage_50,coverage_90";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Schema { path: PathBuf, line: u64, message: String },
}

fn open(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(reader: &mut csv::Reader<File>, path: &Path, expected: &str) -> Result<(), IoError> {
    let found = reader
        .headers()
        .map_err(|e| IoError::Schema { path: path.to_path_buf(), line: 1, message: e.to_string() })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != expected {
        return Err(IoError::Schema {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{expected}`, found `{found}`"),
        });
    }
    Ok(())
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>, IoError> {
    let mut reader = open(path)?;
    check_header(&mut reader, path, header)?;
    let mut out = Vec::new();
    for result in reader.deserialize() {
        let record: T = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            };
            IoError::Schema { path: path.to_path_buf(), line, message }
        })?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct PanelRecord {
    date: NaiveDate,
    unit_id: String,
    count: f64,
}

pub fn read_panel(path: &Path) -> Result<Vec<RawRow>, IoError> {
    let records: Vec<PanelRecord> = read_records(path, PANEL_HEADER)?;
    Ok(records.into_iter().map(|r| RawRow { date: r.date, unit_id: r.unit_id, count: r.count }).collect())
}

#[derive(Deserialize)]
struct GeoRecord {
    unit_id: String,
    region_id: String,
    population: f64,
    centroid_x: f64,
    centroid_y: f64,
}

pub fn read_geography(path: &Path) -> Result<Vec<GeoUnit>, IoError> {
    let records: Vec<GeoRecord> = read_records(path, GEO_HEADER)?;
    Ok(records
        .into_iter()
        .map(|r| GeoUnit {
            unit_id: r.unit_id,
            region_id: r.region_id,
            population: r.population,
            centroid: (r.centroid_x, r.centroid_y),
        })
        .collect())
}

#[derive(Deserialize)]
struct AdjacencyRecord {
    unit_a: String,
    unit_b: String,
}

pub fn read_adjacency(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let records: Vec<AdjacencyRecord> = read_records(path, ADJACENCY_HEADER)?;
    Ok(records.into_iter().map(|r| (r.unit_a, r.unit_b)).collect())
}

/// One row of a forecast CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ForecastRecord {
    pub level: Level,
    pub series_id: String,
    pub date: NaiveDate,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn read_forecasts(path: &Path) -> Result<Vec<ForecastRecord>, IoError> {
    read_records(path, FORECAST_HEADER)
}

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x}")
    }
}

fn create(path: &Path) -> Result<File, IoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| IoError::Io { path: parent.to_path_buf(), source })?;
    }
    File::create(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Writes `header` and `rows` with LF line endings.
pub fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<(), IoError> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    create(path)?.write_all(text.as_bytes()).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn forecast_rows(sets: &[ForecastSet]) -> Vec<String> {
    let mut rows = Vec::new();
    for set in sets {
        for (h, date) in set.dates.iter().enumerate() {
            let mut row = format!("{},{},{}", set.level, set.series_id, date);
            for &tau in &crate::forecast::QUANTILES {
                let q = set.quantile(tau).map_or(f64::NAN, |v| v[h]);
                row.push(',');
                row.push_str(&fmt_num(q));
            }
            rows.push(row);
        }
    }
    rows
}

pub fn write_forecasts(path: &Path, sets: &[ForecastSet]) -> Result<(), IoError> {
    write_lines(path, FORECAST_HEADER, forecast_rows(sets))
}

pub fn score_row(r: &ScoreReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.model,
        r.level,
        r.horizon,
        fmt_num(r.interval_score),
        fmt_num(r.underprediction),
        fmt_num(r.overprediction),
        fmt_num(r.mae),
        fmt_num(r.coverage_50),
        fmt_num(r.coverage_90)
    )
}

pub fn write_scores(path: &Path, reports: &[ScoreReport]) -> Result<(), IoError> {
    write_lines(path, SCORE_HEADER, reports.iter().map(score_row))
}

pub fn write_panel(path: &Path, panel: &AdmissionsPanel) -> Result<(), IoError> {
    write_lines(
        path,
        PANEL_HEADER,
        panel.to_rows().into_iter().map(|r| format!("{},{},{}", r.date, r.unit_id, r.count)),
    )
}

pub fn write_geography(path: &Path, units: &[GeoUnit]) -> Result<(), IoError> {
    write_lines(
        path,
        GEO_HEADER,
        units.iter().map(|u| {
            format!(
                "{},{},{},{},{}",
                u.unit_id,
                u.region_id,
                fmt_num(u.population),
                fmt_num(u.centroid.0),
                fmt_num(u.centroid.1)
            )
        }),
    )
}

pub fn write_adjacency(path: &Path, pairs: &[(String, String)]) -> Result<(), IoError> {
    write_lines(path, ADJACENCY_HEADER, pairs.iter().map(|(a, b)| format!("{a},{b}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        std::fs::write(&path, "date,unit_id,count\n2022-11-07,A,3\n2022-11-08,A,x\n").unwrap();
        match read_panel(&path) {
            Err(IoError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "day,unit,count\n").unwrap();
        assert!(matches!(read_panel(&path), Err(IoError::Schema { line: 1, .. })));
    }

    #[test]
    fn panel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let start = NaiveDate::from_ymd_opt(2022, 11, 7).unwrap();
        let panel = AdmissionsPanel::from_series(start, vec!["A".into(), "B".into()], vec![vec![1, 2], vec![3, 4]]).unwrap();
        write_panel(&path, &panel).unwrap();
        let rows = read_panel(&path).unwrap();
        let back = crate::data::validate_panel(&rows, Default::default()).unwrap().panel;
        assert_eq!(back, panel);
    }
}
