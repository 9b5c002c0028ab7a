//! Admissions panels, the unit/region hierarchy and the spatial adjacency graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("duplicate unit `{0}`")]
    DuplicateUnit(String),
    #[error("unit `{0}` has non-positive population {1}")]
    NonPositivePopulation(String, f64),
    #[error("unit `{0}` cannot be adjacent to itself")]
    SelfLoop(String),
    #[error("units `{0}` and `{1}` have coincident centroids")]
    CoincidentCentroids(String, String),
    #[error("adjacency graph is disconnected: {0} components")]
    DisconnectedGraph(usize),
    #[error("adjacency graph has no nodes")]
    EmptyGraph,
    #[error("panel has no rows")]
    EmptyPanel,
    #[error("non-integer count {count} for unit `{unit}` on {date}")]
    NonIntegerCount { date: NaiveDate, unit: String, count: f64 },
    #[error("negative count {count} for unit `{unit}` on {date}")]
    NegativeCount { date: NaiveDate, unit: String, count: f64 },
    #[error("duplicate row for unit `{unit}` on {date}")]
    DuplicateCell { date: NaiveDate, unit: String },
    #[error("unit `{unit}` is missing {missing} of {days} days")]
    GappyUnit { unit: String, missing: usize, days: usize },
    #[error("unit order is not a permutation of the graph nodes")]
    OrderMismatch,
}

/// A sub-regional unit with its catchment population and planar centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoUnit {
    pub unit_id: String,
    pub region_id: String,
    pub population: f64,
    pub centroid: (f64, f64),
}

/// Units grouped into regions. Unit order is the order given at construction;
/// regions are kept in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Geography {
    units: Vec<GeoUnit>,
    regions: Vec<String>,
    unit_region: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Geography {
    pub fn new(units: Vec<GeoUnit>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(units.len());
        let mut regions: Vec<String> = Vec::new();
        let mut unit_region = Vec::with_capacity(units.len());
        for (i, u) in units.iter().enumerate() {
            if !(u.population > 0.0) || !u.population.is_finite() {
                return Err(DataError::NonPositivePopulation(u.unit_id.clone(), u.population));
            }
            if index.insert(u.unit_id.clone(), i).is_some() {
                return Err(DataError::DuplicateUnit(u.unit_id.clone()));
            }
            let r = match regions.iter().position(|r| *r == u.region_id) {
                Some(r) => r,
                None => {
                    regions.push(u.region_id.clone());
                    regions.len() - 1
                }
            };
            unit_region.push(r);
        }
        Ok(Self { units, regions, unit_region, index })
    }

    pub fn units(&self) -> &[GeoUnit] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<usize> {
        self.index.get(unit_id).copied()
    }

    /// Region index of unit `i`.
    pub fn region_of(&self, i: usize) -> usize {
        self.unit_region[i]
    }

    pub fn unit_ids(&self) -> Vec<String> {
        self.units.iter().map(|u| u.unit_id.clone()).collect()
    }

    /// Units of each region, in unit order.
    pub fn region_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.regions.len()];
        for (i, &r) in self.unit_region.iter().enumerate() {
            members[r].push(i);
        }
        members
    }

    /// Restricts to the given units (in the given order).
    pub fn subset(&self, unit_ids: &[String]) -> Result<Self, DataError> {
        let units = unit_ids
            .iter()
            .map(|id| {
                self.unit_index(id)
                    .map(|i| self.units[i].clone())
                    .ok_or_else(|| DataError::UnknownUnit(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(units)
    }

    /// Same geography with every population multiplied by `factor`.
    pub fn scale_populations(&self, factor: f64) -> Self {
        let mut g = self.clone();
        for u in &mut g.units {
            u.population *= factor;
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected, connected, positively weighted graph over unit ids.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

impl AdjacencyGraph {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<f64> {
        let ia = self.nodes.iter().position(|n| n == a)?;
        let ib = self.nodes.iter().position(|n| n == b)?;
        self.edges
            .iter()
            .find(|e| (e.a == ia && e.b == ib) || (e.a == ib && e.b == ia))
            .map(|e| e.weight)
    }

    /// Node ids as unordered pairs, `a < b` by node index.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|e| (self.nodes[e.a].clone(), self.nodes[e.b].clone()))
            .collect()
    }
}

/// Number of connected components over `n` nodes.
pub(crate) fn count_components(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> usize {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    components
}

/// Builds the MRF neighbourhood graph. Edge weights are the inverse centroid
/// distance; duplicate pairs collapse to one edge.
pub fn build_adjacency(
    units: &[GeoUnit],
    neighbor_pairs: &[(String, String)],
) -> Result<AdjacencyGraph, DataError> {
    if units.is_empty() {
        return Err(DataError::EmptyGraph);
    }
    let index: HashMap<&str, usize> =
        units.iter().enumerate().map(|(i, u)| (u.unit_id.as_str(), i)).collect();
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for (a, b) in neighbor_pairs {
        let ia = *index.get(a.as_str()).ok_or_else(|| DataError::UnknownUnit(a.clone()))?;
        let ib = *index.get(b.as_str()).ok_or_else(|| DataError::UnknownUnit(b.clone()))?;
        if ia == ib {
            return Err(DataError::SelfLoop(a.clone()));
        }
        let key = (ia.min(ib), ia.max(ib));
        if !seen.insert(key) {
            continue;
        }
        let (xa, ya) = units[key.0].centroid;
        let (xb, yb) = units[key.1].centroid;
        let d = (xa - xb).hypot(ya - yb);
        if !(d > 0.0) {
            return Err(DataError::CoincidentCentroids(
                units[key.0].unit_id.clone(),
                units[key.1].unit_id.clone(),
            ));
        }
        edges.push(Edge { a: key.0, b: key.1, weight: 1.0 / d });
    }
    let components = count_components(units.len(), edges.iter().map(|e| (e.a, e.b)));
    if components != 1 {
        return Err(DataError::DisconnectedGraph(components));
    }
    Ok(AdjacencyGraph { nodes: units.iter().map(|u| u.unit_id.clone()).collect(), edges })
}

/// Weighted graph Laplacian `D - W` with rows/columns in `order`.
pub fn graph_laplacian(g: &AdjacencyGraph, order: &[String]) -> Result<DMatrix<f64>, DataError> {
    let n = g.nodes.len();
    if order.len() != n {
        return Err(DataError::OrderMismatch);
    }
    let pos: HashMap<&str, usize> =
        order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if pos.len() != n {
        return Err(DataError::OrderMismatch);
    }
    let perm = g
        .nodes
        .iter()
        .map(|id| pos.get(id.as_str()).copied().ok_or(DataError::OrderMismatch))
        .collect::<Result<Vec<_>, _>>()?;
    let mut l = DMatrix::zeros(n, n);
    for e in &g.edges {
        let (i, j) = (perm[e.a], perm[e.b]);
        l[(i, j)] -= e.weight;
        l[(j, i)] -= e.weight;
        l[(i, i)] += e.weight;
        l[(j, j)] += e.weight;
    }
    Ok(l)
}

/// Day of week with Monday = 0.
pub fn day_of_week(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// Day-of-week lookup for a contiguous date range.
#[derive(Debug, Clone, PartialEq)]
pub struct CalendarFeatures {
    start: NaiveDate,
    dow: Vec<usize>,
}

impl CalendarFeatures {
    pub fn new(start: NaiveDate, n_days: usize) -> Self {
        let dow = (0..n_days).map(|d| day_of_week(start + chrono::Days::new(d as u64))).collect();
        Self { start, dow }
    }

    pub fn for_panel(panel: &AdmissionsPanel) -> Self {
        Self::new(panel.start(), panel.n_days())
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    /// Day of week of day index `t` (relative to `start`); also valid past the range.
    pub fn dow(&self, t: i64) -> usize {
        let base = self.dow.first().copied().unwrap_or_else(|| day_of_week(self.start)) as i64;
        (base + t).rem_euclid(7) as usize
    }

    pub fn len(&self) -> usize {
        self.dow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dow.is_empty()
    }
}

/// Daily admissions per unit over a contiguous date range, with no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionsPanel {
    start: NaiveDate,
    units: Vec<String>,
    /// `counts[unit][day]`
    counts: Vec<Vec<u64>>,
}

impl AdmissionsPanel {
    /// Panel from complete per-unit series of equal length.
    pub fn from_series(
        start: NaiveDate,
        units: Vec<String>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self, DataError> {
        if units.is_empty() || counts.first().is_none_or(|c| c.is_empty()) {
            return Err(DataError::EmptyPanel);
        }
        let days = counts[0].len();
        let mut ids = BTreeSet::new();
        for (u, c) in units.iter().zip(&counts) {
            if !ids.insert(u) {
                return Err(DataError::DuplicateUnit(u.clone()));
            }
            if c.len() != days {
                return Err(DataError::GappyUnit {
                    unit: u.clone(),
                    missing: days.abs_diff(c.len()),
                    days,
                });
            }
        }
        if units.len() != counts.len() {
            return Err(DataError::EmptyPanel);
        }
        Ok(Self { start, units, counts })
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.n_days() - 1)
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + chrono::Days::new(day as u64)
    }

    /// Day index of `date`, if inside the panel.
    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start).num_days();
        (d >= 0 && (d as usize) < self.n_days()).then_some(d as usize)
    }

    pub fn n_days(&self) -> usize {
        self.counts[0].len()
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn series(&self, unit: usize) -> &[u64] {
        &self.counts[unit]
    }

    pub fn count(&self, unit: usize, day: usize) -> u64 {
        self.counts[unit][day]
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit_id)
    }

    /// Days `[first, first + len)`.
    pub fn window(&self, first: usize, len: usize) -> Self {
        Self {
            start: self.date(first),
            units: self.units.clone(),
            counts: self.counts.iter().map(|c| c[first..first + len].to_vec()).collect(),
        }
    }

    /// Panel re-ordered/restricted to `unit_ids`.
    pub fn select_units(&self, unit_ids: &[String]) -> Result<Self, DataError> {
        let counts = unit_ids
            .iter()
            .map(|id| {
                self.unit_index(id)
                    .map(|i| self.counts[i].clone())
                    .ok_or_else(|| DataError::UnknownUnit(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { start: self.start, units: unit_ids.to_vec(), counts })
    }

    /// Long-format rows `(date, unit, count)`, date-major.
    pub fn to_rows(&self) -> Vec<RawRow> {
        let mut rows = Vec::with_capacity(self.n_days() * self.n_units());
        for day in 0..self.n_days() {
            for (u, id) in self.units.iter().enumerate() {
                rows.push(RawRow {
                    date: self.date(day),
                    unit_id: id.clone(),
                    count: self.counts[u][day] as f64,
                });
            }
        }
        rows
    }
}

/// One parsed admissions CSV record.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub date: NaiveDate,
    pub unit_id: String,
    pub count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelPolicy {
    /// Units missing more than this fraction of days are dropped.
    pub max_missing_fraction: f64,
    /// Reject over-threshold units instead of dropping them.
    pub strict: bool,
}

impl Default for PanelPolicy {
    fn default() -> Self {
        Self { max_missing_fraction: 0.05, strict: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedPanel {
    pub panel: AdmissionsPanel,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Checks raw rows and assembles a gap-free panel.
///
/// The date range spans the earliest to the latest row. Units missing more than
/// `max_missing_fraction` of that range are dropped (or rejected when `strict`);
/// any other missing cell rejects the panel. Units keep first-appearance order.
pub fn validate_panel(rows: &[RawRow], policy: PanelPolicy) -> Result<ValidatedPanel, DataError> {
    if rows.is_empty() {
        return Err(DataError::EmptyPanel);
    }
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, BTreeMap<NaiveDate, u64>> = HashMap::new();
    let (mut first, mut last) = (rows[0].date, rows[0].date);
    for r in rows {
        if r.count < 0.0 {
            return Err(DataError::NegativeCount {
                date: r.date,
                unit: r.unit_id.clone(),
                count: r.count,
            });
        }
        if !r.count.is_finite() || r.count.fract() != 0.0 {
            return Err(DataError::NonIntegerCount {
                date: r.date,
                unit: r.unit_id.clone(),
                count: r.count,
            });
        }
        first = first.min(r.date);
        last = last.max(r.date);
        let unit = cells.entry(r.unit_id.clone()).or_insert_with(|| {
            order.push(r.unit_id.clone());
            BTreeMap::new()
        });
        if unit.insert(r.date, r.count as u64).is_some() {
            return Err(DataError::DuplicateCell { date: r.date, unit: r.unit_id.clone() });
        }
    }
    let days = (last - first).num_days() as usize + 1;
    let mut units = Vec::new();
    let mut counts = Vec::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    for id in order {
        let unit = &cells[&id];
        let missing = days - unit.len();
        if missing == 0 {
            counts.push(unit.values().copied().collect());
            units.push(id);
            continue;
        }
        let over = missing as f64 > policy.max_missing_fraction * days as f64;
        if over && !policy.strict {
            warnings.push(format!(
                "dropped unit `{id}`: missing {missing} of {days} days (threshold {:.1}%)",
                100.0 * policy.max_missing_fraction
            ));
            dropped.push(id);
        } else {
            return Err(DataError::GappyUnit { unit: id, missing, days });
        }
    }
    if units.is_empty() {
        return Err(DataError::EmptyPanel);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ValidatedPanel { panel: AdmissionsPanel { start: first, units, counts }, dropped, warnings })
}
