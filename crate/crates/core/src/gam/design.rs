//! Hierarchical design: national smooth, shared-penalty unit smooths, MRF unit
//! intercepts, region and nested day-of-week effects, and the log-population offset.

use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;

use super::{GamError, ModelSpec};
use crate::data::{graph_laplacian, AdjacencyGraph, AdmissionsPanel, CalendarFeatures, Geography};
use crate::spline::{basis_dimension, build_basis, BasisConfig, CenteredSmooth};

/// Penalty classes; every class carries one smoothing parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PenaltyClass {
    National,
    Group,
    Mrf,
    Region,
    DowRegion,
    DowUnit,
}

impl PenaltyClass {
    pub const ALL: [PenaltyClass; 6] = [
        PenaltyClass::National,
        PenaltyClass::Group,
        PenaltyClass::Mrf,
        PenaltyClass::Region,
        PenaltyClass::DowRegion,
        PenaltyClass::DowUnit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyClass::National => "national_smooth",
            PenaltyClass::Group => "group_smooths",
            PenaltyClass::Mrf => "mrf",
            PenaltyClass::Region => "region_effect",
            PenaltyClass::DowRegion => "dow_region",
            PenaltyClass::DowUnit => "dow_unit_deviation",
        }
    }
}

impl fmt::Display for PenaltyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A contiguous range of coefficients with its penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    pub class: PenaltyClass,
    pub cols: Range<usize>,
    /// `width x width`, already scaled to the block's design.
    pub penalty: DMatrix<f64>,
    /// Every row touches only the columns that belong to its own unit.
    pub unit_local: bool,
}

impl DesignBlock {
    pub fn name(&self) -> &'static str {
        self.class.name()
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }
}

/// Everything needed to build a design row for any unit and day, including days
/// past the fitting window.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignLayout {
    pub(crate) unit_ids: Vec<String>,
    pub(crate) region_ids: Vec<String>,
    pub(crate) unit_region: Vec<usize>,
    pub(crate) log_population: Vec<f64>,
    pub(crate) t_length: usize,
    pub(crate) first_dow: usize,
    pub(crate) national: CenteredSmooth,
    pub(crate) national_cols: Range<usize>,
    pub(crate) group: Option<(CenteredSmooth, usize)>,
    pub(crate) mrf_start: Option<usize>,
    pub(crate) region_start: Option<usize>,
    pub(crate) dow_region_start: usize,
    pub(crate) dow_unit_start: Option<usize>,
    pub(crate) n_global: usize,
    pub(crate) n_cols: usize,
}

impl DesignLayout {
    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn unit_region(&self) -> &[usize] {
        &self.unit_region
    }

    pub fn t_length(&self) -> usize {
        self.t_length
    }

    pub fn offset(&self, unit: usize) -> f64 {
        self.log_population[unit]
    }

    pub fn day_of_week(&self, day: i64) -> usize {
        (self.first_dow as i64 + day).rem_euclid(7) as usize
    }

    /// Sparse design row `(column, value)` for `unit` on day index `day`
    /// (0 = first day of the window). Smooths extrapolate linearly past the window.
    pub fn row(&self, unit: usize, day: i64) -> Vec<(usize, f64)> {
        let t = day as f64;
        let dow = self.day_of_week(day);
        let region = self.unit_region[unit];
        let mut row = Vec::with_capacity(32);
        row.push((0, 1.0));
        let nat = self.national.row(t);
        row.extend(nat.iter().enumerate().map(|(j, &v)| (self.national_cols.start + j, v)));
        if let Some(m) = self.mrf_start {
            row.push((m + unit, 1.0));
        }
        if let Some(r) = self.region_start {
            row.push((r + region, 1.0));
        }
        row.push((self.dow_region_start + 7 * region + dow, 1.0));
        if let Some((smooth, start)) = &self.group {
            let w = smooth.width();
            let g = smooth.row(t);
            row.extend(g.iter().enumerate().map(|(j, &v)| (start + unit * w + j, v)));
        }
        if let Some(d) = self.dow_unit_start {
            row.push((d + 7 * unit + dow, 1.0));
        }
        row
    }

    /// Column indices owned by `unit` (its smooth and day-of-week deviation).
    pub(crate) fn local_columns(&self, unit: usize) -> Vec<usize> {
        let mut cols = Vec::new();
        if let Some((smooth, start)) = &self.group {
            let w = smooth.width();
            cols.extend(start + unit * w..start + (unit + 1) * w);
        }
        if let Some(d) = self.dow_unit_start {
            cols.extend(d + 7 * unit..d + 7 * unit + 7);
        }
        cols
    }

    /// Columns of the unit's day-of-week deviation, if that block exists.
    pub fn dow_unit_columns(&self, unit: usize) -> Option<Range<usize>> {
        self.dow_unit_start.map(|d| d + 7 * unit..d + 7 * unit + 7)
    }

    pub fn dow_region_columns(&self, region: usize) -> Range<usize> {
        let s = self.dow_region_start + 7 * region;
        s..s + 7
    }
}

/// Response, offset and sparse rows of the full model, plus its penalized blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlocks {
    pub response: Vec<f64>,
    pub offset: Vec<f64>,
    /// Unit of each row; rows are unit-major.
    pub row_unit: Vec<usize>,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub blocks: Vec<DesignBlock>,
    pub layout: DesignLayout,
    pub warnings: Vec<String>,
}

impl DesignBlocks {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.layout.n_cols
    }

    pub fn block(&self, class: PenaltyClass) -> Option<&DesignBlock> {
        self.blocks.iter().find(|b| b.class == class)
    }

    pub fn classes(&self) -> Vec<PenaltyClass> {
        self.blocks.iter().map(|b| b.class).collect()
    }

    /// Dense `n x p` model matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n_rows(), self.n_cols());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                x[(i, j)] += v;
            }
        }
        x
    }

    /// Linear predictor including the offset.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.offset)
            .map(|(row, off)| off + row.iter().map(|&(j, v)| v * beta[j]).sum::<f64>())
            .collect()
    }

    /// Same design with a different response vector.
    pub fn with_response(&self, response: Vec<f64>) -> Self {
        assert_eq!(response.len(), self.n_rows());
        Self { response, ..self.clone() }
    }
}

/// Max absolute row sum.
fn inf_norm(x: &DMatrix<f64>) -> f64 {
    x.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Rescales `s` so its size is comparable to the cross-product of a block whose
/// rows have absolute sum at most `row_norm`.
fn scale_penalty(s: &DMatrix<f64>, row_norm: f64) -> DMatrix<f64> {
    let norm = inf_norm(s);
    if norm > 0.0 {
        s * (row_norm * row_norm / norm)
    } else {
        s.clone()
    }
}

fn smooth(t_length: usize, t_d: f64) -> Result<CenteredSmooth, GamError> {
    let rank = basis_dimension(BasisConfig { t_length, t_d })?;
    let points: Vec<f64> = (0..t_length).map(|t| t as f64).collect();
    Ok(CenteredSmooth::new(build_basis(&points, rank)?))
}

/// Lays out the model for one fitting window. The panel must span exactly
/// `spec.t_length` days; unit order follows the panel.
pub fn assemble_design(
    panel: &AdmissionsPanel,
    geo: &Geography,
    graph: &AdjacencyGraph,
    cal: &CalendarFeatures,
    spec: &ModelSpec,
) -> Result<DesignBlocks, GamError> {
    spec.validate()?;
    let t_len = spec.t_length;
    if panel.n_days() != t_len {
        return Err(GamError::WindowMismatch { expected: t_len, found: panel.n_days() });
    }
    if cal.start() != panel.start() {
        return Err(GamError::CalendarMismatch);
    }
    let geo = geo.subset(panel.units())?;
    let n_units = geo.n_units();
    let n_regions = geo.n_regions();
    let mut warnings = Vec::new();

    let national = smooth(t_len, spec.t_d_national)?;
    let group = if n_units > 1 {
        Some(smooth(t_len, spec.t_d_group)?)
    } else {
        warnings.push("single unit: group smooth coincides with the national smooth and is dropped".into());
        None
    };
    let use_mrf = n_units > 1;
    if !use_mrf {
        warnings.push("single unit: MRF intercept is dropped".into());
    }
    let use_region = n_regions > 1;
    if !use_region {
        warnings.push("single region: region effect is dropped".into());
    }
    let use_dow_unit = n_units > 1;

    let mut blocks = Vec::new();
    let mut next = 1;
    let national_cols = next..next + national.width();
    next = national_cols.end;
    let nat_design = national.design();
    blocks.push(DesignBlock {
        class: PenaltyClass::National,
        cols: national_cols.clone(),
        penalty: scale_penalty(&national.penalty(), inf_norm(&nat_design)),
        unit_local: false,
    });

    let mrf_start = use_mrf.then_some(next);
    if use_mrf {
        let lap = graph_laplacian(graph, panel.units())?;
        let lap = scale_penalty(&lap, 1.0);
        // the constant direction is otherwise confounded with the intercept
        let centre = DMatrix::from_element(n_units, n_units, 1.0 / n_units as f64);
        blocks.push(DesignBlock {
            class: PenaltyClass::Mrf,
            cols: next..next + n_units,
            penalty: lap + centre,
            unit_local: false,
        });
        next += n_units;
    }
    let region_start = use_region.then_some(next);
    if use_region {
        blocks.push(DesignBlock {
            class: PenaltyClass::Region,
            cols: next..next + n_regions,
            penalty: DMatrix::identity(n_regions, n_regions),
            unit_local: false,
        });
        next += n_regions;
    }
    let dow_region_start = next;
    blocks.push(DesignBlock {
        class: PenaltyClass::DowRegion,
        cols: next..next + 7 * n_regions,
        penalty: DMatrix::identity(7 * n_regions, 7 * n_regions),
        unit_local: false,
    });
    next += 7 * n_regions;
    let n_global = next;

    let group = match group {
        Some(g) => {
            let w = g.width();
            let design = g.design();
            let row_norm = inf_norm(&design);
            let mut unit_pen = scale_penalty(&g.penalty(), row_norm);
            // the unpenalized slope is shrunk too, making unit smooths proper random effects
            unit_pen[(g.linear_column(), g.linear_column())] += row_norm * row_norm;
            let mut pen = DMatrix::zeros(n_units * w, n_units * w);
            for u in 0..n_units {
                pen.view_mut((u * w, u * w), (w, w)).copy_from(&unit_pen);
            }
            blocks.push(DesignBlock {
                class: PenaltyClass::Group,
                cols: next..next + n_units * w,
                penalty: pen,
                unit_local: true,
            });
            let start = next;
            next += n_units * w;
            Some((g, start))
        }
        None => None,
    };
    let dow_unit_start = use_dow_unit.then_some(next);
    if use_dow_unit {
        blocks.push(DesignBlock {
            class: PenaltyClass::DowUnit,
            cols: next..next + 7 * n_units,
            penalty: DMatrix::identity(7 * n_units, 7 * n_units),
            unit_local: true,
        });
        next += 7 * n_units;
    }

    let layout = DesignLayout {
        unit_ids: panel.units().to_vec(),
        region_ids: geo.regions().to_vec(),
        unit_region: (0..n_units).map(|u| geo.region_of(u)).collect(),
        log_population: geo.units().iter().map(|u| u.population.ln()).collect(),
        t_length: t_len,
        first_dow: cal.dow(0),
        national,
        national_cols,
        group,
        mrf_start,
        region_start,
        dow_region_start,
        dow_unit_start,
        n_global,
        n_cols: next,
    };

    let n_rows = n_units * t_len;
    let mut response = Vec::with_capacity(n_rows);
    let mut offset = Vec::with_capacity(n_rows);
    let mut rows = Vec::with_capacity(n_rows);
    let mut row_unit = Vec::with_capacity(n_rows);
    for u in 0..n_units {
        for day in 0..t_len {
            response.push(panel.count(u, day) as f64);
            offset.push(layout.offset(u));
            rows.push(layout.row(u, day as i64));
            row_unit.push(u);
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DesignBlocks { response, offset, row_unit, rows, blocks, layout, warnings })
}

/// Intercept-only design over arbitrary rows, for checking the fitting engine
/// against closed forms.
#[cfg(test)]
pub(crate) fn intercept_only(response: Vec<f64>, offset: Vec<f64>) -> DesignBlocks {
    use crate::harness::{generate_synthetic, SyntheticSpec};
    let data = generate_synthetic(&SyntheticSpec { n_units: 1, n_regions: 1, n_days: 14, ..Default::default() });
    let spec = ModelSpec { t_length: 14, t_d_national: 7.0, t_d_group: 7.0, ..Default::default() };
    let cal = CalendarFeatures::for_panel(&data.panel);
    let mut design = assemble_design(&data.panel, &data.geo, &data.graph, &cal, &spec).unwrap();
    let n = response.len();
    assert_eq!(n, offset.len());
    design.layout.n_global = 1;
    design.layout.n_cols = 1;
    design.rows = vec![vec![(0, 1.0)]; n];
    design.row_unit = vec![0; n];
    design.response = response;
    design.offset = offset;
    design.blocks.clear();
    design.warnings.clear();
    design
}
