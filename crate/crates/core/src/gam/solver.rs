//! Penalized weighted least squares exploiting the arrow structure of the design.
//!
//! Columns split into a small global set (intercept, national smooth, MRF, region
//! and regional day-of-week effects) and per-unit local sets (unit smooth and unit
//! day-of-week deviation). Rows of a unit touch only that unit's local columns and
//! no penalty couples local columns of different units, so the normal matrix is
//! block-arrow shaped and is factorised through the Schur complement of the
//! local blocks.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::design::{DesignBlocks, PenaltyClass};
use super::linalg::Chol;
use super::GamError;

pub type Lambdas = BTreeMap<PenaltyClass, f64>;

#[derive(Debug, Clone)]
struct Group {
    /// Coefficient indices of the local columns.
    cols: Vec<usize>,
    /// Global columns touched by this unit's rows, ascending.
    touched: Vec<usize>,
    /// Design rows of this unit.
    rows: Vec<usize>,
    /// Dense design restricted to `rows` x `touched`, and its transpose.
    xg: DMatrix<f64>,
    xgt: DMatrix<f64>,
    /// Dense design restricted to `rows` x `cols`, and its transpose.
    xl: DMatrix<f64>,
    xlt: DMatrix<f64>,
}

/// Penalty in structured form.
#[derive(Debug, Clone)]
pub(crate) struct StructuredPenalty {
    global: DMatrix<f64>,
    local: Vec<DMatrix<f64>>,
}

impl StructuredPenalty {
    fn zeros(structure: &Structure) -> Self {
        Self {
            global: DMatrix::zeros(structure.n_global, structure.n_global),
            local: structure
                .groups
                .iter()
                .map(|g| DMatrix::zeros(g.cols.len(), g.cols.len()))
                .collect(),
        }
    }

    fn add_scaled(&mut self, other: &StructuredPenalty, scale: f64) {
        self.global += &other.global * scale;
        for (a, b) in self.local.iter_mut().zip(&other.local) {
            *a += b * scale;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Structure {
    n_global: usize,
    n_cols: usize,
    groups: Vec<Group>,
    class_penalties: Vec<(PenaltyClass, StructuredPenalty)>,
}

/// Normal equations `X'WX`, `X'Wz` in structured form.
#[derive(Debug, Clone)]
pub(crate) struct Normal {
    gg: DMatrix<f64>,
    /// `m_i x touched_i`
    lg: Vec<DMatrix<f64>>,
    ll: Vec<DMatrix<f64>>,
    bg: DVector<f64>,
    bl: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
struct LocalFactor {
    chol: Chol,
    /// `L_ll^{-1} A_lg`
    half: DMatrix<f64>,
    /// `A_lg`
    cross: DMatrix<f64>,
}

impl LocalFactor {
    /// `A_ll^{-1} A_lg`
    fn coupling(&self) -> DMatrix<f64> {
        self.chol.backward_mat(&self.half)
    }
}

/// Factorisation of `X'WX + S`.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    local: Arc<Vec<Option<LocalFactor>>>,
    schur: Chol,
}

/// Local factors and their Schur-complement and trace contributions, reusable
/// across penalties that differ only in the global block.
#[derive(Debug, Clone)]
pub(crate) struct Partial {
    local: Arc<Vec<Option<LocalFactor>>>,
    /// `A_gg - sum_i A_gl A_ll^{-1} A_lg` without the global penalty.
    schur_base: DMatrix<f64>,
    /// Local terms of `inverse_trace`: a matrix paired with `Sinv` and a constant.
    trace_mat: DMatrix<f64>,
    trace_const: f64,
}

impl Structure {
    pub(crate) fn new(design: &DesignBlocks) -> Self {
        let layout = &design.layout;
        let n_global = layout.n_global;
        let n_units = layout.n_units();
        let mut owner = vec![None; layout.n_cols];
        let mut cols: Vec<Vec<usize>> = (0..n_units)
            .map(|u| {
                let cols = layout.local_columns(u);
                for (l, &c) in cols.iter().enumerate() {
                    owner[c] = Some((u, l));
                }
                cols
            })
            .collect();
        let mut touched = vec![BTreeSet::new(); n_units];
        let mut rows = vec![Vec::new(); n_units];
        for (i, (row, &u)) in design.rows.iter().zip(&design.row_unit).enumerate() {
            touched[u].extend(row.iter().filter(|(c, _)| *c < n_global).map(|(c, _)| *c));
            rows[u].push(i);
        }
        let groups: Vec<Group> = cols
            .drain(..)
            .zip(touched)
            .zip(rows)
            .enumerate()
            .map(|(u, ((cols, touched), rows))| {
                let touched: Vec<usize> = touched.into_iter().collect();
                let mut xg = DMatrix::zeros(rows.len(), touched.len());
                let mut xl = DMatrix::zeros(rows.len(), cols.len());
                for (r, &i) in rows.iter().enumerate() {
                    for &(c, v) in &design.rows[i] {
                        if c < n_global {
                            xg[(r, touched.binary_search(&c).expect("touched column"))] += v;
                        } else {
                            let (owner_unit, l) = owner[c].expect("local column has an owner");
                            debug_assert_eq!(owner_unit, u);
                            xl[(r, l)] += v;
                        }
                    }
                }
                Group { cols, touched, rows, xgt: xg.transpose(), xlt: xl.transpose(), xg, xl }
            })
            .collect();
        let mut structure =
            Self { n_global, n_cols: layout.n_cols, groups, class_penalties: Vec::new() };
        for block in &design.blocks {
            let mut pen = StructuredPenalty::zeros(&structure);
            let cols = block.cols.clone();
            for (a, ca) in cols.clone().enumerate() {
                for (b, cb) in cols.clone().enumerate() {
                    let v = block.penalty[(a, b)];
                    if v == 0.0 {
                        continue;
                    }
                    match (owner[ca], owner[cb]) {
                        (None, None) => pen.global[(ca, cb)] += v,
                        (Some((ua, la)), Some((ub, lb))) if ua == ub => pen.local[ua][(la, lb)] += v,
                        _ => panic!("penalty of block {} couples unrelated columns", block.name()),
                    }
                }
            }
            structure.class_penalties.push((block.class, pen));
        }
        structure
    }

    pub(crate) fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub(crate) fn penalty(&self, lambdas: &Lambdas) -> StructuredPenalty {
        let mut total = StructuredPenalty::zeros(self);
        for (class, pen) in &self.class_penalties {
            let lambda = lambdas.get(class).copied().unwrap_or(1.0);
            total.add_scaled(pen, lambda);
        }
        total
    }

    /// `beta' S beta`
    pub(crate) fn quadratic(&self, pen: &StructuredPenalty, beta: &[f64]) -> f64 {
        let ng = self.n_global;
        let bg = DVector::from_column_slice(&beta[..ng]);
        let mut q = (bg.transpose() * &pen.global * &bg)[0];
        for (g, p) in self.groups.iter().zip(&pen.local) {
            if g.cols.is_empty() {
                continue;
            }
            let bl = DVector::from_iterator(g.cols.len(), g.cols.iter().map(|&c| beta[c]));
            q += (bl.transpose() * p * &bl)[0];
        }
        q
    }

    pub(crate) fn accumulate(&self, w: &[f64], z: &[f64]) -> Normal {
        let ng = self.n_global;
        let mut gg = DMatrix::<f64>::zeros(ng, ng);
        let mut bg = DVector::<f64>::zeros(ng);
        let (mut lg, mut ll, mut bl) = (Vec::new(), Vec::new(), Vec::new());
        for g in &self.groups {
            let wv = DVector::from_iterator(g.rows.len(), g.rows.iter().map(|&i| w[i]));
            let wz = DVector::from_iterator(g.rows.len(), g.rows.iter().map(|&i| w[i] * z[i]));
            let mut wxg = g.xg.clone();
            for mut col in wxg.column_iter_mut() {
                col.component_mul_assign(&wv);
            }
            let block = &g.xgt * &wxg;
            let rhs = &g.xgt * &wz;
            for (a, &ca) in g.touched.iter().enumerate() {
                bg[ca] += rhs[a];
                for (b, &cb) in g.touched.iter().enumerate() {
                    gg[(ca, cb)] += block[(a, b)];
                }
            }
            lg.push(&g.xlt * &wxg);
            let mut wxl = g.xl.clone();
            for mut col in wxl.column_iter_mut() {
                col.component_mul_assign(&wv);
            }
            ll.push(&g.xlt * &wxl);
            bl.push(&g.xlt * &wz);
        }
        Normal { gg, lg, ll, bg, bl }
    }

    pub(crate) fn factor(&self, normal: &Normal, pen: &StructuredPenalty) -> Result<Factor, GamError> {
        let (local, schur_base) = self.local_factors(normal, pen)?;
        let schur = Chol::new(schur_base + &pen.global).ok_or(GamError::SingularSystem)?;
        Ok(Factor { local: Arc::new(local), schur })
    }

    fn local_factors(
        &self,
        normal: &Normal,
        pen: &StructuredPenalty,
    ) -> Result<(Vec<Option<LocalFactor>>, DMatrix<f64>), GamError> {
        let mut schur = normal.gg.clone();
        let mut local = Vec::with_capacity(self.groups.len());
        for (i, g) in self.groups.iter().enumerate() {
            if g.cols.is_empty() {
                local.push(None);
                continue;
            }
            let a_ll = &normal.ll[i] + &pen.local[i];
            let chol = Chol::new(a_ll).ok_or(GamError::SingularSystem)?;
            let cross = normal.lg[i].clone();
            let half = chol.forward_mat(&cross);
            let update = half.transpose() * &half;
            for (a, &ca) in g.touched.iter().enumerate() {
                for (b, &cb) in g.touched.iter().enumerate() {
                    schur[(ca, cb)] -= update[(a, b)];
                }
            }
            local.push(Some(LocalFactor { chol, half, cross }));
        }
        Ok((local, schur))
    }

    /// True when `class` penalizes only global columns.
    pub(crate) fn is_global(&self, class: PenaltyClass) -> bool {
        self.class_penalties
            .iter()
            .filter(|(c, _)| *c == class)
            .all(|(_, p)| p.local.iter().all(|m| m.iter().all(|&v| v == 0.0)))
    }

    /// Everything in the factorisation and the edf that does not depend on the
    /// global part of `pen`.
    pub(crate) fn partial(&self, normal: &Normal, pen: &StructuredPenalty) -> Result<Partial, GamError> {
        let (local, schur_base) = self.local_factors(normal, pen)?;
        let ng = self.n_global;
        let mut trace_mat = DMatrix::zeros(ng, ng);
        let mut trace_const = 0.0;
        for ((g, lf), p) in self.groups.iter().zip(&local).zip(&pen.local) {
            let Some(lf) = lf else { continue };
            let k = lf.chol.inverse_factor();
            let gm = &k * p * k.transpose();
            trace_const += gm.trace();
            let hgh = lf.half.transpose() * (&gm * &lf.half);
            for (a, &ca) in g.touched.iter().enumerate() {
                for (b, &cb) in g.touched.iter().enumerate() {
                    trace_mat[(ca, cb)] += hgh[(a, b)];
                }
            }
        }
        Ok(Partial { local: Arc::new(local), schur_base, trace_mat, trace_const })
    }

    /// Factorisation for a penalty whose local blocks equal those `partial` was built with.
    pub(crate) fn factor_from(&self, partial: &Partial, pen: &StructuredPenalty) -> Result<Factor, GamError> {
        let schur = Chol::new(&partial.schur_base + &pen.global).ok_or(GamError::SingularSystem)?;
        Ok(Factor { local: Arc::clone(&partial.local), schur })
    }

    /// `edf` for a factor obtained from [`Structure::factor_from`].
    pub(crate) fn edf_from(&self, partial: &Partial, factor: &Factor, pen: &StructuredPenalty) -> f64 {
        let schur_inv = factor.schur.inverse();
        let tr = schur_inv.component_mul(&(&pen.global + &partial.trace_mat)).sum() + partial.trace_const;
        self.n_cols as f64 - tr
    }

    pub(crate) fn solve(&self, factor: &Factor, normal: &Normal) -> Vec<f64> {
        let mut rg = normal.bg.clone();
        let mut partial = Vec::with_capacity(self.groups.len());
        for ((g, lf), bl) in self.groups.iter().zip(factor.local.iter()).zip(&normal.bl) {
            match lf {
                Some(lf) => {
                    let y = lf.chol.solve_vec(bl);
                    let r = lf.cross.transpose() * &y;
                    for (a, &ca) in g.touched.iter().enumerate() {
                        rg[ca] -= r[a];
                    }
                    partial.push(y);
                }
                None => partial.push(DVector::zeros(0)),
            }
        }
        let beta_g = factor.schur.solve_vec(&rg);
        let mut beta = vec![0.0; self.n_cols];
        beta[..self.n_global].copy_from_slice(beta_g.as_slice());
        for ((g, lf), y) in self.groups.iter().zip(factor.local.iter()).zip(partial) {
            if let Some(lf) = lf {
                let bt = DVector::from_iterator(g.touched.len(), g.touched.iter().map(|&c| beta_g[c]));
                let bl = y - lf.chol.solve_vec(&(&lf.cross * bt));
                for (l, &c) in g.cols.iter().enumerate() {
                    beta[c] = bl[l];
                }
            }
        }
        beta
    }

    /// `tr((X'WX + S)^{-1} P)` for a structured `P`.
    ///
    /// With `A_ll = L L'`, `K = L^{-1}`, `H = K A_lg` and `G = K P_l K'`, the local
    /// block contributes `tr(G) + tr(Sinv[t, t] H' G H)`.
    pub(crate) fn inverse_trace(&self, factor: &Factor, pen: &StructuredPenalty) -> f64 {
        let schur_inv = factor.schur.inverse();
        let mut tr = schur_inv.component_mul(&pen.global).sum();
        for ((g, lf), p) in self.groups.iter().zip(factor.local.iter()).zip(&pen.local) {
            let Some(lf) = lf else { continue };
            let k = lf.chol.inverse_factor();
            let gm = &k * p * k.transpose();
            tr += gm.trace();
            let hgh = lf.half.transpose() * (&gm * &lf.half);
            for (a, &ca) in g.touched.iter().enumerate() {
                for (b, &cb) in g.touched.iter().enumerate() {
                    tr += schur_inv[(ca, cb)] * hgh[(a, b)];
                }
            }
        }
        tr
    }

    /// Effective degrees of freedom `tr((X'WX + S)^{-1} X'WX) = p - tr((X'WX + S)^{-1} S)`.
    pub(crate) fn edf(&self, factor: &Factor, pen: &StructuredPenalty) -> f64 {
        self.n_cols as f64 - self.inverse_trace(factor, pen)
    }

    /// Dense `(X'WX + S)^{-1}`.
    pub(crate) fn covariance(&self, factor: &Factor) -> DMatrix<f64> {
        let ng = self.n_global;
        let schur_inv = factor.schur.inverse();
        let mut v = DMatrix::zeros(self.n_cols, self.n_cols);
        v.view_mut((0, 0), (ng, ng)).copy_from(&schur_inv);
        // -C_i S^{-1}[touched_i, :]
        let mut cross: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(self.groups.len());
        for (g, lf) in self.groups.iter().zip(factor.local.iter()) {
            let Some(lf) = lf else {
                cross.push(None);
                continue;
            };
            let rows = DMatrix::from_fn(g.touched.len(), ng, |a, b| schur_inv[(g.touched[a], b)]);
            let vlg = -(lf.coupling() * rows);
            for (l, &c) in g.cols.iter().enumerate() {
                for b in 0..ng {
                    v[(c, b)] = vlg[(l, b)];
                    v[(b, c)] = vlg[(l, b)];
                }
            }
            cross.push(Some(vlg));
        }
        let couplings: Vec<Option<DMatrix<f64>>> =
            factor.local.iter().map(|lf| lf.as_ref().map(LocalFactor::coupling)).collect();
        for (i, (gi, lfi)) in self.groups.iter().zip(factor.local.iter()).enumerate() {
            let (Some(lfi), Some(vi)) = (lfi, &cross[i]) else { continue };
            for (j, gj) in self.groups.iter().enumerate().skip(i) {
                let Some(cj) = &couplings[j] else { continue };
                // C_i S^{-1}[t_i, t_j] C_j' = -V_{l_i, g}[:, t_j] C_j'
                let vt = DMatrix::from_fn(gi.cols.len(), gj.touched.len(), |a, b| {
                    vi[(a, gj.touched[b])]
                });
                let mut block = -(vt * cj.transpose());
                if i == j {
                    block += lfi.chol.inverse();
                }
                for (a, &ca) in gi.cols.iter().enumerate() {
                    for (b, &cb) in gj.cols.iter().enumerate() {
                        v[(ca, cb)] = block[(a, b)];
                        v[(cb, ca)] = block[(a, b)];
                    }
                }
            }
        }
        v
    }

    pub(crate) fn sampler(&self, factor: &Factor) -> CovarianceSampler {
        let ng = self.n_global;
        let schur_l = factor.schur.l().clone();
        let locals = self
            .groups
            .iter()
            .zip(factor.local.iter())
            .filter_map(|(g, lf)| {
                lf.as_ref().map(|lf| LocalSampler {
                    cols: g.cols.clone(),
                    touched: g.touched.clone(),
                    chol_l: lf.chol.l().clone(),
                    coupling: lf.coupling(),
                })
            })
            .collect();
        CovarianceSampler { n_global: ng, n_cols: self.n_cols, schur_l, locals }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LocalSampler {
    cols: Vec<usize>,
    touched: Vec<usize>,
    chol_l: DMatrix<f64>,
    coupling: DMatrix<f64>,
}

/// Square root `R` of the coefficient covariance (`V = R R'`) in block form, used
/// to draw correlated coefficient perturbations cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSampler {
    n_global: usize,
    n_cols: usize,
    schur_l: DMatrix<f64>,
    locals: Vec<LocalSampler>,
}

impl CovarianceSampler {
    pub fn dim(&self) -> usize {
        self.n_cols
    }

    /// Maps a standard-normal vector `z` (length `dim`) to `R z ~ N(0, V)`.
    pub fn transform(&self, z: &[f64]) -> Vec<f64> {
        let ng = self.n_global;
        let zg = DVector::from_column_slice(&z[..ng]);
        let ug = self
            .schur_l
            .tr_solve_lower_triangular(&zg)
            .expect("Cholesky factor has a positive diagonal");
        let mut out = vec![0.0; self.n_cols];
        out[..ng].copy_from_slice(ug.as_slice());
        for ls in &self.locals {
            let zl = DVector::from_iterator(ls.cols.len(), ls.cols.iter().map(|&c| z[c]));
            let ul = ls.chol_l.tr_solve_lower_triangular(&zl).expect("positive diagonal");
            let ut = DVector::from_iterator(ls.touched.len(), ls.touched.iter().map(|&c| ug[c]));
            let ul = ul - &ls.coupling * ut;
            for (l, &c) in ls.cols.iter().enumerate() {
                out[c] = ul[l];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CalendarFeatures;
    use crate::gam::{assemble_design, ModelSpec};
    use crate::harness::{generate_synthetic, SyntheticSpec};

    fn small_design() -> DesignBlocks {
        let data = generate_synthetic(&SyntheticSpec {
            n_units: 5,
            n_regions: 2,
            n_days: 28,
            peak_day: 20.0,
            ..Default::default()
        });
        let spec = ModelSpec { t_length: 28, t_d_national: 7.0, t_d_group: 7.0, ..Default::default() };
        let cal = CalendarFeatures::for_panel(&data.panel);
        assemble_design(&data.panel, &data.geo, &data.graph, &cal, &spec).unwrap()
    }

    fn lambdas() -> Lambdas {
        [
            (PenaltyClass::National, 0.3),
            (PenaltyClass::Group, 2.0),
            (PenaltyClass::Mrf, 0.7),
            (PenaltyClass::Region, 5.0),
            (PenaltyClass::DowRegion, 1.5),
            (PenaltyClass::DowUnit, 11.0),
        ]
        .into_iter()
        .collect()
    }

    fn dense_penalty(design: &DesignBlocks, lambdas: &Lambdas) -> DMatrix<f64> {
        let p = design.n_cols();
        let mut s = DMatrix::zeros(p, p);
        for b in &design.blocks {
            let l = lambdas[&b.class];
            for (i, ci) in b.cols.clone().enumerate() {
                for (j, cj) in b.cols.clone().enumerate() {
                    s[(ci, cj)] += l * b.penalty[(i, j)];
                }
            }
        }
        s
    }

    #[test]
    fn structured_solve_matches_dense() {
        let design = small_design();
        let n = design.n_rows();
        let w: Vec<f64> = (0..n).map(|i| 0.5 + (i % 7) as f64 * 0.3).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 * 0.1 - 0.4).collect();
        let lam = lambdas();

        let structure = Structure::new(&design);
        let pen = structure.penalty(&lam);
        let normal = structure.accumulate(&w, &z);
        let factor = structure.factor(&normal, &pen).unwrap();
        let beta = structure.solve(&factor, &normal);

        let x = design.dense();
        let wx = DMatrix::from_fn(n, x.ncols(), |i, j| w[i] * x[(i, j)]);
        let xtwx = x.transpose() * &wx;
        let xtwz = wx.transpose() * DVector::from_column_slice(&z);
        let s = dense_penalty(&design, &lam);
        let a = &xtwx + &s;
        let chol = nalgebra::Cholesky::new(a.clone()).unwrap();
        let dense_beta = chol.solve(&xtwz);
        for (b, d) in beta.iter().zip(dense_beta.iter()) {
            assert!((b - d).abs() < 1e-8 * (1.0 + d.abs()), "{b} vs {d}");
        }

        let v = chol.inverse();
        let edf = (&v * &xtwx).trace();
        assert!((structure.edf(&factor, &pen) - edf).abs() < 1e-7, "edf");
        let cov = structure.covariance(&factor);
        assert!((&cov - &v).amax() < 1e-9);

        // R R' = V for the sampler's square root
        let sampler = structure.sampler(&factor);
        let p = sampler.dim();
        let r = DMatrix::from_fn(p, p, |_, _| 0.0);
        let mut r = r;
        for k in 0..p {
            let mut e = vec![0.0; p];
            e[k] = 1.0;
            r.set_column(k, &DVector::from_vec(sampler.transform(&e)));
        }
        assert!((&r * r.transpose() - &v).amax() < 1e-9);
    }

    #[test]
    fn reused_local_factors_match_full_factorisation() {
        let design = small_design();
        let n = design.n_rows();
        let w: Vec<f64> = (0..n).map(|i| 0.5 + (i % 5) as f64 * 0.2).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 31) % 13) as f64 * 0.1 - 0.6).collect();
        let structure = Structure::new(&design);
        let normal = structure.accumulate(&w, &z);
        let base = lambdas();
        assert!(structure.is_global(PenaltyClass::National));
        assert!(!structure.is_global(PenaltyClass::Group));
        let partial = structure.partial(&normal, &structure.penalty(&base)).unwrap();
        for lambda in [1e-3, 1.0, 1e3] {
            let mut lam = base.clone();
            lam.insert(PenaltyClass::National, lambda);
            let pen = structure.penalty(&lam);
            let full = structure.factor(&normal, &pen).unwrap();
            let reused = structure.factor_from(&partial, &pen).unwrap();
            let (a, b) = (structure.solve(&full, &normal), structure.solve(&reused, &normal));
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10 * (1.0 + x.abs())));
            let (e1, e2) = (structure.edf(&full, &pen), structure.edf_from(&partial, &reused, &pen));
            assert!((e1 - e2).abs() < 1e-8, "{e1} vs {e2}");
        }
    }

    #[test]
    fn quadratic_matches_dense() {
        let design = small_design();
        let lam = lambdas();
        let structure = Structure::new(&design);
        let pen = structure.penalty(&lam);
        let beta: Vec<f64> = (0..design.n_cols()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let s = dense_penalty(&design, &lam);
        let b = DVector::from_vec(beta.clone());
        let dense = (b.transpose() * s * &b)[0];
        assert!((structure.quadratic(&pen, &beta) - dense).abs() < 1e-9 * dense.abs());
    }
}
