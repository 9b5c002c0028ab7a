//! Low-rank thin-plate regression spline in one dimension.
//!
//! The wiggly part is the leading eigen-space of the `r^3` radial kernel restricted to
//! coefficient vectors orthogonal to the polynomials `{1, t}`; the unpenalized part
//! is `{1, t}` itself. Past the last sample point the basis continues linearly along
//! its analytic tangent, so every fitted smooth extrapolates with constant slope.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("basis dimension {0} is below 2")]
    DimensionTooSmall(usize),
    #[error("invalid basis configuration: t_length {t_length}, t_d {t_d}")]
    InvalidConfig { t_length: usize, t_d: f64 },
    #[error("{points} distinct points cannot support a basis of rank {rank}")]
    InsufficientPoints { points: usize, rank: usize },
    #[error("duplicate or non-finite sample point {0}")]
    DegeneratePoints(f64),
    #[error("t = {t} lies beyond the last fitted point {t_max}")]
    OutOfRange { t: f64, t_max: f64 },
}

/// Window length and days per basis function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisConfig {
    pub t_length: usize,
    pub t_d: f64,
}

/// Number of basis functions `k - 1 = floor(t_length / t_d)`.
pub fn basis_dimension(cfg: BasisConfig) -> Result<usize, BasisError> {
    if !(cfg.t_d > 0.0) || !cfg.t_d.is_finite() {
        return Err(BasisError::InvalidConfig { t_length: cfg.t_length, t_d: cfg.t_d });
    }
    // the epsilon keeps exact ratios such as 63 / 6.3 from rounding down
    let k = (cfg.t_length as f64 / cfg.t_d + 1e-9).floor() as usize;
    if k < 2 {
        return Err(BasisError::DimensionTooSmall(k));
    }
    Ok(k)
}

/// Radial kernel `eta(r) = r^3`.
#[inline]
pub fn kernel(r: f64) -> f64 {
    r * r * r
}

/// Derivative of `eta(|t - s|)` with respect to `t`.
#[inline]
fn kernel_slope(t: f64, s: f64) -> f64 {
    let d = t - s;
    3.0 * d * d.abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    points: Vec<f64>,
    /// `n x (rank - 2)` map from kernel evaluations to wiggly basis values.
    weights: DMatrix<f64>,
    penalty: DMatrix<f64>,
    rank: usize,
}

impl SplineBasis {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sample_points(&self) -> &[f64] {
        &self.points
    }

    pub fn t_max_fit(&self) -> f64 {
        *self.points.last().expect("basis has points")
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Kernel-to-basis coefficient map (one row per sample point).
    pub fn kernel_weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Number of penalized (wiggly) columns; the last two columns are `1` and `t`.
    pub fn n_wiggly(&self) -> usize {
        self.rank - 2
    }

    pub fn constant_column(&self) -> usize {
        self.rank - 2
    }

    pub fn linear_column(&self) -> usize {
        self.rank - 1
    }

    fn row_unchecked(&self, t: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.rank);
        for (i, &s) in self.points.iter().enumerate() {
            let e = kernel((t - s).abs());
            for j in 0..self.n_wiggly() {
                row[j] += e * self.weights[(i, j)];
            }
        }
        row[self.rank - 2] = 1.0;
        row[self.rank - 1] = t;
        row
    }

    /// Analytic derivative of each basis function at `t`.
    pub fn derivative(&self, t: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.rank);
        for (i, &s) in self.points.iter().enumerate() {
            let e = kernel_slope(t, s);
            for j in 0..self.n_wiggly() {
                row[j] += e * self.weights[(i, j)];
            }
        }
        row[self.rank - 1] = 1.0;
        row
    }

    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>, BasisError> {
        let t_max = self.t_max_fit();
        if t > t_max || t.is_nan() {
            return Err(BasisError::OutOfRange { t, t_max });
        }
        Ok(self.row_unchecked(t))
    }

    /// Basis row that continues linearly past the last sample point.
    pub fn evaluate_extrapolated(&self, t: f64) -> DVector<f64> {
        let t_max = self.t_max_fit();
        if t <= t_max {
            return self.row_unchecked(t);
        }
        self.row_unchecked(t_max) + (t - t_max) * self.derivative(t_max)
    }

    /// `n x rank` design matrix at the sample points.
    pub fn design(&self) -> DMatrix<f64> {
        let rows: Vec<_> = self.points.iter().map(|&t| self.row_unchecked(t).transpose()).collect();
        DMatrix::from_rows(&rows)
    }
}

/// Orthonormal basis (`n x (n - m)`) for the orthogonal complement of the columns of `a`.
fn orthogonal_complement(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = a.shape();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    for k in 0..m {
        let x = r.view((k, k), (n - k, 1)).clone_owned();
        let alpha = -x[0].signum() * x.norm();
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm == 0.0 {
            continue;
        }
        v /= vnorm;
        // R <- H R, Q <- Q H with H = I - 2 v v'
        let mut rk = r.view_mut((k, 0), (n - k, m));
        let vr = v.transpose() * &rk;
        rk -= 2.0 * &v * vr;
        let mut qk = q.view_mut((0, k), (n, n - k));
        let qv = &qk * &v;
        qk -= 2.0 * qv * v.transpose();
    }
    q.columns(m, n - m).clone_owned()
}

/// Builds a rank-`rank` thin-plate regression spline over `points`.
pub fn build_basis(points: &[f64], rank: usize) -> Result<SplineBasis, BasisError> {
    if rank < 2 {
        return Err(BasisError::DimensionTooSmall(rank));
    }
    let mut pts = points.to_vec();
    if let Some(bad) = pts.iter().find(|t| !t.is_finite()) {
        return Err(BasisError::DegeneratePoints(*bad));
    }
    pts.sort_by(f64::total_cmp);
    if let Some(w) = pts.windows(2).find(|w| w[0] == w[1]) {
        return Err(BasisError::DegeneratePoints(w[0]));
    }
    let n = pts.len();
    if n < rank || n < 2 {
        return Err(BasisError::InsufficientPoints { points: n, rank });
    }
    let n_wiggly = rank - 2;
    if n_wiggly == 0 {
        return Ok(SplineBasis {
            points: pts,
            weights: DMatrix::zeros(n, 0),
            penalty: DMatrix::zeros(2, 2),
            rank,
        });
    }

    let e = DMatrix::from_fn(n, n, |i, j| kernel((pts[i] - pts[j]).abs()));
    let t = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { pts[i] });
    let z = orthogonal_complement(&t);
    let constrained = z.transpose() * &e * &z;
    let constrained = (&constrained + constrained.transpose()) * 0.5;
    let eig = SymmetricEigen::new(constrained);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lead = &order[..n_wiggly];

    // column j of the wiggly basis at the sample points is E z u_j
    let mut weights = DMatrix::zeros(n, n_wiggly);
    let mut diag = vec![0.0; n_wiggly];
    for (j, &k) in lead.iter().enumerate() {
        let w = &z * eig.eigenvectors.column(k);
        let col = &e * &w;
        let rms = (col.norm_squared() / n as f64).sqrt();
        let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
        weights.set_column(j, &(w * scale));
        diag[j] = eig.eigenvalues[k].max(0.0) * scale * scale;
    }
    let mut penalty = DMatrix::zeros(rank, rank);
    for (j, d) in diag.into_iter().enumerate() {
        penalty[(j, j)] = d;
    }
    Ok(SplineBasis { points: pts, weights, penalty, rank })
}

/// A smooth with the constant column removed and the remaining columns centred
/// over the sample points, so it is orthogonal to model intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredSmooth {
    basis: SplineBasis,
    kept: Vec<usize>,
    means: Vec<f64>,
}

impl CenteredSmooth {
    pub fn new(basis: SplineBasis) -> Self {
        let kept: Vec<usize> = (0..basis.rank()).filter(|&j| j != basis.constant_column()).collect();
        let x = basis.design();
        let n = x.nrows() as f64;
        let means = kept.iter().map(|&j| x.column(j).sum() / n).collect();
        Self { basis, kept, means }
    }

    pub fn width(&self) -> usize {
        self.kept.len()
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    /// Index of the (centred) linear-in-t column.
    pub fn linear_column(&self) -> usize {
        self.width() - 1
    }

    pub fn penalty(&self) -> DMatrix<f64> {
        let p = self.basis.penalty();
        DMatrix::from_fn(self.width(), self.width(), |a, b| p[(self.kept[a], self.kept[b])])
    }

    fn center(&self, full: DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.width(),
            self.kept.iter().zip(&self.means).map(|(&j, m)| full[j] - m),
        )
    }

    /// Row at `t`, extrapolating linearly past the last sample point.
    pub fn row(&self, t: f64) -> DVector<f64> {
        self.center(self.basis.evaluate_extrapolated(t))
    }

    pub fn design(&self) -> DMatrix<f64> {
        let rows: Vec<_> =
            self.basis.sample_points().iter().map(|&t| self.row(t).transpose()).collect();
        DMatrix::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn days(n: usize) -> Vec<f64> {
        (0..n).map(|t| t as f64).collect()
    }

    #[test]
    fn basis_dimension_rule() {
        let dim = |t_length, t_d| basis_dimension(BasisConfig { t_length, t_d });
        assert_eq!(dim(63, 5.0), Ok(12));
        assert_eq!(dim(63, 31.5), Ok(2));
        assert_eq!(dim(63, 4.0), Ok(15));
        assert_eq!(dim(63, 6.3), Ok(10));
        assert_eq!(dim(63, 63.0), Err(BasisError::DimensionTooSmall(1)));
        assert!(dim(63, 0.0).is_err());
    }

    #[test]
    fn shape_and_penalty_rank() {
        let pts: Vec<f64> = (1..=10).map(f64::from).collect();
        let b = build_basis(&pts, 4).unwrap();
        let x = b.design();
        assert_eq!(x.shape(), (10, 4));
        let ev = b.penalty().symmetric_eigenvalues();
        let scale = ev.amax();
        assert_eq!(ev.iter().filter(|v| v.abs() > 1e-10 * scale).count(), 2);
        assert_eq!(x.rank(1e-10), 4);
    }

    #[test]
    fn linear_data_reproduced_for_any_penalty() {
        let pts = days(63);
        let b = build_basis(&pts, 12).unwrap();
        let x = b.design();
        let y = DVector::from_iterator(63, pts.iter().map(|t| 2.0 * t + 1.0));
        for lambda in [0.0, 1.0, 1e6] {
            let a = x.transpose() * &x + b.penalty() * lambda;
            let coef = a.lu().solve(&(x.transpose() * &y)).unwrap();
            let resid = (&x * coef - &y).amax();
            assert!(resid < 1e-8, "lambda {lambda}: residual {resid}");
        }
    }

    #[test]
    fn linear_coefficients_unpenalized() {
        let b = build_basis(&days(30), 8).unwrap();
        let mut c = DVector::zeros(8);
        c[b.constant_column()] = 3.0;
        c[b.linear_column()] = -0.7;
        let q = (c.transpose() * b.penalty() * &c)[0];
        assert!(q.abs() < 1e-10);
    }

    #[test]
    fn evaluation_matches_construction_and_kernel() {
        let pts = days(20);
        let b = build_basis(&pts, 7).unwrap();
        let x = b.design();
        assert_eq!(b.evaluate(0.0).unwrap().transpose(), x.row(0).clone_owned());
        let mid = b.evaluate(4.5).unwrap();
        assert!(mid.iter().all(|v| v.is_finite()) && mid.norm() > 0.0);
        assert!(matches!(b.evaluate(19.5), Err(BasisError::OutOfRange { .. })));

        // independent recomputation from the kernel definition
        let t = 7.25;
        let row = b.evaluate(t).unwrap();
        for j in 0..b.n_wiggly() {
            let direct: f64 = pts
                .iter()
                .enumerate()
                .map(|(i, s)| (t - s).abs().powi(3) * b.kernel_weights()[(i, j)])
                .sum();
            assert!((row[j] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
        assert_eq!(row[b.constant_column()], 1.0);
        assert_eq!(row[b.linear_column()], t);
    }

    #[test]
    fn extrapolation_continuity_and_slope() {
        let b = build_basis(&days(63), 12).unwrap();
        let t_max = b.t_max_fit();
        assert_eq!(b.evaluate_extrapolated(t_max), b.evaluate(t_max).unwrap());
        let coef = DVector::from_fn(12, |i, _| ((i * 7 + 3) % 5) as f64 - 2.0);
        let f = |t: f64| b.evaluate_extrapolated(t).dot(&coef);
        for h in 1..=12 {
            let t = t_max + h as f64;
            let second = f(t + 1.0) - 2.0 * f(t) + f(t - 1.0);
            assert!(second.abs() < 1e-8 * f(t).abs().max(1.0), "{second}");
        }
        // central difference of the kernel-form smooth, evaluated directly from its definition
        let raw = |t: f64| {
            let mut v = coef[b.constant_column()] + coef[b.linear_column()] * t;
            for j in 0..b.n_wiggly() {
                for (i, s) in b.sample_points().iter().enumerate() {
                    v += coef[j] * (t - s).abs().powi(3) * b.kernel_weights()[(i, j)];
                }
            }
            v
        };
        let eps = 1e-3;
        let fd = (raw(t_max + eps) - raw(t_max - eps)) / (2.0 * eps);
        let slope = f(t_max + 1.0) - f(t_max);
        assert!(((slope - fd) / slope).abs() < 1e-4, "{slope} vs {fd}");
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            build_basis(&[0.0, 1.0, 2.0], 4),
            Err(BasisError::InsufficientPoints { points: 3, rank: 4 })
        );
        assert_eq!(build_basis(&[0.0, 1.0, 1.0, 2.0], 3), Err(BasisError::DegeneratePoints(1.0)));
        assert_eq!(build_basis(&days(5), 1), Err(BasisError::DimensionTooSmall(1)));
        let linear = build_basis(&days(5), 2).unwrap();
        assert_eq!(linear.n_wiggly(), 0);
    }

    #[test]
    fn centered_smooth_drops_constant() {
        let s = CenteredSmooth::new(build_basis(&days(63), 12).unwrap());
        assert_eq!(s.width(), 11);
        let x = s.design();
        for j in 0..x.ncols() {
            assert!(x.column(j).sum().abs() < 1e-9 * x.column(j).amax().max(1.0));
        }
        assert_eq!(s.penalty().shape(), (11, 11));
    }
}
