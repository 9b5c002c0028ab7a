//! Exact Gaussian likelihood of a zero-mean ARMA process through its
//! state-space form, with the stationary initial state covariance.
//!
//! State `a_t` of dimension `r = max(p, q + 1)` evolves as `a_t = T a_{t-1} + R e_t`
//! with `T` the companion matrix (AR coefficients down the first column, ones on
//! the superdiagonal) and `R = (1, theta_1, ..., theta_{r-1})`; the observation is
//! the first state element. Covariances are in units of the innovation variance.

use nalgebra::DMatrix;

pub(crate) struct StateSpace {
    r: usize,
    phi: Vec<f64>,
    rvec: Vec<f64>,
}

/// Result of running the filter over a series.
#[derive(Debug, Clone)]
pub(crate) struct Filtered {
    /// Sum of squared standardized innovations `v^2 / F`.
    pub ssq: f64,
    /// Sum of `ln F`.
    pub sum_log_f: f64,
    pub n: usize,
    /// Predicted state one step past the data.
    pub next_state: Vec<f64>,
}

impl Filtered {
    /// Innovation variance maximizing the likelihood.
    pub fn sigma2(&self) -> f64 {
        self.ssq / self.n as f64
    }

    /// Log-likelihood at innovation variance `sigma2`.
    pub fn loglik(&self, sigma2: f64) -> f64 {
        let n = self.n as f64;
        -0.5 * (n * (2.0 * std::f64::consts::PI * sigma2).ln() + self.sum_log_f + self.ssq / sigma2)
    }

    /// Objective minimized during estimation: `-loglik / n` up to constants, with
    /// the variance profiled out.
    pub fn profile_objective(&self) -> f64 {
        let n = self.n as f64;
        0.5 * ((self.ssq / n).ln() + self.sum_log_f / n)
    }
}

impl StateSpace {
    /// `phi`: AR coefficients (`x_t = sum phi_i x_{t-i} + ...`), `theta`: MA coefficients
    /// (`... + e_t + sum theta_j e_{t-j}`).
    pub fn new(phi: &[f64], theta: &[f64]) -> Self {
        let r = phi.len().max(theta.len() + 1);
        let mut p = vec![0.0; r];
        p[..phi.len()].copy_from_slice(phi);
        let mut rvec = vec![0.0; r];
        rvec[0] = 1.0;
        rvec[1..=theta.len()].copy_from_slice(theta);
        Self { r, phi: p, rvec }
    }

    #[cfg(test)]
    pub fn dim(&self) -> usize {
        self.r
    }

    fn transition(&self) -> DMatrix<f64> {
        let r = self.r;
        DMatrix::from_fn(r, r, |i, j| if j == 0 { self.phi[i] } else if j == i + 1 { 1.0 } else { 0.0 })
    }

    /// Stationary state covariance: solves `P = T P T' + R R'` by doubling.
    pub fn initial_covariance(&self) -> DMatrix<f64> {
        let r = self.r;
        let rr = DMatrix::from_fn(r, r, |i, j| self.rvec[i] * self.rvec[j]);
        let mut p = rr;
        let mut a = self.transition();
        for _ in 0..64 {
            let step = &a * &p * a.transpose();
            let size = step.amax();
            p += step;
            if size <= 1e-15 * p.amax() {
                break;
            }
            a = &a * &a;
        }
        p
    }

    /// In-place `P <- T P T' + R R'`, using the companion structure.
    fn predict_covariance(&self, p: &mut [f64], tmp: &mut [f64]) {
        let r = self.r;
        // tmp = T P (row-major r x r)
        for i in 0..r {
            for j in 0..r {
                let below = if i + 1 < r { p[(i + 1) * r + j] } else { 0.0 };
                tmp[i * r + j] = self.phi[i] * p[j] + below;
            }
        }
        // P = tmp T' + R R'
        for i in 0..r {
            for j in 0..r {
                let right = if j + 1 < r { tmp[i * r + j + 1] } else { 0.0 };
                p[i * r + j] = tmp[i * r] * self.phi[j] + right + self.rvec[i] * self.rvec[j];
            }
        }
    }

    /// Runs the filter over the zero-mean series `x`.
    pub fn filter(&self, x: &[f64]) -> Filtered {
        let r = self.r;
        let p0 = self.initial_covariance();
        let mut p: Vec<f64> = (0..r * r).map(|k| p0[(k / r, k % r)]).collect();
        let mut tmp = vec![0.0; r * r];
        let mut a = vec![0.0; r];
        let mut k = vec![0.0; r];
        let (mut ssq, mut sum_log_f) = (0.0, 0.0);
        let mut steady = false;
        for &obs in x {
            let f = p[0];
            let v = obs - a[0];
            ssq += v * v / f;
            sum_log_f += f.ln();
            for i in 0..r {
                k[i] = p[i * r] / f;
                a[i] += k[i] * v;
            }
            if !steady {
                // P <- P - P[:,0] P[0,:] / F
                let col0: Vec<f64> = (0..r).map(|i| p[i * r]).collect();
                for i in 0..r {
                    for j in 0..r {
                        p[i * r + j] -= col0[i] * col0[j] / f;
                    }
                }
                self.predict_covariance(&mut p, &mut tmp);
                // once the prediction variance settles at the innovation variance
                // the covariance recursion has reached its fixed point
                if (p[0] - 1.0).abs() < 1e-12 && (f - 1.0).abs() < 1e-12 {
                    steady = true;
                }
            }
            let a0 = a[0];
            for i in 0..r {
                let below = if i + 1 < r { a[i + 1] } else { 0.0 };
                a[i] = self.phi[i] * a0 + below;
            }
        }
        Filtered { ssq, sum_log_f, n: x.len(), next_state: a }
    }

    /// `T^h a`, first element, for `h = 1, 2, ...` starting from `state` (already
    /// one step ahead).
    pub fn project(&self, state: &[f64], horizon: usize) -> Vec<f64> {
        let mut a = state.to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            out.push(a[0]);
            let a0 = a[0];
            for i in 0..self.r {
                let below = if i + 1 < self.r { a[i + 1] } else { 0.0 };
                a[i] = self.phi[i] * a0 + below;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_initial_variance() {
        let ss = StateSpace::new(&[0.6], &[]);
        let p = ss.initial_covariance();
        assert!((p[(0, 0)] - 1.0 / (1.0 - 0.36)).abs() < 1e-12);
    }

    #[test]
    fn arma11_initial_variance() {
        let (phi, theta) = (0.5, 0.4);
        let ss = StateSpace::new(&[phi], &[theta]);
        let p = ss.initial_covariance();
        let gamma0 = (1.0 + 2.0 * phi * theta + theta * theta) / (1.0 - phi * phi);
        assert!((p[(0, 0)] - gamma0).abs() < 1e-12);
    }

    #[test]
    fn structured_prediction_matches_dense() {
        let ss = StateSpace::new(&[0.3, -0.2, 0.1], &[0.5, 0.25, -0.1, 0.05]);
        let r = ss.dim();
        let p0 = DMatrix::from_fn(r, r, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let t = ss.transition();
        let rv = DMatrix::from_column_slice(r, 1, &ss.rvec);
        let dense = &t * &p0 * t.transpose() + &rv * rv.transpose();
        let mut p: Vec<f64> = (0..r * r).map(|k| p0[(k / r, k % r)]).collect();
        let mut tmp = vec![0.0; r * r];
        ss.predict_covariance(&mut p, &mut tmp);
        for k in 0..r * r {
            assert!((p[k] - dense[(k / r, k % r)]).abs() < 1e-14);
        }
    }
}
