//! Small dense Cholesky kernels. The systems here are tiny (tens to a few
//! hundred columns) and solved thousands of times per fit, so these work directly
//! on column-major storage.

use nalgebra::{DMatrix, DVector};

/// Lower Cholesky factor `L` with `A = L L'`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Chol {
    l: DMatrix<f64>,
}

impl Chol {
    /// Factorises a symmetric positive definite matrix; only the lower triangle is read.
    pub fn new(mut a: DMatrix<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let s = a.as_mut_slice();
        for j in 0..n {
            let (head, tail) = s.split_at_mut(j * n);
            let col_j = &mut tail[..n];
            for k in 0..j {
                let col_k = &head[k * n..k * n + n];
                let ljk = col_k[j];
                if ljk != 0.0 {
                    for (x, &l) in col_j[j..].iter_mut().zip(&col_k[j..]) {
                        *x -= l * ljk;
                    }
                }
            }
            let d = col_j[j];
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            col_j[j] = d;
            let inv = 1.0 / d;
            for x in &mut col_j[j + 1..] {
                *x *= inv;
            }
            for x in &mut col_j[..j] {
                *x = 0.0;
            }
        }
        Some(Self { l: a })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    fn col(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.l.as_slice()[j * n..j * n + n]
    }

    /// Solves `L x = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        for j in 0..self.dim() {
            let col = self.col(j);
            let x = b[j] / col[j];
            b[j] = x;
            if x != 0.0 {
                for (bi, &li) in b[j + 1..].iter_mut().zip(&col[j + 1..]) {
                    *bi -= li * x;
                }
            }
        }
    }

    /// Solves `L' x = b` in place.
    pub fn backward(&self, b: &mut [f64]) {
        for j in (0..self.dim()).rev() {
            let col = self.col(j);
            let dot: f64 = b[j + 1..].iter().zip(&col[j + 1..]).map(|(x, l)| x * l).sum();
            b[j] = (b[j] - dot) / col[j];
        }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// `L^{-1} B`, column by column.
    pub fn forward_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.dim();
        if n > 0 {
            for col in x.as_mut_slice().chunks_mut(n) {
                self.forward(col);
            }
        }
        x
    }

    /// `L^{-T} B`, column by column.
    pub fn backward_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.dim();
        if n > 0 {
            for col in x.as_mut_slice().chunks_mut(n) {
                self.backward(col);
            }
        }
        x
    }

    /// `A^{-1} B`, column by column.
    #[cfg(test)]
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let n = self.dim();
        if n > 0 {
            for col in x.as_mut_slice().chunks_mut(n) {
                self.solve_in_place(col);
            }
        }
        x
    }

    /// `K = L^{-1}`, lower triangular.
    pub fn inverse_factor(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for (j, col) in k.as_mut_slice().chunks_mut(n.max(1)).enumerate().take(n) {
            col[j] = 1.0;
            for c in j..n {
                let lc = self.col(c);
                let x = col[c] / lc[c];
                col[c] = x;
                for (v, &l) in col[c + 1..].iter_mut().zip(&lc[c + 1..]) {
                    *v -= l * x;
                }
            }
        }
        k
    }

    /// `A^{-1} = K'K` with `K = L^{-1}`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let k = self.inverse_factor();
        let ks = k.as_slice();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        let is = inv.as_mut_slice();
        // (K'K)_{ab} = sum_{r >= max(a, b)} K_{ra} K_{rb}
        for a in 0..n {
            let ca = &ks[a * n..a * n + n];
            for b in a..n {
                let cb = &ks[b * n..b * n + n];
                let v: f64 = ca[b..].iter().zip(&cb[b..]).map(|(x, y)| x * y).sum();
                is[a + b * n] = v;
                is[b + a * n] = v;
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        let b = DMatrix::from_fn(n, n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn matches_nalgebra() {
        for n in [1, 2, 7, 30] {
            let a = spd(n, n as u64);
            let ours = Chol::new(a.clone()).unwrap();
            let theirs = nalgebra::Cholesky::new(a.clone()).unwrap();
            assert!((ours.l() - theirs.l()).amax() < 1e-12);
            assert!((ours.inverse() - theirs.inverse()).amax() < 1e-9);
            let b = DMatrix::from_fn(n, 3, |i, j| (i + 2 * j) as f64);
            assert!((ours.solve_mat(&b) - theirs.solve(&b)).amax() < 1e-9);
            let half = ours.forward_mat(&b);
            assert!((ours.backward_mat(&half) - theirs.solve(&b)).amax() < 1e-9);
            let k = ours.inverse_factor();
            assert!((&k * ours.l() - DMatrix::identity(n, n)).amax() < 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Chol::new(a).is_none());
    }
}
