//! Lag polynomials written as `1 - c_1 B - c_2 B^2 - ...` and stored as `[c_1, c_2, ...]`.

/// Maps unconstrained reals to the coefficients of a stationary AR polynomial:
/// `tanh` gives partial autocorrelations, Durbin-Levinson turns them into
/// coefficients.
pub fn from_unconstrained(u: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(u.len());
    for (k, &x) in u.iter().enumerate() {
        let r = x.tanh();
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi
}

/// Partial autocorrelations of an AR polynomial, or `None` when a step of the
/// inverse recursion leaves the unit interval.
pub fn partial_autocorrelations(phi: &[f64]) -> Option<Vec<f64>> {
    let mut cur = phi.to_vec();
    let mut pacf = vec![0.0; phi.len()];
    for k in (0..phi.len()).rev() {
        let r = cur[k];
        if !(r.abs() < 1.0) {
            return None;
        }
        pacf[k] = r;
        let denom = 1.0 - r * r;
        let next: Vec<f64> = (0..k).map(|j| (cur[j] + r * cur[k - 1 - j]) / denom).collect();
        cur = next;
    }
    Some(pacf)
}

/// Whether every root of `1 - sum c_k z^k` has modulus above `radius`.
pub fn roots_outside(c: &[f64], radius: f64) -> bool {
    let scaled: Vec<f64> = c.iter().enumerate().map(|(k, &x)| x * radius.powi(k as i32 + 1)).collect();
    partial_autocorrelations(&scaled).is_some()
}

/// Product of `1 - sum a_i B^i` and `1 - sum b_j B^(s j)`.
pub fn multiply_seasonal(a: &[f64], b: &[f64], s: usize) -> Vec<f64> {
    let mut full = vec![0.0; a.len() + s * b.len() + 1];
    full[0] = 1.0;
    for (i, &x) in a.iter().enumerate() {
        full[i + 1] -= x;
    }
    for (j, &y) in b.iter().enumerate() {
        let shift = s * (j + 1);
        full[shift] -= y;
        for (i, &x) in a.iter().enumerate() {
            full[shift + i + 1] += x * y;
        }
    }
    full[1..].iter().map(|v| -v).collect()
}

/// Coefficients of `(1 - B)^d (1 - B^s)^D` in the same convention.
pub fn differencing(d: usize, big_d: usize, s: usize) -> Vec<f64> {
    let mut full = vec![1.0];
    let mut apply = |lag: usize| {
        let mut next = vec![0.0; full.len() + lag];
        for (i, &v) in full.iter().enumerate() {
            next[i] += v;
            next[i + lag] -= v;
        }
        full = next;
    };
    for _ in 0..d {
        apply(1);
    }
    for _ in 0..big_d {
        apply(s);
    }
    full[1..].iter().map(|v| -v).collect()
}

/// Product of two polynomials in the same convention.
pub fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let full_a: Vec<f64> = std::iter::once(1.0).chain(a.iter().map(|v| -v)).collect();
    let full_b: Vec<f64> = std::iter::once(1.0).chain(b.iter().map(|v| -v)).collect();
    let mut out = vec![0.0; full_a.len() + full_b.len() - 1];
    for (i, x) in full_a.iter().enumerate() {
        for (j, y) in full_b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out[1..].iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_round_trip() {
        let u = [0.3, -1.2, 0.7, 2.0];
        let phi = from_unconstrained(&u);
        let pacf = partial_autocorrelations(&phi).unwrap();
        for (a, b) in pacf.iter().zip(&u) {
            assert!((a - b.tanh()).abs() < 1e-12);
        }
        assert!(roots_outside(&phi, 1.0));
    }

    #[test]
    fn unit_root_detected() {
        assert!(!roots_outside(&[1.0], 1.0));
        assert!(roots_outside(&[0.5], 1.0));
        assert!(!roots_outside(&[0.9999999], 1.0 + 1e-6));
        // 1 - 1.5B + 0.56B^2 = (1 - 0.7B)(1 - 0.8B)
        assert!(roots_outside(&[1.5, -0.56], 1.0));
        // (1 - 1.1B)(1 - 0.5B)
        assert!(!roots_outside(&[1.6, -0.55], 1.0));
    }

    #[test]
    fn polynomial_products() {
        // (1 - 0.5B)(1 - 0.4B^7)
        let c = multiply_seasonal(&[0.5], &[0.4], 7);
        let mut expect = vec![0.0; 8];
        expect[0] = 0.5;
        expect[6] = 0.4;
        expect[7] = -0.2;
        assert_eq!(c, expect);
        // (1 - B)^2 = 1 - 2B + B^2
        assert_eq!(differencing(2, 0, 7), vec![2.0, -1.0]);
        let seasonal = differencing(1, 1, 7);
        assert_eq!(seasonal, multiply(&[1.0], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
    }
}
