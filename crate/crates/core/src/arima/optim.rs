//! Quasi-Newton minimization with finite-difference gradients.

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    #[allow(dead_code)]
    pub value: f64,
    #[allow(dead_code)]
    pub converged: bool,
}

const REL_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const STEP: f64 = 1e-3;

fn gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + STEP;
            let up = f(&probe);
            probe[i] = x[i] - STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with backtracking line search. Non-finite objective values are treated
/// as failed steps.
pub(crate) fn bfgs(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> Option<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return None;
    }
    if n == 0 {
        return Some(Minimum { x, value: fx, converged: true });
    }
    let mut g = gradient(&mut f, &x);
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut since_reset = 0;
    for _ in 0..MAX_ITER {
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            if since_reset == 0 {
                return Some(Minimum { x, value: fx, converged: true });
            }
            h = identity(n);
            since_reset = 0;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.2;
        }
        let Some((x_new, f_new)) = accepted else {
            if since_reset == 0 {
                return Some(Minimum { x, value: fx, converged: true });
            }
            h = identity(n);
            since_reset = 0;
            continue;
        };
        let done = (fx - f_new).abs() <= REL_TOL * (fx.abs() + REL_TOL);
        let g_new = gradient(&mut f, &x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += ((sy + yhy) * s[i] * s[j]) / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
            since_reset += 1;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if done {
            return Some(Minimum { x, value: fx, converged: true });
        }
    }
    Some(Minimum { x, value: fx, converged: false })
}

fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let m = bfgs(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0]).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-2 && (m.x[1] - 1.0).abs() < 2e-2, "{:?}", m.x);
    }

    #[test]
    fn quadratic_exact() {
        let m = bfgs(|x| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2), &[0.0, 0.0]).unwrap();
        assert!((m.x[0] - 3.0).abs() < 1e-5 && (m.x[1] + 1.0).abs() < 1e-5);
    }
}
