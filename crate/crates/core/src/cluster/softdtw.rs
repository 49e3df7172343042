//! Soft-DTW over 2D step sequences stored as interleaved flat slices.
//!
//! `R[i][j] = cost(a_i, b_j) + softmin_γ(R[i-1][j-1], R[i-1][j], R[i][j-1])`
//! with squared Euclidean step cost and
//! `softmin_γ(x) = -γ log Σ exp(-x_k / γ)`.

use crate::error::{Error, Result};
use crate::trajectory::{flatten_steps, Point};

fn check(a: &[f64], b: &[f64], gamma: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("soft-DTW gamma must be positive, got {gamma}")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("soft-DTW needs non-empty series"));
    }
    if a.len() % 2 != 0 || b.len() % 2 != 0 {
        return Err(Error::invalid("soft-DTW series must hold 2D steps"));
    }
    Ok(())
}

#[inline]
fn step_cost(a: &[f64], i: usize, b: &[f64], j: usize) -> f64 {
    let dx = a[2 * i] - b[2 * j];
    let dy = a[2 * i + 1] - b[2 * j + 1];
    dx * dx + dy * dy
}

#[inline]
fn softmin3(x: f64, y: f64, z: f64, gamma: f64) -> f64 {
    let m = x.min(y).min(z);
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    let s = (-(x - m) / gamma).exp() + (-(y - m) / gamma).exp() + (-(z - m) / gamma).exp();
    m - gamma * s.ln()
}

/// Forward table with an extra border row/column of +inf, `(n+1) x (m+1)`.
fn forward(a: &[f64], b: &[f64], gamma: f64) -> (Vec<f64>, usize, usize) {
    let n = a.len() / 2;
    let m = b.len() / 2;
    let w = m + 2;
    // (n+2) x (m+2) so the backward pass can reuse the buffer
    let mut r = vec![f64::INFINITY; (n + 2) * w];
    r[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let prev = softmin3(r[(i - 1) * w + j - 1], r[(i - 1) * w + j], r[i * w + j - 1], gamma);
            r[i * w + j] = step_cost(a, i - 1, b, j - 1) + prev;
        }
    }
    (r, n, m)
}

/// Soft-DTW value between two interleaved 2D series.
pub fn soft_dtw(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    check(a, b, gamma)?;
    let (r, n, m) = forward(a, b, gamma);
    Ok(r[n * (m + 2) + m])
}

pub fn soft_dtw_steps(a: &[Point], b: &[Point], gamma: f64) -> Result<f64> {
    soft_dtw(&flatten_steps(a), &flatten_steps(b), gamma)
}

/// Soft-DTW value and its gradient with respect to `a`.
pub fn soft_dtw_grad(a: &[f64], b: &[f64], gamma: f64) -> Result<(f64, Vec<f64>)> {
    check(a, b, gamma)?;
    let (mut r, n, m) = forward(a, b, gamma);
    let w = m + 2;
    let value = r[n * w + m];
    let cost = |i: usize, j: usize| -> f64 {
        // 1-based indices; the padding row/column has zero cost
        if i > n || j > m {
            0.0
        } else {
            step_cost(a, i - 1, b, j - 1)
        }
    };
    for i in 1..=n {
        r[i * w + m + 1] = f64::NEG_INFINITY;
    }
    for j in 1..=m {
        r[(n + 1) * w + j] = f64::NEG_INFINITY;
    }
    r[(n + 1) * w + m + 1] = value;
    let mut e = vec![0.0; (n + 2) * w];
    e[(n + 1) * w + m + 1] = 1.0;
    for i in (1..=n).rev() {
        for j in (1..=m).rev() {
            let rij = r[i * w + j];
            let wa = ((r[(i + 1) * w + j] - rij - cost(i + 1, j)) / gamma).exp();
            let wb = ((r[i * w + j + 1] - rij - cost(i, j + 1)) / gamma).exp();
            let wc = ((r[(i + 1) * w + j + 1] - rij - cost(i + 1, j + 1)) / gamma).exp();
            e[i * w + j] = e[(i + 1) * w + j] * wa + e[i * w + j + 1] * wb + e[(i + 1) * w + j + 1] * wc;
        }
    }
    let mut grad = vec![0.0; a.len()];
    for i in 0..n {
        for j in 0..m {
            let eij = e[(i + 1) * w + j + 1];
            if eij != 0.0 {
                grad[2 * i] += eij * 2.0 * (a[2 * i] - b[2 * j]);
                grad[2 * i + 1] += eij * 2.0 * (a[2 * i + 1] - b[2 * j + 1]);
            }
        }
    }
    Ok((value, grad))
}

/// `sdtw(a, b) - (sdtw(a, a) + sdtw(b, b)) / 2`; non-negative and zero on `a == b`.
pub fn soft_dtw_divergence(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    Ok(soft_dtw(a, b, gamma)? - 0.5 * (soft_dtw(a, a, gamma)? + soft_dtw(b, b, gamma)?))
}

/// Classic DTW (hard minimum) with squared Euclidean step cost.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b, 1.0)?;
    let n = a.len() / 2;
    let m = b.len() / 2;
    let w = m + 1;
    let mut r = vec![f64::INFINITY; (n + 1) * w];
    r[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let prev = r[(i - 1) * w + j - 1].min(r[(i - 1) * w + j]).min(r[i * w + j - 1]);
            r[i * w + j] = step_cost(a, i - 1, b, j - 1) + prev;
        }
    }
    Ok(r[n * w + m])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn random_series(rng: &mut seed::Rng, n: usize) -> Vec<f64> {
        seed::normals(rng, 2 * n)
    }

    #[test]
    fn self_distance_vanishes_at_small_gamma() {
        let mut rng = seed::rng(1);
        for n in 1..8 {
            let a = random_series(&mut rng, n);
            let v = soft_dtw(&a, &a, 1e-6).unwrap();
            assert!(v <= 1e-12);
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(soft_dtw(&[0.0, 0.0], &[0.0, 0.0], 0.0).is_err());
        assert!(soft_dtw(&[0.0, 0.0], &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn symmetric() {
        let mut rng = seed::rng(2);
        for _ in 0..20 {
            let a = random_series(&mut rng, 6);
            let b = random_series(&mut rng, 4);
            let ab = soft_dtw(&a, &b, 0.3).unwrap();
            let ba = soft_dtw(&b, &a, 0.3).unwrap();
            assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn bounded_by_hard_dtw() {
        let mut rng = seed::rng(3);
        for _ in 0..50 {
            let a = random_series(&mut rng, 5);
            let b = random_series(&mut rng, 7);
            let hard = dtw(&a, &b).unwrap();
            for gamma in [1e-3, 0.1, 1.0] {
                assert!(soft_dtw(&a, &b, gamma).unwrap() <= hard + 1e-12);
            }
            assert!((soft_dtw(&a, &b, 1e-4).unwrap() - hard).abs() < 1e-2);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seed::rng(4);
        for gamma in [0.1, 1.0] {
            let a = random_series(&mut rng, 5);
            let b = random_series(&mut rng, 6);
            let (_, g) = soft_dtw_grad(&a, &b, gamma).unwrap();
            let h = 1e-5;
            for k in 0..a.len() {
                let mut p = a.clone();
                p[k] += h;
                let mut q = a.clone();
                q[k] -= h;
                let fd = (soft_dtw(&p, &b, gamma).unwrap() - soft_dtw(&q, &b, gamma).unwrap()) / (2.0 * h);
                let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-3);
                assert!(rel < 1e-5, "component {k}: fd {fd} analytic {}", g[k]);
            }
        }
    }

    #[test]
    fn divergence_zero_on_self() {
        let mut rng = seed::rng(6);
        let a = random_series(&mut rng, 5);
        assert!(soft_dtw_divergence(&a, &a, 1.0).unwrap().abs() < 1e-12);
        let b = random_series(&mut rng, 5);
        assert!(soft_dtw_divergence(&a, &b, 1.0).unwrap() > 0.0);
    }
}
