//! Brute-force reference computations used to audit the fast paths.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::transport::PointCloud;

/// Largest cloud the permutation oracle accepts.
pub const MAX_PERMUTATION_SIZE: usize = 8;

/// `W_2^2` between two equal-weight clouds of the same size by enumerating
/// every bijection. Birkhoff's theorem makes this exact.
pub fn w2_permutation(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let k = a.len();
    if k != b.len() || k == 0 {
        return Err(Error::Dimension(format!("clouds of sizes {} and {}", a.len(), b.len())));
    }
    if k > MAX_PERMUTATION_SIZE {
        return Err(Error::EnumerationLimit {
            what: "permutations",
            size: k as u128,
            limit: MAX_PERMUTATION_SIZE as u128,
        });
    }
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum())
                .collect()
        })
        .collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &cost, &mut best);
    Ok(best / k as f64)
}

fn permute(perm: &mut [usize], pos: usize, cost: &[Vec<f64>], best: &mut f64) {
    if pos == perm.len() {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        *best = best.min(total);
        return;
    }
    for j in pos..perm.len() {
        perm.swap(pos, j);
        permute(perm, pos + 1, cost, best);
        perm.swap(pos, j);
    }
}

/// `N(m, s^2)` as `k` equal-weight atoms at the conditional means of its
/// `k` quantile bins. The mean is exact and the variance is slightly low.
pub fn discretize_gaussian(m: f64, s: f64, k: usize) -> Result<PointCloud> {
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
    let pdf = |x: f64| {
        if x.is_infinite() {
            0.0
        } else {
            (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        }
    };
    let edges: Vec<f64> = (0..=k).map(|i| normal.inverse_cdf(i as f64 / k as f64)).collect();
    let points: Vec<f64> = edges
        .windows(2)
        .map(|e| m + s * k as f64 * (pdf(e[0]) - pdf(e[1])))
        .collect();
    PointCloud::from_1d(&points, vec![1.0 / k as f64; k])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_examples() {
        let a = vec![vec![0.0], vec![1.0]];
        let b = vec![vec![1.0], vec![0.0]];
        assert_eq!(w2_permutation(&a, &b).unwrap(), 0.0);
        let c = vec![vec![2.0], vec![3.0]];
        assert_eq!(w2_permutation(&a, &c).unwrap(), 4.0);
    }

    #[test]
    fn discretized_gaussian_keeps_the_mean() {
        let c = discretize_gaussian(1.5, 2.0, 16).unwrap();
        assert!((c.mean()[0] - 1.5).abs() < 1e-12);
        let var: f64 = c.points().iter().map(|p| (p[0] - 1.5).powi(2)).sum::<f64>() / 16.0;
        assert!(var < 4.0 && var > 3.8);
    }
}
