//! Confidence intervals and goodness-of-fit helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided standard normal critical value for level `1 - alpha`.
pub fn z_value(alpha: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - alpha / 2.0)
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_value(alpha);
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Newcombe hybrid score interval for `p1 - p2` from two independent samples.
pub fn newcombe_diff(k1: u64, n1: u64, k2: u64, n2: u64, alpha: f64) -> (f64, f64) {
    let p1 = k1 as f64 / n1.max(1) as f64;
    let p2 = k2 as f64 / n2.max(1) as f64;
    let (l1, u1) = wilson(k1, n1, alpha);
    let (l2, u2) = wilson(k2, n2, alpha);
    let d = p1 - p2;
    let lo = d - ((p1 - l1).powi(2) + (u2 - p2).powi(2)).sqrt();
    let hi = d + ((u1 - p1).powi(2) + (p2 - l2).powi(2)).sqrt();
    (lo.max(-1.0), hi.min(1.0))
}

/// Mean and normal-approximation interval of real samples.
pub fn mean_ci(samples: &[f64], alpha: f64) -> (f64, f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, mean, mean);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = z_value(alpha) * (var / n as f64).sqrt();
    (mean, mean - half, mean + half)
}

/// Sample median with the distribution-free order-statistic interval.
pub fn median_ci(samples: &[f64], alpha: f64) -> (f64, f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let med = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    let half = z_value(alpha) * (n as f64).sqrt() / 2.0;
    let lo = ((n as f64 / 2.0 - half).floor().max(1.0) as usize).min(n) - 1;
    let hi = ((n as f64 / 2.0 + half).ceil() as usize).clamp(1, n) - 1;
    (med, s[lo].min(med), s[hi].max(med))
}

/// `½ Σ |counts/n - probs|` over the indexed states.
pub fn empirical_tv(counts: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let n: u64 = counts.iter().sum();
    let n = n.max(1) as f64;
    0.5 * counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / n - p).abs())
        .sum::<f64>()
}

/// Pearson chi-square p-value of `counts` against `probs`. Cells with
/// expected count below 5 are pooled into one cell.
pub fn chi_square_pvalue(counts: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n;
        if e < 5.0 {
            pool_obs += c as f64;
            pool_exp += e;
        } else {
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp).powi(2) / pool_exp;
        cells += 1;
    } else if pool_obs > 0.0 {
        return 0.0;
    }
    if cells < 2 {
        return 1.0;
    }
    let chi = ChiSquared::new((cells - 1) as f64).expect("positive dof");
    1.0 - chi.cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_interval_brackets_median() {
        let xs: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let (m, lo, hi) = median_ci(&xs, 0.05);
        assert_eq!(m, 50.0);
        assert!(lo < 50.0 && hi > 50.0 && lo >= 39.0 && hi <= 61.0);
        assert_eq!(median_ci(&[3.0], 0.05), (3.0, 3.0, 3.0));
    }
    use crate::rng::StreamRng;

    #[test]
    fn z_is_standard() {
        assert!((z_value(0.05) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn wilson_contains_estimate() {
        for &(k, n) in &[(0, 10), (10, 10), (37, 100), (1, 1000)] {
            let (lo, hi) = wilson(k, n, 0.05);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi);
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn wilson_coverage_on_synthetic_bernoulli() {
        let (p, n, reps) = (0.3, 200u64, 4000);
        let mut rng = StreamRng::new(11, 0);
        let mut hit = 0;
        for _ in 0..reps {
            let k = (0..n).filter(|_| rng.bernoulli(p)).count() as u64;
            let (lo, hi) = wilson(k, n, 0.05);
            if lo <= p && p <= hi {
                hit += 1;
            }
        }
        let cov = hit as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&cov), "coverage {cov}");
    }

    #[test]
    fn newcombe_coverage_on_synthetic_bernoulli() {
        let (p1, p2, n, reps) = (0.6, 0.5, 300u64, 3000);
        let mut rng = StreamRng::new(12, 0);
        let mut hit = 0;
        for _ in 0..reps {
            let k1 = (0..n).filter(|_| rng.bernoulli(p1)).count() as u64;
            let k2 = (0..n).filter(|_| rng.bernoulli(p2)).count() as u64;
            let (lo, hi) = newcombe_diff(k1, n, k2, n, 0.05);
            if lo <= p1 - p2 && p1 - p2 <= hi {
                hit += 1;
            }
        }
        let cov = hit as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&cov), "coverage {cov}");
    }

    #[test]
    fn tv_and_chi_square() {
        let probs = [0.25, 0.25, 0.5];
        assert_eq!(empirical_tv(&[25, 25, 50], &probs), 0.0);
        assert!(chi_square_pvalue(&[250, 250, 500], &probs) > 0.99);
        assert!(chi_square_pvalue(&[500, 250, 250], &probs) < 1e-6);
    }
}
