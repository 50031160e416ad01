use statrs::function::beta::beta_reg;

/// `n choose k` as a float.
pub fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One-sided exact (Clopper–Pearson) upper confidence bound on a binomial
/// proportion after `failures` events in `trials` trials.
pub fn clopper_pearson_upper(failures: u64, trials: u64, level: f64) -> f64 {
    assert!(trials > 0, "need at least one trial");
    assert!(failures <= trials);
    assert!((0.0..1.0).contains(&level));
    if failures == trials {
        return 1.0;
    }
    if failures == 0 {
        return 1.0 - (1.0 - level).powf(1.0 / trials as f64);
    }
    // upper bound p solves P(X <= k; n, p) = 1 - level, i.e. I_p(k+1, n-k) = level
    let (a, b) = ((failures + 1) as f64, (trials - failures) as f64);
    let (mut lo, mut hi) = (failures as f64 / trials as f64, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    /// P(X <= k) for X ~ Bin(n, p) by direct summation.
    fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
        (0..=k).map(|i| choose(n, i) * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)).sum()
    }

    #[test]
    fn choose_values() {
        assert_eq!(choose(6, 2), 15.0);
        assert_eq!(choose(4, 2), 6.0);
        assert_eq!(choose(8, 0), 1.0);
        assert_eq!(choose(3, 5), 0.0);
        assert_eq!(choose(56, 7), 231917400.0);
    }

    #[test]
    fn zero_failures_closed_form() {
        let u = clopper_pearson_upper(0, 100, 0.95);
        assert!((u - (1.0 - 0.05f64.powf(0.01))).abs() < 1e-15);
        assert!((u - 0.0295).abs() < 1e-4);
    }

    #[test]
    fn all_failures_is_one() {
        assert_eq!(clopper_pearson_upper(7, 7, 0.95), 1.0);
    }

    #[test]
    fn matches_direct_binomial_sum() {
        for &(k, n) in &[(1u64, 10u64), (3, 20), (5, 50), (12, 60)] {
            let u = clopper_pearson_upper(k, n, 0.95);
            assert!((binom_cdf(k, n, u) - 0.05).abs() < 1e-9, "k={k} n={n}");
            assert!(u > k as f64 / n as f64);
        }
    }

    #[test]
    fn decreasing_in_trials() {
        for k in [0u64, 1, 4] {
            let mut prev = 1.0;
            for n in [10u64, 20, 50, 100, 1000, 100_000] {
                let u = clopper_pearson_upper(k, n, 0.95);
                assert!(u < prev);
                prev = u;
            }
        }
    }
}
