//! Small statistics helpers for success-rate comparisons.

/// 95% Wilson score interval for a binomial proportion, in percent.
pub fn wilson_interval_pct(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 100.0);
    }
    let z = 1.959_963_984_540_054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    (
        100.0 * (center - half).max(0.0),
        100.0 * (center + half).min(1.0),
    )
}

/// Half-width of the 95% normal-approximation confidence interval on a
/// proportion (fraction, not percent).
pub fn wald_halfwidth(successes: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    1.959_963_984_540_054 * (p * (1.0 - p) / n).sqrt()
}

/// Exact one-sided McNemar test on paired binary outcomes.
///
/// `n10` counts pairs where method 1 succeeded and method 2 failed; `n01`
/// the reverse. Returns `P[X >= n10]` for `X ~ Binomial(n10 + n01, 1/2)`,
/// the p-value against the hypothesis that method 1 is no better.
pub fn mcnemar_one_sided_p(n10: usize, n01: usize) -> f64 {
    let m = n10 + n01;
    if m == 0 {
        return 1.0;
    }
    // Sum C(m, i) 2^-m for i in n10..=m, accumulated in log space.
    let ln_half = 0.5f64.ln();
    let mut ln_term = m as f64 * ln_half; // P[X = 0]
    let mut tail = 0.0;
    for i in 0..=m {
        if i >= n10 {
            tail += ln_term.exp();
        }
        if i < m {
            ln_term += ((m - i) as f64).ln() - ((i + 1) as f64).ln();
        }
    }
    tail.min(1.0)
}

/// Two 95% intervals overlap (used for "monotone up to CI overlap").
pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_basics() {
        let (lo, hi) = wilson_interval_pct(50, 100);
        assert!(lo < 50.0 && hi > 50.0);
        assert!(lo > 39.0 && hi < 61.0);
        let (lo0, _) = wilson_interval_pct(0, 100);
        assert!(lo0 < 1e-12);
        let (_, hi1) = wilson_interval_pct(100, 100);
        assert!(hi1 > 100.0 - 1e-12);
    }

    #[test]
    fn mcnemar_extremes() {
        assert_eq!(mcnemar_one_sided_p(0, 0), 1.0);
        // 20 wins, 0 losses: p = 2^-20.
        let p = mcnemar_one_sided_p(20, 0);
        assert!((p - 0.5f64.powi(20)).abs() < 1e-12);
        // Balanced outcomes are not significant.
        assert!(mcnemar_one_sided_p(10, 10) > 0.5);
        // Strong imbalance is.
        assert!(mcnemar_one_sided_p(40, 10) < 0.01);
    }

    #[test]
    fn mcnemar_matches_direct_sum() {
        let m = 30usize;
        let n10 = 19usize;
        let direct: f64 = (n10..=m)
            .map(|i| {
                let mut c = 1.0f64;
                for k in 0..i {
                    c = c * (m - k) as f64 / (k + 1) as f64;
                }
                c * 0.5f64.powi(m as i32)
            })
            .sum();
        assert!((mcnemar_one_sided_p(n10, m - n10) - direct).abs() < 1e-10);
    }
}
