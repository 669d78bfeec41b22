//! UCB and KL-UCB quality factors.

use super::ArmStats;

/// UCB quality factor for every arm:
/// `X/T + sqrt(alpha * ln(n + log_shift) / T)`.
///
/// `log_shift` is 0 for the standalone policy; the aggregator passes the
/// number of arms so the bonus never collapses at slot 1.
pub fn qf_ucb(stats: &ArmStats, n: u64, alpha: f64, log_shift: u64) -> Vec<f64> {
    let ln_term = ((n + log_shift) as f64).ln();
    (0..stats.num_arms())
        .map(|arm| {
            let t = stats.pull_count(arm) as f64;
            stats.reward_sum(arm) / t + (alpha * ln_term / t).sqrt()
        })
        .collect()
}

/// Bernoulli KL divergence `d(p, q)`, with `q` clamped away from {0, 1} and
/// the usual convention `0 * ln(0/q) = 0`.
pub fn kl_divergence(p: f64, q: f64) -> f64 {
    const EPS: f64 = 1e-12;
    if p == q {
        return 0.0;
    }
    let q = q.clamp(EPS, 1.0 - EPS);
    let mut d = 0.0;
    if p > 0.0 {
        d += p * (p / q).ln();
    }
    if p < 1.0 {
        d += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    d
}

/// Largest `q >= mean` whose divergence from `mean` stays within `budget`,
/// found by 32 bisection steps on [mean, 1].
pub fn klucb_upper(mean: f64, budget: f64) -> f64 {
    if budget <= 0.0 {
        return mean;
    }
    let mut lo = mean;
    let mut hi = 1.0;
    for _ in 0..32 {
        let mid = 0.5 * (lo + hi);
        if kl_divergence(mean, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// KL-UCB quality factors with divergence budget
/// `(ln n + c * ln(ln n)) / T`; the `ln(ln n)` factor is treated as zero for
/// `n < 3` where it is undefined or negative.
pub fn qf_klucb(stats: &ArmStats, n: u64, c: f64) -> Vec<f64> {
    let ln_n = (n as f64).ln();
    let ln_ln_n = if n >= 3 { ln_n.ln() } else { 0.0 };
    (0..stats.num_arms())
        .map(|arm| {
            let t = stats.pull_count(arm) as f64;
            let mean = stats.reward_sum(arm) / t;
            klucb_upper(mean, (ln_n + c * ln_ln_n) / t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_with(x: &[f64], t: &[u64]) -> ArmStats {
        ArmStats::from_parts(x.to_vec(), t.to_vec()).unwrap()
    }

    #[test]
    fn ucb_hand_computed_anchor() {
        // 0.5 + sqrt(2 ln 10 / 4) = 1.5730
        let stats = stats_with(&[2.0], &[4]);
        let q = qf_ucb(&stats, 10, 2.0, 0);
        assert!((q[0] - 1.5730).abs() < 1e-4, "got {}", q[0]);
    }

    #[test]
    fn ucb_log_vanishes_at_slot_one() {
        let stats = stats_with(&[1.0, 2.0], &[2, 4]);
        let q = qf_ucb(&stats, 1, 2.0, 0);
        assert_eq!(q, vec![0.5, 0.5]);
    }

    #[test]
    fn ucb_bonus_shrinks_with_pulls() {
        let a = qf_ucb(&stats_with(&[2.0], &[4]), 50, 2.0, 0)[0] - 0.5;
        let b = qf_ucb(&stats_with(&[4.0], &[8]), 50, 2.0, 0)[0] - 0.5;
        assert!(b < a);
    }

    #[test]
    fn ucb_shift_matches_shifted_slot() {
        let stats = stats_with(&[1.0, 1.0], &[1, 1]);
        assert_eq!(qf_ucb(&stats, 1, 2.0, 4), qf_ucb(&stats, 5, 2.0, 0));
    }

    #[test]
    fn kl_divergence_anchors() {
        assert_eq!(kl_divergence(0.3, 0.3), 0.0);
        assert_eq!(kl_divergence(0.0, 0.0), 0.0);
        assert_eq!(kl_divergence(1.0, 1.0), 0.0);
        // 0.5 ln 2 + 0.5 ln(2/3) = 0.1438
        assert!((kl_divergence(0.5, 0.25) - 0.1438).abs() < 1e-4);
        // d(0, q) = -ln(1 - q)
        let q = 0.4;
        assert!((kl_divergence(0.0, q) - (-(1.0 - q).ln())).abs() < 1e-12);
    }

    #[test]
    fn klucb_inverts_the_divergence() {
        // d(0.5, 0.75) = d(0.5, 0.25) by symmetry, so the upper bound at that
        // budget is 0.75.
        let q = klucb_upper(0.5, kl_divergence(0.5, 0.25));
        assert!((q - 0.75).abs() < 1e-3, "got {q}");
    }

    #[test]
    fn klucb_zero_budget_returns_mean() {
        assert_eq!(klucb_upper(0.37, 0.0), 0.37);
        let stats = stats_with(&[1.0, 1.0], &[1, 1]);
        // ln 1 = 0 and the log-log factor is clamped, so all budgets vanish.
        assert_eq!(qf_klucb(&stats, 1, 3.0), vec![1.0, 1.0]);
    }

    #[test]
    fn klucb_contract_holds_across_inputs() {
        let mut probe = 0.01f64;
        while probe < 1.0 {
            for budget in [0.001, 0.05, 0.3, 2.0] {
                let q = klucb_upper(probe, budget);
                assert!(q >= probe);
                assert!(q <= 1.0);
                assert!(kl_divergence(probe, q) <= budget + 1e-6);
            }
            probe += 0.037;
        }
    }

    #[test]
    fn klucb_all_ones_mean_saturates() {
        let q = klucb_upper(1.0, 0.5);
        assert!(q > 0.999999);
    }
}
