//! Self-check suite and the closed-form oracles it runs against.
//!
//! The oracles are derived independently of the samplers they check: the
//! Beta CDF comes from the binomial identity for uniform order statistics,
//! never from the sampling code itself. The CLI `validate` subcommand runs
//! everything here and reports one line per check; the heavier acceptance
//! tests reuse the same oracles at larger sample sizes.

use crate::env::{pseudo_regret, Environment};
use crate::numeric::FixedFormat;
use crate::policies::{
    bin_index, bin_midpoint, kl_divergence, klucb_upper, qf_sbts, qf_sbts_es, qf_ucb, ArmStats,
    SbtsEssr,
};
use crate::rimab::{epoch_schedule_oracle, learning_rate, Belief, EpochState};
use crate::rng::{Mt19937, UniformSource};

/// P(X <= x) for the `rank`-th smallest of `count` uniforms, i.e. the
/// Beta(rank, count - rank + 1) CDF: at least `rank` of the `count` uniforms
/// fall at or below x.
pub fn order_stat_cdf(x: f64, rank: u64, count: u64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let n = count;
    let mut total = 0.0;
    for successes in rank..=n {
        total += binomial(n, successes) * x.powi(successes as i32)
            * (1.0 - x).powi((n - successes) as i32);
    }
    total.clamp(0.0, 1.0)
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k.min(n));
    let mut result = 1.0;
    for i in 0..k {
        result *= (n - i) as f64 / (i + 1) as f64;
    }
    result
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).expect("sample is NaN-free"));
    let n = sample.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    sup
}

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn ok(name: &'static str, detail: String) -> Self {
        Check {
            name,
            passed: true,
            detail,
        }
    }

    fn of(name: &'static str, passed: bool, detail: String) -> Self {
        Check {
            name,
            passed,
            detail,
        }
    }
}

/// Run every self-check. Deterministic for a given seed.
pub fn run_all(seed: u32) -> Vec<Check> {
    let mut checks = Vec::new();

    // Generator reference vectors.
    let mut rng = Mt19937::seed(5489);
    let head: Vec<u32> = (0..3).map(|_| rng.next_u32()).collect();
    checks.push(Check::of(
        "mt19937 reference vectors",
        head == [3499211612, 581869302, 3890346734],
        format!("seed 5489 head: {head:?}"),
    ));

    let mut rng = Mt19937::seed(seed);
    let n = 200_000;
    let mean: f64 = (0..n).map(|_| rng.next_unit()).sum::<f64>() / n as f64;
    checks.push(Check::of(
        "uniform mean",
        (mean - 0.5).abs() < 0.003,
        format!("{n} draws, mean {mean:.5}"),
    ));

    // Quantizer anchors and bulk properties.
    let fmt = FixedFormat::unsigned(11, 8).expect("valid format");
    let anchor = fmt.quantize(0.35);
    let sat = FixedFormat::unsigned(6, 5).expect("valid format").quantize(10.0);
    checks.push(Check::of(
        "quantize anchors",
        anchor == 90.0 / 256.0 && sat == 63.0 / 32.0,
        format!("q(0.35 | 11,8) = {anchor}, q(10 | 6,5) = {sat}"),
    ));

    let mut rng = Mt19937::seed(seed ^ 0x51ab);
    let mut quantize_ok = true;
    for fmt in [
        FixedFormat::unsigned(27, 26).expect("valid"),
        FixedFormat::unsigned(11, 10).expect("valid"),
        FixedFormat::unsigned(6, 5).expect("valid"),
    ] {
        let mut values: Vec<f64> = (0..20_000).map(|_| rng.next_unit() * 2.2).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut prev = f64::NEG_INFINITY;
        for &x in &values {
            let q = fmt.quantize(x);
            quantize_ok &= fmt.quantize(q) == q && q >= prev;
            prev = q;
        }
    }
    checks.push(Check::of(
        "quantize idempotent and monotone",
        quantize_ok,
        "3 formats x 20000 sorted inputs".to_string(),
    ));

    // Score-function anchors.
    let stats = ArmStats::from_parts(vec![2.0], vec![4]).expect("valid stats");
    let ucb = qf_ucb(&stats, 10, 2.0, 0)[0];
    checks.push(Check::of(
        "ucb anchor",
        (ucb - 1.5730).abs() < 1e-4,
        format!("Q(X=2, T=4, n=10, alpha=2) = {ucb:.5}"),
    ));

    let d = kl_divergence(0.5, 0.25);
    let inverse = klucb_upper(0.5, d);
    checks.push(Check::of(
        "kl divergence anchor",
        (d - 0.1438).abs() < 1e-4 && (inverse - 0.75).abs() < 1e-3,
        format!("d(0.5, 0.25) = {d:.5}, inverse at that budget = {inverse:.5}"),
    ));

    // Binned-sampler worked examples, replayed through a scripted stream.
    let replay = |stream: &[f64]| -> f64 {
        let stats = ArmStats::from_parts(vec![2.0], vec![4]).expect("valid stats");
        let mut source = Replay {
            values: stream.to_vec(),
            at: 0,
        };
        qf_sbts_es(&stats, 10, &mut source, &mut 0).expect("scripted run succeeds")[0]
    };
    let first = replay(&[0.342, 0.012, 0.753, 0.553]);
    let second = replay(&[0.342, 0.012, 0.083, 0.553]);
    checks.push(Check::of(
        "binned quantile worked examples",
        first == 0.35 && second == 0.05,
        format!("streams map to {first} and {second}"),
    ));

    // Sampler distribution vs the order-statistic CDF.
    let mut rng = Mt19937::seed(seed ^ 0xbeef);
    let stats = ArmStats::from_parts(vec![3.0], vec![8]).expect("valid stats");
    let mut sample: Vec<f64> = (0..100_000)
        .map(|_| qf_sbts(&stats, &mut rng, &mut 0).expect("integer stats")[0])
        .collect();
    let ks = ks_distance(&mut sample, |x| order_stat_cdf(x, 3, 8));
    checks.push(Check::of(
        "posterior sample distribution",
        ks < 0.01,
        format!("KS distance vs Beta(3,6): {ks:.5}"),
    ));

    // Incremental sampler: per-slot draw cost and column-sum invariant.
    let k = 4;
    let bins = 10usize;
    let mut stats = ArmStats::new(k);
    let mut policy = SbtsEssr::new(bins).expect("valid bins");
    let mut rng = Mt19937::seed(seed ^ 0x7777);
    let mut reward_rng = Mt19937::seed(seed ^ 0x8888);
    let mut cost_ok = true;
    let mut sums_ok = true;
    for slot in 1..=10_000u64 {
        let before = rng.draws();
        let q = policy.quality(&stats, &mut rng, &mut 0).expect("table consistent");
        let spent = rng.draws() - before;
        if slot == 1 {
            cost_ok &= spent == 0;
        } else {
            cost_ok &= spent == 2 * k as u64 + 1;
        }
        let table = policy.table().expect("table exists");
        for arm in 0..k {
            sums_ok &= table.column_sum(arm) == stats.pull_count(arm);
        }
        let arm = q
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .map(|(i, _)| i)
            .expect("nonempty");
        let reward = if reward_rng.next_unit() < 0.6 { 1.0 } else { 0.0 };
        stats.update(arm, reward).expect("valid update");
    }
    checks.push(Check::of(
        "incremental sampler slot cost",
        cost_ok,
        format!("2K+1 = {} draws per slot after the first", 2 * k + 1),
    ));
    checks.push(Check::of(
        "bin table column sums",
        sums_ok,
        "column sum = T(k) held for 10000 slots".to_string(),
    ));

    // Aggregator arithmetic anchors.
    let eta = learning_rate(1, 4, 2);
    let mut belief = Belief::uniform(2).expect("two candidates");
    belief.update(0, 1.0, eta).expect("positive belief");
    let pi = belief.probabilities().to_vec();
    checks.push(Check::of(
        "belief update anchor",
        (eta - 0.41628).abs() < 1e-5 && (pi[0] - 0.697).abs() < 1e-3,
        format!("eta_1 = {eta:.5}, pi after one unit reward = ({:.3}, {:.3})", pi[0], pi[1]),
    ));

    let oracle = epoch_schedule_oracle(2, 10_000);
    let mut state = EpochState::new();
    let mut schedule_ok = true;
    for &expected in &oracle {
        schedule_ok &= state.active == expected;
        state.advance(2);
    }
    checks.push(Check::of(
        "epoch schedule vs oracle",
        schedule_ok,
        "10000 slots, 2 candidates".to_string(),
    ));

    // Regret arithmetic.
    let env = Environment::bernoulli(&[0.1, 0.3, 0.5, 0.7]).expect("valid env");
    let regret = pseudo_regret(&[100, 100, 100, 9700], &env, 10_000).expect("consistent counts");
    checks.push(Check::of(
        "pseudo-regret anchor",
        (regret - 120.0).abs() < 1e-9,
        format!("mu1 with T = (100,100,100,9700): {regret}"),
    ));

    // Bin index boundary behavior.
    checks.push(Check::of(
        "bin index boundaries",
        bin_index(0.0, 10) == 0
            && bin_index(0.012, 10) == 0
            && bin_index(0.342, 10) == 3
            && bin_index(1.0, 10) == 9
            && bin_midpoint(3, 10) == 0.35,
        "0-based ranges with top-bin clamp".to_string(),
    ));

    checks.push(Check::ok(
        "checks complete",
        format!("{} checks run", checks.len() + 1),
    ));
    checks
}

struct Replay {
    values: Vec<f64>,
    at: usize,
}

impl UniformSource for Replay {
    fn next_unit(&mut self) -> f64 {
        let v = self.values[self.at];
        self.at += 1;
        v
    }

    fn next_int(&mut self, lo: u32, _hi: u32) -> u32 {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes() {
        let checks = run_all(424242);
        for check in &checks {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }

    #[test]
    fn order_stat_cdf_known_values() {
        // Beta(1,1) is uniform.
        assert!((order_stat_cdf(0.3, 1, 1) - 0.3).abs() < 1e-12);
        // Beta(3,6) median from the binomial identity.
        let median_mass = order_stat_cdf(0.5, 3, 8);
        // P(at least 3 of 8 uniforms <= 0.5) = 1 - C(8,0..2)/2^8 = 1 - 37/256
        assert!((median_mass - (1.0 - 37.0 / 256.0)).abs() < 1e-12);
        assert_eq!(order_stat_cdf(0.0, 3, 8), 0.0);
        assert_eq!(order_stat_cdf(1.0, 3, 8), 1.0);
    }

    #[test]
    fn ks_distance_detects_mismatch() {
        // A uniform sample against the uniform CDF is close...
        let mut rng = Mt19937::seed(7);
        let mut sample: Vec<f64> = (0..50_000).map(|_| rng.next_unit()).collect();
        let d_match = ks_distance(&mut sample, |x| x.clamp(0.0, 1.0));
        assert!(d_match < 0.01, "{d_match}");
        // ...and far from a squared CDF.
        let mut sample: Vec<f64> = (0..50_000).map(|_| rng.next_unit()).collect();
        let d_off = ks_distance(&mut sample, |x| (x * x).clamp(0.0, 1.0));
        assert!(d_off > 0.2, "{d_off}");
    }
}
