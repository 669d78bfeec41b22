//! Batch experiment runner.
//!
//! Each experiment is fully determined by `(base_seed, experiment_index)`:
//! the environment draw, one reward stream per arm, and the policy's own
//! stream all derive their seeds from that pair, with the policy identifier
//! mixed into the policy stream only. Two policies compared on the same base
//! seed therefore face identical environments, and identical rewards for the
//! j-th pull of any given arm, while their internal randomness stays
//! independent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{preset_means, pseudo_regret, random_means, EnvError, Environment, RewardModel};
use crate::numeric::Precision;
use crate::policies::{ArmStats, Policy, PolicyConfig, PolicyError};
use crate::rimab::{Aggregator, AggregatorConfig, AggregatorMode, RimabError};
use crate::rng::{derive_seed, Mt19937};

const STREAM_ENV: u64 = 1;
const STREAM_REWARD: u64 = 2;
const STREAM_POLICY: u64 = 3;

const AGGREGATOR_STREAM_ID: u64 = 100;
const VELCRO_STREAM_ID: u64 = 101;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Aggregator(#[from] RimabError),
    #[error("horizon {horizon} is shorter than the arm count {arms}")]
    HorizonTooShort { horizon: u64, arms: usize },
    #[error("a batch needs at least one experiment")]
    NoExperiments,
    #[error(
        "unknown environment spec '{0}' (expected mu1..mu4, random, random:K:gap, or means:...)"
    )]
    BadEnvSpec(String),
    #[error("unknown reward spec '{0}' (expected bernoulli or gaussian:sigma)")]
    BadRewardSpec(String),
}

/// Which environment each experiment runs against. Random instances are
/// redrawn per experiment; fixed means are shared across the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvSpec {
    Preset(String),
    Means(Vec<f64>),
    Random { arms: usize, min_gap: f64 },
}

impl EnvSpec {
    pub fn parse(text: &str, default_arms: usize) -> Result<Self, HarnessError> {
        if text.starts_with("mu") {
            preset_means(text).map_err(|_| HarnessError::BadEnvSpec(text.to_string()))?;
            return Ok(EnvSpec::Preset(text.to_string()));
        }
        if let Some(list) = text.strip_prefix("means:") {
            let means: Result<Vec<f64>, _> =
                list.split(',').map(|m| m.trim().parse::<f64>()).collect();
            let means = means.map_err(|_| HarnessError::BadEnvSpec(text.to_string()))?;
            if means.len() < 2 {
                return Err(HarnessError::BadEnvSpec(text.to_string()));
            }
            return Ok(EnvSpec::Means(means));
        }
        if text == "random" {
            return Ok(EnvSpec::Random {
                arms: default_arms,
                min_gap: 0.0,
            });
        }
        if let Some(rest) = text.strip_prefix("random:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let bad = || HarnessError::BadEnvSpec(text.to_string());
            return match parts.as_slice() {
                [k] => Ok(EnvSpec::Random {
                    arms: k.parse().map_err(|_| bad())?,
                    min_gap: 0.0,
                }),
                [k, gap] => Ok(EnvSpec::Random {
                    arms: k.parse().map_err(|_| bad())?,
                    min_gap: gap.parse().map_err(|_| bad())?,
                }),
                _ => Err(bad()),
            };
        }
        Err(HarnessError::BadEnvSpec(text.to_string()))
    }

    pub fn arms(&self) -> Result<usize, HarnessError> {
        match self {
            EnvSpec::Preset(name) => Ok(preset_means(name)?.len()),
            EnvSpec::Means(means) => Ok(means.len()),
            EnvSpec::Random { arms, .. } => Ok(*arms),
        }
    }

    fn realize(&self, model: RewardModel, rng: &mut Mt19937) -> Result<Environment, EnvError> {
        match self {
            EnvSpec::Preset(name) => Environment::from_means(&preset_means(name)?, model),
            EnvSpec::Means(means) => Environment::from_means(means, model),
            EnvSpec::Random { arms, min_gap } => {
                Environment::from_means(&random_means(*arms, *min_gap, rng)?, model)
            }
        }
    }
}

pub fn parse_reward_model(text: &str) -> Result<RewardModel, HarnessError> {
    if text == "bernoulli" {
        return Ok(RewardModel::Bernoulli);
    }
    if text == "gaussian" {
        return Ok(RewardModel::GaussianClipped { sigma: 0.05 });
    }
    if let Some(sigma) = text.strip_prefix("gaussian:") {
        let sigma: f64 = sigma
            .parse()
            .map_err(|_| HarnessError::BadRewardSpec(text.to_string()))?;
        return Ok(RewardModel::GaussianClipped { sigma });
    }
    Err(HarnessError::BadRewardSpec(text.to_string()))
}

/// What plays the arms: a single policy or an aggregator over candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunnerSpec {
    Single(PolicyConfig),
    Aggregator(AggregatorConfig),
}

impl RunnerSpec {
    pub fn label(&self) -> String {
        match self {
            RunnerSpec::Single(c) => c.kind.label().to_string(),
            RunnerSpec::Aggregator(a) => match a.mode {
                AggregatorMode::EpochCommit => "rimab".to_string(),
                AggregatorMode::BeliefSampled => "velcro-approx".to_string(),
            },
        }
    }

    fn stream_id(&self) -> u64 {
        match self {
            RunnerSpec::Single(c) => c.kind.stream_id(),
            RunnerSpec::Aggregator(a) => match a.mode {
                AggregatorMode::EpochCommit => AGGREGATOR_STREAM_ID,
                AggregatorMode::BeliefSampled => VELCRO_STREAM_ID,
            },
        }
    }

    /// Precision used when storing the shared reward accumulator.
    fn accumulator_precision(&self) -> Result<Precision, PolicyError> {
        match self {
            RunnerSpec::Single(c) => Ok(c.precision.resolve(c.kind.unit_range())?),
            // Candidates may disagree on format; the shared statistics stay
            // at the first candidate's resolution.
            RunnerSpec::Aggregator(a) => match a.candidates.first() {
                Some(c) => Ok(c.precision.resolve(true)?),
                None => Ok(Precision::Float64),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub reward: RewardModel,
    pub runner: RunnerSpec,
    pub horizon: u64,
    pub experiments: u32,
    pub base_seed: u32,
    /// Worker threads for the batch; experiments are deterministic per index,
    /// so results do not depend on this.
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let arms = self.env.arms()?;
        if self.horizon < arms as u64 {
            return Err(HarnessError::HorizonTooShort {
                horizon: self.horizon,
                arms,
            });
        }
        if self.experiments == 0 {
            return Err(HarnessError::NoExperiments);
        }
        match &self.runner {
            RunnerSpec::Single(c) => c.validate()?,
            RunnerSpec::Aggregator(a) => a.validate(self.horizon)?,
        }
        Ok(())
    }
}

/// Everything one experiment produced.
#[derive(Debug, Clone, Serialize)]
pub struct RegretTrace {
    /// Cumulative pseudo-regret after each slot.
    pub cumulative_regret: Vec<f64>,
    pub final_regret: f64,
    /// Realized-reward regret `N*mu_star - sum R_n`.
    pub realized_regret: f64,
    pub pull_counts: Vec<u64>,
    pub optimal_arm_pulls: u64,
    pub environment_means: Vec<f64>,
    /// Committed candidate label, aggregator runs only.
    pub committed: Option<String>,
    pub draws: u64,
    pub retries: u64,
    pub comparisons: u64,
    /// Per-slot counters; recorded for the first experiment of a batch.
    pub draws_per_slot: Option<Vec<u32>>,
    pub comparisons_per_slot: Option<Vec<u32>>,
    /// Active candidate per slot, aggregator runs only (first experiment).
    pub active_candidate_per_slot: Option<Vec<u8>>,
    /// Belief after each learning slot, aggregator runs only (first experiment).
    pub belief_per_slot: Option<Vec<Vec<f64>>>,
}

enum Runner {
    Single(Policy),
    Aggregator(Aggregator),
}

impl Runner {
    fn build(spec: &RunnerSpec, arms: usize, horizon: u64) -> Result<Self, HarnessError> {
        Ok(match spec {
            RunnerSpec::Single(c) => Runner::Single(Policy::new(*c, arms)?),
            RunnerSpec::Aggregator(a) => Runner::Aggregator(Aggregator::new(a, arms, horizon)?),
        })
    }

    fn select(&mut self, stats: &ArmStats, n: u64, rng: &mut Mt19937) -> Result<usize, HarnessError> {
        Ok(match self {
            Runner::Single(p) => p.select(stats, n, rng)?,
            Runner::Aggregator(a) => a.select(stats, n, rng)?,
        })
    }

    fn observe(&mut self, n: u64, reward: f64) -> Result<(), HarnessError> {
        if let Runner::Aggregator(a) = self {
            a.observe(n, reward)?;
        }
        Ok(())
    }

    fn comparisons(&self) -> u64 {
        match self {
            Runner::Single(p) => p.comparisons(),
            Runner::Aggregator(a) => a.comparisons(),
        }
    }

    fn quality_draws(&self) -> u64 {
        match self {
            Runner::Single(p) => p.quality_draws(),
            Runner::Aggregator(a) => a.quality_draws(),
        }
    }
}

/// Run experiment `index` of the batch.
pub fn run_experiment(config: &ExperimentConfig, index: u32) -> Result<RegretTrace, HarnessError> {
    run_experiment_inner(config, index, index == 0)
}

fn run_experiment_inner(
    config: &ExperimentConfig,
    index: u32,
    record_per_slot: bool,
) -> Result<RegretTrace, HarnessError> {
    config.validate()?;
    let base = config.base_seed;
    let env = {
        let mut env_rng = Mt19937::seed(derive_seed(base, &[STREAM_ENV, index as u64]));
        config.env.realize(config.reward, &mut env_rng)?
    };
    let arms = env.num_arms();

    let mut reward_streams: Vec<Mt19937> = (0..arms)
        .map(|arm| Mt19937::seed(derive_seed(base, &[STREAM_REWARD, index as u64, arm as u64])))
        .collect();
    let mut policy_rng = Mt19937::seed(derive_seed(
        base,
        &[STREAM_POLICY, index as u64, config.runner.stream_id()],
    ));

    let mut runner = Runner::build(&config.runner, arms, config.horizon)?;
    let accumulator_precision = config.runner.accumulator_precision()?;
    let mut stats = ArmStats::new(arms);

    let horizon = config.horizon as usize;
    let mut cumulative_regret = Vec::with_capacity(horizon);
    let mut pull_counts = vec![0u64; arms];
    let mut realized_sum = 0.0;
    let mut cumulative = 0.0;

    let mut draws_per_slot = record_per_slot.then(|| Vec::with_capacity(horizon));
    let mut comparisons_per_slot = record_per_slot.then(|| Vec::with_capacity(horizon));
    let is_aggregator = matches!(runner, Runner::Aggregator(_));
    let mut active_per_slot =
        (record_per_slot && is_aggregator).then(|| Vec::with_capacity(horizon));
    let mut belief_per_slot = (record_per_slot && is_aggregator).then(Vec::new);
    // Belief trajectories only move during the learning phase.
    let belief_slots = match &config.runner {
        RunnerSpec::Aggregator(c) if c.mode == AggregatorMode::EpochCommit => c.n_learn,
        _ => config.horizon,
    };

    for n in 1..=config.horizon {
        let comparisons_before = runner.comparisons();
        let arm = runner.select(&stats, n, &mut policy_rng)?;
        if let Some(log) = draws_per_slot.as_mut() {
            log.push(runner.quality_draws() as u32);
        }
        if let Some(log) = comparisons_per_slot.as_mut() {
            log.push((runner.comparisons() - comparisons_before) as u32);
        }

        let reward = env.sample_reward(arm, &mut reward_streams[arm])?;
        runner.observe(n, reward)?;
        stats.update_quantized(arm, reward, accumulator_precision)?;

        if let Runner::Aggregator(a) = &runner {
            if let Some(log) = active_per_slot.as_mut() {
                log.push(a.active_candidate() as u8);
            }
            if let Some(log) = belief_per_slot.as_mut() {
                if n <= belief_slots {
                    log.push(a.belief().probabilities().to_vec());
                }
            }
        }

        pull_counts[arm] += 1;
        realized_sum += reward;
        cumulative += env.optimal_mean() - env.mean(arm);
        cumulative_regret.push(cumulative);
    }

    // The reported curve ends exactly at its own last point; the closed-form
    // evaluation over final pull counts cross-checks the accumulation.
    let final_regret = cumulative;
    let closed_form = pseudo_regret(&pull_counts, &env, config.horizon)?;
    debug_assert!((final_regret - closed_form).abs() < 1e-6 * (1.0 + closed_form.abs()));

    let committed = match &runner {
        Runner::Aggregator(a) => a.committed().map(|i| a.candidate_label(i).to_string()),
        Runner::Single(_) => None,
    };

    Ok(RegretTrace {
        final_regret,
        realized_regret: config.horizon as f64 * env.optimal_mean() - realized_sum,
        optimal_arm_pulls: pull_counts[env.optimal_arm()],
        environment_means: env.means(),
        cumulative_regret,
        pull_counts,
        committed,
        draws: policy_rng.draws(),
        retries: policy_rng.retries(),
        comparisons: runner.comparisons(),
        draws_per_slot,
        comparisons_per_slot,
        active_candidate_per_slot: active_per_slot,
        belief_per_slot,
    })
}

/// Quartiles, whiskers and outliers of the final-regret sample, following
/// the usual boxplot convention: whiskers reach the most extreme points
/// within 1.5 IQR of the quartiles, everything beyond is an outlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linearly interpolated quantile (type 7) of a sorted sample.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let p = p.clamp(0.0, 1.0);
    let position = p * (sorted.len() - 1) as f64;
    let low = position.floor() as usize;
    let high = position.ceil() as usize;
    if low == high {
        return sorted[low];
    }
    let weight = position - low as f64;
    sorted[low] * (1.0 - weight) + sorted[high] * weight
}

pub fn boxplot_stats(values: &[f64]) -> BoxplotStats {
    assert!(!values.is_empty(), "boxplot of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("regret values are never NaN"));
    let q1 = percentile(&sorted, 0.25);
    let median = percentile(&sorted, 0.50);
    let q3 = percentile(&sorted, 0.75);
    let iqr = q3 - q1;
    let low_fence = q1 - 1.5 * iqr;
    let high_fence = q3 + 1.5 * iqr;
    let whisker_low = sorted
        .iter()
        .copied()
        .find(|&v| v >= low_fence)
        .unwrap_or(q1);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= high_fence)
        .unwrap_or(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < low_fence || v > high_fence)
        .collect();
    BoxplotStats {
        q1,
        median,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    }
}

/// Batch aggregates. Standard deviations are population ones, so a single
/// experiment reports zero spread.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub mean_regret_per_slot: Vec<f64>,
    pub std_regret_per_slot: Vec<f64>,
    pub final_regrets: Vec<f64>,
    pub mean_final_regret: f64,
    pub std_final_regret: f64,
    pub mean_optimal_arm_pulls: f64,
    pub boxplot: BoxplotStats,
    /// How often each candidate was committed, aggregator runs only.
    pub committed_counts: Option<Vec<(String, u32)>>,
}

/// Run the whole batch, spreading experiments over `config.threads` workers.
/// Traces are merged in index order, so the aggregates are independent of
/// the thread count.
pub fn run_batch(config: &ExperimentConfig) -> Result<(BatchSummary, Vec<RegretTrace>), HarnessError> {
    config.validate()?;
    let count = config.experiments;
    let threads = config.threads.max(1).min(count as usize);
    let traces: Vec<RegretTrace> = if threads <= 1 {
        let mut traces = Vec::with_capacity(count as usize);
        for index in 0..count {
            traces.push(run_experiment(config, index)?);
        }
        traces
    } else {
        let mut slots: Vec<Option<Result<RegretTrace, HarnessError>>> =
            (0..count).map(|_| None).collect();
        let chunks = slots.chunks_mut(count as usize / threads + 1);
        std::thread::scope(|scope| {
            let mut start = 0u32;
            for chunk in chunks {
                let len = chunk.len() as u32;
                let first = start;
                scope.spawn(move || {
                    for (offset, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(run_experiment(config, first + offset as u32));
                    }
                });
                start += len;
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.expect("every experiment index was scheduled"))
            .collect::<Result<Vec<_>, _>>()?
    };

    Ok((summarize(&traces), traces))
}

pub fn summarize(traces: &[RegretTrace]) -> BatchSummary {
    assert!(!traces.is_empty());
    let horizon = traces[0].cumulative_regret.len();
    let count = traces.len() as f64;

    let mut mean = vec![0.0; horizon];
    for trace in traces {
        for (slot, &value) in trace.cumulative_regret.iter().enumerate() {
            mean[slot] += value;
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    let mut std = vec![0.0; horizon];
    for trace in traces {
        for (slot, &value) in trace.cumulative_regret.iter().enumerate() {
            let d = value - mean[slot];
            std[slot] += d * d;
        }
    }
    for s in std.iter_mut() {
        *s = (*s / count).sqrt();
    }

    let final_regrets: Vec<f64> = traces.iter().map(|t| t.final_regret).collect();
    let mean_final = final_regrets.iter().sum::<f64>() / count;
    let std_final = (final_regrets
        .iter()
        .map(|r| (r - mean_final).powi(2))
        .sum::<f64>()
        / count)
        .sqrt();
    let mean_optimal =
        traces.iter().map(|t| t.optimal_arm_pulls as f64).sum::<f64>() / count;

    let committed_counts = if traces.iter().any(|t| t.committed.is_some()) {
        let mut counts: Vec<(String, u32)> = Vec::new();
        for trace in traces {
            if let Some(label) = &trace.committed {
                match counts.iter_mut().find(|(l, _)| l == label) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((label.clone(), 1)),
                }
            }
        }
        counts.sort();
        Some(counts)
    } else {
        None
    };

    BatchSummary {
        boxplot: boxplot_stats(&final_regrets),
        mean_regret_per_slot: mean,
        std_regret_per_slot: std,
        mean_final_regret: mean_final,
        std_final_regret: std_final,
        mean_optimal_arm_pulls: mean_optimal,
        final_regrets,
        committed_counts,
    }
}
