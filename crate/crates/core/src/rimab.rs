//! Algorithm-selection aggregator: doubling-epoch exploration over candidate
//! policies with exponential-weights belief updates, committing to the
//! highest-belief candidate once the learning phase ends.
//!
//! All candidates share one set of arm statistics, so switching algorithms
//! never discards what has been learned about the arms. A `velcro`-style
//! variant that keeps every candidate active and samples per slot from the
//! belief is included as a comparison baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::Precision;
use crate::policies::{
    qf_klucb, qf_sbts, qf_sbts_es, qf_ucb, select_arm_tied, ArmStats, PolicyConfig, PolicyError,
    PolicyKind, SbtsEssr,
};
use crate::rng::UniformSource;

#[derive(Debug, Error, PartialEq)]
pub enum RimabError {
    #[error("aggregator needs at least two candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("learning phase must cover at least one slot")]
    NoLearningPhase,
    #[error("learning phase ({n_learn}) must end before the horizon ({horizon})")]
    LearningTooLong { n_learn: u64, horizon: u64 },
    #[error("candidate index {0} out of range")]
    BadCandidate(usize),
    #[error("cannot unbias reward: belief of candidate {0} is zero")]
    ZeroBelief(usize),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Probability vector over candidate algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pi: Vec<f64>,
}

impl Belief {
    pub fn uniform(candidates: usize) -> Result<Self, RimabError> {
        if candidates < 2 {
            return Err(RimabError::TooFewCandidates(candidates));
        }
        Ok(Belief {
            pi: vec![1.0 / candidates as f64; candidates],
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.pi
    }

    /// Exponential-weights update: scale the selected candidate's belief by
    /// `exp(eta * reward / pi)` and renormalize. A zero reward leaves the
    /// vector exactly unchanged.
    pub fn update(&mut self, candidate: usize, reward: f64, eta: f64) -> Result<(), RimabError> {
        let current = *self
            .pi
            .get(candidate)
            .ok_or(RimabError::BadCandidate(candidate))?;
        if current <= 0.0 {
            return Err(RimabError::ZeroBelief(candidate));
        }
        let growth = eta * reward / current;
        if growth < 700.0 {
            self.pi[candidate] = current * growth.exp();
        } else {
            // The multiplier would overflow; scaling everyone else down by
            // the same factor is the identical update after normalization.
            for (i, p) in self.pi.iter_mut().enumerate() {
                if i != candidate {
                    *p *= (-growth).exp();
                }
            }
        }
        let total: f64 = self.pi.iter().sum();
        for p in self.pi.iter_mut() {
            *p /= total;
        }
        Ok(())
    }

    /// Lowest index attaining the maximum belief.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.pi.iter().enumerate() {
            if p > self.pi[best] {
                best = i;
            }
        }
        best
    }

    pub fn sum(&self) -> f64 {
        self.pi.iter().sum()
    }
}

/// Exploration learning rate `sqrt(ln A / (n * K))`.
pub fn learning_rate(n: u64, arms: usize, candidates: usize) -> f64 {
    ((candidates as f64).ln() / (n as f64 * arms as f64)).sqrt()
}

/// Doubling-epoch bookkeeping: each candidate runs for `2^e` consecutive
/// slots; once every candidate has had its block, the exponent grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochState {
    pub exponent: u32,
    pub slot_in_block: u64,
    pub active: usize,
}

impl EpochState {
    pub fn new() -> Self {
        EpochState {
            exponent: 1,
            slot_in_block: 0,
            active: 0,
        }
    }

    pub fn advance(&mut self, candidates: usize) {
        self.slot_in_block += 1;
        if self.slot_in_block == 1u64 << self.exponent.min(62) {
            self.slot_in_block = 0;
            self.active += 1;
            if self.active >= candidates {
                self.exponent += 1;
                self.active = 0;
            }
        }
    }
}

impl Default for EpochState {
    fn default() -> Self {
        Self::new()
    }
}

/// Independent expansion of the block schedule: block lengths run
/// 2, 2, 4, 4, 8, 8, ... for two candidates, cycling through candidates
/// within each exponent. Used as the oracle the stateful advance is checked
/// against.
pub fn epoch_schedule_oracle(candidates: usize, slots: usize) -> Vec<usize> {
    let mut schedule = Vec::with_capacity(slots);
    let mut exponent = 1u32;
    'outer: loop {
        for candidate in 0..candidates {
            for _ in 0..(1u64 << exponent.min(62)) {
                schedule.push(candidate);
                if schedule.len() == slots {
                    break 'outer;
                }
            }
        }
        exponent += 1;
    }
    schedule
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorMode {
    /// Doubling-epoch learning phase, then commit to the best candidate.
    EpochCommit,
    /// All candidates scored every slot; follow a belief-weighted sample.
    BeliefSampled,
}

/// Aggregator tunables. Candidates default to UCB plus the incremental
/// binned Thompson sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub candidates: Vec<PolicyConfig>,
    pub n_learn: u64,
    pub mode: AggregatorMode,
}

impl AggregatorConfig {
    pub fn new() -> Self {
        AggregatorConfig {
            candidates: vec![
                PolicyConfig::new(PolicyKind::Ucb),
                PolicyConfig::new(PolicyKind::SbtsEssr),
            ],
            n_learn: 500,
            mode: AggregatorMode::EpochCommit,
        }
    }

    pub fn validate(&self, horizon: u64) -> Result<(), RimabError> {
        if self.candidates.len() < 2 {
            return Err(RimabError::TooFewCandidates(self.candidates.len()));
        }
        if self.mode == AggregatorMode::EpochCommit {
            if self.n_learn == 0 {
                return Err(RimabError::NoLearningPhase);
            }
            if self.n_learn >= horizon {
                return Err(RimabError::LearningTooLong {
                    n_learn: self.n_learn,
                    horizon,
                });
            }
        }
        for c in &self.candidates {
            c.validate()?;
        }
        Ok(())
    }
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self::new()
    }
}

// Per-candidate quality machinery. The incremental sampler is the only
// candidate kind carrying state across slots.
#[derive(Debug)]
struct Candidate {
    config: PolicyConfig,
    precision: Precision,
    essr: Option<SbtsEssr>,
}

/// Runtime state of one aggregator instance.
#[derive(Debug)]
pub struct Aggregator {
    candidates: Vec<Candidate>,
    arms: usize,
    n_learn: u64,
    mode: AggregatorMode,
    belief: Belief,
    epoch: EpochState,
    committed: Option<usize>,
    last_selected: usize,
    comparisons: u64,
    quality_draws: u64,
}

impl Aggregator {
    pub fn new(config: &AggregatorConfig, arms: usize, horizon: u64) -> Result<Self, RimabError> {
        config.validate(horizon)?;
        let mut candidates = Vec::with_capacity(config.candidates.len());
        for c in &config.candidates {
            let precision = c.precision.resolve(c.kind.unit_range()).map_err(PolicyError::from)?;
            let essr = if c.kind == PolicyKind::SbtsEssr {
                Some(SbtsEssr::new(c.bins)?)
            } else {
                None
            };
            candidates.push(Candidate {
                config: *c,
                precision,
                essr,
            });
        }
        Ok(Aggregator {
            belief: Belief::uniform(candidates.len())?,
            candidates,
            arms,
            n_learn: config.n_learn,
            mode: config.mode,
            epoch: EpochState::new(),
            committed: None,
            last_selected: 0,
            comparisons: 0,
            quality_draws: 0,
        })
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn committed(&self) -> Option<usize> {
        self.committed
    }

    /// Candidate that drove the most recent selection.
    pub fn active_candidate(&self) -> usize {
        self.last_selected
    }

    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    /// Generator values spent on quality computation in the latest slot.
    pub fn quality_draws(&self) -> u64 {
        self.quality_draws
    }

    pub fn candidate_label(&self, index: usize) -> &'static str {
        self.candidates[index].config.kind.label()
    }

    /// Bin table of an incremental-sampler candidate, if it has produced one.
    pub fn candidate_bin_table(&self, index: usize) -> Option<&crate::policies::BinTable> {
        self.candidates[index].essr.as_ref().and_then(|e| e.table())
    }

    /// Arm choice of one candidate on the shared statistics. UCB candidates
    /// widen their logarithm argument by the arm count instead of running an
    /// initialization round.
    fn candidate_arm<R: UniformSource>(
        &mut self,
        index: usize,
        stats: &ArmStats,
        n: u64,
        rng: &mut R,
    ) -> Result<usize, RimabError> {
        let arms = self.arms as u64;
        let comparisons = &mut self.comparisons;
        let candidate = &mut self.candidates[index];
        let cfg = &candidate.config;
        let before = rng.emitted();
        let mut quality = match cfg.kind {
            PolicyKind::Ucb => qf_ucb(stats, n, cfg.alpha, arms),
            PolicyKind::KlUcb => qf_klucb(stats, n, cfg.klucb_c),
            PolicyKind::BtsRef | PolicyKind::Sbts => qf_sbts(stats, rng, comparisons)?,
            PolicyKind::SbtsEs => qf_sbts_es(stats, cfg.bins, rng, comparisons)?,
            PolicyKind::SbtsEssr => candidate
                .essr
                .as_mut()
                .expect("ESSR state exists for its own kind")
                .quality(stats, rng, comparisons)?,
        };
        self.quality_draws += rng.emitted() - before;
        candidate.precision.quantize_vector(&mut quality);
        Ok(select_arm_tied(&quality, cfg.tie_break, rng)?)
    }

    /// Pick the arm for slot `n` (1-based).
    pub fn select<R: UniformSource>(
        &mut self,
        stats: &ArmStats,
        n: u64,
        rng: &mut R,
    ) -> Result<usize, RimabError> {
        self.quality_draws = 0;
        match self.mode {
            AggregatorMode::EpochCommit => {
                let candidate = if n <= self.n_learn {
                    self.epoch.active
                } else {
                    *self
                        .committed
                        .get_or_insert_with(|| self.belief.best())
                };
                self.last_selected = candidate;
                self.candidate_arm(candidate, stats, n, rng)
            }
            AggregatorMode::BeliefSampled => {
                // Every candidate stays live: score them all, then follow one.
                let mut arms = Vec::with_capacity(self.candidates.len());
                for index in 0..self.candidates.len() {
                    arms.push(self.candidate_arm(index, stats, n, rng)?);
                }
                let mut u = rng.next_unit();
                let mut chosen = self.candidates.len() - 1;
                for (index, &p) in self.belief.probabilities().iter().enumerate() {
                    if u < p {
                        chosen = index;
                        break;
                    }
                    u -= p;
                }
                self.last_selected = chosen;
                Ok(arms[chosen])
            }
        }
    }

    /// Feed back the reward for slot `n`. Belief updates run every learning
    /// slot (every slot for the belief-sampled mode); the epoch counter
    /// advances afterwards.
    pub fn observe(&mut self, n: u64, reward: f64) -> Result<(), RimabError> {
        match self.mode {
            AggregatorMode::EpochCommit => {
                if n <= self.n_learn {
                    let eta = learning_rate(n, self.arms, self.candidates.len());
                    self.belief.update(self.last_selected, reward, eta)?;
                    self.epoch.advance(self.candidates.len());
                }
            }
            AggregatorMode::BeliefSampled => {
                let eta = learning_rate(n, self.arms, self.candidates.len());
                self.belief.update(self.last_selected, reward, eta)?;
            }
        }
        Ok(())
    }
}
