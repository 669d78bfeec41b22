//! Arm-selection policies and the state they share.
//!
//! Every policy keeps the same two per-arm parameters: cumulative reward X
//! and pull count T, both starting at 1 (a uniform pseudo-prior). Each slot
//! a policy produces a quality factor per arm, the vector is projected onto
//! the configured precision, and the highest-scoring arm (lowest index on
//! ties) is played.

mod frequentist;
mod thompson;

pub use frequentist::{kl_divergence, klucb_upper, qf_klucb, qf_ucb};
pub use thompson::{
    bin_index, bin_midpoint, qf_bts_reference, qf_sbts, qf_sbts_es, BinTable, SbtsEssr,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{NumericError, Precision, PrecisionSpec};
use crate::rng::UniformSource;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("quality vector is empty")]
    EmptyQuality,
    #[error("quality factor for arm {arm} is NaN")]
    NanQuality { arm: usize },
    #[error("arm {arm} reward sum {sum} is fractional; this sampler needs integer success counts")]
    FractionalRewardSum { arm: usize, sum: f64 },
    #[error("bin count {0} is not usable")]
    BadBinCount(usize),
    #[error("removal from empty bin {bin} of arm {arm}")]
    EmptyBinRemoval { bin: usize, arm: usize },
    #[error("bin table column {arm} holds {have} samples, more than its target {target}")]
    TableInvariant { arm: usize, have: u64, target: u64 },
    #[error("inconsistent arm statistics: {0}")]
    BadStats(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// Per-arm cumulative reward X and pull count T, the state every policy
/// shares. Both start at 1 for every arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    reward_sums: Vec<f64>,
    pull_counts: Vec<u64>,
}

impl ArmStats {
    pub fn new(arms: usize) -> Self {
        ArmStats {
            reward_sums: vec![1.0; arms],
            pull_counts: vec![1; arms],
        }
    }

    /// Rebuild from raw values, enforcing `1 <= X[k] <= T[k]`.
    pub fn from_parts(reward_sums: Vec<f64>, pull_counts: Vec<u64>) -> Result<Self, PolicyError> {
        if reward_sums.len() != pull_counts.len() {
            return Err(PolicyError::BadStats(format!(
                "{} reward sums vs {} pull counts",
                reward_sums.len(),
                pull_counts.len()
            )));
        }
        for (arm, (&x, &t)) in reward_sums.iter().zip(&pull_counts).enumerate() {
            if t < 1 || x < 0.0 || x > t as f64 {
                return Err(PolicyError::BadStats(format!(
                    "arm {arm}: X = {x}, T = {t}"
                )));
            }
        }
        Ok(ArmStats {
            reward_sums,
            pull_counts,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.pull_counts.len()
    }

    pub fn reward_sum(&self, arm: usize) -> f64 {
        self.reward_sums[arm]
    }

    pub fn pull_count(&self, arm: usize) -> u64 {
        self.pull_counts[arm]
    }

    /// Credit `reward` to `arm`: X += reward, T += 1.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<(), PolicyError> {
        self.update_quantized(arm, reward, Precision::Float64)
    }

    /// As [`update`](Self::update), storing X at the precision's resolution.
    pub fn update_quantized(
        &mut self,
        arm: usize,
        reward: f64,
        precision: Precision,
    ) -> Result<(), PolicyError> {
        if arm >= self.num_arms() {
            return Err(PolicyError::ArmOutOfRange {
                arm,
                arms: self.num_arms(),
            });
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(PolicyError::RewardOutOfRange(reward));
        }
        self.reward_sums[arm] = precision.quantize_accumulator(self.reward_sums[arm] + reward);
        self.pull_counts[arm] += 1;
        debug_assert!(self.reward_sums[arm] <= self.pull_counts[arm] as f64);
        Ok(())
    }
}

/// Lowest index attaining the maximum quality factor.
pub fn select_arm(quality: &[f64]) -> Result<usize, PolicyError> {
    if quality.is_empty() {
        return Err(PolicyError::EmptyQuality);
    }
    let mut best = 0;
    for (arm, &value) in quality.iter().enumerate() {
        if value.is_nan() {
            return Err(PolicyError::NanQuality { arm });
        }
        if value > quality[best] {
            best = arm;
        }
    }
    Ok(best)
}

/// How exact quality-factor ties are resolved. Coarse formats and binned
/// samplers produce bit-identical scores routinely, so this visibly shapes
/// regret on tightly packed arm sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    Lowest,
    Highest,
    /// One uniform draw among the tied arms; deterministic per seed.
    Random,
}

impl TieBreak {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "lowest" => Some(TieBreak::Lowest),
            "highest" => Some(TieBreak::Highest),
            "random" => Some(TieBreak::Random),
            _ => None,
        }
    }
}

/// Argmax with an explicit tie rule. `Lowest` matches [`select_arm`].
pub fn select_arm_tied<R: UniformSource>(
    quality: &[f64],
    rule: TieBreak,
    rng: &mut R,
) -> Result<usize, PolicyError> {
    let lowest = select_arm(quality)?;
    if rule == TieBreak::Lowest {
        return Ok(lowest);
    }
    let top = quality[lowest];
    let tied: Vec<usize> = (0..quality.len()).filter(|&a| quality[a] == top).collect();
    Ok(match rule {
        TieBreak::Lowest => lowest,
        TieBreak::Highest => *tied.last().expect("argmax exists"),
        TieBreak::Random => {
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.next_int(0, (tied.len() - 1) as u32) as usize]
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Ucb,
    KlUcb,
    BtsRef,
    Sbts,
    SbtsEs,
    SbtsEssr,
}

impl PolicyKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ucb" => Some(PolicyKind::Ucb),
            "klucb" | "kl-ucb" => Some(PolicyKind::KlUcb),
            "bts-ref" => Some(PolicyKind::BtsRef),
            "sbts" => Some(PolicyKind::Sbts),
            "sbts-es" => Some(PolicyKind::SbtsEs),
            "sbts-essr" => Some(PolicyKind::SbtsEssr),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Ucb => "ucb",
            PolicyKind::KlUcb => "klucb",
            PolicyKind::BtsRef => "bts-ref",
            PolicyKind::Sbts => "sbts",
            PolicyKind::SbtsEs => "sbts-es",
            PolicyKind::SbtsEssr => "sbts-essr",
        }
    }

    /// Whether the policy's quality factors stay within [0, 1]; UCB's
    /// exploration bonus needs integer headroom instead.
    pub fn unit_range(&self) -> bool {
        !matches!(self, PolicyKind::Ucb)
    }

    pub fn uses_bins(&self) -> bool {
        matches!(self, PolicyKind::SbtsEs | PolicyKind::SbtsEssr)
    }

    /// Stable identifier separating policy-internal random streams.
    pub fn stream_id(&self) -> u64 {
        match self {
            PolicyKind::Ucb => 1,
            PolicyKind::KlUcb => 2,
            PolicyKind::BtsRef => 3,
            PolicyKind::Sbts => 4,
            PolicyKind::SbtsEs => 5,
            PolicyKind::SbtsEssr => 6,
        }
    }
}

/// Tunables for one policy instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// UCB exploration factor.
    pub alpha: f64,
    /// KL-UCB log-log coefficient.
    pub klucb_c: f64,
    /// Bin count L for the binned samplers.
    pub bins: usize,
    pub precision: PrecisionSpec,
    pub tie_break: TieBreak,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            alpha: 2.0,
            klucb_c: 0.0,
            bins: 20,
            precision: PrecisionSpec::Float64,
            tie_break: TieBreak::Lowest,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.kind.uses_bins() && self.bins < 2 {
            return Err(PolicyError::BadBinCount(self.bins));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(PolicyError::BadStats(format!(
                "exploration factor {} is not usable",
                self.alpha
            )));
        }
        Ok(())
    }
}

// Projects the policy's own uniform draws onto the active word length, the
// way a reduced-precision datapath would represent them before binning or
// sorting. Integer draws stay exact.
struct QuantizedSource<'a, R: UniformSource> {
    inner: &'a mut R,
    precision: Precision,
}

impl<R: UniformSource> UniformSource for QuantizedSource<'_, R> {
    fn next_unit(&mut self) -> f64 {
        self.precision.quantize_scalar(self.inner.next_unit())
    }

    fn next_int(&mut self, lo: u32, hi: u32) -> u32 {
        self.inner.next_int(lo, hi)
    }

    fn emitted(&self) -> u64 {
        self.inner.emitted()
    }
}

/// One policy bound to an arm count, carrying its private sampler state and
/// comparison counter across slots.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    precision: Precision,
    arms: usize,
    essr: Option<SbtsEssr>,
    comparisons: u64,
    quality_draws: u64,
}

impl Policy {
    pub fn new(config: PolicyConfig, arms: usize) -> Result<Self, PolicyError> {
        config.validate()?;
        let precision = config.precision.resolve(config.kind.unit_range())?;
        let essr = if config.kind == PolicyKind::SbtsEssr {
            Some(SbtsEssr::new(config.bins)?)
        } else {
            None
        };
        Ok(Policy {
            config,
            precision,
            arms,
            essr,
            comparisons: 0,
            quality_draws: 0,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Total quality-factor comparisons performed so far (sorting for the
    /// order-statistic samplers, bin scans for the binned ones).
    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    /// Generator values spent computing the most recent quality vector;
    /// excludes tie-break randomness.
    pub fn quality_draws(&self) -> u64 {
        self.quality_draws
    }

    /// Pick the arm to play in slot `n` (1-based). UCB and KL-UCB spend the
    /// first K slots playing each arm once; every other slot scores all arms
    /// and takes the argmax.
    pub fn select<R: UniformSource>(
        &mut self,
        stats: &ArmStats,
        n: u64,
        rng: &mut R,
    ) -> Result<usize, PolicyError> {
        if matches!(self.config.kind, PolicyKind::Ucb | PolicyKind::KlUcb)
            && n <= self.arms as u64
        {
            self.quality_draws = 0;
            return Ok((n - 1) as usize);
        }
        let before = rng.emitted();
        let mut quality = self.quality(stats, n, rng)?;
        self.quality_draws = rng.emitted() - before;
        self.precision.quantize_vector(&mut quality);
        select_arm_tied(&quality, self.config.tie_break, rng)
    }

    /// Raw quality factors for slot `n`, before precision projection.
    pub fn quality<R: UniformSource>(
        &mut self,
        stats: &ArmStats,
        n: u64,
        rng: &mut R,
    ) -> Result<Vec<f64>, PolicyError> {
        let Policy {
            config,
            precision,
            essr,
            comparisons,
            ..
        } = self;
        let mut source = QuantizedSource {
            inner: rng,
            precision: *precision,
        };
        match config.kind {
            PolicyKind::Ucb => Ok(qf_ucb(stats, n, config.alpha, 0)),
            PolicyKind::KlUcb => Ok(qf_klucb(stats, n, config.klucb_c)),
            PolicyKind::BtsRef => qf_bts_reference(stats, &mut source, comparisons),
            PolicyKind::Sbts => qf_sbts(stats, &mut source, comparisons),
            PolicyKind::SbtsEs => qf_sbts_es(stats, config.bins, &mut source, comparisons),
            PolicyKind::SbtsEssr => essr
                .as_mut()
                .expect("ESSR state exists for its own kind")
                .quality(stats, &mut source, comparisons),
        }
    }

    /// Bin table of the incremental sampler, if this policy keeps one.
    pub fn bin_table(&self) -> Option<&BinTable> {
        self.essr.as_ref().and_then(|e| e.table())
    }
}
