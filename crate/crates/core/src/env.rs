//! Arm-reward environments: Bernoulli and clipped-Gaussian arms, random
//! instance generation, and pseudo-regret.
//!
//! Arms are indexed from 0. An environment is immutable once built; reward
//! sampling mutates only the caller's generator, so each experiment thread
//! owns its streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::UniformSource;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("environment needs at least two arms, got {0}")]
    TooFewArms(usize),
    #[error("arm mean {0} outside [0, 1]")]
    MeanOutOfRange(f64),
    #[error("gaussian sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("gap {min_gap} infeasible for {arms} arms")]
    InfeasibleGap { arms: usize, min_gap: f64 },
    #[error("gave up drawing a gap-{min_gap} instance after {attempts} attempts")]
    RejectionExhausted { min_gap: f64, attempts: u64 },
    #[error("pull counts sum to {got}, expected horizon {expected}")]
    CountMismatch { got: u64, expected: u64 },
    #[error("unknown environment preset '{0}'")]
    UnknownPreset(String),
}

/// How rewards are generated from an arm's mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RewardModel {
    /// Reward is 1 with probability equal to the arm mean, else 0.
    Bernoulli,
    /// Mean plus sigma-scaled standard normal, hard-clipped to [0, 1].
    GaussianClipped { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmDistribution {
    pub mean: f64,
    pub model: RewardModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    arms: Vec<ArmDistribution>,
    optimal_mean: f64,
    optimal_arm: usize,
}

impl Environment {
    pub fn new(arms: Vec<ArmDistribution>) -> Result<Self, EnvError> {
        if arms.len() < 2 {
            return Err(EnvError::TooFewArms(arms.len()));
        }
        let mut optimal_arm = 0;
        for (i, arm) in arms.iter().enumerate() {
            if !(0.0..=1.0).contains(&arm.mean) {
                return Err(EnvError::MeanOutOfRange(arm.mean));
            }
            if let RewardModel::GaussianClipped { sigma } = arm.model {
                if sigma <= 0.0 || sigma.is_nan() {
                    return Err(EnvError::BadSigma(sigma));
                }
            }
            if arm.mean > arms[optimal_arm].mean {
                optimal_arm = i;
            }
        }
        let optimal_mean = arms[optimal_arm].mean;
        Ok(Environment {
            arms,
            optimal_mean,
            optimal_arm,
        })
    }

    pub fn from_means(means: &[f64], model: RewardModel) -> Result<Self, EnvError> {
        Self::new(means.iter().map(|&mean| ArmDistribution { mean, model }).collect())
    }

    pub fn bernoulli(means: &[f64]) -> Result<Self, EnvError> {
        Self::from_means(means, RewardModel::Bernoulli)
    }

    pub fn gaussian(means: &[f64], sigma: f64) -> Result<Self, EnvError> {
        Self::from_means(means, RewardModel::GaussianClipped { sigma })
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.arms[arm].mean
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.mean).collect()
    }

    pub fn optimal_mean(&self) -> f64 {
        self.optimal_mean
    }

    /// Lowest index attaining the maximum mean.
    pub fn optimal_arm(&self) -> usize {
        self.optimal_arm
    }

    /// Draw one reward for `arm` from the caller's stream.
    pub fn sample_reward<R: UniformSource>(
        &self,
        arm: usize,
        rng: &mut R,
    ) -> Result<f64, EnvError> {
        let dist = self.arms.get(arm).ok_or(EnvError::ArmOutOfRange {
            arm,
            arms: self.arms.len(),
        })?;
        Ok(match dist.model {
            RewardModel::Bernoulli => {
                if rng.next_unit() <= dist.mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::GaussianClipped { sigma } => {
                (dist.mean + sigma * standard_normal(rng)).clamp(0.0, 1.0)
            }
        })
    }
}

/// Standard normal via Box-Muller (cosine branch). Consumes two uniforms.
pub fn standard_normal<R: UniformSource>(rng: &mut R) -> f64 {
    // Shift the first uniform into (0, 1] so the log is finite.
    let u1 = 1.0 - rng.next_unit();
    let u2 = rng.next_unit();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

const REJECTION_CAP: u64 = 1_000_000;

/// Draw `k` means in [0, 1] whose pairwise differences are all at least
/// `min_gap`, by rejection sampling. Deterministic given the generator state.
pub fn random_means<R: UniformSource>(
    k: usize,
    min_gap: f64,
    rng: &mut R,
) -> Result<Vec<f64>, EnvError> {
    if k < 2 {
        return Err(EnvError::TooFewArms(k));
    }
    if min_gap < 0.0 || k as f64 * min_gap > 1.0 {
        return Err(EnvError::InfeasibleGap { arms: k, min_gap });
    }
    let mut means = vec![0.0; k];
    for _ in 0..REJECTION_CAP {
        for m in means.iter_mut() {
            *m = rng.next_unit();
        }
        let ok = (0..k).all(|i| (0..i).all(|j| (means[i] - means[j]).abs() >= min_gap));
        if ok {
            return Ok(means);
        }
    }
    Err(EnvError::RejectionExhausted {
        min_gap,
        attempts: REJECTION_CAP,
    })
}

/// Pseudo-regret after `horizon` plays: `N*mu_star - sum_k T_k * mu_k`.
pub fn pseudo_regret(counts: &[u64], env: &Environment, horizon: u64) -> Result<f64, EnvError> {
    let total: u64 = counts.iter().sum();
    if total != horizon || counts.len() != env.num_arms() {
        return Err(EnvError::CountMismatch {
            got: total,
            expected: horizon,
        });
    }
    let collected: f64 = counts
        .iter()
        .enumerate()
        .map(|(k, &t)| t as f64 * env.mean(k))
        .sum();
    Ok(horizon as f64 * env.optimal_mean() - collected)
}

/// Fixed arm sets used throughout the evaluation: `mu1`/`mu2` are 4-armed,
/// `mu3`/`mu4` are 8-armed; the second and fourth have tightly packed means.
pub fn preset_means(name: &str) -> Result<Vec<f64>, EnvError> {
    match name {
        "mu1" => Ok(vec![0.1, 0.3, 0.5, 0.7]),
        "mu2" => Ok(vec![0.54, 0.53, 0.52, 0.51]),
        "mu3" => Ok(vec![0.1, 0.5, 0.8, 0.7, 0.4, 0.2, 0.6, 0.3]),
        "mu4" => Ok(vec![0.21, 0.22, 0.26, 0.28, 0.24, 0.25, 0.27, 0.23]),
        other => Err(EnvError::UnknownPreset(other.to_string())),
    }
}
