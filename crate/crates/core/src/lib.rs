//! Multi-armed bandit simulation library.
//!
//! Implements the classical frequentist policies (UCB, KL-UCB), a family of
//! Thompson samplers built on uniform order statistics instead of a Beta
//! sampler (full-sort, binned, and incremental-binned variants), and an
//! algorithm-selection aggregator that learns which candidate policy suits an
//! unknown reward distribution before committing to it. A deterministic
//! experiment harness reproduces regret curves, word-length sweeps, and
//! algorithm-selection studies from a single base seed.

pub mod env;
pub mod harness;
pub mod numeric;
pub mod output;
pub mod policies;
pub mod rimab;
pub mod rng;
pub mod validate;

pub use env::{Environment, RewardModel};
pub use harness::{run_batch, run_experiment, BatchSummary, EnvSpec, ExperimentConfig, RunnerSpec};
pub use numeric::{FixedFormat, Precision, PrecisionSpec};
pub use policies::{ArmStats, Policy, PolicyConfig, PolicyKind};
pub use rimab::{Aggregator, AggregatorConfig, AggregatorMode};
pub use rng::Mt19937;
