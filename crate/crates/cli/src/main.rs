//! Command-line front end for the bandit simulator.
//!
//! Subcommands:
//!   run       one policy, one batch
//!   compare   several policies on paired seeds and environments
//!   sweep-wl  one policy across a list of precisions
//!   rimab     the algorithm-selection aggregator
//!   validate  self-check suite (exit code 2 on failure)
//!
//! Every run writes one regret CSV per policy and a single summary JSON.
//! Outputs are deterministic: the same command line produces byte-identical
//! files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mabsim::env::RewardModel;
use mabsim::harness::{
    parse_reward_model, run_batch, BatchSummary, EnvSpec, ExperimentConfig, RegretTrace,
    RunnerSpec,
};
use mabsim::output::{
    sanitize_label, write_regret_csv, write_summary_json, PolicyReport, SummaryFile,
};
use mabsim::policies::{PolicyConfig, PolicyKind, TieBreak};
use mabsim::rimab::{AggregatorConfig, AggregatorMode};
use mabsim::PrecisionSpec;

#[derive(Parser)]
#[command(name = "mabsim", version, about = "Multi-armed bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy over a batch of experiments.
    Run(RunArgs),
    /// Run several policies against shared environments and reward streams.
    Compare(CompareArgs),
    /// Sweep one policy across precisions.
    SweepWl(SweepArgs),
    /// Run the algorithm-selection aggregator.
    Rimab(RimabArgs),
    /// Run the self-check suite and report pass/fail per check.
    Validate(ValidateArgs),
}

/// Flags shared by every experiment-running subcommand. Values read from
/// `--config` fill in any flag not given on the command line.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Environment: mu1..mu4, random, random:K:gap, or means:0.1,0.7,...
    #[arg(long)]
    env: Option<String>,
    /// Arm count used by the bare `random` environment.
    #[arg(long)]
    arms: Option<usize>,
    /// Reward model: bernoulli or gaussian:sigma.
    #[arg(long)]
    reward: Option<String>,
    /// Slots per experiment.
    #[arg(long)]
    horizon: Option<u64>,
    /// Number of experiments in the batch.
    #[arg(long)]
    experiments: Option<u32>,
    /// Base seed; every stream in the batch derives from it.
    #[arg(long)]
    seed: Option<u32>,
    /// UCB exploration factor.
    #[arg(long)]
    alpha: Option<f64>,
    /// KL-UCB log-log coefficient.
    #[arg(long)]
    klucb_c: Option<f64>,
    /// Bin count for the binned Thompson samplers.
    #[arg(long)]
    beta_bins: Option<usize>,
    /// Quality-factor precision: f64, f32, fixed:WL:F, or fixed:WL.
    /// sweep-wl takes a comma-separated list.
    #[arg(long)]
    precision: Option<String>,
    /// Tie resolution: lowest, highest, or random.
    #[arg(long)]
    tie_break: Option<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which files to write: csv, json, or both.
    #[arg(long)]
    format: Option<String>,
    /// JSON file of flag defaults (flat object; flags override it).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Policy: ucb, klucb, bts-ref, sbts, sbts-es, or sbts-essr.
    #[arg(long)]
    policy: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated policies; rimab and velcro-approx are accepted too.
    #[arg(long)]
    policies: Option<String>,
    /// Learning-phase length for aggregator entries.
    #[arg(long)]
    nlearn: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Policy to sweep.
    #[arg(long)]
    policy: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RimabArgs {
    /// Learning-phase length before committing.
    #[arg(long)]
    nlearn: Option<u64>,
    /// Comma-separated candidate policies.
    #[arg(long)]
    candidates: Option<String>,
    /// Aggregator flavor: rimab (epoch + commit) or velcro-approx.
    #[arg(long)]
    aggregator: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ValidateArgs {
    /// Seed for the statistical checks.
    #[arg(long, default_value_t = 424242)]
    seed: u32,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            // Help and version requests are successes, not usage errors.
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run(args) => {
            let settings = Settings::load(&args.common)?;
            let name = require(
                args.policy.or_else(|| settings.file_string("policy")),
                "--policy",
            )?;
            let policy = settings.policy_config(&name)?;
            execute(&settings, vec![RunnerSpec::Single(policy)])
        }
        Command::Compare(args) => {
            let settings = Settings::load(&args.common)?;
            let list = require(
                args.policies.or_else(|| settings.file_string("policies")),
                "--policies",
            )?;
            let nlearn = args.nlearn.or_else(|| settings.file_u64("nlearn"));
            let mut runners = Vec::new();
            for name in list.split(',').filter(|s| !s.is_empty()) {
                runners.push(settings.runner_by_name(name.trim(), nlearn)?);
            }
            if runners.is_empty() {
                return Err("no policies given".to_string());
            }
            execute(&settings, runners)
        }
        Command::SweepWl(args) => {
            let settings = Settings::load(&args.common)?;
            let policy_name = require(
                args.policy.or_else(|| settings.file_string("policy")),
                "--policy",
            )?;
            let list = settings
                .precision_list
                .clone()
                .ok_or("sweep-wl needs --precision with a comma-separated list")?;
            let mut labeled = Vec::new();
            for spec in &list {
                let mut policy = settings.policy_config(&policy_name)?;
                policy.precision = *spec;
                let label = format!("{}_{}", policy.kind.label(), spec.label());
                labeled.push((RunnerSpec::Single(policy), label));
            }
            execute_labeled(&settings, labeled)
        }
        Command::Rimab(args) => {
            let settings = Settings::load(&args.common)?;
            let nlearn = args.nlearn.or_else(|| settings.file_u64("nlearn"));
            let candidates = args
                .candidates
                .or_else(|| settings.file_string("candidates"));
            let mode = match args
                .aggregator
                .or_else(|| settings.file_string("aggregator"))
                .as_deref()
            {
                None | Some("rimab") => AggregatorMode::EpochCommit,
                Some("velcro-approx") => AggregatorMode::BeliefSampled,
                Some(other) => return Err(format!("unknown aggregator '{other}'")),
            };
            let runner = settings.aggregator(nlearn, candidates.as_deref(), mode)?;
            execute(&settings, vec![runner])
        }
        Command::Validate(args) => {
            let checks = mabsim::validate::run_all(args.seed);
            let mut failed = 0;
            for check in &checks {
                let status = if check.passed { "PASS" } else { "FAIL" };
                println!("{status}  {:<36} {}", check.name, check.detail);
                if !check.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                println!("{failed} of {} checks failed", checks.len());
                Ok(ExitCode::from(2))
            } else {
                println!("all {} checks passed", checks.len());
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}

fn require(value: Option<String>, flag: &str) -> Result<String, String> {
    value.ok_or_else(|| format!("missing required flag {flag}"))
}

/// Resolved run settings: command-line flags override config-file values,
/// which override the built-in defaults.
struct Settings {
    env: EnvSpec,
    reward: RewardModel,
    horizon: u64,
    experiments: u32,
    seed: u32,
    alpha: f64,
    klucb_c: f64,
    bins: usize,
    precision: PrecisionSpec,
    precision_list: Option<Vec<PrecisionSpec>>,
    tie_break: TieBreak,
    threads: usize,
    out: PathBuf,
    write_csv: bool,
    write_json: bool,
    file: serde_json::Map<String, serde_json::Value>,
}

impl Settings {
    fn load(args: &CommonArgs) -> Result<Self, String> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                match serde_json::from_str::<serde_json::Value>(&text) {
                    Ok(serde_json::Value::Object(map)) => map,
                    Ok(_) => return Err("config file must hold a JSON object".to_string()),
                    Err(e) => return Err(format!("config file is not valid JSON: {e}")),
                }
            }
            None => serde_json::Map::new(),
        };
        let this = Settings {
            env: EnvSpec::Random {
                arms: 4,
                min_gap: 0.0,
            },
            reward: RewardModel::Bernoulli,
            horizon: 10_000,
            experiments: 100,
            seed: 42,
            alpha: 2.0,
            klucb_c: 0.0,
            bins: 20,
            precision: PrecisionSpec::Float64,
            precision_list: None,
            tie_break: TieBreak::Lowest,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: PathBuf::from("results"),
            write_csv: true,
            write_json: true,
            file,
        };
        this.resolve(args)
    }

    fn resolve(mut self, args: &CommonArgs) -> Result<Self, String> {
        let arms = args
            .arms
            .or_else(|| self.file_u64("arms").map(|v| v as usize))
            .unwrap_or(4);
        match args.env.clone().or_else(|| self.file_string("env")) {
            Some(env) => self.env = EnvSpec::parse(&env, arms).map_err(|e| e.to_string())?,
            None => {
                self.env = EnvSpec::Random {
                    arms,
                    min_gap: 0.0,
                }
            }
        }
        if let Some(reward) = args.reward.clone().or_else(|| self.file_string("reward")) {
            self.reward = parse_reward_model(&reward).map_err(|e| e.to_string())?;
        }
        if let Some(h) = args.horizon.or_else(|| self.file_u64("horizon")) {
            self.horizon = h;
        }
        if let Some(e) = args
            .experiments
            .or_else(|| self.file_u64("experiments").map(|v| v as u32))
        {
            self.experiments = e;
        }
        if let Some(s) = args.seed.or_else(|| self.file_u64("seed").map(|v| v as u32)) {
            self.seed = s;
        }
        if let Some(a) = args.alpha.or_else(|| self.file_f64("alpha")) {
            if !(0.5..=2.0).contains(&a) {
                eprintln!("note: alpha {a} is outside the usual [0.5, 2] range");
            }
            self.alpha = a;
        }
        if let Some(c) = args.klucb_c.or_else(|| self.file_f64("klucb_c")) {
            self.klucb_c = c;
        }
        if let Some(b) = args
            .beta_bins
            .or_else(|| self.file_u64("beta_bins").map(|v| v as usize))
        {
            self.bins = b;
        }
        if let Some(p) = args
            .precision
            .clone()
            .or_else(|| self.file_string("precision"))
        {
            let specs: Result<Vec<_>, _> = p
                .split(',')
                .filter(|s| !s.is_empty())
                .map(PrecisionSpec::parse)
                .collect();
            let specs = specs.map_err(|e| e.to_string())?;
            if specs.is_empty() {
                return Err("empty --precision list".to_string());
            }
            self.precision = specs[0];
            self.precision_list = Some(specs);
        }
        if let Some(t) = args
            .tie_break
            .clone()
            .or_else(|| self.file_string("tie_break"))
        {
            self.tie_break = TieBreak::parse(&t).ok_or_else(|| format!("unknown tie rule '{t}'"))?;
        }
        if let Some(t) = args
            .threads
            .or_else(|| self.file_u64("threads").map(|v| v as usize))
        {
            self.threads = t.max(1);
        }
        if let Some(out) = args
            .out
            .clone()
            .or_else(|| self.file_string("out").map(PathBuf::from))
        {
            self.out = out;
        }
        if let Some(f) = args.format.clone().or_else(|| self.file_string("format")) {
            match f.as_str() {
                "csv" => {
                    self.write_csv = true;
                    self.write_json = false;
                }
                "json" => {
                    self.write_csv = false;
                    self.write_json = true;
                }
                "both" => {}
                other => return Err(format!("unknown format '{other}'")),
            }
        }
        Ok(self)
    }

    fn file_string(&self, key: &str) -> Option<String> {
        self.file.get(key).map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    fn file_u64(&self, key: &str) -> Option<u64> {
        self.file.get(key).and_then(|v| v.as_u64())
    }

    fn file_f64(&self, key: &str) -> Option<f64> {
        self.file.get(key).and_then(|v| v.as_f64())
    }

    fn policy_config(&self, name: &str) -> Result<PolicyConfig, String> {
        let kind = PolicyKind::parse(name).ok_or_else(|| format!("unknown policy '{name}'"))?;
        let mut config = PolicyConfig::new(kind);
        config.alpha = self.alpha;
        config.klucb_c = self.klucb_c;
        config.bins = self.bins;
        config.precision = self.precision;
        config.tie_break = self.tie_break;
        Ok(config)
    }

    fn aggregator(
        &self,
        nlearn: Option<u64>,
        candidates: Option<&str>,
        mode: AggregatorMode,
    ) -> Result<RunnerSpec, String> {
        let mut config = AggregatorConfig::new();
        config.mode = mode;
        if let Some(n) = nlearn {
            config.n_learn = n;
        }
        let list = candidates.unwrap_or("ucb,sbts-essr");
        let parsed: Result<Vec<_>, _> = list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|name| self.policy_config(name.trim()))
            .collect();
        config.candidates = parsed?;
        Ok(RunnerSpec::Aggregator(config))
    }

    fn runner_by_name(&self, name: &str, nlearn: Option<u64>) -> Result<RunnerSpec, String> {
        match name {
            "rimab" => self.aggregator(nlearn, None, AggregatorMode::EpochCommit),
            "velcro-approx" => self.aggregator(nlearn, None, AggregatorMode::BeliefSampled),
            other => Ok(RunnerSpec::Single(self.policy_config(other)?)),
        }
    }

    fn experiment(&self, runner: RunnerSpec) -> ExperimentConfig {
        ExperimentConfig {
            env: self.env.clone(),
            reward: self.reward,
            runner,
            horizon: self.horizon,
            experiments: self.experiments,
            base_seed: self.seed,
            threads: self.threads,
        }
    }
}

fn execute(settings: &Settings, runners: Vec<RunnerSpec>) -> Result<ExitCode, String> {
    let labeled = runners
        .into_iter()
        .map(|r| {
            let label = r.label();
            (r, label)
        })
        .collect();
    execute_labeled(settings, labeled)
}

fn execute_labeled(
    settings: &Settings,
    runners: Vec<(RunnerSpec, String)>,
) -> Result<ExitCode, String> {
    let mut reports = Vec::new();
    let mut echo_config: Option<ExperimentConfig> = None;
    for (runner, label) in runners {
        let config = settings.experiment(runner);
        let (summary, traces) = run_batch(&config).map_err(|e| e.to_string())?;
        print_outcome(&label, &summary, &traces);
        if settings.write_csv {
            let path = settings.out.join(format!("{}.csv", sanitize_label(&label)));
            write_regret_csv(&path, &summary).map_err(|e| e.to_string())?;
            println!("  wrote {}", path.display());
        }
        reports.push(PolicyReport::new(&label, &summary, &traces));
        echo_config.get_or_insert(config);
    }
    if settings.write_json {
        let summary_file = SummaryFile {
            base_seed: settings.seed,
            config: echo_config.expect("at least one runner"),
            results: reports,
        };
        let path = settings.out.join("summary.json");
        write_summary_json(&path, &summary_file).map_err(|e| e.to_string())?;
        println!("  wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn print_outcome(label: &str, summary: &BatchSummary, traces: &[RegretTrace]) {
    println!(
        "{label}: mean final regret {:.2} (std {:.2}), mean optimal-arm pulls {:.1}",
        summary.mean_final_regret, summary.std_final_regret, summary.mean_optimal_arm_pulls
    );
    if let Some(counts) = &summary.committed_counts {
        let text: Vec<String> = counts
            .iter()
            .map(|(name, count)| format!("{name} x{count}"))
            .collect();
        println!("  committed: {}", text.join(", "));
    }
    let draws: u64 = traces.iter().map(|t| t.draws).sum();
    let comparisons: u64 = traces.iter().map(|t| t.comparisons).sum();
    println!("  generator draws {draws}, quality comparisons {comparisons}");
}
