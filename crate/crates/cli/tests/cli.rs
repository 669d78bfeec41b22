//! End-to-end checks of the command-line interface: file outputs, paired
//! comparisons, determinism, config-file merging, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mabsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mabsim-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn compare_writes_csv_per_policy_and_one_summary() {
    let dir = temp_dir("compare");
    let out = run(&[
        "compare",
        "--policies",
        "ucb,sbts-essr",
        "--arms",
        "4",
        "--horizon",
        "800",
        "--experiments",
        "5",
        "--seed",
        "42",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("ucb.csv").exists());
    assert!(dir.join("sbts-essr.csv").exists());
    assert!(dir.join("summary.json").exists());

    let summary: serde_json::Value =
        serde_json::from_slice(&read(&dir.join("summary.json"))).expect("valid json");
    assert_eq!(summary["base_seed"], 42);
    let results = summary["results"].as_array().expect("results array");
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["policy"], "ucb");
    assert_eq!(results[1]["policy"], "sbts-essr");
    // Counter and boxplot fields named by the output contract.
    assert!(results[1]["draws_per_slot"].is_array());
    assert!(results[1]["comparisons_per_slot"].is_array());
    assert!(results[0]["boxplot"]["median"].is_number());
    assert_eq!(results[0]["final_regrets"].as_array().unwrap().len(), 5);

    let csv = String::from_utf8(read(&dir.join("ucb.csv"))).expect("utf8");
    assert!(csv.starts_with("slot,mean_regret,std_regret\n"));
    assert_eq!(csv.lines().count(), 801);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn identical_command_lines_produce_identical_files() {
    let dir = temp_dir("determinism");
    let args = [
        "run",
        "--policy",
        "sbts-es",
        "--env",
        "mu2",
        "--beta-bins",
        "10",
        "--horizon",
        "500",
        "--experiments",
        "4",
        "--seed",
        "7",
        "--out",
    ];
    let mut first = args.to_vec();
    let dir_str = dir.to_str().unwrap().to_string();
    first.push(&dir_str);
    assert!(run(&first).status.success());
    let csv1 = read(&dir.join("sbts-es.csv"));
    let json1 = read(&dir.join("summary.json"));
    assert!(run(&first).status.success());
    assert_eq!(csv1, read(&dir.join("sbts-es.csv")));
    assert_eq!(json1, read(&dir.join("summary.json")));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn sweep_writes_one_curve_per_precision() {
    let dir = temp_dir("sweep");
    let out = run(&[
        "sweep-wl",
        "--policy",
        "sbts-essr",
        "--precision",
        "f32,fixed:27:26,fixed:11:10,fixed:6:5",
        "--env",
        "mu1",
        "--horizon",
        "400",
        "--experiments",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "sbts-essr_f32.csv",
        "sbts-essr_fixed-27-26.csv",
        "sbts-essr_fixed-11-10.csv",
        "sbts-essr_fixed-6-5.csv",
    ] {
        assert!(dir.join(name).exists(), "missing {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&read(&dir.join("summary.json"))).expect("valid json");
    assert_eq!(summary["results"].as_array().unwrap().len(), 4);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn rimab_reports_commitment() {
    let dir = temp_dir("rimab");
    let out = run(&[
        "rimab",
        "--env",
        "mu1",
        "--reward",
        "gaussian:0.05",
        "--nlearn",
        "100",
        "--horizon",
        "600",
        "--experiments",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&read(&dir.join("summary.json"))).expect("valid json");
    let result = &summary["results"][0];
    assert_eq!(result["policy"], "rimab");
    assert_eq!(
        result["committed_algorithm"].as_array().unwrap().len(),
        3
    );
    assert!(result["belief_per_slot"].is_array());
    assert!(result["active_candidate_per_slot"].is_array());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_file_fills_in_missing_flags() {
    let dir = temp_dir("config");
    std::fs::create_dir_all(&dir).expect("mkdir");
    let config_path = dir.join("run.json");
    std::fs::write(
        &config_path,
        serde_json::json!({
            "policy": "ucb",
            "env": "mu1",
            "horizon": 300,
            "experiments": 2,
            "seed": 5,
            "out": dir.join("from-file").to_str().unwrap(),
        })
        .to_string(),
    )
    .expect("write config");

    // Flags absent: everything comes from the file.
    let out = run(&["run", "--config", config_path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("from-file/ucb.csv").exists());

    // A flag overrides its file value.
    let override_dir = dir.join("from-flag");
    let out = run(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--policy",
        "sbts",
        "--out",
        override_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(override_dir.join("sbts.csv").exists());
    assert!(!override_dir.join("ucb.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn exit_codes_follow_the_contract() {
    // Success.
    assert_eq!(run(&["validate"]).status.code(), Some(0));
    // Usage errors exit 1.
    assert_eq!(run(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["run"]).status.code(), Some(1), "missing --policy");
    assert_eq!(
        run(&["run", "--policy", "definitely-not-a-policy"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&[
            "run",
            "--policy",
            "ucb",
            "--env",
            "mu1",
            "--horizon",
            "2" // shorter than the arm count
        ])
        .status
        .code(),
        Some(1)
    );
    // Help is not an error.
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn validate_subcommand_prints_per_check_lines() {
    let out = run(&["validate", "--seed", "99"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(text.contains("all") && text.contains("checks passed"));
}
