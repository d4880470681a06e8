//! Binary-level tests: exit codes, artifact determinism, and the verify
//! battery's output contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vi-spectral")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("VI_SPECTRAL_SEED")
        .output()
        .expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vi_spectral_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn generate_is_deterministic_and_valid() {
    let dir = temp_dir("gen");
    let args = [
        "generate",
        "--n",
        "4",
        "--m",
        "2",
        "--seed",
        "9",
        "--density",
        "0.7",
        "--out",
    ];
    let first = run_in(&dir, &[&args[..], &["a"]].concat());
    assert!(first.status.success(), "{:?}", first);
    let second = run_in(&dir, &[&args[..], &["b"]].concat());
    assert!(second.status.success());

    let mdp_a = std::fs::read(dir.join("a/mdp.json")).unwrap();
    let mdp_b = std::fs::read(dir.join("b/mdp.json")).unwrap();
    assert_eq!(mdp_a, mdp_b, "generation must be byte-identical");
    let cert_a = std::fs::read(dir.join("a/certificate.json")).unwrap();
    let cert_b = std::fs::read(dir.join("b/certificate.json")).unwrap();
    assert_eq!(cert_a, cert_b);

    // The certificate carries the optimum and the structural flags.
    let cert: serde_json::Value = serde_json::from_slice(&cert_a).unwrap();
    assert_eq!(cert["unique_optimal"], true);
    assert_eq!(cert["irreducible"], true);
    assert_eq!(cert["aperiodic"], true);
    assert!(cert["certificate"]["v_star"].as_array().unwrap().len() == 4);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn generate_singleton_model() {
    let dir = temp_dir("gen1");
    let out = run_in(
        &dir,
        &[
            "generate",
            "--n",
            "1",
            "--m",
            "1",
            "--seed",
            "3",
            "--density",
            "1.0",
            "--out",
            ".",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    let mdp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("mdp.json")).unwrap()).unwrap();
    assert_eq!(mdp["n"], 1);
    assert_eq!(mdp["transition"][0][0][0], 1.0);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    let dir = temp_dir("usage");
    // Invalid density.
    let out = run_in(
        &dir,
        &["generate", "--n", "4", "--m", "2", "--density", "0.0"],
    );
    assert_eq!(out.status.code(), Some(1), "{:?}", out);
    // Unknown flag.
    let out = run_in(&dir, &["generate", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    // Unreadable model file.
    let out = run_in(&dir, &["run", "--mdp", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn exhausted_generation_exits_two() {
    let dir = temp_dir("exhaust");
    // Identical rewards with one state and two actions: uniqueness can never
    // hold, so rejection sampling must run out.
    let out = run_in(
        &dir,
        &[
            "generate",
            "--n",
            "1",
            "--m",
            "2",
            "--density",
            "1.0",
            "--reward-lo",
            "0.5",
            "--reward-hi",
            "0.5",
            "--max-attempts",
            "5",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{:?}", out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_writes_consistent_artifacts() {
    let dir = temp_dir("run");
    let gen = run_in(
        &dir,
        &[
            "generate",
            "--n",
            "5",
            "--m",
            "3",
            "--seed",
            "7",
            "--density",
            "0.6",
            "--out",
            ".",
        ],
    );
    assert!(gen.status.success());
    let out = run_in(
        &dir,
        &[
            "run",
            "--mdp",
            "mdp.json",
            "--alpha",
            "0.5",
            "--horizon",
            "20",
            "--e0-seed",
            "4",
            "--out",
            "results",
            "--emit-matrices",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    for file in ["trace.csv", "report.json", "matrices.json"] {
        assert!(dir.join("results").join(file).exists(), "{file} missing");
    }

    let csv = std::fs::read_to_string(dir.join("results/trace.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,e_inf_norm,c_t,delta_norm_sq_weighted,r_t,"));
    assert_eq!(lines.count(), 21, "horizon 20 gives 21 rows");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("results/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["steps"].as_array().unwrap().len(), 21);
    assert_eq!(report["summary"]["corollary_holds"], true);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_consensus_mode_reports_geometric_consensus() {
    let dir = temp_dir("consensus");
    let out = run_in(
        &dir,
        &[
            "run",
            "--n",
            "4",
            "--m",
            "2",
            "--seed",
            "11",
            "--alpha",
            "0.5",
            "--gamma",
            "0.9",
            "--horizon",
            "10",
            "--e0-mode",
            "consensus",
            "--c",
            "3",
            "--out",
            ".",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    let csv = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let c10: f64 = rows[10].split(',').nth(2).unwrap().parse().unwrap();
    let expect = 3.0 * 0.95_f64.powi(10);
    assert!(
        (c10 - expect).abs() <= 1e-12,
        "c_10 = {c10}, expected {expect}"
    );
    // Every step is flagged degenerate (pure consensus error).
    for row in &rows {
        assert_eq!(row.split(',').next_back().unwrap(), "1");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_undamped_reports_gamma_as_contraction_factor() {
    let dir = temp_dir("alpha_one");
    let out = run_in(
        &dir,
        &[
            "run",
            "--n",
            "4",
            "--m",
            "2",
            "--seed",
            "13",
            "--alpha",
            "1.0",
            "--gamma",
            "0.9",
            "--horizon",
            "12",
            "--out",
            ".",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["gamma_alpha"], report["gamma"]);
    assert_eq!(report["gamma_alpha"], 0.9);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_with_explicit_initial_values() {
    let dir = temp_dir("explicit");
    std::fs::write(dir.join("v0.json"), "[0.5, -0.25, 1.5]").unwrap();
    let out = run_in(
        &dir,
        &[
            "run",
            "--n",
            "3",
            "--m",
            "2",
            "--seed",
            "5",
            "--density",
            "0.7",
            "--alpha",
            "0.8",
            "--horizon",
            "8",
            "--e0-mode",
            "explicit",
            "--v0-file",
            "v0.json",
            "--out",
            ".",
        ],
    );
    assert!(out.status.success(), "{:?}", out);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_quick_prints_groups_and_passes() {
    let dir = temp_dir("verify");
    let out = run_in(&dir, &["verify", "--quick"]);
    assert!(out.status.success(), "{:?}", out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    for group in [
        "oracle_equivalence",
        "sandwich_bounds",
        "theorem_equality",
        "corollary_decay",
        "consensus_dynamics",
        "lemma_identities",
        "rayleigh_bound",
        "lambda_bound_lemma",
        "aps_validity",
        "inf_norm_contraction",
    ] {
        assert!(
            stdout.contains(&format!("{group}: PASS")),
            "missing PASS line for {group} in:\n{stdout}"
        );
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_fault_injection_fails_with_contract_exit_code() {
    let dir = temp_dir("verify_fault");
    let out = run_in(&dir, &["verify", "--quick", "--inject-fault"]);
    let code = out.status.code().unwrap();
    assert!(code >= 4, "expected >= 4, got {code}: {:?}", out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("theorem_equality: FAIL"), "{stdout}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_seed_env_override_is_accepted() {
    let dir = temp_dir("verify_env");
    let out = Command::new(bin())
        .args(["verify", "--quick", "--grid-n", "2"])
        .current_dir(&dir)
        .env("VI_SPECTRAL_SEED", "12345")
        .output()
        .unwrap();
    assert!(out.status.success(), "{:?}", out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("seed=12345"), "{stdout}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_n_one_grid_reports_skips_not_failures() {
    let dir = temp_dir("verify_n1");
    let out = run_in(&dir, &["verify", "--quick", "--grid-n", "1"]);
    assert!(out.status.success(), "{:?}", out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let theorem_line = stdout
        .lines()
        .find(|l| l.starts_with("theorem_equality"))
        .unwrap();
    assert!(theorem_line.contains("failed=0"), "{theorem_line}");
    assert!(!theorem_line.contains("skipped=0"), "{theorem_line}");
    std::fs::remove_dir_all(&dir).unwrap();
}
