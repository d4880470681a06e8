//! Command-line driver: `generate`, `run`, and `verify`.
//!
//! Exit codes are part of the contract:
//!
//! * `0` — success
//! * `1` — usage or validation error (bad flags, unreadable or invalid model)
//! * `2` — generation failed (rejection sampling exhausted its attempts)
//! * `3` — a traced run violated its own sandwich bounds
//! * `>= 4` — verification failures: `3 + number of failed property groups`
//!
//! `VI_SPECTRAL_SEED` overrides the default suite seed for `verify`; an
//! explicit `--seed` flag wins over the environment.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aps::{FaultInjection, TerminalChoice};
use crate::generators::{sample_until_assumption, GeneratorConfig};
use crate::report::{run_experiment, write_artifacts, E0Mode, ExperimentConfig, MdpSource};
use crate::suite::{run_suite, GridSpec, SuiteConfig, DEFAULT_SUITE_SEED};
use crate::Error;

#[derive(Debug, Parser)]
#[command(
    name = "vi-spectral",
    version,
    about = "Damped value iteration with weighted-L2 contraction diagnostics and spectral rate bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a model satisfying the structural assumption and write it to
    /// disk with its optimality certificate.
    Generate(GenerateArgs),
    /// Trace a damped run, attach all diagnostics, and write trace.csv plus
    /// report.json.
    Run(RunArgs),
    /// Run the seeded verification battery and print one line per property
    /// group.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct GeneratorFlags {
    /// Number of states.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Number of actions.
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of states given positive transition mass per (state, action).
    #[arg(long, default_value_t = 0.6)]
    density: f64,
    /// Discount factor.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Lower end of the uniform reward range.
    #[arg(long, default_value_t = 0.0)]
    reward_lo: f64,
    /// Upper end of the uniform reward range.
    #[arg(long, default_value_t = 1.0)]
    reward_hi: f64,
    /// Rejection-sampling budget.
    #[arg(long, default_value_t = 100)]
    max_attempts: u32,
}

impl GeneratorFlags {
    fn to_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            n: self.n,
            m: self.m,
            seed: self.seed,
            density: self.density,
            reward_range: (self.reward_lo, self.reward_hi),
            gamma: self.gamma,
            max_attempts: self.max_attempts,
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorFlags,
    /// Output directory for mdp.json and certificate.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum E0ModeFlag {
    /// Seeded error vector of the given scale around the optimum.
    Random,
    /// Constant offset from the optimum.
    Consensus,
    /// Initial values read from a JSON array file.
    Explicit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TerminalFlag {
    Uniform,
    Stationary,
}

impl From<TerminalFlag> for TerminalChoice {
    fn from(flag: TerminalFlag) -> TerminalChoice {
        match flag {
            TerminalFlag::Uniform => TerminalChoice::Uniform,
            TerminalFlag::Stationary => TerminalChoice::StationaryOfLastM,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Model JSON file; when absent, a model is sampled from the generator
    /// flags below.
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorFlags,
    /// Learning rate in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Number of steps.
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    #[arg(long, value_enum, default_value_t = E0ModeFlag::Random)]
    e0_mode: E0ModeFlag,
    /// Seed for the random initial error.
    #[arg(long, default_value_t = 1)]
    e0_seed: u64,
    /// Sup norm of the random initial error.
    #[arg(long, default_value_t = 1.0)]
    e0_scale: f64,
    /// Consensus offset (e0-mode = consensus).
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// JSON array of initial values (e0-mode = explicit).
    #[arg(long)]
    v0_file: Option<PathBuf>,
    /// Terminal distribution for the backward probability recursion.
    #[arg(long, value_enum, default_value_t = TerminalFlag::Uniform)]
    aps_terminal: TerminalFlag,
    /// Output directory for trace.csv and report.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also dump every per-step matrix to matrices.json.
    #[arg(long)]
    emit_matrices: bool,
    /// Negative-control hook: perturb one mix entry by 1e-3 mid-run before
    /// diagnostics. The decay checks must then fail.
    #[arg(long)]
    inject_fault: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Base seed (wins over VI_SPECTRAL_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Use a small fast grid instead of the full documented one.
    #[arg(long)]
    quick: bool,
    /// Restrict the grid to these state counts.
    #[arg(long, value_delimiter = ',')]
    grid_n: Option<Vec<usize>>,
    /// Negative control: corrupt every run's mix sequence by 1e-3 and expect
    /// the battery to fail.
    #[arg(long)]
    inject_fault: bool,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::SandwichViolated { .. } => 3,
        Error::ExhaustedAttempts { .. } => 2,
        _ => 1,
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), (i32, String)> {
    let config = args.generator.to_config();
    config.validate().map_err(|e| (1, e.to_string()))?;
    let (mdp, assumption, attempts) =
        sample_until_assumption(&config).map_err(|e| (exit_code_for(&e), e.to_string()))?;
    std::fs::create_dir_all(&args.out).map_err(|e| (1, e.to_string()))?;
    let mdp_path = args.out.join("mdp.json");
    let cert_path = args.out.join("certificate.json");
    std::fs::write(&mdp_path, mdp.to_json_string()).map_err(|e| (1, e.to_string()))?;
    let cert_json = serde_json::to_string_pretty(&assumption).map_err(|e| (1, e.to_string()))?;
    std::fs::write(&cert_path, cert_json).map_err(|e| (1, e.to_string()))?;
    println!(
        "wrote {} and {} (n={}, m={}, attempts={attempts})",
        mdp_path.display(),
        cert_path.display(),
        mdp.n,
        mdp.m
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), (i32, String)> {
    let mdp_source = match &args.mdp {
        Some(path) => MdpSource::File { path: path.clone() },
        None => MdpSource::Generator(args.generator.to_config()),
    };
    let e0 = match args.e0_mode {
        E0ModeFlag::Random => E0Mode::Random {
            seed: args.e0_seed,
            scale: args.e0_scale,
        },
        E0ModeFlag::Consensus => E0Mode::Consensus { offset: args.c },
        E0ModeFlag::Explicit => {
            let path = args.v0_file.as_ref().ok_or((
                1,
                "--v0-file is required with --e0-mode explicit".to_string(),
            ))?;
            let text = std::fs::read_to_string(path).map_err(|e| (1, e.to_string()))?;
            let values: Vec<f64> =
                serde_json::from_str(&text).map_err(|e| (1, format!("bad v0 file: {e}")))?;
            E0Mode::Explicit { values }
        }
    };
    let config = ExperimentConfig {
        mdp_source,
        alpha: args.alpha,
        horizon: args.horizon,
        e0,
        aps_terminal: args.aps_terminal.into(),
        emit_matrices: args.emit_matrices,
    };
    let fault = args
        .inject_fault
        .then(|| FaultInjection::standard(args.horizon));
    let artifacts =
        run_experiment(&config, fault).map_err(|e| (exit_code_for(&e), e.to_string()))?;
    let written = write_artifacts(&args.out, &artifacts).map_err(|e| (1, e.to_string()))?;
    let summary = &artifacts.report.summary;
    println!(
        "wrote {} (steps={}, lambda={}, corollary_holds={}, max_theorem_residual={})",
        written
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(", "),
        artifacts.trace.horizon(),
        summary
            .lambda
            .map(|l| format!("{l:.6e}"))
            .unwrap_or_else(|| "n/a".into()),
        summary
            .corollary_holds
            .map(|b| b.to_string())
            .unwrap_or_else(|| "n/a".into()),
        summary
            .max_theorem_residual
            .map(|r| format!("{r:.3e}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), (i32, String)> {
    let base_seed = args
        .seed
        .or_else(|| {
            std::env::var("VI_SPECTRAL_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(DEFAULT_SUITE_SEED);
    let mut grid = if args.quick {
        GridSpec::quick()
    } else {
        GridSpec::default_grid()
    };
    if let Some(ns) = &args.grid_n {
        if ns.is_empty() {
            return Err((1, "--grid-n needs at least one value".into()));
        }
        grid.ns = ns.clone();
    }
    let config = SuiteConfig {
        base_seed,
        grid,
        inject_fault: args.inject_fault,
    };
    let report = run_suite(&config).map_err(|e| (exit_code_for(&e), e.to_string()))?;
    println!(
        "verification battery: seed={base_seed} runs={}{}",
        report.runs,
        if args.inject_fault {
            " (fault injected)"
        } else {
            ""
        }
    );
    for outcome in &report.outcomes {
        println!(
            "{}: {} (passed={}, failed={}, skipped={})",
            outcome.name,
            if outcome.ok() { "PASS" } else { "FAIL" },
            outcome.passed,
            outcome.failed,
            outcome.skipped
        );
        for failure in &outcome.sample_failures {
            println!("    {failure}");
        }
    }
    let failed = report.failed_groups();
    if failed == 0 {
        Ok(())
    } else {
        Err((
            (3 + failed as i32).min(125),
            format!("{failed} property group(s) failed"),
        ))
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => 0,
        Err((code, message)) => {
            eprintln!("error: {message}");
            code
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}
