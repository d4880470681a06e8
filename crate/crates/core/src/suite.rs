//! The seeded verification battery behind `vi-spectral verify`.
//!
//! Ten property groups run over a documented grid of sampled models. Each
//! group counts per-instance passes, failures, and skips (a skip is a
//! legitimately excluded case: a consensus step, a weight below the
//! positivity floor). The groups, in order:
//!
//! 1.  `oracle_equivalence` — undamped iteration to a `1e-12` fixed point
//!     agrees with the enumeration optimum within `1e-8` per state.
//! 2.  `sandwich_bounds` — componentwise bounds within `1e-9`, blends in
//!     `[0,1]`, the mix reproduces the error recursion within `1e-9` relative.
//! 3.  `theorem_equality` — the weighted-norm decay identity closes within
//!     `1e-9` relative at every non-degenerate step, and the gain is strictly
//!     positive whenever the mix graph is strongly connected.
//! 4.  `corollary_decay` — the horizon bound with `lambda = min_t R_t` holds.
//! 5.  `consensus_dynamics` — `c_t` follows its geometric law (including the
//!     closed-form alpha=0.5, gamma=0.9, c_0=3 case at `1e-12`).
//! 6.  `lemma_identities` — the Laplacian and probability-vector quadratic
//!     identities over 1000 random draws each.
//! 7.  `rayleigh_bound` — gain at least `lambda2` of the generalized pair,
//!     and the two gain formulations agree within `1e-10` relative.
//! 8.  `lambda_bound_lemma` — `lambda2(Lt) >= lambda2(L)/p_max` on pipeline
//!     and synthetic Laplacians, tight for uniform weights.
//! 9.  `aps_validity` — backward recursion yields probability vectors
//!     satisfying the defining identity within `1e-11`.
//! 10. `inf_norm_contraction` — `||e_T||_inf <= gamma_alpha^T ||e_0||_inf + 1e-8`.
//!
//! With fault injection enabled (the negative control), every run's mix
//! sequence is corrupted by `1e-3` in one entry, and the battery must report
//! failures — demonstrating the checks would actually catch broken dynamics.

use crate::aps::{diagnose, FaultInjection, TerminalChoice};
use crate::generators::{
    random_initial_error, sample_until_assumption, GeneratorConfig, SplitMix64,
};
use crate::mdp::bellman_backup;
use crate::numerics::sym_eigen;
use crate::numerics::Matrix;
use crate::report::{recompute_summary, ExperimentConfig};
use crate::spectral::{
    lambda2_from_spectrum, laplacian_quadratic, lemma_bound_check, probability_quadratic,
    random_laplacian, random_weights, spectral_report, LaplacianMatrix,
};
use crate::vi::{run_vi, DampedViConfig};
use crate::Result;

/// Default base seed; override with `VI_SPECTRAL_SEED` or `verify --seed`.
pub const DEFAULT_SUITE_SEED: u64 = 7777;

/// Grid of model and run parameters swept by the battery.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub seeds_per_cell: u64,
    pub horizon: usize,
    pub density: f64,
}

impl GridSpec {
    /// The documented default: n in {2,4,8}, m in {2,3}, alpha in
    /// {0.3,0.7,1.0}, gamma in {0.5,0.9,0.99}, five seeds per cell, 50 steps.
    pub fn default_grid() -> GridSpec {
        GridSpec {
            ns: vec![2, 4, 8],
            ms: vec![2, 3],
            alphas: vec![0.3, 0.7, 1.0],
            gammas: vec![0.5, 0.9, 0.99],
            seeds_per_cell: 5,
            horizon: 50,
            density: 0.6,
        }
    }

    /// Reduced grid for fast negative-control runs.
    pub fn quick() -> GridSpec {
        GridSpec {
            ns: vec![3],
            ms: vec![2],
            alphas: vec![0.5],
            gammas: vec![0.9],
            seeds_per_cell: 2,
            horizon: 12,
            density: 0.7,
        }
    }

    fn cells(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut cells = Vec::new();
        for &n in &self.ns {
            for &m in &self.ms {
                for &alpha in &self.alphas {
                    for &gamma in &self.gammas {
                        cells.push((n, m, alpha, gamma));
                    }
                }
            }
        }
        cells
    }
}

/// Battery configuration.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub base_seed: u64,
    pub grid: GridSpec,
    /// Apply the standard fault to every run (negative control).
    pub inject_fault: bool,
}

impl Default for SuiteConfig {
    fn default() -> SuiteConfig {
        SuiteConfig {
            base_seed: DEFAULT_SUITE_SEED,
            grid: GridSpec::default_grid(),
            inject_fault: false,
        }
    }
}

/// Counters for one property group.
#[derive(Debug, Clone)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    /// First few failure descriptions, for the report.
    pub sample_failures: Vec<String>,
}

impl PropertyOutcome {
    fn new(name: &'static str) -> PropertyOutcome {
        PropertyOutcome {
            name,
            passed: 0,
            failed: 0,
            skipped: 0,
            sample_failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
            if self.sample_failures.len() < 5 {
                self.sample_failures.push(detail());
            }
        }
    }

    fn skip(&mut self) {
        self.skipped += 1;
    }

    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

/// Results of a full battery run.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub outcomes: Vec<PropertyOutcome>,
    pub runs: usize,
    pub inject_fault: bool,
}

impl SuiteReport {
    pub fn failed_groups(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.ok()).count()
    }

    pub fn all_passed(&self) -> bool {
        self.failed_groups() == 0
    }

    pub fn outcome(&self, name: &str) -> Option<&PropertyOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

fn derive_seeds(base: u64, cell: usize, rep: u64) -> (u64, u64) {
    let mut rng = SplitMix64::substream(base, (cell as u64) << 16 | rep);
    (rng.next_u64(), rng.next_u64())
}

struct Groups {
    oracle: PropertyOutcome,
    sandwich: PropertyOutcome,
    theorem: PropertyOutcome,
    corollary: PropertyOutcome,
    consensus: PropertyOutcome,
    lemmas: PropertyOutcome,
    rayleigh: PropertyOutcome,
    lambda_bound: PropertyOutcome,
    aps: PropertyOutcome,
    inf_norm_decay: PropertyOutcome,
}

/// Runs the full battery. Infrastructure failures (exhausted sampling, a trace
/// that violates its own sandwich) surface as errors; property failures are
/// counted in the report.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let mut g = Groups {
        oracle: PropertyOutcome::new("oracle_equivalence"),
        sandwich: PropertyOutcome::new("sandwich_bounds"),
        theorem: PropertyOutcome::new("theorem_equality"),
        corollary: PropertyOutcome::new("corollary_decay"),
        consensus: PropertyOutcome::new("consensus_dynamics"),
        lemmas: PropertyOutcome::new("lemma_identities"),
        rayleigh: PropertyOutcome::new("rayleigh_bound"),
        lambda_bound: PropertyOutcome::new("lambda_bound_lemma"),
        aps: PropertyOutcome::new("aps_validity"),
        inf_norm_decay: PropertyOutcome::new("inf_norm_contraction"),
    };

    oracle_equivalence(config, &mut g.oracle)?;
    lemma_identities(config, &mut g.lemmas);
    synthetic_lambda_bound(config, &mut g.lambda_bound)?;
    consensus_closed_form(config, &mut g.consensus)?;

    let cells = config.grid.cells();
    let mut runs = 0;
    for (cell_index, &(n, m, alpha, gamma)) in cells.iter().enumerate() {
        for rep in 0..config.grid.seeds_per_cell {
            let (model_seed, e0_seed) = derive_seeds(config.base_seed, cell_index, rep);
            let gen = GeneratorConfig {
                n,
                m,
                seed: model_seed,
                // Keep at least one target per row even for tiny n.
                density: config.grid.density.max(1.0 / n as f64),
                reward_range: (0.0, 1.0),
                gamma,
                max_attempts: 500,
            };
            let (mdp, assumption, _) = sample_until_assumption(&gen)?;
            let cert = &assumption.certificate;
            let e0 = random_initial_error(n, e0_seed, 1.0);
            let v0: Vec<f64> = cert.v_star.iter().zip(&e0).map(|(v, e)| v + e).collect();
            let vi_config = DampedViConfig::new(alpha, config.grid.horizon, v0);
            let trace = run_vi(&mdp, cert, &vi_config)?;
            let fault = config
                .inject_fault
                .then(|| FaultInjection::standard(config.grid.horizon));
            let diag = diagnose(&trace, TerminalChoice::Uniform, fault)?;
            let spectral = spectral_report(&trace, &diag)?;
            runs += 1;

            let label = format!("n={n} m={m} alpha={alpha} gamma={gamma} seed={model_seed}");
            check_sandwich(&trace, &mut g.sandwich, &label);
            check_theorem(&trace, &diag, &mut g.theorem, &label);
            check_corollary(&diag, &mut g.corollary, &label);
            check_consensus_dynamics(&trace, &diag, &mut g.consensus, &label);
            check_rayleigh(&diag, &spectral, &mut g.rayleigh, &label);
            check_lambda_bound(&spectral, &mut g.lambda_bound, &label);
            check_aps(&diag, &mut g.aps, &label);
            check_inf_norm(&trace, &mut g.inf_norm_decay, &label);
        }
    }

    Ok(SuiteReport {
        outcomes: vec![
            g.oracle,
            g.sandwich,
            g.theorem,
            g.corollary,
            g.consensus,
            g.lemmas,
            g.rayleigh,
            g.lambda_bound,
            g.aps,
            g.inf_norm_decay,
        ],
        runs,
        inject_fault: config.inject_fault,
    })
}

/// Criterion: iterative and enumerated optima agree on 50 seeded models.
fn oracle_equivalence(config: &SuiteConfig, out: &mut PropertyOutcome) -> Result<()> {
    let dims = [(2, 2), (3, 2), (4, 2), (4, 3), (5, 3)];
    let gammas = [0.5, 0.9, 0.99];
    for i in 0..50usize {
        let (n, m) = dims[i % dims.len()];
        let gamma = gammas[i % gammas.len()];
        let (model_seed, _) = derive_seeds(config.base_seed, 1_000 + i, 0);
        let gen = GeneratorConfig {
            n,
            m,
            seed: model_seed,
            density: 0.8,
            reward_range: (0.0, 1.0),
            gamma,
            max_attempts: 500,
        };
        let (mdp, assumption, _) = sample_until_assumption(&gen)?;

        let mut v = vec![0.0; n];
        let mut converged = false;
        for _ in 0..5_000_000 {
            let (next, _) = bellman_backup(&mdp, &v);
            let diff = next
                .iter()
                .zip(&v)
                .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
            v = next;
            if diff <= 1e-12 {
                converged = true;
                break;
            }
        }
        let worst = v
            .iter()
            .zip(&assumption.certificate.v_star)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        out.check(converged && worst <= 1e-8, || {
            format!("model {i} (n={n}, m={m}, gamma={gamma}): deviation {worst:.3e}")
        });
    }
    Ok(())
}

fn check_sandwich(trace: &crate::vi::ViTrace, out: &mut PropertyOutcome, label: &str) {
    let ga = trace.gamma_alpha;
    for t in 0..trace.horizon() {
        let step = &trace.steps[t];
        let next = trace.error_at(t + 1);
        let lower = trace.optimal_damped.apply(&step.error);
        let upper = step
            .greedy_damped
            .as_ref()
            .expect("suite traces retain matrices")
            .apply(&step.error);
        let mix = step.mix.as_ref().unwrap();
        let image = mix.apply(&step.error);
        let tol_exact = 1e-9 * (1.0 + step.error_inf);

        let mut ok = true;
        let mut detail = String::new();
        for i in 0..next.len() {
            let lo = ga * lower[i];
            let hi = ga * upper[i];
            if next[i] < lo.min(hi) - 1e-9 || next[i] > lo.max(hi) + 1e-9 {
                ok = false;
                detail = format!("bounds escape at t={t} i={i}");
                break;
            }
            if !(0.0..=1.0).contains(&step.blend[i]) {
                ok = false;
                detail = format!("blend out of range at t={t} i={i}");
                break;
            }
            if (next[i] - ga * image[i]).abs() > tol_exact {
                ok = false;
                detail = format!(
                    "mix reproduction off at t={t} i={i}: {:.3e}",
                    (next[i] - ga * image[i]).abs()
                );
                break;
            }
        }
        out.check(ok, || format!("{label}: {detail}"));
    }
}

fn check_theorem(
    trace: &crate::vi::ViTrace,
    diag: &crate::aps::ApsDiagnostics,
    out: &mut PropertyOutcome,
    label: &str,
) {
    for t in 0..trace.horizon() {
        let record = &diag.records[t];
        if record.degenerate {
            out.skip();
            continue;
        }
        let residual = record.theorem_residual.unwrap_or(f64::INFINITY);
        let tol = 1e-9 * (1.0 + record.delta_norm_sq);
        let gain = record.gain.unwrap_or(f64::NAN);
        let positivity = !trace.steps[t].mix_strongly_connected || gain > 0.0;
        out.check(residual <= tol && positivity, || {
            format!(
                "{label}: t={t} residual={residual:.3e} (tol {tol:.3e}), gain={gain:.3e}, \
                 connected={}",
                trace.steps[t].mix_strongly_connected
            )
        });
    }
}

fn check_corollary(diag: &crate::aps::ApsDiagnostics, out: &mut PropertyOutcome, label: &str) {
    match diag.corollary {
        None => out.skip(),
        Some(c) => out.check(c.holds, || {
            format!("{label}: final norm exceeds bound {:.3e}", c.bound_final)
        }),
    }
}

fn check_consensus_dynamics(
    trace: &crate::vi::ViTrace,
    diag: &crate::aps::ApsDiagnostics,
    out: &mut PropertyOutcome,
    label: &str,
) {
    let c0 = diag.records[0].consensus;
    let c_final = diag.records[trace.horizon()].consensus;
    let expect = trace.gamma_alpha.powi(trace.horizon() as i32) * c0;
    let ok_geometric = (c_final - expect).abs() <= 1e-9 * (1.0 + c0.abs());

    let e0_scale = 1.0 + trace.error_inf_at(0);
    let dynamics = &diag.consensus_dynamics;
    let ok_step = dynamics.max_consensus_residual <= 1e-9 * e0_scale
        && dynamics.max_delta_residual <= 1e-9 * e0_scale;
    out.check(ok_geometric && ok_step, || {
        format!(
            "{label}: geometric residual {:.3e}, step residuals {:.3e}/{:.3e}",
            (c_final - expect).abs(),
            dynamics.max_consensus_residual,
            dynamics.max_delta_residual
        )
    });
}

/// The closed-form decay case: alpha=0.5, gamma=0.9, consensus offset 3,
/// ten steps, `c_10 = 3 * 0.95^10` to within `1e-12`.
fn consensus_closed_form(config: &SuiteConfig, out: &mut PropertyOutcome) -> Result<()> {
    let (model_seed, _) = derive_seeds(config.base_seed, 2_000, 0);
    let gen = GeneratorConfig {
        n: 4,
        m: 2,
        seed: model_seed,
        density: 0.8,
        reward_range: (0.0, 1.0),
        gamma: 0.9,
        max_attempts: 500,
    };
    let (mdp, assumption, _) = sample_until_assumption(&gen)?;
    let cert = &assumption.certificate;
    let v0: Vec<f64> = cert.v_star.iter().map(|v| v + 3.0).collect();
    let trace = run_vi(&mdp, cert, &DampedViConfig::new(0.5, 10, v0))?;
    let diag = diagnose(&trace, TerminalChoice::Uniform, None)?;
    let c10 = diag.records[10].consensus;
    let expect = 3.0 * 0.95_f64.powi(10);
    out.check((c10 - expect).abs() <= 1e-12, || {
        format!("closed form: c_10 = {c10:.17} vs {expect:.17}")
    });
    Ok(())
}

/// 1000 random draws of each quadratic-form identity.
fn lemma_identities(config: &SuiteConfig, out: &mut PropertyOutcome) {
    let mut rng = SplitMix64::substream(config.base_seed, 0xCAFE);
    for draw in 0..1000 {
        let n = 2 + rng.next_index(7);
        let laplacian = random_laplacian(n, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
        let (lhs, rhs) = laplacian_quadratic(&laplacian, &x);
        out.check((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()), || {
            format!("laplacian identity draw {draw}: {lhs:.17} vs {rhs:.17}")
        });
    }
    for draw in 0..1000 {
        let n = 2 + rng.next_index(7);
        let p = random_weights(n, &mut rng);
        let x: Vec<f64> = (0..n).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
        let (lhs, rhs) = probability_quadratic(&p, &x);
        out.check((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()), || {
            format!("probability identity draw {draw}: {lhs:.17} vs {rhs:.17}")
        });
    }
}

fn check_rayleigh(
    diag: &crate::aps::ApsDiagnostics,
    spectral: &[crate::spectral::SpectralStepReport],
    out: &mut PropertyOutcome,
    label: &str,
) {
    for step in spectral {
        if step.skipped.is_some() {
            out.skip();
            continue;
        }
        let gain = diag.records[step.t].gain.unwrap_or(f64::NAN);
        let lambda2 = step.lambda2_generalized.unwrap_or(f64::NAN);
        let rayleigh = step.rayleigh_value.unwrap_or(f64::NAN);
        let agree = (gain - rayleigh).abs() <= 1e-10 * (1.0 + gain.abs());
        let bound = gain >= lambda2 - 1e-9;
        out.check(agree && bound, || {
            format!(
                "{label}: t={} gain={gain:.12e} rayleigh={rayleigh:.12e} lambda2={lambda2:.12e}",
                step.t
            )
        });
    }
}

fn check_lambda_bound(
    spectral: &[crate::spectral::SpectralStepReport],
    out: &mut PropertyOutcome,
    label: &str,
) {
    for step in spectral {
        if step.skipped.is_some() {
            out.skip();
            continue;
        }
        out.check(step.bound_lemma_holds == Some(true), || {
            format!(
                "{label}: t={} lambda2_tilde={:?} vs plain/p_max",
                step.t, step.lambda2_tilde
            )
        });
    }
}

/// 200 synthetic pairs, uniform-weight tightness, and the explicit
/// skewed-weight 2x2 case.
fn synthetic_lambda_bound(config: &SuiteConfig, out: &mut PropertyOutcome) -> Result<()> {
    let mut rng = SplitMix64::substream(config.base_seed, 0xBEEF);
    for draw in 0..200 {
        let n = 2 + rng.next_index(7);
        let laplacian = random_laplacian(n, &mut rng);
        let p = random_weights(n, &mut rng);
        let lemma = lemma_bound_check(&laplacian, &p)?;
        out.check(lemma.holds, || {
            format!(
                "synthetic draw {draw}: lambda2_tilde {:.12e} < scaled plain {:.12e}",
                lemma.lambda2_tilde, lemma.scaled_plain
            )
        });
    }
    // Uniform weights saturate the bound.
    for n in [3usize, 5, 8] {
        let laplacian = random_laplacian(n, &mut rng);
        let p = vec![1.0 / n as f64; n];
        let lemma = lemma_bound_check(&laplacian, &p)?;
        out.check(
            lemma.holds
                && (lemma.lambda2_tilde - lemma.scaled_plain).abs()
                    <= 1e-9 * (1.0 + lemma.lambda2_tilde),
            || format!("uniform n={n} not tight"),
        );
    }
    // Two-state worked case: lambda2(Lt) = 100/9 vs bound 20/9.
    let path =
        LaplacianMatrix::new(Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap())
            .unwrap();
    let eigen = sym_eigen(path.matrix())?;
    let lambda2_plain = lambda2_from_spectrum(&eigen.eigenvalues, path.matrix().max_abs());
    let lemma = lemma_bound_check(&path, &[0.9, 0.1])?;
    out.check(
        lemma.holds
            && (lemma.lambda2_tilde - 100.0 / 9.0).abs() <= 1e-9 * (1.0 + 100.0 / 9.0)
            && (lemma.scaled_plain - 20.0 / 9.0).abs() <= 1e-9 * (1.0 + 20.0 / 9.0)
            && (lambda2_plain - 2.0).abs() <= 1e-9,
        || {
            format!(
                "worked 2x2 case: tilde {:.12e}, scaled {:.12e}",
                lemma.lambda2_tilde, lemma.scaled_plain
            )
        },
    );
    Ok(())
}

fn check_aps(diag: &crate::aps::ApsDiagnostics, out: &mut PropertyOutcome, label: &str) {
    let v = &diag.aps_validation;
    out.check(
        v.max_sum_deviation <= 1e-12 && v.min_entry >= 0.0 && v.max_identity_residual <= 1e-11,
        || {
            format!(
                "{label}: sum dev {:.3e}, min entry {:.3e}, identity residual {:.3e}",
                v.max_sum_deviation, v.min_entry, v.max_identity_residual
            )
        },
    );
}

fn check_inf_norm(trace: &crate::vi::ViTrace, out: &mut PropertyOutcome, label: &str) {
    let bound = trace.gamma_alpha.powi(trace.horizon() as i32) * trace.error_inf_at(0) + 1e-8;
    out.check(trace.final_error_inf <= bound, || {
        format!(
            "{label}: final {:.12e} vs bound {bound:.12e}",
            trace.final_error_inf
        )
    });
}

/// Consistency gate used by the command-line wrapper: every run report's
/// summary must be recomputable from its own step table.
pub fn report_self_consistency(config: &ExperimentConfig) -> Result<bool> {
    let artifacts = crate::report::run_experiment(config, None)?;
    let report = &artifacts.report;
    let recomputed = recompute_summary(
        &report.steps,
        report.gamma_alpha,
        report.summary.corollary_effective_horizon,
    );
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-12 * (1.0 + x.abs()),
        _ => false,
    };
    Ok(close(recomputed.min_r_t, report.summary.min_r_t)
        && close(recomputed.lambda, report.summary.lambda)
        && recomputed.corollary_holds == report.summary.corollary_holds
        && close(
            recomputed.max_theorem_residual,
            report.summary.max_theorem_residual,
        )
        && recomputed.steps_strongly_connected == report.summary.steps_strongly_connected
        && recomputed.degenerate_rows == report.summary.degenerate_rows)
}
