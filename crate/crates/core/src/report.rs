//! Experiment driver and machine-readable artifacts.
//!
//! A run produces two files: `trace.csv` (one row per time index, one column
//! per diagnostic) and `report.json` (config echo, per-step table, summary).
//! Reals are written with 17 significant digits so every double round-trips
//! exactly; booleans are 0/1; cells that do not apply (final row, degenerate
//! or flagged steps) are empty. The summary is recomputable from the table,
//! and [`recompute_summary`] does exactly that for self-consistency checks.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aps::{diagnose, ApsDiagnostics, ApsValidation, FaultInjection, TerminalChoice};
use crate::generators::{random_initial_error, sample_until_assumption, GeneratorConfig};
use crate::mdp::{check_assumption, AssumptionReport, Mdp};
use crate::spectral::{spectral_report, SpectralStepReport};
use crate::vi::{run_vi, DampedViConfig, MatrixRetention, ViTrace};
use crate::{Error, Result};

/// CSV header, fixed order.
pub const CSV_COLUMNS: [&str; 17] = [
    "t",
    "e_inf_norm",
    "c_t",
    "delta_norm_sq_weighted",
    "r_t",
    "contraction_factor",
    "theorem_residual",
    "corollary_bound",
    "policy_hash",
    "m_strongly_connected",
    "lambda2_generalized",
    "lambda2_plain",
    "lambda2_tilde",
    "p_max",
    "rayleigh_bound_holds",
    "bound_lemma_holds",
    "degenerate",
];

/// 17 significant digits; parses back to the identical double.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Where the model comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    File {
        path: PathBuf,
    },
    Generator(GeneratorConfig),
    /// Handed over directly by the caller (library and FFI use).
    Provided,
}

/// How the initial values are built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum E0Mode {
    /// `V_0 = V* + e_0` with a seeded error of the given sup norm.
    Random { seed: u64, scale: f64 },
    /// `V_0 = V* + offset * 1` (pure consensus error).
    Consensus { offset: f64 },
    /// `V_0` given explicitly.
    Explicit { values: Vec<f64> },
}

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp_source: MdpSource,
    pub alpha: f64,
    pub horizon: usize,
    pub e0: E0Mode,
    pub aps_terminal: TerminalChoice,
    pub emit_matrices: bool,
}

/// One row of the trace table. `None` serializes as an empty CSV cell and a
/// JSON null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: usize,
    pub e_inf_norm: f64,
    pub c_t: f64,
    pub delta_norm_sq_weighted: f64,
    pub r_t: Option<f64>,
    pub contraction_factor: Option<f64>,
    pub theorem_residual: Option<f64>,
    pub corollary_bound: Option<f64>,
    pub policy_hash: Option<String>,
    pub m_strongly_connected: Option<bool>,
    pub lambda2_generalized: Option<f64>,
    pub lambda2_plain: Option<f64>,
    pub lambda2_tilde: Option<f64>,
    pub p_max: Option<f64>,
    pub rayleigh_bound_holds: Option<bool>,
    pub bound_lemma_holds: Option<bool>,
    pub degenerate: bool,
}

/// Resolved analysis conventions, echoed into every report so downstream
/// consumers know exactly which variant of each quantity was computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conventions {
    /// The gain's pairwise sum is weighted by the next step's probability
    /// vector (required for the decay identity to close).
    pub gain_weighting: String,
    /// Mix diagonals are required to be at least `(1-alpha)/gamma_alpha`,
    /// never exactly `1-alpha`.
    pub diagonal_floor: String,
    /// Terminal distribution used for the backward recursion.
    pub aps_terminal: TerminalChoice,
}

impl Conventions {
    fn current(aps_terminal: TerminalChoice) -> Conventions {
        Conventions {
            gain_weighting: "next_step_weights".into(),
            diagonal_floor: "at_least_(1-alpha)/gamma_alpha".into(),
            aps_terminal,
        }
    }
}

/// Horizon-level aggregates, all recomputable from the step table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub min_r_t: Option<f64>,
    /// `lambda = min R_t` over the corollary's verified steps.
    pub lambda: Option<f64>,
    pub corollary_holds: Option<bool>,
    /// Index the horizon bound was compared at (the full horizon unless the
    /// remainder decayed below the resolution floor earlier).
    pub corollary_effective_horizon: Option<usize>,
    pub max_theorem_residual: Option<f64>,
    pub steps_strongly_connected: usize,
    pub degenerate_rows: usize,
    pub conventions: Conventions,
}

/// Structural flags for the analyzed model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssumptionFlags {
    pub unique_optimal: bool,
    pub irreducible: bool,
    pub aperiodic: bool,
}

/// The `report.json` payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub gamma_alpha: f64,
    pub assumption: AssumptionFlags,
    pub aps_validation: ApsValidation,
    pub fault: Option<FaultInjection>,
    pub steps: Vec<StepRow>,
    pub summary: RunSummary,
}

/// Everything a run produces, in memory.
pub struct RunArtifacts {
    pub mdp: Mdp,
    pub assumption: AssumptionReport,
    pub trace: ViTrace,
    pub diagnostics: ApsDiagnostics,
    pub spectral: Vec<SpectralStepReport>,
    pub report: RunReport,
}

fn build_rows(
    trace: &ViTrace,
    diag: &ApsDiagnostics,
    spectral: &[SpectralStepReport],
) -> Vec<StepRow> {
    let horizon = trace.horizon();
    let ga = trace.gamma_alpha;
    let lambda = diag.lambda();
    let first_norm = diag.records[0].delta_norm_sq;

    (0..=horizon)
        .map(|t| {
            let record = &diag.records[t];
            let step = (t < horizon).then(|| &trace.steps[t]);
            let eig = (t < horizon).then(|| &spectral[t]);
            StepRow {
                t,
                e_inf_norm: trace.error_inf_at(t),
                c_t: record.consensus,
                delta_norm_sq_weighted: record.delta_norm_sq,
                r_t: record.gain,
                contraction_factor: record.gain.map(|g| ga * ga * (1.0 - g)),
                theorem_residual: record.theorem_residual,
                corollary_bound: lambda.map(|l| (ga * ga * (1.0 - l)).powi(t as i32) * first_norm),
                policy_hash: step.map(|s| format!("{:016x}", s.greedy.fnv1a_hash())),
                m_strongly_connected: step.map(|s| s.mix_strongly_connected),
                lambda2_generalized: eig.and_then(|s| s.lambda2_generalized),
                lambda2_plain: eig.and_then(|s| s.lambda2_plain),
                lambda2_tilde: eig.and_then(|s| s.lambda2_tilde),
                p_max: eig.map(|s| s.p_max),
                rayleigh_bound_holds: eig.and_then(|s| s.rayleigh_bound_holds),
                bound_lemma_holds: eig.and_then(|s| s.bound_lemma_holds),
                degenerate: record.degenerate,
            }
        })
        .collect()
}

fn build_summary(
    rows: &[StepRow],
    diag: &ApsDiagnostics,
    trace: &ViTrace,
    aps_terminal: TerminalChoice,
) -> RunSummary {
    RunSummary {
        min_r_t: diag.min_gain(),
        lambda: diag.lambda(),
        corollary_holds: diag.corollary.map(|c| c.holds),
        corollary_effective_horizon: diag.corollary.map(|c| c.effective_horizon),
        max_theorem_residual: diag.max_theorem_residual,
        steps_strongly_connected: trace
            .steps
            .iter()
            .filter(|s| s.mix_strongly_connected)
            .count(),
        degenerate_rows: rows.iter().filter(|r| r.degenerate).count(),
        conventions: Conventions::current(aps_terminal),
    }
}

/// Recomputes every summary aggregate from a parsed step table; used to check
/// `report.json` against `trace.csv`. The corollary's comparison index is part
/// of the summary being checked, so it is taken as an input here.
pub fn recompute_summary(
    rows: &[StepRow],
    gamma_alpha: f64,
    corollary_effective_horizon: Option<usize>,
) -> RunSummary {
    let gains: Vec<f64> = rows.iter().filter_map(|r| r.r_t).collect();
    let min_r_t = gains.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_r_t = min_r_t.is_finite().then_some(min_r_t);
    let lambda = corollary_effective_horizon.and_then(|h| {
        let min = rows[..h]
            .iter()
            .filter_map(|r| r.r_t)
            .fold(f64::INFINITY, f64::min);
        min.is_finite().then_some(min)
    });
    let corollary_holds = match (corollary_effective_horizon, lambda) {
        (Some(h), Some(l)) => {
            let bound = (gamma_alpha * gamma_alpha * (1.0 - l)).powi(h as i32)
                * rows[0].delta_norm_sq_weighted;
            Some(rows[h].delta_norm_sq_weighted <= bound * (1.0 + 1e-8))
        }
        _ => None,
    };
    let max_theorem_residual = rows
        .iter()
        .filter_map(|r| r.theorem_residual)
        .fold(None, |acc: Option<f64>, r| {
            Some(acc.map_or(r, |a| a.max(r)))
        });
    RunSummary {
        min_r_t,
        lambda,
        corollary_holds,
        corollary_effective_horizon,
        max_theorem_residual,
        steps_strongly_connected: rows
            .iter()
            .filter(|r| r.m_strongly_connected == Some(true))
            .count(),
        degenerate_rows: rows.iter().filter(|r| r.degenerate).count(),
        conventions: Conventions::current(TerminalChoice::Uniform),
    }
}

/// Runs the full pipeline: load or sample the model, trace the iteration,
/// attach the probability-sequence diagnostics and the spectral bounds, and
/// assemble the report.
///
/// A model loaded from a file that fails the structural assumption is still
/// analyzed; the flags in the report record the failure. The optional fault
/// is the documented negative-control hook.
pub fn run_experiment(
    config: &ExperimentConfig,
    fault: Option<FaultInjection>,
) -> Result<RunArtifacts> {
    let (mdp, assumption) = match &config.mdp_source {
        MdpSource::File { path } => {
            let mdp = Mdp::from_json_file(path)?;
            let assumption = check_assumption(&mdp)?;
            (mdp, assumption)
        }
        MdpSource::Generator(gen) => {
            let (mdp, assumption, _) = sample_until_assumption(gen)?;
            (mdp, assumption)
        }
        MdpSource::Provided => {
            return Err(Error::InvalidConfig(
                "a provided-model run needs run_pipeline, not run_experiment".into(),
            ))
        }
    };
    run_pipeline(mdp, assumption, config, fault)
}

/// Pipeline core for an already-resolved model: traced run, diagnostics,
/// spectral bounds, and report assembly.
pub fn run_pipeline(
    mdp: Mdp,
    assumption: AssumptionReport,
    config: &ExperimentConfig,
    fault: Option<FaultInjection>,
) -> Result<RunArtifacts> {
    let v0 = match &config.e0 {
        E0Mode::Random { seed, scale } => {
            let e0 = random_initial_error(mdp.n, *seed, *scale);
            assumption
                .certificate
                .v_star
                .iter()
                .zip(&e0)
                .map(|(v, e)| v + e)
                .collect()
        }
        E0Mode::Consensus { offset } => assumption
            .certificate
            .v_star
            .iter()
            .map(|v| v + offset)
            .collect(),
        E0Mode::Explicit { values } => values.clone(),
    };

    let vi_config = DampedViConfig {
        alpha: config.alpha,
        horizon: config.horizon,
        v0,
        retention: MatrixRetention::Auto,
    };
    let trace = run_vi(&mdp, &assumption.certificate, &vi_config)?;
    let diagnostics = diagnose(&trace, config.aps_terminal, fault)?;
    let spectral = spectral_report(&trace, &diagnostics)?;

    let rows = build_rows(&trace, &diagnostics, &spectral);
    let summary = build_summary(&rows, &diagnostics, &trace, config.aps_terminal);
    let report = RunReport {
        config: config.clone(),
        n: mdp.n,
        m: mdp.m,
        gamma: mdp.gamma,
        gamma_alpha: trace.gamma_alpha,
        assumption: AssumptionFlags {
            unique_optimal: assumption.unique_optimal,
            irreducible: assumption.irreducible,
            aperiodic: assumption.aperiodic,
        },
        aps_validation: diagnostics.aps_validation,
        fault,
        steps: rows,
        summary,
    };

    Ok(RunArtifacts {
        mdp,
        assumption,
        trace,
        diagnostics,
        spectral,
        report,
    })
}

fn cell_f64(value: Option<f64>) -> String {
    value.map(format_f64).unwrap_or_default()
}

fn cell_bool(value: Option<bool>) -> String {
    value
        .map(|b| if b { "1" } else { "0" }.to_string())
        .unwrap_or_default()
}

/// Writes the step table as RFC-4180-style CSV (comma separated, header row,
/// `\n` line endings, no quoting needed by construction).
pub fn write_trace_csv<W: Write>(mut out: W, rows: &[StepRow]) -> Result<()> {
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for row in rows {
        let cells = [
            row.t.to_string(),
            format_f64(row.e_inf_norm),
            format_f64(row.c_t),
            format_f64(row.delta_norm_sq_weighted),
            cell_f64(row.r_t),
            cell_f64(row.contraction_factor),
            cell_f64(row.theorem_residual),
            cell_f64(row.corollary_bound),
            row.policy_hash.clone().unwrap_or_default(),
            cell_bool(row.m_strongly_connected),
            cell_f64(row.lambda2_generalized),
            cell_f64(row.lambda2_plain),
            cell_f64(row.lambda2_tilde),
            cell_f64(row.p_max),
            cell_bool(row.rayleigh_bound_holds),
            cell_bool(row.bound_lemma_holds),
            (if row.degenerate { "1" } else { "0" }).to_string(),
        ];
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn parse_cell_f64(cell: &str, line: usize) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(format!("csv line {line}: bad float {cell:?}: {e}")))
}

fn parse_cell_bool(cell: &str, line: usize) -> Result<Option<bool>> {
    match cell {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(Error::InvalidConfig(format!(
            "csv line {line}: bad flag {other:?}"
        ))),
    }
}

/// Parses a trace CSV written by [`write_trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<StepRow>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig("empty csv".into()))?;
    if header != CSV_COLUMNS.join(",") {
        return Err(Error::InvalidConfig("unexpected csv header".into()));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != CSV_COLUMNS.len() {
            return Err(Error::InvalidConfig(format!(
                "csv line {idx}: {} cells, expected {}",
                cells.len(),
                CSV_COLUMNS.len()
            )));
        }
        let required = |cell: &str| -> Result<f64> {
            parse_cell_f64(cell, idx)?
                .ok_or_else(|| Error::InvalidConfig(format!("csv line {idx}: missing value")))
        };
        rows.push(StepRow {
            t: cells[0]
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("csv line {idx}: bad t: {e}")))?,
            e_inf_norm: required(cells[1])?,
            c_t: required(cells[2])?,
            delta_norm_sq_weighted: required(cells[3])?,
            r_t: parse_cell_f64(cells[4], idx)?,
            contraction_factor: parse_cell_f64(cells[5], idx)?,
            theorem_residual: parse_cell_f64(cells[6], idx)?,
            corollary_bound: parse_cell_f64(cells[7], idx)?,
            policy_hash: (!cells[8].is_empty()).then(|| cells[8].to_string()),
            m_strongly_connected: parse_cell_bool(cells[9], idx)?,
            lambda2_generalized: parse_cell_f64(cells[10], idx)?,
            lambda2_plain: parse_cell_f64(cells[11], idx)?,
            lambda2_tilde: parse_cell_f64(cells[12], idx)?,
            p_max: parse_cell_f64(cells[13], idx)?,
            rayleigh_bound_holds: parse_cell_bool(cells[14], idx)?,
            bound_lemma_holds: parse_cell_bool(cells[15], idx)?,
            degenerate: parse_cell_bool(cells[16], idx)?.ok_or_else(|| {
                Error::InvalidConfig(format!("csv line {idx}: missing degenerate flag"))
            })?,
        });
    }
    Ok(rows)
}

/// Per-step matrix dump for `--emit-matrices`.
#[derive(Debug, Serialize)]
struct MatrixDumpStep<'a> {
    t: usize,
    greedy_matrix: Vec<&'a [f64]>,
    greedy_damped: Vec<&'a [f64]>,
    blend: &'a [f64],
    mix: Vec<&'a [f64]>,
    weights: &'a [f64],
}

#[derive(Debug, Serialize)]
struct MatrixDump<'a> {
    optimal_matrix: Vec<&'a [f64]>,
    optimal_damped: Vec<&'a [f64]>,
    terminal_weights: &'a [f64],
    steps: Vec<MatrixDumpStep<'a>>,
}

fn matrix_rows(m: &crate::numerics::StochasticMatrix) -> Vec<&[f64]> {
    (0..m.n()).map(|i| m.row(i)).collect()
}

/// Writes `trace.csv`, `report.json`, and optionally `matrices.json` into a
/// directory. Returns the paths written.
pub fn write_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let csv_path = dir.join("trace.csv");
    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &artifacts.report.steps)?;
    std::fs::write(&csv_path, csv)?;
    written.push(csv_path);

    let report_path = dir.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&artifacts.report)?,
    )?;
    written.push(report_path);

    if artifacts.report.config.emit_matrices {
        let trace = &artifacts.trace;
        let diag = &artifacts.diagnostics;
        let steps: Vec<MatrixDumpStep> = trace
            .steps
            .iter()
            .enumerate()
            .map(|(t, step)| MatrixDumpStep {
                t,
                greedy_matrix: step
                    .greedy_matrix
                    .as_ref()
                    .map(matrix_rows)
                    .unwrap_or_default(),
                greedy_damped: step
                    .greedy_damped
                    .as_ref()
                    .map(matrix_rows)
                    .unwrap_or_default(),
                blend: &step.blend,
                mix: matrix_rows(&diag.mixes[t]),
                weights: &diag.aps.weights[t],
            })
            .collect();
        let dump = MatrixDump {
            optimal_matrix: matrix_rows(&trace.optimal_matrix),
            optimal_damped: matrix_rows(&trace.optimal_damped),
            terminal_weights: diag.aps.weights.last().unwrap(),
            steps,
        };
        let matrices_path = dir.join("matrices.json");
        std::fs::write(&matrices_path, serde_json::to_string_pretty(&dump)?)?;
        written.push(matrices_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config(seed: u64, alpha: f64, horizon: usize) -> ExperimentConfig {
        ExperimentConfig {
            mdp_source: MdpSource::Generator(GeneratorConfig {
                n: 4,
                m: 2,
                seed,
                density: 0.7,
                reward_range: (0.0, 1.0),
                gamma: 0.9,
                max_attempts: 100,
            }),
            alpha,
            horizon,
            e0: E0Mode::Random {
                seed: 3,
                scale: 1.0,
            },
            aps_terminal: TerminalChoice::Uniform,
            emit_matrices: false,
        }
    }

    #[test]
    fn float_format_round_trips() {
        for x in [
            0.0,
            1.0,
            -1.0,
            0.1,
            3.0_f64.sqrt(),
            1e-300,
            -2.5e17,
            f64::MIN_POSITIVE,
        ] {
            let s = format_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn csv_round_trips_rows() {
        let artifacts = run_experiment(&sample_config(5, 0.5, 15), None).unwrap();
        let mut buffer = Vec::new();
        write_trace_csv(&mut buffer, &artifacts.report.steps).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let rows = parse_trace_csv(&text).unwrap();
        assert_eq!(rows, artifacts.report.steps);
    }

    #[test]
    fn summary_recomputes_from_rows() {
        let artifacts = run_experiment(&sample_config(7, 0.6, 20), None).unwrap();
        let report = &artifacts.report;
        let recomputed = recompute_summary(
            &report.steps,
            report.gamma_alpha,
            report.summary.corollary_effective_horizon,
        );
        assert_eq!(recomputed.min_r_t, report.summary.min_r_t);
        assert_eq!(recomputed.lambda, report.summary.lambda);
        assert_eq!(recomputed.corollary_holds, report.summary.corollary_holds);
        assert_eq!(
            recomputed.max_theorem_residual,
            report.summary.max_theorem_residual
        );
        assert_eq!(
            recomputed.steps_strongly_connected,
            report.summary.steps_strongly_connected
        );
        assert_eq!(recomputed.degenerate_rows, report.summary.degenerate_rows);
    }

    #[test]
    fn row_count_and_final_row_shape() {
        let artifacts = run_experiment(&sample_config(9, 0.5, 12), None).unwrap();
        let rows = &artifacts.report.steps;
        assert_eq!(rows.len(), 13);
        let last = rows.last().unwrap();
        assert!(last.r_t.is_none());
        assert!(last.policy_hash.is_none());
        assert!(last.m_strongly_connected.is_none());
        assert!(last.lambda2_generalized.is_none());
        for row in &rows[..12] {
            assert!(row.policy_hash.is_some());
        }
    }

    #[test]
    fn consensus_run_marks_all_rows_degenerate() {
        let mut config = sample_config(11, 0.5, 8);
        config.e0 = E0Mode::Consensus { offset: 3.0 };
        let artifacts = run_experiment(&config, None).unwrap();
        let report = &artifacts.report;
        assert!(report.steps.iter().all(|r| r.degenerate));
        assert!(report.summary.lambda.is_none());
        assert!(report.summary.corollary_holds.is_none());
        // c decays geometrically from 3.
        let ga = report.gamma_alpha;
        for row in &report.steps {
            let expect = 3.0 * ga.powi(row.t as i32);
            assert!((row.c_t - expect).abs() <= 1e-9 * (1.0 + 3.0));
        }
    }

    #[test]
    fn fault_injection_breaks_the_decay_identity() {
        let config = sample_config(13, 0.5, 10);
        let clean = run_experiment(&config, None).unwrap();
        let clean_res = clean.report.summary.max_theorem_residual.unwrap();
        assert!(clean_res <= 1e-9);

        let fault = FaultInjection::standard(10);
        let faulty = run_experiment(&config, Some(fault)).unwrap();
        let faulty_res = faulty.report.summary.max_theorem_residual.unwrap();
        // The corrupted step must trip the 1e-9 * (1 + ||delta||^2) gate by a
        // clear margin.
        let worst_norm = faulty
            .report
            .steps
            .iter()
            .map(|r| r.delta_norm_sq_weighted)
            .fold(0.0_f64, f64::max);
        assert!(
            faulty_res > 10.0 * 1e-9 * (1.0 + worst_norm),
            "fault should trip the decay gate, got {faulty_res}"
        );
        assert!(faulty_res > 100.0 * clean_res.max(1e-12));
        assert_eq!(faulty.report.fault, Some(fault));
    }

    #[test]
    fn artifacts_written_to_disk() {
        let dir =
            std::env::temp_dir().join(format!("vi_spectral_report_test_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let mut config = sample_config(15, 0.5, 6);
        config.emit_matrices = true;
        let artifacts = run_experiment(&config, None).unwrap();
        let written = write_artifacts(&dir, &artifacts).unwrap();
        assert_eq!(written.len(), 3);
        for path in &written {
            assert!(path.exists(), "{path:?} missing");
        }
        let text = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
        let rows = parse_trace_csv(&text).unwrap();
        assert_eq!(rows.len(), 7);
        let report: RunReport =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap())
                .unwrap();
        assert_eq!(report.steps, artifacts.report.steps);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
