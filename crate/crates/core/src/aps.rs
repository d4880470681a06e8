//! Absolute probability sequences and the weighted-norm decay analysis.
//!
//! For a sequence of row-stochastic matrices `{M_t}`, an absolute probability
//! sequence is a sequence of probability vectors `{p_t}` with
//! `p_{t+1}^T M_t = p_t^T`. For a finite run it can be built constructively:
//! pick any probability vector as `p_T` and recurse backward; every earlier
//! vector is automatically a probability vector (nonnegativity is preserved by
//! nonnegative matrices, and the sum is preserved because rows sum to one).
//!
//! The sequence induces weighted inner products `<x,y>_{p_t} = sum p_t[i] x[i] y[i]`
//! under which the traced error splits as `e_t = c_t 1 + delta_t` with
//! `p_t^T delta_t = 0`. The components obey exact recursions
//! (`c_{t+1} = gamma_alpha c_t`, `delta_{t+1} = gamma_alpha M_t delta_t`), and
//! the weighted norm of the remainder decays by an exactly computable factor:
//!
//! ```text
//! ||delta_{t+1}||^2_{p_{t+1}} = gamma_alpha^2 (1 - R_t) ||delta_t||^2_{p_t}
//! R_t = [ 1/2 sum_{i,k,l} p_{t+1}[i] M_t[i,k] M_t[i,l] (delta_t[k]-delta_t[l])^2 ]
//!       / ||delta_t||^2_{p_t}
//! ```
//!
//! Note the `p_{t+1}[i]` weight inside the gain: it is required for the decay
//! identity to balance (drop it and the equation fails whenever `p_{t+1}` is
//! not uniform), and it matches the Laplacian formulation in [`crate::spectral`].
//! This module verifies the identity per step, the geometric law for `c_t`, and
//! the horizon-level decay bound with `lambda = min_t R_t`.

use serde::{Deserialize, Serialize};

use crate::mdp::inf_norm;
use crate::numerics::{solve_linear, Matrix, StochasticMatrix};
use crate::vi::ViTrace;
use crate::{Error, Result};

/// Remainders with sup norm at or below `1e-13 * (1 + ||e_0||_inf)` are treated
/// as consensus reached; gain and residual checks stop there.
pub const ZERO_DELTA_REL_TOL: f64 = 1e-13;

/// The horizon decay bound is compared at the last step whose remainder still
/// exceeds this fraction of the value scale. Error vectors are differences of
/// values of that scale, so below the floor their relative accuracy is too
/// poor for a `1e-8`-slack inequality to mean anything; past it the remainder
/// is treated as decayed.
pub const RESOLVE_FLOOR_REL: f64 = 1e-5;

/// Terminal vectors must be probability vectors within this tolerance.
pub const TERMINAL_SUM_TOL: f64 = 1e-12;

/// Choice of the terminal distribution seeding the backward recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalChoice {
    #[default]
    Uniform,
    /// Stationary distribution of the final mix matrix.
    StationaryOfLastM,
}

/// Backward-computed probability vectors `p_0 .. p_T`.
#[derive(Debug, Clone)]
pub struct ApsSequence {
    pub weights: Vec<Vec<f64>>,
    pub terminal_choice: TerminalChoice,
}

/// How close the computed sequence is to a true absolute probability sequence.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ApsValidation {
    /// Largest deviation of any `sum(p_t)` from one.
    pub max_sum_deviation: f64,
    /// Most negative entry seen (zero when all entries are nonnegative).
    pub min_entry: f64,
    /// Largest componentwise residual of `p_{t+1}^T M_t = p_t^T`, recomputed
    /// in reverse summation order so it is an independent check rather than a
    /// bitwise replay of the construction.
    pub max_identity_residual: f64,
}

impl ApsSequence {
    pub fn horizon(&self) -> usize {
        self.weights.len() - 1
    }

    /// Validation report against the given mix sequence.
    pub fn validation(&self, mixes: &[StochasticMatrix]) -> ApsValidation {
        assert_eq!(mixes.len() + 1, self.weights.len());
        let mut max_sum_deviation = 0.0_f64;
        let mut min_entry = 0.0_f64;
        for p in &self.weights {
            let sum: f64 = p.iter().sum();
            max_sum_deviation = max_sum_deviation.max((sum - 1.0).abs());
            min_entry = min_entry.min(p.iter().cloned().fold(f64::INFINITY, f64::min));
        }
        let mut max_identity_residual = 0.0_f64;
        for (t, mix) in mixes.iter().enumerate() {
            let n = mix.n();
            for j in 0..n {
                // Reverse-order column dot product.
                let mut acc = 0.0;
                for i in (0..n).rev() {
                    acc += self.weights[t + 1][i] * mix.get(i, j);
                }
                max_identity_residual = max_identity_residual.max((acc - self.weights[t][j]).abs());
            }
        }
        ApsValidation {
            max_sum_deviation,
            min_entry,
            max_identity_residual,
        }
    }
}

fn check_terminal(terminal: &[f64], n: usize) -> Result<()> {
    if terminal.len() != n {
        return Err(Error::InvalidTerminal {
            reason: format!("length {} does not match state count {n}", terminal.len()),
        });
    }
    let mut sum = 0.0;
    for (i, &p) in terminal.iter().enumerate() {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidTerminal {
                reason: format!("entry {i} = {p} is negative or non-finite"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > TERMINAL_SUM_TOL {
        return Err(Error::InvalidTerminal {
            reason: format!("entries sum to {sum:.17}"),
        });
    }
    Ok(())
}

/// Materializes the requested terminal distribution for a mix sequence.
///
/// The stationary option solves `p^T M = p^T, sum(p) = 1` for the final mix by
/// a direct linear solve; it requires that mix to have a one-dimensional fixed
/// space (guaranteed when its graph is strongly connected).
pub fn terminal_distribution(
    choice: TerminalChoice,
    mixes: &[StochasticMatrix],
) -> Result<Vec<f64>> {
    assert!(!mixes.is_empty(), "need at least one step");
    let n = mixes[0].n();
    match choice {
        TerminalChoice::Uniform => Ok(vec![1.0 / n as f64; n]),
        TerminalChoice::StationaryOfLastM => {
            let m = mixes.last().unwrap();
            // (M^T - I) p = 0 with the last equation replaced by sum(p) = 1.
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let value = if i == n - 1 {
                        1.0
                    } else {
                        m.get(j, i) - if i == j { 1.0 } else { 0.0 }
                    };
                    a.set(i, j, value);
                }
            }
            let mut b = vec![0.0; n];
            b[n - 1] = 1.0;
            let mut p = solve_linear(&a, &b).map_err(|e| Error::InvalidTerminal {
                reason: format!("stationary solve failed: {e}"),
            })?;
            for x in p.iter_mut() {
                if *x < 0.0 {
                    if *x < -1e-10 {
                        return Err(Error::InvalidTerminal {
                            reason: format!("stationary solve produced {x}"),
                        });
                    }
                    *x = 0.0;
                }
            }
            let sum: f64 = p.iter().sum();
            for x in p.iter_mut() {
                *x /= sum;
            }
            Ok(p)
        }
    }
}

/// Backward recursion `p_t^T = p_{t+1}^T M_t` from a validated terminal vector.
/// Returns `T + 1` vectors for `T` matrices.
pub fn backward_aps(
    mixes: &[StochasticMatrix],
    terminal: &[f64],
    choice: TerminalChoice,
) -> Result<ApsSequence> {
    assert!(!mixes.is_empty(), "need at least one step");
    let n = mixes[0].n();
    check_terminal(terminal, n)?;
    let horizon = mixes.len();
    let mut weights = vec![Vec::new(); horizon + 1];
    weights[horizon] = terminal.to_vec();
    for t in (0..horizon).rev() {
        weights[t] = mixes[t].left_apply(&weights[t + 1]);
    }
    Ok(ApsSequence {
        weights,
        terminal_choice: choice,
    })
}

/// `<x, y>_p = sum_i p[i] x[i] y[i]`.
pub fn weighted_dot(x: &[f64], y: &[f64], p: &[f64]) -> f64 {
    assert!(x.len() == y.len() && x.len() == p.len(), "length mismatch");
    x.iter().zip(y).zip(p).map(|((a, b), w)| w * a * b).sum()
}

/// `||x||^2_p`.
pub fn weighted_norm_sq(x: &[f64], p: &[f64]) -> f64 {
    weighted_dot(x, x, p)
}

/// Splits `e` into its weighted average plus a weighted-mean-zero remainder:
/// `c = <e,1>_p / <1,1>_p`, `delta = e - c 1`.
///
/// The projection is applied twice. A single pass leaves an absolute residual
/// of order `eps * |c|` in `p^T delta`, which once the remainder has decayed
/// far below `|c|` becomes a large *relative* defect and visibly tilts the
/// Rayleigh quotients downstream; the second pass removes the defect relative
/// to the remainder's own scale.
pub fn decompose(e: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    let ones = vec![1.0; e.len()];
    let weight_sum = weighted_dot(&ones, &ones, p);
    let mut c = weighted_dot(e, &ones, p) / weight_sum;
    let mut delta: Vec<f64> = e.iter().map(|x| x - c).collect();
    let refine = weighted_dot(&delta, &ones, p) / weight_sum;
    if refine != 0.0 {
        c += refine;
        for d in delta.iter_mut() {
            *d -= refine;
        }
    }
    (c, delta)
}

/// Per-step contraction gain
/// `R = [1/2 sum_{i,k,l} p_next[i] M[i,k] M[i,l] (delta[k]-delta[l])^2] / ||delta||^2_p`.
///
/// Fails with [`Error::ZeroDelta`] when the weighted norm of `delta` vanishes
/// (consensus, or all remaining mass on zero-weight states).
pub fn contraction_gain(
    mix: &StochasticMatrix,
    p_next: &[f64],
    p: &[f64],
    delta: &[f64],
) -> Result<f64> {
    let n = delta.len();
    let denom = weighted_norm_sq(delta, p);
    if !(denom > 0.0) {
        return Err(Error::ZeroDelta);
    }
    let mut num = 0.0;
    for i in 0..n {
        let weight = p_next[i];
        if weight == 0.0 {
            continue;
        }
        let row = mix.row(i);
        let mut row_sum = 0.0;
        for k in 0..n {
            if row[k] == 0.0 {
                continue;
            }
            for l in (k + 1)..n {
                if row[l] == 0.0 {
                    continue;
                }
                let diff = delta[k] - delta[l];
                row_sum += row[k] * row[l] * diff * diff;
            }
        }
        num += weight * row_sum;
    }
    Ok(num / denom)
}

/// One step's decomposition and decay data.
#[derive(Debug, Clone)]
pub struct DecompositionRecord {
    pub t: usize,
    /// Weighted average `c_t = p_t^T e_t`.
    pub consensus: f64,
    pub delta: Vec<f64>,
    /// `||delta_t||^2_{p_t}`.
    pub delta_norm_sq: f64,
    /// Gain `R_t`; absent at the final time and on degenerate steps.
    pub gain: Option<f64>,
    /// `| ||delta_{t+1}||^2 - gamma_alpha^2 (1 - R_t) ||delta_t||^2 |`.
    pub theorem_residual: Option<f64>,
    /// Consensus reached (remainder below the zero threshold).
    pub degenerate: bool,
}

/// Decay-identity residual for one step pair. Fails with [`Error::ZeroDelta`]
/// when the earlier step is degenerate (the identity's excluded case).
pub fn theorem_step_residual(
    prev: &DecompositionRecord,
    next: &DecompositionRecord,
    gamma_alpha: f64,
) -> Result<f64> {
    let gain = match (prev.degenerate, prev.gain) {
        (false, Some(g)) => g,
        _ => return Err(Error::ZeroDelta),
    };
    let predicted = gamma_alpha * gamma_alpha * (1.0 - gain) * prev.delta_norm_sq;
    Ok((next.delta_norm_sq - predicted).abs())
}

/// Horizon-level decay check with the worst per-step gain.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorollaryCheck {
    /// `lambda = min R_t` over the verified steps.
    pub lambda: f64,
    /// `(gamma_alpha^2 (1 - lambda))^T' ||delta_0||^2_{p_0}` at the verified
    /// horizon.
    pub bound_final: f64,
    /// The index `T'` the bound was compared at: the full horizon, unless the
    /// remainder decayed below the resolution floor earlier.
    pub effective_horizon: usize,
    /// Whether `||delta_T'||^2_{p_T'}` stays below the bound (1e-8 slack).
    pub holds: bool,
}

/// Verifies `||delta_T'||^2 <= (gamma_alpha^2 (1-lambda))^T' ||delta_0||^2`
/// with `lambda` the smallest gain over the verified steps.
///
/// `T'` is the last index whose remainder sup norm is at least
/// `resolve_floor` (pass zero to force the full horizon). Fast-mixing runs
/// drive the remainder to the floating-point noise floor well before the
/// final step; past that point both sides of the inequality are pure rounding
/// artifacts, so the comparison stops at the last resolvable index instead.
///
/// Fails with [`Error::ZeroDelta`] when the run starts at consensus or no
/// step is resolvable.
pub fn corollary_check(
    records: &[DecompositionRecord],
    gamma_alpha: f64,
    resolve_floor: f64,
) -> Result<CorollaryCheck> {
    assert!(records.len() >= 2, "need at least one step");
    if records[0].degenerate {
        return Err(Error::ZeroDelta);
    }
    let effective_horizon = (0..records.len())
        .rev()
        .find(|&t| !records[t].degenerate && inf_norm(&records[t].delta) >= resolve_floor)
        .unwrap_or(0);
    if effective_horizon == 0 {
        return Err(Error::ZeroDelta);
    }
    let lambda = records[..effective_horizon]
        .iter()
        .filter_map(|r| if r.degenerate { None } else { r.gain })
        .fold(f64::INFINITY, f64::min);
    if !lambda.is_finite() {
        return Err(Error::ZeroDelta);
    }
    let bound_final = (gamma_alpha * gamma_alpha * (1.0 - lambda)).powi(effective_horizon as i32)
        * records[0].delta_norm_sq;
    let holds = records[effective_horizon].delta_norm_sq <= bound_final * (1.0 + 1e-8);
    Ok(CorollaryCheck {
        lambda,
        bound_final,
        effective_horizon,
        holds,
    })
}

/// Largest residuals of the componentwise recursions
/// `c_{t+1} = gamma_alpha c_t` and `delta_{t+1} = gamma_alpha M_t delta_t`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConsensusDynamics {
    pub max_consensus_residual: f64,
    pub max_delta_residual: f64,
}

/// The documented fault-injection hook: adds `amount` to one entry of one mix
/// matrix before diagnostics run. Used as a negative control to demonstrate
/// that the decay checks actually reject corrupted dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub step: usize,
    pub row: usize,
    pub col: usize,
    pub amount: f64,
}

impl FaultInjection {
    /// The standard negative control: perturb `M[0][0]` by `1e-3` at step 1
    /// (step 0 for single-step runs). The decay-identity defect scales with
    /// the square of the remainder at the corrupted step, so the fault lands
    /// early, while the remainder is still at full scale.
    pub fn standard(horizon: usize) -> FaultInjection {
        FaultInjection {
            step: if horizon > 1 { 1 } else { 0 },
            row: 0,
            col: 0,
            amount: 1e-3,
        }
    }
}

/// Full diagnostics attached to a trace: the (possibly fault-injected) mix
/// sequence actually analyzed, the probability sequence, per-step records, and
/// the horizon-level summaries.
#[derive(Debug, Clone)]
pub struct ApsDiagnostics {
    pub mixes: Vec<StochasticMatrix>,
    pub aps: ApsSequence,
    pub aps_validation: ApsValidation,
    /// Records for `t = 0 ..= T`.
    pub records: Vec<DecompositionRecord>,
    pub corollary: Option<CorollaryCheck>,
    pub max_theorem_residual: Option<f64>,
    pub consensus_dynamics: ConsensusDynamics,
    /// Threshold below which a remainder counts as consensus for this run.
    pub zero_delta_threshold: f64,
    pub fault: Option<FaultInjection>,
}

impl ApsDiagnostics {
    pub fn lambda(&self) -> Option<f64> {
        self.corollary.map(|c| c.lambda)
    }

    /// Smallest gain over non-degenerate steps.
    pub fn min_gain(&self) -> Option<f64> {
        let min = self
            .records
            .iter()
            .filter_map(|r| if r.degenerate { None } else { r.gain })
            .fold(f64::INFINITY, f64::min);
        min.is_finite().then_some(min)
    }
}

/// Runs the whole analysis over a trace: backward probability sequence,
/// decomposition, per-step gains and decay residuals, the consensus recursion
/// residuals, and the horizon bound.
pub fn diagnose(
    trace: &ViTrace,
    terminal_choice: TerminalChoice,
    fault: Option<FaultInjection>,
) -> Result<ApsDiagnostics> {
    let mut mixes: Vec<StochasticMatrix> = trace.mixes()?.into_iter().cloned().collect();
    if let Some(f) = fault {
        if f.step >= mixes.len() {
            return Err(Error::InvalidConfig(format!(
                "fault step {} out of range (horizon {})",
                f.step,
                mixes.len()
            )));
        }
        let n = mixes[f.step].n();
        if f.row >= n || f.col >= n {
            return Err(Error::InvalidConfig("fault entry out of range".into()));
        }
        let mut raw = mixes[f.step].matrix().clone();
        raw.set(f.row, f.col, raw.get(f.row, f.col) + f.amount);
        mixes[f.step] = StochasticMatrix::new_unchecked(raw);
    }

    let terminal = terminal_distribution(terminal_choice, &mixes)?;
    let aps = backward_aps(&mixes, &terminal, terminal_choice)?;
    let aps_validation = aps.validation(&mixes);

    let horizon = trace.horizon();
    let zero_delta_threshold = ZERO_DELTA_REL_TOL * (1.0 + trace.error_inf_at(0));

    let mut records: Vec<DecompositionRecord> = (0..=horizon)
        .map(|t| {
            let p = &aps.weights[t];
            let (consensus, delta) = decompose(trace.error_at(t), p);
            let delta_norm_sq = weighted_norm_sq(&delta, p);
            let degenerate = inf_norm(&delta) <= zero_delta_threshold;
            DecompositionRecord {
                t,
                consensus,
                delta,
                delta_norm_sq,
                gain: None,
                theorem_residual: None,
                degenerate,
            }
        })
        .collect();

    for t in 0..horizon {
        if records[t].degenerate {
            continue;
        }
        match contraction_gain(
            &mixes[t],
            &aps.weights[t + 1],
            &aps.weights[t],
            &records[t].delta,
        ) {
            Ok(gain) => records[t].gain = Some(gain),
            Err(Error::ZeroDelta) => {
                // Weighted norm vanished even though the remainder is nonzero
                // in sup norm; the step carries no usable decay information.
                records[t].degenerate = true;
            }
            Err(e) => return Err(e),
        }
        if records[t].gain.is_some() {
            let residual = theorem_step_residual(&records[t], &records[t + 1], trace.gamma_alpha)?;
            records[t].theorem_residual = Some(residual);
        }
    }

    let max_theorem_residual = records
        .iter()
        .filter_map(|r| r.theorem_residual)
        .fold(None, |acc: Option<f64>, r| {
            Some(acc.map_or(r, |a| a.max(r)))
        });

    // Error vectors are differences of values, so their entries carry absolute
    // rounding noise proportional to the value scale.
    let value_scale = 1.0 + inf_norm(&trace.v_star) + trace.error_inf_at(0);
    let resolve_floor = RESOLVE_FLOOR_REL * value_scale;
    let corollary = match corollary_check(&records, trace.gamma_alpha, resolve_floor) {
        Ok(c) => Some(c),
        Err(Error::ZeroDelta) => None,
        Err(e) => return Err(e),
    };

    let mut max_consensus_residual = 0.0_f64;
    let mut max_delta_residual = 0.0_f64;
    for t in 0..horizon {
        let predicted_c = trace.gamma_alpha * records[t].consensus;
        max_consensus_residual =
            max_consensus_residual.max((records[t + 1].consensus - predicted_c).abs());
        let image = mixes[t].apply(&records[t].delta);
        for (i, img) in image.iter().enumerate() {
            let predicted = trace.gamma_alpha * img;
            max_delta_residual =
                max_delta_residual.max((records[t + 1].delta[i] - predicted).abs());
        }
    }

    Ok(ApsDiagnostics {
        mixes,
        aps,
        aps_validation,
        records,
        corollary,
        max_theorem_residual,
        consensus_dynamics: ConsensusDynamics {
            max_consensus_residual,
            max_delta_residual,
        },
        zero_delta_threshold,
        fault,
    })
}
