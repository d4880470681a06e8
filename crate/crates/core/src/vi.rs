//! Damped value iteration with a fully reconstructed error recursion.
//!
//! One step of the iteration is `V_{t+1} = (1-alpha) V_t + alpha T(V_t)` with
//! `T` the Bellman optimality backup. Writing `e_t = V_t - V*`, optimality of
//! the maximizing choices sandwiches the next error componentwise between two
//! damped row-stochastic images of the current one:
//!
//! ```text
//! gamma_alpha * (Q* e_t)  <=  e_{t+1}  <=  gamma_alpha * (Q_t e_t)
//! ```
//!
//! where `gamma_alpha = (1-alpha) + alpha*gamma`, `Q_t` is the damped
//! normalization of the greedy transition matrix `((1-alpha) I + alpha gamma
//! P_t) / gamma_alpha`, and `Q*` the same for the optimal one. Each step
//! therefore admits a diagonal blend `D_t` with
//! `e_{t+1} = gamma_alpha [D_t Q* + (I - D_t) Q_t] e_t` exactly; the engine
//! recovers `D_t`, materializes the row-stochastic mix `M_t`, and records the
//! whole sandwich so later stages can verify the weighted-norm decay.

use crate::mdp::{
    bellman_backup, inf_norm, policy_matrix, DeterministicPolicy, Mdp, OptimumCertificate,
};
use crate::numerics::{strongly_connected, Matrix, StochasticMatrix};
use crate::{Error, Result};

/// Componentwise tolerance for the sandwich bounds, in value space.
pub const SANDWICH_TOL: f64 = 1e-9;

/// Blend coefficients may stray this far outside [0,1] before the step is
/// declared a violation rather than rounding noise.
pub const BLEND_CLIP_TOL: f64 = 1e-9;

/// Two bound rows whose images differ by at most this (relative to
/// `1 + ||e||_inf`) are treated as indistinguishable; the blend defaults to the
/// optimal-policy row there.
pub const DEGENERATE_ROW_TOL: f64 = 1e-12;

/// Per-step matrices are retained only up to this state count under
/// [`MatrixRetention::Auto`].
pub const FULL_RETENTION_MAX_N: usize = 64;

/// Effective contraction factor of the damped update.
pub fn gamma_alpha(alpha: f64, gamma: f64) -> f64 {
    (1.0 - alpha) + alpha * gamma
}

/// Whether traced steps keep their matrices (needed by all downstream
/// diagnostics) or only scalar summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixRetention {
    /// Full retention up to [`FULL_RETENTION_MAX_N`] states, scalars beyond.
    #[default]
    Auto,
    Full,
    ScalarsOnly,
}

/// Configuration for a traced run.
#[derive(Debug, Clone)]
pub struct DampedViConfig {
    /// Learning rate in (0, 1]; 1 recovers the undamped iteration.
    pub alpha: f64,
    /// Number of steps.
    pub horizon: usize,
    /// Initial values `V_0`.
    pub v0: Vec<f64>,
    pub retention: MatrixRetention,
}

impl DampedViConfig {
    pub fn new(alpha: f64, horizon: usize, v0: Vec<f64>) -> DampedViConfig {
        DampedViConfig {
            alpha,
            horizon,
            v0,
            retention: MatrixRetention::Auto,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0,1], got {}",
                self.alpha
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.v0.len() != n {
            return Err(Error::InvalidConfig(format!(
                "v0 has length {}, expected {n}",
                self.v0.len()
            )));
        }
        if self.v0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("v0 has a non-finite entry".into()));
        }
        Ok(())
    }

    fn retain_matrices(&self, n: usize) -> bool {
        match self.retention {
            MatrixRetention::Auto => n <= FULL_RETENTION_MAX_N,
            MatrixRetention::Full => true,
            MatrixRetention::ScalarsOnly => false,
        }
    }
}

/// Everything recorded about one step `t -> t+1`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    /// `V_t`.
    pub values: Vec<f64>,
    /// `e_t = V_t - V*`.
    pub error: Vec<f64>,
    pub error_inf: f64,
    /// Greedy policy of the backup at `V_t`.
    pub greedy: DeterministicPolicy,
    pub greedy_reward: Vec<f64>,
    /// Greedy transition matrix `P_t` (if retained).
    pub greedy_matrix: Option<StochasticMatrix>,
    /// Damped normalization of `P_t` (if retained).
    pub greedy_damped: Option<StochasticMatrix>,
    /// Diagonal blend coefficients, in `[0,1]`, weight on the optimal row.
    pub blend: Vec<f64>,
    /// The row-stochastic mix `M_t` (if retained).
    pub mix: Option<StochasticMatrix>,
    pub mix_strongly_connected: bool,
}

/// A complete traced run.
#[derive(Debug, Clone)]
pub struct ViTrace {
    pub alpha: f64,
    pub gamma: f64,
    pub gamma_alpha: f64,
    pub v_star: Vec<f64>,
    pub pi_star: DeterministicPolicy,
    /// Transition matrix of the optimal policy.
    pub optimal_matrix: StochasticMatrix,
    /// Its damped normalization (shared by every step).
    pub optimal_damped: StochasticMatrix,
    /// Step records for `t = 0 .. horizon-1`.
    pub steps: Vec<StepRecord>,
    /// `V_T`.
    pub final_values: Vec<f64>,
    /// `e_T`.
    pub final_error: Vec<f64>,
    pub final_error_inf: f64,
}

impl ViTrace {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn n(&self) -> usize {
        self.v_star.len()
    }

    /// Error vector at time `t`, including the final `t == horizon`.
    pub fn error_at(&self, t: usize) -> &[f64] {
        if t < self.steps.len() {
            &self.steps[t].error
        } else {
            assert_eq!(t, self.steps.len(), "time index out of range");
            &self.final_error
        }
    }

    pub fn error_inf_at(&self, t: usize) -> f64 {
        if t < self.steps.len() {
            self.steps[t].error_inf
        } else {
            assert_eq!(t, self.steps.len(), "time index out of range");
            self.final_error_inf
        }
    }

    /// The mix sequence `M_0 .. M_{T-1}`, failing if any step dropped it.
    pub fn mixes(&self) -> Result<Vec<&StochasticMatrix>> {
        self.steps
            .iter()
            .map(|s| s.mix.as_ref().ok_or(Error::MatricesNotRetained))
            .collect()
    }
}

/// One damped step from `v`: returns the next values, the greedy policy, and
/// that policy's reward vector and transition matrix.
pub fn damped_vi_step(
    mdp: &Mdp,
    v: &[f64],
    alpha: f64,
) -> (Vec<f64>, DeterministicPolicy, Vec<f64>, StochasticMatrix) {
    let (backed, greedy) = bellman_backup(mdp, v);
    let (p, r) = policy_matrix(mdp, &greedy);
    let next: Vec<f64> = v
        .iter()
        .zip(&backed)
        .map(|(old, new)| (1.0 - alpha) * old + alpha * new)
        .collect();
    (next, greedy, r, p)
}

/// Damped normalization `((1-alpha) I + alpha gamma P) / gamma_alpha`; row
/// stochastic with diagonal at least `(1-alpha) / gamma_alpha`. At `alpha == 1`
/// this is `P` itself, returned bit-exactly.
fn damp_normalize(p: &StochasticMatrix, alpha: f64, gamma: f64) -> StochasticMatrix {
    if alpha == 1.0 {
        return p.clone();
    }
    let ga = gamma_alpha(alpha, gamma);
    let n = p.n();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let base = alpha * gamma * p.get(i, j);
            let value = if i == j { base + (1.0 - alpha) } else { base };
            out.set(i, j, value / ga);
        }
    }
    StochasticMatrix::new(out).expect("damped normalization preserves stochasticity")
}

/// Builds both sandwich matrices: the damped greedy matrix and the damped
/// optimal matrix, in that order.
pub fn bound_matrices(
    greedy: &StochasticMatrix,
    optimal: &StochasticMatrix,
    alpha: f64,
    gamma: f64,
) -> (StochasticMatrix, StochasticMatrix) {
    (
        damp_normalize(greedy, alpha, gamma),
        damp_normalize(optimal, alpha, gamma),
    )
}

/// Solves the per-state convex-combination equation
/// `e_next[i] = gamma_alpha (d[i] (Q* e)[i] + (1 - d[i]) (Q_t e)[i])` for the
/// blend `d`, clipping rounding-level overshoot into `[0,1]`.
///
/// When the two bound rows produce indistinguishable images (within
/// [`DEGENERATE_ROW_TOL`] relative to `1 + ||e||_inf`) the blend defaults to 1,
/// the optimal-policy row: under the structural assumption that matrix is
/// irreducible, which maximizes the chance the mix stays strongly connected.
///
/// Fails with [`Error::SandwichViolated`] if `e_next` escapes the bounds by
/// more than [`SANDWICH_TOL`], or if the blend falls outside
/// `[-1e-9, 1 + 1e-9]`.
pub fn recover_blend(
    step: usize,
    e_next: &[f64],
    e: &[f64],
    optimal_damped: &StochasticMatrix,
    greedy_damped: &StochasticMatrix,
    gamma_alpha: f64,
) -> Result<Vec<f64>> {
    let n = e.len();
    let image_opt = optimal_damped.apply(e);
    let image_greedy = greedy_damped.apply(e);
    let row_tol = DEGENERATE_ROW_TOL * (1.0 + inf_norm(e));

    let mut blend = vec![0.0; n];
    for i in 0..n {
        let lower = gamma_alpha * image_opt[i];
        let upper = gamma_alpha * image_greedy[i];
        if e_next[i] < lower.min(upper) - SANDWICH_TOL {
            return Err(Error::SandwichViolated {
                step,
                state: i,
                gap: lower.min(upper) - e_next[i],
            });
        }
        if e_next[i] > upper.max(lower) + SANDWICH_TOL {
            return Err(Error::SandwichViolated {
                step,
                state: i,
                gap: e_next[i] - upper.max(lower),
            });
        }
        if (image_greedy[i] - image_opt[i]).abs() <= row_tol {
            blend[i] = 1.0;
            continue;
        }
        let raw = (upper - e_next[i]) / (upper - lower);
        if !(-BLEND_CLIP_TOL..=1.0 + BLEND_CLIP_TOL).contains(&raw) {
            let gap = if raw < 0.0 { -raw } else { raw - 1.0 };
            return Err(Error::SandwichViolated {
                step,
                state: i,
                gap,
            });
        }
        blend[i] = raw.clamp(0.0, 1.0);
    }
    Ok(blend)
}

/// Rowwise convex combination `M = D Q* + (I - D) Q_t`; row stochastic by
/// construction, with each row equal to one of the inputs bit-exactly when the
/// blend saturates.
pub fn build_mix(
    blend: &[f64],
    optimal_damped: &StochasticMatrix,
    greedy_damped: &StochasticMatrix,
) -> StochasticMatrix {
    let n = blend.len();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let d = blend[i];
        for j in 0..n {
            let value = if d == 1.0 {
                optimal_damped.get(i, j)
            } else if d == 0.0 {
                greedy_damped.get(i, j)
            } else {
                d * optimal_damped.get(i, j) + (1.0 - d) * greedy_damped.get(i, j)
            };
            out.set(i, j, value);
        }
    }
    StochasticMatrix::new(out).expect("convex combination preserves stochasticity")
}

/// Runs the damped iteration for `config.horizon` steps, reconstructing the
/// sandwich, blend, and mix at every step. Errors are measured against the
/// certificate's `v_star`, never against an iteratively approximated optimum.
pub fn run_vi(mdp: &Mdp, cert: &OptimumCertificate, config: &DampedViConfig) -> Result<ViTrace> {
    config.validate(mdp.n)?;
    let alpha = config.alpha;
    let ga = gamma_alpha(alpha, mdp.gamma);
    let retain = config.retain_matrices(mdp.n);

    let (optimal_matrix, _) = policy_matrix(mdp, &cert.pi_star);
    let optimal_damped = damp_normalize(&optimal_matrix, alpha, mdp.gamma);

    let mut v = config.v0.clone();
    let mut e: Vec<f64> = v.iter().zip(&cert.v_star).map(|(a, b)| a - b).collect();
    let mut steps = Vec::with_capacity(config.horizon);

    for t in 0..config.horizon {
        let (v_next, greedy, greedy_reward, greedy_matrix) = damped_vi_step(mdp, &v, alpha);
        let e_next: Vec<f64> = v_next
            .iter()
            .zip(&cert.v_star)
            .map(|(a, b)| a - b)
            .collect();
        let greedy_damped = damp_normalize(&greedy_matrix, alpha, mdp.gamma);
        let blend = recover_blend(t, &e_next, &e, &optimal_damped, &greedy_damped, ga)?;
        let mix = build_mix(&blend, &optimal_damped, &greedy_damped);
        let mix_strongly_connected = strongly_connected(&mix.adjacency());

        steps.push(StepRecord {
            t,
            error_inf: inf_norm(&e),
            values: std::mem::take(&mut v),
            error: std::mem::take(&mut e),
            greedy,
            greedy_reward,
            greedy_matrix: retain.then_some(greedy_matrix),
            greedy_damped: retain.then_some(greedy_damped),
            blend,
            mix: retain.then_some(mix),
            mix_strongly_connected,
        });
        v = v_next;
        e = e_next;
    }

    Ok(ViTrace {
        alpha,
        gamma: mdp.gamma,
        gamma_alpha: ga,
        v_star: cert.v_star.clone(),
        pi_star: cert.pi_star.clone(),
        optimal_matrix,
        optimal_damped,
        final_error_inf: inf_norm(&e),
        final_values: v,
        final_error: e,
        steps,
    })
}
