//! Finite discounted MDP model, Bellman machinery, and an exact optimum oracle.
//!
//! The optimum is certified by full policy enumeration (every deterministic
//! policy is evaluated by a linear solve), which keeps the downstream error
//! analysis free of circularity: iterative solvers are *checked against* the
//! certificate, never used to produce it.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numerics::{chain_period, solve_linear, strongly_connected, Matrix, StochasticMatrix};
use crate::{Error, Result};

/// Hard cap on `m^n` for the enumeration oracle.
pub const ENUMERATION_CAP: u64 = 100_000;

/// Transition rows must sum to one within this tolerance.
pub const TRANSITION_ROW_TOL: f64 = 1e-12;

/// Largest entry magnitude of a vector (zero for an empty slice).
pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Finite discounted MDP: `n` states, `m` actions (every action available in
/// every state), expected immediate rewards `reward[s][a]`, transition
/// distributions `transition[s][a]` over successor states, discount
/// `gamma` in (0,1).
///
/// The JSON form is exactly this struct:
/// `{"n":…, "m":…, "gamma":…, "reward":[[…]], "transition":[[[…]]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mdp {
    pub n: usize,
    pub m: usize,
    pub gamma: f64,
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
}

impl Mdp {
    /// Validates and constructs a model. Checks dimensions, finiteness,
    /// `gamma` in (0,1), and that every transition row is a probability
    /// vector within [`TRANSITION_ROW_TOL`].
    pub fn new(
        n: usize,
        m: usize,
        gamma: f64,
        reward: Vec<Vec<f64>>,
        transition: Vec<Vec<Vec<f64>>>,
    ) -> Result<Mdp> {
        let mdp = Mdp {
            n,
            m,
            gamma,
            reward,
            transition,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidModel("n and m must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidModel(format!(
                "gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if self.reward.len() != self.n || self.reward.iter().any(|r| r.len() != self.m) {
            return Err(Error::InvalidModel("reward table must be n x m".into()));
        }
        for row in &self.reward {
            for &x in row {
                if !x.is_finite() {
                    return Err(Error::InvalidModel("non-finite reward".into()));
                }
            }
        }
        if self.transition.len() != self.n {
            return Err(Error::InvalidModel(
                "transition tensor must have n rows".into(),
            ));
        }
        for (s, per_action) in self.transition.iter().enumerate() {
            if per_action.len() != self.m {
                return Err(Error::InvalidModel(format!(
                    "state {s} must have m transition rows"
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != self.n {
                    return Err(Error::InvalidModel(format!(
                        "transition[{s}][{a}] must have length n"
                    )));
                }
                let mut sum = 0.0;
                for &p in row {
                    if !(p >= 0.0) || !p.is_finite() {
                        return Err(Error::InvalidModel(format!(
                            "transition[{s}][{a}] has a negative or non-finite entry"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > TRANSITION_ROW_TOL {
                    return Err(Error::InvalidModel(format!(
                        "transition[{s}][{a}] sums to {sum:.17}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(json: &str) -> Result<Mdp> {
        let mdp: Mdp = serde_json::from_str(json)?;
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Mdp> {
        Mdp::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("mdp serialization cannot fail")
    }

    #[inline]
    pub fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let expected: f64 = self.transition[s][a]
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum();
        self.reward[s][a] + self.gamma * expected
    }
}

/// One action per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>) -> DeterministicPolicy {
        DeterministicPolicy { actions }
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    /// FNV-1a over the action indices (each folded as 8 little-endian bytes);
    /// used as a compact per-step policy fingerprint in trace output.
    pub fn fnv1a_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &a in &self.actions {
            for byte in (a as u64).to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

fn serialize_gap<S: Serializer>(gap: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if gap.is_finite() {
        ser.serialize_some(gap)
    } else {
        // A single action per state leaves no runner-up; report null.
        ser.serialize_none()
    }
}

fn deserialize_gap<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    let opt = Option::<f64>::deserialize(de)?;
    Ok(opt.unwrap_or(f64::INFINITY))
}

/// Exact optimum produced by policy enumeration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimumCertificate {
    pub v_star: Vec<f64>,
    pub pi_star: DeterministicPolicy,
    pub unique: bool,
    /// Smallest margin, over states, between the best and second-best action
    /// value at the optimum. Infinite when `m == 1` (serialized as null).
    #[serde(serialize_with = "serialize_gap", deserialize_with = "deserialize_gap")]
    pub min_action_gap: f64,
}

/// Structural flags for the chain induced by the optimal policy, plus the
/// certificate they were derived from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub unique_optimal: bool,
    pub irreducible: bool,
    pub aperiodic: bool,
    pub certificate: OptimumCertificate,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.unique_optimal && self.irreducible && self.aperiodic
    }
}

/// Transition matrix and reward vector induced by a policy: row `s` is
/// `transition[s][pi(s)]`, entry `s` of the reward vector is `reward[s][pi(s)]`.
pub fn policy_matrix(mdp: &Mdp, pi: &DeterministicPolicy) -> (StochasticMatrix, Vec<f64>) {
    let n = mdp.n;
    assert_eq!(pi.actions.len(), n, "policy length must match state count");
    let mut p = Matrix::zeros(n, n);
    let mut r = vec![0.0; n];
    for s in 0..n {
        let a = pi.action(s);
        assert!(a < mdp.m, "policy action out of range");
        for (j, &prob) in mdp.transition[s][a].iter().enumerate() {
            p.set(s, j, prob);
        }
        r[s] = mdp.reward[s][a];
    }
    let p = StochasticMatrix::new(p).expect("valid mdp rows stay stochastic");
    (p, r)
}

/// Unique fixed point of `V = r_pi + gamma P_pi V`, via a direct solve of
/// `(I - gamma P_pi) V = r_pi`. The system is nonsingular for `gamma < 1`.
pub fn policy_evaluation(mdp: &Mdp, pi: &DeterministicPolicy) -> Result<Vec<f64>> {
    let (p, r) = policy_matrix(mdp, pi);
    let n = mdp.n;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            a.set(i, j, delta - mdp.gamma * p.get(i, j));
        }
    }
    solve_linear(&a, &r)
}

/// One Bellman optimality backup: per-state maximum of
/// `r(s,a) + gamma * E[v(s')]`, with the argmax policy. Ties break toward the
/// lowest action index.
pub fn bellman_backup(mdp: &Mdp, v: &[f64]) -> (Vec<f64>, DeterministicPolicy) {
    assert_eq!(v.len(), mdp.n);
    let mut out = vec![0.0; mdp.n];
    let mut actions = vec![0usize; mdp.n];
    for s in 0..mdp.n {
        let mut best = mdp.q_value(s, 0, v);
        let mut best_a = 0;
        for a in 1..mdp.m {
            let q = mdp.q_value(s, a, v);
            if q > best {
                best = q;
                best_a = a;
            }
        }
        out[s] = best;
        actions[s] = best_a;
    }
    (out, DeterministicPolicy::new(actions))
}

fn policy_count(n: usize, m: usize) -> Option<u64> {
    let mut total: u64 = 1;
    for _ in 0..n {
        total = total.checked_mul(m as u64)?;
        if total > ENUMERATION_CAP {
            return Some(total);
        }
    }
    Some(total)
}

/// Evaluates every deterministic policy and returns the componentwise-dominant
/// one, with a uniqueness margin read off the action values at the optimum.
///
/// Fails with [`Error::TooLarge`] when `m^n` exceeds [`ENUMERATION_CAP`] and
/// with [`Error::NoDominantPolicy`] if no evaluated policy dominates all others
/// componentwise (possible only for a broken model).
pub fn optimal_via_enumeration(mdp: &Mdp) -> Result<OptimumCertificate> {
    let count = policy_count(mdp.n, mdp.m);
    match count {
        Some(c) if c <= ENUMERATION_CAP => {}
        _ => {
            return Err(Error::TooLarge {
                states: mdp.n,
                actions: mdp.m,
                cap: ENUMERATION_CAP,
            })
        }
    }

    let mut actions = vec![0usize; mdp.n];
    let mut upper = vec![f64::NEG_INFINITY; mdp.n];
    let mut best_sum = f64::NEG_INFINITY;
    let mut best: Option<(Vec<f64>, DeterministicPolicy)> = None;
    loop {
        let pi = DeterministicPolicy::new(actions.clone());
        let v = policy_evaluation(mdp, &pi)?;
        for s in 0..mdp.n {
            upper[s] = upper[s].max(v[s]);
        }
        let sum: f64 = v.iter().sum();
        if sum > best_sum {
            best_sum = sum;
            best = Some((v, pi));
        }
        // Mixed-radix increment over the policy space.
        let mut s = 0;
        loop {
            if s == mdp.n {
                break;
            }
            actions[s] += 1;
            if actions[s] < mdp.m {
                break;
            }
            actions[s] = 0;
            s += 1;
        }
        if s == mdp.n {
            break;
        }
    }

    let (v_star, pi_star) = best.expect("at least one policy was evaluated");
    let dominance_tol = 1e-9 * (1.0 + inf_norm(&upper));
    for s in 0..mdp.n {
        if v_star[s] < upper[s] - dominance_tol {
            return Err(Error::NoDominantPolicy);
        }
    }

    // Per-state margin between the best and second-best action value at V*.
    let mut min_action_gap = f64::INFINITY;
    if mdp.m > 1 {
        for s in 0..mdp.n {
            let mut best_q = f64::NEG_INFINITY;
            let mut second_q = f64::NEG_INFINITY;
            for a in 0..mdp.m {
                let q = mdp.q_value(s, a, &v_star);
                if q > best_q {
                    second_q = best_q;
                    best_q = q;
                } else if q > second_q {
                    second_q = q;
                }
            }
            min_action_gap = min_action_gap.min(best_q - second_q);
        }
    }
    let unique = min_action_gap > uniqueness_threshold(&v_star);

    Ok(OptimumCertificate {
        v_star,
        pi_star,
        unique,
        min_action_gap,
    })
}

/// Uniqueness margin below which two actions are considered tied at the optimum.
pub fn uniqueness_threshold(v_star: &[f64]) -> f64 {
    1e-8 * (1.0 + inf_norm(v_star))
}

/// Checks the structural assumption behind the weighted-norm analysis: the
/// optimal policy is unique and induces an irreducible, aperiodic chain.
pub fn check_assumption(mdp: &Mdp) -> Result<AssumptionReport> {
    let certificate = optimal_via_enumeration(mdp)?;
    let (p_star, _) = policy_matrix(mdp, &certificate.pi_star);
    let adjacency = p_star.adjacency();
    let irreducible = strongly_connected(&adjacency);
    let aperiodic = irreducible && chain_period(&adjacency)? == 1;
    Ok(AssumptionReport {
        unique_optimal: certificate.unique,
        irreducible,
        aperiodic,
        certificate,
    })
}
