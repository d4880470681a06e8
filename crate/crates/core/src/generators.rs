//! Seeded random model generation.
//!
//! Everything here is a pure function of the seed, using a fixed, documented
//! generator so traces are reproducible across runs, platforms, and
//! reimplementations in other languages.
//!
//! # The generator
//!
//! [`SplitMix64`] with the standard constants: the state advances by
//! `0x9E3779B97F4A7C15` per draw and the output is finalized with the
//! `xorshift-multiply` mix (`0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`).
//! Floats take the top 53 bits, giving uniform values in `[0, 1)`. Independent
//! substreams are derived counter-style: stream `k` of seed `s` starts from the
//! SplitMix64 output of `s ^ (k * 0x9E3779B97F4A7C15)`.

use serde::{Deserialize, Serialize};

use crate::mdp::{check_assumption, AssumptionReport, Mdp, ENUMERATION_CAP};
use crate::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E3779B97F4A7C15;

/// Minimum self-loop probability mass guaranteed for state 0.
pub const STATE0_SELF_LOOP_MASS: f64 = 0.05;

/// SplitMix64: 64-bit state, one output per step.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    /// Substream `stream` of `seed`; distinct streams are statistically
    /// independent for practical purposes.
    pub fn substream(seed: u64, stream: u64) -> SplitMix64 {
        let mut mixer = SplitMix64::new(seed ^ stream.wrapping_mul(GOLDEN_GAMMA));
        let derived = mixer.next_u64();
        SplitMix64::new(derived)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..bound`.
    pub fn next_index(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }
}

/// Configuration for the random MDP family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Fraction in (0, 1] of states reachable from each (state, action) pair;
    /// `ceil(density * n)` targets get positive mass.
    pub density: f64,
    /// Rewards are uniform in `[lo, hi]`; `lo == hi` is allowed and makes all
    /// rewards equal.
    pub reward_range: (f64, f64),
    pub gamma: f64,
    /// Rejection-sampling budget for [`sample_until_assumption`].
    pub max_attempts: u32,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("n and m must be at least 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "density must lie in (0,1], got {}",
                self.density
            )));
        }
        if self.density * (self.n as f64) < 1.0 - 1e-12 {
            return Err(Error::InvalidConfig(
                "density * n must be at least 1".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        let (lo, hi) = self.reward_range;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "reward range [{lo}, {hi}] is invalid"
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidConfig(
                "max_attempts must be at least 1".into(),
            ));
        }
        let mut count: u64 = 1;
        for _ in 0..self.n {
            count = match count.checked_mul(self.m as u64) {
                Some(c) if c <= ENUMERATION_CAP => c,
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "{}^{} policies exceed the enumeration cap {ENUMERATION_CAP}",
                        self.m, self.n
                    )))
                }
            };
        }
        Ok(())
    }

    fn targets_per_row(&self) -> usize {
        ((self.density * self.n as f64).ceil() as usize).clamp(1, self.n)
    }
}

/// Draws `k` distinct targets by a partial Fisher-Yates shuffle.
fn pick_targets(n: usize, k: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.next_index(n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Deterministic random MDP for the given configuration.
///
/// Each transition row puts positive normalized weight on `ceil(density*n)`
/// distinct targets. State 0 always keeps a self-loop with mass at least
/// [`STATE0_SELF_LOOP_MASS`] under every action, which nudges the induced
/// chains toward aperiodicity.
pub fn random_mdp(config: &GeneratorConfig) -> Result<Mdp> {
    config.validate()?;
    let n = config.n;
    let m = config.m;
    let k = config.targets_per_row();

    let mut transition_rng = SplitMix64::substream(config.seed, 1);
    let mut reward_rng = SplitMix64::substream(config.seed, 2);

    let mut transition = vec![vec![vec![0.0; n]; m]; n];
    for s in 0..n {
        for a in 0..m {
            let mut targets = pick_targets(n, k, &mut transition_rng);
            if s == 0 && !targets.contains(&0) {
                targets[k - 1] = 0;
            }
            let weights: Vec<f64> = targets
                .iter()
                .map(|_| 1.0 - transition_rng.next_f64()) // in (0, 1]
                .collect();
            let total: f64 = weights.iter().sum();
            let row = &mut transition[s][a];
            for (&t, &w) in targets.iter().zip(&weights) {
                row[t] = w / total;
            }
            if s == 0 && row[0] < STATE0_SELF_LOOP_MASS {
                // Blend toward the point mass at state 0; keeps the row a
                // probability vector while raising the self-loop to the floor.
                let beta = (STATE0_SELF_LOOP_MASS - row[0]) / (1.0 - row[0]);
                for entry in row.iter_mut() {
                    *entry *= 1.0 - beta;
                }
                row[0] += beta;
            }
            // Exact normalization of accumulated rounding.
            let sum: f64 = row.iter().sum();
            for entry in row.iter_mut() {
                *entry /= sum;
            }
        }
    }

    let (lo, hi) = config.reward_range;
    let reward: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| lo + (hi - lo) * reward_rng.next_f64())
                .collect()
        })
        .collect();

    Mdp::new(n, m, config.gamma, reward, transition)
}

/// Rejection-samples models until one satisfies the structural assumption
/// (unique optimum inducing an irreducible aperiodic chain). Attempt `i` uses
/// the sub-seed `config.seed + i`; the accepted model, its assumption report,
/// and the number of attempts are returned.
pub fn sample_until_assumption(config: &GeneratorConfig) -> Result<(Mdp, AssumptionReport, u32)> {
    config.validate()?;
    let mut last_failure = String::new();
    for attempt in 0..config.max_attempts {
        let sub = GeneratorConfig {
            seed: config.seed.wrapping_add(attempt as u64),
            ..config.clone()
        };
        let mdp = random_mdp(&sub)?;
        let report = check_assumption(&mdp)?;
        if report.all_hold() {
            return Ok((mdp, report, attempt + 1));
        }
        last_failure = format!(
            "seed {}: unique_optimal={}, irreducible={}, aperiodic={}",
            sub.seed, report.unique_optimal, report.irreducible, report.aperiodic
        );
    }
    Err(Error::ExhaustedAttempts {
        attempts: config.max_attempts,
        last_failure,
    })
}

/// Seeded initial error vector with `max |e[i]| == scale` and, for `n >= 2`,
/// a max-min spread of at least `0.1 * scale` (so the vector is never a
/// near-constant). For `n == 1` every vector is constant and the spread
/// guarantee is vacuous.
pub fn random_initial_error(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    assert!(n > 0, "n must be positive");
    assert!(scale > 0.0, "scale must be positive");
    let mut rng = SplitMix64::substream(seed, 3);
    let mut e: Vec<f64> = (0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect();

    let amp = |e: &[f64]| e.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if amp(&e) == 0.0 {
        e[0] = 1.0;
    }
    if n >= 2 {
        let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
        if max - min < 0.1 * amp(&e) {
            // All entries nearly identical; flipping one sign creates spread
            // of about twice the amplitude.
            e[0] = -e[0];
        }
    }

    let factor = scale / amp(&e);
    for x in e.iter_mut() {
        *x *= factor;
    }
    // Pin the extreme entry to the requested scale bit-exactly and keep every
    // other entry at or below it.
    let arg = e
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
        .map(|(i, _)| i)
        .unwrap();
    e[arg] = scale.copysign(e[arg]);
    for x in e.iter_mut() {
        *x = x.clamp(-scale, scale);
    }
    e
}
