//! Spectral characterization of the per-step contraction gain.
//!
//! For a mix matrix `M` and next-step weights `q` define the weighted Gram
//! matrix `A = M^T diag(q) M` and the Laplacian
//!
//! ```text
//! L[k,l] = -A[k,l]            (k != l)
//! L[k,k] = sum_{l != k} A[k,l]
//! ```
//!
//! `L` is symmetric with zero row sums and non-positive off-diagonal entries,
//! hence positive semidefinite with the all-ones vector in its kernel. The
//! contraction gain of [`crate::aps::contraction_gain`] is exactly the
//! generalized Rayleigh quotient `delta^T L delta / delta^T Pi delta` with
//! `Pi = diag(p)` the current-step weights, and since the remainder `delta`
//! is `Pi`-orthogonal to consensus, that quotient is bounded below by the
//! second-smallest eigenvalue of the generalized problem `L v = lambda Pi v`.
//! The generalized spectrum is read off the symmetric similarity transform
//! `Lt = Pi^{-1/2} L Pi^{-1/2}` (congruent to `L`, so the inertia agrees),
//! and relates to the plain spectrum through
//! `lambda2(Lt) >= lambda2(L) / max_i p[i]`.
//!
//! All of those statements are checked numerically, per step, by
//! [`spectral_report`]; nothing is taken on faith from the derivation.

use serde::{Deserialize, Serialize};

use crate::aps::{weighted_norm_sq, ApsDiagnostics};
use crate::generators::SplitMix64;
use crate::numerics::{sym_eigen, Matrix, StochasticMatrix};
use crate::vi::ViTrace;
use crate::{Error, Result};

/// Weights below this cannot be inverted for the similarity transform; the
/// step is flagged instead of computed.
pub const WEIGHT_FLOOR: f64 = 1e-14;

/// Eigenvalues within `1e-9 * (1 + max|entry|)` of zero count as kernel.
pub const KERNEL_REL_TOL: f64 = 1e-9;

/// Symmetric matrix with zero row sums and non-positive off-diagonal entries.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    inner: Matrix,
}

impl LaplacianMatrix {
    pub fn new(matrix: Matrix) -> Result<LaplacianMatrix> {
        if !matrix.is_square() {
            return Err(Error::InvalidModel("laplacian must be square".into()));
        }
        let n = matrix.rows();
        if matrix.asymmetry() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "laplacian asymmetry {:.3e} exceeds 1e-12",
                matrix.asymmetry()
            )));
        }
        for i in 0..n {
            let sum: f64 = matrix.row(i).iter().sum();
            if sum.abs() > 1e-11 {
                return Err(Error::InvalidModel(format!(
                    "laplacian row {i} sums to {sum:.3e}"
                )));
            }
            for j in 0..n {
                if i != j && matrix.get(i, j) > 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "laplacian off-diagonal [{i},{j}] = {:.3e} is positive",
                        matrix.get(i, j)
                    )));
                }
            }
        }
        Ok(LaplacianMatrix { inner: matrix })
    }

    pub fn n(&self) -> usize {
        self.inner.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inner
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }
}

/// Evaluates both sides of the Laplacian quadratic-form identity
/// `x^T L x = -1/2 sum_i sum_{j != i} L[i,j] (x_i - x_j)^2`
/// by independent summations; callers compare them.
pub fn laplacian_quadratic(l: &LaplacianMatrix, x: &[f64]) -> (f64, f64) {
    let n = l.n();
    assert_eq!(x.len(), n);
    let image = l.inner.mat_vec(x);
    let lhs: f64 = x.iter().zip(&image).map(|(a, b)| a * b).sum();
    let mut rhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let diff = x[i] - x[j];
                rhs += l.get(i, j) * diff * diff;
            }
        }
    }
    (lhs, -0.5 * rhs)
}

/// Evaluates both sides of the probability-vector identity
/// `(sum_i p_i x_i)^2 = sum_i p_i x_i^2 - 1/2 sum_{i,j} p_i p_j (x_i - x_j)^2`.
pub fn probability_quadratic(p: &[f64], x: &[f64]) -> (f64, f64) {
    assert_eq!(p.len(), x.len());
    let n = p.len();
    let mean: f64 = p.iter().zip(x).map(|(w, v)| w * v).sum();
    let lhs = mean * mean;
    let second_moment: f64 = p.iter().zip(x).map(|(w, v)| w * v * v).sum();
    let mut pairwise = 0.0;
    for i in 0..n {
        for j in 0..n {
            let diff = x[i] - x[j];
            pairwise += p[i] * p[j] * diff * diff;
        }
    }
    (lhs, second_moment - 0.5 * pairwise)
}

/// Laplacian of the weighted Gram matrix `M^T diag(p_next) M`.
pub fn build_laplacian(mix: &StochasticMatrix, p_next: &[f64]) -> LaplacianMatrix {
    let n = mix.n();
    assert_eq!(p_next.len(), n);
    // gram[k][l] = sum_i p_next[i] M[i,k] M[i,l], computed once per pair.
    let mut gram = Matrix::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let mut acc = 0.0;
            for i in 0..n {
                let w = p_next[i];
                if w != 0.0 {
                    acc += w * mix.get(i, k) * mix.get(i, l);
                }
            }
            gram.set(k, l, acc);
            gram.set(l, k, acc);
        }
    }
    let mut lap = Matrix::zeros(n, n);
    for k in 0..n {
        let mut diag = 0.0;
        for l in 0..n {
            if l != k {
                lap.set(k, l, -gram.get(k, l));
                diag += gram.get(k, l);
            }
        }
        lap.set(k, k, diag);
    }
    LaplacianMatrix::new(lap).expect("gram laplacian satisfies the invariants")
}

/// Generalized Rayleigh quotient `delta^T L delta / delta^T diag(p) delta`.
/// Fails with [`Error::ZeroDelta`] when the weighted norm vanishes.
pub fn rayleigh_gain(l: &LaplacianMatrix, p: &[f64], delta: &[f64]) -> Result<f64> {
    let denom = weighted_norm_sq(delta, p);
    if !(denom > 0.0) {
        return Err(Error::ZeroDelta);
    }
    let image = l.inner.mat_vec(delta);
    let num: f64 = delta.iter().zip(&image).map(|(a, b)| a * b).sum();
    Ok(num / denom)
}

/// Eigenvalues (ascending) and back-transformed eigenvectors of the
/// generalized problem `L v = lambda diag(p) v`, solved through the symmetric
/// matrix `Pi^{-1/2} L Pi^{-1/2}`. The eigenvector columns satisfy
/// `V^T diag(p) V = I`.
///
/// Fails with [`Error::NonPositiveWeights`] if any weight is below
/// [`WEIGHT_FLOOR`].
pub fn generalized_eigen(l: &LaplacianMatrix, p: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    let n = l.n();
    assert_eq!(p.len(), n);
    for (i, &w) in p.iter().enumerate() {
        if !(w >= WEIGHT_FLOOR) {
            return Err(Error::NonPositiveWeights { index: i, value: w });
        }
    }
    let inv_sqrt: Vec<f64> = p.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut tilde = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            tilde.set(i, j, l.get(i, j) * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    let eigen = sym_eigen(&tilde)?;
    let mut vectors = Matrix::zeros(n, n);
    for col in 0..n {
        for row in 0..n {
            vectors.set(row, col, inv_sqrt[row] * eigen.eigenvectors.get(row, col));
        }
    }
    Ok((eigen.eigenvalues, vectors))
}

/// Second-smallest eigenvalue from an ascending spectrum, treating everything
/// within `KERNEL_REL_TOL * (1 + scale)` of zero as kernel. A kernel of
/// multiplicity above one (disconnected graph) reports zero.
pub fn lambda2_from_spectrum(eigenvalues: &[f64], scale: f64) -> f64 {
    assert!(eigenvalues.len() >= 2, "need at least a 2x2 problem");
    let tol = KERNEL_REL_TOL * (1.0 + scale);
    let kernel = eigenvalues.iter().filter(|v| v.abs() <= tol).count();
    if kernel > 1 {
        0.0
    } else {
        eigenvalues[1]
    }
}

/// Second-smallest generalized eigenvalue of `(L, diag(p))` with its
/// eigenvector (mapped back to the original coordinates).
pub fn generalized_lambda2(l: &LaplacianMatrix, p: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = l.n();
    let (eigenvalues, vectors) = generalized_eigen(l, p)?;
    let scale = {
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((l.get(i, j) / (p[i] * p[j]).sqrt()).abs());
            }
        }
        worst
    };
    let lambda2 = lambda2_from_spectrum(&eigenvalues, scale);
    let v2: Vec<f64> = (0..n).map(|row| vectors.get(row, 1)).collect();
    Ok((lambda2, v2))
}

/// Outcome of the eigenvalue-scaling comparison between the transformed and
/// plain Laplacian spectra.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LemmaBound {
    /// `lambda2(Pi^{-1/2} L Pi^{-1/2})`.
    pub lambda2_tilde: f64,
    /// `lambda2(L) / max_i p[i]`.
    pub scaled_plain: f64,
    pub holds: bool,
}

/// Checks `lambda2(Lt) >= lambda2(L) / p_max` (with `1e-9` relative slack),
/// computing both spectra with the same eigensolver.
pub fn lemma_bound_check(l: &LaplacianMatrix, p: &[f64]) -> Result<LemmaBound> {
    let (tilde_eigenvalues, _) = generalized_eigen(l, p)?;
    let n = l.n();
    let tilde_scale = {
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((l.get(i, j) / (p[i] * p[j]).sqrt()).abs());
            }
        }
        worst
    };
    let lambda2_tilde = lambda2_from_spectrum(&tilde_eigenvalues, tilde_scale);

    let plain = sym_eigen(l.matrix())?;
    let lambda2_plain = lambda2_from_spectrum(&plain.eigenvalues, l.matrix().max_abs());

    let p_max = p.iter().cloned().fold(0.0_f64, f64::max);
    let scaled_plain = lambda2_plain / p_max;
    let holds = lambda2_tilde >= scaled_plain - 1e-9 * (1.0 + lambda2_tilde);
    Ok(LemmaBound {
        lambda2_tilde,
        scaled_plain,
        holds,
    })
}

/// Why a step's spectral quantities were not computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralSkip {
    /// The remainder is at consensus; the quotient is undefined.
    Consensus,
    /// A weight fell below [`WEIGHT_FLOOR`]; the transform is ill-posed.
    WeightBelowFloor { index: usize },
}

/// Per-step spectral quantities and bound outcomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralStepReport {
    pub t: usize,
    pub p_max: f64,
    pub skipped: Option<SpectralSkip>,
    /// `lambda2` of the pair `(L_t, diag(p_t))`.
    pub lambda2_generalized: Option<f64>,
    /// `lambda2(L_t)` (plain spectrum).
    pub lambda2_plain: Option<f64>,
    /// `lambda2` of the similarity transform (independent route to the
    /// generalized value, via [`lemma_bound_check`]).
    pub lambda2_tilde: Option<f64>,
    /// `delta^T L delta / delta^T Pi delta`.
    pub rayleigh_value: Option<f64>,
    /// Gain `R_t >= lambda2_generalized - 1e-9`.
    pub rayleigh_bound_holds: Option<bool>,
    /// `lambda2_tilde >= lambda2_plain / p_max` within slack.
    pub bound_lemma_holds: Option<bool>,
}

/// Runs the spectral analysis over every step of a diagnosed trace.
///
/// Consensus steps are marked [`SpectralSkip::Consensus`]; steps whose weights
/// fall below the positivity floor are marked [`SpectralSkip::WeightBelowFloor`]
/// rather than computed. Everything else gets the full set of eigenvalue
/// bounds.
pub fn spectral_report(trace: &ViTrace, diag: &ApsDiagnostics) -> Result<Vec<SpectralStepReport>> {
    let horizon = trace.horizon();
    assert_eq!(diag.mixes.len(), horizon);
    let mut reports = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let p = &diag.aps.weights[t];
        let p_next = &diag.aps.weights[t + 1];
        let record = &diag.records[t];
        let p_max = p.iter().cloned().fold(0.0_f64, f64::max);

        if record.degenerate {
            reports.push(SpectralStepReport {
                t,
                p_max,
                skipped: Some(SpectralSkip::Consensus),
                lambda2_generalized: None,
                lambda2_plain: None,
                lambda2_tilde: None,
                rayleigh_value: None,
                rayleigh_bound_holds: None,
                bound_lemma_holds: None,
            });
            continue;
        }
        if let Some((index, _)) = p.iter().enumerate().find(|(_, &w)| !(w >= WEIGHT_FLOOR)) {
            reports.push(SpectralStepReport {
                t,
                p_max,
                skipped: Some(SpectralSkip::WeightBelowFloor { index }),
                lambda2_generalized: None,
                lambda2_plain: None,
                lambda2_tilde: None,
                rayleigh_value: None,
                rayleigh_bound_holds: None,
                bound_lemma_holds: None,
            });
            continue;
        }

        let laplacian = build_laplacian(&diag.mixes[t], p_next);
        let rayleigh = rayleigh_gain(&laplacian, p, &record.delta)?;
        let (lambda2, _) = generalized_lambda2(&laplacian, p)?;
        let plain = sym_eigen(laplacian.matrix())?;
        let lambda2_plain = lambda2_from_spectrum(&plain.eigenvalues, laplacian.matrix().max_abs());
        let lemma = lemma_bound_check(&laplacian, p)?;
        let gain = record.gain.expect("non-degenerate step has a gain");

        reports.push(SpectralStepReport {
            t,
            p_max,
            skipped: None,
            lambda2_generalized: Some(lambda2),
            lambda2_plain: Some(lambda2_plain),
            lambda2_tilde: Some(lemma.lambda2_tilde),
            rayleigh_value: Some(rayleigh),
            rayleigh_bound_holds: Some(gain >= lambda2 - 1e-9),
            bound_lemma_holds: Some(lemma.holds),
        });
    }
    Ok(reports)
}

/// Synthetic Laplacian from a random nonnegative weight graph; used by the
/// verification battery to exercise the eigenvalue bounds away from pipeline
/// data.
pub fn random_laplacian(n: usize, rng: &mut SplitMix64) -> LaplacianMatrix {
    assert!(n >= 2);
    let mut weights = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            // Around a quarter of the edges are absent.
            let w = if rng.next_f64() < 0.25 {
                0.0
            } else {
                1.0 - rng.next_f64()
            };
            weights.set(i, j, w);
            weights.set(j, i, w);
        }
    }
    let mut lap = Matrix::zeros(n, n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if j != i {
                lap.set(i, j, -weights.get(i, j));
                degree += weights.get(i, j);
            }
        }
        lap.set(i, i, degree);
    }
    LaplacianMatrix::new(lap).expect("graph laplacian satisfies the invariants")
}

/// Random probability vector with entries floored away from zero, for
/// well-conditioned synthetic weight draws.
pub fn random_weights(n: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.next_f64()).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|x| x / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aps::{contraction_gain, decompose, diagnose, TerminalChoice};
    use crate::generators::{random_initial_error, sample_until_assumption, GeneratorConfig};
    use crate::vi::{run_vi, DampedViConfig};

    fn stochastic(rows: &[Vec<f64>]) -> StochasticMatrix {
        StochasticMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn two_node_path() -> LaplacianMatrix {
        LaplacianMatrix::new(Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap())
            .unwrap()
    }

    #[test]
    fn quadratic_vanishes_on_consensus() {
        let mut rng = SplitMix64::new(3);
        let l = random_laplacian(5, &mut rng);
        let x = vec![2.75; 5];
        let (lhs, rhs) = laplacian_quadratic(&l, &x);
        assert!(lhs.abs() <= 1e-12);
        assert!(rhs.abs() <= 1e-12);
    }

    #[test]
    fn quadratic_two_node_case() {
        let (lhs, rhs) = laplacian_quadratic(&two_node_path(), &[1.0, 0.0]);
        assert_eq!(lhs, 1.0);
        assert_eq!(rhs, 1.0);
    }

    #[test]
    fn quadratic_identity_on_random_draws() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..200 {
            let n = 2 + rng.next_index(6);
            let l = random_laplacian(n, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
            let (lhs, rhs) = laplacian_quadratic(&l, &x);
            assert!(
                (lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()),
                "identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn probability_identity_constant_vector() {
        let p = [0.2, 0.3, 0.5];
        let x = [4.0, 4.0, 4.0];
        let (lhs, rhs) = probability_quadratic(&p, &x);
        assert!((lhs - 16.0).abs() <= 1e-12);
        assert!((rhs - 16.0).abs() <= 1e-12);
    }

    #[test]
    fn probability_identity_two_point_case() {
        let (lhs, rhs) = probability_quadratic(&[0.5, 0.5], &[1.0, -1.0]);
        assert_eq!(lhs, 0.0);
        assert!(rhs.abs() <= 1e-15);
    }

    #[test]
    fn probability_identity_on_random_draws() {
        let mut rng = SplitMix64::new(13);
        for _ in 0..200 {
            let n = 2 + rng.next_index(6);
            let p = random_weights(n, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
            let (lhs, rhs) = probability_quadratic(&p, &x);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()),
                "identity violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn laplacian_of_identity_mix_is_zero() {
        let eye = stochastic(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let l = build_laplacian(&eye, &[0.3, 0.4, 0.3]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn laplacian_two_state_uniform_mix() {
        let m = stochastic(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let l = build_laplacian(&m, &[0.5, 0.5]);
        assert!((l.get(0, 0) - 0.25).abs() <= 1e-15);
        assert!((l.get(0, 1) + 0.25).abs() <= 1e-15);
        assert!((l.get(1, 0) + 0.25).abs() <= 1e-15);
        assert!((l.get(1, 1) - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn laplacian_matches_elementwise_definition() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..20 {
            let n = 2 + rng.next_index(5);
            let mut rows = Vec::new();
            for _ in 0..n {
                let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.next_f64()).collect();
                let s: f64 = raw.iter().sum();
                rows.push(raw.iter().map(|x| x / s).collect::<Vec<f64>>());
            }
            let m = stochastic(&rows);
            let q = random_weights(n, &mut rng);
            let l = build_laplacian(&m, &q);
            for k in 0..n {
                for lcol in 0..n {
                    if k == lcol {
                        continue;
                    }
                    let mut expect = 0.0;
                    for i in 0..n {
                        expect -= q[i] * m.get(i, k) * m.get(i, lcol);
                    }
                    assert!(
                        (l.get(k, lcol) - expect).abs() <= 1e-13,
                        "entry [{k},{lcol}] mismatch"
                    );
                }
            }
        }
    }

    #[test]
    fn rayleigh_equals_triple_sum_gain() {
        let mut rng = SplitMix64::new(19);
        for _ in 0..20 {
            let n = 2 + rng.next_index(5);
            let mut rows = Vec::new();
            for _ in 0..n {
                let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.next_f64()).collect();
                let s: f64 = raw.iter().sum();
                rows.push(raw.iter().map(|x| x / s).collect::<Vec<f64>>());
            }
            let m = stochastic(&rows);
            let q = random_weights(n, &mut rng);
            let p = m.left_apply(&q);
            let e: Vec<f64> = (0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
            let (_, delta) = decompose(&e, &p);

            let l = build_laplacian(&m, &q);
            let via_rayleigh = rayleigh_gain(&l, &p, &delta).unwrap();
            let via_sum = contraction_gain(&m, &q, &p, &delta).unwrap();
            assert!(
                (via_rayleigh - via_sum).abs() <= 1e-10 * (1.0 + via_sum.abs()),
                "routes disagree: {via_rayleigh} vs {via_sum}"
            );
        }
    }

    #[test]
    fn rayleigh_vanishes_on_consensus_direction() {
        let mut rng = SplitMix64::new(23);
        let l = random_laplacian(4, &mut rng);
        let p = random_weights(4, &mut rng);
        let r = rayleigh_gain(&l, &p, &[1.0; 4]).unwrap();
        assert!(r.abs() <= 1e-12);
    }

    #[test]
    fn rayleigh_at_eigenvector_returns_lambda2() {
        let mut rng = SplitMix64::new(29);
        let l = random_laplacian(5, &mut rng);
        let p = random_weights(5, &mut rng);
        let (lambda2, v2) = generalized_lambda2(&l, &p).unwrap();
        let r = rayleigh_gain(&l, &p, &v2).unwrap();
        assert!(
            (r - lambda2).abs() <= 1e-9 * (1.0 + lambda2.abs()),
            "rayleigh at eigenvector {r} vs lambda2 {lambda2}"
        );
    }

    #[test]
    fn generalized_problem_has_flat_kernel_vector() {
        let mut rng = SplitMix64::new(31);
        let l = random_laplacian(4, &mut rng);
        let p = random_weights(4, &mut rng);
        let (eigenvalues, vectors) = generalized_eigen(&l, &p).unwrap();
        assert!(eigenvalues[0].abs() <= 1e-9 * (1.0 + l.matrix().max_abs()));
        // The kernel eigenvector is the constant vector up to scale.
        let first: Vec<f64> = (0..4).map(|r| vectors.get(r, 0)).collect();
        let ratio = first[0];
        for &x in &first {
            assert!((x - ratio).abs() <= 1e-8 * (1.0 + ratio.abs()));
        }
    }

    #[test]
    fn generalized_eigenvector_residual_contract() {
        let mut rng = SplitMix64::new(37);
        for _ in 0..20 {
            let n = 2 + rng.next_index(5);
            let l = random_laplacian(n, &mut rng);
            let p = random_weights(n, &mut rng);
            let (lambda2, v2) = generalized_lambda2(&l, &p).unwrap();
            let image = l.matrix().mat_vec(&v2);
            let tol = 1e-8 * (1.0 + l.matrix().max_abs());
            for i in 0..n {
                let residual = (image[i] - lambda2 * p[i] * v2[i]).abs();
                assert!(residual <= tol, "residual {residual} at {i}");
            }
        }
    }

    #[test]
    fn generalized_eigenbasis_is_weighted_orthonormal() {
        let mut rng = SplitMix64::new(59);
        for _ in 0..20 {
            let n = 2 + rng.next_index(5);
            let l = random_laplacian(n, &mut rng);
            let p = random_weights(n, &mut rng);
            let (_, vectors) = generalized_eigen(&l, &p).unwrap();
            // V^T diag(p) V = I.
            for a in 0..n {
                for b in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += vectors.get(k, a) * p[k] * vectors.get(k, b);
                    }
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!(
                        (acc - expect).abs() <= 1e-8,
                        "V^T Pi V off at [{a},{b}]: {acc}"
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_weights_scale_lambda2_by_n() {
        let mut rng = SplitMix64::new(41);
        for n in [2usize, 4, 6] {
            let l = random_laplacian(n, &mut rng);
            let p = vec![1.0 / n as f64; n];
            let (lambda2_gen, _) = generalized_lambda2(&l, &p).unwrap();
            let plain = sym_eigen(l.matrix()).unwrap();
            let lambda2_plain = lambda2_from_spectrum(&plain.eigenvalues, l.matrix().max_abs());
            assert!(
                (lambda2_gen - n as f64 * lambda2_plain).abs() <= 1e-9 * (1.0 + lambda2_gen.abs()),
                "n={n}: {lambda2_gen} vs {}",
                n as f64 * lambda2_plain
            );
        }
    }

    #[test]
    fn two_state_skewed_weights_worked_example() {
        let l = two_node_path();
        let p = [0.9, 0.1];
        let (lambda2, _) = generalized_lambda2(&l, &p).unwrap();
        assert!(
            (lambda2 - 100.0 / 9.0).abs() <= 1e-9 * (1.0 + lambda2),
            "lambda2 {lambda2} vs 100/9"
        );

        let lemma = lemma_bound_check(&l, &p).unwrap();
        assert!(lemma.holds);
        assert!((lemma.lambda2_tilde - 100.0 / 9.0).abs() <= 1e-9 * (1.0 + lemma.lambda2_tilde));
        assert!((lemma.scaled_plain - 20.0 / 9.0).abs() <= 1e-9 * (1.0 + lemma.scaled_plain));
    }

    #[test]
    fn lemma_bound_saturates_for_uniform_weights() {
        let mut rng = SplitMix64::new(43);
        for n in [3usize, 5] {
            let l = random_laplacian(n, &mut rng);
            let p = vec![1.0 / n as f64; n];
            let lemma = lemma_bound_check(&l, &p).unwrap();
            assert!(lemma.holds);
            assert!(
                (lemma.lambda2_tilde - lemma.scaled_plain).abs()
                    <= 1e-9 * (1.0 + lemma.lambda2_tilde),
                "uniform case should be tight: {} vs {}",
                lemma.lambda2_tilde,
                lemma.scaled_plain
            );
        }
    }

    #[test]
    fn lemma_bound_on_synthetic_draws() {
        let mut rng = SplitMix64::new(47);
        for _ in 0..200 {
            let n = 2 + rng.next_index(6);
            let l = random_laplacian(n, &mut rng);
            let p = random_weights(n, &mut rng);
            let lemma = lemma_bound_check(&l, &p).unwrap();
            assert!(
                lemma.holds,
                "bound failed: lambda2_tilde {} vs scaled {}",
                lemma.lambda2_tilde, lemma.scaled_plain
            );
        }
    }

    #[test]
    fn congruence_preserves_inertia() {
        let mut rng = SplitMix64::new(53);
        for _ in 0..30 {
            let n = 2 + rng.next_index(5);
            let l = random_laplacian(n, &mut rng);
            let p = random_weights(n, &mut rng);

            let signature = |eigs: &[f64], scale: f64| {
                let tol = KERNEL_REL_TOL * (1.0 + scale);
                let neg = eigs.iter().filter(|v| **v < -tol).count();
                let zero = eigs.iter().filter(|v| v.abs() <= tol).count();
                (neg, zero, eigs.len() - neg - zero)
            };

            let plain = sym_eigen(l.matrix()).unwrap();
            let (tilde_eigs, _) = generalized_eigen(&l, &p).unwrap();
            let tilde_scale = tilde_eigs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            assert_eq!(
                signature(&plain.eigenvalues, l.matrix().max_abs()),
                signature(&tilde_eigs, tilde_scale)
            );
            // Positive semidefinite in both routes.
            assert!(plain.eigenvalues[0] >= -1e-10 * (1.0 + l.matrix().max_abs()));
        }
    }

    #[test]
    fn weights_below_floor_are_rejected() {
        let l = two_node_path();
        match generalized_lambda2(&l, &[1.0 - 1e-16, 1e-16]) {
            Err(Error::NonPositiveWeights { index: 1, .. }) => {}
            other => panic!("expected NonPositiveWeights, got {other:?}"),
        }
    }

    #[test]
    fn report_marks_consensus_step_degenerate() {
        let config = GeneratorConfig {
            n: 3,
            m: 2,
            seed: 8,
            density: 0.8,
            reward_range: (0.0, 1.0),
            gamma: 0.9,
            max_attempts: 100,
        };
        let (mdp, report, _) = sample_until_assumption(&config).unwrap();
        let cert = report.certificate;
        let v0: Vec<f64> = cert.v_star.iter().map(|v| v + 2.0).collect();
        let trace = run_vi(&mdp, &cert, &DampedViConfig::new(0.5, 1, v0)).unwrap();
        let diag = diagnose(&trace, TerminalChoice::Uniform, None).unwrap();
        let reports = spectral_report(&trace, &diag).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].skipped, Some(SpectralSkip::Consensus));
    }

    #[test]
    fn report_bounds_hold_on_a_pipeline_run() {
        let config = GeneratorConfig {
            n: 5,
            m: 3,
            seed: 21,
            density: 0.7,
            reward_range: (0.0, 1.0),
            gamma: 0.9,
            max_attempts: 100,
        };
        let (mdp, report, _) = sample_until_assumption(&config).unwrap();
        let cert = report.certificate;
        let v0: Vec<f64> = cert
            .v_star
            .iter()
            .zip(random_initial_error(5, 2, 1.0))
            .map(|(v, e)| v + e)
            .collect();
        let trace = run_vi(&mdp, &cert, &DampedViConfig::new(0.6, 30, v0)).unwrap();
        let diag = diagnose(&trace, TerminalChoice::Uniform, None).unwrap();
        let reports = spectral_report(&trace, &diag).unwrap();
        for (t, step) in reports.iter().enumerate() {
            if step.skipped.is_some() {
                continue;
            }
            assert_eq!(step.rayleigh_bound_holds, Some(true), "step {t}");
            assert_eq!(step.bound_lemma_holds, Some(true), "step {t}");
            let gain = diag.records[t].gain.unwrap();
            let rayleigh = step.rayleigh_value.unwrap();
            assert!(
                (gain - rayleigh).abs() <= 1e-10 * (1.0 + gain.abs()),
                "step {t}: {gain} vs {rayleigh}"
            );
        }
    }
}
