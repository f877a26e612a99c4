//! Greedy extraction of orthonormal overflow and underflow direction systems.
//!
//! Two orthonormal sets are grown together: `V` (overflow, rows of `M^(t)`)
//! and `U` (underflow, rows of `(M^(t))^{-T}`), with `P` and `Q` the
//! projections onto their orthogonal complements. Each round scores every
//! candidate `(t, i)` by `‖row_i(M^(t)) P‖` and `‖row_i((M^(t))^{-T}) Q‖`,
//! takes the best one and adds the normalized projected row of the larger
//! side to its set. A projected row is orthogonal to everything already in
//! the set, so the sets stay orthonormal and a `(t, i)` pair can never be
//! chosen twice for the same set.
//!
//! The underflow set is then completed to a basis with standard basis
//! vectors, giving the per-direction widths whose product lower-bounds the
//! volume of inputs consistent with the final machine state.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;

use crate::builders::walsh_hadamard_matrix;
use crate::error::{Error, Result};
use crate::gate::{LinearAlgorithm, TrajectoryState};

/// Tolerance for the final-matrix check.
pub const FINAL_MATRIX_TOLERANCE: f64 = 1e-8;

/// Deviation from orthogonality that triggers re-orthogonalization.
const REORTHOGONALIZE_ABOVE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionKind {
    Overflow,
    Underflow,
}

/// An ordered orthonormal system with where each direction was found.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionSystem {
    pub kind: DirectionKind,
    /// Unit vectors `v_j` (or `u_j`).
    pub vectors: Vec<Vec<f64>>,
    /// The unprojected rows `z_j` the vectors came from.
    pub rows: Vec<Vec<f64>>,
    /// Step `t_j` of each direction (matrix `M^(t_j)`).
    pub steps: Vec<usize>,
    /// Coordinate `i_j`.
    pub coords: Vec<usize>,
    /// `α_j` (or `γ_j`): norm of the projected row.
    pub magnitudes: Vec<f64>,
}

impl DirectionSystem {
    pub fn empty(kind: DirectionKind) -> Self {
        DirectionSystem {
            kind,
            vectors: Vec::new(),
            rows: Vec::new(),
            steps: Vec::new(),
            coords: Vec::new(),
            magnitudes: Vec::new(),
        }
    }

    /// A system given directly by orthonormal vectors, each with `z_j = γ_j u_j`.
    pub fn from_vectors(kind: DirectionKind, vectors: Vec<Vec<f64>>, magnitudes: Vec<f64>) -> Self {
        let rows = vectors
            .iter()
            .zip(&magnitudes)
            .map(|(v, g)| v.iter().map(|x| x * g).collect())
            .collect();
        let len = vectors.len();
        DirectionSystem {
            kind,
            vectors,
            rows,
            steps: vec![0; len],
            coords: vec![0; len],
            magnitudes,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `max |G - Id|` for the Gram matrix of the vectors.
    pub fn gram_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (a, va) in self.vectors.iter().enumerate() {
            for (b, vb) in self.vectors.iter().enumerate() {
                let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// `|{t_1, ..., t_n'}|`.
    pub fn distinct_steps(&self) -> usize {
        let mut steps = self.steps.clone();
        steps.sort_unstable();
        steps.dedup();
        steps.len()
    }

    /// True when no `(t_j, i_j)` pair occurs twice.
    pub fn locations_distinct(&self) -> bool {
        let mut pairs: Vec<(usize, usize)> =
            self.steps.iter().copied().zip(self.coords.iter().copied()).collect();
        pairs.sort_unstable();
        pairs.windows(2).all(|w| w[0] != w[1])
    }
}

/// How a candidate `(t, i)` qualifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// `max(‖row M P‖, ‖row M^{-T} Q‖) >= τ`.
    MaxNorm,
    /// `‖row M P‖ · ‖row M^{-T} Q‖ >= τ²`, the bottleneck-scan product.
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFilter {
    AllGates,
    RotationsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowScope {
    /// Only the coordinates rewritten by the step's gate.
    Touched,
    /// Every row of `M^(t)`.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub tau: f64,
    pub criterion: Criterion,
    pub steps: StepFilter,
    pub rows: RowScope,
}

impl ExtractOptions {
    pub fn new(tau: f64) -> Self {
        ExtractOptions {
            tau,
            criterion: Criterion::MaxNorm,
            steps: StepFilter::AllGates,
            rows: RowScope::Touched,
        }
    }

    /// Threshold `sqrt(b/2)` with `b = n log2 n / m`.
    pub fn from_speedup(algorithm: &LinearAlgorithm) -> Self {
        Self::new(default_tau(algorithm))
    }
}

pub fn default_tau(algorithm: &LinearAlgorithm) -> f64 {
    (algorithm.speedup() / 2.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub tau: f64,
    pub overflow: DirectionSystem,
    pub underflow: DirectionSystem,
    /// Projection onto `(span V)^⊥` at termination.
    #[serde(skip)]
    pub p: DMatrix<f64>,
    /// Projection onto `(span U)^⊥` at termination.
    #[serde(skip)]
    pub q: DMatrix<f64>,
    /// Best criterion value seen in the final (failing) round.
    pub final_score: f64,
}

/// Fails unless `M^(m)` is the Walsh-Hadamard matrix.
pub fn check_final_is_wht(algorithm: &LinearAlgorithm) -> Result<()> {
    let n = algorithm.n();
    if !n.is_power_of_two() {
        return Err(Error::NotWalshHadamard(f64::INFINITY));
    }
    let err = (algorithm.final_matrix() - walsh_hadamard_matrix(n)).amax();
    if err > FINAL_MATRIX_TOLERANCE {
        return Err(Error::NotWalshHadamard(err));
    }
    Ok(())
}

pub fn extract_directions(algorithm: &LinearAlgorithm, options: ExtractOptions) -> Result<Extraction> {
    let n = algorithm.n();
    extract_directions_from(
        algorithm,
        options,
        DMatrix::identity(n, n),
        DMatrix::identity(n, n),
    )
}

struct Candidate {
    t: usize,
    i: usize,
    over: RowDVector<f64>,
    under: RowDVector<f64>,
    raw_over: RowDVector<f64>,
    raw_under: RowDVector<f64>,
    score: f64,
}

/// Greedy extraction starting from given complement projections `p`, `q`
/// (identity for a fresh run).
pub fn extract_directions_from(
    algorithm: &LinearAlgorithm,
    options: ExtractOptions,
    mut p: DMatrix<f64>,
    mut q: DMatrix<f64>,
) -> Result<Extraction> {
    if !(options.tau > 0.0 && options.tau.is_finite()) {
        return Err(Error::param(format!("tau must be positive, got {}", options.tau)));
    }
    check_final_is_wht(algorithm)?;
    let n = algorithm.n();
    let mut overflow = DirectionSystem::empty(DirectionKind::Overflow);
    let mut underflow = DirectionSystem::empty(DirectionKind::Underflow);
    let threshold = match options.criterion {
        Criterion::MaxNorm => options.tau,
        Criterion::Product => options.tau * options.tau,
    };

    loop {
        let best = best_candidate(algorithm, &options, &p, &q);
        let final_score = best.as_ref().map_or(0.0, |c| c.score);
        let Some(best) = best.filter(|c| c.score >= threshold) else {
            return Ok(Extraction {
                tau: options.tau,
                overflow,
                underflow,
                p,
                q,
                final_score,
            });
        };
        let (over_norm, under_norm) = (best.over.norm(), best.under.norm());
        let (system, projection, projected, raw, norm) = if over_norm >= under_norm {
            (&mut overflow, &mut p, best.over, best.raw_over, over_norm)
        } else {
            (&mut underflow, &mut q, best.under, best.raw_under, under_norm)
        };
        let v = orthonormalize(projected.transpose() / norm, &system.vectors);
        *projection -= &v * v.transpose();
        let sym = (&*projection + projection.transpose()) * 0.5;
        *projection = sym;

        system.vectors.push(v.iter().copied().collect());
        system.rows.push(raw.iter().copied().collect());
        system.steps.push(best.t);
        system.coords.push(best.i);
        system.magnitudes.push(norm);
        if overflow.len() + underflow.len() >= 2 * n {
            unreachable!("at most n orthonormal vectors per system");
        }
    }
}

/// Re-orthogonalizes a unit vector against `basis` when rounding has
/// left it visibly non-orthogonal.
fn orthonormalize(mut v: DVector<f64>, basis: &[Vec<f64>]) -> DVector<f64> {
    let dots = |v: &DVector<f64>| -> Vec<f64> {
        basis
            .iter()
            .map(|b| b.iter().zip(v.iter()).map(|(x, y)| x * y).sum())
            .collect()
    };
    let d = dots(&v);
    if d.iter().any(|x: &f64| x.abs() > REORTHOGONALIZE_ABOVE) {
        for (b, dot) in basis.iter().zip(d) {
            for (vk, bk) in v.iter_mut().zip(b) {
                *vk -= dot * bk;
            }
        }
        v /= v.norm();
    }
    v
}

fn best_candidate(
    algorithm: &LinearAlgorithm,
    options: &ExtractOptions,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Option<Candidate> {
    let n = algorithm.n();
    let all_rows: Vec<usize> = (0..n).collect();
    let mut best: Option<Candidate> = None;
    let mut state = TrajectoryState::identity(n);
    for (k, gate) in algorithm.gates().iter().enumerate() {
        state.advance(gate).expect("validated gate");
        if options.steps == StepFilter::RotationsOnly && !gate.is_rotation() {
            continue;
        }
        let touched = gate.touched();
        let rows = match options.rows {
            RowScope::Touched => touched.as_slice(),
            RowScope::All => &all_rows[..],
        };
        for &i in rows {
            let raw_over = state.m.row(i).into_owned();
            let raw_under = state.minv_t.row(i).into_owned();
            let over = &raw_over * p;
            let under = &raw_under * q;
            let (a, b) = (over.norm(), under.norm());
            let score = match options.criterion {
                Criterion::MaxNorm => a.max(b),
                Criterion::Product => a * b,
            };
            // strict comparison keeps the smallest (t, i) on ties
            if best.as_ref().is_none_or(|c| score > c.score) {
                best = Some(Candidate {
                    t: k + 1,
                    i,
                    over,
                    under,
                    raw_over,
                    raw_under,
                    score,
                });
            }
        }
    }
    best
}

/// The underflow system completed to an orthonormal basis of `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendedBasis {
    pub n_prime: usize,
    /// `z_1..z_n`: extracted rows, then standard basis vectors.
    pub z_vectors: Vec<Vec<f64>>,
    pub u_vectors: Vec<Vec<f64>>,
    /// `γ_j = ‖Q_j z_j‖`.
    pub gammas: Vec<f64>,
    /// Coordinate of each added standard basis vector.
    pub added_coords: Vec<usize>,
}

/// Weights closer than this are treated as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Completes the underflow system with standard basis vectors `e_i`, each
/// time choosing the coordinate least covered by the current `u`'s, so that
/// `γ_{j+1} >= sqrt(1 - j/n)`.
pub fn extend_basis(underflow: &DirectionSystem, n: usize) -> Result<ExtendedBasis> {
    let n_prime = underflow.len();
    if n_prime > n {
        return Err(Error::param(format!("system of size {n_prime} exceeds n = {n}")));
    }
    if underflow.vectors.iter().chain(&underflow.rows).any(|v| v.len() != n) {
        return Err(Error::param(format!("direction vectors must have length {n}")));
    }
    let mut u_vectors = underflow.vectors.clone();
    let mut z_vectors = underflow.rows.clone();
    let mut gammas = underflow.magnitudes.clone();
    let mut added_coords = Vec::with_capacity(n - n_prime);
    let mut coverage = vec![0.0f64; n];
    for u in &u_vectors {
        for (c, x) in coverage.iter_mut().zip(u) {
            *c += x * x;
        }
    }
    for _ in n_prime..n {
        let mut i0 = 0;
        for i in 1..n {
            if coverage[i] < coverage[i0] - TIE_TOLERANCE {
                i0 = i;
            }
        }
        let mut z = vec![0.0; n];
        z[i0] = 1.0;
        // Q z = e_i0 - Σ u u(i0), twice for stability
        let mut w = z.clone();
        for _ in 0..2 {
            for u in &u_vectors {
                let dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
                for (wk, uk) in w.iter_mut().zip(u) {
                    *wk -= dot * uk;
                }
            }
        }
        let gamma = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gamma < 1e-12 {
            return Err(Error::DegenerateProjection(gamma));
        }
        let u: Vec<f64> = w.iter().map(|x| x / gamma).collect();
        for (c, x) in coverage.iter_mut().zip(&u) {
            *c += x * x;
        }
        u_vectors.push(u);
        z_vectors.push(z);
        gammas.push(gamma);
        added_coords.push(i0);
    }
    Ok(ExtendedBasis {
        n_prime,
        z_vectors,
        u_vectors,
        gammas,
        added_coords,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeBound {
    /// `Σ_j log2 γ_j`, i.e. `log2(vol / ε^n)` for the extended basis.
    pub log_volume: f64,
    /// `n' log2 sqrt(b/2) + Σ_{j=n'+1}^{n} log2 sqrt(1 - (j-1)/n)`.
    pub closed_form: f64,
}

pub fn uncertainty_volume_log(basis: &ExtendedBasis, b: f64, n_prime: usize) -> VolumeBound {
    let n = basis.gammas.len();
    let log_volume = basis.gammas.iter().map(|g| g.log2()).sum();
    let head = n_prime as f64 * (b / 2.0).sqrt().log2();
    let tail: f64 = (n_prime + 1..=n)
        .map(|j| (1.0 - (j - 1) as f64 / n as f64).sqrt().log2())
        .sum();
    VolumeBound {
        log_volume,
        closed_form: head + tail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{
        build_inverse_bottleneck_fixture, build_random, build_scaled_bottleneck_fixture, build_wht,
    };
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn wht_has_no_directions() {
        for n in [4, 8, 16] {
            let ex = extract_directions(&build_wht(n).unwrap(), ExtractOptions::new(2.0)).unwrap();
            assert!(ex.overflow.is_empty() && ex.underflow.is_empty());
            assert!((ex.final_score - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaled_fixture_overflow() {
        let alg = build_scaled_bottleneck_fixture(8, 4.0, 4).unwrap();
        let ex = extract_directions(&alg, ExtractOptions::new(2.0)).unwrap();
        assert_eq!(ex.overflow.len(), 4);
        assert!(ex.underflow.is_empty());
        assert!(ex.overflow.magnitudes.iter().all(|a| (a - 4.0).abs() < 1e-8));
        assert_eq!(ex.overflow.steps, vec![1, 2, 3, 4]);
        assert_eq!(ex.overflow.coords, vec![0, 1, 2, 3]);
        assert!(ex.overflow.gram_deviation() < 1e-8);
        assert!(ex.overflow.locations_distinct());
    }

    #[test]
    fn inverse_fixture_underflow() {
        let alg = build_inverse_bottleneck_fixture(8, 4.0, 4).unwrap();
        let ex = extract_directions(&alg, ExtractOptions::new(2.0)).unwrap();
        assert!(ex.overflow.is_empty());
        assert_eq!(ex.underflow.len(), 4);
        assert!(ex.underflow.magnitudes.iter().all(|g| (g - 4.0).abs() < 1e-8));
    }

    #[test]
    fn product_criterion_and_rotation_filter_miss_diagonal_scaling() {
        // diagonal rows have ‖row M‖ ‖row M^{-T}‖ = 1 whatever the scale
        let alg = build_scaled_bottleneck_fixture(8, 4.0, 4).unwrap();
        let mut opts = ExtractOptions::new(2.0);
        opts.criterion = Criterion::Product;
        let ex = extract_directions(&alg, opts).unwrap();
        assert!(ex.overflow.is_empty());
        let mut opts = ExtractOptions::new(2.0);
        opts.steps = StepFilter::RotationsOnly;
        assert!(extract_directions(&alg, opts).unwrap().overflow.is_empty());
        let mut opts = ExtractOptions::new(2.0);
        opts.rows = RowScope::All;
        assert_eq!(extract_directions(&alg, opts).unwrap().overflow.len(), 4);
    }

    #[test]
    fn re_extraction_is_empty() {
        let alg = build_inverse_bottleneck_fixture(16, 4.0, 8).unwrap();
        let opts = ExtractOptions::new(2.0);
        let ex = extract_directions(&alg, opts).unwrap();
        let again = extract_directions_from(&alg, opts, ex.p.clone(), ex.q.clone()).unwrap();
        assert!(again.overflow.is_empty() && again.underflow.is_empty());
    }

    #[test]
    fn rejects_non_wht_and_bad_tau() {
        let alg = build_random(8, 20, 1, true).unwrap();
        assert!(matches!(
            extract_directions(&alg, ExtractOptions::new(2.0)),
            Err(Error::NotWalshHadamard(_))
        ));
        let wht = build_wht(8).unwrap();
        assert!(extract_directions(&wht, ExtractOptions::new(0.0)).is_err());
    }

    #[test]
    fn extend_empty_system() {
        let basis = extend_basis(&DirectionSystem::empty(DirectionKind::Underflow), 4).unwrap();
        assert_eq!(basis.gammas, vec![1.0; 4]);
        assert_eq!(basis.added_coords, vec![0, 1, 2, 3]);
        let vol = uncertainty_volume_log(&basis, 1.0, 0);
        assert_eq!(vol.log_volume, 0.0);
        let expected: f64 = (1..=4).map(|j| (1.0 - (j - 1) as f64 / 4.0).sqrt().log2()).sum();
        assert!((vol.closed_form - expected).abs() < 1e-15);
        assert!(vol.closed_form <= 0.0);
    }

    #[test]
    fn extend_axis_system() {
        let sys = DirectionSystem::from_vectors(
            DirectionKind::Underflow,
            vec![vec![1.0, 0.0, 0.0, 0.0]],
            vec![3.0],
        );
        let basis = extend_basis(&sys, 4).unwrap();
        assert_eq!(basis.added_coords[0], 1);
        assert_eq!(basis.gammas[1], 1.0);
    }

    #[test]
    fn extend_diagonal_system() {
        let h = FRAC_1_SQRT_2;
        let sys = DirectionSystem::from_vectors(DirectionKind::Underflow, vec![vec![h, h]], vec![1.0]);
        let basis = extend_basis(&sys, 2).unwrap();
        assert_eq!(basis.added_coords, vec![0]);
        assert!((basis.gammas[1] - h).abs() < 1e-15);
        assert!((basis.gammas[1] - (1.0f64 - 0.5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn extend_rejects_oversized() {
        let sys = DirectionSystem::from_vectors(
            DirectionKind::Underflow,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0; 3],
        );
        assert!(extend_basis(&sys, 2).is_err());
    }
}
