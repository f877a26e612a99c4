//! The quasi-entropy potential.
//!
//! For equally shaped `A`, `B`:
//!
//! ```text
//! Φ(A, B)   = Σ_{i,j} -A(i,j) B(i,j) log2 |A(i,j) B(i,j)|
//! Φ^C(A, B) = Σ_i Σ_{pairs (2j, 2j+1)} -s log2 |s|,  s = A(i,2j)B(i,2j) + A(i,2j+1)B(i,2j+1)
//! Φ_{P,Q}(M) = Φ(M P, M^{-T} Q)
//! ```
//!
//! `Φ(F) = n log2 n` for the Walsh-Hadamard matrix and `Φ(Id) = 0`. Since a
//! gate rewrites at most two rows of both `M` and `M^{-T}`, the potential of a
//! trajectory is tracked row by row in O(n) per gate.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gate::{LinearAlgorithm, Touched};
use crate::linalg::rows_frobenius_sq;

/// Products below this magnitude count as exact zeros.
pub const ZERO_PRODUCT: f64 = 1e-300;

/// Full recomputation period of [`trace_potential`].
pub const RESYNC_PERIOD: usize = 1000;

/// Allowed disagreement between incremental and full potential.
pub const RESYNC_TOLERANCE: f64 = 1e-7;

#[inline]
pub fn xlogx_term(s: f64) -> f64 {
    if s.abs() < ZERO_PRODUCT {
        0.0
    } else {
        -s * s.abs().log2()
    }
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `Φ(A, B)`.
pub fn phi(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_shapes(a, b)?;
    Ok(a.iter().zip(b.iter()).map(|(&x, &y)| xlogx_term(x * y)).sum())
}

/// `Φ` on vectors.
pub fn phi_vectors(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(x.iter().zip(y).map(|(&a, &b)| xlogx_term(a * b)).sum())
}

/// `Φ^C(A, B)`, pairing adjacent columns `(2j, 2j+1)`.
pub fn phi_complex(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_shapes(a, b)?;
    if !a.ncols().is_multiple_of(2) {
        return Err(Error::param(format!(
            "complex quasi-entropy needs an even column count, got {}",
            a.ncols()
        )));
    }
    let mut total = 0.0;
    for i in 0..a.nrows() {
        for j in (0..a.ncols()).step_by(2) {
            let s = a[(i, j)] * b[(i, j)] + a[(i, j + 1)] * b[(i, j + 1)];
            total += xlogx_term(s);
        }
    }
    Ok(total)
}

/// `Φ_{P,Q}(M) = Φ(M P, M^{-T} Q)`; the caller supplies a consistent `M^{-T}`.
pub fn phi_pq(
    m: &DMatrix<f64>,
    minv_t: &DMatrix<f64>,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<f64> {
    check_shapes(m, minv_t)?;
    if p.nrows() != m.ncols() || q.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch {
            left: m.shape(),
            right: p.shape(),
        });
    }
    phi(&(m * p), &(minv_t * q))
}

fn row_phi(a: &DMatrix<f64>, b: &DMatrix<f64>, row: usize) -> f64 {
    a.row(row)
        .iter()
        .zip(b.row(row).iter())
        .map(|(&x, &y)| xlogx_term(x * y))
        .sum()
}

/// `Φ_{P,Q}(M^(t))` along a trajectory with the per-gate change bound.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialTrace {
    /// `Φ_{P,Q}(M^(t))` for `t = 0..=m`.
    pub values: Vec<f64>,
    /// `|Φ(t) - Φ(t-1)|` for steps `t = 1..=m` (index `t - 1`).
    pub per_step_delta: Vec<f64>,
    /// Change bound on the touched rows `I`:
    /// `(‖A_I‖_F ‖B_I‖_F + ‖A'_I‖_F ‖B'_I‖_F) log2 |I|`, before and after.
    pub per_step_bound: Vec<f64>,
    pub touched: Vec<Touched>,
}

impl PotentialTrace {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("trace has t = 0")
    }

    /// Largest `delta - bound` over all steps; nonpositive when every step
    /// respects its bound.
    pub fn worst_bound_excess(&self) -> f64 {
        self.per_step_delta
            .iter()
            .zip(&self.per_step_bound)
            .map(|(d, b)| d - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tracks `Φ_{P,Q}(M^(t))` for all `t`, updating only the touched rows and
/// resynchronizing with a full sum every [`RESYNC_PERIOD`] gates.
pub fn trace_potential(
    algorithm: &LinearAlgorithm,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<PotentialTrace> {
    let n = algorithm.n();
    for mat in [p, q] {
        if mat.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                left: (n, n),
                right: mat.shape(),
            });
        }
    }
    // M^(0) = Id, so A = P and B = Q; gates then act on the rows of both.
    let mut a = p.clone();
    let mut b = q.clone();
    let mut rows: Vec<f64> = (0..n).map(|r| row_phi(&a, &b, r)).collect();
    let mut current: f64 = rows.iter().sum();

    let m = algorithm.m();
    let mut values = Vec::with_capacity(m + 1);
    let mut per_step_delta = Vec::with_capacity(m);
    let mut per_step_bound = Vec::with_capacity(m);
    let mut touched = Vec::with_capacity(m);
    values.push(current);

    for (k, gate) in algorithm.gates().iter().enumerate() {
        let t = k + 1;
        let idx = gate.touched();
        let rows_i = idx.as_slice();
        let before = (rows_frobenius_sq(&a, rows_i) * rows_frobenius_sq(&b, rows_i)).sqrt();
        gate.act_on_rows(&mut a);
        gate.act_on_rows_inv_t(&mut b);
        let after = (rows_frobenius_sq(&a, rows_i) * rows_frobenius_sq(&b, rows_i)).sqrt();

        let mut change = 0.0;
        for &r in rows_i {
            let fresh = row_phi(&a, &b, r);
            change += fresh - rows[r];
            rows[r] = fresh;
        }
        current += change;
        if t % RESYNC_PERIOD == 0 {
            let full: f64 = rows.iter().sum();
            let drift = (full - current).abs();
            if drift > RESYNC_TOLERANCE {
                return Err(Error::PotentialDrift { t, drift });
            }
            current = full;
        }
        per_step_delta.push(change.abs());
        per_step_bound.push((before + after) * (rows_i.len() as f64).log2());
        touched.push(idx);
        values.push(current);
    }
    Ok(PotentialTrace {
        values,
        per_step_delta,
        per_step_bound,
        touched,
    })
}

/// Convenience for `P = Q = Id`.
pub fn trace_potential_identity(algorithm: &LinearAlgorithm) -> Result<PotentialTrace> {
    let id = DMatrix::identity(algorithm.n(), algorithm.n());
    trace_potential(algorithm, &id, &id)
}

/// Sizes of a randomized check of the three potential inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    pub seed: u64,
    /// Random unit pairs for the range bound.
    pub unit_pairs: usize,
    /// Largest length of a unit pair.
    pub unit_max_len: usize,
    /// Random instances for each matrix inequality.
    pub instances: usize,
    /// Largest row count `a`.
    pub max_rows: usize,
    /// Largest column count.
    pub max_cols: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            seed: 0,
            unit_pairs: 10_000,
            unit_max_len: 64,
            instances: 1_000,
            max_rows: 16,
            max_cols: 16,
        }
    }
}

/// Worst case of one inequality over a sweep; `slack = rhs - lhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalitySweep {
    pub trials: usize,
    pub min_slack: f64,
    pub tolerance: f64,
}

impl InequalitySweep {
    fn new(tolerance: f64) -> Self {
        InequalitySweep { trials: 0, min_slack: f64::INFINITY, tolerance }
    }

    fn record(&mut self, slack: f64) {
        self.trials += 1;
        self.min_slack = self.min_slack.min(slack);
    }

    pub fn holds(&self) -> bool {
        self.min_slack >= -self.tolerance
    }
}

/// Sharp bound on `|Φ(x, y)|` over unit `x, y ∈ R^a`.
///
/// `Σ |x_i y_i| <= 1` and `s log2 s` is convex with its minimum at
/// `s = 1/e`, so the extremes are `±log2 a` once `a >= 3`, but
/// `±2 log2(e) / e ≈ ±1.0615` for `a = 2`, beyond `log2 2`.
pub fn unit_pair_bound(a: usize) -> f64 {
    let e = std::f64::consts::E;
    if (a as f64) < e {
        a as f64 * e.log2() / e
    } else {
        (a as f64).log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepReport {
    /// `|Φ(x, y)| <= log2 a` for unit `x, y`, as commonly stated; fails near
    /// the extremes for `a = 2`.
    pub range_stated: InequalitySweep,
    /// `|Φ(x, y)| <=` [`unit_pair_bound`].
    pub range: InequalitySweep,
    /// `|Φ(A, B) - Φ(UA, UB)| <= ‖A‖‖B‖ log2 a`, `U` orthogonal.
    pub orthogonal: InequalitySweep,
    /// `|Φ(A, B) - Φ(DA, D^{-T}B)| <= (‖A‖‖B‖ + ‖DA‖‖D^{-T}B‖) log2 a`.
    pub nonsingular: InequalitySweep,
}

impl SweepReport {
    /// All inequalities, with the sharp range bound.
    pub fn holds(&self) -> bool {
        self.range.holds() && self.orthogonal.holds() && self.nonsingular.holds()
    }
}

/// Checks the potential inequalities on Gaussian random instances.
pub fn sweep_inequalities(config: &SweepConfig) -> SweepReport {
    use crate::linalg::{gaussian_matrix, random_orthogonal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut range_stated = InequalitySweep::new(1e-9);
    let mut range = InequalitySweep::new(1e-9);
    for _ in 0..config.unit_pairs {
        let a = rng.random_range(2..=config.unit_max_len.max(2));
        let x = gaussian_matrix(a, 1, &mut rng).normalize();
        let y = gaussian_matrix(a, 1, &mut rng).normalize();
        let value = phi(&x, &y).expect("same shape").abs();
        range_stated.record((a as f64).log2() - value);
        range.record(unit_pair_bound(a) - value);
    }

    let mut orthogonal = InequalitySweep::new(1e-7);
    let mut nonsingular = InequalitySweep::new(1e-7);
    for _ in 0..config.instances {
        let a = rng.random_range(2..=config.max_rows.max(2));
        let cols = rng.random_range(1..=config.max_cols.max(1));
        let log_a = (a as f64).log2();
        let x = gaussian_matrix(a, cols, &mut rng);
        let y = gaussian_matrix(a, cols, &mut rng);
        let base = phi(&x, &y).expect("same shape");
        let norms = x.norm() * y.norm();

        let u = random_orthogonal(a, &mut rng);
        let rotated = phi(&(&u * &x), &(&u * &y)).expect("same shape");
        orthogonal.record(norms * log_a - (base - rotated).abs());

        let (d, d_inv_t) = loop {
            let d = gaussian_matrix(a, a, &mut rng);
            if let Some(inv) = d.clone().try_inverse() {
                break (d, inv.transpose());
            }
        };
        let (dx, dy) = (&d * &x, &d_inv_t * &y);
        let moved = phi(&dx, &dy).expect("same shape");
        nonsingular.record((norms + dx.norm() * dy.norm()) * log_a - (base - moved).abs());
    }
    SweepReport {
        range_stated,
        range,
        orthogonal,
        nonsingular,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{
        build_dft_real, build_random, build_scaled_bottleneck_fixture, build_wht, dft_real_matrix,
        walsh_hadamard_matrix,
    };
    use crate::linalg::{coordinate_projection, random_orthogonal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    #[test]
    fn small_sweep_holds() {
        let config = SweepConfig { unit_pairs: 500, instances: 100, ..SweepConfig::default() };
        let report = sweep_inequalities(&config);
        assert!(report.holds(), "{report:?}");
        assert_eq!(report.orthogonal.trials, 100);
    }

    #[test]
    fn two_term_potential_exceeds_one() {
        // x1 y1 = x2 y2 = ±1/e with unit x, y
        let s = (-1.0f64).exp();
        let d = (2.0 * s).acos();
        let (a, b) = ((FRAC_PI_2 + d) / 2.0, (FRAC_PI_2 - d) / 2.0);
        let x = [a.cos(), a.sin()];
        let high = phi_vectors(&x, &[b.cos(), b.sin()]).unwrap();
        let low = phi_vectors(&x, &[-b.cos(), -b.sin()]).unwrap();
        assert!(high > 1.06 && low < -1.06);
        assert!((high - unit_pair_bound(2)).abs() < 1e-12);
        assert!((low + unit_pair_bound(2)).abs() < 1e-12);
        assert_eq!(unit_pair_bound(8), 3.0);
    }

    #[test]
    fn phi_examples() {
        let f = walsh_hadamard_matrix(8);
        assert!((phi(&f, &f).unwrap() - 24.0).abs() < 1e-12);
        let id = DMatrix::<f64>::identity(5, 5);
        assert_eq!(phi(&id, &id).unwrap(), 0.0);
        let h = FRAC_1_SQRT_2;
        assert!((phi_vectors(&[h, h], &[h, h]).unwrap() - 1.0).abs() < 1e-15);
        assert!(phi(&id, &DMatrix::identity(4, 4)).is_err());
    }

    #[test]
    fn phi_complex_examples() {
        let f = dft_real_matrix(8);
        assert!((phi_complex(&f, &f).unwrap() - 16.0).abs() < 1e-12);
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(phi_complex(&id, &id).unwrap(), 0.0);
        let h = FRAC_1_SQRT_2;
        let row = DMatrix::from_row_slice(1, 2, &[h, h]);
        assert!(phi_complex(&row, &row).unwrap().abs() < 1e-15);
        let odd = DMatrix::<f64>::identity(3, 3);
        assert!(phi_complex(&odd, &odd).is_err());
    }

    #[test]
    fn phi_pq_examples() {
        let f = walsh_hadamard_matrix(8);
        let id8 = DMatrix::identity(8, 8);
        assert!((phi_pq(&f, &f, &id8, &id8).unwrap() - 24.0).abs() < 1e-12);
        assert_eq!(phi_pq(&id8, &id8, &id8, &id8).unwrap(), 0.0);
        let id4 = DMatrix::identity(4, 4);
        let p = coordinate_projection(4, &[0, 1]);
        assert_eq!(phi_pq(&id4, &id4, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn trace_examples() {
        let tr = trace_potential_identity(&build_wht(8).unwrap()).unwrap();
        assert_eq!(tr.values.len(), 25);
        assert_eq!(tr.values[0], 0.0);
        assert!((tr.final_value() - 24.0).abs() < 1e-9);
        assert!(tr.worst_bound_excess() <= 1e-7);

        let fixture = build_scaled_bottleneck_fixture(4, 4.0, 2).unwrap();
        let tr = trace_potential_identity(&fixture).unwrap();
        assert!((tr.final_value() - 8.0).abs() < 1e-9);
        assert!(tr.worst_bound_excess() <= 1e-7);
    }

    #[test]
    fn trace_matches_dense_evaluation() {
        let alg = build_random(6, 80, 17, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = crate::linalg::gaussian_matrix(6, 6, &mut rng);
        let q = crate::linalg::gaussian_matrix(6, 6, &mut rng);
        let tr = trace_potential(&alg, &p, &q).unwrap();
        for t in [0, 1, 17, 40, 80] {
            let (m, minv_t) = alg.matrices_at(t).unwrap();
            let dense = phi_pq(&m, &minv_t, &p, &q).unwrap();
            assert!((dense - tr.values[t]).abs() < 1e-9, "t={t}");
        }
        assert!(tr.worst_bound_excess() <= 1e-7);
    }

    #[test]
    fn long_trace_resynchronizes() {
        // m > RESYNC_PERIOD exercises the periodic full recomputation
        let alg = build_random(8, 2500, 4, true).unwrap();
        let tr = trace_potential_identity(&alg).unwrap();
        let (m, minv_t) = alg.matrices_at(alg.m()).unwrap();
        assert!((phi(&m, &minv_t).unwrap() - tr.final_value()).abs() < 1e-7);
    }

    #[test]
    fn complex_potential_of_built_dft() {
        let alg = build_dft_real(8).unwrap();
        let (m, minv_t) = alg.matrices_at(alg.m()).unwrap();
        assert!((phi_complex(&m, &minv_t).unwrap() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn scale_invariance() {
        let f = walsh_hadamard_matrix(8);
        for gamma in [3.0, -0.25, 1e3] {
            let m = &f * gamma;
            let minv_t = m.clone().try_inverse().unwrap().transpose();
            assert!((phi(&m, &minv_t).unwrap() - 24.0).abs() < 1e-9);
        }
    }

    #[test]
    fn orthogonal_change_bound_single_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = crate::linalg::gaussian_matrix(4, 3, &mut rng);
        let b = crate::linalg::gaussian_matrix(4, 3, &mut rng);
        let u = random_orthogonal(4, &mut rng);
        let lhs = (phi(&a, &b).unwrap() - phi(&(&u * &a), &(&u * &b)).unwrap()).abs();
        assert!(lhs <= a.norm() * b.norm() * 2.0 + 1e-7);
    }
}
