//! Ill-conditioned bottleneck scans.
//!
//! The gate list is cut into consecutive windows of `R` gates (the last one
//! padded with identity steps). A window touches at most `2R` rows `I`, and
//! the potential can only change by
//!
//! ```text
//! |ΔΦ_window| <= (w(M^(start)) + w(M^(start+R))) log2(2R)
//! w(M) = ‖(M P)_I‖_F ‖(M^{-T} Q)_I‖_F
//! ```
//!
//! so a large total change `Φ_{P,Q}(M^(m)) - Φ_{P,Q}(Id)` spread over few
//! gates forces some window to have a large norm product. [`scan_bottlenecks`]
//! finds that window and compares it with
//! `R (Φ_{P,Q}(M^(m)) - Φ_{P,Q}(Id)) / (m log2 2R)`;
//! [`verify_theorem1_chain`] checks every link of the argument separately.
//! [`verify_fourier_projection_bound`] evaluates the potential of the
//! Walsh-Hadamard matrix after low-trace projections against explicit
//! constants.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::builders::walsh_hadamard_matrix;
use crate::entropy::{phi, trace_potential};
use crate::error::{Error, Result};
use crate::gate::LinearAlgorithm;
use crate::linalg::{is_psd_contraction, rows_frobenius_sq};

/// Slack tolerance for the scan and chain inequalities.
pub const SCAN_TOLERANCE: f64 = 1e-7;

/// Slack tolerance for the projection bound.
pub const LEMMA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    /// Window size `R`, `1 <= R <= n/2`.
    pub window: usize,
    /// With `R = 1`, also score windows whose gate is a constant
    /// (`i_t = j_t`). Constant gates never change the potential, so the
    /// default skips them.
    pub include_constants: bool,
}

impl ScanOptions {
    pub fn new(window: usize) -> Self {
        ScanOptions {
            window,
            include_constants: false,
        }
    }
}

/// One window of `R` consecutive gates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    /// Index of the window's first gate (0-based), a multiple of `R`.
    pub start: usize,
    /// Step whose matrix closes the window, `start + R` (padded numbering).
    pub t: usize,
    /// Union of the rows touched by the window's real gates, sorted.
    pub rows: Vec<usize>,
    /// `sqrt(‖(M P)_I‖_F² ‖(M^{-T} Q)_I‖_F²)` at `M^(start)`.
    pub before: f64,
    /// Same product at `M^(t)`.
    pub after: f64,
    pub phi_before: f64,
    pub phi_after: f64,
    pub all_rotations: bool,
}

impl WindowRecord {
    pub fn delta(&self) -> f64 {
        (self.phi_after - self.phi_before).abs()
    }
}

/// Replays the algorithm once and records every window of `r` gates.
pub fn window_profile(
    algorithm: &LinearAlgorithm,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: usize,
) -> Result<Vec<WindowRecord>> {
    check_window(algorithm, r)?;
    let potential = trace_potential(algorithm, p, q)?;
    let m = algorithm.m();
    let padded = m.div_ceil(r) * r;
    let gates = algorithm.gates();

    let mut a = p.clone();
    let mut b = q.clone();
    let mut windows = Vec::with_capacity(padded / r);
    for start in (0..padded).step_by(r) {
        let real = &gates[start.min(m)..(start + r).min(m)];
        let mut rows: Vec<usize> = real
            .iter()
            .flat_map(|g| g.touched().as_slice().to_vec())
            .collect();
        rows.sort_unstable();
        rows.dedup();
        let product = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            (rows_frobenius_sq(a, &rows) * rows_frobenius_sq(b, &rows)).sqrt()
        };
        let before = product(&a, &b);
        for gate in real {
            gate.act_on_rows(&mut a);
            gate.act_on_rows_inv_t(&mut b);
        }
        let after = product(&a, &b);
        windows.push(WindowRecord {
            start,
            t: start + r,
            before,
            after,
            phi_before: potential.values[start.min(m)],
            phi_after: potential.values[(start + r).min(m)],
            all_rotations: !real.is_empty() && real.iter().all(|g| g.is_rotation()),
            rows,
        });
    }
    Ok(windows)
}

fn check_window(algorithm: &LinearAlgorithm, r: usize) -> Result<()> {
    let max = algorithm.n() / 2;
    if r == 0 || r > max {
        return Err(Error::param(format!("window R must be in 1..={max}, got {r}")));
    }
    if algorithm.m() == 0 {
        return Err(Error::param("algorithm has no gates"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanStep {
    pub t: usize,
    pub rows: Vec<usize>,
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BottleneckReport {
    #[serde(rename = "R")]
    pub r: usize,
    pub m: usize,
    pub padded_m: usize,
    /// Smallest step attaining the maximum; `None` when no window qualifies.
    pub t_star: Option<usize>,
    /// `I_{t*}`.
    pub rows: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub phi_initial: f64,
    pub phi_final: f64,
    pub per_step: Vec<ScanStep>,
}

impl BottleneckReport {
    pub fn holds(&self) -> bool {
        self.slack >= -SCAN_TOLERANCE
    }
}

/// `R (Φ_{P,Q}(M^(m)) - Φ_{P,Q}(Id)) / (m log2 2R)`.
pub fn theorem_bound(r: usize, phi_initial: f64, phi_final: f64, m: usize) -> f64 {
    r as f64 * (phi_final - phi_initial) / (m as f64 * (2.0 * r as f64).log2())
}

pub fn scan_bottlenecks(
    algorithm: &LinearAlgorithm,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    options: ScanOptions,
) -> Result<BottleneckReport> {
    let r = options.window;
    let windows = window_profile(algorithm, p, q, r)?;
    let m = algorithm.m();
    let phi_initial = windows[0].phi_before;
    let phi_final = windows.last().expect("m >= 1").phi_after;

    let per_step: Vec<ScanStep> = windows
        .iter()
        .filter(|w| r > 1 || options.include_constants || w.all_rotations)
        .map(|w| ScanStep {
            t: w.t,
            rows: w.rows.clone(),
            lhs: w.after,
        })
        .collect();
    let mut best: Option<&ScanStep> = None;
    for step in &per_step {
        if best.is_none_or(|b| step.lhs > b.lhs) {
            best = Some(step);
        }
    }
    let lhs = best.map_or(0.0, |s| s.lhs);
    let rhs = theorem_bound(r, phi_initial, phi_final, m);
    Ok(BottleneckReport {
        r,
        m,
        padded_m: windows.len() * r,
        t_star: best.map(|s| s.t),
        rows: best.map(|s| s.rows.clone()).unwrap_or_default(),
        lhs,
        rhs,
        slack: lhs - rhs,
        phi_initial,
        phi_final,
        per_step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowLink {
    pub start: usize,
    pub delta: f64,
    pub bound: f64,
    pub slack: f64,
}

/// One inequality `lhs <= rhs` (or `>=`, see field docs) with its slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Link {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    #[serde(rename = "R")]
    pub r: usize,
    pub windows: usize,
    /// `|Φ(M^(m')) - Φ(M^(0))| <= Σ_windows |ΔΦ|`.
    pub triangle: Link,
    /// `|ΔΦ_window| <= (before + after) log2 2R` for every window.
    pub per_window: Vec<WindowLink>,
    pub min_window_slack: f64,
    /// `max_window max(before, after) >= |Φ(M^(m')) - Φ(M^(0))| / (2 (m'/R) log2 2R)`.
    pub average: Link,
    /// The scan's own inequality.
    pub theorem: Link,
}

impl ChainReport {
    pub fn min_slack(&self) -> f64 {
        self.triangle
            .slack
            .min(self.min_window_slack)
            .min(self.average.slack)
            .min(self.theorem.slack)
    }

    pub fn holds(&self) -> bool {
        self.min_slack() >= -SCAN_TOLERANCE
    }
}

/// Checks each step of the window argument numerically.
pub fn verify_theorem1_chain(
    algorithm: &LinearAlgorithm,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: usize,
) -> Result<ChainReport> {
    let windows = window_profile(algorithm, p, q, r)?;
    let log_2r = (2.0 * r as f64).log2();
    let total = (windows.last().expect("m >= 1").phi_after - windows[0].phi_before).abs();

    let sum_deltas: f64 = windows.iter().map(WindowRecord::delta).sum();
    let triangle = Link {
        lhs: total,
        rhs: sum_deltas,
        slack: sum_deltas - total,
    };
    let per_window: Vec<WindowLink> = windows
        .iter()
        .map(|w| {
            let bound = (w.before + w.after) * log_2r;
            WindowLink {
                start: w.start,
                delta: w.delta(),
                bound,
                slack: bound - w.delta(),
            }
        })
        .collect();
    let min_window_slack = per_window
        .iter()
        .map(|l| l.slack)
        .fold(f64::INFINITY, f64::min);
    let peak = windows
        .iter()
        .map(|w| w.before.max(w.after))
        .fold(0.0, f64::max);
    let required = total / (2.0 * windows.len() as f64 * log_2r);
    let average = Link {
        lhs: peak,
        rhs: required,
        slack: peak - required,
    };
    let scan = scan_bottlenecks(algorithm, p, q, ScanOptions::new(r))?;
    Ok(ChainReport {
        r,
        windows: windows.len(),
        triangle,
        per_window,
        min_window_slack,
        average,
        theorem: Link {
            lhs: scan.lhs,
            rhs: scan.rhs,
            slack: scan.slack,
        },
    })
}

/// Upper-bound constant term for the potential of the identity after
/// projections:
/// `tr P̂ + tr Q̂ + ‖P̂‖_F² + ‖Q̂‖_F² + (‖P̂‖_F² + ‖Q̂‖_F²) log2 n`.
///
/// The diagonal part contributes `tr P̂ + tr Q̂ + ‖P̂‖_F² + ‖Q̂‖_F²` and the
/// off-diagonal part at most `(μ_P + μ_Q) log2 n` with
/// `μ = Σ_{i≠j} P(i,j)² <= ‖P̂‖_F²`. The diagonal estimate uses
/// `-log2(1 - x) <= x + x²`, which undercounts by a factor `log2 e` for
/// small `x`; for orthogonal projections (`tr P̂ = ‖P̂‖_F²`) the
/// `‖P̂‖_F² log2 n` term absorbs the difference once `n >= 2`.
pub fn upper_bound_constant(tr_p: f64, tr_q: f64, alpha2: f64, beta2: f64, n: usize) -> f64 {
    tr_p + tr_q + alpha2 + beta2 + (alpha2 + beta2) * (n as f64).log2()
}

/// Lower bound `n log2 n - (tr P̂ + tr Q̂) log2 n - (α² + β²)(147 + 30 log2 n)`.
pub fn lower_bound(n: usize, tr_p: f64, tr_q: f64, alpha2: f64, beta2: f64) -> f64 {
    let log_n = (n as f64).log2();
    n as f64 * log_n - (tr_p + tr_q) * log_n - (alpha2 + beta2) * (147.0 + 30.0 * log_n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperBoundCheck {
    /// `Φ(P, Q)`.
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaFafterprojReport {
    pub n: usize,
    #[serde(rename = "trP_hat")]
    pub tr_p_hat: f64,
    #[serde(rename = "trQ_hat")]
    pub tr_q_hat: f64,
    pub alpha2: f64,
    pub beta2: f64,
    /// `Φ(F P, F^{-T} Q)`.
    pub lower_lhs: f64,
    pub lower_rhs: f64,
    pub lower_slack: f64,
    pub upper: Option<UpperBoundCheck>,
}

impl LemmaFafterprojReport {
    pub fn holds(&self) -> bool {
        self.lower_slack >= -LEMMA_TOLERANCE
            && self
                .upper
                .as_ref()
                .is_none_or(|u| u.slack >= -LEMMA_TOLERANCE)
    }
}

/// Evaluates both projection inequalities for `F = F_WHT(n)`. The upper
/// bound requires `P`, `Q` to be PSD contractions and is skipped when
/// `check_upper` is false.
pub fn verify_fourier_projection_bound(
    n: usize,
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    check_upper: bool,
) -> Result<LemmaFafterprojReport> {
    if !n.is_power_of_two() || n < 2 {
        return Err(Error::param(format!("n must be a power of two >= 2, got {n}")));
    }
    for mat in [p, q] {
        if mat.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                left: (n, n),
                right: mat.shape(),
            });
        }
    }
    let id = DMatrix::<f64>::identity(n, n);
    let p_hat = &id - p;
    let q_hat = &id - q;
    let (tr_p, tr_q) = (p_hat.trace(), q_hat.trace());
    let (alpha2, beta2) = (p_hat.norm_squared(), q_hat.norm_squared());

    // the Walsh-Hadamard matrix is symmetric and orthogonal: F^{-T} = F
    let f = walsh_hadamard_matrix(n);
    let lower_lhs = phi(&(&f * p), &(&f * q))?;
    let lower_rhs = lower_bound(n, tr_p, tr_q, alpha2, beta2);

    let upper = if check_upper {
        for (name, mat) in [("P", p), ("Q", q)] {
            if !is_psd_contraction(mat, 1e-9) {
                return Err(Error::NotPsdContraction(name.to_string()));
            }
        }
        let lhs = phi(p, q)?;
        let rhs = upper_bound_constant(tr_p, tr_q, alpha2, beta2, n);
        Some(UpperBoundCheck {
            lhs,
            rhs,
            slack: rhs - lhs,
        })
    } else {
        None
    };
    Ok(LemmaFafterprojReport {
        n,
        tr_p_hat: tr_p,
        tr_q_hat: tr_q,
        alpha2,
        beta2,
        lower_lhs,
        lower_rhs,
        lower_slack: lower_lhs - lower_rhs,
        upper,
    })
}
