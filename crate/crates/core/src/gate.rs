//! The in-place gate model.
//!
//! An algorithm over `n` machine words is an ordered list of gates. A
//! rotation rewrites two coordinates with the planar map
//!
//! ```text
//! [ x_i ]    [  cos θ   sin θ ] [ x_i ]
//! [ x_j ] <- [ -sin θ   cos θ ] [ x_j ]
//! ```
//!
//! and a constant multiplies one coordinate by a nonzero scalar. Composing the
//! first `t` gates gives the matrix `M^(t)`; `M^(0)` is the identity.
//! Coordinates are 0-based throughout.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single rotation or constant step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gate {
    Rotation { i: usize, j: usize, theta: f64 },
    Constant { i: usize, c: f64 },
}

/// The one or two coordinates a gate rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Touched {
    rows: [usize; 2],
    len: u8,
}

impl Touched {
    pub fn one(i: usize) -> Self {
        Touched { rows: [i, i], len: 1 }
    }

    pub fn two(i: usize, j: usize) -> Self {
        Touched { rows: [i, j], len: 2 }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.rows[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(i_t, j_t)` in the convention where a constant gate has `i_t == j_t`.
    pub fn pair(&self) -> (usize, usize) {
        (self.rows[0], self.rows[1])
    }

    pub fn contains(&self, row: usize) -> bool {
        self.as_slice().contains(&row)
    }
}

impl Gate {
    pub fn rotation(i: usize, j: usize, theta: f64) -> Result<Self> {
        if i == j {
            return Err(Error::DegenerateRotation(i));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidAngle(theta));
        }
        Ok(Gate::Rotation { i, j, theta })
    }

    pub fn constant(i: usize, c: f64) -> Result<Self> {
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidConstant(c));
        }
        Ok(Gate::Constant { i, c })
    }

    /// `Rotation(i, j, π/2)` followed by `Constant(j, -1)` exchanges two words.
    pub fn swap(i: usize, j: usize) -> Result<[Self; 2]> {
        Ok([
            Gate::rotation(i, j, std::f64::consts::FRAC_PI_2)?,
            Gate::constant(j, -1.0)?,
        ])
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self, Gate::Rotation { .. })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Gate::Constant { .. })
    }

    /// A constant gate with `c = -1`.
    pub fn is_reflection(&self) -> bool {
        matches!(self, Gate::Constant { c, .. } if *c == -1.0)
    }

    pub fn touched(&self) -> Touched {
        match *self {
            Gate::Rotation { i, j, .. } => Touched::two(i, j),
            Gate::Constant { i, .. } => Touched::one(i),
        }
    }

    pub(crate) fn check_dimension(&self, n: usize) -> Result<()> {
        for &index in self.touched().as_slice() {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        Ok(())
    }

    /// Applies the gate to a machine state in place.
    pub fn apply(&self, x: &mut [f64]) {
        match *self {
            Gate::Rotation { i, j, theta } => {
                let (s, c) = theta.sin_cos();
                let (a, b) = (x[i], x[j]);
                x[i] = c * a + s * b;
                x[j] = -s * a + c * b;
            }
            Gate::Constant { i, c } => x[i] *= c,
        }
    }

    /// Left row operation on `m`: `m <- G m`.
    pub fn act_on_rows(&self, m: &mut DMatrix<f64>) {
        match *self {
            Gate::Rotation { i, j, theta } => rotate_rows(m, i, j, theta),
            Gate::Constant { i, c } => m.row_mut(i).scale_mut(c),
        }
    }

    /// The induced row operation on an inverse-transpose: `b <- G^{-T} b`.
    /// Rotations are orthogonal, so only the constant case differs.
    pub fn act_on_rows_inv_t(&self, b: &mut DMatrix<f64>) {
        match *self {
            Gate::Rotation { i, j, theta } => rotate_rows(b, i, j, theta),
            Gate::Constant { i, c } => b.row_mut(i).scale_mut(1.0 / c),
        }
    }

    /// Dense `n x n` matrix of the gate.
    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        let mut g = DMatrix::identity(n, n);
        self.act_on_rows(&mut g);
        g
    }
}

fn rotate_rows(m: &mut DMatrix<f64>, i: usize, j: usize, theta: f64) {
    let (s, c) = theta.sin_cos();
    for k in 0..m.ncols() {
        let a = m[(i, k)];
        let b = m[(j, k)];
        m[(i, k)] = c * a + s * b;
        m[(j, k)] = -s * a + c * b;
    }
}

/// An in-place algorithm `A_n = (M^(0) = Id, M^(1), ..., M^(m))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAlgorithm {
    n: usize,
    gates: Vec<Gate>,
    pub label: String,
}

impl LinearAlgorithm {
    pub fn new(n: usize, gates: Vec<Gate>, label: impl Into<String>) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(format!("dimension must be at least 2, got {n}")));
        }
        for gate in &gates {
            gate.check_dimension(n)?;
        }
        Ok(LinearAlgorithm {
            n,
            gates,
            label: label.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of gates.
    pub fn m(&self) -> usize {
        self.gates.len()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Gate `t` in 1-based step numbering, i.e. the gate producing `M^(t)`.
    pub fn gate_at_step(&self, t: usize) -> Option<&Gate> {
        t.checked_sub(1).and_then(|k| self.gates.get(k))
    }

    pub fn rotation_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_rotation()).count()
    }

    /// Speedup factor `b = n log2 n / m` relative to the FFT gate count.
    pub fn speedup(&self) -> f64 {
        let n = self.n as f64;
        n * n.log2() / self.m().max(1) as f64
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t > self.m() {
            return Err(Error::StepOutOfRange { t, m: self.m() });
        }
        Ok(())
    }

    /// `M^(upto_t) x` by sequential gate application.
    pub fn apply_to_vector(&self, x: &[f64], upto_t: usize) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        self.check_step(upto_t)?;
        let mut state = x.to_vec();
        for gate in &self.gates[..upto_t] {
            gate.apply(&mut state);
        }
        Ok(state)
    }

    /// Replays the first `t` gates from the identity and returns
    /// `(M^(t), (M^(t))^{-T})`.
    pub fn matrices_at(&self, t: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_step(t)?;
        let mut state = TrajectoryState::identity(self.n);
        for gate in &self.gates[..t] {
            state.advance(gate)?;
        }
        Ok(state.into_pair())
    }

    /// Final matrix `M^(m)`.
    pub fn final_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.n, self.n);
        for gate in &self.gates {
            gate.act_on_rows(&mut m);
        }
        m
    }

    /// Visits `M^(0), ..., M^(m)` in order with the gate that produced each
    /// state (`None` for the identity).
    pub fn replay<F: FnMut(&TrajectoryState, Option<&Gate>)>(&self, mut visit: F) {
        let mut state = TrajectoryState::identity(self.n);
        visit(&state, None);
        for gate in &self.gates {
            state.advance(gate).expect("validated gate");
            visit(&state, Some(gate));
        }
    }

    /// Replays the trajectory, checking `M (M^{-T})^T = Id` and recording the
    /// condition number of every intermediate matrix.
    pub fn validate(&self) -> Diagnostics {
        let mut max_residual = 0.0f64;
        let mut condition_numbers = Vec::with_capacity(self.m() + 1);
        let mut touched = Vec::with_capacity(self.m());
        let mut state = TrajectoryState::identity(self.n);
        max_residual = max_residual.max(state.residual());
        condition_numbers.push(condition_number(&state.m));
        for gate in &self.gates {
            // indices were checked at construction
            state.advance(gate).expect("validated gate");
            max_residual = max_residual.max(state.residual());
            condition_numbers.push(condition_number(&state.m));
            touched.push(gate.touched());
        }
        Diagnostics {
            max_residual,
            unstable: max_residual > UNSTABLE_RESIDUAL,
            condition_numbers,
            touched,
        }
    }
}

/// Residual above which an algorithm is flagged as numerically unstable.
pub const UNSTABLE_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `max_t max_{k,l} |(M (M^{-T})^T - Id)(k, l)|`
    pub max_residual: f64,
    pub unstable: bool,
    /// `κ(M^(t))` for `t = 0..=m`.
    pub condition_numbers: Vec<f64>,
    pub touched: Vec<Touched>,
}

impl Diagnostics {
    pub fn max_condition_number(&self) -> f64 {
        self.condition_numbers.iter().copied().fold(1.0, f64::max)
    }
}

/// `σ_1 / σ_n`.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// The pair `(M^(t), (M^(t))^{-T})`, maintained jointly by row operations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: usize,
    pub m: DMatrix<f64>,
    pub minv_t: DMatrix<f64>,
    /// Coordinates rewritten by the last gate; `None` at `t = 0`.
    pub touched: Option<Touched>,
}

impl TrajectoryState {
    pub fn identity(n: usize) -> Self {
        TrajectoryState {
            t: 0,
            m: DMatrix::identity(n, n),
            minv_t: DMatrix::identity(n, n),
            touched: None,
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// Applies one gate in O(n).
    pub fn advance(&mut self, gate: &Gate) -> Result<()> {
        gate.check_dimension(self.n())?;
        gate.act_on_rows(&mut self.m);
        gate.act_on_rows_inv_t(&mut self.minv_t);
        self.t += 1;
        self.touched = Some(gate.touched());
        Ok(())
    }

    /// Max entrywise deviation of `M (M^{-T})^T` from the identity.
    pub fn residual(&self) -> f64 {
        let prod = &self.m * self.minv_t.transpose();
        let n = self.n();
        let mut worst = 0.0f64;
        for k in 0..n {
            for l in 0..n {
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((prod[(k, l)] - target).abs());
            }
        }
        worst
    }

    pub fn into_pair(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.m, self.minv_t)
    }
}
