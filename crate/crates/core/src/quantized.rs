//! Fixed-precision execution: every written word is rounded to a multiple of
//! `ε` after each gate, and bit usage is averaged over Gaussian inputs.
//!
//! Statistics are stored per write event (the `n` input words, then the one
//! or two words each gate rewrites) rather than as a dense `(m+1) × n`
//! table; a word keeps its value, and its statistics, until the next gate
//! that touches it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::directions::{extend_basis, extract_directions, uncertainty_volume_log, ExtractOptions};
use crate::error::{Error, Result};
use crate::gate::LinearAlgorithm;

/// Samples per work unit. Fixed so results do not depend on thread count.
const BLOCK: usize = 256;

/// Nearest multiple of `epsilon`, ties to even.
pub fn quantize(v: f64, epsilon: f64) -> f64 {
    (v / epsilon).round_ties_even() * epsilon
}

/// `log2(1 + |v|/ε) + 1`: magnitude bits plus a sign bit.
pub fn bits(v: f64, epsilon: f64) -> f64 {
    (1.0 + v.abs() / epsilon).log2() + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    pub epsilon: f64,
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
    pub word_budget: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SimulateOptions {
    pub fn new(epsilon: f64) -> Self {
        SimulateOptions {
            epsilon,
            sigma: 1.0,
            samples: 10_000,
            seed: 0,
            word_budget: 32.0,
            threads: None,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.samples == 0 {
            return Err(Error::param("samples must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads must be at least 1"));
        }
        Ok(())
    }
}

/// Per-sample input generator: stream `k` of a ChaCha8 keyed by `seed`.
fn sample_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// One write event: word `coord` gets a new value at step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WriteEvent {
    pub t: usize,
    pub coord: usize,
    pub mean_bits: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizedRunStats {
    pub epsilon: f64,
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
    pub word_budget: f64,
    pub n: usize,
    pub m: usize,
    /// Input words first (`t = 0`), then gate writes in step order.
    #[serde(skip)]
    pub events: Vec<WriteEvent>,
    /// Event indices per coordinate, in increasing `t`.
    #[serde(skip)]
    by_coord: Vec<Vec<usize>>,
    /// `(t, i)` with `mean_bits > W`, sorted.
    pub overflow_flags: Vec<(usize, usize)>,
}

impl QuantizedRunStats {
    fn event_at(&self, t: usize, i: usize) -> &WriteEvent {
        assert!(t <= self.m && i < self.n, "({t}, {i}) outside the trajectory");
        let list = &self.by_coord[i];
        let k = list.partition_point(|&e| self.events[e].t <= t);
        &self.events[list[k - 1]]
    }

    /// `E[bits(state(t, i))]`.
    pub fn mean_bits(&self, t: usize, i: usize) -> f64 {
        self.event_at(t, i).mean_bits
    }

    /// `max |state(t, i)|` over samples.
    pub fn max_abs(&self, t: usize, i: usize) -> f64 {
        self.event_at(t, i).max_abs
    }

    pub fn is_flagged(&self, t: usize, i: usize) -> bool {
        self.mean_bits(t, i) > self.word_budget
    }

    /// Visits every `(t, i)` in row-major order with its statistics.
    pub fn for_each_entry<F: FnMut(usize, usize, &WriteEvent)>(&self, mut visit: F) {
        let mut current: Vec<usize> = (0..self.n).collect();
        let mut next = self.n;
        for t in 0..=self.m {
            while next < self.events.len() && self.events[next].t == t {
                current[self.events[next].coord] = next;
                next += 1;
            }
            for (i, &e) in current.iter().enumerate() {
                visit(t, i, &self.events[e]);
            }
        }
    }

    /// Dense `(m+1) × n` table of mean bits.
    pub fn mean_bits_table(&self) -> Vec<Vec<f64>> {
        let mut table = vec![vec![0.0; self.n]; self.m + 1];
        self.for_each_entry(|t, i, e| table[t][i] = e.mean_bits);
        table
    }

    pub fn summary(&self) -> SimulationSummary {
        let (lo, hi) = min_max(self.events.iter().map(|e| e.mean_bits));
        let (in_lo, in_hi) = min_max(self.events[..self.n].iter().map(|e| e.mean_bits));
        SimulationSummary {
            epsilon: self.epsilon,
            sigma: self.sigma,
            samples: self.samples,
            seed: self.seed,
            word_budget: self.word_budget,
            n: self.n,
            m: self.m,
            min_mean_bits: lo,
            max_mean_bits: hi,
            input_min_mean_bits: in_lo,
            input_max_mean_bits: in_hi,
            max_abs: self.events.iter().map(|e| e.max_abs).fold(0.0, f64::max),
            overflow_count: self.overflow_flags.len(),
        }
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub epsilon: f64,
    pub sigma: f64,
    pub samples: usize,
    pub seed: u64,
    pub word_budget: f64,
    pub n: usize,
    pub m: usize,
    pub min_mean_bits: f64,
    pub max_mean_bits: f64,
    pub input_min_mean_bits: f64,
    pub input_max_mean_bits: f64,
    pub max_abs: f64,
    pub overflow_count: usize,
}

#[derive(Clone)]
struct Accumulator {
    bits: Vec<f64>,
    max_abs: Vec<f64>,
}

impl Accumulator {
    fn new(slots: usize) -> Self {
        Accumulator {
            bits: vec![0.0; slots],
            max_abs: vec![0.0; slots],
        }
    }

    fn merge(mut self, other: Accumulator) -> Self {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a += b;
        }
        for (a, b) in self.max_abs.iter_mut().zip(&other.max_abs) {
            *a = a.max(*b);
        }
        self
    }
}

fn run_block(
    algorithm: &LinearAlgorithm,
    options: &SimulateOptions,
    slots: usize,
    range: std::ops::Range<usize>,
) -> Accumulator {
    let n = algorithm.n();
    let eps = options.epsilon;
    let normal = Normal::new(0.0, options.sigma).expect("sigma validated");
    let mut acc = Accumulator::new(slots);
    let mut x = vec![0.0; n];
    for k in range {
        let mut rng = sample_rng(options.seed, k);
        let mut slot = 0;
        let mut record = |v: f64, slot: &mut usize| {
            acc.bits[*slot] += bits(v, eps);
            acc.max_abs[*slot] = acc.max_abs[*slot].max(v.abs());
            *slot += 1;
        };
        for xi in x.iter_mut() {
            *xi = quantize(normal.sample(&mut rng), eps);
            record(*xi, &mut slot);
        }
        for gate in algorithm.gates() {
            gate.apply(&mut x);
            for &i in gate.touched().as_slice() {
                x[i] = quantize(x[i], eps);
                record(x[i], &mut slot);
            }
        }
    }
    acc
}

/// Quantized replay over Gaussian inputs `N(0, σ² Id)`.
pub fn simulate(algorithm: &LinearAlgorithm, options: SimulateOptions) -> Result<QuantizedRunStats> {
    options.check()?;
    let n = algorithm.n();
    let mut events: Vec<WriteEvent> = (0..n)
        .map(|coord| WriteEvent { t: 0, coord, mean_bits: 0.0, max_abs: 0.0 })
        .collect();
    for (k, gate) in algorithm.gates().iter().enumerate() {
        for &coord in gate.touched().as_slice() {
            events.push(WriteEvent { t: k + 1, coord, mean_bits: 0.0, max_abs: 0.0 });
        }
    }
    let slots = events.len();
    let blocks: Vec<_> = (0..options.samples)
        .step_by(BLOCK)
        .map(|s| s..(s + BLOCK).min(options.samples))
        .collect();
    let compute = || -> Vec<Accumulator> {
        blocks
            .par_iter()
            .map(|r| run_block(algorithm, &options, slots, r.clone()))
            .collect()
    };
    let partials = match options.threads {
        // no pool at all: also usable where threads cannot be spawned
        Some(1) => blocks
            .iter()
            .map(|r| run_block(algorithm, &options, slots, r.clone()))
            .collect(),
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::param(e.to_string()))?
            .install(compute),
        None => compute(),
    };
    // merged in block order, independent of scheduling
    let total = partials
        .into_iter()
        .reduce(Accumulator::merge)
        .expect("at least one block");
    let count = options.samples as f64;
    for (e, (b, a)) in events.iter_mut().zip(total.bits.iter().zip(&total.max_abs)) {
        e.mean_bits = b / count;
        e.max_abs = *a;
    }

    let mut by_coord = vec![Vec::new(); n];
    for (k, e) in events.iter().enumerate() {
        by_coord[e.coord].push(k);
    }
    let m = algorithm.m();
    let mut overflow_flags = Vec::new();
    for list in &by_coord {
        for (pos, &k) in list.iter().enumerate() {
            let e = &events[k];
            if e.mean_bits > options.word_budget {
                let until = list.get(pos + 1).map_or(m + 1, |&nx| events[nx].t);
                overflow_flags.extend((e.t..until).map(|t| (t, e.coord)));
            }
        }
    }
    overflow_flags.sort_unstable();

    Ok(QuantizedRunStats {
        epsilon: options.epsilon,
        sigma: options.sigma,
        samples: options.samples,
        seed: options.seed,
        word_budget: options.word_budget,
        n,
        m,
        events,
        by_coord,
        overflow_flags,
    })
}

/// Per-direction input uncertainty implied by the underflow system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnderflowReport {
    pub epsilon: f64,
    pub tau: f64,
    /// Number of extracted directions; the rest are standard-basis extensions.
    pub extracted: usize,
    /// `z_j / ‖z_j‖`.
    pub directions: Vec<Vec<f64>>,
    /// `ε γ_j` for extracted directions, `ε` for extensions.
    pub widths: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `(t_j, i_j)` of extracted directions.
    pub locations: Vec<(usize, usize)>,
    /// `Σ log2 γ_j`.
    pub volume_log: f64,
    pub volume_log_closed_form: f64,
}

pub fn underflow_widths(algorithm: &LinearAlgorithm, epsilon: f64, tau: f64) -> Result<UnderflowReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let extraction = extract_directions(algorithm, ExtractOptions::new(tau))?;
    let under = &extraction.underflow;
    let basis = extend_basis(under, algorithm.n())?;
    let volume = uncertainty_volume_log(&basis, algorithm.speedup(), under.len());
    let directions = basis
        .z_vectors
        .iter()
        .map(|z| {
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            z.iter().map(|v| v / norm).collect()
        })
        .collect();
    let widths = basis
        .gammas
        .iter()
        .enumerate()
        .map(|(j, g)| if j < under.len() { epsilon * g } else { epsilon })
        .collect();
    Ok(UnderflowReport {
        epsilon,
        tau,
        extracted: under.len(),
        directions,
        widths,
        gammas: basis.gammas,
        locations: under.steps.iter().copied().zip(under.coords.iter().copied()).collect(),
        volume_log: volume.log_volume,
        volume_log_closed_form: volume.closed_form,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyStatus {
    /// Measured width within a factor 2 of the prediction.
    Agree,
    Disagree,
    /// Fewer than [`MIN_BIN_SAMPLES`] samples in every usable bin.
    Inconclusive,
}

pub const MIN_BIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub step: usize,
    pub coord: usize,
    pub direction: Vec<f64>,
    /// `ε / |row_i(M^(t)) · z|`.
    pub predicted_width: f64,
    /// Median over bins of the spread of `g` within a bin.
    pub measured_width: Option<f64>,
    pub ratio: Option<f64>,
    pub bins_used: usize,
    pub samples: usize,
    pub status: UncertaintyStatus,
}

/// Monte-Carlo check of how well `g = zᵀx` is pinned down by the quantized
/// word at `(step, coord)`.
///
/// The component of `x` orthogonal to `z` is held fixed while `g` sweeps ten
/// predicted widths; samples are binned by the word's integer value and the
/// range of `g` inside each full interior bin is measured. `z` defaults to
/// the normalized row `coord` of `(M^(step))^{-T}`.
pub fn empirical_uncertainty_check(
    algorithm: &LinearAlgorithm,
    epsilon: f64,
    step: usize,
    coord: usize,
    direction: Option<&[f64]>,
    samples: usize,
    seed: u64,
) -> Result<UncertaintyReport> {
    let n = algorithm.n();
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    if step > algorithm.m() {
        return Err(Error::StepOutOfRange { t: step, m: algorithm.m() });
    }
    if coord >= n {
        return Err(Error::IndexOutOfRange { index: coord, n });
    }
    let (m_t, minv_t) = algorithm.matrices_at(step)?;
    let z: Vec<f64> = match direction {
        Some(z) => {
            if z.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: z.len() });
            }
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("direction must be unit norm, got {norm}")));
            }
            z.to_vec()
        }
        None => {
            let row = minv_t.row(coord);
            let norm = row.norm();
            row.iter().map(|v| v / norm).collect()
        }
    };
    let coupling: f64 = m_t.row(coord).iter().zip(&z).map(|(a, b)| a * b).sum();
    if coupling.abs() < 1e-12 {
        return Err(Error::DegenerateProjection(coupling.abs()));
    }
    let predicted = epsilon / coupling.abs();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let along: f64 = base.iter().zip(&z).map(|(a, b)| a * b).sum();
    for (b, zk) in base.iter_mut().zip(&z) {
        *b -= along * zk;
    }
    let half_range = 5.0 * predicted;
    let mut observations: Vec<(i64, f64)> = (0..samples)
        .map(|_| {
            let g = rng.random_range(-half_range..half_range);
            let mut x: Vec<f64> = base
                .iter()
                .zip(&z)
                .map(|(b, zk)| quantize(b + g * zk, epsilon))
                .collect();
            for gate in &algorithm.gates()[..step] {
                gate.apply(&mut x);
                for &i in gate.touched().as_slice() {
                    x[i] = quantize(x[i], epsilon);
                }
            }
            ((x[coord] / epsilon).round() as i64, g)
        })
        .collect();
    observations.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // bins at either end are cut off by the sampling range
    let mut spreads = Vec::new();
    let mut bins: Vec<&[(i64, f64)]> = observations.chunk_by(|a, b| a.0 == b.0).collect();
    if bins.len() > 2 {
        bins = bins[1..bins.len() - 1].to_vec();
    } else {
        bins.clear();
    }
    for bin in bins {
        if bin.len() >= MIN_BIN_SAMPLES {
            spreads.push(bin[bin.len() - 1].1 - bin[0].1);
        }
    }
    let (measured, ratio, status) = if spreads.is_empty() {
        (None, None, UncertaintyStatus::Inconclusive)
    } else {
        spreads.sort_by(f64::total_cmp);
        let median = spreads[spreads.len() / 2];
        let ratio = median / predicted;
        let status = if (0.5..=2.0).contains(&ratio) {
            UncertaintyStatus::Agree
        } else {
            UncertaintyStatus::Disagree
        };
        (Some(median), Some(ratio), status)
    };
    Ok(UncertaintyReport {
        step,
        coord,
        direction: z,
        predicted_width: predicted,
        measured_width: measured,
        ratio,
        bins_used: spreads.len(),
        samples,
        status,
    })
}
