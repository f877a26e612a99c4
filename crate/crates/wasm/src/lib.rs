//! Browser bindings. Every operation takes a fixture description as JSON,
//! e.g. `{"kind":"wht","n":16}`, and returns a JSON document.
//!
//! The `*_json` functions are plain Rust and carry the logic; the exported
//! wrappers only convert errors for JavaScript.

use fourier_bottleneck::bottleneck::{scan_bottlenecks, ScanOptions};
use fourier_bottleneck::builders::FixtureSpec;
use fourier_bottleneck::entropy::trace_potential_identity;
use fourier_bottleneck::quantized::{simulate, SimulateOptions};
use fourier_bottleneck::LinearAlgorithm;
use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest `(m + 1) * n` table the heatmap returns.
pub const MAX_HEATMAP_CELLS: usize = 1 << 20;

/// Largest `samples * n * m` work the page will start.
pub const MAX_SIMULATION_WORK: usize = 1 << 30;

#[derive(Serialize)]
struct Doc<'a, T: Serialize> {
    schema_version: u32,
    label: &'a str,
    n: usize,
    m: usize,
    #[serde(flatten)]
    body: T,
}

fn build(spec: &str) -> Result<LinearAlgorithm, String> {
    let spec: FixtureSpec = serde_json::from_str(spec).map_err(|e| format!("bad fixture: {e}"))?;
    spec.build().map_err(|e| e.to_string())
}

fn render<T: Serialize>(alg: &LinearAlgorithm, body: T) -> Result<String, String> {
    let doc = Doc { schema_version: SCHEMA_VERSION, label: &alg.label, n: alg.n(), m: alg.m(), body };
    serde_json::to_string(&doc).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TraceBody {
    values: Vec<f64>,
    per_step_delta: Vec<f64>,
    per_step_bound: Vec<f64>,
}

pub fn potential_trace_json(spec: &str) -> Result<String, String> {
    let alg = build(spec)?;
    let trace = trace_potential_identity(&alg).map_err(|e| e.to_string())?;
    render(
        &alg,
        TraceBody {
            values: trace.values,
            per_step_delta: trace.per_step_delta,
            per_step_bound: trace.per_step_bound,
        },
    )
}

pub fn bottleneck_scan_json(spec: &str, window: usize) -> Result<String, String> {
    let alg = build(spec)?;
    let id = DMatrix::identity(alg.n(), alg.n());
    let report = scan_bottlenecks(&alg, &id, &id, ScanOptions::new(window)).map_err(|e| e.to_string())?;
    render(&alg, report)
}

#[derive(Serialize)]
struct HeatmapBody {
    summary: fourier_bottleneck::quantized::SimulationSummary,
    /// `mean_bits[t][i]`, last written value of coordinate `i` at step `t`.
    mean_bits: Vec<Vec<f64>>,
    overflow_flags: Vec<(usize, usize)>,
}

pub fn simulate_heatmap_json(
    spec: &str,
    epsilon: f64,
    samples: usize,
    seed: u64,
    word_budget: f64,
) -> Result<String, String> {
    let alg = build(spec)?;
    if (alg.m() + 1) * alg.n() > MAX_HEATMAP_CELLS {
        return Err(format!("table too large for the page ({} x {})", alg.m() + 1, alg.n()));
    }
    if samples.saturating_mul(alg.m().max(1)).saturating_mul(2) > MAX_SIMULATION_WORK {
        return Err("too many samples for this algorithm".into());
    }
    let mut options = SimulateOptions::new(epsilon);
    options.samples = samples;
    options.seed = seed;
    options.word_budget = word_budget;
    options.threads = Some(1);
    let stats = simulate(&alg, options).map_err(|e| e.to_string())?;
    render(
        &alg,
        HeatmapBody {
            summary: stats.summary(),
            mean_bits: stats.mean_bits_table(),
            overflow_flags: stats.overflow_flags.clone(),
        },
    )
}

#[wasm_bindgen]
pub fn potential_trace(spec: &str) -> Result<String, JsError> {
    potential_trace_json(spec).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bottleneck_scan(spec: &str, window: usize) -> Result<String, JsError> {
    bottleneck_scan_json(spec, window).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_heatmap(
    spec: &str,
    epsilon: f64,
    samples: usize,
    seed: u64,
    word_budget: f64,
) -> Result<String, JsError> {
    simulate_heatmap_json(spec, epsilon, samples, seed, word_budget).map_err(|e| JsError::new(&e))
}
