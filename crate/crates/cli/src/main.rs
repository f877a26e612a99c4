mod inputs;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use fourier_bottleneck::bottleneck::{
    scan_bottlenecks, verify_fourier_projection_bound, verify_theorem1_chain, ScanOptions,
    SCAN_TOLERANCE,
};
use fourier_bottleneck::builders::FixtureSpec;
use fourier_bottleneck::directions::{
    default_tau, extend_basis, extract_directions, uncertainty_volume_log, Criterion,
    ExtractOptions, RowScope, StepFilter,
};
use fourier_bottleneck::entropy::{sweep_inequalities, trace_potential, SweepConfig};
use fourier_bottleneck::linalg::random_orthogonal_projection;
use fourier_bottleneck::quantized::{
    empirical_uncertainty_check, simulate, underflow_widths, SimulateOptions,
};
use fourier_bottleneck::{format, LinearAlgorithm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use inputs::{load_algorithm, load_matrix, parse_number};
use output::{write_json, write_text, Table};

/// Potential, bottleneck and fixed-precision analysis of in-place
/// rotation/constant algorithms.
///
/// ALG arguments take a gate file, `-` for stdin, or a builder spec:
/// wht:N, dft:N, random:N:M:SEED, random-angles:N:M:SEED, scaled:N:C:K,
/// inverse:N:C:K. Numbers accept `base^exp` (e.g. 2^-10).
///
/// Exit status: 0 success, 1 usage or I/O error, 2 a checked inequality
/// failed beyond tolerance.
#[derive(Parser)]
#[command(name = "fbl", version)]
struct Cli {
    /// Write the result to this file instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a built algorithm in the gate text format.
    Build(BuildArgs),
    /// Replay and report inverse residuals and condition numbers.
    Validate { alg: String },
    /// Potential after every gate (CSV: t, phi, delta, bound, touched_i, touched_j).
    Trace {
        alg: String,
        #[command(flatten)]
        pq: PqArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Locate the worst window and check the bottleneck inequality.
    Scan {
        alg: String,
        #[arg(long = "R", visible_alias = "window", default_value_t = 1)]
        r: usize,
        #[command(flatten)]
        pq: PqArgs,
        /// With R = 1, also scan constant gates.
        #[arg(long)]
        include_constants: bool,
    },
    /// Check every link of the window argument behind the bottleneck inequality.
    Chain {
        alg: String,
        #[arg(long = "R", visible_alias = "window", default_value_t = 1)]
        r: usize,
        #[command(flatten)]
        pq: PqArgs,
    },
    /// Random sweep of the potential inequalities plus the projection bound on F_WHT.
    Lemma(LemmaArgs),
    /// Greedy overflow/underflow direction systems.
    Extract {
        alg: String,
        #[command(flatten)]
        extract: ExtractArgs,
    },
    /// Extend the underflow system to a basis and bound the uncertainty volume.
    Volume {
        alg: String,
        #[command(flatten)]
        extract: ExtractArgs,
        /// Speedup `b` in the closed form (default: n log2 n / m).
        #[arg(long, value_parser = parse_number)]
        b: Option<f64>,
    },
    /// Quantized replay over Gaussian inputs (CSV: t, i, mean_bits, max_abs, overflow_flag).
    Simulate {
        alg: String,
        #[command(flatten)]
        quant: QuantArgs,
        #[arg(long, value_parser = parse_number, default_value = "1")]
        sigma: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long = "W", visible_alias = "word-budget", value_parser = parse_number, default_value = "32")]
        w: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Per-direction input uncertainty from the underflow system.
    Underflow {
        alg: String,
        #[command(flatten)]
        quant: QuantArgs,
        /// Threshold (default sqrt(b/2)).
        #[arg(long, value_parser = parse_number)]
        tau: Option<f64>,
        /// Also run the Monte-Carlo width check at STEP:COORD.
        #[arg(long, value_name = "STEP:COORD")]
        check: Option<String>,
        /// Samples for --check.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
#[command(group(ArgGroup::new("family").required(true).args(["wht", "dft", "random", "scaled", "inverse"])))]
struct BuildArgs {
    /// Walsh-Hadamard butterflies on N words.
    #[arg(long, value_name = "N")]
    wht: Option<usize>,
    /// Real embedding of the DFT; N real words (N/2 complex points).
    #[arg(long, value_name = "N")]
    dft: Option<usize>,
    /// Random gates on N words (with --m, --seed, --angle-only).
    #[arg(long, value_name = "N")]
    random: Option<usize>,
    /// Scale k rows by c, unscale them, then WHT.
    #[arg(long, value_name = "N")]
    scaled: Option<usize>,
    /// Scale k rows by 1/c, restore them, then WHT.
    #[arg(long, value_name = "N")]
    inverse: Option<usize>,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    angle_only: bool,
    #[arg(long, value_parser = parse_number, default_value = "4")]
    c: f64,
    /// Scaled rows (default N/2).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct PqArgs {
    /// `identity`, `coords:i,j,...` or a matrix file.
    #[arg(long, default_value = "identity")]
    p: String,
    /// `identity`, `coords:i,j,...` or a matrix file.
    #[arg(long, default_value = "identity")]
    q: String,
}

#[derive(Args)]
struct ExtractArgs {
    /// Threshold (default sqrt(b/2) with b = n log2 n / m).
    #[arg(long, value_parser = parse_number)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = CriterionArg::MaxNorm)]
    criterion: CriterionArg,
    /// Only consider steps whose gate is a rotation.
    #[arg(long)]
    rotations_only: bool,
    /// Consider every row, not only the rows the step's gate touched.
    #[arg(long)]
    all_rows: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    MaxNorm,
    Product,
}

#[derive(Args)]
struct QuantArgs {
    /// Quantization step.
    #[arg(long, value_parser = parse_number, default_value = "2^-10")]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LemmaArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random unit pairs for the range bound.
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    /// Random instances for each matrix inequality.
    #[arg(long, default_value_t = 1_000)]
    instances: usize,
    /// Sizes for the projection bound (repeatable).
    #[arg(long = "n", default_values_t = [8usize, 16, 32])]
    sizes: Vec<usize>,
    /// Random orthogonal-projection pairs per size.
    #[arg(long, default_value_t = 100)]
    projections: usize,
    /// Also check the upper constant.
    #[arg(long)]
    upper: bool,
}

/// Outcome of a command that completed: success or a failed inequality.
enum Outcome {
    Ok,
    Violated(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violated(msg)) => {
            eprintln!("inequality violated: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn pq(alg: &LinearAlgorithm, args: &PqArgs) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)> {
    Ok((load_matrix(&args.p, alg.n())?, load_matrix(&args.q, alg.n())?))
}

fn extract_options(alg: &LinearAlgorithm, args: &ExtractArgs) -> ExtractOptions {
    let mut opts = ExtractOptions::new(args.tau.unwrap_or_else(|| default_tau(alg)));
    opts.criterion = match args.criterion {
        CriterionArg::MaxNorm => Criterion::MaxNorm,
        CriterionArg::Product => Criterion::Product,
    };
    if args.rotations_only {
        opts.steps = StepFilter::RotationsOnly;
    }
    if args.all_rows {
        opts.rows = RowScope::All;
    }
    opts
}

fn run(cli: &Cli) -> Result<Outcome> {
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Build(args) => build(out, args),
        Command::Validate { alg } => validate(out, &load_algorithm(alg)?),
        Command::Trace { alg, pq: pq_args, format } => {
            let alg = load_algorithm(alg)?;
            let (p, q) = pq(&alg, pq_args)?;
            trace(out, &alg, &p, &q, *format)
        }
        Command::Scan { alg, r, pq: pq_args, include_constants } => {
            let alg = load_algorithm(alg)?;
            let (p, q) = pq(&alg, pq_args)?;
            let report = scan_bottlenecks(&alg, &p, &q, ScanOptions { window: *r, include_constants: *include_constants })?;
            write_json(out, "scan", &report)?;
            Ok(if report.holds() {
                Outcome::Ok
            } else {
                Outcome::Violated(format!(
                    "bottleneck lhs {} < rhs {} (slack {:e}, R = {r})",
                    report.lhs, report.rhs, report.slack
                ))
            })
        }
        Command::Chain { alg, r, pq: pq_args } => {
            let alg = load_algorithm(alg)?;
            let (p, q) = pq(&alg, pq_args)?;
            let report = verify_theorem1_chain(&alg, &p, &q, *r)?;
            write_json(out, "chain", &report)?;
            if report.holds() {
                return Ok(Outcome::Ok);
            }
            let worst_window = report
                .per_window
                .iter()
                .min_by(|a, b| a.slack.total_cmp(&b.slack))
                .map_or(0, |w| w.start);
            Ok(Outcome::Violated(format!(
                "chain slack triangle {:e}, window {:e} (start {worst_window}), average {:e}, theorem {:e}",
                report.triangle.slack, report.min_window_slack, report.average.slack, report.theorem.slack
            )))
        }
        Command::Lemma(args) => lemma(out, args),
        Command::Extract { alg, extract } => {
            let alg = load_algorithm(alg)?;
            let ex = extract_directions(&alg, extract_options(&alg, extract))?;
            write_json(out, "extract", &ex)?;
            Ok(Outcome::Ok)
        }
        Command::Volume { alg, extract, b } => {
            let alg = load_algorithm(alg)?;
            volume(out, &alg, extract_options(&alg, extract), b.unwrap_or_else(|| alg.speedup()))
        }
        Command::Simulate { alg, quant, sigma, samples, w, format } => {
            let alg = load_algorithm(alg)?;
            let opts = SimulateOptions {
                epsilon: quant.eps,
                sigma: *sigma,
                samples: *samples,
                seed: quant.seed,
                word_budget: *w,
                threads: Some(cli.threads),
            };
            simulate_cmd(out, &alg, opts, *format)
        }
        Command::Underflow { alg, quant, tau, check, samples } => {
            let alg = load_algorithm(alg)?;
            let tau = tau.unwrap_or_else(|| default_tau(&alg));
            underflow(out, &alg, quant, tau, check.as_deref(), *samples)
        }
    }
}

fn build(out: Option<&Path>, args: &BuildArgs) -> Result<Outcome> {
    let half = |n: usize| args.k.unwrap_or(n / 2);
    let spec = if let Some(n) = args.wht {
        FixtureSpec::Wht { n }
    } else if let Some(n) = args.dft {
        FixtureSpec::DftReal { n }
    } else if let Some(n) = args.random {
        FixtureSpec::Random { n, m: args.m, seed: args.seed, angle_only: args.angle_only }
    } else if let Some(n) = args.scaled {
        FixtureSpec::ScaledBottleneck { n, c: args.c, k: half(n) }
    } else if let Some(n) = args.inverse {
        FixtureSpec::InverseBottleneck { n, c: args.c, k: half(n) }
    } else {
        unreachable!("clap requires one family")
    };
    write_text(out, &format::render(&spec.build()?))?;
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    n: usize,
    m: usize,
    rotations: usize,
    max_residual: f64,
    unstable: bool,
    max_condition_number: f64,
    condition_numbers: &'a [f64],
}

fn validate(out: Option<&Path>, alg: &LinearAlgorithm) -> Result<Outcome> {
    let diag = alg.validate();
    write_json(
        out,
        "validate",
        &ValidateReport {
            n: alg.n(),
            m: alg.m(),
            rotations: alg.rotation_count(),
            max_residual: diag.max_residual,
            unstable: diag.unstable,
            max_condition_number: diag.max_condition_number(),
            condition_numbers: &diag.condition_numbers,
        },
    )?;
    Ok(if diag.unstable {
        Outcome::Violated(format!("M (M^-T)^T deviates from Id by {:e}", diag.max_residual))
    } else {
        Outcome::Ok
    })
}

fn trace(
    out: Option<&Path>,
    alg: &LinearAlgorithm,
    p: &nalgebra::DMatrix<f64>,
    q: &nalgebra::DMatrix<f64>,
    format: Format,
) -> Result<Outcome> {
    let trace = trace_potential(alg, p, q)?;
    match format {
        Format::Json => write_json(out, "trace", &trace)?,
        Format::Csv => {
            let mut table = Table::new(out, &["t", "phi", "delta", "bound", "touched_i", "touched_j"])?;
            table.row(&[0.to_string(), trace.values[0].to_string(), String::new(), String::new(), String::new(), String::new()])?;
            for t in 1..trace.values.len() {
                let touched = trace.touched[t - 1].as_slice();
                let j = touched.get(1).unwrap_or(&touched[0]);
                table.row(&[
                    t.to_string(),
                    trace.values[t].to_string(),
                    trace.per_step_delta[t - 1].to_string(),
                    trace.per_step_bound[t - 1].to_string(),
                    touched[0].to_string(),
                    j.to_string(),
                ])?;
            }
            table.finish()?;
        }
    }
    let excess = trace.worst_bound_excess();
    if excess > SCAN_TOLERANCE {
        let t = (0..trace.per_step_delta.len())
            .max_by(|&a, &b| {
                let ea = trace.per_step_delta[a] - trace.per_step_bound[a];
                let eb = trace.per_step_delta[b] - trace.per_step_bound[b];
                ea.total_cmp(&eb)
            })
            .map_or(0, |k| k + 1);
        return Ok(Outcome::Violated(format!("step {t}: potential change exceeds bound by {excess:e}")));
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct ProjectionSummary {
    n: usize,
    trials: usize,
    min_lower_slack: f64,
    min_upper_slack: Option<f64>,
}

#[derive(Serialize)]
struct LemmaReport {
    sweep: fourier_bottleneck::entropy::SweepReport,
    /// Some unit pair had `|Φ| > log2 a` (only possible for a = 2).
    stated_range_violations: bool,
    projection: Vec<ProjectionSummary>,
}

fn lemma(out: Option<&Path>, args: &LemmaArgs) -> Result<Outcome> {
    let sweep = sweep_inequalities(&SweepConfig {
        seed: args.seed,
        unit_pairs: args.pairs,
        instances: args.instances,
        ..SweepConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut projection = Vec::new();
    let mut failures = Vec::new();
    for &n in &args.sizes {
        let mut summary = ProjectionSummary {
            n,
            trials: 0,
            min_lower_slack: f64::INFINITY,
            min_upper_slack: args.upper.then_some(f64::INFINITY),
        };
        for _ in 0..args.projections {
            let (kp, kq) = (rng.random_range(0..=n / 4), rng.random_range(0..=n / 4));
            let p = random_orthogonal_projection(n, kp, &mut rng);
            let q = random_orthogonal_projection(n, kq, &mut rng);
            let report = verify_fourier_projection_bound(n, &p, &q, args.upper)?;
            summary.trials += 1;
            summary.min_lower_slack = summary.min_lower_slack.min(report.lower_slack);
            if let (Some(s), Some(u)) = (summary.min_upper_slack.as_mut(), &report.upper) {
                *s = s.min(u.slack);
            }
            if !report.holds() {
                failures.push(format!("projection bound at n = {n} (lower slack {:e})", report.lower_slack));
            }
        }
        projection.push(summary);
    }
    if !sweep.holds() {
        failures.push(format!(
            "potential sweep: range {:e}, orthogonal {:e}, nonsingular {:e}",
            sweep.range.min_slack,
            sweep.orthogonal.min_slack, sweep.nonsingular.min_slack
        ));
    }
    let report = LemmaReport {
        stated_range_violations: !sweep.range_stated.holds(),
        sweep,
        projection,
    };
    write_json(out, "lemma", &report)?;
    Ok(if failures.is_empty() { Outcome::Ok } else { Outcome::Violated(failures.join("; ")) })
}

#[derive(Serialize)]
struct VolumeReport {
    tau: f64,
    b: f64,
    n_prime: usize,
    locations: Vec<(usize, usize)>,
    gammas: Vec<f64>,
    added_coords: Vec<usize>,
    log_volume: f64,
    closed_form: f64,
    slack: f64,
}

fn volume(out: Option<&Path>, alg: &LinearAlgorithm, opts: ExtractOptions, b: f64) -> Result<Outcome> {
    let ex = extract_directions(alg, opts)?;
    let basis = extend_basis(&ex.underflow, alg.n())?;
    let n_prime = ex.underflow.len();
    let bound = uncertainty_volume_log(&basis, b, n_prime);
    let report = VolumeReport {
        tau: opts.tau,
        b,
        n_prime,
        locations: ex.underflow.steps.iter().copied().zip(ex.underflow.coords.iter().copied()).collect(),
        gammas: basis.gammas,
        added_coords: basis.added_coords,
        log_volume: bound.log_volume,
        closed_form: bound.closed_form,
        slack: bound.log_volume - bound.closed_form,
    };
    write_json(out, "volume", &report)?;
    Ok(if report.slack < -1e-9 {
        Outcome::Violated(format!(
            "log2 volume {} below closed form {} (slack {:e})",
            report.log_volume, report.closed_form, report.slack
        ))
    } else {
        Outcome::Ok
    })
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    summary: fourier_bottleneck::quantized::SimulationSummary,
    overflow_flags: &'a [(usize, usize)],
}

fn simulate_cmd(out: Option<&Path>, alg: &LinearAlgorithm, opts: SimulateOptions, format: Format) -> Result<Outcome> {
    let stats = simulate(alg, opts)?;
    match format {
        Format::Json => write_json(
            out,
            "simulate",
            &SimulateReport { summary: stats.summary(), overflow_flags: &stats.overflow_flags },
        )?,
        Format::Csv => {
            let mut table = Table::new(out, &["t", "i", "mean_bits", "max_abs", "overflow_flag"])?;
            let mut result = Ok(());
            stats.for_each_entry(|t, i, e| {
                if result.is_ok() {
                    let flag = u8::from(e.mean_bits > stats.word_budget);
                    result = table.row(&[
                        t.to_string(),
                        i.to_string(),
                        e.mean_bits.to_string(),
                        e.max_abs.to_string(),
                        flag.to_string(),
                    ]);
                }
            });
            result?;
            table.finish()?;
        }
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct UnderflowOutput {
    #[serde(flatten)]
    report: fourier_bottleneck::quantized::UnderflowReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    check: Option<fourier_bottleneck::quantized::UncertaintyReport>,
}

fn underflow(
    out: Option<&Path>,
    alg: &LinearAlgorithm,
    quant: &QuantArgs,
    tau: f64,
    check: Option<&str>,
    samples: usize,
) -> Result<Outcome> {
    let report = underflow_widths(alg, quant.eps, tau)?;
    let check = match check {
        Some(loc) => {
            let Some((step, coord)) = loc.split_once(':') else {
                bail!("--check expects STEP:COORD, got {loc:?}");
            };
            let (step, coord): (usize, usize) = (step.trim().parse()?, coord.trim().parse()?);
            Some(empirical_uncertainty_check(alg, quant.eps, step, coord, None, samples, quant.seed)?)
        }
        None => None,
    };
    write_json(out, "underflow", &UnderflowOutput { report, check })?;
    Ok(Outcome::Ok)
}
