use fourier_bottleneck::bottleneck::{scan_bottlenecks, ScanOptions};
use fourier_bottleneck::builders::{
    build_dft_real, build_inverse_bottleneck_fixture, build_random, build_scaled_bottleneck_fixture,
    build_wht, walsh_hadamard_matrix,
};
use fourier_bottleneck::directions::{
    extend_basis, extract_directions, DirectionKind, DirectionSystem, ExtractOptions,
};
use fourier_bottleneck::entropy::{phi, trace_potential, trace_potential_identity};
use fourier_bottleneck::linalg::{random_orthogonal, random_orthogonal_projection};
use fourier_bottleneck::quantized::{quantize, simulate, SimulateOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Straightforward double loop, kept separate from the library's version.
fn phi_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let s = a[(r, c)] * b[(r, c)];
            if s != 0.0 {
                total -= s * s.abs().log2();
            }
        }
    }
    total
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inverse_transpose_stays_consistent(n in 2usize..=32, m in 1usize..=200, seed: u64, t_frac in 0.0f64..=1.0) {
        let alg = build_random(n, m, seed, false).unwrap();
        let t = (t_frac * m as f64).round() as usize;
        let (mt, minv) = alg.matrices_at(t).unwrap();
        let err = (&mt * minv.transpose() - DMatrix::identity(n, n)).amax();
        // random constants make M ill-conditioned; rounding grows with ‖M‖ ‖M^{-T}‖
        let scale = mt.amax() * minv.amax() * (m * n) as f64;
        let tol = 1e-9_f64.max(4.0 * f64::EPSILON * scale);
        prop_assert!(err <= tol, "t = {t}: {err} > {tol}");
    }

    #[test]
    fn vector_replay_matches_matrix(n in 2usize..=32, m in 1usize..=200, seed: u64, t_frac in 0.0f64..=1.0) {
        let alg = build_random(n, m, seed, false).unwrap();
        let t = (t_frac * m as f64).round() as usize;
        let x: Vec<f64> = gaussian(n, 1, seed ^ 0x5eed).iter().copied().collect();
        let got = DVector::from_vec(alg.apply_to_vector(&x, t).unwrap());
        let want = alg.matrices_at(t).unwrap().0 * DVector::from_vec(x);
        prop_assert!((&got - &want).norm() <= 1e-9 * want.norm().max(1.0));
    }

    #[test]
    fn gates_only_rewrite_their_rows(n in 2usize..=16, m in 1usize..=60, seed: u64) {
        let alg = build_random(n, m, seed, false).unwrap();
        for t in 1..=m {
            let (m0, b0) = alg.matrices_at(t - 1).unwrap();
            let (m1, b1) = alg.matrices_at(t).unwrap();
            let touched = alg.gate_at_step(t).unwrap().touched();
            for r in (0..n).filter(|r| !touched.contains(*r)) {
                prop_assert_eq!(m0.row(r), m1.row(r));
                prop_assert_eq!(b0.row(r), b1.row(r));
            }
        }
    }

    #[test]
    fn unit_pair_potential_range(a in 2usize..=64, seed: u64) {
        let x = gaussian(a, 1, seed).normalize();
        let y = gaussian(a, 1, seed.wrapping_add(1)).normalize();
        let v = phi(&x, &y).unwrap();
        let bound = (a as f64).log2();
        // with two terms, each product can sit at ±1/e, past log2 2
        let bound = if a == 2 { 2.0 / (std::f64::consts::E * std::f64::consts::LN_2) } else { bound };
        prop_assert!(v.abs() <= bound + 1e-9);
        prop_assert!((v - phi_oracle(&x, &y)).abs() <= 1e-9);
    }

    #[test]
    fn orthogonal_change_bound(a in 2usize..=16, cols in 1usize..=16, seed: u64) {
        let x = gaussian(a, cols, seed);
        let y = gaussian(a, cols, seed.wrapping_add(1));
        let u = random_orthogonal(a, &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(2)));
        let diff = (phi_oracle(&x, &y) - phi_oracle(&(&u * &x), &(&u * &y))).abs();
        prop_assert!(diff <= x.norm() * y.norm() * (a as f64).log2() + 1e-7);
    }

    #[test]
    fn nonsingular_change_bound(a in 2usize..=16, cols in 1usize..=16, seed: u64) {
        let x = gaussian(a, cols, seed);
        let y = gaussian(a, cols, seed.wrapping_add(1));
        let d = gaussian(a, a, seed.wrapping_add(2));
        let Some(inv) = d.clone().try_inverse() else { return Ok(()); };
        let (dx, dy) = (&d * &x, inv.transpose() * &y);
        let diff = (phi_oracle(&x, &y) - phi_oracle(&dx, &dy)).abs();
        let bound = (x.norm() * y.norm() + dx.norm() * dy.norm()) * (a as f64).log2();
        prop_assert!(diff <= bound + 1e-7);
    }

    #[test]
    fn potential_is_scale_free(k in 1u32..=5, gamma in prop_oneof![-8.0f64..-0.125, 0.125f64..8.0]) {
        let n = 1usize << k;
        let f = walsh_hadamard_matrix(n);
        let scaled = &f * gamma;
        let inv_t = scaled.clone().try_inverse().unwrap().transpose();
        let base = phi_oracle(&f, &f.clone().try_inverse().unwrap().transpose());
        prop_assert!((phi(&scaled, &inv_t).unwrap() - base).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn per_step_change_within_bound(n in 2usize..=16, m in 1usize..=120, seed: u64, removed in 0usize..=2) {
        let alg = build_random(n, m, seed, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_orthogonal_projection(n, removed.min(n - 1), &mut rng);
        let q = random_orthogonal_projection(n, removed.min(n - 1), &mut rng);
        let trace = trace_potential(&alg, &p, &q).unwrap();
        prop_assert!(trace.worst_bound_excess() <= 1e-7);
        for t in [0, m / 2, m] {
            let (mt, minv) = alg.matrices_at(t).unwrap();
            let want = phi_oracle(&(&mt * &p), &(&minv * &q));
            prop_assert!((trace.values[t] - want).abs() <= 1e-7 * want.abs().max(1.0));
        }
    }

    #[test]
    fn identity_scan_rhs(n in 2usize..=16, m in 1usize..=80, seed: u64, r in 1usize..=5) {
        let r = r.min(n / 2);
        let alg = build_random(n, m, seed, false).unwrap();
        let id = DMatrix::identity(n, n);
        let report = scan_bottlenecks(&alg, &id, &id, ScanOptions::new(r)).unwrap();
        let (mm, minv) = alg.matrices_at(m).unwrap();
        let want = r as f64 * phi_oracle(&mm, &minv) / (m as f64 * (2.0 * r as f64).log2());
        prop_assert!((report.rhs - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn rotation_scan_is_two_everywhere(n in 2usize..=16, m in 1usize..=80, seed: u64) {
        let alg = build_random(n, m, seed, true).unwrap();
        let id = DMatrix::identity(n, n);
        let report = scan_bottlenecks(&alg, &id, &id, ScanOptions::new(1)).unwrap();
        prop_assert_eq!(report.per_step.len(), m);
        for step in &report.per_step {
            prop_assert!((step.lhs - 2.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn padding_keeps_real_steps(n in 4usize..=12, m in 1usize..=60, seed: u64, r in 2usize..=7) {
        let r = r.min(n / 2);
        // the padded tail of the last window adds no rows beyond the real gates
        let alg = build_random(n, m, seed, false).unwrap();
        let id = DMatrix::identity(n, n);
        let report = scan_bottlenecks(&alg, &id, &id, ScanOptions::new(r)).unwrap();
        prop_assert_eq!(report.padded_m, m.div_ceil(r) * r);
        prop_assert!(report.per_step.iter().all(|s| s.t <= report.padded_m));
        let (mm, minv) = alg.matrices_at(m).unwrap();
        let last = report.per_step.last().unwrap();
        let norm_sq = |a: &DMatrix<f64>| last.rows.iter().map(|&i| a.row(i).norm_squared()).sum::<f64>();
        prop_assert!((last.lhs - (norm_sq(&mm) * norm_sq(&minv)).sqrt()).abs() <= 1e-9 * last.lhs.max(1.0));
    }

    #[test]
    fn quantization_is_idempotent(v in -1e6f64..1e6, k in -20i32..=4) {
        let eps = 2f64.powi(k);
        let once = quantize(v, eps);
        prop_assert_eq!(quantize(once, eps), once);
        prop_assert!((once - v).abs() <= eps / 2.0);
    }

    #[test]
    fn quantization_is_idempotent_off_grid(v in -1e3f64..1e3, eps in 1e-4f64..1.0) {
        let once = quantize(v, eps);
        prop_assert_eq!(quantize(once, eps), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn extension_widths_respect_floor(n in 2usize..=16, size_frac in 0.0f64..1.0, seed: u64) {
        let size = ((size_frac * n as f64) as usize).min(n - 1);
        let u = random_orthogonal(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let vectors = (0..size).map(|k| u.column(k).iter().copied().collect()).collect();
        let sys = DirectionSystem::from_vectors(DirectionKind::Underflow, vectors, vec![1.0; size]);
        let basis = extend_basis(&sys, n).unwrap();
        for j in size..n {
            let floor = (1.0 - j as f64 / n as f64).sqrt();
            prop_assert!(basis.gammas[j] >= floor - 1e-9, "j = {j}");
        }
        let gram = DMatrix::from_fn(n, n, |a, b| {
            basis.u_vectors[a].iter().zip(&basis.u_vectors[b]).map(|(x, y)| x * y).sum::<f64>()
        });
        prop_assert!((gram - DMatrix::identity(n, n)).amax() <= 1e-9);
    }
}

#[test]
fn wht_gate_counts_and_columns() {
    for k in 1..=8 {
        let n = 1usize << k;
        let alg = build_wht(n).unwrap();
        assert_eq!(alg.m(), n * k);
        assert_eq!(alg.rotation_count(), n * k / 2);
        let f = alg.final_matrix();
        for col in f.column_iter() {
            assert!((col.norm() - 1.0).abs() <= 1e-10);
        }
        assert!(alg.validate().max_residual <= 1e-9);
    }
}

#[test]
fn dft_is_orthogonal() {
    for n in [4, 8, 16, 32, 64] {
        let alg = build_dft_real(n).unwrap();
        let f = alg.final_matrix();
        assert!((&f * f.transpose() - DMatrix::identity(f.nrows(), f.nrows())).amax() <= 1e-9);
        assert!(alg.validate().max_residual <= 1e-9);
    }
}

/// Soundness: with the final projections, no candidate clears the threshold,
/// so the product scan is below `τ²` too.
fn assert_sound(alg: &fourier_bottleneck::LinearAlgorithm, tau: f64) -> (usize, usize) {
    let ex = extract_directions(alg, ExtractOptions::new(tau)).unwrap();
    let mut worst = 0.0f64;
    for t in 1..=alg.m() {
        let (mt, minv) = alg.matrices_at(t).unwrap();
        let (a, b) = (&mt * &ex.p, &minv * &ex.q);
        for &i in alg.gate_at_step(t).unwrap().touched().as_slice() {
            worst = worst.max(a.row(i).norm() * b.row(i).norm());
        }
    }
    assert!(worst < tau * tau, "max product {worst}");
    for sys in [&ex.overflow, &ex.underflow] {
        assert!(sys.gram_deviation() <= 1e-9);
        assert!(sys.locations_distinct());
        assert!(2 * sys.distinct_steps() >= sys.len());
        assert!(sys.magnitudes.iter().all(|&x| x >= tau));
    }
    (ex.overflow.len(), ex.underflow.len())
}

#[test]
fn extraction_is_sound_and_grows_with_n() {
    for n in [8, 16, 32] {
        let (k, l) = assert_sound(&build_scaled_bottleneck_fixture(n, 4.0, n / 2).unwrap(), 2.0);
        assert!(k >= n / 2, "n = {n}: k = {k}");
        assert_eq!(l, 0);
        let (k, l) = assert_sound(&build_inverse_bottleneck_fixture(n, 4.0, n / 2).unwrap(), 2.0);
        assert_eq!(k, 0);
        assert!(l >= n / 2);
    }
    assert_sound(&build_wht(16).unwrap(), 1.5);
}

#[test]
fn doubling_sigma_adds_one_bit() {
    let alg = build_wht(8).unwrap();
    let mut opts = SimulateOptions::new(2f64.powi(-10));
    opts.samples = 100_000;
    let a = simulate(&alg, opts).unwrap();
    opts.sigma = 2.0;
    let b = simulate(&alg, opts).unwrap();
    let (ta, tb) = (a.mean_bits_table(), b.mean_bits_table());
    for (ra, rb) in ta.iter().zip(&tb) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((y - x - 1.0).abs() <= 0.1, "{x} -> {y}");
        }
    }
}

#[test]
fn identity_trace_of_wht_reaches_n_log_n() {
    for k in 1..=6 {
        let n = 1usize << k;
        let trace = trace_potential_identity(&build_wht(n).unwrap()).unwrap();
        assert!((trace.final_value() - (n * k) as f64).abs() <= 1e-9);
    }
}
