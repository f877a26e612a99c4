//! Reference algorithms: fast Walsh-Hadamard, the real embedding of the
//! radix-2 DFT, seeded random gate lists and diagonal-scaling fixtures.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{Gate, LinearAlgorithm};

fn log2_exact(n: usize) -> Result<u32> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::param(format!("n must be a power of two >= 2, got {n}")));
    }
    Ok(n.trailing_zeros())
}

/// Normalized butterfly `(x_i, x_j) -> ((x_i + x_j)/√2, (x_i - x_j)/√2)`.
fn butterfly(i: usize, j: usize) -> [Gate; 2] {
    [
        Gate::Rotation { i, j, theta: FRAC_PI_4 },
        Gate::Constant { i: j, c: -1.0 },
    ]
}

fn swap(i: usize, j: usize) -> [Gate; 2] {
    Gate::swap(i, j).expect("distinct swap indices")
}

/// In-place fast Walsh-Hadamard transform, `(n/2) log2 n` butterflies.
pub fn build_wht(n: usize) -> Result<LinearAlgorithm> {
    let k = log2_exact(n)?;
    let mut gates = Vec::with_capacity(n * k as usize);
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                gates.extend(butterfly(i, i + h));
            }
        }
        h *= 2;
    }
    LinearAlgorithm::new(n, gates, format!("wht {n}"))
}

/// `F(k, l) = n^{-1/2} (-1)^{popcount(k & l)}`.
pub fn walsh_hadamard_matrix(n: usize) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |k, l| {
        if (k & l).count_ones() % 2 == 0 {
            scale
        } else {
            -scale
        }
    })
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Real embedding of the normalized `n/2`-point DFT.
///
/// Word `2k` holds `Re z_k` and word `2k + 1` holds `Im z_k`. Decimation in
/// time: a bit-reversal permutation made of swaps, then `log2(n/2)` stages
/// in which the odd input of every butterfly is multiplied by the twiddle
/// `e^{-iφ}` (a rotation of its `(Re, Im)` pair by angle `φ`) and the
/// normalized butterfly runs separately on the real and imaginary words.
/// Trivial twiddles (`φ = 0`) emit no gate.
pub fn build_dft_real(n: usize) -> Result<LinearAlgorithm> {
    if n < 4 {
        return Err(Error::param(format!("real DFT embedding needs n >= 4, got {n}")));
    }
    log2_exact(n)?;
    let points = n / 2;
    let bits = points.trailing_zeros();
    let re = |k: usize| 2 * k;
    let im = |k: usize| 2 * k + 1;

    let mut gates = Vec::new();
    for k in 0..points {
        let r = bit_reverse(k, bits);
        if k < r {
            gates.extend(swap(re(k), re(r)));
            gates.extend(swap(im(k), im(r)));
        }
    }
    let mut half = 1;
    while half < points {
        let size = 2 * half;
        for start in (0..points).step_by(size) {
            for k in 0..half {
                let a = start + k;
                let b = a + half;
                let phi = 2.0 * PI * k as f64 / size as f64;
                if k != 0 {
                    gates.push(Gate::Rotation {
                        i: re(b),
                        j: im(b),
                        theta: phi,
                    });
                }
                gates.extend(butterfly(re(a), re(b)));
                gates.extend(butterfly(im(a), im(b)));
            }
        }
        half = size;
    }
    LinearAlgorithm::new(n, gates, format!("dft-real {n}"))
}

/// Real embedding of `F(k, l) = N^{-1/2} e^{-2πi kl/N}` with `N = n/2`:
/// block `(k, l)` is `[[Re f, -Im f], [Im f, Re f]]`.
pub fn dft_real_matrix(n: usize) -> DMatrix<f64> {
    let points = n / 2;
    let scale = 1.0 / (points as f64).sqrt();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..points {
        for l in 0..points {
            // reduce kl mod N before forming the angle to keep it accurate
            let phase = -2.0 * PI * ((k * l) % points) as f64 / points as f64;
            let (s, c) = phase.sin_cos();
            out[(2 * k, 2 * l)] = scale * c;
            out[(2 * k, 2 * l + 1)] = -scale * s;
            out[(2 * k + 1, 2 * l)] = scale * s;
            out[(2 * k + 1, 2 * l + 1)] = scale * c;
        }
    }
    out
}

/// Seeded random gate list. Angles are uniform on `[0, 2π)`; unless
/// `angle_only`, a gate is a constant with probability 1/4 with
/// `log2 |c|` uniform on `[-3, 3]` and a random sign.
pub fn build_random(n: usize, m: usize, seed: u64, angle_only: bool) -> Result<LinearAlgorithm> {
    if m == 0 {
        return Err(Error::param("random algorithm needs m >= 1"));
    }
    if n < 2 {
        return Err(Error::param(format!("dimension must be at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = (0..m)
        .map(|_| {
            if !angle_only && rng.random_bool(0.25) {
                let i = rng.random_range(0..n);
                let magnitude = rng.random_range(-3.0f64..=3.0).exp2();
                let c = if rng.random_bool(0.5) { magnitude } else { -magnitude };
                Gate::Constant { i, c }
            } else {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                let theta = rng.random_range(0.0..2.0 * PI);
                Gate::Rotation { i, j, theta }
            }
        })
        .collect();
    LinearAlgorithm::new(
        n,
        gates,
        format!("random n={n} m={m} seed={seed} angle_only={angle_only}"),
    )
}

fn check_fixture(n: usize, c: f64, k: usize) -> Result<()> {
    log2_exact(n)?;
    if !(c > 1.0 && c.is_finite()) {
        return Err(Error::param(format!("scale must be finite and > 1, got {c}")));
    }
    if k == 0 || k > n {
        return Err(Error::param(format!("affected rows must be in 1..={n}, got {k}")));
    }
    Ok(())
}

/// Scales rows `0..k` by `c`, undoes the scaling, then runs the WHT. Rows of
/// the intermediate matrices reach norm `c`: an engineered overflow.
pub fn build_scaled_bottleneck_fixture(n: usize, c: f64, k: usize) -> Result<LinearAlgorithm> {
    scaled_fixture(n, c, k, false)
}

/// Mirror image of [`build_scaled_bottleneck_fixture`]: scale by `1/c` first,
/// so rows of the inverse-transpose reach norm `c` (underflow).
pub fn build_inverse_bottleneck_fixture(n: usize, c: f64, k: usize) -> Result<LinearAlgorithm> {
    scaled_fixture(n, c, k, true)
}

fn scaled_fixture(n: usize, c: f64, k: usize, inverse: bool) -> Result<LinearAlgorithm> {
    check_fixture(n, c, k)?;
    let (first, second) = if inverse { (1.0 / c, c) } else { (c, 1.0 / c) };
    let mut gates: Vec<Gate> = (0..k).map(|i| Gate::Constant { i, c: first }).collect();
    gates.extend((0..k).map(|i| Gate::Constant { i, c: second }));
    gates.extend(build_wht(n)?.gates().iter().copied());
    let kind = if inverse { "inverse" } else { "scaled" };
    LinearAlgorithm::new(n, gates, format!("{kind} bottleneck n={n} c={c} k={k}"))
}

/// Everything a builder needs, as one value (CLI `build` input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureSpec {
    Wht { n: usize },
    DftReal { n: usize },
    Random { n: usize, m: usize, seed: u64, angle_only: bool },
    ScaledBottleneck { n: usize, c: f64, k: usize },
    InverseBottleneck { n: usize, c: f64, k: usize },
}

impl FixtureSpec {
    pub fn build(&self) -> Result<LinearAlgorithm> {
        match *self {
            FixtureSpec::Wht { n } => build_wht(n),
            FixtureSpec::DftReal { n } => build_dft_real(n),
            FixtureSpec::Random { n, m, seed, angle_only } => build_random(n, m, seed, angle_only),
            FixtureSpec::ScaledBottleneck { n, c, k } => build_scaled_bottleneck_fixture(n, c, k),
            FixtureSpec::InverseBottleneck { n, c, k } => build_inverse_bottleneck_fixture(n, c, k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn dense_product(alg: &LinearAlgorithm) -> DMatrix<f64> {
        // independent of the row-operation path: multiply gate matrices
        alg.gates()
            .iter()
            .fold(DMatrix::identity(alg.n(), alg.n()), |acc, g| {
                g.matrix(alg.n()) * acc
            })
    }

    #[test]
    fn wht2_gate_list() {
        let alg = build_wht(2).unwrap();
        assert_eq!(
            alg.gates(),
            &[
                Gate::Rotation { i: 0, j: 1, theta: FRAC_PI_4 },
                Gate::Constant { i: 1, c: -1.0 }
            ]
        );
        let h = FRAC_1_SQRT_2;
        let f = DMatrix::from_row_slice(2, 2, &[h, h, h, -h]);
        assert!((dense_product(&alg) - f).amax() < 1e-15);
    }

    #[test]
    fn wht_matches_sign_formula() {
        for n in [4, 8, 16, 64] {
            let alg = build_wht(n).unwrap();
            assert_eq!(alg.m(), n * n.trailing_zeros() as usize);
            assert_eq!(alg.rotation_count(), alg.m() / 2);
            let err = (dense_product(&alg) - walsh_hadamard_matrix(n)).amax();
            assert!(err < 1e-10, "n={n} err={err}");
            for col in alg.final_matrix().column_iter() {
                assert!((col.norm() - 1.0).abs() < 1e-10);
            }
        }
        assert!(build_wht(6).is_err());
        assert!(build_wht(1).is_err());
    }

    #[test]
    fn dft_real_two_point() {
        let alg = build_dft_real(4).unwrap();
        let h = FRAC_1_SQRT_2;
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            h, 0.0, h, 0.0,
            0.0, h, 0.0, h,
            h, 0.0, -h, 0.0,
            0.0, h, 0.0, -h,
        ]);
        assert!((dense_product(&alg) - expected).amax() < 1e-15);
        assert!(build_dft_real(2).is_err());
        assert!(build_dft_real(12).is_err());
    }

    #[test]
    fn dft_real_matches_complex_oracle() {
        for n in [8, 16, 32, 64] {
            let alg = build_dft_real(n).unwrap();
            let m = dense_product(&alg);
            let err = (&m - dft_real_matrix(n)).amax();
            assert!(err < 1e-9, "n={n} err={err}");
            let orth = (&m * m.transpose() - DMatrix::identity(n, n)).amax();
            assert!(orth < 1e-9);
        }
    }

    #[test]
    fn random_is_deterministic() {
        let a = build_random(6, 40, 11, false).unwrap();
        let b = build_random(6, 40, 11, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, build_random(6, 40, 12, false).unwrap());
        assert!(build_random(6, 0, 1, false).is_err());
        let rot = build_random(5, 60, 3, true).unwrap();
        assert!(rot.gates().iter().all(Gate::is_rotation));
        let d = rot.validate();
        assert!(d.condition_numbers.iter().all(|k| (k - 1.0).abs() < 1e-9));
        for g in a.gates() {
            if let Gate::Constant { c, .. } = *g {
                assert!((-3.0..=3.0).contains(&c.abs().log2()));
            }
        }
    }

    #[test]
    fn scaled_fixture_rows_and_condition() {
        let alg = build_scaled_bottleneck_fixture(4, 4.0, 2).unwrap();
        let (m2, _) = alg.matrices_at(2).unwrap();
        assert_eq!(m2.row(0).norm(), 4.0);
        assert_eq!(m2.row(1).norm(), 4.0);
        assert_eq!(m2.row(2).norm(), 1.0);
        assert!((alg.final_matrix() - walsh_hadamard_matrix(4)).amax() < 1e-10);
        let d = alg.validate();
        assert!((d.max_condition_number() - 4.0).abs() < 1e-9);
        assert!(d.max_residual < 1e-9);

        assert!(build_scaled_bottleneck_fixture(4, 1.0, 2).is_err());
        assert!(build_scaled_bottleneck_fixture(4, 4.0, 0).is_err());
        assert!(build_scaled_bottleneck_fixture(4, 4.0, 5).is_err());
    }

    #[test]
    fn builders_have_small_residuals() {
        for alg in [
            build_wht(32).unwrap(),
            build_dft_real(32).unwrap(),
            build_inverse_bottleneck_fixture(8, 4.0, 4).unwrap(),
            build_random(8, 60, 5, false).unwrap(),
        ] {
            assert!(alg.validate().max_residual <= 1e-9, "{}", alg.label);
        }
        let d = build_dft_real(16).unwrap().validate();
        assert!(d.condition_numbers.iter().all(|k| (k - 1.0).abs() < 1e-9));
    }
}
