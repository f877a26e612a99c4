//! Small dense helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// `‖A[rows, :]‖_F²`.
pub fn rows_frobenius_sq(a: &DMatrix<f64>, rows: &[usize]) -> f64 {
    rows.iter().map(|&r| a.row(r).norm_squared()).sum()
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (k, mut col) in q.column_iter_mut().enumerate() {
        if r[(k, k)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// `Id - Σ v vᵀ` for orthonormal `vectors`.
pub fn complement_projection(n: usize, vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n);
    for v in vectors {
        p -= v * v.transpose();
    }
    p
}

/// Orthogonal projection of rank `n - removed` onto the complement of a
/// random `removed`-dimensional subspace.
pub fn random_orthogonal_projection<R: Rng + ?Sized>(
    n: usize,
    removed: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let u = random_orthogonal(n, rng);
    let basis: Vec<DVector<f64>> = (0..removed).map(|k| u.column(k).into_owned()).collect();
    complement_projection(n, &basis)
}

/// Diagonal 0/1 projection onto the listed coordinates.
pub fn coordinate_projection(n: usize, coords: &[usize]) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for &c in coords {
        p[(c, c)] = 1.0;
    }
    p
}

/// Symmetric with spectrum in `[-tol, 1 + tol]`.
pub fn is_psd_contraction(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() || (m - m.transpose()).amax() > tol {
        return false;
    }
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.iter().all(|&l| l >= -tol && l <= 1.0 + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 5, 16] {
            let u = random_orthogonal(n, &mut rng);
            assert!((&u * u.transpose() - DMatrix::identity(n, n)).amax() < 1e-12);
        }
    }

    #[test]
    fn projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_orthogonal_projection(8, 3, &mut rng);
        assert!((&p * &p - &p).amax() < 1e-12);
        assert!((p.trace() - 5.0).abs() < 1e-12);
        assert!(is_psd_contraction(&p, 1e-9));
        assert!(!is_psd_contraction(&(p * 1.5), 1e-9));
        let c = coordinate_projection(4, &[0, 2]);
        assert_eq!(c.trace(), 2.0);
        assert_eq!(rows_frobenius_sq(&c, &[0, 1]), 1.0);
    }
}
