//! Small dense complex linear-algebra helpers shared by the POVM and
//! operator-integral layers. Eigendecomposition of Hermitian matrices is
//! delegated to nalgebra; everything here is plumbing around it.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::{C64, CMatrix, CVector};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Hermiticity defect `max |A - A*|` entrywise.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let adj = a.adjoint();
    (a - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Symmetrize: `(A + A*) / 2`.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).map(|z| z * 0.5)
}

/// Frobenius norm.
pub fn fro_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, eigenvalues ascending.
/// Columns of the returned matrix are the orthonormal eigenvectors.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let sym = hermitize(a);
    let eig = SymmetricEigen::try_new(sym, 1e-14, 10_000).ok_or_else(|| {
        Error::DecompositionFailure("symmetric eigendecomposition did not converge".into())
    })?;
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = a.nrows();
    let mut vecs = CMatrix::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &CMatrix) -> Result<f64> {
    Ok(hermitian_eigen(a)?.0[0])
}

/// Spectral norm of a Hermitian matrix: `max |eigenvalue|`.
pub fn hermitian_spectral_norm(a: &CMatrix) -> Result<f64> {
    let (vals, _) = hermitian_eigen(a)?;
    Ok(vals.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
}

/// Positive square root of a PSD Hermitian matrix. Eigenvalues below
/// `-clip_tol` are rejected; small negatives from rounding are clamped to 0.
pub fn psd_sqrt(a: &CMatrix, clip_tol: f64) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(a)?;
    if let Some(v) = vals.iter().find(|&&v| v < -clip_tol) {
        return Err(Error::DecompositionFailure(format!(
            "matrix is not positive semidefinite (eigenvalue {v:.3e})"
        )));
    }
    let n = a.nrows();
    let mut d = CMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = c(vals[i].max(0.0).sqrt(), 0.0);
    }
    Ok(&vecs * d * vecs.adjoint())
}

/// Inverse square root of a positive definite Hermitian matrix.
pub fn pd_inv_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(a)?;
    if vals[0] <= 0.0 {
        return Err(Error::DecompositionFailure(
            "matrix is not positive definite".into(),
        ));
    }
    let n = a.nrows();
    let mut d = CMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = c(1.0 / vals[i].sqrt(), 0.0);
    }
    Ok(&vecs * d * vecs.adjoint())
}

/// Numerical rank of a Hermitian PSD matrix: eigenvalues above
/// `dim * eps * max_eigenvalue` count.
pub fn psd_rank(vals: &[f64]) -> usize {
    let max = vals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    let thresh = vals.len() as f64 * f64::EPSILON * max;
    vals.iter().filter(|&&v| v > thresh).count()
}

pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

/// Standard complex Gaussian matrix (entries with independent N(0,1)
/// real and imaginary parts).
pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Random Hermitian matrix `(G + G*) / 2`.
pub fn gaussian_hermitian<R: Rng>(rng: &mut R, dim: usize) -> CMatrix {
    hermitize(&gaussian_matrix(rng, dim, dim))
}

/// Random unit vector with complex Gaussian coefficients.
pub fn gaussian_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let n = v.norm();
        if n > 1e-6 {
            return v / c(n, 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = gaussian_hermitian(&mut rng, 5);
        let (vals, vecs) = hermitian_eigen(&a).unwrap();
        let mut d = CMatrix::zeros(5, 5);
        for i in 0..5 {
            d[(i, i)] = c(vals[i], 0.0);
        }
        let rec = &vecs * d * vecs.adjoint();
        assert!(fro_norm(&(rec - a)) < 1e-12);
        // Orthonormal columns.
        let gram = vecs.adjoint() * &vecs;
        let eye = CMatrix::identity(5, 5);
        assert!(fro_norm(&(gram - eye)) < 1e-12);
        // Ascending order.
        for w in vals.windows(2) {
            assert!(w[0] <= w[1] + 1e-14);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gaussian_matrix(&mut rng, 4, 4);
        let a = &g.adjoint() * &g; // PSD
        let r = psd_sqrt(&a, 1e-10).unwrap();
        assert!(fro_norm(&(&r * &r - a)) < 1e-10);
        assert!(hermiticity_defect(&r) < 1e-12);
    }

    #[test]
    fn inv_sqrt_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = gaussian_matrix(&mut rng, 4, 4);
        let a = &g.adjoint() * &g + CMatrix::identity(4, 4).map(|z| z * c(0.1, 0.0));
        let w = pd_inv_sqrt(&a).unwrap();
        let prod = &w * a * &w;
        assert!(fro_norm(&(prod - CMatrix::identity(4, 4))) < 1e-10);
    }

    #[test]
    fn rank_counts_positive_part() {
        // Projection onto a 2-dim subspace of C^4.
        let mut p = CMatrix::zeros(4, 4);
        p[(0, 0)] = c(1.0, 0.0);
        p[(2, 2)] = c(1.0, 0.0);
        let (vals, _) = hermitian_eigen(&p).unwrap();
        assert_eq!(psd_rank(&vals), 2);
    }

    #[test]
    fn gaussian_is_deterministic_per_seed() {
        let a = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(42), 3, 3);
        let b = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(42), 3, 3);
        assert_eq!(a, b);
        let n = gaussian_unit_vector(&mut ChaCha8Rng::seed_from_u64(1), 6).norm();
        assert_relative_eq!(n, 1.0, max_relative = 1e-14);
    }
}
