//! Small dense linear algebra: symmetric eigendecomposition, Lyapunov
//! equations and Hurwitz margins.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{check_dim, Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// `A = P diag(π) Pᵀ` with `π` ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }

    /// Orthogonal projector onto the span of eigenvectors with `π_k < threshold`.
    pub fn projector_below(&self, threshold: f64) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        let mut proj = DMatrix::zeros(n, n);
        for (k, &pi) in self.eigenvalues.iter().enumerate() {
            if pi < threshold {
                let w = self.eigenvectors.column(k);
                proj += w * w.transpose();
            }
        }
        proj
    }
}

/// Frobenius norm of `A − Aᵀ`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Eigenvalues are sorted ascending and the first nonzero entry of each
/// eigenvector is made positive.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    check_dim(a.nrows(), a.ncols())?;
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOLERANCE * a.norm().max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::Asymmetric(asym));
    }
    let n = a.nrows();
    let mut m = (a + a.transpose()) * 0.5;
    let mut p = DMatrix::<f64>::identity(n, n);
    let scale = m.norm();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale * 1e-2 || off == 0.0 {
            break;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let aij = m[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                let theta = (m[(j, j)] - m[(i, i)]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut p, i, j, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| m[(k, k)]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut v = p.column(k).into_owned();
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-14) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        eigenvectors.set_column(col, &v);
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Applies the rotation zeroing `m[(i, j)]`: `m ← Jᵀ m J`, `p ← p J`.
fn rotate(m: &mut DMatrix<f64>, p: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    let n = m.nrows();
    for k in 0..n {
        let (mki, mkj) = (m[(k, i)], m[(k, j)]);
        m[(k, i)] = c * mki - s * mkj;
        m[(k, j)] = s * mki + c * mkj;
    }
    for k in 0..n {
        let (mik, mjk) = (m[(i, k)], m[(j, k)]);
        m[(i, k)] = c * mik - s * mjk;
        m[(j, k)] = s * mik + c * mjk;
    }
    m[(i, j)] = 0.0;
    m[(j, i)] = 0.0;
    for k in 0..n {
        let (pki, pkj) = (p[(k, i)], p[(k, j)]);
        p[(k, i)] = c * pki - s * pkj;
        p[(k, j)] = s * pki + c * pkj;
    }
}

/// Real parts of the eigenvalues of a general square matrix, via the real
/// Schur form. `None` if the QR iteration does not converge.
pub fn eigenvalue_real_parts(b: &DMatrix<f64>) -> Option<Vec<f64>> {
    if b.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = Schur::try_new(b.clone(), f64::EPSILON, 10_000)?;
    Some(schur.complex_eigenvalues().iter().map(|z| z.re).collect())
}

/// `−max Re λ(B)`; positive iff `B` is Hurwitz. NaN if the eigenvalue
/// iteration fails to converge.
pub fn hurwitz_margin(b: &DMatrix<f64>) -> f64 {
    match eigenvalue_real_parts(b) {
        Some(re) => -re.into_iter().fold(f64::NEG_INFINITY, f64::max),
        None => f64::NAN,
    }
}

/// Solves `BΓ + ΓBᵀ = −Q` by vectorization, `(I ⊗ B + B ⊗ I) vec Γ = −vec Q`.
pub fn lyapunov_solve(b: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    check_dim(n, b.ncols())?;
    check_dim(n, q.nrows())?;
    check_dim(n, q.ncols())?;
    let margin = hurwitz_margin(b);
    if !(margin > 0.0) {
        return Err(Error::NotHurwitz(margin));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let kron = eye.kronecker(b) + b.kronecker(&eye);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let sol = kron.lu().solve(&rhs).ok_or(Error::Singular)?;
    if sol.iter().any(|c| !c.is_finite()) {
        return Err(Error::Singular);
    }
    let gamma = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&gamma + gamma.transpose()) * 0.5)
}

/// `‖BΓ + ΓBᵀ + Q‖_F`.
pub fn lyapunov_residual(b: &DMatrix<f64>, gamma: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (b * gamma + gamma * b.transpose() + q).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_input() {
        let e = sym_eigen(&DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 3.0]);
        assert_eq!(e.eigenvectors, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn swap_matrix() {
        let e = sym_eigen(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(e.eigenvalues[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            e.eigenvectors.column(0).into_owned(),
            DVector::from_vec(vec![r, -r]),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            e.eigenvectors.column(1).into_owned(),
            DVector::from_vec(vec![r, r]),
            epsilon = 1e-14
        );
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eigen(&a), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn empty_and_scalar() {
        let e = sym_eigen(&DMatrix::from_row_slice(1, 1, &[-2.5])).unwrap();
        assert_eq!(e.eigenvalues[0], -2.5);
        assert_eq!(e.eigenvectors[(0, 0)], 1.0);
        assert_eq!(sym_eigen(&DMatrix::zeros(0, 0)).unwrap().eigenvalues.len(), 0);
    }

    #[test]
    fn scalar_lyapunov() {
        let g = lyapunov_solve(&DMatrix::from_element(1, 1, -2.0), &DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn identity_lyapunov() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let g = lyapunov_solve(&(-&eye), &eye).unwrap();
        assert_relative_eq!(g, eye * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn unstable_lyapunov_rejected() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            lyapunov_solve(&b, &DMatrix::identity(2, 2)),
            Err(Error::NotHurwitz(_))
        ));
    }

    #[test]
    fn margins() {
        assert_relative_eq!(
            hurwitz_margin(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0])),
            1.0
        );
        // [[-1, 1], [-1, 0]]: roots of λ² + λ + 1.
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 0.0]);
        assert_relative_eq!(hurwitz_margin(&h), 0.5, epsilon = 1e-12);
        // [[-1, -1], [-1, 0]]: roots of λ² + λ − 1, one at (−1 + √5)/2.
        let trap = DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, -1.0, 0.0]);
        assert_relative_eq!(hurwitz_margin(&trap), -0.618_033_988_749_894_9, epsilon = 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn symmetric(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
            prop::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| {
                let m = DMatrix::from_vec(n, n, v);
                (&m + m.transpose()) * 0.5
            })
        }

        fn stable(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
            prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
                let m = DMatrix::from_vec(n, n, v);
                let margin = hurwitz_margin(&m);
                m - DMatrix::identity(n, n) * (0.5 - margin.min(0.0) + 0.1)
            })
        }

        proptest! {
            #[test]
            fn jacobi_reconstructs(a in (1usize..7).prop_flat_map(symmetric)) {
                let n = a.nrows();
                let e = sym_eigen(&a).unwrap();
                let orth = (e.eigenvectors.transpose() * &e.eigenvectors - DMatrix::identity(n, n)).norm();
                prop_assert!(orth <= 1e-10);
                prop_assert!((&a - e.reconstruct()).norm() <= 1e-8 * a.norm().max(1e-300));
                prop_assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
            }

            #[test]
            fn two_by_two_matches_characteristic_roots(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
                let e = sym_eigen(&DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap();
                let mid = (a + c) / 2.0;
                let rad = (((a - c) / 2.0).powi(2) + b * b).sqrt();
                prop_assert!((e.eigenvalues[0] - (mid - rad)).abs() <= 1e-10 * (1.0 + rad + mid.abs()));
                prop_assert!((e.eigenvalues[1] - (mid + rad)).abs() <= 1e-10 * (1.0 + rad + mid.abs()));
            }

            #[test]
            fn lyapunov_residual_small(b in (1usize..6).prop_flat_map(stable), seed in 0u64..1000) {
                let n = b.nrows();
                let f = DMatrix::from_fn(n, n, |i, j| (((i * 7 + j * 3) as u64 + seed) % 11) as f64 / 11.0 - 0.5);
                let q = &f * f.transpose();
                let g = lyapunov_solve(&b, &q).unwrap();
                prop_assert!(lyapunov_residual(&b, &g, &q) <= 1e-9 * (1.0 + q.norm()));
                let e = sym_eigen(&g).unwrap();
                prop_assert!(e.eigenvalues[0] >= -1e-9);
            }
        }
    }
}
