//! Tikhonov-regularized least squares via the normal equations.

use nalgebra::DMatrix;

use crate::tensor::C64;

/// Solution of `min |A w - b|^2 + lambda |w|^2` for every column of `B`.
pub(crate) struct LsqFit {
    pub weights: DMatrix<C64>,
    /// Absolute lambda actually used.
    pub lambda: f64,
}

/// `lambda = rel_lambda * mean(diag(A^H A))`, which keeps the regularization
/// independent of data scaling. With `lambda == 0` (or a failed Cholesky) the
/// minimum-norm solution is returned through an SVD of the Gram matrix.
pub(crate) fn solve_gram(gram: &DMatrix<C64>, rhs: &DMatrix<C64>, rel_lambda: f64) -> LsqFit {
    let n = gram.nrows();
    let mean_diag = (0..n).map(|i| gram[(i, i)].re).sum::<f64>() / n.max(1) as f64;
    let lambda = rel_lambda * mean_diag;
    let mut g = gram.clone();
    for i in 0..n {
        g[(i, i)] += C64::new(lambda, 0.0);
    }
    if lambda > 0.0 {
        if let Some(ch) = g.clone().cholesky() {
            return LsqFit {
                weights: ch.solve(rhs),
                lambda,
            };
        }
    }
    let svd = g.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * n as f64 * f64::EPSILON;
    let weights = svd
        .solve(rhs, tol)
        .expect("both singular vector sets were computed");
    LsqFit { weights, lambda }
}

pub(crate) fn solve(a: &DMatrix<C64>, b: &DMatrix<C64>, rel_lambda: f64) -> LsqFit {
    solve_gram(&a.ad_mul(a), &a.ad_mul(b), rel_lambda)
}

/// Per-column relative residual `|A w - b| / |b|`.
pub(crate) fn relative_residuals(a: &DMatrix<C64>, w: &DMatrix<C64>, b: &DMatrix<C64>) -> Vec<f64> {
    let r = a * w - b;
    (0..b.ncols())
        .map(|j| {
            let bn = b.column(j).norm();
            if bn > 0.0 {
                r.column(j).norm() / bn
            } else {
                r.column(j).norm()
            }
        })
        .collect()
}
