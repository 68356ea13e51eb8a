//! Dense least-squares machinery: OLS fits, hat-matrix diagonals, and exact
//! leave-one-out predictions.
//!
//! Fits go through a singular value decomposition rather than the normal
//! equations, so rank-deficient designs resolve to the minimum-norm solution
//! and the hat diagonals come straight from the orthonormal column basis
//! (h_ii = Σ_k U_ik²). The error variance convention is the Gaussian MLE
//! σ̂² = RSS / n, matching the information-criterion formulas downstream.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("empty input: design matrix needs at least one row and one column")]
    EmptyInput,
    #[error("dimension mismatch: design has {rows} rows but y has {len} entries")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("leverage one: h_{index} = {value} makes the leave-one-out fit undefined")]
    LeverageOne { index: usize, value: f64 },
    #[error("singular value decomposition did not converge")]
    SvdFailed,
}

/// An ordinary least squares fit of one design matrix.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Coefficients β̂ (minimum-norm when the design is rank deficient).
    pub beta: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    /// MLE error variance RSS / n_rows (no degrees-of-freedom correction).
    pub sigma2_mle: f64,
    /// Hat-matrix diagonal; each entry lies in [0, 1] and the sum equals the
    /// design rank.
    pub hat_diag: DVector<f64>,
}

/// Reusable orthogonal factorization of a fixed design matrix.
///
/// The full-conformal loop refits the same designs against hundreds of
/// trial outcome vectors; factoring once and solving per right-hand side
/// turns each refit into two matrix-vector products.
#[derive(Debug, Clone)]
pub struct LeastSquaresBasis {
    /// Orthonormal basis of the column space (n × rank).
    u: DMatrix<f64>,
    /// Maps Uᵀy to β̂: columns are v_k / σ_k (p × rank).
    beta_map: DMatrix<f64>,
    hat_diag: DVector<f64>,
    rank: usize,
    nrows: usize,
}

impl LeastSquaresBasis {
    pub fn new(x: &DMatrix<f64>) -> Result<Self, LinalgError> {
        let (n, p) = (x.nrows(), x.ncols());
        if n == 0 || p == 0 {
            return Err(LinalgError::EmptyInput);
        }
        let svd = x.clone().try_svd(true, true, f64::EPSILON, 0).ok_or(LinalgError::SvdFailed)?;
        let u_full = svd.u.as_ref().expect("svd computed with u");
        let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
        let sv = &svd.singular_values;

        let max_sv = sv.iter().cloned().fold(0.0f64, f64::max);
        let tol = max_sv * (n.max(p) as f64) * f64::EPSILON;
        let kept: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > tol).collect();
        let rank = kept.len();

        let mut u = DMatrix::zeros(n, rank);
        let mut beta_map = DMatrix::zeros(p, rank);
        for (out, &k) in kept.iter().enumerate() {
            u.set_column(out, &u_full.column(k));
            let inv = 1.0 / sv[k];
            for j in 0..p {
                beta_map[(j, out)] = v_t[(k, j)] * inv;
            }
        }

        let hat_diag = DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for k in 0..rank {
                s += u[(i, k)] * u[(i, k)];
            }
            s
        });

        Ok(Self {
            u,
            beta_map,
            hat_diag,
            rank,
            nrows: n,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn hat_diag(&self) -> &DVector<f64> {
        &self.hat_diag
    }

    /// Solve for a new outcome vector against the factored design.
    pub fn solve(&self, y: &DVector<f64>) -> Result<OlsFit, LinalgError> {
        if y.len() != self.nrows {
            return Err(LinalgError::DimensionMismatch {
                rows: self.nrows,
                len: y.len(),
            });
        }
        let coords = self.u.transpose() * y;
        let beta = &self.beta_map * &coords;
        let fitted = &self.u * coords;
        let residuals = y - &fitted;
        let sigma2_mle = residuals.norm_squared() / self.nrows as f64;
        Ok(OlsFit {
            beta,
            fitted,
            residuals,
            sigma2_mle,
            hat_diag: self.hat_diag.clone(),
        })
    }

    /// Fitted values only; avoids materializing β̂ in hot loops.
    pub fn fitted(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.u * (self.u.transpose() * y)
    }
}

/// Ordinary least squares via an orthogonal decomposition.
pub fn ols(xm: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, LinalgError> {
    LeastSquaresBasis::new(xm)?.solve(y)
}

const LEVERAGE_TOL: f64 = 1e-12;

/// Exact leave-one-out predictions ỹ_i = ŷ_i − h_ii ê_i / (1 − h_ii).
///
/// Fails with [`LinalgError::LeverageOne`] when some h_ii reaches 1, where
/// the refit excluding row i no longer determines a prediction.
pub fn loo_fitted(fit: &OlsFit) -> Result<DVector<f64>, LinalgError> {
    let n = fit.fitted.len();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let h = fit.hat_diag[i];
        if h >= 1.0 - LEVERAGE_TOL {
            return Err(LinalgError::LeverageOne { index: i, value: h });
        }
        out[i] = fit.fitted[i] - h * fit.residuals[i] / (1.0 - h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut StdRng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
    }

    fn random_vector(rng: &mut StdRng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn mean_fit() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![2.0, 4.0]);
        let fit = ols(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.beta[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.sigma2_mle, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_interpolation() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![-1.25, 7.5]);
        let fit = ols(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.beta[0], -1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.beta[1], 7.5, epsilon = 1e-12);
        assert!(fit.residuals.amax() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_on_well_conditioned_design() {
        let mut rng = StdRng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 50, 3);
        let y = random_vector(&mut rng, 50);
        let fit = ols(&x, &y).unwrap();

        // Oracle: explicit (XᵀX)⁻¹Xᵀy.
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let oracle = xtx.lu().solve(&xty).unwrap();
        assert!((fit.beta - oracle).amax() < 1e-8);
    }

    #[test]
    fn empty_input_rejected() {
        let x = DMatrix::<f64>::zeros(0, 1);
        let y = DVector::<f64>::zeros(0);
        assert_eq!(ols(&x, &y).unwrap_err(), LinalgError::EmptyInput);
    }

    #[test]
    fn minimum_norm_on_duplicate_columns() {
        // Two identical columns: min-norm splits the coefficient equally.
        let mut rng = StdRng::seed_from_u64(11);
        let col = random_vector(&mut rng, 20);
        let mut x = DMatrix::zeros(20, 2);
        x.set_column(0, &col);
        x.set_column(1, &col);
        let y = 3.0 * &col;
        let fit = ols(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.beta[0], 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.beta[1], 1.5, epsilon = 1e-10);
        assert!(fit.residuals.amax() < 1e-10);
    }

    #[test]
    fn hat_diag_sums_to_rank() {
        let mut rng = StdRng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 30, 4);
        let fit = ols(&x, &random_vector(&mut rng, 30)).unwrap();
        let sum: f64 = fit.hat_diag.iter().sum();
        assert_abs_diff_eq!(sum, 4.0, epsilon = 1e-8);
        assert!(fit.hat_diag.iter().all(|&h| (-1e-12..=1.0 + 1e-12).contains(&h)));
    }

    #[test]
    fn loo_equals_fitted_when_residuals_vanish() {
        let mut rng = StdRng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 10, 2);
        let beta = DVector::from_vec(vec![1.0, -2.0]);
        let y = &x * &beta;
        let fit = ols(&x, &y).unwrap();
        let loo = loo_fitted(&fit).unwrap();
        assert!((loo - fit.fitted).amax() < 1e-10);
    }

    #[test]
    fn loo_intercept_only_drops_one_observation() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let fit = ols(&x, &y).unwrap();
        let loo = loo_fitted(&fit).unwrap();
        // Oracle: refit dropping row 1 -> mean(2,3,4,5) = 3.5.
        assert_abs_diff_eq!(loo[0], 3.5, epsilon = 1e-12);
    }

    #[test]
    fn loo_shortcut_matches_explicit_refits() {
        let mut rng = StdRng::seed_from_u64(42);
        let n = 30;
        let x = random_matrix(&mut rng, n, 4);
        let y = random_vector(&mut rng, n);
        let fit = ols(&x, &y).unwrap();
        let loo = loo_fitted(&fit).unwrap();

        // Oracle: n explicit refits, each excluding one row.
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let xi = DMatrix::from_fn(n - 1, 4, |r, c| x[(keep[r], c)]);
            let yi = DVector::from_fn(n - 1, |r, _| y[keep[r]]);
            let refit = ols(&xi, &yi).unwrap();
            let pred: f64 = (0..4).map(|c| x[(i, c)] * refit.beta[c]).sum();
            assert!(
                (loo[i] - pred).abs() < 1e-10,
                "row {i}: shortcut {} vs refit {}",
                loo[i],
                pred
            );
        }
    }

    #[test]
    fn loo_rejects_leverage_one() {
        let x = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let fit = ols(&x, &y).unwrap();
        assert!(matches!(
            loo_fitted(&fit).unwrap_err(),
            LinalgError::LeverageOne { .. }
        ));
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = StdRng::seed_from_u64(9);
        let n = 12;
        let x = random_matrix(&mut rng, n, 3);
        let y = random_vector(&mut rng, n);
        let fit = ols(&x, &y).unwrap();

        let perm: Vec<usize> = vec![4, 0, 7, 2, 9, 1, 11, 3, 10, 5, 8, 6];
        let xp = DMatrix::from_fn(n, 3, |i, j| x[(perm[i], j)]);
        let yp = DVector::from_fn(n, |i, _| y[perm[i]]);
        let fitp = ols(&xp, &yp).unwrap();

        assert!((&fit.beta - &fitp.beta).amax() < 1e-10);
        for i in 0..n {
            assert_abs_diff_eq!(fitp.fitted[i], fit.fitted[perm[i]], epsilon = 1e-10);
            assert_abs_diff_eq!(fitp.hat_diag[i], fit.hat_diag[perm[i]], epsilon = 1e-10);
        }
    }

    #[test]
    fn scale_equivariance_in_y() {
        let mut rng = StdRng::seed_from_u64(13);
        let x = random_matrix(&mut rng, 25, 3);
        let y = random_vector(&mut rng, 25);
        let c = -3.75;
        let base = ols(&x, &y).unwrap();
        let scaled = ols(&x, &(c * &y)).unwrap();
        assert!((c * base.beta - scaled.beta).amax() < 1e-9);
    }

    #[test]
    fn basis_solve_matches_ols_for_many_rhs() {
        let mut rng = StdRng::seed_from_u64(17);
        let x = random_matrix(&mut rng, 40, 5);
        let basis = LeastSquaresBasis::new(&x).unwrap();
        for _ in 0..5 {
            let y = random_vector(&mut rng, 40);
            let a = basis.solve(&y).unwrap();
            let b = ols(&x, &y).unwrap();
            assert!((a.beta - b.beta).amax() < 1e-12);
            assert!((a.fitted - b.fitted).amax() < 1e-12);
        }
    }
}
