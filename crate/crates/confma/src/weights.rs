//! Model-averaging weight schemes and the shared simplex-constrained
//! quadratic program.
//!
//! Six rules are implemented:
//!
//! * equal weights w_m = 1/M;
//! * regression weights: unconstrained OLS of y on the fitted-value matrix
//!   (they may be negative and need not sum to one);
//! * smoothed AIC/BIC: w_m = exp(−IC_m/2) / Σ_s exp(−IC_s/2);
//! * Mallows: minimize ‖y − F̂w‖² + 2σ̂² Σ w_m p_m over the unit simplex;
//! * jackknife: minimize ‖y − F̄w‖² over the unit simplex, F̄ built from
//!   leave-one-out fitted values.
//!
//! The last two reduce to the canonical form ½wᵀQw + bᵀw over
//! {w ≥ 0, Σw = 1}, solved by accelerated projected gradient descent with
//! an exact active-set polish. The solver is deterministic.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::types::WeightScheme;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: F has {rows} rows but y has {len} entries")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("non-positive variance {0} in information criterion")]
    NonPositiveVariance(f64),
    #[error("Q is not symmetric within tolerance")]
    NotSymmetric,
    #[error("Q is not positive semidefinite: smallest eigenvalue ~ {0:.3e}")]
    NotPsd(f64),
    #[error("QP solver failed to reach KKT tolerance: residual {0:.3e}")]
    SolverFailure(f64),
    #[error("non-finite value in weight computation inputs")]
    NonFinite,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Canonical simplex QP: minimize ½wᵀQw + bᵀw subject to w ≥ 0, Σw = 1.
#[derive(Debug, Clone)]
pub struct SimplexQp {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// A solved weight vector with solver diagnostics.
#[derive(Debug, Clone)]
pub struct WeightFit {
    pub w: DVector<f64>,
    /// Value of the minimized criterion for the optimization-based schemes
    /// (Mallows, jackknife, regression RSS); 0 for closed-form schemes.
    pub objective: f64,
    /// KKT stationarity residual for the QP schemes; 0 for closed forms.
    pub kkt_residual: f64,
    pub scheme: WeightScheme,
}

/// Information criterion flavor for smoothed-IC weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    Aic,
    Bic,
}

/// Variance below which a model is treated as exactly interpolating when
/// forming smoothed-IC weights.
pub const INTERPOLATION_VARIANCE_FLOOR: f64 = 1e-300;

const KKT_TOL: f64 = 1e-9;
const MAX_APG_ITERS: usize = 50_000;
const SUPPORT_TOL: f64 = 1e-12;

pub fn equal_weights(n_models: usize) -> WeightFit {
    let w = DVector::from_element(n_models, 1.0 / n_models as f64);
    WeightFit {
        w,
        objective: 0.0,
        kkt_residual: 0.0,
        scheme: WeightScheme::Equal,
    }
}

/// Granger–Ramanathan weights: OLS of y on the candidate-model predictions,
/// no intercept and no constraints. Rank-deficient prediction matrices
/// resolve to the minimum-norm coefficient vector.
pub fn regression_weights(f: &DMatrix<f64>, y: &DVector<f64>) -> Result<WeightFit, WeightError> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(WeightError::EmptyInput);
    }
    if f.nrows() != y.len() {
        return Err(WeightError::DimensionMismatch {
            rows: f.nrows(),
            len: y.len(),
        });
    }
    let fit = linalg::ols(f, y)?;
    let rss = fit.residuals.norm_squared();
    Ok(WeightFit {
        w: fit.beta,
        objective: rss,
        kkt_residual: 0.0,
        scheme: WeightScheme::Regression,
    })
}

/// AIC or BIC for a Gaussian linear model with MLE variance `sigma2`,
/// `p_m` parameters, and `n_obs` observations.
pub fn information_criterion(
    sigma2: f64,
    p_m: usize,
    n_obs: usize,
    kind: IcKind,
) -> Result<f64, WeightError> {
    if !(sigma2 > 0.0) {
        return Err(WeightError::NonPositiveVariance(sigma2));
    }
    let n = n_obs as f64;
    let base = n * sigma2.ln();
    Ok(match kind {
        IcKind::Aic => base + 2.0 * p_m as f64,
        IcKind::Bic => base + (p_m as f64) * n.ln(),
    })
}

/// Numerically stable softmax of −IC/2 across models.
pub fn sic_weights(ic: &[f64]) -> WeightFit {
    let min_ic = ic.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w = DVector::from_fn(ic.len(), |m, _| (-(ic[m] - min_ic) / 2.0).exp());
    let total: f64 = w.iter().sum();
    w /= total;
    WeightFit {
        w,
        objective: 0.0,
        kkt_residual: 0.0,
        scheme: WeightScheme::SmoothedAic,
    }
}

/// Smoothed-IC weights from per-model MLE variances.
///
/// Exactly interpolating models (σ̂² ≤ 1e−300) receive the softmax limit:
/// they share all weight equally and every other model gets zero.
pub fn sic_weights_from_variances(
    sigma2: &[f64],
    p_m: &[usize],
    n_obs: usize,
    kind: IcKind,
) -> Result<WeightFit, WeightError> {
    let scheme = match kind {
        IcKind::Aic => WeightScheme::SmoothedAic,
        IcKind::Bic => WeightScheme::SmoothedBic,
    };
    if sigma2.iter().any(|v| !v.is_finite()) {
        return Err(WeightError::NonFinite);
    }
    let interpolating: Vec<usize> = (0..sigma2.len())
        .filter(|&m| sigma2[m] <= INTERPOLATION_VARIANCE_FLOOR)
        .collect();
    if !interpolating.is_empty() {
        let share = 1.0 / interpolating.len() as f64;
        let mut w = DVector::zeros(sigma2.len());
        for &m in &interpolating {
            w[m] = share;
        }
        return Ok(WeightFit {
            w,
            objective: 0.0,
            kkt_residual: 0.0,
            scheme,
        });
    }
    let ic = sigma2
        .iter()
        .zip(p_m)
        .map(|(&s2, &p)| information_criterion(s2, p, n_obs, kind))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightFit {
        scheme,
        ..sic_weights(&ic)
    })
}

/// Mallows model-averaging weights: minimize
/// C(w) = ‖y − F w‖² + 2 σ̂² Σ w_m p_m over the unit simplex.
///
/// `sigma2_largest` is the error-variance estimate, conventionally taken
/// from the largest candidate model; σ̂² = 0 reduces the criterion to
/// simplex-constrained least squares.
pub fn mallows_weights(
    f: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2_largest: f64,
    p_vec: &[usize],
) -> Result<WeightFit, WeightError> {
    if f.nrows() == 0 || f.ncols() == 0 {
        return Err(WeightError::EmptyInput);
    }
    if f.nrows() != y.len() {
        return Err(WeightError::DimensionMismatch {
            rows: f.nrows(),
            len: y.len(),
        });
    }
    if !(sigma2_largest >= 0.0) || !sigma2_largest.is_finite() {
        return Err(WeightError::NonFinite);
    }
    let q = 2.0 * f.transpose() * f;
    let penalty = DVector::from_fn(p_vec.len(), |m, _| p_vec[m] as f64);
    let b = -2.0 * f.transpose() * y + 2.0 * sigma2_largest * penalty;
    let (w, kkt_residual) = solve_simplex_qp(&SimplexQp { q, b })?;
    let resid = y - f * &w;
    let pen: f64 = w
        .iter()
        .zip(p_vec)
        .map(|(&wm, &pm)| wm * pm as f64)
        .sum();
    let objective = resid.norm_squared() + 2.0 * sigma2_largest * pen;
    Ok(WeightFit {
        w,
        objective,
        kkt_residual,
        scheme: WeightScheme::Mallows,
    })
}

/// Jackknife model-averaging weights: minimize the leave-one-out
/// cross-validation criterion ‖y − F̄ w‖² over the unit simplex.
pub fn jma_weights(f_loo: &DMatrix<f64>, y: &DVector<f64>) -> Result<WeightFit, WeightError> {
    if f_loo.nrows() == 0 || f_loo.ncols() == 0 {
        return Err(WeightError::EmptyInput);
    }
    if f_loo.nrows() != y.len() {
        return Err(WeightError::DimensionMismatch {
            rows: f_loo.nrows(),
            len: y.len(),
        });
    }
    let q = 2.0 * f_loo.transpose() * f_loo;
    let b = -2.0 * f_loo.transpose() * y;
    let (w, kkt_residual) = solve_simplex_qp(&SimplexQp { q, b })?;
    let objective = (y - f_loo * &w).norm_squared();
    Ok(WeightFit {
        w,
        objective,
        kkt_residual,
        scheme: WeightScheme::Jackknife,
    })
}

/// Euclidean projection onto the unit simplex {w ≥ 0, Σw = 1}.
pub fn project_onto_simplex(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut sorted: Vec<f64> = v.iter().cloned().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (j, &vj) in sorted.iter().enumerate() {
        cumsum += vj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if vj - t > 0.0 {
            theta = t;
            rho = j + 1;
        }
    }
    debug_assert!(rho > 0);
    DVector::from_fn(n, |i, _| (v[i] - theta).max(0.0))
}

/// Dominant eigenvalue (signed) by fixed-count power iteration.
fn dominant_eigenvalue(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    // Deterministic start, slightly tilted so it is not orthogonal to the
    // dominant eigenvector in structured cases.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 1e-3 * (i as f64 + 1.0));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..100 {
        let qv = q * &v;
        let norm = qv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&qv);
        v = qv / norm;
    }
    lambda
}

fn kkt_residual(q: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let g = q * w + b;
    let support: Vec<usize> = (0..w.len()).filter(|&m| w[m] > SUPPORT_TOL).collect();
    if support.is_empty() {
        return f64::INFINITY;
    }
    let lambda: f64 = support.iter().map(|&m| g[m]).sum::<f64>() / support.len() as f64;
    let mut resid: f64 = 0.0;
    for m in 0..w.len() {
        if w[m] > SUPPORT_TOL {
            resid = resid.max((g[m] - lambda).abs());
        } else {
            resid = resid.max((lambda - g[m]).max(0.0));
        }
        resid = resid.max((-w[m]).max(0.0));
    }
    let sum: f64 = w.iter().sum();
    resid.max((sum - 1.0).abs())
}

/// Solve the equality-constrained KKT system restricted to a support set,
/// using a minimum-norm solve so exactly duplicated models split weight
/// symmetrically. Returns the stacked (w_S, lambda) vector.
fn solve_support_system(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    support: &[usize],
) -> Option<DVector<f64>> {
    let s = support.len();
    let mut k = DMatrix::zeros(s + 1, s + 1);
    for (i, &mi) in support.iter().enumerate() {
        for (j, &mj) in support.iter().enumerate() {
            k[(i, j)] = q[(mi, mj)];
        }
        k[(i, s)] = 1.0;
        k[(s, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    for (i, &mi) in support.iter().enumerate() {
        rhs[i] = -b[mi];
    }
    rhs[s] = 1.0;

    let svd = k.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if max_sv == 0.0 {
        return None;
    }
    let tol = max_sv * (s + 1) as f64 * f64::EPSILON * 16.0;
    svd.solve(&rhs, tol).ok()
}

/// Active-set refinement: exact solves on the detected support, removing
/// negative coordinates and admitting first-order violators until the KKT
/// conditions hold (or the pivot budget runs out).
fn active_set_polish(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    start: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = start.len();
    let mut in_support: Vec<bool> = (0..n).map(|m| start[m] > 1e-10).collect();
    if !in_support.iter().any(|&s| s) {
        in_support[0] = true;
    }
    let max_pivots = 10 * n + 40;
    for _ in 0..max_pivots {
        let support: Vec<usize> = (0..n).filter(|&m| in_support[m]).collect();
        let sol = solve_support_system(q, b, &support)?;
        let s = support.len();

        // Drop the most negative coordinate, if any.
        let mut worst = (0usize, -1e-10);
        let mut has_negative = false;
        for i in 0..s {
            if sol[i] < worst.1 {
                worst = (support[i], sol[i]);
                has_negative = true;
            }
        }
        if has_negative && s > 1 {
            in_support[worst.0] = false;
            continue;
        }

        let mut w = DVector::zeros(n);
        for (i, &m) in support.iter().enumerate() {
            w[m] = sol[i].max(0.0);
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w /= total;
        }
        let lambda = sol[s];

        // Admit the worst first-order violator outside the support.
        let g = q * &w + b;
        let mut add: Option<(usize, f64)> = None;
        for m in 0..n {
            if !in_support[m] {
                let viol = lambda - g[m];
                if viol > 1e-12 && add.map_or(true, |(_, v)| viol > v) {
                    add = Some((m, viol));
                }
            }
        }
        match add {
            Some((m, _)) => in_support[m] = true,
            None => return Some(w),
        }
    }
    None
}

/// Solve a simplex-constrained quadratic program.
///
/// Returns the weight vector and the KKT stationarity residual: the largest
/// violation, over coordinates, of (Qw + b)_m ≥ λ with equality on the
/// support, plus any feasibility slack. Deterministic given its inputs.
pub fn solve_simplex_qp(qp: &SimplexQp) -> Result<(DVector<f64>, f64), WeightError> {
    let n = qp.q.nrows();
    if n == 0 {
        return Err(WeightError::EmptyInput);
    }
    if qp.q.ncols() != n || qp.b.len() != n {
        return Err(WeightError::DimensionMismatch {
            rows: qp.q.ncols(),
            len: qp.b.len(),
        });
    }
    if qp.q.iter().any(|v| !v.is_finite()) || qp.b.iter().any(|v| !v.is_finite()) {
        return Err(WeightError::NonFinite);
    }
    let scale = qp.q.amax().max(qp.b.amax()).max(1.0);
    let asym = (&qp.q - qp.q.transpose()).amax();
    if asym > 1e-10 * (1.0 + qp.q.amax()) {
        return Err(WeightError::NotSymmetric);
    }
    if n == 1 {
        return Ok((DVector::from_element(1, 1.0), 0.0));
    }
    // Work on the symmetrized matrix so the gradient is exactly Qw + b.
    let q = (&qp.q + qp.q.transpose()) * 0.5;
    let b = qp.b.clone();

    let lambda_dom = dominant_eigenvalue(&q);
    if lambda_dom < -1e-6 * scale {
        return Err(WeightError::NotPsd(lambda_dom));
    }
    let lip = lambda_dom.max(0.0);
    let shifted = DMatrix::identity(n, n) * (lip + 1.0) - &q;
    let lambda_min = (lip + 1.0) - dominant_eigenvalue(&shifted);
    if lambda_min < -1e-6 * lip.max(1e-300) && lambda_min < -1e-9 * scale {
        return Err(WeightError::NotPsd(lambda_min));
    }

    if lip <= 1e-14 * scale {
        // Effectively a linear program: mass shared over the minimizers of b.
        let min_b = b.iter().cloned().fold(f64::INFINITY, f64::min);
        let winners: Vec<usize> = (0..n).filter(|&m| b[m] == min_b).collect();
        let mut w = DVector::zeros(n);
        for &m in &winners {
            w[m] = 1.0 / winners.len() as f64;
        }
        let resid = kkt_residual(&q, &b, &w);
        return Ok((w, resid));
    }

    // Accelerated projected gradient to localize the support.
    let step = 1.0 / lip;
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut z = w.clone();
    let mut t = 1.0f64;
    let mut best = w.clone();
    let mut best_resid = kkt_residual(&q, &b, &w);
    let mut last_support: Vec<bool> = Vec::new();
    let mut stable_checks = 0usize;
    let mut iters = 0usize;

    'outer: for round in 0..6 {
        let budget = if round == 0 { 2_000 } else { MAX_APG_ITERS };
        while iters < budget.min(MAX_APG_ITERS) {
            iters += 1;
            let grad = &q * &z + &b;
            let w_next = project_onto_simplex(&(&z - step * grad));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            z = &w_next + ((t - 1.0) / t_next) * (&w_next - &w);
            w = w_next;
            t = t_next;

            if iters % 25 == 0 {
                let resid = kkt_residual(&q, &b, &w);
                if resid < best_resid {
                    best_resid = resid;
                    best = w.clone();
                }
                if resid < KKT_TOL {
                    break 'outer;
                }
                let support: Vec<bool> = (0..n).map(|m| w[m] > SUPPORT_TOL).collect();
                if support == last_support {
                    stable_checks += 1;
                } else {
                    stable_checks = 0;
                    last_support = support;
                }
                if stable_checks >= 4 {
                    stable_checks = 0;
                    break;
                }
            }
        }

        if let Some(polished) = active_set_polish(&q, &b, &w) {
            let resid = kkt_residual(&q, &b, &polished);
            if resid < best_resid {
                best_resid = resid;
                best = polished.clone();
            }
            if resid < KKT_TOL {
                break 'outer;
            }
            // Restart the acceleration from the polished point.
            w = polished;
            z = w.clone();
            t = 1.0;
        }
        if iters >= MAX_APG_ITERS {
            break;
        }
    }

    if best_resid < KKT_TOL {
        Ok((best, best_resid))
    } else {
        Err(WeightError::SolverFailure(best_resid))
    }
}
