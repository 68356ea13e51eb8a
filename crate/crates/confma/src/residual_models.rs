//! Prewhitening models for locally adaptive intervals.
//!
//! Exchangeable data use a log-linear conditional variance,
//! σ_i² = exp(x_iᵀγ), fit by regressing log(ê_i²) on the variance
//! covariates. Time-series data use an AR(1)-GARCH(1,1) model,
//!
//! ```text
//! ê_{i+1} = δ + ρ ê_i + σ_i η_{i+1},   σ_i² = c + α ê_i² + β σ_{i−1}²,
//! ```
//!
//! estimated by Gaussian maximum likelihood with the recursion initialized
//! at the unconditional variance σ₀² = c / (1 − α − β). Standardized
//! residuals from either model feed the adaptive conformal engines as
//! conformity scores.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResidualError {
    #[error("all residuals are zero; the variance model is undefined")]
    AllZeroResiduals,
    #[error("residual series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("garch optimization failed: no start produced a finite likelihood")]
    OptimFailure,
    #[error("dimension mismatch: {0} rows vs {1} residuals")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Fitted log-linear variance model σ_i² = exp(x_iᵀγ̂).
#[derive(Debug, Clone, PartialEq)]
pub struct LogVarianceFit {
    pub gamma: DVector<f64>,
    /// Dataset columns that formed the variance design, for bookkeeping.
    pub covariate_columns: Vec<usize>,
}

impl LogVarianceFit {
    /// Conditional standard deviation at one covariate row of the variance
    /// design (already restricted to `covariate_columns`).
    pub fn sigma(&self, x_var_row: &[f64]) -> f64 {
        let dot: f64 = x_var_row
            .iter()
            .zip(self.gamma.iter())
            .map(|(&x, &g)| x * g)
            .sum();
        (dot / 2.0).exp()
    }
}

/// Floor applied to squared residuals before taking logs, relative to their
/// median; keeps exact zeros from producing −∞.
const LOG_FLOOR_RELATIVE: f64 = 1e-12;
const LOG_FLOOR_ABSOLUTE: f64 = 1e-300;

/// Fit γ by OLS of log(max(ê_i², floor)) on the variance covariates,
/// floor = 1e−12 · median(ê²).
pub fn fit_log_variance(
    x_var: &DMatrix<f64>,
    residuals: &DVector<f64>,
) -> Result<LogVarianceFit, ResidualError> {
    if x_var.nrows() != residuals.len() {
        return Err(ResidualError::DimensionMismatch(
            x_var.nrows(),
            residuals.len(),
        ));
    }
    if residuals.iter().all(|&e| e == 0.0) {
        return Err(ResidualError::AllZeroResiduals);
    }
    let mut sq: Vec<f64> = residuals.iter().map(|&e| e * e).collect();
    let mut sorted = sq.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let floor = if median > 0.0 {
        LOG_FLOOR_RELATIVE * median
    } else {
        LOG_FLOOR_ABSOLUTE
    };
    for v in &mut sq {
        *v = v.max(floor).ln();
    }
    let log_sq = DVector::from_vec(sq);
    let fit = linalg::ols(x_var, &log_sq)?;
    Ok(LogVarianceFit {
        gamma: fit.beta,
        covariate_columns: (0..x_var.ncols()).collect(),
    })
}

/// Standardize residuals by the fitted conditional standard deviation:
/// η̂_i = ê_i · exp(−x_iᵀγ̂ / 2).
pub fn standardize_cross_section(
    residuals: &DVector<f64>,
    x_var: &DMatrix<f64>,
    fit: &LogVarianceFit,
) -> DVector<f64> {
    let half = x_var * &fit.gamma * 0.5;
    DVector::from_fn(residuals.len(), |i, _| residuals[i] * (-half[i]).exp())
}

/// Fitted AR(1)-GARCH(1,1) residual model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArGarchFit {
    pub delta: f64,
    pub rho: f64,
    pub c: f64,
    pub alpha_g: f64,
    pub beta_g: f64,
    /// Attained Gaussian conditional log-likelihood.
    pub loglik: f64,
}

/// Upper bound on α + β; the recursion initialization needs 1 − α − β > 0.
const GARCH_PERSISTENCE_CAP: f64 = 1.0 - 1e-6;
const GARCH_MIN_OBS: usize = 20;

/// Gaussian conditional log-likelihood of the AR(1)-GARCH(1,1) recursion,
/// conditioning on the first observation. `fit.loglik` is ignored.
pub fn ar_garch_loglik(fit: &ArGarchFit, residuals: &DVector<f64>) -> f64 {
    let n = residuals.len();
    if n < 2 || fit.c <= 0.0 || fit.alpha_g < 0.0 || fit.beta_g < 0.0 {
        return f64::NEG_INFINITY;
    }
    let persistence = fit.alpha_g + fit.beta_g;
    if persistence >= 1.0 {
        return f64::NEG_INFINITY;
    }
    const LN_2PI: f64 = 1.8378770664093453;
    let mut sigma2_prev = fit.c / (1.0 - persistence);
    let mut ll = 0.0;
    for t in 1..n {
        let lag = residuals[t - 1];
        let sigma2 = fit.c + fit.alpha_g * lag * lag + fit.beta_g * sigma2_prev;
        let z = residuals[t] - fit.delta - fit.rho * lag;
        ll -= 0.5 * (LN_2PI + sigma2.ln() + z * z / sigma2);
        sigma2_prev = sigma2;
    }
    ll
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Map unconstrained optimizer coordinates to the natural parameter space:
/// (δ, atanh ρ, ln c, logit of (α+β)/cap, logit of α/(α+β)).
fn to_natural(theta: &[f64; 5]) -> ArGarchFit {
    let persistence = GARCH_PERSISTENCE_CAP * sigmoid(theta[3]);
    let split = sigmoid(theta[4]);
    ArGarchFit {
        delta: theta[0],
        rho: theta[1].tanh(),
        c: theta[2].exp(),
        alpha_g: persistence * split,
        beta_g: persistence * (1.0 - split),
        loglik: f64::NAN,
    }
}

fn to_unconstrained(delta: f64, rho: f64, c: f64, alpha_g: f64, beta_g: f64) -> [f64; 5] {
    let persistence = (alpha_g + beta_g).clamp(1e-8, GARCH_PERSISTENCE_CAP * (1.0 - 1e-9));
    let split = if alpha_g + beta_g > 0.0 {
        (alpha_g / (alpha_g + beta_g)).clamp(1e-8, 1.0 - 1e-8)
    } else {
        0.5
    };
    [
        delta,
        rho.clamp(-0.999, 0.999).atanh(),
        c.max(1e-300).ln(),
        logit(persistence / GARCH_PERSISTENCE_CAP),
        logit(split),
    ]
}

/// Deterministic Nelder–Mead minimizer over R^5.
fn nelder_mead<F: Fn(&[f64; 5]) -> f64>(
    f: &F,
    start: [f64; 5],
    max_iter: usize,
) -> ([f64; 5], f64) {
    const DIM: usize = 5;
    let eval = |x: &[f64; 5]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    };

    let mut simplex: Vec<([f64; 5], f64)> = Vec::with_capacity(DIM + 1);
    simplex.push((start, eval(&start)));
    for j in 0..DIM {
        let mut x = start;
        x[j] += f64::max(0.25, 0.1 * x[j].abs());
        simplex.push((x, eval(&x)));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN objective"));
        let best = simplex[0].1;
        let worst = simplex[DIM].1;
        if worst - best <= 1e-12 * (1.0 + best.abs()) {
            break;
        }

        let mut centroid = [0.0; DIM];
        for item in simplex.iter().take(DIM) {
            for j in 0..DIM {
                centroid[j] += item.0[j] / DIM as f64;
            }
        }
        let worst_x = simplex[DIM].0;
        let blend = |t: f64| {
            let mut x = [0.0; DIM];
            for j in 0..DIM {
                x[j] = centroid[j] + t * (centroid[j] - worst_x[j]);
            }
            x
        };

        let reflected = blend(1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = blend(2.0);
            let fe = eval(&expanded);
            simplex[DIM] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[DIM - 1].1 {
            simplex[DIM] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[DIM].1 {
                blend(0.5)
            } else {
                blend(-0.5)
            };
            let fc = eval(&contracted);
            if fc < simplex[DIM].1.min(fr) {
                simplex[DIM] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                let best_x = simplex[0].0;
                for item in simplex.iter_mut().skip(1) {
                    for j in 0..DIM {
                        item.0[j] = best_x[j] + 0.5 * (item.0[j] - best_x[j]);
                    }
                    item.1 = eval(&item.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN objective"));
    (simplex[0].0, simplex[0].1)
}

fn multistart_points(residuals: &DVector<f64>) -> Vec<[f64; 5]> {
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals
        .iter()
        .map(|&e| (e - mean) * (e - mean))
        .sum::<f64>()
        / n;
    let var = var.max(1e-10);
    let mut acf1 = 0.0;
    for t in 1..residuals.len() {
        acf1 += (residuals[t] - mean) * (residuals[t - 1] - mean);
    }
    acf1 = (acf1 / (n * var)).clamp(-0.95, 0.95);

    let natural: [(f64, f64, f64); 5] = [
        (acf1, 0.05, 0.90),
        (0.0, 0.10, 0.80),
        (acf1, 0.20, 0.60),
        (0.0, 0.01, 0.01),
        (0.5 * acf1, 0.10, 0.75),
    ];
    natural
        .iter()
        .map(|&(rho, alpha_g, beta_g)| {
            let innov_var = var * (1.0 - rho * rho);
            let c = (innov_var * (1.0 - alpha_g - beta_g)).max(1e-12);
            to_unconstrained(mean * (1.0 - rho), rho, c, alpha_g, beta_g)
        })
        .collect()
}

/// Fit the AR(1)-GARCH(1,1) model by Gaussian maximum likelihood.
///
/// Runs a derivative-free simplex search from five fixed data-derived
/// starts (best likelihood wins, ties to the earliest start), each followed
/// by one restart from its optimum. Deterministic given the input series.
pub fn fit_ar_garch(residuals: &DVector<f64>) -> Result<ArGarchFit, ResidualError> {
    if residuals.len() < GARCH_MIN_OBS {
        return Err(ResidualError::TooShort {
            needed: GARCH_MIN_OBS,
            got: residuals.len(),
        });
    }
    let neg_ll = |theta: &[f64; 5]| -ar_garch_loglik(&to_natural(theta), residuals);

    let mut best: Option<([f64; 5], f64)> = None;
    for start in multistart_points(residuals) {
        let (x1, f1) = nelder_mead(&neg_ll, start, 3_000);
        let (x2, f2) = nelder_mead(&neg_ll, x1, 1_500);
        let (x, fv) = if f2 < f1 { (x2, f2) } else { (x1, f1) };
        if fv < f64::MAX && best.as_ref().map_or(true, |&(_, fb)| fv < fb) {
            best = Some((x, fv));
        }
    }
    let (theta, neg) = best.ok_or(ResidualError::OptimFailure)?;
    let mut fit = to_natural(&theta);
    fit.loglik = -neg;
    Ok(fit)
}

/// Run the fitted variance recursion over a residual series.
///
/// Returns the standardized residuals η̂ (length n − 1; the first
/// observation has no lag), the one-step-ahead conditional standard
/// deviation σ̂_n after processing the full series, and the final residual
/// ê_n. The last two feed the new-point score and the closed-form split
/// interval.
pub fn standardize_time_series(
    residuals: &DVector<f64>,
    fit: &ArGarchFit,
) -> Result<(DVector<f64>, f64, f64), ResidualError> {
    let n = residuals.len();
    if n < 2 {
        return Err(ResidualError::TooShort { needed: 2, got: n });
    }
    let mut sigma2_prev = fit.c / (1.0 - fit.alpha_g - fit.beta_g);
    let mut eta = DVector::zeros(n - 1);
    for t in 1..n {
        let lag = residuals[t - 1];
        let sigma2 = fit.c + fit.alpha_g * lag * lag + fit.beta_g * sigma2_prev;
        eta[t - 1] = (residuals[t] - fit.delta - fit.rho * lag) / sigma2.sqrt();
        sigma2_prev = sigma2;
    }
    let last = residuals[n - 1];
    let last_sigma2 = fit.c + fit.alpha_g * last * last + fit.beta_g * sigma2_prev;
    Ok((eta, last_sigma2.sqrt(), last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn intercept_only(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn constant_residuals_recover_log_variance() {
        let sigma = 2.5f64;
        let resid = DVector::from_element(50, sigma);
        let fit = fit_log_variance(&intercept_only(50), &resid).unwrap();
        assert_abs_diff_eq!(fit.gamma[0], (sigma * sigma).ln(), epsilon = 1e-10);
    }

    #[test]
    fn noiseless_log_variance_recovery() {
        let mut rng = StdRng::seed_from_u64(3);
        let n = 200;
        let g = [0.3, -0.7];
        let mut x = DMatrix::from_element(n, 2, 1.0);
        for i in 0..n {
            x[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
        }
        // ê_i² = exp(x_i·g) exactly; signs should not matter.
        let resid = DVector::from_fn(n, |i, _| {
            let v = (g[0] * x[(i, 0)] + g[1] * x[(i, 1)]).exp().sqrt();
            if i % 2 == 0 {
                v
            } else {
                -v
            }
        });
        let fit = fit_log_variance(&x, &resid).unwrap();
        assert_abs_diff_eq!(fit.gamma[0], g[0], epsilon = 1e-8);
        assert_abs_diff_eq!(fit.gamma[1], g[1], epsilon = 1e-8);
    }

    #[test]
    fn large_sample_slope_recovery() {
        // log(ê²) = xᵀγ + log(η²): the slope is identified, the intercept
        // shifts by E[log χ²₁] ≈ −1.2704.
        let mut rng = StdRng::seed_from_u64(11);
        let n = 10_000;
        let mut x = DMatrix::from_element(n, 2, 1.0);
        let mut resid = DVector::zeros(n);
        for i in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            x[(i, 1)] = xi;
            let sigma2 = (0.5 + 0.8 * xi).exp();
            let eta: f64 = rng.sample(StandardNormal);
            resid[i] = sigma2.sqrt() * eta;
        }
        let fit = fit_log_variance(&x, &resid).unwrap();
        // var(log χ²₁) = π²/2; slope se = sqrt(4.9348 / (n · var(x))).
        let se = (4.9348 / n as f64).sqrt();
        assert!(
            (fit.gamma[1] - 0.8).abs() < 3.0 * se,
            "slope {} vs 0.8 (3se = {})",
            fit.gamma[1],
            3.0 * se
        );
        assert!((fit.gamma[0] - (0.5 - 1.2704)).abs() < 0.1);
    }

    #[test]
    fn all_zero_residuals_rejected() {
        let resid = DVector::zeros(30);
        assert_eq!(
            fit_log_variance(&intercept_only(30), &resid).unwrap_err(),
            ResidualError::AllZeroResiduals
        );
    }

    #[test]
    fn standardize_identity_when_gamma_zero() {
        let resid = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let fit = LogVarianceFit {
            gamma: DVector::from_vec(vec![0.0]),
            covariate_columns: vec![0],
        };
        let out = standardize_cross_section(&resid, &intercept_only(3), &fit);
        assert!((out - resid).amax() < 1e-15);
    }

    #[test]
    fn standardize_halves_under_log4() {
        let resid = DVector::from_vec(vec![2.0, -4.0]);
        let fit = LogVarianceFit {
            gamma: DVector::from_vec(vec![4f64.ln()]),
            covariate_columns: vec![0],
        };
        let out = standardize_cross_section(&resid, &intercept_only(2), &fit);
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_round_trip() {
        let mut rng = StdRng::seed_from_u64(5);
        let n = 40;
        let mut x = DMatrix::from_element(n, 2, 1.0);
        for i in 0..n {
            x[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
        }
        let resid = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = fit_log_variance(&x, &resid).unwrap();
        let eta = standardize_cross_section(&resid, &x, &fit);
        let back = DVector::from_fn(n, |i, _| {
            let half: f64 = (0..2).map(|j| x[(i, j)] * fit.gamma[j]).sum::<f64>() / 2.0;
            eta[i] * half.exp()
        });
        assert!((back - resid).amax() < 1e-12);
    }

    #[test]
    fn scale_equivariance_of_standardization() {
        let mut rng = StdRng::seed_from_u64(7);
        let n = 30;
        let mut x = DMatrix::from_element(n, 2, 1.0);
        for i in 0..n {
            x[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
        }
        let resid = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = fit_log_variance(&x, &resid).unwrap();
        let eta = standardize_cross_section(&resid, &x, &fit);

        let s = 3.0f64;
        let mut shifted = fit.clone();
        shifted.gamma[0] += 2.0 * s.ln();
        let eta_scaled = standardize_cross_section(&(s * &resid), &x, &shifted);
        assert!((eta_scaled - eta).amax() < 1e-12);
    }

    fn simulate_ar_garch(fit: &ArGarchFit, n: usize, seed: u64) -> DVector<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let burn = 1_000;
        let mut sigma2 = fit.c / (1.0 - fit.alpha_g - fit.beta_g);
        let mut e_prev = 0.0;
        let mut out = Vec::with_capacity(n);
        for t in 0..(burn + n) {
            let eta: f64 = rng.sample(StandardNormal);
            sigma2 = fit.c + fit.alpha_g * e_prev * e_prev + fit.beta_g * sigma2;
            let e = fit.delta + fit.rho * e_prev + sigma2.sqrt() * eta;
            if t >= burn {
                out.push(e);
            }
            e_prev = e;
        }
        DVector::from_vec(out)
    }

    #[test]
    fn garch_too_short() {
        let resid = DVector::zeros(10);
        assert!(matches!(
            fit_ar_garch(&resid),
            Err(ResidualError::TooShort { .. })
        ));
    }

    #[test]
    fn garch_iid_unconditional_variance() {
        let mut rng = StdRng::seed_from_u64(13);
        let sigma2 = 1.7f64;
        let resid = DVector::from_fn(5_000, |_, _| {
            sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal)
        });
        let fit = fit_ar_garch(&resid).unwrap();
        let uncond = fit.c / (1.0 - fit.alpha_g - fit.beta_g);
        assert!(
            (uncond - sigma2).abs() / sigma2 < 0.10,
            "unconditional variance {uncond} vs {sigma2}"
        );
        assert!(fit.rho.abs() < 0.1);
        assert!(fit.delta.abs() < 0.1);
    }

    #[test]
    fn garch_loglik_dominates_every_start() {
        let truth = ArGarchFit {
            delta: 0.0,
            rho: 0.3,
            c: 0.05,
            alpha_g: 0.10,
            beta_g: 0.85,
            loglik: f64::NAN,
        };
        let resid = simulate_ar_garch(&truth, 2_000, 17);
        let fit = fit_ar_garch(&resid).unwrap();
        for start in multistart_points(&resid) {
            let at_start = ar_garch_loglik(&to_natural(&start), &resid);
            assert!(
                fit.loglik >= at_start - 1e-9,
                "fit loglik {} below start loglik {}",
                fit.loglik,
                at_start
            );
        }
        assert_abs_diff_eq!(fit.loglik, ar_garch_loglik(&fit, &resid), epsilon = 1e-9);
    }

    #[test]
    fn garch_parameters_stay_in_stationarity_region() {
        let mut rng = StdRng::seed_from_u64(19);
        let resid = DVector::from_fn(300, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = fit_ar_garch(&resid).unwrap();
        assert!(fit.c > 0.0);
        assert!(fit.alpha_g >= 0.0 && fit.beta_g >= 0.0);
        assert!(fit.alpha_g + fit.beta_g <= 1.0 - 1e-6);
    }

    #[test]
    fn standardize_degenerate_recursion() {
        let resid = DVector::from_vec(vec![1.0, 2.0, -3.0, 0.5]);
        let fit = ArGarchFit {
            delta: 0.0,
            rho: 0.0,
            c: 4.0,
            alpha_g: 0.0,
            beta_g: 0.0,
            loglik: f64::NAN,
        };
        let (eta, last_sigma, last_resid) = standardize_time_series(&resid, &fit).unwrap();
        assert_eq!(eta.len(), 3);
        assert_abs_diff_eq!(eta[0], 2.0 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eta[1], -3.0 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eta[2], 0.5 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(last_sigma, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(last_resid, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn standardize_inverts_exact_ar1_path() {
        let (delta, rho, c) = (0.2, 0.6, 0.25f64);
        let z = [0.5, -1.0, 2.0, 0.0, -0.5];
        let mut e = vec![1.0f64];
        for &zi in &z {
            let prev = *e.last().unwrap();
            e.push(delta + rho * prev + c.sqrt() * zi);
        }
        let fit = ArGarchFit {
            delta,
            rho,
            c,
            alpha_g: 0.0,
            beta_g: 0.0,
            loglik: f64::NAN,
        };
        let (eta, _, _) = standardize_time_series(&DVector::from_vec(e), &fit).unwrap();
        for (k, &zk) in z.iter().enumerate() {
            assert_abs_diff_eq!(eta[k], zk, epsilon = 1e-12);
        }
    }

    #[test]
    fn recursion_matches_independent_loop() {
        let truth = ArGarchFit {
            delta: 0.05,
            rho: -0.2,
            c: 0.3,
            alpha_g: 0.15,
            beta_g: 0.7,
            loglik: f64::NAN,
        };
        let resid = simulate_ar_garch(&truth, 200, 23);
        let (eta, last_sigma, _) = standardize_time_series(&resid, &truth).unwrap();

        // Re-derive the sigma path with a separate loop.
        let n = resid.len();
        let mut sigma2 = vec![truth.c / (1.0 - truth.alpha_g - truth.beta_g)];
        for t in 0..n {
            let prev = *sigma2.last().unwrap();
            sigma2.push(truth.c + truth.alpha_g * resid[t] * resid[t] + truth.beta_g * prev);
        }
        for t in 1..n {
            let expect = (resid[t] - truth.delta - truth.rho * resid[t - 1]) / sigma2[t].sqrt();
            assert!((eta[t - 1] - expect).abs() < 1e-12);
        }
        assert!((last_sigma - sigma2[n].sqrt()).abs() < 1e-12);
        // Positivity: sigma^2 >= c everywhere.
        assert!(sigma2.iter().all(|&s| s >= truth.c));
    }

    #[test]
    fn standardized_innovations_have_unit_variance_at_scale() {
        let truth = ArGarchFit {
            delta: 0.0,
            rho: 0.3,
            c: 0.05,
            alpha_g: 0.10,
            beta_g: 0.85,
            loglik: f64::NAN,
        };
        let resid = simulate_ar_garch(&truth, 20_000, 29);
        let (eta, _, _) = standardize_time_series(&resid, &truth).unwrap();
        let mean_sq = eta.iter().map(|&v| v * v).sum::<f64>() / eta.len() as f64;
        assert!(
            (mean_sq - 1.0).abs() < 0.10,
            "mean squared standardized residual {mean_sq}"
        );
    }
}
