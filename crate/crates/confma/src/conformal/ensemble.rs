//! Ensemble fitting: per-model OLS, weight estimation, and averaged
//! predictions over a fixed design.
//!
//! The full-conformal loop refits the same candidate designs against
//! hundreds of trial outcome vectors, so the per-model orthogonal
//! factorizations are computed once per design ([`DesignWorkspace`]) and
//! reused for every right-hand side.

use nalgebra::{DMatrix, DVector};

use super::ConformalError;
use crate::linalg::{loo_fitted, LeastSquaresBasis, OlsFit};
use crate::types::{FittedEnsemble, ModelSet, WeightScheme};
use crate::weights::{
    equal_weights, jma_weights, mallows_weights, regression_weights, sic_weights_from_variances,
    IcKind,
};

/// A model-averaging prediction rule: a candidate model set plus a weight
/// scheme.
#[derive(Debug, Clone)]
pub struct EnsembleFitter {
    model_set: ModelSet,
    scheme: WeightScheme,
}

impl EnsembleFitter {
    pub fn new(model_set: ModelSet, scheme: WeightScheme) -> Result<Self, ConformalError> {
        scheme.validate(model_set.len())?;
        Ok(Self { model_set, scheme })
    }

    pub fn model_set(&self) -> &ModelSet {
        &self.model_set
    }

    pub fn scheme(&self) -> &WeightScheme {
        &self.scheme
    }

    /// Estimate all candidate models and the weights on one sample.
    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FittedEnsemble, ConformalError> {
        DesignWorkspace::new(x, &self.model_set)?.fit(y, &self.scheme)
    }

    /// Averaged prediction Σ_m ŵ_m x_{C_m}ᵀ β̂_m at a covariate row.
    pub fn predict_row(&self, ensemble: &FittedEnsemble, x_row: &[f64]) -> f64 {
        self.model_set
            .models()
            .iter()
            .enumerate()
            .map(|(m, model)| ensemble.weights[m] * model.predict_row(x_row, &ensemble.coefficients[m]))
            .sum()
    }
}

/// Per-model factorizations of a fixed design, reusable across outcomes.
pub(crate) struct DesignWorkspace<'a> {
    model_set: &'a ModelSet,
    bases: Vec<LeastSquaresBasis>,
    p_m: Vec<usize>,
    largest: usize,
    nrows: usize,
}

impl<'a> DesignWorkspace<'a> {
    pub(crate) fn new(x: &DMatrix<f64>, model_set: &'a ModelSet) -> Result<Self, ConformalError> {
        model_set.check_against(x.ncols())?;
        let bases = model_set
            .models()
            .iter()
            .map(|m| LeastSquaresBasis::new(&m.select(x)))
            .collect::<Result<Vec<_>, _>>()?;
        let p_m = model_set.models().iter().map(|m| m.len()).collect();
        Ok(Self {
            model_set,
            bases,
            p_m,
            largest: model_set.largest_model(),
            nrows: x.nrows(),
        })
    }

    pub(crate) fn nrows(&self) -> usize {
        self.nrows
    }

    /// Solve every candidate model for `y` and combine with the scheme's
    /// weights.
    pub(crate) fn fit(
        &self,
        y: &DVector<f64>,
        scheme: &WeightScheme,
    ) -> Result<FittedEnsemble, ConformalError> {
        let m_count = self.bases.len();
        let fits: Vec<OlsFit> = self
            .bases
            .iter()
            .map(|b| b.solve(y))
            .collect::<Result<_, _>>()?;

        let mut fitted_matrix = DMatrix::zeros(self.nrows, m_count);
        for (m, fit) in fits.iter().enumerate() {
            fitted_matrix.set_column(m, &fit.fitted);
        }

        let weights = match scheme {
            WeightScheme::Equal => equal_weights(m_count).w,
            WeightScheme::Fixed(w) => DVector::from_column_slice(w),
            WeightScheme::Regression => regression_weights(&fitted_matrix, y)?.w,
            WeightScheme::SmoothedAic | WeightScheme::SmoothedBic => {
                let kind = if matches!(scheme, WeightScheme::SmoothedAic) {
                    IcKind::Aic
                } else {
                    IcKind::Bic
                };
                let sigma2: Vec<f64> = fits.iter().map(|f| f.sigma2_mle).collect();
                sic_weights_from_variances(&sigma2, &self.p_m, self.nrows, kind)?.w
            }
            WeightScheme::Mallows => {
                let sigma2_largest = fits[self.largest].sigma2_mle;
                mallows_weights(&fitted_matrix, y, sigma2_largest, &self.p_m)?.w
            }
            WeightScheme::Jackknife => {
                let mut f_loo = DMatrix::zeros(self.nrows, m_count);
                for (m, fit) in fits.iter().enumerate() {
                    f_loo.set_column(m, &loo_fitted(fit)?);
                }
                jma_weights(&f_loo, y)?.w
            }
        };

        let averaged_fit = &fitted_matrix * &weights;
        let residuals = y - &averaged_fit;
        Ok(FittedEnsemble {
            coefficients: fits.into_iter().map(|f| f.beta).collect(),
            weights,
            fitted_matrix,
            averaged_fit,
            residuals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CandidateModel;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn toy_design(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut x = DMatrix::from_element(n, 3, 1.0);
        for i in 0..n {
            x[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
            x[(i, 2)] = rng.sample::<f64, _>(StandardNormal);
        }
        let y = DVector::from_fn(n, |i, _| {
            1.0 + 0.8 * x[(i, 1)] - 0.4 * x[(i, 2)] + 0.3 * rng.sample::<f64, _>(StandardNormal)
        });
        (x, y)
    }

    fn nested_fitter(scheme: WeightScheme) -> EnsembleFitter {
        EnsembleFitter::new(ModelSet::nested(3).unwrap(), scheme).unwrap()
    }

    #[test]
    fn reconstruction_holds_for_every_scheme() {
        let (x, y) = toy_design(40, 1);
        let schemes = [
            WeightScheme::Equal,
            WeightScheme::Regression,
            WeightScheme::SmoothedAic,
            WeightScheme::SmoothedBic,
            WeightScheme::Mallows,
            WeightScheme::Jackknife,
            WeightScheme::Fixed(vec![0.7, 0.6]),
        ];
        for scheme in schemes {
            let fe = nested_fitter(scheme.clone()).fit(&x, &y).unwrap();
            assert!(
                fe.reconstruction_error() < 1e-10,
                "{scheme:?}: reconstruction error {}",
                fe.reconstruction_error()
            );
            let check = &y - &fe.averaged_fit;
            assert!((check - &fe.residuals).amax() < 1e-14);
        }
    }

    #[test]
    fn simplex_schemes_return_simplex_weights() {
        let (x, y) = toy_design(60, 2);
        for scheme in [
            WeightScheme::Equal,
            WeightScheme::SmoothedAic,
            WeightScheme::SmoothedBic,
            WeightScheme::Mallows,
            WeightScheme::Jackknife,
        ] {
            let fe = nested_fitter(scheme.clone()).fit(&x, &y).unwrap();
            let sum: f64 = fe.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "{scheme:?} weights sum {sum}");
            assert!(
                fe.weights.iter().all(|&w| w >= -1e-12),
                "{scheme:?} negative weight"
            );
        }
    }

    #[test]
    fn fixed_weights_pass_through_unnormalized() {
        let (x, y) = toy_design(30, 3);
        let fe = nested_fitter(WeightScheme::Fixed(vec![0.25, 0.5]))
            .fit(&x, &y)
            .unwrap();
        assert_eq!(fe.weights.as_slice(), &[0.25, 0.5]);
    }

    #[test]
    fn fixed_weights_length_checked() {
        let err = EnsembleFitter::new(
            ModelSet::nested(3).unwrap(),
            WeightScheme::Fixed(vec![1.0]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn predict_row_matches_in_sample_fit() {
        let (x, y) = toy_design(25, 4);
        let fitter = nested_fitter(WeightScheme::Mallows);
        let fe = fitter.fit(&x, &y).unwrap();
        for i in [0usize, 7, 24] {
            let row: Vec<f64> = (0..3).map(|j| x[(i, j)]).collect();
            assert_abs_diff_eq!(
                fitter.predict_row(&fe, &row),
                fe.averaged_fit[i],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn single_model_set_pins_weight_to_one() {
        let (x, y) = toy_design(20, 5);
        let ms = ModelSet::new(vec![CandidateModel::new(vec![0, 1]).unwrap()]).unwrap();
        for scheme in [
            WeightScheme::Equal,
            WeightScheme::Regression,
            WeightScheme::SmoothedAic,
            WeightScheme::Mallows,
            WeightScheme::Jackknife,
        ] {
            let fe = EnsembleFitter::new(ms.clone(), scheme).unwrap().fit(&x, &y).unwrap();
            assert_abs_diff_eq!(fe.weights[0], 1.0, epsilon = 1e-8);
        }
    }
}
