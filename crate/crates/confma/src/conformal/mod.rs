//! The four interval-construction engines, each parameterized by a weight
//! scheme: full conformal, locally adaptive full conformal, split conformal,
//! and locally adaptive split conformal.
//!
//! Candidate outcome values y are accepted into the interval when the
//! conformal p-value of the implied prediction error exceeds α:
//!
//! ```text
//! π(y) = (1 + Σ_i 1{R_i ≥ R_new}) / (n_scores + 1)
//! ```
//!
//! The full engines refit all model parameters and weights on the sample
//! augmented with each trial value; the split engines estimate once on one
//! subsample and calibrate scores on the other, which collapses the grid
//! search into a closed-form interval.

mod ensemble;
mod full;
mod split;

pub use ensemble::EnsembleFitter;
pub use full::{adaptive_full_conformal, full_conformal};
pub use split::{adaptive_split_conformal, split_conformal};

use thiserror::Error;

use crate::residual_models::ResidualError;
use crate::types::{
    ConformalConfig, CoreError, Dataset, IntervalReport, ModelSet, Variant,
};
use crate::weights::WeightError;
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error("degenerate spread: all pilot residuals are zero")]
    DegenerateSpread,
    #[error("trial grid needs at least two points, got {0}")]
    GridDegenerate(usize),
    #[error("estimation subsample too small: |I1| = {i1}, need at least {needed}")]
    SplitTooSmall { i1: usize, needed: usize },
    #[error("config requests {expected:?}/adaptive={adaptive} but a different engine was called")]
    WrongVariant { expected: Variant, adaptive: bool },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Conformal p-value of a new score against historical scores, with ties
/// counted inclusively (≥), i.e. conservatively.
pub fn conformal_pvalue(scores: &[f64], score_new: f64) -> f64 {
    let hits = scores.iter().filter(|&&s| s >= score_new).count();
    (1 + hits) as f64 / (scores.len() + 1) as f64
}

/// Equally spaced candidate outcome values, symmetric about a center point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialGrid {
    pub values: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

/// Build a trial grid of `cfg.grid_points` values spanning
/// `point ± cfg.grid_expansion · spread`.
///
/// The grid is assembled from mirrored offsets so it is symmetric about
/// `point` to the last bit.
pub fn build_trial_grid(
    point: f64,
    spread: f64,
    cfg: &ConformalConfig,
) -> Result<TrialGrid, ConformalError> {
    if !(spread > 0.0) {
        return Err(ConformalError::DegenerateSpread);
    }
    let g = cfg.grid_points;
    if g < 2 {
        return Err(ConformalError::GridDegenerate(g));
    }
    let half = cfg.grid_expansion * spread;
    let mut values = vec![0.0; g];
    for k in 0..g / 2 {
        let offset = half * (1.0 - 2.0 * k as f64 / (g - 1) as f64);
        values[k] = point - offset;
        values[g - 1 - k] = point + offset;
    }
    if g % 2 == 1 {
        values[g / 2] = point;
    }
    Ok(TrialGrid {
        lo: values[0],
        hi: values[g - 1],
        values,
    })
}

/// Fallback spread when every pilot residual is zero.
pub(crate) fn widen_degenerate_spread(point: f64) -> f64 {
    point.abs() * 1e-6 + 1e-6
}

/// Dispatch to the engine selected by `cfg.variant` and `cfg.adaptive`.
pub fn compute_interval(
    data: &Dataset,
    x_new: &[f64],
    fitter: &EnsembleFitter,
    cfg: &ConformalConfig,
) -> Result<IntervalReport, ConformalError> {
    match (cfg.variant, cfg.adaptive) {
        (Variant::Full, false) => full_conformal(data, x_new, fitter, cfg),
        (Variant::Full, true) => adaptive_full_conformal(data, x_new, fitter, cfg),
        (Variant::Split, false) => split_conformal(data, x_new, fitter, cfg),
        (Variant::Split, true) => adaptive_split_conformal(data, x_new, fitter, cfg),
    }
}

/// Variance-model columns: the configured list, or the columns of the
/// largest candidate model when unset.
pub(crate) fn resolve_variance_columns(
    cfg: &ConformalConfig,
    model_set: &ModelSet,
    p: usize,
) -> Result<Vec<usize>, ConformalError> {
    let cols = match &cfg.variance_columns {
        Some(cols) => cols.clone(),
        None => model_set.models()[model_set.largest_model()]
            .columns()
            .to_vec(),
    };
    for &c in &cols {
        if c >= p {
            return Err(CoreError::ColumnOutOfRange { index: c, p }.into());
        }
    }
    if cols.is_empty() {
        return Err(ConformalError::InvalidInput(
            "variance model needs at least one covariate column".into(),
        ));
    }
    Ok(cols)
}

/// k-th smallest (1-indexed) of a score set, or `None` when k exceeds the
/// number of scores — the boundary case where the interval is unbounded.
pub(crate) fn kth_smallest(scores: &[f64], k: usize) -> Option<f64> {
    if k == 0 || k > scores.len() {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    Some(sorted[k - 1])
}

/// Calibration rank k = ⌈(n2 + 1)(1 − α)⌉.
pub(crate) fn calibration_rank(n2: usize, alpha: f64) -> usize {
    (((n2 + 1) as f64) * (1.0 - alpha)).ceil() as usize
}
