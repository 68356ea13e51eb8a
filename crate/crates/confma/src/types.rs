//! Shared domain types: samples, candidate model sets, weight schemes, and
//! interval outputs.
//!
//! All types here are immutable after construction and safe to share across
//! concurrent workers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on the column count accepted by [`ModelSet::all_subsets`];
/// 2^20 − 1 models is the practical desk-scale ceiling.
pub const MAX_ALL_SUBSETS_COLUMNS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoreError {
    #[error("dimension mismatch: X has {rows} rows but y has {len} entries")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("non-finite input: {0} contains NaN or infinity")]
    NonFiniteInput(&'static str),
    #[error("too few rows: n = {0}, need at least 2")]
    TooFewRows(usize),
    #[error("too many columns for all-subsets enumeration: p = {0} exceeds {MAX_ALL_SUBSETS_COLUMNS}")]
    TooManyColumns(usize),
    #[error("matrix must have at least one column")]
    NoColumns,
    #[error("candidate model must select at least one column")]
    EmptyModel,
    #[error("candidate model has duplicate column index {0}")]
    DuplicateColumn(usize),
    #[error("column index {index} out of range for p = {p}")]
    ColumnOutOfRange { index: usize, p: usize },
    #[error("model set must contain at least one model")]
    EmptyModelSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Whether rows may be treated as exchangeable or carry a temporal order.
///
/// For `TimeSeries` data, row `i`'s covariates are the lagged predictors for
/// outcome `i`: the pair stored in row `i` is (x_{t-1}, y_t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleOrdering {
    Exchangeable,
    TimeSeries,
}

/// A regression sample: covariate matrix, outcome vector, and ordering flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    ordering: SampleOrdering,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    /// Validate and build a dataset. Requires n ≥ 2, p ≥ 1, matching row
    /// counts, and finite entries throughout.
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        ordering: SampleOrdering,
    ) -> Result<Self, CoreError> {
        if x.ncols() == 0 {
            return Err(CoreError::NoColumns);
        }
        if x.nrows() != y.len() {
            return Err(CoreError::DimensionMismatch {
                rows: x.nrows(),
                len: y.len(),
            });
        }
        if x.nrows() < 2 {
            return Err(CoreError::TooFewRows(x.nrows()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteInput("X"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteInput("y"));
        }
        Ok(Self {
            x,
            y,
            ordering,
            column_names: None,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self, CoreError> {
        if names.len() != self.p() {
            return Err(CoreError::InvalidConfig(format!(
                "{} column names for {} columns",
                names.len(),
                self.p()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn ordering(&self) -> SampleOrdering {
        self.ordering
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Copy of the rows at `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Dataset {
            x,
            y,
            ordering: self.ordering,
            column_names: self.column_names.clone(),
        }
    }
}

/// Convenience wrapper matching the dataset constructor.
pub fn validate_dataset(
    x: DMatrix<f64>,
    y: DVector<f64>,
    ordering: SampleOrdering,
) -> Result<Dataset, CoreError> {
    Dataset::new(x, y, ordering)
}

/// One candidate regression: a sorted selection of covariate columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateModel {
    columns: Vec<usize>,
}

impl CandidateModel {
    /// Build from a column selection; indices are sorted, duplicates rejected.
    pub fn new(mut columns: Vec<usize>) -> Result<Self, CoreError> {
        if columns.is_empty() {
            return Err(CoreError::EmptyModel);
        }
        columns.sort_unstable();
        for pair in columns.windows(2) {
            if pair[0] == pair[1] {
                return Err(CoreError::DuplicateColumn(pair[0]));
            }
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Number of selected regressors (p_m).
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Extract the selected columns of `x` into a dense submatrix.
    pub fn select(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.columns.len(), |i, j| {
            x[(i, self.columns[j])]
        })
    }

    /// Dot product of the selected entries of a covariate row with `beta`.
    pub fn predict_row(&self, x_row: &[f64], beta: &DVector<f64>) -> f64 {
        self.columns
            .iter()
            .zip(beta.iter())
            .map(|(&c, &b)| x_row[c] * b)
            .sum()
    }
}

/// An ordered collection of candidate models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSet {
    models: Vec<CandidateModel>,
}

impl ModelSet {
    pub fn new(models: Vec<CandidateModel>) -> Result<Self, CoreError> {
        if models.is_empty() {
            return Err(CoreError::EmptyModelSet);
        }
        Ok(Self { models })
    }

    /// All 2^p − 1 nonempty column subsets, ordered by size then
    /// lexicographically. Capped at p ≤ 20.
    pub fn all_subsets(p: usize) -> Result<Self, CoreError> {
        if p == 0 {
            return Err(CoreError::NoColumns);
        }
        if p > MAX_ALL_SUBSETS_COLUMNS {
            return Err(CoreError::TooManyColumns(p));
        }
        let mut subsets: Vec<Vec<usize>> = (1u32..(1u32 << p))
            .map(|mask| (0..p).filter(|j| mask & (1 << j) != 0).collect())
            .collect();
        subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let models = subsets
            .into_iter()
            .map(CandidateModel::new)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(models)
    }

    /// Nested sequence over columns 0..=p_max−1 with column 0 the intercept:
    /// model m selects columns {0, …, m} for m = 1..p_max−1, so the m-th
    /// model has m + 1 coefficients and the largest has p_max.
    pub fn nested(p_max: usize) -> Result<Self, CoreError> {
        if p_max < 2 {
            return Err(CoreError::InvalidConfig(format!(
                "nested model set needs p_max >= 2, got {p_max}"
            )));
        }
        let models = (1..p_max)
            .map(|m| CandidateModel::new((0..=m).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(models)
    }

    /// Every nonempty subset of the predictor columns 1..=n_predictors, each
    /// joined with the intercept column 0. Yields 2^n_predictors − 1 models.
    pub fn intercept_plus_all_subsets(n_predictors: usize) -> Result<Self, CoreError> {
        if n_predictors == 0 {
            return Err(CoreError::NoColumns);
        }
        if n_predictors > MAX_ALL_SUBSETS_COLUMNS {
            return Err(CoreError::TooManyColumns(n_predictors));
        }
        let mut subsets: Vec<Vec<usize>> = (1u32..(1u32 << n_predictors))
            .map(|mask| {
                let mut cols = vec![0usize];
                cols.extend((0..n_predictors).filter(|j| mask & (1 << j) != 0).map(|j| j + 1));
                cols
            })
            .collect();
        subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let models = subsets
            .into_iter()
            .map(CandidateModel::new)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(models)
    }

    /// One bivariate model per predictor: {0, j} for j = 1..=n_predictors,
    /// column 0 being the intercept.
    pub fn bivariate_with_intercept(n_predictors: usize) -> Result<Self, CoreError> {
        if n_predictors == 0 {
            return Err(CoreError::NoColumns);
        }
        let models = (1..=n_predictors)
            .map(|j| CandidateModel::new(vec![0, j]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(models)
    }

    pub fn models(&self) -> &[CandidateModel] {
        &self.models
    }

    /// Number of candidate models (M).
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Largest column index referenced by any model, plus one.
    pub fn required_columns(&self) -> usize {
        self.models
            .iter()
            .flat_map(|m| m.columns().iter().copied())
            .max()
            .map_or(0, |c| c + 1)
    }

    /// Check that every referenced column exists in a p-column matrix.
    pub fn check_against(&self, p: usize) -> Result<(), CoreError> {
        for model in &self.models {
            for &c in model.columns() {
                if c >= p {
                    return Err(CoreError::ColumnOutOfRange { index: c, p });
                }
            }
        }
        Ok(())
    }

    /// Index of the model with the most regressors, ties broken by order.
    pub fn largest_model(&self) -> usize {
        let mut best = 0;
        for (m, model) in self.models.iter().enumerate() {
            if model.len() > self.models[best].len() {
                best = m;
            }
        }
        best
    }
}

/// The six averaging rules plus a caller-supplied fixed weight vector.
///
/// Fixed weights must be finite but are not required to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightScheme {
    Equal,
    Regression,
    SmoothedAic,
    SmoothedBic,
    Mallows,
    Jackknife,
    Fixed(Vec<f64>),
}

impl WeightScheme {
    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            WeightScheme::Equal => "equal",
            WeightScheme::Regression => "regression",
            WeightScheme::SmoothedAic => "saic",
            WeightScheme::SmoothedBic => "sbic",
            WeightScheme::Mallows => "mma",
            WeightScheme::Jackknife => "jma",
            WeightScheme::Fixed(_) => "fixed",
        }
    }

    pub fn validate(&self, n_models: usize) -> Result<(), CoreError> {
        if let WeightScheme::Fixed(w) = self {
            if w.len() != n_models {
                return Err(CoreError::InvalidConfig(format!(
                    "fixed weight vector has length {} but the model set has {} models",
                    w.len(),
                    n_models
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFiniteInput("fixed weights"));
            }
        }
        Ok(())
    }
}

/// Per-model coefficients, weights, fitted values, and residuals for one
/// (possibly augmented) estimation sample.
#[derive(Debug, Clone)]
pub struct FittedEnsemble {
    /// β̂_m for each candidate model, in model-set order.
    pub coefficients: Vec<DVector<f64>>,
    /// Estimated model weights ŵ (length M).
    pub weights: DVector<f64>,
    /// Fitted-value matrix F̂: column m holds model m's fitted values.
    pub fitted_matrix: DMatrix<f64>,
    /// Averaged fit μ̂ = F̂ ŵ.
    pub averaged_fit: DVector<f64>,
    /// Residuals ê = y − μ̂.
    pub residuals: DVector<f64>,
}

impl FittedEnsemble {
    /// Worst-case relative error of the reconstruction μ̂ = F̂ ŵ.
    pub fn reconstruction_error(&self) -> f64 {
        let recon = &self.fitted_matrix * &self.weights;
        let num = (&recon - &self.averaged_fit).amax();
        num / (1.0 + self.averaged_fit.amax())
    }
}

/// Which conformal engine to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    Split,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Split => "split",
        }
    }
}

/// Settings shared by all interval constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalConfig {
    /// Miscoverage level α ∈ (0, 1); the target coverage is 1 − α.
    pub alpha: f64,
    /// Trial-grid resolution G (≥ 3 for interval construction).
    pub grid_points: usize,
    /// Grid half-width as a multiple κ of the pilot residual spread.
    pub grid_expansion: f64,
    /// Standardize conformity scores with a fitted residual model.
    pub adaptive: bool,
    pub variant: Variant,
    /// Fraction of rows assigned to the estimation subsample in split mode.
    pub split_fraction: f64,
    /// Seed for the random estimation/calibration split (exchangeable data).
    pub split_seed: u64,
    /// Covariate columns for the adaptive variance model; `None` selects the
    /// columns of the largest candidate model.
    pub variance_columns: Option<Vec<usize>>,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            grid_points: 200,
            grid_expansion: 1.5,
            adaptive: false,
            variant: Variant::Full,
            split_fraction: 0.5,
            split_seed: 0,
            variance_columns: None,
        }
    }
}

impl ConformalConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.grid_points < 3 {
            return Err(CoreError::InvalidConfig(format!(
                "grid_points must be at least 3, got {}",
                self.grid_points
            )));
        }
        if !(self.grid_expansion > 0.0 && self.grid_expansion.is_finite()) {
            return Err(CoreError::InvalidConfig(format!(
                "grid_expansion must be positive and finite, got {}",
                self.grid_expansion
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "split_fraction must lie in (0,1), got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

/// A prediction interval with grid diagnostics.
///
/// `accepted_count` and `contiguous` describe the accepted trial set for the
/// full variants; split intervals are closed-form and report
/// `accepted_count = 0` with `contiguous = true`. `infinite` marks the split
/// boundary case k > |I2| where every outcome value is accepted; the
/// reported endpoints then fall back to the pilot grid bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub lower: f64,
    pub upper: f64,
    /// Point prediction at the query covariates.
    pub point: f64,
    pub accepted_count: usize,
    pub contiguous: bool,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub infinite: bool,
}

impl IntervalReport {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.infinite || (value >= self.lower && value <= self.upper)
    }
}
