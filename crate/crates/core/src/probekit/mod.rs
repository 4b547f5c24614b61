// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear probes: hinge-loss SVM and ridge regression, plus the
//! standardization transforms fitted around them.

mod ridge;
mod standardize;
mod svm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ridge::{ridge_weights, train_ridge, train_ridge_via, RidgeRoute};
pub use standardize::{
    fit_conditional_standardizer, fit_standardizer, fit_standardizer_with, ColumnStats, Standardizer,
};
pub use svm::{primal_objective, train_svm, train_svm_traced, SvmFit};

use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("features contain NaN or infinity")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("group {0:?} has a single row")]
    SingletonGroup(String),
    #[error("singular system (use a positive ridge penalty)")]
    Singular,
    #[error("invalid probe input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Svm,
    Ridge,
}

/// Probe hyperparameters. JSON keys: `kind`, `c`, `lambda`, `tol`, `max_iter`, `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// SVM cost.
    pub c: f64,
    /// Ridge penalty.
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Svm,
            c: 1.0,
            lambda: 1.0,
            tol: 1e-6,
            max_iter: 20_000,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn svm() -> Self {
        Self::default()
    }

    pub fn ridge() -> Self {
        Self {
            kind: ProbeKind::Ridge,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn check(&self) -> Result<(), ProbeError> {
        if !self.c.is_finite() || self.c <= 0.0 {
            return Err(ProbeError::Invalid(format!("C must be positive, got {}", self.c)));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(ProbeError::Invalid(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(ProbeError::Invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(ProbeError::Invalid("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fitted linear probe: `score = w . standardize(x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel<T> {
    pub kind: ProbeKind,
    pub weights: Vec<T>,
    pub intercept: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer<T>>,
}

impl<T: Scalar + Serialize> ProbeModel<T> {
    /// JSON for inspection; `max_weights` keeps only the leading weights.
    pub fn to_debug_json(&self, max_weights: Option<usize>) -> String {
        let mut shown = self.clone();
        if let Some(k) = max_weights {
            shown.weights.truncate(k);
        }
        let mut v = serde_json::to_value(&shown).expect("model serializes");
        v["n_weights"] = self.weights.len().into();
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

impl<T: Scalar> ProbeModel<T> {
    pub fn with_standardizer(mut self, s: Standardizer<T>) -> Self {
        self.standardizer = Some(s);
        self
    }

    /// Scores on features that are already in the model's input space.
    pub fn decision(&self, x: &Matrix<T>) -> Result<Vec<T>, ProbeError> {
        if x.cols() != self.weights.len() {
            return Err(ProbeError::Dimension {
                expected: self.weights.len(),
                found: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| dot(&self.weights, r) + self.intercept).collect())
    }
}

/// Applies the attached (plain) standardizer, then `w . x + b`.
pub fn predict<T: Scalar>(model: &ProbeModel<T>, x: &Matrix<T>) -> Result<Vec<T>, ProbeError> {
    match &model.standardizer {
        Some(s) => model.decision(&s.transform(x)?),
        None => model.decision(x),
    }
}

/// Like [`predict`] for models carrying a conditional standardizer.
pub fn predict_grouped<T: Scalar, S: AsRef<str>>(
    model: &ProbeModel<T>,
    x: &Matrix<T>,
    group_of_row: &[S],
) -> Result<Vec<T>, ProbeError> {
    match &model.standardizer {
        Some(s) => model.decision(&s.transform_grouped(x, group_of_row)?),
        None => model.decision(x),
    }
}

/// Class signs; a score of exactly zero goes to +1.
pub fn classify<T: Scalar>(scores: &[T]) -> Vec<T> {
    scores
        .iter()
        .map(|&s| if s >= T::zero() { T::one() } else { -T::one() })
        .collect()
}

/// Standardizes `x` on its own rows, trains the configured probe, and
/// attaches the standardizer.
pub fn fit_probe<T: Scalar>(x: &Matrix<T>, y: &[T], cfg: &ProbeConfig) -> Result<ProbeModel<T>, ProbeError> {
    let s = fit_standardizer(x)?;
    let z = s.transform(x)?;
    let m = match cfg.kind {
        ProbeKind::Svm => train_svm(&z, y, cfg)?,
        ProbeKind::Ridge => train_ridge(&z, y, cfg)?,
    };
    Ok(m.with_standardizer(s))
}
