// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed-form ridge regression with the intercept fixed at `mean(y)`.
//!
//! With centered targets `yc`, the weights minimize `|X w - yc|^2 + lambda |w|^2`.
//! Two equivalent routes:
//!
//! * primal: `(X^T X + lambda I) w = X^T yc`         (d x d system)
//! * Gram:   `w = X^T (X X^T + lambda I)^-1 yc`      (n x n system)
//!
//! The Gram route is taken whenever `n <= d`, which is the usual probing
//! regime (hundreds of texts, thousands of hidden units).

use serde::{Deserialize, Serialize};

use super::{ProbeConfig, ProbeError, ProbeKind, ProbeModel};
use crate::linalg::{Cholesky, LinalgError, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeRoute {
    Auto,
    Primal,
    Gram,
}

impl RidgeRoute {
    pub fn resolve(self, n: usize, d: usize) -> RidgeRoute {
        match self {
            RidgeRoute::Auto if n <= d => RidgeRoute::Gram,
            RidgeRoute::Auto => RidgeRoute::Primal,
            other => other,
        }
    }
}

fn singular(e: LinalgError) -> ProbeError {
    match e {
        LinalgError::NotPositiveDefinite { .. } => ProbeError::Singular,
        other => ProbeError::Invalid(other.to_string()),
    }
}

/// Solves for the weights on already-centered targets.
pub fn ridge_weights<T: Scalar>(x: &Matrix<T>, yc: &[T], lambda: T, route: RidgeRoute) -> Result<Vec<T>, ProbeError> {
    if yc.len() != x.rows() {
        return Err(ProbeError::Dimension {
            expected: x.rows(),
            found: yc.len(),
        });
    }
    match route.resolve(x.rows(), x.cols()) {
        RidgeRoute::Gram => {
            let mut k = x.gram();
            k.add_diagonal(lambda);
            let alpha = Cholesky::factor(&k).map_err(singular)?.solve(yc).map_err(singular)?;
            x.tr_mul_vec(&alpha).map_err(singular)
        }
        _ => {
            let mut a = x.normal();
            a.add_diagonal(lambda);
            let rhs = x.tr_mul_vec(yc).map_err(singular)?;
            Cholesky::factor(&a).map_err(singular)?.solve(&rhs).map_err(singular)
        }
    }
}

pub fn train_ridge<T: Scalar>(x: &Matrix<T>, y: &[T], cfg: &ProbeConfig) -> Result<ProbeModel<T>, ProbeError> {
    train_ridge_via(x, y, cfg, RidgeRoute::Auto)
}

pub fn train_ridge_via<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    cfg: &ProbeConfig,
    route: RidgeRoute,
) -> Result<ProbeModel<T>, ProbeError> {
    cfg.check()?;
    if x.rows() < 2 {
        return Err(ProbeError::TooFewRows {
            needed: 2,
            found: x.rows(),
        });
    }
    if y.len() != x.rows() {
        return Err(ProbeError::Dimension {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    let mean = y.iter().copied().sum::<T>() / T::of_usize(y.len());
    let yc: Vec<T> = y.iter().map(|&v| v - mean).collect();
    let weights = ridge_weights(x, &yc, T::of(cfg.lambda), route)?;
    Ok(ProbeModel {
        kind: ProbeKind::Ridge,
        weights,
        intercept: mean,
        standardizer: None,
    })
}
