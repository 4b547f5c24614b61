// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrMethod {
    #[default]
    Spearman,
    Pearson,
}

fn check_finite<T: Scalar>(x: &[T]) -> Result<(), StatsError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Result<Vec<T>, StatsError> {
    check_finite(x)?;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values compare"));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean((i+1)..=j)
        let r = T::of_usize(i + j + 1) / T::of(2.0);
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    Ok(ranks)
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            found: x.len(),
        });
    }
    check_finite(x)?;
    check_finite(y)?;
    let n = T::of_usize(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::Constant);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Pearson correlation of average ranks.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort {
            needed: 3,
            found: x.len(),
        });
    }
    pearson(&average_ranks(x)?, &average_ranks(y)?)
}

pub fn correlate<T: Scalar>(x: &[T], y: &[T], method: CorrMethod) -> Result<T, StatsError> {
    match method {
        CorrMethod::Spearman => spearman(x, y),
        CorrMethod::Pearson => {
            if x.len() < 3 {
                return Err(StatsError::TooShort {
                    needed: 3,
                    found: x.len(),
                });
            }
            pearson(x, y)
        }
    }
}

/// Correlation between `series[..n-lag]` and `series[lag..]`.
pub fn lag_autocorr<T: Scalar>(series: &[T], lag: usize, method: CorrMethod) -> Result<T, StatsError> {
    let n = series.len();
    if lag == 0 || n < lag + 3 {
        return Err(StatsError::TooShort {
            needed: lag.max(1) + 3,
            found: n,
        });
    }
    correlate(&series[..n - lag], &series[lag..], method)
}
