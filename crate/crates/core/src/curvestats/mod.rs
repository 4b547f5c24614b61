// SPDX-License-Identifier: MIT OR Apache-2.0

//! Second-order statistics over layer curves: z-scores, first differences,
//! rank correlations, lagged autocorrelation, correlation matrices, peaks.

mod peaks;
mod rank;
mod render;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use peaks::{detect_peaks, local_maxima, prominence, Peak};
pub use rank::{average_ranks, correlate, lag_autocorr, pearson, spearman, CorrMethod};
pub use render::{overlay_svg, write_csv};
pub use report::{summarize, AnalysisOptions, CurveAnalysis, CurveReport, LagSummary, LayerWindow, SiteSummary};

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series too short: need at least {needed}, found {found}")]
    TooShort { needed: usize, found: usize },
    #[error("constant series")]
    Constant,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series contains NaN or infinity")]
    NonFinite,
    #[error("need at least 2 series, found {0}")]
    TooFewSeries(usize),
    #[error("no curves to analyze")]
    Empty,
}

fn mean_and_pop_sd<T: Scalar>(a: &[T]) -> (T, T) {
    let n = T::of_usize(a.len());
    let mean = a.iter().copied().sum::<T>() / n;
    let var = a.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// `(a - mean) / sd` with the population standard deviation.
pub fn zscore_series<T: Scalar>(a: &[T]) -> Result<Vec<T>, StatsError> {
    if a.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            found: a.len(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (mean, sd) = mean_and_pop_sd(a);
    let scale = a.iter().fold(T::one(), |m, v| m.max(v.abs()));
    if sd <= T::tiny() * scale {
        return Err(StatsError::Constant);
    }
    Ok(a.iter().map(|&v| (v - mean) / sd).collect())
}

/// Differences between neighbouring layers: `d[i] = a[i+1] - a[i]`.
pub fn diff_series<T: Scalar>(a: &[T]) -> Result<Vec<T>, StatsError> {
    if a.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            found: a.len(),
        });
    }
    Ok(a.windows(2).map(|w| w[1] - w[0]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesRange {
    #[default]
    Full,
    /// Indices `ceil(n/2)..n`.
    SecondHalf,
}

impl SeriesRange {
    pub fn apply<T>(self, s: &[T]) -> &[T] {
        match self {
            SeriesRange::Full => s,
            SeriesRange::SecondHalf => &s[s.len().div_ceil(2)..],
        }
    }
}

/// Pairwise correlation matrix. Undefined entries (a constant sub-series)
/// are `None` and listed in `undefined_pairs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMatrix {
    pub labels: Vec<String>,
    pub range: SeriesRange,
    pub method: CorrMethod,
    pub values: Vec<Vec<Option<f64>>>,
    pub undefined_pairs: Vec<(usize, usize)>,
    /// Mean of the defined upper-triangle entries.
    pub off_diagonal_mean: Option<f64>,
    /// Population SD of the defined upper-triangle entries.
    pub off_diagonal_sd: Option<f64>,
}

pub fn corr_matrix<T: Scalar, S: AsRef<[T]>>(
    series: &[S],
    range: SeriesRange,
    method: CorrMethod,
) -> Result<CorrMatrix, StatsError> {
    let k = series.len();
    if k < 2 {
        return Err(StatsError::TooFewSeries(k));
    }
    let n = series[0].as_ref().len();
    for s in series {
        if s.as_ref().len() != n {
            return Err(StatsError::LengthMismatch(n, s.as_ref().len()));
        }
    }
    let mut values = vec![vec![None; k]; k];
    let mut undefined_pairs = Vec::new();
    let mut upper = Vec::new();
    for i in 0..k {
        values[i][i] = Some(1.0);
        for j in (i + 1)..k {
            let a = range.apply(series[i].as_ref());
            let b = range.apply(series[j].as_ref());
            match correlate(a, b, method) {
                Ok(r) => {
                    let r = r.as_f64();
                    values[i][j] = Some(r);
                    values[j][i] = Some(r);
                    upper.push(r);
                }
                Err(StatsError::Constant) => undefined_pairs.push((i, j)),
                Err(e) => return Err(e),
            }
        }
    }
    let (off_diagonal_mean, off_diagonal_sd) = if upper.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_and_pop_sd(&upper);
        (Some(m), Some(s))
    };
    Ok(CorrMatrix {
        labels: (0..k).map(|i| i.to_string()).collect(),
        range,
        method,
        values,
        undefined_pairs,
        off_diagonal_mean,
        off_diagonal_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_hand_values() {
        let z = zscore_series(&[1.0, 2.0, 3.0]).unwrap();
        let e = (1.5f64).sqrt();
        assert!((z[0] + e).abs() < 1e-12);
        assert!(z[1].abs() < 1e-12);
        assert!((z[2] - e).abs() < 1e-12);
    }

    #[test]
    fn zscore_errors() {
        assert_eq!(zscore_series(&[5.0, 5.0, 5.0]), Err(StatsError::Constant));
        assert_eq!(zscore_series(&[0.1, 0.1, 0.1, 0.1]), Err(StatsError::Constant));
        assert!(matches!(zscore_series(&[5.0]), Err(StatsError::TooShort { .. })));
    }

    #[test]
    fn diff_examples() {
        assert_eq!(diff_series(&[1.0, 3.0, 2.0]).unwrap(), vec![2.0, -1.0]);
        assert_eq!(diff_series(&[4.0, 4.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        assert!(diff_series(&[1.0]).is_err());
    }

    #[test]
    fn second_half_uses_ceiling() {
        let s = [0, 1, 2, 3, 4];
        assert_eq!(SeriesRange::SecondHalf.apply(&s), &[3, 4]);
        let s = [0, 1, 2, 3];
        assert_eq!(SeriesRange::SecondHalf.apply(&s), &[2, 3]);
    }

    #[test]
    fn matrix_identical_and_negated() {
        let a = vec![1.0, 3.0, 2.0, 5.0, 4.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let m = corr_matrix(&[a.clone(), a.clone(), neg], SeriesRange::Full, CorrMethod::Spearman).unwrap();
        assert!((m.values[0][1].unwrap() - 1.0).abs() < 1e-12);
        assert!((m.values[0][2].unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.values[2][2], Some(1.0));
    }

    #[test]
    fn matrix_flags_constant_pairs() {
        let m = corr_matrix(
            &[vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]],
            SeriesRange::Full,
            CorrMethod::Spearman,
        )
        .unwrap();
        assert_eq!(m.undefined_pairs, vec![(0, 1)]);
        assert_eq!(m.values[0][1], None);
        assert_eq!(m.off_diagonal_mean, None);
    }

    #[test]
    fn matrix_shape_errors() {
        assert_eq!(
            corr_matrix(&[vec![1.0, 2.0, 3.0]], SeriesRange::Full, CorrMethod::Spearman),
            Err(StatsError::TooFewSeries(1))
        );
        assert_eq!(
            corr_matrix(
                &[vec![1.0, 2.0, 3.0], vec![1.0, 2.0]],
                SeriesRange::Full,
                CorrMethod::Spearman
            ),
            Err(StatsError::LengthMismatch(3, 2))
        );
    }
}
