// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ProbeError;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats<T> {
    pub mean: Vec<T>,
    pub sd: Vec<T>,
}

impl<T: Scalar> ColumnStats<T> {
    fn fit(x: &Matrix<T>, rows: &[usize], epsilon: T) -> Self {
        let d = x.cols();
        let n = T::of_usize(rows.len());
        let mut mean = vec![T::zero(); d];
        for &r in rows {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for &r in rows {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let c = v - m;
                *s += c * c;
            }
        }
        let sd = var.into_iter().map(|s| (s / n).sqrt().max(epsilon)).collect();
        Self { mean, sd }
    }

    fn apply(&self, row: &mut [T]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.sd) {
            *v = (*v - m) / s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Standardizer<T> {
    /// One set of statistics for every row.
    Plain { stats: ColumnStats<T>, epsilon: T },
    /// Statistics per group; each row is standardized by its own group.
    Conditional {
        groups: BTreeMap<String, ColumnStats<T>>,
        epsilon: T,
    },
}

impl<T: Scalar> Standardizer<T> {
    pub fn epsilon(&self) -> T {
        match self {
            Standardizer::Plain { epsilon, .. } | Standardizer::Conditional { epsilon, .. } => *epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Standardizer::Plain { stats, .. } => stats.mean.len(),
            Standardizer::Conditional { groups, .. } => groups.values().next().map_or(0, |s| s.mean.len()),
        }
    }

    /// Applies plain statistics. Conditional standardizers need
    /// [`Standardizer::transform_grouped`].
    pub fn transform(&self, x: &Matrix<T>) -> Result<Matrix<T>, ProbeError> {
        match self {
            Standardizer::Plain { stats, .. } => {
                check_dim(x, stats.mean.len())?;
                let mut out = x.clone();
                for i in 0..out.rows() {
                    stats.apply(out.row_mut(i));
                }
                Ok(out)
            }
            Standardizer::Conditional { .. } => Err(ProbeError::Invalid(
                "conditional standardizer needs a group per row".into(),
            )),
        }
    }

    pub fn transform_grouped<S: AsRef<str>>(&self, x: &Matrix<T>, group_of_row: &[S]) -> Result<Matrix<T>, ProbeError> {
        match self {
            Standardizer::Plain { .. } => self.transform(x),
            Standardizer::Conditional { groups, .. } => {
                if group_of_row.len() != x.rows() {
                    return Err(ProbeError::Dimension {
                        expected: x.rows(),
                        found: group_of_row.len(),
                    });
                }
                check_dim(x, self.dim())?;
                let mut out = x.clone();
                for (i, g) in group_of_row.iter().enumerate() {
                    let stats = groups
                        .get(g.as_ref())
                        .ok_or_else(|| ProbeError::Invalid(format!("unknown group {:?}", g.as_ref())))?;
                    stats.apply(out.row_mut(i));
                }
                Ok(out)
            }
        }
    }
}

fn check_dim<T: Scalar>(x: &Matrix<T>, d: usize) -> Result<(), ProbeError> {
    if x.cols() != d {
        return Err(ProbeError::Dimension {
            expected: d,
            found: x.cols(),
        });
    }
    Ok(())
}

pub fn fit_standardizer<T: Scalar>(x: &Matrix<T>) -> Result<Standardizer<T>, ProbeError> {
    fit_standardizer_with(x, T::tiny())
}

/// Column z-scoring; `epsilon` floors the standard deviation of constant columns.
pub fn fit_standardizer_with<T: Scalar>(x: &Matrix<T>, epsilon: T) -> Result<Standardizer<T>, ProbeError> {
    if x.rows() < 2 {
        return Err(ProbeError::TooFewRows {
            needed: 2,
            found: x.rows(),
        });
    }
    let rows: Vec<usize> = (0..x.rows()).collect();
    Ok(Standardizer::Plain {
        stats: ColumnStats::fit(x, &rows, epsilon),
        epsilon,
    })
}

/// Per-group z-scoring. Label-agnostic, so it may be fit on all rows before
/// any train/test split.
pub fn fit_conditional_standardizer<T: Scalar, S: AsRef<str>>(
    x: &Matrix<T>,
    group_of_row: &[S],
) -> Result<Standardizer<T>, ProbeError> {
    if group_of_row.len() != x.rows() {
        return Err(ProbeError::Dimension {
            expected: x.rows(),
            found: group_of_row.len(),
        });
    }
    let epsilon = T::tiny();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in group_of_row.iter().enumerate() {
        members.entry(g.as_ref()).or_default().push(i);
    }
    let mut groups = BTreeMap::new();
    for (g, rows) in members {
        if rows.len() < 2 {
            return Err(ProbeError::SingletonGroup(g.to_string()));
        }
        groups.insert(g.to_string(), ColumnStats::fit(x, &rows, epsilon));
    }
    Ok(Standardizer::Conditional { groups, epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-5.0..20.0)).collect();
        Matrix::from_vec(n, d, data).unwrap()
    }

    #[test]
    fn two_rows_mean_and_sd() {
        let x = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let s = fit_standardizer(&x).unwrap();
        match &s {
            Standardizer::Plain { stats, .. } => {
                assert_eq!(stats.mean, vec![2.0]);
                assert_eq!(stats.sd, vec![1.0]);
            }
            _ => unreachable!(),
        }
        let t = s.transform(&x).unwrap();
        assert_eq!(t.column(0), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Matrix::from_rows(&[[4.0, 1.0], [4.0, 2.0], [4.0, 3.0]]).unwrap();
        let t = fit_standardizer(&x).unwrap().transform(&x).unwrap();
        assert!(t.column(0).iter().all(|&v| v == 0.0));
        assert!(t.is_finite());
    }

    #[test]
    fn too_few_rows() {
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(fit_standardizer(&x), Err(ProbeError::TooFewRows { .. })));
    }

    #[test]
    fn random_columns_recentered() {
        let x = random(50, 8, 3);
        let t = fit_standardizer(&x).unwrap().transform(&x).unwrap();
        // recompute moments directly
        for j in 0..8 {
            let col = t.column(j);
            let m = col.iter().sum::<f64>() / 50.0;
            let v = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-10, "mean {m}");
            assert!((v.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn conditional_two_groups() {
        let x = Matrix::from_rows(&[[0.0], [2.0], [10.0], [12.0]]).unwrap();
        let g = ["a", "a", "b", "b"];
        let s = fit_conditional_standardizer(&x, &g).unwrap();
        let t = s.transform_grouped(&x, &g).unwrap();
        assert_eq!(t.column(0), vec![-1.0, 1.0, -1.0, 1.0]);
        assert!(s.transform(&x).is_err());
    }

    #[test]
    fn conditional_single_group_matches_plain() {
        let x = random(12, 3, 9);
        let g = vec!["only"; 12];
        let a = fit_conditional_standardizer(&x, &g)
            .unwrap()
            .transform_grouped(&x, &g)
            .unwrap();
        let b = fit_standardizer(&x).unwrap().transform(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_random_group_means_vanish() {
        let x = random(60, 4, 11);
        let g: Vec<String> = (0..60).map(|i| format!("g{}", i % 5)).collect();
        let t = fit_conditional_standardizer(&x, &g)
            .unwrap()
            .transform_grouped(&x, &g)
            .unwrap();
        for grp in 0..5 {
            let rows: Vec<usize> = (0..60).filter(|i| i % 5 == grp).collect();
            for j in 0..4 {
                let m = rows.iter().map(|&r| t[(r, j)]).sum::<f64>() / rows.len() as f64;
                assert!(m.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singleton_group_rejected() {
        let x = Matrix::from_rows(&[[0.0], [2.0], [10.0]]).unwrap();
        assert!(matches!(
            fit_conditional_standardizer(&x, &["a", "a", "b"]),
            Err(ProbeError::SingletonGroup(g)) if g == "b"
        ));
    }
}
