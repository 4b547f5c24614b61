// SPDX-License-Identifier: MIT OR Apache-2.0

//! Local maxima and their topographic prominence.

use serde::{Deserialize, Serialize};

use super::zscore_series;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub layer: usize,
    /// Height in z-units.
    pub height: f64,
    /// Prominence in z-units.
    pub prominence: f64,
    pub left_base: usize,
    pub right_base: usize,
}

/// Strict local maxima; a plateau counts once, at its leftmost index.
/// Endpoints are never maxima.
pub fn local_maxima<T: Scalar>(a: &[T]) -> Vec<usize> {
    let n = a.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if a[i] > a[i - 1] {
            let mut j = i;
            while j + 1 < n && a[j + 1] == a[i] {
                j += 1;
            }
            if j + 1 < n && a[j + 1] < a[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Prominence of the maximum at `peak`: its height above the higher of the
/// two minima found walking each way until a strictly taller point (or the
/// series edge). Returns (prominence, left_base, right_base).
pub fn prominence<T: Scalar>(a: &[T], peak: usize) -> (T, usize, usize) {
    let h = a[peak];
    let mut left_base = peak;
    let mut left_min = h;
    for i in (0..peak).rev() {
        if a[i] > h {
            break;
        }
        if a[i] < left_min {
            left_min = a[i];
            left_base = i;
        }
    }
    let mut right_base = peak;
    let mut right_min = h;
    for (i, &v) in a.iter().enumerate().skip(peak + 1) {
        if v > h {
            break;
        }
        if v < right_min {
            right_min = v;
            right_base = i;
        }
    }
    (h - left_min.max(right_min), left_base, right_base)
}

/// Peaks of the z-scored series with prominence at least `min_prominence`
/// (z-units), sorted by layer. Series shorter than 3 or constant have none.
pub fn detect_peaks<T: Scalar>(series: &[T], min_prominence: f64) -> Vec<Peak> {
    if series.len() < 3 {
        return Vec::new();
    }
    let Ok(z) = zscore_series(series) else {
        return Vec::new();
    };
    local_maxima(&z)
        .into_iter()
        .filter_map(|p| {
            let (prom, left_base, right_base) = prominence(&z, p);
            let prom = prom.as_f64();
            (prom > 0.0 && prom >= min_prominence).then(|| Peak {
                layer: p,
                height: z[p].as_f64(),
                prominence: prom,
                left_base,
                right_base,
            })
        })
        .collect()
}
