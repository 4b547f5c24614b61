// SPDX-License-Identifier: MIT OR Apache-2.0

//! Invariants of folds, the store format and curve statistics.

use std::collections::{BTreeMap, BTreeSet};

use layerscope::actstore::{ActivationStore, SiteId, StoreHeader};
use layerscope::curvestats::{average_ranks, detect_peaks, lag_autocorr, spearman, zscore_series, CorrMethod};
use layerscope::harness::{group_folds, splits_from_assignment, stratified_folds};
use proptest::prelude::*;

/// Spearman via the textbook rank formula with explicit O(n^2) rank counting.
fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let below = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100i32..100, len).prop_map(|v| v.into_iter().map(|x| f64::from(x) / 4.0).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn group_folds_never_split_a_group(
        groups in prop::collection::vec(0u8..30, 10..120),
        k in 2usize..8,
        seed in any::<u64>(),
    ) {
        let distinct: BTreeSet<u8> = groups.iter().copied().collect();
        prop_assume!(distinct.len() >= k);
        let a = group_folds(&groups, k, seed).unwrap();
        let mut fold_of: BTreeMap<u8, usize> = BTreeMap::new();
        for (g, f) in groups.iter().zip(&a) {
            prop_assert_eq!(*fold_of.entry(*g).or_insert(*f), *f);
        }
        let splits = splits_from_assignment(&a, k);
        let mut seen = vec![0; groups.len()];
        for s in &splits {
            for &i in &s.test {
                seen[i] += 1;
            }
            prop_assert_eq!(s.train.len() + s.test.len(), groups.len());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn stratified_folds_are_balanced(
        n_pos in 2usize..40,
        n_neg in 2usize..40,
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        prop_assume!(n_pos >= k && n_neg >= k);
        let classes: Vec<u8> = (0..n_pos + n_neg).map(|i| u8::from(i < n_pos)).collect();
        let a = stratified_folds(&classes, k, seed).unwrap();
        prop_assert_eq!(&a, &stratified_folds(&classes, k, seed).unwrap());
        for (class, n_c) in [(1u8, n_pos), (0u8, n_neg)] {
            let ideal = n_c as f64 / k as f64;
            for f in 0..k {
                let c = (0..a.len()).filter(|&i| a[i] == f && classes[i] == class).count() as f64;
                prop_assert!((c - ideal).abs() < 1.0 + 1e-12, "fold {} class {} has {} vs {}", f, class, c, ideal);
            }
        }
        let sizes: Vec<usize> = (0..k).map(|f| a.iter().filter(|&&x| x == f).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn store_round_trip_is_bit_exact(
        n_layers in 1usize..4,
        n_examples in 1usize..6,
        dim in 1usize..5,
        bits in prop::collection::vec(any::<u32>(), 60),
    ) {
        let len = n_layers * n_examples * dim;
        let data: Vec<f32> = bits.iter().cycle().take(len).map(|&b| f32::from_bits(b)).collect();
        let ids = (0..n_examples).map(|i| format!("ex{i}")).collect();
        let s = ActivationStore::new(StoreHeader::new("m", SiteId::FfnOut, n_layers, dim, ids), data).unwrap();
        let bytes = s.to_bytes();
        let header_json_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        prop_assert_eq!(bytes.len(), 12 + header_json_len + 4 * len);
        let back = ActivationStore::from_bytes(&bytes).unwrap();
        prop_assert!(back.bit_eq(&s));
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn spearman_matches_rank_oracle(x in series(3..30), y in series(3..30)) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        match spearman(x, y) {
            Ok(r) => prop_assert!((r - spearman_oracle(x, y)).abs() < 1e-12),
            Err(_) => prop_assert!(spearman_oracle(x, y).is_nan()),
        }
    }

    #[test]
    fn spearman_ignores_monotone_maps(x in series(3..25), y in series(3..25)) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        if let Ok(r) = spearman(x, y) {
            let fx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() * 3.0 - 1.0).collect();
            let gy: Vec<f64> = y.iter().map(|v| v * v * v + 2.0 * v).collect();
            prop_assert!((spearman(&fx, &gy).unwrap() - r).abs() < 1e-12);
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            prop_assert!((spearman(x, &neg).unwrap() + r).abs() < 1e-12);
        }
    }

    #[test]
    fn ranks_sum_to_triangular_number(x in series(1..40)) {
        let n = x.len() as f64;
        let s: f64 = average_ranks(&x).unwrap().iter().sum();
        prop_assert!((s - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn zscore_is_affine_invariant(x in series(2..30), a in 0.1f64..50.0, b in -20.0f64..20.0) {
        if let Ok(z) = zscore_series(&x) {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let zy = zscore_series(&y).unwrap();
            for (p, q) in z.iter().zip(&zy) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn peaks_ignore_affine_maps(x in series(3..40), a in 0.1f64..50.0, b in -20.0f64..20.0) {
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let px: Vec<usize> = detect_peaks(&x, 0.5).iter().map(|p| p.layer).collect();
        let py: Vec<usize> = detect_peaks(&y, 0.5).iter().map(|p| p.layer).collect();
        prop_assert_eq!(px, py);
    }

    #[test]
    fn lag_autocorr_matches_oracle(x in series(6..40), lag in 1usize..4) {
        let n = x.len();
        if let Ok(r) = lag_autocorr(&x, lag, CorrMethod::Spearman) {
            prop_assert!((r - spearman_oracle(&x[..n - lag], &x[lag..])).abs() < 1e-12);
        }
    }
}
