// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic activation stores with a known signal layout.
//!
//! Each labelled target gets a fixed unit direction per writing site. The
//! attention and feed-forward outputs at layer `l` carry `amp[l] * y` along
//! that direction plus isotropic noise, and the residual input accumulates
//! them. Every value is rounded to a multiple of `2^-12` before it is stored,
//! so the accumulation is exact in `f32`.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actstore::{ActivationStore, SiteId, StoreError, StoreHeader};
use crate::designer::{ExampleRecord, Manifest};
use crate::linalg::{axpy, dot, norm2, Matrix};

/// Grid step of generated values.
pub const QUANTUM: f64 = 1.0 / 4096.0;
/// Generated magnitudes must stay below this bound.
pub const MAGNITUDE_LIMIT: f64 = 2048.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("amplitude maximum for {site} is shared by layers {layers:?}")]
    Tie { site: SiteId, layers: Vec<usize> },
    #[error("{0}")]
    Query(String),
    #[error("value {value} at layer {layer} exceeds the generator range; lower amplitudes or noise")]
    Overflow { layer: usize, value: f64 },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("profile JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Values 0/1 (or -1/+1), injected as -1/+1.
    Binary,
    /// Any real values, standardized before injection.
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSignal {
    pub name: String,
    pub kind: LabelKind,
    /// Per-layer signal amplitude in the attention output.
    pub attn: Vec<f64>,
    /// Per-layer signal amplitude in the feed-forward output.
    pub ffn: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthProfile {
    #[serde(default = "default_model_id")]
    pub model_id: String,
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub labels: Vec<LabelSignal>,
}

fn default_model_id() -> String {
    "synthetic".into()
}

impl SynthProfile {
    pub fn from_json(s: &str) -> Result<Self, SynthError> {
        let p: Self = serde_json::from_str(s)?;
        p.check()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn check(&self) -> Result<(), SynthError> {
        if self.n_layers == 0 || self.hidden_dim == 0 {
            return Err(SynthError::Shape("n_layers and hidden_dim must be at least 1".into()));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(SynthError::Shape(format!(
                "noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if 2 * self.labels.len() > self.hidden_dim {
            return Err(SynthError::Shape(format!(
                "{} labels need {} orthogonal directions but hidden_dim is {}",
                self.labels.len(),
                2 * self.labels.len(),
                self.hidden_dim
            )));
        }
        for l in &self.labels {
            for (site, amp) in [("attn", &l.attn), ("ffn", &l.ffn)] {
                if amp.len() != self.n_layers {
                    return Err(SynthError::Shape(format!(
                        "label {:?}: {site} has {} amplitudes for {} layers",
                        l.name,
                        amp.len(),
                        self.n_layers
                    )));
                }
                if amp.iter().any(|a| !a.is_finite()) {
                    return Err(SynthError::Shape(format!(
                        "label {:?}: non-finite {site} amplitude",
                        l.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn label(&self, name: &str) -> Option<&LabelSignal> {
        self.labels.iter().find(|l| l.name == name)
    }
}

/// The three stores of one generated run.
#[derive(Debug, Clone)]
pub struct SynthStores {
    pub resid_in: ActivationStore,
    pub attn_out: ActivationStore,
    pub ffn_out: ActivationStore,
}

impl SynthStores {
    pub fn get(&self, site: SiteId) -> &ActivationStore {
        match site {
            SiteId::ResidIn => &self.resid_in,
            SiteId::AttnOut => &self.attn_out,
            SiteId::FfnOut => &self.ffn_out,
        }
    }

    pub fn into_map(self) -> BTreeMap<SiteId, ActivationStore> {
        BTreeMap::from([
            (SiteId::ResidIn, self.resid_in),
            (SiteId::AttnOut, self.attn_out),
            (SiteId::FfnOut, self.ffn_out),
        ])
    }
}

fn quantize(v: f64, layer: usize) -> Result<f64, SynthError> {
    let q = (v / QUANTUM).round() * QUANTUM;
    if q.abs() >= MAGNITUDE_LIMIT {
        return Err(SynthError::Overflow { layer, value: v });
    }
    // -0.0 + 0.0 == +0.0, so zeros are stored with a single bit pattern
    Ok(q + 0.0)
}

/// Signal coefficients per example for one label.
fn injected_targets(m: &Manifest, label: &LabelSignal) -> Result<Vec<f64>, SynthError> {
    let raw = m
        .examples
        .iter()
        .map(|e| {
            e.labels
                .get(&label.name)
                .copied()
                .ok_or_else(|| SynthError::Label(format!("example {:?} lacks label {:?}", e.id, label.name)))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    match label.kind {
        LabelKind::Binary => raw
            .iter()
            .map(|&v| match v {
                1.0 => Ok(1.0),
                0.0 | -1.0 => Ok(-1.0),
                v => Err(SynthError::Label(format!(
                    "label {:?} is binary but has value {v}",
                    label.name
                ))),
            })
            .collect(),
        LabelKind::Real => {
            let n = raw.len() as f64;
            let mean = raw.iter().sum::<f64>() / n;
            let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd.is_nan() || sd <= 0.0 {
                return Err(SynthError::Label(format!("real label {:?} is constant", label.name)));
            }
            Ok(raw.iter().map(|v| (v - mean) / sd).collect())
        }
    }
}

/// `k` orthonormal vectors from Gaussian draws via Gram-Schmidt.
fn orthonormal_directions(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for u in &out {
            let p = dot(u, &v);
            axpy(-p, u, &mut v);
        }
        let n = norm2(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}

/// Generates resid_in, attn_out and ffn_out stores for the manifest.
///
/// Noise is drawn in a fixed order that does not depend on amplitudes, so
/// two profiles differing only in amplitudes share their noise.
pub fn generate(profile: &SynthProfile, manifest: &Manifest) -> Result<SynthStores, SynthError> {
    profile.check()?;
    let n = manifest.examples.len();
    if n == 0 {
        return Err(SynthError::Shape("manifest has no examples".into()));
    }
    let (layers, dim) = (profile.n_layers, profile.hidden_dim);
    let targets = profile
        .labels
        .iter()
        .map(|l| injected_targets(manifest, l))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let dirs = orthonormal_directions(2 * profile.labels.len(), dim, &mut rng);
    let sd = profile.noise_sd;
    let noise = |rng: &mut ChaCha8Rng| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    };

    let mut resid = vec![0.0f64; n * dim];
    for v in resid.iter_mut() {
        *v = quantize(noise(&mut rng), 0)?;
    }
    let mut blocks: BTreeMap<SiteId, Vec<Matrix<f32>>> = BTreeMap::new();
    for l in 0..layers {
        let mut outs = [vec![0.0f64; n * dim], vec![0.0f64; n * dim]];
        for (s, out) in outs.iter_mut().enumerate() {
            for v in out.iter_mut() {
                *v = noise(&mut rng);
            }
            for (li, label) in profile.labels.iter().enumerate() {
                let amp = if s == 0 { label.attn[l] } else { label.ffn[l] };
                if amp == 0.0 {
                    continue;
                }
                let u = &dirs[2 * li + s];
                for (e, &y) in targets[li].iter().enumerate() {
                    axpy(amp * y, u, &mut out[e * dim..(e + 1) * dim]);
                }
            }
            for v in out.iter_mut() {
                *v = quantize(*v, l)?;
            }
        }
        let to_f32 = |v: &[f64]| Matrix::from_vec(n, dim, v.iter().map(|&x| x as f32).collect()).expect("shape");
        blocks.entry(SiteId::ResidIn).or_default().push(to_f32(&resid));
        blocks.entry(SiteId::AttnOut).or_default().push(to_f32(&outs[0]));
        blocks.entry(SiteId::FfnOut).or_default().push(to_f32(&outs[1]));
        if l + 1 < layers {
            for (i, r) in resid.iter_mut().enumerate() {
                *r = quantize(*r + outs[0][i] + outs[1][i], l + 1)?;
            }
        }
    }

    let ids: Vec<String> = manifest.ids().map(str::to_string).collect();
    let mut build = |site: SiteId| {
        let header = StoreHeader::new(profile.model_id.clone(), site, layers, dim, ids.clone());
        ActivationStore::from_layers(header, &blocks.remove(&site).expect("all sites generated"))
    };
    Ok(SynthStores {
        resid_in: build(SiteId::ResidIn)?,
        attn_out: build(SiteId::AttnOut)?,
        ffn_out: build(SiteId::FfnOut)?,
    })
}

/// Outcome of checking `resid[l+1] - resid[l] == attn[l] + ffn[l]` in `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub exact: bool,
    pub checked: usize,
    pub mismatches: usize,
    pub max_abs_error: f64,
}

pub fn check_additivity(
    resid_in: &ActivationStore,
    attn_out: &ActivationStore,
    ffn_out: &ActivationStore,
) -> Result<AdditivityReport, SynthError> {
    let dims = |s: &ActivationStore| (s.n_layers(), s.n_examples(), s.hidden_dim());
    if dims(resid_in) != dims(attn_out) || dims(resid_in) != dims(ffn_out) {
        return Err(SynthError::Shape("stores differ in shape".into()));
    }
    let mut rep = AdditivityReport {
        exact: true,
        checked: 0,
        mismatches: 0,
        max_abs_error: 0.0,
    };
    for l in 0..resid_in.n_layers().saturating_sub(1) {
        let r0 = resid_in.layer_slice(l)?;
        let r1 = resid_in.layer_slice(l + 1)?;
        let a = attn_out.layer_slice(l)?;
        let f = ffn_out.layer_slice(l)?;
        for i in 0..r0.len() {
            let lhs = r1[i] - r0[i];
            let rhs = a[i] + f[i];
            rep.checked += 1;
            if lhs != rhs {
                rep.mismatches += 1;
                rep.max_abs_error = rep.max_abs_error.max(f64::from((lhs - rhs).abs()));
            }
        }
    }
    rep.exact = rep.mismatches == 0;
    Ok(rep)
}

/// Layer of the largest absolute amplitude for `label` at `site`, optionally
/// restricted to a window of layers. Ties are reported, not broken.
pub fn expected_peak(
    profile: &SynthProfile,
    label: &str,
    site: SiteId,
    window: Option<Range<usize>>,
) -> Result<usize, SynthError> {
    let sig = profile
        .label(label)
        .ok_or_else(|| SynthError::Query(format!("profile has no label {label:?}")))?;
    let amp = match site {
        SiteId::AttnOut => &sig.attn,
        SiteId::FfnOut => &sig.ffn,
        SiteId::ResidIn => {
            return Err(SynthError::Query(
                "resid_in accumulates all earlier outputs and has no amplitude peak".into(),
            ))
        }
    };
    let range = window.unwrap_or(0..amp.len());
    if range.start >= range.end || range.end > amp.len() {
        return Err(SynthError::Query(format!(
            "window {range:?} is empty or exceeds {} layers",
            amp.len()
        )));
    }
    argmax_unique(&amp[range.clone()])
        .map(|i| i + range.start)
        .map_err(|ties| SynthError::Tie {
            site,
            layers: ties.into_iter().map(|i| i + range.start).collect(),
        })
}

fn argmax_unique(a: &[f64]) -> Result<usize, Vec<usize>> {
    let best = a.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.abs()));
    let at: Vec<usize> = (0..a.len()).filter(|&i| a[i].abs() == best).collect();
    if at.len() == 1 {
        Ok(at[0])
    } else {
        Err(at)
    }
}

/// Label columns of a fixture manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureLabel {
    pub name: String,
    pub kind: LabelKind,
}

impl FixtureLabel {
    pub fn binary(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: LabelKind::Binary,
        }
    }

    pub fn real(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: LabelKind::Real,
        }
    }
}

/// A manifest of `n` placeholder examples with seeded labels: binary labels
/// are balanced (0/1) and shuffled, real labels are standard normal. Every
/// example belongs to group `g{i % n_groups}` under the key `cluster`.
pub fn fixture_manifest(
    experiment_id: &str,
    n: usize,
    labels: &[FixtureLabel],
    n_groups: usize,
    seed: u64,
) -> Manifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1a7);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(labels.len());
    for l in labels {
        let col = match l.kind {
            LabelKind::Binary => {
                let mut c: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
                c.shuffle(&mut rng);
                c
            }
            LabelKind::Real => (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (z * 1e6).round() / 1e6
                })
                .collect(),
        };
        columns.push(col);
    }
    let examples = (0..n)
        .map(|i| {
            let mut e = ExampleRecord::bare(&format!("ex{i:05}"), &format!("example {i}"));
            for (l, col) in labels.iter().zip(&columns) {
                e.labels.insert(l.name.clone(), col[i]);
            }
            e.groups.insert("cluster".into(), format!("g{}", i % n_groups.max(1)));
            e
        })
        .collect();
    Manifest {
        experiment_id: experiment_id.into(),
        template_id: "fixture".into(),
        examples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(attn: Vec<f64>) -> SynthProfile {
        let n = attn.len();
        SynthProfile {
            model_id: "t".into(),
            n_layers: n,
            hidden_dim: 6,
            noise_sd: 1.0,
            seed: 3,
            labels: vec![LabelSignal {
                name: "y".into(),
                kind: LabelKind::Binary,
                attn,
                ffn: vec![0.5; n],
            }],
        }
    }

    #[test]
    fn generated_stores_are_additive_and_deterministic() {
        let m = fixture_manifest("t", 20, &[FixtureLabel::binary("y")], 4, 1);
        let p = profile(vec![0.0, 1.0, 3.0, 0.0, 2.0]);
        let a = generate(&p, &m).unwrap();
        let b = generate(&p, &m).unwrap();
        for s in SiteId::ALL {
            assert!(a.get(s).bit_eq(b.get(s)));
            assert_eq!(a.get(s).n_layers(), 5);
        }
        let rep = check_additivity(&a.resid_in, &a.attn_out, &a.ffn_out).unwrap();
        assert!(rep.exact);
        assert_eq!(rep.checked, 4 * 20 * 6);
    }

    #[test]
    fn values_lie_on_the_grid() {
        let m = fixture_manifest("t", 8, &[FixtureLabel::binary("y")], 2, 0);
        let s = generate(&profile(vec![1.0; 3]), &m).unwrap();
        for v in s.attn_out.raw() {
            let k = f64::from(*v) / QUANTUM;
            assert_eq!(k, k.round());
        }
    }

    #[test]
    fn noise_is_shared_across_amplitudes() {
        let m = fixture_manifest("t", 10, &[FixtureLabel::binary("y")], 2, 0);
        let mut p0 = profile(vec![0.0; 4]);
        p0.labels[0].ffn = vec![0.0; 4];
        let mut p1 = p0.clone();
        p1.labels[0].attn[2] = 5.0;
        let a = generate(&p0, &m).unwrap();
        let b = generate(&p1, &m).unwrap();
        assert_eq!(a.attn_out.layer_slice(1).unwrap(), b.attn_out.layer_slice(1).unwrap());
        assert_ne!(a.attn_out.layer_slice(2).unwrap(), b.attn_out.layer_slice(2).unwrap());
        assert_eq!(a.resid_in.layer_slice(2).unwrap(), b.resid_in.layer_slice(2).unwrap());
        assert_ne!(a.resid_in.layer_slice(3).unwrap(), b.resid_in.layer_slice(3).unwrap());
    }

    #[test]
    fn expected_peak_examples() {
        let p = profile(vec![0.0, 0.0, 3.0, 0.0]);
        assert_eq!(expected_peak(&p, "y", SiteId::AttnOut, None).unwrap(), 2);
        let p = profile(vec![0.0, 2.0, 0.0, 2.0, 0.0]);
        match expected_peak(&p, "y", SiteId::AttnOut, None) {
            Err(SynthError::Tie { layers, .. }) => assert_eq!(layers, vec![1, 3]),
            other => panic!("expected tie, got {other:?}"),
        }
        assert_eq!(expected_peak(&p, "y", SiteId::AttnOut, Some(2..5)).unwrap(), 3);
        assert!(expected_peak(&p, "y", SiteId::ResidIn, None).is_err());
    }

    #[test]
    fn profile_shape_errors() {
        let mut p = profile(vec![1.0; 3]);
        p.labels[0].ffn.pop();
        assert!(matches!(p.check(), Err(SynthError::Shape(_))));
        let mut p = profile(vec![1.0; 3]);
        p.hidden_dim = 1;
        assert!(matches!(p.check(), Err(SynthError::Shape(_))));
    }

    #[test]
    fn overflow_is_reported() {
        let m = fixture_manifest("t", 4, &[FixtureLabel::binary("y")], 2, 0);
        let mut p = profile(vec![1500.0; 3]);
        p.labels[0].ffn = vec![1500.0; 3];
        assert!(matches!(generate(&p, &m), Err(SynthError::Overflow { .. })));
    }

    #[test]
    fn binary_label_values_checked() {
        let mut m = fixture_manifest("t", 4, &[FixtureLabel::binary("y")], 2, 0);
        m.examples[0].labels.insert("y".into(), 0.5);
        assert!(matches!(
            generate(&profile(vec![1.0; 2]), &m),
            Err(SynthError::Label(_))
        ));
    }
}
