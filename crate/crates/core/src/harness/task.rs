// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::folds::{
    group_folds, splits_from_assignment, stratified_folds, two_group_swap, FoldError, FoldKind, FoldScheme, Split,
};
use crate::actstore::{ActivationStore, SiteId, StoreError};
use crate::curve::MetricKind;
use crate::curvestats::{pearson, spearman};
use crate::designer::Manifest;
use crate::probekit::{
    classify, fit_conditional_standardizer, fit_standardizer, train_ridge, train_svm, ProbeConfig, ProbeError,
    ProbeKind,
};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Fold(#[from] FoldError),
    #[error("fold {fold}: {source}")]
    Probe { fold: usize, source: ProbeError },
    #[error("fold {fold}: training rows contain a single class")]
    SingleClass { fold: usize },
    #[error("conditional standardization: {0}")]
    Standardize(ProbeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Input(String),
    #[error("metric undefined: {0}")]
    Metric(String),
}

/// How features are scaled before a probe sees them.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Standardization {
    /// Column statistics from each fold's training rows.
    #[default]
    Plain,
    /// Statistics within each group of `group_key`, fit on all rows.
    Conditional { group_key: String },
}

/// Identity of one probe fit sweep; orders and keys results.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub experiment_id: String,
    pub site: SiteId,
    pub target: String,
    pub layer: usize,
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/{}/L{}",
            self.experiment_id, self.site, self.target, self.layer
        )
    }
}

/// FNV-1a 64 over the task identity and fold index.
pub fn task_seed(id: &TaskId, fold: usize) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(id.experiment_id.as_bytes());
    eat(&[0xff]);
    eat(id.target.as_bytes());
    eat(&[0xff]);
    eat(id.site.as_str().as_bytes());
    eat(&[0xff]);
    eat(&(id.layer as u64).to_le_bytes());
    eat(&(fold as u64).to_le_bytes());
    h
}

/// One probe sweep over the folds of a single (experiment, site, layer, target).
#[derive(Debug, Clone)]
pub struct ProbeTask<'a> {
    pub experiment_id: String,
    pub manifest: &'a Manifest,
    pub store: &'a ActivationStore,
    /// Store row of each manifest example; `None` means the orders agree.
    pub alignment: Option<&'a [usize]>,
    /// Manifest examples to use; `None` means all.
    pub rows: Option<&'a [usize]>,
    pub layer: usize,
    pub target: String,
    pub probe: ProbeConfig,
    pub fold: FoldScheme,
    pub standardization: Standardization,
}

impl<'a> ProbeTask<'a> {
    pub fn new(manifest: &'a Manifest, store: &'a ActivationStore, layer: usize, target: &str) -> Self {
        Self {
            experiment_id: manifest.experiment_id.clone(),
            manifest,
            store,
            alignment: None,
            rows: None,
            layer,
            target: target.into(),
            probe: ProbeConfig::svm(),
            fold: FoldScheme::stratified(6, 0),
            standardization: Standardization::Plain,
        }
    }

    pub fn id(&self) -> TaskId {
        TaskId {
            experiment_id: self.experiment_id.clone(),
            site: self.store.header().site,
            target: self.target.clone(),
            layer: self.layer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Accuracy or Pearson r on this fold's test rows; `None` when undefined.
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub id: TaskId,
    pub metric_kind: MetricKind,
    /// Pooled accuracy or pooled Pearson r; for a two-group swap, the mean
    /// of the two split values.
    pub value: f64,
    /// Spearman correlation of pooled held-out predictions (regression only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
    pub n_predictions: usize,
    pub folds: Vec<FoldResult>,
}

fn binary_sign(v: f64, target: &str) -> Result<f64, TaskError> {
    if v == 1.0 {
        Ok(1.0)
    } else if v == 0.0 || v == -1.0 {
        Ok(-1.0)
    } else {
        Err(TaskError::Input(format!(
            "target {target:?} must be binary (0/1 or -1/+1) for an SVM probe, found {v}"
        )))
    }
}

fn accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

fn make_splits(
    task: &ProbeTask<'_>,
    y: &[f64],
    group_of: impl Fn(&str) -> Result<Vec<String>, TaskError>,
) -> Result<Vec<Split>, TaskError> {
    let f = &task.fold;
    f.check()?;
    Ok(match f.kind {
        FoldKind::StratifiedK => {
            let classes: Vec<i8> = match task.probe.kind {
                ProbeKind::Svm => y.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect(),
                ProbeKind::Ridge => vec![0; y.len()],
            };
            splits_from_assignment(&stratified_folds(&classes, f.k, f.seed)?, f.k)
        }
        FoldKind::GroupK => {
            let g = group_of(f.group_key.as_deref().expect("checked"))?;
            splits_from_assignment(&group_folds(&g, f.k, f.seed)?, f.k)
        }
        FoldKind::TwoGroupSwap => {
            let g = group_of(f.group_key.as_deref().expect("checked"))?;
            two_group_swap(&g)?.to_vec()
        }
    })
}

/// Cross-validates one probe and scores its held-out predictions.
pub fn evaluate_task(task: &ProbeTask<'_>) -> Result<TaskResult, TaskError> {
    let id = task.id();
    let m = task.manifest;
    if task.layer >= task.store.n_layers() {
        return Err(TaskError::Input(format!(
            "layer {} out of range for {} layers",
            task.layer,
            task.store.n_layers()
        )));
    }
    let all: Vec<usize>;
    let rows: &[usize] = match task.rows {
        Some(r) => r,
        None => {
            all = (0..m.examples.len()).collect();
            &all
        }
    };
    let store_rows: Vec<usize> = match task.alignment {
        Some(a) => rows.iter().map(|&r| a[r]).collect(),
        None => {
            let ids = task.store.example_ids();
            if ids.len() != m.examples.len() || !m.ids().eq(ids.iter().map(String::as_str)) {
                return Err(TaskError::Input(
                    "store rows do not follow manifest order; pass an alignment".into(),
                ));
            }
            rows.to_vec()
        }
    };

    let raw: Vec<f64> = rows
        .iter()
        .map(|&r| {
            m.examples[r]
                .labels
                .get(&task.target)
                .copied()
                .ok_or_else(|| TaskError::Input(format!("manifest has no label {:?}", task.target)))
        })
        .collect::<Result<_, _>>()?;
    let y: Vec<f64> = match task.probe.kind {
        ProbeKind::Svm => raw
            .iter()
            .map(|&v| binary_sign(v, &task.target))
            .collect::<Result<_, _>>()?,
        ProbeKind::Ridge => raw,
    };
    let group_of = |key: &str| -> Result<Vec<String>, TaskError> {
        rows.iter()
            .map(|&r| {
                m.examples[r]
                    .groups
                    .get(key)
                    .cloned()
                    .ok_or_else(|| TaskError::Input(format!("manifest has no group {key:?}")))
            })
            .collect()
    };

    let mut x = task.store.layer_matrix::<f64>(task.layer)?.select_rows(&store_rows);
    let conditional = match &task.standardization {
        Standardization::Plain => false,
        Standardization::Conditional { group_key } => {
            let g = group_of(group_key)?;
            let s = fit_conditional_standardizer(&x, &g).map_err(TaskError::Standardize)?;
            x = s.transform_grouped(&x, &g).map_err(TaskError::Standardize)?;
            true
        }
    };

    let splits = make_splits(task, &y, group_of)?;
    let swap = task.fold.kind == FoldKind::TwoGroupSwap;
    let mut pooled_pred: Vec<Option<f64>> = vec![None; rows.len()];
    let mut folds = Vec::with_capacity(splits.len());
    let mut split_values = Vec::with_capacity(splits.len());
    for (fold, split) in splits.iter().enumerate() {
        let (mut xtr, mut xte) = (x.select_rows(&split.train), x.select_rows(&split.test));
        let ytr: Vec<f64> = split.train.iter().map(|&i| y[i]).collect();
        let yte: Vec<f64> = split.test.iter().map(|&i| y[i]).collect();
        if task.probe.kind == ProbeKind::Svm && ytr.iter().all(|&v| v == ytr[0]) {
            return Err(TaskError::SingleClass { fold });
        }
        let probe_err = |source| TaskError::Probe { fold, source };
        if !conditional {
            let s = fit_standardizer(&xtr).map_err(probe_err)?;
            xtr = s.transform(&xtr).map_err(probe_err)?;
            xte = s.transform(&xte).map_err(probe_err)?;
        }
        let cfg = task.probe.with_seed(task.probe.seed ^ task_seed(&id, fold));
        let model = match cfg.kind {
            ProbeKind::Svm => train_svm(&xtr, &ytr, &cfg),
            ProbeKind::Ridge => train_ridge(&xtr, &ytr, &cfg),
        }
        .map_err(probe_err)?;
        let scores = model.decision(&xte).map_err(probe_err)?;
        let pred = match cfg.kind {
            ProbeKind::Svm => classify(&scores),
            ProbeKind::Ridge => scores,
        };
        let metric = match cfg.kind {
            ProbeKind::Svm => Some(accuracy(&pred, &yte)),
            ProbeKind::Ridge => pearson(&pred, &yte).ok(),
        };
        if swap {
            split_values.push(metric);
        } else {
            for (&i, &p) in split.test.iter().zip(&pred) {
                pooled_pred[i] = Some(p);
            }
        }
        folds.push(FoldResult {
            fold,
            n_train: split.train.len(),
            n_test: split.test.len(),
            metric,
        });
    }

    let metric_kind = match task.probe.kind {
        ProbeKind::Svm => MetricKind::Accuracy,
        ProbeKind::Ridge => MetricKind::PearsonR,
    };
    let (value, spearman_r, n_predictions) = if swap {
        let vals = split_values
            .iter()
            .map(|v| v.ok_or_else(|| TaskError::Metric("a swap split has constant predictions or targets".into())))
            .collect::<Result<Vec<f64>, _>>()?;
        let n = splits.iter().map(|s| s.test.len()).sum();
        (vals.iter().sum::<f64>() / vals.len() as f64, None, n)
    } else {
        let pred: Vec<f64> = pooled_pred
            .iter()
            .map(|p| p.expect("k-fold schemes predict every row once"))
            .collect();
        match task.probe.kind {
            ProbeKind::Svm => (accuracy(&pred, &y), None, pred.len()),
            ProbeKind::Ridge => {
                let r = pearson(&pred, &y).map_err(|e| TaskError::Metric(format!("pooled Pearson r: {e}")))?;
                (r, spearman(&pred, &y).ok(), pred.len())
            }
        }
    };
    Ok(TaskResult {
        id,
        metric_kind,
        value,
        spearman: spearman_r,
        n_predictions,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actstore::StoreHeader;
    use crate::synthgen::{fixture_manifest, generate, FixtureLabel, LabelKind, LabelSignal, SynthProfile};

    fn planted(n_layers: usize, peak: usize, amp: f64, kind: LabelKind) -> SynthProfile {
        let mut attn = vec![0.0; n_layers];
        attn[peak] = amp;
        SynthProfile {
            model_id: "t".into(),
            n_layers,
            hidden_dim: 8,
            noise_sd: 1.0,
            seed: 11,
            labels: vec![LabelSignal {
                name: "y".into(),
                kind,
                attn,
                ffn: vec![0.0; n_layers],
            }],
        }
    }

    #[test]
    fn seed_depends_on_every_field() {
        let id = TaskId {
            experiment_id: "e".into(),
            site: SiteId::AttnOut,
            target: "t".into(),
            layer: 3,
        };
        let base = task_seed(&id, 0);
        assert_eq!(base, task_seed(&id.clone(), 0));
        assert_ne!(base, task_seed(&id, 1));
        assert_ne!(base, task_seed(&TaskId { layer: 4, ..id.clone() }, 0));
        assert_ne!(
            base,
            task_seed(
                &TaskId {
                    site: SiteId::FfnOut,
                    ..id.clone()
                },
                0
            )
        );
        assert_ne!(
            base,
            task_seed(
                &TaskId {
                    target: "u".into(),
                    ..id.clone()
                },
                0
            )
        );
    }

    #[test]
    fn planted_layer_is_decodable() {
        let m = fixture_manifest("t", 120, &[FixtureLabel::binary("y")], 6, 2);
        let s = generate(&planted(4, 2, 4.0, LabelKind::Binary), &m).unwrap();
        let at = evaluate_task(&ProbeTask::new(&m, &s.attn_out, 2, "y")).unwrap();
        assert!(at.value >= 0.95, "{}", at.value);
        assert_eq!(at.n_predictions, 120);
        assert_eq!(at.folds.len(), 6);
        let off = evaluate_task(&ProbeTask::new(&m, &s.attn_out, 1, "y")).unwrap();
        assert!(off.value < 0.8, "{}", off.value);
    }

    #[test]
    fn exact_linear_regression() {
        let n = 60;
        let m = fixture_manifest("t", n, &[FixtureLabel::real("y")], 6, 3);
        let d = 3;
        let mut data = Vec::new();
        for e in &m.examples {
            let y = e.labels["y"] as f32;
            data.extend([y, 0.5 * y, (e.id.len() % 3) as f32]);
        }
        let store = ActivationStore::new(
            StoreHeader::new("t", SiteId::AttnOut, 1, d, m.ids().map(String::from).collect()),
            data,
        )
        .unwrap();
        let mut task = ProbeTask::new(&m, &store, 0, "y");
        task.probe = ProbeConfig {
            lambda: 1e-6,
            ..ProbeConfig::ridge()
        };
        let r = evaluate_task(&task).unwrap();
        assert_eq!(r.metric_kind, MetricKind::PearsonR);
        assert!(r.value >= 0.999, "{}", r.value);
        assert!(r.spearman.unwrap() > 0.99);
    }

    #[test]
    fn single_class_training_fold_is_reported() {
        let mut m = fixture_manifest("t", 24, &[FixtureLabel::binary("y")], 2, 0);
        for (i, e) in m.examples.iter_mut().enumerate() {
            e.labels.insert("y".into(), if i < 12 { 1.0 } else { 0.0 });
            e.groups
                .insert("cluster".into(), if i < 12 { "a".into() } else { "b".into() });
        }
        let s = generate(&planted(1, 0, 1.0, LabelKind::Binary), &m).unwrap();
        let mut task = ProbeTask::new(&m, &s.attn_out, 0, "y");
        task.fold = FoldScheme::two_group_swap("cluster");
        assert!(matches!(evaluate_task(&task), Err(TaskError::SingleClass { fold: 0 })));
    }

    #[test]
    fn swap_averages_two_splits() {
        let m = fixture_manifest("t", 40, &[FixtureLabel::binary("y")], 2, 5);
        let s = generate(&planted(1, 0, 3.0, LabelKind::Binary), &m).unwrap();
        let mut task = ProbeTask::new(&m, &s.attn_out, 0, "y");
        task.fold = FoldScheme::two_group_swap("cluster");
        let r = evaluate_task(&task).unwrap();
        assert_eq!(r.folds.len(), 2);
        let mean = (r.folds[0].metric.unwrap() + r.folds[1].metric.unwrap()) / 2.0;
        assert_eq!(r.value, mean);
        assert_eq!(r.n_predictions, 40);
    }

    #[test]
    fn non_binary_target_rejected_for_svm() {
        let m = fixture_manifest("t", 12, &[FixtureLabel::real("y")], 2, 0);
        let s = generate(&planted(1, 0, 1.0, LabelKind::Real), &m).unwrap();
        assert!(matches!(
            evaluate_task(&ProbeTask::new(&m, &s.attn_out, 0, "y")),
            Err(TaskError::Input(_))
        ));
    }

    #[test]
    fn deterministic() {
        let m = fixture_manifest("t", 48, &[FixtureLabel::binary("y")], 6, 1);
        let s = generate(&planted(2, 1, 1.0, LabelKind::Binary), &m).unwrap();
        let t = ProbeTask::new(&m, &s.attn_out, 1, "y");
        assert_eq!(evaluate_task(&t).unwrap(), evaluate_task(&t).unwrap());
    }
}
