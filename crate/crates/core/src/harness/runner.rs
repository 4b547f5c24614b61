// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::folds::FoldScheme;
use super::task::{evaluate_task, ProbeTask, Standardization, TaskId, TaskResult};
use crate::actstore::{validate, ActivationStore, SiteId, StoreError, ValidationReport};
use crate::curve::LayerCurve;
use crate::designer::{DesignError, Manifest, Variant};
use crate::probekit::ProbeConfig;

/// Caps the worker threads of [`run_curves`].
pub const THREADS_ENV: &str = "LAYERSCOPE_THREADS";

const MEAN: &str = "mean";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("{path}: {source}")]
    Store { path: String, source: StoreError },
    #[error("{experiment}/{}: store does not match manifest (missing in store: {:?}; extra in store: {:?}; non-finite values: {})",
        report.site, report.missing_in_store, report.extra_in_store, report.non_finite_total)]
    Validation {
        experiment: String,
        report: Box<ValidationReport>,
    },
}

/// One experiment in a run configuration. Relative paths resolve against
/// the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Defaults to the manifest's experiment id.
    #[serde(default)]
    pub id: Option<String>,
    pub manifest: PathBuf,
    pub stores: BTreeMap<SiteId, PathBuf>,
    /// Label names to probe; all manifest labels when absent.
    #[serde(default)]
    pub targets: Option<Vec<String>>,
    #[serde(default)]
    pub probe: ProbeConfig,
    pub fold: FoldScheme,
    #[serde(default)]
    pub standardization: Standardization,
    /// Keep only examples of these variants.
    #[serde(default)]
    pub variants: Option<Vec<Variant>>,
    /// Target (or `mean`) whose curve represents the experiment.
    #[serde(default)]
    pub primary: Option<String>,
}

/// Unweighted mean of member experiments' curves, per site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateSpec {
    pub name: String,
    pub members: Vec<String>,
    /// Member target to average; each member's primary curve when absent.
    #[serde(default)]
    pub target: Option<String>,
    /// Marks the aggregate primary and its members' curves non-primary.
    #[serde(default)]
    pub primary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiments: Vec<ExperimentSpec>,
    /// Sites to probe; every site with a store when absent.
    #[serde(default)]
    pub sites: Option<Vec<SiteId>>,
    #[serde(default)]
    pub aggregates: Vec<AggregateSpec>,
}

impl RunConfig {
    /// Parses the file, resolves relative paths and checks they exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut cfg.experiments {
            e.manifest = base.join(&e.manifest);
            for p in e.stores.values_mut() {
                *p = base.join(&*p);
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.experiments.is_empty() {
            return Err(HarnessError::Config("no experiments".into()));
        }
        for e in &self.experiments {
            for p in std::iter::once(&e.manifest).chain(e.stores.values()) {
                if !p.exists() {
                    return Err(HarnessError::Config(format!("path does not exist: {}", p.display())));
                }
            }
            if e.stores.is_empty() {
                return Err(HarnessError::Config(format!(
                    "experiment {:?} lists no stores",
                    e.manifest
                )));
            }
            e.probe.check().map_err(|err| HarnessError::Config(err.to_string()))?;
            e.fold.check().map_err(|err| HarnessError::Config(err.to_string()))?;
        }
        Ok(())
    }

    /// Loads and validates every manifest and store.
    pub fn load_experiments(&self) -> Result<Vec<LoadedExperiment>, HarnessError> {
        self.experiments
            .iter()
            .map(|spec| {
                let manifest = Manifest::load(&spec.manifest)?;
                let mut stores = BTreeMap::new();
                for (&site, p) in &spec.stores {
                    let s = ActivationStore::load(p).map_err(|source| HarnessError::Store {
                        path: p.display().to_string(),
                        source,
                    })?;
                    if s.header().site != site {
                        return Err(HarnessError::Config(format!(
                            "{} holds site {} but is listed as {site}",
                            p.display(),
                            s.header().site
                        )));
                    }
                    stores.insert(site, s);
                }
                LoadedExperiment::new(manifest, stores, spec.clone())
            })
            .collect()
    }
}

/// An experiment whose stores have been checked against its manifest.
#[derive(Debug, Clone)]
pub struct LoadedExperiment {
    pub id: String,
    pub manifest: Manifest,
    pub stores: BTreeMap<SiteId, (ActivationStore, Vec<usize>)>,
    pub rows: Vec<usize>,
    pub targets: Vec<String>,
    pub probe: ProbeConfig,
    pub fold: FoldScheme,
    pub standardization: Standardization,
    pub primary: String,
}

impl LoadedExperiment {
    /// `spec` supplies the settings; its paths are not read.
    pub fn new(
        manifest: Manifest,
        stores: BTreeMap<SiteId, ActivationStore>,
        spec: ExperimentSpec,
    ) -> Result<Self, HarnessError> {
        let id = spec.id.clone().unwrap_or_else(|| manifest.experiment_id.clone());
        let mut aligned = BTreeMap::new();
        for (site, store) in stores {
            let report = validate(&store, &manifest);
            match (&report.alignment, report.ok) {
                (Some(a), true) => {
                    let a = a.clone();
                    aligned.insert(site, (store, a));
                }
                _ => {
                    return Err(HarnessError::Validation {
                        experiment: id,
                        report: Box::new(report),
                    })
                }
            }
        }
        let rows: Vec<usize> = match &spec.variants {
            Some(v) => (0..manifest.examples.len())
                .filter(|&i| v.contains(&manifest.examples[i].variant))
                .collect(),
            None => (0..manifest.examples.len()).collect(),
        };
        if rows.is_empty() {
            return Err(HarnessError::Config(format!(
                "experiment {id}: variant filter keeps no examples"
            )));
        }
        let labels = manifest.label_keys();
        let targets = match spec.targets {
            Some(t) => {
                if let Some(bad) = t.iter().find(|t| !labels.contains(*t)) {
                    return Err(HarnessError::Config(format!(
                        "experiment {id}: target {bad:?} not among labels {labels:?}"
                    )));
                }
                t
            }
            None => labels.into_iter().collect(),
        };
        if targets.is_empty() {
            return Err(HarnessError::Config(format!("experiment {id}: no targets")));
        }
        let primary = spec.primary.unwrap_or_else(|| {
            if targets.len() > 1 {
                MEAN.into()
            } else {
                targets[0].clone()
            }
        });
        if primary != MEAN && !targets.contains(&primary) {
            return Err(HarnessError::Config(format!(
                "experiment {id}: primary {primary:?} is neither a target nor \"mean\""
            )));
        }
        Ok(Self {
            id,
            manifest,
            stores: aligned,
            rows,
            targets,
            probe: spec.probe,
            fold: spec.fold,
            standardization: spec.standardization,
            primary,
        })
    }

    fn task(&self, site: SiteId, layer: usize, target: &str) -> ProbeTask<'_> {
        let (store, alignment) = &self.stores[&site];
        ProbeTask {
            experiment_id: self.id.clone(),
            manifest: &self.manifest,
            store,
            alignment: Some(alignment),
            rows: Some(&self.rows),
            layer,
            target: target.into(),
            probe: self.probe.clone(),
            fold: self.fold.clone(),
            standardization: self.standardization.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub id: TaskId,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub curves: Vec<LayerCurve>,
    pub tasks: Vec<TaskResult>,
    pub skipped: Vec<SkippedTask>,
    /// Curves not emitted because a layer or member failed.
    pub incomplete: Vec<String>,
    pub n_tasks: usize,
}

impl RunResults {
    pub fn all_failed(&self) -> bool {
        self.n_tasks > 0 && self.skipped.len() == self.n_tasks
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn curve(&self, experiment_id: &str, site: SiteId, target: &str) -> Option<&LayerCurve> {
        self.curves
            .iter()
            .find(|c| c.experiment_id == experiment_id && c.site == site && c.target == target)
    }
}

/// Worker count from `LAYERSCOPE_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn mean_curve(name: &str, target: &str, members: &[&LayerCurve]) -> Result<LayerCurve, String> {
    let first = members[0];
    for m in members {
        if m.values.len() != first.values.len() || m.metric != first.metric {
            return Err(format!("{} and {} differ in length or metric", first.key(), m.key()));
        }
    }
    let k = members.len() as f64;
    let values = (0..first.values.len())
        .map(|l| members.iter().map(|m| m.values[l]).sum::<f64>() / k)
        .collect();
    Ok(LayerCurve {
        experiment_id: name.into(),
        site: first.site,
        target: target.into(),
        metric: first.metric,
        values,
        primary: false,
    })
}

/// Probes every (experiment, site, target, layer), assembles curves and
/// aggregates. Results do not depend on `threads` or scheduling.
pub fn run_curves(
    experiments: &[LoadedExperiment],
    sites: Option<&[SiteId]>,
    aggregates: &[AggregateSpec],
    threads: Option<usize>,
) -> Result<RunResults, HarnessError> {
    let mut jobs: Vec<(usize, SiteId, usize, &str)> = Vec::new();
    for (e, exp) in experiments.iter().enumerate() {
        for (&site, (store, _)) in &exp.stores {
            if sites.is_some_and(|s| !s.contains(&site)) {
                continue;
            }
            for t in &exp.targets {
                for layer in 0..store.n_layers() {
                    jobs.push((e, site, layer, t));
                }
            }
        }
    }
    let evaluate = || -> Vec<(TaskId, Result<TaskResult, String>)> {
        jobs.par_iter()
            .map(|&(e, site, layer, t)| {
                let task = experiments[e].task(site, layer, t);
                (task.id(), evaluate_task(&task).map_err(|err| err.to_string()))
            })
            .collect()
    };
    let outcomes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(evaluate),
        None => evaluate(),
    };

    let mut by_id: BTreeMap<TaskId, Result<TaskResult, String>> = outcomes.into_iter().collect();
    let n_tasks = by_id.len();
    let mut tasks = Vec::new();
    let mut skipped = Vec::new();
    let mut incomplete = Vec::new();
    let mut curves: BTreeMap<(String, SiteId, String), LayerCurve> = BTreeMap::new();

    for exp in experiments {
        for (&site, (store, _)) in &exp.stores {
            if sites.is_some_and(|s| !s.contains(&site)) {
                continue;
            }
            let mut target_curves = Vec::new();
            for t in &exp.targets {
                let mut values = Vec::with_capacity(store.n_layers());
                let mut metric = None;
                for layer in 0..store.n_layers() {
                    let id = TaskId {
                        experiment_id: exp.id.clone(),
                        site,
                        target: t.clone(),
                        layer,
                    };
                    match by_id.remove(&id).expect("every job has an outcome") {
                        Ok(r) => {
                            values.push(r.value);
                            metric = Some(r.metric_kind);
                            tasks.push(r);
                        }
                        Err(error) => skipped.push(SkippedTask { id, error }),
                    }
                }
                let key = format!("{}/{site}/{t}", exp.id);
                match metric {
                    Some(metric) if values.len() == store.n_layers() => {
                        let c = LayerCurve {
                            experiment_id: exp.id.clone(),
                            site,
                            target: t.clone(),
                            metric,
                            values,
                            primary: exp.primary == *t,
                        };
                        target_curves.push(c.clone());
                        curves.insert((exp.id.clone(), site, t.clone()), c);
                    }
                    _ => incomplete.push(key),
                }
            }
            if exp.targets.len() > 1 {
                if target_curves.len() == exp.targets.len() {
                    let refs: Vec<&LayerCurve> = target_curves.iter().collect();
                    let mut c = mean_curve(&exp.id, MEAN, &refs).map_err(HarnessError::Config)?;
                    c.primary = exp.primary == MEAN;
                    curves.insert((exp.id.clone(), site, MEAN.into()), c);
                } else {
                    incomplete.push(format!("{}/{site}/{MEAN}", exp.id));
                }
            }
        }
    }

    for agg in aggregates {
        let all_sites: std::collections::BTreeSet<SiteId> = curves.keys().map(|k| k.1).collect();
        for site in all_sites {
            let mut member_keys = Vec::new();
            let mut missing = false;
            for m in &agg.members {
                let exp = experiments
                    .iter()
                    .find(|e| &e.id == m)
                    .ok_or_else(|| HarnessError::Config(format!("aggregate {}: unknown member {m:?}", agg.name)))?;
                let target = agg.target.clone().unwrap_or_else(|| exp.primary.clone());
                let key = (m.clone(), site, target);
                if curves.contains_key(&key) {
                    member_keys.push(key);
                } else {
                    missing = true;
                }
            }
            if missing || member_keys.is_empty() {
                if !member_keys.is_empty() {
                    incomplete.push(format!("{}/{site}/{MEAN}", agg.name));
                }
                continue;
            }
            let refs: Vec<&LayerCurve> = member_keys.iter().map(|k| &curves[k]).collect();
            let mut c = mean_curve(&agg.name, MEAN, &refs).map_err(HarnessError::Config)?;
            c.primary = agg.primary;
            if agg.primary {
                for k in &member_keys {
                    curves.get_mut(k).expect("present").primary = false;
                }
            }
            curves.insert((agg.name.clone(), site, MEAN.into()), c);
        }
    }

    Ok(RunResults {
        curves: curves.into_values().collect(),
        tasks,
        skipped,
        incomplete,
        n_tasks,
    })
}
