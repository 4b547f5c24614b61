// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::actstore::SiteId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    PearsonR,
}

impl MetricKind {
    pub fn in_range(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                MetricKind::Accuracy => (0.0..=1.0).contains(&v),
                MetricKind::PearsonR => (-1.0..=1.0).contains(&v),
            }
    }
}

/// Probe metric per layer for one (experiment, site, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub experiment_id: String,
    pub site: SiteId,
    /// Label name, or an aggregate tag such as `mean`.
    pub target: String,
    pub metric: MetricKind,
    pub values: Vec<f64>,
    /// The curve that represents its experiment in cross-experiment analyses.
    #[serde(default)]
    pub primary: bool,
}

impl LayerCurve {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.experiment_id, self.site, self.target)
    }

    pub fn n_layers(&self) -> usize {
        self.values.len()
    }
}
