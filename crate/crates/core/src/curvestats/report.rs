// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-curve and per-site summaries of a set of layer curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    corr_matrix, detect_peaks, diff_series, lag_autocorr, mean_and_pop_sd, zscore_series, CorrMatrix, CorrMethod, Peak,
    SeriesRange, StatsError,
};
use crate::actstore::SiteId;
use crate::curve::LayerCurve;

/// Half-open layer window `[start, end)`; `end = None` runs to the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerWindow {
    pub start: usize,
    #[serde(default)]
    pub end: Option<usize>,
}

impl LayerWindow {
    pub fn apply<'a>(&self, s: &'a [f64]) -> &'a [f64] {
        let end = self.end.unwrap_or(s.len()).min(s.len());
        &s[self.start.min(end)..end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisOptions {
    /// Peak prominence threshold in z-units.
    pub min_prominence: f64,
    /// Largest lag in the derivative autocorrelation table.
    pub max_lag: usize,
    pub method: CorrMethod,
    /// Restricts derivative statistics (autocorrelations and derivative
    /// matrices) to these layers.
    pub window: Option<LayerWindow>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            min_prominence: 0.5,
            max_lag: 4,
            method: CorrMethod::Spearman,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAnalysis {
    pub key: String,
    pub experiment_id: String,
    pub site: SiteId,
    pub target: String,
    pub values: Vec<f64>,
    pub zscored: Option<Vec<f64>>,
    pub derivative: Vec<f64>,
    pub peaks: Vec<Peak>,
    /// Derivative autocorrelation for lags `1..=max_lag` (index 0 = lag 1).
    pub autocorr: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSummary {
    pub lag: usize,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSummary {
    pub site: SiteId,
    pub curves: Vec<String>,
    pub lags: Vec<LagSummary>,
    /// Correlations of the curves themselves (z-scoring does not change them).
    pub level_full: Option<CorrMatrix>,
    pub level_second_half: Option<CorrMatrix>,
    pub derivative_full: Option<CorrMatrix>,
    pub derivative_second_half: Option<CorrMatrix>,
    /// Mean lag-1 derivative autocorrelation is negative.
    pub anti_persistent: bool,
    /// Second-half derivative matrix has a positive off-diagonal mean.
    pub coordinated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub options: AnalysisOptions,
    pub curves: Vec<CurveAnalysis>,
    pub sites: Vec<SiteSummary>,
}

impl CurveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn analyze_curve(c: &LayerCurve, opts: &AnalysisOptions) -> Result<CurveAnalysis, StatsError> {
    let mut warnings = Vec::new();
    let zscored = match zscore_series(&c.values) {
        Ok(z) => Some(z),
        Err(StatsError::Constant) => {
            warnings.push("constant curve: no z-scores or peaks".to_string());
            None
        }
        Err(e) => return Err(e),
    };
    let peaks = detect_peaks(&c.values, opts.min_prominence);
    let derivative = diff_series(&c.values)?;
    let windowed = opts.window.map_or(&c.values[..], |w| w.apply(&c.values));
    let mut autocorr = Vec::with_capacity(opts.max_lag);
    match diff_series(windowed) {
        Ok(d) => {
            for lag in 1..=opts.max_lag {
                match lag_autocorr(&d, lag, opts.method) {
                    Ok(r) => autocorr.push(Some(r)),
                    Err(e) => {
                        warnings.push(format!("lag {lag} autocorrelation undefined: {e}"));
                        autocorr.push(None);
                    }
                }
            }
        }
        Err(e) => {
            warnings.push(format!("window too short for derivatives: {e}"));
            autocorr.resize(opts.max_lag, None);
        }
    }
    Ok(CurveAnalysis {
        key: c.key(),
        experiment_id: c.experiment_id.clone(),
        site: c.site,
        target: c.target.clone(),
        values: c.values.clone(),
        zscored,
        derivative,
        peaks,
        autocorr,
        warnings,
    })
}

fn optional_matrix(
    series: &[Vec<f64>],
    labels: &[String],
    range: SeriesRange,
    method: CorrMethod,
) -> Result<Option<CorrMatrix>, StatsError> {
    if series.len() < 2 {
        return Ok(None);
    }
    match corr_matrix(series, range, method) {
        Ok(mut m) => {
            m.labels = labels.to_vec();
            Ok(Some(m))
        }
        Err(StatsError::TooShort { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Analyses every curve and summarizes each site across curves.
///
/// Curves of one site must share a length.
pub fn summarize(curves: &[LayerCurve], opts: &AnalysisOptions) -> Result<CurveReport, StatsError> {
    if curves.is_empty() {
        return Err(StatsError::Empty);
    }
    let analyses = curves
        .iter()
        .map(|c| analyze_curve(c, opts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut by_site: BTreeMap<SiteId, Vec<usize>> = BTreeMap::new();
    for (i, c) in curves.iter().enumerate() {
        by_site.entry(c.site).or_default().push(i);
    }

    let mut sites = Vec::new();
    for (site, members) in by_site {
        let n = curves[members[0]].values.len();
        for &i in &members {
            if curves[i].values.len() != n {
                return Err(StatsError::LengthMismatch(n, curves[i].values.len()));
            }
        }
        let labels: Vec<String> = members.iter().map(|&i| curves[i].key()).collect();
        let levels: Vec<Vec<f64>> = members.iter().map(|&i| curves[i].values.clone()).collect();
        let derivs: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| {
                let v = &curves[i].values;
                let w = opts.window.map_or(&v[..], |w| w.apply(v));
                diff_series(w).unwrap_or_default()
            })
            .collect();

        let lags = (1..=opts.max_lag)
            .map(|lag| {
                let vals: Vec<f64> = members.iter().filter_map(|&i| analyses[i].autocorr[lag - 1]).collect();
                let (mean, sd) = if vals.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_and_pop_sd(&vals);
                    (Some(m), Some(s))
                };
                LagSummary {
                    lag,
                    n: vals.len(),
                    mean,
                    sd,
                }
            })
            .collect::<Vec<_>>();

        let level_full = optional_matrix(&levels, &labels, SeriesRange::Full, opts.method)?;
        let level_second_half = optional_matrix(&levels, &labels, SeriesRange::SecondHalf, opts.method)?;
        let derivative_full = optional_matrix(&derivs, &labels, SeriesRange::Full, opts.method)?;
        let derivative_second_half = optional_matrix(&derivs, &labels, SeriesRange::SecondHalf, opts.method)?;

        let anti_persistent = lags.first().and_then(|l| l.mean).is_some_and(|m| m < 0.0);
        let coordinated = derivative_second_half
            .as_ref()
            .and_then(|m| m.off_diagonal_mean)
            .is_some_and(|m| m > 0.0);

        sites.push(SiteSummary {
            site,
            curves: labels,
            lags,
            level_full,
            level_second_half,
            derivative_full,
            derivative_second_half,
            anti_persistent,
            coordinated,
        });
    }

    Ok(CurveReport {
        options: opts.clone(),
        curves: analyses,
        sites,
    })
}
