// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV tables and static SVG overlays of a [`CurveReport`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{CorrMatrix, CurveReport};
use crate::actstore::SiteId;

fn file_stem(key: &str) -> String {
    key.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_matrix(path: &Path, m: &CorrMatrix) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in m.labels.iter().zip(&m.values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one CSV per curve (`layer,value,zscore,derivative`), one per
/// defined correlation matrix and one lag table per site. Returns the paths
/// in write order.
pub fn write_csv(report: &CurveReport, dir: &Path) -> Result<Vec<PathBuf>, csv::Error> {
    let mut written = Vec::new();
    for c in &report.curves {
        let path = dir.join(format!("curve_{}.csv", file_stem(&c.key)));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["layer", "value", "zscore", "derivative"])?;
        for (l, v) in c.values.iter().enumerate() {
            let z = c.zscored.as_ref().map(|z| z[l]);
            let d = c.derivative.get(l).copied();
            w.write_record([l.to_string(), v.to_string(), opt(z), opt(d)])?;
        }
        w.flush()?;
        written.push(path);
    }
    for s in &report.sites {
        let mats = [
            ("level_full", &s.level_full),
            ("level_second_half", &s.level_second_half),
            ("derivative_full", &s.derivative_full),
            ("derivative_second_half", &s.derivative_second_half),
        ];
        for (name, m) in mats {
            if let Some(m) = m {
                let path = dir.join(format!("matrix_{}_{name}.csv", s.site));
                write_matrix(&path, m)?;
                written.push(path);
            }
        }
        let path = dir.join(format!("lags_{}.csv", s.site));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["lag", "n", "mean", "sd"])?;
        for l in &s.lags {
            w.write_record([l.lag.to_string(), l.n.to_string(), opt(l.mean), opt(l.sd)])?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Overlay of the z-scored curves of one site, with detected peaks marked.
/// `None` when the site has no non-constant curve.
pub fn overlay_svg(report: &CurveReport, site: SiteId) -> Option<String> {
    let curves: Vec<_> = report
        .curves
        .iter()
        .filter(|c| c.site == site && c.zscored.is_some())
        .collect();
    if curves.is_empty() {
        return None;
    }
    let (w, h, pad) = (720.0, 360.0, 40.0);
    let n = curves.iter().map(|c| c.values.len()).max().unwrap_or(1);
    let (lo, hi) = curves
        .iter()
        .flat_map(|c| c.zscored.as_ref().expect("filtered").iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = (hi - lo).max(1e-9);
    let px = |l: usize| pad + (w - 2.0 * pad) * l as f64 / (n.max(2) - 1) as f64;
    let py = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / span;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y}" stroke="black"/>"#,
        y = h - pad,
        x2 = w - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">layer</text>"#,
        w / 2.0,
        h - 8.0
    );
    let _ = writeln!(s, r#"<text x="{pad}" y="24">{site}: z-scored curves</text>"#);
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let z = c.zscored.as_ref().expect("filtered");
        let pts: Vec<String> = z
            .iter()
            .enumerate()
            .map(|(l, &v)| format!("{:.2},{:.2}", px(l), py(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            c.key
        );
        for p in &c.peaks {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{colour}"/>"#,
                px(p.layer),
                py(z[p.layer])
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            w - pad - 150.0,
            pad + 14.0 * i as f64,
            c.key
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}
