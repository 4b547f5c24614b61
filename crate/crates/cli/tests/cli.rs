// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn samples() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/samples")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerscope"))
        .args(args)
        .env_remove("LAYERSCOPE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn design(dir: &Path, experiment: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join(format!("{experiment}.json"));
    let ingredients = samples();
    let mut args = vec![
        "design",
        "--ingredients",
        path_str(&ingredients),
        "--experiment",
        experiment,
        "--out",
        path_str(&out),
    ];
    args.extend_from_slice(extra);
    (run(&args), out)
}

#[test]
fn design_writes_both_pair_orders() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = design(dir.path(), "exp2b", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("examples: 120"));
    assert_eq!(read_json(&out)["examples"].as_array().unwrap().len(), 120);
}

#[test]
fn buried_texts_end_with_filler() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = design(dir.path(), "exp2b", &["--buried"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for ex in read_json(&out)["examples"].as_array().unwrap() {
        let text = ex["text"].as_str().unwrap().trim_end_matches('.');
        assert!(text.ends_with("more nuances to explore"), "{text}");
    }
}

#[test]
fn unknown_experiment_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = design(dir.path(), "exp9", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exp2b"), "{}", stderr(&o));
}

struct Pipeline {
    dir: tempfile::TempDir,
}

impl Pipeline {
    const LAYERS: usize = 8;
    const DIM: usize = 8;
    const N: usize = 120;

    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let p = Self { dir };
        p.fixture("manifest.json", Self::N, 0);
        let mut attn = vec![0.0; Self::LAYERS];
        attn[5] = 2.5;
        attn[4] = 1.0;
        let profile = json!({
            "n_layers": Self::LAYERS,
            "hidden_dim": Self::DIM,
            "noise_sd": 1.0,
            "seed": 11,
            "labels": [{"name": "y", "kind": "binary", "attn": attn, "ffn": vec![0.0; Self::LAYERS]}]
        });
        std::fs::write(p.path("profile.json"), profile.to_string()).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fixture(&self, name: &str, n: usize, seed: u64) {
        let o = run(&[
            "fixture",
            "--n",
            &n.to_string(),
            "--binary",
            "y",
            "--seed",
            &seed.to_string(),
            "--out",
            path_str(&self.path(name)),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }

    fn synth(&self, out: &str) -> Output {
        run(&[
            "synth",
            "--profile",
            path_str(&self.path("profile.json")),
            "--manifest",
            path_str(&self.path("manifest.json")),
            "--out",
            path_str(&self.path(out)),
        ])
    }

    fn config(&self, name: &str, manifest: &str) -> PathBuf {
        let cfg = json!({
            "experiments": [{
                "id": "synthetic",
                "manifest": manifest,
                "stores": {"attn_out": "stores/attn_out.actv", "ffn_out": "stores/ffn_out.actv"},
                "fold": {"kind": "stratified_k", "k": 6, "seed": 3}
            }]
        });
        let path = self.path(name);
        std::fs::write(&path, cfg.to_string()).unwrap();
        path
    }

    fn probe(&self, config: &Path, out: &str) -> Output {
        run(&[
            "probe",
            "--config",
            path_str(config),
            "--out",
            path_str(&self.path(out)),
        ])
    }
}

#[test]
fn synth_probe_analyze_round() {
    let p = Pipeline::new();
    let o = p.synth("stores");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("additivity: exact"), "{}", stdout(&o));

    for site in ["resid_in", "attn_out", "ffn_out"] {
        let bytes = std::fs::read(p.path(&format!("stores/{site}.actv"))).unwrap();
        assert_eq!(&bytes[..8], b"ACTV0001");
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(
            bytes.len(),
            12 + header_len + 4 * Pipeline::LAYERS * Pipeline::N * Pipeline::DIM
        );
    }
    let o = p.synth("again");
    assert!(o.status.success());
    for site in ["resid_in", "attn_out", "ffn_out"] {
        let a = std::fs::read(p.path(&format!("stores/{site}.actv"))).unwrap();
        let b = std::fs::read(p.path(&format!("again/{site}.actv"))).unwrap();
        assert!(a == b, "{site} differs between runs");
    }

    let o = run(&[
        "validate",
        "--store",
        path_str(&p.path("stores/resid_in.actv")),
        "--manifest",
        path_str(&p.path("manifest.json")),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(serde_json::from_str::<Value>(&stdout(&o)).unwrap()["ok"], true);

    let cfg = p.config("run.json", "manifest.json");
    let o = p.probe(&cfg, "results.json");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("tasks: 16, skipped: 0, curves: 2"),
        "{}",
        stdout(&o)
    );
    let results = read_json(&p.path("results.json"));
    let attn = results["curves"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["site"] == "attn_out")
        .unwrap();
    let values: Vec<f64> = attn["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let best = (0..values.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    assert_eq!(best, 5, "{values:?}");

    let o = p.probe(&cfg, "results2.json");
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(p.path("results.json")).unwrap(),
        std::fs::read(p.path("results2.json")).unwrap()
    );

    let o = run(&[
        "analyze",
        path_str(&p.path("results.json")),
        "--out",
        path_str(&p.path("analysis")),
        "--format",
        "csv",
        "--format",
        "svg",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("synthetic/attn_out/y: peaks at [5]"),
        "{}",
        stdout(&o)
    );
    assert!(p.path("analysis/report.json").exists());
    assert!(p.path("analysis/curve_synthetic_attn_out_y.csv").exists());
    assert!(p.path("analysis/overlay_attn_out.svg").exists());
}

#[test]
fn mismatched_manifest_is_an_input_error() {
    let p = Pipeline::new();
    assert!(p.synth("stores").status.success());
    p.fixture("other.json", 90, 1);
    let o = run(&[
        "validate",
        "--store",
        path_str(&p.path("stores/attn_out.actv")),
        "--manifest",
        path_str(&p.path("other.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["ok"], false);
    assert_eq!(report["extra_in_store"].as_array().unwrap().len(), 30);

    let cfg = p.config("bad.json", "other.json");
    let o = p.probe(&cfg, "results.json");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!p.path("results.json").exists());
}

fn results_file(dir: &Path, name: &str, values: &[f64]) -> PathBuf {
    let body = json!({
        "curves": [{
            "experiment_id": name,
            "site": "attn_out",
            "target": "y",
            "metric": "accuracy",
            "values": values,
            "primary": true
        }],
        "tasks": [],
        "skipped": [],
        "incomplete": [],
        "n_tasks": 0
    });
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, body.to_string()).unwrap();
    path
}

#[test]
fn analyze_builds_full_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<PathBuf> = (0..7)
        .map(|k| {
            let values: Vec<f64> = (0..20).map(|l| 0.5 + 0.01 * ((l * (k + 2) + k) % 9) as f64).collect();
            results_file(dir.path(), &format!("e{k}"), &values)
        })
        .collect();
    let out = dir.path().join("analysis");
    let mut args = vec!["analyze".to_string()];
    args.extend(files.iter().map(|f| path_str(f).to_string()));
    args.extend(["--out".into(), path_str(&out).into(), "--format".into(), "csv".into()]);
    let o = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&out.join("report.json"));
    let site = &report["sites"][0];
    for m in [
        "level_full",
        "level_second_half",
        "derivative_full",
        "derivative_second_half",
    ] {
        let rows = site[m]["values"].as_array().unwrap();
        assert_eq!(rows.len(), 7, "{m}");
        assert!(rows.iter().all(|r| r.as_array().unwrap().len() == 7));
    }
    let matrix = std::fs::read_to_string(out.join("matrix_attn_out_derivative_full.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 8);
    let lags = std::fs::read_to_string(out.join("lags_attn_out.csv")).unwrap();
    assert_eq!(lags.lines().next(), Some("lag,n,mean,sd"));
    assert_eq!(lags.lines().count(), 5);
}

#[test]
fn analyze_finds_single_peak() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..24).map(|l| 0.9 - 0.002 * (l as f64 - 9.0).powi(2)).collect();
    let f = results_file(dir.path(), "uni", &values);
    let out = dir.path().join("a");
    let o = run(&["analyze", path_str(&f), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&out.join("report.json"));
    let peaks = report["curves"][0]["peaks"].as_array().unwrap();
    assert_eq!(peaks.len(), 1);
    assert_eq!(peaks[0]["layer"], 9);
}

#[test]
fn analyze_rejects_mixed_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let a = results_file(dir.path(), "a", &[0.5, 0.6, 0.7, 0.6, 0.5]);
    let b = results_file(dir.path(), "b", &[0.5, 0.6, 0.7, 0.6]);
    let o = run(&[
        "analyze",
        path_str(&a),
        path_str(&b),
        "--out",
        path_str(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
