// SPDX-License-Identifier: MIT OR Apache-2.0

//! `layerscope`: design manifests, synthesize stores, probe, analyze.
//!
//! Exit codes: 0 success, 1 runtime or probing failure, 2 input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use layerscope::actstore::{validate, ActivationStore, SiteId};
use layerscope::curve::LayerCurve;
use layerscope::curvestats::{overlay_svg, summarize, write_csv, AnalysisOptions, CorrMethod, LayerWindow, StatsError};
use layerscope::designer::{bury, BuryOptions, Experiment, Ingredients, ItemSelection, Manifest};
use layerscope::harness::{run_curves, threads_from_env, RunConfig, RunResults};
use layerscope::synthgen::{check_additivity, fixture_manifest, generate, FixtureLabel, SynthError, SynthProfile};

#[derive(Parser)]
#[command(
    name = "layerscope",
    version,
    about = "Layer-wise linear probing of transformer activations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a stimulus manifest from an ingredients directory.
    Design(DesignArgs),
    /// Write a manifest of placeholder examples with seeded labels.
    Fixture(FixtureArgs),
    /// Generate resid_in/attn_out/ffn_out stores from a profile.
    Synth(SynthArgs),
    /// Check a store against a manifest.
    Validate(ValidateArgs),
    /// Run the probe sweep described by a run configuration.
    Probe(ProbeArgs),
    /// Summarize curves from one or more results files.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Position {
    Suffix,
    Prefix,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    ingredients: PathBuf,
    #[arg(long)]
    experiment: String,
    /// Bury the target sentence in the filler text.
    #[arg(long)]
    buried: bool,
    #[arg(long, value_enum, default_value = "suffix")]
    position: Position,
    /// Words between the target and suffix filler (default depends on the experiment).
    #[arg(long)]
    connector: Option<String>,
    #[arg(long, default_value_t = 20)]
    n_features: usize,
    #[arg(long, default_value_t = 300)]
    n_objects: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    n: usize,
    /// Binary label names.
    #[arg(long)]
    binary: Vec<String>,
    /// Real-valued label names.
    #[arg(long)]
    real: Vec<String>,
    #[arg(long, default_value_t = 6)]
    groups: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "fixture")]
    experiment_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Directory for report.json and any CSV/SVG output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Vec<Format>,
    /// First layer of the derivative window.
    #[arg(long)]
    window_start: Option<usize>,
    /// End (exclusive) of the derivative window.
    #[arg(long)]
    window_end: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    min_prominence: f64,
    #[arg(long, default_value_t = 4)]
    max_lag: usize,
    #[arg(long, default_value = "spearman")]
    method: String,
    /// Use every curve, not only the primary ones.
    #[arg(long)]
    all_curves: bool,
}

enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn cmd_design(a: DesignArgs) -> Outcome {
    let exp: Experiment = a.experiment.parse().map_err(input)?;
    let ing = Ingredients::load_dir(&a.ingredients).map_err(input)?;
    let sel = ItemSelection {
        n_features: a.n_features,
        n_objects: a.n_objects,
    };
    let mut manifest = exp.build(&ing, &sel).map_err(input)?;
    if a.buried {
        let filler = ing
            .filler
            .as_deref()
            .ok_or_else(|| input(anyhow!("{} has no filler.txt", a.ingredients.display())))?;
        let opts = match a.position {
            Position::Suffix => BuryOptions::suffix(a.connector.as_deref().unwrap_or(exp.default_connector())),
            Position::Prefix => BuryOptions::prefix(),
        };
        manifest = bury(&manifest, filler, &opts).map_err(input)?;
    }
    manifest.save(&a.out).map_err(runtime)?;
    let keys: Vec<String> = manifest.label_keys().into_iter().collect();
    println!("examples: {}", manifest.examples.len());
    println!("labels: {}", keys.join(", "));
    Ok(())
}

fn cmd_fixture(a: FixtureArgs) -> Outcome {
    if a.n < 2 {
        return Err(input(anyhow!("--n must be at least 2")));
    }
    let labels: Vec<FixtureLabel> = a
        .binary
        .iter()
        .map(|n| FixtureLabel::binary(n))
        .chain(a.real.iter().map(|n| FixtureLabel::real(n)))
        .collect();
    let m = fixture_manifest(&a.experiment_id, a.n, &labels, a.groups, a.seed);
    m.save(&a.out).map_err(runtime)?;
    println!("examples: {}", m.examples.len());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.profile)
        .with_context(|| format!("reading {}", a.profile.display()))
        .map_err(input)?;
    let profile = SynthProfile::from_json(&text).map_err(input)?;
    let manifest = Manifest::load(&a.manifest).map_err(input)?;
    let stores = generate(&profile, &manifest).map_err(|e| match e {
        SynthError::Overflow { .. } => runtime(e),
        other => input(other),
    })?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(runtime)?;
    for site in SiteId::ALL {
        let path = a.out.join(format!("{site}.actv"));
        stores.get(site).save(&path).map_err(runtime)?;
        println!("wrote {}", path.display());
    }
    let rep = check_additivity(&stores.resid_in, &stores.attn_out, &stores.ffn_out).map_err(runtime)?;
    if rep.exact {
        println!("additivity: exact ({} values)", rep.checked);
        Ok(())
    } else {
        Err(runtime(anyhow!(
            "additivity: {} of {} values differ (max {})",
            rep.mismatches,
            rep.checked,
            rep.max_abs_error
        )))
    }
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    let store = ActivationStore::load(&a.store).map_err(input)?;
    let manifest = Manifest::load(&a.manifest).map_err(input)?;
    let rep = validate(&store, &manifest);
    println!("{}", rep.to_json());
    if rep.ok {
        Ok(())
    } else {
        Err(input(anyhow!("store does not match manifest")))
    }
}

fn cmd_probe(a: ProbeArgs) -> Outcome {
    let cfg = RunConfig::load(&a.config).map_err(input)?;
    let exps = cfg.load_experiments().map_err(input)?;
    let results = run_curves(&exps, cfg.sites.as_deref(), &cfg.aggregates, threads_from_env()).map_err(input)?;
    write_file(&a.out, &results.to_json())?;
    println!(
        "tasks: {}, skipped: {}, curves: {}",
        results.n_tasks,
        results.skipped.len(),
        results.curves.len()
    );
    for s in &results.skipped {
        eprintln!("skipped {}: {}", s.id, s.error);
    }
    if results.all_failed() {
        return Err(runtime(anyhow!("every probe task failed")));
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Outcome {
    let method = match a.method.as_str() {
        "spearman" => CorrMethod::Spearman,
        "pearson" => CorrMethod::Pearson,
        other => return Err(input(anyhow!("unknown method {other:?}; use spearman or pearson"))),
    };
    let window = match (a.window_start, a.window_end) {
        (None, None) => None,
        (s, e) => Some(LayerWindow {
            start: s.unwrap_or(0),
            end: e,
        }),
    };
    let mut curves: Vec<LayerCurve> = Vec::new();
    for path in &a.results {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(input)?;
        let r = RunResults::from_json(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(input)?;
        let any_primary = r.curves.iter().any(|c| c.primary);
        curves.extend(
            r.curves
                .into_iter()
                .filter(|c| a.all_curves || !any_primary || c.primary),
        );
    }
    if curves.is_empty() {
        return Err(input(anyhow!("no curves in the given results")));
    }
    let opts = AnalysisOptions {
        min_prominence: a.min_prominence,
        max_lag: a.max_lag,
        method,
        window,
    };
    let report = summarize(&curves, &opts).map_err(|e| match e {
        StatsError::LengthMismatch(..) => input(anyhow!("curves of one site differ in length: {e}")),
        other => runtime(other),
    })?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(runtime)?;
    write_file(&a.out.join("report.json"), &report.to_json())?;
    if a.format.contains(&Format::Csv) {
        let paths = write_csv(&report, &a.out).map_err(runtime)?;
        println!("csv files: {}", paths.len());
    }
    if a.format.contains(&Format::Svg) {
        for s in &report.sites {
            if let Some(svg) = overlay_svg(&report, s.site) {
                write_file(&a.out.join(format!("overlay_{}.svg", s.site)), &svg)?;
            }
        }
    }
    for c in &report.curves {
        let peaks: Vec<String> = c.peaks.iter().map(|p| p.layer.to_string()).collect();
        println!("{}: peaks at [{}]", c.key, peaks.join(", "));
    }
    for s in &report.sites {
        let lag1 = s.lags.first().and_then(|l| l.mean);
        let coord = s.derivative_second_half.as_ref().and_then(|m| m.off_diagonal_mean);
        println!(
            "{}: {} curves, mean lag-1 derivative autocorrelation {}, second-half derivative coordination {}",
            s.site,
            s.curves.len(),
            lag1.map_or("n/a".into(), |v| format!("{v:.3}")),
            coord.map_or("n/a".into(), |v| format!("{v:.3}"))
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Fixture(a) => cmd_fixture(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
