//! Command-line driver for the context-hub attention engine.
//!
//! Three subcommands cover the full workflow:
//!
//! * `eval` — paired evaluation (baseline vs hub graph under identical
//!   weights and inputs) on one task; writes `report.json` / `report.csv`
//!   and prints a one-row summary.
//! * `sweep` — re-scores the hub arm across the configured offset grid;
//!   writes `sweep.json` / `sweep.csv` and a curve figure with the baseline
//!   as a dashed reference line.
//! * `analyze` — traces attention over sampled corpus windows and emits the
//!   sink profile, verbal-attention heatmaps, mass decomposition, and
//!   quadrant allocation as CSV + SVG, with `analysis.json` metadata.
//!
//! Settings resolve with command-line flags taking precedence over the TOML
//! config file (`--config`), which in turn overrides built-in defaults.
//! Exit codes: 0 success, 1 evaluation failure, 2 configuration/IO failure.

use arach_core::report::{
    decomposition_csv, eval_csv, heatmap_csv, quadrants_csv, sink_profile_csv, sweep_csv,
    write_json_file, write_text_file,
};
use arach_core::svg::{
    HeatmapChart, LineChart, Series, StackPanel, StackedBars, COLOR_BASELINE, COLOR_PRIMARY,
};
use arach_core::{
    load_model, run_analysis, run_paired, sweep_offset, EvalContext, Error, HubInitMode,
    MassFractions, ModelConfig, ModelWeights, QuadrantShares, RunConfig, TaskKind, Tokenizer,
};
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

/// Schema tag embedded in `analysis.json`.
const ANALYSIS_SCHEMA: &str = "arach-analysis/1";

#[derive(Parser)]
#[command(
    name = "arach",
    version,
    about = "GPT-2 small inference with context-hub attention reallocation: paired evaluation, offset sweeps, and attention analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the paired evaluation (baseline vs hub graph) on one task
    Eval(CommonArgs),
    /// Re-score the hub arm across the offset grid against one shared baseline
    Sweep(CommonArgs),
    /// Trace attention over sampled windows and emit sink/heatmap/mass figures
    Analyze(CommonArgs),
}

/// Flags shared by every subcommand. Each one overrides the corresponding
/// config-file value; unset flags leave the config (or default) in place.
#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags given here override its values
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Task kind: last-token-accuracy | sliding-ppl | cloze-2choice
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskKind>,

    /// Dataset file (plain text or JSONL)
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,

    /// Offset strength b (≤ 0) applied to the hub diagonals
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f32>,

    /// Seed for the shared hub-embedding draw
    #[arg(long)]
    seed: Option<u64>,

    /// Verbal window length in tokens
    #[arg(long)]
    window: Option<usize>,

    /// Window stride in tokens for sliding perplexity
    #[arg(long)]
    stride: Option<usize>,

    /// Worker threads (0 = one per core)
    #[arg(long)]
    workers: Option<usize>,

    /// Shrink the hub arm's verbal window by one slot
    #[arg(long, action = ArgAction::SetTrue)]
    reserve_one: bool,

    /// Hub embedding initialization: mean | gaussian
    #[arg(long, value_parser = parse_hub_init)]
    hub_init: Option<HubInitMode>,

    /// Output directory for reports and figures
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Evaluate only the first N examples
    #[arg(long, value_name = "N")]
    max_examples: Option<usize>,

    /// Truncate the corpus to the first N tokens
    #[arg(long, value_name = "N")]
    max_tokens: Option<usize>,
}

fn parse_task(s: &str) -> Result<TaskKind, Error> {
    s.parse()
}

fn parse_hub_init(s: &str) -> Result<HubInitMode, Error> {
    s.parse()
}

impl CommonArgs {
    /// Resolve the effective config: defaults, then the TOML file, then flags.
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_toml_path(path)?,
            None => RunConfig::default(),
        };
        if let Some(task) = self.task {
            config.task = task;
        }
        if let Some(dataset) = &self.dataset {
            config.dataset.path = dataset.clone();
        }
        if let Some(b) = self.b {
            config.b = b;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(window) = self.window {
            config.window = window;
        }
        if let Some(stride) = self.stride {
            config.stride = stride;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        if self.reserve_one {
            config.reserve_one = true;
        }
        if let Some(mode) = self.hub_init {
            config.hub_init = mode;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(n) = self.max_examples {
            config.max_examples = Some(n);
        }
        if let Some(n) = self.max_tokens {
            config.max_tokens = Some(n);
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run) = match &cli.command {
        Command::Eval(args) => (args, cmd_eval as fn(&RunConfig) -> Result<(), Error>),
        Command::Sweep(args) => (args, cmd_sweep as fn(&RunConfig) -> Result<(), Error>),
        Command::Analyze(args) => (args, cmd_analyze as fn(&RunConfig) -> Result<(), Error>),
    };
    let outcome = args.resolve().and_then(|config| run(&config));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_environment() { 2 } else { 1 })
        }
    }
}

/// Load the model and tokenizer named by the config.
fn load_context(config: &RunConfig) -> Result<(ModelWeights, Tokenizer), Error> {
    let weights = load_model(&config.model.weights, &ModelConfig::default())?;
    let tokenizer = Tokenizer::load(&config.model.vocab, &config.model.merges)?;
    Ok((weights, tokenizer))
}

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.out_dir.join(name)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(config: &RunConfig) -> Result<(), Error> {
    let (weights, tokenizer) = load_context(config)?;
    let ctx = EvalContext { weights: &weights, tokenizer: &tokenizer, config };
    let report = run_paired(&ctx)?;

    write_json_file(&out_path(config, "report.json"), &report)?;
    write_text_file(&out_path(config, "report.csv"), &eval_csv(&report))?;

    println!(
        "{:<22} {:<12} {:>12} {:>12} {:>12}",
        "task", "metric", "baseline", "arach", "delta"
    );
    println!(
        "{:<22} {:<12} {:>12.4} {:>12.4} {:>+12.4}",
        report.task.name(),
        report.task.metric_name(),
        report.baseline.metric,
        report.arach.metric,
        report.delta
    );
    println!(
        "scored {} examples ({} skipped); artifacts in {}",
        report.n_examples,
        report.n_skipped,
        config.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn cmd_sweep(config: &RunConfig) -> Result<(), Error> {
    let (weights, tokenizer) = load_context(config)?;
    let ctx = EvalContext { weights: &weights, tokenizer: &tokenizer, config };
    let report = sweep_offset(&ctx)?;

    write_json_file(&out_path(config, "sweep.json"), &report)?;
    write_text_file(&out_path(config, "sweep.csv"), &sweep_csv(&report))?;

    // Metric-vs-b curve with the baseline as a dashed horizontal reference
    // and a marker at the configured default offset.
    let mut points: Vec<(f64, f64)> =
        report.points.iter().map(|p| (p.b as f64, p.arach)).collect();
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let baseline = report.points[0].baseline;
    let (xmin, xmax) = (points[0].0, points[points.len() - 1].0);
    let chart = LineChart {
        title: format!("{} vs offset strength", report.task.metric_name()),
        x_label: "offset b".to_string(),
        y_label: report.task.metric_name().to_string(),
        series: vec![
            Series::dashed("baseline", vec![(xmin, baseline), (xmax, baseline)], COLOR_BASELINE),
            Series::new("hub graph", points, COLOR_PRIMARY),
        ],
        vline: Some((config.b as f64, format!("b = {}", config.b))),
    };
    write_text_file(&out_path(config, "sweep.svg"), &chart.render())?;

    let best = report
        .points
        .iter()
        .max_by(|a, b| {
            let (x, y) = if report.task.higher_is_better() {
                (a.arach, b.arach)
            } else {
                (b.arach, a.arach)
            };
            x.partial_cmp(&y).unwrap()
        })
        .expect("validated grid is non-empty");
    println!(
        "swept {} offsets: baseline {} {:.4}, best b = {} ({:.4}, delta {:+.4}); artifacts in {}",
        report.points.len(),
        report.task.metric_name(),
        baseline,
        best.b,
        best.arach,
        best.delta,
        config.out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

/// Metadata and aggregate numbers for one analysis run.
#[derive(Serialize)]
struct AnalysisReport<'a> {
    schema: &'a str,
    config: &'a RunConfig,
    dataset_sha256: String,
    /// Token spans `[begin, end)` of the traced windows.
    spans: Vec<(usize, usize)>,
    /// Layer with the largest baseline sink score (ties → lowest).
    peak_sink_layer: usize,
    baseline_sink: Vec<f64>,
    arach_sink: Option<Vec<f64>>,
    baseline_decomposition: Vec<MassFractions>,
    arach_decomposition: Option<Vec<MassFractions>>,
    /// Quadrant shares at the peak sink layer (hub arm only).
    quadrants_at_peak: Option<QuadrantShares>,
    /// Present when artifacts were omitted (baseline-only runs).
    note: Option<String>,
}

fn cmd_analyze(config: &RunConfig) -> Result<(), Error> {
    let (weights, tokenizer) = load_context(config)?;
    let ctx = EvalContext { weights: &weights, tokenizer: &tokenizer, config };
    let outcome = run_analysis(&ctx)?;

    let base_profile = outcome.baseline.sink_profile()?;
    let l_star = base_profile
        .l_star
        .expect("baseline trace set defines the peak sink layer");
    let arach_profile = match &outcome.arach {
        Some(stats) => Some(stats.sink_profile()?),
        None => None,
    };

    // (a) Layerwise sink profile, CSV + line figure with the peak marked.
    let arach_scores = arach_profile.as_ref().map(|p| p.scores.as_slice());
    write_text_file(
        &out_path(config, "sink_profile.csv"),
        &sink_profile_csv(&base_profile.scores, arach_scores),
    )?;
    let layer_points =
        |scores: &[f64]| scores.iter().enumerate().map(|(l, s)| (l as f64, *s)).collect();
    let mut series = vec![Series::new("baseline", layer_points(&base_profile.scores), COLOR_BASELINE)];
    if let Some(scores) = arach_scores {
        series.push(Series::new("hub graph", layer_points(scores), COLOR_PRIMARY));
    }
    let sink_chart = LineChart {
        title: "First-token sink score by layer".to_string(),
        x_label: "layer".to_string(),
        y_label: "sink score".to_string(),
        series,
        vline: Some((l_star as f64, format!("peak layer {l_star}"))),
    };
    write_text_file(&out_path(config, "sink_profile.svg"), &sink_chart.render())?;

    // (b, c) Verbal-attention heatmaps at the peak layer, one per arm.
    let k = config.analyze.heatmap_k;
    let base_map = outcome.baseline.heatmap(l_star, k)?;
    write_text_file(&out_path(config, "heatmap_baseline.csv"), &heatmap_csv(&base_map))?;
    let base_chart = HeatmapChart {
        title: format!("Baseline verbal attention, layer {l_star}"),
        values: base_map.values.clone(),
        size: base_map.size,
        indices: base_map.indices.clone(),
        seam: base_map.seam,
        max_value: None,
    };
    write_text_file(&out_path(config, "heatmap_baseline.svg"), &base_chart.render())?;
    if let Some(stats) = &outcome.arach {
        let map = stats.heatmap(l_star, k)?;
        write_text_file(&out_path(config, "heatmap_arach.csv"), &heatmap_csv(&map))?;
        let chart = HeatmapChart {
            title: format!("Hub-graph verbal attention, layer {l_star}"),
            values: map.values.clone(),
            size: map.size,
            indices: map.indices.clone(),
            seam: map.seam,
            max_value: None,
        };
        write_text_file(&out_path(config, "heatmap_arach.svg"), &chart.render())?;
    }

    // (d) Attention-mass decomposition, CSV + stacked bars per arm.
    let base_masses = outcome.baseline.decomposition()?;
    let arach_masses = match &outcome.arach {
        Some(stats) => Some(stats.decomposition()?),
        None => None,
    };
    write_text_file(
        &out_path(config, "decomposition.csv"),
        &decomposition_csv(&base_masses, arach_masses.as_deref()),
    )?;
    let bars = |masses: &[MassFractions]| {
        masses.iter().map(|m| vec![m.first_verbal, m.hub, m.other_verbal]).collect()
    };
    let mut panels = vec![StackPanel { title: "baseline".to_string(), bars: bars(&base_masses) }];
    if let Some(masses) = &arach_masses {
        panels.push(StackPanel { title: "hub graph".to_string(), bars: bars(masses) });
    }
    let stack = StackedBars {
        title: "Verbal attention mass by target".to_string(),
        x_label: "layer".to_string(),
        categories: vec![
            "first verbal token".to_string(),
            "hub columns".to_string(),
            "other verbal tokens".to_string(),
        ],
        panels,
    };
    write_text_file(&out_path(config, "decomposition.svg"), &stack.render())?;

    // (e) Quadrant allocation at the peak layer — defined for the hub arm
    // only, so baseline-only runs record a note instead of the table.
    let quadrants = match &outcome.arach {
        Some(stats) => Some(stats.quadrants(l_star)?),
        None => None,
    };
    let note = match &quadrants {
        Some(shares) => {
            write_text_file(&out_path(config, "quadrants.csv"), &quadrants_csv(l_star, shares))?;
            None
        }
        None => Some(
            "baseline-only analysis: hub-graph artifacts (quadrants, hub heatmap) omitted"
                .to_string(),
        ),
    };

    let analysis = AnalysisReport {
        schema: ANALYSIS_SCHEMA,
        config,
        dataset_sha256: outcome.dataset_sha256.clone(),
        spans: outcome.spans.clone(),
        peak_sink_layer: l_star,
        baseline_sink: base_profile.scores.clone(),
        arach_sink: arach_profile.as_ref().map(|p| p.scores.clone()),
        baseline_decomposition: base_masses,
        arach_decomposition: arach_masses,
        quadrants_at_peak: quadrants,
        note: note.clone(),
    };
    write_json_file(&out_path(config, "analysis.json"), &analysis)?;

    print!(
        "analyzed {} windows: peak sink layer {}, baseline sink {:.4}",
        outcome.spans.len(),
        l_star,
        base_profile.scores[l_star]
    );
    if let Some(p) = &arach_profile {
        print!(", hub-graph sink {:.4}", p.scores[l_star]);
    }
    println!("; artifacts in {}", config.out_dir.display());
    if let Some(note) = note {
        println!("note: {note}");
    }
    Ok(())
}
