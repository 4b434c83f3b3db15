//! Report structures and deterministic serialization.
//!
//! Reports embed the full run configuration, a content hash of the evaluated
//! token streams, and the weight-checkpoint fingerprint, so any number can be
//! traced back to exactly what produced it. Writers are deterministic:
//! re-running the same configuration yields byte-identical files (wall-clock
//! timestamps are deliberately kept out of the payload).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{Heatmap, MassFractions, QuadrantShares};
use crate::config::{RunConfig, TaskKind};
use crate::error::{Error, Result};

/// Version tag stamped into every JSON report.
pub const SCHEMA_VERSION: &str = "arach-report/1";

/// One arm's outcome: the headline metric plus per-example detail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmReport {
    /// Accuracy in percent, or perplexity, per the task.
    pub metric: f64,
    /// Scored predictions (examples, windows×tokens, or cloze examples).
    pub n_scored: usize,
    pub records: Vec<ExampleRecord>,
}

/// Per-example scoring detail, one variant per task family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExampleRecord {
    /// Final-token prediction for one example.
    LastToken { index: usize, context_tokens: usize, target: u32, predicted: u32, correct: bool },
    /// One sliding window's contribution to corpus perplexity.
    Window { index: usize, start: usize, scored: usize, logprob_sum: f64 },
    /// One two-choice example: per-ending scores and the pick.
    Cloze { index: usize, label: usize, chosen: usize, correct: bool, score_first: f64, score_second: f64 },
}

/// Floating-point operation totals for both arms over the same workload.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlopReport {
    pub baseline_attention: f64,
    pub baseline_total: f64,
    pub arach_attention: f64,
    pub arach_total: f64,
    /// arach ÷ baseline, attention stage only.
    pub attention_ratio: f64,
    /// arach ÷ baseline, whole forward pass.
    pub total_ratio: f64,
}

/// Complete paired-evaluation report for one task at one offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub task: TaskKind,
    pub config: RunConfig,
    /// SHA-256 over the evaluated token streams; identifies the exact slice.
    pub dataset_sha256: String,
    /// Order-sensitive hash of every weight tensor, hex-encoded.
    pub weights_fingerprint: String,
    /// Examples evaluated after symmetric skips.
    pub n_examples: usize,
    /// Examples dropped before scoring (too short, inconsistent encoding).
    pub n_skipped: usize,
    pub baseline: ArmReport,
    pub arach: ArmReport,
    /// Oriented so positive means the treated arm improved.
    pub delta: f64,
    pub flops: FlopReport,
}

/// One grid point of an offset sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepPoint {
    pub b: f32,
    pub baseline: f64,
    pub arach: f64,
    pub delta: f64,
}

/// Offset-sweep report: one shared baseline, one treated arm per offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: String,
    pub task: TaskKind,
    pub config: RunConfig,
    pub dataset_sha256: String,
    pub weights_fingerprint: String,
    pub n_examples: usize,
    pub n_skipped: usize,
    pub points: Vec<SweepPoint>,
}

/// Hash the evaluated token streams: for each stream, its length as u64
/// little-endian followed by each token id as u32 little-endian. Framing by
/// length keeps differently split streams from colliding.
pub fn dataset_hash(streams: &[Vec<u32>]) -> String {
    let mut hasher = Sha256::new();
    for s in streams {
        hasher.update((s.len() as u64).to_le_bytes());
        for &id in s {
            hasher.update(id.to_le_bytes());
        }
    }
    hex_encode(&hasher.finalize())
}

fn hex_encode(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Render a weight fingerprint as fixed-width hex.
pub fn fingerprint_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

/// Fixed six-decimal rendering for metric columns; deterministic.
fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

/// The one-row summary CSV for an `eval` run.
pub fn eval_csv(report: &EvalReport) -> String {
    let mut out = String::from("task,metric,window,stride,b,seed,n_scored,baseline,arach,delta\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        report.task,
        report.task.metric_name(),
        report.config.window,
        report.config.stride,
        report.config.b,
        report.config.seed,
        report.baseline.n_scored,
        fmt_metric(report.baseline.metric),
        fmt_metric(report.arach.metric),
        fmt_metric(report.delta),
    );
    out
}

/// One row per grid point for a `sweep` run.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("b,baseline,arach,delta\n");
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.b,
            fmt_metric(p.baseline),
            fmt_metric(p.arach),
            fmt_metric(p.delta),
        );
    }
    out
}

/// Per-layer sink scores, one or both arms; layers are indexed from 0.
pub fn sink_profile_csv(baseline: &[f64], arach: Option<&[f64]>) -> String {
    let mut out = String::new();
    match arach {
        Some(arach) => {
            out.push_str("layer,baseline,arach\n");
            for (l, (b, a)) in baseline.iter().zip(arach).enumerate() {
                let _ = writeln!(out, "{l},{},{}", fmt_metric(*b), fmt_metric(*a));
            }
        }
        None => {
            out.push_str("layer,baseline\n");
            for (l, b) in baseline.iter().enumerate() {
                let _ = writeln!(out, "{l},{}", fmt_metric(*b));
            }
        }
    }
    out
}

/// Long-format attention-mass decomposition, one row per (arm, layer).
pub fn decomposition_csv(
    baseline: &[MassFractions],
    arach: Option<&[MassFractions]>,
) -> String {
    let mut out = String::from("arm,layer,first_verbal,hub,other_verbal\n");
    for (l, m) in baseline.iter().enumerate() {
        let _ = writeln!(
            out,
            "baseline,{l},{},{},{}",
            fmt_metric(m.first_verbal),
            fmt_metric(m.hub),
            fmt_metric(m.other_verbal),
        );
    }
    if let Some(arach) = arach {
        for (l, m) in arach.iter().enumerate() {
            let _ = writeln!(
                out,
                "arach,{l},{},{},{}",
                fmt_metric(m.first_verbal),
                fmt_metric(m.hub),
                fmt_metric(m.other_verbal),
            );
        }
    }
    out
}

/// The four quadrant shares at one layer.
pub fn quadrants_csv(layer: usize, shares: &QuadrantShares) -> String {
    let mut out = String::from("layer,quadrant,share\n");
    let rows = [
        ("hub_to_hub", shares.hub_to_hub),
        ("hub_to_verbal", shares.hub_to_verbal),
        ("verbal_to_hub", shares.verbal_to_hub),
        ("verbal_to_verbal", shares.verbal_to_verbal),
    ];
    for (name, value) in rows {
        let _ = writeln!(out, "{layer},{name},{}", fmt_metric(value));
    }
    out
}

/// Heatmap grid with original verbal indices as row/column headers.
pub fn heatmap_csv(map: &Heatmap) -> String {
    let mut out = String::from("index");
    for i in &map.indices {
        let _ = write!(out, ",{i}");
    }
    out.push('\n');
    for r in 0..map.size {
        let _ = write!(out, "{}", map.indices[r]);
        for c in 0..map.size {
            let _ = write!(out, ",{:e}", map.at(r, c));
        }
        out.push('\n');
    }
    out
}

/// Serialize to pretty JSON with a trailing newline and write atomically
/// enough for our purposes (single writer).
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text_file(path, &text)
}

/// Write a text artifact, mapping IO failures to configuration errors that
/// carry the path.
pub fn write_text_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}
