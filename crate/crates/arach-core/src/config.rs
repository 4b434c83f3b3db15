//! Run configuration: defaults, TOML file loading, and validation.
//!
//! Every knob has a default, so a config file only needs the keys it wants
//! to change and the command line can override any of them afterwards
//! (precedence: CLI flag > config file > built-in default — the binary
//! applies flag overrides on top of the structure loaded here).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HubInitMode;

/// Which evaluation protocol to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    /// Predict the final token of each example; score top-1 exact match.
    #[serde(rename = "last-token-accuracy")]
    LastTokenAccuracy,
    /// Sliding-window perplexity over one long corpus.
    #[serde(rename = "sliding-ppl")]
    SlidingPpl,
    /// Pick the likelier of two endings for a shared context.
    #[serde(rename = "cloze-2choice")]
    Cloze2Choice,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] =
        [TaskKind::LastTokenAccuracy, TaskKind::SlidingPpl, TaskKind::Cloze2Choice];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::LastTokenAccuracy => "last-token-accuracy",
            TaskKind::SlidingPpl => "sliding-ppl",
            TaskKind::Cloze2Choice => "cloze-2choice",
        }
    }

    /// The headline metric's name: accuracy in percent, or perplexity.
    pub fn metric_name(self) -> &'static str {
        match self {
            TaskKind::LastTokenAccuracy | TaskKind::Cloze2Choice => "accuracy",
            TaskKind::SlidingPpl => "perplexity",
        }
    }

    /// Whether larger metric values are better (accuracy) or worse (PPL).
    pub fn higher_is_better(self) -> bool {
        !matches!(self, TaskKind::SlidingPpl)
    }

    /// Difference between arms, oriented so positive means the treated arm
    /// improved on the reference arm.
    pub fn oriented_delta(self, baseline: f64, treated: f64) -> f64 {
        if self.higher_is_better() {
            treated - baseline
        } else {
            baseline - treated
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown task `{s}`; expected one of last-token-accuracy, sliding-ppl, cloze-2choice"
                ))
            })
    }
}

/// Locations of the checkpoint and tokenizer files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub weights: PathBuf,
    pub vocab: PathBuf,
    pub merges: PathBuf,
}

impl Default for ModelPaths {
    fn default() -> Self {
        Self {
            weights: PathBuf::from("models/gpt2/model.safetensors"),
            vocab: PathBuf::from("models/gpt2/vocab.json"),
            merges: PathBuf::from("models/gpt2/merges.txt"),
        }
    }
}

/// On-disk dataset encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// One document per line (or one long document), plain UTF-8.
    Text,
    /// Line-delimited JSON records with named fields.
    Jsonl,
}

/// Where the evaluation data lives and how to pull fields out of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Explicit format; when absent it is inferred from the extension
    /// (`.jsonl` → jsonl, anything else → text).
    pub format: Option<DatasetFormat>,
    /// JSONL field holding the example text (accuracy / perplexity tasks).
    pub text_field: String,
    /// JSONL field holding the shared context of a two-choice example.
    pub context_field: String,
    /// JSONL fields holding the two candidate endings, in choice order.
    pub ending_fields: [String; 2],
    /// JSONL field holding the correct choice index.
    pub label_field: String,
    /// Labels count from 1 instead of 0.
    pub label_one_based: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/lambada_test.jsonl"),
            format: None,
            text_field: "text".to_string(),
            context_field: "context".to_string(),
            ending_fields: ["ending1".to_string(), "ending2".to_string()],
            label_field: "label".to_string(),
            label_one_based: false,
        }
    }
}

impl DatasetConfig {
    /// The declared format, or the one inferred from the file extension.
    pub fn resolved_format(&self) -> DatasetFormat {
        self.format.unwrap_or_else(|| {
            match self.path.extension().and_then(|e| e.to_str()) {
                Some("jsonl") => DatasetFormat::Jsonl,
                _ => DatasetFormat::Text,
            }
        })
    }
}

/// Offset grid for `sweep` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Offsets to evaluate, each within `[-1.0, 0.0]`.
    pub grid: Vec<f32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        // 0.0, -0.1, …, -1.0: eleven evenly spaced points. The first point
        // is written out so it is positive zero (and prints as plain "0").
        Self { grid: (0..=10).map(|i| if i == 0 { 0.0 } else { -0.1 * i as f32 }).collect() }
    }
}

/// Which arms the `analyze` subcommand runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalyzeArms {
    #[serde(rename = "both")]
    Both,
    #[serde(rename = "baseline-only")]
    BaselineOnly,
}

/// Attention-trace collection settings for `analyze` runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// How many windows to trace and average over.
    pub windows: usize,
    /// Verbal tokens per traced window.
    pub window_tokens: usize,
    /// Heatmap block size: first K and last K verbal positions.
    pub heatmap_k: usize,
    pub arms: AnalyzeArms,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self { windows: 16, window_tokens: 512, heatmap_k: 64, arms: AnalyzeArms::Both }
    }
}

/// Scoring options for the two-choice task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ClozeConfig {
    /// Divide each ending's total log-probability by its token count.
    pub length_normalized: bool,
}

/// Everything one run needs, with defaults for every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    pub model: ModelPaths,
    pub dataset: DatasetConfig,
    /// Verbal context window, in tokens.
    pub window: usize,
    /// Sliding-window stride, in tokens.
    pub stride: usize,
    /// Attention logit offset; must be finite and ≤ 0.
    pub b: f32,
    pub hub_init: HubInitMode,
    pub seed: u64,
    /// Shrink the treated arm's verbal window by one slot.
    pub reserve_one: bool,
    /// Worker threads for example-level parallelism; 0 = one per core.
    pub workers: usize,
    pub sweep: SweepConfig,
    pub analyze: AnalyzeConfig,
    pub cloze: ClozeConfig,
    /// Cap on evaluated examples (accuracy / cloze tasks).
    pub max_examples: Option<usize>,
    /// Cap on evaluated corpus tokens (perplexity task).
    pub max_tokens: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::LastTokenAccuracy,
            model: ModelPaths::default(),
            dataset: DatasetConfig::default(),
            window: 1024,
            stride: 512,
            b: -0.5,
            hub_init: HubInitMode::Gaussian,
            seed: 42,
            reserve_one: false,
            workers: 0,
            sweep: SweepConfig::default(),
            analyze: AnalyzeConfig::default(),
            cloze: ClozeConfig::default(),
            max_examples: None,
            max_tokens: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parse a TOML document; absent keys keep their defaults, unknown keys
    /// are rejected so typos fail loudly instead of being ignored.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    /// Load and parse a TOML config file.
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Check cross-field invariants that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config(format!(
                "window must be at least 2 tokens, got {}",
                self.window
            )));
        }
        if self.stride == 0 || self.stride > self.window {
            return Err(Error::Config(format!(
                "stride must be in 1..=window ({}), got {}",
                self.window, self.stride
            )));
        }
        if !self.b.is_finite() || self.b > 0.0 {
            return Err(Error::Config(format!("offset b must be finite and ≤ 0, got {}", self.b)));
        }
        if self.sweep.grid.is_empty() {
            return Err(Error::Config("sweep grid must contain at least one offset".to_string()));
        }
        for &b in &self.sweep.grid {
            if !b.is_finite() || !(-1.0..=0.0).contains(&b) {
                return Err(Error::Config(format!(
                    "sweep offsets must lie in [-1.0, 0.0], got {b}"
                )));
            }
        }
        if self.analyze.windows == 0 {
            return Err(Error::Config("analyze.windows must be at least 1".to_string()));
        }
        if self.analyze.window_tokens < 2 {
            return Err(Error::Config(format!(
                "analyze.window_tokens must be at least 2, got {}",
                self.analyze.window_tokens
            )));
        }
        if self.analyze.heatmap_k == 0 {
            return Err(Error::Config("analyze.heatmap_k must be at least 1".to_string()));
        }
        if let Some(0) = self.max_examples {
            return Err(Error::Config("max_examples must be at least 1 when set".to_string()));
        }
        if let Some(0) = self.max_tokens {
            return Err(Error::Config("max_tokens must be at least 1 when set".to_string()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.window, 1024);
        assert_eq!(cfg.stride, 512);
        assert_eq!(cfg.b, -0.5);
        assert_eq!(cfg.seed, 42);
        assert!(!cfg.reserve_one);
        assert_eq!(cfg.workers, 0);
        assert_eq!(cfg.analyze.windows, 16);
        assert_eq!(cfg.analyze.window_tokens, 512);
        assert_eq!(cfg.analyze.heatmap_k, 64);
        assert_eq!(cfg.analyze.arms, AnalyzeArms::Both);
        assert!(!cfg.cloze.length_normalized);
        assert_eq!(cfg.sweep.grid.len(), 11);
        assert_eq!(cfg.sweep.grid[0], 0.0);
        assert_eq!(cfg.sweep.grid[10], -1.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn sweep_grid_is_evenly_spaced_and_in_range() {
        let grid = SweepConfig::default().grid;
        for (i, &b) in grid.iter().enumerate() {
            assert!((b - (-0.1 * i as f32)).abs() < 1e-6);
            assert!((-1.0..=0.0).contains(&b));
        }
    }

    #[test]
    fn partial_toml_overrides_only_named_keys() {
        let cfg = RunConfig::from_toml_str(
            r#"
            task = "sliding-ppl"
            b = -0.25
            [dataset]
            path = "data/wikitext103_val.txt"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.task, TaskKind::SlidingPpl);
        assert_eq!(cfg.b, -0.25);
        assert_eq!(cfg.dataset.path, PathBuf::from("data/wikitext103_val.txt"));
        // Untouched keys keep their defaults.
        assert_eq!(cfg.window, 1024);
        assert_eq!(cfg.dataset.text_field, "text");
    }

    #[test]
    fn empty_toml_equals_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml_str("windw = 512\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "typos must fail loudly: {err}");
    }

    #[test]
    fn task_names_round_trip_exactly() {
        for task in TaskKind::ALL {
            assert_eq!(task.name().parse::<TaskKind>().unwrap(), task);
            assert_eq!(task.to_string(), task.name());
        }
        assert_eq!("last-token-accuracy".parse::<TaskKind>().unwrap(), TaskKind::LastTokenAccuracy);
        assert_eq!("sliding-ppl".parse::<TaskKind>().unwrap(), TaskKind::SlidingPpl);
        assert_eq!("cloze-2choice".parse::<TaskKind>().unwrap(), TaskKind::Cloze2Choice);
        assert!("lambada".parse::<TaskKind>().is_err());
    }

    #[test]
    fn task_metric_orientation() {
        assert!(TaskKind::LastTokenAccuracy.higher_is_better());
        assert!(TaskKind::Cloze2Choice.higher_is_better());
        assert!(!TaskKind::SlidingPpl.higher_is_better());
        // Positive delta always means improvement.
        assert_eq!(TaskKind::LastTokenAccuracy.oriented_delta(46.89, 50.42), 50.42 - 46.89);
        assert_eq!(TaskKind::SlidingPpl.oriented_delta(37.33, 33.11), 37.33 - 33.11);
        assert!(TaskKind::SlidingPpl.oriented_delta(29.37, 30.0) < 0.0);
    }

    #[test]
    fn format_inferred_from_extension() {
        let mut ds = DatasetConfig::default();
        ds.path = PathBuf::from("x/corpus.jsonl");
        assert_eq!(ds.resolved_format(), DatasetFormat::Jsonl);
        ds.path = PathBuf::from("x/corpus.txt");
        assert_eq!(ds.resolved_format(), DatasetFormat::Text);
        ds.format = Some(DatasetFormat::Jsonl);
        assert_eq!(ds.resolved_format(), DatasetFormat::Jsonl, "explicit format wins");
    }

    #[test]
    fn validation_rejects_bad_windows_and_offsets() {
        let mut cfg = RunConfig::default();
        cfg.window = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.stride = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.stride = cfg.window + 1;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.b = 0.5;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.b = f32::NAN;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.b = 0.0;
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_sweep_grids() {
        let mut cfg = RunConfig::default();
        cfg.sweep.grid.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.sweep.grid = vec![-1.5];
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.sweep.grid = vec![0.1];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validation_rejects_degenerate_analyze_and_caps() {
        let mut cfg = RunConfig::default();
        cfg.analyze.windows = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.analyze.heatmap_k = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.max_examples = Some(0);
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.max_tokens = Some(0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hub_init_and_arms_spellings() {
        let cfg = RunConfig::from_toml_str("hub_init = \"mean\"\n").unwrap();
        assert_eq!(cfg.hub_init, HubInitMode::Mean);
        let cfg = RunConfig::from_toml_str("hub_init = \"gaussian\"\n").unwrap();
        assert_eq!(cfg.hub_init, HubInitMode::Gaussian);
        let cfg = RunConfig::from_toml_str("[analyze]\narms = \"baseline-only\"\n").unwrap();
        assert_eq!(cfg.analyze.arms, AnalyzeArms::BaselineOnly);
    }

    #[test]
    fn config_survives_toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.task = TaskKind::Cloze2Choice;
        cfg.b = -0.75;
        cfg.max_examples = Some(100);
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
