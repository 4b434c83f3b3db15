//! Paired evaluation: identical weights, two attention graphs, one dataset.
//!
//! Every run scores a reference arm (plain causal attention) and a treated
//! arm (hub graph) over the same prepared examples, then reports both
//! metrics and an improvement-oriented delta. Work items are independent, so
//! arms parallelize across examples/windows; all floating-point reductions
//! happen in collection order, which keeps results identical across worker
//! counts and reruns.

use std::path::Path;

use rayon::prelude::*;

use crate::analytics::TraceStats;
use crate::config::{AnalyzeArms, DatasetFormat, RunConfig, TaskKind};
use crate::error::{Error, Result};
use crate::graph::{AttentionGraphSpec, GraphKind};
use crate::model::{
    forward_with, token_logprobs, FlopCount, ForwardOptions, LogitsSpan, ModelWeights,
};
use crate::report::{
    dataset_hash, fingerprint_hex, ArmReport, EvalReport, ExampleRecord, FlopReport, SweepPoint,
    SweepReport, SCHEMA_VERSION,
};
use crate::tokenizer::Tokenizer;

/// Everything a run needs, loaded once and shared by reference.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub weights: &'a ModelWeights,
    pub tokenizer: &'a Tokenizer,
    pub config: &'a RunConfig,
}

/// One two-choice example as read from the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeExample {
    pub context: String,
    pub endings: [String; 2],
    /// Correct choice, 0 or 1.
    pub label: usize,
}

/// Task-shaped raw text pulled out of the dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskInput {
    /// Independent examples, one final-token prediction each.
    Examples(Vec<String>),
    /// One long scoring corpus.
    Corpus(String),
    /// Two-choice examples.
    Cloze(Vec<ClozeExample>),
}

fn jsonl_records(path: &Path) -> Result<Vec<(usize, serde_json::Value)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| {
            Error::Dataset(format!("{}:{}: invalid JSON record: {e}", path.display(), i + 1))
        })?;
        records.push((i + 1, value));
    }
    Ok(records)
}

fn string_field(
    record: &serde_json::Value,
    field: &str,
    path: &Path,
    line: usize,
) -> Result<String> {
    record
        .get(field)
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| {
            Error::Dataset(format!(
                "{}:{line}: missing or non-string field `{field}`",
                path.display()
            ))
        })
}

/// Read the dataset file and shape it for the configured task.
pub fn load_task_input(config: &RunConfig) -> Result<TaskInput> {
    let ds = &config.dataset;
    let path = ds.path.as_path();
    let input = match (config.task, ds.resolved_format()) {
        (TaskKind::LastTokenAccuracy, DatasetFormat::Text) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            TaskInput::Examples(
                text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect(),
            )
        }
        (TaskKind::LastTokenAccuracy, DatasetFormat::Jsonl) => {
            let mut examples = Vec::new();
            for (line, record) in jsonl_records(path)? {
                examples.push(string_field(&record, &ds.text_field, path, line)?);
            }
            TaskInput::Examples(examples)
        }
        (TaskKind::SlidingPpl, DatasetFormat::Text) => {
            TaskInput::Corpus(std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
        }
        (TaskKind::SlidingPpl, DatasetFormat::Jsonl) => {
            let mut docs = Vec::new();
            for (line, record) in jsonl_records(path)? {
                docs.push(string_field(&record, &ds.text_field, path, line)?);
            }
            TaskInput::Corpus(docs.join("\n\n"))
        }
        (TaskKind::Cloze2Choice, DatasetFormat::Jsonl) => {
            let mut examples = Vec::new();
            for (line, record) in jsonl_records(path)? {
                let context = string_field(&record, &ds.context_field, path, line)?;
                let endings = [
                    string_field(&record, &ds.ending_fields[0], path, line)?,
                    string_field(&record, &ds.ending_fields[1], path, line)?,
                ];
                let raw = record.get(&ds.label_field).and_then(|v| v.as_i64()).ok_or_else(
                    || {
                        Error::Dataset(format!(
                            "{}:{line}: missing or non-integer field `{}`",
                            path.display(),
                            ds.label_field
                        ))
                    },
                )?;
                let label = raw - i64::from(ds.label_one_based);
                if !(0..=1).contains(&label) {
                    return Err(Error::Dataset(format!(
                        "{}:{line}: label {raw} out of range for a two-choice task",
                        path.display()
                    )));
                }
                examples.push(ClozeExample { context, endings, label: label as usize });
            }
            TaskInput::Cloze(examples)
        }
        (TaskKind::Cloze2Choice, DatasetFormat::Text) => {
            return Err(Error::Dataset(
                "the two-choice task needs a jsonl dataset with context/ending/label fields"
                    .to_string(),
            ));
        }
    };
    match &input {
        TaskInput::Examples(e) if e.is_empty() => {
            Err(Error::Dataset(format!("{}: no examples", path.display())))
        }
        TaskInput::Cloze(e) if e.is_empty() => {
            Err(Error::Dataset(format!("{}: no examples", path.display())))
        }
        TaskInput::Corpus(c) if c.trim().is_empty() => {
            Err(Error::Dataset(format!("{}: empty corpus", path.display())))
        }
        _ => Ok(input),
    }
}

/// A tokenized final-token example; truncation to the arm's window happens
/// at scoring time so one prepared set serves both arms.
#[derive(Debug, Clone)]
pub struct LastTokenItem {
    /// Index into the raw example list (before skips).
    pub index: usize,
    /// Full token ids, context and target together.
    pub ids: Vec<u32>,
}

/// A tokenized two-choice example. Ending ids come from encoding
/// context+ending and taking the suffix, so conditional scoring sees exactly
/// the tokenization it would get in running text.
#[derive(Debug, Clone)]
pub struct ClozeItem {
    pub index: usize,
    pub context: Vec<u32>,
    pub endings: [Vec<u32>; 2],
    pub label: usize,
}

/// Tokenized, skip-filtered work shared by both arms.
#[derive(Debug, Clone)]
pub enum PreparedTask {
    LastToken { items: Vec<LastTokenItem>, n_skipped: usize },
    Ppl { ids: Vec<u32> },
    Cloze { items: Vec<ClozeItem>, n_skipped: usize },
}

impl PreparedTask {
    /// Number of evaluated units (examples, or 1 corpus).
    pub fn n_examples(&self) -> usize {
        match self {
            PreparedTask::LastToken { items, .. } => items.len(),
            PreparedTask::Ppl { .. } => 1,
            PreparedTask::Cloze { items, .. } => items.len(),
        }
    }

    pub fn n_skipped(&self) -> usize {
        match self {
            PreparedTask::LastToken { n_skipped, .. }
            | PreparedTask::Cloze { n_skipped, .. } => *n_skipped,
            PreparedTask::Ppl { .. } => 0,
        }
    }

    /// Content hash of exactly the token streams that will be scored.
    pub fn content_hash(&self) -> String {
        match self {
            PreparedTask::LastToken { items, .. } => {
                dataset_hash(&items.iter().map(|i| i.ids.clone()).collect::<Vec<_>>())
            }
            PreparedTask::Ppl { ids } => dataset_hash(std::slice::from_ref(ids)),
            PreparedTask::Cloze { items, .. } => {
                let mut streams = Vec::with_capacity(items.len() * 4);
                for item in items {
                    streams.push(item.context.clone());
                    streams.push(item.endings[0].clone());
                    streams.push(item.endings[1].clone());
                    streams.push(vec![item.label as u32]);
                }
                dataset_hash(&streams)
            }
        }
    }
}

/// The verbal window an arm may use: the treated arm gives up one slot when
/// `reserve_one` is set, the reference arm never does.
pub fn effective_window(config: &RunConfig, kind: GraphKind) -> usize {
    if kind == GraphKind::Arach && config.reserve_one {
        config.window - 1
    } else {
        config.window
    }
}

/// The tighter of the two arms' windows; skip decisions use this so both
/// arms always score the same example set.
fn min_window(config: &RunConfig) -> usize {
    config.window - usize::from(config.reserve_one)
}

/// Tokenize and filter the raw input. `max_examples` slices the raw example
/// list first; skip rules then drop what cannot be scored by *either* arm:
/// examples under two tokens, endings that cannot fit the tighter window
/// alongside at least one context token, and endings whose running-text
/// tokenization does not extend the context's.
pub fn prepare(
    config: &RunConfig,
    tokenizer: &Tokenizer,
    input: &TaskInput,
) -> Result<PreparedTask> {
    config.validate()?;
    let floor = min_window(config);
    if floor < 2 {
        return Err(Error::Config(format!(
            "window {} leaves fewer than 2 usable slots with reserve_one",
            config.window
        )));
    }
    match input {
        TaskInput::Examples(examples) => {
            let take = config.max_examples.unwrap_or(usize::MAX).min(examples.len());
            let mut items = Vec::new();
            let mut n_skipped = 0;
            for (index, text) in examples[..take].iter().enumerate() {
                let ids = tokenizer.encode(text);
                if ids.len() < 2 {
                    n_skipped += 1;
                    continue;
                }
                items.push(LastTokenItem { index, ids });
            }
            if items.is_empty() {
                return Err(Error::Eval("no scoreable examples after skips".to_string()));
            }
            Ok(PreparedTask::LastToken { items, n_skipped })
        }
        TaskInput::Corpus(text) => {
            let mut ids = tokenizer.encode(text);
            if let Some(cap) = config.max_tokens {
                ids.truncate(cap);
            }
            if ids.len() < 2 {
                return Err(Error::Dataset("corpus shorter than two tokens".to_string()));
            }
            Ok(PreparedTask::Ppl { ids })
        }
        TaskInput::Cloze(examples) => {
            let take = config.max_examples.unwrap_or(usize::MAX).min(examples.len());
            let mut items = Vec::new();
            let mut n_skipped = 0;
            'example: for (index, ex) in examples[..take].iter().enumerate() {
                let context = tokenizer.encode(&ex.context);
                if context.is_empty() {
                    n_skipped += 1;
                    continue;
                }
                let mut endings: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
                for (e, ending_text) in ex.endings.iter().enumerate() {
                    let full = tokenizer.encode(&format!("{}{}", ex.context, ending_text));
                    if full.len() <= context.len() || full[..context.len()] != context[..] {
                        n_skipped += 1;
                        continue 'example;
                    }
                    let ending = full[context.len()..].to_vec();
                    if ending.len() + 1 > floor {
                        n_skipped += 1;
                        continue 'example;
                    }
                    endings[e] = ending;
                }
                items.push(ClozeItem { index, context, endings, label: ex.label });
            }
            if items.is_empty() {
                return Err(Error::Eval("no scoreable examples after skips".to_string()));
            }
            Ok(PreparedTask::Cloze { items, n_skipped })
        }
    }
}

/// One arm's raw outcome before report assembly.
#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub metric: f64,
    pub n_scored: usize,
    pub records: Vec<ExampleRecord>,
    pub flops: FlopCount,
}

/// Run `f` on a dedicated pool of `workers` threads (0 = the global pool).
fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Eval(format!("worker pool: {e}")))?
            .install(f)
    }
}

/// Score one arm over the prepared work. Caller is responsible for running
/// this inside the desired worker pool.
pub fn eval_arm(
    ctx: &EvalContext<'_>,
    prepared: &PreparedTask,
    spec: &AttentionGraphSpec,
) -> Result<ArmOutcome> {
    match prepared {
        PreparedTask::LastToken { items, .. } => eval_last_token_arm(ctx, items, spec),
        PreparedTask::Ppl { ids } => eval_ppl_arm(ctx, ids, spec),
        PreparedTask::Cloze { items, .. } => eval_cloze_arm(ctx, items, spec),
    }
}

fn argmax(row: &[f32]) -> u32 {
    let mut best = 0usize;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best as u32
}

fn eval_last_token_arm(
    ctx: &EvalContext<'_>,
    items: &[LastTokenItem],
    spec: &AttentionGraphSpec,
) -> Result<ArmOutcome> {
    let window = effective_window(ctx.config, spec.kind);
    let scored: Vec<(ExampleRecord, FlopCount)> = items
        .par_iter()
        .map(|item| -> Result<(ExampleRecord, FlopCount)> {
            let keep = item.ids.len().min(window);
            let slice = &item.ids[item.ids.len() - keep..];
            let context = &slice[..keep - 1];
            let target = slice[keep - 1];
            let opts = ForwardOptions {
                logits: LogitsSpan::Rows(context.len() - 1..context.len()),
                ..ForwardOptions::default()
            };
            let out = forward_with(ctx.weights, &spec.with_t(context.len()), context, &opts)?;
            let predicted = argmax(out.logits.row(0));
            Ok((
                ExampleRecord::LastToken {
                    index: item.index,
                    context_tokens: context.len(),
                    target,
                    predicted,
                    correct: predicted == target,
                },
                out.flops,
            ))
        })
        .collect::<Result<_>>()?;

    let mut flops = FlopCount::default();
    let mut n_correct = 0usize;
    let mut records = Vec::with_capacity(scored.len());
    for (record, f) in scored {
        if matches!(record, ExampleRecord::LastToken { correct: true, .. }) {
            n_correct += 1;
        }
        flops += f;
        records.push(record);
    }
    Ok(ArmOutcome {
        metric: 100.0 * n_correct as f64 / records.len() as f64,
        n_scored: records.len(),
        records,
        flops,
    })
}

/// One perplexity window: token span `[begin, end)`, scoring targets
/// `[first_target, end)` so strided windows never score a position twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PplWindow {
    begin: usize,
    end: usize,
    first_target: usize,
}

/// Lay windows at 0, S, 2S, …: the first scores every position it covers,
/// later ones only the positions beyond the previous window's end. A corpus
/// shorter than the window yields a single truncated window. Windows whose
/// targets would all be re-scores are dropped.
fn plan_windows(len: usize, window: usize, stride: usize) -> Vec<PplWindow> {
    let mut windows = Vec::new();
    if len < 2 {
        return windows;
    }
    let mut begin = 0;
    let mut next_target = 1;
    loop {
        let end = (begin + window).min(len);
        let first_target = next_target.max(begin + 1);
        if first_target < end {
            windows.push(PplWindow { begin, end, first_target });
        }
        next_target = next_target.max(end);
        if end == len {
            break;
        }
        begin += stride;
    }
    windows
}

fn eval_ppl_arm(
    ctx: &EvalContext<'_>,
    ids: &[u32],
    spec: &AttentionGraphSpec,
) -> Result<ArmOutcome> {
    let window = effective_window(ctx.config, spec.kind);
    // stride ≤ window is validated against the configured window; the
    // reserve-one arm's window may be one smaller, so clamp.
    let stride = ctx.config.stride.min(window);
    let plan = plan_windows(ids.len(), window, stride);
    if plan.is_empty() {
        return Err(Error::Eval("no scoreable positions in the corpus".to_string()));
    }

    let scored: Vec<(usize, f64, FlopCount)> = plan
        .par_iter()
        .map(|w| -> Result<(usize, f64, FlopCount)> {
            // The last token of the window is only ever a target, never an
            // input, so feed `[begin, end-1)` and request exactly the rows
            // whose next-token distributions we score.
            let inputs = &ids[w.begin..w.end - 1];
            let rows = (w.first_target - 1 - w.begin)..(w.end - 1 - w.begin);
            let opts = ForwardOptions {
                logits: LogitsSpan::Rows(rows),
                ..ForwardOptions::default()
            };
            let out = forward_with(ctx.weights, &spec.with_t(inputs.len()), inputs, &opts)?;
            let targets = &ids[w.first_target..w.end];
            let logprobs = token_logprobs(&out, targets)?;
            Ok((targets.len(), logprobs.iter().sum::<f64>(), out.flops))
        })
        .collect::<Result<_>>()?;

    let mut flops = FlopCount::default();
    let mut n_scored = 0usize;
    let mut logprob_total = 0.0f64;
    let mut records = Vec::with_capacity(scored.len());
    for (i, (n, sum, f)) in scored.iter().enumerate() {
        n_scored += n;
        logprob_total += sum;
        flops += *f;
        records.push(ExampleRecord::Window {
            index: i,
            start: plan[i].begin,
            scored: *n,
            logprob_sum: *sum,
        });
    }
    let ppl = (-logprob_total / n_scored as f64).exp();
    Ok(ArmOutcome { metric: ppl, n_scored, records, flops })
}

fn eval_cloze_arm(
    ctx: &EvalContext<'_>,
    items: &[ClozeItem],
    spec: &AttentionGraphSpec,
) -> Result<ArmOutcome> {
    let window = effective_window(ctx.config, spec.kind);
    let normalized = ctx.config.cloze.length_normalized;
    let scored: Vec<(ExampleRecord, FlopCount)> = items
        .par_iter()
        .map(|item| -> Result<(ExampleRecord, FlopCount)> {
            let mut scores = [0.0f64; 2];
            let mut flops = FlopCount::default();
            for (e, ending) in item.endings.iter().enumerate() {
                // `prepare` guarantees ending.len() + 1 ≤ window.
                let keep_ctx = item.context.len().min(window - ending.len());
                let mut inputs =
                    Vec::with_capacity(keep_ctx + ending.len().saturating_sub(1));
                inputs.extend_from_slice(&item.context[item.context.len() - keep_ctx..]);
                inputs.extend_from_slice(&ending[..ending.len() - 1]);
                let opts = ForwardOptions {
                    logits: LogitsSpan::Rows(keep_ctx - 1..inputs.len()),
                    ..ForwardOptions::default()
                };
                let out = forward_with(ctx.weights, &spec.with_t(inputs.len()), &inputs, &opts)?;
                let logprobs = token_logprobs(&out, ending)?;
                let mut score = logprobs.iter().sum::<f64>();
                if normalized {
                    score /= ending.len() as f64;
                }
                scores[e] = score;
                flops += out.flops;
            }
            // Strict inequality: ties go to the first ending.
            let chosen = usize::from(scores[1] > scores[0]);
            Ok((
                ExampleRecord::Cloze {
                    index: item.index,
                    label: item.label,
                    chosen,
                    correct: chosen == item.label,
                    score_first: scores[0],
                    score_second: scores[1],
                },
                flops,
            ))
        })
        .collect::<Result<_>>()?;

    let mut flops = FlopCount::default();
    let mut n_correct = 0usize;
    let mut records = Vec::with_capacity(scored.len());
    for (record, f) in scored {
        if matches!(record, ExampleRecord::Cloze { correct: true, .. }) {
            n_correct += 1;
        }
        flops += f;
        records.push(record);
    }
    Ok(ArmOutcome {
        metric: 100.0 * n_correct as f64 / records.len() as f64,
        n_scored: records.len(),
        records,
        flops,
    })
}

fn flop_report(baseline: &ArmOutcome, arach: &ArmOutcome) -> FlopReport {
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
    FlopReport {
        baseline_attention: baseline.flops.attention,
        baseline_total: baseline.flops.total,
        arach_attention: arach.flops.attention,
        arach_total: arach.flops.total,
        attention_ratio: ratio(arach.flops.attention, baseline.flops.attention),
        total_ratio: ratio(arach.flops.total, baseline.flops.total),
    }
}

/// The treated arm's graph for this run: built once so the hub embedding is
/// sampled exactly once per run (and shared across a sweep).
pub fn armed_arach_spec(config: &RunConfig, weights: &ModelWeights) -> AttentionGraphSpec {
    let mut spec = AttentionGraphSpec::arach(1, config.b, config.hub_init, config.seed);
    spec.arm(&weights.wte);
    spec
}

/// Evaluate both arms over already-prepared work and assemble the report.
pub fn run_paired_prepared(
    ctx: &EvalContext<'_>,
    prepared: &PreparedTask,
) -> Result<EvalReport> {
    let fingerprint_before = ctx.weights.fingerprint();
    let baseline_spec = AttentionGraphSpec::baseline(1);
    let arach_spec = armed_arach_spec(ctx.config, ctx.weights);

    let (baseline, arach) = with_pool(ctx.config.workers, || {
        let b = eval_arm(ctx, prepared, &baseline_spec)?;
        let a = eval_arm(ctx, prepared, &arach_spec)?;
        Ok((b, a))
    })?;

    // The mechanism is training-free: the checkpoint must be bit-identical
    // after evaluation.
    let fingerprint_after = ctx.weights.fingerprint();
    if fingerprint_before != fingerprint_after {
        return Err(Error::Eval("weights changed during evaluation".to_string()));
    }

    let delta = ctx.config.task.oriented_delta(baseline.metric, arach.metric);
    let flops = flop_report(&baseline, &arach);
    Ok(EvalReport {
        schema: SCHEMA_VERSION.to_string(),
        task: ctx.config.task,
        config: ctx.config.clone(),
        dataset_sha256: prepared.content_hash(),
        weights_fingerprint: fingerprint_hex(fingerprint_before),
        n_examples: match prepared {
            PreparedTask::Ppl { .. } => baseline.records.len(),
            other => other.n_examples(),
        },
        n_skipped: prepared.n_skipped(),
        baseline: ArmReport {
            metric: baseline.metric,
            n_scored: baseline.n_scored,
            records: baseline.records,
        },
        arach: ArmReport {
            metric: arach.metric,
            n_scored: arach.n_scored,
            records: arach.records,
        },
        delta,
        flops,
    })
}

/// Load, prepare, and run the configured paired evaluation.
pub fn run_paired(ctx: &EvalContext<'_>) -> Result<EvalReport> {
    let input = load_task_input(ctx.config)?;
    let prepared = prepare(ctx.config, ctx.tokenizer, &input)?;
    run_paired_prepared(ctx, &prepared)
}

/// Evaluate the treated arm across the offset grid against one shared
/// reference run. The hub embedding is sampled once and reused at every
/// grid point, so the offset is the only thing that varies.
pub fn sweep_offset(ctx: &EvalContext<'_>) -> Result<SweepReport> {
    let input = load_task_input(ctx.config)?;
    let prepared = prepare(ctx.config, ctx.tokenizer, &input)?;
    let fingerprint = ctx.weights.fingerprint();
    let baseline_spec = AttentionGraphSpec::baseline(1);
    let arach_spec = armed_arach_spec(ctx.config, ctx.weights);

    let points = with_pool(ctx.config.workers, || {
        let baseline = eval_arm(ctx, &prepared, &baseline_spec)?;
        let mut points = Vec::with_capacity(ctx.config.sweep.grid.len());
        for &b in &ctx.config.sweep.grid {
            let mut point_spec = arach_spec.clone();
            point_spec.b = b;
            let arach = eval_arm(ctx, &prepared, &point_spec)?;
            points.push(SweepPoint {
                b,
                baseline: baseline.metric,
                arach: arach.metric,
                delta: ctx.config.task.oriented_delta(baseline.metric, arach.metric),
            });
        }
        Ok(points)
    })?;

    Ok(SweepReport {
        schema: SCHEMA_VERSION.to_string(),
        task: ctx.config.task,
        config: ctx.config.clone(),
        dataset_sha256: prepared.content_hash(),
        weights_fingerprint: fingerprint_hex(fingerprint),
        n_examples: prepared.n_examples(),
        n_skipped: prepared.n_skipped(),
        points,
    })
}

/// Aggregated attention statistics for one or both arms over traced windows.
#[derive(Debug)]
pub struct AnalysisOutcome {
    pub baseline: TraceStats,
    /// Absent when the run was configured baseline-only.
    pub arach: Option<TraceStats>,
    /// Token spans `[begin, end)` of the traced windows.
    pub spans: Vec<(usize, usize)>,
    pub dataset_sha256: String,
}

/// Evenly spaced window starts covering the corpus end to end.
fn analysis_spans(len: usize, window_tokens: usize, windows: usize) -> Vec<(usize, usize)> {
    if len <= window_tokens {
        return vec![(0, len)];
    }
    if windows == 1 {
        return vec![(0, window_tokens)];
    }
    let reach = (len - window_tokens) as u128;
    let mut spans: Vec<(usize, usize)> = (0..windows)
        .map(|i| {
            let start = (reach * i as u128 / (windows - 1) as u128) as usize;
            (start, start + window_tokens)
        })
        .collect();
    spans.dedup();
    spans
}

/// Trace attention over evenly spaced corpus windows and reduce to running
/// statistics. Windows stream one at a time per worker, so memory stays
/// bounded by the worker count, and per-window statistics merge in span
/// order, so results do not depend on scheduling.
pub fn run_analysis(ctx: &EvalContext<'_>) -> Result<AnalysisOutcome> {
    ctx.config.validate()?;
    let corpus = match load_corpus_for_analysis(ctx.config)? {
        TaskInput::Corpus(c) => c,
        _ => unreachable!("analysis always ingests a corpus"),
    };
    let mut ids = ctx.tokenizer.encode(&corpus);
    if let Some(cap) = ctx.config.max_tokens {
        ids.truncate(cap);
    }
    if ids.len() < 2 {
        return Err(Error::Dataset("corpus shorter than two tokens".to_string()));
    }
    let spans =
        analysis_spans(ids.len(), ctx.config.analyze.window_tokens, ctx.config.analyze.windows);
    let both = ctx.config.analyze.arms == AnalyzeArms::Both;

    let baseline_spec = AttentionGraphSpec::baseline(1);
    let arach_spec = armed_arach_spec(ctx.config, ctx.weights);

    let per_span: Vec<(TraceStats, Option<TraceStats>)> =
        with_pool(ctx.config.workers, || {
            spans
                .par_iter()
                .map(|&(begin, end)| -> Result<(TraceStats, Option<TraceStats>)> {
                    let window = &ids[begin..end];
                    let base = trace_window(ctx, window, &baseline_spec)?;
                    let arach = if both {
                        Some(trace_window(ctx, window, &arach_spec)?)
                    } else {
                        None
                    };
                    Ok((base, arach))
                })
                .collect::<Result<_>>()
        })?;

    let mut iter = per_span.into_iter();
    let (mut baseline, mut arach) = iter.next().expect("at least one span");
    for (b, a) in iter {
        baseline.merge(&b)?;
        match (&mut arach, a) {
            (Some(acc), Some(next)) => acc.merge(&next)?,
            (None, None) => {}
            _ => unreachable!("arms are fixed for the whole run"),
        }
    }

    let streams: Vec<Vec<u32>> = spans.iter().map(|&(b, e)| ids[b..e].to_vec()).collect();
    Ok(AnalysisOutcome { baseline, arach, spans, dataset_sha256: dataset_hash(&streams) })
}

/// Analysis always reads the dataset as one corpus, whatever the configured
/// task is.
fn load_corpus_for_analysis(config: &RunConfig) -> Result<TaskInput> {
    let mut corpus_config = config.clone();
    corpus_config.task = TaskKind::SlidingPpl;
    load_task_input(&corpus_config)
}

fn trace_window(
    ctx: &EvalContext<'_>,
    window: &[u32],
    spec: &AttentionGraphSpec,
) -> Result<TraceStats> {
    let t = window.len();
    let opts = ForwardOptions {
        // Logits are irrelevant to tracing; ask for one row to keep the
        // vocabulary projection out of the way.
        logits: LogitsSpan::Rows(t - 1..t),
        capture_trace: true,
        capture_log_normalizers: false,
    };
    let out = forward_with(ctx.weights, &spec.with_t(t), window, &opts)?;
    let trace = out.trace.expect("trace capture was requested");
    TraceStats::from_traces(std::slice::from_ref(&trace))
}
