//! GPT-2 small inference with a pluggable attention graph.
//!
//! The model runs under one of two attention graphs over the same frozen
//! checkpoint:
//!
//! * **baseline** — ordinary causal self-attention over the input tokens;
//! * **arach** — attention reallocation via a context hub: the input is laid
//!   out as two streams `[c_1..c_T, x_1..x_T]`, where every hub token `c_i`
//!   shares a single embedding derived from token-embedding statistics and
//!   sits at position id 0. A four-block mask lets each verbal token attend
//!   to its own hub token and its causal prefix, and a non-positive logit
//!   offset `b` on the hub diagonals scales those routes' unnormalized
//!   attention weights by exactly `e^b`.
//!
//! Everything downstream is built around paired evaluation: both graphs are
//! scored over identical prepared inputs (`eval`), swept across offsets
//! (`sweep`), and compared structurally through attention-trace statistics
//! (`analytics`) — sink scores, mass decompositions, quadrant allocation,
//! and heatmaps. Reports embed the run configuration, a content hash of the
//! evaluated tokens, and a checkpoint fingerprint, and every artifact writer
//! is deterministic.
//!
//! Modules:
//!
//! * [`kernels`] — dense matrix primitives: matmul, masked softmax,
//!   layer norm, GELU.
//! * [`tokenizer`] — byte-level BPE matching the GPT-2 reference encoder.
//! * [`model`] — checkpoint loading and the transformer forward pass.
//! * [`graph`] — attention-graph specs, masks, offsets, combined layout.
//! * [`eval`] — dataset ingestion, paired scoring, sweeps, trace collection.
//! * [`analytics`] — reductions over captured attention traces.
//! * [`report`] — schema-versioned reports and deterministic writers.
//! * [`svg`] — self-contained chart rendering for run artifacts.
//! * [`config`] — run configuration with TOML loading and validation.
//! * [`assets`] — checkpoint/dataset discovery for tests and benches.

pub mod analytics;
pub mod assets;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod report;
pub mod svg;
pub mod tokenizer;

#[cfg(test)]
pub(crate) mod testutil;

pub use analytics::{
    AttentionTrace, Heatmap, LayerTrace, MassFractions, QuadrantShares, SinkProfile, TraceStats,
};
pub use config::{
    AnalyzeArms, AnalyzeConfig, ClozeConfig, DatasetConfig, DatasetFormat, ModelPaths, RunConfig,
    SweepConfig, TaskKind,
};
pub use error::{Error, Result};
pub use eval::{
    load_task_input, prepare, run_analysis, run_paired, sweep_offset, AnalysisOutcome,
    EvalContext, PreparedTask, TaskInput,
};
pub use graph::{
    build_causal_mask, build_combined, build_mask, build_offset, init_hub_embedding,
    AttentionGraphSpec, CombinedSequence, GraphKind, HubInitMode, SequenceSlot, Stream,
};
pub use kernels::{masked_softmax_rows, Matrix2D, MASK_BLOCKED};
pub use model::{
    forward, forward_with, load_model, token_logprobs, FlopCount, ForwardOptions, ForwardOutput,
    LogitsSpan, ModelConfig, ModelWeights,
};
pub use report::{EvalReport, ExampleRecord, SweepPoint, SweepReport, SCHEMA_VERSION};
pub use tokenizer::Tokenizer;
