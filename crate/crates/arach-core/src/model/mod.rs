//! GPT-2 small forward pass, parameterized by an attention graph.
//!
//! Prefill-only (full-window teacher forcing): there is no KV cache or
//! generation loop, because every metric here is scoring-based. The block
//! structure is standard pre-layernorm GPT-2; the only departure from the
//! stock model is that the additive attention bias (mask + hub offset) and
//! the input layout come from an [`AttentionGraphSpec`], so the same engine
//! runs both the baseline causal graph and the paired hub graph.

mod load;

pub use load::load_model;

use serde::{Deserialize, Serialize};

use crate::analytics::{AttentionTrace, LayerTrace};
use crate::error::{Error, Result};
use crate::graph::{
    build_causal_mask, build_combined, build_mask, build_offset, AttentionGraphSpec, GraphKind,
};
use crate::kernels::{
    add_assign, add_bias_rows, gelu_in_place, is_permitted, layer_norm_rows_into,
    masked_softmax_rows_in_place, matmul_into, matmul_nt_scaled_into, Matrix2D, MASK_BLOCKED,
};

/// Architecture hyperparameters. Defaults to GPT-2 small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub layer_norm_eps: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layer: 12,
            n_head: 12,
            d_model: 768,
            d_head: 64,
            vocab_size: 50257,
            max_positions: 1024,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_layer == 0 || self.n_head == 0 || self.d_head == 0 {
            return bad("layer/head counts must be positive".into());
        }
        if self.d_model != self.n_head * self.d_head {
            return bad(format!(
                "d_model {} != n_head {} × d_head {}",
                self.d_model, self.n_head, self.d_head
            ));
        }
        if self.vocab_size == 0 || self.max_positions == 0 {
            return bad("vocab and position table must be non-empty".into());
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad(format!("layer_norm_eps must be > 0, got {}", self.layer_norm_eps));
        }
        Ok(())
    }
}

/// One transformer block's parameters. Projection matrices are stored in the
/// row-major `x @ W + b` orientation (the checkpoint's conv-1d layout).
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub ln1_gamma: Vec<f32>,
    pub ln1_beta: Vec<f32>,
    /// `[d_model, 3·d_model]`: concatenated query/key/value projection.
    pub qkv_w: Matrix2D,
    pub qkv_b: Vec<f32>,
    /// `[d_model, d_model]`: attention output projection.
    pub proj_w: Matrix2D,
    pub proj_b: Vec<f32>,
    pub ln2_gamma: Vec<f32>,
    pub ln2_beta: Vec<f32>,
    /// `[d_model, 4·d_model]`.
    pub fc_w: Matrix2D,
    pub fc_b: Vec<f32>,
    /// `[4·d_model, d_model]`.
    pub fc_proj_w: Matrix2D,
    pub fc_proj_b: Vec<f32>,
}

/// Full model parameters. Immutable after load; the LM head is tied to the
/// token-embedding table.
#[derive(Debug, Clone)]
pub struct ModelWeights {
    pub config: ModelConfig,
    /// Token embeddings `[vocab, d_model]`; doubles as the LM head.
    pub wte: Matrix2D,
    /// Position embeddings `[max_positions, d_model]`.
    pub wpe: Matrix2D,
    pub layers: Vec<LayerWeights>,
    pub lnf_gamma: Vec<f32>,
    pub lnf_beta: Vec<f32>,
}

impl ModelWeights {
    /// Order-sensitive hash over every tensor's bit pattern. Cheap enough to
    /// run before and after an evaluation to assert nothing trained.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |values: &[f32]| {
            for &v in values {
                h = (h ^ v.to_bits() as u64).wrapping_mul(PRIME);
            }
        };
        eat(self.wte.data());
        eat(self.wpe.data());
        for l in &self.layers {
            eat(&l.ln1_gamma);
            eat(&l.ln1_beta);
            eat(l.qkv_w.data());
            eat(&l.qkv_b);
            eat(l.proj_w.data());
            eat(&l.proj_b);
            eat(&l.ln2_gamma);
            eat(&l.ln2_beta);
            eat(l.fc_w.data());
            eat(&l.fc_b);
            eat(l.fc_proj_w.data());
            eat(&l.fc_proj_b);
        }
        eat(&self.lnf_gamma);
        eat(&self.lnf_beta);
        h
    }
}

/// Which verbal positions to compute LM-head logits for.
///
/// Scoring paths rarely need the whole window (a perplexity window scores
/// only its tail), and the LM head is the single largest matmul, so trimming
/// it matters. Hub positions never get logits regardless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogitsSpan {
    /// All verbal positions `0..T`.
    All,
    /// A contiguous range of verbal positions.
    Rows(std::ops::Range<usize>),
}

/// Forward-pass options beyond the spec'd `capture` flag.
#[derive(Debug, Clone)]
pub struct ForwardOptions {
    pub logits: LogitsSpan,
    /// Capture per-layer/per-head attention matrices.
    pub capture_trace: bool,
    /// Capture per-row softmax log-normalizers (for unnormalized-weight
    /// analysis; `[layer][head][combined row]`).
    pub capture_log_normalizers: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            logits: LogitsSpan::All,
            capture_trace: false,
            capture_log_normalizers: false,
        }
    }
}

/// Floating-point operation tally for one forward pass.
///
/// Convention: a matmul counts `2·m·k·n`; softmax counts 5 per permitted
/// entry (shift, exp, accumulate, divide, compare); layer norm 8 and GELU 8
/// per element; bias/residual adds 1 per element. Matmuls dominate — the
/// elementwise terms are bookkeeping so the totals are honest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlopCount {
    /// QKᵀ score products, softmax, and attention-weighted value sums.
    pub attention: f64,
    /// Everything, attention included.
    pub total: f64,
}

impl FlopCount {
    fn gemm(&mut self, m: usize, k: usize, n: usize, attention: bool) {
        let f = 2.0 * m as f64 * k as f64 * n as f64;
        self.total += f;
        if attention {
            self.attention += f;
        }
    }

    fn elementwise(&mut self, count: usize, per_element: f64, attention: bool) {
        let f = count as f64 * per_element;
        self.total += f;
        if attention {
            self.attention += f;
        }
    }
}

impl std::ops::AddAssign for FlopCount {
    fn add_assign(&mut self, rhs: FlopCount) {
        self.attention += rhs.attention;
        self.total += rhs.total;
    }
}

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Next-token logits for the requested verbal rows (`rows × vocab`).
    pub logits: Matrix2D,
    /// Verbal position of `logits` row 0.
    pub logits_first_row: usize,
    /// Present iff trace capture was requested.
    pub trace: Option<AttentionTrace>,
    /// Present iff log-normalizer capture was requested.
    pub log_normalizers: Option<Vec<Vec<Vec<f64>>>>,
    pub flops: FlopCount,
}

/// Reusable activation buffers for one forward call.
struct Scratch {
    ln: Matrix2D,
    qkv: Matrix2D,
    q: Matrix2D,
    k: Matrix2D,
    v: Matrix2D,
    scores: Matrix2D,
    head_out: Matrix2D,
    attn: Matrix2D,
    proj: Matrix2D,
    mlp: Matrix2D,
}

impl Scratch {
    fn new(s: usize, cfg: &ModelConfig) -> Self {
        Scratch {
            ln: Matrix2D::zeros(s, cfg.d_model),
            qkv: Matrix2D::zeros(s, 3 * cfg.d_model),
            q: Matrix2D::zeros(s, cfg.d_head),
            k: Matrix2D::zeros(s, cfg.d_head),
            v: Matrix2D::zeros(s, cfg.d_head),
            scores: Matrix2D::zeros(s, s),
            head_out: Matrix2D::zeros(s, cfg.d_head),
            attn: Matrix2D::zeros(s, cfg.d_model),
            proj: Matrix2D::zeros(s, cfg.d_model),
            mlp: Matrix2D::zeros(s, 4 * cfg.d_model),
        }
    }
}

/// Runs the model under `graph` and returns full verbal logits.
///
/// `capture` requests the per-layer/per-head attention trace. For the hub
/// graph, logits cover the verbal stream only — hub positions carry no
/// prediction contract.
pub fn forward(
    weights: &ModelWeights,
    graph: &AttentionGraphSpec,
    token_ids: &[u32],
    capture: bool,
) -> Result<ForwardOutput> {
    forward_with(
        weights,
        graph,
        token_ids,
        &ForwardOptions {
            capture_trace: capture,
            ..ForwardOptions::default()
        },
    )
}

/// [`forward`] with explicit logits-span and capture options.
pub fn forward_with(
    weights: &ModelWeights,
    graph: &AttentionGraphSpec,
    token_ids: &[u32],
    opts: &ForwardOptions,
) -> Result<ForwardOutput> {
    let cfg = &weights.config;
    graph.validate()?;
    for &id in token_ids {
        if id as usize >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                id,
                vocab: cfg.vocab_size,
            });
        }
    }
    let combined = build_combined(token_ids, graph, cfg.max_positions)?;
    let t = combined.t;
    let s = combined.len();
    let d = cfg.d_model;

    let hub_embedding = match graph.kind {
        GraphKind::Baseline => None,
        GraphKind::Arach => {
            let emb = graph
                .hub_embedding
                .as_deref()
                .ok_or_else(|| Error::GraphSpec("hub embedding not armed".into()))?;
            if emb.len() != d {
                return Err(Error::GraphSpec(format!(
                    "hub embedding has {} dims, model width is {}",
                    emb.len(),
                    d
                )));
            }
            Some(emb)
        }
    };

    // Input embeddings: token (or hub) embedding plus position embedding.
    let mut x = Matrix2D::zeros(s, d);
    for (r, slot) in combined.slots.iter().enumerate() {
        if slot.position_id >= cfg.max_positions {
            return Err(Error::PositionOverflow {
                pos: slot.position_id,
                max: cfg.max_positions,
            });
        }
        let base: &[f32] = match slot.token {
            Some(id) => weights.wte.row(id as usize),
            None => hub_embedding.expect("hub slot implies arach graph"),
        };
        let pos = weights.wpe.row(slot.position_id);
        let row = x.row_mut(r);
        for i in 0..d {
            row[i] = base[i] + pos[i];
        }
    }

    // Additive attention bias: mask plus (for the hub graph) the offset. In
    // hard-masked diagnostic mode the offset entries are pushed to the
    // blocked sentinel, severing every hub→verbal path.
    let bias = match graph.kind {
        GraphKind::Baseline => build_causal_mask(t)?,
        GraphKind::Arach => {
            let b_eff = if graph.hub_hard_masked { MASK_BLOCKED } else { graph.b };
            let mut m = build_mask(t)?;
            add_assign(&mut m, &build_offset(t, b_eff)?)?;
            m
        }
    };
    let permitted_per_matrix = bias.data().iter().filter(|&&v| is_permitted(v)).count();

    let scale = 1.0 / (cfg.d_head as f32).sqrt();
    let mut scratch = Scratch::new(s, cfg);
    let mut flops = FlopCount::default();
    let mut trace_layers: Vec<LayerTrace> = Vec::new();
    let mut lognorm_layers: Vec<Vec<Vec<f64>>> = Vec::new();

    for layer in &weights.layers {
        // Attention sublayer.
        layer_norm_rows_into(&x, &layer.ln1_gamma, &layer.ln1_beta, cfg.layer_norm_eps, &mut scratch.ln)?;
        flops.elementwise(s * d, 8.0, false);
        matmul_into(&scratch.ln, &layer.qkv_w, &mut scratch.qkv)?;
        add_bias_rows(&mut scratch.qkv, &layer.qkv_b)?;
        flops.gemm(s, d, 3 * d, false);
        flops.elementwise(s * 3 * d, 1.0, false);

        let mut layer_trace = LayerTrace { heads: Vec::new() };
        let mut layer_lognorms: Vec<Vec<f64>> = Vec::new();
        for h in 0..cfg.n_head {
            let dh = cfg.d_head;
            for r in 0..s {
                let src = scratch.qkv.row(r);
                scratch.q.row_mut(r).copy_from_slice(&src[h * dh..(h + 1) * dh]);
                scratch.k.row_mut(r).copy_from_slice(&src[d + h * dh..d + (h + 1) * dh]);
                scratch.v.row_mut(r).copy_from_slice(&src[2 * d + h * dh..2 * d + (h + 1) * dh]);
            }
            matmul_nt_scaled_into(&scratch.q, &scratch.k, scale, &mut scratch.scores)?;
            flops.gemm(s, dh, s, true);
            add_assign(&mut scratch.scores, &bias)?;
            let lognorms = masked_softmax_rows_in_place(&mut scratch.scores)?;
            flops.elementwise(permitted_per_matrix, 5.0, true);
            if opts.capture_trace {
                layer_trace.heads.push(scratch.scores.clone());
            }
            if opts.capture_log_normalizers {
                layer_lognorms.push(lognorms);
            }
            matmul_into(&scratch.scores, &scratch.v, &mut scratch.head_out)?;
            flops.gemm(s, s, dh, true);
            for r in 0..s {
                scratch.attn.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(scratch.head_out.row(r));
            }
        }
        if opts.capture_trace {
            trace_layers.push(layer_trace);
        }
        if opts.capture_log_normalizers {
            lognorm_layers.push(layer_lognorms);
        }
        matmul_into(&scratch.attn, &layer.proj_w, &mut scratch.proj)?;
        add_bias_rows(&mut scratch.proj, &layer.proj_b)?;
        flops.gemm(s, d, d, false);
        flops.elementwise(s * d, 1.0, false);
        add_assign(&mut x, &scratch.proj)?;
        flops.elementwise(s * d, 1.0, false);

        // MLP sublayer.
        layer_norm_rows_into(&x, &layer.ln2_gamma, &layer.ln2_beta, cfg.layer_norm_eps, &mut scratch.ln)?;
        flops.elementwise(s * d, 8.0, false);
        matmul_into(&scratch.ln, &layer.fc_w, &mut scratch.mlp)?;
        add_bias_rows(&mut scratch.mlp, &layer.fc_b)?;
        flops.gemm(s, d, 4 * d, false);
        flops.elementwise(s * 4 * d, 1.0, false);
        gelu_in_place(&mut scratch.mlp);
        flops.elementwise(s * 4 * d, 8.0, false);
        matmul_into(&scratch.mlp, &layer.fc_proj_w, &mut scratch.proj)?;
        add_bias_rows(&mut scratch.proj, &layer.fc_proj_b)?;
        flops.gemm(s, 4 * d, d, false);
        flops.elementwise(s * d, 1.0, false);
        add_assign(&mut x, &scratch.proj)?;
        flops.elementwise(s * d, 1.0, false);
    }

    layer_norm_rows_into(&x, &weights.lnf_gamma, &weights.lnf_beta, cfg.layer_norm_eps, &mut scratch.ln)?;
    flops.elementwise(s * d, 8.0, false);

    // LM head over the requested verbal rows only (hub rows are dropped
    // before the projection — they carry no prediction contract).
    let verbal_start = combined.verbal_start();
    let (row0, row1) = match &opts.logits {
        LogitsSpan::All => (0, t),
        LogitsSpan::Rows(r) => {
            if r.start >= r.end || r.end > t {
                return Err(Error::Shape {
                    op: "forward",
                    detail: format!("logits span {:?} outside verbal range 0..{}", r, t),
                });
            }
            (r.start, r.end)
        }
    };
    let hidden = scratch.ln.row_slice(verbal_start + row0, verbal_start + row1)?;
    let mut logits = Matrix2D::zeros(hidden.rows(), cfg.vocab_size);
    matmul_nt_scaled_into(&hidden, &weights.wte, 1.0, &mut logits)?;
    flops.gemm(hidden.rows(), d, cfg.vocab_size, false);
    if !logits.all_finite() {
        return Err(Error::NonFinite("logits".into()));
    }

    Ok(ForwardOutput {
        logits,
        logits_first_row: row0,
        trace: if opts.capture_trace {
            Some(AttentionTrace {
                kind: graph.kind,
                t,
                layers: trace_layers,
            })
        } else {
            None
        },
        log_normalizers: if opts.capture_log_normalizers {
            Some(lognorm_layers)
        } else {
            None
        },
        flops,
    })
}

/// Natural-log probability of `targets[i]` under `output.logits` row `i`.
///
/// Targets are aligned one-ahead of inputs: row `i` holds the distribution
/// for the token following verbal position `logits_first_row + i`. Log-sum-exp
/// runs in `f64`.
pub fn token_logprobs(output: &ForwardOutput, targets: &[u32]) -> Result<Vec<f64>> {
    let logits = &output.logits;
    if targets.len() != logits.rows() {
        return Err(Error::Shape {
            op: "token_logprobs",
            detail: format!("{} targets for {} logit rows", targets.len(), logits.rows()),
        });
    }
    let mut out = Vec::with_capacity(targets.len());
    for (r, &target) in targets.iter().enumerate() {
        if target as usize >= logits.cols() {
            return Err(Error::TokenOutOfRange {
                id: target,
                vocab: logits.cols(),
            });
        }
        let row = logits.row(r);
        let mut max = f32::NEG_INFINITY;
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let max = max as f64;
        let mut sum = 0.0f64;
        for &v in row {
            sum += (v as f64 - max).exp();
        }
        let lse = max + sum.ln();
        out.push(row[target as usize] as f64 - lse);
    }
    Ok(out)
}
