//! Attention-graph construction.
//!
//! Two graphs are supported: the ordinary causal graph, and the context-hub
//! graph that pairs every verbal token with a hub slot. The hub graph lays the
//! sequence out as `[h_0..h_{T-1}, v_0..v_{T-1}]` (combined length `2T`) and
//! restricts visibility to four blocks:
//!
//! * hub → hub: diagonal only (each hub sees itself),
//! * hub → verbal: causal (hub `i` sees verbal `0..=i`),
//! * verbal → hub: diagonal only (verbal `i` sees hub `i`),
//! * verbal → verbal: causal.
//!
//! On top of the mask, a scalar offset `b ≤ 0` is added to the two hub-diagonal
//! blocks before the softmax, scaling those entries' unnormalized attention
//! weights by exactly `e^b`. All hub slots share one frozen embedding drawn
//! from the token-embedding statistics, and all take position id 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Matrix2D, MASK_BLOCKED};

/// Which attention graph a forward pass runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Plain causal self-attention over the verbal tokens.
    Baseline,
    /// Paired hub+verbal streams with the four-block mask and hub offset.
    Arach,
}

/// How the shared hub embedding is derived from the token-embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HubInitMode {
    /// Column-wise mean of the embedding table.
    Mean,
    /// One draw from N(mean, diag(per-dimension population variance)).
    Gaussian,
}

impl std::fmt::Display for HubInitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HubInitMode::Mean => "mean",
            HubInitMode::Gaussian => "gaussian",
        })
    }
}

impl std::str::FromStr for HubInitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(HubInitMode::Mean),
            "gaussian" => Ok(HubInitMode::Gaussian),
            other => Err(Error::Config(format!(
                "unknown hub init mode `{other}`; expected mean or gaussian"
            ))),
        }
    }
}

/// Full description of the attention graph for one forward pass.
///
/// The spec is plain data: masks, offsets, and the combined layout are built
/// from it on demand, and it serializes into run configs and reports. The
/// sampled hub embedding itself is carried out-of-band (it is derived
/// deterministically from `hub_init` + `seed` + the embedding table, so a
/// deserialized spec can always be re-armed with [`init_hub_embedding`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionGraphSpec {
    pub kind: GraphKind,
    /// Verbal-token count T. Combined length is 2T for the hub graph.
    pub t: usize,
    /// Additive offset on hub-diagonal entries, ≤ 0. `0` keeps the hub stream
    /// with no down-weighting ("hub-only").
    pub b: f32,
    /// Diagnostic mode: hard-mask the hub-diagonal entries instead of
    /// offsetting them. This severs every hub→verbal information path, so
    /// verbal logits must collapse to the baseline graph's.
    #[serde(default)]
    pub hub_hard_masked: bool,
    pub hub_init: HubInitMode,
    pub seed: u64,
    /// The shared hub embedding (model width). `None` until armed; always
    /// `None` for baseline.
    #[serde(skip)]
    pub hub_embedding: Option<Vec<f32>>,
}

impl AttentionGraphSpec {
    /// Causal graph over `t` verbal tokens.
    pub fn baseline(t: usize) -> Self {
        AttentionGraphSpec {
            kind: GraphKind::Baseline,
            t,
            b: 0.0,
            hub_hard_masked: false,
            hub_init: HubInitMode::Gaussian,
            seed: 0,
            hub_embedding: None,
        }
    }

    /// Hub graph over `t` verbal tokens with offset `b`. The hub embedding is
    /// not sampled yet; call [`AttentionGraphSpec::arm`] (or set
    /// `hub_embedding`) before running a forward pass.
    pub fn arach(t: usize, b: f32, hub_init: HubInitMode, seed: u64) -> Self {
        AttentionGraphSpec {
            kind: GraphKind::Arach,
            t,
            b,
            hub_hard_masked: false,
            hub_init,
            seed,
            hub_embedding: None,
        }
    }

    /// Samples the hub embedding from `embedding_table` if not already set.
    pub fn arm(&mut self, embedding_table: &Matrix2D) {
        if self.kind == GraphKind::Arach && self.hub_embedding.is_none() {
            self.hub_embedding = Some(init_hub_embedding(embedding_table, self.hub_init, self.seed));
        }
    }

    /// Same spec at a different verbal length, sharing the hub embedding.
    pub fn with_t(&self, t: usize) -> Self {
        let mut spec = self.clone();
        spec.t = t;
        spec
    }

    /// Number of slots the forward pass actually runs over.
    pub fn combined_len(&self) -> usize {
        match self.kind {
            GraphKind::Baseline => self.t,
            GraphKind::Arach => 2 * self.t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::GraphSpec("verbal length T must be ≥ 1".into()));
        }
        if !self.b.is_finite() || self.b > 0.0 {
            return Err(Error::GraphSpec(format!("offset b must be finite and ≤ 0, got {}", self.b)));
        }
        Ok(())
    }
}

/// Derives the shared hub embedding from the token-embedding table.
///
/// `Mean` returns the column-wise mean μ directly. `Gaussian` returns
/// `μ + ε` with `ε ~ N(0, diag(σ²))`, where σ² is the per-dimension
/// population variance of the table — drawn once with the given seed and
/// frozen thereafter. Statistics accumulate in `f64`.
pub fn init_hub_embedding(embedding_table: &Matrix2D, mode: HubInitMode, seed: u64) -> Vec<f32> {
    use rand::SeedableRng;

    let (rows, cols) = (embedding_table.rows(), embedding_table.cols());
    let n = rows as f64;
    let mut sum = vec![0.0f64; cols];
    let mut sum_sq = vec![0.0f64; cols];
    for r in 0..rows {
        for (c, &v) in embedding_table.row(r).iter().enumerate() {
            sum[c] += v as f64;
            sum_sq[c] += (v as f64) * (v as f64);
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    match mode {
        HubInitMode::Mean => mean.iter().map(|&m| m as f32).collect(),
        HubInitMode::Gaussian => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            mean.iter()
                .enumerate()
                .map(|(c, &m)| {
                    // Population variance, clamped at 0 against rounding.
                    let var = (sum_sq[c] / n - m * m).max(0.0);
                    let normal = rand_distr::Normal::new(0.0f64, var.sqrt()).expect("finite std dev");
                    (m + rand::Rng::sample(&mut rng, normal)) as f32
                })
                .collect()
        }
    }
}

/// Additive mask for the hub graph at verbal length `t` (combined `2t×2t`).
///
/// Entry `(i, j)` is `0` when permitted and [`MASK_BLOCKED`] when blocked.
/// Row `i` of either stream permits hub column `i` and verbal columns
/// `t..=t+min(i, t-1)` — i.e. its own hub slot plus the causal verbal prefix.
pub fn build_mask(t: usize) -> Result<Matrix2D> {
    if t == 0 {
        return Err(Error::GraphSpec("mask for empty sequence".into()));
    }
    let s = 2 * t;
    let mut m = Matrix2D::from_vec(s, s, vec![MASK_BLOCKED; s * s])?;
    for row in 0..s {
        // Stream-local index: hub rows are 0..t, verbal rows t..2t.
        let i = if row < t { row } else { row - t };
        m.set(row, i, 0.0); // own hub slot
        for j in 0..=i {
            m.set(row, t + j, 0.0); // causal verbal prefix
        }
    }
    Ok(m)
}

/// Additive causal mask for the baseline graph (`t×t`, lower-triangular 0).
pub fn build_causal_mask(t: usize) -> Result<Matrix2D> {
    if t == 0 {
        return Err(Error::GraphSpec("mask for empty sequence".into()));
    }
    let mut m = Matrix2D::from_vec(t, t, vec![MASK_BLOCKED; t * t])?;
    for i in 0..t {
        for j in 0..=i {
            m.set(i, j, 0.0);
        }
    }
    Ok(m)
}

/// Additive offset matrix: `b` at `(hub row i, hub col i)` and
/// `(verbal row i, hub col i)`, zero elsewhere (combined `2t×2t`).
///
/// Its support is exactly the hub-diagonal subset of the mask's permitted set.
pub fn build_offset(t: usize, b: f32) -> Result<Matrix2D> {
    if t == 0 {
        return Err(Error::GraphSpec("offset for empty sequence".into()));
    }
    let s = 2 * t;
    let mut m = Matrix2D::zeros(s, s);
    for i in 0..t {
        m.set(i, i, b);
        m.set(t + i, i, b);
    }
    Ok(m)
}

/// Which stream a combined-sequence slot belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Hub,
    Verbal,
}

/// One slot of the combined input sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceSlot {
    pub stream: Stream,
    /// Index into the position-embedding table. Hub slots all share id 0;
    /// verbal slot `i` takes id `i`.
    pub position_id: usize,
    /// Token id for verbal slots; `None` for hub slots (they embed the shared
    /// hub vector instead).
    pub token: Option<u32>,
}

/// Fully laid-out input for one forward pass.
#[derive(Debug, Clone)]
pub struct CombinedSequence {
    pub slots: Vec<SequenceSlot>,
    /// Verbal-token count.
    pub t: usize,
}

impl CombinedSequence {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Combined index of the first verbal slot.
    pub fn verbal_start(&self) -> usize {
        self.slots.len() - self.t
    }
}

/// Lays out the input slots for `verbal_ids` under `spec`.
///
/// Baseline: the verbal tokens as-is, positions `0..T`. Hub graph: `T` hub
/// slots (shared embedding, position 0) followed by the verbal tokens.
pub fn build_combined(verbal_ids: &[u32], spec: &AttentionGraphSpec, max_positions: usize) -> Result<CombinedSequence> {
    let t = verbal_ids.len();
    if t == 0 {
        return Err(Error::GraphSpec("empty verbal sequence".into()));
    }
    if t != spec.t {
        return Err(Error::GraphSpec(format!("spec says T={}, got {} verbal ids", spec.t, t)));
    }
    if t > max_positions {
        return Err(Error::SequenceTooLong { len: t, max: max_positions });
    }
    let mut slots = Vec::with_capacity(spec.combined_len());
    if spec.kind == GraphKind::Arach {
        for _ in 0..t {
            slots.push(SequenceSlot {
                stream: Stream::Hub,
                position_id: 0,
                token: None,
            });
        }
    }
    for (i, &id) in verbal_ids.iter().enumerate() {
        slots.push(SequenceSlot {
            stream: Stream::Verbal,
            position_id: i,
            token: Some(id),
        });
    }
    Ok(CombinedSequence { slots, t })
}

/// Rows `T..2T` of a combined-length logits matrix, re-indexed to verbal
/// positions `0..T`. For a baseline-length matrix this is the identity.
pub fn extract_verbal_logits(full: &Matrix2D, t: usize) -> Result<Matrix2D> {
    if full.rows() == t {
        return Ok(full.clone());
    }
    if full.rows() != 2 * t {
        return Err(Error::Shape {
            op: "extract_verbal_logits",
            detail: format!("{} rows for T={}", full.rows(), t),
        });
    }
    full.row_slice(t, 2 * t)
}
