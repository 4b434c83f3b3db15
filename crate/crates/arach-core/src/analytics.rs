//! Attention-trace analytics: layerwise sink scores, sink-layer selection,
//! attention-mass decomposition, quadrant routing, and heatmap extraction.
//!
//! Sink score and mass decomposition are computed over *verbal-query rows
//! only* — they describe where token queries send their mass, and restricting
//! to verbal rows keeps the statistic comparable between the baseline graph
//! (all rows verbal) and the hub graph (half the rows are hub slots). The
//! quadrant summary instead covers all rows by construction, since its whole
//! point is the hub/verbal block structure.
//!
//! Traces can be reduced incrementally through [`TraceStats`] (running `f64`
//! sums, merged deterministically), so analyzing many windows never retains
//! more than one trace in memory.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::GraphKind;
use crate::kernels::Matrix2D;

/// Per-layer, per-head attention matrices from one forward pass.
///
/// Row/column space is the combined sequence: for the hub graph, indices
/// `0..t` are hub slots and `t..2t` verbal slots; for baseline, all `t` rows
/// are verbal. Every row is stochastic over its permitted keys, with masked
/// entries exactly zero.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub kind: GraphKind,
    /// Verbal-token count.
    pub t: usize,
    pub layers: Vec<LayerTrace>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub heads: Vec<Matrix2D>,
}

impl AttentionTrace {
    /// Combined index of the first verbal row/column.
    fn verbal_start(&self) -> usize {
        match self.kind {
            GraphKind::Baseline => 0,
            GraphKind::Arach => self.t,
        }
    }
}

/// Layerwise sink scores: mean attention mass on the first verbal token's
/// column, averaged over heads, samples, and verbal-query rows.
#[derive(Debug, Clone, Serialize)]
pub struct SinkProfile {
    /// One score per layer, each in `[0, 1]`.
    pub scores: Vec<f64>,
    /// Argmax layer (ties → lowest index). Defined by the baseline arm, so
    /// it is `None` for hub-graph trace sets.
    pub l_star: Option<usize>,
}

/// Per-layer split of verbal-query attention mass.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MassFractions {
    /// Mass on the first verbal token's column.
    pub first_verbal: f64,
    /// Mass on all hub columns (exactly 0 for baseline).
    pub hub: f64,
    /// Mass on the remaining verbal columns.
    pub other_verbal: f64,
}

/// Mean per-row attention mass falling in each block of the hub graph.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadrantShares {
    /// C→C: hub rows → hub columns.
    pub hub_to_hub: f64,
    /// C→X: hub rows → verbal columns.
    pub hub_to_verbal: f64,
    /// X→C: verbal rows → hub columns.
    pub verbal_to_hub: f64,
    /// X→X: verbal rows → verbal columns.
    pub verbal_to_verbal: f64,
}

impl QuadrantShares {
    pub fn as_array(&self) -> [f64; 4] {
        [self.hub_to_hub, self.hub_to_verbal, self.verbal_to_hub, self.verbal_to_verbal]
    }
}

/// Mean verbal→verbal attention restricted to the first K and last K verbal
/// positions.
#[derive(Debug, Clone, Serialize)]
pub struct Heatmap {
    /// Flattened `size × size` row-major means.
    pub values: Vec<f64>,
    pub size: usize,
    /// Verbal position of each heatmap row/column.
    pub indices: Vec<usize>,
    /// Boundary in `indices` between the first-K block and the last-K block;
    /// `None` when the two blocks meet or overlap (the selection is then
    /// contiguous).
    pub seam: Option<usize>,
}

impl Heatmap {
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.size + c]
    }
}

/// Streaming reduction over attention traces of one graph kind and length.
///
/// All statistics are plain sums in `f64`, so merging partial stats from
/// parallel workers in input order reproduces the sequential result bit for
/// bit.
#[derive(Debug, Clone)]
pub struct TraceStats {
    kind: GraphKind,
    t: usize,
    n_layer: usize,
    samples: usize,
    /// Per layer: Σ over (sample, head, verbal row) of mass on the first
    /// verbal column / on hub columns / on other verbal columns.
    first_sum: Vec<f64>,
    hub_sum: Vec<f64>,
    other_sum: Vec<f64>,
    /// Count of (sample, head, verbal row) triples accumulated per layer.
    verbal_terms: f64,
    /// Per layer: Σ over (sample, head, row) of per-row quadrant masses.
    quad_sums: Vec<[f64; 4]>,
    /// Count of (sample, head) pairs accumulated.
    head_samples: f64,
    /// Per layer: Σ over (sample, head) of the verbal→verbal submatrix.
    verbal_mean_sum: Vec<Vec<f64>>,
}

impl TraceStats {
    pub fn new(kind: GraphKind, t: usize, n_layer: usize) -> Self {
        TraceStats {
            kind,
            t,
            n_layer,
            samples: 0,
            first_sum: vec![0.0; n_layer],
            hub_sum: vec![0.0; n_layer],
            other_sum: vec![0.0; n_layer],
            verbal_terms: 0.0,
            quad_sums: vec![[0.0; 4]; n_layer],
            head_samples: 0.0,
            verbal_mean_sum: vec![vec![0.0; t * t]; n_layer],
        }
    }

    /// Builds stats from a complete trace set (convenience for the one-shot
    /// entry points).
    pub fn from_traces(traces: &[AttentionTrace]) -> Result<TraceStats> {
        let first = traces
            .first()
            .ok_or_else(|| Error::Analytics("empty trace set".into()))?;
        let mut stats = TraceStats::new(first.kind, first.t, first.layers.len());
        for trace in traces {
            stats.add(trace)?;
        }
        Ok(stats)
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn n_layer(&self) -> usize {
        self.n_layer
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Folds one trace into the running sums.
    pub fn add(&mut self, trace: &AttentionTrace) -> Result<()> {
        if trace.kind != self.kind {
            return Err(Error::Analytics("mixed graph kinds in one trace set".into()));
        }
        if trace.t != self.t {
            return Err(Error::Analytics(format!(
                "trace with T={} added to stats with T={}",
                trace.t, self.t
            )));
        }
        if trace.layers.len() != self.n_layer {
            return Err(Error::Analytics(format!(
                "trace with {} layers added to stats with {}",
                trace.layers.len(),
                self.n_layer
            )));
        }
        let t = self.t;
        let vs = trace.verbal_start();
        let s = vs + t;
        for (l, layer) in trace.layers.iter().enumerate() {
            for head in &layer.heads {
                if head.rows() != s || head.cols() != s {
                    return Err(Error::Analytics(format!(
                        "trace matrix is {}×{}, expected {}×{}",
                        head.rows(),
                        head.cols(),
                        s,
                        s
                    )));
                }
                for r in 0..s {
                    let row = head.row(r);
                    let front: f64 = row[..vs].iter().map(|&v| v as f64).sum();
                    let back: f64 = row[vs..].iter().map(|&v| v as f64).sum();
                    if r >= vs {
                        // Verbal-query row: sink/decomposition statistics.
                        let first = row[vs] as f64;
                        self.first_sum[l] += first;
                        self.hub_sum[l] += front;
                        self.other_sum[l] += back - first;
                    }
                    if self.kind == GraphKind::Arach {
                        let quad = &mut self.quad_sums[l];
                        if r < vs {
                            quad[0] += front; // C→C
                            quad[1] += back; // C→X
                        } else {
                            quad[2] += front; // X→C
                            quad[3] += back; // X→X
                        }
                    }
                }
                let sums = &mut self.verbal_mean_sum[l];
                for r in 0..t {
                    let row = &head.row(vs + r)[vs..];
                    for c in 0..t {
                        sums[r * t + c] += row[c] as f64;
                    }
                }
            }
            if l == 0 {
                let heads = layer.heads.len() as f64;
                self.verbal_terms += heads * t as f64;
                self.head_samples += heads;
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Adds another partial reduction (same kind/shape). Sum order is
    /// self-then-other, so a fixed merge order is deterministic.
    pub fn merge(&mut self, other: &TraceStats) -> Result<()> {
        if other.kind != self.kind || other.t != self.t || other.n_layer != self.n_layer {
            return Err(Error::Analytics("merging incompatible trace stats".into()));
        }
        self.samples += other.samples;
        self.verbal_terms += other.verbal_terms;
        self.head_samples += other.head_samples;
        for l in 0..self.n_layer {
            self.first_sum[l] += other.first_sum[l];
            self.hub_sum[l] += other.hub_sum[l];
            self.other_sum[l] += other.other_sum[l];
            for q in 0..4 {
                self.quad_sums[l][q] += other.quad_sums[l][q];
            }
            for (a, b) in self.verbal_mean_sum[l].iter_mut().zip(&other.verbal_mean_sum[l]) {
                *a += b;
            }
        }
        Ok(())
    }

    fn require_samples(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Analytics("no traces accumulated".into()));
        }
        Ok(())
    }

    /// Layerwise sink profile. `l_star` is set only for baseline stats.
    pub fn sink_profile(&self) -> Result<SinkProfile> {
        self.require_samples()?;
        let scores: Vec<f64> = self.first_sum.iter().map(|s| s / self.verbal_terms).collect();
        let l_star = match self.kind {
            GraphKind::Baseline => {
                let mut best = 0;
                for (l, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = l;
                    }
                }
                Some(best)
            }
            GraphKind::Arach => None,
        };
        Ok(SinkProfile { scores, l_star })
    }

    /// Per-layer decomposition of verbal-query mass. Its `first_verbal`
    /// series is the sink profile computed from the same sums, exactly.
    pub fn decomposition(&self) -> Result<Vec<MassFractions>> {
        self.require_samples()?;
        Ok((0..self.n_layer)
            .map(|l| MassFractions {
                first_verbal: self.first_sum[l] / self.verbal_terms,
                hub: self.hub_sum[l] / self.verbal_terms,
                other_verbal: self.other_sum[l] / self.verbal_terms,
            })
            .collect())
    }

    /// Mean per-row quadrant shares at one layer. Undefined for baseline.
    pub fn quadrants(&self, layer: usize) -> Result<QuadrantShares> {
        self.require_samples()?;
        if self.kind == GraphKind::Baseline {
            return Err(Error::Analytics("quadrants are undefined for the baseline graph".into()));
        }
        if layer >= self.n_layer {
            return Err(Error::Analytics(format!("layer {} out of 0..{}", layer, self.n_layer)));
        }
        // 2t rows per (sample, head): each row contributes mass 1 split
        // across its two quadrants.
        let rows = self.head_samples * 2.0 * self.t as f64;
        let q = &self.quad_sums[layer];
        Ok(QuadrantShares {
            hub_to_hub: q[0] / rows,
            hub_to_verbal: q[1] / rows,
            verbal_to_hub: q[2] / rows,
            verbal_to_verbal: q[3] / rows,
        })
    }

    /// Mean verbal→verbal attention at `layer`, restricted to the first `k`
    /// and last `k` verbal positions.
    pub fn heatmap(&self, layer: usize, k: usize) -> Result<Heatmap> {
        self.require_samples()?;
        if layer >= self.n_layer {
            return Err(Error::Analytics(format!("layer {} out of 0..{}", layer, self.n_layer)));
        }
        if k == 0 || k > self.t {
            return Err(Error::Analytics(format!("K={} outside 1..={}", k, self.t)));
        }
        let t = self.t;
        let (indices, seam) = if 2 * k >= t {
            ((0..t).collect::<Vec<_>>(), None)
        } else {
            let mut idx: Vec<usize> = (0..k).collect();
            idx.extend(t - k..t);
            (idx, Some(k))
        };
        let size = indices.len();
        let sums = &self.verbal_mean_sum[layer];
        let mut values = Vec::with_capacity(size * size);
        for &r in &indices {
            for &c in &indices {
                values.push(sums[r * t + c] / self.head_samples);
            }
        }
        Ok(Heatmap {
            values,
            size,
            indices,
            seam,
        })
    }
}

/// Layerwise sink score over a set of same-kind traces (see [`TraceStats`]).
pub fn sink_score(traces: &[AttentionTrace]) -> Result<SinkProfile> {
    TraceStats::from_traces(traces)?.sink_profile()
}

/// Per-layer (first-verbal, hub, other-verbal) mass fractions.
pub fn mass_decomposition(traces: &[AttentionTrace]) -> Result<Vec<MassFractions>> {
    TraceStats::from_traces(traces)?.decomposition()
}

/// Quadrant shares of one hub-graph trace at one layer.
pub fn quadrant_allocation(trace: &AttentionTrace, layer: usize) -> Result<QuadrantShares> {
    TraceStats::from_traces(std::slice::from_ref(trace))?.quadrants(layer)
}

/// First-K/last-K verbal attention means at one layer.
pub fn heatmap_export(traces: &[AttentionTrace], layer: usize, k: usize) -> Result<Heatmap> {
    TraceStats::from_traces(traces)?.heatmap(layer, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_causal_mask, build_mask};
    use crate::kernels::is_permitted;

    /// Trace with uniform attention over each row's permitted set.
    fn uniform_trace(kind: GraphKind, t: usize, n_layer: usize, n_head: usize) -> AttentionTrace {
        let mask = match kind {
            GraphKind::Baseline => build_causal_mask(t).unwrap(),
            GraphKind::Arach => build_mask(t).unwrap(),
        };
        trace_from_mask(kind, t, n_layer, n_head, &mask)
    }

    fn trace_from_mask(kind: GraphKind, t: usize, n_layer: usize, n_head: usize, mask: &Matrix2D) -> AttentionTrace {
        let s = mask.rows();
        let mut m = Matrix2D::zeros(s, s);
        for r in 0..s {
            let permitted: Vec<usize> = (0..s).filter(|&c| is_permitted(mask.at(r, c))).collect();
            for &c in &permitted {
                m.set(r, c, 1.0 / permitted.len() as f32);
            }
        }
        AttentionTrace {
            kind,
            t,
            layers: (0..n_layer)
                .map(|_| LayerTrace {
                    heads: vec![m.clone(); n_head],
                })
                .collect(),
        }
    }

    /// Trace where every verbal row puts all mass on the first verbal column.
    fn all_on_first(kind: GraphKind, t: usize) -> AttentionTrace {
        let (s, vs) = match kind {
            GraphKind::Baseline => (t, 0),
            GraphKind::Arach => (2 * t, t),
        };
        let mut m = Matrix2D::zeros(s, s);
        for r in 0..s {
            if r >= vs {
                m.set(r, vs, 1.0);
            } else {
                m.set(r, r, 1.0); // hub rows sit on their own diagonal
            }
        }
        AttentionTrace {
            kind,
            t,
            layers: vec![
                LayerTrace {
                    heads: vec![m.clone(), m.clone()],
                };
                3
            ],
        }
    }

    #[test]
    fn sink_score_is_one_when_all_mass_sits_on_first_token() {
        for kind in [GraphKind::Baseline, GraphKind::Arach] {
            let profile = sink_score(&[all_on_first(kind, 4)]).unwrap();
            for s in &profile.scores {
                assert_eq!(*s, 1.0);
            }
        }
    }

    #[test]
    fn sink_score_uniform_t2_matches_hand_enumeration() {
        // Hub graph, T=2, uniform rows: verbal row 0 has 2 permitted keys
        // (mass 1/2 on first verbal), verbal row 1 has 3 (mass 1/3).
        // Trace entries are f32, so hand rationals hold to single precision.
        let profile = sink_score(&[uniform_trace(GraphKind::Arach, 2, 2, 2)]).unwrap();
        for s in &profile.scores {
            assert!((s - (0.5 + 1.0 / 3.0) / 2.0).abs() < 1e-6, "actual {s}");
        }
        assert_eq!(profile.l_star, None, "hub-graph sets don't define L*");
        // Baseline, T=2: rows have 1 and 2 permitted keys → mean 3/4.
        let profile = sink_score(&[uniform_trace(GraphKind::Baseline, 2, 2, 2)]).unwrap();
        for s in &profile.scores {
            assert!((s - 0.75).abs() < 1e-6);
        }
    }

    #[test]
    fn l_star_breaks_ties_toward_the_lowest_layer() {
        let trace = uniform_trace(GraphKind::Baseline, 3, 4, 2);
        let profile = sink_score(&[trace]).unwrap();
        assert_eq!(profile.l_star, Some(0), "all layers equal → lowest wins");

        // Boost layer 2's sink mass and check the argmax moves.
        let mut boosted = uniform_trace(GraphKind::Baseline, 3, 4, 2);
        for head in &mut boosted.layers[2].heads {
            for r in 1..3 {
                let spread: f32 = head.row(r)[1..].iter().sum();
                for c in 1..3 {
                    head.set(r, c, 0.0);
                }
                head.set(r, 0, head.at(r, 0) + spread);
            }
        }
        let profile = sink_score(&[boosted]).unwrap();
        assert_eq!(profile.l_star, Some(2));
    }

    #[test]
    fn decomposition_baseline_hub_fraction_is_exactly_zero() {
        let fractions = mass_decomposition(&[uniform_trace(GraphKind::Baseline, 4, 3, 2)]).unwrap();
        for f in &fractions {
            assert_eq!(f.hub, 0.0);
            assert!((f.first_verbal + f.other_verbal - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn decomposition_fractions_partition_unity() {
        for kind in [GraphKind::Baseline, GraphKind::Arach] {
            let fractions = mass_decomposition(&[uniform_trace(kind, 5, 2, 3)]).unwrap();
            for f in &fractions {
                assert!((f.first_verbal + f.hub + f.other_verbal - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sink_profile_equals_decomposition_first_series_exactly() {
        let traces = vec![uniform_trace(GraphKind::Arach, 3, 3, 2), all_on_first(GraphKind::Arach, 3)];
        let stats = TraceStats::from_traces(&traces).unwrap();
        let profile = stats.sink_profile().unwrap();
        let decomp = stats.decomposition().unwrap();
        for (s, d) in profile.scores.iter().zip(&decomp) {
            assert_eq!(*s, d.first_verbal, "same quantity computed two ways must agree exactly");
        }
    }

    #[test]
    fn quadrants_uniform_t2_match_closed_form() {
        // Hand enumeration (uniform over permitted sets, T=2):
        // hub rows contribute (1/2 + 1/3) to C→C and (1/2 + 2/3) to C→X;
        // verbal rows the same to X→C / X→X; 4 rows total.
        let trace = uniform_trace(GraphKind::Arach, 2, 2, 2);
        let q = quadrant_allocation(&trace, 1).unwrap();
        assert!((q.hub_to_hub - 5.0 / 24.0).abs() < 1e-6);
        assert!((q.hub_to_verbal - 7.0 / 24.0).abs() < 1e-6);
        assert!((q.verbal_to_hub - 5.0 / 24.0).abs() < 1e-6);
        assert!((q.verbal_to_verbal - 7.0 / 24.0).abs() < 1e-6);
        let sum: f64 = q.as_array().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadrants_with_hub_diagonal_hard_masked_zero_the_hub_columns() {
        // Remove the hub-diagonal entries from the mask: no row can reach a
        // hub column, so C→C and X→C are exactly 0.
        let mut mask = build_mask(3).unwrap();
        for i in 0..3 {
            mask.set(i, i, crate::kernels::MASK_BLOCKED);
            mask.set(3 + i, i, crate::kernels::MASK_BLOCKED);
        }
        let trace = trace_from_mask(GraphKind::Arach, 3, 2, 2, &mask);
        let q = quadrant_allocation(&trace, 0).unwrap();
        assert_eq!(q.hub_to_hub, 0.0);
        assert_eq!(q.verbal_to_hub, 0.0);
        assert!((q.hub_to_verbal + q.verbal_to_verbal - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadrants_reject_baseline_traces() {
        let trace = uniform_trace(GraphKind::Baseline, 2, 2, 2);
        assert!(quadrant_allocation(&trace, 0).is_err());
    }

    #[test]
    fn heatmap_full_when_k_equals_t() {
        let trace = uniform_trace(GraphKind::Arach, 4, 2, 2);
        let hm = heatmap_export(&[trace], 0, 4).unwrap();
        assert_eq!(hm.size, 4);
        assert_eq!(hm.indices, vec![0, 1, 2, 3]);
        assert_eq!(hm.seam, None);
        // Uniform rows: verbal row r has r+2 permitted keys (own hub + r+1
        // verbal), so verbal→verbal entries are 1/(r+2) for c ≤ r.
        for r in 0..4 {
            for c in 0..4 {
                let want = if c <= r { 1.0 / (r as f64 + 2.0) } else { 0.0 };
                assert!((hm.at(r, c) - want).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn heatmap_selects_first_and_last_blocks_with_seam() {
        let trace = uniform_trace(GraphKind::Baseline, 6, 1, 1);
        let hm = heatmap_export(&[trace], 0, 2).unwrap();
        assert_eq!(hm.size, 4);
        assert_eq!(hm.indices, vec![0, 1, 4, 5]);
        assert_eq!(hm.seam, Some(2));
        // Row for verbal position 4 (heatmap row 2): uniform over 5 keys.
        assert!((hm.at(2, 0) - 0.2).abs() < 1e-7);
        assert!((hm.at(2, 3) - 0.0).abs() < 1e-7, "future column stays masked");
        for v in &hm.values {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn heatmap_rejects_oversized_k() {
        let trace = uniform_trace(GraphKind::Baseline, 3, 1, 1);
        assert!(heatmap_export(&[trace], 0, 4).is_err());
    }

    #[test]
    fn mixed_or_empty_trace_sets_are_rejected() {
        assert!(sink_score(&[]).is_err());
        let a = uniform_trace(GraphKind::Baseline, 2, 2, 2);
        let b = uniform_trace(GraphKind::Arach, 2, 2, 2);
        assert!(mass_decomposition(&[a, b]).is_err());
    }

    #[test]
    fn merge_equals_sequential_accumulation() {
        let t1 = uniform_trace(GraphKind::Arach, 3, 2, 2);
        let t2 = all_on_first(GraphKind::Arach, 3);
        let t2 = AttentionTrace {
            layers: t2.layers.into_iter().take(2).collect(),
            ..t2
        };
        let mut sequential = TraceStats::new(GraphKind::Arach, 3, 2);
        sequential.add(&t1).unwrap();
        sequential.add(&t2).unwrap();

        let mut left = TraceStats::new(GraphKind::Arach, 3, 2);
        left.add(&t1).unwrap();
        let mut right = TraceStats::new(GraphKind::Arach, 3, 2);
        right.add(&t2).unwrap();
        left.merge(&right).unwrap();

        assert_eq!(sequential.samples(), left.samples());
        let (a, b) = (sequential.sink_profile().unwrap(), left.sink_profile().unwrap());
        assert_eq!(a.scores, b.scores, "merge must reproduce sequential sums bitwise");
        let (qa, qb) = (sequential.quadrants(1).unwrap(), left.quadrants(1).unwrap());
        assert_eq!(qa.as_array(), qb.as_array());
    }
}
