//! Shared test fixtures: a deterministic miniature model small enough that
//! oracles can be hand-computed but structurally identical to the real one.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::graph::{AttentionGraphSpec, HubInitMode};
use crate::kernels::Matrix2D;
use crate::model::{LayerWeights, ModelConfig, ModelWeights};

pub(crate) fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 8,
        d_head: 4,
        vocab_size: 11,
        max_positions: 16,
        layer_norm_eps: 1e-5,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix2D {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix2D::from_vec(rows, cols, data).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f32) -> Vec<f32> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Randomly initialized miniature model (see [`tiny_config`]), deterministic
/// in `seed`.
pub(crate) fn tiny_weights(seed: u64) -> ModelWeights {
    let config = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let layers = (0..config.n_layer)
        .map(|_| LayerWeights {
            ln1_gamma: random_vec(&mut rng, d, 0.5).iter().map(|v| 1.0 + v).collect(),
            ln1_beta: random_vec(&mut rng, d, 0.1),
            qkv_w: random_matrix(&mut rng, d, 3 * d, 0.4),
            qkv_b: random_vec(&mut rng, 3 * d, 0.1),
            proj_w: random_matrix(&mut rng, d, d, 0.4),
            proj_b: random_vec(&mut rng, d, 0.1),
            ln2_gamma: random_vec(&mut rng, d, 0.5).iter().map(|v| 1.0 + v).collect(),
            ln2_beta: random_vec(&mut rng, d, 0.1),
            fc_w: random_matrix(&mut rng, d, 4 * d, 0.3),
            fc_b: random_vec(&mut rng, 4 * d, 0.1),
            fc_proj_w: random_matrix(&mut rng, 4 * d, d, 0.3),
            fc_proj_b: random_vec(&mut rng, d, 0.1),
        })
        .collect();
    ModelWeights {
        wte: random_matrix(&mut rng, config.vocab_size, d, 0.8),
        wpe: random_matrix(&mut rng, config.max_positions, d, 0.3),
        lnf_gamma: random_vec(&mut rng, d, 0.5).iter().map(|v| 1.0 + v).collect(),
        lnf_beta: random_vec(&mut rng, d, 0.1),
        layers,
        config,
    }
}

/// All-zero model: every forward pass yields identical (uniform) logits.
pub(crate) fn zero_weights() -> ModelWeights {
    let config = tiny_config();
    let d = config.d_model;
    let layers = (0..config.n_layer)
        .map(|_| LayerWeights {
            ln1_gamma: vec![0.0; d],
            ln1_beta: vec![0.0; d],
            qkv_w: Matrix2D::zeros(d, 3 * d),
            qkv_b: vec![0.0; 3 * d],
            proj_w: Matrix2D::zeros(d, d),
            proj_b: vec![0.0; d],
            ln2_gamma: vec![0.0; d],
            ln2_beta: vec![0.0; d],
            fc_w: Matrix2D::zeros(d, 4 * d),
            fc_b: vec![0.0; 4 * d],
            fc_proj_w: Matrix2D::zeros(4 * d, d),
            fc_proj_b: vec![0.0; d],
        })
        .collect();
    ModelWeights {
        wte: Matrix2D::zeros(config.vocab_size, d),
        wpe: Matrix2D::zeros(config.max_positions, d),
        lnf_gamma: vec![0.0; d],
        lnf_beta: vec![0.0; d],
        layers,
        config,
    }
}

/// Hub-graph spec for the miniature model, already armed with its embedding.
pub(crate) fn tiny_arach_spec(weights: &ModelWeights, t: usize, b: f32) -> AttentionGraphSpec {
    let mut spec = AttentionGraphSpec::arach(t, b, HubInitMode::Gaussian, 1234);
    spec.arm(&weights.wte);
    spec
}

/// Like [`tiny_config`] but with a byte-sized vocabulary, so text encoded by
/// [`byte_tokenizer`] stays in range.
pub(crate) fn wide_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 256,
        max_positions: 64,
        ..tiny_config()
    }
}

/// Randomly initialized model over [`wide_config`], deterministic in `seed`.
pub(crate) fn wide_weights(seed: u64) -> ModelWeights {
    let mut weights = tiny_weights(seed);
    let config = wide_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    weights.wte = random_matrix(&mut rng, config.vocab_size, config.d_model, 0.8);
    weights.wpe = random_matrix(&mut rng, config.max_positions, config.d_model, 0.3);
    weights.config = config;
    weights
}

/// All-zero model over [`wide_config`]: logits are uniform everywhere.
pub(crate) fn zero_wide_weights() -> ModelWeights {
    let mut weights = zero_weights();
    let config = wide_config();
    weights.wte = Matrix2D::zeros(config.vocab_size, config.d_model);
    weights.wpe = Matrix2D::zeros(config.max_positions, config.d_model);
    weights.config = config;
    weights
}

/// A merge-free tokenizer whose vocabulary is exactly the 256 byte tokens:
/// every character of ASCII text encodes to one id < 256, which keeps
/// encoded lengths predictable in tests.
pub(crate) fn byte_tokenizer() -> crate::tokenizer::Tokenizer {
    use std::io::Write as _;
    let table = crate::tokenizer::bytes_to_unicode();
    let entries: Vec<String> = table
        .iter()
        .enumerate()
        .map(|(i, ch)| format!("{}: {i}", serde_json::to_string(&ch.to_string()).unwrap()))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let vocab_path = dir.path().join("vocab.json");
    let merges_path = dir.path().join("merges.txt");
    std::fs::write(&vocab_path, format!("{{{}}}", entries.join(", "))).unwrap();
    let mut merges = std::fs::File::create(&merges_path).unwrap();
    writeln!(merges, "#version: 0.2").unwrap();
    crate::tokenizer::Tokenizer::load(&vocab_path, &merges_path).unwrap()
}
