//! Synthetic model builders shared by the benchmarks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use arach_core::kernels::Matrix2D;
use arach_core::model::{LayerWeights, ModelConfig, ModelWeights};

/// A scaled-down transformer with the real model's structure: big enough
/// that kernel timings are meaningful, small enough to build in memory
/// instantly.
pub fn bench_config() -> ModelConfig {
    ModelConfig {
        n_layer: 2,
        n_head: 4,
        d_model: 128,
        d_head: 32,
        vocab_size: 512,
        max_positions: 1024,
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

/// Deterministic random weights over [`bench_config`].
pub fn bench_weights(seed: u64) -> ModelWeights {
    let config = bench_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let layers = (0..config.n_layer)
        .map(|_| LayerWeights {
            ln1_gamma: random_vec(&mut rng, d, 0.5).iter().map(|v| 1.0 + v).collect(),
            ln1_beta: random_vec(&mut rng, d, 0.1),
            qkv_w: random_matrix(&mut rng, d, 3 * d, 0.2),
            qkv_b: random_vec(&mut rng, 3 * d, 0.1),
            proj_w: random_matrix(&mut rng, d, d, 0.2),
            proj_b: random_vec(&mut rng, d, 0.1),
            ln2_gamma: random_vec(&mut rng, d, 0.5).iter().map(|v| 1.0 + v).collect(),
            ln2_beta: random_vec(&mut rng, d, 0.1),
            fc_w: random_matrix(&mut rng, d, 4 * d, 0.2),
            fc_b: random_vec(&mut rng, 4 * d, 0.1),
            fc_proj_w: random_matrix(&mut rng, 4 * d, d, 0.2),
            fc_proj_b: random_vec(&mut rng, d, 0.1),
        })
        .collect();
    ModelWeights {
        wte: random_matrix(&mut rng, config.vocab_size, d, 0.5),
        wpe: random_matrix(&mut rng, config.max_positions, d, 0.2),
        lnf_gamma: random_vec(&mut rng, d, 0.5).iter().map(|v| 1.0 + v).collect(),
        lnf_beta: random_vec(&mut rng, d, 0.1),
        layers,
        config,
    }
}
