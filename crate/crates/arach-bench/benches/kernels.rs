//! Microbenchmarks for the hot kernels plus one end-to-end forward at each
//! graph kind, sized so a full `cargo bench` run stays in the minutes range.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use arach_bench::bench_weights;
use arach_core::graph::{build_mask, build_offset, AttentionGraphSpec, HubInitMode};
use arach_core::kernels::{
    layer_norm_rows_into, masked_softmax_rows_in_place, matmul, Matrix2D, MASK_BLOCKED,
};
use arach_core::model::forward;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix2D {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Matrix2D::from_vec(rows, cols, data).unwrap()
}

/// Dense GEMM at the attention-projection shape (sequence × model dims).
fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_matrix(&mut rng, 256, 768);
    let b = random_matrix(&mut rng, 768, 768);
    c.bench_function("matmul 256x768 * 768x768", |bench| {
        bench.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
    });
}

/// Causally masked softmax over a full attention-score matrix.
fn bench_masked_softmax(c: &mut Criterion) {
    let n = 1024;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut scores = random_matrix(&mut rng, n, n);
    for r in 0..n {
        for col in r + 1..n {
            scores.set(r, col, MASK_BLOCKED);
        }
    }
    c.bench_function("masked softmax 1024x1024 causal", |bench| {
        bench.iter_batched(
            || scores.clone(),
            |mut m| masked_softmax_rows_in_place(&mut m).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

/// Row-wise layer normalization at the residual-stream shape.
fn bench_layer_norm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let src = random_matrix(&mut rng, 1024, 768);
    let gamma = vec![1.0f32; 768];
    let beta = vec![0.0f32; 768];
    let mut dst = Matrix2D::zeros(1024, 768);
    c.bench_function("layer_norm 1024x768", |bench| {
        bench.iter(|| {
            layer_norm_rows_into(black_box(&src), &gamma, &beta, 1e-5, &mut dst).unwrap()
        })
    });
}

/// Hub-graph mask and offset construction (2T x 2T each).
fn bench_graph_build(c: &mut Criterion) {
    c.bench_function("build_mask T=512", |bench| {
        bench.iter(|| build_mask(black_box(512)).unwrap())
    });
    c.bench_function("build_offset T=512", |bench| {
        bench.iter(|| build_offset(black_box(512), -0.5).unwrap())
    });
}

/// Whole forward pass on a reduced model, baseline graph vs hub graph.
fn bench_forward(c: &mut Criterion) {
    let weights = bench_weights(7);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = 128;
    let ids: Vec<u32> =
        (0..t).map(|_| rng.random_range(0..weights.config.vocab_size as u32)).collect();

    let baseline = AttentionGraphSpec::baseline(t);
    c.bench_function("forward T=128 baseline", |bench| {
        bench.iter(|| forward(black_box(&weights), &baseline, black_box(&ids), false).unwrap())
    });

    let mut arach = AttentionGraphSpec::arach(t, -0.5, HubInitMode::Gaussian, 42);
    arach.arm(&weights.wte);
    c.bench_function("forward T=128 hub graph", |bench| {
        bench.iter(|| forward(black_box(&weights), &arach, black_box(&ids), false).unwrap())
    });
}

criterion_group!(
    benches,
    bench_matmul,
    bench_masked_softmax,
    bench_layer_norm,
    bench_graph_build,
    bench_forward
);
criterion_main!(benches);
