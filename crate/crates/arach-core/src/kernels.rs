//! Dense numeric primitives for the transformer forward pass.
//!
//! Everything operates on plain row-major `f32` buffers. Weights and
//! activations stay in `f32`; reductions that feed a normalization (softmax
//! sums, layer-norm statistics) accumulate in `f64` so results don't drift
//! with row length. Matrix products go through the blocked SIMD kernels in
//! `matrixmultiply`, which are single-threaded and bit-deterministic for
//! fixed shapes on a given machine.

use crate::error::{Error, Result};

/// Additive-mask sentinel for a blocked attention entry.
///
/// Finite on purpose: a true `-inf` would poison `exp` chains with NaN when a
/// row mixes blocked and permitted entries, while `-1e9` underflows to exactly
/// zero weight after the max-shift.
pub const MASK_BLOCKED: f32 = -1.0e9;

/// Threshold separating permitted from blocked entries in an additive mask.
///
/// Permitted entries sit near zero (a raw score plus at most a small offset);
/// blocked entries sit near [`MASK_BLOCKED`]. Anything above this threshold is
/// treated as permitted, so the permitted set is recoverable from the additive
/// matrix alone.
pub const MASK_PERMIT_THRESHOLD: f32 = -5.0e8;

/// True when an additive-mask entry (or mask+score sum) marks a permitted key.
#[inline]
pub fn is_permitted(entry: f32) -> bool {
    entry > MASK_PERMIT_THRESHOLD
}

/// Row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2D {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix2D {
    /// All-zeros matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Wraps an existing row-major buffer; the length must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                detail: format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        Ok(Matrix2D { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The underlying row-major buffer.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Row `r` as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    /// Copy of rows `r0..r1` as a new matrix.
    pub fn row_slice(&self, r0: usize, r1: usize) -> Result<Matrix2D> {
        if r0 > r1 || r1 > self.rows {
            return Err(Error::Shape {
                op: "row_slice",
                detail: format!("rows {}..{} out of 0..{}", r0, r1, self.rows),
            });
        }
        Ok(Matrix2D {
            rows: r1 - r0,
            cols: self.cols,
            data: self.data[r0 * self.cols..r1 * self.cols].to_vec(),
        })
    }

    /// Transposed copy. Used by tests and small one-off reshapes, not the hot
    /// path (the gemm wrappers take transposed views without materializing).
    pub fn transposed(&self) -> Matrix2D {
        let mut out = Matrix2D::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn shape_err(op: &'static str, a: &Matrix2D, b: &Matrix2D) -> Error {
    Error::Shape {
        op,
        detail: format!("{}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols),
    }
}

/// `a @ b` for row-major operands of shapes `[m,k]` and `[k,n]`.
pub fn matmul(a: &Matrix2D, b: &Matrix2D) -> Result<Matrix2D> {
    let mut out = Matrix2D::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut out)?;
    Ok(out)
}

/// `out = a @ b`, reusing an existing output buffer.
pub fn matmul_into(a: &Matrix2D, b: &Matrix2D, out: &mut Matrix2D) -> Result<()> {
    if a.cols != b.rows {
        return Err(shape_err("matmul", a, b));
    }
    if out.rows != a.rows || out.cols != b.cols {
        return Err(shape_err("matmul(out)", a, out));
    }
    // SAFETY: shapes were just validated; strides describe dense row-major
    // layouts entirely inside the three buffers.
    unsafe {
        matrixmultiply::sgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            0.0,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
    Ok(())
}

/// `alpha * (a @ bᵀ)` for row-major operands of shapes `[m,k]` and `[n,k]`.
///
/// The transpose is taken as a strided view, so `b` is never materialized
/// transposed; this is the shape used by attention scores (`Q Kᵀ`) and the
/// tied LM head (`H Eᵀ`).
pub fn matmul_nt_scaled(a: &Matrix2D, b: &Matrix2D, alpha: f32) -> Result<Matrix2D> {
    let mut out = Matrix2D::zeros(a.rows, b.rows);
    matmul_nt_scaled_into(a, b, alpha, &mut out)?;
    Ok(out)
}

/// `a @ bᵀ` (unscaled convenience form).
pub fn matmul_nt(a: &Matrix2D, b: &Matrix2D) -> Result<Matrix2D> {
    matmul_nt_scaled(a, b, 1.0)
}

/// `out = alpha * (a @ bᵀ)`, reusing an existing output buffer.
pub fn matmul_nt_scaled_into(a: &Matrix2D, b: &Matrix2D, alpha: f32, out: &mut Matrix2D) -> Result<()> {
    if a.cols != b.cols {
        return Err(shape_err("matmul_nt", a, b));
    }
    if out.rows != a.rows || out.cols != b.rows {
        return Err(shape_err("matmul_nt(out)", a, out));
    }
    // SAFETY: as in `matmul_into`; `b` is addressed column-major to express
    // the transpose of a dense row-major buffer.
    unsafe {
        matrixmultiply::sgemm(
            a.rows,
            a.cols,
            b.rows,
            alpha,
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            1,
            b.cols as isize,
            0.0,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
    Ok(())
}

/// Adds `bias` (length = cols) to every row.
pub fn add_bias_rows(m: &mut Matrix2D, bias: &[f32]) -> Result<()> {
    if bias.len() != m.cols {
        return Err(Error::Shape {
            op: "add_bias_rows",
            detail: format!("bias len {} vs {} cols", bias.len(), m.cols),
        });
    }
    for row in m.data.chunks_exact_mut(m.cols) {
        for (x, b) in row.iter_mut().zip(bias) {
            *x += b;
        }
    }
    Ok(())
}

/// Elementwise `dst += src`.
pub fn add_assign(dst: &mut Matrix2D, src: &Matrix2D) -> Result<()> {
    if dst.rows != src.rows || dst.cols != src.cols {
        return Err(shape_err("add_assign", dst, src));
    }
    for (d, s) in dst.data.iter_mut().zip(&src.data) {
        *d += s;
    }
    Ok(())
}

/// Row-wise masked softmax of `scores + mask`.
///
/// `mask` is an additive matrix whose blocked entries are [`MASK_BLOCKED`];
/// permitted entries may carry a small finite offset. Blocked entries come out
/// exactly 0; permitted entries are normalized over the row's permitted set.
pub fn masked_softmax_rows(scores: &Matrix2D, mask: &Matrix2D) -> Result<Matrix2D> {
    if scores.rows != mask.rows || scores.cols != mask.cols {
        return Err(shape_err("masked_softmax_rows", scores, mask));
    }
    let mut combined = scores.clone();
    for (c, m) in combined.data.iter_mut().zip(&mask.data) {
        *c += m;
    }
    masked_softmax_rows_in_place(&mut combined)?;
    Ok(combined)
}

/// In-place row softmax over entries above [`MASK_PERMIT_THRESHOLD`].
///
/// Returns the per-row log-normalizer `ln Σ_permitted exp(zⱼ)` (a log-sum-exp
/// in `f64`), which lets callers recover unnormalized weights as
/// `weight * exp(log_normalizer)` — the quantity the hub offset scales by a
/// clean `e^b` factor.
///
/// Errors if any row has an empty permitted set (nothing to normalize) or
/// contains a non-finite entry (a NaN compares as neither permitted nor
/// blocked, so it must not be silently zeroed).
pub fn masked_softmax_rows_in_place(m: &mut Matrix2D) -> Result<Vec<f64>> {
    let cols = m.cols;
    let mut log_normalizers = Vec::with_capacity(m.rows);
    for (r, row) in m.data.chunks_exact_mut(cols).enumerate() {
        let mut max = f32::NEG_INFINITY;
        for &v in row.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("attention row {}", r)));
            }
            if is_permitted(v) && v > max {
                max = v;
            }
        }
        if max == f32::NEG_INFINITY {
            return Err(Error::DegenerateRow { row: r });
        }
        let mut sum = 0.0f64;
        for v in row.iter_mut() {
            if is_permitted(*v) {
                let e = (*v - max).exp();
                sum += e as f64;
                *v = e;
            } else {
                *v = 0.0;
            }
        }
        let inv = (1.0 / sum) as f32;
        for v in row.iter_mut() {
            *v *= inv;
        }
        log_normalizers.push(max as f64 + sum.ln());
    }
    Ok(log_normalizers)
}

/// Layer normalization of one vector with affine parameters.
///
/// Uses the population (1/N) variance; mean and variance accumulate in `f64`.
pub fn layer_norm(x: &[f32], gamma: &[f32], beta: &[f32], eps: f32) -> Result<Vec<f32>> {
    if x.len() != gamma.len() || x.len() != beta.len() {
        return Err(Error::Shape {
            op: "layer_norm",
            detail: format!("x len {}, gamma len {}, beta len {}", x.len(), gamma.len(), beta.len()),
        });
    }
    if x.is_empty() {
        return Err(Error::Shape {
            op: "layer_norm",
            detail: "empty input".into(),
        });
    }
    let mut out = vec![0.0f32; x.len()];
    layer_norm_slice(x, gamma, beta, eps, &mut out);
    Ok(out)
}

/// Applies [`layer_norm`] to every row of `src`, writing into `dst`.
pub fn layer_norm_rows_into(src: &Matrix2D, gamma: &[f32], beta: &[f32], eps: f32, dst: &mut Matrix2D) -> Result<()> {
    if src.rows != dst.rows || src.cols != dst.cols {
        return Err(shape_err("layer_norm_rows", src, dst));
    }
    if gamma.len() != src.cols || beta.len() != src.cols {
        return Err(Error::Shape {
            op: "layer_norm_rows",
            detail: format!("params len {}/{} vs {} cols", gamma.len(), beta.len(), src.cols),
        });
    }
    for (srow, drow) in src.data.chunks_exact(src.cols).zip(dst.data.chunks_exact_mut(src.cols)) {
        layer_norm_slice(srow, gamma, beta, eps, drow);
    }
    Ok(())
}

fn layer_norm_slice(x: &[f32], gamma: &[f32], beta: &[f32], eps: f32, out: &mut [f32]) {
    let n = x.len() as f64;
    let mut sum = 0.0f64;
    for &v in x {
        sum += v as f64;
    }
    let mean = sum / n;
    let mut var = 0.0f64;
    for &v in x {
        let d = v as f64 - mean;
        var += d * d;
    }
    var /= n;
    let inv = 1.0 / (var + eps as f64).sqrt();
    for i in 0..x.len() {
        let norm = ((x[i] as f64 - mean) * inv) as f32;
        out[i] = norm * gamma[i] + beta[i];
    }
}

/// Gaussian error linear unit, tanh approximation:
/// `0.5 x (1 + tanh(√(2/π) (x + 0.044715 x³)))`.
#[inline]
pub fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_56;
    const CUBIC: f32 = 0.044_715;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + CUBIC * x * x * x)).tanh())
}

/// Applies [`gelu`] to every entry.
pub fn gelu_in_place(m: &mut Matrix2D) {
    for v in m.data.iter_mut() {
        *v = gelu(*v);
    }
}
