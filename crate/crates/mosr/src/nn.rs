//! Differentiable building blocks with hand-written backward passes.
//!
//! Every `*_forward` is pure; gradient functions accumulate into a mirror
//! parameter struct (same type, zero-initialized) and return the gradient
//! with respect to the layer input. BatchNorm running statistics are
//! updated only through [`bn_update_running`], never inside a forward, so
//! forwards stay side-effect free for finite-difference probes.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Feat, Mat};

/// Whether batch statistics (training) or running statistics (inference)
/// drive normalization layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn randn_mat(rows: usize, cols: usize, std: f64, rng: &mut ChaCha20Rng) -> Mat {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
        .collect();
    Mat::from_vec(rows, cols, data)
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// Fully-connected layer, row-vector convention: y = x·W + b.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// in_dim × out_dim
    pub w: Mat,
    pub b: Vec<f64>,
}

impl LinearParams {
    /// He-scaled random init (std = √(2/fan_in)), zero bias.
    pub fn he(in_dim: usize, out_dim: usize, rng: &mut ChaCha20Rng) -> Self {
        LinearParams {
            w: randn_mat(in_dim, out_dim, (2.0 / in_dim as f64).sqrt(), rng),
            b: vec![0.0; out_dim],
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearParams {
            w: Mat::zeros(in_dim, out_dim),
            b: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols
    }
}

pub fn linear_forward(p: &LinearParams, x: &Mat) -> Mat {
    let mut y = x.matmul(&p.w);
    for r in 0..y.rows {
        for (v, b) in y.row_mut(r).iter_mut().zip(&p.b) {
            *v += b;
        }
    }
    y
}

/// Accumulates dW = xᵀ·dy and db = Σ_rows dy into `g`; returns dx = dy·Wᵀ.
pub fn linear_backward(p: &LinearParams, g: &mut LinearParams, x: &Mat, dy: &Mat) -> Mat {
    g.w.add_assign(&x.matmul_tn(dy));
    for r in 0..dy.rows {
        for (acc, d) in g.b.iter_mut().zip(dy.row(r)) {
            *acc += d;
        }
    }
    dy.matmul_nt(&p.w)
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu_inplace(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Gate `d` by the activation output: positions where y = 0 get no gradient.
pub fn relu_backward_inplace(d: &mut [f64], y: &[f64]) {
    for (dv, &yv) in d.iter_mut().zip(y) {
        if yv <= 0.0 {
            *dv = 0.0;
        }
    }
}

// ---------------------------------------------------------------------------
// Conv2d (im2col)
// ---------------------------------------------------------------------------

/// Static shape of one convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if ![1, 3, 5].contains(&self.kernel) {
            return Err(Error::Shape(format!("kernel {} not in {{1,3,5}}", self.kernel)));
        }
        if ![1, 2].contains(&self.stride) {
            return Err(Error::Shape(format!("stride {} not in {{1,2}}", self.stride)));
        }
        Ok(())
    }

    pub fn out_size(&self, input: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if padded < self.kernel || input == 0 {
            return Err(Error::Shape(format!(
                "spatial size {input} too small for kernel {} with padding {}",
                self.kernel, self.padding
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    pub spec: ConvSpec,
    /// (in_ch·k·k) × out_ch, rows in (channel, ky, kx) order.
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Conv2dParams {
    pub fn he(spec: ConvSpec, rng: &mut ChaCha20Rng) -> Self {
        let fan_in = spec.in_ch * spec.kernel * spec.kernel;
        Conv2dParams {
            spec,
            w: randn_mat(fan_in, spec.out_ch, (2.0 / fan_in as f64).sqrt(), rng),
            b: vec![0.0; spec.out_ch],
        }
    }

    pub fn zeros(spec: ConvSpec) -> Self {
        let fan_in = spec.in_ch * spec.kernel * spec.kernel;
        Conv2dParams {
            spec,
            w: Mat::zeros(fan_in, spec.out_ch),
            b: vec![0.0; spec.out_ch],
        }
    }
}

pub struct ConvCache {
    /// (n·oh·ow) × (in_ch·k·k) patch matrix.
    cols: Mat,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

fn im2col(x: &Feat, spec: &ConvSpec, oh: usize, ow: usize) -> Mat {
    use rayon::prelude::*;
    let k = spec.kernel;
    let patch = spec.in_ch * k * k;
    let mut cols = Mat::zeros(x.n * oh * ow, patch);
    // Samples fill disjoint row blocks; no cross-sample reduction, so the
    // parallel fill is bit-identical to the sequential one.
    cols.data
        .par_chunks_mut(oh * ow * patch)
        .enumerate()
        .for_each(|(b, block)| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = &mut block[(oy * ow + ox) * patch..(oy * ow + ox + 1) * patch];
                    let y0 = (oy * spec.stride) as isize - spec.padding as isize;
                    let x0 = (ox * spec.stride) as isize - spec.padding as isize;
                    for c in 0..spec.in_ch {
                        for ky in 0..k {
                            let yy = y0 + ky as isize;
                            if yy < 0 || yy >= x.h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let xx = x0 + kx as isize;
                                if xx < 0 || xx >= x.w as isize {
                                    continue;
                                }
                                row[(c * k + ky) * k + kx] =
                                    x.data[x.idx(b, c, yy as usize, xx as usize)];
                            }
                        }
                    }
                }
            }
        });
    cols
}

pub fn conv2d_forward(p: &Conv2dParams, x: &Feat) -> Result<(Feat, ConvCache)> {
    assert_eq!(x.c, p.spec.in_ch, "conv input channel mismatch");
    let oh = p.spec.out_size(x.h)?;
    let ow = p.spec.out_size(x.w)?;
    let cols = im2col(x, &p.spec, oh, ow);
    let flat = cols.matmul(&p.w); // (n·oh·ow) × out_ch

    let mut out = Feat::zeros(x.n, p.spec.out_ch, oh, ow);
    for b in 0..x.n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = flat.row((b * oh + oy) * ow + ox);
                for c in 0..p.spec.out_ch {
                    let oidx = ((b * p.spec.out_ch + c) * oh + oy) * ow + ox;
                    out.data[oidx] = row[c] + p.b[c];
                }
            }
        }
    }
    Ok((
        out,
        ConvCache {
            cols,
            in_h: x.h,
            in_w: x.w,
            out_h: oh,
            out_w: ow,
        },
    ))
}

pub fn conv2d_backward(
    p: &Conv2dParams,
    g: &mut Conv2dParams,
    cache: &ConvCache,
    d_out: &Feat,
) -> Feat {
    let (oh, ow) = (cache.out_h, cache.out_w);
    let n = d_out.n;
    // Re-pack dOut into the (n·oh·ow) × out_ch layout of the forward GEMM.
    let mut d_flat = Mat::zeros(n * oh * ow, p.spec.out_ch);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = d_flat.row_mut((b * oh + oy) * ow + ox);
                for c in 0..p.spec.out_ch {
                    row[c] = d_out.data[d_out.idx(b, c, oy, ox)];
                }
            }
        }
    }
    for r in 0..d_flat.rows {
        for (acc, d) in g.b.iter_mut().zip(d_flat.row(r)) {
            *acc += d;
        }
    }
    g.w.add_assign(&cache.cols.matmul_tn(&d_flat));

    // col2im scatter-add for the input gradient. Each sample owns a
    // disjoint slice of dx, so the per-sample parallel scatter is exact.
    use rayon::prelude::*;
    let d_cols = d_flat.matmul_nt(&p.w);
    let k = p.spec.kernel;
    let patch = p.spec.in_ch * k * k;
    let (in_h, in_w) = (cache.in_h, cache.in_w);
    let mut dx = Feat::zeros(n, p.spec.in_ch, in_h, in_w);
    dx.data
        .par_chunks_mut(p.spec.in_ch * in_h * in_w)
        .enumerate()
        .for_each(|(b, dx_sample)| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = d_cols.row((b * oh + oy) * ow + ox);
                    let y0 = (oy * p.spec.stride) as isize - p.spec.padding as isize;
                    let x0 = (ox * p.spec.stride) as isize - p.spec.padding as isize;
                    for c in 0..p.spec.in_ch {
                        for ky in 0..k {
                            let yy = y0 + ky as isize;
                            if yy < 0 || yy >= in_h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let xx = x0 + kx as isize;
                                if xx < 0 || xx >= in_w as isize {
                                    continue;
                                }
                                dx_sample[(c * in_h + yy as usize) * in_w + xx as usize] +=
                                    row[(c * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        });
    debug_assert_eq!(d_cols.cols, patch);
    dx
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2dParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2dParams {
    pub fn new(channels: usize) -> Self {
        BatchNorm2dParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn zeros(channels: usize) -> Self {
        BatchNorm2dParams {
            gamma: vec![0.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![0.0; channels],
            momentum: 0.0,
            eps: 0.0,
        }
    }
}

pub struct BnCache {
    xhat: Vec<f64>,
    invstd: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

pub fn bn_forward(p: &BatchNorm2dParams, x: &Feat, mode: Mode) -> (Feat, Option<BnCache>) {
    let per_ch = x.n * x.h * x.w;
    let plane = x.h * x.w;
    let mut out = Feat::zeros(x.n, x.c, x.h, x.w);
    match mode {
        Mode::Train => {
            let mut mean = vec![0.0; x.c];
            let mut var = vec![0.0; x.c];
            for c in 0..x.c {
                let mut sum = 0.0;
                for b in 0..x.n {
                    let base = (b * x.c + c) * plane;
                    sum += x.data[base..base + plane].iter().sum::<f64>();
                }
                mean[c] = sum / per_ch as f64;
                let mut sq = 0.0;
                for b in 0..x.n {
                    let base = (b * x.c + c) * plane;
                    for &v in &x.data[base..base + plane] {
                        let d = v - mean[c];
                        sq += d * d;
                    }
                }
                var[c] = sq / per_ch as f64;
            }
            let invstd: Vec<f64> = var.iter().map(|&v| 1.0 / (v + p.eps).sqrt()).collect();
            let mut xhat = vec![0.0; x.data.len()];
            for b in 0..x.n {
                for c in 0..x.c {
                    let base = (b * x.c + c) * plane;
                    for i in 0..plane {
                        let h = (x.data[base + i] - mean[c]) * invstd[c];
                        xhat[base + i] = h;
                        out.data[base + i] = p.gamma[c] * h + p.beta[c];
                    }
                }
            }
            (
                out,
                Some(BnCache {
                    xhat,
                    invstd,
                    batch_mean: mean,
                    batch_var: var,
                }),
            )
        }
        Mode::Eval => {
            for b in 0..x.n {
                for c in 0..x.c {
                    let inv = 1.0 / (p.running_var[c] + p.eps).sqrt();
                    let base = (b * x.c + c) * plane;
                    for i in 0..plane {
                        out.data[base + i] =
                            p.gamma[c] * (x.data[base + i] - p.running_mean[c]) * inv + p.beta[c];
                    }
                }
            }
            (out, None)
        }
    }
}

/// Fold the cached batch statistics into the running estimates. Called by
/// the trainer once per training forward, outside the pure forward path.
pub fn bn_update_running(p: &mut BatchNorm2dParams, cache: &BnCache) {
    for c in 0..p.running_mean.len() {
        p.running_mean[c] =
            (1.0 - p.momentum) * p.running_mean[c] + p.momentum * cache.batch_mean[c];
        p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * cache.batch_var[c];
    }
}

pub fn bn_backward(
    p: &BatchNorm2dParams,
    g: &mut BatchNorm2dParams,
    cache: &BnCache,
    dy: &Feat,
) -> Feat {
    let per_ch = (dy.n * dy.h * dy.w) as f64;
    let plane = dy.h * dy.w;
    let mut dx = Feat::zeros(dy.n, dy.c, dy.h, dy.w);
    for c in 0..dy.c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for b in 0..dy.n {
            let base = (b * dy.c + c) * plane;
            for i in 0..plane {
                let d = dy.data[base + i];
                sum_dy += d;
                sum_dy_xhat += d * cache.xhat[base + i];
            }
        }
        g.beta[c] += sum_dy;
        g.gamma[c] += sum_dy_xhat;
        let scale = p.gamma[c] * cache.invstd[c] / per_ch;
        for b in 0..dy.n {
            let base = (b * dy.c + c) * plane;
            for i in 0..plane {
                dx.data[base + i] = scale
                    * (per_ch * dy.data[base + i]
                        - sum_dy
                        - cache.xhat[base + i] * sum_dy_xhat);
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// LayerNorm (per row of a Mat)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl LayerNormParams {
    pub fn new(dim: usize) -> Self {
        LayerNormParams {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps: 1e-5,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNormParams {
            gamma: vec![0.0; dim],
            beta: vec![0.0; dim],
            eps: 0.0,
        }
    }
}

pub struct LnCache {
    xhat: Mat,
    invstd: Vec<f64>,
}

pub fn layernorm_forward(p: &LayerNormParams, x: &Mat) -> (Mat, LnCache) {
    let d = x.cols as f64;
    let mut out = Mat::zeros(x.rows, x.cols);
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut invstd = vec![0.0; x.rows];
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + p.eps).sqrt();
        invstd[r] = inv;
        let (h_row, o_row) = (xhat.row_mut(r), out.row_mut(r));
        for j in 0..row.len() {
            let h = (row[j] - mean) * inv;
            h_row[j] = h;
        }
        for j in 0..row.len() {
            o_row[j] = p.gamma[j] * xhat.data[r * x.cols + j] + p.beta[j];
        }
    }
    (out, LnCache { xhat, invstd })
}

pub fn layernorm_backward(
    p: &LayerNormParams,
    g: &mut LayerNormParams,
    cache: &LnCache,
    dy: &Mat,
) -> Mat {
    let d = dy.cols as f64;
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    for r in 0..dy.rows {
        let dy_row = dy.row(r);
        let xhat_row = cache.xhat.row(r);
        let mut sum_dh = 0.0;
        let mut sum_dh_xhat = 0.0;
        for j in 0..dy_row.len() {
            g.beta[j] += dy_row[j];
            g.gamma[j] += dy_row[j] * xhat_row[j];
            let dh = dy_row[j] * p.gamma[j];
            sum_dh += dh;
            sum_dh_xhat += dh * xhat_row[j];
        }
        let inv = cache.invstd[r];
        let dx_row = dx.row_mut(r);
        for j in 0..dy_row.len() {
            let dh = dy_row[j] * p.gamma[j];
            dx_row[j] = inv / d * (d * dh - sum_dh - xhat_row[j] * sum_dh_xhat);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    /// vocab × dim
    pub table: Mat,
}

impl EmbeddingParams {
    pub fn new(vocab: usize, dim: usize, rng: &mut ChaCha20Rng) -> Self {
        EmbeddingParams {
            table: randn_mat(vocab, dim, 0.02, rng),
        }
    }

    pub fn zeros(vocab: usize, dim: usize) -> Self {
        EmbeddingParams {
            table: Mat::zeros(vocab, dim),
        }
    }
}

pub fn embedding_forward(p: &EmbeddingParams, ids: &[u32]) -> Mat {
    let dim = p.table.cols;
    let mut out = Mat::zeros(ids.len(), dim);
    for (r, &id) in ids.iter().enumerate() {
        out.row_mut(r).copy_from_slice(p.table.row(id as usize));
    }
    out
}

pub fn embedding_backward(g: &mut EmbeddingParams, ids: &[u32], dy: &Mat) {
    for (r, &id) in ids.iter().enumerate() {
        for (acc, d) in g.table.row_mut(id as usize).iter_mut().zip(dy.row(r)) {
            *acc += d;
        }
    }
}

// ---------------------------------------------------------------------------
// Masked softmax
// ---------------------------------------------------------------------------

/// Row softmax over positions where `valid` is true; invalid positions get
/// exactly zero weight. A row with no valid position becomes all zeros.
pub fn softmax_masked_inplace(row: &mut [f64], valid: &[bool]) {
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if valid[j] && v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for (j, v) in row.iter_mut().enumerate() {
        if valid[j] {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// d(logits) for a softmax row given d(weights). Zero-weight (masked)
/// positions receive zero gradient automatically.
pub fn softmax_backward_row(weights: &[f64], d_weights: &[f64], d_logits: &mut [f64]) {
    let dot: f64 = weights.iter().zip(d_weights).map(|(w, d)| w * d).sum();
    for j in 0..weights.len() {
        d_logits[j] = weights[j] * (d_weights[j] - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn conv_output_shapes_follow_the_arithmetic() {
        let spec = ConvSpec {
            in_ch: 1,
            out_ch: 2,
            kernel: 5,
            stride: 2,
            padding: 2,
        };
        assert_eq!(spec.out_size(32).unwrap(), 16);
        assert_eq!(spec.out_size(25).unwrap(), 13);
        assert_eq!(spec.out_size(1).unwrap(), 1);
        let bad = ConvSpec {
            in_ch: 1,
            out_ch: 1,
            kernel: 5,
            stride: 1,
            padding: 0,
        };
        assert!(bad.out_size(3).is_err());
    }

    #[test]
    fn conv_identity_1x1_preserves_input() {
        let spec = ConvSpec {
            in_ch: 3,
            out_ch: 3,
            kernel: 1,
            stride: 1,
            padding: 0,
        };
        let mut p = Conv2dParams::zeros(spec);
        for c in 0..3 {
            p.w.data[c * 3 + c] = 1.0;
        }
        let x = Feat::from_vec(1, 3, 2, 2, (0..12).map(|i| i as f64).collect());
        let (y, _) = conv2d_forward(&p, &x).unwrap();
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn conv_known_3x3_cross_correlation() {
        // Single channel, 3x3 input, 3x3 kernel, no padding → scalar output.
        let spec = ConvSpec {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            stride: 1,
            padding: 0,
        };
        let mut p = Conv2dParams::zeros(spec);
        for (i, v) in p.w.data.iter_mut().enumerate() {
            *v = (i + 1) as f64;
        }
        p.b[0] = 0.5;
        let x = Feat::from_vec(1, 1, 3, 3, (1..=9).map(|i| i as f64).collect());
        let (y, _) = conv2d_forward(&p, &x).unwrap();
        let want: f64 = (1..=9).map(|i| (i * i) as f64).sum::<f64>() + 0.5;
        assert!((y.data[0] - want).abs() < 1e-12);
    }

    #[test]
    fn bn_train_normalizes_batch() {
        let p = BatchNorm2dParams::new(1);
        let x = Feat::from_vec(2, 1, 1, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let (y, cache) = bn_forward(&p, &x, Mode::Train);
        let cache = cache.unwrap();
        assert!((cache.batch_mean[0] - 2.5).abs() < 1e-12);
        let mean_out: f64 = y.data.iter().sum::<f64>() / 4.0;
        assert!(mean_out.abs() < 1e-12);
    }

    #[test]
    fn bn_eval_uses_running_stats() {
        let mut p = BatchNorm2dParams::new(1);
        p.running_mean[0] = 10.0;
        p.running_var[0] = 4.0;
        let x = Feat::from_vec(1, 1, 1, 1, vec![12.0]);
        let (y, cache) = bn_forward(&p, &x, Mode::Eval);
        assert!(cache.is_none());
        assert!((y.data[0] - 2.0 / (4.0 + 1e-5f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn layernorm_rows_have_zero_mean_unit_variance() {
        let p = LayerNormParams::new(8);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = randn_mat(4, 8, 3.0, &mut rng);
        let (y, _) = layernorm_forward(&p, &x);
        for r in 0..4 {
            let row = y.row(r);
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-6, "row {r} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "row {r} var {var}");
        }
    }

    #[test]
    fn masked_softmax_zeroes_invalid_and_sums_to_one() {
        let mut row = vec![0.3, 100.0, -0.7, 2.0];
        let valid = vec![true, false, true, true];
        softmax_masked_inplace(&mut row, &valid);
        assert_eq!(row[1], 0.0);
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        let mut empty = vec![1.0, 2.0];
        softmax_masked_inplace(&mut empty, &[false, false]);
        assert_eq!(empty, vec![0.0, 0.0]);
    }
}
