//! Small from-scratch transformer encoder over malware sentences.
//!
//! Token + learned position embeddings feed a stack of post-LN blocks,
//! `LN(A + FFN(A))` with `A = LN(S + SelfAttn(S))`. Pad positions are
//! masked out of every softmax and out of the mean pool; the pooled vector
//! is projected to 1,024 with a trailing ReLU.

use rand_chacha::ChaCha20Rng;

use crate::data::MalwareSentence;
use crate::error::{Error, Result};
use crate::nn::{
    embedding_backward, embedding_forward, layernorm_backward, layernorm_forward, linear_backward,
    linear_forward, randn_mat, relu_backward_inplace, relu_inplace, softmax_backward_row,
    softmax_masked_inplace, EmbeddingParams, LayerNormParams, LinearParams, LnCache,
};
use crate::tensor::Mat;

pub const TEX_OUT_DIM: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// model_dim × model_dim, row-vector convention: query_i = s_i · q.
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
}

impl AttentionParams {
    fn new(dim: usize, rng: &mut ChaCha20Rng) -> Self {
        let std = (1.0 / dim as f64).sqrt();
        AttentionParams {
            q: randn_mat(dim, dim, std, rng),
            k: randn_mat(dim, dim, std, rng),
            v: randn_mat(dim, dim, std, rng),
        }
    }

    fn zeros(dim: usize) -> Self {
        AttentionParams {
            q: Mat::zeros(dim, dim),
            k: Mat::zeros(dim, dim),
            v: Mat::zeros(dim, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl FeedForwardParams {
    fn new(dim: usize, ffn_dim: usize, rng: &mut ChaCha20Rng) -> Self {
        FeedForwardParams {
            w1: randn_mat(dim, ffn_dim, (2.0 / dim as f64).sqrt(), rng),
            b1: vec![0.0; ffn_dim],
            w2: randn_mat(ffn_dim, dim, (1.0 / ffn_dim as f64).sqrt(), rng),
            b2: vec![0.0; dim],
        }
    }

    fn zeros(dim: usize, ffn_dim: usize) -> Self {
        FeedForwardParams {
            w1: Mat::zeros(dim, ffn_dim),
            b1: vec![0.0; ffn_dim],
            w2: Mat::zeros(ffn_dim, dim),
            b2: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub attn: AttentionParams,
    pub ln1: LayerNormParams,
    pub ffn: FeedForwardParams,
    pub ln2: LayerNormParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextualEncoderParams {
    pub token_embedding: EmbeddingParams,
    /// l_max × model_dim, learned.
    pub position_embedding: Mat,
    pub blocks: Vec<BlockParams>,
    pub proj: LinearParams,
    pub n_heads: usize,
    pub l_max: usize,
}

impl TextualEncoderParams {
    pub fn new(
        vocab: usize,
        l_max: usize,
        model_dim: usize,
        ffn_dim: usize,
        n_blocks: usize,
        n_heads: usize,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::Config("textual encoder needs at least one block".into()));
        }
        if n_heads == 0 || model_dim % n_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {model_dim} not divisible by n_heads {n_heads}"
            )));
        }
        Ok(TextualEncoderParams {
            token_embedding: EmbeddingParams::new(vocab, model_dim, rng),
            position_embedding: randn_mat(l_max, model_dim, 0.02, rng),
            blocks: (0..n_blocks)
                .map(|_| BlockParams {
                    attn: AttentionParams::new(model_dim, rng),
                    ln1: LayerNormParams::new(model_dim),
                    ffn: FeedForwardParams::new(model_dim, ffn_dim, rng),
                    ln2: LayerNormParams::new(model_dim),
                })
                .collect(),
            proj: LinearParams::he(model_dim, TEX_OUT_DIM, rng),
            n_heads,
            l_max,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let dim = self.model_dim();
        let ffn_dim = self.blocks[0].ffn.b1.len();
        TextualEncoderParams {
            token_embedding: EmbeddingParams::zeros(self.token_embedding.table.rows, dim),
            position_embedding: Mat::zeros(self.l_max, dim),
            blocks: self
                .blocks
                .iter()
                .map(|_| BlockParams {
                    attn: AttentionParams::zeros(dim),
                    ln1: LayerNormParams::zeros(dim),
                    ffn: FeedForwardParams::zeros(dim, ffn_dim),
                    ln2: LayerNormParams::zeros(dim),
                })
                .collect(),
            proj: LinearParams::zeros(dim, TEX_OUT_DIM),
            n_heads: self.n_heads,
            l_max: self.l_max,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.token_embedding.table.cols
    }
}

/// A batch of fixed-length sentences with a per-position validity mask.
#[derive(Debug, Clone)]
pub struct SentenceBatch {
    pub ids: Vec<u32>,
    pub valid: Vec<bool>,
    pub n: usize,
    pub l: usize,
}

impl SentenceBatch {
    pub fn from_sentences(sentences: &[&MalwareSentence]) -> Result<Self> {
        let l = sentences
            .first()
            .map(|s| s.ids.len())
            .ok_or_else(|| Error::Input("empty sentence batch".into()))?;
        let mut ids = Vec::with_capacity(sentences.len() * l);
        let mut valid = Vec::with_capacity(sentences.len() * l);
        for s in sentences {
            if s.ids.len() != l {
                return Err(Error::Shape("ragged sentence lengths in batch".into()));
            }
            for &id in &s.ids {
                ids.push(id);
                valid.push(id != s.pad_id);
            }
        }
        Ok(SentenceBatch {
            ids,
            valid,
            n: sentences.len(),
            l,
        })
    }
}

// ---------------------------------------------------------------------------
// Self-attention
// ---------------------------------------------------------------------------

pub struct AttnCache {
    q: Mat,
    k: Mat,
    v: Mat,
    /// One l×l weight matrix per (sample, head), sample-major.
    weights: Vec<Mat>,
}

/// Per-head masked attention on projected q/k/v, shared between the public
/// single-sequence op and the batched block forward.
fn attention_core(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    n: usize,
    l: usize,
    n_heads: usize,
    valid: &[bool],
    out: &mut Mat,
) -> Vec<Mat> {
    let dim = q.cols;
    let hd = dim / n_heads;
    let mut all_weights = Vec::with_capacity(n * n_heads);
    for s in 0..n {
        let rows = s * l..(s + 1) * l;
        let mask = &valid[s * l..(s + 1) * l];
        for h in 0..n_heads {
            let col0 = h * hd;
            let mut logits = Mat::zeros(l, l);
            for i in 0..l {
                let qi = &q.row(rows.start + i)[col0..col0 + hd];
                for j in 0..l {
                    let kj = &k.row(rows.start + j)[col0..col0 + hd];
                    logits.data[i * l + j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                }
            }
            for i in 0..l {
                softmax_masked_inplace(logits.row_mut(i), mask);
            }
            for i in 0..l {
                let out_row = &mut out.row_mut(rows.start + i)[col0..col0 + hd];
                for j in 0..l {
                    let w = logits.data[i * l + j];
                    if w == 0.0 {
                        continue;
                    }
                    let vj = &v.row(rows.start + j)[col0..col0 + hd];
                    for (o, vv) in out_row.iter_mut().zip(vj) {
                        *o += w * vv;
                    }
                }
            }
            all_weights.push(logits);
        }
    }
    all_weights
}

/// Weighted sum of value vectors with masked softmax weights (one
/// sequence). Pad positions receive exactly zero weight.
pub fn self_attention(
    p: &AttentionParams,
    n_heads: usize,
    x: &Mat,
    valid: &[bool],
) -> (Mat, AttnCache) {
    assert!(x.rows > 0, "attention input must be nonempty");
    let q = x.matmul(&p.q);
    let k = x.matmul(&p.k);
    let v = x.matmul(&p.v);
    let mut out = Mat::zeros(x.rows, x.cols);
    let weights = attention_core(&q, &k, &v, 1, x.rows, n_heads, valid, &mut out);
    (out, AttnCache { q, k, v, weights })
}

fn attention_backward_core(
    cache: &AttnCache,
    n: usize,
    l: usize,
    n_heads: usize,
    d_out: &Mat,
    dq: &mut Mat,
    dk: &mut Mat,
    dv: &mut Mat,
) {
    let dim = cache.q.cols;
    let hd = dim / n_heads;
    for s in 0..n {
        let r0 = s * l;
        for h in 0..n_heads {
            let col0 = h * hd;
            let weights = &cache.weights[s * n_heads + h];
            let mut d_weights = Mat::zeros(l, l);
            for i in 0..l {
                let doi = &d_out.row(r0 + i)[col0..col0 + hd];
                for j in 0..l {
                    let vj = &cache.v.row(r0 + j)[col0..col0 + hd];
                    d_weights.data[i * l + j] = doi.iter().zip(vj).map(|(a, b)| a * b).sum();
                    // dv_j += w_ij · d_out_i
                    let w = weights.data[i * l + j];
                    if w != 0.0 {
                        let dvj = &mut dv.row_mut(r0 + j)[col0..col0 + hd];
                        for (acc, d) in dvj.iter_mut().zip(doi) {
                            *acc += w * d;
                        }
                    }
                }
            }
            let mut d_logits = Mat::zeros(l, l);
            for i in 0..l {
                softmax_backward_row(
                    weights.row(i),
                    d_weights.row(i),
                    d_logits.row_mut(i),
                );
            }
            for i in 0..l {
                for j in 0..l {
                    let dl = d_logits.data[i * l + j];
                    if dl == 0.0 {
                        continue;
                    }
                    let kj: Vec<f64> = cache.k.row(r0 + j)[col0..col0 + hd].to_vec();
                    let qi: Vec<f64> = cache.q.row(r0 + i)[col0..col0 + hd].to_vec();
                    let dqi = &mut dq.row_mut(r0 + i)[col0..col0 + hd];
                    for (acc, kv) in dqi.iter_mut().zip(&kj) {
                        *acc += dl * kv;
                    }
                    let dkj = &mut dk.row_mut(r0 + j)[col0..col0 + hd];
                    for (acc, qv) in dkj.iter_mut().zip(&qi) {
                        *acc += dl * qv;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Feed-forward
// ---------------------------------------------------------------------------

/// max(0, x·W1 + b1)·W2 + b2 applied row-wise. Also returns the post-ReLU
/// hidden activations.
pub fn feed_forward(p: &FeedForwardParams, x: &Mat) -> (Mat, Mat) {
    let mut h = x.matmul(&p.w1);
    for r in 0..h.rows {
        for (hv, b) in h.row_mut(r).iter_mut().zip(&p.b1) {
            *hv += b;
        }
    }
    relu_inplace(&mut h.data);
    let mut out = h.matmul(&p.w2);
    for r in 0..out.rows {
        for (ov, b) in out.row_mut(r).iter_mut().zip(&p.b2) {
            *ov += b;
        }
    }
    (out, h)
}

// ---------------------------------------------------------------------------
// Encoder block
// ---------------------------------------------------------------------------

pub struct BlockCache {
    x: Mat,
    attn: AttnCache,
    ln1: LnCache,
    /// Post-LN1 activations (FFN input).
    a: Mat,
    /// Post-ReLU hidden activations of the FFN.
    h: Mat,
    ln2: LnCache,
}

/// S' = LN(A + FFN(A)), A = LN(S + SelfAttn(S)).
pub fn encoder_block(
    p: &BlockParams,
    n_heads: usize,
    x: &Mat,
    n: usize,
    l: usize,
    valid: &[bool],
) -> (Mat, BlockCache) {
    let q = x.matmul(&p.attn.q);
    let k = x.matmul(&p.attn.k);
    let v = x.matmul(&p.attn.v);
    let mut att = Mat::zeros(x.rows, x.cols);
    let weights = attention_core(&q, &k, &v, n, l, n_heads, valid, &mut att);
    let attn_cache = AttnCache { q, k, v, weights };

    let mut a_pre = x.clone();
    a_pre.add_assign(&att);
    let (a, ln1) = layernorm_forward(&p.ln1, &a_pre);

    let (f, h) = feed_forward(&p.ffn, &a);

    let mut s2 = a.clone();
    s2.add_assign(&f);
    let (out, ln2) = layernorm_forward(&p.ln2, &s2);
    (
        out,
        BlockCache {
            x: x.clone(),
            attn: attn_cache,
            ln1,
            a,
            h,
            ln2,
        },
    )
}

fn encoder_block_backward(
    p: &BlockParams,
    g: &mut BlockParams,
    cache: &BlockCache,
    n: usize,
    l: usize,
    n_heads: usize,
    dy: &Mat,
) -> Mat {
    // LN2 → residual split (A and FFN output share the gradient).
    let d_s2 = layernorm_backward(&p.ln2, &mut g.ln2, &cache.ln2, dy);
    let mut d_a = d_s2.clone();

    // FFN backward.
    let mut dh = d_s2.matmul_nt(&p.ffn.w2);
    g.ffn.w2.add_assign(&cache.h.matmul_tn(&d_s2));
    for r in 0..d_s2.rows {
        for (acc, d) in g.ffn.b2.iter_mut().zip(d_s2.row(r)) {
            *acc += d;
        }
    }
    relu_backward_inplace(&mut dh.data, &cache.h.data);
    g.ffn.w1.add_assign(&cache.a.matmul_tn(&dh));
    for r in 0..dh.rows {
        for (acc, d) in g.ffn.b1.iter_mut().zip(dh.row(r)) {
            *acc += d;
        }
    }
    d_a.add_assign(&dh.matmul_nt(&p.ffn.w1));

    // LN1 → residual split (input and attention output share the gradient).
    let d_a_pre = layernorm_backward(&p.ln1, &mut g.ln1, &cache.ln1, &d_a);
    let mut dx = d_a_pre.clone();

    let mut dq = Mat::zeros(dx.rows, dx.cols);
    let mut dk = Mat::zeros(dx.rows, dx.cols);
    let mut dv = Mat::zeros(dx.rows, dx.cols);
    attention_backward_core(&cache.attn, n, l, n_heads, &d_a_pre, &mut dq, &mut dk, &mut dv);

    g.attn.q.add_assign(&cache.x.matmul_tn(&dq));
    g.attn.k.add_assign(&cache.x.matmul_tn(&dk));
    g.attn.v.add_assign(&cache.x.matmul_tn(&dv));
    dx.add_assign(&dq.matmul_nt(&p.attn.q));
    dx.add_assign(&dk.matmul_nt(&p.attn.k));
    dx.add_assign(&dv.matmul_nt(&p.attn.v));
    dx
}

// ---------------------------------------------------------------------------
// Full encoder
// ---------------------------------------------------------------------------

pub struct TextualCache {
    ids: Vec<u32>,
    valid: Vec<bool>,
    blocks: Vec<BlockCache>,
    /// Valid-position counts per sample (0 ⇒ all-pad).
    counts: Vec<usize>,
    pooled: Mat,
    /// Post-ReLU output, for the activation gate.
    z: Mat,
    pub all_pad: Vec<bool>,
    n: usize,
    l: usize,
}

/// Embed → blocks → masked mean pool → ReLU(linear) → 1,024-d.
/// An all-pad sentence pools to the zero vector and is flagged in the cache.
pub fn encode_textual(
    p: &TextualEncoderParams,
    batch: &SentenceBatch,
    _mode: crate::nn::Mode,
) -> Result<(Mat, TextualCache)> {
    if batch.l != p.l_max {
        return Err(Error::Shape(format!(
            "sentence length {} does not match encoder l_max {}",
            batch.l, p.l_max
        )));
    }
    let dim = p.model_dim();
    let mut x = embedding_forward(&p.token_embedding, &batch.ids);
    for s in 0..batch.n {
        for i in 0..batch.l {
            let pos = p.position_embedding.row(i);
            for (xv, pv) in x.row_mut(s * batch.l + i).iter_mut().zip(pos) {
                *xv += pv;
            }
        }
    }

    let mut caches = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        let (next, cache) = encoder_block(block, p.n_heads, &x, batch.n, batch.l, &batch.valid);
        caches.push(cache);
        x = next;
    }

    let mut pooled = Mat::zeros(batch.n, dim);
    let mut counts = vec![0usize; batch.n];
    let mut all_pad = vec![false; batch.n];
    for s in 0..batch.n {
        let count = batch.valid[s * batch.l..(s + 1) * batch.l]
            .iter()
            .filter(|&&v| v)
            .count();
        counts[s] = count;
        if count == 0 {
            all_pad[s] = true;
            continue;
        }
        for i in 0..batch.l {
            if !batch.valid[s * batch.l + i] {
                continue;
            }
            let row = x.row(s * batch.l + i);
            for (acc, v) in pooled.row_mut(s).iter_mut().zip(row) {
                *acc += v / count as f64;
            }
        }
    }

    let mut z = linear_forward(&p.proj, &pooled);
    relu_inplace(&mut z.data);
    Ok((
        z.clone(),
        TextualCache {
            ids: batch.ids.clone(),
            valid: batch.valid.clone(),
            blocks: caches,
            counts,
            pooled,
            z,
            all_pad,
            n: batch.n,
            l: batch.l,
        },
    ))
}

pub fn encode_textual_backward(
    p: &TextualEncoderParams,
    g: &mut TextualEncoderParams,
    cache: &TextualCache,
    dz: &Mat,
) {
    let mut d = dz.clone();
    relu_backward_inplace(&mut d.data, &cache.z.data);
    let d_pooled = linear_backward(&p.proj, &mut g.proj, &cache.pooled, &d);

    let mut dx = Mat::zeros(cache.n * cache.l, p.model_dim());
    for s in 0..cache.n {
        if cache.counts[s] == 0 {
            continue;
        }
        let scale = 1.0 / cache.counts[s] as f64;
        for i in 0..cache.l {
            if !cache.valid[s * cache.l + i] {
                continue;
            }
            let src = d_pooled.row(s);
            for (acc, v) in dx.row_mut(s * cache.l + i).iter_mut().zip(src) {
                *acc += v * scale;
            }
        }
    }

    for i in (0..p.blocks.len()).rev() {
        dx = encoder_block_backward(
            &p.blocks[i],
            &mut g.blocks[i],
            &cache.blocks[i],
            cache.n,
            cache.l,
            p.n_heads,
            &dx,
        );
    }

    embedding_backward(&mut g.token_embedding, &cache.ids, &dx);
    for s in 0..cache.n {
        for i in 0..cache.l {
            let src = dx.row(s * cache.l + i);
            for (acc, v) in g.position_embedding.row_mut(i).iter_mut().zip(src) {
                *acc += v;
            }
        }
    }
}
