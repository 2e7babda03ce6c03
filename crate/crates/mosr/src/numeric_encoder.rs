//! Dual-branch encoder over malware images.
//!
//! The global branch aggregates every spatial position into every other via
//! softmax-normalized Gaussian similarity of pointwise features (a non-local
//! operator); the local branch is a plain 1×1 convolution. Both feed one
//! weight-shared convolutional stack that downsamples with strides instead
//! of pooling, then project to 512 each and concatenate to 1,024.

use rand_chacha::ChaCha20Rng;

use crate::error::Result;
use crate::nn::{
    bn_backward, bn_forward, bn_update_running, conv2d_backward, conv2d_forward, linear_backward,
    linear_forward, relu_backward_inplace, relu_inplace, softmax_backward_row,
    softmax_masked_inplace, BatchNorm2dParams, BnCache, Conv2dParams, ConvCache, ConvSpec,
    LinearParams, Mode,
};
use crate::tensor::{Feat, Mat};

pub const NUM_OUT_DIM: usize = 1024;
const BRANCH_CH: usize = 64;
const SIM_CH: usize = 128;

/// exp(aᵀb): the pairwise similarity used by the global branch.
pub fn gaussian_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "similarity operands must match");
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().exp()
}

/// One conv→batchnorm→relu block of the shared stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams {
    pub conv: Conv2dParams,
    pub bn: BatchNorm2dParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericEncoderParams {
    /// 1×1 conv producing the similarity features (128 channels).
    pub sim_conv: Conv2dParams,
    /// 1×1 conv producing the aggregated values (64 channels).
    pub val_conv: Conv2dParams,
    /// 1×1 conv opening the local branch (64 channels).
    pub local_conv: Conv2dParams,
    /// Four stride-downsampled blocks shared by both branches.
    pub stack: Vec<ConvBlockParams>,
    pub proj_global: LinearParams,
    pub proj_local: LinearParams,
    pub in_h: usize,
    pub in_w: usize,
}

fn conv1x1(in_ch: usize, out_ch: usize) -> ConvSpec {
    ConvSpec {
        in_ch,
        out_ch,
        kernel: 1,
        stride: 1,
        padding: 0,
    }
}

/// (out_ch, kernel, stride, padding) rows of the shared stack.
const STACK_LAYOUT: [(usize, usize, usize, usize); 4] = [
    (64, 5, 1, 2),
    (128, 5, 2, 2),
    (256, 5, 2, 2),
    (512, 3, 2, 1),
];

impl NumericEncoderParams {
    pub fn new(in_h: usize, in_w: usize, rng: &mut ChaCha20Rng) -> Result<Self> {
        let mut stack = Vec::with_capacity(4);
        let mut in_ch = BRANCH_CH;
        let (mut h, mut w) = (in_h, in_w);
        for (out_ch, kernel, stride, padding) in STACK_LAYOUT {
            let spec = ConvSpec {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            };
            spec.validate()?;
            h = spec.out_size(h)?;
            w = spec.out_size(w)?;
            stack.push(ConvBlockParams {
                conv: Conv2dParams::he(spec, rng),
                bn: BatchNorm2dParams::new(out_ch),
            });
            in_ch = out_ch;
        }
        let flat = 512 * h * w;
        // The similarity conv feeds pairwise dot products over SIM_CH
        // channels; init at 1/√SIM_CH so those logits start O(1) instead
        // of saturating the softmax.
        let mut sim_conv = Conv2dParams::zeros(conv1x1(1, SIM_CH));
        sim_conv.w = crate::nn::randn_mat(1, SIM_CH, (1.0 / SIM_CH as f64).sqrt(), rng);
        Ok(NumericEncoderParams {
            sim_conv,
            val_conv: Conv2dParams::he(conv1x1(1, BRANCH_CH), rng),
            local_conv: Conv2dParams::he(conv1x1(1, BRANCH_CH), rng),
            stack,
            proj_global: LinearParams::he(flat, 512, rng),
            proj_local: LinearParams::he(flat, 512, rng),
            in_h,
            in_w,
        })
    }

    pub fn zeros_like(&self) -> Self {
        NumericEncoderParams {
            sim_conv: Conv2dParams::zeros(self.sim_conv.spec),
            val_conv: Conv2dParams::zeros(self.val_conv.spec),
            local_conv: Conv2dParams::zeros(self.local_conv.spec),
            stack: self
                .stack
                .iter()
                .map(|b| ConvBlockParams {
                    conv: Conv2dParams::zeros(b.conv.spec),
                    bn: BatchNorm2dParams::zeros(b.bn.gamma.len()),
                })
                .collect(),
            proj_global: LinearParams::zeros(self.proj_global.in_dim(), 512),
            proj_local: LinearParams::zeros(self.proj_local.in_dim(), 512),
            in_h: self.in_h,
            in_w: self.in_w,
        }
    }

    /// Ordered op kinds of the encoder graph. There is no pooling anywhere;
    /// downsampling happens through strided convolutions only.
    pub fn layer_summary(&self) -> Vec<String> {
        let mut ops = vec![
            "conv1x1(similarity)".to_string(),
            "nonlocal_softmax_aggregation".to_string(),
            "conv1x1(value)".to_string(),
            "conv1x1(local)".to_string(),
        ];
        for b in &self.stack {
            ops.push(format!(
                "conv{}x{}(stride={})",
                b.conv.spec.kernel, b.conv.spec.kernel, b.conv.spec.stride
            ));
            ops.push("batchnorm".to_string());
            ops.push("relu".to_string());
        }
        ops.push("linear(512)+relu".to_string());
        ops.push("linear(512)+relu".to_string());
        ops.push("concat(1024)".to_string());
        ops
    }
}

// ---------------------------------------------------------------------------
// Global receptive branch
// ---------------------------------------------------------------------------

struct NonlocalSampleCache {
    /// HW × 128 similarity features.
    sim: Mat,
    /// HW × 64 value features.
    val: Mat,
    /// HW × HW row-softmax aggregation weights.
    weights: Mat,
}

pub struct GlobalCache {
    sim_cache: ConvCache,
    val_cache: ConvCache,
    samples: Vec<NonlocalSampleCache>,
    h: usize,
    w: usize,
}

/// Channel-first sample → positions × channels matrix.
fn to_positions(feat: &Feat, b: usize) -> Mat {
    let hw = feat.h * feat.w;
    let mut m = Mat::zeros(hw, feat.c);
    let sample = feat.sample(b);
    for c in 0..feat.c {
        for p in 0..hw {
            m.data[p * feat.c + c] = sample[c * hw + p];
        }
    }
    m
}

fn from_positions(m: &Mat, feat: &mut Feat, b: usize) {
    let hw = feat.h * feat.w;
    let ch = feat.c;
    let sample = feat.sample_mut(b);
    for c in 0..ch {
        for p in 0..hw {
            sample[c * hw + p] = m.data[p * ch + c];
        }
    }
}

/// Non-local aggregation: every output position is the similarity-weighted
/// mean of the value features over all positions.
pub fn global_receptive(p: &NumericEncoderParams, x: &Feat) -> Result<(Feat, GlobalCache)> {
    let (sim_feat, sim_cache) = conv2d_forward(&p.sim_conv, x)?;
    let (val_feat, val_cache) = conv2d_forward(&p.val_conv, x)?;
    let hw = x.h * x.w;
    let valid = vec![true; hw];
    let mut out = Feat::zeros(x.n, BRANCH_CH, x.h, x.w);
    let mut samples = Vec::with_capacity(x.n);
    for b in 0..x.n {
        let sim = to_positions(&sim_feat, b);
        let val = to_positions(&val_feat, b);
        let mut weights = sim.matmul_nt(&sim);
        for r in 0..hw {
            softmax_masked_inplace(weights.row_mut(r), &valid);
        }
        let agg = weights.matmul(&val);
        from_positions(&agg, &mut out, b);
        samples.push(NonlocalSampleCache { sim, val, weights });
    }
    Ok((
        out,
        GlobalCache {
            sim_cache,
            val_cache,
            samples,
            h: x.h,
            w: x.w,
        },
    ))
}

fn global_receptive_backward(
    p: &NumericEncoderParams,
    g: &mut NumericEncoderParams,
    cache: &GlobalCache,
    d_out: &Feat,
) -> Feat {
    let hw = cache.h * cache.w;
    let n = d_out.n;
    let mut d_sim_feat = Feat::zeros(n, SIM_CH, cache.h, cache.w);
    let mut d_val_feat = Feat::zeros(n, BRANCH_CH, cache.h, cache.w);
    for b in 0..n {
        let sc = &cache.samples[b];
        let d_agg = to_positions(d_out, b);
        // agg = W·val
        let d_weights = d_agg.matmul_nt(&sc.val);
        let d_val = sc.weights.matmul_tn(&d_agg);
        // softmax rows
        let mut d_logits = Mat::zeros(hw, hw);
        for r in 0..hw {
            softmax_backward_row(sc.weights.row(r), d_weights.row(r), d_logits.row_mut(r));
        }
        // logits = sim·simᵀ → d_sim = (dL + dLᵀ)·sim
        let mut d_sim = d_logits.matmul(&sc.sim);
        d_sim.add_assign(&d_logits.matmul_tn(&sc.sim));
        from_positions(&d_sim, &mut d_sim_feat, b);
        from_positions(&d_val, &mut d_val_feat, b);
    }
    let mut dx = conv2d_backward(&p.sim_conv, &mut g.sim_conv, &cache.sim_cache, &d_sim_feat);
    let dx_val = conv2d_backward(&p.val_conv, &mut g.val_conv, &cache.val_cache, &d_val_feat);
    for (a, b) in dx.data.iter_mut().zip(&dx_val.data) {
        *a += b;
    }
    dx
}

/// Local receptive branch: a single 1×1 convolution, no spatial change.
pub fn local_receptive(p: &NumericEncoderParams, x: &Feat) -> Result<(Feat, ConvCache)> {
    conv2d_forward(&p.local_conv, x)
}

// ---------------------------------------------------------------------------
// Shared stack
// ---------------------------------------------------------------------------

pub struct StackBlockCache {
    conv: ConvCache,
    bn: Option<BnCache>,
    /// Post-ReLU output, kept for the activation gate.
    out: Feat,
}

pub struct StackCache {
    blocks: Vec<StackBlockCache>,
}

/// Run the four Table-layout blocks. BatchNorm uses batch statistics in
/// `Train` mode and running statistics in `Eval` mode.
pub fn shared_stack(
    p: &NumericEncoderParams,
    x: &Feat,
    mode: Mode,
) -> Result<(Feat, StackCache)> {
    let mut cur = x.clone();
    let mut blocks = Vec::with_capacity(p.stack.len());
    for block in &p.stack {
        let (conv_out, conv_cache) = conv2d_forward(&block.conv, &cur)?;
        let (mut bn_out, bn_cache) = bn_forward(&block.bn, &conv_out, mode);
        relu_inplace(&mut bn_out.data);
        blocks.push(StackBlockCache {
            conv: conv_cache,
            bn: bn_cache,
            out: bn_out.clone(),
        });
        cur = bn_out;
    }
    Ok((cur, StackCache { blocks }))
}

fn shared_stack_backward(
    p: &NumericEncoderParams,
    g: &mut NumericEncoderParams,
    cache: &StackCache,
    d_out: &Feat,
) -> Feat {
    let mut d = d_out.clone();
    for i in (0..p.stack.len()).rev() {
        let block = &p.stack[i];
        let bc = &cache.blocks[i];
        relu_backward_inplace(&mut d.data, &bc.out.data);
        let d_conv = bn_backward(
            &block.bn,
            &mut g.stack[i].bn,
            bc.bn.as_ref().expect("stack backward requires train-mode cache"),
            &d,
        );
        d = conv2d_backward(&block.conv, &mut g.stack[i].conv, &bc.conv, &d_conv);
    }
    d
}

// ---------------------------------------------------------------------------
// Full encoder
// ---------------------------------------------------------------------------

pub struct NumericCache {
    global: GlobalCache,
    local: ConvCache,
    stack_global: StackCache,
    stack_local: StackCache,
    flat_global: Mat,
    flat_local: Mat,
    /// Post-ReLU projected halves, kept for the activation gates.
    proj_g: Mat,
    proj_l: Mat,
}

fn flatten(feat: Feat) -> Mat {
    let cols = feat.c * feat.h * feat.w;
    Mat::from_vec(feat.n, cols, feat.data)
}

fn unflatten(m: &Mat, c: usize, h: usize, w: usize) -> Feat {
    Feat::from_vec(m.rows, c, h, w, m.data.clone())
}

/// Encode a batch of images into 1,024-d vectors:
/// per-branch shared stack → linear 512 → ReLU, concatenated.
pub fn encode_numeric(
    p: &NumericEncoderParams,
    x: &Feat,
    mode: Mode,
) -> Result<(Mat, NumericCache)> {
    let (g_feat, global) = global_receptive(p, x)?;
    let (l_feat, local) = local_receptive(p, x)?;
    let (g_stacked, stack_global) = shared_stack(p, &g_feat, mode)?;
    let (l_stacked, stack_local) = shared_stack(p, &l_feat, mode)?;
    let (sc, sh, sw) = (g_stacked.c, g_stacked.h, g_stacked.w);
    debug_assert_eq!(sc * sh * sw, p.proj_global.in_dim());
    let flat_global = flatten(g_stacked);
    let flat_local = flatten(l_stacked);
    let mut proj_g = linear_forward(&p.proj_global, &flat_global);
    let mut proj_l = linear_forward(&p.proj_local, &flat_local);
    relu_inplace(&mut proj_g.data);
    relu_inplace(&mut proj_l.data);

    let mut z = Mat::zeros(x.n, NUM_OUT_DIM);
    for b in 0..x.n {
        z.row_mut(b)[..512].copy_from_slice(proj_g.row(b));
        z.row_mut(b)[512..].copy_from_slice(proj_l.row(b));
    }
    Ok((
        z,
        NumericCache {
            global,
            local,
            stack_global,
            stack_local,
            flat_global,
            flat_local,
            proj_g,
            proj_l,
        },
    ))
}

/// Backpropagate through the whole encoder; returns d(input image batch).
/// Both stack invocations accumulate into the same shared-stack gradients.
pub fn encode_numeric_backward(
    p: &NumericEncoderParams,
    g: &mut NumericEncoderParams,
    cache: &NumericCache,
    dz: &Mat,
) -> Feat {
    let n = dz.rows;
    let mut d_proj_g = Mat::zeros(n, 512);
    let mut d_proj_l = Mat::zeros(n, 512);
    for b in 0..n {
        d_proj_g.row_mut(b).copy_from_slice(&dz.row(b)[..512]);
        d_proj_l.row_mut(b).copy_from_slice(&dz.row(b)[512..]);
    }
    relu_backward_inplace(&mut d_proj_g.data, &cache.proj_g.data);
    relu_backward_inplace(&mut d_proj_l.data, &cache.proj_l.data);

    let d_flat_g = linear_backward(&p.proj_global, &mut g.proj_global, &cache.flat_global, &d_proj_g);
    let d_flat_l = linear_backward(&p.proj_local, &mut g.proj_local, &cache.flat_local, &d_proj_l);

    let last = p.stack.last().expect("stack has four blocks");
    let (sh, sw) = stack_out_hw(p);
    let d_g_stacked = unflatten(&d_flat_g, last.conv.spec.out_ch, sh, sw);
    let d_l_stacked = unflatten(&d_flat_l, last.conv.spec.out_ch, sh, sw);

    let d_g_feat = shared_stack_backward(p, g, &cache.stack_global, &d_g_stacked);
    let d_l_feat = shared_stack_backward(p, g, &cache.stack_local, &d_l_stacked);

    let mut dx = global_receptive_backward(p, g, &cache.global, &d_g_feat);
    let dx_local = conv2d_backward(&p.local_conv, &mut g.local_conv, &cache.local, &d_l_feat);
    for (a, b) in dx.data.iter_mut().zip(&dx_local.data) {
        *a += b;
    }
    dx
}

fn stack_out_hw(p: &NumericEncoderParams) -> (usize, usize) {
    let (mut h, mut w) = (p.in_h, p.in_w);
    for b in &p.stack {
        h = b.conv.spec.out_size(h).expect("validated at construction");
        w = b.conv.spec.out_size(w).expect("validated at construction");
    }
    (h, w)
}

/// Fold both invocations' batch statistics into the running estimates
/// (global branch first, then local — fixed order for determinism).
pub fn update_running_stats(p: &mut NumericEncoderParams, cache: &NumericCache) {
    for (block, bc) in p.stack.iter_mut().zip(&cache.stack_global.blocks) {
        bn_update_running(&mut block.bn, bc.bn.as_ref().expect("train cache"));
    }
    for (block, bc) in p.stack.iter_mut().zip(&cache.stack_local.blocks) {
        bn_update_running(&mut block.bn, bc.bn.as_ref().expect("train cache"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    #[test]
    fn gaussian_similarity_values() {
        assert_eq!(gaussian_similarity(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(gaussian_similarity(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        let e2 = gaussian_similarity(&[1.0, 1.0], &[1.0, 1.0]);
        assert!((e2 - 7.389056098930650).abs() < 1e-12);
    }

    #[test]
    fn zero_similarity_weights_average_values() {
        let mut p = NumericEncoderParams::new(3, 3, &mut rng()).unwrap();
        for v in p.sim_conv.w.data.iter_mut() {
            *v = 0.0;
        }
        p.sim_conv.b.iter_mut().for_each(|b| *b = 0.0);
        let x = Feat::from_vec(1, 1, 3, 3, (0..9).map(|i| i as f64 * 0.1).collect());
        let (out, _) = global_receptive(&p, &x).unwrap();
        let (val, _) = conv2d_forward(&p.val_conv, &x).unwrap();
        let hw = 9;
        for c in 0..BRANCH_CH {
            let mean: f64 = (0..hw).map(|i| val.data[c * hw + i]).sum::<f64>() / hw as f64;
            for i in 0..hw {
                assert!(
                    (out.data[c * hw + i] - mean).abs() < 1e-9,
                    "channel {c} position {i}"
                );
            }
        }
    }

    #[test]
    fn single_position_returns_values_exactly() {
        let p = NumericEncoderParams::new(1, 1, &mut rng()).unwrap();
        let x = Feat::from_vec(1, 1, 1, 1, vec![0.37]);
        let (out, _) = global_receptive(&p, &x).unwrap();
        let (val, _) = conv2d_forward(&p.val_conv, &x).unwrap();
        for (o, v) in out.data.iter().zip(&val.data) {
            assert!((o - v).abs() < 1e-12);
        }
    }

    #[test]
    fn nonlocal_weights_sum_to_one() {
        let p = NumericEncoderParams::new(4, 4, &mut rng()).unwrap();
        let x = Feat::from_vec(1, 1, 4, 4, (0..16).map(|i| (i as f64).sin()).collect());
        let (_, cache) = global_receptive(&p, &x).unwrap();
        for r in 0..16 {
            let sum: f64 = cache.samples[0].weights.row(r).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn local_branch_is_linear_when_bias_zero() {
        let p = NumericEncoderParams::new(4, 4, &mut rng()).unwrap();
        let x1 = Feat::from_vec(1, 1, 4, 4, (0..16).map(|i| (i as f64 * 0.7).cos()).collect());
        let mut x2 = x1.clone();
        x2.data.iter_mut().for_each(|v| *v *= 2.0);
        let (y1, _) = local_receptive(&p, &x1).unwrap();
        let (y2, _) = local_receptive(&p, &x2).unwrap();
        assert_eq!(y2.c, BRANCH_CH);
        assert_eq!((y2.h, y2.w), (4, 4));
        for (a, b) in y1.data.iter().zip(&y2.data) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn stack_shapes_for_both_paper_sizes() {
        let mut r = rng();
        for (hw, expect) in [(32usize, 4usize), (25, 4)] {
            let p = NumericEncoderParams::new(hw, hw, &mut r).unwrap();
            let x = Feat::zeros(1, BRANCH_CH, hw, hw);
            let (out, _) = shared_stack(&p, &x, Mode::Train).unwrap();
            assert_eq!((out.c, out.h, out.w), (512, expect, expect));
        }
    }

    #[test]
    fn stack_output_nonnegative_after_relu() {
        let p = NumericEncoderParams::new(5, 5, &mut rng()).unwrap();
        let mut r = rng();
        let x = crate::nn::randn_mat(1, BRANCH_CH * 25, 1.0, &mut r);
        let x = Feat::from_vec(1, BRANCH_CH, 5, 5, x.data);
        let (out, _) = shared_stack(&p, &x, Mode::Train).unwrap();
        assert!(out.data.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn encode_output_is_1024_for_both_paper_sizes() {
        let mut r = rng();
        for hw in [32usize, 25] {
            let p = NumericEncoderParams::new(hw, hw, &mut r).unwrap();
            let x = Feat::from_vec(
                1,
                1,
                hw,
                hw,
                (0..hw * hw).map(|i| (i % 7) as f64 / 7.0).collect(),
            );
            let (z, _) = encode_numeric(&p, &x, Mode::Eval).unwrap();
            assert_eq!(z.cols, NUM_OUT_DIM);
        }
    }

    #[test]
    fn zero_projections_give_zero_embedding() {
        let mut p = NumericEncoderParams::new(3, 3, &mut rng()).unwrap();
        p.proj_global = LinearParams::zeros(p.proj_global.in_dim(), 512);
        p.proj_local = LinearParams::zeros(p.proj_local.in_dim(), 512);
        let x = Feat::from_vec(1, 1, 3, 3, vec![0.5; 9]);
        let (z, _) = encode_numeric(&p, &x, Mode::Train).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_pooling_in_layer_summary() {
        let p = NumericEncoderParams::new(8, 8, &mut rng()).unwrap();
        let ops = p.layer_summary();
        assert!(ops.iter().all(|op| !op.contains("pool")));
        // 3 branch 1×1 convs + 4 stack convs.
        assert_eq!(ops.iter().filter(|op| op.contains("conv")).count(), 7);
    }
}
