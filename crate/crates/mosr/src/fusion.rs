//! Fusion of the two encoder outputs into the unified embedding z, the
//! one-layer family classifier, and the cross-entropy loss.

use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::{linear_backward, linear_forward, relu_backward_inplace, relu_inplace, LinearParams};
use crate::numeric_encoder::NUM_OUT_DIM;
use crate::tensor::Mat;
use crate::textual_encoder::TEX_OUT_DIM;

pub const FUSE_IN_DIM: usize = NUM_OUT_DIM + TEX_OUT_DIM;
const FUSE_HIDDEN: usize = 1024;

/// Probability floor before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

/// Two fully-connected layers 2,048 → 1,024 → d_z with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub fc1: LinearParams,
    pub fc2: LinearParams,
}

impl FusionParams {
    pub fn new(d_z: usize, rng: &mut ChaCha20Rng) -> Self {
        FusionParams {
            fc1: LinearParams::he(FUSE_IN_DIM, FUSE_HIDDEN, rng),
            fc2: LinearParams::he(FUSE_HIDDEN, d_z, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        FusionParams {
            fc1: LinearParams::zeros(FUSE_IN_DIM, FUSE_HIDDEN),
            fc2: LinearParams::zeros(FUSE_HIDDEN, self.fc2.out_dim()),
        }
    }

    pub fn d_z(&self) -> usize {
        self.fc2.out_dim()
    }
}

pub struct FuseCache {
    cat: Mat,
    /// Post-ReLU hidden activations.
    hidden: Mat,
    had_num: bool,
    had_tex: bool,
}

/// Concatenate the modality embeddings (an absent modality contributes the
/// zero vector) and run the fusion FCN.
pub fn fuse(
    p: &FusionParams,
    z_num: Option<&Mat>,
    z_tex: Option<&Mat>,
) -> Result<(Mat, FuseCache)> {
    let n = match (z_num, z_tex) {
        (Some(a), Some(b)) => {
            if a.rows != b.rows {
                return Err(Error::Shape("modality batch sizes differ".into()));
            }
            a.rows
        }
        (Some(a), None) => a.rows,
        (None, Some(b)) => b.rows,
        (None, None) => {
            return Err(Error::Input(
                "fusion requires at least one modality embedding".into(),
            ))
        }
    };
    let mut cat = Mat::zeros(n, FUSE_IN_DIM);
    if let Some(a) = z_num {
        assert_eq!(a.cols, NUM_OUT_DIM);
        for r in 0..n {
            cat.row_mut(r)[..NUM_OUT_DIM].copy_from_slice(a.row(r));
        }
    }
    if let Some(b) = z_tex {
        assert_eq!(b.cols, TEX_OUT_DIM);
        for r in 0..n {
            cat.row_mut(r)[NUM_OUT_DIM..].copy_from_slice(b.row(r));
        }
    }
    let mut hidden = linear_forward(&p.fc1, &cat);
    relu_inplace(&mut hidden.data);
    let z = linear_forward(&p.fc2, &hidden);
    Ok((
        z,
        FuseCache {
            cat,
            hidden,
            had_num: z_num.is_some(),
            had_tex: z_tex.is_some(),
        },
    ))
}

/// Returns (d z_num, d z_tex); a gradient is `None` when that modality was
/// absent in the forward pass.
pub fn fuse_backward(
    p: &FusionParams,
    g: &mut FusionParams,
    cache: &FuseCache,
    dz: &Mat,
) -> (Option<Mat>, Option<Mat>) {
    let mut d_hidden = linear_backward(&p.fc2, &mut g.fc2, &cache.hidden, dz);
    relu_backward_inplace(&mut d_hidden.data, &cache.hidden.data);
    let d_cat = linear_backward(&p.fc1, &mut g.fc1, &cache.cat, &d_hidden);

    let n = d_cat.rows;
    let d_num = cache.had_num.then(|| {
        let mut m = Mat::zeros(n, NUM_OUT_DIM);
        for r in 0..n {
            m.row_mut(r).copy_from_slice(&d_cat.row(r)[..NUM_OUT_DIM]);
        }
        m
    });
    let d_tex = cache.had_tex.then(|| {
        let mut m = Mat::zeros(n, TEX_OUT_DIM);
        for r in 0..n {
            m.row_mut(r).copy_from_slice(&d_cat.row(r)[NUM_OUT_DIM..]);
        }
        m
    });
    (d_num, d_tex)
}

/// One fully-connected layer mapping z to family logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub fc: LinearParams,
}

impl ClassifierParams {
    pub fn new(d_z: usize, k_known: usize, rng: &mut ChaCha20Rng) -> Self {
        ClassifierParams {
            fc: LinearParams::he(d_z, k_known, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ClassifierParams {
            fc: LinearParams::zeros(self.fc.in_dim(), self.fc.out_dim()),
        }
    }

    pub fn k_known(&self) -> usize {
        self.fc.out_dim()
    }
}

pub fn class_logits(p: &ClassifierParams, z: &Mat) -> Mat {
    linear_forward(&p.fc, z)
}

/// softmax(z·W + b) row-wise.
pub fn classify(p: &ClassifierParams, z: &Mat) -> Mat {
    let mut probs = class_logits(p, z);
    for r in 0..probs.rows {
        crate::tensor::softmax_inplace(probs.row_mut(r));
    }
    probs
}

/// Mean over the batch of −log q(true label), with q floored at
/// [`LOG_CLAMP`] before the log. NaN probabilities propagate (f64::max
/// would silently swallow them) so the trainer's non-finite guard fires.
pub fn cross_entropy(probs: &Mat, labels: &[usize]) -> f64 {
    assert_eq!(probs.rows, labels.len());
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let q = probs.row(r)[label];
        total -= if q < LOG_CLAMP { LOG_CLAMP.ln() } else { q.ln() };
    }
    total / labels.len() as f64
}

/// Gradient of mean cross-entropy w.r.t. the logits: (q − p)/n per row.
pub fn cross_entropy_logits_grad(probs: &Mat, labels: &[usize]) -> Mat {
    let n = labels.len() as f64;
    let mut d = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        let row = d.row_mut(r);
        for v in row.iter_mut() {
            *v /= n;
        }
        row[label] -= 1.0 / n;
    }
    d
}
