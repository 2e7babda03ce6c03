//! Training-only dual-space regularizers: the contrastive triplet loss in
//! the discriminative primary space and the ρ-bounded enclosing-sphere loss
//! in the exclusive sub-space, combined as
//! α·cls + β·disc + (1−α−β)·excl.
//!
//! Neither loss is evaluated at test time; detection and classification run
//! on the frozen embedding alone.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::config::LossWeights;
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::nn::randn_mat;
use crate::tensor::{l2_norm, Mat};

/// Index triple into the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Per-family index lists over `split.train_known`, precomputed once.
#[derive(Debug, Clone)]
pub struct TripletIndex {
    by_family: Vec<Vec<usize>>,
    /// All train indices not in the keyed family, per family.
    others: Vec<Vec<usize>>,
    family_names: Vec<String>,
}

impl TripletIndex {
    pub fn build(split: &DatasetSplit) -> Result<Self> {
        let k = split.k_known();
        if k < 2 {
            return Err(Error::Input(
                "triplet sampling requires at least 2 known families".into(),
            ));
        }
        let mut by_family = vec![Vec::new(); k];
        for (i, r) in split.train_known.iter().enumerate() {
            by_family[r.family.id].push(i);
        }
        let names = split.known_family_names();
        for (fam, members) in by_family.iter().enumerate() {
            if members.len() < 2 {
                return Err(Error::SingletonFamily {
                    family: names[fam].clone(),
                });
            }
        }
        let others = (0..k)
            .map(|fam| {
                (0..split.train_known.len())
                    .filter(|&i| split.train_known[i].family.id != fam)
                    .collect()
            })
            .collect();
        Ok(TripletIndex {
            by_family,
            others,
            family_names: names,
        })
    }
}

/// Draw a positive (same family, not the anchor) and a negative (uniform
/// over all other families' samples) for each anchor.
pub fn sample_triplets(
    index: &TripletIndex,
    split: &DatasetSplit,
    anchors: &[usize],
    rng: &mut ChaCha20Rng,
) -> Result<Vec<Triplet>> {
    let mut out = Vec::with_capacity(anchors.len());
    for &anchor in anchors {
        let fam = split.train_known[anchor].family.id;
        let peers = &index.by_family[fam];
        if peers.len() < 2 {
            return Err(Error::SingletonFamily {
                family: index.family_names[fam].clone(),
            });
        }
        let positive = loop {
            let cand = peers[rng.random_range(0..peers.len())];
            if cand != anchor {
                break cand;
            }
        };
        let pool = &index.others[fam];
        let negative = pool[rng.random_range(0..pool.len())];
        out.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(out)
}

/// Σᵢ (‖zᵢ − zᵢ⁺‖ − ‖zᵢ − zᵢ⁻‖), with an optional hinge margin variant
/// Σᵢ max(0, m + ‖zᵢ − zᵢ⁺‖ − ‖zᵢ − zᵢ⁻‖). Gradients are for the sum form.
pub struct DiscEval {
    pub loss: f64,
    pub d_anchor: Mat,
    pub d_pos: Mat,
    pub d_neg: Mat,
}

pub fn disc_loss(z: &Mat, z_pos: &Mat, z_neg: &Mat, margin: Option<f64>) -> DiscEval {
    assert_eq!(z.rows, z_pos.rows);
    assert_eq!(z.rows, z_neg.rows);
    let (n, d) = (z.rows, z.cols);
    let mut loss = 0.0;
    let mut d_anchor = Mat::zeros(n, d);
    let mut d_pos = Mat::zeros(n, d);
    let mut d_neg = Mat::zeros(n, d);
    for i in 0..n {
        let (zi, zp, zn) = (z.row(i), z_pos.row(i), z_neg.row(i));
        let diff_p: Vec<f64> = zi.iter().zip(zp).map(|(a, b)| a - b).collect();
        let diff_n: Vec<f64> = zi.iter().zip(zn).map(|(a, b)| a - b).collect();
        let dist_p = l2_norm(&diff_p);
        let dist_n = l2_norm(&diff_n);
        let raw = dist_p - dist_n;
        let (contrib, active) = match margin {
            Some(m) => ((m + raw).max(0.0), m + raw > 0.0),
            None => (raw, true),
        };
        loss += contrib;
        if !active {
            continue;
        }
        // d/dz ‖z−z⁺‖ = (z−z⁺)/‖z−z⁺‖; zero-distance pairs take the zero
        // subgradient.
        if dist_p > 0.0 {
            for j in 0..d {
                let u = diff_p[j] / dist_p;
                d_anchor.row_mut(i)[j] += u;
                d_pos.row_mut(i)[j] -= u;
            }
        }
        if dist_n > 0.0 {
            for j in 0..d {
                let u = diff_n[j] / dist_n;
                d_anchor.row_mut(i)[j] -= u;
                d_neg.row_mut(i)[j] += u;
            }
        }
    }
    DiscEval {
        loss,
        d_anchor,
        d_pos,
        d_neg,
    }
}

/// Sub-space projection, trainable radius, and the weight-norm reward gain.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereParams {
    /// d_z × d_sub projection matrix (Θ_Sub).
    pub sub: Mat,
    /// Trainable radius ρ ≥ 0, boxed in a length-1 vec so the optimizer
    /// visits it like any other tensor.
    pub radius: Vec<f64>,
    /// λ, rewards ‖Θ_Sub‖ to keep the projection from collapsing to zero.
    pub lambda: f64,
    /// Projection cap: ‖Θ_Sub‖ is rescaled to this after every step.
    pub norm_cap: f64,
}

impl SphereParams {
    pub fn new(d_z: usize, d_sub: usize, lambda: f64, norm_cap: f64, rng: &mut ChaCha20Rng) -> Self {
        SphereParams {
            sub: randn_mat(d_z, d_sub, (1.0 / d_z as f64).sqrt(), rng),
            radius: vec![0.0],
            lambda,
            norm_cap,
        }
    }

    pub fn zeros_like(&self) -> Self {
        SphereParams {
            sub: Mat::zeros(self.sub.rows, self.sub.cols),
            radius: vec![0.0],
            lambda: self.lambda,
            norm_cap: self.norm_cap,
        }
    }

    pub fn rho(&self) -> f64 {
        self.radius[0]
    }

    pub fn sub_norm(&self) -> f64 {
        l2_norm(&self.sub.data)
    }
}

pub struct ExclEval {
    pub loss: f64,
    pub hinge_sum: f64,
    pub n_outside: usize,
    pub sub_norm: f64,
    /// d(loss)/d(z) through the projection, hinge term scaled by `hinge_scale`.
    pub d_z: Mat,
    /// d(loss)/d(Θ_Sub), including the −λ‖Θ_Sub‖ reward term.
    pub d_sub: Mat,
    pub d_rho: f64,
}

/// hinge_scale·Σᵢ max(‖Sub(zᵢ)‖ − ρ, 0) + ρ − λ‖Θ_Sub‖.
///
/// `hinge_scale` = 1 gives the literal loss; the trainer passes 1/batch so
/// the hinge term is a per-sample mean while the ρ and λ terms, which do
/// not sum over samples, stay as written.
pub fn excl_loss(z: &Mat, sphere: &SphereParams, hinge_scale: f64) -> ExclEval {
    let rho = sphere.rho();
    let sub_z = z.matmul(&sphere.sub); // n × d_sub
    let n = z.rows;
    let mut hinge_sum = 0.0;
    let mut n_outside = 0usize;
    let mut d_sub_z = Mat::zeros(n, sphere.sub.cols);
    for i in 0..n {
        let s = sub_z.row(i);
        let norm = l2_norm(s);
        if norm > rho {
            hinge_sum += norm - rho;
            n_outside += 1;
            if norm > 0.0 {
                for (dv, &sv) in d_sub_z.row_mut(i).iter_mut().zip(s) {
                    *dv = hinge_scale * sv / norm;
                }
            }
        }
    }
    let sub_norm = sphere.sub_norm();
    let loss = hinge_scale * hinge_sum + rho - sphere.lambda * sub_norm;

    let d_z = d_sub_z.matmul_nt(&sphere.sub);
    let mut d_sub = z.matmul_tn(&d_sub_z);
    if sub_norm > 0.0 {
        let coef = sphere.lambda / sub_norm;
        for (dv, &wv) in d_sub.data.iter_mut().zip(&sphere.sub.data) {
            *dv -= coef * wv;
        }
    }
    let d_rho = 1.0 - hinge_scale * n_outside as f64;
    ExclEval {
        loss,
        hinge_sum,
        n_outside,
        sub_norm,
        d_z,
        d_sub,
        d_rho,
    }
}

/// α·cls + β·disc + (1−α−β)·excl.
pub fn total_loss(cls: f64, disc: f64, excl: f64, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.alpha * cls + w.beta * disc + w.excl_weight() * excl)
}
