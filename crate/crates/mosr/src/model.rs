//! The assembled recognizer: modality encoders, fusion, classifier, and the
//! sub-space sphere, with a canonical named-tensor walk used by the
//! optimizer and the checkpoint format.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::Modalities;
use crate::dual_embedding::SphereParams;
use crate::error::{Error, Result};
use crate::fusion::{
    class_logits, classify, fuse, fuse_backward, ClassifierParams, FuseCache, FusionParams,
};
use crate::nn::Mode;
use crate::numeric_encoder::{
    encode_numeric, encode_numeric_backward, update_running_stats, NumericCache,
    NumericEncoderParams,
};
use crate::tensor::{Feat, Mat};
use crate::textual_encoder::{
    encode_textual, encode_textual_backward, SentenceBatch, TextualCache, TextualEncoderParams,
};

/// Everything needed to rebuild the network shape from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub modalities: Modalities,
    pub k_known: usize,
    pub image_h: usize,
    pub image_w: usize,
    pub vocab_size: usize,
    pub l_max: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub d_z: usize,
    pub d_sub: usize,
    pub lambda: f64,
    pub sub_norm_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub numeric: Option<NumericEncoderParams>,
    pub textual: Option<TextualEncoderParams>,
    pub fusion: FusionParams,
    pub classifier: ClassifierParams,
    pub sphere: SphereParams,
}

/// Which tensor families a walk covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorSet {
    /// Trainable parameters, in optimizer order.
    Params,
    /// Non-trainable state (batchnorm running statistics).
    Buffers,
}

impl Model {
    pub fn new(cfg: ModelConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        let numeric = if cfg.modalities.uses_image() {
            Some(NumericEncoderParams::new(cfg.image_h, cfg.image_w, rng)?)
        } else {
            None
        };
        let textual = if cfg.modalities.uses_sentence() {
            Some(TextualEncoderParams::new(
                cfg.vocab_size,
                cfg.l_max,
                cfg.model_dim,
                cfg.ffn_dim,
                cfg.n_blocks,
                cfg.n_heads,
                rng,
            )?)
        } else {
            None
        };
        let fusion = FusionParams::new(cfg.d_z, rng);
        let classifier = ClassifierParams::new(cfg.d_z, cfg.k_known, rng);
        let sphere = SphereParams::new(cfg.d_z, cfg.d_sub, cfg.lambda, cfg.sub_norm_cap, rng);
        Ok(Model {
            cfg,
            numeric,
            textual,
            fusion,
            classifier,
            sphere,
        })
    }

    /// Zero-valued mirror with identical shapes; used for gradients.
    pub fn zeros_like(&self) -> Self {
        Model {
            cfg: self.cfg.clone(),
            numeric: self.numeric.as_ref().map(|n| n.zeros_like()),
            textual: self.textual.as_ref().map(|t| t.zeros_like()),
            fusion: self.fusion.zeros_like(),
            classifier: self.classifier.zeros_like(),
            sphere: self.sphere.zeros_like(),
        }
    }

    /// Walk the model's tensors in a fixed order. The same order backs the
    /// optimizer flattening and the checkpoint layout, so it must never
    /// depend on runtime state beyond the model shape.
    pub fn visit_tensors_mut(
        &mut self,
        set: TensorSet,
        f: &mut dyn FnMut(&str, &[usize], &mut Vec<f64>),
    ) {
        match set {
            TensorSet::Params => self.visit_params_mut(f),
            TensorSet::Buffers => self.visit_buffers_mut(f),
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut Vec<f64>)) {
        if let Some(num) = &mut self.numeric {
            let mut conv = |name: &str, c: &mut crate::nn::Conv2dParams| {
                f(
                    &format!("numeric.{name}.w"),
                    &[c.w.rows, c.w.cols],
                    &mut c.w.data,
                );
                let blen = c.b.len();
                f(&format!("numeric.{name}.b"), &[blen], &mut c.b);
            };
            conv("sim_conv", &mut num.sim_conv);
            conv("val_conv", &mut num.val_conv);
            conv("local_conv", &mut num.local_conv);
            for (i, block) in num.stack.iter_mut().enumerate() {
                f(
                    &format!("numeric.stack{i}.conv.w"),
                    &[block.conv.w.rows, block.conv.w.cols],
                    &mut block.conv.w.data,
                );
                let blen = block.conv.b.len();
                f(&format!("numeric.stack{i}.conv.b"), &[blen], &mut block.conv.b);
                let glen = block.bn.gamma.len();
                f(&format!("numeric.stack{i}.bn.gamma"), &[glen], &mut block.bn.gamma);
                f(&format!("numeric.stack{i}.bn.beta"), &[glen], &mut block.bn.beta);
            }
            f(
                "numeric.proj_global.w",
                &[num.proj_global.w.rows, num.proj_global.w.cols],
                &mut num.proj_global.w.data,
            );
            let blen = num.proj_global.b.len();
            f("numeric.proj_global.b", &[blen], &mut num.proj_global.b);
            f(
                "numeric.proj_local.w",
                &[num.proj_local.w.rows, num.proj_local.w.cols],
                &mut num.proj_local.w.data,
            );
            let blen = num.proj_local.b.len();
            f("numeric.proj_local.b", &[blen], &mut num.proj_local.b);
        }
        if let Some(tex) = &mut self.textual {
            f(
                "textual.token_embedding",
                &[tex.token_embedding.table.rows, tex.token_embedding.table.cols],
                &mut tex.token_embedding.table.data,
            );
            f(
                "textual.position_embedding",
                &[tex.position_embedding.rows, tex.position_embedding.cols],
                &mut tex.position_embedding.data,
            );
            for (i, block) in tex.blocks.iter_mut().enumerate() {
                for (tag, m) in [
                    ("q", &mut block.attn.q),
                    ("k", &mut block.attn.k),
                    ("v", &mut block.attn.v),
                ] {
                    f(
                        &format!("textual.block{i}.attn.{tag}"),
                        &[m.rows, m.cols],
                        &mut m.data,
                    );
                }
                let d = block.ln1.gamma.len();
                f(&format!("textual.block{i}.ln1.gamma"), &[d], &mut block.ln1.gamma);
                f(&format!("textual.block{i}.ln1.beta"), &[d], &mut block.ln1.beta);
                f(
                    &format!("textual.block{i}.ffn.w1"),
                    &[block.ffn.w1.rows, block.ffn.w1.cols],
                    &mut block.ffn.w1.data,
                );
                let h = block.ffn.b1.len();
                f(&format!("textual.block{i}.ffn.b1"), &[h], &mut block.ffn.b1);
                f(
                    &format!("textual.block{i}.ffn.w2"),
                    &[block.ffn.w2.rows, block.ffn.w2.cols],
                    &mut block.ffn.w2.data,
                );
                f(&format!("textual.block{i}.ffn.b2"), &[d], &mut block.ffn.b2);
                f(&format!("textual.block{i}.ln2.gamma"), &[d], &mut block.ln2.gamma);
                f(&format!("textual.block{i}.ln2.beta"), &[d], &mut block.ln2.beta);
            }
            f(
                "textual.proj.w",
                &[tex.proj.w.rows, tex.proj.w.cols],
                &mut tex.proj.w.data,
            );
            let blen = tex.proj.b.len();
            f("textual.proj.b", &[blen], &mut tex.proj.b);
        }
        f(
            "fusion.fc1.w",
            &[self.fusion.fc1.w.rows, self.fusion.fc1.w.cols],
            &mut self.fusion.fc1.w.data,
        );
        let blen = self.fusion.fc1.b.len();
        f("fusion.fc1.b", &[blen], &mut self.fusion.fc1.b);
        f(
            "fusion.fc2.w",
            &[self.fusion.fc2.w.rows, self.fusion.fc2.w.cols],
            &mut self.fusion.fc2.w.data,
        );
        let blen = self.fusion.fc2.b.len();
        f("fusion.fc2.b", &[blen], &mut self.fusion.fc2.b);
        f(
            "classifier.w",
            &[self.classifier.fc.w.rows, self.classifier.fc.w.cols],
            &mut self.classifier.fc.w.data,
        );
        let blen = self.classifier.fc.b.len();
        f("classifier.b", &[blen], &mut self.classifier.fc.b);
        f(
            "sphere.sub",
            &[self.sphere.sub.rows, self.sphere.sub.cols],
            &mut self.sphere.sub.data,
        );
        f("sphere.radius", &[1], &mut self.sphere.radius);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut Vec<f64>)) {
        if let Some(num) = &mut self.numeric {
            for (i, block) in num.stack.iter_mut().enumerate() {
                let c = block.bn.running_mean.len();
                f(
                    &format!("numeric.stack{i}.bn.running_mean"),
                    &[c],
                    &mut block.bn.running_mean,
                );
                f(
                    &format!("numeric.stack{i}.bn.running_var"),
                    &[c],
                    &mut block.bn.running_var,
                );
            }
        }
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params_mut(&mut |_, _, data| n += data.len());
        n
    }

    /// Concatenate all trainable tensors in walk order.
    pub fn flatten_params(&mut self) -> Vec<f64> {
        let mut flat = Vec::new();
        self.flatten_params_into(&mut flat);
        flat
    }

    /// Like [`Self::flatten_params`] but reusing the buffer's capacity.
    pub fn flatten_params_into(&mut self, out: &mut Vec<f64>) {
        out.clear();
        self.visit_params_mut(&mut |_, _, data| out.extend_from_slice(data));
    }

    /// Inverse of [`Self::flatten_params`].
    pub fn unflatten_params(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_params_mut(&mut |_, _, data| {
            let len = data.len();
            data.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn embed(
        &self,
        images: Option<&Feat>,
        sentences: Option<&SentenceBatch>,
        mode: Mode,
    ) -> Result<(Mat, EmbedCache)> {
        let (z_num, num_cache) = match (&self.numeric, images) {
            (Some(p), Some(x)) => {
                let (z, c) = encode_numeric(p, x, mode)?;
                (Some(z), Some(c))
            }
            (None, _) => (None, None),
            (Some(_), None) => {
                return Err(Error::Input(
                    "model expects the image modality but none was given".into(),
                ))
            }
        };
        let (z_tex, tex_cache) = match (&self.textual, sentences) {
            (Some(p), Some(s)) => {
                let (z, c) = encode_textual(p, s, mode)?;
                (Some(z), Some(c))
            }
            (None, _) => (None, None),
            (Some(_), None) => {
                return Err(Error::Input(
                    "model expects the sentence modality but none was given".into(),
                ))
            }
        };
        let (z, fuse_cache) = fuse(&self.fusion, z_num.as_ref(), z_tex.as_ref())?;
        Ok((
            z,
            EmbedCache {
                num: num_cache,
                tex: tex_cache,
                fuse: fuse_cache,
            },
        ))
    }

    /// Backpropagate d(z) through fusion and both encoders, accumulating
    /// into `g`. Returns the image-input gradient when images were used.
    pub fn embed_backward(
        &self,
        g: &mut Model,
        cache: &EmbedCache,
        dz: &Mat,
    ) -> Option<Feat> {
        let (d_num, d_tex) = fuse_backward(&self.fusion, &mut g.fusion, &cache.fuse, dz);
        let mut dx = None;
        if let (Some(p), Some(c), Some(d)) = (&self.numeric, &cache.num, d_num.as_ref()) {
            dx = Some(encode_numeric_backward(
                p,
                g.numeric.as_mut().expect("gradient mirrors model"),
                c,
                d,
            ));
        }
        if let (Some(p), Some(c), Some(d)) = (&self.textual, &cache.tex, d_tex.as_ref()) {
            encode_textual_backward(p, g.textual.as_mut().expect("gradient mirrors model"), c, d);
        }
        dx
    }

    pub fn class_logits(&self, z: &Mat) -> Mat {
        class_logits(&self.classifier, z)
    }

    pub fn class_probs(&self, z: &Mat) -> Mat {
        classify(&self.classifier, z)
    }

    /// Fold cached batch statistics into running estimates after a step.
    pub fn update_running_stats(&mut self, cache: &EmbedCache) {
        if let (Some(p), Some(c)) = (&mut self.numeric, &cache.num) {
            update_running_stats(p, c);
        }
    }
}

pub struct EmbedCache {
    pub num: Option<NumericCache>,
    pub tex: Option<TextualCache>,
    pub fuse: FuseCache,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    pub fn tiny_config(modalities: Modalities) -> ModelConfig {
        ModelConfig {
            modalities,
            k_known: 3,
            image_h: 3,
            image_w: 3,
            vocab_size: 12,
            l_max: 4,
            model_dim: 8,
            ffn_dim: 16,
            n_blocks: 1,
            n_heads: 1,
            d_z: 16,
            d_sub: 4,
            lambda: 10.0,
            sub_norm_cap: 10.0,
        }
    }

    #[test]
    fn flatten_round_trips() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut m = Model::new(tiny_config(Modalities::Both), &mut rng).unwrap();
        let flat = m.flatten_params();
        assert_eq!(flat.len(), m.param_count());
        let mut m2 = m.clone();
        let mut perturbed = flat.clone();
        for v in perturbed.iter_mut() {
            *v += 1.0;
        }
        m2.unflatten_params(&perturbed);
        let flat2 = m2.flatten_params();
        for (a, b) in flat.iter().zip(&flat2) {
            assert!((b - a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn image_only_model_has_no_textual_tensors() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut m = Model::new(tiny_config(Modalities::Image), &mut rng).unwrap();
        assert!(m.textual.is_none());
        let mut names = Vec::new();
        m.visit_tensors_mut(TensorSet::Params, &mut |n, _, _| names.push(n.to_string()));
        assert!(names.iter().all(|n| !n.starts_with("textual.")));
        assert!(names.iter().any(|n| n.starts_with("numeric.")));
    }

    #[test]
    fn visit_order_is_stable() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut m = Model::new(tiny_config(Modalities::Both), &mut rng).unwrap();
        let mut a = Vec::new();
        m.visit_tensors_mut(TensorSet::Params, &mut |n, _, _| a.push(n.to_string()));
        let mut b = Vec::new();
        m.visit_tensors_mut(TensorSet::Params, &mut |n, _, _| b.push(n.to_string()));
        assert_eq!(a, b);
        assert!(a.contains(&"sphere.radius".to_string()));
    }
}
