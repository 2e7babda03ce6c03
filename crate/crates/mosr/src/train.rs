//! Training loop, evaluation, α/β grid search, and the modality ablation.
//!
//! One run is strictly sequential over optimizer steps; grid-search cells
//! are independent runs and fan out over rayon. Everything is determined by
//! (seed, config, data).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Modalities, TrainConfig};
use crate::data::{
    build_vocab, compute_stats, make_image, tokenize, DatasetSplit, FeatureStats, MalwareRecord,
    MalwareSentence, Vocabulary,
};
use crate::detector::{
    cls_accuracy, compute_centroids, compute_thresholds, confusion_matrix, det_accuracy,
    detect_embedding, detect_probability_baseline, argmax_lowest, CentroidTable, DetectionResult,
    ThresholdMode, ThresholdTable,
};
use crate::dual_embedding::{disc_loss, excl_loss, sample_triplets, total_loss, TripletIndex};
use crate::error::{Error, Result};
use crate::fusion::{cross_entropy, cross_entropy_logits_grad};
use crate::model::{Model, ModelConfig};
use crate::nn::{linear_backward, Mode};
use crate::optim::Adam;
use crate::tensor::{l2_norm, Feat, Mat};
use crate::textual_encoder::SentenceBatch;

/// Data-preparation state fitted on `train_known` only.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub stats: Option<FeatureStats>,
    pub vocab: Option<Vocabulary>,
    pub modalities: Modalities,
    pub image_h: usize,
    pub image_w: usize,
    pub l_max: usize,
}

/// Model-ready tensors for one record set.
pub struct Tensorized {
    pub images: Option<Feat>,
    pub sentences: Option<Vec<MalwareSentence>>,
    pub labels: Vec<usize>,
}

impl Pipeline {
    pub fn fit(cfg: &TrainConfig, split: &DatasetSplit) -> Result<Self> {
        let stats = if cfg.modalities.uses_image() {
            Some(compute_stats(&split.train_known)?)
        } else {
            None
        };
        let vocab = if cfg.modalities.uses_sentence() {
            if cfg.modalities == Modalities::Sentence && !split.has_tokens() {
                return Err(Error::Config(
                    "sentence modality requested but the dataset carries no tokens".into(),
                ));
            }
            Some(build_vocab(&split.train_known, cfg.min_count))
        } else {
            None
        };
        Ok(Pipeline {
            stats,
            vocab,
            modalities: cfg.modalities,
            image_h: cfg.image_h,
            image_w: cfg.image_w,
            l_max: cfg.l_max,
        })
    }

    pub fn tensorize(&self, records: &[MalwareRecord]) -> Result<Tensorized> {
        let labels = records.iter().map(|r| r.family.id).collect();
        let images = match &self.stats {
            Some(stats) => {
                let mut feat = Feat::zeros(records.len(), 1, self.image_h, self.image_w);
                for (i, r) in records.iter().enumerate() {
                    let img = make_image(&r.numeric, self.image_h, self.image_w, stats)?;
                    feat.sample_mut(i).copy_from_slice(&img.pixels);
                }
                Some(feat)
            }
            None => None,
        };
        let sentences = match &self.vocab {
            Some(vocab) => Some(
                records
                    .iter()
                    .map(|r| tokenize(&r.tokens, vocab, self.l_max))
                    .collect(),
            ),
            None => None,
        };
        Ok(Tensorized {
            images,
            sentences,
            labels,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.as_ref().map(|v| v.size()).unwrap_or(2)
    }
}

fn gather_images(src: &Feat, idx: &[usize]) -> Feat {
    let mut out = Feat::zeros(idx.len(), src.c, src.h, src.w);
    for (row, &i) in idx.iter().enumerate() {
        out.sample_mut(row).copy_from_slice(src.sample(i));
    }
    out
}

fn gather_batch(t: &Tensorized, idx: &[usize]) -> Result<(Option<Feat>, Option<SentenceBatch>)> {
    let images = t.images.as_ref().map(|f| gather_images(f, idx));
    let sentences = match &t.sentences {
        Some(s) => {
            let refs: Vec<&MalwareSentence> = idx.iter().map(|&i| &s[i]).collect();
            Some(SentenceBatch::from_sentences(&refs)?)
        }
        None => None,
    };
    Ok((images, sentences))
}

fn rows(src: &Mat, range: std::ops::Range<usize>) -> Mat {
    let mut out = Mat::zeros(range.len(), src.cols);
    for (r, i) in range.clone().enumerate() {
        out.row_mut(r).copy_from_slice(src.row(i));
    }
    out
}

/// Per-batch loss components. `disc` and the hinge part of `excl` are
/// per-sample means so values are comparable across batch sizes (the last
/// batch of an epoch may be short); `cls` is the cross-entropy mean and the
/// ρ / −λ‖Θ_Sub‖ terms of `excl` enter once, as written.
#[derive(Debug, Clone, Copy)]
pub struct BatchLosses {
    pub cls: f64,
    pub disc: f64,
    pub excl: f64,
    pub total: f64,
    pub sub_norm: f64,
}

struct ForwardEval {
    losses: BatchLosses,
    z_a: Mat,
    probs: Mat,
    disc: crate::dual_embedding::DiscEval,
    excl: crate::dual_embedding::ExclEval,
    cache: crate::model::EmbedCache,
    d_z_cols: usize,
}

fn forward_losses(
    model: &Model,
    images: Option<&Feat>,
    sentences: Option<&SentenceBatch>,
    labels: &[usize],
    weights: &crate::config::LossWeights,
    margin: Option<f64>,
) -> Result<ForwardEval> {
    let n = labels.len();
    let (z, cache) = model.embed(images, sentences, Mode::Train)?;
    if z.rows != 3 * n {
        return Err(Error::Shape(format!(
            "triplet batch expects {} rows, got {}",
            3 * n,
            z.rows
        )));
    }
    let z_a = rows(&z, 0..n);
    let z_p = rows(&z, n..2 * n);
    let z_n = rows(&z, 2 * n..3 * n);

    let probs = model.class_probs(&z_a);
    let cls = cross_entropy(&probs, labels);
    let disc = disc_loss(&z_a, &z_p, &z_n, margin);
    let disc_mean = disc.loss / n as f64;
    let excl = excl_loss(&z_a, &model.sphere, 1.0 / n as f64);
    let total = total_loss(cls, disc_mean, excl.loss, weights)?;
    let d_z_cols = z.cols;
    Ok(ForwardEval {
        losses: BatchLosses {
            cls,
            disc: disc_mean,
            excl: excl.loss,
            total,
            sub_norm: excl.sub_norm,
        },
        z_a,
        probs,
        disc,
        excl,
        cache,
        d_z_cols,
    })
}

/// The per-batch objective alone, sharing the exact forward code of
/// [`batch_loss_and_grads`]; the finite-difference suite probes this.
pub fn batch_losses(
    model: &Model,
    images: Option<&Feat>,
    sentences: Option<&SentenceBatch>,
    labels: &[usize],
    weights: &crate::config::LossWeights,
    margin: Option<f64>,
) -> Result<BatchLosses> {
    Ok(forward_losses(model, images, sentences, labels, weights, margin)?.losses)
}

/// Forward the concatenated anchor|positive|negative batch, evaluate the
/// three sub-losses, and backpropagate their weighted sum into a gradient
/// mirror of the model. This is the exact computation one optimizer step
/// consumes; the gradient-check suite differentiates it directly.
pub fn batch_loss_and_grads(
    model: &Model,
    images: Option<&Feat>,
    sentences: Option<&SentenceBatch>,
    labels: &[usize],
    weights: &crate::config::LossWeights,
    margin: Option<f64>,
) -> Result<(BatchLosses, Model, crate::model::EmbedCache)> {
    let n = labels.len();
    let ForwardEval {
        losses,
        z_a,
        probs,
        disc,
        excl,
        cache,
        d_z_cols,
    } = forward_losses(model, images, sentences, labels, weights, margin)?;

    let mut grads = model.zeros_like();
    let mut dlogits = cross_entropy_logits_grad(&probs, labels);
    for v in dlogits.data.iter_mut() {
        *v *= weights.alpha;
    }
    let dz_cls = linear_backward(&model.classifier.fc, &mut grads.classifier.fc, &z_a, &dlogits);

    let gamma = weights.excl_weight();
    let beta_n = weights.beta / n as f64;
    let mut dz = Mat::zeros(3 * n, d_z_cols);
    for i in 0..n {
        let row = dz.row_mut(i);
        for j in 0..d_z_cols {
            row[j] =
                dz_cls.row(i)[j] + beta_n * disc.d_anchor.row(i)[j] + gamma * excl.d_z.row(i)[j];
        }
        let row = dz.row_mut(n + i);
        for j in 0..d_z_cols {
            row[j] = beta_n * disc.d_pos.row(i)[j];
        }
        let row = dz.row_mut(2 * n + i);
        for j in 0..d_z_cols {
            row[j] = beta_n * disc.d_neg.row(i)[j];
        }
    }
    for (gv, dv) in grads.sphere.sub.data.iter_mut().zip(&excl.d_sub.data) {
        *gv += gamma * dv;
    }
    grads.sphere.radius[0] += gamma * excl.d_rho;

    model.embed_backward(&mut grads, &cache, &dz);
    Ok((losses, grads, cache))
}

/// One loss-log line; the disc/excl columns are per-sample means so lines
/// are comparable across batch sizes (the last batch of an epoch may be
/// short).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub cls: f64,
    pub disc: f64,
    pub excl: f64,
    pub total: f64,
    pub rho: f64,
    pub sub_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochEval {
    pub epoch: usize,
    pub cls_acc: f64,
    pub det_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepLog>,
    pub epoch_evals: Vec<EpochEval>,
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: TrainHistory,
    pub pipeline: Pipeline,
    pub centroids: CentroidTable,
    pub thresholds: ThresholdTable,
}

pub fn train(cfg: &TrainConfig, split: &DatasetSplit) -> Result<TrainOutcome> {
    cfg.validate()?;
    let weights = cfg.weights();
    if split.k_known() != cfg.k_known {
        return Err(Error::Config(format!(
            "config k_known={} but the split has {} known families",
            cfg.k_known,
            split.k_known()
        )));
    }

    let pipeline = Pipeline::fit(cfg, split)?;
    let train_t = pipeline.tensorize(&split.train_known)?;
    let triplet_index = TripletIndex::build(split)?;

    let model_cfg = ModelConfig {
        modalities: cfg.modalities,
        k_known: cfg.k_known,
        image_h: cfg.image_h,
        image_w: cfg.image_w,
        vocab_size: pipeline.vocab_size(),
        l_max: cfg.l_max,
        model_dim: cfg.model_dim,
        ffn_dim: cfg.ffn_dim,
        n_blocks: cfg.n_blocks,
        n_heads: cfg.n_heads,
        d_z: cfg.d_z,
        d_sub: cfg.d_sub,
        lambda: cfg.lambda,
        sub_norm_cap: cfg.sub_norm_cap,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(model_cfg, &mut rng)?;
    let mut adam = Adam::new(cfg.learning_rate, model.param_count());

    let n_train = split.train_known.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = TrainHistory::default();
    let mut rho_initialized = false;
    let mut global_step = 0usize;
    let mut grad_buf: Vec<f64> = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch_idx in order.chunks(cfg.batch_size) {
            let n = batch_idx.len();
            let triplets = sample_triplets(&triplet_index, split, batch_idx, &mut rng)?;

            let mut gathered: Vec<usize> = Vec::with_capacity(3 * n);
            gathered.extend(triplets.iter().map(|t| t.anchor));
            gathered.extend(triplets.iter().map(|t| t.positive));
            gathered.extend(triplets.iter().map(|t| t.negative));
            let (images, sentences) = gather_batch(&train_t, &gathered)?;
            let labels: Vec<usize> = batch_idx.iter().map(|&i| train_t.labels[i]).collect();

            if !rho_initialized {
                // ρ starts at the median sub-space norm of the first batch,
                // placing the hinge in a gradient-active regime immediately.
                let (z0, _) = model.embed(images.as_ref(), sentences.as_ref(), Mode::Train)?;
                let mut norms: Vec<f64> = (0..n)
                    .map(|i| {
                        let sub = Mat::from_vec(1, z0.cols, z0.row(i).to_vec())
                            .matmul(&model.sphere.sub);
                        l2_norm(&sub.data)
                    })
                    .collect();
                norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
                model.sphere.radius[0] = norms[norms.len() / 2];
                rho_initialized = true;
            }

            let (losses, mut grads, cache) = batch_loss_and_grads(
                &model,
                images.as_ref(),
                sentences.as_ref(),
                &labels,
                &weights,
                cfg.disc_margin,
            )?;
            if !losses.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: global_step,
                    cls: losses.cls,
                    disc: losses.disc,
                    excl: losses.excl,
                    total: losses.total,
                });
            }
            history.steps.push(StepLog {
                epoch,
                step: global_step,
                cls: losses.cls,
                disc: losses.disc,
                excl: losses.excl,
                total: losses.total,
                rho: model.sphere.rho(),
                sub_norm: losses.sub_norm,
            });

            grads.flatten_params_into(&mut grad_buf);
            adam.begin_step();
            let mut offset = 0usize;
            model.visit_tensors_mut(crate::model::TensorSet::Params, &mut |_, _, data| {
                let len = data.len();
                adam.update_slice(data, &grad_buf[offset..offset + len], offset);
                offset += len;
            });

            // Post-step constraints: ρ ≥ 0 and ‖Θ_Sub‖ ≤ cap.
            if model.sphere.radius[0] < 0.0 {
                model.sphere.radius[0] = 0.0;
            }
            let sub_norm = model.sphere.sub_norm();
            if sub_norm > model.sphere.norm_cap {
                let scale = model.sphere.norm_cap / sub_norm;
                for v in model.sphere.sub.data.iter_mut() {
                    *v *= scale;
                }
            }

            model.update_running_stats(&cache);
            global_step += 1;
        }

        if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 {
            let report = evaluate(&model, &pipeline, split, cfg.threshold_mode)?;
            history.epoch_evals.push(EpochEval {
                epoch,
                cls_acc: report.metrics.cls_acc,
                det_acc: report.metrics.detection.as_ref().map(|d| d.det_acc),
            });
        }
    }

    // Detection tables are computed exactly once, on the frozen model.
    let (centroids, thresholds) = fit_tables(&model, &pipeline, split, cfg.threshold_mode)?;
    Ok(TrainOutcome {
        model,
        history,
        pipeline,
        centroids,
        thresholds,
    })
}

/// Embed a record set in fixed-size chunks (eval mode, caches dropped).
pub fn embed_all(model: &Model, t: &Tensorized) -> Result<Mat> {
    let n = t.labels.len();
    let d_z = model.fusion.d_z();
    let mut out = Mat::zeros(n, d_z);
    let chunk = 128;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let images = t.images.as_ref().map(|f| gather_images(f, &idx));
        let sentences = match &t.sentences {
            Some(s) => {
                let refs: Vec<&MalwareSentence> = idx.iter().map(|&i| &s[i]).collect();
                Some(SentenceBatch::from_sentences(&refs)?)
            }
            None => None,
        };
        let (z, _) = model.embed(images.as_ref(), sentences.as_ref(), Mode::Eval)?;
        for (r, i) in (start..end).enumerate() {
            out.row_mut(i).copy_from_slice(z.row(r));
        }
        start = end;
    }
    Ok(out)
}

fn fit_tables(
    model: &Model,
    pipeline: &Pipeline,
    split: &DatasetSplit,
    mode: ThresholdMode,
) -> Result<(CentroidTable, ThresholdTable)> {
    let train_t = pipeline.tensorize(&split.train_known)?;
    let z = embed_all(model, &train_t)?;
    let names = split.known_family_names();
    let centroids = compute_centroids(&z, &train_t.labels, split.k_known(), &names)?;
    let thresholds = compute_thresholds(&z, &train_t.labels, &centroids, mode);
    Ok((centroids, thresholds))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub best_delta_p: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub det_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetMetrics {
    pub tpr: f64,
    pub tnr: f64,
    pub det_acc: f64,
    pub baseline: Option<BaselineMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub cls_acc: f64,
    pub detection: Option<DetMetrics>,
    pub threshold_mode: ThresholdMode,
    pub delta_global: f64,
    pub delta_per_family: Vec<f64>,
    pub n_train: usize,
    pub n_test_known: usize,
    pub n_test_unknown: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub confusion: Vec<Vec<u64>>,
    pub family_names: Vec<String>,
    pub centroids: CentroidTable,
    pub thresholds: ThresholdTable,
}

/// Freeze the model, fit centroid/threshold tables on `train_known`, then
/// classify and detect on the test partitions. The probability-threshold
/// baseline is swept over δ_p ∈ {0.01, …, 0.99} on the same outputs.
pub fn evaluate(
    model: &Model,
    pipeline: &Pipeline,
    split: &DatasetSplit,
    mode: ThresholdMode,
) -> Result<EvalReport> {
    let (centroids, thresholds) = fit_tables(model, pipeline, split, mode)?;
    evaluate_with_tables(model, pipeline, split, &centroids, &thresholds)
}

/// Like [`evaluate`] but with precomputed tables (checkpoint path).
pub fn evaluate_with_tables(
    model: &Model,
    pipeline: &Pipeline,
    split: &DatasetSplit,
    centroids: &CentroidTable,
    thresholds: &ThresholdTable,
) -> Result<EvalReport> {
    let k = split.k_known();
    let names = split.known_family_names();

    let known_t = pipeline.tensorize(&split.test_known)?;
    let z_known = embed_all(model, &known_t)?;
    let logits_known = model.class_logits(&z_known);
    let probs_known = model.class_probs(&z_known);

    let predictions: Vec<usize> = (0..z_known.rows)
        .map(|i| argmax_lowest(logits_known.row(i)))
        .collect();
    let cls_acc = cls_accuracy(&predictions, &known_t.labels)?;
    let confusion = confusion_matrix(&predictions, &known_t.labels, k);

    let known_results: Vec<DetectionResult> = (0..z_known.rows)
        .map(|i| detect_embedding(z_known.row(i), logits_known.row(i), centroids, thresholds))
        .collect();

    let detection = if split.test_unknown.is_empty() {
        None
    } else {
        let unknown_t = pipeline.tensorize(&split.test_unknown)?;
        let z_unknown = embed_all(model, &unknown_t)?;
        let logits_unknown = model.class_logits(&z_unknown);
        let probs_unknown = model.class_probs(&z_unknown);
        let unknown_results: Vec<DetectionResult> = (0..z_unknown.rows)
            .map(|i| {
                detect_embedding(z_unknown.row(i), logits_unknown.row(i), centroids, thresholds)
            })
            .collect();
        let (tpr, tnr, det_acc) = det_accuracy(&known_results, &unknown_results)?;

        let mut baseline: Option<BaselineMetrics> = None;
        for i in 1..=99 {
            let delta_p = i as f64 / 100.0;
            let kb: Vec<DetectionResult> = (0..probs_known.rows)
                .map(|r| detect_probability_baseline(probs_known.row(r), delta_p))
                .collect();
            let ub: Vec<DetectionResult> = (0..probs_unknown.rows)
                .map(|r| detect_probability_baseline(probs_unknown.row(r), delta_p))
                .collect();
            let (btpr, btnr, bdet) = det_accuracy(&kb, &ub)?;
            if baseline.as_ref().map(|b| bdet > b.det_acc).unwrap_or(true) {
                baseline = Some(BaselineMetrics {
                    best_delta_p: delta_p,
                    tpr: btpr,
                    tnr: btnr,
                    det_acc: bdet,
                });
            }
        }
        Some(DetMetrics {
            tpr,
            tnr,
            det_acc,
            baseline,
        })
    };

    Ok(EvalReport {
        metrics: Metrics {
            cls_acc,
            detection,
            threshold_mode: thresholds.mode,
            delta_global: thresholds.delta_global,
            delta_per_family: thresholds.delta_per_family.clone(),
            n_train: split.train_known.len(),
            n_test_known: split.test_known.len(),
            n_test_unknown: split.test_unknown.len(),
        },
        confusion,
        family_names: names,
        centroids: centroids.clone(),
        thresholds: thresholds.clone(),
    })
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub cls_acc: f64,
    pub det_acc: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
}

/// The admissible (α, β) pairs at 0.1 spacing with all three weights ≥ 0.1:
/// a partially filled 8×8 grid with 36 cells.
pub fn grid_pairs() -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    for ai in 1..=8u32 {
        for bi in 1..=8u32 {
            if ai + bi <= 9 {
                pairs.push((ai as f64 / 10.0, bi as f64 / 10.0));
            }
        }
    }
    pairs
}

/// Train one run per admissible (α, β) pair — same seed in every cell so
/// the panels are comparable — and record Cls_Acc, Det_Acc and their mean.
pub fn grid_search(
    template: &TrainConfig,
    split: &DatasetSplit,
    epochs_per_cell: usize,
) -> Result<GridResult> {
    let pairs = grid_pairs();
    let cells: Result<Vec<GridCell>> = pairs
        .par_iter()
        .map(|&(alpha, beta)| {
            let mut cfg = template.clone();
            cfg.alpha = alpha;
            cfg.beta = beta;
            cfg.epochs = epochs_per_cell;
            cfg.eval_every = 0;
            let outcome = train(&cfg, split)?;
            let report = evaluate_with_tables(
                &outcome.model,
                &outcome.pipeline,
                split,
                &outcome.centroids,
                &outcome.thresholds,
            )?;
            let det_acc = report
                .metrics
                .detection
                .as_ref()
                .map(|d| d.det_acc)
                .unwrap_or(f64::NAN);
            Ok(GridCell {
                alpha,
                beta,
                cls_acc: report.metrics.cls_acc,
                det_acc,
                mean: (report.metrics.cls_acc + det_acc) / 2.0,
            })
        })
        .collect();
    Ok(GridResult { cells: cells? })
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub modality: Modalities,
    pub cls_acc: f64,
    pub det_acc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Train and evaluate image-only, sentence-only, and both-modality
/// configurations with the same seed.
pub fn ablate(cfg: &TrainConfig, split: &DatasetSplit) -> Result<AblationReport> {
    if !split.has_tokens() {
        return Err(Error::Config(
            "ablation needs both modalities, but the dataset carries no tokens".into(),
        ));
    }
    let variants = [Modalities::Image, Modalities::Sentence, Modalities::Both];
    let rows: Result<Vec<AblationRow>> = variants
        .par_iter()
        .map(|&modality| {
            let mut c = cfg.clone();
            c.modalities = modality;
            let outcome = train(&c, split)?;
            let report = evaluate_with_tables(
                &outcome.model,
                &outcome.pipeline,
                split,
                &outcome.centroids,
                &outcome.thresholds,
            )?;
            Ok(AblationRow {
                modality,
                cls_acc: report.metrics.cls_acc,
                det_acc: report.metrics.detection.as_ref().map(|d| d.det_acc),
            })
        })
        .collect();
    Ok(AblationReport { rows: rows? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_exactly_36_pairs_and_no_half_half() {
        let pairs = grid_pairs();
        assert_eq!(pairs.len(), 36);
        assert!(!pairs.contains(&(0.5, 0.5)));
        assert!(pairs.contains(&(0.3, 0.5)));
        for &(a, b) in &pairs {
            assert!(1.0 - a - b >= 0.1 - 1e-9);
        }
    }
}
