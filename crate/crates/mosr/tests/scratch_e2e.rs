use mosr::config::TrainConfig;
use mosr::data::{gen_synthetic, split_known_unknown, SyntheticSpec};
use mosr::train::{evaluate_with_tables, train};
use std::time::Instant;

#[test]
#[ignore]
fn e2e_calibration() {
    let spec = SyntheticSpec {
        k_known: 5,
        k_unknown: 2,
        samples_per_family: 200,
        feature_dim: 16,
        cluster_separation: 8.0,
        modality_agreement: 0.5,
        l_max: 16,
        vocab_size: 96,
    };
    let records = gen_synthetic(&spec, 7).unwrap();
    let mut cfg = TrainConfig::with_k_known(5);
    cfg.image_h = 4;
    cfg.image_w = 4;
    cfg.l_max = 16;
    cfg.epochs = 30;
    cfg.disc_margin = Some(1.0);
    cfg.seed = 7;
    let split = split_known_unknown(&records, 5, 0.8, cfg.seed).unwrap();
    println!("train {} / test_known {} / test_unknown {}", split.train_known.len(), split.test_known.len(), split.test_unknown.len());
    let t = Instant::now();
    let outcome = train(&cfg, &split).unwrap();
    println!("training took {:?}", t.elapsed());
    let report = evaluate_with_tables(&outcome.model, &outcome.pipeline, &split, &outcome.centroids, &outcome.thresholds).unwrap();
    let det = report.metrics.detection.as_ref().unwrap();
    println!("cls_acc={:.4} tpr={:.4} tnr={:.4} det_acc={:.4}", report.metrics.cls_acc, det.tpr, det.tnr, det.det_acc);
    if let Some(b) = &det.baseline {
        println!("baseline: delta_p={:.2} det_acc={:.4}", b.best_delta_p, b.det_acc);
    }
    let first = &outcome.history.steps[0];
    let last_epoch_start = outcome.history.steps.iter().position(|s| s.epoch == 29).unwrap();
    let last_mean: f64 = outcome.history.steps[last_epoch_start..].iter().map(|s| s.total).sum::<f64>() / (outcome.history.steps.len() - last_epoch_start) as f64;
    println!("first-step total={:.4}; epoch-29 mean total={:.4}", first.total, last_mean);
    println!("epoch0 mean total={:.4}", outcome.history.steps.iter().filter(|s| s.epoch == 0).map(|s| s.total).sum::<f64>() / 25.0);
}
