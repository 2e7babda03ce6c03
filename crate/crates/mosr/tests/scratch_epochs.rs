use mosr::config::TrainConfig;
use mosr::data::{gen_synthetic, split_known_unknown, SyntheticSpec};
use mosr::train::train;

#[test]
#[ignore]
fn epoch_trend() {
    let spec = SyntheticSpec {
        k_known: 5, k_unknown: 2, samples_per_family: 200, feature_dim: 16,
        cluster_separation: 8.0, modality_agreement: 0.5, l_max: 16, vocab_size: 96,
    };
    let records = gen_synthetic(&spec, 7).unwrap();
    let mut cfg = TrainConfig::with_k_known(5);
    cfg.image_h = 4; cfg.image_w = 4; cfg.l_max = 16;
    cfg.epochs = 21;
    cfg.seed = 7;
    cfg.disc_margin = Some(1.0);
    let split = split_known_unknown(&records, 5, 0.8, cfg.seed).unwrap();
    let outcome = train(&cfg, &split).unwrap();
    for e in 0..21 {
        let steps: Vec<_> = outcome.history.steps.iter().filter(|s| s.epoch == e).collect();
        let total: f64 = steps.iter().map(|s| s.total).sum::<f64>() / steps.len() as f64;
        let cls: f64 = steps.iter().map(|s| s.cls).sum::<f64>() / steps.len() as f64;
        let disc: f64 = steps.iter().map(|s| s.disc).sum::<f64>() / steps.len() as f64;
        let excl: f64 = steps.iter().map(|s| s.excl).sum::<f64>() / steps.len() as f64;
        let rho = steps.last().unwrap().rho;
        println!("epoch {e:2}: total={total:9.4} cls={cls:7.4} disc={disc:7.4} excl={excl:9.4} rho={rho:7.3}");
    }
}
