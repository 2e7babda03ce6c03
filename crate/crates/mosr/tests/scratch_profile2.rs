use mosr::data::{gen_synthetic, split_known_unknown, SyntheticSpec};
use mosr::config::TrainConfig;
use mosr::train::Pipeline;
use mosr::numeric_encoder::{encode_numeric, NumericEncoderParams, global_receptive, local_receptive, shared_stack};
use mosr::textual_encoder::{encode_textual, TextualEncoderParams, SentenceBatch};
use mosr::nn::Mode;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

#[test]
#[ignore]
fn profile_encoders() {
    let spec = SyntheticSpec {
        k_known: 5, k_unknown: 2, samples_per_family: 200, feature_dim: 16,
        cluster_separation: 8.0, modality_agreement: 0.5, l_max: 16, vocab_size: 96,
    };
    let records = gen_synthetic(&spec, 7).unwrap();
    let mut cfg = TrainConfig::with_k_known(5);
    cfg.image_h = 4; cfg.image_w = 4; cfg.l_max = 16;
    let split = split_known_unknown(&records, 5, 0.8, 7).unwrap();
    let pipeline = Pipeline::fit(&cfg, &split).unwrap();
    let t = pipeline.tensorize(&split.train_known).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let nump = NumericEncoderParams::new(4, 4, &mut rng).unwrap();
    let texp = TextualEncoderParams::new(pipeline.vocab_size(), 16, 64, 128, 2, 1, &mut rng).unwrap();

    let idx: Vec<usize> = (0..96).collect();
    let src = t.images.as_ref().unwrap();
    let mut images = mosr::tensor::Feat::zeros(96, 1, 4, 4);
    for (r, &i) in idx.iter().enumerate() { images.sample_mut(r).copy_from_slice(src.sample(i)); }
    let sents = t.sentences.as_ref().unwrap();
    let refs: Vec<&mosr::data::MalwareSentence> = idx.iter().map(|&i| &sents[i]).collect();
    let batch = SentenceBatch::from_sentences(&refs).unwrap();

    let t0 = Instant::now();
    for _ in 0..5 { std::hint::black_box(encode_numeric(&nump, &images, Mode::Train).unwrap().0); }
    println!("numeric fwd x5: {:?}", t0.elapsed());

    let t0 = Instant::now();
    for _ in 0..5 { std::hint::black_box(encode_textual(&texp, &batch, Mode::Train).unwrap().0); }
    println!("textual fwd x5: {:?}", t0.elapsed());

    let t0 = Instant::now();
    for _ in 0..5 { std::hint::black_box(global_receptive(&nump, &images).unwrap().0); }
    println!("  global branch x5: {:?}", t0.elapsed());
    let (g, _) = global_receptive(&nump, &images).unwrap();
    let t0 = Instant::now();
    for _ in 0..5 { std::hint::black_box(shared_stack(&nump, &g, Mode::Train).unwrap().0); }
    println!("  stack x5: {:?}", t0.elapsed());
    let t0 = Instant::now();
    for _ in 0..5 { std::hint::black_box(local_receptive(&nump, &images).unwrap().0); }
    println!("  local 1x1 x5: {:?}", t0.elapsed());
}
