//! Dataset-layer oracles: byte-identical JSONL round trips, split
//! determinism, train-only normalization statistics, synthetic-cluster
//! separability via a brute-force nearest-centroid classifier, and the
//! uniformity of triplet negative sampling.

mod common;

use std::io::Cursor;

use mosr::data::{
    build_vocab, compute_stats, gen_synthetic, make_image, parse_jsonl, split_known_unknown,
    tokenize, JsonlSchema, SyntheticSpec,
};
use mosr::dual_embedding::{sample_triplets, TripletIndex};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn synth_spec() -> SyntheticSpec {
    SyntheticSpec {
        k_known: 5,
        k_unknown: 2,
        samples_per_family: 200,
        feature_dim: 16,
        cluster_separation: 8.0,
        modality_agreement: 0.5,
        l_max: 16,
        vocab_size: 96,
    }
}

#[test]
fn thousand_line_jsonl_round_trip_is_byte_identical() {
    let spec = SyntheticSpec {
        samples_per_family: 143, // 7 families × 143 = 1001 lines
        ..synth_spec()
    };
    let records = gen_synthetic(&spec, 9).unwrap();
    assert!(records.len() > 1000);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.jsonl");
    mosr::data::save_jsonl(&path, &records).unwrap();
    let first = std::fs::read(&path).unwrap();

    let loaded = mosr::data::load_jsonl(&path, &JsonlSchema::default()).unwrap();
    assert_eq!(records, loaded);

    let path2 = dir.path().join("dump2.jsonl");
    mosr::data::save_jsonl(&path2, &loaded).unwrap();
    let second = std::fs::read(&path2).unwrap();
    assert_eq!(first, second, "write→load→write must be byte-identical");
}

#[test]
fn custom_schema_field_names_are_honored() {
    let line = "{\"fam\":\"a\",\"feats\":[1.0,2.0],\"imports\":[\"x\"]}\n";
    let schema = JsonlSchema {
        family: "fam".into(),
        numeric: "feats".into(),
        tokens: "imports".into(),
    };
    let recs = parse_jsonl(Cursor::new(line.as_bytes()), &schema).unwrap();
    assert_eq!(recs[0].numeric, vec![1.0, 2.0]);
    assert_eq!(recs[0].tokens, vec!["x"]);
}

#[test]
fn split_is_deterministic_and_disjoint() {
    let records = gen_synthetic(&synth_spec(), 4).unwrap();
    let a = split_known_unknown(&records, 5, 0.8, 123).unwrap();
    let b = split_known_unknown(&records, 5, 0.8, 123).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_vec(&a.manifest).unwrap(),
        serde_json::to_vec(&b.manifest).unwrap()
    );

    // Train/test known indices are disjoint; unknown families never leak.
    let mut seen = std::collections::HashSet::new();
    for idx in a.manifest.train_known.iter().chain(&a.manifest.test_known) {
        assert!(seen.insert(*idx), "index {idx} appears twice");
    }
    for r in a.train_known.iter().chain(&a.test_known) {
        assert!(r.family.id < 5);
    }
    for r in &a.test_unknown {
        assert!(r.family.id >= 5);
    }
}

#[test]
fn normalization_stats_depend_only_on_train_partition() {
    let records = gen_synthetic(&synth_spec(), 31).unwrap();
    let split = split_known_unknown(&records, 5, 0.8, 7).unwrap();
    let stats = compute_stats(&split.train_known).unwrap();

    // Mutating the held-out records cannot change the statistics.
    let mut mutated = split.clone();
    for r in mutated.test_known.iter_mut().chain(mutated.test_unknown.iter_mut()) {
        for v in r.numeric.iter_mut() {
            *v += 1000.0;
        }
    }
    let stats_after = compute_stats(&mutated.train_known).unwrap();
    assert_eq!(stats, stats_after);

    // Held-out images still satisfy the pixel invariant via clamping.
    for r in mutated.test_unknown.iter().take(20) {
        let img = make_image(&r.numeric, 4, 4, &stats_after).unwrap();
        assert!(img.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}

#[test]
fn nearest_centroid_oracle_reaches_99_percent_on_separated_clusters() {
    // Brute-force oracle on the raw numeric vectors, no model involved:
    // classify each held-out known sample by its nearest train-split
    // family mean.
    let records = gen_synthetic(&synth_spec(), 2718).unwrap();
    let split = split_known_unknown(&records, 5, 0.8, 99).unwrap();
    let dim = split.feature_dim();

    let mut means = vec![vec![0.0f64; dim]; 5];
    let mut counts = vec![0usize; 5];
    for r in &split.train_known {
        counts[r.family.id] += 1;
        for (m, v) in means[r.family.id].iter_mut().zip(&r.numeric) {
            *m += v;
        }
    }
    for (mean, &c) in means.iter_mut().zip(&counts) {
        for v in mean.iter_mut() {
            *v /= c as f64;
        }
    }

    let mut correct = 0usize;
    for r in &split.test_known {
        let mut best = (f64::INFINITY, 0usize);
        for (fam, mean) in means.iter().enumerate() {
            let d: f64 = mean
                .iter()
                .zip(&r.numeric)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, fam);
            }
        }
        if best.1 == r.family.id {
            correct += 1;
        }
    }
    let acc = correct as f64 / split.test_known.len() as f64;
    assert!(acc >= 0.99, "nearest-centroid accuracy {acc}");
}

#[test]
fn vocabulary_is_identical_across_independent_builds() {
    let records = gen_synthetic(&synth_spec(), 5).unwrap();
    let split = split_known_unknown(&records, 5, 0.8, 5).unwrap();
    let v1 = build_vocab(&split.train_known, 1);
    let v2 = build_vocab(&split.train_known, 1);
    assert_eq!(v1, v2);
    assert_eq!(v1.to_json(), v2.to_json());
}

#[test]
fn unknown_family_tokens_map_to_unk_under_train_vocab() {
    let records = gen_synthetic(&synth_spec(), 8).unwrap();
    let split = split_known_unknown(&records, 5, 0.8, 8).unwrap();
    let vocab = build_vocab(&split.train_known, 1);
    // Unknown families carry their own signatures, unseen in training.
    let unk_sentence = tokenize(&split.test_unknown[0].tokens, &vocab, 16);
    let n_unk = unk_sentence
        .ids
        .iter()
        .filter(|&&id| id == unk_sentence.unk_id)
        .count();
    assert!(n_unk > 0, "expected out-of-vocabulary tokens");
}

#[test]
fn negative_sampling_is_uniform_over_other_families() {
    // χ² frequency test over 10⁴ draws: negatives for a fixed anchor must
    // be uniform over the union of all other families' samples.
    let spec = SyntheticSpec {
        k_known: 3,
        k_unknown: 0
            .max(1), // one unknown family keeps the generator happy
        samples_per_family: 7,
        feature_dim: 4,
        cluster_separation: 5.0,
        modality_agreement: 0.5,
        l_max: 4,
        vocab_size: 32,
    };
    let records = gen_synthetic(&spec, 55).unwrap();
    let split = split_known_unknown(&records, 3, 0.8, 55).unwrap();
    let index = TripletIndex::build(&split).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4242);

    let anchor = 0usize;
    let anchor_family = split.train_known[anchor].family.id;
    let candidates: Vec<usize> = (0..split.train_known.len())
        .filter(|&i| split.train_known[i].family.id != anchor_family)
        .collect();
    let mut counts = std::collections::HashMap::new();
    let draws = 10_000usize;
    for _ in 0..draws {
        let t = sample_triplets(&index, &split, &[anchor], &mut rng).unwrap()[0];
        assert_ne!(split.train_known[t.negative].family.id, anchor_family);
        assert_eq!(
            split.train_known[t.positive].family.id, anchor_family,
            "positive must share the anchor family"
        );
        assert_ne!(t.positive, t.anchor);
        *counts.entry(t.negative).or_insert(0usize) += 1;
    }
    let expected = draws as f64 / candidates.len() as f64;
    let chi2: f64 = candidates
        .iter()
        .map(|c| {
            let obs = *counts.get(c).unwrap_or(&0) as f64;
            (obs - expected) * (obs - expected) / expected
        })
        .sum();
    // df = candidates − 1; p ≈ 0.001 critical value for df ≈ 9..11 is ~29.
    let df = candidates.len() - 1;
    let critical = 29.0 + 2.0 * (df as f64 - 9.0).max(0.0);
    assert!(chi2 < critical, "chi² = {chi2:.2} over df = {df}");
}

#[test]
fn singleton_family_triplet_error_names_the_family() {
    use mosr::data::{FamilyLabel, MalwareRecord};
    let mut records = Vec::new();
    for (fam, n) in [(0usize, 5usize), (1, 5)] {
        for i in 0..n {
            records.push(MalwareRecord {
                family: FamilyLabel {
                    id: fam,
                    name: format!("fam{fam}"),
                },
                numeric: vec![i as f64, fam as f64],
                tokens: vec![],
            });
        }
    }
    let mut split = split_known_unknown(&records, 2, 0.8, 3).unwrap();
    // Leave family 1 with a single train sample.
    split.train_known.retain(|r| r.family.id == 0 || r.numeric[0] < 1.0);
    let err = TripletIndex::build(&split).unwrap_err();
    assert!(err.to_string().contains("fam1"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pixels_always_in_unit_interval(values in prop::collection::vec(-1e6f64..1e6, 1..40), h in 1usize..6, w in 1usize..6) {
        use mosr::data::{FamilyLabel, MalwareRecord};
        let rec = |numeric: Vec<f64>| MalwareRecord {
            family: FamilyLabel { id: 0, name: "f".into() },
            numeric,
            tokens: vec![],
        };
        let lo = rec(values.iter().map(|v| v - 1.0).collect());
        let hi = rec(values.iter().map(|v| v + 1.0).collect());
        let stats = compute_stats(&[lo, hi]).unwrap();
        let img = make_image(&values, h, w, &stats).unwrap();
        prop_assert_eq!(img.pixels.len(), h * w);
        prop_assert!(img.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn token_ids_always_in_vocab_range(tokens in prop::collection::vec("[a-z]{1,6}", 0..20), l_max in 1usize..12) {
        use mosr::data::{FamilyLabel, MalwareRecord};
        let corpus = vec![MalwareRecord {
            family: FamilyLabel { id: 0, name: "f".into() },
            numeric: vec![0.0],
            tokens: tokens.iter().take(7).cloned().collect(),
        }];
        let vocab = build_vocab(&corpus, 1);
        let sentence = tokenize(&tokens, &vocab, l_max);
        prop_assert_eq!(sentence.ids.len(), l_max);
        prop_assert!(sentence.ids.iter().all(|&id| (id as usize) < vocab.size()));
    }
}
