//! Brute-force oracles for the aggregation operators: the non-local global
//! receptive module against an explicit O((HW)²) double loop, and
//! self-attention against a per-pair double loop. The oracles recompute
//! everything from raw parameters with plain loops and the literal
//! exp/sum normalization — no shared code with the implementation.

mod common;

use std::time::Instant;

use common::nonlocal_brute_force;
use mosr::numeric_encoder::{global_receptive, NumericEncoderParams};
use mosr::tensor::{Feat, Mat};
use mosr::textual_encoder::{self_attention, AttentionParams, TextualEncoderParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[test]
fn nonlocal_matches_double_loop_up_to_8x8_within_1e6() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for hw in 1..=8usize {
        let p = NumericEncoderParams::new(hw, hw, &mut rng).unwrap();
        let x = Feat::from_vec(
            1,
            1,
            hw,
            hw,
            (0..hw * hw).map(|_| rng.random::<f64>()).collect(),
        );
        let (fast, _) = global_receptive(&p, &x).unwrap();
        let slow = nonlocal_brute_force(&p, &x);
        assert_eq!(fast.data.len(), slow.len());
        for (a, b) in fast.data.iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-6, "max abs diff {worst:.3e}");
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "oracle comparison took {elapsed:?}"
    );
    println!("nonlocal oracle: max abs diff {worst:.3e} in {elapsed:?}");
}

#[test]
fn nonlocal_single_position_and_batch_consistency() {
    // Independent cross-check: a batch of two samples must agree with the
    // per-sample brute force individually.
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let p = NumericEncoderParams::new(4, 4, &mut rng).unwrap();
    let a: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
    let mut both = a.clone();
    both.extend_from_slice(&b);
    let batch = Feat::from_vec(2, 1, 4, 4, both);
    let (out, _) = global_receptive(&p, &batch).unwrap();
    let oracle_a = nonlocal_brute_force(&p, &Feat::from_vec(1, 1, 4, 4, a));
    let oracle_b = nonlocal_brute_force(&p, &Feat::from_vec(1, 1, 4, 4, b));
    let half = out.data.len() / 2;
    for (x, y) in out.data[..half].iter().zip(&oracle_a) {
        assert!((x - y).abs() <= 1e-9);
    }
    for (x, y) in out.data[half..].iter().zip(&oracle_b) {
        assert!((x - y).abs() <= 1e-9);
    }
}

/// Per-pair attention oracle: q_i = Q s_i, k_i = K s_i, v_i = V s_i with
/// explicit loops, then ṽ_i = Σ_j softmax_j(q_i·k_j) v_j over non-pad j.
fn attention_brute_force(p: &AttentionParams, x: &Mat, valid: &[bool]) -> Mat {
    let (l, d) = (x.rows, x.cols);
    let apply = |m: &Mat, i: usize| -> Vec<f64> {
        // row-vector convention: out = x_i · m
        (0..d)
            .map(|c| (0..d).map(|r| x.data[i * d + r] * m.data[r * d + c]).sum())
            .collect()
    };
    let q: Vec<Vec<f64>> = (0..l).map(|i| apply(&p.q, i)).collect();
    let k: Vec<Vec<f64>> = (0..l).map(|i| apply(&p.k, i)).collect();
    let v: Vec<Vec<f64>> = (0..l).map(|i| apply(&p.v, i)).collect();
    let mut out = Mat::zeros(l, d);
    for i in 0..l {
        let mut weights = vec![0.0; l];
        let mut total = 0.0;
        for j in 0..l {
            if !valid[j] {
                continue;
            }
            let dot: f64 = q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum();
            weights[j] = dot.exp();
            total += weights[j];
        }
        for j in 0..l {
            if weights[j] == 0.0 {
                continue;
            }
            let wij = weights[j] / total;
            for c in 0..d {
                out.data[i * d + c] += wij * v[j][c];
            }
        }
    }
    out
}

#[test]
fn attention_matches_per_pair_double_loop() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let enc = TextualEncoderParams::new(10, 5, 16, 24, 1, 1, &mut rng).unwrap();
    let p = &enc.blocks[0].attn;
    let x = mosr::nn::randn_mat(5, 16, 1.0, &mut rng);
    for valid in [
        vec![true; 5],
        vec![true, true, true, false, false],
        vec![true, false, true, false, true],
    ] {
        let (fast, _) = self_attention(p, 1, &x, &valid);
        let slow = attention_brute_force(p, &x, &valid);
        let mut worst = 0.0f64;
        for (a, b) in fast.data.iter().zip(&slow.data) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst <= 1e-6, "mask {valid:?}: max abs diff {worst:.3e}");
    }
}
