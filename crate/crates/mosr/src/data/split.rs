//! Known/unknown family split with per-family stratified train/test
//! partitioning. The first `k_known` family ids (ascending id order) are the
//! known families; everything else is unknown and appears only at test time.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, MalwareRecord};
use crate::error::{Error, Result};

/// Record indices per partition; enough to reproduce a split exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fraction_permille: u32,
    pub k_known: usize,
    pub train_known: Vec<usize>,
    pub test_known: Vec<usize>,
    pub test_unknown: Vec<usize>,
}

pub fn split_known_unknown(
    records: &[MalwareRecord],
    k_known: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if records.is_empty() {
        return Err(Error::Split("no records to split".into()));
    }
    let n_families = records.iter().map(|r| r.family.id + 1).max().unwrap_or(0);
    if k_known == 0 || k_known > n_families {
        return Err(Error::Split(format!(
            "k_known={k_known} out of range for {n_families} families"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train_fraction={train_fraction} must lie strictly between 0 and 1"
        )));
    }

    let mut by_family: Vec<Vec<usize>> = vec![Vec::new(); n_families];
    for (i, r) in records.iter().enumerate() {
        by_family[r.family.id].push(i);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut manifest = SplitManifest {
        seed,
        train_fraction_permille: (train_fraction * 1000.0).round() as u32,
        k_known,
        train_known: Vec::new(),
        test_known: Vec::new(),
        test_unknown: Vec::new(),
    };

    for (fam, indices) in by_family.iter().enumerate() {
        if fam < k_known {
            if indices.len() < 2 {
                let name = indices
                    .first()
                    .map(|&i| records[i].family.name.clone())
                    .unwrap_or_else(|| format!("id {fam}"));
                return Err(Error::Split(format!(
                    "known family {name:?} has {} sample(s); need at least one per partition",
                    indices.len()
                )));
            }
            let mut shuffled = indices.clone();
            shuffled.shuffle(&mut rng);
            let n_train = ((indices.len() as f64 * train_fraction + 1e-9).floor() as usize)
                .clamp(1, indices.len() - 1);
            manifest.train_known.extend(&shuffled[..n_train]);
            manifest.test_known.extend(&shuffled[n_train..]);
        } else {
            manifest.test_unknown.extend(indices);
        }
    }

    let gather = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train_known: gather(&manifest.train_known),
        test_known: gather(&manifest.test_known),
        test_unknown: gather(&manifest.test_unknown),
        seed,
        train_fraction,
        manifest,
    })
}
