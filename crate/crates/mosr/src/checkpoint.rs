//! Single-archive checkpoint: an 8-byte magic, a version word, a JSON
//! manifest (shapes, dims, config hash, vocabulary, split indices), then
//! all tensors as little-endian f64 keyed by layer path.
//!
//! The reader treats its input as untrusted: every offset, length, and
//! shape is bounds-checked before any slice is taken.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureStats, SplitManifest, Vocabulary};
use crate::detector::{CentroidTable, ThresholdMode, ThresholdTable};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, TensorSet};
use crate::tensor::Mat;

const MAGIC: &[u8; 8] = b"MOSRCKPT";
const VERSION: u32 = 1;
/// Hard cap on total tensor payload (f64 count) accepted from disk.
const MAX_PAYLOAD: u64 = 1 << 28;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the data section, in f64 units.
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    model: ModelConfig,
    families: Vec<String>,
    threshold_mode: ThresholdMode,
    vocab: Option<BTreeMap<String, u32>>,
    split: Option<SplitManifest>,
    entries: Vec<Entry>,
}

/// Trained-pipeline state carried alongside the network weights.
#[derive(Debug, Clone)]
pub struct CheckpointExtras {
    pub config_hash: String,
    pub families: Vec<String>,
    pub threshold_mode: ThresholdMode,
    pub vocab: Option<Vocabulary>,
    pub split: Option<SplitManifest>,
    pub feature_stats: Option<FeatureStats>,
    pub centroids: Option<CentroidTable>,
    pub thresholds: Option<ThresholdTable>,
}

fn push_entry(entries: &mut Vec<Entry>, data: &mut Vec<f64>, name: &str, shape: &[usize], t: &[f64]) {
    entries.push(Entry {
        name: name.to_string(),
        shape: shape.to_vec(),
        offset: data.len() as u64,
        len: t.len() as u64,
    });
    data.extend_from_slice(t);
}

pub fn write_checkpoint(model: &mut Model, extras: &CheckpointExtras) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for set in [TensorSet::Params, TensorSet::Buffers] {
        model.visit_tensors_mut(set, &mut |name, shape, t| {
            push_entry(&mut entries, &mut data, name, shape, t);
        });
    }
    if let Some(stats) = &extras.feature_stats {
        push_entry(&mut entries, &mut data, "extra.feature_min", &[stats.min.len()], &stats.min);
        push_entry(&mut entries, &mut data, "extra.feature_max", &[stats.max.len()], &stats.max);
    }
    if let Some(c) = &extras.centroids {
        push_entry(
            &mut entries,
            &mut data,
            "extra.centroids",
            &[c.centroids.rows, c.centroids.cols],
            &c.centroids.data,
        );
        let counts: Vec<f64> = c.counts.iter().map(|&n| n as f64).collect();
        push_entry(&mut entries, &mut data, "extra.centroid_counts", &[counts.len()], &counts);
    }
    if let Some(t) = &extras.thresholds {
        push_entry(
            &mut entries,
            &mut data,
            "extra.delta_per_family",
            &[t.delta_per_family.len()],
            &t.delta_per_family,
        );
        push_entry(&mut entries, &mut data, "extra.delta_global", &[1], &[t.delta_global]);
    }

    let manifest = Manifest {
        config_hash: extras.config_hash.clone(),
        model: model.cfg.clone(),
        families: extras.families.clone(),
        threshold_mode: extras.threshold_mode,
        vocab: extras.vocab.as_ref().map(|v| v.to_map()),
        split: extras.split.clone(),
        entries,
    };
    let manifest_bytes = serde_json::to_vec(&manifest).expect("manifest serialization cannot fail");

    let mut out = Vec::with_capacity(20 + manifest_bytes.len() + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    for v in &data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &mut Model, extras: &CheckpointExtras) -> Result<()> {
    std::fs::write(path, write_checkpoint(model, extras)).map_err(|e| Error::io(path, e))
}

/// Parse a checkpoint from untrusted bytes.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(Model, CheckpointExtras)> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing or wrong magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let manifest_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let rest = &bytes[20..];
    if manifest_len > rest.len() {
        return Err(bad("manifest length exceeds file size"));
    }
    let manifest: Manifest = serde_json::from_slice(&rest[..manifest_len])
        .map_err(|e| Error::Checkpoint(format!("manifest json: {e}")))?;
    let payload = &rest[manifest_len..];
    if payload.len() % 8 != 0 {
        return Err(bad("tensor payload is not a whole number of f64 values"));
    }
    let n_values = (payload.len() / 8) as u64;
    if n_values > MAX_PAYLOAD {
        return Err(bad("tensor payload exceeds size cap"));
    }

    let mut table: BTreeMap<&str, (&Entry, Vec<f64>)> = BTreeMap::new();
    for e in &manifest.entries {
        let numel: u64 = e
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| bad("shape product overflows"))?;
        if numel != e.len {
            return Err(Error::Checkpoint(format!(
                "entry {:?}: shape {:?} disagrees with len {}",
                e.name, e.shape, e.len
            )));
        }
        let end = e
            .offset
            .checked_add(e.len)
            .ok_or_else(|| bad("entry range overflows"))?;
        if end > n_values {
            return Err(Error::Checkpoint(format!(
                "entry {:?} reaches past the data section",
                e.name
            )));
        }
        let start = e.offset as usize * 8;
        let values: Vec<f64> = payload[start..start + e.len as usize * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if table.insert(e.name.as_str(), (e, values)).is_some() {
            return Err(Error::Checkpoint(format!("duplicate entry {:?}", e.name)));
        }
    }

    // Rebuild the model shape from the manifest config, then fill every
    // tensor from the archive.
    let mut model = Model::new(manifest.model.clone(), &mut ChaCha20Rng::seed_from_u64(0))?;
    let mut fill_error: Option<Error> = None;
    for set in [TensorSet::Params, TensorSet::Buffers] {
        model.visit_tensors_mut(set, &mut |name, shape, t| {
            if fill_error.is_some() {
                return;
            }
            match table.get(name) {
                Some((e, values)) if e.shape == shape => t.copy_from_slice(values),
                Some((e, _)) => {
                    fill_error = Some(Error::Checkpoint(format!(
                        "tensor {name:?} has shape {:?}, expected {:?}",
                        e.shape, shape
                    )));
                }
                None => {
                    fill_error = Some(Error::Checkpoint(format!("missing tensor {name:?}")));
                }
            }
        });
    }
    if let Some(e) = fill_error {
        return Err(e);
    }

    let get = |name: &str| table.get(name).map(|(_, v)| v.clone());
    let feature_stats = match (get("extra.feature_min"), get("extra.feature_max")) {
        (Some(min), Some(max)) if min.len() == max.len() => Some(FeatureStats { min, max }),
        (None, None) => None,
        _ => return Err(bad("feature stats entries are inconsistent")),
    };
    let centroids = match (get("extra.centroids"), get("extra.centroid_counts")) {
        (Some(c), Some(counts)) => {
            let (e, _) = table.get("extra.centroids").unwrap();
            if e.shape.len() != 2 || e.shape[0] != counts.len() {
                return Err(bad("centroid table shape mismatch"));
            }
            Some(CentroidTable {
                centroids: Mat::from_vec(e.shape[0], e.shape[1], c),
                counts: counts.iter().map(|&v| v as usize).collect(),
            })
        }
        (None, None) => None,
        _ => return Err(bad("centroid entries are inconsistent")),
    };
    let thresholds = match (get("extra.delta_per_family"), get("extra.delta_global")) {
        (Some(per), Some(global)) if global.len() == 1 => Some(ThresholdTable {
            delta_global: global[0],
            delta_per_family: per,
            mode: manifest.threshold_mode,
        }),
        (None, None) => None,
        _ => return Err(bad("threshold entries are inconsistent")),
    };
    let vocab = match manifest.vocab {
        Some(map) => Some(Vocabulary::from_map(map)?),
        None => None,
    };

    Ok((
        model,
        CheckpointExtras {
            config_hash: manifest.config_hash,
            families: manifest.families,
            threshold_mode: manifest.threshold_mode,
            vocab,
            split: manifest.split,
            feature_stats,
            centroids,
            thresholds,
        },
    ))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointExtras)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
