//! Dataset model: records with numeric + tokenized modalities, modality
//! construction (grayscale image / token-id sentence), known–unknown splits,
//! and a synthetic generator for desk-scale experiments.

mod image;
mod jsonl;
mod split;
mod synthetic;
mod vocab;

pub use image::{compute_stats, make_image, FeatureStats};
pub use jsonl::{load_jsonl, parse_jsonl, save_jsonl, JsonlSchema};
pub use split::{split_known_unknown, SplitManifest};
pub use synthetic::{gen_synthetic, SyntheticSpec};
pub use vocab::{build_vocab, tokenize, Vocabulary};

use serde::{Deserialize, Serialize};

/// A malware family with a dense id. Known family ids occupy `[0, k_known)`;
/// unknown-family ids come after.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyLabel {
    pub id: usize,
    pub name: String,
}

/// One sample: already-extracted static features in two modalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalwareRecord {
    pub family: FamilyLabel,
    /// Static-feature values; same length across a dataset.
    pub numeric: Vec<f64>,
    /// Imported libraries/modules/functions in extraction order; may be empty.
    pub tokens: Vec<String>,
}

/// H×W grayscale matrix built from a numeric feature vector.
/// Every pixel lies in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MalwareImage {
    pub h: usize,
    pub w: usize,
    /// Row-major pixels, length h·w.
    pub pixels: Vec<f64>,
}

/// Fixed-length token-id sequence. Trailing positions beyond the true
/// length hold `pad_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct MalwareSentence {
    pub ids: Vec<u32>,
    pub pad_id: u32,
    pub unk_id: u32,
    pub vocab_size: usize,
}

impl MalwareSentence {
    /// Number of leading non-pad positions.
    pub fn real_len(&self) -> usize {
        self.ids.iter().filter(|&&t| t != self.pad_id).count()
    }
}

/// Known/unknown partition of a dataset. Families in `test_unknown` are
/// disjoint from those in `train_known` ∪ `test_known`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train_known: Vec<MalwareRecord>,
    pub test_known: Vec<MalwareRecord>,
    pub test_unknown: Vec<MalwareRecord>,
    pub seed: u64,
    pub train_fraction: f64,
    pub manifest: SplitManifest,
}

impl DatasetSplit {
    /// Number of known families (ids `0..k_known` appear in the known parts).
    pub fn k_known(&self) -> usize {
        self.train_known
            .iter()
            .map(|r| r.family.id + 1)
            .max()
            .unwrap_or(0)
            .max(
                self.test_known
                    .iter()
                    .map(|r| r.family.id + 1)
                    .max()
                    .unwrap_or(0),
            )
    }

    /// Names of the known families, indexed by family id.
    pub fn known_family_names(&self) -> Vec<String> {
        let k = self.k_known();
        let mut names = vec![String::new(); k];
        for r in self.train_known.iter().chain(&self.test_known) {
            names[r.family.id] = r.family.name.clone();
        }
        names
    }

    /// True if any record carries tokens.
    pub fn has_tokens(&self) -> bool {
        self.train_known
            .iter()
            .chain(&self.test_known)
            .chain(&self.test_unknown)
            .any(|r| !r.tokens.is_empty())
    }

    pub fn feature_dim(&self) -> usize {
        self.train_known
            .first()
            .or(self.test_known.first())
            .or(self.test_unknown.first())
            .map(|r| r.numeric.len())
            .unwrap_or(0)
    }
}
