//! Word-level vocabulary with frequency threshold. Id 0 is pad, id 1 is
//! unknown; real tokens get ids ≥ 2 ordered by (−frequency, lexicographic)
//! so two builds over the same corpus agree exactly.

use std::collections::{BTreeMap, HashMap};

use super::{MalwareRecord, MalwareSentence};
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn lookup(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Total id space, including pad and unk.
    pub fn size(&self) -> usize {
        self.token_to_id.len() + 2
    }

    /// Sorted token→id map (pad/unk are implicit).
    pub fn to_map(&self) -> BTreeMap<String, u32> {
        self.token_to_id
            .iter()
            .map(|(k, &v)| (k.clone(), v))
            .collect()
    }

    pub fn from_map(map: BTreeMap<String, u32>) -> Result<Self> {
        for (tok, &id) in &map {
            if id < 2 {
                return Err(Error::Schema(format!(
                    "token {tok:?} claims reserved id {id}"
                )));
            }
        }
        let n = map.len() as u32;
        let mut seen = vec![false; n as usize];
        for &id in map.values() {
            let slot = id - 2;
            if slot >= n || seen[slot as usize] {
                return Err(Error::Schema(format!("token ids not dense at id {id}")));
            }
            seen[slot as usize] = true;
        }
        Ok(Vocabulary {
            token_to_id: map.into_iter().collect(),
        })
    }

    /// Persistable token→id map (sorted keys; pad/unk are implicit).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_map()).expect("vocab serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let map: BTreeMap<String, u32> = serde_json::from_str(json)
            .map_err(|e| Error::Schema(format!("vocabulary json: {e}")))?;
        Self::from_map(map)
    }
}

/// Build a vocabulary from training records.
pub fn build_vocab(records: &[MalwareRecord], min_count: usize) -> Vocabulary {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for r in records {
        for t in &r.tokens {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let token_to_id = kept
        .into_iter()
        .enumerate()
        .map(|(i, (t, _))| (t.to_string(), i as u32 + 2))
        .collect();
    Vocabulary { token_to_id }
}

/// Map a token list to a fixed-length id sequence: out-of-vocabulary → unk,
/// truncate to `l_max`, pad to `l_max`.
pub fn tokenize(tokens: &[String], vocab: &Vocabulary, l_max: usize) -> MalwareSentence {
    let mut ids = vec![PAD_ID; l_max];
    for (slot, tok) in ids.iter_mut().zip(tokens.iter()) {
        *slot = vocab.lookup(tok);
    }
    MalwareSentence {
        ids,
        pad_id: PAD_ID,
        unk_id: UNK_ID,
        vocab_size: vocab.size(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FamilyLabel;

    fn rec(tokens: &[&str]) -> MalwareRecord {
        MalwareRecord {
            family: FamilyLabel {
                id: 0,
                name: "a".into(),
            },
            numeric: vec![0.0],
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let recs = vec![
            rec(&["kernel32", "kernel32", "rare"]),
            rec(&["kernel32"]),
        ];
        let v = build_vocab(&recs, 2);
        assert_eq!(v.lookup("kernel32"), 2);
        assert_eq!(v.lookup("rare"), UNK_ID);
        assert_eq!(v.size(), 3);
    }

    #[test]
    fn empty_corpus_keeps_reserved_ids() {
        let v = build_vocab(&[], 1);
        assert_eq!(v.size(), 2);
    }

    #[test]
    fn frequency_ties_break_lexicographically() {
        let recs = vec![rec(&["zeta", "alpha"]), rec(&["alpha", "zeta"])];
        let a = build_vocab(&recs, 1);
        let b = build_vocab(&recs, 1);
        assert_eq!(a, b);
        assert_eq!(a.lookup("alpha"), 2);
        assert_eq!(a.lookup("zeta"), 3);
    }

    #[test]
    fn tokenize_pads_truncates_and_maps_oov() {
        let recs = vec![rec(&["kernel32", "kernel32"])];
        let v = build_vocab(&recs, 1);
        let s = tokenize(
            &["kernel32".to_string(), "unknownlib".to_string()],
            &v,
            4,
        );
        assert_eq!(s.ids, vec![2, UNK_ID, PAD_ID, PAD_ID]);

        let empty = tokenize(&[], &v, 3);
        assert_eq!(empty.ids, vec![PAD_ID; 3]);
        assert_eq!(empty.real_len(), 0);

        let long: Vec<String> = (0..9).map(|_| "kernel32".to_string()).collect();
        let t = tokenize(&long, &v, 4);
        assert_eq!(t.ids.len(), 4);
        assert!(t.ids.iter().all(|&i| i == 2));
    }

    #[test]
    fn vocab_json_round_trip() {
        let recs = vec![rec(&["a", "b", "b"])];
        let v = build_vocab(&recs, 1);
        let loaded = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(v, loaded);
    }
}
