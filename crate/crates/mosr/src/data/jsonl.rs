//! JSON Lines dataset ingestion: one record per line,
//! `{"family": string, "numeric": [real…], "tokens": [string…]?}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use super::{FamilyLabel, MalwareRecord};
use crate::error::{Error, Result};

/// Field names of the dataset file. Defaults match the documented format.
#[derive(Debug, Clone)]
pub struct JsonlSchema {
    pub family: String,
    pub numeric: String,
    pub tokens: String,
}

impl Default for JsonlSchema {
    fn default() -> Self {
        JsonlSchema {
            family: "family".into(),
            numeric: "numeric".into(),
            tokens: "tokens".into(),
        }
    }
}

/// Load records from a JSONL file. Family ids are re-mapped densely in
/// order of first appearance; record order follows the file.
pub fn load_jsonl(path: &Path, schema: &JsonlSchema) -> Result<Vec<MalwareRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), schema)
}

/// Parse JSONL from any reader. Separated from [`load_jsonl`] so untrusted
/// bytes can be fed directly (fuzzing, in-memory tests).
pub fn parse_jsonl<R: BufRead>(reader: R, schema: &JsonlSchema) -> Result<Vec<MalwareRecord>> {
    let mut records = Vec::new();
    let mut family_ids: HashMap<String, usize> = HashMap::new();
    let mut feature_dim: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "record is not a JSON object".into(),
        })?;

        let family_name = obj
            .get(&schema.family)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("missing or non-string field {:?}", schema.family),
            })?
            .to_string();

        let numeric_val = obj
            .get(&schema.numeric)
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("missing or non-array field {:?}", schema.numeric),
            })?;
        let mut numeric = Vec::with_capacity(numeric_val.len());
        for (j, v) in numeric_val.iter().enumerate() {
            let x = v.as_f64().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("numeric[{j}] is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("numeric[{j}] is not finite"),
                });
            }
            numeric.push(x);
        }

        match feature_dim {
            None => feature_dim = Some(numeric.len()),
            Some(dim) if dim != numeric.len() => {
                return Err(Error::Schema(format!(
                    "line {line_no}: numeric length {} differs from {} seen earlier",
                    numeric.len(),
                    dim
                )));
            }
            _ => {}
        }

        let tokens = match obj.get(&schema.tokens) {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(arr)) => {
                let mut toks = Vec::with_capacity(arr.len());
                for (j, t) in arr.iter().enumerate() {
                    let s = t.as_str().ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("tokens[{j}] is not a string"),
                    })?;
                    toks.push(s.to_string());
                }
                toks
            }
            Some(_) => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("field {:?} is not an array", schema.tokens),
                });
            }
        };

        let next_id = family_ids.len();
        let id = *family_ids.entry(family_name.clone()).or_insert(next_id);
        records.push(MalwareRecord {
            family: FamilyLabel {
                id,
                name: family_name,
            },
            numeric,
            tokens,
        });
    }
    Ok(records)
}

/// Write records as JSONL with the default field names. Loading the output
/// reproduces the records exactly (family ids are re-derived from order of
/// first appearance, which the writer preserves).
pub fn save_jsonl(path: &Path, records: &[MalwareRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = record_to_json_line(r);
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn record_to_json_line(r: &MalwareRecord) -> String {
    // serde_json::json! would reorder nothing here, but build explicitly to
    // keep the field order stable for byte-level round trips.
    let mut map = serde_json::Map::new();
    map.insert("family".into(), Value::String(r.family.name.clone()));
    map.insert(
        "numeric".into(),
        Value::Array(
            r.numeric
                .iter()
                .map(|&x| serde_json::Number::from_f64(x).map(Value::Number).unwrap())
                .collect(),
        ),
    );
    map.insert(
        "tokens".into(),
        Value::Array(r.tokens.iter().cloned().map(Value::String).collect()),
    );
    Value::Object(map).to_string()
}
