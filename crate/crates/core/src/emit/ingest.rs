//! Ingest of externally annotated items (CCSE-style) into conversation records.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cot::{prepend_nonregular, ExternalItem};
use crate::emit::{ConversationRecord, Meta, Turn};
use crate::error::{Error, Result};
use crate::templates::Templates;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestedItem {
    pub record: ConversationRecord,
    /// Where the image currently lives.
    pub source_image: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: Vec<IngestedItem>,
    pub rejected: Vec<Rejection>,
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> std::result::Result<&'a str, String> {
    match obj.get(name) {
        None => Err(format!("missing field {name}")),
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
        Some(Value::String(_)) => Err(format!("field {name} is empty")),
        Some(_) => Err(format!("field {name} must be a string")),
    }
}

/// Validates and converts JSONL items for `dataset`.
///
/// Each line needs `image`, `question` and `answer`; `regular` defaults to
/// false. Items of a `-CoT` dataset get the non-regular prefix unless they
/// already carry it. Duplicates on (image, question, answer) are rejected.
pub fn ingest_external(templates: &Templates, dataset: &str, jsonl: &str, base: &Path) -> IngestReport {
    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    let is_cot = dataset.ends_with("-CoT");
    for (i, line) in jsonl.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let reject = |field: Option<&str>, message: String| Rejection { line: line_no, field: field.map(str::to_string), message };
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                report.rejected.push(reject(None, format!("not JSON: {e}")));
                continue;
            }
        };
        let Some(obj) = value.as_object() else {
            report.rejected.push(reject(None, "item must be an object".into()));
            continue;
        };
        let mut parts = Vec::new();
        let mut bad = None;
        for name in ["image", "question", "answer"] {
            match field(obj, name) {
                Ok(v) => parts.push(v.to_string()),
                Err(m) => {
                    bad = Some(reject(Some(name), m));
                    break;
                }
            }
        }
        if let Some(r) = bad {
            report.rejected.push(r);
            continue;
        }
        let (image, question, mut answer) = (parts[0].clone(), parts[1].clone(), parts[2].clone());
        let regular = obj.get("regular").and_then(Value::as_bool).unwrap_or(false);
        let mut h = Sha256::new();
        for p in [&image, &question, &answer] {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        let id = hex::encode(&h.finalize()[..16]);
        if !seen.insert(id.clone()) {
            report.rejected.push(reject(None, format!("duplicate of an earlier item ({id})")));
            continue;
        }
        if is_cot && !regular {
            let item = ExternalItem { regular, text: answer.clone() };
            // already-prefixed answers are kept as they are
            if let Ok(prefixed) = prepend_nonregular(templates, &item) {
                answer = prefixed;
            }
        }
        let source_image = if Path::new(&image).is_absolute() { PathBuf::from(&image) } else { base.join(&image) };
        let ext = source_image.extension().and_then(|e| e.to_str()).unwrap_or("png").to_string();
        let task = obj.get("task").and_then(Value::as_str).unwrap_or("non-regular").to_string();
        let record = ConversationRecord {
            id: id.clone(),
            image: format!("images/{dataset}/{id}.{ext}"),
            conversations: vec![Turn::human(format!("<image>\n{question}")), Turn::gpt(answer)],
            meta: Meta { dataset_name: dataset.to_string(), task, split: "train".into(), puzzle_id: None },
        };
        report.accepted.push(IngestedItem { record, source_image });
    }
    report
}

pub fn ingest_file(templates: &Templates, dataset: &str, path: &Path) -> Result<IngestReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(ingest_external(templates, dataset, &text, path.parent().unwrap_or(Path::new("."))))
}
