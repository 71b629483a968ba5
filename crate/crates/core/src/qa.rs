//! Perception question-answer items derived from puzzle provenance.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::PuzzleRecord;
use crate::stream::{Stream, StreamKey};
use crate::symbolic::{Attribute, ShapeType, SymbolicPanel, COLOR_LEVELS, SIZE_LEVELS};
use crate::templates::{fill, Templates};

pub const VQA_DATASET: &str = "RAVEN-VQA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElicitationMode {
    BaseShuffle,
    #[default]
    ElicitShuffle,
    ElicitSequential,
}

impl ElicitationMode {
    pub const ALL: [ElicitationMode; 3] =
        [ElicitationMode::BaseShuffle, ElicitationMode::ElicitShuffle, ElicitationMode::ElicitSequential];

    pub fn as_str(self) -> &'static str {
        match self {
            ElicitationMode::BaseShuffle => "base_shuffle",
            ElicitationMode::ElicitShuffle => "elicit_shuffle",
            ElicitationMode::ElicitSequential => "elicit_sequential",
        }
    }

    pub fn elicits(self) -> bool {
        self != ElicitationMode::BaseShuffle
    }
}

impl fmt::Display for ElicitationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElicitationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown elicitation mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaKind {
    GlobalContext,
    FineGrained,
}

/// What a fine-grained item asks about: a 1-based row-major cell of the
/// completed matrix, a component, and an attribute (`number` for counts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QaTarget {
    pub cell: usize,
    pub component: usize,
    pub attribute: Attribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub image_ref: String,
    pub template_id: String,
    pub question: String,
    pub answer: String,
    pub kind: QaKind,
    pub order_index: usize,
    pub elicitation_mode: ElicitationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<QaTarget>,
}

pub fn image_ref(dataset: &str, id: &str) -> String {
    format!("images/{dataset}/{id}.png")
}

/// The shuffle stream of a record, keyed like its generation streams.
pub fn qa_stream(record: &PuzzleRecord) -> Stream {
    StreamKey::new(record.split.namespace(), record.master_seed, record.pattern_id, record.index).stream("qa-order")
}

fn template_id(attribute: Attribute) -> &'static str {
    match attribute {
        Attribute::Number | Attribute::Position => "count",
        Attribute::ShapeType => "shape",
        Attribute::Size => "size",
        Attribute::Color => "color",
    }
}

/// The closed-vocabulary answer for `target`, or none when the target does
/// not exist in the record.
pub fn answer_for(record: &PuzzleRecord, target: &QaTarget) -> Option<String> {
    let panel: &SymbolicPanel = record.full_matrix().get(target.cell.checked_sub(1)?).copied()?;
    let comp = panel.components.get(target.component)?;
    let attrs = comp.uniform_attrs();
    Some(match target.attribute {
        Attribute::Number | Attribute::Position => comp.number().to_string(),
        Attribute::ShapeType => attrs?.shape_type.name().to_string(),
        Attribute::Size => attrs?.size.to_string(),
        Attribute::Color => attrs?.color.to_string(),
    })
}

pub fn structure_answer(templates: &Templates, record: &PuzzleRecord) -> String {
    fill(&templates.qa.structure_answer, &[("pattern", record.pattern_id.as_str())])
}

fn fine_items_for_cell(templates: &Templates, record: &PuzzleRecord, cell: usize) -> Vec<(String, String, QaTarget)> {
    let mut out = Vec::new();
    let cell_name = templates.cell_name(cell);
    for (c, layout) in record.pattern_id.seed_pattern().components.iter().enumerate() {
        let region = templates.qa_region(record.pattern_id, c);
        let mut attributes = Vec::with_capacity(4);
        if layout.slot_count() > 1 {
            attributes.push(Attribute::Number);
        }
        attributes.extend([Attribute::ShapeType, Attribute::Size, Attribute::Color]);
        for attribute in attributes {
            let template = match attribute {
                Attribute::ShapeType => &templates.qa.shape,
                Attribute::Size => &templates.qa.size,
                Attribute::Color => &templates.qa.color,
                _ => &templates.qa.count,
            };
            let question = fill(template, &[("region", region), ("cell", &cell_name)]);
            let target = QaTarget { cell, component: c, attribute };
            out.push((template_id(attribute).to_string(), question, target));
        }
    }
    out
}

/// Perception items for one record.
///
/// Fine-grained items cover all nine cells of the completed matrix. Shuffled
/// modes permute cell order and keep the per-cell question order.
pub fn synth_perception_qa<R: Rng + ?Sized>(
    templates: &Templates,
    record: &PuzzleRecord,
    mode: ElicitationMode,
    rng: &mut R,
) -> Vec<QaItem> {
    let mut cells: Vec<usize> = (1..=9).collect();
    if mode != ElicitationMode::ElicitSequential {
        cells.shuffle(rng);
    }
    let image = image_ref(VQA_DATASET, &record.puzzle_id);
    let mut items = Vec::new();
    let mut push = |template_id: String, question: String, answer: String, kind, target| {
        let order_index = items.len();
        items.push(QaItem {
            id: format!("{}-q{order_index:02}", record.puzzle_id),
            image_ref: image.clone(),
            template_id,
            question,
            answer,
            kind,
            order_index,
            elicitation_mode: mode,
            target,
        });
    };
    if mode.elicits() {
        push(
            "structure".into(),
            templates.qa.structure_question.clone(),
            structure_answer(templates, record),
            QaKind::GlobalContext,
            None,
        );
    }
    for cell in cells {
        for (tid, question, target) in fine_items_for_cell(templates, record, cell) {
            let answer = answer_for(record, &target).unwrap_or_default();
            push(tid, question, answer, QaKind::FineGrained, Some(target));
        }
    }
    items
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub total: usize,
    pub matched: usize,
    pub mismatched_ids: Vec<String>,
}

impl QaReport {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            100.0
        } else {
            100.0 * self.matched as f64 / self.total as f64
        }
    }
}

/// Recomputes every answer from the record. Any mismatch is an error that
/// lists the offending item ids.
pub fn qa_self_consistency(templates: &Templates, items: &[QaItem], record: &PuzzleRecord) -> Result<QaReport> {
    let mut mismatched_ids = Vec::new();
    for item in items {
        let expected = match (item.kind, &item.target) {
            (QaKind::GlobalContext, None) => Some(structure_answer(templates, record)),
            (QaKind::FineGrained, Some(target)) => answer_for(record, target),
            _ => None,
        };
        if expected.as_deref() != Some(item.answer.as_str()) {
            mismatched_ids.push(item.id.clone());
        }
    }
    let report = QaReport { total: items.len(), matched: items.len() - mismatched_ids.len(), mismatched_ids };
    if report.mismatched_ids.is_empty() {
        Ok(report)
    } else {
        Err(Error::QaMismatch { ids: report.mismatched_ids })
    }
}

/// A parsed closed-vocabulary answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedAnswer {
    Count(usize),
    Shape(ShapeType),
    Size(u8),
    Color(u8),
    Structure(String),
}

pub fn parse_answer(template_id: &str, answer: &str) -> Option<ParsedAnswer> {
    let a = normalize_answer(answer);
    match template_id {
        "count" => a.parse().ok().filter(|n| (1..=9).contains(n)).map(ParsedAnswer::Count),
        "shape" => a.parse().ok().map(ParsedAnswer::Shape),
        "size" => a.parse().ok().filter(|v| SIZE_LEVELS.contains(v)).map(ParsedAnswer::Size),
        "color" => a.parse().ok().filter(|v| COLOR_LEVELS.contains(v)).map(ParsedAnswer::Color),
        "structure" => Some(ParsedAnswer::Structure(a)),
        _ => None,
    }
}

/// Lowercase, trimmed, single-spaced, without trailing punctuation.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(['.', '!', '?', ',', ';']).trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::{generate_puzzle, Split};
    use crate::symbolic::PatternId;

    fn record(p: PatternId, i: u64) -> PuzzleRecord {
        generate_puzzle(p, 21, i, Split::Train).unwrap()
    }

    #[test]
    fn modes_order_items() {
        let t = Templates::default();
        let r = record(PatternId::Grid2, 0);
        let base = synth_perception_qa(&t, &r, ElicitationMode::BaseShuffle, &mut qa_stream(&r));
        let shuf = synth_perception_qa(&t, &r, ElicitationMode::ElicitShuffle, &mut qa_stream(&r));
        let seq = synth_perception_qa(&t, &r, ElicitationMode::ElicitSequential, &mut qa_stream(&r));
        assert!(base.iter().all(|i| i.kind == QaKind::FineGrained));
        assert_eq!(shuf[0].kind, QaKind::GlobalContext);
        assert_eq!(seq[0].kind, QaKind::GlobalContext);
        assert_eq!(shuf.len(), base.len() + 1);
        assert_eq!(seq[0].question, "What is the structure of this puzzle?");
        assert_eq!(seq[0].answer, "a 3x3 grid of panels in G-2 style");
        let cells: Vec<usize> = seq[1..].iter().map(|i| i.target.unwrap().cell).collect();
        assert!(cells.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn center_shape_question_reads_the_record() {
        let t = Templates::default();
        let r = record(PatternId::Center, 3);
        let items = synth_perception_qa(&t, &r, ElicitationMode::ElicitSequential, &mut qa_stream(&r));
        let q = items.iter().find(|i| i.question == "What shape is in the right panel of row 3?").unwrap();
        assert_eq!(q.answer, r.answer.components[0].entities[0].attrs.shape_type.name());
    }

    #[test]
    fn mutated_answer_is_reported() {
        let t = Templates::default();
        let r = record(PatternId::OutInGrid, 1);
        let mut items = synth_perception_qa(&t, &r, ElicitationMode::ElicitShuffle, &mut qa_stream(&r));
        assert_eq!(qa_self_consistency(&t, &items, &r).unwrap().percent(), 100.0);
        items[5].answer.push('x');
        match qa_self_consistency(&t, &items, &r) {
            Err(Error::QaMismatch { ids }) => assert_eq!(ids, vec![items[5].id.clone()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cross_paired_records_mismatch() {
        let t = Templates::default();
        for i in 0..50 {
            let a = record(PatternId::ALL[i % 7], i as u64);
            let b = record(PatternId::ALL[(i + 3) % 7], i as u64 + 100);
            let items = synth_perception_qa(&t, &a, ElicitationMode::ElicitShuffle, &mut qa_stream(&a));
            assert!(qa_self_consistency(&t, &items, &b).is_err());
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("  Circle. "), "circle");
        assert_eq!(normalize_answer("A 3x3   grid"), "a 3x3 grid");
        assert_eq!(parse_answer("shape", "Hexagon"), Some(ParsedAnswer::Shape(ShapeType::Hexagon)));
        assert_eq!(parse_answer("size", "7"), None);
    }
}
