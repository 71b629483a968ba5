//! Template reasoning chains built from rule provenance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::PuzzleRecord;
use crate::qa::image_ref;
use crate::rules::{component_level, predict_level, Level, RuleKind, RuleSpec};
use crate::symbolic::{Attribute, PatternId, ShapeType, SymbolicPanel};
use crate::templates::{fill, Templates};

pub const COT_DATASET: &str = "RAVEN-CoT";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotStep {
    pub component: usize,
    pub spec: RuleSpec,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotRecord {
    pub id: String,
    pub image_ref: String,
    pub prefix: String,
    pub body: Vec<CotStep>,
    pub conclusion: String,
    pub final_answer: u8,
}

impl CotRecord {
    /// Full transcript: prefix, one line per step, conclusion.
    pub fn text(&self) -> String {
        let mut lines = vec![self.prefix.clone()];
        lines.extend(self.body.iter().map(|s| s.text.clone()));
        lines.push(self.conclusion.clone());
        lines.join("\n")
    }
}

fn format_level(attribute: Attribute, level: Level) -> String {
    match attribute {
        Attribute::Position => {
            let slots: Vec<String> = (0..16).filter(|i| level & (1 << i) != 0).map(|i| (i + 1).to_string()).collect();
            format!("{{{}}}", slots.join(","))
        }
        Attribute::ShapeType => ShapeType::from_level(level as u8).map_or("?".into(), |s| s.name().to_string()),
        _ => level.to_string(),
    }
}

fn format_row(attribute: Attribute, row: &[Level]) -> String {
    let parts: Vec<String> = row.iter().map(|&l| format_level(attribute, l)).collect();
    format!("({})", parts.join(", "))
}

/// The wording of a rule, as used inside a step.
pub fn rule_phrase(templates: &Templates, spec: &RuleSpec) -> String {
    let p = &templates.cot.phrases;
    let step = spec.parameter.unsigned_abs().to_string();
    let template = match (spec.kind, spec.attribute, spec.parameter > 0) {
        (RuleKind::Constant, _, _) => &p.constant,
        (RuleKind::Progression, Attribute::Position, true) => &p.shift_forward,
        (RuleKind::Progression, Attribute::Position, false) => &p.shift_back,
        (RuleKind::Progression, _, true) => &p.increase,
        (RuleKind::Progression, _, false) => &p.decrease,
        (RuleKind::Arithmetic, _, true) => &p.sum,
        (RuleKind::Arithmetic, _, false) => &p.difference,
        (RuleKind::DistributeThree, _, _) => &p.distribute_three,
    };
    fill(template, &[("step", &step)])
}

fn levels(panels: &[&SymbolicPanel], component: usize, attribute: Attribute) -> Result<Vec<Level>> {
    panels
        .iter()
        .map(|p| component_level(p, component, attribute))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Contract(format!("component {component} has mixed {attribute}")))
}

/// Predicted answer levels under the record's own bundle.
pub fn predict_answer(record: &PuzzleRecord) -> Result<Vec<(usize, RuleSpec, Level)>> {
    let matrix = record.full_matrix();
    let mut out = Vec::new();
    for (component, spec) in record.rules.specs() {
        let l = levels(&matrix, component, spec.attribute)?;
        let slots = record.answer.components[component].layout.slot_count();
        let row1 = [l[0], l[1], l[2]];
        let predicted = predict_level(spec, &row1, [l[6], l[7]], slots)
            .ok_or_else(|| Error::Contract(format!("no prediction for {spec}")))?;
        out.push((component, *spec, predicted));
    }
    Ok(out)
}

fn matches(panel: &SymbolicPanel, predictions: &[(usize, RuleSpec, Level)]) -> bool {
    predictions.iter().all(|(c, spec, level)| component_level(panel, *c, spec.attribute) == Some(*level))
}

fn describe(templates: &Templates, pattern: PatternId, predictions: &[(usize, RuleSpec, Level)], reference: &SymbolicPanel) -> String {
    let t = &templates.cot;
    let mut parts = Vec::new();
    for (c, comp) in reference.components.iter().enumerate() {
        let get = |a: Attribute| {
            predictions
                .iter()
                .find(|(pc, s, _)| *pc == c && s.attribute == a)
                .map(|p| p.2)
                .or_else(|| component_level(reference, c, a))
                .unwrap_or_default()
        };
        let mut text = fill(
            &t.description,
            &[
                ("region", templates.cot_region(pattern, c)),
                ("count", &comp.number().to_string()),
                ("shape", &format_level(Attribute::ShapeType, get(Attribute::ShapeType))),
                ("size", &get(Attribute::Size).to_string()),
                ("color", &get(Attribute::Color).to_string()),
            ],
        );
        if predictions.iter().any(|(pc, s, _)| *pc == c && s.attribute == Attribute::Position) {
            text.push_str(&fill(&t.description_position, &[("slots", &format_level(Attribute::Position, get(Attribute::Position)))]));
        }
        parts.push(text);
    }
    parts.join(&t.description_join)
}

/// Builds the regular-puzzle chain: one step per rule, then the predicted
/// panel and its candidate index.
pub fn synth_cot(templates: &Templates, record: &PuzzleRecord) -> Result<CotRecord> {
    let matrix = record.full_matrix();
    let predictions = predict_answer(record)?;
    let mut body = Vec::with_capacity(predictions.len());
    for &(component, spec, predicted) in &predictions {
        let a = spec.attribute;
        let l = levels(&matrix, component, a)?;
        let text = fill(
            &templates.cot.step,
            &[
                ("region", templates.cot_region(record.pattern_id, component)),
                ("attribute", templates.attribute_word(a)),
                ("row1", &format_row(a, &l[0..3])),
                ("row2", &format_row(a, &l[3..6])),
                ("phrase", &rule_phrase(templates, &spec)),
                ("first", &format_level(a, l[6])),
                ("second", &format_level(a, l[7])),
                ("predicted", &format_level(a, predicted)),
            ],
        );
        body.push(CotStep { component, spec, text });
    }
    let candidates = record.candidates();
    let hits: Vec<usize> = candidates.iter().enumerate().filter(|(_, c)| matches(c, &predictions)).map(|(i, _)| i + 1).collect();
    let [choice] = hits[..] else {
        return Err(Error::Contract(format!("{} candidates match the prediction for {}", hits.len(), record.puzzle_id)));
    };
    if choice != record.answer_position as usize {
        return Err(Error::Contract(format!("prediction picks {choice}, answer is {}", record.answer_position)));
    }
    let choice_s = choice.to_string();
    let description = describe(templates, record.pattern_id, &predictions, &record.answer);
    let conclusion = format!(
        "{} {}",
        fill(&templates.cot.conclusion, &[("description", &description), ("choice", &choice_s)]),
        fill(&templates.cot.final_answer, &[("choice", &choice_s)])
    );
    Ok(CotRecord {
        id: record.puzzle_id.clone(),
        image_ref: image_ref(COT_DATASET, &record.puzzle_id),
        prefix: templates.regular_prefix(record.pattern_id),
        body,
        conclusion,
        final_answer: choice as u8,
    })
}

/// Recovers `(component, spec)` from a step's text.
pub fn parse_step(templates: &Templates, pattern: PatternId, text: &str) -> Option<(usize, RuleSpec)> {
    let components = pattern.layout_kind().region_count() as usize;
    for component in 0..components {
        for attribute in Attribute::ALL {
            let head = fill(
                &templates.cot.step,
                &[("region", templates.cot_region(pattern, component)), ("attribute", templates.attribute_word(attribute))],
            );
            let head = &head[..head.find("{row1}").unwrap_or(head.len())];
            if !text.starts_with(head) {
                continue;
            }
            for kind in RuleKind::ALL {
                for &parameter in kind.legal_parameters() {
                    let Ok(spec) = RuleSpec::new(attribute, kind, parameter) else { continue };
                    if text.contains(&format!(", so it {}.", rule_phrase(templates, &spec))) {
                        return Some((component, spec));
                    }
                }
            }
        }
    }
    None
}

/// Hook for externally annotated, non-regular items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalItem {
    pub regular: bool,
    pub text: String,
}

/// The non-regular prefix for an external item.
pub fn synth_nonregular_prefix(templates: &Templates, item: &ExternalItem) -> Result<String> {
    if item.regular {
        return Err(Error::Contract("regular item passed to the non-regular prefix hook".into()));
    }
    Ok(templates.cot.nonregular_prefix.clone())
}

/// Prepends the non-regular prefix, refusing text that already carries it.
pub fn prepend_nonregular(templates: &Templates, item: &ExternalItem) -> Result<String> {
    let prefix = synth_nonregular_prefix(templates, item)?;
    if item.text.trim_start().starts_with(&prefix) {
        return Err(Error::Contract("non-regular prefix already present".into()));
    }
    Ok(format!("{prefix} {}", item.text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::{generate_puzzle, Split};
    use crate::rules::{check_bundle, RuleBundle};

    #[test]
    fn prefix_is_exact() {
        let t = Templates::default();
        let r = generate_puzzle(PatternId::Grid2, 0, 0, Split::Train).unwrap();
        let cot = synth_cot(&t, &r).unwrap();
        assert_eq!(cot.prefix, "This is a regular puzzle. The grid pattern is a [G-2] style.");
        assert!(cot.text().starts_with(&cot.prefix));
        assert!(cot.conclusion.ends_with(&format!("The correct choice for this puzzle is {}.", r.answer_position)));
    }

    #[test]
    fn steps_replay_to_the_answer() {
        let t = Templates::default();
        for i in 0..140u64 {
            let r = generate_puzzle(PatternId::ALL[(i % 7) as usize], 8, i, Split::Train).unwrap();
            let cot = synth_cot(&t, &r).unwrap();
            assert_eq!(cot.body.len(), r.rules.len());
            let mut parsed: Vec<(usize, RuleSpec)> = Vec::new();
            for step in &cot.body {
                parsed.push(parse_step(&t, r.pattern_id, &step.text).unwrap());
            }
            let mut bundle = r.rules.clone();
            for cr in &mut bundle.per_component {
                cr.rules = parsed.iter().filter(|(c, _)| *c == cr.component).map(|(_, s)| *s).collect();
            }
            assert_eq!(bundle, r.rules);
            let c = &r.context;
            let passing: Vec<usize> = r
                .candidates()
                .iter()
                .enumerate()
                .filter(|(_, d)| check_bundle(&[[&c[0], &c[1], &c[2]], [&c[3], &c[4], &c[5]], [&c[6], &c[7], d]], &bundle).is_empty())
                .map(|(i, _)| i + 1)
                .collect();
            assert_eq!(passing, vec![cot.final_answer as usize]);
        }
    }

    #[test]
    fn constant_bundle_says_constant() {
        let t = Templates::default();
        let mut found = false;
        for i in 0..5000u64 {
            let r = generate_puzzle(PatternId::Center, 5, i, Split::Train).unwrap();
            if r.rules != RuleBundle::all_constant(&PatternId::Center.seed_pattern()) {
                continue;
            }
            found = true;
            let cot = synth_cot(&t, &r).unwrap();
            assert!(cot.body.iter().all(|s| s.text.contains("stays constant")));
            assert_eq!(r.answer, r.context[6]);
        }
        assert!(found);
    }

    #[test]
    fn nonregular_hook() {
        let t = Templates::default();
        let item = ExternalItem { regular: false, text: "The pieces fit at 3.".into() };
        assert_eq!(synth_nonregular_prefix(&t, &item).unwrap(), "This is a non-regular puzzle.");
        let once = prepend_nonregular(&t, &item).unwrap();
        assert!(once.starts_with("This is a non-regular puzzle. "));
        let again = ExternalItem { regular: false, text: once };
        assert!(prepend_nonregular(&t, &again).is_err());
        assert!(synth_nonregular_prefix(&t, &ExternalItem { regular: true, text: String::new() }).is_err());
    }
}
