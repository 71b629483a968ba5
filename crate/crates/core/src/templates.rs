//! Versioned wording for QA items and reasoning chains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::{Attribute, PatternId};

pub const DEFAULT_TEMPLATES: &str = include_str!("../assets/templates.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub version: u32,
    pub qa: QaTemplates,
    pub cot: CotTemplates,
    pub emit: EmitTemplates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitTemplates {
    pub quiz_question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaTemplates {
    pub structure_question: String,
    pub structure_answer: String,
    pub count: String,
    pub shape: String,
    pub size: String,
    pub color: String,
    pub regions: Regions,
    pub columns: Columns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regions {
    pub outer: String,
    pub inner: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Columns {
    pub names: [String; 3],
    pub row: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotTemplates {
    pub regular_prefix: String,
    pub nonregular_prefix: String,
    pub step: String,
    pub conclusion: String,
    #[serde(rename = "final")]
    pub final_answer: String,
    pub description: String,
    pub description_position: String,
    pub description_join: String,
    pub attributes: BTreeMap<String, String>,
    pub regions: Regions,
    pub phrases: Phrases,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrases {
    pub constant: String,
    pub increase: String,
    pub decrease: String,
    pub shift_forward: String,
    pub shift_back: String,
    pub sum: String,
    pub difference: String,
    pub distribute_three: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl Templates {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Templates = toml::from_str(text).map_err(|e| Error::Config(format!("templates: {e}")))?;
        for a in Attribute::ALL {
            if !t.cot.attributes.contains_key(a.name()) {
                return Err(Error::Config(format!("templates: no wording for attribute {}", a.name())));
            }
        }
        Ok(t)
    }

    /// Region phrase for a component, empty for single-component patterns.
    pub fn qa_region(&self, pattern: PatternId, component: usize) -> &str {
        region(&self.qa.regions, pattern, component)
    }

    pub fn cot_region(&self, pattern: PatternId, component: usize) -> &str {
        region(&self.cot.regions, pattern, component)
    }

    /// Name of a 1-based row-major cell, e.g. "left panel of row 2".
    pub fn cell_name(&self, cell: usize) -> String {
        let (row, col) = ((cell - 1) / 3 + 1, (cell - 1) % 3);
        format!("{} {}", self.qa.columns.names[col], fill(&self.qa.columns.row, &[("row", &row.to_string())]))
    }

    pub fn attribute_word(&self, attribute: Attribute) -> &str {
        &self.cot.attributes[attribute.name()]
    }

    pub fn regular_prefix(&self, pattern: PatternId) -> String {
        fill(&self.cot.regular_prefix, &[("pattern", pattern.as_str())])
    }
}

fn region(regions: &Regions, pattern: PatternId, component: usize) -> &str {
    if pattern.layout_kind().region_count() < 2 {
        ""
    } else if component == 0 {
        &regions.outer
    } else {
        &regions.inner
    }
}

/// Replaces every `{key}` in `template`.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in values {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}
