//! Row-wise variation rules.
//!
//! A [`RuleBundle`] assigns one [`RuleSpec`] to every governed attribute of
//! every component. Number and position are coupled: position is governed
//! only while the number rule is constant. When the count varies, slots are
//! resampled freely for each panel and position carries no rule.

mod apply;
mod check;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ValidationError};
use crate::symbolic::{full_mask, Attribute, Layout, LayoutKind, PatternId, SeedPattern};

pub use apply::{apply_rule_row, build_matrix, plan_matrix, sample_rule_bundle, BuiltMatrix, MatrixPlan, MAX_ATTEMPTS};
pub use check::{check_bundle, check_rule, component_level, predict_level, shift_mask, Level};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Constant,
    Progression,
    Arithmetic,
    DistributeThree,
}

impl RuleKind {
    pub const ALL: [RuleKind; 4] = [
        RuleKind::Constant,
        RuleKind::Progression,
        RuleKind::Arithmetic,
        RuleKind::DistributeThree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Constant => "constant",
            RuleKind::Progression => "progression",
            RuleKind::Arithmetic => "arithmetic",
            RuleKind::DistributeThree => "distribute_three",
        }
    }

    pub fn legal_parameters(self) -> &'static [i8] {
        match self {
            RuleKind::Progression => &[-2, -1, 1, 2],
            RuleKind::Arithmetic => &[1, -1],
            RuleKind::Constant | RuleKind::DistributeThree => &[0],
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One (attribute, rule kind, parameter) triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleSpec {
    pub attribute: Attribute,
    pub kind: RuleKind,
    #[serde(default)]
    pub parameter: i8,
}

impl RuleSpec {
    pub fn new(attribute: Attribute, kind: RuleKind, parameter: i8) -> Result<Self, ValidationError> {
        let spec = Self { attribute, kind, parameter };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(attribute: Attribute) -> Self {
        Self { attribute, kind: RuleKind::Constant, parameter: 0 }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.kind.legal_parameters().contains(&self.parameter) {
            return Err(ValidationError::IllegalRule(format!(
                "parameter {} not allowed for {}",
                self.parameter, self.kind
            )));
        }
        if self.attribute == Attribute::Position && self.kind == RuleKind::Arithmetic {
            return Err(ValidationError::IllegalRule("arithmetic on position".into()));
        }
        Ok(())
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RuleKind::Progression | RuleKind::Arithmetic => {
                write!(f, "{}:{}({:+})", self.attribute, self.kind, self.parameter)
            }
            _ => write!(f, "{}:{}", self.attribute, self.kind),
        }
    }
}

/// Rules of one component, in attribute order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentRules {
    pub component: usize,
    pub rules: Vec<RuleSpec>,
}

impl ComponentRules {
    pub fn get(&self, attribute: Attribute) -> Option<&RuleSpec> {
        self.rules.iter().find(|r| r.attribute == attribute)
    }

    /// Attributes that must carry exactly one rule given the number rule.
    pub fn governed(&self) -> Vec<Attribute> {
        let number_constant = self.get(Attribute::Number).is_some_and(|r| r.kind == RuleKind::Constant);
        Attribute::ALL
            .into_iter()
            .filter(|&a| a != Attribute::Position || number_constant)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleBundle {
    pub per_component: Vec<ComponentRules>,
}

impl RuleBundle {
    pub fn get(&self, component: usize, attribute: Attribute) -> Option<&RuleSpec> {
        self.per_component.get(component)?.get(attribute)
    }

    /// Every `(component, spec)` pair in order.
    pub fn specs(&self) -> impl Iterator<Item = (usize, &RuleSpec)> + '_ {
        self.per_component.iter().flat_map(|c| c.rules.iter().map(move |r| (c.component, r)))
    }

    pub fn len(&self) -> usize {
        self.per_component.iter().map(|c| c.rules.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, pattern: &SeedPattern) -> Result<(), ValidationError> {
        if self.per_component.len() != pattern.components.len() {
            return Err(ValidationError::ComponentCount {
                expected: pattern.components.len(),
                found: self.per_component.len(),
            });
        }
        for (index, comp) in self.per_component.iter().enumerate() {
            if comp.component != index {
                return Err(ValidationError::IllegalRule(format!("component index {} out of order", comp.component)));
            }
            for spec in &comp.rules {
                spec.validate()?;
            }
            let governed = comp.governed();
            for attribute in Attribute::ALL {
                let count = comp.rules.iter().filter(|r| r.attribute == attribute).count();
                let expected = usize::from(governed.contains(&attribute));
                if count != expected {
                    return Err(ValidationError::BundleCoverage { component: index, attribute: attribute.name(), count });
                }
            }
        }
        Ok(())
    }

    /// Bundle with every attribute constant (position included).
    pub fn all_constant(pattern: &SeedPattern) -> Self {
        let per_component = (0..pattern.components.len())
            .map(|component| ComponentRules {
                component,
                rules: Attribute::ALL.into_iter().map(RuleSpec::constant).collect(),
            })
            .collect();
        Self { per_component }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableEntry {
    attribute: Attribute,
    kind: RuleKind,
    #[serde(default = "default_parameters")]
    parameters: Vec<i8>,
}

fn default_parameters() -> Vec<i8> {
    vec![0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableConfig {
    version: u32,
    rules: Vec<TableEntry>,
}

pub const DEFAULT_RULE_TABLE: &str = include_str!("../../assets/rules.toml");

/// The legal rule table, pre-filtered for feasibility on every layout region.
///
/// Generator and solver share one table, so the solver's hypothesis space is
/// exactly what the generator may sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    base: Vec<RuleSpec>,
    legal: BTreeMap<(LayoutKind, u8), BTreeMap<Attribute, Vec<RuleSpec>>>,
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_RULE_TABLE).expect("bundled rule table is valid")
    }
}

impl RuleTable {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let config: TableConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.version != 1 {
            return Err(Error::Config(format!("unsupported rule table version {}", config.version)));
        }
        let mut base = Vec::new();
        for entry in &config.rules {
            for &parameter in &entry.parameters {
                let spec = RuleSpec::new(entry.attribute, entry.kind, parameter)?;
                if !base.contains(&spec) {
                    base.push(spec);
                }
            }
        }
        Self::from_specs(base)
    }

    pub fn from_specs(base: Vec<RuleSpec>) -> Result<Self, Error> {
        let mut legal = BTreeMap::new();
        for kind in LayoutKind::ALL {
            for region in 0..kind.region_count() {
                let slots = kind.slots(region).map_or(0, <[_]>::len);
                let mut per_attr: BTreeMap<Attribute, Vec<RuleSpec>> = BTreeMap::new();
                for spec in &base {
                    if feasible(spec, slots) {
                        per_attr.entry(spec.attribute).or_default().push(*spec);
                    }
                }
                let constant_number = per_attr
                    .get(&Attribute::Number)
                    .is_some_and(|v| v.iter().any(|s| s.kind == RuleKind::Constant));
                for attribute in Attribute::ALL {
                    let needed = attribute != Attribute::Position || constant_number;
                    if needed && per_attr.get(&attribute).is_none_or(Vec::is_empty) {
                        return Err(Error::Config(format!("no legal {attribute} rule for {kind:?} region {region}")));
                    }
                }
                legal.insert((kind, region), per_attr);
            }
        }
        Ok(Self { base, legal })
    }

    pub fn base(&self) -> &[RuleSpec] {
        &self.base
    }

    /// Legal specs for `attribute` on a layout region.
    pub fn legal(&self, layout: &Layout, attribute: Attribute) -> &[RuleSpec] {
        self.legal
            .get(&(layout.kind, layout.region))
            .and_then(|m| m.get(&attribute))
            .map_or(&[], Vec::as_slice)
    }

    pub fn legal_for_pattern(&self, pattern: PatternId, component: usize, attribute: Attribute) -> &[RuleSpec] {
        let seed = pattern.seed_pattern();
        match seed.components.get(component) {
            Some(layout) => self.legal(layout, attribute),
            None => &[],
        }
    }
}

/// Inclusive level range of a scalar attribute on a layout with `slots` slots.
pub fn scalar_domain(attribute: Attribute, slots: usize) -> (i32, i32) {
    match attribute {
        Attribute::Number => (1, slots as i32),
        Attribute::ShapeType => (0, 4),
        Attribute::Size => (1, 6),
        Attribute::Color => (0, 9),
        Attribute::Position => (0, full_mask(slots) as i32),
    }
}

/// Whether any row on a region with `slots` slots can satisfy `spec`.
fn feasible(spec: &RuleSpec, slots: usize) -> bool {
    if slots == 0 {
        return false;
    }
    if spec.attribute == Attribute::Position {
        let counts = 1..=slots;
        return match spec.kind {
            RuleKind::Constant => true,
            RuleKind::Arithmetic => false,
            RuleKind::DistributeThree => counts.into_iter().any(|k| binomial(slots, k) >= 3),
            RuleKind::Progression => (1..full_mask(slots)).any(|m| {
                let a = shift_mask(m, spec.parameter as i32, slots);
                let b = shift_mask(a, spec.parameter as i32, slots);
                m != a && a != b && m != b
            }),
        };
    }
    let (lo, hi) = scalar_domain(spec.attribute, slots);
    let mut values = Vec::new();
    for a in lo..=hi {
        for b in lo..=hi {
            for c in lo..=hi {
                values.push([a, b, c]);
            }
        }
    }
    values.iter().any(|row| check::scalar_row_holds(spec, row, None))
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::seed_pattern_catalog;

    #[test]
    fn rule_spec_rejects_illegal_combinations() {
        assert!(RuleSpec::new(Attribute::Position, RuleKind::Arithmetic, 1).is_err());
        assert!(RuleSpec::new(Attribute::Size, RuleKind::Progression, 3).is_err());
        assert!(RuleSpec::new(Attribute::Size, RuleKind::Constant, 1).is_err());
        assert!(RuleSpec::new(Attribute::Color, RuleKind::Arithmetic, -1).is_ok());
    }

    #[test]
    fn single_slot_layouts_only_allow_constant_number_and_position() {
        let table = RuleTable::default();
        let center = PatternId::Center.seed_pattern();
        let layout = &center.components[0];
        assert_eq!(table.legal(layout, Attribute::Number), [RuleSpec::constant(Attribute::Number)]);
        assert_eq!(table.legal(layout, Attribute::Position), [RuleSpec::constant(Attribute::Position)]);
    }

    #[test]
    fn feasibility_filter_matches_hand_enumeration() {
        let table = RuleTable::default();
        let lr = &PatternId::LeftRight.seed_pattern().components[0];
        let kinds: Vec<_> = table.legal(lr, Attribute::Number).iter().map(|s| (s.kind, s.parameter)).collect();
        // counts 1..=2: only constant and 1+1=2 / 2-1=1 work
        assert_eq!(kinds, [(RuleKind::Constant, 0), (RuleKind::Arithmetic, 1), (RuleKind::Arithmetic, -1)]);
        assert_eq!(table.legal(lr, Attribute::Position), [RuleSpec::constant(Attribute::Position)]);

        let g2 = &PatternId::Grid2.seed_pattern().components[0];
        let pos: Vec<_> = table.legal(g2, Attribute::Position).iter().map(|s| (s.kind, s.parameter)).collect();
        // a shift by 2 on 4 slots repeats after two steps
        assert_eq!(
            pos,
            [(RuleKind::Constant, 0), (RuleKind::Progression, -1), (RuleKind::Progression, 1), (RuleKind::DistributeThree, 0)]
        );
        let g3 = &PatternId::Grid3.seed_pattern().components[0];
        assert_eq!(table.legal(g3, Attribute::Number).len(), 8);
        assert_eq!(table.legal(g3, Attribute::Position).len(), 6);
    }

    #[test]
    fn angle_is_never_governed() {
        let table = RuleTable::default();
        let json = serde_json::to_string(table.base()).unwrap();
        assert!(!json.contains("angle"));
    }

    #[test]
    fn bundle_validation_enforces_coverage() {
        let g2 = PatternId::Grid2.seed_pattern();
        let mut bundle = RuleBundle::all_constant(&g2);
        bundle.validate(&g2).unwrap();
        bundle.per_component[0].rules[0] = RuleSpec::new(Attribute::Number, RuleKind::Progression, 1).unwrap();
        // position must drop out once number varies
        assert!(matches!(bundle.validate(&g2), Err(ValidationError::BundleCoverage { attribute: "position", .. })));
        bundle.per_component[0].rules.retain(|r| r.attribute != Attribute::Position);
        bundle.validate(&g2).unwrap();
    }

    #[test]
    fn every_catalog_layout_has_rules_for_all_scalar_attributes() {
        let table = RuleTable::default();
        for pattern in seed_pattern_catalog() {
            for layout in &pattern.components {
                for a in [Attribute::Number, Attribute::ShapeType, Attribute::Size, Attribute::Color] {
                    assert!(!table.legal(layout, a).is_empty(), "{:?} {a}", pattern.id);
                }
            }
        }
    }

    #[test]
    fn table_config_parses_restricted_variants() {
        let text = r#"
            version = 1
            [[rules]]
            attribute = "number"
            kind = "constant"
            [[rules]]
            attribute = "position"
            kind = "constant"
            [[rules]]
            attribute = "shape_type"
            kind = "constant"
            [[rules]]
            attribute = "size"
            kind = "progression"
            parameters = [1]
            [[rules]]
            attribute = "color"
            kind = "constant"
        "#;
        let table = RuleTable::from_toml(text).unwrap();
        assert_eq!(table.base().len(), 5);
        assert!(RuleTable::from_toml("version = 2\nrules = []").is_err());
    }
}
