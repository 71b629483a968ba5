//! Attributed symbolic panels: entities placed in layout slots.
//!
//! A [`SymbolicPanel`] is one cell of the 3x3 matrix. It holds one
//! [`Component`] per layout region (two for the out-in patterns), and every
//! component holds the entities occupying its slots. All rendering, question
//! synthesis and solving work from this representation alone.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

pub const SIZE_LEVELS: RangeInclusive<u8> = 1..=6;
pub const COLOR_LEVELS: RangeInclusive<u8> = 0..=9;
pub const ANGLE_LEVELS: RangeInclusive<u8> = 0..=7;

/// Shape types in their ordinal order (triangle < ... < circle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeType {
    Triangle,
    Square,
    Pentagon,
    Hexagon,
    Circle,
}

impl ShapeType {
    pub const ALL: [ShapeType; 5] = [
        ShapeType::Triangle,
        ShapeType::Square,
        ShapeType::Pentagon,
        ShapeType::Hexagon,
        ShapeType::Circle,
    ];

    pub fn level(self) -> u8 {
        self as u8
    }

    pub fn from_level(level: u8) -> Option<Self> {
        Self::ALL.get(level as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeType::Triangle => "triangle",
            ShapeType::Square => "square",
            ShapeType::Pentagon => "pentagon",
            ShapeType::Hexagon => "hexagon",
            ShapeType::Circle => "circle",
        }
    }

    /// Polygon side count; `None` for the circle.
    pub fn sides(self) -> Option<u32> {
        match self {
            ShapeType::Triangle => Some(3),
            ShapeType::Square => Some(4),
            ShapeType::Pentagon => Some(5),
            ShapeType::Hexagon => Some(6),
            ShapeType::Circle => None,
        }
    }
}

impl fmt::Display for ShapeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeType {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| ValidationError::UnknownName(s.to_string()))
    }
}

/// Attribute levels of one entity. `angle` is carried but always frozen at 0
/// by the generator; no rule ever varies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeValue {
    pub shape_type: ShapeType,
    pub size: u8,
    pub color: u8,
    #[serde(default)]
    pub angle: u8,
}

impl AttributeValue {
    pub fn new(shape_type: ShapeType, size: u8, color: u8) -> Self {
        Self { shape_type, size, color, angle: 0 }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !SIZE_LEVELS.contains(&self.size) {
            return Err(ValidationError::OutOfRange { field: "size", value: self.size });
        }
        if !COLOR_LEVELS.contains(&self.color) {
            return Err(ValidationError::OutOfRange { field: "color", value: self.color });
        }
        if !ANGLE_LEVELS.contains(&self.angle) {
            return Err(ValidationError::OutOfRange { field: "angle", value: self.angle });
        }
        Ok(())
    }
}

/// Attributes a variation rule can govern. Angle is deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Number,
    Position,
    ShapeType,
    Size,
    Color,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Number,
        Attribute::Position,
        Attribute::ShapeType,
        Attribute::Size,
        Attribute::Color,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Number => "number",
            Attribute::Position => "position",
            Attribute::ShapeType => "shape_type",
            Attribute::Size => "size",
            Attribute::Color => "color",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ValidationError::UnknownName(s.to_string()))
    }
}

/// Normalized slot rectangle inside the unit panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl SlotBox {
    const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn overlaps(&self, other: &SlotBox) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

const GUTTER: f64 = 0.02;
const CELL2: f64 = (1.0 - 3.0 * GUTTER) / 2.0;
const CELL3: f64 = (1.0 - 4.0 * GUTTER) / 3.0;
const FULL: f64 = 1.0 - 2.0 * GUTTER;

const fn at2(i: usize) -> f64 {
    GUTTER + i as f64 * (CELL2 + GUTTER)
}

const fn at3(i: usize) -> f64 {
    GUTTER + i as f64 * (CELL3 + GUTTER)
}

const SINGLE_SLOTS: [SlotBox; 1] = [SlotBox::new(GUTTER, GUTTER, FULL, FULL)];

const GRID2_SLOTS: [SlotBox; 4] = [
    SlotBox::new(at2(0), at2(0), CELL2, CELL2),
    SlotBox::new(at2(1), at2(0), CELL2, CELL2),
    SlotBox::new(at2(0), at2(1), CELL2, CELL2),
    SlotBox::new(at2(1), at2(1), CELL2, CELL2),
];

const GRID3_SLOTS: [SlotBox; 9] = [
    SlotBox::new(at3(0), at3(0), CELL3, CELL3),
    SlotBox::new(at3(1), at3(0), CELL3, CELL3),
    SlotBox::new(at3(2), at3(0), CELL3, CELL3),
    SlotBox::new(at3(0), at3(1), CELL3, CELL3),
    SlotBox::new(at3(1), at3(1), CELL3, CELL3),
    SlotBox::new(at3(2), at3(1), CELL3, CELL3),
    SlotBox::new(at3(0), at3(2), CELL3, CELL3),
    SlotBox::new(at3(1), at3(2), CELL3, CELL3),
    SlotBox::new(at3(2), at3(2), CELL3, CELL3),
];

const LEFT_RIGHT_SLOTS: [SlotBox; 2] = [
    SlotBox::new(at2(0), GUTTER, CELL2, FULL),
    SlotBox::new(at2(1), GUTTER, CELL2, FULL),
];

const UP_DOWN_SLOTS: [SlotBox; 2] = [
    SlotBox::new(GUTTER, at2(0), FULL, CELL2),
    SlotBox::new(GUTTER, at2(1), FULL, CELL2),
];

const INNER_SLOTS: [SlotBox; 1] = [SlotBox::new(0.33, 0.33, 0.34, 0.34)];

const INNER_ORIGIN: f64 = 0.25;
const INNER_SPAN: f64 = 0.5;
const INNER_CELL: f64 = INNER_SPAN * CELL2;

const fn inner_at(i: usize) -> f64 {
    INNER_ORIGIN + INNER_SPAN * at2(i)
}

const INNER_GRID_SLOTS: [SlotBox; 4] = [
    SlotBox::new(inner_at(0), inner_at(0), INNER_CELL, INNER_CELL),
    SlotBox::new(inner_at(1), inner_at(0), INNER_CELL, INNER_CELL),
    SlotBox::new(inner_at(0), inner_at(1), INNER_CELL, INNER_CELL),
    SlotBox::new(inner_at(1), inner_at(1), INNER_CELL, INNER_CELL),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    Single,
    #[serde(rename = "grid2x2")]
    Grid2x2,
    #[serde(rename = "grid3x3")]
    Grid3x3,
    LeftRight,
    UpDown,
    OutIn,
    OutInGrid,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 7] = [
        LayoutKind::Single,
        LayoutKind::Grid2x2,
        LayoutKind::Grid3x3,
        LayoutKind::LeftRight,
        LayoutKind::UpDown,
        LayoutKind::OutIn,
        LayoutKind::OutInGrid,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn region_count(self) -> u8 {
        match self {
            LayoutKind::OutIn | LayoutKind::OutInGrid => 2,
            _ => 1,
        }
    }

    /// Slot geometry of one region of this layout kind.
    pub fn slots(self, region: u8) -> Option<&'static [SlotBox]> {
        let slots: &'static [SlotBox] = match (self, region) {
            (LayoutKind::Single, 0) => &SINGLE_SLOTS,
            (LayoutKind::Grid2x2, 0) => &GRID2_SLOTS,
            (LayoutKind::Grid3x3, 0) => &GRID3_SLOTS,
            (LayoutKind::LeftRight, 0) => &LEFT_RIGHT_SLOTS,
            (LayoutKind::UpDown, 0) => &UP_DOWN_SLOTS,
            (LayoutKind::OutIn | LayoutKind::OutInGrid, 0) => &SINGLE_SLOTS,
            (LayoutKind::OutIn, 1) => &INNER_SLOTS,
            (LayoutKind::OutInGrid, 1) => &INNER_GRID_SLOTS,
            _ => return None,
        };
        Some(slots)
    }
}

/// One layout region together with its occupancy mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub kind: LayoutKind,
    #[serde(default)]
    pub region: u8,
    pub occupancy: u16,
}

impl Layout {
    pub fn new(kind: LayoutKind, region: u8, occupancy: u16) -> Self {
        Self { kind, region, occupancy }
    }

    pub fn slots(&self) -> &'static [SlotBox] {
        self.kind.slots(self.region).unwrap_or(&[])
    }

    pub fn slot_count(&self) -> usize {
        self.slots().len()
    }

    pub fn full_mask(&self) -> u16 {
        full_mask(self.slot_count())
    }

    pub fn occupied(&self) -> impl Iterator<Item = u8> + '_ {
        let mask = self.occupancy;
        (0..self.slot_count() as u8).filter(move |i| mask & (1 << i) != 0)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.kind.slots(self.region).is_none() {
            return Err(ValidationError::UnknownRegion { kind: self.kind, region: self.region });
        }
        if self.occupancy == 0 {
            return Err(ValidationError::EmptyOccupancy);
        }
        if self.occupancy & !self.full_mask() != 0 {
            return Err(ValidationError::OccupancyOutOfLayout(self.occupancy));
        }
        Ok(())
    }
}

pub fn full_mask(slots: usize) -> u16 {
    ((1u32 << slots) - 1) as u16
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub slot_index: u8,
    pub attrs: AttributeValue,
}

/// The entities of one layout region within a panel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ComponentRepr", into = "ComponentRepr")]
pub struct Component {
    pub layout: Layout,
    pub entities: Vec<Entity>,
}

impl Component {
    /// Builds a component from entities, deriving occupancy and sorting by slot.
    pub fn from_entities(kind: LayoutKind, region: u8, mut entities: Vec<Entity>) -> Self {
        entities.sort_by_key(|e| e.slot_index);
        let occupancy = entities
            .iter()
            .filter(|e| e.slot_index < 16)
            .fold(0u16, |mask, e| mask | (1 << e.slot_index));
        Self { layout: Layout::new(kind, region, occupancy), entities }
    }

    /// Places the same attributes into every slot of `mask`.
    pub fn uniform(kind: LayoutKind, region: u8, mask: u16, attrs: AttributeValue) -> Self {
        let entities = (0..16u8)
            .filter(|i| mask & (1 << i) != 0)
            .map(|slot_index| Entity { slot_index, attrs })
            .collect();
        Self { layout: Layout::new(kind, region, mask), entities }
    }

    pub fn number(&self) -> usize {
        self.entities.len()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.layout.validate()?;
        let slots = self.layout.slot_count();
        let mut seen = 0u16;
        for entity in &self.entities {
            if entity.slot_index as usize >= slots {
                return Err(ValidationError::SlotOutOfRange { slot: entity.slot_index, slots });
            }
            let bit = 1u16 << entity.slot_index;
            if seen & bit != 0 {
                return Err(ValidationError::DuplicateSlot(entity.slot_index));
            }
            seen |= bit;
            entity.attrs.validate()?;
        }
        if seen != self.layout.occupancy {
            return Err(ValidationError::NumberMismatch {
                number: self.entities.len(),
                occupancy: self.layout.occupancy.count_ones() as usize,
            });
        }
        Ok(())
    }

    /// Shared attributes when every entity carries the same values.
    pub fn uniform_attrs(&self) -> Option<AttributeValue> {
        let first = self.entities.first()?.attrs;
        self.entities.iter().all(|e| e.attrs == first).then_some(first)
    }

    fn normalize(&mut self) {
        self.entities.sort_by_key(|e| e.slot_index);
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentRepr {
    layout: Layout,
    number: usize,
    entities: Vec<Entity>,
}

impl TryFrom<ComponentRepr> for Component {
    type Error = ValidationError;

    fn try_from(repr: ComponentRepr) -> Result<Self, Self::Error> {
        let mut component = Component { layout: repr.layout, entities: repr.entities };
        component.normalize();
        component.validate()?;
        if repr.number != component.number() {
            return Err(ValidationError::NumberMismatch {
                number: repr.number,
                occupancy: component.number(),
            });
        }
        Ok(component)
    }
}

impl From<Component> for ComponentRepr {
    fn from(c: Component) -> Self {
        ComponentRepr { layout: c.layout, number: c.entities.len(), entities: c.entities }
    }
}

/// Seed pattern identifiers in the canonical RAVEN table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternId {
    Center,
    #[serde(rename = "G-2")]
    Grid2,
    #[serde(rename = "G-3")]
    Grid3,
    #[serde(rename = "L-R")]
    LeftRight,
    #[serde(rename = "U-D")]
    UpDown,
    #[serde(rename = "O-IC")]
    OutInCenter,
    #[serde(rename = "O-IG")]
    OutInGrid,
}

impl PatternId {
    pub const ALL: [PatternId; 7] = [
        PatternId::Center,
        PatternId::Grid2,
        PatternId::Grid3,
        PatternId::LeftRight,
        PatternId::UpDown,
        PatternId::OutInCenter,
        PatternId::OutInGrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatternId::Center => "Center",
            PatternId::Grid2 => "G-2",
            PatternId::Grid3 => "G-3",
            PatternId::LeftRight => "L-R",
            PatternId::UpDown => "U-D",
            PatternId::OutInCenter => "O-IC",
            PatternId::OutInGrid => "O-IG",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn layout_kind(self) -> LayoutKind {
        match self {
            PatternId::Center => LayoutKind::Single,
            PatternId::Grid2 => LayoutKind::Grid2x2,
            PatternId::Grid3 => LayoutKind::Grid3x3,
            PatternId::LeftRight => LayoutKind::LeftRight,
            PatternId::UpDown => LayoutKind::UpDown,
            PatternId::OutInCenter => LayoutKind::OutIn,
            PatternId::OutInGrid => LayoutKind::OutInGrid,
        }
    }

    pub fn seed_pattern(self) -> SeedPattern {
        let kind = self.layout_kind();
        let components = (0..kind.region_count())
            .map(|region| {
                let slots = kind.slots(region).map_or(0, <[SlotBox]>::len);
                Layout::new(kind, region, full_mask(slots))
            })
            .collect();
        SeedPattern { id: self, components }
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternId {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ValidationError::UnknownName(s.to_string()))
    }
}

/// A structural seed: the layout regions a pattern's panels are built from.
/// Occupancy here is the full slot mask of each region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPattern {
    pub id: PatternId,
    pub components: Vec<Layout>,
}

impl SeedPattern {
    pub fn slot_count(&self, component: usize) -> usize {
        self.components.get(component).map_or(0, Layout::slot_count)
    }
}

/// The seven seed patterns in table order.
pub fn seed_pattern_catalog() -> Vec<SeedPattern> {
    PatternId::ALL.into_iter().map(PatternId::seed_pattern).collect()
}

/// One matrix cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolicPanel {
    pub pattern: PatternId,
    pub components: Vec<Component>,
}

impl SymbolicPanel {
    pub fn new(pattern: PatternId, mut components: Vec<Component>) -> Self {
        components.iter_mut().for_each(Component::normalize);
        Self { pattern, components }
    }

    pub fn number(&self) -> usize {
        self.components.iter().map(Component::number).sum()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let kind = self.pattern.layout_kind();
        if self.components.len() != kind.region_count() as usize {
            return Err(ValidationError::ComponentCount {
                expected: kind.region_count() as usize,
                found: self.components.len(),
            });
        }
        for (region, component) in self.components.iter().enumerate() {
            if component.layout.kind != kind || component.layout.region as usize != region {
                return Err(ValidationError::LayoutMismatch {
                    pattern: self.pattern,
                    kind: component.layout.kind,
                });
            }
            component.validate()?;
        }
        Ok(())
    }

    /// Copy with entities sorted within every component.
    pub fn normalized(&self) -> Self {
        Self::new(self.pattern, self.components.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_seven_patterns_in_table_order() {
        let catalog = seed_pattern_catalog();
        assert_eq!(catalog.len(), 7);
        assert_eq!(catalog[0].id, PatternId::Center);
        let ids: Vec<_> = catalog.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["Center", "G-2", "G-3", "L-R", "U-D", "O-IC", "O-IG"]);
    }

    #[test]
    fn two_component_patterns_are_the_out_in_pair() {
        let two: Vec<_> = seed_pattern_catalog()
            .into_iter()
            .filter(|p| p.components.len() == 2)
            .map(|p| p.id)
            .collect();
        assert_eq!(two, [PatternId::OutInCenter, PatternId::OutInGrid]);
        let catalog = seed_pattern_catalog();
        assert_eq!(catalog[2].components[0].kind, LayoutKind::Grid3x3);
        assert_eq!(catalog[0].components[0].kind, LayoutKind::Single);
    }

    #[test]
    fn slot_boxes_inside_unit_square_and_disjoint() {
        for kind in LayoutKind::ALL {
            for region in 0..kind.region_count() {
                let slots = kind.slots(region).unwrap();
                for s in slots {
                    assert!(s.x >= 0.0 && s.y >= 0.0 && s.x + s.w <= 1.0 && s.y + s.h <= 1.0);
                }
                for (i, a) in slots.iter().enumerate() {
                    for b in &slots[i + 1..] {
                        assert!(!a.overlaps(b), "{kind:?} region {region}");
                    }
                }
            }
        }
    }

    #[test]
    fn component_validation_catches_bad_panels() {
        let attrs = AttributeValue::new(ShapeType::Circle, 3, 4);
        let empty = Component::from_entities(LayoutKind::Single, 0, vec![]);
        assert_eq!(empty.validate(), Err(ValidationError::EmptyOccupancy));
        assert_eq!(
            ValidationError::EmptyOccupancy.to_string(),
            "occupancy has no filled slot"
        );

        let dup = Component {
            layout: Layout::new(LayoutKind::Grid2x2, 0, 0b1),
            entities: vec![Entity { slot_index: 0, attrs }, Entity { slot_index: 0, attrs }],
        };
        assert_eq!(dup.validate(), Err(ValidationError::DuplicateSlot(0)));

        let bad_size = Component::uniform(
            LayoutKind::Single,
            0,
            1,
            AttributeValue::new(ShapeType::Square, 7, 0),
        );
        assert!(matches!(bad_size.validate(), Err(ValidationError::OutOfRange { field: "size", .. })));

        let outside = Component::from_entities(
            LayoutKind::LeftRight,
            0,
            vec![Entity { slot_index: 2, attrs }],
        );
        assert!(matches!(outside.validate(), Err(ValidationError::OccupancyOutOfLayout(_))));
    }

    #[test]
    fn pattern_names_round_trip() {
        for p in PatternId::ALL {
            assert_eq!(p.as_str().parse::<PatternId>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.as_str()));
        }
    }

    #[test]
    fn component_json_rejects_inconsistent_number() {
        let c = Component::uniform(LayoutKind::Grid2x2, 0, 0b0101, AttributeValue::new(ShapeType::Hexagon, 2, 3));
        let mut json: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(json["number"], 2);
        json["number"] = 3.into();
        assert!(serde_json::from_value::<Component>(json).is_err());
    }
}
