//! Canonical byte encoding of symbolic panels (`AVRSYM1`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "AVRSYM1"  magic + version
//! u8         pattern code
//! u8         component count
//! per component:
//!   u8 layout kind, u8 region, u16 occupancy, u8 number
//!   number x (u8 slot, u8 shape, u8 size, u8 color, u8 angle), sorted by slot
//! ```
//!
//! Entities are always written in slot order, so entity order in memory does
//! not affect the bytes.

use crate::error::{DecodeError, ValidationError};
use crate::symbolic::{AttributeValue, Component, Entity, Layout, LayoutKind, PatternId, ShapeType, SymbolicPanel};

pub const MAGIC: &[u8; 7] = b"AVRSYM1";

pub fn canonical_encoding(panel: &SymbolicPanel) -> Result<Vec<u8>, ValidationError> {
    panel.validate()?;
    let mut out = Vec::with_capacity(16 + panel.number() * 5);
    encode_unchecked(panel, &mut out);
    Ok(out)
}

/// Appends the encoding of an already-validated panel.
pub(crate) fn encode_unchecked(panel: &SymbolicPanel, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.push(panel.pattern.code());
    out.push(panel.components.len() as u8);
    for component in &panel.components {
        out.push(component.layout.kind.code());
        out.push(component.layout.region);
        out.extend_from_slice(&component.layout.occupancy.to_le_bytes());
        out.push(component.entities.len() as u8);
        let mut entities: Vec<&Entity> = component.entities.iter().collect();
        entities.sort_by_key(|e| e.slot_index);
        for e in entities {
            out.extend_from_slice(&[
                e.slot_index,
                e.attrs.shape_type.level(),
                e.attrs.size,
                e.attrs.color,
                e.attrs.angle,
            ]);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode(bytes: &[u8]) -> Result<SymbolicPanel, DecodeError> {
    let (panel, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - used));
    }
    Ok(panel)
}

/// Decodes one panel from the front of `bytes`, returning bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(SymbolicPanel, usize), DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| DecodeError::BadHeader)? != MAGIC {
        return Err(DecodeError::BadHeader);
    }
    let code = r.u8()?;
    let pattern = PatternId::from_code(code).ok_or(DecodeError::BadCode { field: "pattern", value: code })?;
    let count = r.u8()?;
    let mut components = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let code = r.u8()?;
        let kind = LayoutKind::from_code(code).ok_or(DecodeError::BadCode { field: "layout", value: code })?;
        let region = r.u8()?;
        let occ = r.take(2)?;
        let occupancy = u16::from_le_bytes([occ[0], occ[1]]);
        let number = r.u8()?;
        let mut entities = Vec::with_capacity(number as usize);
        for _ in 0..number {
            let f = r.take(5)?;
            let shape_type = ShapeType::from_level(f[1]).ok_or(DecodeError::BadCode { field: "shape", value: f[1] })?;
            entities.push(Entity {
                slot_index: f[0],
                attrs: AttributeValue { shape_type, size: f[2], color: f[3], angle: f[4] },
            });
        }
        if entities.windows(2).any(|w| w[0].slot_index >= w[1].slot_index) {
            return Err(DecodeError::BadCode { field: "slot order", value: number });
        }
        components.push(Component { layout: Layout::new(kind, region, occupancy), entities });
    }
    let panel = SymbolicPanel { pattern, components };
    panel.validate()?;
    Ok((panel, r.pos))
}

/// Encodes a sequence of panels back to back.
pub fn encode_all<'a>(panels: impl IntoIterator<Item = &'a SymbolicPanel>) -> Result<Vec<u8>, ValidationError> {
    let mut out = Vec::new();
    for panel in panels {
        panel.validate()?;
        encode_unchecked(panel, &mut out);
    }
    Ok(out)
}

pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<SymbolicPanel>, DecodeError> {
    let mut panels = Vec::new();
    while !bytes.is_empty() {
        let (panel, used) = decode_prefix(bytes)?;
        panels.push(panel);
        bytes = &bytes[used..];
    }
    Ok(panels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn attrs(shape: ShapeType, size: u8, color: u8) -> AttributeValue {
        AttributeValue::new(shape, size, color)
    }

    #[test]
    fn entity_order_does_not_change_bytes() {
        let a = Entity { slot_index: 0, attrs: attrs(ShapeType::Circle, 2, 3) };
        let b = Entity { slot_index: 3, attrs: attrs(ShapeType::Square, 4, 5) };
        let p1 = SymbolicPanel {
            pattern: PatternId::Grid2,
            components: vec![Component { layout: Layout::new(LayoutKind::Grid2x2, 0, 0b1001), entities: vec![a, b] }],
        };
        let p2 = SymbolicPanel {
            pattern: PatternId::Grid2,
            components: vec![Component { layout: Layout::new(LayoutKind::Grid2x2, 0, 0b1001), entities: vec![b, a] }],
        };
        assert_eq!(canonical_encoding(&p1).unwrap(), canonical_encoding(&p2).unwrap());
    }

    #[test]
    fn empty_center_panel_is_rejected() {
        let p = SymbolicPanel {
            pattern: PatternId::Center,
            components: vec![Component::from_entities(LayoutKind::Single, 0, vec![])],
        };
        let err = canonical_encoding(&p).unwrap_err();
        assert_eq!(err.to_string(), "occupancy has no filled slot");
    }

    #[test]
    fn grid2_number_survives_round_trip() {
        let p = SymbolicPanel::new(
            PatternId::Grid2,
            vec![Component::uniform(LayoutKind::Grid2x2, 0, 0b1101, attrs(ShapeType::Pentagon, 5, 1))],
        );
        let bytes = canonical_encoding(&p).unwrap();
        // number byte follows magic, pattern, count, kind, region, occupancy
        assert_eq!(bytes[MAGIC.len() + 6], 3);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.number(), 3);
        assert_eq!(back, p);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(decode(b"nope"), Err(DecodeError::BadHeader));
        let p = SymbolicPanel::new(
            PatternId::Center,
            vec![Component::uniform(LayoutKind::Single, 0, 1, attrs(ShapeType::Circle, 1, 0))],
        );
        let mut bytes = canonical_encoding(&p).unwrap();
        bytes.push(0);
        assert_eq!(decode(&bytes), Err(DecodeError::TrailingBytes(1)));
        bytes.truncate(bytes.len() - 3);
        assert_eq!(decode(&bytes), Err(DecodeError::Truncated));
    }

    pub(crate) fn arb_panel() -> impl Strategy<Value = SymbolicPanel> {
        (0usize..7, prop::collection::vec((0u8..5, 1u8..=6, 0u8..=9, 1u16..512), 2)).prop_map(|(p, parts)| {
            let pattern = PatternId::ALL[p];
            let kind = pattern.layout_kind();
            let components = (0..kind.region_count())
                .map(|region| {
                    let (shape, size, color, raw) = parts[region as usize];
                    let full = crate::symbolic::full_mask(kind.slots(region).unwrap().len());
                    let mask = (raw & full).max(1);
                    let entities = (0..16u8)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|slot_index| Entity {
                            slot_index,
                            // vary per slot so entities are not all uniform
                            attrs: attrs(
                                ShapeType::from_level((shape + slot_index) % 5).unwrap(),
                                1 + (size - 1 + slot_index) % 6,
                                (color + slot_index) % 10,
                            ),
                        })
                        .collect();
                    Component::from_entities(kind, region, entities)
                })
                .collect();
            SymbolicPanel::new(pattern, components)
        })
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(panel in arb_panel()) {
            let bytes = canonical_encoding(&panel).unwrap();
            prop_assert_eq!(decode(&bytes).unwrap(), panel);
        }
    }

    #[test]
    fn no_collisions_over_a_hundred_thousand_panels() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut panels = HashSet::new();
        let mut encodings = HashSet::new();
        while panels.len() < 100_000 {
            let pattern = PatternId::ALL[rng.gen_range(0..7)];
            let kind = pattern.layout_kind();
            let components = (0..kind.region_count())
                .map(|region| {
                    let n = kind.slots(region).unwrap().len();
                    let mask = rng.gen_range(1..=crate::symbolic::full_mask(n));
                    let entities = (0..n as u8)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|slot_index| Entity {
                            slot_index,
                            attrs: attrs(
                                ShapeType::from_level(rng.gen_range(0..5)).unwrap(),
                                rng.gen_range(1..=6),
                                rng.gen_range(0..=9),
                            ),
                        })
                        .collect();
                    Component::from_entities(kind, region, entities)
                })
                .collect();
            let panel = SymbolicPanel::new(pattern, components);
            if panels.insert(panel.clone()) {
                encodings.insert(canonical_encoding(&panel).unwrap());
            }
        }
        assert_eq!(encodings.len(), panels.len());
    }

    #[test]
    fn concatenated_panels_decode_in_order() {
        let a = SymbolicPanel::new(
            PatternId::LeftRight,
            vec![Component::uniform(LayoutKind::LeftRight, 0, 0b10, attrs(ShapeType::Triangle, 6, 9))],
        );
        let b = SymbolicPanel::new(
            PatternId::OutInCenter,
            vec![
                Component::uniform(LayoutKind::OutIn, 0, 1, attrs(ShapeType::Square, 5, 0)),
                Component::uniform(LayoutKind::OutIn, 1, 1, attrs(ShapeType::Circle, 2, 7)),
            ],
        );
        let bytes = encode_all([&a, &b]).unwrap();
        assert_eq!(decode_all(&bytes).unwrap(), vec![a, b]);
    }
}
