//! Independent rule checker. Re-derives every rule from panel content without
//! touching the generator's sampling state.

use crate::rules::{RuleBundle, RuleKind, RuleSpec};
use crate::symbolic::{Attribute, SymbolicPanel};

/// Scalar level or occupancy mask, depending on the attribute.
pub type Level = i32;

/// The level of `attribute` in one component of a panel.
///
/// Shape, size and color are only defined when every entity of the component
/// shares them; mixed components have no level.
pub fn component_level(panel: &SymbolicPanel, component: usize, attribute: Attribute) -> Option<Level> {
    let comp = panel.components.get(component)?;
    match attribute {
        Attribute::Number => Some(comp.number() as Level),
        Attribute::Position => Some(comp.layout.occupancy as Level),
        Attribute::ShapeType => comp.uniform_attrs().map(|a| a.shape_type.level() as Level),
        Attribute::Size => comp.uniform_attrs().map(|a| a.size as Level),
        Attribute::Color => comp.uniform_attrs().map(|a| a.color as Level),
    }
}

/// Rotates occupied slots by `step` along the slot order, wrapping at `slots`.
pub fn shift_mask(mask: u16, step: i32, slots: usize) -> u16 {
    let n = slots as i32;
    let mut out = 0u16;
    for i in 0..n {
        if mask & (1 << i) != 0 {
            out |= 1 << (i + step).rem_euclid(n);
        }
    }
    out
}

/// Row-local part of a scalar rule. Distribute-three only checks that the row
/// holds three distinct values; the cross-row part is in [`check_rule`].
pub(crate) fn scalar_row_holds(spec: &RuleSpec, row: &[Level; 3], slots: Option<usize>) -> bool {
    let [a, b, c] = *row;
    let p = spec.parameter as Level;
    if spec.attribute == Attribute::Position {
        let n = slots.unwrap_or(0);
        let (ma, mb, mc) = (a as u16, b as u16, c as u16);
        return match spec.kind {
            RuleKind::Constant => a == b && b == c,
            RuleKind::Progression => {
                shift_mask(ma, p, n) == mb && shift_mask(mb, p, n) == mc && ma != mb && mb != mc && ma != mc
            }
            RuleKind::Arithmetic => false,
            RuleKind::DistributeThree => {
                a != b && b != c && a != c && ma.count_ones() == mb.count_ones() && mb.count_ones() == mc.count_ones()
            }
        };
    }
    match spec.kind {
        RuleKind::Constant => a == b && b == c,
        RuleKind::Progression => b - a == p && c - b == p,
        RuleKind::Arithmetic => c == a + p * b,
        RuleKind::DistributeThree => a != b && b != c && a != c,
    }
}

fn sorted(row: &[Level; 3]) -> [Level; 3] {
    let mut s = *row;
    s.sort_unstable();
    s
}

/// Checks one rule over one or more complete rows of a matrix.
///
/// Distribute-three additionally requires every row to permute the same value
/// set and no value to repeat within a column.
pub fn check_rule(rows: &[[&SymbolicPanel; 3]], component: usize, spec: &RuleSpec) -> bool {
    let Some(first) = rows.first() else { return true };
    let Some(comp) = first[0].components.get(component) else { return false };
    let slots = comp.layout.slot_count();
    let mut values = Vec::with_capacity(rows.len());
    for row in rows {
        let mut levels = [0; 3];
        for (slot, panel) in levels.iter_mut().zip(row) {
            match component_level(panel, component, spec.attribute) {
                Some(level) => *slot = level,
                None => return false,
            }
        }
        values.push(levels);
    }
    check_levels(spec, &values, slots)
}

pub(crate) fn check_levels(spec: &RuleSpec, rows: &[[Level; 3]], slots: usize) -> bool {
    if !rows.iter().all(|row| scalar_row_holds(spec, row, Some(slots))) {
        return false;
    }
    if spec.kind == RuleKind::DistributeThree {
        let set = sorted(&rows[0]);
        if rows.iter().any(|row| sorted(row) != set) {
            return false;
        }
        for col in 0..3 {
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    if rows[i][col] == rows[j][col] {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Specs of `bundle` violated by the given rows, as `(component, spec)`.
pub fn check_bundle(rows: &[[&SymbolicPanel; 3]], bundle: &RuleBundle) -> Vec<(usize, RuleSpec)> {
    bundle
        .specs()
        .filter(|(component, spec)| !check_rule(rows, *component, spec))
        .map(|(component, spec)| (component, *spec))
        .collect()
}

/// The third level of a row implied by `spec`, given its first two levels and
/// a complete earlier row (needed by distribute-three).
pub fn predict_level(spec: &RuleSpec, earlier: &[Level; 3], partial: [Level; 2], slots: usize) -> Option<Level> {
    let [a, b] = partial;
    let p = spec.parameter as Level;
    let predicted = match (spec.kind, spec.attribute) {
        (RuleKind::Constant, _) => a,
        (RuleKind::Progression, Attribute::Position) => shift_mask(b as u16, p, slots) as Level,
        (RuleKind::Progression, _) => b + p,
        (RuleKind::Arithmetic, Attribute::Position) => return None,
        (RuleKind::Arithmetic, _) => a + p * b,
        (RuleKind::DistributeThree, _) => *earlier.iter().find(|v| **v != a && **v != b)?,
    };
    Some(predicted)
}
