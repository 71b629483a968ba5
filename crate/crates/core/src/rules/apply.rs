//! Matrix construction: sample a bundle, then grow rows from a seed panel.
//!
//! Out-of-range values are never clamped. Bases are rejection-sampled until
//! the whole row fits its attribute range.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GenerationError;
use crate::rules::check::{shift_mask, Level};
use crate::rules::{scalar_domain, ComponentRules, RuleBundle, RuleKind, RuleSpec, RuleTable};
use crate::symbolic::{Attribute, AttributeValue, Component, SeedPattern, ShapeType, SymbolicPanel};

pub const MAX_ATTEMPTS: usize = 1000;

/// Samples one legal spec per governed attribute, uniformly over the table.
pub fn sample_rule_bundle<R: Rng + ?Sized>(pattern: &SeedPattern, table: &RuleTable, rng: &mut R) -> RuleBundle {
    let per_component = pattern
        .components
        .iter()
        .enumerate()
        .map(|(component, layout)| {
            let pick = |attribute: Attribute, rng: &mut R| {
                *table
                    .legal(layout, attribute)
                    .choose(rng)
                    .expect("rule table validated non-empty at load")
            };
            let number = pick(Attribute::Number, rng);
            let mut rules = vec![number];
            if number.kind == RuleKind::Constant {
                rules.push(pick(Attribute::Position, rng));
            }
            for attribute in [Attribute::ShapeType, Attribute::Size, Attribute::Color] {
                rules.push(pick(attribute, rng));
            }
            ComponentRules { component, rules }
        })
        .collect();
    RuleBundle { per_component }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub panels: [SymbolicPanel; 3],
}

impl MatrixRow {
    pub fn as_refs(&self) -> [&SymbolicPanel; 3] {
        [&self.panels[0], &self.panels[1], &self.panels[2]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltMatrix {
    pub rows: [MatrixRow; 3],
}

impl BuiltMatrix {
    /// The eight context panels in row-major order.
    pub fn context(&self) -> Vec<SymbolicPanel> {
        self.rows.iter().flat_map(|r| r.panels.iter().cloned()).take(8).collect()
    }

    pub fn answer(&self) -> &SymbolicPanel {
        &self.rows[2].panels[2]
    }

    pub fn row_refs(&self) -> Vec<[&SymbolicPanel; 3]> {
        self.rows.iter().map(MatrixRow::as_refs).collect()
    }
}

/// Matrix-wide decisions shared by all rows: constant values and
/// distribute-three value sets with their Latin shift.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixPlan {
    components: Vec<BTreeMap<Attribute, AttrPlan>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AttrPlan {
    Constant(Level),
    Distribute([Level; 3], usize),
    PerRow,
}

impl AttrPlan {
    fn row(&self, row: usize) -> Option<[Level; 3]> {
        match *self {
            AttrPlan::Constant(v) => Some([v; 3]),
            AttrPlan::Distribute(set, shift) => Some([0, 1, 2].map(|col| set[(col + row * shift) % 3])),
            AttrPlan::PerRow => None,
        }
    }
}

fn seed_level(seed: &SymbolicPanel, component: usize, attribute: Attribute) -> Level {
    let comp = &seed.components[component];
    let attrs = comp.entities.first().map(|e| e.attrs);
    match attribute {
        Attribute::Number => comp.number() as Level,
        Attribute::Position => comp.layout.occupancy as Level,
        Attribute::ShapeType => attrs.map_or(0, |a| a.shape_type.level() as Level),
        Attribute::Size => attrs.map_or(1, |a| a.size as Level),
        Attribute::Color => attrs.map_or(0, |a| a.color as Level),
    }
}

fn reject<T, R: Rng + ?Sized>(
    rng: &mut R,
    spec: &RuleSpec,
    component: usize,
    mut attempt: impl FnMut(&mut R) -> Option<T>,
) -> Result<T, GenerationError> {
    for _ in 0..MAX_ATTEMPTS {
        if let Some(v) = attempt(rng) {
            return Ok(v);
        }
    }
    Err(GenerationError::Infeasible { spec: *spec, component, attempts: MAX_ATTEMPTS })
}

fn random_mask<R: Rng + ?Sized>(rng: &mut R, slots: usize, count: usize) -> u16 {
    rand::seq::index::sample(rng, slots, count.min(slots))
        .into_iter()
        .fold(0u16, |m, i| m | (1 << i))
}

fn distinct_shifts(mask: u16, step: i32, slots: usize) -> bool {
    let a = shift_mask(mask, step, slots);
    let b = shift_mask(a, step, slots);
    mask != a && a != b && mask != b
}

/// Whether a constant count `k` leaves the position rule satisfiable.
fn count_fits_position(position: Option<&RuleSpec>, k: usize, slots: usize) -> bool {
    let Some(spec) = position else { return true };
    match spec.kind {
        RuleKind::Constant => true,
        RuleKind::Arithmetic => false,
        RuleKind::DistributeThree => {
            let combos = (0..k).fold(1usize, |acc, i| acc * (slots - i) / (i + 1));
            combos >= 3
        }
        RuleKind::Progression => (1..(1u32 << slots))
            .map(|m| m as u16)
            .any(|m| m.count_ones() as usize == k && distinct_shifts(m, spec.parameter as i32, slots)),
    }
}

/// Three distinct values, the first being `preferred` when it is in range.
fn distinct_three<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &RuleSpec,
    component: usize,
    preferred: Option<Level>,
    mut draw: impl FnMut(&mut R) -> Level,
) -> Result<[Level; 3], GenerationError> {
    let mut set = Vec::with_capacity(3);
    if let Some(p) = preferred {
        set.push(p);
    }
    while set.len() < 3 {
        let v = reject(rng, spec, component, |rng| {
            let v = draw(rng);
            (!set.contains(&v)).then_some(v)
        })?;
        set.push(v);
    }
    Ok([set[0], set[1], set[2]])
}

/// Samples the matrix-wide plan for `bundle` around `seed`.
pub fn plan_matrix<R: Rng + ?Sized>(
    seed: &SymbolicPanel,
    bundle: &RuleBundle,
    rng: &mut R,
) -> Result<MatrixPlan, GenerationError> {
    let mut components = Vec::with_capacity(bundle.per_component.len());
    for rules in &bundle.per_component {
        let c = rules.component;
        let slots = seed.components[c].layout.slot_count();
        let mut plan = BTreeMap::new();
        let position = rules.get(Attribute::Position);
        let mut count = None;

        for spec in &rules.rules {
            let attribute = spec.attribute;
            let seed_value = seed_level(seed, c, attribute);
            let entry = match (attribute, spec.kind) {
                (Attribute::Position, _) => continue,
                (Attribute::Number, RuleKind::Constant) => {
                    let k = if count_fits_position(position, seed_value as usize, slots) {
                        seed_value
                    } else {
                        reject(rng, spec, c, |rng| {
                            let k = rng.gen_range(1..=slots);
                            count_fits_position(position, k, slots).then_some(k as Level)
                        })?
                    };
                    count = Some(k);
                    AttrPlan::Constant(k)
                }
                (_, RuleKind::Constant) => AttrPlan::Constant(seed_value),
                (_, RuleKind::DistributeThree) => {
                    let (lo, hi) = scalar_domain(attribute, slots);
                    let set = distinct_three(rng, spec, c, Some(seed_value), |rng| rng.gen_range(lo..=hi))?;
                    AttrPlan::Distribute(set, rng.gen_range(1..=2))
                }
                _ => AttrPlan::PerRow,
            };
            plan.insert(attribute, entry);
        }

        if let (Some(spec), Some(k)) = (position, count) {
            let k = k as usize;
            let seed_mask = seed.components[c].layout.occupancy;
            let preferred = (seed_mask.count_ones() as usize == k).then_some(seed_mask as Level);
            let entry = match spec.kind {
                RuleKind::Constant => {
                    AttrPlan::Constant(preferred.unwrap_or_else(|| random_mask(rng, slots, k) as Level))
                }
                RuleKind::DistributeThree => {
                    let set = distinct_three(rng, spec, c, preferred, |rng| random_mask(rng, slots, k) as Level)?;
                    AttrPlan::Distribute(set, rng.gen_range(1..=2))
                }
                _ => AttrPlan::PerRow,
            };
            plan.insert(Attribute::Position, entry);
        }
        components.push(plan);
    }
    Ok(MatrixPlan { components })
}

fn scalar_row<R: Rng + ?Sized>(
    spec: &RuleSpec,
    plan: AttrPlan,
    component: usize,
    slots: usize,
    seed_value: Option<Level>,
    row_index: usize,
    rng: &mut R,
) -> Result<[Level; 3], GenerationError> {
    if let Some(row) = plan.row(row_index) {
        return Ok(row);
    }
    let (lo, hi) = scalar_domain(spec.attribute, slots);
    let in_range = |v: Level| (lo..=hi).contains(&v);
    let p = spec.parameter as Level;
    let preferred = seed_value.filter(|_| row_index == 0);
    match spec.kind {
        RuleKind::Progression => {
            let fits = |b: Level| in_range(b) && in_range(b + 2 * p);
            let base = match preferred.filter(|&b| fits(b)) {
                Some(b) => b,
                None => reject(rng, spec, component, |rng| {
                    let b = rng.gen_range(lo..=hi);
                    fits(b).then_some(b)
                })?,
            };
            Ok([base, base + p, base + 2 * p])
        }
        RuleKind::Arithmetic => {
            // the second operand is never zero so the third panel always changes
            let second_lo = lo.max(1);
            let first_fits = |a: Level| (second_lo..=hi).any(|b| in_range(a + p * b));
            let first = preferred.filter(|&a| first_fits(a));
            reject(rng, spec, component, |rng| {
                let a = first.unwrap_or_else(|| rng.gen_range(lo..=hi));
                let b = rng.gen_range(second_lo..=hi);
                let c = a + p * b;
                in_range(c).then_some([a, b, c])
            })
        }
        RuleKind::Constant | RuleKind::DistributeThree => unreachable!("planned at matrix level"),
    }
}

fn position_row<R: Rng + ?Sized>(
    spec: &RuleSpec,
    plan: AttrPlan,
    component: usize,
    slots: usize,
    count: usize,
    seed_mask: Option<u16>,
    row_index: usize,
    rng: &mut R,
) -> Result<[u16; 3], GenerationError> {
    if let Some(row) = plan.row(row_index) {
        return Ok(row.map(|m| m as u16));
    }
    let step = spec.parameter as i32;
    let fits = |m: u16| m.count_ones() as usize == count && distinct_shifts(m, step, slots);
    let base = match seed_mask.filter(|&m| row_index == 0 && fits(m)) {
        Some(m) => m,
        None => reject(rng, spec, component, |rng| {
            let m = random_mask(rng, slots, count);
            fits(m).then_some(m)
        })?,
    };
    let second = shift_mask(base, step, slots);
    Ok([base, second, shift_mask(second, step, slots)])
}

/// Grows one matrix row from the seed under a shared plan.
pub fn apply_rule_row<R: Rng + ?Sized>(
    seed: &SymbolicPanel,
    bundle: &RuleBundle,
    plan: &MatrixPlan,
    row_index: usize,
    rng: &mut R,
) -> Result<MatrixRow, GenerationError> {
    let mut panels: [Vec<Component>; 3] = Default::default();
    for rules in &bundle.per_component {
        let c = rules.component;
        let layout = seed.components[c].layout;
        let slots = layout.slot_count();
        let attr_plan = &plan.components[c];
        let planned = |a: Attribute| attr_plan.get(&a).copied().unwrap_or(AttrPlan::PerRow);
        let mut levels: BTreeMap<Attribute, [Level; 3]> = BTreeMap::new();
        for spec in rules.rules.iter().filter(|s| s.attribute != Attribute::Position) {
            let seed_value = Some(seed_level(seed, c, spec.attribute));
            let row = scalar_row(spec, planned(spec.attribute), c, slots, seed_value, row_index, rng)?;
            levels.insert(spec.attribute, row);
        }
        let counts = levels[&Attribute::Number];
        let masks = match rules.get(Attribute::Position) {
            Some(spec) => position_row(
                spec,
                planned(Attribute::Position),
                c,
                slots,
                counts[0] as usize,
                Some(layout.occupancy),
                row_index,
                rng,
            )?,
            None => counts.map(|k| random_mask(rng, slots, k as usize)),
        };
        for (col, components) in panels.iter_mut().enumerate() {
            let attrs = AttributeValue::new(
                ShapeType::from_level(levels[&Attribute::ShapeType][col] as u8).expect("shape level in range"),
                levels[&Attribute::Size][col] as u8,
                levels[&Attribute::Color][col] as u8,
            );
            components.push(Component::uniform(layout.kind, layout.region, masks[col], attrs));
        }
    }
    let [a, b, c] = panels.map(|components| SymbolicPanel::new(seed.pattern, components));
    Ok(MatrixRow { panels: [a, b, c] })
}

/// Builds all three rows. The answer is the last panel of row 3.
pub fn build_matrix<R: Rng + ?Sized>(
    seed: &SymbolicPanel,
    bundle: &RuleBundle,
    rng: &mut R,
) -> Result<BuiltMatrix, GenerationError> {
    seed.validate()?;
    let plan = plan_matrix(seed, bundle, rng)?;
    let r0 = apply_rule_row(seed, bundle, &plan, 0, rng)?;
    let r1 = apply_rule_row(seed, bundle, &plan, 1, rng)?;
    let r2 = apply_rule_row(seed, bundle, &plan, 2, rng)?;
    Ok(BuiltMatrix { rows: [r0, r1, r2] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::canonical_encoding;
    use crate::rules::check::{check_bundle, check_rule, component_level};
    use crate::stream::StreamKey;
    use crate::symbolic::{LayoutKind, PatternId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seed_panel(pattern: PatternId, mask: u16, attrs: AttributeValue) -> SymbolicPanel {
        let kind = pattern.layout_kind();
        let comps = (0..kind.region_count())
            .map(|r| {
                let full = crate::symbolic::full_mask(kind.slots(r).unwrap().len());
                Component::uniform(kind, r, mask & full, attrs)
            })
            .collect();
        SymbolicPanel::new(pattern, comps)
    }

    fn bundle_with(pattern: PatternId, specs: &[RuleSpec]) -> RuleBundle {
        let seed = pattern.seed_pattern();
        let mut bundle = RuleBundle::all_constant(&seed);
        for comp in &mut bundle.per_component {
            for spec in specs {
                comp.rules.retain(|r| r.attribute != spec.attribute);
                comp.rules.push(*spec);
                if spec.attribute == Attribute::Number && spec.kind != RuleKind::Constant {
                    comp.rules.retain(|r| r.attribute != Attribute::Position);
                }
            }
            comp.rules.sort_by_key(|r| r.attribute);
        }
        bundle.validate(&seed).unwrap();
        bundle
    }

    #[test]
    fn center_bundles_keep_number_constant() {
        let table = RuleTable::default();
        let pattern = PatternId::Center.seed_pattern();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let bundle = sample_rule_bundle(&pattern, &table, &mut rng);
            bundle.validate(&pattern).unwrap();
            assert_eq!(bundle.get(0, Attribute::Number).unwrap().kind, RuleKind::Constant);
        }
    }

    #[test]
    fn bundle_sampling_is_deterministic() {
        let table = RuleTable::default();
        let pattern = PatternId::Grid2.seed_pattern();
        let key = StreamKey::new("train", 42, PatternId::Grid2, 0);
        let a = sample_rule_bundle(&pattern, &table, &mut key.stream("bundle"));
        let b = sample_rule_bundle(&pattern, &table, &mut key.stream("bundle"));
        assert_eq!(a, b);
    }

    #[test]
    fn constant_color_row() {
        let seed = seed_panel(PatternId::Center, 1, AttributeValue::new(ShapeType::Square, 3, 4));
        let bundle = bundle_with(PatternId::Center, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let plan = plan_matrix(&seed, &bundle, &mut rng).unwrap();
        let row = apply_rule_row(&seed, &bundle, &plan, 0, &mut rng).unwrap();
        let colors: Vec<_> = row.panels.iter().map(|p| component_level(p, 0, Attribute::Color).unwrap()).collect();
        assert_eq!(colors, [4, 4, 4]);
    }

    #[test]
    fn number_progression_from_base_two_on_grid3() {
        let attrs = AttributeValue::new(ShapeType::Circle, 2, 5);
        let seed = seed_panel(PatternId::Grid3, 0b11, attrs);
        let spec = RuleSpec::new(Attribute::Number, RuleKind::Progression, 1).unwrap();
        let bundle = bundle_with(PatternId::Grid3, &[spec]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let plan = plan_matrix(&seed, &bundle, &mut rng).unwrap();
        let row = apply_rule_row(&seed, &bundle, &plan, 0, &mut rng).unwrap();
        let counts: Vec<_> = row.panels.iter().map(SymbolicPanel::number).collect();
        assert_eq!(counts, [2, 3, 4]);

        // every legal base on 1..=9 with step +1 stays in range
        for base in 1..=7 {
            assert!((1..=9).contains(&(base + 2)));
        }
    }

    #[test]
    fn arithmetic_third_is_sum_of_first_two() {
        // oracle: for every in-range pair, the rule's third level is first + second
        let spec = RuleSpec::new(Attribute::Size, RuleKind::Arithmetic, 1).unwrap();
        for a in 1..=6 {
            for b in 1..=6 {
                let c = a + b;
                let holds = crate::rules::check::check_levels(&spec, &[[a, b, c]], 1);
                assert_eq!(holds, true);
            }
        }
        let seed = seed_panel(PatternId::Center, 1, AttributeValue::new(ShapeType::Circle, 2, 0));
        let bundle = bundle_with(PatternId::Center, &[spec]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = plan_matrix(&seed, &bundle, &mut rng).unwrap();
        for _ in 0..50 {
            let row = apply_rule_row(&seed, &bundle, &plan, 0, &mut rng).unwrap();
            let sizes: Vec<_> = row.panels.iter().map(|p| component_level(p, 0, Attribute::Size).unwrap()).collect();
            assert_eq!(sizes[0], 2);
            assert_eq!(sizes[2], sizes[0] + sizes[1]);
            if sizes[1] == 3 {
                assert_eq!(sizes[2], 5);
            }
        }
    }

    #[test]
    fn all_constant_matrix_is_nine_copies() {
        let seed = seed_panel(PatternId::OutInGrid, 0b0111, AttributeValue::new(ShapeType::Hexagon, 4, 2));
        let bundle = bundle_with(PatternId::OutInGrid, &[]);
        let matrix = build_matrix(&seed, &bundle, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let first = canonical_encoding(&matrix.rows[0].panels[0]).unwrap();
        for row in &matrix.rows {
            for panel in &row.panels {
                assert_eq!(canonical_encoding(panel).unwrap(), first);
            }
        }
    }

    #[test]
    fn distribute_three_shapes_form_latin_square() {
        let seed = seed_panel(PatternId::Center, 1, AttributeValue::new(ShapeType::Triangle, 3, 3));
        let spec = RuleSpec::new(Attribute::ShapeType, RuleKind::DistributeThree, 0).unwrap();
        let bundle = bundle_with(PatternId::Center, &[spec]);
        for s in 0..200 {
            let matrix = build_matrix(&seed, &bundle, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            let grid: Vec<Vec<_>> = matrix
                .rows
                .iter()
                .map(|r| r.panels.iter().map(|p| component_level(p, 0, Attribute::ShapeType).unwrap()).collect())
                .collect();
            let mut set = grid[0].clone();
            set.sort();
            for i in 0..3 {
                let mut row = grid[i].clone();
                row.sort();
                assert_eq!(row, set);
                let mut col: Vec<_> = (0..3).map(|r| grid[r][i]).collect();
                col.sort();
                assert_eq!(col, set);
            }
            assert_eq!(grid[0][0], ShapeType::Triangle.level() as Level);
        }
    }

    #[test]
    fn constructed_rows_pass_checker_over_ten_thousand_builds() {
        let table = RuleTable::default();
        let mut failures = 0;
        let mut built = 0;
        for i in 0..10_000u64 {
            let pattern = PatternId::ALL[(i % 7) as usize];
            let seed_pattern = pattern.seed_pattern();
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let bundle = sample_rule_bundle(&seed_pattern, &table, &mut rng);
            let attrs = AttributeValue::new(
                ShapeType::from_level(rng.gen_range(0..5)).unwrap(),
                rng.gen_range(1..=6),
                rng.gen_range(0..=9),
            );
            let kind = pattern.layout_kind();
            let comps = (0..kind.region_count())
                .map(|r| {
                    let n = kind.slots(r).unwrap().len();
                    let k = rng.gen_range(1..=n);
                    Component::uniform(kind, r, random_mask(&mut rng, n, k), attrs)
                })
                .collect();
            let seed = SymbolicPanel::new(pattern, comps);
            let Ok(matrix) = build_matrix(&seed, &bundle, &mut rng) else { continue };
            built += 1;
            for row in &matrix.rows {
                for p in &row.panels {
                    p.validate().unwrap();
                }
            }
            let rows = matrix.row_refs();
            if !check_bundle(&rows, &bundle).is_empty() {
                failures += 1;
            }
            for single in &rows {
                for (c, spec) in bundle.specs() {
                    if spec.kind != RuleKind::DistributeThree {
                        assert!(check_rule(std::slice::from_ref(single), c, spec));
                    }
                }
            }
        }
        assert!(built >= 9_900, "only {built} builds succeeded");
        assert_eq!(failures, 0);
    }

    #[test]
    fn layout_kind_is_shared_across_a_row() {
        let seed = seed_panel(PatternId::UpDown, 0b01, AttributeValue::new(ShapeType::Square, 1, 1));
        let spec = RuleSpec::new(Attribute::Number, RuleKind::Arithmetic, 1).unwrap();
        let bundle = bundle_with(PatternId::UpDown, &[spec]);
        let matrix = build_matrix(&seed, &bundle, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for row in &matrix.rows {
            assert!(row.panels.iter().all(|p| p.components[0].layout.kind == LayoutKind::UpDown));
            assert_eq!(row.panels.iter().map(SymbolicPanel::number).collect::<Vec<_>>(), [1, 1, 2]);
        }
    }
}
