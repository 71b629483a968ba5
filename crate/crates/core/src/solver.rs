//! Brute-force rule induction over symbolic context panels.
//!
//! The hypothesis space is the shared [`RuleTable`]: every legal spec for
//! every governed attribute of every component. Because rules are checked
//! attribute by attribute, consistency factorizes, and [`solve`] checks
//! candidates per attribute instead of walking the full bundle product.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::rules::{check_rule, ComponentRules, RuleBundle, RuleKind, RuleSpec, RuleTable};
use crate::symbolic::{Attribute, PatternId, SymbolicPanel};

pub const CONTEXT_PANELS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InducedHypothesis {
    pub bundle: RuleBundle,
    /// Bit `i` set when the bundle holds on context row `i + 1`.
    pub consistent_rows: u8,
}

/// Per-component, per-attribute specs consistent with the two complete rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistentSpecs {
    components: Vec<ComponentSpecs>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ComponentSpecs {
    /// Non-constant number specs; position is free under these.
    varying_number: Vec<RuleSpec>,
    /// Present when a constant count is consistent; holds the position specs.
    constant_number: Option<Vec<RuleSpec>>,
    others: Vec<(Attribute, Vec<RuleSpec>)>,
}

fn context_rows(context: &[SymbolicPanel]) -> Result<[[&SymbolicPanel; 3]; 2], SolverError> {
    if context.len() != CONTEXT_PANELS {
        return Err(SolverError::ContextSize { expected: CONTEXT_PANELS, found: context.len() });
    }
    Ok([
        [&context[0], &context[1], &context[2]],
        [&context[3], &context[4], &context[5]],
    ])
}

impl ConsistentSpecs {
    pub fn induce(context: &[SymbolicPanel], pattern: PatternId, table: &RuleTable) -> Result<Self, SolverError> {
        let rows = context_rows(context)?;
        let seed = pattern.seed_pattern();
        let mut components = Vec::with_capacity(seed.components.len());
        for (c, layout) in seed.components.iter().enumerate() {
            let holds = |spec: &&RuleSpec| check_rule(&rows, c, spec);
            let consistent = |a: Attribute| -> Vec<RuleSpec> { table.legal(layout, a).iter().filter(holds).copied().collect() };
            let numbers = consistent(Attribute::Number);
            let constant_number = numbers
                .iter()
                .any(|s| s.kind == RuleKind::Constant)
                .then(|| consistent(Attribute::Position))
                .filter(|positions| !positions.is_empty());
            let varying_number = numbers.into_iter().filter(|s| s.kind != RuleKind::Constant).collect::<Vec<_>>();
            let others = [Attribute::ShapeType, Attribute::Size, Attribute::Color]
                .into_iter()
                .map(|a| (a, consistent(a)))
                .collect::<Vec<_>>();
            if (varying_number.is_empty() && constant_number.is_none()) || others.iter().any(|(_, v)| v.is_empty()) {
                return Err(SolverError::NoHypothesis);
            }
            components.push(ComponentSpecs { varying_number, constant_number, others });
        }
        Ok(Self { components })
    }

    /// Whether some admissible bundle also holds across all three rows.
    pub fn accepts(&self, context: &[SymbolicPanel], candidate: &SymbolicPanel) -> bool {
        let Ok([r0, r1]) = context_rows(context) else { return false };
        if candidate.pattern != context[0].pattern || candidate.validate().is_err() {
            return false;
        }
        let rows = [r0, r1, [&context[6], &context[7], candidate]];
        self.components.iter().enumerate().all(|(c, specs)| {
            let holds = |spec: &RuleSpec| check_rule(&rows, c, spec);
            let number_ok = specs.varying_number.iter().any(holds)
                || specs.constant_number.as_ref().is_some_and(|positions| {
                    holds(&RuleSpec::constant(Attribute::Number)) && positions.iter().any(holds)
                });
            number_ok && specs.others.iter().all(|(_, v)| v.iter().any(holds))
        })
    }

    /// Expands the factorized sets into full bundles.
    pub fn bundles(&self) -> Vec<RuleBundle> {
        let mut bundles = vec![Vec::<ComponentRules>::new()];
        for (c, specs) in self.components.iter().enumerate() {
            let mut heads: Vec<Vec<RuleSpec>> = specs.varying_number.iter().map(|s| vec![*s]).collect();
            if let Some(positions) = &specs.constant_number {
                for p in positions {
                    heads.push(vec![RuleSpec::constant(Attribute::Number), *p]);
                }
            }
            let mut options = heads;
            for (_, choices) in &specs.others {
                options = options
                    .into_iter()
                    .flat_map(|prefix| {
                        choices.iter().map(move |s| {
                            let mut next = prefix.clone();
                            next.push(*s);
                            next
                        })
                    })
                    .collect();
            }
            bundles = bundles
                .into_iter()
                .flat_map(|partial| {
                    options.iter().map(move |rules| {
                        let mut next = partial.clone();
                        next.push(ComponentRules { component: c, rules: rules.clone() });
                        next
                    })
                })
                .collect();
        }
        bundles.into_iter().map(|per_component| RuleBundle { per_component }).collect()
    }
}

/// Every bundle from the legal table consistent with context rows 1 and 2.
pub fn induce(
    context: &[SymbolicPanel],
    pattern: PatternId,
    table: &RuleTable,
) -> Result<Vec<InducedHypothesis>, SolverError> {
    let specs = ConsistentSpecs::induce(context, pattern, table)?;
    Ok(specs
        .bundles()
        .into_iter()
        .map(|bundle| InducedHypothesis { bundle, consistent_rows: 0b11 })
        .collect())
}

/// 1-based indices of candidates that complete the matrix under at least one
/// admissible hypothesis. A malformed context yields the empty set.
pub fn solve(
    context: &[SymbolicPanel],
    candidates: &[SymbolicPanel],
    pattern: PatternId,
    table: &RuleTable,
) -> BTreeSet<usize> {
    let Ok(specs) = ConsistentSpecs::induce(context, pattern, table) else {
        return BTreeSet::new();
    };
    candidates
        .iter()
        .enumerate()
        .filter(|(_, candidate)| specs.accepts(context, candidate))
        .map(|(i, _)| i + 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{build_matrix, check_bundle, RuleBundle};
    use crate::symbolic::{AttributeValue, Component, ShapeType};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn center(shape: ShapeType, size: u8, color: u8) -> SymbolicPanel {
        SymbolicPanel::new(
            PatternId::Center,
            vec![Component::uniform(crate::symbolic::LayoutKind::Single, 0, 1, AttributeValue::new(shape, size, color))],
        )
    }

    #[test]
    fn all_constant_matrix_induces_all_constant_bundle() {
        let table = RuleTable::default();
        let seed_pattern = PatternId::Center.seed_pattern();
        let bundle = RuleBundle::all_constant(&seed_pattern);
        let seed = center(ShapeType::Pentagon, 3, 6);
        let matrix = build_matrix(&seed, &bundle, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let hyps = induce(&matrix.context(), PatternId::Center, &table).unwrap();
        assert!(hyps.iter().any(|h| h.bundle == bundle));
        assert_eq!(hyps.len(), 1);
    }

    #[test]
    fn corrupted_context_has_no_hypothesis() {
        let table = RuleTable::default();
        let bundle = RuleBundle::all_constant(&PatternId::Center.seed_pattern());
        let matrix = build_matrix(&center(ShapeType::Square, 2, 1), &bundle, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut context = matrix.context();
        // size (2, 2, 6) in row 1 fits no size rule whose row 2 is (2, 2, 2)
        context[2] = center(ShapeType::Square, 6, 1);
        assert_eq!(induce(&context, PatternId::Center, &table), Err(SolverError::NoHypothesis));
        assert!(solve(&context, &[matrix.answer().clone()], PatternId::Center, &table).is_empty());
    }

    #[test]
    fn duplicated_answer_co_solves() {
        let table = RuleTable::default();
        let bundle = RuleBundle::all_constant(&PatternId::Center.seed_pattern());
        let matrix = build_matrix(&center(ShapeType::Circle, 4, 4), &bundle, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let answer = matrix.answer().clone();
        let other = center(ShapeType::Circle, 5, 4);
        let solved = solve(&matrix.context(), &[other.clone(), answer.clone(), answer], PatternId::Center, &table);
        assert_eq!(solved, BTreeSet::from([2, 3]));
        assert!(solve(&matrix.context(), &[other], PatternId::Center, &table).is_empty());
    }

    #[test]
    fn accepted_candidates_satisfy_an_expanded_bundle() {
        let table = RuleTable::default();
        let bundle = RuleBundle::all_constant(&PatternId::Center.seed_pattern());
        let matrix = build_matrix(&center(ShapeType::Circle, 4, 0), &bundle, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let context = matrix.context();
        let specs = ConsistentSpecs::induce(&context, PatternId::Center, &table).unwrap();
        // color 0 constant rows are also 0 + 0 = 0 and 0 - 0 = 0
        assert_eq!(specs.bundles().len(), 3);
        let answer = matrix.answer();
        assert!(specs.accepts(&context, answer));
        let rows = [
            [&context[0], &context[1], &context[2]],
            [&context[3], &context[4], &context[5]],
            [&context[6], &context[7], answer],
        ];
        assert!(specs.bundles().iter().any(|b| check_bundle(&rows, b).is_empty()));
    }

    #[test]
    fn context_size_is_checked() {
        let table = RuleTable::default();
        let p = center(ShapeType::Circle, 1, 1);
        assert_eq!(
            induce(&[p.clone(), p], PatternId::Center, &table),
            Err(SolverError::ContextSize { expected: 8, found: 2 })
        );
    }
}
