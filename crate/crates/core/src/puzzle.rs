//! Puzzle assembly: pattern, bundle, matrix, distractors and provenance.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::encode_unchecked;
use crate::error::{GenerationError, ValidationError};
use crate::parallel::par_map;
use crate::rules::{
    build_matrix, check_bundle, sample_rule_bundle, RuleBundle, RuleKind, RuleTable,
};
use crate::solver::{solve, ConsistentSpecs};
use crate::stream::StreamKey;
use crate::symbolic::{Attribute, AttributeValue, Component, PatternId, ShapeType, SymbolicPanel};

pub const CANDIDATE_COUNT: usize = 8;
pub const BUNDLE_RESAMPLES: usize = 20;
pub const DISTRACTOR_RESAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn namespace(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.namespace())
    }
}

impl FromStr for Split {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(ValidationError::UnknownName(other.to_string())),
        }
    }
}

/// One generated puzzle with full provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleRecord {
    pub puzzle_id: String,
    pub pattern_id: PatternId,
    pub master_seed: u64,
    pub index: u64,
    pub context: Vec<SymbolicPanel>,
    pub answer: SymbolicPanel,
    pub distractors: Vec<SymbolicPanel>,
    pub rules: RuleBundle,
    /// 1-based position of the answer in [`PuzzleRecord::candidates`].
    pub answer_position: u8,
    pub split: Split,
}

impl PuzzleRecord {
    /// Candidates in presentation order: distractors with the answer inserted
    /// at `answer_position`.
    pub fn candidates(&self) -> Vec<SymbolicPanel> {
        let mut out = self.distractors.clone();
        let at = (self.answer_position as usize).saturating_sub(1).min(out.len());
        out.insert(at, self.answer.clone());
        out
    }

    pub fn candidate_count(&self) -> usize {
        self.distractors.len() + 1
    }

    /// The completed 3x3 matrix in row-major order.
    pub fn full_matrix(&self) -> Vec<&SymbolicPanel> {
        self.context.iter().chain(std::iter::once(&self.answer)).collect()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.context.len() != 8 {
            return Err(ValidationError::ComponentCount { expected: 8, found: self.context.len() });
        }
        for panel in self.full_matrix().into_iter().chain(&self.distractors) {
            panel.validate()?;
            if panel.pattern != self.pattern_id {
                return Err(ValidationError::LayoutMismatch {
                    pattern: self.pattern_id,
                    kind: panel.pattern.layout_kind(),
                });
            }
        }
        self.rules.validate(&self.pattern_id.seed_pattern())?;
        if !(1..=self.candidate_count()).contains(&(self.answer_position as usize)) {
            return Err(ValidationError::IllegalRule(format!("answer_position {} out of range", self.answer_position)));
        }
        let distinct: BTreeSet<Vec<u8>> = self.candidates().iter().map(panel_bytes).collect();
        if distinct.len() != self.candidate_count() {
            return Err(ValidationError::IllegalRule("candidates are not pairwise distinct".into()));
        }
        let id = content_id(self.pattern_id, &self.context, &self.answer, &self.distractors, &self.rules);
        if id != self.puzzle_id {
            return Err(ValidationError::IllegalRule(format!("puzzle_id {} does not match content {id}", self.puzzle_id)));
        }
        Ok(())
    }
}

fn panel_bytes(panel: &SymbolicPanel) -> Vec<u8> {
    let mut out = Vec::new();
    encode_unchecked(panel, &mut out);
    out
}

/// Content hash of a puzzle. Distractors are hashed as a sorted set so the
/// id ignores presentation order; seeds and split are not part of content.
pub fn content_id(
    pattern: PatternId,
    context: &[SymbolicPanel],
    answer: &SymbolicPanel,
    distractors: &[SymbolicPanel],
    rules: &RuleBundle,
) -> String {
    let mut h = Sha256::new();
    h.update(b"AVRPZL1");
    h.update([pattern.code()]);
    for panel in context.iter().chain(std::iter::once(answer)) {
        h.update(panel_bytes(panel));
    }
    let mut sorted: Vec<Vec<u8>> = distractors.iter().map(panel_bytes).collect();
    sorted.sort();
    h.update((sorted.len() as u32).to_le_bytes());
    for bytes in sorted {
        h.update(bytes);
    }
    h.update(serde_json::to_vec(rules).expect("bundle serializes"));
    hex::encode(&h.finalize()[..16])
}

/// A random seed panel: every component gets a random count, slots and
/// attributes, angle frozen at 0.
pub fn sample_seed_panel<R: Rng + ?Sized>(pattern: PatternId, rng: &mut R) -> SymbolicPanel {
    let kind = pattern.layout_kind();
    let components = (0..kind.region_count())
        .map(|region| {
            let slots = kind.slots(region).map_or(1, <[_]>::len);
            let count = rng.gen_range(1..=slots);
            let mask = random_mask(rng, slots, count);
            let attrs = AttributeValue::new(
                ShapeType::ALL[rng.gen_range(0..ShapeType::ALL.len())],
                rng.gen_range(1..=6),
                rng.gen_range(0..=9),
            );
            Component::uniform(kind, region, mask, attrs)
        })
        .collect();
    SymbolicPanel::new(pattern, components)
}

fn random_mask<R: Rng + ?Sized>(rng: &mut R, slots: usize, count: usize) -> u16 {
    rand::seq::index::sample(rng, slots, count).into_iter().fold(0u16, |m, i| m | (1 << i))
}

/// Governed `(component, attribute)` pairs that can take another value.
fn perturbable(answer: &SymbolicPanel, bundle: &RuleBundle) -> Vec<(usize, Attribute)> {
    let mut out = Vec::new();
    for rules in &bundle.per_component {
        let c = rules.component;
        let slots = answer.components[c].layout.slot_count();
        let count = answer.components[c].number();
        for attribute in rules.governed() {
            let possible = match attribute {
                Attribute::Number => slots > 1,
                Attribute::Position => count < slots,
                _ => true,
            };
            if possible {
                out.push((c, attribute));
            }
        }
    }
    out
}

fn pick_other<R: Rng + ?Sized>(rng: &mut R, lo: u8, hi: u8, current: u8) -> u8 {
    let v = rng.gen_range(lo..hi);
    if v >= current {
        v + 1
    } else {
        v
    }
}

fn perturb<R: Rng + ?Sized>(panel: &mut SymbolicPanel, component: usize, attribute: Attribute, rng: &mut R) {
    let comp = &mut panel.components[component];
    let layout = comp.layout;
    let slots = layout.slot_count();
    let attrs = comp.entities[0].attrs;
    let count = comp.number();
    let mut set_attrs = |f: &dyn Fn(&mut AttributeValue)| {
        for e in &mut comp.entities {
            f(&mut e.attrs);
        }
    };
    match attribute {
        Attribute::ShapeType => {
            let shape = ShapeType::from_level(pick_other(rng, 0, 4, attrs.shape_type.level())).expect("in range");
            set_attrs(&|a| a.shape_type = shape);
        }
        Attribute::Size => {
            let size = pick_other(rng, 1, 6, attrs.size);
            set_attrs(&|a| a.size = size);
        }
        Attribute::Color => {
            let color = pick_other(rng, 0, 9, attrs.color);
            set_attrs(&|a| a.color = color);
        }
        Attribute::Number if slots > 1 => {
            let k = pick_other(rng, 1, slots as u8, count as u8) as usize;
            *comp = Component::uniform(layout.kind, layout.region, random_mask(rng, slots, k), attrs);
        }
        Attribute::Position if count < slots => {
            let mut mask = layout.occupancy;
            while mask == layout.occupancy {
                mask = random_mask(rng, slots, count);
            }
            *comp = Component::uniform(layout.kind, layout.region, mask, attrs);
        }
        // an earlier change in the same candidate can leave nothing to move
        Attribute::Number | Attribute::Position => {}
    }
}

/// Builds `count` distractors by perturbing one or two governed attributes of
/// the answer. Each is rejected unless it breaks the recorded bundle in row 3
/// and completes no other admissible hypothesis either.
pub fn make_distractors<R: Rng + ?Sized>(
    answer: &SymbolicPanel,
    bundle: &RuleBundle,
    context: &[SymbolicPanel],
    table: &RuleTable,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SymbolicPanel>, GenerationError> {
    let specs = ConsistentSpecs::induce(context, answer.pattern, table)?;
    let options = perturbable(answer, bundle);
    if options.is_empty() {
        return Err(GenerationError::Distractors { needed: count });
    }
    let mut out: Vec<SymbolicPanel> = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count {
        tries += 1;
        if tries > 100 * count.max(1) {
            return Err(GenerationError::Distractors { needed: count });
        }
        let changes = rng.gen_range(1..=options.len().min(2));
        let mut candidate = answer.clone();
        for &(c, attribute) in options.choose_multiple(rng, changes) {
            perturb(&mut candidate, c, attribute, rng);
        }
        if candidate == *answer || out.contains(&candidate) {
            continue;
        }
        let rows = [
            [&context[0], &context[1], &context[2]],
            [&context[3], &context[4], &context[5]],
            [&context[6], &context[7], &candidate],
        ];
        if check_bundle(&rows, bundle).is_empty() || specs.accepts(context, &candidate) {
            continue;
        }
        out.push(candidate);
    }
    Ok(out)
}

/// Generates uniquely solvable puzzles from a shared rule table.
#[derive(Debug, Clone, Default)]
pub struct PuzzleGenerator {
    table: RuleTable,
    candidate_count: usize,
}

impl PuzzleGenerator {
    pub fn new(table: RuleTable) -> Self {
        Self { table, candidate_count: CANDIDATE_COUNT }
    }

    pub fn with_candidate_count(mut self, count: usize) -> Self {
        self.candidate_count = count.max(2);
        self
    }

    pub fn table(&self) -> &RuleTable {
        &self.table
    }

    pub fn candidate_count(&self) -> usize {
        if self.candidate_count == 0 {
            CANDIDATE_COUNT
        } else {
            self.candidate_count
        }
    }

    /// Generates puzzle `index` of `pattern` in the `split` namespace.
    ///
    /// All randomness comes from streams keyed by
    /// `(split, master_seed, pattern, index, purpose)`.
    pub fn generate(
        &self,
        pattern: PatternId,
        master_seed: u64,
        index: u64,
        split: Split,
    ) -> Result<PuzzleRecord, GenerationError> {
        let key = StreamKey::new(split.namespace(), master_seed, pattern, index);
        let seed_pattern = pattern.seed_pattern();
        let candidates = self.candidate_count();
        let answer_position = key.stream("answer-position").gen_range(1..=candidates as u8);

        for attempt in 0..BUNDLE_RESAMPLES as u32 {
            let bundle = sample_rule_bundle(&seed_pattern, &self.table, &mut key.attempt("bundle", attempt));
            let seed = sample_seed_panel(pattern, &mut key.attempt("seed", attempt));
            let Ok(matrix) = build_matrix(&seed, &bundle, &mut key.attempt("matrix", attempt)) else {
                continue;
            };
            let context = matrix.context();
            let answer = matrix.answer().clone();
            for retry in 0..DISTRACTOR_RESAMPLES as u32 {
                let mut rng = key.attempt("distractors", attempt * DISTRACTOR_RESAMPLES as u32 + retry);
                let Ok(distractors) =
                    make_distractors(&answer, &bundle, &context, &self.table, candidates - 1, &mut rng)
                else {
                    continue;
                };
                let record = PuzzleRecord {
                    puzzle_id: content_id(pattern, &context, &answer, &distractors, &bundle),
                    pattern_id: pattern,
                    master_seed,
                    index,
                    context: context.clone(),
                    answer: answer.clone(),
                    distractors,
                    rules: bundle.clone(),
                    answer_position,
                    split,
                };
                let solved = solve(&record.context, &record.candidates(), pattern, &self.table);
                if solved.len() == 1 && solved.contains(&(answer_position as usize)) {
                    return Ok(record);
                }
            }
        }
        Err(GenerationError::NotUnique { pattern, index, attempts: BUNDLE_RESAMPLES })
    }

    /// `per_pattern` puzzles for each pattern, pattern-major, index-minor.
    pub fn generate_set(
        &self,
        patterns: &[PatternId],
        per_pattern: u64,
        master_seed: u64,
        split: Split,
        workers: usize,
    ) -> Result<Vec<PuzzleRecord>, GenerationError> {
        let jobs: Vec<(PatternId, u64)> = patterns
            .iter()
            .flat_map(|&p| (0..per_pattern).map(move |i| (p, i)))
            .collect();
        par_map(workers, &jobs, |&(pattern, index)| self.generate(pattern, master_seed, index, split))
            .into_iter()
            .collect()
    }
}

/// Generates with the bundled rule table and 8 candidates.
pub fn generate_puzzle(
    pattern: PatternId,
    master_seed: u64,
    index: u64,
    split: Split,
) -> Result<PuzzleRecord, GenerationError> {
    PuzzleGenerator::new(RuleTable::default()).generate(pattern, master_seed, index, split)
}

/// Histogram helpers used by `stats`.
pub fn rule_kind_counts(records: &[PuzzleRecord]) -> std::collections::BTreeMap<(Attribute, RuleKind), usize> {
    let mut counts = std::collections::BTreeMap::new();
    for record in records {
        for (_, spec) in record.rules.specs() {
            *counts.entry((spec.attribute, spec.kind)).or_insert(0) += 1;
        }
    }
    counts
}
