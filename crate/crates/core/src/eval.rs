//! Transcript scoring against answer keys.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::emit::KeyEntry;
use crate::error::{Error, Result};
use crate::qa::{normalize_answer, QaItem};
use crate::stream::labeled;

/// Column order of the result tables; labels outside it sort after, by name.
pub const SUBTASK_ORDER: [&str; 13] =
    ["Center", "G-2", "G-3", "L-R", "U-D", "O-IC", "O-IG", "T-M", "S-R", "Q-T", "M-T", "2D", "3D"];

pub const DEFAULT_PATTERNS: [&str; 3] = [
    r"(?i)answer\s+is\s*:?\s*(?:option|candidate|choice|panel)?\s*\(?(\d+)\)?",
    r"(?i)choice\b(?:\s+for\s+this\s+puzzle)?(?:\s+is)?\s*:?\s*\(?(\d+)\)?",
    r"(\d+)\W*$",
];

#[derive(Debug, Clone)]
pub struct Extractor {
    patterns: Vec<Regex>,
}

impl Default for Extractor {
    fn default() -> Self {
        Self::new(&DEFAULT_PATTERNS).expect("default patterns compile")
    }
}

impl Extractor {
    /// Each pattern must capture the choice number in group 1.
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| Regex::new(p.as_ref()).map_err(|e| Error::Config(format!("bad answer pattern: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { patterns })
    }

    /// The last in-range declaration in `raw`, across all patterns.
    pub fn extract(&self, raw: &str, candidate_count: usize) -> Option<u8> {
        let mut best: Option<(usize, u8)> = None;
        for re in &self.patterns {
            for caps in re.captures_iter(raw) {
                let Some(m) = caps.get(1) else { continue };
                let Ok(n) = m.as_str().parse::<usize>() else { continue };
                if (1..=candidate_count).contains(&n) && best.is_none_or(|(pos, _)| m.start() > pos) {
                    best = Some((m.start(), n as u8));
                }
            }
        }
        best.map(|b| b.1)
    }
}

pub fn extract_choice(raw: &str, candidate_count: usize) -> Option<u8> {
    Extractor::default().extract(raw, candidate_count)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub puzzle_id: String,
    pub raw_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_choice: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Fail,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub correct: u64,
    pub total: u64,
}

impl Counts {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, other: Counts) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRow {
    pub subtask: String,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub per_subtask: Vec<SubtaskRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perception: Option<Counts>,
    pub unparsed_count: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

fn subtask_rank(name: &str) -> (usize, String) {
    (SUBTASK_ORDER.iter().position(|s| *s == name).unwrap_or(SUBTASK_ORDER.len()), name.to_string())
}

impl EvalReport {
    fn from_counts(per: &BTreeMap<String, Counts>, perception: Option<Counts>, unparsed: u64, missing: Vec<String>) -> Self {
        let mut names: Vec<&String> = per.keys().collect();
        names.sort_by_key(|n| subtask_rank(n));
        let per_subtask = names
            .into_iter()
            .map(|n| {
                let c = per[n];
                SubtaskRow { subtask: n.clone(), correct: c.correct, total: c.total, accuracy: c.accuracy() }
            })
            .collect();
        let mut all = Counts::default();
        per.values().for_each(|c| all.add(*c));
        EvalReport {
            overall_accuracy: all.accuracy(),
            correct: all.correct,
            total: all.total,
            per_subtask,
            perception_accuracy: perception.map(|p| p.accuracy()),
            perception,
            unparsed_count: unparsed,
            missing,
        }
    }

    fn counts(&self) -> BTreeMap<String, Counts> {
        self.per_subtask.iter().map(|r| (r.subtask.clone(), Counts { correct: r.correct, total: r.total })).collect()
    }

    pub fn subtask(&self, name: &str) -> Option<&SubtaskRow> {
        self.per_subtask.iter().find(|r| r.subtask == name)
    }

    /// Sums counts of two shards.
    pub fn merge(&self, other: &EvalReport) -> EvalReport {
        let mut per = self.counts();
        for (k, c) in other.counts() {
            per.entry(k).or_default().add(c);
        }
        let perception = match (self.perception, other.perception) {
            (None, None) => None,
            (a, b) => {
                let mut c = a.unwrap_or_default();
                c.add(b.unwrap_or_default());
                Some(c)
            }
        };
        let missing: BTreeSet<String> = self.missing.iter().chain(&other.missing).cloned().collect();
        EvalReport::from_counts(&per, perception, self.unparsed_count + other.unparsed_count, missing.into_iter().collect())
    }

    /// An aligned table: one column per subtask in table order, then the average.
    pub fn to_table(&self) -> String {
        let mut header = vec!["".to_string()];
        let mut acc = vec!["Acc (%)".to_string()];
        let mut n = vec!["Correct/Total".to_string()];
        for r in &self.per_subtask {
            header.push(r.subtask.clone());
            acc.push(format!("{:.1}", r.accuracy));
            n.push(format!("{}/{}", r.correct, r.total));
        }
        header.push("Avg".into());
        acc.push(format!("{:.1}", self.overall_accuracy));
        n.push(format!("{}/{}", self.correct, self.total));
        let widths: Vec<usize> = (0..header.len()).map(|i| header[i].len().max(acc[i].len()).max(n[i].len())).collect();
        let mut out = String::new();
        for row in [&header, &acc, &n] {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        let _ = writeln!(out, "unparsed: {}", self.unparsed_count);
        if let Some(p) = self.perception_accuracy {
            let _ = writeln!(out, "perception: {p:.1}");
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOptions {
    pub missing: MissingPolicy,
    pub extractor: Extractor,
    /// Overrides the key's subtask label per puzzle id.
    pub subtask_map: Option<BTreeMap<String, String>>,
}

/// Scores transcripts against a key. Unparsed outputs count as wrong.
pub fn score(transcripts: &[Transcript], key: &[KeyEntry], opts: &ScoreOptions) -> Result<EvalReport> {
    if transcripts.is_empty() {
        return Err(Error::EmptyTranscripts);
    }
    let by_id: BTreeMap<&str, &KeyEntry> = key.iter().map(|k| (k.puzzle_id.as_str(), k)).collect();
    let mut seen = BTreeSet::new();
    let mut duplicates = BTreeSet::new();
    let mut unknown = BTreeSet::new();
    for t in transcripts {
        if !by_id.contains_key(t.puzzle_id.as_str()) {
            unknown.insert(t.puzzle_id.clone());
        } else if !seen.insert(t.puzzle_id.as_str()) {
            duplicates.insert(t.puzzle_id.clone());
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownIds { ids: unknown.into_iter().collect() });
    }
    if !duplicates.is_empty() {
        return Err(Error::DuplicateIds { ids: duplicates.into_iter().collect() });
    }
    let missing: Vec<String> = key.iter().filter(|k| !seen.contains(k.puzzle_id.as_str())).map(|k| k.puzzle_id.clone()).collect();
    if !missing.is_empty() && opts.missing == MissingPolicy::Fail {
        return Err(Error::MissingTranscripts { ids: missing });
    }
    let mut per: BTreeMap<String, Counts> = BTreeMap::new();
    let mut unparsed = 0;
    for t in transcripts {
        let k = by_id[t.puzzle_id.as_str()];
        let choice = t
            .extracted_choice
            .filter(|c| (1..=k.candidate_count).contains(c))
            .or_else(|| opts.extractor.extract(&t.raw_output, k.candidate_count as usize));
        if choice.is_none() {
            unparsed += 1;
        }
        let subtask = opts.subtask_map.as_ref().and_then(|m| m.get(&k.puzzle_id)).unwrap_or(&k.subtask);
        let c = per.entry(subtask.clone()).or_default();
        c.total += 1;
        c.correct += u64::from(choice == Some(k.answer));
    }
    Ok(EvalReport::from_counts(&per, None, unparsed, missing))
}

/// Exact match of normalized answers over QA items, keyed by item id.
pub fn score_perception(predictions: &BTreeMap<String, String>, key: &[QaItem]) -> Counts {
    let mut c = Counts::default();
    for item in key {
        c.total += 1;
        if predictions.get(&item.id).is_some_and(|p| normalize_answer(p) == normalize_answer(&item.answer)) {
            c.correct += 1;
        }
    }
    c
}

impl EvalReport {
    pub fn with_perception(mut self, counts: Counts) -> Self {
        self.perception = Some(counts);
        self.perception_accuracy = Some(counts.accuracy());
        self
    }
}

/// Uniform-random answers for every key entry.
pub fn random_transcripts(key: &[KeyEntry], seed: u64) -> Vec<Transcript> {
    let mut rng = labeled("random-agent", seed);
    key.iter()
        .map(|k| Transcript {
            puzzle_id: k.puzzle_id.clone(),
            raw_output: format!("The answer is {}.", rng.gen_range(1..=k.candidate_count)),
            extracted_choice: None,
        })
        .collect()
}

pub fn parse_transcripts(jsonl: &str) -> Result<Vec<Transcript>> {
    jsonl.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(id: &str, answer: u8, subtask: &str) -> KeyEntry {
        KeyEntry { puzzle_id: id.into(), answer, subtask: subtask.into(), candidate_count: 8 }
    }

    fn t(id: &str, raw: &str) -> Transcript {
        Transcript { puzzle_id: id.into(), raw_output: raw.into(), extracted_choice: None }
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_choice("...so the answer is 4", 8), Some(4));
        assert_eq!(extract_choice("option 9 looks right", 8), None);
        assert_eq!(extract_choice("first I considered 2, but the answer is 7", 8), Some(7));
        assert_eq!(extract_choice("The correct choice for this puzzle is 3.", 8), Some(3));
        assert_eq!(extract_choice("I pick 5", 4), None);
        assert_eq!(extract_choice("no idea", 8), None);
    }

    #[test]
    fn hand_built_set() {
        let k = vec![
            key("a", 1, "Center"),
            key("b", 2, "Center"),
            key("c", 3, "Center"),
            key("d", 4, "Center"),
            key("e", 5, "G-2"),
            key("f", 6, "G-2"),
        ];
        let ts = vec![
            t("a", "answer is 1"),
            t("b", "answer is 2"),
            t("c", "answer is 3"),
            t("d", "answer is 5"),
            t("e", "answer is 5"),
            t("f", "hmm"),
        ];
        let r = score(&ts, &k, &ScoreOptions::default()).unwrap();
        assert_eq!(r.subtask("Center").unwrap().accuracy, 75.0);
        assert_eq!(r.subtask("G-2").unwrap().accuracy, 50.0);
        assert_eq!(format!("{:.1}", r.overall_accuracy), "66.7");
        assert_eq!(r.unparsed_count, 1);
        assert_eq!(r.per_subtask[0].subtask, "Center");
    }

    #[test]
    fn hard_failures() {
        let k = vec![key("a", 1, "Center"), key("b", 1, "Center")];
        assert!(matches!(score(&[], &k, &ScoreOptions::default()), Err(Error::EmptyTranscripts)));
        assert!(matches!(score(&[t("z", "1")], &k, &ScoreOptions::default()), Err(Error::UnknownIds { .. })));
        let dup = [t("a", "1"), t("a", "1"), t("b", "1")];
        assert!(matches!(score(&dup, &k, &ScoreOptions::default()), Err(Error::DuplicateIds { .. })));
        assert!(matches!(score(&[t("a", "1")], &k, &ScoreOptions::default()), Err(Error::MissingTranscripts { .. })));
        let warn = ScoreOptions { missing: MissingPolicy::Warn, ..Default::default() };
        let r = score(&[t("a", "1")], &k, &warn).unwrap();
        assert_eq!((r.total, r.missing.len()), (1, 1));
    }

    #[test]
    fn unknown_labels_sort_after_known() {
        let k = vec![key("a", 1, "zeta"), key("b", 1, "3D"), key("c", 1, "T-M"), key("d", 1, "O-IG")];
        let ts: Vec<Transcript> = k.iter().map(|e| t(&e.puzzle_id, "answer is 1")).collect();
        let r = score(&ts, &k, &ScoreOptions::default()).unwrap();
        let names: Vec<&str> = r.per_subtask.iter().map(|r| r.subtask.as_str()).collect();
        assert_eq!(names, vec!["O-IG", "T-M", "3D", "zeta"]);
        assert!(r.to_table().lines().next().unwrap().contains("O-IG"));
    }
}
