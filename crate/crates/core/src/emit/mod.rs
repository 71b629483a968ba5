//! Materializes training mixtures and the held-out set as images + JSONL.
//!
//! Layout of an emitted stage directory:
//!
//! ```text
//! manifest.json          counts, seeds, config hash, digests
//! puzzle_ids.txt         sorted ids of every generated puzzle
//! puzzles.jsonl          symbolic puzzle records, sorted by id
//! <dataset>.jsonl        conversation records per dataset, sorted by id
//! mixture.jsonl          all conversation records, shuffled by shuffle_seed
//! key.jsonl              answer key (test stage only)
//! images/<dataset>/<id>.png (+ .geom.json for quiz sheets)
//! ```

pub mod config;
pub mod ingest;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{EmitConfig, MixtureSpec, SourceKind, SourceSpec, Stage, StageSources, RAVEN_COT, RAVEN_TEST, RAVEN_VQA};
pub use ingest::{ingest_external, ingest_file, IngestReport, Rejection};

use crate::cot::synth_cot;
use crate::encoding::encode_unchecked;
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::puzzle::{PuzzleGenerator, PuzzleRecord, Split};
use crate::qa::{qa_stream, synth_perception_qa};
use crate::render::{render_quiz, write_png, write_quiz, Composition};
use crate::rules::RuleTable;
use crate::stream::labeled;
use crate::symbolic::PatternId;
use crate::templates::{fill, Templates};

pub const IMAGE_TOKEN: &str = "<image>";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: String,
    pub value: String,
}

impl Turn {
    pub fn human(value: impl Into<String>) -> Self {
        Self { from: "human".into(), value: value.into() }
    }

    pub fn gpt(value: impl Into<String>) -> Self {
        Self { from: "gpt".into(), value: value.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub dataset_name: String,
    /// Pattern id for generated data, a task tag for external data.
    pub task: String,
    pub split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub puzzle_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: String,
    pub image: String,
    pub conversations: Vec<Turn>,
    pub meta: Meta,
}

impl ConversationRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(format!("record {}: {m}", self.id)));
        let Some(first) = self.conversations.first() else { return bad("no turns") };
        if first.from != "human" || first.value.matches(IMAGE_TOKEN).count() != 1 {
            return bad("first turn must be a human turn with exactly one image token");
        }
        if self.conversations.iter().skip(1).any(|t| t.value.contains(IMAGE_TOKEN)) {
            return bad("image token outside the first turn");
        }
        for (i, t) in self.conversations.iter().enumerate() {
            let expected = if i % 2 == 0 { "human" } else { "gpt" };
            if t.from != expected {
                return bad("turns must alternate human/gpt");
            }
        }
        Ok(())
    }
}

/// One answer-key line of a held-out set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub puzzle_id: String,
    pub answer: u8,
    pub subtask: String,
    pub candidate_count: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub stage: Stage,
    pub config_hash: String,
    pub master_seed: u64,
    pub shuffle_seed: u64,
    pub templates_version: u32,
    pub counts: BTreeMap<String, u64>,
    pub puzzle_id_digest: String,
    /// SHA-256 over the canonical symbolic encodings of every puzzle, in id order.
    pub encoding_digest: String,
    /// SHA-256 of each emitted JSONL file.
    pub files: BTreeMap<String, String>,
    pub puzzle_ids: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn vqa_record(templates: &Templates, record: &PuzzleRecord, mode: crate::qa::ElicitationMode) -> ConversationRecord {
    let items = synth_perception_qa(templates, record, mode, &mut qa_stream(record));
    let mut conversations = Vec::with_capacity(items.len() * 2);
    for (i, item) in items.iter().enumerate() {
        let q = if i == 0 { format!("{IMAGE_TOKEN}\n{}", item.question) } else { item.question.clone() };
        conversations.push(Turn::human(q));
        conversations.push(Turn::gpt(item.answer.clone()));
    }
    ConversationRecord {
        id: record.puzzle_id.clone(),
        image: crate::qa::image_ref(RAVEN_VQA, &record.puzzle_id),
        conversations,
        meta: meta(RAVEN_VQA, record),
    }
}

fn meta(dataset: &str, record: &PuzzleRecord) -> Meta {
    Meta {
        dataset_name: dataset.to_string(),
        task: record.pattern_id.as_str().to_string(),
        split: record.split.namespace().to_string(),
        puzzle_id: Some(record.puzzle_id.clone()),
    }
}

fn quiz_question(templates: &Templates, record: &PuzzleRecord) -> String {
    let count = record.candidate_count().to_string();
    format!("{IMAGE_TOKEN}\n{}", fill(&templates.emit.quiz_question, &[("count", &count)]))
}

pub fn cot_record(templates: &Templates, record: &PuzzleRecord) -> Result<ConversationRecord> {
    let cot = synth_cot(templates, record)?;
    Ok(ConversationRecord {
        id: record.puzzle_id.clone(),
        image: cot.image_ref.clone(),
        conversations: vec![Turn::human(quiz_question(templates, record)), Turn::gpt(cot.text())],
        meta: meta(RAVEN_COT, record),
    })
}

pub fn test_record(templates: &Templates, record: &PuzzleRecord) -> ConversationRecord {
    let answer = fill(&templates.cot.final_answer, &[("choice", &record.answer_position.to_string())]);
    ConversationRecord {
        id: record.puzzle_id.clone(),
        image: crate::qa::image_ref(RAVEN_TEST, &record.puzzle_id),
        conversations: vec![Turn::human(quiz_question(templates, record)), Turn::gpt(answer)],
        meta: meta(RAVEN_TEST, record),
    }
}

pub fn key_entry(record: &PuzzleRecord) -> KeyEntry {
    KeyEntry {
        puzzle_id: record.puzzle_id.clone(),
        answer: record.answer_position,
        subtask: record.pattern_id.as_str().to_string(),
        candidate_count: record.candidate_count() as u8,
    }
}

/// Reads a digest file of one puzzle id per line.
pub fn read_digest(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// Fails with every generated id that appears in `digest`.
pub fn check_leaks<'a>(ids: impl IntoIterator<Item = &'a str>, digest: &BTreeSet<String>) -> Result<()> {
    let leaked: BTreeSet<String> = ids.into_iter().filter(|id| digest.contains(*id)).map(str::to_string).collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::TestLeak { ids: leaked.into_iter().collect() })
    }
}

pub fn encoding_digest(records: &[&PuzzleRecord]) -> String {
    let mut h = Sha256::new();
    let mut buf = Vec::new();
    for r in records {
        buf.clear();
        for panel in r.context.iter().chain(std::iter::once(&r.answer)).chain(&r.distractors) {
            encode_unchecked(panel, &mut buf);
        }
        buf.push(r.answer_position);
        h.update(r.puzzle_id.as_bytes());
        h.update((buf.len() as u32).to_le_bytes());
        h.update(&buf);
    }
    hex::encode(h.finalize())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<String> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut h = Sha256::new();
    for line in lines {
        h.update(line.as_bytes());
        h.update(b"\n");
        w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

enum ImageJob<'a> {
    Render { record: &'a PuzzleRecord, dataset: &'static str, composition: Composition },
    Copy { from: PathBuf, to: String },
}

/// Emits one stage of `cfg` into `out_dir`.
///
/// Output depends only on the config and seeds, never on `workers`.
pub fn emit(cfg: &EmitConfig, stage: Stage, out_dir: &Path, workers: usize) -> Result<Manifest> {
    cfg.validate()?;
    let templates = Templates::default();
    let mix = cfg.mixture(stage);
    let split = if stage == Stage::Test { Split::Test } else { Split::Train };

    let generated = |kind| mix.sources.iter().filter(|s| s.kind() == kind).map(|s| s.count).max().unwrap_or(0);
    let per_pattern = [SourceKind::Vqa, SourceKind::Cot, SourceKind::Test].into_iter().map(generated).max().unwrap_or(0) / 7;
    let generator = PuzzleGenerator::new(RuleTable::default());
    let puzzles = generator.generate_set(&PatternId::ALL, per_pattern, mix.master_seed, split, workers)?;

    if split == Split::Train {
        if let Some(path) = &cfg.test_digest {
            check_leaks(puzzles.iter().map(|p| p.puzzle_id.as_str()), &read_digest(path)?)?;
        }
    }

    // external sources are read and checked before anything is written
    let mut external = Vec::new();
    for source in mix.sources.iter().filter(|s| s.kind() == SourceKind::External && s.count > 0) {
        let path = source.path.as_ref().ok_or_else(|| Error::Config(format!("{} needs a path", source.name)))?;
        let report = ingest_file(&templates, &source.name, path)?;
        if report.accepted.len() < source.count as usize {
            return Err(Error::Config(format!(
                "{} provides {} valid items, {} requested ({} rejected)",
                source.name,
                report.accepted.len(),
                source.count,
                report.rejected.len()
            )));
        }
        external.push((source, report));
    }

    mkdir(out_dir)?;
    let take = |count: u64| -> Vec<&PuzzleRecord> {
        let n = count / 7;
        puzzles.iter().filter(|p| p.index < n).collect()
    };
    let mut datasets: BTreeMap<String, Vec<ConversationRecord>> = BTreeMap::new();
    let mut jobs: Vec<ImageJob> = Vec::new();
    let mut key = Vec::new();
    for source in &mix.sources {
        match source.kind() {
            SourceKind::Vqa => {
                let chosen = take(source.count);
                let records = par_map(workers, &chosen, |r| vqa_record(&templates, r, cfg.elicitation_mode));
                jobs.extend(chosen.iter().map(|&record| ImageJob::Render { record, dataset: RAVEN_VQA, composition: Composition::ContextOnly }));
                datasets.insert(source.name.clone(), records);
            }
            SourceKind::Cot => {
                let chosen = take(source.count);
                let records = par_map(workers, &chosen, |r| cot_record(&templates, r)).into_iter().collect::<Result<Vec<_>>>()?;
                jobs.extend(chosen.iter().map(|&record| ImageJob::Render { record, dataset: RAVEN_COT, composition: Composition::FullQuiz }));
                datasets.insert(source.name.clone(), records);
            }
            SourceKind::Test => {
                let chosen = take(source.count);
                let records = chosen.iter().map(|r| test_record(&templates, r)).collect();
                key.extend(chosen.iter().map(|r| key_entry(r)));
                jobs.extend(chosen.iter().map(|&record| ImageJob::Render { record, dataset: RAVEN_TEST, composition: Composition::FullQuiz }));
                datasets.insert(source.name.clone(), records);
            }
            SourceKind::External => {}
        }
    }
    for (source, report) in external {
        let items = &report.accepted[..source.count as usize];
        jobs.extend(items.iter().map(|i| ImageJob::Copy { from: i.source_image.clone(), to: i.record.image.clone() }));
        datasets.insert(source.name.clone(), items.iter().map(|i| i.record.clone()).collect());
    }
    for source in mix.sources.iter().filter(|s| s.count == 0) {
        datasets.entry(source.name.clone()).or_default();
    }

    let dirs: BTreeSet<PathBuf> = datasets.keys().map(|d| out_dir.join("images").join(d)).collect();
    for d in &dirs {
        mkdir(d)?;
    }
    let results = par_map(workers, &jobs, |job| -> Result<()> {
        match job {
            ImageJob::Render { record, dataset, composition } => {
                let path = out_dir.join(crate::qa::image_ref(dataset, &record.puzzle_id));
                let (img, manifest) = render_quiz(record, &cfg.render.with_composition(*composition));
                if *composition == Composition::FullQuiz {
                    write_quiz(&path, &img, &manifest)
                } else {
                    write_png(&path, &img)
                }
            }
            ImageJob::Copy { from, to } => {
                let target = out_dir.join(to);
                std::fs::copy(from, &target).map(|_| ()).map_err(|e| Error::io(from, e))
            }
        }
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;

    let mut files = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut mixture: Vec<(String, String, String)> = Vec::new();
    for (name, records) in &mut datasets {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let mut lines = Vec::with_capacity(records.len());
        for r in records.iter() {
            r.validate()?;
            let line = serde_json::to_string(r)?;
            mixture.push((name.clone(), r.id.clone(), line.clone()));
            lines.push(line);
        }
        let file = format!("{name}.jsonl");
        files.insert(file.clone(), write_lines(&out_dir.join(&file), &lines)?);
        counts.insert(name.clone(), records.len() as u64);
    }
    mixture.sort();
    mixture.shuffle(&mut labeled("mixture", mix.shuffle_seed));
    let lines: Vec<String> = mixture.into_iter().map(|m| m.2).collect();
    files.insert("mixture.jsonl".into(), write_lines(&out_dir.join("mixture.jsonl"), &lines)?);

    let mut used: Vec<&PuzzleRecord> = puzzles.iter().collect();
    used.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    let puzzle_lines = used.iter().map(|p| serde_json::to_string(p)).collect::<std::result::Result<Vec<_>, _>>()?;
    files.insert("puzzles.jsonl".into(), write_lines(&out_dir.join("puzzles.jsonl"), &puzzle_lines)?);
    let puzzle_ids: Vec<String> = used.iter().map(|p| p.puzzle_id.clone()).collect();
    let puzzle_id_digest = write_lines(&out_dir.join("puzzle_ids.txt"), &puzzle_ids)?;
    if !key.is_empty() {
        key.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
        let key_lines = key.iter().map(serde_json::to_string).collect::<std::result::Result<Vec<_>, _>>()?;
        files.insert("key.jsonl".into(), write_lines(&out_dir.join("key.jsonl"), &key_lines)?);
    }

    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        stage,
        config_hash: cfg.config_hash(stage, templates.version),
        master_seed: mix.master_seed,
        shuffle_seed: mix.shuffle_seed,
        templates_version: templates.version,
        counts,
        puzzle_id_digest,
        encoding_digest: encoding_digest(&used),
        files,
        puzzle_ids,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads `puzzles.jsonl` from an emitted stage.
pub fn load_puzzles(path: &Path) -> Result<Vec<PuzzleRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

pub fn load_key(path: &Path) -> Result<Vec<KeyEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(stage: &str, name: &str, count: u64) -> EmitConfig {
        EmitConfig::from_toml(&format!("[[{stage}.sources]]\nname = \"{name}\"\ncount = {count}\n")).unwrap()
    }

    #[test]
    fn empty_mixture_still_writes_a_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = EmitConfig::from_toml("").unwrap();
        let m = emit(&cfg, Stage::Stage1, dir.path(), 1).unwrap();
        assert!(m.counts.is_empty());
        assert_eq!(std::fs::read_to_string(dir.path().join("mixture.jsonl")).unwrap(), "");
        assert!(Manifest::load(&dir.path().join("manifest.json")).is_ok());
    }

    #[test]
    fn emitted_records_are_valid_and_images_exist() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny("stage2", "RAVEN-VQA", 14);
        cfg.stage2.sources.push(SourceSpec { name: RAVEN_COT.into(), count: 14, path: None });
        let m = emit(&cfg, Stage::Stage2, dir.path(), 1).unwrap();
        assert_eq!(m.counts[RAVEN_VQA], 14);
        assert_eq!(m.counts[RAVEN_COT], 14);
        let mixture = std::fs::read_to_string(dir.path().join("mixture.jsonl")).unwrap();
        assert_eq!(mixture.lines().count(), 28);
        for line in mixture.lines() {
            let r: ConversationRecord = serde_json::from_str(line).unwrap();
            r.validate().unwrap();
            assert!(dir.path().join(&r.image).exists(), "{}", r.image);
        }
    }

    #[test]
    fn leak_check_refuses_test_ids() {
        let dir = tempfile::tempdir().unwrap();
        let test = tiny("test", RAVEN_TEST, 7);
        let tm = emit(&test, Stage::Test, &dir.path().join("test"), 1).unwrap();
        // a train config that points its digest at train ids must fail
        let train_dir = dir.path().join("train");
        let mut train = tiny("stage1", RAVEN_VQA, 7);
        let first = emit(&train, Stage::Stage1, &train_dir, 1).unwrap();
        assert!(first.puzzle_ids.iter().all(|id| !tm.puzzle_ids.contains(id)));
        train.test_digest = Some(train_dir.join("puzzle_ids.txt"));
        match emit(&train, Stage::Stage1, &dir.path().join("again"), 1) {
            Err(Error::TestLeak { ids }) => assert_eq!(ids.len(), 7),
            other => panic!("{other:?}"),
        }
        train.test_digest = Some(dir.path().join("test/puzzle_ids.txt"));
        emit(&train, Stage::Stage1, &dir.path().join("ok"), 1).unwrap();
    }

    #[test]
    fn record_validation() {
        let mut r = ConversationRecord {
            id: "x".into(),
            image: "i.png".into(),
            conversations: vec![Turn::human("<image>\nq"), Turn::gpt("a")],
            meta: Meta { dataset_name: "d".into(), task: "t".into(), split: "train".into(), puzzle_id: None },
        };
        r.validate().unwrap();
        r.conversations[0].value = "q".into();
        assert!(r.validate().is_err());
    }
}
