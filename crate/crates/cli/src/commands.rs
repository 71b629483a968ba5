use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::Value;

use avrgen_core::cot::synth_cot;
use avrgen_core::emit::{self, EmitConfig, Stage};
use avrgen_core::eval::{self, Extractor, MissingPolicy, ScoreOptions};
use avrgen_core::parallel::par_map;
use avrgen_core::puzzle::rule_kind_counts;
use avrgen_core::qa::{qa_stream, synth_perception_qa, ElicitationMode, QaItem};
use avrgen_core::render::{render_quiz, write_png, write_quiz, Composition};
use avrgen_core::solver::solve;
use avrgen_core::templates::Templates;
use avrgen_core::{PatternId, PuzzleGenerator, PuzzleRecord, RuleTable, Split};

use crate::{Cli, Command};

fn load_config(cli: &Cli) -> Result<Option<EmitConfig>> {
    let Some(path) = &cli.config else { return Ok(None) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = EmitConfig::from_toml(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(Some(cfg))
}

fn out_path(cli: &Cli, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cli.output_root.join(p)
    }
}

fn master_seed(cli: &Cli, cfg: Option<&EmitConfig>) -> u64 {
    cli.seed.or(cfg.map(|c| c.master_seed)).unwrap_or(0)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trimmed = text.trim_start();
    // a single pretty-printed object is accepted too
    if trimmed.starts_with('{') && !trimmed.lines().next().unwrap_or("").trim_end().ends_with('}') {
        return Ok(vec![serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_patterns(spec: &str) -> Result<Vec<PatternId>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(PatternId::ALL.to_vec());
    }
    spec.split(',').map(|s| s.trim().parse::<PatternId>().map_err(Into::into)).collect()
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let templates = Templates::default();
    match &cli.command {
        Command::Generate(a) => {
            let split: Split = a.split.parse()?;
            let patterns = parse_patterns(&a.patterns)?;
            let generator = PuzzleGenerator::new(RuleTable::default()).with_candidate_count(a.candidates);
            let records = generator.generate_set(&patterns, a.per_pattern, master_seed(cli, cfg.as_ref()), split, cli.workers)?;
            let out = out_path(cli, &a.out);
            write_jsonl(&out, &records)?;
            println!("{} puzzles -> {}", records.len(), out.display());
        }
        Command::Render(a) => {
            let records: Vec<PuzzleRecord> = read_jsonl(&a.input)?;
            let mut render = cfg.map(|c| c.render).unwrap_or_default();
            if let Some(c) = &a.composition {
                render.composition = c.parse::<Composition>()?;
            }
            if let Some(px) = a.panel_px {
                render.panel_px = px;
            }
            render.validate()?;
            let dir = out_path(cli, &a.out);
            fs::create_dir_all(&dir)?;
            let results = par_map(cli.workers, &records, |r| {
                let path = dir.join(format!("{}.png", r.puzzle_id));
                let (img, manifest) = render_quiz(r, &render);
                if render.composition == Composition::FullQuiz { write_quiz(&path, &img, &manifest) } else { write_png(&path, &img) }
            });
            results.into_iter().collect::<avrgen_core::Result<Vec<()>>>()?;
            println!("{} images -> {}", records.len(), dir.display());
        }
        Command::Qa(a) => {
            let records: Vec<PuzzleRecord> = read_jsonl(&a.input)?;
            let mode = match &a.mode {
                Some(m) => m.parse()?,
                None => cfg.map(|c| c.elicitation_mode).unwrap_or_default(),
            };
            let items: Vec<QaItem> =
                records.iter().flat_map(|r| synth_perception_qa(&templates, r, mode, &mut qa_stream(r))).collect();
            let out = out_path(cli, &a.out);
            write_jsonl(&out, &items)?;
            println!("{} items -> {}", items.len(), out.display());
        }
        Command::Cot(a) => {
            let records: Vec<PuzzleRecord> = read_jsonl(&a.input)?;
            let cots = records.iter().map(|r| synth_cot(&templates, r)).collect::<avrgen_core::Result<Vec<_>>>()?;
            let out = out_path(cli, &a.out);
            write_jsonl(&out, &cots)?;
            println!("{} chains -> {}", cots.len(), out.display());
        }
        Command::Emit(a) => {
            let stage: Stage = a.stage.parse()?;
            let mut cfg = match cfg {
                Some(c) => c,
                None => EmitConfig::preset(&a.preset)?,
            };
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            if let Some(m) = &a.mode {
                cfg.elicitation_mode = m.parse::<ElicitationMode>()?;
            }
            if let Some(d) = &a.test_digest {
                cfg.test_digest = Some(d.clone());
            } else if cfg.test_digest.is_none() && stage != Stage::Test {
                let default = cli.output_root.join("test").join("puzzle_ids.txt");
                if default.exists() {
                    cfg.test_digest = Some(default);
                }
            }
            let out = a.out.as_ref().map(|o| out_path(cli, o)).unwrap_or_else(|| cli.output_root.join(stage.as_str()));
            let manifest = emit::emit(&cfg, stage, &out, cli.workers)?;
            for (name, n) in &manifest.counts {
                println!("{name}\t{n}");
            }
            println!("config_hash\t{}", manifest.config_hash);
            println!("output\t{}", out.display());
        }
        Command::Solve(a) => {
            let records: Vec<PuzzleRecord> = read_jsonl(&a.input)?;
            let table = RuleTable::default();
            let single = records.len() == 1;
            for r in &records {
                let solved = solve(&r.context, &r.candidates(), r.pattern_id, &table);
                if solved.len() != 1 {
                    bail!("puzzle {} has {} solutions: {:?}", r.puzzle_id, solved.len(), solved);
                }
                let answer = solved.first().copied().unwrap_or_default();
                if single {
                    println!("{answer}");
                } else {
                    println!("{}\t{answer}", r.puzzle_id);
                }
            }
        }
        Command::Eval(a) => {
            let key = emit::load_key(&a.key)?;
            let text = fs::read_to_string(&a.transcripts).with_context(|| format!("reading {}", a.transcripts.display()))?;
            let transcripts = eval::parse_transcripts(&text)?;
            let missing = match a.missing.as_str() {
                "fail" => MissingPolicy::Fail,
                "warn" => MissingPolicy::Warn,
                other => bail!("--missing must be fail or warn, got {other:?}"),
            };
            let subtask_map = match &a.subtask_map {
                Some(p) => Some(serde_json::from_str::<BTreeMap<String, String>>(&fs::read_to_string(p)?)?),
                None => None,
            };
            let extractor = if a.patterns.is_empty() { Extractor::default() } else { Extractor::new(&a.patterns)? };
            let opts = ScoreOptions { missing, extractor, subtask_map };
            let mut report = eval::score(&transcripts, &key, &opts)?;
            if let (Some(kp), Some(pp)) = (&a.perception_key, &a.perception) {
                let items: Vec<QaItem> = read_jsonl(kp)?;
                let preds: Vec<Value> = read_jsonl(pp)?;
                let map: BTreeMap<String, String> = preds
                    .iter()
                    .filter_map(|v| Some((v.get("id")?.as_str()?.to_string(), v.get("answer")?.as_str()?.to_string())))
                    .collect();
                report = report.with_perception(eval::score_perception(&map, &items));
            }
            for id in &report.missing {
                eprintln!("warning: no transcript for {id}");
            }
            print!("{}", report.to_table());
            if let Some(p) = &a.json_out {
                let out = out_path(cli, p);
                fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")?;
            }
        }
        Command::Stats(a) => {
            let records: Vec<PuzzleRecord> = read_jsonl(&a.input)?;
            let mut per_pattern: BTreeMap<&str, usize> = BTreeMap::new();
            for r in &records {
                *per_pattern.entry(r.pattern_id.as_str()).or_default() += 1;
            }
            let kinds: BTreeMap<String, usize> =
                rule_kind_counts(&records).into_iter().map(|((a, k), n)| (format!("{a}:{k}"), n)).collect();
            let mut out = serde_json::json!({
                "total": records.len(),
                "per_pattern": per_pattern,
                "rule_kinds": kinds,
            });
            if !a.no_audit {
                let table = RuleTable::default();
                let unique = par_map(cli.workers, &records, |r| {
                    let s = solve(&r.context, &r.candidates(), r.pattern_id, &table);
                    s.len() == 1 && s.contains(&(r.answer_position as usize))
                })
                .into_iter()
                .filter(|u| *u)
                .count();
                out["uniqueness"] = serde_json::json!({ "checked": records.len(), "unique": unique });
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}
