//! `avrgen`: generate, render, annotate, emit and score Raven-style puzzles.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "avrgen", version, about = "Procedural Raven-style puzzle datasets", disable_help_subcommand = true)]
pub struct Cli {
    /// TOML config (seeds, render settings, stage mixtures)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root for relative output paths
    #[arg(long, global = true, env = "AVRGEN_OUTPUT_ROOT", hide_env_values = true, value_name = "DIR", default_value = ".")]
    pub output_root: PathBuf,
    /// Worker threads; never changes outputs
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Master seed, overriding the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate symbolic puzzles as JSONL
    Generate(GenerateArgs),
    /// Render puzzle sheets to PNG with geometry sidecars
    Render(RenderArgs),
    /// Synthesize perception QA items
    Qa(QaArgs),
    /// Synthesize template reasoning chains
    Cot(CotArgs),
    /// Emit a training mixture or the held-out set
    Emit(EmitArgs),
    /// Solve puzzles with the rule-induction oracle
    Solve(SolveArgs),
    /// Score transcripts against an answer key
    Eval(EvalArgs),
    /// Summarize a puzzle file
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Comma-separated pattern ids, or "all"
    #[arg(long, default_value = "all")]
    pub patterns: String,
    #[arg(long, default_value_t = 70)]
    pub per_pattern: u64,
    /// train or test
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Candidates per puzzle
    #[arg(long, default_value_t = 8)]
    pub candidates: usize,
    #[arg(long, default_value = "puzzles.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Puzzle JSONL
    pub input: PathBuf,
    /// context_only, full_quiz or single_candidate
    #[arg(long)]
    pub composition: Option<String>,
    #[arg(long)]
    pub panel_px: Option<u32>,
    #[arg(long, default_value = "images")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QaArgs {
    pub input: PathBuf,
    /// base_shuffle, elicit_shuffle or elicit_sequential
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, default_value = "qa.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CotArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "cot.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    /// stage1, stage2 or test
    #[arg(long)]
    pub stage: String,
    /// Built-in mixture when no --config is given: full, raven or desk
    #[arg(long, default_value = "raven")]
    pub preset: String,
    /// Elicitation mode for RAVEN-VQA
    #[arg(long)]
    pub mode: Option<String>,
    /// Test puzzle-id digest; defaults to <output-root>/test/puzzle_ids.txt when present
    #[arg(long, value_name = "FILE")]
    pub test_digest: Option<PathBuf>,
    /// Output directory; defaults to <output-root>/<stage>
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// A puzzle record (JSON) or puzzle JSONL
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Answer key JSONL
    #[arg(long)]
    pub key: PathBuf,
    /// Transcript JSONL
    #[arg(long)]
    pub transcripts: PathBuf,
    /// fail or warn on key entries without a transcript
    #[arg(long, default_value = "fail")]
    pub missing: String,
    /// JSON object mapping puzzle id to subtask label
    #[arg(long, value_name = "FILE")]
    pub subtask_map: Option<PathBuf>,
    /// Answer-declaration regex, repeatable; replaces the defaults
    #[arg(long = "pattern", value_name = "REGEX")]
    pub patterns: Vec<String>,
    /// QA items JSONL to score perception against
    #[arg(long, value_name = "FILE", requires = "perception")]
    pub perception_key: Option<PathBuf>,
    /// Perception predictions JSONL with `id` and `answer`
    #[arg(long, value_name = "FILE", requires = "perception_key")]
    pub perception: Option<PathBuf>,
    /// Also write the report as JSON
    #[arg(long, value_name = "FILE")]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub input: PathBuf,
    /// Skip the solver uniqueness audit
    #[arg(long)]
    pub no_audit: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<avrgen_core::Error>().map_or("error", |e| e.kind());
            let line = serde_json::json!({ "error": kind, "message": message(&e) });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined with ": ", skipping causes already quoted by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}
