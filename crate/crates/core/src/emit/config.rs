//! Mixture and emit configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::qa::ElicitationMode;
use crate::render::RenderConfig;

pub const RAVEN_VQA: &str = "RAVEN-VQA";
pub const RAVEN_COT: &str = "RAVEN-CoT";
pub const RAVEN_TEST: &str = "RAVEN-test";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    Test,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Stage1, Stage::Stage2, Stage::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Test => "test",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// How a source's records come into being.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Vqa,
    Cot,
    Test,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub name: String,
    pub count: u64,
    /// Pre-annotated JSONL for external sources, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl SourceSpec {
    pub fn kind(&self) -> SourceKind {
        match self.name.as_str() {
            RAVEN_VQA => SourceKind::Vqa,
            RAVEN_COT => SourceKind::Cot,
            RAVEN_TEST => SourceKind::Test,
            _ => SourceKind::External,
        }
    }

    pub fn is_perception(&self) -> bool {
        self.name.ends_with("-VQA")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub stage: Stage,
    pub sources: Vec<SourceSpec>,
    pub master_seed: u64,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StageSources {
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
}

/// A whole config file: shared settings plus the three stage mixtures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitConfig {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_shuffle_seed")]
    pub shuffle_seed: u64,
    #[serde(default)]
    pub elicitation_mode: ElicitationMode,
    #[serde(default)]
    pub render: RenderConfig,
    /// Puzzle-id digest of the held-out set; train emits refuse any id in it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_digest: Option<PathBuf>,
    #[serde(default)]
    pub stage1: StageSources,
    #[serde(default)]
    pub stage2: StageSources,
    #[serde(default)]
    pub test: StageSources,
}

fn default_shuffle_seed() -> u64 {
    1
}

pub const FULL_PRESET: &str = include_str!("../../assets/presets/full.toml");
pub const RAVEN_PRESET: &str = include_str!("../../assets/presets/raven.toml");
pub const DESK_PRESET: &str = include_str!("../../assets/presets/desk.toml");

impl EmitConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EmitConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Self::from_toml(FULL_PRESET),
            "raven" => Self::from_toml(RAVEN_PRESET),
            "desk" => Self::from_toml(DESK_PRESET),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn stage_sources(&self, stage: Stage) -> &StageSources {
        match stage {
            Stage::Stage1 => &self.stage1,
            Stage::Stage2 => &self.stage2,
            Stage::Test => &self.test,
        }
    }

    pub fn mixture(&self, stage: Stage) -> MixtureSpec {
        MixtureSpec {
            stage,
            sources: self.stage_sources(stage).sources.clone(),
            master_seed: self.master_seed,
            shuffle_seed: self.shuffle_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        for stage in Stage::ALL {
            let mut seen = std::collections::BTreeSet::new();
            for s in &self.stage_sources(stage).sources {
                if !seen.insert(&s.name) {
                    return Err(Error::Config(format!("{}: source {} listed twice", stage.as_str(), s.name)));
                }
                match (s.kind(), stage) {
                    (SourceKind::Vqa | SourceKind::Cot, Stage::Test) | (SourceKind::Test, Stage::Stage1 | Stage::Stage2) => {
                        return Err(Error::Config(format!("{} cannot be part of {}", s.name, stage.as_str())));
                    }
                    (SourceKind::External, _) if s.count > 0 && s.path.is_none() => {
                        return Err(Error::Config(format!("external source {} needs a path", s.name)));
                    }
                    (SourceKind::Vqa | SourceKind::Cot | SourceKind::Test, _) if s.count % 7 != 0 => {
                        return Err(Error::Config(format!("{} count {} is not divisible across 7 patterns", s.name, s.count)));
                    }
                    _ => {}
                }
            }
        }
        // stage 2 keeps every stage-1 perception source at no smaller count
        for s in self.stage1.sources.iter().filter(|s| s.is_perception()) {
            let kept = self.stage2.sources.iter().any(|t| t.name == s.name && t.count >= s.count);
            if !kept && !self.stage2.sources.is_empty() {
                return Err(Error::Config(format!("stage2 must include stage1 perception source {} ({})", s.name, s.count)));
            }
        }
        Ok(())
    }

    /// Resolves relative source paths against `base`.
    pub fn resolve_paths(&mut self, base: &std::path::Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.test_digest {
            fix(p);
        }
        for stage in [&mut self.stage1, &mut self.stage2, &mut self.test] {
            for s in &mut stage.sources {
                if let Some(p) = &mut s.path {
                    fix(p);
                }
            }
        }
    }

    /// Hash of the settings that shape a stage's output. Paths are left out,
    /// so moving inputs does not change it.
    pub fn config_hash(&self, stage: Stage, templates_version: u32) -> String {
        let mix = self.mixture(stage);
        let sources: Vec<(&str, u64)> = mix.sources.iter().map(|s| (s.name.as_str(), s.count)).collect();
        let canonical = serde_json::json!({
            "stage": stage,
            "sources": sources,
            "master_seed": mix.master_seed,
            "shuffle_seed": mix.shuffle_seed,
            "elicitation_mode": self.elicitation_mode,
            "render": self.render,
            "templates_version": templates_version,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}
