//! Manifest-driven orchestration of the stages behind the command line.

pub mod config;
mod stages;

pub use config::{parse_budget, Config};
pub use stages::*;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus_with_limit, Corpus, CorpusError};
use crate::harness::meter::{meter_for, CostMeter};
use crate::harness::{Harness, HarnessError, Toolchains};
use crate::util::{read_json, write_json};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("provider: {0}")]
    Provider(String),
    #[error("build/exec: {0}")]
    Build(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 2,
            PipelineError::Precondition(_) => 3,
            PipelineError::Provider(_) => 4,
            PipelineError::Build(_) => 5,
            PipelineError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Usage(_) => "usage",
            PipelineError::Precondition(_) => "precondition",
            PipelineError::Provider(_) => "provider",
            PipelineError::Build(_) => "build",
            PipelineError::Io(_) => "io",
        }
    }
}

impl From<HarnessError> for PipelineError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Build(other.to_string()),
        }
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        PipelineError::Precondition(e.to_string())
    }
}

impl From<crate::llm::ProviderError> for PipelineError {
    fn from(e: crate::llm::ProviderError) -> Self {
        PipelineError::Provider(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Profile,
    MinePairs,
    Constraints,
    Mutators,
    Fuzz,
    Filter,
    Assemble,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Profile,
        Stage::MinePairs,
        Stage::Constraints,
        Stage::Mutators,
        Stage::Fuzz,
        Stage::Filter,
        Stage::Assemble,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Profile => "profile",
            Stage::MinePairs => "mine-pairs",
            Stage::Constraints => "constraints",
            Stage::Mutators => "mutators",
            Stage::Fuzz => "fuzz",
            Stage::Filter => "filter",
            Stage::Assemble => "assemble",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed: bool,
    /// Output paths relative to the run directory.
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub problem_id: String,
    /// Stage name -> outcome for this solution.
    pub status: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub corpus_root: PathBuf,
    pub config: Config,
    pub stages: BTreeMap<Stage, StageRecord>,
    pub solutions: BTreeMap<String, SolutionRecord>,
}

impl RunManifest {
    pub fn completed(&self, stage: Stage) -> bool {
        self.stages.get(&stage).is_some_and(|s| s.completed)
    }

    pub fn set_status(&mut self, problem_id: &str, solution_id: &str, stage: Stage, status: impl Into<String>) {
        let rec = self.solutions.entry(solution_id.to_string()).or_default();
        rec.problem_id = problem_id.to_string();
        rec.status.insert(stage.name().to_string(), status.into());
    }

    pub fn status(&self, solution_id: &str, stage: Stage) -> Option<&str> {
        self.solutions
            .get(solution_id)
            .and_then(|r| r.status.get(stage.name()))
            .map(String::as_str)
    }

    /// Marks `stage` and everything after it incomplete.
    pub fn invalidate_from(&mut self, stage: Stage) {
        for s in Stage::ALL.iter().filter(|s| **s >= stage) {
            self.stages.remove(s);
            for rec in self.solutions.values_mut() {
                rec.status.remove(s.name());
            }
        }
    }
}

pub const MANIFEST: &str = "manifest.json";

/// An opened run directory.
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub corpus: Corpus,
    pub harness: Harness,
}

impl Run {
    pub fn create(dir: &Path, corpus_root: &Path, config: Config) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir)?;
        let corpus_root = std::fs::canonicalize(corpus_root)
            .map_err(|e| PipelineError::Precondition(format!("corpus root {}: {e}", corpus_root.display())))?;
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let manifest = RunManifest {
            run_id,
            corpus_root,
            config,
            stages: BTreeMap::new(),
            solutions: BTreeMap::new(),
        };
        Self::from_manifest(dir, manifest)
    }

    pub fn open(dir: &Path) -> Result<Self, PipelineError> {
        Self::open_with(dir, Ok)
    }

    /// Opens a run and replaces its config snapshot with `update(snapshot)`.
    pub fn open_with(
        dir: &Path,
        update: impl FnOnce(Config) -> Result<Config, PipelineError>,
    ) -> Result<Self, PipelineError> {
        let mut manifest: RunManifest = read_json(&dir.join(MANIFEST)).map_err(|e| {
            PipelineError::Precondition(format!(
                "{} is not a run directory ({e}); run `ingest` first",
                dir.display()
            ))
        })?;
        manifest.config = update(manifest.config)?;
        Self::from_manifest(dir, manifest)
    }

    fn from_manifest(dir: &Path, manifest: RunManifest) -> Result<Self, PipelineError> {
        let corpus = load_corpus_with_limit(&manifest.corpus_root, manifest.config.corpus.max_input_bytes)?;
        let toolchains = match &manifest.config.harness.toolchains {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Toolchains::from_toml_str(&text)
                    .map_err(|e| PipelineError::Usage(format!("{}: {e}", path.display())))?
            }
            None => Toolchains::default(),
        };
        let harness = Harness::new(dir.join("work"), toolchains)?;
        Ok(Run {
            dir: dir.to_path_buf(),
            manifest,
            corpus,
            harness,
        })
    }

    pub fn save(&self) -> Result<(), PipelineError> {
        write_json(&self.dir.join(MANIFEST), &self.manifest)?;
        Ok(())
    }

    pub fn config(&self) -> &Config {
        &self.manifest.config
    }

    pub fn meter(&self) -> Box<dyn CostMeter> {
        let h = &self.manifest.config.harness;
        meter_for(h.meter, &h.perf_event)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Errors unless every stage in `needs` has completed.
    pub fn require(&self, stage: Stage, needs: &[Stage]) -> Result<(), PipelineError> {
        let missing: Vec<&str> = needs
            .iter()
            .filter(|s| !self.manifest.completed(**s))
            .map(|s| s.name())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Precondition(format!(
                "`{stage}` needs stage {} to complete first",
                missing.join(", ")
            )))
        }
    }

    /// True when `stage` should be skipped as already complete. With
    /// `force`, clears it and all later stages instead.
    pub fn begin(&mut self, stage: Stage, force: bool) -> bool {
        if self.manifest.completed(stage) && !force {
            return true;
        }
        self.manifest.invalidate_from(stage);
        false
    }

    pub fn finish(
        &mut self,
        stage: Stage,
        outputs: Vec<String>,
        detail: serde_json::Value,
    ) -> Result<(), PipelineError> {
        self.manifest.stages.insert(
            stage,
            StageRecord {
                completed: true,
                outputs,
                detail,
            },
        );
        self.save()
    }

    pub fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.manifest.config.jobs())
            .build()
            .expect("thread pool")
    }
}
