//! Building and running solutions under resource limits.
//!
//! A [`Harness`] owns a work directory holding a content-addressed build
//! cache and the helper runtimes (edge-coverage counter, Python line tracer).
//! All operations are safe to call concurrently; each execution gets its
//! own scratch directory.

pub mod meter;
pub mod process;
pub mod profile;
pub mod sentinel;
pub mod toolchain;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Solution, TestInput, DEFAULT_MAX_INPUT_BYTES};
use crate::util::sha256_hex;

pub use meter::{CostMeter, HardwareCounter, MeterKind, TraceCounter};
pub use process::RunOptions;
pub use profile::LineProfile;
pub use toolchain::{ArtifactKind, CoverageChannel, LineProfiler, Toolchains};

use toolchain::Placeholders;

const COV_RT: &str = include_str!("../../assets/runtime/wedge_cov_rt.cc");
const LINE_TRACER: &str = include_str!("../../assets/runtime/wedge_linetrace.py");
const COV_OUT: &str = "wedge-cov.txt";
const LINES_OUT: &str = "wedge-lines.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("build failed:\n{0}")]
    BuildFailed(String),
    #[error("unsupported language: {0}")]
    UnsupportedLanguage(String),
    #[error("input of {size} bytes exceeds limit {limit}")]
    InputTooLarge { size: usize, limit: usize },
    #[error("sandbox failure: {0}")]
    SandboxFailure(String),
    #[error("cost meter unavailable: {0}")]
    MeterUnavailable(String),
    #[error("cost meter failure: {0}")]
    MeterFailure(String),
    #[error("line profile unavailable: {0}")]
    ProfileUnavailable(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildMode {
    Plain,
    /// Per-line hit counts.
    LineProfile,
    /// Cheap per-execution coverage for fuzzing feedback.
    Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildArtifact {
    pub solution_id: String,
    pub language: String,
    pub kind: ArtifactKind,
    pub entry: PathBuf,
    pub source_path: PathBuf,
    pub build_dir: PathBuf,
    pub build_log: String,
    pub profiling_enabled: bool,
    pub coverage_enabled: bool,
    pub argv: Vec<String>,
    pub line_profiler: LineProfiler,
    pub coverage: CoverageChannel,
}

impl BuildArtifact {
    pub fn line_count(&self) -> usize {
        fs::read_to_string(&self.source_path)
            .map(|s| s.lines().count())
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    pub wall_timeout: Duration,
    pub memory_cap: u64,
    pub max_input_bytes: usize,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        ExecutionLimits {
            wall_timeout: Duration::from_secs(10),
            memory_cap: 2 * 1024 * 1024 * 1024,
            max_input_bytes: DEFAULT_MAX_INPUT_BYTES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ExitStatus {
    Ok,
    Nonzero(i32),
    Signaled(i32),
    Timeout,
    Oom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub exit: ExitStatus,
    pub wall_time: Duration,
    pub checker_hits: BTreeSet<String>,
}

impl ExecutionResult {
    /// Aborted by an instrumented checker rather than failing.
    pub fn is_constraint_abort(&self) -> bool {
        self.exit == ExitStatus::Signaled(libc::SIGABRT) && !self.checker_hits.is_empty()
    }

    pub fn is_ok(&self) -> bool {
        self.exit == ExitStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMeasurement {
    pub per_run_costs: Vec<u64>,
    pub mean_cost: f64,
    pub meter: MeterKind,
}

impl CostMeasurement {
    pub fn from_runs(per_run_costs: Vec<u64>, meter: MeterKind) -> Option<Self> {
        if per_run_costs.is_empty() {
            return None;
        }
        let mean_cost =
            per_run_costs.iter().map(|&c| c as f64).sum::<f64>() / per_run_costs.len() as f64;
        Some(CostMeasurement {
            per_run_costs,
            mean_cost,
            meter,
        })
    }
}

/// Sparse coverage counts keyed by edge slot or source line.
pub type CoverageMap = BTreeMap<u32, u64>;

pub struct Harness {
    toolchains: Toolchains,
    work_dir: PathBuf,
    cov_rt: PathBuf,
    tracer: PathBuf,
}

impl Harness {
    pub fn new(work_dir: impl Into<PathBuf>, toolchains: Toolchains) -> Result<Self, HarnessError> {
        let work_dir = work_dir.into();
        let assets = work_dir.join("assets");
        fs::create_dir_all(&assets)?;
        let cov_rt = assets.join("wedge_cov_rt.cc");
        let tracer = assets.join("wedge_linetrace.py");
        write_if_changed(&cov_rt, COV_RT)?;
        write_if_changed(&tracer, LINE_TRACER)?;
        Ok(Harness {
            toolchains,
            work_dir,
            cov_rt,
            tracer,
        })
    }

    pub fn toolchains(&self) -> &Toolchains {
        &self.toolchains
    }

    pub fn work_dir(&self) -> &Path {
        &self.work_dir
    }

    /// Builds `solution`; `profiling` enables the line-profile channel.
    pub fn build(&self, solution: &Solution, profiling: bool) -> Result<BuildArtifact, HarnessError> {
        let mode = if profiling {
            BuildMode::LineProfile
        } else {
            BuildMode::Plain
        };
        self.build_mode(solution, mode)
    }

    pub fn build_mode(&self, solution: &Solution, mode: BuildMode) -> Result<BuildArtifact, HarnessError> {
        self.build_source(&solution.id, &solution.language, &solution.source, mode)
    }

    /// Builds arbitrary source text under a solution id. Results are cached
    /// by content, so repeated builds of the same text are free.
    pub fn build_source(
        &self,
        solution_id: &str,
        language: &str,
        source: &str,
        mode: BuildMode,
    ) -> Result<BuildArtifact, HarnessError> {
        let tc = self
            .toolchains
            .get(language)
            .ok_or_else(|| HarnessError::UnsupportedLanguage(language.to_string()))?;
        let (build_tpl, run_tpl) = match mode {
            BuildMode::Plain => (tc.build.clone(), tc.run.clone()),
            BuildMode::LineProfile => {
                if tc.line_profiler == LineProfiler::None {
                    return Err(HarnessError::ProfileUnavailable(format!(
                        "no line profiler configured for {language}"
                    )));
                }
                (
                    tc.build_profile.clone().or_else(|| tc.build.clone()),
                    tc.run_profile.clone().unwrap_or_else(|| tc.run.clone()),
                )
            }
            BuildMode::Coverage => (
                tc.build_coverage.clone().or_else(|| tc.build.clone()),
                tc.run_coverage.clone().unwrap_or_else(|| tc.run.clone()),
            ),
        };

        let key_material = serde_json::to_string(&(language, source, mode, tc)).unwrap_or_default();
        let key = &sha256_hex(key_material.as_bytes())[..16];
        let safe_id: String = solution_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
            .collect();
        let mode_tag = match mode {
            BuildMode::Plain => "plain",
            BuildMode::LineProfile => "profile",
            BuildMode::Coverage => "cov",
        };
        let builds = self.work_dir.join("builds");
        let final_dir = builds.join(format!("{safe_id}-{mode_tag}-{key}"));
        let record = final_dir.join("artifact.json");
        if let Ok(artifact) = crate::util::read_json::<BuildArtifact>(&record) {
            return Ok(artifact);
        }

        fs::create_dir_all(&builds)?;
        let staging = tempfile::Builder::new()
            .prefix(&format!(".{safe_id}-"))
            .tempdir_in(&builds)?;
        // Paths baked into the artifact (and into gcov notes) must be final.
        let dir = final_dir.clone();
        let src_name = format!("main.{}", tc.extension);
        let src_path = dir.join(&src_name);
        let out_path = match tc.kind {
            ArtifactKind::NativeBinary => dir.join("main"),
            ArtifactKind::Script => src_path.clone(),
        };
        let ph = Placeholders {
            src: &src_path,
            out: &out_path,
            dir: &dir,
            cov_rt: &self.cov_rt,
            tracer: &self.tracer,
        };

        fs::write(staging.path().join(&src_name), source)?;
        let build_log = match &build_tpl {
            Some(tpl) => {
                // Compile in place so gcov notes record the final paths.
                let cmd = ph.shell(tpl);
                let staged = staging.keep();
                if fs::rename(&staged, &dir).is_err() {
                    let _ = fs::remove_dir_all(&staged);
                    if let Ok(artifact) = crate::util::read_json::<BuildArtifact>(&record) {
                        return Ok(artifact);
                    }
                    return Err(HarnessError::SandboxFailure(format!(
                        "build dir {} is busy",
                        dir.display()
                    )));
                }
                let out = Command::new("sh")
                    .arg("-c")
                    .arg(&cmd)
                    .current_dir(&dir)
                    .output()?;
                let log = format!(
                    "$ {cmd}\n{}{}",
                    String::from_utf8_lossy(&out.stdout),
                    String::from_utf8_lossy(&out.stderr)
                );
                if !out.status.success() {
                    let _ = fs::remove_dir_all(&dir);
                    return Err(HarnessError::BuildFailed(log));
                }
                log
            }
            None => {
                let staged = staging.keep();
                if fs::rename(&staged, &dir).is_err() {
                    let _ = fs::remove_dir_all(&staged);
                }
                String::new()
            }
        };

        let argv = ph
            .argv(&run_tpl)
            .ok_or_else(|| HarnessError::SandboxFailure(format!("bad run template {run_tpl:?}")))?;
        let artifact = BuildArtifact {
            solution_id: solution_id.to_string(),
            language: language.to_string(),
            kind: tc.kind,
            entry: out_path,
            source_path: src_path,
            build_dir: dir,
            build_log,
            profiling_enabled: mode == BuildMode::LineProfile,
            coverage_enabled: mode == BuildMode::Coverage && tc.coverage != CoverageChannel::None,
            argv,
            line_profiler: tc.line_profiler,
            coverage: tc.coverage,
        };
        crate::util::write_json(&record, &artifact)?;
        Ok(artifact)
    }

    fn run_raw(
        &self,
        artifact: &BuildArtifact,
        input: &TestInput,
        limits: &ExecutionLimits,
        options: &RunOptions,
    ) -> Result<(ExecutionResult, HashMap<String, Vec<u8>>), HarnessError> {
        if input.input_bytes.len() > limits.max_input_bytes {
            return Err(HarnessError::InputTooLarge {
                size: input.input_bytes.len(),
                limit: limits.max_input_bytes,
            });
        }
        let raw = process::run_process(
            &artifact.argv,
            &input.input_bytes,
            limits.wall_timeout,
            limits.memory_cap,
            options,
        )?;
        let checker_hits = sentinel::parse_checker_hits(&raw.stderr);
        Ok((
            ExecutionResult {
                stdout: raw.stdout,
                stderr: raw.stderr,
                exit: raw.exit,
                wall_time: raw.wall_time,
                checker_hits,
            },
            raw.collected,
        ))
    }

    pub fn execute(
        &self,
        artifact: &BuildArtifact,
        input: &TestInput,
        limits: &ExecutionLimits,
    ) -> Result<ExecutionResult, HarnessError> {
        self.execute_with(artifact, input, limits, &RunOptions::default())
    }

    pub fn execute_with(
        &self,
        artifact: &BuildArtifact,
        input: &TestInput,
        limits: &ExecutionLimits,
        options: &RunOptions,
    ) -> Result<ExecutionResult, HarnessError> {
        self.run_raw(artifact, input, limits, options).map(|(r, _)| r)
    }

    /// Executes a coverage build and returns its coverage counts alongside
    /// the result. Coverage is `None` when the artifact has no channel or
    /// the run died before writing it.
    pub fn execute_with_coverage(
        &self,
        artifact: &BuildArtifact,
        input: &TestInput,
        limits: &ExecutionLimits,
        options: &RunOptions,
    ) -> Result<(ExecutionResult, Option<CoverageMap>), HarnessError> {
        if !artifact.coverage_enabled {
            return self
                .run_raw(artifact, input, limits, options)
                .map(|(r, _)| (r, None));
        }
        let channel = match artifact.coverage {
            CoverageChannel::EdgeFile => RunOptions::default()
                .with_env("WEDGE_COV_OUT", &format!("{{scratch}}/{COV_OUT}")),
            CoverageChannel::Pytrace => RunOptions::default()
                .with_env("WEDGE_LINE_PROFILE_OUT", &format!("{{scratch}}/{LINES_OUT}")),
            CoverageChannel::None => RunOptions::default(),
        };
        let mut opts = options.clone().merge(channel);
        opts.collect.push(COV_OUT.into());
        opts.collect.push(LINES_OUT.into());
        let (result, collected) = self.run_raw(artifact, input, limits, &opts)?;
        let cov = if let Some(bytes) = collected.get(COV_OUT) {
            Some(profile::parse_edge_counts(bytes))
        } else if let Some(bytes) = collected.get(LINES_OUT) {
            profile::parse_pytrace_json(bytes).ok()
        } else {
            None
        };
        Ok((result, cov))
    }

    /// Runs `runs` times under `meter` and returns every per-run cost.
    pub fn measure_cost(
        &self,
        artifact: &BuildArtifact,
        input: &TestInput,
        runs: usize,
        meter: &dyn CostMeter,
        limits: &ExecutionLimits,
    ) -> Result<CostMeasurement, HarnessError> {
        meter.check_available()?;
        let options = meter.run_options();
        let mut costs = Vec::with_capacity(runs);
        for _ in 0..runs.max(1) {
            let (result, collected) = self.run_raw(artifact, input, limits, &options)?;
            costs.push(meter.extract(&result, &collected)?);
        }
        Ok(CostMeasurement::from_runs(costs, meter.kind()).expect("at least one run"))
    }

    pub fn collect_line_profile(
        &self,
        artifact: &BuildArtifact,
        input: &TestInput,
        limits: &ExecutionLimits,
    ) -> Result<LineProfile, HarnessError> {
        if !artifact.profiling_enabled {
            return Err(HarnessError::ProfileUnavailable(format!(
                "{} was built without profiling",
                artifact.solution_id
            )));
        }
        let source_name = artifact
            .source_path
            .file_name()
            .and_then(|f| f.to_str())
            .unwrap_or("main")
            .to_string();
        let sparse = match artifact.line_profiler {
            LineProfiler::Gcov => {
                let stem = Path::new(&source_name)
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("main")
                    .to_string();
                let strip = artifact.build_dir.components().count().saturating_sub(1);
                let gcda = format!("{stem}.gcda");
                let opts = RunOptions {
                    env: vec![
                        ("GCOV_PREFIX".into(), "{scratch}".into()),
                        ("GCOV_PREFIX_STRIP".into(), strip.to_string()),
                    ],
                    collect: vec![gcda.clone()],
                    ..RunOptions::default()
                };
                let (_, collected) = self.run_raw(artifact, input, limits, &opts)?;
                let data = collected.get(&gcda).ok_or_else(|| {
                    HarnessError::ProfileUnavailable("run produced no coverage data".into())
                })?;
                profile::gcov_counts(&artifact.build_dir, &source_name, data)?
            }
            LineProfiler::Pytrace => {
                let opts = RunOptions::default()
                    .with_env("WEDGE_LINE_PROFILE_OUT", &format!("{{scratch}}/{LINES_OUT}"));
                let mut opts = opts;
                opts.collect.push(LINES_OUT.into());
                let (_, collected) = self.run_raw(artifact, input, limits, &opts)?;
                let data = collected.get(LINES_OUT).ok_or_else(|| {
                    HarnessError::ProfileUnavailable("tracer produced no output".into())
                })?;
                profile::parse_pytrace_json(data)?
            }
            LineProfiler::None => {
                return Err(HarnessError::ProfileUnavailable("no line profiler".into()))
            }
        };
        Ok(LineProfile::from_sparse(
            &artifact.solution_id,
            &input.id,
            artifact.line_count(),
            &sparse,
        ))
    }
}

fn write_if_changed(path: &Path, content: &str) -> std::io::Result<()> {
    if fs::read_to_string(path).ok().as_deref() != Some(content) {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, content)?;
        fs::rename(&tmp, path)?;
    }
    Ok(())
}
