//! Greybox fuzzing over instrumented programs. Checker hits are part of
//! the feedback signature, so inputs that satisfy a performance condition
//! count as new behaviour and get scheduled more often.

mod export;

pub use export::export_aflpp;

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Solution, TestInput};
use crate::harness::process::RunOptions;
use crate::harness::{
    BuildArtifact, BuildMode, CoverageMap, ExecutionLimits, ExecutionResult, ExitStatus, Harness,
    HarnessError, LineProfile,
};
use crate::mutation::{MutationRequest, Mutator, MutatorArtifact, MutatorKind};

pub const DEFAULT_ENERGY: u32 = 32;
pub const RECENT_WINDOW: usize = 10;
pub const DEFAULT_MAX_SAVED: usize = 50_000;
pub const MAX_SOLUTIONS_PER_PROBLEM: usize = 10;
pub const DEFAULT_WALL_BUDGET: Duration = Duration::from_secs(3600);

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("queue is empty")]
    EmptyQueue,
    #[error("campaign has no seeds")]
    NoSeeds,
    #[error("target does not build: {0}")]
    BuildFailed(String),
    #[error("mutator unavailable: {0}")]
    MutatorUnavailable(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    Ok,
    ConstraintAbort,
    Nonzero,
    Timeout,
}

impl OutcomeClass {
    pub fn of(result: &ExecutionResult) -> Self {
        if result.is_constraint_abort() {
            OutcomeClass::ConstraintAbort
        } else {
            match result.exit {
                ExitStatus::Ok => OutcomeClass::Ok,
                ExitStatus::Timeout => OutcomeClass::Timeout,
                _ => OutcomeClass::Nonzero,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeedbackSignature {
    pub checker_hits: BTreeSet<String>,
    pub coverage_digest: Option<String>,
    pub outcome_class: OutcomeClass,
}

/// AFL hit-count class: 0 for unhit, then 1, 2, 3, 4-7, 8-15, 16-31,
/// 32-127, 128+.
pub fn bucket(count: u64) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 3,
        4..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        32..=127 => 7,
        _ => 8,
    }
}

/// Stable digest of `{location: bucket}` over locations hit at least once.
pub fn coverage_digest(counts: &CoverageMap) -> String {
    let mut text = String::new();
    for (loc, &n) in counts {
        let b = bucket(n);
        if b > 0 {
            let _ = write!(text, "{loc}:{b};");
        }
    }
    crate::util::sha256_hex(text.as_bytes())[..16].to_string()
}

pub fn feedback_signature(result: &ExecutionResult, profile: Option<&LineProfile>) -> FeedbackSignature {
    signature_from_counts(result, profile.map(|p| &p.hits))
}

pub fn signature_from_counts(result: &ExecutionResult, counts: Option<&CoverageMap>) -> FeedbackSignature {
    FeedbackSignature {
        checker_hits: result.checker_hits.clone(),
        coverage_digest: counts.map(coverage_digest),
        outcome_class: OutcomeClass::of(result),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: usize,
    pub input: TestInput,
    pub signature: FeedbackSignature,
    pub energy: u32,
    pub discovered_at: u64,
    pub parent: Option<usize>,
    /// Seeds are queued for scheduling but never saved as outputs.
    pub is_seed: bool,
}

fn weight(queue: &[QueueEntry], i: usize) -> u32 {
    let mut w = 1;
    if !queue[i].signature.checker_hits.is_empty() {
        w *= 4;
    }
    if i + RECENT_WINDOW >= queue.len() {
        w *= 2;
    }
    w
}

/// Weighted pick of a queue index. Entries are kept in discovery order,
/// so the last ten are the most recent.
pub fn schedule(queue: &[QueueEntry], rng: &mut impl Rng) -> Result<(usize, u32), FuzzError> {
    if queue.is_empty() {
        return Err(FuzzError::EmptyQueue);
    }
    let total: u32 = (0..queue.len()).map(|i| weight(queue, i)).sum();
    let mut pick = rng.random_range(0..total);
    for i in 0..queue.len() {
        let w = weight(queue, i);
        if pick < w {
            return Ok((i, DEFAULT_ENERGY));
        }
        pick -= w;
    }
    unreachable!("pick below total weight")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub wall: Option<Duration>,
    pub max_execs: Option<u64>,
}

impl Budget {
    pub fn execs(n: u64) -> Self {
        Budget {
            wall: None,
            max_execs: Some(n),
        }
    }

    pub fn wall(d: Duration) -> Self {
        Budget {
            wall: Some(d),
            max_execs: None,
        }
    }

    fn exhausted(&self, execs: u64, started: Instant) -> bool {
        self.max_execs.is_some_and(|m| execs >= m) || self.wall.is_some_and(|w| started.elapsed() >= w)
    }
}

pub struct Campaign {
    /// The program to fuzz; normally the instrumented solution.
    pub target: Solution,
    pub mutator: MutatorArtifact,
    pub seeds: Vec<TestInput>,
    pub budget: Budget,
    pub rng_seed: u64,
    pub limits: ExecutionLimits,
    pub max_saved: usize,
    /// Use the coverage channel as part of the signature.
    pub coverage: bool,
    /// Where queue/, stats.json and log.txt go, if anywhere.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub execs: u64,
    pub unique_signatures: usize,
    pub checker_hit_fraction: f64,
    /// Null under a pure exec budget so reruns produce identical files.
    pub wall_seconds: Option<f64>,
    pub rng_seed: u64,
    pub saved_inputs: usize,
    pub exec_errors: u64,
    pub mutator: MutatorKind,
    pub mutator_failed: bool,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub queue: Vec<QueueEntry>,
    pub all_outputs: Vec<TestInput>,
    /// Checker hits recorded for each output, parallel to `all_outputs`.
    pub output_hits: Vec<BTreeSet<String>>,
    pub stats: CampaignStats,
}

pub fn hit_fraction(hits: &[BTreeSet<String>]) -> f64 {
    if hits.is_empty() {
        0.0
    } else {
        hits.iter().filter(|h| !h.is_empty()).count() as f64 / hits.len() as f64
    }
}

struct Executor<'a> {
    harness: &'a Harness,
    artifact: BuildArtifact,
    limits: &'a ExecutionLimits,
    options: RunOptions,
}

impl Executor<'_> {
    fn run(&self, input: &TestInput) -> Result<FeedbackSignature, HarnessError> {
        let (result, cov) =
            self.harness
                .execute_with_coverage(&self.artifact, input, self.limits, &self.options)?;
        Ok(signature_from_counts(&result, cov.as_ref()))
    }
}

pub fn campaign_options() -> RunOptions {
    RunOptions::default().with_env(crate::constraints::ABORT_ENV, "1")
}

pub fn run_campaign(harness: &Harness, campaign: &Campaign) -> Result<CampaignResult, FuzzError> {
    if campaign.seeds.is_empty() {
        return Err(FuzzError::NoSeeds);
    }
    let mode = if campaign.coverage {
        BuildMode::Coverage
    } else {
        BuildMode::Plain
    };
    let artifact = match harness.build_mode(&campaign.target, mode) {
        Ok(a) => a,
        Err(HarnessError::BuildFailed(log)) => return Err(FuzzError::BuildFailed(log)),
        Err(e) => return Err(e.into()),
    };
    let exec = Executor {
        harness,
        artifact,
        limits: &campaign.limits,
        options: campaign_options(),
    };
    let max_size = campaign.limits.max_input_bytes.clamp(1, u32::MAX as usize);

    let queue_dir = campaign.out_dir.as_ref().map(|d| d.join("queue"));
    if let Some(q) = &queue_dir {
        // A rerun replaces the previous queue rather than mixing with it.
        if q.exists() {
            fs::remove_dir_all(q)?;
        }
        fs::create_dir_all(q)?;
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(campaign.rng_seed);
    let mut log = String::new();
    let mut queue: Vec<QueueEntry> = Vec::new();
    let mut seen: HashSet<FeedbackSignature> = HashSet::new();
    let mut outputs: Vec<TestInput> = Vec::new();
    let mut output_hits: Vec<BTreeSet<String>> = Vec::new();
    let mut execs: u64 = 0;
    let mut exec_errors: u64 = 0;

    for seed in &campaign.seeds {
        if campaign.budget.exhausted(execs, started) {
            break;
        }
        execs += 1;
        match exec.run(seed) {
            Ok(sig) => {
                seen.insert(sig.clone());
                queue.push(QueueEntry {
                    id: queue.len(),
                    input: seed.clone(),
                    signature: sig,
                    energy: DEFAULT_ENERGY,
                    discovered_at: execs,
                    parent: None,
                    is_seed: true,
                });
            }
            Err(e) => {
                exec_errors += 1;
                let _ = writeln!(log, "seed {} failed: {e}", seed.id);
            }
        }
    }

    let mut mutator = if campaign.budget.exhausted(execs, started) || queue.is_empty() {
        None
    } else {
        Some(Mutator::open(&campaign.mutator).map_err(|e| FuzzError::MutatorUnavailable(e.to_string()))?)
    };
    let mut mutator_failed = false;

    'outer: while let Some(m) = mutator.as_mut() {
        let (parent, energy) = schedule(&queue, &mut rng)?;
        for _ in 0..energy {
            if campaign.budget.exhausted(execs, started) {
                break 'outer;
            }
            let rng_seed = rng.next_u64();
            let add_seed = if queue.len() > 1 {
                Some(queue[rng.random_range(0..queue.len())].input.input_bytes.clone())
            } else {
                None
            };
            let req = MutationRequest {
                seed: queue[parent].input.input_bytes.clone(),
                add_seed,
                max_size: max_size as u32,
                rng_seed,
            };
            let bytes = match m.mutate(&req) {
                Ok(b) => b,
                Err(e) => {
                    // A plugin that dies mid-campaign is replaced by the builtin.
                    let _ = writeln!(log, "mutator failed at exec {execs}: {e}; switching to builtin");
                    mutator_failed = true;
                    *m = Mutator::Builtin;
                    continue;
                }
            };
            execs += 1;
            let candidate = TestInput::generated(format!("{:06}", outputs.len()), bytes);
            let sig = match exec.run(&candidate) {
                Ok(s) => s,
                Err(e) => {
                    exec_errors += 1;
                    let _ = writeln!(log, "exec {execs} failed: {e}");
                    continue;
                }
            };
            if outputs.len() >= campaign.max_saved || !seen.insert(sig.clone()) {
                continue;
            }
            if let Some(q) = &queue_dir {
                fs::write(q.join(format!("{}.in", candidate.id)), &candidate.input_bytes)?;
            }
            let hits: Vec<&str> = sig.checker_hits.iter().map(String::as_str).collect();
            let _ = writeln!(
                log,
                "{} exec={execs} parent={parent} outcome={:?} hits=[{}]",
                candidate.id,
                sig.outcome_class,
                hits.join(",")
            );
            output_hits.push(sig.checker_hits.clone());
            outputs.push(candidate.clone());
            queue.push(QueueEntry {
                id: queue.len(),
                input: candidate,
                signature: sig,
                energy: DEFAULT_ENERGY,
                discovered_at: execs,
                parent: Some(parent),
                is_seed: false,
            });
        }
    }
    if let Some(m) = mutator {
        m.close();
    }

    let stats = CampaignStats {
        execs,
        unique_signatures: seen.len(),
        checker_hit_fraction: hit_fraction(&output_hits),
        wall_seconds: campaign
            .budget
            .wall
            .map(|_| started.elapsed().as_secs_f64()),
        rng_seed: campaign.rng_seed,
        saved_inputs: outputs.len(),
        exec_errors,
        mutator: if mutator_failed {
            MutatorKind::Builtin
        } else {
            campaign.mutator.kind
        },
        mutator_failed,
    };
    if let Some(dir) = &campaign.out_dir {
        crate::util::write_json(&dir.join("stats.json"), &stats)?;
        fs::write(dir.join("log.txt"), &log)?;
    }
    Ok(CampaignResult {
        queue,
        all_outputs: outputs,
        output_hits,
        stats,
    })
}

/// Checker hits of each input when replayed on `instrumented`; used to
/// score campaigns that fuzzed an uninstrumented target.
pub fn replay_checker_hits(
    harness: &Harness,
    instrumented: &Solution,
    inputs: &[TestInput],
    limits: &ExecutionLimits,
) -> Result<Vec<BTreeSet<String>>, FuzzError> {
    let artifact = match harness.build_mode(instrumented, BuildMode::Plain) {
        Ok(a) => a,
        Err(HarnessError::BuildFailed(log)) => return Err(FuzzError::BuildFailed(log)),
        Err(e) => return Err(e.into()),
    };
    let options = campaign_options();
    inputs
        .iter()
        .map(|i| Ok(harness.execute_with(&artifact, i, limits, &options)?.checker_hits))
        .collect()
}

/// Saved inputs of a finished campaign directory, in queue order.
pub fn load_queue(campaign_dir: &Path) -> std::io::Result<Vec<TestInput>> {
    let q = campaign_dir.join("queue");
    let mut names: Vec<String> = fs::read_dir(&q)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".in"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let bytes = fs::read(q.join(&n))?;
            Ok(TestInput::generated(n.trim_end_matches(".in"), bytes))
        })
        .collect()
}
