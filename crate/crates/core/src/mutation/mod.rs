//! Custom mutators: synthesis from a prompt, dry runs, the repair loop,
//! and the builtin fallback.

pub mod builtin;
pub mod plugin;
pub mod protocol;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::NLInvariant;
use crate::corpus::{Problem, Solution, TestInput};
use crate::llm::templates::{render, PromptTemplates, TemplateError};
use crate::llm::{fenced_blocks, Conversation, GenerationParams, LlmProvider, ProviderError};
use crate::pairminer::ProfileDiff;
use crate::util::truncate_preview;

pub use builtin::{builtin_mutate, builtin_mutate_traced, BuiltinOp, BUILTIN_NAME};
pub use plugin::PluginProcess;
pub use protocol::MutationRequest;

pub const DEFAULT_MAX_ROUNDS: usize = 5;
pub const DEFAULT_DRY_RUN: Duration = Duration::from_secs(180);
/// Fraction of sampled dry-run outputs the validator must accept.
pub const MIN_SAMPLED_VALIDITY: f64 = 0.10;
pub const VALIDITY_SAMPLE: usize = 100;
const REFERENCE_PREVIEW_BYTES: usize = 2048;
const MAX_REFERENCE_INPUTS: usize = 5;

pub const HOST_SOURCE: &str = include_str!("../../assets/runtime/wedge_mutator_host.py");

/// Accepts or rejects one candidate input.
pub type InputValidator<'a> = &'a (dyn Fn(&[u8]) -> bool + Sync);

#[derive(Debug, Error)]
pub enum MutationError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("mutator crashed: {0}")]
    Crashed(String),
    #[error("mutator protocol violation: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutatorKind {
    PluginProcess,
    Builtin,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DryRunReport {
    pub duration: Duration,
    pub inputs_produced: usize,
    /// (checked, valid)
    pub validity_sample: (usize, usize),
    pub crashed: bool,
    pub failure_message: String,
}

impl DryRunReport {
    pub fn passes(&self) -> bool {
        self.failure_message.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutatorArtifact {
    pub solution_id: String,
    pub kind: MutatorKind,
    /// Plugin module path, or the builtin name.
    pub entry: PathBuf,
    pub rounds_used: usize,
    pub dry_run: DryRunReport,
    /// Every synthesis round failed and the builtin took over.
    pub synthesis_exhausted: bool,
    pub constraint_aware: bool,
}

impl MutatorArtifact {
    pub fn builtin(solution_id: &str) -> Self {
        MutatorArtifact {
            solution_id: solution_id.to_string(),
            kind: MutatorKind::Builtin,
            entry: PathBuf::from(BUILTIN_NAME),
            rounds_used: 0,
            dry_run: DryRunReport::default(),
            synthesis_exhausted: false,
            constraint_aware: false,
        }
    }
}

/// Writes the Python host shim into `dir` and returns its path.
pub fn materialize_host(dir: &Path) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = plugin::host_path(dir);
    if fs::read_to_string(&path).ok().as_deref() != Some(HOST_SOURCE) {
        fs::write(&path, HOST_SOURCE)?;
    }
    Ok(path)
}

/// A running mutator, plugin or builtin.
pub enum Mutator {
    Plugin(PluginProcess),
    Builtin,
}

impl Mutator {
    pub fn open(artifact: &MutatorArtifact) -> Result<Self, MutationError> {
        match artifact.kind {
            MutatorKind::Builtin => Ok(Mutator::Builtin),
            MutatorKind::PluginProcess => {
                let dir = artifact.entry.parent().unwrap_or(Path::new("."));
                let host = materialize_host(dir)?;
                Ok(Mutator::Plugin(PluginProcess::spawn_python(&host, &artifact.entry)?))
            }
        }
    }

    pub fn mutate(&mut self, req: &MutationRequest) -> Result<Vec<u8>, MutationError> {
        match self {
            Mutator::Builtin => Ok(builtin_mutate(&req.seed, req.rng_seed, req.max_size as usize)),
            Mutator::Plugin(p) => p.mutate(req),
        }
    }

    pub fn close(self) {
        if let Mutator::Plugin(p) = self {
            p.shutdown();
        }
    }
}

/// Inputs shared by every synthesis round for one solution.
pub struct MutatorContext<'a> {
    pub problem: &'a Problem,
    pub solution: &'a Solution,
    /// Empty for the constraint-agnostic variant.
    pub invariants: &'a [NLInvariant],
    pub diff: &'a ProfileDiff,
    pub seeds: &'a [TestInput],
}

fn reference_inputs(seeds: &[TestInput]) -> String {
    seeds
        .iter()
        .take(MAX_REFERENCE_INPUTS)
        .enumerate()
        .map(|(i, t)| {
            let text = String::from_utf8_lossy(&t.input_bytes);
            format!(
                "Input {}:\n```\n{}\n```\n",
                i + 1,
                truncate_preview(text.trim_end(), REFERENCE_PREVIEW_BYTES)
            )
        })
        .collect()
}

pub fn render_mutator_prompt(
    templates: &PromptTemplates,
    ctx: &MutatorContext,
) -> Result<String, TemplateError> {
    let constraints_section = if ctx.invariants.is_empty() {
        String::new()
    } else {
        let list: String = ctx
            .invariants
            .iter()
            .map(|i| format!("- {}: {}\n", i.id, i.text))
            .collect();
        format!(
            "\n{}\n",
            render(
                &templates.mutator_constraints,
                &BTreeMap::from([("constraints_content", list.trim_end().to_string())]),
            )?
            .trim_end()
        )
    };
    let vars = BTreeMap::from([
        ("mutator_example", templates.example_mutator.trim_end().to_string()),
        ("problem_statement", ctx.problem.statement.trim_end().to_string()),
        ("reference_inputs", reference_inputs(ctx.seeds)),
        ("constraints_section", constraints_section),
        ("product_cov_content", ctx.diff.render()),
        ("format_contract", templates.format_mutator.trim_end().to_string()),
    ]);
    render(&templates.mutator, &vars)
}

/// The module source from a reply, or why there is none.
pub fn extract_mutator(reply: &str) -> Result<String, String> {
    match fenced_blocks(reply, "mutator").as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err("the reply contains no fenced block tagged `mutator`".into()),
        many => Err(format!(
            "the reply contains {} `mutator` blocks; exactly one is required",
            many.len()
        )),
    }
}

/// One-shot synthesis in a fresh conversation.
pub fn synthesize_mutator(
    provider: &dyn LlmProvider,
    templates: &PromptTemplates,
    params: &GenerationParams,
    ctx: &MutatorContext,
) -> Result<String, MutationError> {
    let prompt = render_mutator_prompt(templates, ctx)?;
    let reply = Conversation::new(None).ask(provider, params, prompt)?;
    extract_mutator(&reply).map_err(MutationError::Protocol)
}

/// Feeds rotating seeds with fresh rng seeds to `source` for `duration`.
/// Failures land in the report; nothing here returns an error.
pub fn dry_run(
    source: &str,
    seeds: &[TestInput],
    duration: Duration,
    validator: Option<InputValidator>,
    max_size: usize,
) -> DryRunReport {
    let mut report = DryRunReport {
        duration,
        ..DryRunReport::default()
    };
    let crash = |report: &mut DryRunReport, msg: String| {
        report.crashed = true;
        report.failure_message = if msg.trim().is_empty() {
            "mutator crashed".into()
        } else {
            msg
        };
    };
    if seeds.is_empty() {
        report.failure_message = "no seeds to mutate".into();
        return report;
    }
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => {
            crash(&mut report, format!("scratch dir: {e}"));
            return report;
        }
    };
    let plugin_path = dir.path().join("mutator.py");
    let spawned = fs::write(&plugin_path, source)
        .map_err(MutationError::from)
        .and_then(|_| materialize_host(dir.path()).map_err(MutationError::from))
        .and_then(|host| PluginProcess::spawn_python(&host, &plugin_path));
    let mut plugin = match spawned {
        Ok(p) => p,
        Err(e) => {
            crash(&mut report, e.to_string());
            return report;
        }
    };

    let originals: HashSet<&[u8]> = seeds.iter().map(|s| s.input_bytes.as_slice()).collect();
    let mut seen: HashSet<[u8; 32]> = HashSet::new();
    let mut sample: Vec<Vec<u8>> = Vec::new();
    let start = Instant::now();
    let mut i: usize = 0;
    while start.elapsed() < duration {
        let req = MutationRequest {
            seed: seeds[i % seeds.len()].input_bytes.clone(),
            add_seed: (seeds.len() > 1).then(|| seeds[(i + 1) % seeds.len()].input_bytes.clone()),
            max_size: max_size as u32,
            rng_seed: 0x5eed_0000_0000 + i as u64,
        };
        i += 1;
        match plugin.mutate(&req) {
            Ok(out) => {
                if originals.contains(out.as_slice()) {
                    continue;
                }
                let digest: [u8; 32] = {
                    use sha2::{Digest, Sha256};
                    Sha256::digest(&out).into()
                };
                if seen.insert(digest) && sample.len() < VALIDITY_SAMPLE {
                    sample.push(out);
                }
            }
            Err(e) => {
                crash(&mut report, e.to_string());
                break;
            }
        }
    }
    if !report.crashed {
        plugin.shutdown();
    }
    report.inputs_produced = seen.len();
    if report.crashed {
        return report;
    }
    if report.inputs_produced == 0 {
        report.failure_message = format!("dry run produced no new inputs in {i} requests");
        return report;
    }
    if let Some(valid) = validator {
        let ok = sample.iter().filter(|s| valid(s)).count();
        report.validity_sample = (sample.len(), ok);
        if (ok as f64) < MIN_SAMPLED_VALIDITY * sample.len() as f64 {
            report.failure_message = format!(
                "only {ok} of {} sampled mutator outputs satisfy the input constraints",
                sample.len()
            );
        }
    }
    report
}

pub struct RefineOptions<'a> {
    pub max_rounds: usize,
    pub dry_run: Duration,
    pub max_size: usize,
    pub validator: Option<InputValidator<'a>>,
    /// Candidates go to `candidate_N.py`, the winner to `mutator.py`.
    pub out_dir: PathBuf,
    pub transcript_dir: Option<PathBuf>,
}

/// Synthesize, dry-run, and feed failures back until a candidate passes or
/// `max_rounds` synthesis calls are spent; then fall back to the builtin.
pub fn refine_loop(
    provider: &dyn LlmProvider,
    templates: &PromptTemplates,
    params: &GenerationParams,
    ctx: &MutatorContext,
    opts: &RefineOptions,
) -> Result<MutatorArtifact, MutationError> {
    fs::create_dir_all(&opts.out_dir)?;
    let mut conversation = Conversation::new(opts.transcript_dir.clone());
    let mut prompt = render_mutator_prompt(templates, ctx)?;
    let mut last = DryRunReport::default();
    for round in 1..=opts.max_rounds {
        let reply = conversation.ask(provider, params, prompt)?;
        let report = match extract_mutator(&reply) {
            Ok(source) => {
                fs::write(opts.out_dir.join(format!("candidate_{round}.py")), &source)?;
                let report = dry_run(&source, ctx.seeds, opts.dry_run, opts.validator, opts.max_size);
                if report.passes() {
                    let entry = opts.out_dir.join("mutator.py");
                    fs::write(&entry, &source)?;
                    materialize_host(&opts.out_dir)?;
                    return Ok(MutatorArtifact {
                        solution_id: ctx.solution.id.clone(),
                        kind: MutatorKind::PluginProcess,
                        entry,
                        rounds_used: round,
                        dry_run: report,
                        synthesis_exhausted: false,
                        constraint_aware: !ctx.invariants.is_empty(),
                    });
                }
                report
            }
            Err(why) => DryRunReport {
                duration: Duration::ZERO,
                failure_message: why,
                ..DryRunReport::default()
            },
        };
        log::info!(
            "mutator round {round} for {} failed: {}",
            ctx.solution.id,
            report.failure_message.lines().next().unwrap_or("")
        );
        prompt = format!(
            "The mutator failed its dry run:\n```\n{}\n```\nFix the problem and reply with the complete module in one fenced block tagged `mutator`.",
            truncate_preview(&report.failure_message, 8192)
        );
        last = report;
    }
    Ok(MutatorArtifact {
        rounds_used: opts.max_rounds,
        dry_run: last,
        synthesis_exhausted: true,
        ..MutatorArtifact::builtin(&ctx.solution.id)
    })
}
