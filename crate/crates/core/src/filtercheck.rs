//! Candidate filtering and benchmark assembly: validator synthesis, the
//! cross-solution consistency check, dedup, and top-k ranking by cost.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{majority_output, meets_agreement, Problem, TestInput};
use crate::harness::meter::CostMeter;
use crate::harness::process::{run_process, RunOptions};
use crate::harness::{BuildArtifact, CostMeasurement, ExecutionLimits, ExitStatus, Harness, HarnessError};
use crate::llm::templates::{render, PromptTemplates, TemplateError};
use crate::llm::{fenced_blocks, Conversation, GenerationParams, LlmProvider, ProviderError};
use crate::util::{normalize_output, sha256_hex, truncate_preview, write_json};

pub const VALIDATOR_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_VALIDATOR_ROUNDS: usize = 5;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_COST_RUNS: usize = 5;
const VALIDATOR_MEMORY: u64 = 2 * 1024 * 1024 * 1024;
const MAX_REFERENCE_INPUTS: usize = 5;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no validator accepted every official test within the round limit:\n{0}")]
    ValidatorSynthesisFailed(String),
    #[error("validator crashed: {0}")]
    ValidatorCrash(String),
    #[error("problem {0} has no official tests")]
    NoOfficialTests(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorArtifact {
    pub problem_id: String,
    pub entry: PathBuf,
    pub rounds_used: usize,
    pub accepted_all_official: bool,
}

/// Runs `python3 <script>` on `input`. Exit 0 is valid and any other exit
/// is invalid; timeouts and signals are crashes.
fn run_validator_script(script: &Path, input: &[u8]) -> Result<(bool, String), FilterError> {
    let argv = vec!["python3".to_string(), script.to_string_lossy().into_owned()];
    let raw = run_process(&argv, input, VALIDATOR_TIMEOUT, VALIDATOR_MEMORY, &RunOptions::default())?;
    let stderr = String::from_utf8_lossy(&raw.stderr).into_owned();
    match raw.exit {
        ExitStatus::Ok => Ok((true, stderr)),
        ExitStatus::Nonzero(_) => Ok((false, stderr)),
        ExitStatus::Timeout => Err(FilterError::ValidatorCrash(format!(
            "no verdict within {VALIDATOR_TIMEOUT:?}"
        ))),
        other => Err(FilterError::ValidatorCrash(format!("{other:?}: {stderr}"))),
    }
}

pub fn validate_input(validator: &ValidatorArtifact, input: &TestInput) -> Result<bool, FilterError> {
    run_validator_script(&validator.entry, &input.input_bytes).map(|(ok, _)| ok)
}

/// [`validate_input`] with crashes logged and counted as rejections.
pub fn accepts(validator: &ValidatorArtifact, input: &TestInput) -> bool {
    validate_input(validator, input).unwrap_or_else(|e| {
        log::warn!("validator for {} on {}: {e}", validator.problem_id, input.id);
        false
    })
}

pub fn render_validator_prompt(templates: &PromptTemplates, problem: &Problem) -> Result<String, TemplateError> {
    let refs: String = problem
        .official_tests()
        .take(MAX_REFERENCE_INPUTS)
        .enumerate()
        .map(|(i, t)| {
            let text = String::from_utf8_lossy(&t.input_bytes);
            format!("Input {}:\n```\n{}\n```\n", i + 1, truncate_preview(text.trim_end(), 2048))
        })
        .collect();
    render(
        &templates.validator,
        &BTreeMap::from([
            ("problem_statement", problem.statement.trim_end().to_string()),
            ("reference_inputs", refs),
            ("format_contract", templates.format_validator.trim_end().to_string()),
        ]),
    )
}

/// Asks for a validator until one accepts every official test, feeding
/// rejections back each round.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_validator(
    provider: &dyn LlmProvider,
    templates: &PromptTemplates,
    params: &GenerationParams,
    problem: &Problem,
    max_rounds: usize,
    out_dir: &Path,
    transcript_dir: Option<PathBuf>,
) -> Result<ValidatorArtifact, FilterError> {
    let officials: Vec<&TestInput> = problem.official_tests().collect();
    if officials.is_empty() {
        return Err(FilterError::NoOfficialTests(problem.id.clone()));
    }
    fs::create_dir_all(out_dir)?;
    let mut conversation = Conversation::new(transcript_dir);
    let mut prompt = render_validator_prompt(templates, problem)?;
    let mut failures = Vec::new();
    for round in 1..=max_rounds {
        let reply = conversation.ask(provider, params, prompt)?;
        let blocks = fenced_blocks(&reply, "validator");
        let failure = if blocks.len() != 1 {
            format!(
                "The reply must contain exactly one fenced block tagged `validator`; it contained {}.",
                blocks.len()
            )
        } else {
            let candidate = out_dir.join(format!("validator_{round}.py"));
            fs::write(&candidate, blocks[0])?;
            let mut rejected = Vec::new();
            for t in &officials {
                match run_validator_script(&candidate, &t.input_bytes) {
                    Ok((true, _)) => {}
                    Ok((false, stderr)) => rejected.push((t, stderr)),
                    Err(e) => rejected.push((t, e.to_string())),
                }
            }
            if rejected.is_empty() {
                let entry = out_dir.join("validator.py");
                fs::write(&entry, blocks[0])?;
                return Ok(ValidatorArtifact {
                    problem_id: problem.id.clone(),
                    entry,
                    rounds_used: round,
                    accepted_all_official: true,
                });
            }
            let (t, why) = &rejected[0];
            format!(
                "The validator rejected {} of {} inputs that are known to be valid. For example it rejected:\n```\n{}\n```\nwith this message:\n```\n{}\n```\nFix it and reply with the whole script in one fenced block tagged `validator`.",
                rejected.len(),
                officials.len(),
                truncate_preview(String::from_utf8_lossy(&t.input_bytes).trim_end(), 2048),
                truncate_preview(why.trim_end(), 2048)
            )
        };
        failures.push(format!("round {round}: {}", failure.lines().next().unwrap_or("")));
        prompt = failure;
    }
    Err(FilterError::ValidatorSynthesisFailed(failures.join("\n")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub input_id: String,
    pub agreement_fraction: f64,
    pub majority_output: String,
    pub keep: bool,
}

/// Verdict from per-solution normalized outputs; `None` is a failed run.
pub fn consistency_verdict(input_id: &str, outputs: &[Option<String>], threshold: f64) -> ConsistencyVerdict {
    let (majority, count) = majority_output(outputs).unwrap_or_default();
    let total = outputs.len();
    ConsistencyVerdict {
        input_id: input_id.to_string(),
        agreement_fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
        majority_output: majority,
        keep: meets_agreement(count, total, threshold),
    }
}

/// Runs every correct solution on `input` and compares normalized stdout
/// against the majority. Timeouts and nonzero exits disagree.
pub fn consistency_filter(
    harness: &Harness,
    solutions: &[BuildArtifact],
    input: &TestInput,
    threshold: f64,
    limits: &ExecutionLimits,
) -> ConsistencyVerdict {
    let outputs: Vec<Option<String>> = solutions
        .par_iter()
        .map(|a| match harness.execute(a, input, limits) {
            Ok(r) if r.is_ok() => Some(normalize_output(&r.stdout)),
            _ => None,
        })
        .collect();
    consistency_verdict(&input.id, &outputs, threshold)
}

/// Keeps the first of each byte-identical group.
pub fn dedup_inputs(inputs: Vec<TestInput>) -> Vec<TestInput> {
    let mut seen = HashSet::new();
    inputs
        .into_iter()
        .filter(|t| seen.insert(t.input_bytes.clone()))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub candidates: usize,
    pub rejected_invalid: Vec<String>,
    pub rejected_inconsistent: Vec<ConsistencyVerdict>,
    pub duplicates: usize,
    pub kept: Vec<TestInput>,
}

/// validator, then consistency, then dedup; the order is fixed.
pub fn filter_candidates(
    harness: &Harness,
    validator: Option<&ValidatorArtifact>,
    correct: &[BuildArtifact],
    candidates: Vec<TestInput>,
    threshold: f64,
    limits: &ExecutionLimits,
) -> FilterReport {
    let mut report = FilterReport {
        candidates: candidates.len(),
        ..FilterReport::default()
    };
    let mut survivors = Vec::new();
    for c in candidates {
        if let Some(v) = validator {
            if !accepts(v, &c) {
                report.rejected_invalid.push(c.id.clone());
                continue;
            }
        }
        let verdict = consistency_filter(harness, correct, &c, threshold, limits);
        if verdict.keep {
            survivors.push(c);
        } else {
            report.rejected_inconsistent.push(verdict);
        }
    }
    let before = survivors.len();
    report.kept = dedup_inputs(survivors);
    report.duplicates = before - report.kept.len();
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub problem_id: String,
    pub solution_id: String,
    pub rank: usize,
    pub input: TestInput,
    pub cost: CostMeasurement,
    /// None when the default-test baseline is zero.
    pub slowdown_vs_default: Option<f64>,
}

/// Sorts by mean cost descending (ties by input bytes) and keeps `k`.
pub fn rank_top_k(mut measured: Vec<(TestInput, CostMeasurement)>, k: usize) -> Vec<(usize, TestInput, CostMeasurement)> {
    measured.sort_by(|(ia, a), (ib, b)| {
        b.mean_cost
            .total_cmp(&a.mean_cost)
            .then_with(|| ia.input_bytes.cmp(&ib.input_bytes))
    });
    measured
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (t, c))| (i + 1, t, c))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaEntry {
    rank: usize,
    input_sha256: String,
    mean_cost: f64,
    per_run_costs: Vec<u64>,
    slowdown_vs_default: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    solution_id: String,
    entries: Vec<MetaEntry>,
}

pub struct AssembleOptions<'a> {
    pub k: usize,
    pub runs: usize,
    pub meter: &'a dyn CostMeter,
    pub limits: ExecutionLimits,
}

/// Mean over `defaults` of their mean costs on `artifact`.
pub fn default_baseline(
    harness: &Harness,
    artifact: &BuildArtifact,
    defaults: &[TestInput],
    opts: &AssembleOptions,
) -> Result<f64, HarnessError> {
    let mut sum = 0.0;
    for t in defaults {
        sum += harness.measure_cost(artifact, t, opts.runs, opts.meter, &opts.limits)?.mean_cost;
    }
    Ok(if defaults.is_empty() { 0.0 } else { sum / defaults.len() as f64 })
}

/// Measures every candidate on each solution, keeps the top `k`, and writes
/// `problems/<pid>/solutions/<sid>/{tests/rank_<r>.in, meta.json}` under
/// `bench_dir`. Rewrites each solution directory from scratch.
pub fn assemble_benchmark(
    harness: &Harness,
    problem: &Problem,
    solutions: &[BuildArtifact],
    candidates: &[TestInput],
    opts: &AssembleOptions,
    bench_dir: &Path,
) -> Result<Vec<BenchmarkEntry>, FilterError> {
    let candidates = dedup_inputs(candidates.to_vec());
    let defaults: Vec<TestInput> = problem.official_tests().cloned().collect();
    let mut all = Vec::new();
    for artifact in solutions {
        let baseline = default_baseline(harness, artifact, &defaults, opts)?;
        let mut measured = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let cost = harness.measure_cost(artifact, c, opts.runs, opts.meter, &opts.limits)?;
            measured.push((c.clone(), cost));
        }
        let sol_dir = bench_dir
            .join("problems")
            .join(&problem.id)
            .join("solutions")
            .join(&artifact.solution_id);
        if sol_dir.exists() {
            fs::remove_dir_all(&sol_dir)?;
        }
        fs::create_dir_all(sol_dir.join("tests"))?;
        let mut meta = Meta {
            solution_id: artifact.solution_id.clone(),
            entries: Vec::new(),
        };
        for (rank, input, cost) in rank_top_k(measured, opts.k) {
            let slowdown = (baseline > 0.0).then(|| cost.mean_cost / baseline);
            fs::write(sol_dir.join("tests").join(format!("rank_{rank}.in")), &input.input_bytes)?;
            meta.entries.push(MetaEntry {
                rank,
                input_sha256: sha256_hex(&input.input_bytes),
                mean_cost: cost.mean_cost,
                per_run_costs: cost.per_run_costs.clone(),
                slowdown_vs_default: slowdown,
            });
            all.push(BenchmarkEntry {
                problem_id: problem.id.clone(),
                solution_id: artifact.solution_id.clone(),
                rank,
                input,
                cost,
                slowdown_vs_default: slowdown,
            });
        }
        write_json(&sol_dir.join("meta.json"), &meta)?;
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::meter::MeterKind;
    use proptest::prelude::*;

    fn outputs(agree: usize, total: usize) -> Vec<Option<String>> {
        (0..total)
            .map(|i| Some(if i < agree { "42".to_string() } else { format!("x{i}") }))
            .collect()
    }

    #[test]
    fn consistency_boundary() {
        assert!(consistency_verdict("t", &outputs(19, 20), 0.95).keep);
        assert!(!consistency_verdict("t", &outputs(18, 20), 0.95).keep);
        let all = consistency_verdict("t", &outputs(20, 20), 0.95);
        assert!(all.keep);
        assert_eq!(all.agreement_fraction, 1.0);
        assert_eq!(all.majority_output, "42");
    }

    #[test]
    fn failed_runs_disagree() {
        let mut o = outputs(20, 20);
        o[0] = None;
        o[1] = None;
        let v = consistency_verdict("t", &o, 0.95);
        assert_eq!(v.agreement_fraction, 0.9);
        assert!(!v.keep);
    }

    fn cost(mean: u64) -> CostMeasurement {
        CostMeasurement::from_runs(vec![mean; 5], MeterKind::TraceCounter).unwrap()
    }

    #[test]
    fn top_k_sorting_example() {
        let m = vec![
            (TestInput::generated("a", b"a".to_vec()), cost(100)),
            (TestInput::generated("b", b"b".to_vec()), cost(900)),
            (TestInput::generated("c", b"c".to_vec()), cost(500)),
        ];
        let ranked = rank_top_k(m.clone(), 2);
        let got: Vec<(usize, f64)> = ranked.iter().map(|(r, _, c)| (*r, c.mean_cost)).collect();
        assert_eq!(got, [(1, 900.0), (2, 500.0)]);
        assert_eq!(rank_top_k(m, 10).len(), 3);
    }

    #[test]
    fn dedup_keeps_first() {
        let d = dedup_inputs(vec![
            TestInput::generated("1", b"x".to_vec()),
            TestInput::generated("2", b"y".to_vec()),
            TestInput::generated("3", b"x".to_vec()),
        ]);
        let ids: Vec<&str> = d.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["1", "2"]);
    }

    proptest! {
        #[test]
        fn keep_is_monotone_in_agreement(total in 2usize..40, a in 0usize..40, b in 0usize..40) {
            let (lo, hi) = (a.min(b).min(total), a.max(b).min(total));
            let vlo = consistency_verdict("t", &outputs(lo, total), 0.95);
            let vhi = consistency_verdict("t", &outputs(hi, total), 0.95);
            prop_assert!(!vlo.keep || vhi.keep);
            prop_assert_eq!(vhi.keep, 1.0 - (hi as f64 / total as f64) <= 0.05 + 1e-12);
        }
    }
}
