//! Performance-characterizing constraints: natural-language invariants
//! reasoned from a contrastive pair, checker code implementing them, and
//! the validated instrumented program used as the fuzz target.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Problem, Solution, TestInput};
use crate::harness::sentinel::{CHECK_HIT_PREFIX, LEGACY_CHECKER_ID, LEGACY_WARNING_PREFIX};
use crate::harness::{BuildMode, ExecutionLimits, Harness, HarnessError};
use crate::llm::templates::{render, PromptTemplates, TemplateError};
use crate::llm::{tagged_blocks, Conversation, GenerationParams, LlmProvider, ProviderError};
use crate::pairminer::{tokenize, ContrastivePair, ProfileDiff};
use crate::util::normalize_output;

pub const ABORT_ENV: &str = "WEDGE_ABORT";
const GATE_FN: &str = "wedge_abort_enabled_";
pub const INVARIANTS_HEADING: &str = "PERFORMANCE INVARIANTS:";

#[derive(Debug, Error)]
pub enum ConstraintsError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no parseable invariants after {0} attempts")]
    UnparseableResponse(usize),
    #[error("checker response malformed after repair: {0}")]
    MalformedCheckers(String),
    #[error("instrumented program does not build:\n{}", .0.join("\n----\n"))]
    BuildFailed(Vec<String>),
    #[error("instrumented output differs from original on test {0}")]
    OutputDivergence(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantCategory {
    SizeBound,
    ValueRelation,
    StructuralPattern,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NLInvariant {
    pub id: String,
    pub text: String,
    pub category: InvariantCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionHint {
    AfterInputRead,
    BeforeHotLoop,
    HelperFunction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerSpec {
    pub checker_id: String,
    /// First covered invariant.
    pub invariant_id: String,
    /// All invariants this checker covers; more than one records a merge.
    pub invariant_ids: Vec<String>,
    pub code: String,
    pub insertion_hint: InsertionHint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortMode {
    EnvGated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedProgram {
    pub solution_id: String,
    pub language: String,
    pub source: String,
    pub checker_ids: BTreeSet<String>,
    pub abort_mode: AbortMode,
    /// checker id -> invariant ids it implements
    pub checker_map: BTreeMap<String, Vec<String>>,
}

impl InstrumentedProgram {
    pub fn as_solution(&self, problem_id: &str) -> Solution {
        Solution {
            id: self.solution_id.clone(),
            problem_id: problem_id.to_string(),
            language: self.language.clone(),
            source: self.source.clone(),
            verdict: crate::corpus::Verdict::Correct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub tests_checked: usize,
    /// Checkers firing per default test.
    pub hits_per_test: BTreeMap<String, BTreeSet<String>>,
    pub slow_hits: BTreeSet<String>,
    pub fast_hits: BTreeSet<String>,
    /// Some checker fires on the slow input but not on the fast one.
    pub pair_discriminating: bool,
}

static LIST_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d+[.)]|[-*\u{2022}])\s+(.+?)\s*$").unwrap());
static SENTINEL_IN_CODE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"WEDGE_CHECK_HIT:([A-Za-z0-9_]+)").unwrap());
static HELPER_DEF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^\s*(?:static\s+|inline\s+)*(?:void|bool|int|long|def)\s+\w+\s*\(").unwrap()
});
static CPP_ABORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:std::)?abort\s*\(\s*\)\s*;").unwrap());
static PY_ABORT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bos\.abort\(\s*\)").unwrap());

fn categorize(text: &str) -> InvariantCategory {
    let t = text.to_lowercase();
    let any = |words: &[&str]| words.iter().any(|w| t.contains(w));
    if any(&[
        "sorted", "cycle", "repeat", "pattern", "duplicate", "distinct", "structure", "order",
        "graph", "tree", "configuration", "same value",
    ]) {
        InvariantCategory::StructuralPattern
    } else if any(&[
        "divis", "gcd", "close to each other", "differ", "multiple of", "ratio", "relation",
        "equal", "%", "modulo", "between",
    ]) {
        InvariantCategory::ValueRelation
    } else if any(&[
        "size", "length", "number of", "large", "upper bound", "maximum", "count", "close to",
        "near",
    ]) {
        InvariantCategory::SizeBound
    } else {
        InvariantCategory::Other
    }
}

/// Extracts list items under the invariants heading (or anywhere, if the
/// heading is absent), skipping fenced code. Ids are `inv_1..inv_n`.
pub fn parse_invariants(response: &str) -> Vec<NLInvariant> {
    let mut lines: Vec<&str> = Vec::new();
    let mut in_fence = false;
    for line in response.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if !in_fence {
            lines.push(line);
        }
    }
    let heading = lines
        .iter()
        .rposition(|l| l.trim().to_uppercase().starts_with(INVARIANTS_HEADING));
    let body = match heading {
        Some(i) => &lines[i + 1..],
        None => &lines[..],
    };

    let mut items: Vec<String> = Vec::new();
    let mut open = false;
    for line in body {
        if let Some(c) = LIST_ITEM.captures(line) {
            items.push(c[1].to_string());
            open = true;
        } else if line.trim().is_empty() {
            open = false;
        } else if open && line.starts_with([' ', '\t']) {
            let last = items.last_mut().expect("open item");
            last.push(' ');
            last.push_str(line.trim());
        } else {
            open = false;
            if heading.is_some() && !items.is_empty() {
                break;
            }
        }
    }
    items
        .into_iter()
        .map(|t| t.replace("**", ""))
        .filter(|t| !t.trim().is_empty())
        .enumerate()
        .map(|(i, text)| NLInvariant {
            id: format!("inv_{}", i + 1),
            category: categorize(&text),
            text,
        })
        .collect()
}

/// True when `text` repeats the whole token sequence of `slow` (three or
/// more tokens), i.e. hardcodes the slow input.
pub fn copies_input(text: &str, slow: &[u8]) -> bool {
    let toks = tokenize(slow);
    if toks.len() < 3 {
        return false;
    }
    let needle = toks.join(" ");
    tokenize(text.as_bytes()).join(" ").contains(&needle)
}

/// Wraps every abort in an environment check so that only
/// `WEDGE_ABORT=1` actually aborts. Idempotent.
pub fn gate_aborts(source: &str, language: &str) -> String {
    if source.contains(GATE_FN) {
        return source.to_string();
    }
    let python = matches!(language, "python" | "python3" | "py");
    let (helper, body) = if python {
        (
            format!("def {GATE_FN}():\n    import os as _os\n    return _os.environ.get(\"{ABORT_ENV}\") == \"1\"\n"),
            PY_ABORT
                .replace_all(source, format!("(os.abort() if {GATE_FN}() else None)").as_str())
                .into_owned(),
        )
    } else if language == "c" {
        (
            format!(
                "#include <stdlib.h>\n#include <string.h>\nstatic int {GATE_FN}(void) {{ const char* v = getenv(\"{ABORT_ENV}\"); return v && strcmp(v, \"1\") == 0; }}\n"
            ),
            CPP_ABORT
                .replace_all(source, format!("{{ if ({GATE_FN}()) abort(); }}").as_str())
                .into_owned(),
        )
    } else {
        (
            format!(
                "#include <cstdlib>\n#include <cstring>\nstatic bool {GATE_FN}() {{ const char* v = std::getenv(\"{ABORT_ENV}\"); return v && std::strcmp(v, \"1\") == 0; }}\n"
            ),
            CPP_ABORT
                .replace_all(source, format!("{{ if ({GATE_FN}()) std::abort(); }}").as_str())
                .into_owned(),
        )
    };
    // Helper goes after the leading include/import block.
    let lines: Vec<&str> = body.lines().collect();
    let is_header = |l: &str| {
        let t = l.trim_start();
        if python {
            t.starts_with("#!") || t.starts_with("# -*-") || t.starts_with("from __future__")
        } else {
            t.starts_with("#include")
        }
    };
    let at = lines.iter().rposition(|l| is_header(l)).map_or(0, |i| i + 1);
    let mut out = String::new();
    for l in &lines[..at] {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str(&helper);
    for l in &lines[at..] {
        out.push_str(l);
        out.push('\n');
    }
    out
}

/// Checker ids a program can report: its sentinel ids, plus `legacy` if it
/// prints the legacy warning.
pub fn declared_checker_ids(source: &str) -> BTreeSet<String> {
    let mut ids: BTreeSet<String> = SENTINEL_IN_CODE
        .captures_iter(source)
        .map(|c| c[1].to_string())
        .collect();
    if source.contains(LEGACY_WARNING_PREFIX) {
        ids.insert(LEGACY_CHECKER_ID.to_string());
    }
    ids
}

fn insertion_hint(code: &str) -> InsertionHint {
    if HELPER_DEF.is_match(code) {
        InsertionHint::HelperFunction
    } else if code.contains("for") || code.contains("while") || code.contains("loop") {
        InsertionHint::BeforeHotLoop
    } else {
        InsertionHint::AfterInputRead
    }
}

#[derive(Debug)]
struct ParsedCheckers {
    checkers: Vec<CheckerSpec>,
    instrumented: String,
}

fn parse_checker_response(text: &str, invariants: &[NLInvariant]) -> Result<ParsedCheckers, String> {
    let blocks = tagged_blocks(text);
    let instrumented: Vec<&str> = blocks
        .iter()
        .filter(|(t, _)| *t == "instrumented")
        .map(|(_, b)| *b)
        .collect();
    let [instrumented] = instrumented.as_slice() else {
        return Err(format!(
            "expected exactly one `instrumented` block, found {}",
            instrumented.len()
        ));
    };
    let known: BTreeSet<&str> = invariants.iter().map(|i| i.id.as_str()).collect();
    let mut checkers = Vec::new();
    let mut covered = BTreeSet::new();
    for (tag, code) in &blocks {
        let Some(ids) = tag.strip_prefix("checker:") else {
            continue;
        };
        let ids: Vec<String> = ids
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if let Some(bad) = ids.iter().find(|i| !known.contains(i.as_str())) {
            return Err(format!("checker block names unknown invariant {bad}"));
        }
        let declared = declared_checker_ids(code);
        let checker_id = declared
            .iter()
            .find(|i| *i != LEGACY_CHECKER_ID)
            .or(declared.iter().next())
            .cloned()
            .ok_or_else(|| format!("checker for {} reports no sentinel", ids.join(",")))?;
        covered.extend(ids.iter().cloned());
        checkers.push(CheckerSpec {
            checker_id,
            invariant_id: ids.first().cloned().unwrap_or_default(),
            invariant_ids: ids,
            code: code.to_string(),
            insertion_hint: insertion_hint(code),
        });
    }
    let uncovered: Vec<&str> = known.iter().filter(|i| !covered.contains(**i)).copied().collect();
    if !uncovered.is_empty() {
        return Err(format!("no checker for {}", uncovered.join(", ")));
    }
    let program_ids = declared_checker_ids(instrumented);
    if let Some(c) = checkers.iter().find(|c| !program_ids.contains(&c.checker_id)) {
        return Err(format!("checker {} is not in the instrumented program", c.checker_id));
    }
    Ok(ParsedCheckers {
        checkers,
        instrumented: instrumented.to_string(),
    })
}

/// Shared prompt state for one solution's constraint synthesis.
pub struct ConstraintSession<'a> {
    pub provider: &'a dyn LlmProvider,
    pub templates: &'a PromptTemplates,
    pub params: GenerationParams,
    pub conversation: Conversation,
}

impl<'a> ConstraintSession<'a> {
    pub fn new(
        provider: &'a dyn LlmProvider,
        templates: &'a PromptTemplates,
        params: GenerationParams,
        conversation: Conversation,
    ) -> Self {
        ConstraintSession {
            provider,
            templates,
            params,
            conversation,
        }
    }

    pub fn render_reasoning_prompt(
        &self,
        problem: &Problem,
        solution: &Solution,
        diff: &ProfileDiff,
    ) -> Result<String, TemplateError> {
        let vars = BTreeMap::from([
            ("invariant_examples", self.templates.invariant_examples.clone()),
            ("problem_statement", problem.statement.clone()),
            ("one_solution", solution.source.clone()),
            ("slow_input", diff.slow_input_preview.clone()),
            ("fast_input", diff.fast_input_preview.clone()),
            ("product_cov", diff.render()),
            ("format_contract", self.templates.format_reasoning.clone()),
        ]);
        render(&self.templates.reasoning, &vars)
    }

    /// Asks for invariants; one re-prompt if none parse. Invariants that
    /// copy the slow input verbatim are dropped.
    pub fn reason_constraints(
        &mut self,
        problem: &Problem,
        solution: &Solution,
        _pair: &ContrastivePair,
        diff: &ProfileDiff,
        slow: &TestInput,
    ) -> Result<Vec<NLInvariant>, ConstraintsError> {
        let mut prompt = self.render_reasoning_prompt(problem, solution, diff)?;
        for attempt in 1..=2 {
            let reply = self.conversation.ask(self.provider, &self.params, prompt)?;
            let kept: Vec<NLInvariant> = parse_invariants(&reply)
                .into_iter()
                .filter(|i| !copies_input(&i.text, &slow.input_bytes))
                .enumerate()
                .map(|(k, mut i)| {
                    i.id = format!("inv_{}", k + 1);
                    i
                })
                .collect();
            if !kept.is_empty() {
                return Ok(kept);
            }
            if attempt == 2 {
                break;
            }
            prompt = format!(
                "Your answer did not contain any usable invariant. Reply again, ending with a line `{INVARIANTS_HEADING}` followed by a numbered list of invariants in prose, without copying values from the slow input."
            );
        }
        Err(ConstraintsError::UnparseableResponse(2))
    }

    pub fn render_checker_prompt(
        &self,
        invariants: &[NLInvariant],
        problem: &Problem,
        solution: &Solution,
    ) -> Result<String, TemplateError> {
        let list: String = invariants
            .iter()
            .map(|i| format!("- {}: {}\n", i.id, i.text))
            .collect();
        let contract = render(
            &self.templates.format_checker,
            &BTreeMap::from([("language", solution.language.clone()), ("invariant_list", list)]),
        )?;
        let vars = BTreeMap::from([
            ("checker_examples", self.templates.checker_examples.clone()),
            ("problem_statement", problem.statement.clone()),
            ("solution", solution.source.clone()),
            ("format_contract", contract),
        ]);
        render(&self.templates.checker, &vars)
    }

    /// Asks for checkers and the instrumented program, gates aborts, and
    /// builds it. Malformed responses and build failures each get one
    /// repair round.
    pub fn implement_checkers(
        &mut self,
        harness: &Harness,
        invariants: &[NLInvariant],
        problem: &Problem,
        solution: &Solution,
    ) -> Result<(Vec<CheckerSpec>, InstrumentedProgram), ConstraintsError> {
        if invariants.is_empty() {
            return Err(ConstraintsError::MalformedCheckers("no invariants".into()));
        }
        let mut prompt = self.render_checker_prompt(invariants, problem, solution)?;
        let mut malformed_repairs = 0;
        let mut build_logs: Vec<String> = Vec::new();
        loop {
            let reply = self.conversation.ask(self.provider, &self.params, prompt)?;
            let parsed = match parse_checker_response(&reply, invariants) {
                Ok(p) => p,
                Err(why) => {
                    if malformed_repairs == 1 {
                        return Err(ConstraintsError::MalformedCheckers(why));
                    }
                    malformed_repairs += 1;
                    prompt = format!(
                        "Your answer could not be used: {why}. Reply again in the required format: one `checker:<id>` block per invariant and exactly one `instrumented` block."
                    );
                    continue;
                }
            };
            let source = gate_aborts(&parsed.instrumented, &solution.language);
            match harness.build_source(&solution.id, &solution.language, &source, BuildMode::Plain) {
                Ok(_) => {
                    let checker_map = parsed
                        .checkers
                        .iter()
                        .map(|c| (c.checker_id.clone(), c.invariant_ids.clone()))
                        .collect();
                    let program = InstrumentedProgram {
                        solution_id: solution.id.clone(),
                        language: solution.language.clone(),
                        checker_ids: declared_checker_ids(&source),
                        source,
                        abort_mode: AbortMode::EnvGated,
                        checker_map,
                    };
                    return Ok((parsed.checkers, program));
                }
                Err(HarnessError::BuildFailed(log)) => {
                    build_logs.push(log.clone());
                    if build_logs.len() == 2 {
                        return Err(ConstraintsError::BuildFailed(build_logs));
                    }
                    prompt = format!(
                        "The instrumented program does not compile:\n```\n{}\n```\nFix it and reply again in the same format.",
                        crate::util::truncate_preview(&log, 8192)
                    );
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Runs instrumented and original programs on every default test with
/// aborts disabled and requires identical normalized stdout; also records
/// which checkers fire on the pair.
pub fn validate_instrumentation(
    harness: &Harness,
    instrumented: &InstrumentedProgram,
    original: &Solution,
    default_tests: &[TestInput],
    pair: Option<(&TestInput, &TestInput)>,
    limits: &ExecutionLimits,
) -> Result<ValidationReport, ConstraintsError> {
    let inst = harness.build_source(
        &instrumented.solution_id,
        &instrumented.language,
        &instrumented.source,
        BuildMode::Plain,
    )?;
    let orig = harness.build(original, false)?;
    let mut hits_per_test = BTreeMap::new();
    for t in default_tests {
        let a = harness.execute(&inst, t, limits)?;
        let b = harness.execute(&orig, t, limits)?;
        if normalize_output(&a.stdout) != normalize_output(&b.stdout) {
            return Err(ConstraintsError::OutputDivergence(t.id.clone()));
        }
        hits_per_test.insert(t.id.clone(), a.checker_hits);
    }
    let (slow_hits, fast_hits) = match pair {
        Some((slow, fast)) => {
            let hits = |t: &TestInput| -> Result<BTreeSet<String>, ConstraintsError> {
                match hits_per_test.get(&t.id) {
                    Some(h) => Ok(h.clone()),
                    None => Ok(harness.execute(&inst, t, limits)?.checker_hits),
                }
            };
            (hits(slow)?, hits(fast)?)
        }
        None => (BTreeSet::new(), BTreeSet::new()),
    };
    Ok(ValidationReport {
        tests_checked: default_tests.len(),
        pair_discriminating: slow_hits.difference(&fast_hits).next().is_some(),
        hits_per_test,
        slow_hits,
        fast_hits,
    })
}

/// Sentinel line for a checker id, for building fixture programs.
pub fn sentinel_line(id: &str) -> String {
    format!("{CHECK_HIT_PREFIX}{id}")
}
