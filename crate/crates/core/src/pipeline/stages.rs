use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{PipelineError, Run, Stage};
use crate::constraints::{
    validate_instrumentation, CheckerSpec, ConstraintSession, ConstraintsError, InstrumentedProgram, NLInvariant,
};
use crate::corpus::{detect_multi_output, extension_for, filter_problems, Problem, ProblemProfile, Solution, TestInput};
use crate::filtercheck::{
    assemble_benchmark, filter_candidates, synthesize_validator, AssembleOptions, FilterError, ValidatorArtifact,
};
use crate::fuzzer::{
    export_aflpp, hit_fraction, load_queue, replay_checker_hits, run_campaign, Campaign, CampaignStats, FuzzError,
};
use crate::harness::meter::CostMeter;
use crate::harness::{BuildArtifact, BuildMode, CostMeasurement, ExecutionLimits, Harness, LineProfile};
use crate::llm::templates::PromptTemplates;
use crate::llm::{provider_from_spec, Conversation, LlmProvider};
use crate::mutation::{refine_loop, MutationError, MutatorArtifact, MutatorContext, RefineOptions};
use crate::pairminer::{build_profile_diff, mine_pair, ContrastivePair, ProfileDiff};
use crate::stats::{self, Alternative, ComparisonReport, StatTestResult};
use crate::util::{read_json, write_json};

/// problem id -> solution id -> test id -> cost
pub type CostTable = BTreeMap<String, BTreeMap<String, BTreeMap<String, CostMeasurement>>>;

const SKIPPED: &str = "already complete; pass --force to redo";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    read_json(path).map_err(io_err(path))
}

fn fresh_dir(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(io_err(path))?;
    }
    fs::create_dir_all(path).map_err(io_err(path))
}

fn first_line(text: &str) -> String {
    text.lines().next().unwrap_or("").to_string()
}

impl Run {
    pub fn survivors(&self) -> Result<Vec<String>, PipelineError> {
        let list: Vec<(String, f64)> = load(&self.path("ingest/survivors.json"))?;
        Ok(list.into_iter().map(|(p, _)| p).collect())
    }

    pub fn costs(&self) -> Result<CostTable, PipelineError> {
        load(&self.path("ingest/costs.json"))
    }

    /// problem id -> solutions chosen for the later stages
    pub fn selected(&self) -> Result<BTreeMap<String, Vec<String>>, PipelineError> {
        load(&self.path("profile/selected.json"))
    }

    pub fn problem(&self, pid: &str) -> Result<&Problem, PipelineError> {
        self.corpus
            .problem(pid)
            .ok_or_else(|| PipelineError::Precondition(format!("problem {pid} is not in the corpus")))
    }

    pub fn solution_of(&self, pid: &str, sid: &str) -> Result<(&Problem, &Solution), PipelineError> {
        let p = self.problem(pid)?;
        let s = p
            .solution(sid)
            .ok_or_else(|| PipelineError::Precondition(format!("solution {sid} is not in problem {pid}")))?;
        Ok((p, s))
    }

    fn selected_pairs(&self) -> Result<Vec<(String, String)>, PipelineError> {
        Ok(self
            .selected()?
            .into_iter()
            .flat_map(|(p, sids)| sids.into_iter().map(move |s| (p.clone(), s)))
            .collect())
    }

    pub fn provider(&self) -> Result<Box<dyn LlmProvider>, PipelineError> {
        let spec = self
            .config()
            .llm
            .provider
            .as_deref()
            .ok_or_else(|| PipelineError::Usage("no provider configured; pass --provider offline:<dir> or subprocess:<cmd>".into()))?;
        Ok(provider_from_spec(spec)?)
    }

    pub fn templates(&self) -> Result<PromptTemplates, PipelineError> {
        match &self.config().llm.templates_dir {
            Some(dir) => PromptTemplates::with_overrides(dir).map_err(io_err(dir)),
            None => Ok(PromptTemplates::default()),
        }
    }

    pub fn instrumented(&self, sid: &str) -> Option<InstrumentedProgram> {
        read_json(&self.path(&format!("constraints/{sid}/instrumented.json"))).ok()
    }

    pub fn mutator(&self, sid: &str) -> Option<MutatorArtifact> {
        read_json(&self.path(&format!("mutators/{sid}/artifact.json"))).ok()
    }

    fn validator(&self, pid: &str) -> Option<ValidatorArtifact> {
        read_json(&self.path(&format!("filter/{pid}/validator.json"))).ok()
    }
}

fn test_by_id<'a>(p: &'a Problem, id: &str) -> Result<&'a TestInput, PipelineError> {
    p.default_tests
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| PipelineError::Precondition(format!("test {id} missing from problem {}", p.id)))
}

struct Measured {
    costs: BTreeMap<String, CostMeasurement>,
    stdout: HashMap<String, Vec<u8>>,
}

fn measure_solution(
    harness: &Harness,
    problem: &Problem,
    sol: &Solution,
    meter: &dyn CostMeter,
    runs: usize,
    limits: &ExecutionLimits,
) -> Result<Measured, String> {
    let artifact = harness.build(sol, false).map_err(|e| first_line(&e.to_string()))?;
    let mut m = Measured {
        costs: BTreeMap::new(),
        stdout: HashMap::new(),
    };
    for t in &problem.default_tests {
        let r = harness.execute(&artifact, t, limits).map_err(|e| e.to_string())?;
        if !r.is_ok() {
            return Err(format!("{:?} on default test {}", r.exit, t.id));
        }
        m.stdout.insert(t.id.clone(), r.stdout);
        let c = harness
            .measure_cost(&artifact, t, runs, meter, limits)
            .map_err(|e| e.to_string())?;
        m.costs.insert(t.id.clone(), c);
    }
    Ok(m)
}

/// Loads the corpus, measures every correct solution on its default tests,
/// and keeps the problems passing the filter criteria.
pub fn ingest(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    if run.begin(Stage::Ingest, force) {
        return Ok(SKIPPED.into());
    }
    let cfg = run.config().clone();
    let meter = run.meter();
    meter.check_available()?;
    let limits = cfg.limits();
    let jobs: Vec<(&Problem, &Solution)> = run
        .corpus
        .problems
        .iter()
        .flat_map(|p| p.correct_solutions().map(move |s| (p, s)))
        .collect();
    let harness = &run.harness;
    let results: Vec<Result<Measured, String>> = run.pool().install(|| {
        jobs.par_iter()
            .map(|(p, s)| measure_solution(harness, p, s, meter.as_ref(), cfg.harness.cost_runs, &limits))
            .collect()
    });

    let mut costs: CostTable = BTreeMap::new();
    let mut profiles: BTreeMap<String, ProblemProfile> = BTreeMap::new();
    let mut stdout: BTreeMap<String, HashMap<(String, String), Vec<u8>>> = BTreeMap::new();
    let mut broken: BTreeMap<String, String> = BTreeMap::new();
    let mut statuses = Vec::new();
    for ((p, s), r) in jobs.iter().zip(results) {
        match r {
            Ok(m) => {
                profiles
                    .entry(p.id.clone())
                    .or_default()
                    .insert(s.id.clone(), m.costs.values().cloned().collect());
                let runs = stdout.entry(p.id.clone()).or_default();
                for (tid, out) in m.stdout {
                    runs.insert((s.id.clone(), tid), out);
                }
                costs.entry(p.id.clone()).or_default().insert(s.id.clone(), m.costs);
                statuses.push((p.id.clone(), s.id.clone(), "measured".to_string()));
            }
            Err(why) => {
                broken.insert(s.id.clone(), why.clone());
                statuses.push((p.id.clone(), s.id.clone(), format!("broken: {why}")));
            }
        }
    }

    // Correct solutions that fail to build or run are left out of this run.
    let mut effective = run.corpus.clone();
    for p in &mut effective.problems {
        p.solutions.retain(|s| !broken.contains_key(&s.id));
    }
    let mut multi = BTreeSet::new();
    for p in &effective.problems {
        let empty = HashMap::new();
        if detect_multi_output(p, stdout.get(&p.id).unwrap_or(&empty), cfg.filter.agreement_fraction) {
            multi.insert(p.id.clone());
        }
    }
    for p in &effective.problems {
        profiles.entry(p.id.clone()).or_default();
    }
    let survivors = filter_problems(&effective, &profiles, &multi, &cfg.criteria())?;

    let dir = run.path("ingest");
    fresh_dir(&dir)?;
    write_json(&dir.join("survivors.json"), &survivors)?;
    write_json(&dir.join("costs.json"), &costs)?;
    write_json(&dir.join("multi_output.json"), &multi)?;
    write_json(&dir.join("broken.json"), &broken)?;
    for (p, s, st) in statuses {
        run.manifest.set_status(&p, &s, Stage::Ingest, st);
    }
    let msg = format!(
        "{} of {} problems kept ({} broken solutions)",
        survivors.len(),
        run.corpus.problems.len(),
        broken.len()
    );
    run.finish(Stage::Ingest, vec!["ingest".into()], json!({ "survivors": survivors.len() }))?;
    Ok(msg)
}

fn mean_default_cost(costs: &BTreeMap<String, CostMeasurement>) -> f64 {
    if costs.is_empty() {
        return 0.0;
    }
    costs.values().map(|c| c.mean_cost).sum::<f64>() / costs.len() as f64
}

/// Picks up to the per-problem limit of solutions (costliest first), mines
/// each one's contrastive pair, and line-profiles both inputs of the pair.
pub fn profile(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    run.require(Stage::Profile, &[Stage::Ingest])?;
    if run.begin(Stage::Profile, force) {
        return Ok(SKIPPED.into());
    }
    let cfg = run.config().clone();
    let costs = run.costs()?;
    let mut selected: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for pid in run.survivors()? {
        let Some(table) = costs.get(&pid) else { continue };
        let mut sids: Vec<(&String, f64)> = table.iter().map(|(s, c)| (s, mean_default_cost(c))).collect();
        sids.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        selected.insert(
            pid,
            sids.into_iter()
                .take(cfg.fuzz.max_solutions_per_problem)
                .map(|(s, _)| s.clone())
                .collect(),
        );
    }
    let dir = run.path("profile");
    fresh_dir(&dir)?;
    write_json(&dir.join("selected.json"), &selected)?;

    let limits = cfg.limits();
    let jobs = run.selected_pairs()?;
    let outcomes: Vec<Result<String, PipelineError>> = {
        let run_ref = &*run;
        run_ref.pool().install(|| {
            jobs.par_iter()
                .map(|(pid, sid)| -> Result<String, PipelineError> {
                    let (p, s) = run_ref.solution_of(pid, sid)?;
                    let pair = match mine_pair(&p.default_tests, &costs[pid][sid], cfg.pairs.min_cost_ratio) {
                        Ok(pair) => pair,
                        Err(e) => return Ok(format!("no pair: {e}")),
                    };
                    let artifact = match run_ref.harness.build_mode(s, BuildMode::LineProfile) {
                        Ok(a) => a,
                        Err(e) => return Ok(format!("no profile build: {}", first_line(&e.to_string()))),
                    };
                    let out = dir.join(sid);
                    fs::create_dir_all(&out)?;
                    for (name, tid) in [("slow", &pair.slow), ("fast", &pair.fast)] {
                        let t = test_by_id(p, tid)?;
                        match run_ref.harness.collect_line_profile(&artifact, t, &limits) {
                            Ok(prof) => write_json(&out.join(format!("{name}.json")), &prof)?,
                            Err(e) => return Ok(format!("profiling failed: {}", first_line(&e.to_string()))),
                        }
                    }
                    write_json(&out.join("pair.json"), &pair)?;
                    Ok("profiled".into())
                })
                .collect()
        })
    };
    let mut profiled = 0;
    for ((pid, sid), o) in jobs.iter().zip(outcomes) {
        let status = o?;
        profiled += (status == "profiled") as usize;
        run.manifest.set_status(pid, sid, Stage::Profile, status);
    }
    run.finish(Stage::Profile, vec!["profile".into()], json!({ "selected": jobs.len(), "profiled": profiled }))?;
    Ok(format!("{profiled} of {} selected solutions profiled", jobs.len()))
}

/// Turns each profiled pair into an annotated hit-count report.
pub fn mine_pairs(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    run.require(Stage::MinePairs, &[Stage::Profile])?;
    if run.begin(Stage::MinePairs, force) {
        return Ok(SKIPPED.into());
    }
    let preview = run.config().pairs.preview_bytes;
    let dir = run.path("pairs");
    fresh_dir(&dir)?;
    let mut mined = 0;
    for (pid, sid) in run.selected_pairs()? {
        let src = run.path(&format!("profile/{sid}"));
        let status = if src.join("pair.json").is_file() {
            let (p, s) = run.solution_of(&pid, &sid)?;
            let pair: ContrastivePair = load(&src.join("pair.json"))?;
            let slow_prof: LineProfile = load(&src.join("slow.json"))?;
            let fast_prof: LineProfile = load(&src.join("fast.json"))?;
            let diff = build_profile_diff(
                &s.source,
                &slow_prof,
                &fast_prof,
                test_by_id(p, &pair.slow)?,
                test_by_id(p, &pair.fast)?,
                preview,
            )
            .map_err(|e| PipelineError::Precondition(e.to_string()))?;
            let out = dir.join(&sid);
            write_json(&out.join("pair.json"), &pair)?;
            write_json(&out.join("diff.json"), &diff)?;
            fs::write(out.join("diff.txt"), diff.render())?;
            mined += 1;
            format!("ratio {:.2}", pair.cost_ratio)
        } else {
            "no pair".to_string()
        };
        run.manifest.set_status(&pid, &sid, Stage::MinePairs, status);
    }
    run.finish(Stage::MinePairs, vec!["pairs".into()], json!({ "pairs": mined }))?;
    Ok(format!("{mined} contrastive pairs"))
}

fn constraints_for(
    run: &Run,
    provider: &dyn LlmProvider,
    templates: &PromptTemplates,
    pid: &str,
    sid: &str,
) -> Result<String, PipelineError> {
    let pair_dir = run.path(&format!("pairs/{sid}"));
    if !pair_dir.join("diff.json").is_file() {
        return Ok("skipped: no pair".into());
    }
    let (p, s) = run.solution_of(pid, sid)?;
    let pair: ContrastivePair = load(&pair_dir.join("pair.json"))?;
    let diff: ProfileDiff = load(&pair_dir.join("diff.json"))?;
    let slow = test_by_id(p, &pair.slow)?;
    let fast = test_by_id(p, &pair.fast)?;
    let out = run.path(&format!("constraints/{sid}"));
    fresh_dir(&out)?;
    let mut session = ConstraintSession::new(
        provider,
        templates,
        run.config().params(),
        Conversation::new(Some(out.clone())),
    );
    let mut step = || -> Result<(Vec<NLInvariant>, Vec<CheckerSpec>, InstrumentedProgram), ConstraintsError> {
        let invariants = session.reason_constraints(p, s, &pair, &diff, slow)?;
        write_json(&out.join("invariants.json"), &invariants).map_err(crate::harness::HarnessError::Io)?;
        let (checkers, program) = session.implement_checkers(&run.harness, &invariants, p, s)?;
        Ok((invariants, checkers, program))
    };
    let (_, checkers, program) = match step() {
        Ok(v) => v,
        Err(ConstraintsError::Provider(e)) => return Err(e.into()),
        Err(e) => return Ok(format!("failed: {}", first_line(&e.to_string()))),
    };
    write_json(&out.join("checkers.json"), &checkers)?;
    let report = match validate_instrumentation(
        &run.harness,
        &program,
        s,
        &p.default_tests,
        Some((slow, fast)),
        &run.config().limits(),
    ) {
        Ok(r) => r,
        Err(e) => return Ok(format!("rejected: {}", first_line(&e.to_string()))),
    };
    write_json(&out.join("validation.json"), &report)?;
    fs::write(out.join(format!("instrumented.{}", extension_for(&program.language))), &program.source)?;
    write_json(&out.join("instrumented.json"), &program)?;
    Ok(format!(
        "instrumented with {} checkers{}",
        program.checker_ids.len(),
        if report.pair_discriminating { "" } else { " (pair not discriminated)" }
    ))
}

/// Reasons invariants, implements checkers, and validates the instrumented
/// program for every solution with a contrastive pair.
pub fn constraints(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    run.require(Stage::Constraints, &[Stage::MinePairs])?;
    if run.begin(Stage::Constraints, force) {
        return Ok(SKIPPED.into());
    }
    let provider = run.provider()?;
    let templates = run.templates()?;
    let jobs = run.selected_pairs()?;
    fresh_dir(&run.path("constraints"))?;
    let outcomes: Vec<Result<String, PipelineError>> = {
        let r = &*run;
        r.pool().install(|| {
            jobs.par_iter()
                .map(|(pid, sid)| constraints_for(r, provider.as_ref(), &templates, pid, sid))
                .collect()
        })
    };
    let mut ok = 0;
    for ((pid, sid), o) in jobs.iter().zip(outcomes) {
        let status = o?;
        ok += status.starts_with("instrumented") as usize;
        run.manifest.set_status(pid, sid, Stage::Constraints, status);
    }
    run.finish(Stage::Constraints, vec!["constraints".into()], json!({ "instrumented": ok }))?;
    Ok(format!("{ok} of {} solutions instrumented", jobs.len()))
}

/// Synthesizes a constraint-aware mutator per instrumented solution.
pub fn mutators(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    run.require(Stage::Mutators, &[Stage::Constraints])?;
    if run.begin(Stage::Mutators, force) {
        return Ok(SKIPPED.into());
    }
    let provider = run.provider()?;
    let templates = run.templates()?;
    let cfg = run.config().clone();
    let jobs = run.selected_pairs()?;
    fresh_dir(&run.path("mutators"))?;
    let outcomes: Vec<Result<String, PipelineError>> = {
        let r = &*run;
        r.pool().install(|| {
            jobs.par_iter()
                .map(|(pid, sid)| -> Result<String, PipelineError> {
                    if r.instrumented(sid).is_none() {
                        return Ok("skipped: not instrumented".into());
                    }
                    let (p, s) = r.solution_of(pid, sid)?;
                    let invariants: Vec<NLInvariant> = load(&r.path(&format!("constraints/{sid}/invariants.json")))?;
                    let diff: ProfileDiff = load(&r.path(&format!("pairs/{sid}/diff.json")))?;
                    let ctx = MutatorContext {
                        problem: p,
                        solution: s,
                        invariants: &invariants,
                        diff: &diff,
                        seeds: &p.default_tests,
                    };
                    let validator = r.validator(pid);
                    let check = |b: &[u8]| {
                        validator
                            .as_ref()
                            .is_none_or(|v| crate::filtercheck::accepts(v, &TestInput::generated("dry", b.to_vec())))
                    };
                    let out_dir = r.path(&format!("mutators/{sid}"));
                    let opts = RefineOptions {
                        max_rounds: cfg.mutation.max_rounds,
                        dry_run: Duration::from_secs_f64(cfg.mutation.dry_run_secs),
                        max_size: cfg.corpus.max_input_bytes,
                        validator: validator.is_some().then_some(&check as _),
                        out_dir: out_dir.clone(),
                        transcript_dir: Some(out_dir.clone()),
                    };
                    let artifact = match refine_loop(provider.as_ref(), &templates, &cfg.params(), &ctx, &opts) {
                        Ok(a) => a,
                        Err(MutationError::Provider(e)) => return Err(e.into()),
                        Err(e) => return Ok(format!("failed: {}", first_line(&e.to_string()))),
                    };
                    write_json(&out_dir.join("artifact.json"), &artifact)?;
                    Ok(if artifact.synthesis_exhausted {
                        format!("builtin fallback after {} rounds", artifact.rounds_used)
                    } else {
                        format!("plugin after {} rounds", artifact.rounds_used)
                    })
                })
                .collect()
        })
    };
    let mut ok = 0;
    for ((pid, sid), o) in jobs.iter().zip(outcomes) {
        let status = o?;
        ok += status.starts_with("plugin") as usize;
        run.manifest.set_status(pid, sid, Stage::Mutators, status);
    }
    run.finish(Stage::Mutators, vec!["mutators".into()], json!({ "plugins": ok }))?;
    Ok(format!("{ok} synthesized mutators"))
}

fn arm_name(no_instr: bool, default_mutator: bool) -> &'static str {
    match (no_instr, default_mutator) {
        (false, false) => "full",
        (true, false) => "no-instr",
        (false, true) => "default-mutator",
        (true, true) => "no-instr+default-mutator",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CampaignStatsFile {
    #[serde(flatten)]
    stats: CampaignStats,
    /// `campaign` when hits come from the fuzzed target itself, `replay`
    /// when the target was uninstrumented and outputs were replayed.
    hit_fraction_source: String,
}

/// Runs one campaign per selected solution. Ablation switches swap the
/// instrumented target for the original and the synthesized mutator for
/// the builtin one.
pub fn fuzz(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    let cfg = run.config().clone();
    let mut needs = vec![Stage::Profile];
    if !cfg.fuzz.no_instr {
        needs.push(Stage::Constraints);
    }
    if !cfg.fuzz.default_mutator {
        needs.push(Stage::Mutators);
    }
    run.require(Stage::Fuzz, &needs)?;
    let budget = super::parse_budget(&cfg.fuzz.budget).map_err(PipelineError::Usage)?;
    if run.begin(Stage::Fuzz, force) {
        return Ok(SKIPPED.into());
    }
    let arm = arm_name(cfg.fuzz.no_instr, cfg.fuzz.default_mutator);
    let jobs = run.selected_pairs()?;
    fresh_dir(&run.path("campaigns"))?;
    let limits = cfg.limits();
    let outcomes: Vec<Result<String, PipelineError>> = {
        let r = &*run;
        r.pool().install(|| {
            jobs.par_iter()
                .map(|(pid, sid)| -> Result<String, PipelineError> {
                    let (p, s) = r.solution_of(pid, sid)?;
                    let instrumented = r.instrumented(sid).map(|i| i.as_solution(pid));
                    let use_instr = !cfg.fuzz.no_instr && instrumented.is_some();
                    let target = if use_instr { instrumented.clone().unwrap() } else { s.clone() };
                    let mutator = match r.mutator(sid) {
                        Some(m) if !cfg.fuzz.default_mutator => m,
                        _ => MutatorArtifact::builtin(sid),
                    };
                    let out_dir = r.path(&format!("campaigns/{sid}"));
                    let campaign = Campaign {
                        target,
                        mutator,
                        seeds: p.default_tests.clone(),
                        budget,
                        rng_seed: cfg.fuzz.seed,
                        limits: limits.clone(),
                        max_saved: cfg.fuzz.max_saved,
                        coverage: cfg.fuzz.coverage,
                        out_dir: Some(out_dir.clone()),
                    };
                    let result = match run_campaign(&r.harness, &campaign) {
                        Ok(res) => res,
                        Err(FuzzError::Io(e)) => return Err(e.into()),
                        Err(e) => return Ok(format!("failed: {}", first_line(&e.to_string()))),
                    };
                    let mut stats = result.stats.clone();
                    let mut source = "campaign";
                    if !use_instr {
                        if let Some(inst) = &instrumented {
                            match replay_checker_hits(&r.harness, inst, &result.all_outputs, &limits) {
                                Ok(h) => {
                                    stats.checker_hit_fraction = hit_fraction(&h);
                                    source = "replay";
                                }
                                Err(e) => log::warn!("replay for {sid} failed: {e}"),
                            }
                        }
                    }
                    write_json(
                        &out_dir.join("stats.json"),
                        &CampaignStatsFile {
                            stats: stats.clone(),
                            hit_fraction_source: source.into(),
                        },
                    )?;
                    Ok(format!(
                        "{} saved from {} execs, hit fraction {:.3}",
                        stats.saved_inputs, stats.execs, stats.checker_hit_fraction
                    ))
                })
                .collect()
        })
    };
    let mut ok = 0;
    for ((pid, sid), o) in jobs.iter().zip(outcomes) {
        let status = o?;
        ok += !status.starts_with("failed") as usize;
        run.manifest.set_status(pid, sid, Stage::Fuzz, status);
    }
    if ok == 0 && !jobs.is_empty() {
        run.save()?;
        return Err(PipelineError::Build("every campaign failed; see manifest.json".into()));
    }
    run.finish(
        Stage::Fuzz,
        vec!["campaigns".into()],
        json!({ "arm": arm, "budget": cfg.fuzz.budget, "seed": cfg.fuzz.seed }),
    )?;
    Ok(format!("{ok} campaigns ({arm})"))
}

fn build_correct(run: &Run, p: &Problem) -> Result<Vec<BuildArtifact>, PipelineError> {
    let broken: BTreeMap<String, String> = load(&run.path("ingest/broken.json"))?;
    p.correct_solutions()
        .filter(|s| !broken.contains_key(&s.id))
        .map(|s| run.harness.build(s, false).map_err(PipelineError::from))
        .collect()
}

/// Validator synthesis, then validity, consistency and dedup over the
/// pooled campaign outputs of each problem.
pub fn filter(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    run.require(Stage::Filter, &[Stage::Fuzz])?;
    let cfg = run.config().clone();
    let provider = if cfg.validator.enabled {
        Some(run.provider().map_err(|e| match e {
            PipelineError::Usage(_) => {
                PipelineError::Usage("validator synthesis needs a provider; pass --provider or --no-validator".into())
            }
            other => other,
        })?)
    } else {
        None
    };
    if run.begin(Stage::Filter, force) {
        return Ok(SKIPPED.into());
    }
    let templates = run.templates()?;
    let limits = cfg.limits();
    let selected = run.selected()?;
    fresh_dir(&run.path("filter"))?;
    let mut kept_total = 0;
    let mut detail = serde_json::Map::new();
    for (pid, sids) in &selected {
        let p = run.problem(pid)?;
        let dir = run.path(&format!("filter/{pid}"));
        fs::create_dir_all(&dir)?;
        let validator = match &provider {
            Some(prov) => match synthesize_validator(
                prov.as_ref(),
                &templates,
                &cfg.params(),
                p,
                cfg.validator.max_rounds,
                &dir,
                Some(dir.clone()),
            ) {
                Ok(v) => {
                    write_json(&dir.join("validator.json"), &v)?;
                    Some(v)
                }
                Err(FilterError::Provider(e)) => return Err(e.into()),
                Err(e) => {
                    log::warn!("{pid}: {e}");
                    None
                }
            },
            None => None,
        };
        let mut candidates = Vec::new();
        for sid in sids {
            let cdir = run.path(&format!("campaigns/{sid}"));
            if let Ok(q) = load_queue(&cdir) {
                candidates.extend(q.into_iter().map(|mut t| {
                    t.id = format!("{sid}-{}", t.id);
                    t
                }));
            }
        }
        let correct = build_correct(run, p)?;
        let report = run
            .pool()
            .install(|| filter_candidates(&run.harness, validator.as_ref(), &correct, candidates, cfg.filter.agreement_fraction, &limits));
        let kept_dir = dir.join("kept");
        fs::create_dir_all(&kept_dir)?;
        for t in &report.kept {
            fs::write(kept_dir.join(format!("{}.in", t.id)), &t.input_bytes)?;
        }
        write_json(
            &dir.join("report.json"),
            &json!({
                "candidates": report.candidates,
                "rejected_invalid": report.rejected_invalid,
                "rejected_inconsistent": report.rejected_inconsistent,
                "duplicates": report.duplicates,
                "kept": report.kept.iter().map(|t| &t.id).collect::<Vec<_>>(),
                "validator_rounds": validator.as_ref().map(|v| v.rounds_used),
            }),
        )?;
        kept_total += report.kept.len();
        detail.insert(
            pid.clone(),
            json!({ "candidates": report.candidates, "kept": report.kept.len(), "validator": validator.is_some() }),
        );
    }
    run.finish(Stage::Filter, vec!["filter".into()], serde_json::Value::Object(detail))?;
    Ok(format!("{kept_total} inputs kept"))
}

fn read_inputs(dir: &Path) -> Result<Vec<TestInput>, PipelineError> {
    let mut names: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "in"))
            .collect(),
        Err(_) => return Ok(Vec::new()),
    };
    names.sort();
    names
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(TestInput::generated(id, fs::read(&p)?))
        })
        .collect()
}

/// Ranks the kept inputs per solution and writes the benchmark directory.
pub fn assemble(run: &mut Run, force: bool) -> Result<String, PipelineError> {
    run.require(Stage::Assemble, &[Stage::Filter])?;
    if run.begin(Stage::Assemble, force) {
        return Ok(SKIPPED.into());
    }
    let cfg = run.config().clone();
    let meter = run.meter();
    let opts = AssembleOptions {
        k: cfg.assemble.k,
        runs: cfg.harness.cost_runs,
        meter: meter.as_ref(),
        limits: cfg.limits(),
    };
    let bench = run.path("bench");
    fresh_dir(&bench)?;
    let broken: BTreeMap<String, String> = load(&run.path("ingest/broken.json"))?;
    let mut entries = 0;
    for (pid, sids) in run.selected()? {
        let p = run.problem(&pid)?;
        let kept = read_inputs(&run.path(&format!("filter/{pid}/kept")))?;
        let artifacts: Vec<BuildArtifact> = sids
            .iter()
            .filter(|s| !broken.contains_key(*s))
            .map(|sid| {
                let (_, s) = run.solution_of(&pid, sid)?;
                Ok(run.harness.build(s, false)?)
            })
            .collect::<Result<_, PipelineError>>()?;
        let got = assemble_benchmark(&run.harness, p, &artifacts, &kept, &opts, &bench).map_err(|e| match e {
            FilterError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Build(other.to_string()),
        })?;
        entries += got.len();
    }
    run.finish(Stage::Assemble, vec!["bench".into()], json!({ "k": cfg.assemble.k, "entries": entries }))?;
    Ok(format!("{entries} benchmark entries under {}", bench.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    pub hitting: usize,
    pub non_hitting: usize,
    pub hitting_mean_cost: f64,
    pub non_hitting_mean_cost: f64,
    pub test: Option<StatTestResult>,
}

/// Splits `inputs` by whether any checker of `instrumented` fires, costs
/// each on `original`, and tests hitting > non-hitting. Inputs the original
/// cannot be measured on are skipped.
pub fn constraint_discrimination(
    harness: &Harness,
    instrumented: &Solution,
    original: &Solution,
    inputs: &[TestInput],
    meter: &dyn CostMeter,
    runs: usize,
    limits: &ExecutionLimits,
) -> Result<Discrimination, PipelineError> {
    let hits = replay_checker_hits(harness, instrumented, inputs, limits).map_err(|e| PipelineError::Build(e.to_string()))?;
    let artifact = harness.build(original, false)?;
    let (mut yes, mut no) = (Vec::new(), Vec::new());
    for (t, h) in inputs.iter().zip(&hits) {
        let Ok(c) = harness.measure_cost(&artifact, t, runs, meter, limits) else {
            continue;
        };
        if h.is_empty() {
            no.push(c.mean_cost);
        } else {
            yes.push(c.mean_cost);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(Discrimination {
        hitting: yes.len(),
        non_hitting: no.len(),
        hitting_mean_cost: mean(&yes),
        non_hitting_mean_cost: mean(&no),
        test: stats::mann_whitney_u(&yes, &no, Alternative::Greater).ok(),
    })
}

fn technique_name(dir: &Path, taken: &BTreeSet<String>) -> String {
    let base = match dir.file_name().map(|n| n.to_string_lossy().into_owned()) {
        Some(n) if n == "bench" => dir
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or(n),
        Some(n) => n,
        None => "other".into(),
    };
    let mut name = base.clone();
    let mut i = 2;
    while taken.contains(&name) {
        name = format!("{base}_{i}");
        i += 1;
    }
    name
}

/// The official tests, always part of an evaluation; their mean cost is
/// also the slowdown baseline.
pub const DEFAULT_TECHNIQUE: &str = "default";

/// Re-measures this run's benchmark and every `against` benchmark on the
/// same programs and writes comparison reports.
pub fn evaluate(run: &mut Run, against: &[PathBuf], force: bool) -> Result<String, PipelineError> {
    run.require(Stage::Evaluate, &[Stage::Assemble])?;
    for a in against {
        if !a.join("problems").is_dir() {
            return Err(PipelineError::Usage(format!("{} is not a benchmark directory", a.display())));
        }
    }
    if run.begin(Stage::Evaluate, force) {
        return Ok(SKIPPED.into());
    }
    let cfg = run.config().clone();
    let meter = run.meter();
    let limits = cfg.limits();
    let costs = run.costs()?;
    let mut techniques: Vec<(String, PathBuf)> = vec![("wedge".into(), run.path("bench"))];
    let mut taken: BTreeSet<String> = BTreeSet::from(["wedge".to_string(), DEFAULT_TECHNIQUE.to_string()]);
    for a in against {
        let name = technique_name(a, &taken);
        taken.insert(name.clone());
        techniques.push((name, a.clone()));
    }

    let mut per_program: stats::PerProgram = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    let mut sizes = BTreeMap::new();
    let mut discrimination = BTreeMap::new();
    for (pid, sids) in run.selected()? {
        for sid in sids {
            let rel = format!("problems/{pid}/solutions/{sid}");
            if !run.path(&format!("bench/{rel}/meta.json")).is_file() {
                continue;
            }
            let program = format!("{pid}/{sid}");
            let (_, s) = run.solution_of(&pid, &sid)?;
            let artifact = run.harness.build(s, false)?;
            let mut row = BTreeMap::new();
            for (name, dir) in &techniques {
                let tests = read_inputs(&dir.join(&rel).join("tests"))?;
                if tests.is_empty() {
                    continue;
                }
                if name == "wedge" {
                    sizes.insert(program.clone(), tests.iter().map(|t| t.input_bytes.len() as u64).max().unwrap_or(0));
                }
                let mut sum = 0.0;
                for t in &tests {
                    sum += run.harness.measure_cost(&artifact, t, cfg.harness.cost_runs, meter.as_ref(), &limits)?.mean_cost;
                }
                row.insert(name.clone(), sum / tests.len() as f64);
            }
            if row.len() != techniques.len() {
                log::warn!("{program}: not every benchmark covers it; left out");
                continue;
            }
            let base = costs.get(&pid).and_then(|c| c.get(&sid)).map_or(0.0, mean_default_cost);
            row.insert(DEFAULT_TECHNIQUE.to_string(), base);
            baseline.insert(program.clone(), base);
            per_program.insert(program.clone(), row);

            if let Some(inst) = run.instrumented(&sid) {
                let inputs = load_queue(&run.path(&format!("campaigns/{sid}"))).unwrap_or_default();
                if !inputs.is_empty() {
                    let d = constraint_discrimination(
                        &run.harness,
                        &inst.as_solution(&pid),
                        s,
                        &inputs,
                        meter.as_ref(),
                        1,
                        &limits,
                    )?;
                    discrimination.insert(program, d);
                }
            }
        }
    }
    if per_program.is_empty() {
        return Err(PipelineError::Precondition("no benchmark programs to evaluate".into()));
    }
    let h2h = Some(("wedge", techniques.get(1).map_or(DEFAULT_TECHNIQUE, |(n, _)| n.as_str())));
    let width = cfg.evaluate.bucket_width_pct;
    let report = ComparisonReport::build(&per_program, &baseline, h2h, width)
        .map_err(|e| PipelineError::Precondition(e.to_string()))?;
    let slices = stats::size_slice(&per_program, &baseline, &sizes, &cfg.evaluate.size_thresholds, h2h, width)
        .map_err(|e| PipelineError::Precondition(e.to_string()))?;
    let dir = run.path("reports");
    fresh_dir(&dir)?;
    stats::write_report(&dir, &report, &baseline, &slices)?;
    write_json(&dir.join("discrimination.json"), &discrimination)?;
    let summary = stats::summary_table(&report);
    run.finish(Stage::Evaluate, vec!["reports".into()], json!({ "programs": per_program.len() }))?;
    Ok(summary)
}

/// Writes an AFL++ bundle per instrumented solution under `out`.
pub fn export(run: &Run, out: &Path) -> Result<String, PipelineError> {
    run.require(Stage::Constraints, &[Stage::Constraints])?;
    let mut n = 0;
    for (pid, sid) in run.selected_pairs()? {
        let Some(inst) = run.instrumented(&sid) else { continue };
        let p = run.problem(&pid)?;
        let mutator = run.mutator(&sid).unwrap_or_else(|| MutatorArtifact::builtin(&sid));
        export_aflpp(&inst, &mutator, &p.default_tests, &out.join(&sid)).map_err(|e| match e {
            FuzzError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Build(other.to_string()),
        })?;
        n += 1;
    }
    Ok(format!("{n} AFL++ bundles under {}", out.display()))
}
