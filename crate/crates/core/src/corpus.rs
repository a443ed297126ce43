//! Problems, solutions and tests of a judge-style dataset.
//!
//! On disk a corpus is a directory tree:
//!
//! ```text
//! <root>/problems/<pid>/manifest.json
//! <root>/problems/<pid>/statement.md
//! <root>/problems/<pid>/tests/<tid>.in
//! <root>/problems/<pid>/tests/<tid>.out      (optional)
//! <root>/problems/<pid>/solutions/<sid>.<ext>
//! ```
//!
//! `manifest.json` holds exactly `{"id", "tests":[{"id","origin"}],
//! "solutions":[{"id","language","verdict"}]}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::CostMeasurement;
use crate::util::normalize_output;

pub const DEFAULT_MAX_INPUT_BYTES: usize = 10 * 1024 * 1024;
pub const DEFAULT_AGREEMENT_FRACTION: f64 = 0.95;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing manifest: {0}")]
    MissingManifest(PathBuf),
    #[error("malformed entry {path}: {reason}")]
    MalformedEntry { path: PathBuf, reason: String },
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("missing cost profiles for problem {0}")]
    MissingProfiles(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn malformed(path: &Path, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedEntry {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Official,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestInput {
    pub id: String,
    #[serde(with = "bytes_as_text")]
    pub input_bytes: Vec<u8>,
    pub expected_output: Option<String>,
    pub origin: Origin,
}

impl TestInput {
    pub fn generated(id: impl Into<String>, input_bytes: Vec<u8>) -> Self {
        TestInput {
            id: id.into(),
            input_bytes,
            expected_output: None,
            origin: Origin::Generated,
        }
    }
}

/// Inputs are usually text; binary payloads fall back to hex with a prefix.
mod bytes_as_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(bytes) {
            Ok(text) if !text.starts_with("hex:") => s.serialize_str(text),
            _ => s.serialize_str(&format!("hex:{}", hex::encode(bytes))),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        match text.strip_prefix("hex:") {
            Some(h) => hex::decode(h).map_err(serde::de::Error::custom),
            None => Ok(text.into_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub id: String,
    pub problem_id: String,
    pub language: String,
    pub source: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub default_tests: Vec<TestInput>,
    pub solutions: Vec<Solution>,
}

impl Problem {
    pub fn languages_present(&self) -> BTreeSet<String> {
        self.solutions.iter().map(|s| s.language.clone()).collect()
    }

    pub fn correct_solutions(&self) -> impl Iterator<Item = &Solution> {
        self.solutions
            .iter()
            .filter(|s| s.verdict == Verdict::Correct)
    }

    pub fn official_tests(&self) -> impl Iterator<Item = &TestInput> {
        self.default_tests
            .iter()
            .filter(|t| t.origin == Origin::Official)
    }

    pub fn solution(&self, id: &str) -> Option<&Solution> {
        self.solutions.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub problems: Vec<Problem>,
}

impl Corpus {
    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }

    pub fn solution(&self, id: &str) -> Option<(&Problem, &Solution)> {
        self.problems
            .iter()
            .find_map(|p| p.solution(id).map(|s| (p, s)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    id: String,
    tests: Vec<ManifestTest>,
    solutions: Vec<ManifestSolution>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestTest {
    id: String,
    origin: Origin,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSolution {
    id: String,
    language: String,
    verdict: Verdict,
}

/// File extension used when writing a solution of the given language.
pub fn extension_for(language: &str) -> &str {
    match language {
        "cpp" | "c++" => "cpp",
        "c" => "c",
        "python" | "python3" | "py" => "py",
        other => other,
    }
}

pub fn load_corpus(root: &Path) -> Result<Corpus, CorpusError> {
    load_corpus_with_limit(root, DEFAULT_MAX_INPUT_BYTES)
}

pub fn load_corpus_with_limit(root: &Path, max_input_bytes: usize) -> Result<Corpus, CorpusError> {
    let problems_dir = root.join("problems");
    if !problems_dir.is_dir() {
        return Err(CorpusError::MissingManifest(problems_dir));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&problems_dir)
        .map_err(io_err(&problems_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CorpusError::MissingManifest(problems_dir));
    }

    let mut problem_ids = BTreeSet::new();
    let mut solution_ids = BTreeSet::new();
    let mut problems = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let problem = load_problem(&dir, max_input_bytes)?;
        if !problem_ids.insert(problem.id.clone()) {
            return Err(CorpusError::DuplicateId(problem.id));
        }
        for s in &problem.solutions {
            if !solution_ids.insert(s.id.clone()) {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        problems.push(problem);
    }
    Ok(Corpus { problems })
}

fn load_problem(dir: &Path, max_input_bytes: usize) -> Result<Problem, CorpusError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(CorpusError::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| malformed(&manifest_path, e.to_string()))?;

    let statement_path = dir.join("statement.md");
    let statement = fs::read_to_string(&statement_path)
        .map_err(|e| malformed(&statement_path, format!("unreadable statement: {e}")))?;

    let mut seen = BTreeSet::new();
    let mut default_tests = Vec::with_capacity(manifest.tests.len());
    for t in &manifest.tests {
        if !seen.insert(t.id.clone()) {
            return Err(CorpusError::DuplicateId(format!("{}/{}", manifest.id, t.id)));
        }
        let in_path = dir.join("tests").join(format!("{}.in", t.id));
        let input_bytes =
            fs::read(&in_path).map_err(|e| malformed(&in_path, format!("unreadable input: {e}")))?;
        if input_bytes.is_empty() {
            return Err(malformed(&in_path, "empty test input"));
        }
        if input_bytes.len() > max_input_bytes {
            return Err(malformed(
                &in_path,
                format!("input of {} bytes exceeds {max_input_bytes}", input_bytes.len()),
            ));
        }
        let out_path = dir.join("tests").join(format!("{}.out", t.id));
        let expected_output = if out_path.is_file() {
            Some(
                fs::read_to_string(&out_path)
                    .map_err(|e| malformed(&out_path, format!("unreadable output: {e}")))?,
            )
        } else {
            None
        };
        default_tests.push(TestInput {
            id: t.id.clone(),
            input_bytes,
            expected_output,
            origin: t.origin,
        });
    }

    let solutions_dir = dir.join("solutions");
    let mut files: HashMap<String, Vec<PathBuf>> = HashMap::new();
    if solutions_dir.is_dir() {
        for entry in fs::read_dir(&solutions_dir).map_err(io_err(&solutions_dir))? {
            let path = entry.map_err(io_err(&solutions_dir))?.path();
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.entry(stem.to_string()).or_default().push(path);
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut solutions = Vec::with_capacity(manifest.solutions.len());
    for s in &manifest.solutions {
        if !seen.insert(s.id.clone()) {
            return Err(CorpusError::DuplicateId(s.id.clone()));
        }
        let candidates = files.get(&s.id).map(Vec::as_slice).unwrap_or(&[]);
        let path = match candidates {
            [one] => one,
            [] => {
                return Err(malformed(
                    &solutions_dir.join(&s.id),
                    "solution listed in manifest has no source file",
                ))
            }
            _ => {
                return Err(malformed(
                    &solutions_dir.join(&s.id),
                    "multiple source files share this solution id",
                ))
            }
        };
        let source = fs::read_to_string(path)
            .map_err(|e| malformed(path, format!("unreadable source: {e}")))?;
        solutions.push(Solution {
            id: s.id.clone(),
            problem_id: manifest.id.clone(),
            language: s.language.clone(),
            source,
            verdict: s.verdict,
        });
    }

    Ok(Problem {
        id: manifest.id,
        statement,
        default_tests,
        solutions,
    })
}

pub fn save_corpus(corpus: &Corpus, root: &Path) -> Result<(), CorpusError> {
    for p in &corpus.problems {
        let dir = root.join("problems").join(&p.id);
        let tests_dir = dir.join("tests");
        let sol_dir = dir.join("solutions");
        fs::create_dir_all(&tests_dir).map_err(io_err(&tests_dir))?;
        fs::create_dir_all(&sol_dir).map_err(io_err(&sol_dir))?;
        let manifest = Manifest {
            id: p.id.clone(),
            tests: p
                .default_tests
                .iter()
                .map(|t| ManifestTest {
                    id: t.id.clone(),
                    origin: t.origin,
                })
                .collect(),
            solutions: p
                .solutions
                .iter()
                .map(|s| ManifestSolution {
                    id: s.id.clone(),
                    language: s.language.clone(),
                    verdict: s.verdict,
                })
                .collect(),
        };
        let mpath = dir.join("manifest.json");
        crate::util::write_json(&mpath, &manifest).map_err(io_err(&mpath))?;
        let spath = dir.join("statement.md");
        fs::write(&spath, &p.statement).map_err(io_err(&spath))?;
        for t in &p.default_tests {
            let ip = tests_dir.join(format!("{}.in", t.id));
            fs::write(&ip, &t.input_bytes).map_err(io_err(&ip))?;
            if let Some(out) = &t.expected_output {
                let op = tests_dir.join(format!("{}.out", t.id));
                fs::write(&op, out).map_err(io_err(&op))?;
            }
        }
        for s in &p.solutions {
            let sp = sol_dir.join(format!("{}.{}", s.id, extension_for(&s.language)));
            fs::write(&sp, &s.source).map_err(io_err(&sp))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FilterCriteria {
    pub min_instructions: u64,
    pub min_solutions: usize,
    pub min_tests: usize,
    pub require_single_output: bool,
    pub top_n_by_cv: usize,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        FilterCriteria {
            min_instructions: 100_000,
            min_solutions: 10,
            min_tests: 5,
            require_single_output: true,
            top_n_by_cv: 300,
        }
    }
}

/// Per-solution cost measurements over a problem's default tests.
pub type ProblemProfile = BTreeMap<String, Vec<CostMeasurement>>;

/// Drops problems failing any criterion and ranks survivors by descending
/// coefficient of variation of per-solution mean costs (ties by id).
///
/// A problem is kept on the instruction criterion iff some correct solution
/// exceeds `min_instructions` on some default test.
pub fn filter_problems(
    corpus: &Corpus,
    profiles: &BTreeMap<String, ProblemProfile>,
    multi_output: &BTreeSet<String>,
    criteria: &FilterCriteria,
) -> Result<Vec<(String, f64)>, CorpusError> {
    let mut ranked = Vec::new();
    for p in &corpus.problems {
        let correct: Vec<&Solution> = p.correct_solutions().collect();
        if correct.len() < criteria.min_solutions || p.default_tests.len() < criteria.min_tests {
            continue;
        }
        if criteria.require_single_output && multi_output.contains(&p.id) {
            continue;
        }
        let profile = profiles
            .get(&p.id)
            .ok_or_else(|| CorpusError::MissingProfiles(p.id.clone()))?;
        let mut means = Vec::with_capacity(correct.len());
        let mut heavy = false;
        for s in &correct {
            let costs = profile
                .get(&s.id)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| CorpusError::MissingProfiles(p.id.clone()))?;
            heavy |= costs
                .iter()
                .flat_map(|c| c.per_run_costs.iter())
                .any(|&c| c > criteria.min_instructions);
            means.push(costs.iter().map(|c| c.mean_cost).sum::<f64>() / costs.len() as f64);
        }
        if !heavy {
            continue;
        }
        let cv = crate::stats::coefficient_of_variation(&means).unwrap_or(0.0);
        ranked.push((p.id.clone(), cv));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(criteria.top_n_by_cv);
    Ok(ranked)
}

/// Majority normalized output among `outputs` and its count. `None` entries
/// (failed runs) never form a majority. Ties go to the lexicographically
/// smallest output.
pub fn majority_output(outputs: &[Option<String>]) -> Option<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in outputs.iter().flatten() {
        *counts.entry(o.as_str()).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (out, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((out, n));
        }
    }
    best.map(|(o, n)| (o.to_string(), n))
}

/// True when `agreeing / total` reaches `fraction`. Counts are compared
/// directly so that 19/20 against 0.95 is not lost to rounding.
pub fn meets_agreement(agreeing: usize, total: usize, fraction: f64) -> bool {
    total > 0 && agreeing as f64 + 1e-9 >= fraction * total as f64
}

/// True iff on some official test fewer than `agreement_fraction` of the
/// correct solutions produce the same normalized stdout. Missing runs count
/// as disagreeing.
pub fn detect_multi_output(
    problem: &Problem,
    runs: &HashMap<(String, String), Vec<u8>>,
    agreement_fraction: f64,
) -> bool {
    let correct: Vec<&Solution> = problem.correct_solutions().collect();
    if correct.is_empty() {
        return false;
    }
    problem.official_tests().any(|t| {
        let outputs: Vec<Option<String>> = correct
            .iter()
            .map(|s| {
                runs.get(&(s.id.clone(), t.id.clone()))
                    .map(|o| normalize_output(o))
            })
            .collect();
        let agreeing = majority_output(&outputs).map_or(0, |(_, n)| n);
        !meets_agreement(agreeing, outputs.len(), agreement_fraction)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{CostMeasurement, MeterKind};

    fn sol(pid: &str, id: &str) -> Solution {
        Solution {
            id: id.into(),
            problem_id: pid.into(),
            language: "cpp".into(),
            source: "int main(){}".into(),
            verdict: Verdict::Correct,
        }
    }

    fn test(id: &str) -> TestInput {
        TestInput {
            id: id.into(),
            input_bytes: b"1\n".to_vec(),
            expected_output: Some("1\n".into()),
            origin: Origin::Official,
        }
    }

    fn problem(id: &str, nsol: usize, ntests: usize) -> Problem {
        Problem {
            id: id.into(),
            statement: "s".into(),
            default_tests: (0..ntests).map(|i| test(&format!("t{i}"))).collect(),
            solutions: (0..nsol).map(|i| sol(id, &format!("{id}_s{i}"))).collect(),
        }
    }

    fn cm(c: u64) -> CostMeasurement {
        CostMeasurement::from_runs(vec![c], MeterKind::TraceCounter).unwrap()
    }

    fn profile_with_means(p: &Problem, means: &[u64]) -> ProblemProfile {
        p.solutions
            .iter()
            .zip(means)
            .map(|(s, &m)| (s.id.clone(), vec![cm(m)]))
            .collect()
    }

    fn loose() -> FilterCriteria {
        FilterCriteria {
            min_instructions: 1,
            min_solutions: 3,
            min_tests: 1,
            require_single_output: true,
            top_n_by_cv: 300,
        }
    }

    #[test]
    fn cheap_problem_is_excluded() {
        let p = problem("a", 10, 5);
        let corpus = Corpus { problems: vec![p.clone()] };
        let profiles = BTreeMap::from([("a".to_string(), profile_with_means(&p, &[100_000; 10]))]);
        let out = filter_problems(&corpus, &profiles, &BTreeSet::new(), &FilterCriteria::default())
            .unwrap();
        assert!(out.is_empty());

        let mut means = [100_000u64; 10];
        means[3] = 100_001;
        let profiles = BTreeMap::from([("a".to_string(), profile_with_means(&p, &means))]);
        let out = filter_problems(&corpus, &profiles, &BTreeSet::new(), &FilterCriteria::default())
            .unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn nine_solutions_is_excluded() {
        let p = problem("a", 9, 5);
        let corpus = Corpus { problems: vec![p.clone()] };
        let profiles = BTreeMap::from([("a".to_string(), profile_with_means(&p, &[200_000; 9]))]);
        let out = filter_problems(&corpus, &profiles, &BTreeSet::new(), &FilterCriteria::default())
            .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn cv_ranking_orders_diverse_problem_first() {
        let a = problem("a", 3, 1);
        let b = problem("b", 3, 1);
        let corpus = Corpus { problems: vec![a.clone(), b.clone()] };
        let profiles = BTreeMap::from([
            ("a".to_string(), profile_with_means(&a, &[10, 10, 10])),
            ("b".to_string(), profile_with_means(&b, &[5, 10, 15])),
        ]);
        let out = filter_problems(&corpus, &profiles, &BTreeSet::new(), &loose()).unwrap();
        assert_eq!(out[0].0, "b");
        assert_eq!(out[1].0, "a");
        // population std of {5,10,15} is sqrt(50/3); over mean 10
        let expected = (50.0f64 / 3.0).sqrt() / 10.0;
        assert!((out[0].1 - expected).abs() < 1e-12);
        assert!((out[0].1 - 0.408).abs() < 1e-3);
        assert_eq!(out[1].1, 0.0);
    }

    #[test]
    fn missing_profiles_is_an_error() {
        let a = problem("a", 3, 1);
        let corpus = Corpus { problems: vec![a] };
        let err = filter_problems(&corpus, &BTreeMap::new(), &BTreeSet::new(), &loose()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingProfiles(id) if id == "a"));
    }

    #[test]
    fn multi_output_problem_is_excluded_when_required() {
        let a = problem("a", 3, 1);
        let corpus = Corpus { problems: vec![a.clone()] };
        let profiles = BTreeMap::from([("a".to_string(), profile_with_means(&a, &[5, 10, 15]))]);
        let multi = BTreeSet::from(["a".to_string()]);
        assert!(filter_problems(&corpus, &profiles, &multi, &loose()).unwrap().is_empty());
        let mut c = loose();
        c.require_single_output = false;
        assert_eq!(filter_problems(&corpus, &profiles, &multi, &c).unwrap().len(), 1);
    }

    fn runs_for(p: &Problem, outputs: &[&str]) -> HashMap<(String, String), Vec<u8>> {
        let mut runs = HashMap::new();
        for (s, out) in p.solutions.iter().zip(outputs) {
            for t in &p.default_tests {
                runs.insert((s.id.clone(), t.id.clone()), out.as_bytes().to_vec());
            }
        }
        runs
    }

    #[test]
    fn unanimous_output_is_single() {
        let p = problem("a", 10, 2);
        let runs = runs_for(&p, &["42\n"; 10]);
        assert!(!detect_multi_output(&p, &runs, DEFAULT_AGREEMENT_FRACTION));
    }

    #[test]
    fn eighty_percent_agreement_is_multi() {
        let p = problem("a", 10, 1);
        let mut outs = vec!["42\n"; 10];
        outs[0] = "7\n";
        outs[1] = "7\n";
        let runs = runs_for(&p, &outs);
        assert!(detect_multi_output(&p, &runs, DEFAULT_AGREEMENT_FRACTION));
    }

    #[test]
    fn nineteen_of_twenty_is_single() {
        let p = problem("a", 20, 1);
        let mut outs = vec!["42\n"; 20];
        outs[5] = "41\n";
        let runs = runs_for(&p, &outs);
        assert!(!detect_multi_output(&p, &runs, DEFAULT_AGREEMENT_FRACTION));
    }

    #[test]
    fn trailing_whitespace_does_not_count_as_disagreement() {
        let p = problem("a", 3, 1);
        let runs = runs_for(&p, &["42\n", "42  \n\n", "42"]);
        assert!(!detect_multi_output(&p, &runs, DEFAULT_AGREEMENT_FRACTION));
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = problem("a", 3, 2);
        p.solutions[1].language = "python".into();
        p.solutions[2].verdict = Verdict::Incorrect;
        p.default_tests[1].expected_output = None;
        p.default_tests[1].origin = Origin::Generated;
        let corpus = Corpus { problems: vec![p] };
        save_corpus(&corpus, dir.path()).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded, corpus);
    }

    #[test]
    fn empty_directory_has_no_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::MissingManifest(_))));
        fs::create_dir_all(dir.path().join("problems")).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::MissingManifest(_))));
    }

    #[test]
    fn duplicate_solution_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = problem("a", 2, 1);
        let mut b = problem("b", 2, 1);
        b.solutions[0].id = a.solutions[0].id.clone();
        save_corpus(&Corpus { problems: vec![a, b] }, dir.path()).unwrap();
        match load_corpus(dir.path()) {
            Err(CorpusError::DuplicateId(id)) => assert_eq!(id, "a_s0"),
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn empty_test_input_is_malformed_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let a = problem("a", 2, 1);
        save_corpus(&Corpus { problems: vec![a] }, dir.path()).unwrap();
        let tpath = dir.path().join("problems/a/tests/t0.in");
        fs::write(&tpath, b"").unwrap();
        match load_corpus(dir.path()) {
            Err(CorpusError::MalformedEntry { path, reason }) => {
                assert_eq!(path, tpath);
                assert!(reason.contains("empty"));
            }
            other => panic!("expected MalformedEntry, got {other:?}"),
        }
    }

    #[test]
    fn unknown_manifest_field_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&Corpus { problems: vec![problem("a", 1, 1)] }, dir.path()).unwrap();
        let m = dir.path().join("problems/a/manifest.json");
        fs::write(&m, r#"{"id":"a","tests":[],"solutions":[],"extra":1}"#).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::MalformedEntry { .. })));
    }
}
