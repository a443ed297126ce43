use std::fs;
use std::path::Path;

use wedge::constraints::{AbortMode, InstrumentedProgram};
use wedge::corpus::{Solution, TestInput, Verdict};
use wedge::fuzzer::{export_aflpp, load_queue, run_campaign, Budget, Campaign};
use wedge::harness::{ExecutionLimits, Harness, Toolchains};
use wedge::mutation::{DryRunReport, MutatorArtifact, MutatorKind};

const N_LARGE: &str = r#"#include <cstdio>
#include <cstdlib>
int main() {
    long long n;
    if (scanf("%lld", &n) != 1) return 1;
    if (n >= 90) {
        fprintf(stderr, "WEDGE_CHECK_HIT:n_large\n");
        abort();
    }
    long long s = 0;
    for (long long i = 0; i < n && i < 1000; i++) s += i;
    printf("%lld\n", s);
    fprintf(stderr, "WEDGE_COST:%lld\n", n > 0 ? n : 0);
}
"#;

fn target() -> Solution {
    Solution {
        id: "n_large".into(),
        problem_id: "p".into(),
        language: "cpp".into(),
        source: N_LARGE.into(),
        verdict: Verdict::Correct,
    }
}

fn seeds() -> Vec<TestInput> {
    ["1 2 3\n", "5\n", "7 7\n"]
        .iter()
        .enumerate()
        .map(|(i, s)| TestInput::generated(format!("s{i}"), s.as_bytes().to_vec()))
        .collect()
}

fn campaign(mutator: MutatorArtifact, execs: u64, seed: u64, out: Option<&Path>) -> Campaign {
    Campaign {
        target: target(),
        mutator,
        seeds: seeds(),
        budget: Budget::execs(execs),
        rng_seed: seed,
        limits: ExecutionLimits::default(),
        max_saved: 50_000,
        coverage: true,
        out_dir: out.map(Path::to_path_buf),
    }
}

#[test]
fn builtin_campaign_reaches_the_checker() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path().join("work"), Toolchains::default()).unwrap();
    let res = run_campaign(&h, &campaign(MutatorArtifact::builtin("n_large"), 2000, 3, None)).unwrap();
    assert_eq!(res.stats.execs, 2000);
    assert!(res.output_hits.iter().any(|h| h.contains("n_large")));
    assert!(res.stats.checker_hit_fraction > 0.0);
    // Seeds are queued but never counted as outputs.
    assert!(res.queue.iter().filter(|q| q.is_seed).count() == 3);
    assert_eq!(res.all_outputs.len(), res.stats.saved_inputs);
}

#[test]
fn same_seed_gives_identical_campaign_directories() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path().join("work"), Toolchains::default()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_campaign(&h, &campaign(MutatorArtifact::builtin("n_large"), 500, 9, Some(&a))).unwrap();
    run_campaign(&h, &campaign(MutatorArtifact::builtin("n_large"), 500, 9, Some(&b))).unwrap();
    let qa = load_queue(&a).unwrap();
    let qb = load_queue(&b).unwrap();
    assert!(!qa.is_empty());
    assert_eq!(qa, qb);
    assert_eq!(fs::read(a.join("stats.json")).unwrap(), fs::read(b.join("stats.json")).unwrap());
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(a.join("stats.json")).unwrap()).unwrap();
    assert!(stats["wall_seconds"].is_null());
}

const FLAKY_PLUGIN: &str = r#"calls = 0


def fuzz(buf, add_buf, max_size):
    global calls
    calls += 1
    if calls > 20:
        raise RuntimeError("worn out")
    return bytearray(buf)[:max_size] + b"1"
"#;

fn plugin_artifact(dir: &Path, source: &str) -> MutatorArtifact {
    fs::create_dir_all(dir).unwrap();
    let entry = dir.join("mutator.py");
    fs::write(&entry, source).unwrap();
    MutatorArtifact {
        solution_id: "n_large".into(),
        kind: MutatorKind::PluginProcess,
        entry,
        rounds_used: 1,
        dry_run: DryRunReport::default(),
        synthesis_exhausted: false,
        constraint_aware: true,
    }
}

#[test]
fn crashing_plugin_is_replaced_by_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path().join("work"), Toolchains::default()).unwrap();
    let m = plugin_artifact(&dir.path().join("plugin"), FLAKY_PLUGIN);
    let res = run_campaign(&h, &campaign(m, 200, 1, None)).unwrap();
    assert!(res.stats.mutator_failed);
    assert_eq!(res.stats.mutator, MutatorKind::Builtin);
    assert_eq!(res.stats.execs, 200);
}

#[test]
fn export_writes_runnable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let program = InstrumentedProgram {
        solution_id: "n_large".into(),
        language: "cpp".into(),
        source: N_LARGE.into(),
        checker_ids: ["n_large".to_string()].into(),
        abort_mode: AbortMode::EnvGated,
        checker_map: Default::default(),
    };
    let m = plugin_artifact(&dir.path().join("plugin-src"), "def fuzz(buf, add_buf, max_size):\n    return buf\n");
    let out = dir.path().join("bundle");
    let names = export_aflpp(&program, &m, &seeds(), &out).unwrap();
    let names: Vec<String> = names.iter().map(|p| p.display().to_string()).collect();
    for expected in ["target.cpp", "mutator.py", "plugin/mutator.py", "plugin/wedge_mutator_host.py", "run.sh"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
    }
    assert_eq!(fs::read_dir(out.join("seeds")).unwrap().count(), 3);
    let script = fs::read_to_string(out.join("run.sh")).unwrap();
    assert!(script.contains("export WEDGE_ABORT=1") && script.contains("export AFL_CUSTOM_MUTATOR_ONLY=1"));
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        assert_eq!(fs::metadata(out.join("run.sh")).unwrap().permissions().mode() & 0o111, 0o111);
    }

    // Re-export with the builtin: no plugin, stale seeds cleared.
    let names = export_aflpp(&program, &MutatorArtifact::builtin("n_large"), &seeds()[..1], &out).unwrap();
    assert!(!names.iter().any(|p| p.starts_with("plugin")));
    assert_eq!(fs::read_dir(out.join("seeds")).unwrap().count(), 1);
    assert!(!out.join("plugin").exists());
    assert!(!fs::read_to_string(out.join("run.sh")).unwrap().contains("export AFL_CUSTOM_MUTATOR_ONLY"));
}
