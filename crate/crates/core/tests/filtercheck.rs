use std::fs;

use wedge::corpus::{Origin, Problem, Solution, TestInput, Verdict};
use wedge::filtercheck::{assemble_benchmark, filter_candidates, AssembleOptions, ValidatorArtifact};
use wedge::harness::{ExecutionLimits, Harness, Toolchains, TraceCounter};

// Sums the n values after the count; cost is n.
const SUM: &str = r#"import sys
t = sys.stdin.read().split()
n = int(t[0])
print(sum(int(x) for x in t[1:1 + n]))
sys.stderr.write("WEDGE_COST:%d\n" % max(n, 0))
"#;

// Agrees with SUM except when a value is negative.
const SUM_ABS: &str = r#"import sys
t = sys.stdin.read().split()
n = int(t[0])
print(sum(abs(int(x)) for x in t[1:1 + n]))
sys.stderr.write("WEDGE_COST:%d\n" % (2 * max(n, 0)))
"#;

const VALIDATOR: &str = r#"import sys
t = sys.stdin.read().split()
if not t or int(t[0]) != len(t) - 1:
    sys.exit(1)
"#;

fn sol(id: &str, source: &str) -> Solution {
    Solution {
        id: id.into(),
        problem_id: "p".into(),
        language: "python".into(),
        source: source.into(),
        verdict: Verdict::Correct,
    }
}

fn input(id: &str, bytes: &str) -> TestInput {
    TestInput::generated(id, bytes.as_bytes().to_vec())
}

#[test]
fn validator_then_consistency_then_dedup() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path().join("work"), Toolchains::default()).unwrap();
    let arts = vec![
        h.build(&sol("sum", SUM), false).unwrap(),
        h.build(&sol("abs", SUM_ABS), false).unwrap(),
    ];
    let entry = dir.path().join("validator.py");
    fs::write(&entry, VALIDATOR).unwrap();
    let v = ValidatorArtifact {
        problem_id: "p".into(),
        entry,
        rounds_used: 1,
        accepted_all_official: true,
    };
    let candidates = vec![
        input("ok", "2 1 2\n"),
        input("bad_count", "3 1 2\n"),
        input("negative", "2 -1 2\n"),
        input("ok_again", "2 1 2\n"),
        input("other", "1 5\n"),
    ];
    let report = filter_candidates(&h, Some(&v), &arts, candidates, 0.95, &ExecutionLimits::default());
    assert_eq!(report.candidates, 5);
    assert_eq!(report.rejected_invalid, vec!["bad_count".to_string()]);
    assert_eq!(report.rejected_inconsistent.len(), 1);
    assert_eq!(report.rejected_inconsistent[0].input_id, "negative");
    assert_eq!(report.rejected_inconsistent[0].agreement_fraction, 0.5);
    assert_eq!(report.duplicates, 1);
    let kept: Vec<&str> = report.kept.iter().map(|t| t.id.as_str()).collect();
    assert_eq!(kept, ["ok", "other"]);

    // Without a validator the malformed input reaches consistency, where
    // both solutions still agree on it.
    let report = filter_candidates(&h, None, &arts, vec![input("bad_count", "3 1 2\n")], 0.95, &ExecutionLimits::default());
    assert!(report.rejected_invalid.is_empty());
    assert_eq!(report.kept.len(), 1);
}

#[test]
fn assembled_benchmark_layout() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path().join("work"), Toolchains::default()).unwrap();
    let problem = Problem {
        id: "p".into(),
        statement: "sum".into(),
        default_tests: vec![TestInput {
            id: "t1".into(),
            input_bytes: b"2 1 1\n".to_vec(),
            expected_output: Some("2\n".into()),
            origin: Origin::Official,
        }],
        solutions: vec![sol("sum", SUM), sol("abs", SUM_ABS)],
    };
    let arts: Vec<_> = problem.solutions.iter().map(|s| h.build(s, false).unwrap()).collect();
    let candidates = vec![
        input("c3", "3 1 1 1\n"),
        input("c8", "8 1 1 1 1 1 1 1 1\n"),
        input("c5", "5 1 1 1 1 1\n"),
        input("dup", "8 1 1 1 1 1 1 1 1\n"),
    ];
    let opts = AssembleOptions {
        k: 2,
        runs: 3,
        meter: &TraceCounter,
        limits: ExecutionLimits::default(),
    };
    let bench = dir.path().join("bench");
    let entries = assemble_benchmark(&h, &problem, &arts, &candidates, &opts, &bench).unwrap();
    assert_eq!(entries.len(), 4);
    for sid in ["sum", "abs"] {
        let sol_dir = bench.join("problems/p/solutions").join(sid);
        let tests: Vec<String> = {
            let mut v: Vec<String> = fs::read_dir(sol_dir.join("tests"))
                .unwrap()
                .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect();
            v.sort();
            v
        };
        assert_eq!(tests, ["rank_1.in", "rank_2.in"]);
        assert_eq!(fs::read(sol_dir.join("tests/rank_1.in")).unwrap(), b"8 1 1 1 1 1 1 1 1\n");
        assert_eq!(fs::read(sol_dir.join("tests/rank_2.in")).unwrap(), b"5 1 1 1 1 1\n");
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(sol_dir.join("meta.json")).unwrap()).unwrap();
        let first = &meta["entries"][0];
        assert_eq!(first["rank"], 1);
        assert_eq!(first["per_run_costs"].as_array().unwrap().len(), 3);
        // Baseline is the official test with n = 2.
        assert_eq!(first["slowdown_vs_default"].as_f64().unwrap(), 4.0);
    }
    let top = entries.iter().find(|e| e.solution_id == "abs" && e.rank == 1).unwrap();
    assert_eq!(top.cost.mean_cost, 16.0);

    // Re-assembling with a smaller k rewrites the directory.
    let opts = AssembleOptions { k: 1, ..opts };
    assemble_benchmark(&h, &problem, &arts, &candidates, &opts, &bench).unwrap();
    assert_eq!(fs::read_dir(bench.join("problems/p/solutions/sum/tests")).unwrap().count(), 1);
}
