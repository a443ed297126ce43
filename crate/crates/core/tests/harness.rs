use std::time::Duration;

use rayon::prelude::*;
use wedge::corpus::{Solution, TestInput, Verdict};
use wedge::harness::meter::missing_binary;
use wedge::harness::{
    ArtifactKind, BuildMode, ExecutionLimits, ExitStatus, Harness, HarnessError, MeterKind,
    RunOptions, Toolchains, TraceCounter,
};

fn harness() -> (tempfile::TempDir, Harness) {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(dir.path(), Toolchains::default()).unwrap();
    (dir, h)
}

fn sol(id: &str, language: &str, source: &str) -> Solution {
    Solution {
        id: id.into(),
        problem_id: "p".into(),
        language: language.into(),
        source: source.into(),
        verdict: Verdict::Correct,
    }
}

fn input(bytes: &str) -> TestInput {
    TestInput::generated("t", bytes.as_bytes().to_vec())
}

const ECHO: &str = r#"#include <iostream>
#include <string>
int main() {
    std::string s;
    while (std::cin >> s) std::cout << s << "\n";
}
"#;

const SPIN: &str = "int main() { volatile unsigned x = 0; for (;;) x++; }\n";

const LEGACY_ABORT: &str = r#"#include <cstdio>
#include <cstdlib>
int main() {
    fprintf(stderr, "Warning: Performance bottleneck condition triggered!\n");
    abort();
}
"#;

// Counts 1234 steps: 1000 outer trips plus 234 inner trips.
const COUNTED: &str = r#"#include <cstdio>
int main() {
    unsigned long steps = 0;
    for (int i = 0; i < 1000; i++)
        steps++;
    for (int j = 0; j < 234; j++)
        steps++;
    fprintf(stderr, "WEDGE_COST:%lu\n", steps);
}
"#;

const LOOP7: &str = r#"#include <cstdio>
int main() {
    int n = 0, acc = 0;
    if (scanf("%d", &n) != 1) return 1;
    for (int i = 0; i < n; i++)
        acc += i;
    printf("%d\n", acc);
}
"#;

#[test]
fn echo_program_round_trips_stdin() {
    let (_d, h) = harness();
    let a = h.build(&sol("echo", "cpp", ECHO), false).unwrap();
    assert_eq!(a.kind, ArtifactKind::NativeBinary);
    assert!(a.entry.exists());
    let r = h.execute(&a, &input("5\n"), &ExecutionLimits::default()).unwrap();
    assert_eq!(r.stdout, b"5\n");
    assert_eq!(r.exit, ExitStatus::Ok);
    assert!(r.checker_hits.is_empty());
}

#[test]
fn syntax_error_reports_compiler_log() {
    let (_d, h) = harness();
    match h.build(&sol("bad", "cpp", "int main( {"), false) {
        Err(HarnessError::BuildFailed(log)) => assert!(log.contains("error"), "{log}"),
        other => panic!("expected BuildFailed, got {other:?}"),
    }
}

#[test]
fn unknown_language_is_unsupported() {
    let (_d, h) = harness();
    assert!(matches!(
        h.build(&sol("x", "cobol", "x"), false),
        Err(HarnessError::UnsupportedLanguage(_))
    ));
}

#[test]
fn script_artifact_entry_is_the_source() {
    let (_d, h) = harness();
    let a = h
        .build(&sol("py", "python", "print(int(input()) * 2)\n"), false)
        .unwrap();
    assert_eq!(a.kind, ArtifactKind::Script);
    assert_eq!(a.entry, a.source_path);
    let r = h.execute(&a, &input("21\n"), &ExecutionLimits::default()).unwrap();
    assert_eq!(r.stdout, b"42\n");
}

#[test]
fn infinite_loop_times_out() {
    let (_d, h) = harness();
    let a = h.build(&sol("spin", "cpp", SPIN), false).unwrap();
    let limits = ExecutionLimits {
        wall_timeout: Duration::from_secs(1),
        ..ExecutionLimits::default()
    };
    let r = h.execute(&a, &input("\n"), &limits).unwrap();
    assert_eq!(r.exit, ExitStatus::Timeout);
    assert!(r.wall_time < Duration::from_secs(5));
}

#[test]
fn legacy_warning_then_abort_is_constraint_abort() {
    let (_d, h) = harness();
    let a = h.build(&sol("legacy", "cpp", LEGACY_ABORT), false).unwrap();
    let r = h.execute(&a, &input("1\n"), &ExecutionLimits::default()).unwrap();
    assert!(r.checker_hits.contains("legacy"));
    assert!(r.is_constraint_abort());
}

#[test]
fn oversized_input_is_rejected_before_running() {
    let (_d, h) = harness();
    let a = h.build(&sol("echo", "cpp", ECHO), false).unwrap();
    let limits = ExecutionLimits {
        max_input_bytes: 4,
        ..ExecutionLimits::default()
    };
    assert!(matches!(
        h.execute(&a, &input("123456"), &limits),
        Err(HarnessError::InputTooLarge { size: 6, limit: 4 })
    ));
}

#[test]
fn trace_counter_reports_fixture_steps() {
    let (_d, h) = harness();
    let a = h.build(&sol("counted", "cpp", COUNTED), false).unwrap();
    let limits = ExecutionLimits::default();
    let m = h.measure_cost(&a, &input("\n"), 5, &TraceCounter, &limits).unwrap();
    // Oracle: re-count the two loops' trip counts.
    let oracle: u64 = (0..1000).count() as u64 + (0..234).count() as u64;
    assert_eq!(m.per_run_costs, vec![oracle; 5]);
    assert_eq!(m.mean_cost, 1234.0);
    assert_eq!(m.meter, MeterKind::TraceCounter);

    let one = h.measure_cost(&a, &input("\n"), 1, &TraceCounter, &limits).unwrap();
    assert_eq!(one.per_run_costs, vec![1234]);
    assert_eq!(one.mean_cost, 1234.0);
}

#[test]
fn hardware_meter_without_perf_is_unavailable() {
    let (_d, h) = harness();
    let a = h.build(&sol("counted", "cpp", COUNTED), false).unwrap();
    let meter = missing_binary(std::path::Path::new("/nonexistent/perf"));
    assert!(matches!(
        h.measure_cost(&a, &input("\n"), 5, &meter, &ExecutionLimits::default()),
        Err(HarnessError::MeterUnavailable(_))
    ));
}

#[test]
fn native_line_profile_counts_loop_trips() {
    let (_d, h) = harness();
    let a = h.build(&sol("loop7", "cpp", LOOP7), true).unwrap();
    let p = h
        .collect_line_profile(&a, &input("7\n"), &ExecutionLimits::default())
        .unwrap();
    assert_eq!(p.hits.len(), LOOP7.lines().count());
    assert_eq!(p.hits[&6], 7, "{:?}", p.hits);
    assert_eq!(p.hits[&1], 0);
}

#[test]
fn script_line_profile_counts_each_statement() {
    let (_d, h) = harness();
    let src = "a = 1\nb = a + 1\nprint(a + b)\n";
    let a = h.build(&sol("straight", "python", src), true).unwrap();
    let p = h
        .collect_line_profile(&a, &input("\n"), &ExecutionLimits::default())
        .unwrap();
    assert_eq!(p.hits.values().copied().collect::<Vec<_>>(), vec![1, 1, 1]);
}

#[test]
fn profile_requires_profiling_build() {
    let (_d, h) = harness();
    let a = h.build(&sol("loop7", "cpp", LOOP7), false).unwrap();
    assert!(matches!(
        h.collect_line_profile(&a, &input("7\n"), &ExecutionLimits::default()),
        Err(HarnessError::ProfileUnavailable(_))
    ));
}

#[test]
fn coverage_build_reports_edges_and_is_deterministic() {
    let (_d, h) = harness();
    let a = h.build_mode(&sol("loop7", "cpp", LOOP7), BuildMode::Coverage).unwrap();
    let limits = ExecutionLimits::default();
    let opts = RunOptions::default();
    let (r1, c1) = h.execute_with_coverage(&a, &input("7\n"), &limits, &opts).unwrap();
    let (_, c2) = h.execute_with_coverage(&a, &input("7\n"), &limits, &opts).unwrap();
    let (_, c3) = h.execute_with_coverage(&a, &input("300\n"), &limits, &opts).unwrap();
    assert_eq!(r1.stdout, b"21\n");
    let c1 = c1.expect("coverage");
    assert!(!c1.is_empty());
    assert_eq!(Some(&c1), c2.as_ref());
    assert_ne!(Some(&c1), c3.as_ref());
}

#[test]
fn builds_are_cached_by_content() {
    let (_d, h) = harness();
    let a = h.build(&sol("echo", "cpp", ECHO), false).unwrap();
    let b = h.build(&sol("echo", "cpp", ECHO), false).unwrap();
    assert_eq!(a, b);
    let c = h.build(&sol("echo", "cpp", &format!("{ECHO}\n")), false).unwrap();
    assert_ne!(a.build_dir, c.build_dir);
}

#[test]
fn concurrent_executions_do_not_interleave() {
    let (_d, h) = harness();
    let a = h.build(&sol("echo", "cpp", ECHO), false).unwrap();
    let limits = ExecutionLimits::default();
    (0..32).into_par_iter().for_each(|i| {
        let text = format!("{i}-{}\n", "x".repeat(i * 100));
        let r = h.execute(&a, &input(&text), &limits).unwrap();
        assert_eq!(String::from_utf8(r.stdout).unwrap(), text);
    });
}

#[test]
fn repeated_trace_runs_are_identical() {
    let (_d, h) = harness();
    let a = h.build(&sol("counted", "cpp", COUNTED), false).unwrap();
    let limits = ExecutionLimits::default();
    let r1 = h.execute(&a, &input("\n"), &limits).unwrap();
    let r2 = h.execute(&a, &input("\n"), &limits).unwrap();
    assert_eq!((r1.stdout, r1.stderr, r1.exit), (r2.stdout, r2.stderr, r2.exit));
}
