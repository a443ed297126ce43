use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn wedge(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wedge"));
    cmd.args(args).env_remove("WEDGE_JOBS").env_remove("WEDGE_ABORT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = wedge(args, &[]);
    assert!(
        out.status.success(),
        "wedge {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Exit code plus the parsed JSON error line.
fn fails(args: &[&str], envs: &[(&str, &str)]) -> (i32, serde_json::Value) {
    let out = wedge(args, envs);
    assert!(!out.status.success(), "wedge {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    let err: serde_json::Value =
        serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not a JSON error ({e}): {stderr}"));
    (out.status.code().unwrap(), err["error"].clone())
}

/// Ingested and profiled toy run in a fresh directory.
fn profiled_run() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run").display().to_string();
    let conf = toy().join("wedge.toml").display().to_string();
    let corpus = toy().join("corpus").display().to_string();
    ok(&["--config", &conf, "ingest", &corpus, "--run", &run]);
    ok(&["profile", &run]);
    (dir, run)
}

#[test]
fn stages_out_of_order_are_preconditions() {
    let (_dir, run) = profiled_run();
    let (code, err) = fails(&["assemble", &run], &[]);
    assert_eq!(code, 3);
    assert_eq!(err["stage"], "assemble");
    assert_eq!(err["kind"], "precondition");
    assert!(err["message"].as_str().unwrap().contains("filter"));

    let (code, err) = fails(&["fuzz", &run, "--default-mutator"], &[]);
    assert_eq!(code, 3);
    assert!(err["message"].as_str().unwrap().contains("constraints"));

    let (code, err) = fails(&["constraints", &run], &[]);
    assert_eq!(code, 3);
    assert!(err["message"].as_str().unwrap().contains("mine-pairs"));
}

#[test]
fn usage_errors_exit_2() {
    let (_dir, run) = profiled_run();
    let (code, err) = fails(&["fuzz", &run, "--budget", "soon"], &[]);
    assert_eq!(code, 2);
    assert_eq!(err["kind"], "usage");
    let (code, _) = fails(&["profile", &run], &[("WEDGE_JOBS", "abc")]);
    assert_eq!(code, 2);
    // clap's own errors use the same code.
    assert_eq!(wedge(&["fuzz"], &[]).status.code(), Some(2));
}

#[test]
fn non_run_directory_is_a_precondition() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = fails(&["profile", &dir.path().display().to_string()], &[]);
    assert_eq!(code, 3);
    assert_eq!(err["stage"], "profile");
    assert!(err["message"].as_str().unwrap().contains("ingest"));
}

#[test]
fn completed_stages_are_skipped_unless_forced() {
    let (_dir, run) = profiled_run();
    let corpus = toy().join("corpus").display().to_string();
    assert!(ok(&["ingest", &corpus, "--run", &run]).contains("already complete"));
    assert!(ok(&["profile", &run]).contains("already complete"));
    let forced = ok(&["--force", "profile", &run]);
    assert!(!forced.contains("already complete"), "{forced}");
}

#[test]
fn unusable_provider_exits_4() {
    let (_dir, run) = profiled_run();
    ok(&["mine-pairs", &run]);
    let (code, err) = fails(&["constraints", &run, "--provider", "offline:/nonexistent/provider"], &[]);
    assert_eq!(code, 4);
    assert_eq!(err["kind"], "provider");
}

#[test]
fn config_file_overrides_flags() {
    let (dir, run) = profiled_run();
    let conf = dir.path().join("override.toml");
    fs::write(&conf, "[fuzz]\nbudget = \"40execs\"\n").unwrap();
    let conf = conf.display().to_string();
    let msg = ok(&[
        "--config", &conf, "fuzz", &run, "--no-instr", "--default-mutator", "--budget", "5000execs",
    ]);
    assert!(msg.starts_with("fuzz: "), "{msg}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&run).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"]["fuzz"]["detail"]["budget"], "40execs");
    assert_eq!(manifest["config"]["fuzz"]["budget"], "40execs");
}
