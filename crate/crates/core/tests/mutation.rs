use std::fs;
use std::path::Path;
use std::time::Duration;

use wedge::corpus::TestInput;
use wedge::mutation::{
    dry_run, materialize_host, DryRunReport, MutationRequest, Mutator, MutatorArtifact, MutatorKind, PluginProcess,
};

// Appends a random digit string and echoes add_buf's length; prints to
// stdout to check the host keeps the protocol stream clean.
const PLUGIN: &str = r#"import random


def fuzz(buf, add_buf, max_size):
    print("noise")
    extra = b"" if add_buf is None else b"+%d" % len(add_buf)
    out = bytes(buf) + b" " + str(random.randint(0, 10**9)).encode() + extra
    return bytearray(out[:max_size])
"#;

fn request(seed: &[u8], rng_seed: u64, add: Option<&[u8]>) -> MutationRequest {
    MutationRequest {
        seed: seed.to_vec(),
        add_seed: add.map(<[u8]>::to_vec),
        max_size: 64,
        rng_seed,
    }
}

fn spawn(dir: &Path) -> PluginProcess {
    let entry = dir.join("mutator.py");
    fs::write(&entry, PLUGIN).unwrap();
    let host = materialize_host(dir).unwrap();
    PluginProcess::spawn_python(&host, &entry).unwrap()
}

#[test]
fn plugin_round_trip_and_determinism_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let reqs = [
        request(b"5", 1, None),
        request(b"5", 2, None),
        request(b"1 2 3", 1, Some(b"xyz")),
        request(&[b'9'; 200], 4, None),
    ];
    let mut first = spawn(dir.path());
    let a: Vec<Vec<u8>> = reqs.iter().map(|r| first.mutate(r).unwrap()).collect();
    first.shutdown();
    let mut second = spawn(dir.path());
    // Reverse order: each reply depends on its own request only.
    let mut b: Vec<Vec<u8>> = reqs.iter().rev().map(|r| second.mutate(r).unwrap()).collect();
    second.shutdown();
    b.reverse();
    assert_eq!(a, b);
    assert!(a[0].starts_with(b"5 "));
    assert_ne!(a[0], a[1]);
    assert!(a[2].ends_with(b"+3"));
    assert_eq!(a[3].len(), 64);
}

#[test]
fn mutator_handle_switches_on_kind() {
    let dir = tempfile::tempdir().unwrap();
    let entry = dir.path().join("mutator.py");
    fs::write(&entry, PLUGIN).unwrap();
    let artifact = MutatorArtifact {
        solution_id: "s".into(),
        kind: MutatorKind::PluginProcess,
        entry,
        rounds_used: 1,
        dry_run: DryRunReport::default(),
        synthesis_exhausted: false,
        constraint_aware: true,
    };
    let mut m = Mutator::open(&artifact).unwrap();
    assert!(m.mutate(&request(b"7", 3, None)).unwrap().starts_with(b"7 "));
    m.close();

    let mut b = Mutator::open(&MutatorArtifact::builtin("s")).unwrap();
    let x = b.mutate(&request(b"12 34", 3, None)).unwrap();
    assert_eq!(x, b.mutate(&request(b"12 34", 3, None)).unwrap());
    assert!(x.len() <= 64);
}

#[test]
fn dry_run_reports_crashes_and_successes() {
    let seeds = vec![TestInput::generated("s", b"3\n".to_vec())];
    let ok = dry_run(PLUGIN, &seeds, Duration::from_millis(300), None, 1024);
    assert!(ok.passes(), "{}", ok.failure_message);
    assert!(ok.inputs_produced > 0);

    let crash = "def fuzz(buf, add_buf, max_size):\n    return 1 / 0\n";
    let bad = dry_run(crash, &seeds, Duration::from_millis(300), None, 1024);
    assert!(!bad.passes());
    assert!(bad.crashed);
    assert!(bad.failure_message.contains("ZeroDivisionError"), "{}", bad.failure_message);

    let missing = dry_run("x = 1\n", &seeds, Duration::from_millis(300), None, 1024);
    assert!(!missing.passes());
}
