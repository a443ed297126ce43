//! Child process execution with a private scratch directory, wall timeout,
//! address-space cap and process-group teardown.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{ExitStatus, HarnessError};

/// Stdout/stderr beyond this many bytes are drained and discarded.
pub const OUTPUT_CAP: usize = 64 * 1024 * 1024;

/// Environment variables that never leak from the orchestrator into a run.
const SCRUBBED_ENV: &[&str] = &[
    "WEDGE_ABORT",
    "WEDGE_COV_OUT",
    "WEDGE_LINE_PROFILE_OUT",
    "GCOV_PREFIX",
    "GCOV_PREFIX_STRIP",
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Extra environment; `{scratch}` in values expands to the scratch dir.
    pub env: Vec<(String, String)>,
    /// Prepended to the artifact argv; `{scratch}` expands as above.
    pub wrapper: Vec<String>,
    /// Scratch-relative files whose contents are returned after the run.
    pub collect: Vec<String>,
}

impl RunOptions {
    pub fn with_env(mut self, key: &str, value: &str) -> Self {
        self.env.push((key.to_string(), value.to_string()));
        self
    }

    pub fn merge(mut self, other: RunOptions) -> Self {
        self.env.extend(other.env);
        self.wrapper.extend(other.wrapper);
        self.collect.extend(other.collect);
        self
    }
}

pub struct RawRun {
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub exit: ExitStatus,
    pub wall_time: Duration,
    pub collected: HashMap<String, Vec<u8>>,
}

fn drain<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 64 * 1024];
        loop {
            match r.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = OUTPUT_CAP.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        kept
    })
}

fn expand(value: &str, scratch: &Path) -> String {
    value.replace("{scratch}", &scratch.to_string_lossy())
}

pub fn run_process(
    argv: &[String],
    stdin: &[u8],
    timeout: Duration,
    memory_cap: u64,
    options: &RunOptions,
) -> Result<RawRun, HarnessError> {
    let scratch = tempfile::Builder::new()
        .prefix("wedge-exec-")
        .tempdir()
        .map_err(|e| HarnessError::SandboxFailure(format!("scratch dir: {e}")))?;
    let full: Vec<String> = options
        .wrapper
        .iter()
        .map(|w| expand(w, scratch.path()))
        .chain(argv.iter().cloned())
        .collect();
    let (program, args) = full
        .split_first()
        .ok_or_else(|| HarnessError::SandboxFailure("empty command".into()))?;

    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(scratch.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    for key in SCRUBBED_ENV {
        cmd.env_remove(key);
    }
    for (k, v) in &options.env {
        cmd.env(k, expand(v, scratch.path()));
    }
    let cap = memory_cap;
    // SAFETY: setrlimit is async-signal-safe and touches no shared state.
    unsafe {
        cmd.pre_exec(move || {
            let lim = libc::rlimit {
                rlim_cur: cap as libc::rlim_t,
                rlim_max: cap as libc::rlim_t,
            };
            libc::setrlimit(libc::RLIMIT_AS, &lim);
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| HarnessError::SandboxFailure(format!("spawn {program}: {e}")))?;
    let pgid = child.id() as libc::pid_t;

    let mut child_stdin = child.stdin.take().expect("stdin piped");
    let input = stdin.to_vec();
    let writer = thread::spawn(move || {
        // A program that exits without reading its input closes the pipe.
        let _ = child_stdin.write_all(&input);
    });
    let out = drain(child.stdout.take().expect("stdout piped"));
    let err = drain(child.stderr.take().expect("stderr piped"));

    let waited = child
        .wait_timeout(timeout)
        .map_err(|e| HarnessError::SandboxFailure(format!("wait: {e}")))?;
    let (status, timed_out) = match waited {
        Some(status) => (status, false),
        None => {
            // SAFETY: signalling our own child process group.
            unsafe { libc::kill(-pgid, libc::SIGKILL) };
            let status = child
                .wait()
                .map_err(|e| HarnessError::SandboxFailure(format!("wait: {e}")))?;
            (status, true)
        }
    };
    // Reap anything the program left behind in its group.
    // SAFETY: as above.
    unsafe { libc::kill(-pgid, libc::SIGKILL) };
    let wall_time = start.elapsed();
    let _ = writer.join();
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();

    let exit = if timed_out {
        ExitStatus::Timeout
    } else {
        classify(status, &stderr)
    };

    let mut collected = HashMap::new();
    for name in &options.collect {
        if let Ok(bytes) = std::fs::read(scratch.path().join(name)) {
            collected.insert(name.clone(), bytes);
        }
    }
    Ok(RawRun {
        stdout,
        stderr,
        exit,
        wall_time,
        collected,
    })
}

fn classify(status: std::process::ExitStatus, stderr: &[u8]) -> ExitStatus {
    let text = String::from_utf8_lossy(stderr);
    let out_of_memory = text.contains("std::bad_alloc") || text.contains("MemoryError");
    match (status.code(), status.signal()) {
        (Some(0), _) => ExitStatus::Ok,
        (Some(_), _) if out_of_memory => ExitStatus::Oom,
        (Some(code), _) => ExitStatus::Nonzero(code),
        (None, Some(libc::SIGKILL)) => ExitStatus::Oom,
        (None, Some(_)) if out_of_memory => ExitStatus::Oom,
        (None, Some(sig)) => ExitStatus::Signaled(sig),
        (None, None) => ExitStatus::Nonzero(-1),
    }
}
