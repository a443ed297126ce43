//! Emits a directory that runs the same campaign under AFL++.

use std::fs;
use std::path::{Path, PathBuf};

use super::FuzzError;
use crate::constraints::InstrumentedProgram;
use crate::corpus::{extension_for, TestInput};
use crate::mutation::{MutatorArtifact, MutatorKind, HOST_SOURCE};

const AFL_MUTATOR_PY: &str = r#""""AFL++ Python custom mutator that forwards to a WEDGE mutator plugin.

Each fuzz() call becomes one plugin request; the rng seed is drawn from
AFL++'s own `random` state so runs stay reproducible under -s.
"""

import os
import random
import struct
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
_proc = None


def _read_exact(stream, n):
    data = b""
    while len(data) < n:
        chunk = stream.read(n - len(data))
        if not chunk:
            raise RuntimeError("mutator plugin exited")
        data += chunk
    return data


def init(seed):
    global _proc
    random.seed(seed)
    _proc = subprocess.Popen(
        [sys.executable, os.path.join(HERE, "plugin", "wedge_mutator_host.py"),
         os.path.join(HERE, "plugin", "mutator.py")],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE)


def fuzz(buf, add_buf, max_size):
    seed, add = bytes(buf), bytes(add_buf or b"")
    body = struct.pack("<BQII", 0x01, random.getrandbits(64), max_size, len(seed)) + seed
    body += struct.pack("<I", len(add)) + add
    _proc.stdin.write(struct.pack("<I", len(body)) + body)
    _proc.stdin.flush()
    (length,) = struct.unpack("<I", _read_exact(_proc.stdout, 4))
    reply = _read_exact(_proc.stdout, length)
    if reply[0] != 0x81:
        raise RuntimeError("unexpected reply tag %d" % reply[0])
    return bytearray(reply[1:])


def deinit():
    if _proc is not None:
        _proc.stdin.write(struct.pack("<IB", 1, 0x7F))
        _proc.stdin.close()
        _proc.wait()
"#;

const BUILTIN_NOTE_PY: &str = r#""""No synthesized mutator was available for this target; run.sh leaves
AFL++'s default havoc mutator in charge. Kept so the layout is uniform.
"""


def init(seed):
    pass


def fuzz(buf, add_buf, max_size):
    return bytearray(buf[:max_size])
"#;

fn run_script(ext: &str, custom: bool) -> String {
    let build = match ext {
        "cpp" => "afl-clang-fast++ -O2 -std=c++17 -o target target.cpp",
        "c" => "afl-clang-fast -O2 -o target target.c",
        _ => "# Script targets need an AFL-aware interpreter; point TARGET at it.",
    };
    let target = match ext {
        "cpp" | "c" => "./target".to_string(),
        other => format!("python3 target.{other}"),
    };
    let custom_env = if custom {
        "export PYTHONPATH=\"$HERE${PYTHONPATH:+:$PYTHONPATH}\"\nexport AFL_PYTHON_MODULE=mutator\nexport AFL_CUSTOM_MUTATOR_ONLY=1\n"
    } else {
        ""
    };
    format!(
        r#"#!/bin/sh
# Runs the exported campaign under AFL++ (not run by wedge itself).
#
# Environment:
#   WEDGE_ABORT=1   turns checker hits into aborts, which AFL++ records as crashes
#   AFL_PYTHON_MODULE / AFL_CUSTOM_MUTATOR_ONLY   select the custom mutator
# Inputs are capped at 10 MB by -G, matching the harness input limit.
set -e
HERE="$(cd "$(dirname "$0")" && pwd)"
cd "$HERE"
{build}
export WEDGE_ABORT=1
{custom_env}TARGET="${{TARGET:-{target}}}"
exec afl-fuzz -i seeds -o findings -G 10485760 -- $TARGET
"#
    )
}

/// Writes target source, mutator adapter, seeds and run script into
/// `out_dir`; returns the emitted paths relative to it, sorted.
pub fn export_aflpp(
    instrumented: &InstrumentedProgram,
    mutator: &MutatorArtifact,
    seeds: &[TestInput],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, FuzzError> {
    let ext = extension_for(&instrumented.language);
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![(
        PathBuf::from(format!("target.{ext}")),
        instrumented.source.clone().into_bytes(),
    )];
    let custom = mutator.kind == MutatorKind::PluginProcess;
    if custom {
        files.push(("mutator.py".into(), AFL_MUTATOR_PY.into()));
        files.push(("plugin/mutator.py".into(), fs::read(&mutator.entry)?));
        files.push(("plugin/wedge_mutator_host.py".into(), HOST_SOURCE.into()));
    } else {
        files.push(("mutator.py".into(), BUILTIN_NOTE_PY.into()));
    }
    for (i, s) in seeds.iter().enumerate() {
        files.push((format!("seeds/{i:06}.in").into(), s.input_bytes.clone()));
    }
    files.push(("run.sh".into(), run_script(ext, custom).into_bytes()));

    // Leftovers from an earlier export would otherwise mix in.
    for stale in ["seeds", "plugin"] {
        let d = out_dir.join(stale);
        if d.exists() {
            fs::remove_dir_all(&d)?;
        }
    }
    for (rel, bytes) in &files {
        let path = out_dir.join(rel);
        fs::create_dir_all(path.parent().unwrap_or(out_dir))?;
        fs::write(&path, bytes)?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(out_dir.join("run.sh"), fs::Permissions::from_mode(0o755))?;
    }
    let mut names: Vec<PathBuf> = files.into_iter().map(|(p, _)| p).collect();
    names.sort();
    Ok(names)
}
