//! A mutator plugin running as a child process.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::protocol::{encode_request, encode_shutdown, read_frame, MutationRequest, TAG_RESPONSE};
use super::MutationError;

pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(5);
const STDERR_TAIL: usize = 16 * 1024;

pub struct PluginProcess {
    argv: Vec<String>,
    child: Child,
    stdin: ChildStdin,
    frames: Receiver<std::io::Result<Option<Vec<u8>>>>,
    stderr: Arc<Mutex<Vec<u8>>>,
    timeout: Duration,
}

impl PluginProcess {
    /// Launches the Python host shim on `plugin`.
    pub fn spawn_python(host: &Path, plugin: &Path) -> Result<Self, MutationError> {
        Self::spawn(vec![
            "python3".into(),
            host.to_string_lossy().into_owned(),
            plugin.to_string_lossy().into_owned(),
        ])
    }

    pub fn spawn(argv: Vec<String>) -> Result<Self, MutationError> {
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONHASHSEED", "0")
            .spawn()
            .map_err(|e| MutationError::Crashed(format!("spawn {}: {e}", argv[0])))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut err_pipe = child.stderr.take().expect("stderr piped");

        let (tx, frames) = mpsc::channel();
        thread::spawn(move || {
            let mut r = BufReader::new(stdout);
            loop {
                let f = read_frame(&mut r);
                let done = !matches!(f, Ok(Some(_)));
                if tx.send(f).is_err() || done {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            loop {
                match std::io::Read::read(&mut err_pipe, &mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        let mut s = sink.lock().unwrap();
                        s.extend_from_slice(&buf[..n]);
                        if s.len() > STDERR_TAIL {
                            let cut = s.len() - STDERR_TAIL;
                            s.drain(..cut);
                        }
                    }
                }
            }
        });
        Ok(PluginProcess {
            argv,
            child,
            stdin,
            frames,
            stderr,
            timeout: REQUEST_TIMEOUT,
        })
    }

    pub fn argv(&self) -> &[String] {
        &self.argv
    }

    fn stderr_text(&self) -> String {
        // Give the drain thread a moment to collect a dying traceback.
        thread::sleep(Duration::from_millis(50));
        String::from_utf8_lossy(&self.stderr.lock().unwrap()).into_owned()
    }

    fn crash(&mut self, why: &str) -> MutationError {
        let _ = self.child.kill();
        let _ = self.child.wait();
        let tail = self.stderr_text();
        MutationError::Crashed(if tail.trim().is_empty() {
            why.to_string()
        } else {
            format!("{why}\n{tail}")
        })
    }

    pub fn mutate(&mut self, req: &MutationRequest) -> Result<Vec<u8>, MutationError> {
        if self.stdin.write_all(&encode_request(req)).and_then(|_| self.stdin.flush()).is_err() {
            return Err(self.crash("plugin closed its input"));
        }
        match self.frames.recv_timeout(self.timeout) {
            Ok(Ok(Some(body))) => {
                if body.first() != Some(&TAG_RESPONSE) {
                    let _ = self.child.kill();
                    return Err(MutationError::Protocol(format!(
                        "unexpected response tag {:?}",
                        body.first()
                    )));
                }
                let out = body[1..].to_vec();
                if out.len() > req.max_size as usize {
                    let _ = self.child.kill();
                    return Err(MutationError::Protocol(format!(
                        "output of {} bytes exceeds max_size {}",
                        out.len(),
                        req.max_size
                    )));
                }
                Ok(out)
            }
            Ok(Ok(None)) | Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => {
                Err(self.crash("plugin exited"))
            }
            Err(RecvTimeoutError::Timeout) => Err(self.crash(&format!(
                "plugin did not respond within {:?}",
                self.timeout
            ))),
        }
    }

    pub fn shutdown(mut self) {
        let _ = self.stdin.write_all(&encode_shutdown());
        let _ = self.stdin.flush();
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for PluginProcess {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Where the host shim lives once materialized.
pub fn host_path(dir: &Path) -> PathBuf {
    dir.join("wedge_mutator_host.py")
}
