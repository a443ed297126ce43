//! Language-model providers and conversations.
//!
//! No vendor API is built in. [`OfflineProvider`] replays fixture responses
//! keyed by prompt substrings; [`SubprocessProvider`] hands each request to
//! an external command as JSON on stdin and reads `{"content": ...}` back.

pub mod templates;

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("bad provider spec {0:?}; expected offline:<dir> or subprocess:<cmd>")]
    BadSpec(String),
    #[error("no fixture entry matches the conversation")]
    NoFixture,
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("provider command failed: {0}")]
    Command(String),
    #[error("scripted provider has no responses left")]
    Exhausted,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.8,
            max_tokens: 4096,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn send(&self, messages: &[Message], params: &GenerationParams) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureEntry {
    /// Every substring must occur in the keying user message.
    #[serde(rename = "match")]
    patterns: Vec<String>,
    responses: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct FixtureIndex {
    entries: Vec<FixtureEntry>,
}

/// Replays canned responses from `<dir>/index.json`.
///
/// The keying message is the latest user message matched by some entry;
/// later unmatched user messages (repair requests) do not re-key. The
/// response index is the number of assistant turns after the keying message,
/// and the last response repeats once the list runs out. A response of the
/// form `@file:<name>` is read from `<dir>/<name>`.
pub struct OfflineProvider {
    dir: PathBuf,
    entries: Vec<FixtureEntry>,
}

impl OfflineProvider {
    pub fn load(dir: &Path) -> Result<Self, ProviderError> {
        let path = dir.join("index.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| ProviderError::Fixture(format!("{}: {e}", path.display())))?;
        let index: FixtureIndex = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Fixture(format!("{}: {e}", path.display())))?;
        Ok(OfflineProvider {
            dir: dir.to_path_buf(),
            entries: index.entries,
        })
    }
}

impl LlmProvider for OfflineProvider {
    fn send(&self, messages: &[Message], _params: &GenerationParams) -> Result<String, ProviderError> {
        for (pos, m) in messages.iter().enumerate().rev() {
            if m.role != Role::User {
                continue;
            }
            let Some(entry) = self
                .entries
                .iter()
                .find(|e| e.patterns.iter().all(|p| m.content.contains(p.as_str())))
            else {
                continue;
            };
            let turn = messages[pos + 1..]
                .iter()
                .filter(|m| m.role == Role::Assistant)
                .count();
            let raw = entry
                .responses
                .get(turn)
                .or(entry.responses.last())
                .ok_or_else(|| ProviderError::Fixture("entry has no responses".into()))?;
            return match raw.strip_prefix("@file:") {
                Some(name) => fs::read_to_string(self.dir.join(name))
                    .map_err(|e| ProviderError::Fixture(format!("{name}: {e}"))),
                None => Ok(raw.clone()),
            };
        }
        Err(ProviderError::NoFixture)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    messages: &'a [Message],
    params: &'a GenerationParams,
}

#[derive(Deserialize)]
struct WireResponse {
    content: String,
}

/// Runs a command per request: request JSON on stdin, `{"content"}` on stdout.
pub struct SubprocessProvider {
    argv: Vec<String>,
}

impl SubprocessProvider {
    pub fn new(command: &str) -> Result<Self, ProviderError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| ProviderError::BadSpec(format!("subprocess:{command}")))?;
        Ok(SubprocessProvider { argv })
    }
}

impl LlmProvider for SubprocessProvider {
    fn send(&self, messages: &[Message], params: &GenerationParams) -> Result<String, ProviderError> {
        let request = serde_json::to_vec(&WireRequest { messages, params })
            .map_err(|e| ProviderError::Command(e.to_string()))?;
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ProviderError::Command(format!("{}: {e}", self.argv[0])))?;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let writer = std::thread::spawn(move || stdin.write_all(&request));
        let out = child.wait_with_output()?;
        let _ = writer.join();
        if !out.status.success() {
            return Err(ProviderError::Command(format!(
                "exit {:?}: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            )));
        }
        let resp: WireResponse = serde_json::from_slice(&out.stdout)
            .map_err(|e| ProviderError::Command(format!("bad response JSON: {e}")))?;
        Ok(resp.content)
    }
}

/// Returns queued responses in order, ignoring the prompt.
#[derive(Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<String>>,
    calls: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        ScriptedProvider {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl LlmProvider for ScriptedProvider {
    fn send(&self, _messages: &[Message], _params: &GenerationParams) -> Result<String, ProviderError> {
        *self.calls.lock().unwrap() += 1;
        self.queue.lock().unwrap().pop_front().ok_or(ProviderError::Exhausted)
    }
}

/// Parses `offline:<dir>` or `subprocess:<cmd>`.
pub fn provider_from_spec(spec: &str) -> Result<Box<dyn LlmProvider>, ProviderError> {
    if let Some(dir) = spec.strip_prefix("offline:") {
        Ok(Box::new(OfflineProvider::load(Path::new(dir))?))
    } else if let Some(cmd) = spec.strip_prefix("subprocess:") {
        Ok(Box::new(SubprocessProvider::new(cmd)?))
    } else {
        Err(ProviderError::BadSpec(spec.to_string()))
    }
}

/// A growing message list whose turns are mirrored to
/// `prompt_N.txt` / `response_N.txt` when a transcript dir is set.
pub struct Conversation {
    pub messages: Vec<Message>,
    transcript_dir: Option<PathBuf>,
    turn: usize,
}

impl Conversation {
    pub fn new(transcript_dir: Option<PathBuf>) -> Self {
        Conversation {
            messages: Vec::new(),
            transcript_dir,
            turn: 0,
        }
    }

    pub fn ask(
        &mut self,
        provider: &dyn LlmProvider,
        params: &GenerationParams,
        prompt: String,
    ) -> Result<String, ProviderError> {
        self.turn += 1;
        if let Some(dir) = &self.transcript_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("prompt_{}.txt", self.turn)), &prompt)?;
        }
        self.messages.push(Message {
            role: Role::User,
            content: prompt,
        });
        let reply = provider.send(&self.messages, params)?;
        if let Some(dir) = &self.transcript_dir {
            fs::write(dir.join(format!("response_{}.txt", self.turn)), &reply)?;
        }
        self.messages.push(Message {
            role: Role::Assistant,
            content: reply.clone(),
        });
        Ok(reply)
    }

    pub fn turns(&self) -> usize {
        self.turn
    }
}

/// Contents of every fenced block whose info string is exactly `tag`.
pub fn fenced_blocks<'a>(text: &'a str, tag: &str) -> Vec<&'a str> {
    tagged_blocks(text)
        .into_iter()
        .filter(|(t, _)| *t == tag)
        .map(|(_, body)| body)
        .collect()
}

/// All fenced blocks as `(info string, body)`.
pub fn tagged_blocks(text: &str) -> Vec<(&str, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut open: Option<(&str, usize)> = None;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("```") {
            match open {
                None => open = Some((rest.trim(), offset + line.len())),
                Some((tag, start)) if rest.trim().is_empty() => {
                    out.push((tag, &text[start..offset]));
                    open = None;
                }
                Some(_) => {}
            }
        }
        offset += line.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(s: &str) -> Message {
        Message {
            role: Role::User,
            content: s.into(),
        }
    }

    fn assistant(s: &str) -> Message {
        Message {
            role: Role::Assistant,
            content: s.into(),
        }
    }

    fn offline(index: &str) -> (tempfile::TempDir, OfflineProvider) {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("index.json"), index).unwrap();
        fs::write(dir.path().join("big.txt"), "from file").unwrap();
        let p = OfflineProvider::load(dir.path()).unwrap();
        (dir, p)
    }

    #[test]
    fn offline_keys_on_latest_matching_user_message() {
        let (_d, p) = offline(
            r#"{"entries":[
                {"match":["alpha"],"responses":["a1","a2"]},
                {"match":["beta","x"],"responses":["@file:big.txt"]}
            ]}"#,
        );
        let params = GenerationParams::default();
        assert_eq!(p.send(&[user("alpha")], &params).unwrap(), "a1");
        // A repair message does not match; the turn count advances.
        let convo = [user("alpha"), assistant("a1"), user("fix it")];
        assert_eq!(p.send(&convo, &params).unwrap(), "a2");
        let convo = [user("alpha"), assistant("a1"), user("fix"), assistant("a2"), user("again")];
        assert_eq!(p.send(&convo, &params).unwrap(), "a2");
        let convo = [user("alpha"), assistant("a1"), user("beta x")];
        assert_eq!(p.send(&convo, &params).unwrap(), "from file");
        assert!(matches!(p.send(&[user("beta")], &params), Err(ProviderError::NoFixture)));
    }

    #[test]
    fn conversation_writes_transcripts() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c/s1");
        let provider = ScriptedProvider::new(["r1", "r2"]);
        let mut c = Conversation::new(Some(t.clone()));
        let params = GenerationParams::default();
        assert_eq!(c.ask(&provider, &params, "p1".into()).unwrap(), "r1");
        assert_eq!(c.ask(&provider, &params, "p2".into()).unwrap(), "r2");
        assert_eq!(fs::read_to_string(t.join("prompt_2.txt")).unwrap(), "p2");
        assert_eq!(fs::read_to_string(t.join("response_1.txt")).unwrap(), "r1");
        assert_eq!(c.messages.len(), 4);
        assert!(matches!(
            c.ask(&provider, &params, "p3".into()),
            Err(ProviderError::Exhausted)
        ));
    }

    #[test]
    fn subprocess_provider_speaks_json() {
        let script = r#"python3 -c 'import json,sys; r=json.load(sys.stdin); print(json.dumps({"content": r["messages"][-1]["content"].upper() + str(r["params"]["max_tokens"])}))'"#;
        let p = provider_from_spec(&format!("subprocess:{script}")).unwrap();
        let out = p.send(&[user("hi")], &GenerationParams::default()).unwrap();
        assert_eq!(out, "HI4096");
        let bad = provider_from_spec("subprocess:false").unwrap();
        assert!(matches!(bad.send(&[user("hi")], &GenerationParams::default()), Err(ProviderError::Command(_))));
        assert!(matches!(provider_from_spec("vendor:x"), Err(ProviderError::BadSpec(_))));
    }

    #[test]
    fn fenced_blocks_by_tag() {
        let text = "intro\n```checker:inv_1\nA\n```\nprose\n```instrumented\nB\nC\n```\n```\nplain\n```\n";
        assert_eq!(fenced_blocks(text, "instrumented"), vec!["B\nC\n"]);
        assert_eq!(fenced_blocks(text, "checker:inv_1"), vec!["A\n"]);
        assert_eq!(tagged_blocks(text).len(), 3);
    }
}
