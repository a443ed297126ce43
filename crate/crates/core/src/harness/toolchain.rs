//! Per-language build and run command templates.
//!
//! Templates are plain strings with `{src}`, `{out}`, `{entry}`, `{dir}`,
//! `{cov_rt}` and `{tracer}` placeholders. Build templates run through
//! `sh -c` with shell-quoted substitutions; run templates are split into an
//! argv first and substituted per token.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    NativeBinary,
    Script,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineProfiler {
    Gcov,
    Pytrace,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageChannel {
    /// `-fsanitize-coverage=trace-pc` runtime writing `<slot> <count>` lines.
    EdgeFile,
    /// The line tracer doubles as coverage.
    Pytrace,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageToolchain {
    pub extension: String,
    pub kind: ArtifactKind,
    /// Plain build. For scripts this is a syntax check.
    pub build: Option<String>,
    pub build_profile: Option<String>,
    pub build_coverage: Option<String>,
    pub run: String,
    pub run_profile: Option<String>,
    pub run_coverage: Option<String>,
    pub line_profiler: LineProfiler,
    pub coverage: CoverageChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Toolchains {
    pub languages: BTreeMap<String, LanguageToolchain>,
}

impl Default for Toolchains {
    fn default() -> Self {
        let cxx = |compiler: &str, std: &str| LanguageToolchain {
            extension: if compiler == "gcc" { "c".into() } else { "cpp".into() },
            kind: ArtifactKind::NativeBinary,
            build: Some(format!("{compiler} -O2 -std={std} -o {{out}} {{src}} -lm")),
            build_profile: Some(format!(
                "{compiler} -O0 -std={std} --coverage -c {{src}} -o {{dir}}/main.o && \
                 {compiler} --coverage {{dir}}/main.o -o {{out}} -lm"
            )),
            build_coverage: Some(format!(
                "g++ -O1 -c -x c++ {{cov_rt}} -o {{dir}}/wedge_cov_rt.o && \
                 {compiler} -O1 -std={std} -fsanitize-coverage=trace-pc -c {{src}} -o {{dir}}/main.o && \
                 g++ {{dir}}/main.o {{dir}}/wedge_cov_rt.o -o {{out}} -lm"
            )),
            run: "{entry}".into(),
            run_profile: None,
            run_coverage: None,
            line_profiler: LineProfiler::Gcov,
            coverage: CoverageChannel::EdgeFile,
        };
        let python = LanguageToolchain {
            extension: "py".into(),
            kind: ArtifactKind::Script,
            build: Some("python3 -m py_compile {src}".into()),
            build_profile: None,
            build_coverage: None,
            run: "python3 {entry}".into(),
            run_profile: Some("python3 {tracer} {entry}".into()),
            run_coverage: Some("python3 {tracer} {entry}".into()),
            line_profiler: LineProfiler::Pytrace,
            coverage: CoverageChannel::Pytrace,
        };
        let mut languages = BTreeMap::new();
        languages.insert("cpp".into(), cxx("g++", "c++17"));
        languages.insert("c".into(), cxx("gcc", "c11"));
        languages.insert("python".into(), python);
        Toolchains { languages }
    }
}

impl Toolchains {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn get(&self, language: &str) -> Option<&LanguageToolchain> {
        let key = match language {
            "c++" => "cpp",
            "python3" | "py" => "python",
            other => other,
        };
        self.languages.get(key)
    }
}

pub(crate) struct Placeholders<'a> {
    pub src: &'a Path,
    pub out: &'a Path,
    pub dir: &'a Path,
    pub cov_rt: &'a Path,
    pub tracer: &'a Path,
}

impl Placeholders<'_> {
    fn pairs(&self) -> [(&'static str, String); 6] {
        let s = |p: &Path| p.to_string_lossy().into_owned();
        [
            ("{src}", s(self.src)),
            ("{out}", s(self.out)),
            ("{entry}", s(self.out)),
            ("{dir}", s(self.dir)),
            ("{cov_rt}", s(self.cov_rt)),
            ("{tracer}", s(self.tracer)),
        ]
    }

    /// Substitutes shell-quoted values into a build command.
    pub fn shell(&self, template: &str) -> String {
        let mut cmd = template.to_string();
        for (key, value) in self.pairs() {
            let quoted = shlex::try_quote(&value)
                .map(|q| q.into_owned())
                .unwrap_or(value);
            cmd = cmd.replace(key, &quoted);
        }
        cmd
    }

    /// Splits a run template into argv, substituting per token.
    pub fn argv(&self, template: &str) -> Option<Vec<String>> {
        let tokens = shlex::split(template)?;
        let pairs = self.pairs();
        Some(
            tokens
                .into_iter()
                .map(|mut t| {
                    for (key, value) in &pairs {
                        t = t.replace(key, value);
                    }
                    t
                })
                .collect(),
        )
    }
}
