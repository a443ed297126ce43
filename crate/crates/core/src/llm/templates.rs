//! Prompt templates with `{{slot}}` placeholders.
//!
//! Defaults are compiled in; any file of the same name in an override
//! directory replaces the default, so templates and few-shot examples can
//! be edited without rebuilding.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template slot {{{{{0}}}}} has no value")]
    MissingSlot(String),
    #[error("unterminated slot at byte {0}")]
    Unterminated(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub reasoning: String,
    pub checker: String,
    pub mutator: String,
    pub mutator_constraints: String,
    pub validator: String,
    pub format_reasoning: String,
    pub format_checker: String,
    pub format_mutator: String,
    pub format_validator: String,
    pub example_mutator: String,
    pub invariant_examples: String,
    pub checker_examples: String,
}

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!("../../assets/prompts/", $name))
    };
}

const FILES: [&str; 12] = [
    "reasoning.txt",
    "checker.txt",
    "mutator.txt",
    "mutator_constraints.txt",
    "validator.txt",
    "format_reasoning.txt",
    "format_checker.txt",
    "format_mutator.txt",
    "format_validator.txt",
    "example_mutator.py",
    "examples/invariants.txt",
    "examples/checkers.txt",
];

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            reasoning: asset!("reasoning.txt").into(),
            checker: asset!("checker.txt").into(),
            mutator: asset!("mutator.txt").into(),
            mutator_constraints: asset!("mutator_constraints.txt").into(),
            validator: asset!("validator.txt").into(),
            format_reasoning: asset!("format_reasoning.txt").into(),
            format_checker: asset!("format_checker.txt").into(),
            format_mutator: asset!("format_mutator.txt").into(),
            format_validator: asset!("format_validator.txt").into(),
            example_mutator: asset!("example_mutator.py").into(),
            invariant_examples: asset!("examples/invariants.txt").into(),
            checker_examples: asset!("examples/checkers.txt").into(),
        }
    }
}

impl PromptTemplates {
    fn slot_mut(&mut self, file: &str) -> &mut String {
        match file {
            "reasoning.txt" => &mut self.reasoning,
            "checker.txt" => &mut self.checker,
            "mutator.txt" => &mut self.mutator,
            "mutator_constraints.txt" => &mut self.mutator_constraints,
            "validator.txt" => &mut self.validator,
            "format_reasoning.txt" => &mut self.format_reasoning,
            "format_checker.txt" => &mut self.format_checker,
            "format_mutator.txt" => &mut self.format_mutator,
            "format_validator.txt" => &mut self.format_validator,
            "example_mutator.py" => &mut self.example_mutator,
            "examples/invariants.txt" => &mut self.invariant_examples,
            "examples/checkers.txt" => &mut self.checker_examples,
            _ => unreachable!("unknown template file {file}"),
        }
    }

    /// Defaults overlaid with whichever template files exist under `dir`.
    pub fn with_overrides(dir: &Path) -> io::Result<Self> {
        let mut t = PromptTemplates::default();
        for file in FILES {
            let path = dir.join(file);
            if path.is_file() {
                *t.slot_mut(file) = fs::read_to_string(&path)?;
            }
        }
        Ok(t)
    }

    /// Writes every template into `dir` for editing.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        let mut t = self.clone();
        for file in FILES {
            let path = dir.join(file);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, t.slot_mut(file).as_str())?;
        }
        Ok(())
    }
}

/// Substitutes `{{name}}` slots in one pass; inserted values are never
/// rescanned, so source code containing braces is safe.
pub fn render(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut consumed = 0;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or(TemplateError::Unterminated(consumed + start))?;
        let name = &after[..end];
        let value = vars
            .get(name)
            .ok_or_else(|| TemplateError::MissingSlot(name.to_string()))?;
        out.push_str(value);
        let advance = start + 2 + end + 2;
        consumed += advance;
        rest = &rest[advance..];
    }
    out.push_str(rest);
    Ok(out)
}
