//! Run configuration. Values come from defaults, then command-line flags,
//! then a TOML config file, each layer overriding the one before.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{FilterCriteria, DEFAULT_AGREEMENT_FRACTION, DEFAULT_MAX_INPUT_BYTES};
use crate::filtercheck::{DEFAULT_COST_RUNS, DEFAULT_TOP_K, DEFAULT_VALIDATOR_ROUNDS};
use crate::fuzzer::{Budget, DEFAULT_MAX_SAVED, MAX_SOLUTIONS_PER_PROBLEM};
use crate::harness::meter::MeterKind;
use crate::harness::ExecutionLimits;
use crate::llm::GenerationParams;
use crate::mutation::DEFAULT_MAX_ROUNDS;
use crate::pairminer::{DEFAULT_MIN_COST_RATIO, DEFAULT_PREVIEW_BYTES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Worker threads; 0 means one per CPU.
    pub jobs: usize,
    pub corpus: CorpusConfig,
    pub filter: FilterConfig,
    pub harness: HarnessConfig,
    pub pairs: PairsConfig,
    pub llm: LlmConfig,
    pub mutation: MutationConfig,
    pub fuzz: FuzzConfig,
    pub validator: ValidatorConfig,
    pub assemble: AssembleConfig,
    pub evaluate: EvaluateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub max_input_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_instructions: u64,
    pub min_solutions: usize,
    pub min_tests: usize,
    pub require_single_output: bool,
    pub top_n_by_cv: usize,
    pub agreement_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub meter: MeterKind,
    pub perf_event: String,
    pub cost_runs: usize,
    pub wall_timeout_secs: f64,
    pub memory_cap_bytes: u64,
    /// TOML file replacing the built-in toolchain table.
    pub toolchains: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairsConfig {
    pub min_cost_ratio: f64,
    pub preview_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// `offline:<dir>` or `subprocess:<cmd>`.
    pub provider: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Directory of template overrides.
    pub templates_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MutationConfig {
    pub max_rounds: usize,
    pub dry_run_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzConfig {
    /// A duration (`90s`, `5m`, `1h`) or an exec count (`2000execs`).
    pub budget: String,
    pub seed: u64,
    pub max_saved: usize,
    pub max_solutions_per_problem: usize,
    /// Include bucketed coverage in feedback signatures.
    pub coverage: bool,
    /// Fuzz the original program instead of the instrumented one.
    pub no_instr: bool,
    /// Use the builtin mutator instead of the synthesized one.
    pub default_mutator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorConfig {
    pub max_rounds: usize,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssembleConfig {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub bucket_width_pct: u64,
    pub size_thresholds: Vec<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            jobs: 0,
            corpus: CorpusConfig::default(),
            filter: FilterConfig::default(),
            harness: HarnessConfig::default(),
            pairs: PairsConfig::default(),
            llm: LlmConfig::default(),
            mutation: MutationConfig::default(),
            fuzz: FuzzConfig::default(),
            validator: ValidatorConfig::default(),
            assemble: AssembleConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            max_input_bytes: DEFAULT_MAX_INPUT_BYTES,
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        let c = FilterCriteria::default();
        FilterConfig {
            min_instructions: c.min_instructions,
            min_solutions: c.min_solutions,
            min_tests: c.min_tests,
            require_single_output: c.require_single_output,
            top_n_by_cv: c.top_n_by_cv,
            agreement_fraction: DEFAULT_AGREEMENT_FRACTION,
        }
    }
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let l = ExecutionLimits::default();
        HarnessConfig {
            meter: MeterKind::HardwareCounter,
            perf_event: "instructions:u".into(),
            cost_runs: DEFAULT_COST_RUNS,
            wall_timeout_secs: l.wall_timeout.as_secs_f64(),
            memory_cap_bytes: l.memory_cap,
            toolchains: None,
        }
    }
}

impl Default for PairsConfig {
    fn default() -> Self {
        PairsConfig {
            min_cost_ratio: DEFAULT_MIN_COST_RATIO,
            preview_bytes: DEFAULT_PREVIEW_BYTES,
        }
    }
}

impl Default for LlmConfig {
    fn default() -> Self {
        let p = GenerationParams::default();
        LlmConfig {
            provider: None,
            temperature: p.temperature,
            max_tokens: p.max_tokens,
            templates_dir: None,
        }
    }
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            max_rounds: DEFAULT_MAX_ROUNDS,
            dry_run_secs: crate::mutation::DEFAULT_DRY_RUN.as_secs_f64(),
        }
    }
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            budget: "1h".into(),
            seed: 0,
            max_saved: DEFAULT_MAX_SAVED,
            max_solutions_per_problem: MAX_SOLUTIONS_PER_PROBLEM,
            coverage: true,
            no_instr: false,
            default_mutator: false,
        }
    }
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        ValidatorConfig {
            max_rounds: DEFAULT_VALIDATOR_ROUNDS,
            enabled: true,
        }
    }
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig { k: DEFAULT_TOP_K }
    }
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            bucket_width_pct: 10,
            size_thresholds: crate::stats::DEFAULT_SIZE_THRESHOLDS.to_vec(),
        }
    }
}

impl Config {
    pub fn criteria(&self) -> FilterCriteria {
        FilterCriteria {
            min_instructions: self.filter.min_instructions,
            min_solutions: self.filter.min_solutions,
            min_tests: self.filter.min_tests,
            require_single_output: self.filter.require_single_output,
            top_n_by_cv: self.filter.top_n_by_cv,
        }
    }

    pub fn limits(&self) -> ExecutionLimits {
        ExecutionLimits {
            wall_timeout: Duration::from_secs_f64(self.harness.wall_timeout_secs),
            memory_cap: self.harness.memory_cap_bytes,
            max_input_bytes: self.corpus.max_input_bytes,
        }
    }

    pub fn params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.llm.temperature,
            max_tokens: self.llm.max_tokens,
        }
    }

    pub fn jobs(&self) -> usize {
        if self.jobs > 0 {
            self.jobs
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Overlays a TOML file. Relative paths in it resolve against the
    /// file's directory.
    pub fn overlay_file(&self, path: &Path) -> Result<Config, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let file: toml::Table = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut merged = toml::Table::try_from(self).map_err(|e| e.to_string())?;
        merge(&mut merged, file);
        let mut cfg: Config = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| format!("{}: {e}", path.display()))?;
        cfg.resolve_relative(base, self);
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path, before: &Config) {
        let fix = |p: &mut Option<PathBuf>, old: &Option<PathBuf>| {
            if *p != *old {
                if let Some(path) = p {
                    if path.is_relative() {
                        *path = base.join(&*path);
                    }
                }
            }
        };
        fix(&mut self.harness.toolchains, &before.harness.toolchains);
        fix(&mut self.llm.templates_dir, &before.llm.templates_dir);
        if self.llm.provider != before.llm.provider {
            if let Some(spec) = &self.llm.provider {
                if let Some(dir) = spec.strip_prefix("offline:") {
                    if Path::new(dir).is_relative() {
                        self.llm.provider = Some(format!("offline:{}", base.join(dir).display()));
                    }
                }
            }
        }
    }
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// `90s`, `250ms`, `5m`, `1h`, a bare number of seconds, or `N` followed
/// by `execs`/`x`.
pub fn parse_budget(text: &str) -> Result<Budget, String> {
    let t = text.trim();
    let split = t.find(|c: char| !c.is_ascii_digit() && c != '.').unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let bad = || format!("bad budget {text:?}; expected e.g. 90s, 5m, 1h or 2000execs");
    if num.is_empty() {
        return Err(bad());
    }
    match unit.trim() {
        "execs" | "exec" | "x" => num.parse::<u64>().map(Budget::execs).map_err(|_| bad()),
        unit => {
            let n: f64 = num.parse().map_err(|_| bad())?;
            let secs = match unit {
                "" | "s" => n,
                "ms" => n / 1000.0,
                "m" | "min" => n * 60.0,
                "h" => n * 3600.0,
                _ => return Err(bad()),
            };
            Ok(Budget::wall(Duration::from_secs_f64(secs)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budgets_parse() {
        assert_eq!(parse_budget("2000execs").unwrap(), Budget::execs(2000));
        assert_eq!(parse_budget("0x").unwrap(), Budget::execs(0));
        assert_eq!(parse_budget("1h").unwrap(), Budget::wall(Duration::from_secs(3600)));
        assert_eq!(parse_budget("250ms").unwrap(), Budget::wall(Duration::from_millis(250)));
        assert_eq!(parse_budget("30").unwrap(), Budget::wall(Duration::from_secs(30)));
        assert!(parse_budget("soon").is_err());
        assert!(parse_budget("5 fortnights").is_err());
    }

    #[test]
    fn file_overrides_flags_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wedge.toml");
        std::fs::write(
            &path,
            "[fuzz]\nseed = 7\n[llm]\nprovider = \"offline:fixtures\"\n[filter]\nmin_solutions = 3\n",
        )
        .unwrap();
        let mut flags = Config::default();
        flags.fuzz.seed = 99;
        flags.fuzz.budget = "10s".into();
        let cfg = flags.overlay_file(&path).unwrap();
        assert_eq!(cfg.fuzz.seed, 7);
        assert_eq!(cfg.fuzz.budget, "10s");
        assert_eq!(cfg.filter.min_solutions, 3);
        assert_eq!(cfg.filter.min_tests, 5);
        assert_eq!(
            cfg.llm.provider.unwrap(),
            format!("offline:{}", dir.path().join("fixtures").display())
        );
    }
}
