use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wedge::harness::meter::MeterKind;
use wedge::pipeline::{self, parse_budget, Config, PipelineError, Run};

#[derive(Parser)]
#[command(name = "wedge", version, about = "Generate performance-stressing tests for competitive-programming solutions")]
struct Cli {
    /// TOML config; its values override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: WEDGE_JOBS, else one per CPU).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Redo a completed stage and invalidate the stages after it.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Meter {
    Hardware,
    Trace,
}

#[derive(Subcommand)]
enum Command {
    /// Load and filter a corpus into a new run directory.
    Ingest {
        root: PathBuf,
        #[arg(long, default_value = "wedge-run")]
        run: PathBuf,
        #[arg(long, value_enum)]
        meter: Option<Meter>,
    },
    /// Select solutions, mine their contrastive pairs and line-profile them.
    Profile { run: PathBuf },
    /// Write hit-count reports for the mined pairs.
    MinePairs { run: PathBuf },
    /// Reason invariants and build instrumented programs.
    Constraints {
        run: PathBuf,
        /// `offline:<dir>` or `subprocess:<cmd>`.
        #[arg(long)]
        provider: Option<String>,
    },
    /// Synthesize constraint-aware mutators.
    Mutators {
        run: PathBuf,
        #[arg(long)]
        provider: Option<String>,
    },
    /// Run fuzzing campaigns.
    Fuzz {
        run: PathBuf,
        /// Duration (`90s`, `5m`, `1h`) or exec count (`2000execs`).
        #[arg(long)]
        budget: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fuzz the original program instead of the instrumented one.
        #[arg(long)]
        no_instr: bool,
        /// Use the builtin mutator instead of the synthesized one.
        #[arg(long)]
        default_mutator: bool,
    },
    /// Validate, cross-check and deduplicate campaign outputs.
    Filter {
        run: PathBuf,
        #[arg(long)]
        provider: Option<String>,
        /// Skip validator synthesis.
        #[arg(long)]
        no_validator: bool,
    },
    /// Rank the kept inputs into a benchmark directory.
    Assemble {
        run: PathBuf,
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Compare this run's benchmark with others.
    Evaluate {
        run: PathBuf,
        #[arg(long, num_args = 0..)]
        against: Vec<PathBuf>,
    },
    /// Write AFL++ bundles for the instrumented solutions.
    ExportAflpp { run: PathBuf, out: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Profile { .. } => "profile",
            Command::MinePairs { .. } => "mine-pairs",
            Command::Constraints { .. } => "constraints",
            Command::Mutators { .. } => "mutators",
            Command::Fuzz { .. } => "fuzz",
            Command::Filter { .. } => "filter",
            Command::Assemble { .. } => "assemble",
            Command::Evaluate { .. } => "evaluate",
            Command::ExportAflpp { .. } => "export-aflpp",
        }
    }
}

fn jobs_from_env() -> Result<Option<usize>, PipelineError> {
    match std::env::var("WEDGE_JOBS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| PipelineError::Usage(format!("WEDGE_JOBS={v} is not a count"))),
        _ => Ok(None),
    }
}

/// Applies flags over `cfg`, then the config file over that.
fn layer(
    mut cfg: Config,
    cli_config: Option<&Path>,
    jobs: Option<usize>,
    flags: impl FnOnce(&mut Config) -> Result<(), PipelineError>,
) -> Result<Config, PipelineError> {
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    flags(&mut cfg)?;
    if let Some(path) = cli_config {
        cfg = cfg.overlay_file(path).map_err(PipelineError::Usage)?;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<String, PipelineError> {
    let jobs = match cli.jobs {
        Some(j) => Some(j),
        None => jobs_from_env()?,
    };
    let conf = cli.config.as_deref();
    let open = |run: &Path, flags: &dyn Fn(&mut Config) -> Result<(), PipelineError>| {
        Run::open_with(run, |cfg| layer(cfg, conf, jobs, flags))
    };
    let none = |_: &mut Config| Ok(());
    let force = cli.force;
    match &cli.command {
        Command::Ingest { root, run, meter } => {
            let cfg = layer(Config::default(), conf, jobs, |c| {
                if let Some(m) = meter {
                    c.harness.meter = match m {
                        Meter::Hardware => MeterKind::HardwareCounter,
                        Meter::Trace => MeterKind::TraceCounter,
                    };
                }
                Ok(())
            })?;
            let mut r = match Run::open(run) {
                Ok(existing) if !force => existing,
                _ => Run::create(run, root, cfg)?,
            };
            pipeline::ingest(&mut r, force)
        }
        Command::Profile { run } => pipeline::profile(&mut open(run, &none)?, force),
        Command::MinePairs { run } => pipeline::mine_pairs(&mut open(run, &none)?, force),
        Command::Constraints { run, provider } | Command::Mutators { run, provider } => {
            let mut r = open(run, &|c| {
                if provider.is_some() {
                    c.llm.provider = provider.clone();
                }
                Ok(())
            })?;
            if matches!(cli.command, Command::Constraints { .. }) {
                pipeline::constraints(&mut r, force)
            } else {
                pipeline::mutators(&mut r, force)
            }
        }
        Command::Fuzz {
            run,
            budget,
            seed,
            no_instr,
            default_mutator,
        } => {
            let mut r = open(run, &|c| {
                if let Some(b) = budget {
                    parse_budget(b).map_err(PipelineError::Usage)?;
                    c.fuzz.budget = b.clone();
                }
                if let Some(s) = seed {
                    c.fuzz.seed = *s;
                }
                c.fuzz.no_instr = *no_instr;
                c.fuzz.default_mutator = *default_mutator;
                Ok(())
            })?;
            pipeline::fuzz(&mut r, force)
        }
        Command::Filter {
            run,
            provider,
            no_validator,
        } => {
            let mut r = open(run, &|c| {
                if provider.is_some() {
                    c.llm.provider = provider.clone();
                }
                if *no_validator {
                    c.validator.enabled = false;
                }
                Ok(())
            })?;
            pipeline::filter(&mut r, force)
        }
        Command::Assemble { run, k } => {
            let mut r = open(run, &|c| {
                if let Some(k) = k {
                    c.assemble.k = *k;
                }
                Ok(())
            })?;
            pipeline::assemble(&mut r, force)
        }
        Command::Evaluate { run, against } => pipeline::evaluate(&mut open(run, &none)?, against, force),
        Command::ExportAflpp { run, out } => pipeline::export(&open(run, &none)?, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.name();
    match dispatch(cli) {
        Ok(msg) => {
            println!("{stage}: {}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let message = match &e {
                PipelineError::Usage(m)
                | PipelineError::Precondition(m)
                | PipelineError::Provider(m)
                | PipelineError::Build(m) => m.clone(),
                PipelineError::Io(io) => io.to_string(),
            };
            let err = serde_json::json!({ "error": { "stage": stage, "kind": e.kind(), "message": message } });
            eprintln!("{err}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
