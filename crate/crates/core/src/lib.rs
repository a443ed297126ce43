//! Performance-stressing test generation.
//!
//! The pipeline mines contrastive (slow, fast) executions of a solution,
//! asks a language-model provider to turn them into performance-characterizing
//! checkers, fuzzes the instrumented program with a constraint-aware mutator,
//! and packages the slowest validated inputs into a ranked benchmark.
//!
//! Module map:
//! - [`corpus`]: problems, solutions, tests, on-disk layout and dataset filtering.
//! - [`harness`]: building and executing solutions, cost meters, line profiles.
//! - [`pairminer`]: contrastive pair mining and the hit-count report.
//! - [`llm`]: provider interface, offline and subprocess providers, prompt templates.
//! - [`constraints`]: invariant reasoning, checker implementation, instrumentation.
//! - [`mutation`]: mutator plugin protocol, synthesis, dry runs, builtin mutator.
//! - [`fuzzer`]: constraint-guided greybox fuzzing campaigns and AFL++ export.
//! - [`filtercheck`]: validators, cross-solution consistency, benchmark assembly.
//! - [`stats`]: Mann-Whitney U, CV, win rate, slowdown, histograms, size slices.
//! - [`pipeline`]: resumable, manifest-driven orchestration behind the CLI.

pub mod constraints;
pub mod corpus;
pub mod filtercheck;
pub mod fuzzer;
pub mod harness;
pub mod llm;
pub mod mutation;
pub mod pairminer;
pub mod pipeline;
pub mod stats;
pub mod util;

pub use corpus::{Corpus, Problem, Solution, TestInput};
pub use harness::{BuildArtifact, CostMeasurement, ExecutionResult, Harness, LineProfile};
