//! Cost meters. The trace counter reads a step count the program reports on
//! stderr and is fully deterministic; the hardware counter wraps the run in
//! `perf stat` and reads the configured event.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::process::RunOptions;
use super::sentinel::parse_trace_cost;
use super::{ExecutionResult, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeterKind {
    HardwareCounter,
    TraceCounter,
}

pub trait CostMeter: Send + Sync {
    fn kind(&self) -> MeterKind;
    fn check_available(&self) -> Result<(), HarnessError>;
    fn run_options(&self) -> RunOptions;
    fn extract(
        &self,
        result: &ExecutionResult,
        collected: &HashMap<String, Vec<u8>>,
    ) -> Result<u64, HarnessError>;
}

#[derive(Debug, Clone, Default)]
pub struct TraceCounter;

impl CostMeter for TraceCounter {
    fn kind(&self) -> MeterKind {
        MeterKind::TraceCounter
    }

    fn check_available(&self) -> Result<(), HarnessError> {
        Ok(())
    }

    fn run_options(&self) -> RunOptions {
        RunOptions::default()
    }

    fn extract(
        &self,
        result: &ExecutionResult,
        _collected: &HashMap<String, Vec<u8>>,
    ) -> Result<u64, HarnessError> {
        parse_trace_cost(&result.stderr).ok_or_else(|| {
            HarnessError::MeterFailure(format!(
                "no WEDGE_COST line on stderr (exit {:?})",
                result.exit
            ))
        })
    }
}

#[derive(Debug, Clone)]
pub struct HardwareCounter {
    pub perf: PathBuf,
    /// Counter event passed to `perf stat -e`, e.g. `instructions:u`.
    pub event: String,
}

const PERF_OUT: &str = "wedge-perf.txt";

impl HardwareCounter {
    pub fn new(event: impl Into<String>) -> Self {
        HardwareCounter {
            perf: PathBuf::from("perf"),
            event: event.into(),
        }
    }

    fn resolve(&self) -> Option<PathBuf> {
        if self.perf.components().count() > 1 {
            return self.perf.is_file().then(|| self.perf.clone());
        }
        std::env::var_os("PATH").and_then(|paths| {
            std::env::split_paths(&paths)
                .map(|dir| dir.join(&self.perf))
                .find(|p| p.is_file())
        })
    }
}

/// Parses the first counter value from `perf stat -x,` output.
pub fn parse_perf_csv(text: &str, event: &str) -> Result<u64, HarnessError> {
    for line in text.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 || !fields[2].starts_with(event.split(':').next().unwrap_or(event)) {
            continue;
        }
        return fields[0].trim().parse().map_err(|_| {
            HarnessError::MeterUnavailable(format!("event {event} reported {:?}", fields[0]))
        });
    }
    Err(HarnessError::MeterFailure(format!(
        "event {event} missing from perf output"
    )))
}

impl CostMeter for HardwareCounter {
    fn kind(&self) -> MeterKind {
        MeterKind::HardwareCounter
    }

    fn check_available(&self) -> Result<(), HarnessError> {
        let perf = self
            .resolve()
            .ok_or_else(|| HarnessError::MeterUnavailable(format!("{} not found", self.perf.display())))?;
        let out = Command::new(&perf)
            .args(["stat", "-x,", "-e", &self.event, "true"])
            .stdin(Stdio::null())
            .output()
            .map_err(|e| HarnessError::MeterUnavailable(e.to_string()))?;
        if !out.status.success() {
            return Err(HarnessError::MeterUnavailable(
                String::from_utf8_lossy(&out.stderr).into_owned(),
            ));
        }
        parse_perf_csv(&String::from_utf8_lossy(&out.stderr), &self.event).map(|_| ())
    }

    fn run_options(&self) -> RunOptions {
        let perf = self.resolve().unwrap_or_else(|| self.perf.clone());
        RunOptions {
            wrapper: vec![
                perf.to_string_lossy().into_owned(),
                "stat".into(),
                "-x,".into(),
                "-e".into(),
                self.event.clone(),
                "-o".into(),
                format!("{{scratch}}/{PERF_OUT}"),
                "--".into(),
            ],
            collect: vec![PERF_OUT.into()],
            ..RunOptions::default()
        }
    }

    fn extract(
        &self,
        _result: &ExecutionResult,
        collected: &HashMap<String, Vec<u8>>,
    ) -> Result<u64, HarnessError> {
        let text = collected
            .get(PERF_OUT)
            .ok_or_else(|| HarnessError::MeterFailure("perf wrote no output".into()))?;
        parse_perf_csv(&String::from_utf8_lossy(text), &self.event)
    }
}

pub fn meter_for(kind: MeterKind, event: &str) -> Box<dyn CostMeter> {
    match kind {
        MeterKind::TraceCounter => Box::new(TraceCounter),
        MeterKind::HardwareCounter => Box::new(HardwareCounter::new(event)),
    }
}

pub fn missing_binary(path: &Path) -> HardwareCounter {
    HardwareCounter {
        perf: path.to_path_buf(),
        event: "instructions:u".into(),
    }
}
