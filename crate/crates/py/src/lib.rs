use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use wedge::pipeline::{self, Config, PipelineError};
use wedge::stats::{Alternative, Method};

/// Hands a serializable value to Python as plain dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    PyRuntimeError::new_err(format!("{} ({}): {e}", e.kind(), e.exit_code()))
}

#[pyfunction]
#[pyo3(signature = (xs, ys, alternative = "greater", method = None))]
fn mann_whitney_u<'py>(
    py: Python<'py>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    alternative: &str,
    method: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let alt = match alternative {
        "greater" => Alternative::Greater,
        "two-sided" | "two_sided" => Alternative::TwoSided,
        other => return Err(value_err(format!("unknown alternative {other:?}"))),
    };
    let res = match method {
        None => wedge::stats::mann_whitney_u(&xs, &ys, alt),
        Some("exact") => wedge::stats::mann_whitney_u_with(&xs, &ys, alt, Method::ExactEnumeration),
        Some("normal") => wedge::stats::mann_whitney_u_with(&xs, &ys, alt, Method::NormalApproximation),
        Some(other) => return Err(value_err(format!("unknown method {other:?}"))),
    }
    .map_err(value_err)?;
    to_py(py, &res)
}

#[pyfunction]
fn coefficient_of_variation(values: Vec<f64>) -> PyResult<f64> {
    wedge::stats::coefficient_of_variation(&values).map_err(value_err)
}

#[pyfunction]
fn tokenize(data: &[u8]) -> Vec<String> {
    wedge::pairminer::tokenize(data)
}

/// (match_ratio, jaccard, total) for two inputs.
#[pyfunction]
fn similarity(a: &[u8], b: &[u8]) -> PyResult<(f64, f64, f64)> {
    let s = wedge::pairminer::similarity(&wedge::pairminer::tokenize(a), &wedge::pairminer::tokenize(b))
        .map_err(value_err)?;
    Ok((s.match_ratio, s.jaccard, s.total))
}

#[pyfunction]
#[pyo3(signature = (outputs, threshold = 0.95, input_id = "input"))]
fn consistency_verdict<'py>(
    py: Python<'py>,
    outputs: Vec<Option<String>>,
    threshold: f64,
    input_id: &str,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &wedge::filtercheck::consistency_verdict(input_id, &outputs, threshold))
}

#[pyfunction]
#[pyo3(signature = (seed, rng_seed, max_size = 1 << 20))]
fn builtin_mutate(seed: &[u8], rng_seed: u64, max_size: usize) -> PyResult<Vec<u8>> {
    if max_size == 0 {
        return Err(value_err("max_size must be positive"));
    }
    Ok(wedge::mutation::builtin_mutate(seed, rng_seed, max_size))
}

#[pyfunction]
fn parse_invariants<'py>(py: Python<'py>, response: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &wedge::constraints::parse_invariants(response))
}

/// An opened run directory; each method runs one pipeline stage.
#[pyclass(unsendable)]
struct Run {
    inner: pipeline::Run,
}

#[pymethods]
impl Run {
    #[staticmethod]
    fn open(dir: PathBuf) -> PyResult<Self> {
        Ok(Run {
            inner: pipeline::Run::open(&dir).map_err(pipeline_err)?,
        })
    }

    /// Creates `dir` from `corpus` and runs ingest.
    #[staticmethod]
    #[pyo3(signature = (corpus, dir, config = None))]
    fn ingest(corpus: PathBuf, dir: PathBuf, config: Option<PathBuf>) -> PyResult<Self> {
        let cfg = match config {
            Some(path) => Config::default().overlay_file(&path).map_err(value_err)?,
            None => Config::default(),
        };
        let mut inner = pipeline::Run::create(&dir, &corpus, cfg).map_err(pipeline_err)?;
        pipeline::ingest(&mut inner, false).map_err(pipeline_err)?;
        Ok(Run { inner })
    }

    #[getter]
    fn dir(&self) -> PathBuf {
        self.inner.dir.clone()
    }

    fn manifest<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.manifest)
    }

    /// Runs `stage` by its command-line name and returns the status line.
    #[pyo3(signature = (stage, force = false))]
    fn run_stage(&mut self, stage: &str, force: bool) -> PyResult<String> {
        let r = &mut self.inner;
        match stage {
            "ingest" => pipeline::ingest(r, force),
            "profile" => pipeline::profile(r, force),
            "mine-pairs" => pipeline::mine_pairs(r, force),
            "constraints" => pipeline::constraints(r, force),
            "mutators" => pipeline::mutators(r, force),
            "fuzz" => pipeline::fuzz(r, force),
            "filter" => pipeline::filter(r, force),
            "assemble" => pipeline::assemble(r, force),
            "evaluate" => pipeline::evaluate(r, &[], force),
            other => return Err(value_err(format!("unknown stage {other:?}"))),
        }
        .map_err(pipeline_err)
    }
}

#[pymodule]
fn wedge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mann_whitney_u, m)?)?;
    m.add_function(wrap_pyfunction!(coefficient_of_variation, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(consistency_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_mutate, m)?)?;
    m.add_function(wrap_pyfunction!(parse_invariants, m)?)?;
    m.add_class::<Run>()?;
    Ok(())
}
