//! Python bindings. Structured results cross the boundary as JSON and come
//! out as plain dicts and lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use qspir_core::audit::{run_audit, AuditKind, Grid};
use qspir_core::harness::{self, ExperimentConfig};
use qspir_core::pir::{Database, SCHEME_NAMES};
use qspir_core::protocol::{Detail, DrawPolicy};
use qspir_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| py_err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn database(x: &str) -> PyResult<Database> {
    x.parse().map_err(py_err)
}

/// A named protocol on an `n`-bit database.
#[pyclass(frozen, module = "qspir")]
struct Protocol {
    inner: qspir_core::protocol::Protocol,
}

#[pymethods]
impl Protocol {
    #[new]
    fn new(name: &str, n: usize) -> PyResult<Self> {
        Ok(Protocol { inner: qspir_core::protocol::Protocol::from_name(name, n).map_err(py_err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn unit(&self) -> &'static str {
        match self.inner.unit() {
            qspir_core::transcript::CommUnit::Qubits => "qubits",
            qspir_core::transcript::CommUnit::Bits => "bits",
        }
    }

    #[getter]
    fn closed_form_comm(&self) -> usize {
        self.inner.closed_form_comm()
    }

    /// Runs the protocol once with randomness drawn from `seed` and returns
    /// the transcript.
    #[pyo3(signature = (x, i, seed = 0, full = false))]
    fn run<'py>(&self, py: Python<'py>, x: &str, i: usize, seed: u64, full: bool) -> PyResult<Bound<'py, PyAny>> {
        let draw = self.inner.draws(DrawPolicy::Seeded { seed, samples: 1 }).map_err(py_err)?.swap_remove(0);
        let detail = if full { Detail::FULL } else { Detail::OUTPUT };
        let t = self.inner.run(&database(x)?, i, &draw, detail).map_err(py_err)?;
        to_py(py, &t)
    }

    /// Probability that the user outputs 1.
    #[pyo3(signature = (x, i, seed = 0))]
    fn retrieve(&self, x: &str, i: usize, seed: u64) -> PyResult<f64> {
        let draw = self.inner.draws(DrawPolicy::Seeded { seed, samples: 1 }).map_err(py_err)?.swap_remove(0);
        Ok(self.inner.run(&database(x)?, i, &draw, Detail::OUTPUT).map_err(py_err)?.output.p1)
    }

    /// Runs one audit (`recovery`, `user-privacy`, `data-privacy`, `comm`,
    /// `undetectability`) over every database, or the listed ones.
    #[pyo3(signature = (kind, databases = None))]
    fn audit<'py>(&self, py: Python<'py>, kind: &str, databases: Option<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
        let kind: AuditKind = kind.parse().map_err(py_err)?;
        let mut grid = Grid::full(&self.inner);
        if let Some(list) = databases {
            grid = grid.with_databases(list.iter().map(|x| database(x)).collect::<PyResult<_>>()?);
        }
        let report = py.detach(|| run_audit(kind, &self.inner, &grid)).map_err(py_err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Protocol({:?}, {})", self.inner.name(), self.inner.n())
    }
}

/// Runs an experiment described by a TOML document and returns the bundle.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let config = ExperimentConfig::from_toml(config).map_err(py_err)?;
    let bundle = py.detach(|| harness::run_experiment(&config)).map_err(py_err)?;
    to_py(py, &bundle)
}

#[pyfunction]
fn comm_table<'py>(py: Python<'py>, schemes: Vec<String>, ns: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    let names: Vec<&str> = schemes.iter().map(String::as_str).collect();
    to_py(py, &harness::comm_table(&names, &ns).map_err(py_err)?)
}

/// Runs a named attack over every database.
#[pyfunction]
#[pyo3(signature = (scheme, n, attack = "parity2", countermeasure = false))]
fn attack<'py>(
    py: Python<'py>,
    scheme: &str,
    n: usize,
    attack: &str,
    countermeasure: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let summary = py.detach(|| harness::attack_experiment(scheme, n, attack, countermeasure)).map_err(py_err)?;
    to_py(py, &summary)
}

#[pymodule]
fn qspir(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Protocol>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(comm_table, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add("SCHEME_NAMES", SCHEME_NAMES.to_vec())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
