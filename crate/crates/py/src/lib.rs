//! Python bindings. Reports come back as plain dicts with the same layout as the
//! CLI's JSON output.

use adgap::cascade::spread;
use adgap::graph::{make_line_instance, random_family, FamilyParams, GraphKind, ProbSpec};
use adgap::lab::{self, SuiteOptions};
use adgap::oracles::{opt_a_exact, opt_n_exact};
use adgap::report::Report;
use adgap::{mc, AdgapError, Caps, Method};
use pyo3::exceptions::{PyOverflowError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: AdgapError) -> PyErr {
    match e {
        AdgapError::CapExceeded { .. } => PyOverflowError::new_err(e.to_string()),
        AdgapError::Io(_) | AdgapError::PolicyViolation(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn method(name: &str, samples: usize, seed: u64) -> PyResult<Method> {
    match name {
        "exact" => Ok(Method::Exact),
        "mc" => Ok(Method::mc(samples, seed)),
        other => Err(PyValueError::new_err(format!("method must be 'exact' or 'mc', got {other:?}"))),
    }
}

fn report_dict(py: Python<'_>, report: &Report) -> PyResult<Py<PyAny>> {
    let text = report.to_json().map_err(to_py)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// An influence graph under the independent cascade model.
#[pyclass(name = "Graph", module = "adgap")]
struct PyGraph {
    inner: adgap::InfluenceGraph,
}

#[pymethods]
impl PyGraph {
    /// Directed line of `k * t` nodes with edge probability `1 - 1/t`.
    #[staticmethod]
    fn line(k: usize, t: usize) -> PyResult<Self> {
        Ok(PyGraph { inner: make_line_instance(k, t).map_err(to_py)? })
    }

    /// Random member of a family: "in-arborescence", "out-arborescence",
    /// "bipartite" or "general".
    #[staticmethod]
    #[pyo3(signature = (family, n=8, m=12, left=3, right=4, density=0.5, p_lo=0.0, p_hi=1.0, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn random(
        family: &str,
        n: usize,
        m: usize,
        left: usize,
        right: usize,
        density: f64,
        p_lo: f64,
        p_hi: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let kind = GraphKind::parse(&family.replace('-', "_"))
            .ok_or_else(|| PyValueError::new_err(format!("unknown family {family:?}")))?;
        let params = match kind {
            GraphKind::InArborescence | GraphKind::OutArborescence => FamilyParams::Tree { n },
            GraphKind::Bipartite => FamilyParams::Bipartite { left, right, density },
            GraphKind::General => FamilyParams::General { n, m },
            GraphKind::Line => return Err(PyValueError::new_err("use Graph.line for lines")),
        };
        let mut rng = mc::substream(seed, 0);
        let inner = random_family(kind, params, &ProbSpec::Range(p_lo, p_hi), &mut rng).map_err(to_py)?;
        Ok(PyGraph { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGraph { inner: adgap::InfluenceGraph::from_json(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyGraph { inner: adgap::InfluenceGraph::load(path).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().iter().map(|e| (e.src, e.dst, e.p)).collect()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.shape().as_str()
    }

    fn __repr__(&self) -> String {
        format!("Graph(kind={}, nodes={}, edges={})", self.kind(), self.nodes(), self.inner.edge_count())
    }
}

/// Expected spread of `seeds`, as `(value, stderr)`; stderr is 0 for exact runs.
#[pyfunction(name = "spread")]
#[pyo3(signature = (graph, seeds, method="exact", samples=10_000, seed=0))]
fn py_spread(graph: &PyGraph, seeds: Vec<usize>, method: &str, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let m = self::method(method, samples, seed)?;
    let est = spread(&graph.inner, &seeds, m, &Caps::default()).map_err(to_py)?;
    Ok((est.value, est.stderr))
}

/// Exact optimum for budget `k`. Returns `(value, seeds)`; seeds is `None` for the
/// adaptive optimum, whose witness is a policy.
#[pyfunction]
#[pyo3(signature = (graph, k, adaptive=false))]
fn opt(graph: &PyGraph, k: usize, adaptive: bool) -> PyResult<(f64, Option<Vec<usize>>)> {
    let caps = Caps::default();
    let r = if adaptive { opt_a_exact(&graph.inner, k, &caps) } else { opt_n_exact(&graph.inner, k, &caps) }
        .map_err(to_py)?;
    Ok((r.value, r.seeds().map(<[usize]>::to_vec)))
}

/// Adaptive against non-adaptive optimum.
#[pyfunction]
#[pyo3(signature = (graph, k, method="exact", samples=10_000, seed=0))]
fn gap(py: Python<'_>, graph: &PyGraph, k: usize, method: &str, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let m = self::method(method, samples, seed)?;
    let r = py.detach(|| lab::measure_gap(&graph.inner, k, m, &Caps::default())).map_err(to_py)?;
    report_dict(py, &r.to_report(seed))
}

#[pyfunction]
#[pyo3(signature = (k, t, samples=100_000, seed=0))]
fn lowerbound(py: Python<'_>, k: usize, t: usize, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| lab::lower_bound_experiment(k, t, samples, seed)).map_err(to_py)?;
    report_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (k, t, samples=100_000, seed=0))]
fn mlratio(py: Python<'_>, k: usize, t: usize, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| lab::multilinear_ratio_experiment(k, t, samples, seed)).map_err(to_py)?;
    report_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (k, t, samples=100_000, seed=0))]
fn rwratio(py: Python<'_>, k: usize, t: usize, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| lab::random_walk_ratio_experiment(k, t, samples, seed)).map_err(to_py)?;
    report_dict(py, &r)
}

/// Runs the invariant suite, or one property of it.
#[pyfunction]
#[pyo3(signature = (seed=0, suite=None, trials=None))]
fn verify(py: Python<'_>, seed: u64, suite: Option<String>, trials: Option<usize>) -> PyResult<Py<PyAny>> {
    let opts = SuiteOptions { trials, only: suite, inject_bug: false, caps: Caps::default() };
    let r = py.detach(|| lab::invariant_suite(seed, &opts)).map_err(to_py)?;
    report_dict(py, &r)
}

#[pymodule]
#[pyo3(name = "adgap")]
fn adgap_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(py_spread, m)?)?;
    m.add_function(wrap_pyfunction!(opt, m)?)?;
    m.add_function(wrap_pyfunction!(gap, m)?)?;
    m.add_function(wrap_pyfunction!(lowerbound, m)?)?;
    m.add_function(wrap_pyfunction!(mlratio, m)?)?;
    m.add_function(wrap_pyfunction!(rwratio, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("E_OVER_E_MINUS_1", adgap::oracles::E_OVER_E_MINUS_1)?;
    Ok(())
}
