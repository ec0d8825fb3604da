//! Python bindings: `import cbf`.
//!
//! Reports and triples are returned as plain dicts (the same shape as the CLI
//! JSON payloads).

use cbf_core::analysis::{self, log_grid, UniformGrid};
use cbf_core::levy::{self, DensityGrid, DensityOptions};
use cbf_core::sim::{self, SimConfig};
use cbf_core::{evaluator, Error, EtaRepresentation, EtaWeight};
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use serde_json::Value;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Accuracy { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            _ => n.as_u64().unwrap_or_default().into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Piecewise-constant weight `α: [0,1] → [0,1]`.
#[pyclass(name = "StepWeight", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyStepWeight(cbf_core::StepWeight);

#[pymethods]
impl PyStepWeight {
    #[new]
    fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        cbf_core::StepWeight::new(breakpoints, values).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn constant(value: f64) -> PyResult<Self> {
        cbf_core::StepWeight::constant(value).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).unwrap()
    }

    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn value_at(&self, x: f64) -> f64 {
        self.0.value_at(x)
    }

    fn complement(&self) -> Self {
        Self(self.0.complement())
    }

    /// `(gamma, t_breakpoints, values)` of the `(γ, η)` representation.
    fn to_eta(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let eta = self.0.to_eta();
        (evaluator::gamma_of(&self.0), eta.t_breakpoints(), eta.t_values())
    }

    fn __call__(&self, lam: f64) -> PyResult<f64> {
        evaluator::eval_integral(&self.0, lam).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("StepWeight(breakpoints={:?}, values={:?})", self.0.breakpoints(), self.0.values())
    }
}

#[pyfunction]
fn eval_integral(w: &PyStepWeight, lam: f64) -> PyResult<f64> {
    evaluator::eval_integral(&w.0, lam).map_err(py_err)
}

#[pyfunction]
fn eval_product(w: &PyStepWeight, z: Complex64) -> PyResult<Complex64> {
    evaluator::eval_product(&w.0, z).map(|v| v.value).map_err(py_err)
}

#[pyfunction]
fn eval_eta(gamma: f64, t_breakpoints: Vec<f64>, values: Vec<f64>, lam: f64) -> PyResult<f64> {
    let eta = EtaWeight::from_t_segments(&t_breakpoints, &values).map_err(py_err)?;
    evaluator::eval_eta(&EtaRepresentation { gamma, eta }, lam).map_err(py_err)
}

#[pyfunction]
fn gamma_of(w: &PyStepWeight) -> f64 {
    evaluator::gamma_of(&w.0)
}

/// `(c, α)` with `φ = c·φ^(α)` for a `(γ, η)` pair.
#[pyfunction]
fn normalize(gamma: f64, t_breakpoints: Vec<f64>, values: Vec<f64>) -> PyResult<(f64, PyStepWeight)> {
    let eta = EtaWeight::from_t_segments(&t_breakpoints, &values).map_err(py_err)?;
    let n = evaluator::normalize(gamma, &eta);
    Ok((n.scale, PyStepWeight(n.weight)))
}

#[pyfunction]
fn killing_and_drift(w: &PyStepWeight) -> (f64, f64) {
    levy::killing_and_drift(&w.0)
}

#[pyfunction]
fn levy_density(w: &PyStepWeight, x: f64) -> PyResult<f64> {
    levy::levy_density(&w.0, x).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (w, x_min=1e-4, x_max=1e4, points=200))]
fn extract<'py>(py: Python<'py>, w: &PyStepWeight, x_min: f64, x_max: f64, points: usize) -> PyResult<Bound<'py, PyAny>> {
    let grid = DensityGrid { x_min, x_max, points };
    let triple = py
        .detach(|| levy::extract(&w.0, grid, DensityOptions::default()))
        .map_err(py_err)?;
    serialize(py, &triple)
}

#[pyfunction]
#[pyo3(signature = (w, checks=vec!["pick".to_string(), "duality".to_string()], seed=42, samples=1000))]
fn verify<'py>(py: Python<'py>, w: &PyStepWeight, checks: Vec<String>, seed: u64, samples: usize) -> PyResult<Bound<'py, PyAny>> {
    let lambdas = log_grid(1e-2, 1e2, 30);
    let mut reports = Vec::new();
    for c in &checks {
        let r = match c.as_str() {
            "pick" => analysis::check_pick(&w.0, samples, seed),
            "duality" => analysis::check_duality(&w.0, &lambdas),
            "bernstein" => {
                let grid = UniformGrid::new(0.5, 10.0, 0.01).map_err(py_err)?;
                let f = |l: f64| evaluator::eval_integral(&w.0, l).unwrap_or(f64::NAN);
                analysis::check_bernstein_differences(f, &grid, 6).map_err(py_err)?
            }
            other => return Err(PyValueError::new_err(format!("unknown check {other:?}"))),
        };
        reports.push(r);
    }
    serialize(py, &reports)
}

/// Simulates a bundle and compares it with `e^{−tφ(λ)}`.
#[pyfunction]
#[pyo3(signature = (w, lambdas, paths=100_000, epsilon=1e-3, seed=42, t=1.0, sigma=3.0))]
#[allow(clippy::too_many_arguments)]
fn laplace_check<'py>(
    py: Python<'py>,
    w: &PyStepWeight,
    lambdas: Vec<f64>,
    paths: usize,
    epsilon: f64,
    seed: u64,
    t: f64,
    sigma: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SimConfig::new(epsilon, t.max(1.0), paths, seed);
    let check = py
        .detach(|| {
            cfg.validate()?;
            let bundle = sim::simulate(&w.0, &cfg)?;
            sim::laplace_check(&bundle, &lambdas, t, sigma, 0.95)
        })
        .map_err(py_err)?;
    serialize(py, &check)
}

#[pymodule]
fn cbf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStepWeight>()?;
    m.add_function(wrap_pyfunction!(eval_integral, m)?)?;
    m.add_function(wrap_pyfunction!(eval_product, m)?)?;
    m.add_function(wrap_pyfunction!(eval_eta, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_of, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(killing_and_drift, m)?)?;
    m.add_function(wrap_pyfunction!(levy_density, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_check, m)?)?;
    Ok(())
}
