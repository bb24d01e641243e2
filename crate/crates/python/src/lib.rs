//! Python bindings: `import tfha`.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tfha_core::netlist::{self, list_parameters, validate_circuit};
use tfha_core::sensitivity::{self, TfhaConfig};
use tfha_core::spectral::{fft_period, max_harmonic};
use tfha_core::transient::{self, TransientConfig};
use tfha_core::{Complex64, Error};

create_exception!(tfha, NotConvergedError, PyRuntimeError);

/// User input problems become `ValueError`, solver failures `RuntimeError`.
fn py_err(e: Error) -> PyErr {
    match e {
        Error::Syntax { .. }
        | Error::UnknownDeviceKind { .. }
        | Error::DuplicateName { .. }
        | Error::InvalidCircuit(_)
        | Error::UnknownParameter(_)
        | Error::UnknownTarget(_)
        | Error::InvalidConfig(_)
        | Error::HarmonicOverflow { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

pub fn transient_config(
    samples_per_period: Option<usize>,
    steady_tol: Option<f64>,
    newton_tol: Option<f64>,
    max_periods: Option<usize>,
) -> TransientConfig {
    let d = TransientConfig::default();
    TransientConfig {
        samples_per_period: samples_per_period.unwrap_or(d.samples_per_period),
        steady_tol: steady_tol.unwrap_or(d.steady_tol),
        newton_tol: newton_tol.unwrap_or(d.newton_tol),
        max_periods: max_periods.unwrap_or(d.max_periods),
        ..d
    }
}

#[pyclass(name = "Circuit", module = "tfha", frozen)]
pub struct PyCircuit(netlist::Circuit);

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        netlist::parse_netlist(text).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_file(path: std::path::PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| pyo3::exceptions::PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    #[getter]
    fn period(&self) -> f64 {
        self.0.fundamental_period()
    }

    /// `device.param` names of every design parameter.
    fn parameters(&self) -> Vec<String> {
        list_parameters(&self.0).iter().map(ToString::to_string).collect()
    }

    fn validate(&self) -> Vec<String> {
        validate_circuit(&self.0).iter().map(ToString::to_string).collect()
    }

    fn with_parameter(&self, name: &str, value: f64) -> PyResult<Self> {
        let p = self.0.parameter(name).map_err(py_err)?;
        self.0.with_parameter(&p, value).map(Self).map_err(py_err)
    }

    fn to_netlist(&self) -> String {
        self.0.to_netlist()
    }

    fn __repr__(&self) -> String {
        format!("Circuit({} devices, period={:e})", self.0.devices().len(), self.0.fundamental_period())
    }
}

#[pyclass(name = "TransientSolution", module = "tfha", frozen)]
pub struct PyTransient(transient::TransientSolution);

#[pymethods]
impl PyTransient {
    #[getter]
    fn period(&self) -> f64 {
        self.0.period
    }
    #[getter]
    fn t_grid(&self) -> Vec<f64> {
        self.0.t_grid.clone()
    }
    #[getter]
    fn unknown_names(&self) -> Vec<String> {
        self.0.unknown_names.clone()
    }
    #[getter]
    fn x_samples(&self) -> Vec<Vec<f64>> {
        self.0.x_samples.clone()
    }
    #[getter]
    fn periods_run(&self) -> usize {
        self.0.periods_run
    }
    #[getter]
    fn period_mismatch(&self) -> f64 {
        self.0.period_mismatch
    }

    /// Samples of one unknown, e.g. `"v(out)"`.
    fn waveform(&self, name: &str) -> PyResult<Vec<f64>> {
        let i = self
            .0
            .unknown_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown name '{name}'")))?;
        Ok(self.0.x_samples[i].clone())
    }

    /// One-sided phasors `X_0..X_K` of every unknown, keyed by name.
    #[pyo3(signature = (harmonics = None))]
    fn spectrum(&self, harmonics: Option<usize>) -> PyResult<Vec<(String, Vec<Complex64>)>> {
        let k = harmonics.unwrap_or_else(|| max_harmonic(self.0.samples()));
        let s = fft_period(&self.0, k).map_err(py_err)?;
        Ok(self.0.unknown_names.iter().cloned().zip(s.phasors).collect())
    }
}

#[pyclass(name = "SensitivityResult", module = "tfha", frozen)]
pub struct PySensitivity(sensitivity::SensitivityResult);

#[pymethods]
impl PySensitivity {
    #[getter]
    fn parameter(&self) -> String {
        self.0.parameter.to_string()
    }
    #[getter]
    fn k_used(&self) -> usize {
        self.0.k_used
    }
    #[getter]
    fn est_rel_error(&self) -> f64 {
        self.0.est_rel_error
    }
    #[getter]
    fn spectrum(&self) -> Vec<Complex64> {
        self.0.spectrum.clone()
    }
    #[getter]
    fn time_series(&self) -> Vec<f64> {
        self.0.time_series.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "SensitivityResult({}, k_used={}, est_rel_error={:e})",
            self.0.parameter, self.0.k_used, self.0.est_rel_error
        )
    }
}

fn resolve_params(c: &netlist::Circuit, params: Option<Vec<String>>) -> PyResult<Vec<netlist::ParameterRef>> {
    match params {
        None => Ok(list_parameters(c)),
        Some(names) => names.iter().map(|n| c.parameter(n).map_err(py_err)).collect(),
    }
}

#[pyfunction]
#[pyo3(signature = (circuit, *, samples_per_period = None, steady_tol = None, newton_tol = None, max_periods = None))]
fn run_transient(
    py: Python<'_>,
    circuit: &PyCircuit,
    samples_per_period: Option<usize>,
    steady_tol: Option<f64>,
    newton_tol: Option<f64>,
    max_periods: Option<usize>,
) -> PyResult<PyTransient> {
    let cfg = transient_config(samples_per_period, steady_tol, newton_tol, max_periods);
    let c = circuit.0.clone();
    py.detach(move || transient::run_to_steady_state(&c, &cfg))
        .map(PyTransient)
        .map_err(py_err)
}

/// Sensitivities of `qoi` to `params` (all design parameters when `None`).
/// Raises `NotConvergedError` when the harmonic cap is reached first.
#[pyfunction]
#[pyo3(signature = (circuit, qoi, params = None, *, err_tol = None, k_start = None,
    samples_per_period = None, steady_tol = None, newton_tol = None, max_periods = None))]
#[allow(clippy::too_many_arguments)]
fn tfha_run(
    py: Python<'_>,
    circuit: &PyCircuit,
    qoi: &str,
    params: Option<Vec<String>>,
    err_tol: Option<f64>,
    k_start: Option<usize>,
    samples_per_period: Option<usize>,
    steady_tol: Option<f64>,
    newton_tol: Option<f64>,
    max_periods: Option<usize>,
) -> PyResult<Vec<PySensitivity>> {
    let d = TfhaConfig::default();
    let cfg = TfhaConfig {
        err_tol: err_tol.unwrap_or(d.err_tol),
        k_start: k_start.unwrap_or(d.k_start),
        transient: transient_config(samples_per_period, steady_tol, newton_tol, max_periods),
        ..d
    };
    let c = circuit.0.clone();
    let params = resolve_params(&c, params)?;
    let qoi = qoi.to_string();
    match py.detach(move || sensitivity::tfha_run(&c, &qoi, &params, &cfg)) {
        Ok(out) => Ok(out.results.into_iter().map(PySensitivity).collect()),
        Err(e @ Error::NotConverged { .. }) => Err(NotConvergedError::new_err(e.to_string())),
        Err(e) => Err(py_err(e)),
    }
}

/// Central finite difference of the steady-state QoI waveform.
#[pyfunction]
#[pyo3(signature = (circuit, qoi, param, h_rel = 1e-4, *, samples_per_period = None,
    steady_tol = None, newton_tol = None, max_periods = None))]
#[allow(clippy::too_many_arguments)]
fn fd_oracle(
    py: Python<'_>,
    circuit: &PyCircuit,
    qoi: &str,
    param: &str,
    h_rel: f64,
    samples_per_period: Option<usize>,
    steady_tol: Option<f64>,
    newton_tol: Option<f64>,
    max_periods: Option<usize>,
) -> PyResult<Vec<f64>> {
    let cfg = transient_config(samples_per_period, steady_tol, newton_tol, max_periods);
    let c = circuit.0.clone();
    let p = c.parameter(param).map_err(py_err)?;
    let qoi = qoi.to_string();
    py.detach(move || sensitivity::fd_oracle(&c, &qoi, &p, h_rel, &cfg)).map_err(py_err)
}

#[pyfunction]
fn relative_error(coarse: &PySensitivity, fine: &PySensitivity) -> PyResult<f64> {
    sensitivity::relative_error(&coarse.0, &fine.0).map_err(py_err)
}

#[pymodule]
fn tfha(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCircuit>()?;
    m.add_class::<PyTransient>()?;
    m.add_class::<PySensitivity>()?;
    m.add_function(wrap_pyfunction!(run_transient, m)?)?;
    m.add_function(wrap_pyfunction!(tfha_run, m)?)?;
    m.add_function(wrap_pyfunction!(fd_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add("NotConvergedError", m.py().get_type::<NotConvergedError>())?;
    Ok(())
}
