//! Python bindings: kernel evaluation, GP regression, kernel learning,
//! channel simulation and the NMSE sweep.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use eitgpr_core::channel::{add_awgn as core_awgn, sv_channel as core_sv, ula_geometry, SPEED_OF_LIGHT};
use eitgpr_core::harness::{nmse as core_nmse, run_snr_sweep, ExperimentConfig};
use eitgpr_core::special::f_n as core_f_n;
use eitgpr_core::{
    eit_gpr_estimate, em_kernel, estimate_azimuth, learn_kernel, log_likelihood, CVector, Error, LearnOptions,
    MixedKernel, SampleSet, SpacetimeSample, Vec3,
};

create_exception!(eitgpr, NumericalError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

type Triple = (f64, f64, f64);

fn v3(t: Triple) -> Vec3 {
    Vec3::new(t.0, t.1, t.2)
}

fn samples(positions: &[Triple]) -> PyResult<SampleSet> {
    SampleSet::new(positions.iter().map(|&p| SpacetimeSample::y_polarized(v3(p), 0.0)).collect()).map_err(to_py)
}

fn cvec(v: &[Complex64]) -> CVector {
    CVector::from_column_slice(v)
}

/// Hyperparameters of one EM sub-kernel.
#[pyclass(name = "KernelParams", module = "eitgpr", from_py_object)]
#[derive(Clone)]
struct PyKernelParams {
    inner: eitgpr_core::KernelParams,
}

#[pymethods]
impl PyKernelParams {
    #[new]
    #[pyo3(signature = (mu, sigma2, k0, velocity = (0.0, 0.0, 0.0)))]
    fn new(mu: Triple, sigma2: f64, k0: f64, velocity: Triple) -> PyResult<Self> {
        eitgpr_core::KernelParams::new(v3(mu), sigma2, v3(velocity), k0).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn mu(&self) -> Triple {
        (self.inner.mu.x, self.inner.mu.y, self.inner.mu.z)
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }

    #[getter]
    fn k0(&self) -> f64 {
        self.inner.k0
    }

    /// 3×3 kernel `K(xa, ta; xb, tb)` as nested lists.
    #[pyo3(signature = (xa, xb, ta = 0.0, tb = 0.0))]
    fn kernel(&self, xa: Triple, xb: Triple, ta: f64, tb: f64) -> Vec<Vec<Complex64>> {
        let k = em_kernel(&v3(xa), ta, &v3(xb), tb, &self.inner);
        (0..3).map(|i| (0..3).map(|j| k[(i, j)]).collect()).collect()
    }

    /// Azimuth of the concentration direction, in degrees.
    fn azimuth_deg(&self) -> PyResult<f64> {
        estimate_azimuth(&self.inner.mu).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let m = self.inner.mu;
        format!("KernelParams(mu=({}, {}, {}), sigma2={}, k0={})", m.x, m.y, m.z, self.inner.sigma2, self.inner.k0)
    }
}

fn mixed(kernels: Vec<PyKernelParams>, weights: Option<Vec<f64>>) -> PyResult<MixedKernel> {
    let n = kernels.len();
    let weights = weights.unwrap_or_else(|| vec![1.0 / n as f64; n]);
    MixedKernel::new(kernels.into_iter().map(|k| k.inner).collect(), weights).map_err(to_py)
}

/// `∫₋₁¹ xⁿ e^{iβx} dx`.
#[pyfunction]
fn f_n(n: usize, beta: Complex64) -> PyResult<Complex64> {
    if n > 3 {
        return Err(PyValueError::new_err("n must be in 0..=3"));
    }
    Ok(core_f_n(n, beta))
}

/// Positions of an `n`-element ULA along x with spacing in wavelengths.
#[pyfunction]
#[pyo3(signature = (n, spacing_wavelengths = 0.5, carrier_hz = 3.5e9))]
fn ula_positions(n: usize, spacing_wavelengths: f64, carrier_hz: f64) -> PyResult<Vec<Triple>> {
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    let g = ula_geometry(n, spacing_wavelengths * lambda, carrier_hz, Vec3::y()).map_err(to_py)?;
    Ok(g.positions.iter().map(|p| (p.x, p.y, p.z)).collect())
}

/// Saleh–Valenzuela channel over a half-wavelength ULA.
#[pyfunction]
#[pyo3(signature = (n, azimuth_deg, seed, paths = 6, rician_k_db = 10.0, carrier_hz = 3.5e9))]
fn sv_channel(
    n: usize,
    azimuth_deg: f64,
    seed: u64,
    paths: usize,
    rician_k_db: f64,
    carrier_hz: f64,
) -> PyResult<Vec<Complex64>> {
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    let g = ula_geometry(n, lambda / 2.0, carrier_hz, Vec3::y()).map_err(to_py)?;
    Ok(core_sv(&g, azimuth_deg, paths, rician_k_db, seed).h.iter().copied().collect())
}

/// `(y, noise_var)` with `y = h + CN(0, 10^{−snr/10})`.
#[pyfunction]
fn add_awgn(h: Vec<Complex64>, snr_db: f64, seed: u64) -> (Vec<Complex64>, f64) {
    let (y, nv) = core_awgn(&cvec(&h), snr_db, seed);
    (y.iter().copied().collect(), nv)
}

#[pyfunction]
fn nmse(h_hat: Vec<Complex64>, h: Vec<Complex64>) -> PyResult<f64> {
    core_nmse(&cvec(&h_hat), &cvec(&h)).map_err(to_py)
}

/// GP posterior mean at `predict` from y-polarized evidence.
#[pyfunction]
#[pyo3(signature = (evidence, y, predict, kernels, noise_var, weights = None))]
fn gpr_estimate(
    evidence: Vec<Triple>,
    y: Vec<Complex64>,
    predict: Vec<Triple>,
    kernels: Vec<PyKernelParams>,
    noise_var: f64,
    weights: Option<Vec<f64>>,
) -> PyResult<Vec<Complex64>> {
    let k = mixed(kernels, weights)?;
    let h = eit_gpr_estimate(&samples(&evidence)?, &cvec(&y), &samples(&predict)?, &k, noise_var).map_err(to_py)?;
    Ok(h.iter().copied().collect())
}

#[pyfunction]
#[pyo3(signature = (positions, y, kernels, noise_var, weights = None))]
fn loglik(
    positions: Vec<Triple>,
    y: Vec<Complex64>,
    kernels: Vec<PyKernelParams>,
    noise_var: f64,
    weights: Option<Vec<f64>>,
) -> PyResult<f64> {
    log_likelihood(&samples(&positions)?, &cvec(&y), &mixed(kernels, weights)?, noise_var).map_err(to_py)
}

/// Result of maximum-likelihood kernel learning.
#[pyclass(name = "LearnReport", module = "eitgpr", get_all)]
struct PyLearnReport {
    kernels: Vec<PyKernelParams>,
    weights: Vec<f64>,
    sigma2: f64,
    objective_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    failure: Option<String>,
}

#[pyfunction]
#[pyo3(signature = (positions, y, noise_var, k0, sub_kernels = 1, n_iter = 100))]
fn learn(
    positions: Vec<Triple>,
    y: Vec<Complex64>,
    noise_var: f64,
    k0: f64,
    sub_kernels: usize,
    n_iter: usize,
) -> PyResult<PyLearnReport> {
    let opts = LearnOptions::new(sub_kernels, n_iter, k0);
    let rep = learn_kernel(&samples(&positions)?, &cvec(&y), noise_var, &opts).map_err(to_py)?;
    Ok(PyLearnReport {
        kernels: rep.kernel.sub_params().iter().map(|p| PyKernelParams { inner: *p }).collect(),
        weights: rep.kernel.weights().to_vec(),
        sigma2: rep.sigma2,
        objective_trace: rep.objective_trace,
        iterations: rep.iterations,
        converged: rep.converged,
        failure: rep.failure,
    })
}

/// `(estimator, snr_db, nmse_mean, nmse_stderr, trials)`
type SweepCell = (String, f64, f64, f64, usize);

/// Runs the NMSE sweep for a TOML configuration; one tuple per cell.
#[pyfunction]
#[pyo3(signature = (config_toml = ""))]
fn sweep(py: Python<'_>, config_toml: &str) -> PyResult<Vec<SweepCell>> {
    let cfg = ExperimentConfig::from_toml(config_toml).map_err(to_py)?;
    let res = py.detach(|| run_snr_sweep(&cfg)).map_err(to_py)?;
    Ok(res
        .rows
        .iter()
        .map(|r| (r.estimator.name().to_string(), r.snr_db, r.nmse_mean, r.nmse_stderr, r.trials))
        .collect())
}

#[pymodule]
fn eitgpr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<PyKernelParams>()?;
    m.add_class::<PyLearnReport>()?;
    m.add_function(wrap_pyfunction!(f_n, m)?)?;
    m.add_function(wrap_pyfunction!(ula_positions, m)?)?;
    m.add_function(wrap_pyfunction!(sv_channel, m)?)?;
    m.add_function(wrap_pyfunction!(add_awgn, m)?)?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    m.add_function(wrap_pyfunction!(gpr_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(loglik, m)?)?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
