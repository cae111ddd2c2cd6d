//! Python bindings. Matrices cross the boundary as nested lists of complex
//! numbers, row-major.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use noncp_core::access::{self, OptimizerConfig};
use noncp_core::affine;
use noncp_core::apps;
use noncp_core::channel::{self, ChoiMatrix};
use noncp_core::fano;
use noncp_core::json::ChoiJson;
use noncp_core::linalg::{CMat, DensityMatrix};
use noncp_core::perturb;
use noncp_core::random;
use noncp_core::tomo;

fn err(e: noncp_core::Error) -> PyErr {
    match e {
        noncp_core::Error::ContractViolation(_)
        | noncp_core::Error::DimensionMismatch(_)
        | noncp_core::Error::InvalidDimension(_)
        | noncp_core::Error::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_mat(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMat::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_mat(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn state(rows: Vec<Vec<Complex64>>) -> PyResult<DensityMatrix> {
    DensityMatrix::new(to_mat(rows)?).map_err(err)
}

/// Choi matrix of a linear map, indexed `[(m, s), (n, t)]` with output first.
#[pyclass(name = "Choi", module = "noncp_py", skip_from_py_object)]
#[derive(Clone)]
struct PyChoi {
    inner: ChoiMatrix,
}

#[pymethods]
impl PyChoi {
    #[new]
    fn new(matrix: Vec<Vec<Complex64>>, d_in: usize, d_out: usize) -> PyResult<Self> {
        Ok(Self { inner: ChoiMatrix::new(to_mat(matrix)?, d_in, d_out).map_err(err)? })
    }

    #[staticmethod]
    fn identity(d: usize) -> Self {
        Self { inner: channel::identity_choi(d) }
    }

    #[staticmethod]
    fn transpose(d: usize) -> Self {
        Self { inner: channel::transpose_choi(d) }
    }

    #[staticmethod]
    fn depolarizing(d: usize) -> Self {
        Self { inner: channel::depolarizing_choi(d) }
    }

    /// `p·depolarizing + (1 − p)·transpose` on a qubit.
    #[staticmethod]
    fn tprime(p: f64) -> Self {
        Self { inner: access::tprime_choi(p) }
    }

    /// Two-qubit example map with correlation strength `a` and rotation angle `theta`.
    #[staticmethod]
    fn toy(a: f64, theta: f64) -> PyResult<Self> {
        let form = affine::toy_affine_form(a, theta).map_err(err)?;
        Ok(Self { inner: channel::choi_of_affine(&form).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let j: ChoiJson = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: j.to_choi().map_err(err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&ChoiJson::from_choi(&self.inner)).expect("plain data")
    }

    #[getter]
    fn d_in(&self) -> usize {
        self.inner.d_in()
    }

    #[getter]
    fn d_out(&self) -> usize {
        self.inner.d_out()
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        from_mat(self.inner.matrix())
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues()
    }

    fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eigenvalue()
    }

    /// `(trace_preserving, unital, cp, min_eigenvalue)`.
    #[pyo3(signature = (tol = 1e-9))]
    fn properties(&self, tol: f64) -> (bool, bool, bool, f64) {
        let p = channel::channel_properties(&self.inner, tol);
        (p.trace_preserving, p.unital, p.cp, p.min_eigenvalue)
    }

    fn apply(&self, rho: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(from_mat(&channel::apply_choi(&self.inner, &to_mat(rho)?).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!("Choi(d_in={}, d_out={}, min_eigenvalue={:.6})", self.inner.d_in(), self.inner.d_out(), self.inner.min_eigenvalue())
    }
}

#[pyclass(name = "AccessReport", module = "noncp_py", get_all)]
struct PyAccessReport {
    status: String,
    xi_star: Vec<f64>,
    lambda_min_star: f64,
    iterations: usize,
    converged: bool,
}

#[pymethods]
impl PyAccessReport {
    fn __repr__(&self) -> String {
        format!("AccessReport(status={:?}, lambda_min_star={:.6e})", self.status, self.lambda_min_star)
    }
}

#[pyfunction]
#[pyo3(signature = (choi, tol = access::DEFAULT_TOL))]
fn accessibility_test(choi: &PyChoi, tol: f64) -> PyResult<PyAccessReport> {
    let r = access::linear_accessibility_test(&choi.inner, tol, &OptimizerConfig::default()).map_err(err)?;
    let status = serde_json::to_value(r.status).expect("enum").as_str().unwrap_or_default().to_string();
    Ok(PyAccessReport {
        status,
        xi_star: r.xi_star,
        lambda_min_star: r.lambda_min_star,
        iterations: r.iterations,
        converged: r.converged,
    })
}

#[pyfunction]
#[pyo3(signature = (lo = 0.0, hi = 1.0, p_tol = 1e-8))]
fn tprime_threshold(lo: f64, hi: f64, p_tol: f64) -> PyResult<f64> {
    access::accessibility_threshold(|p| Ok(access::tprime_choi(p)), lo, hi, p_tol, access::DEFAULT_TOL).map_err(err)
}

/// Rows of `(theta, [λ1..λ4], xi_z)` over `points` angles in `[0, 2π]`.
#[pyfunction]
fn spectrum_sweep(a: f64, points: usize) -> PyResult<Vec<(f64, [f64; 4], f64)>> {
    let rows = affine::spectrum_sweep(a, &affine::theta_grid(points)).map_err(err)?;
    Ok(rows.into_iter().map(|r| (r.theta, r.eigenvalues, r.xi_z)).collect())
}

#[pyfunction]
fn toy_positivity_max(alpha_norm: f64) -> PyResult<f64> {
    fano::toy_positivity_max(alpha_norm).map_err(err)
}

#[pyfunction]
fn toy_domain_radius(a: f64) -> PyResult<f64> {
    fano::toy_domain_radius(a).map_err(err)
}

/// Density matrix of the two-qubit toy extension.
#[pyfunction]
fn toy_extension(alpha: [f64; 3], a: f64) -> PyResult<Vec<Vec<Complex64>>> {
    Ok(from_mat(&fano::toy_extension(alpha, a).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (choi, max_iter = 2000, tol = 1e-9))]
fn project_to_cptp(choi: &PyChoi, max_iter: usize, tol: f64) -> PyResult<PyChoi> {
    Ok(PyChoi { inner: tomo::project_to_cptp(&choi.inner, max_iter, tol).map_err(err)?.choi })
}

#[pyclass(name = "Fit", module = "noncp_py", get_all)]
struct PyFit {
    model: String,
    residual: f64,
    choi: PyChoi,
    xi: Option<Vec<f64>>,
}

#[pymethods]
impl PyFit {
    fn __repr__(&self) -> String {
        format!("Fit(model={:?}, residual={:.3e})", self.model, self.residual)
    }
}

/// Simulated tomography of `truth`, fits ranked best first.
#[pyfunction]
#[pyo3(signature = (truth, shots = None, seed = 0))]
fn tomography(truth: &PyChoi, shots: Option<u64>, seed: u64) -> PyResult<Vec<PyFit>> {
    let inputs = tomo::tomographic_inputs(truth.inner.d_in()).map_err(err)?;
    let rec = tomo::simulate_tomography(&truth.inner, &inputs, shots, seed).map_err(err)?;
    let ranked = tomo::template_comparison(&rec, tomo::DEFAULT_TIE_TOL, access::DEFAULT_TOL).map_err(err)?;
    Ok(ranked
        .into_iter()
        .map(|f| PyFit {
            model: serde_json::to_value(f.model).expect("enum").as_str().unwrap_or_default().to_string(),
            residual: f.residual,
            choi: PyChoi { inner: f.choi },
            xi: f.xi,
        })
        .collect())
}

/// Spin-echo sequence applied to `rho` with environment `omega`; returns the final reduced state.
#[pyfunction]
fn spin_echo(g: f64, t: f64, rho: Vec<Vec<Complex64>>, omega: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
    let model = apps::DecouplingModel::spin_echo(g, t);
    Ok(from_mat(&apps::decoupling_sequence(&model, &state(rho)?, &state(omega)?).map_err(err)?))
}

/// Choi matrix of the map undoing spin-echo evolution with a maximally mixed environment.
#[pyfunction]
fn recovery_map(g: f64, t: f64) -> PyResult<PyChoi> {
    let model = apps::DecouplingModel::spin_echo(g, t);
    let r = apps::recovery_map_choi(&model, &DensityMatrix::maximally_mixed(2)).map_err(err)?;
    Ok(PyChoi { inner: r.choi })
}

/// `(assisted, unassisted)` trace distances of `|+⟩`, `|−⟩` through the dephasing-copy channel.
#[pyfunction]
fn dephasing_copy_gain() -> PyResult<(f64, f64)> {
    let ch = apps::dephasing_copy_demo();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = DensityMatrix::pure(&[Complex64::new(h, 0.0), Complex64::new(h, 0.0)]).map_err(err)?;
    let minus = DensityMatrix::pure(&[Complex64::new(h, 0.0), Complex64::new(-h, 0.0)]).map_err(err)?;
    let g = apps::distinguishability_gain(&ch, &plus, &minus).map_err(err)?;
    Ok((g.assisted, g.unassisted))
}

/// Log-log slope of the non-CP magnitude for a random weak-coupling model;
/// `None` when every metric sits at machine precision.
#[pyfunction]
#[pyo3(signature = (seed, d_a = 2, d_b = 2, hi = 1e-1, lo = 1e-3, n = 8))]
fn scaling_exponent(seed: u64, d_a: usize, d_b: usize, hi: f64, lo: f64, n: usize) -> PyResult<Option<f64>> {
    let model = perturb::WeakCouplingModel::random(&mut random::rng(seed), d_a, d_b, 0.0, 0.0).map_err(err)?;
    Ok(match perturb::scaling_exponent(&model, &perturb::geometric_scales(hi, lo, n)).map_err(err)? {
        perturb::ScalingOutcome::Slope(s) => Some(s),
        perturb::ScalingOutcome::MachinePrecision => None,
    })
}

#[pymodule]
pub fn noncp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChoi>()?;
    m.add_class::<PyAccessReport>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(accessibility_test, m)?)?;
    m.add_function(wrap_pyfunction!(tprime_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(toy_positivity_max, m)?)?;
    m.add_function(wrap_pyfunction!(toy_domain_radius, m)?)?;
    m.add_function(wrap_pyfunction!(toy_extension, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_cptp, m)?)?;
    m.add_function(wrap_pyfunction!(tomography, m)?)?;
    m.add_function(wrap_pyfunction!(spin_echo, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_map, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_copy_gain, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_exponent, m)?)?;
    Ok(())
}
