//! Python bindings: `import ioident_py`.

use std::collections::BTreeMap;
use std::fmt::Display;

use ioident::estimate::{self, FitOptions, FreeParam, PosteriorGrid};
use ioident::ident::{self, SensitivityTrajectory};
use ioident::lti::{self, SampledFunction};
use ioident::model_file::{load_model, LoadedModel, ModelFile};
use ioident::{InputSignal, ParamMap, SolverConfig};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(ioident_py, IoidentError, PyException);

fn err<E: Display>(e: E) -> PyErr {
    IoidentError::new_err(e.to_string())
}

#[pyclass(name = "Signal", module = "ioident_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySignal {
    inner: InputSignal,
}

#[pymethods]
impl PySignal {
    /// Parses a compact spec such as `step:1`, `pulse:1,0,1` or `ramp:0.5`.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self { inner: spec.parse().map_err(err)? })
    }

    #[staticmethod]
    fn step(u0: f64) -> PyResult<Self> {
        Ok(Self { inner: InputSignal::step(u0).map_err(err)? })
    }

    #[staticmethod]
    fn pulse(u0: f64, t_on: f64, t_off: f64) -> PyResult<Self> {
        Ok(Self { inner: InputSignal::pulse(u0, t_on, t_off).map_err(err)? })
    }

    #[staticmethod]
    fn ramp(slope: f64) -> PyResult<Self> {
        Ok(Self { inner: InputSignal::ramp(slope).map_err(err)? })
    }

    #[staticmethod]
    fn impulse(area: f64, width: f64) -> PyResult<Self> {
        Ok(Self { inner: InputSignal::impulse(area, width).map_err(err)? })
    }

    fn eval(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }

    fn laplace(&self, s: Complex64) -> PyResult<Complex64> {
        self.inner.laplace(s).map_err(err)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Signal('{}')", self.inner)
    }
}

#[pyclass(name = "Trajectory", module = "ioident_py", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    state_names: Vec<String>,
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    inputs: Vec<f64>,
    #[pyo3(get)]
    outputs: Vec<f64>,
    #[pyo3(get)]
    states: Vec<Vec<f64>>,
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.times.len()
    }

    /// CSV text with columns `t,u,y,x_<state>...`.
    fn to_csv(&self) -> PyResult<String> {
        let traj = ioident::Trajectory {
            state_names: self.state_names.clone(),
            times: self.times.clone(),
            inputs: self.inputs.clone(),
            states: self.states.clone(),
            outputs: self.outputs.clone(),
        };
        let mut buf = Vec::new();
        ioident::io::write_trajectory(&traj, &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }
}

impl From<ioident::Trajectory> for PyTrajectory {
    fn from(t: ioident::Trajectory) -> Self {
        Self { state_names: t.state_names, times: t.times, inputs: t.inputs, outputs: t.outputs, states: t.states }
    }
}

/// Eigen-decomposition of an information matrix as a plain dict.
fn gram_dict<'py>(py: Python<'py>, g: &ident::GramReport) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let d = PyDict::new(py);
    d.set_item("param_names", g.param_names.clone())?;
    let rows: Vec<Vec<f64>> = g.matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
    d.set_item("matrix", rows)?;
    d.set_item("eigenvalues", g.eigenvalues.clone())?;
    let vecs: Vec<Vec<f64>> = g.eigenvectors.column_iter().map(|c| c.iter().copied().collect()).collect();
    d.set_item("eigenvectors", vecs)?;
    d.set_item("rank", g.rank)?;
    d.set_item("threshold", g.threshold)?;
    let nulls: Vec<Vec<f64>> = g.null_directions.iter().map(|v| v.iter().copied().collect()).collect();
    d.set_item("null_directions", nulls)?;
    Ok(d)
}

#[pyclass(name = "Sensitivity", module = "ioident_py", frozen)]
struct PySensitivity {
    inner: SensitivityTrajectory,
}

#[pymethods]
impl PySensitivity {
    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names.clone()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    /// One row per time, one column per parameter.
    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows.clone()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner.column_by_name(name).ok_or_else(|| err(format!("no parameter `{name}`")))
    }

    fn select(&self, names: Vec<String>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.select(&names).map_err(err)? })
    }

    fn at_times(&self, times: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.at_times(&times).map_err(err)? })
    }

    #[pyo3(signature = (tol = ident::DEFAULT_GRAM_TOL))]
    fn gram<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        gram_dict(py, &ident::gram_matrix_with_tol(&self.inner, tol).map_err(err)?)
    }

    /// Fisher information at the sampled times and per-parameter variance bounds.
    #[pyo3(signature = (sigma, tol = ident::DEFAULT_GRAM_TOL))]
    fn cramer_rao<'py>(&self, py: Python<'py>, sigma: f64, tol: f64) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let c = ident::fisher_cramer_rao_with_tol(&self.inner, sigma, tol).map_err(err)?;
        let d = gram_dict(py, &c.fim)?;
        d.set_item("sigma", c.sigma)?;
        d.set_item("crb", c.crb)?;
        Ok(d)
    }
}

#[pyclass(name = "Experiment", module = "ioident_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyExperiment {
    inner: estimate::Experiment,
}

#[pymethods]
impl PyExperiment {
    #[new]
    #[pyo3(signature = (signal, times, observations, sigma = 0.0))]
    fn new(signal: &PySignal, times: Vec<f64>, observations: Vec<f64>, sigma: f64) -> PyResult<Self> {
        Ok(Self { inner: estimate::Experiment::new(signal.inner.clone(), times, observations, sigma).map_err(err)? })
    }

    #[getter]
    fn signal(&self) -> PySignal {
        PySignal { inner: self.inner.signal.clone() }
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.sample_times.clone()
    }

    #[getter]
    fn observations(&self) -> Vec<f64> {
        self.inner.observations.clone()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }
}

#[pyclass(name = "Model", module = "ioident_py", frozen)]
struct PyModel {
    inner: LoadedModel,
}

impl PyModel {
    fn params(&self, overrides: Option<BTreeMap<String, f64>>) -> PyResult<ParamMap> {
        let mut p = self.inner.defaults.clone();
        for (k, v) in overrides.unwrap_or_default() {
            if self.inner.system.param_index(&k).is_none() {
                return Err(err(format!("model has no parameter `{k}`")));
            }
            p.insert(k, v);
        }
        Ok(p)
    }
}

#[pymethods]
impl PyModel {
    /// Registry id (e.g. `lambda-system`) or path to a JSON model file.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self { inner: load_model(spec).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let (system, defaults) = ModelFile::from_json(text).and_then(|m| m.build()).map_err(err)?;
        Ok(Self { inner: LoadedModel { name: "<json>".into(), system, defaults } })
    }

    #[staticmethod]
    fn registry() -> Vec<&'static str> {
        ioident::systems::registry_ids()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.system.state_names().to_vec()
    }

    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.inner.system.param_names().to_vec()
    }

    #[getter]
    fn defaults(&self) -> BTreeMap<String, f64> {
        self.inner.defaults.clone()
    }

    #[pyo3(signature = (signal, t1, params = None, t0 = 0.0, h = ioident::sim::DEFAULT_STEP))]
    fn simulate(&self, signal: &PySignal, t1: f64, params: Option<BTreeMap<String, f64>>, t0: f64, h: f64) -> PyResult<PyTrajectory> {
        let p = self.params(params)?;
        let traj = ioident::integrate(&self.inner.system, &p, &signal.inner, (t0, t1), &SolverConfig::with_step(h)).map_err(err)?;
        Ok(traj.into())
    }

    #[pyo3(signature = (signal, t1, params = None, h = ioident::sim::DEFAULT_STEP, samples = Vec::new()))]
    fn sensitivities(
        &self,
        signal: &PySignal,
        t1: f64,
        params: Option<BTreeMap<String, f64>>,
        h: f64,
        samples: Vec<f64>,
    ) -> PyResult<PySensitivity> {
        let p = self.params(params)?;
        let cfg = SolverConfig::with_step(h);
        let s = ident::sensitivity_with_samples(&self.inner.system, &p, &signal.inner, (0.0, t1), &cfg, &samples).map_err(err)?;
        Ok(PySensitivity { inner: s })
    }

    /// Noise-free (or Gaussian-noise) samples of the output.
    #[pyo3(signature = (signal, times, sigma = 0.0, seed = 0, params = None, h = ioident::sim::DEFAULT_STEP))]
    fn synthesize(
        &self,
        signal: &PySignal,
        times: Vec<f64>,
        sigma: f64,
        seed: u64,
        params: Option<BTreeMap<String, f64>>,
        h: f64,
    ) -> PyResult<PyExperiment> {
        let p = self.params(params)?;
        let e = estimate::synthesize_data(&self.inner.system, &p, &signal.inner, &times, sigma, seed, &SolverConfig::with_step(h))
            .map_err(err)?;
        Ok(PyExperiment { inner: e })
    }

    /// Least-squares fit. `free` maps a parameter to `initial` or `(initial, lower, upper)`.
    #[pyo3(signature = (experiments, free, params = None, h = ioident::sim::DEFAULT_STEP, max_iterations = 200))]
    fn fit<'py>(
        &self,
        py: Python<'py>,
        experiments: Vec<PyExperiment>,
        free: BTreeMap<String, Bound<'py, PyAny>>,
        params: Option<BTreeMap<String, f64>>,
        h: f64,
        max_iterations: usize,
    ) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let p = self.params(params)?;
        let mut fp = Vec::new();
        for (name, spec) in &free {
            if let Ok(init) = spec.extract::<f64>() {
                fp.push(FreeParam::unbounded(name, init));
            } else {
                let (init, lo, hi): (f64, f64, f64) = spec.extract()?;
                fp.push(FreeParam::new(name, init, lo, hi));
            }
        }
        let exps: Vec<_> = experiments.into_iter().map(|e| e.inner).collect();
        let opts = FitOptions { max_iterations, ..FitOptions::default() };
        let r = match estimate::least_squares_fit(&self.inner.system, &exps, &p, &fp, &SolverConfig::with_step(h), &opts) {
            Ok(r) => r,
            Err(estimate::EstimateError::NotConverged { best }) => *best,
            Err(e) => return Err(err(e)),
        };
        let d = pyo3::types::PyDict::new(py);
        let estimate: BTreeMap<String, f64> = r.names.iter().cloned().zip(r.estimate.iter().copied()).collect();
        let std: BTreeMap<String, f64> =
            r.names.iter().enumerate().map(|(j, n)| (n.clone(), r.covariance.variance(j).sqrt())).collect();
        d.set_item("estimate", estimate)?;
        d.set_item("std", std)?;
        d.set_item("cost", r.cost)?;
        d.set_item("iterations", r.iterations)?;
        d.set_item("converged", r.converged)?;
        let nulls: Vec<Vec<f64>> = r.covariance.null_directions().iter().map(|v| v.iter().copied().collect()).collect();
        d.set_item("null_directions", nulls)?;
        Ok(d)
    }

    /// Grid posterior from a uniform prior; `prior` maps each parameter to its axis values.
    #[pyo3(signature = (prior, experiments, params = None, h = ioident::sim::DEFAULT_STEP))]
    fn posterior<'py>(
        &self,
        py: Python<'py>,
        prior: Vec<(String, Vec<f64>)>,
        experiments: Vec<PyExperiment>,
        params: Option<BTreeMap<String, f64>>,
        h: f64,
    ) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let p = self.params(params)?;
        let names: Vec<&str> = prior.iter().map(|(n, _)| n.as_str()).collect();
        let mut grid = PosteriorGrid::uniform(&names, prior.iter().map(|(_, a)| a.clone()).collect()).map_err(err)?;
        let cfg = SolverConfig::with_step(h);
        for e in &experiments {
            grid = estimate::bayes_update(&grid, &e.inner, &self.inner.system, &p, &cfg).map_err(err)?;
        }
        let d = pyo3::types::PyDict::new(py);
        d.set_item("names", grid.names.clone())?;
        d.set_item("cells", (0..grid.n_cells()).map(|k| grid.cell_values(k)).collect::<Vec<_>>())?;
        d.set_item("probabilities", grid.probabilities())?;
        d.set_item("mode", grid.mode())?;
        d.set_item("mean", (0..names.len()).map(|k| grid.mean(k)).collect::<Vec<_>>())?;
        d.set_item("std", (0..names.len()).map(|k| grid.std(k)).collect::<Vec<_>>())?;
        Ok(d)
    }
}

#[pyclass(name = "Lti", module = "ioident_py", frozen)]
struct PyLti {
    inner: ioident::LinearSystem,
}

#[pymethods]
impl PyLti {
    /// `a` is either the scalar decay rate (A = [-a]) or the matrix A as rows.
    #[new]
    fn new(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>, c: &Bound<'_, PyAny>) -> PyResult<Self> {
        let sys = if let Ok(rate) = a.extract::<f64>() {
            ioident::LinearSystem::scalar(rate, b.extract()?, c.extract()?)
        } else {
            let rows: Vec<Vec<f64>> = a.extract()?;
            let (b, c): (Vec<f64>, Vec<f64>) = (b.extract()?, c.extract()?);
            ioident::LinearSystem::from_rows(&rows, &b, &c)
        };
        Ok(Self { inner: sys.map_err(err)? })
    }

    fn gain(&self) -> PyResult<f64> {
        lti::steady_state_gain(&self.inner).map_err(err)
    }

    fn markov(&self, m: usize) -> Vec<f64> {
        lti::markov_parameters(&self.inner, m)
    }

    #[pyo3(signature = (tol = lti::DEFAULT_RANK_TOL))]
    fn is_minimal(&self, tol: f64) -> bool {
        lti::minimality(&self.inner, tol).minimal
    }

    fn impulse(&self, t: f64) -> PyResult<f64> {
        lti::impulse_response(&self.inner, t).map_err(err)
    }

    fn step(&self, t: f64) -> PyResult<f64> {
        lti::step_response(&self.inner, t).map_err(err)
    }

    fn frequency_response(&self, s: Complex64) -> PyResult<Complex64> {
        lti::frequency_response(&self.inner, s).map_err(err)
    }

    #[pyo3(signature = (other, tol = lti::DEFAULT_EQUIV_TOL))]
    fn equivalent(&self, other: &PyLti, tol: f64) -> PyResult<bool> {
        lti::io_equivalent(&self.inner, &other.inner, tol).map_err(err)
    }

    /// `T` with `(T A1 T^-1, T b1, c1 T^-1) = (A2, b2, c2)`, as rows.
    #[pyo3(signature = (other, tol = lti::DEFAULT_EQUIV_TOL))]
    fn similarity(&self, other: &PyLti, tol: f64) -> PyResult<Vec<Vec<f64>>> {
        let t = lti::find_similarity(&self.inner, &other.inner, tol).map_err(err)?;
        Ok(t.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

/// Impulse response from output and input samples on a uniform grid from t = 0.
#[pyfunction]
#[pyo3(signature = (y, u, h, ridge = None))]
fn deconvolve(y: Vec<f64>, u: Vec<f64>, h: f64, ridge: Option<f64>) -> PyResult<Vec<f64>> {
    let y = SampledFunction::new(0.0, h, y).map_err(err)?;
    let u = SampledFunction::new(0.0, h, u).map_err(err)?;
    let ridge = ridge.unwrap_or_else(|| lti::default_ridge(&u));
    Ok(lti::deconvolve_impulse(&y, &u, ridge).map_err(err)?.values().to_vec())
}

/// Gray-box bound `b = K'(0) / c` for interval-valued `K'(0)` and `c`.
#[pyfunction]
fn gray_box(kprime0: (f64, f64), c: (f64, f64)) -> PyResult<(f64, f64)> {
    let k = ident::Interval::new(kprime0.0, kprime0.1).map_err(err)?;
    let c = ident::Interval::new(c.0, c.1).map_err(err)?;
    let b = ident::propagate_gray_box(k, c).map_err(err)?;
    Ok((b.lo, b.hi))
}

/// Runs the worked-example battery; returns `(all_passed, report_text)`.
#[pyfunction]
fn run_demo(py: Python<'_>) -> (bool, String) {
    let report = py.detach(ioident::demo::run_paper_demo);
    (report.all_passed(), report.render())
}

/// Runs the command line with `argv` (without the program name); returns `(code, stdout, stderr)`.
#[pyfunction]
fn run_command(argv: Vec<String>) -> (i32, String, String) {
    let full: Vec<String> = std::iter::once("ioident".to_string()).chain(argv).collect();
    let (mut out, mut errb) = (Vec::new(), Vec::new());
    let code = ioident::cli::run_command(&full, &mut out, &mut errb);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&errb).into_owned())
}

#[pymodule]
fn ioident_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IoidentError", m.py().get_type::<IoidentError>())?;
    m.add_class::<PySignal>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PySensitivity>()?;
    m.add_class::<PyExperiment>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyLti>()?;
    m.add_function(wrap_pyfunction!(deconvolve, m)?)?;
    m.add_function(wrap_pyfunction!(gray_box, m)?)?;
    m.add_function(wrap_pyfunction!(run_demo, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    Ok(())
}
