//! Python bindings: hulls and GJK distance, the reference kinematic chain, the
//! QP solver, scenarios and episodes, the Welch test and teleop sessions.

use std::collections::HashMap;

use foresight::controller::ControllerMode;
use foresight::geometry::{distance, ConvexHull, HomTransform, Vec3};
use foresight::kinematics::{reference_c_arm, RobotModel};
use foresight::qp::{solve_qp, QpProblem, QpSettings};
use foresight::simlab::{self, bundled_scenario, load_scenario, EpisodeOptions, EpisodeResult, MetricsReport, Tail};
use foresight::teleop;
use nalgebra::{DMatrix, DVector, Matrix3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn mode(name: &str) -> PyResult<ControllerMode> {
    ControllerMode::parse(name).ok_or_else(|| PyValueError::new_err(format!("controller must be 'base' or 'new', got '{name}'")))
}

fn json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A convex hull given by its vertices.
#[pyclass(name = "Hull", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHull(ConvexHull);

#[pymethods]
impl PyHull {
    #[new]
    fn new(id: String, vertices: Vec<[f64; 3]>) -> PyResult<Self> {
        ConvexHull::new(id, vertices.into_iter().map(Vec3::from).collect()).map(PyHull).map_err(value_err)
    }

    #[staticmethod]
    fn cuboid(id: String, min: [f64; 3], max: [f64; 3]) -> Self {
        PyHull(ConvexHull::cuboid(id, Vec3::from(min), Vec3::from(max)))
    }

    #[getter]
    fn id(&self) -> String {
        self.0.id().to_string()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.0.vertices().iter().map(arr).collect()
    }

    #[getter]
    fn centroid(&self) -> [f64; 3] {
        arr(self.0.centroid())
    }

    fn support(&self, direction: [f64; 3]) -> PyResult<[f64; 3]> {
        self.0.support(&Vec3::from(direction)).map(|p| arr(&p)).map_err(value_err)
    }

    /// The hull moved by XYZ angles [rad] and a translation.
    #[pyo3(signature = (angles, translation=[0.0; 3]))]
    fn transformed(&self, angles: [f64; 3], translation: [f64; 3]) -> Self {
        PyHull(self.0.transformed(&HomTransform::from_xyz_angles(&Vec3::from(angles), Vec3::from(translation))))
    }

    fn __repr__(&self) -> String {
        format!("Hull('{}', {} vertices)", self.0.id(), self.0.vertices().len())
    }
}

type Separated = (f64, [f64; 3], [f64; 3]);

/// `(distance, point_on_a, point_on_b)` for separated hulls, `None` when they collide.
#[pyfunction(name = "distance")]
fn py_distance(a: &PyHull, b: &PyHull) -> PyResult<Option<Separated>> {
    let r = distance(&a.0, &b.0).map_err(value_err)?;
    Ok(r.separation().map(|s| (s.distance, arr(&s.p_robot), arr(&s.p_obstacle))))
}

/// The three-joint C-arm model.
#[pyclass(name = "Robot", frozen)]
struct PyRobot(RobotModel);

#[pymethods]
impl PyRobot {
    #[staticmethod]
    fn c_arm() -> Self {
        PyRobot(reference_c_arm())
    }

    #[getter]
    fn links(&self) -> Vec<String> {
        self.0.links().iter().map(|l| l.name.clone()).collect()
    }

    /// End-effector XYZ angles at joint configuration `q`.
    fn end_effector_angles(&self, q: [f64; 3]) -> [f64; 3] {
        arr(&self.0.forward_kinematics(&Vec3::from(q)).x_e)
    }

    /// `J(q)` with `x_e' = J(q) q'`, as rows.
    fn jacobian(&self, q: [f64; 3]) -> PyResult<[[f64; 3]; 3]> {
        self.0.jacobian_end_effector(&Vec3::from(q)).map(|j| rows(&j)).map_err(value_err)
    }

    /// World position of the link-frame point `r` on `link`.
    fn point_position(&self, q: [f64; 3], r: [f64; 3], link: usize) -> PyResult<[f64; 3]> {
        self.0.point_position(&Vec3::from(q), &Vec3::from(r), link).map(|p| arr(&p)).map_err(value_err)
    }

    fn point_jacobian(&self, q: [f64; 3], r: [f64; 3], link: usize) -> PyResult<[[f64; 3]; 3]> {
        self.0.jacobian_point(&Vec3::from(q), &Vec3::from(r), link).map(|j| rows(&j)).map_err(value_err)
    }

    /// World hulls of every link at `q`.
    fn hulls(&self, q: [f64; 3]) -> Vec<PyHull> {
        let pose = self.0.forward_kinematics(&Vec3::from(q));
        self.0
            .links()
            .iter()
            .zip(self.0.hull_poses(&pose))
            .flat_map(|(l, ps)| l.hulls.iter().zip(ps).map(|(h, p)| PyHull(h.hull.transformed(&p))).collect::<Vec<_>>())
            .collect()
    }
}

/// Minimizes `½ xᵀHx + gᵀx` subject to `lower ≤ A x ≤ upper`. Returns `(x, objective)`.
#[pyfunction(name = "solve_qp")]
#[pyo3(signature = (hessian, linear, constraints=vec![], lower=vec![], upper=vec![]))]
fn py_solve_qp(hessian: Vec<Vec<f64>>, linear: Vec<f64>, constraints: Vec<Vec<f64>>, lower: Vec<f64>, upper: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let n = linear.len();
    let matrix = |rows: &[Vec<f64>], what: &str| -> PyResult<DMatrix<f64>> {
        if rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err(format!("every row of {what} needs {n} entries")));
        }
        Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    };
    let qp = QpProblem {
        hessian: matrix(&hessian, "hessian")?,
        linear: DVector::from_vec(linear),
        constraints: matrix(&constraints, "constraints")?,
        lower: DVector::from_vec(lower),
        upper: DVector::from_vec(upper),
    };
    let sol = solve_qp(&qp, &QpSettings::default()).map_err(value_err)?;
    Ok((sol.x.iter().copied().collect(), sol.objective))
}

fn metrics_dict(m: &MetricsReport) -> HashMap<String, f64> {
    MetricsReport::NAMES.iter().filter_map(|n| m.get(n).map(|v| (n.to_string(), v))).collect()
}

#[pyclass(name = "Scenario", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyScenario(simlab::Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_scenario(path).map(PyScenario).map_err(value_err)
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        bundled_scenario(name)
            .ok_or_else(|| PyValueError::new_err(format!("no bundled scenario '{name}'")))?
            .map(PyScenario)
            .map_err(value_err)
    }

    #[staticmethod]
    fn bundled_names() -> Vec<&'static str> {
        simlab::BUNDLED_SCENARIOS.iter().map(|(n, _)| *n).collect()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        simlab::Scenario::from_json(text, "<string>").map(PyScenario).map_err(value_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn controller(&self) -> &'static str {
        self.0.controller.mode.as_str()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    fn with_controller(&self, controller: &str) -> PyResult<Self> {
        self.0.with_mode(mode(controller)?).map(PyScenario).map_err(value_err)
    }

    fn with_seed(&self, seed: u64) -> PyResult<Self> {
        self.0.with_seed(seed).map(PyScenario).map_err(value_err)
    }

    fn run(&self) -> PyEpisode {
        PyEpisode(simlab::run_episode(&self.0))
    }

    /// Metrics of `episodes` episodes seeded `seed, seed + 1, ...`.
    fn batch(&self, py: Python<'_>, episodes: usize, seed: u64) -> PyResult<Vec<HashMap<String, f64>>> {
        let opts = EpisodeOptions { profile: false, keep_outcomes: false };
        let s = self.0.clone();
        let batch = py.detach(move || simlab::run_batch(&s, episodes, seed, opts)).map_err(value_err)?;
        Ok(batch.iter().map(|e| metrics_dict(&e.metrics)).collect())
    }
}

#[pyclass(name = "Episode", frozen)]
struct PyEpisode(EpisodeResult);

#[pymethods]
impl PyEpisode {
    #[getter]
    fn metrics(&self) -> HashMap<String, f64> {
        metrics_dict(&self.0.metrics)
    }

    /// Joint configuration at every cycle.
    #[getter]
    fn q(&self) -> Vec<[f64; 3]> {
        self.0.records.iter().map(|r| arr(&r.state.q)).collect()
    }

    #[getter]
    fn u(&self) -> Vec<[f64; 3]> {
        self.0.records.iter().map(|r| arr(&r.u)).collect()
    }

    #[getter]
    fn min_distance(&self) -> Vec<f64> {
        self.0.records.iter().map(|r| r.min_dist).collect()
    }

    /// Mean absolute error of the predicted minimal distance per look-ahead step.
    #[getter]
    fn profile(&self) -> Vec<f64> {
        self.0.profile.mean.clone()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }
}

/// One-tailed Welch test of `mean(a) < mean(b)` (or `>` with `tail="greater"`).
#[pyfunction]
#[pyo3(signature = (a, b, tail="less", alpha=simlab::DEFAULT_ALPHA))]
fn welch<'py>(py: Python<'py>, a: Vec<f64>, b: Vec<f64>, tail: &str, alpha: f64) -> PyResult<Bound<'py, PyAny>> {
    let tail = match tail {
        "less" => Tail::Less,
        "greater" => Tail::Greater,
        other => return Err(PyValueError::new_err(format!("tail must be 'less' or 'greater', got '{other}'"))),
    };
    let w = simlab::compare(&a, &b, tail, alpha).map_err(value_err)?;
    json(py, &serde_json::json!({ "t": w.t, "df": w.df, "p": w.p, "significant": w.significant }))
}

/// A live shared-control session with explicit time.
#[pyclass(name = "Session")]
struct PySession(teleop::Session);

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (scenario, controller="new"))]
    fn new(scenario: &PyScenario, controller: &str) -> PyResult<Self> {
        teleop::Session::start(&scenario.0, mode(controller)?).map(PySession).map_err(value_err)
    }

    fn submit_command<'py>(&mut self, py: Python<'py>, velocity: [f64; 3], seq: u64, now: f64) -> PyResult<Bound<'py, PyAny>> {
        let ack = self.0.submit_command(Vec3::from(velocity), seq, now).map_err(value_err)?;
        json(py, &ack)
    }

    fn tick<'py>(&mut self, py: Python<'py>, now: f64) -> PyResult<Bound<'py, PyAny>> {
        let snap = self.0.tick(now).map_err(value_err)?;
        json(py, &snap)
    }

    fn scene<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, &self.0.scene())
    }

    #[getter]
    fn q(&self) -> [f64; 3] {
        arr(&self.0.state().q)
    }

    /// The event log as JSON, replayable with `replay`.
    fn log(&self) -> PyResult<String> {
        serde_json::to_string(self.0.log()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Snapshots reproduced from a session log.
#[pyfunction]
#[pyo3(signature = (scenario, log, controller="new"))]
fn replay<'py>(py: Python<'py>, scenario: &PyScenario, log: &str, controller: &str) -> PyResult<Bound<'py, PyAny>> {
    let events: Vec<teleop::SessionEvent> = serde_json::from_str(log).map_err(value_err)?;
    let snaps = teleop::replay(&scenario.0, mode(controller)?, &events).map_err(value_err)?;
    json(py, &snaps)
}

#[pymodule]
fn foresight_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHull>()?;
    m.add_class::<PyRobot>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyEpisode>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(py_distance, m)?)?;
    m.add_function(wrap_pyfunction!(py_solve_qp, m)?)?;
    m.add_function(wrap_pyfunction!(welch, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
