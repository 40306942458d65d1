//! Receding-horizon shared controller.
//!
//! Each cycle the controller linearizes the kinematics at `x(k)` (Jacobians
//! frozen over the horizon), condenses the predicted end-effector states and
//! closest-point positions into affine functions of the stacked inputs, and
//! solves a QP over
//!
//! ```text
//!     z = [u_0 … u_{N−1}, ε_0 … ε_{N−1}]
//! ```
//!
//! minimizing `Σ ‖J u_i − ẋ_d‖²_Q + ‖Δu_i‖²_R + S ε_i²` subject to joint and
//! end-effector limits, `0 ≤ ε_i ≤ ε_ub`, and `d_lb − ε_{i−1} ≤ d_{i|k}` for
//! every predicted distance at steps `i = 1..N`. The baseline mode keeps only
//! the current closest points; the future mode adds the rows of the future
//! closest points.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::kinematics::{ControlInput, KinematicsError, RobotModel, SystemState, JOINT_COUNT};
use crate::prediction::{
    future_closest_points, predict_distance, ClosestPointTrack, Obstacle, PredictionConfig, PredictionError,
    TrajectoryPlan,
};
use crate::qp::{solve_qp, QpError, QpProblem, QpSettings, QpSolution};

/// Distance lower bound used by the presets.
pub const DEFAULT_D_LB: f64 = 0.15;
pub const DEFAULT_TS: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerMode {
    /// Distance rows for the current closest points only.
    Baseline,
    /// Adds distance rows for the future closest points.
    Future,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::Baseline => "base",
            ControllerMode::Future => "new",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base" | "baseline" => Some(ControllerMode::Baseline),
            "new" | "future" => Some(ControllerMode::Future),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub ts: f64,
    pub q_weight: Matrix3<f64>,
    pub r_weight: Matrix3<f64>,
    pub slack_weight: f64,
    pub d_lb: f64,
    pub eps_ub: f64,
    pub mode: ControllerMode,
    pub prediction: PredictionConfig,
    pub qp: QpSettings,
    /// Added to the input block of the Hessian so that singular `Q`, `R` still give a strictly convex QP.
    pub regularization: f64,
}

impl MpcConfig {
    /// Tuned parameters for `mode`: `N = 16` for both; `S = 1.1e5, ε_ub = 0.12`
    /// for the baseline and `S = 1.8e5, ε_ub = 5.2e-3` with future rows.
    pub fn preset(mode: ControllerMode) -> Self {
        let (slack_weight, eps_ub) = match mode {
            ControllerMode::Baseline => (1.1e5, 0.12),
            ControllerMode::Future => (1.8e5, 5.2e-3),
        };
        Self {
            horizon: DEFAULT_HORIZON,
            ts: DEFAULT_TS,
            q_weight: Matrix3::identity(),
            r_weight: Matrix3::identity() * 10.0,
            slack_weight,
            d_lb: DEFAULT_D_LB,
            eps_ub,
            mode,
            prediction: PredictionConfig::with_horizon(DEFAULT_HORIZON),
            qp: QpSettings::default(),
            regularization: 1e-9,
        }
    }

    /// Same config with the horizon and the look-ahead step moved together.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        let PredictionConfig { d_min, gamma0, .. } = self.prediction;
        self.prediction = PredictionConfig { d_min, gamma0, ..PredictionConfig::with_horizon(horizon) };
        self
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidConfig(m.into()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return bad("sample time must be positive");
        }
        for (name, w) in [("Q", &self.q_weight), ("R", &self.r_weight)] {
            if (w - w.transpose()).amax() > 1e-12 || w.symmetric_eigenvalues().min() < -1e-12 {
                return Err(ControllerError::InvalidConfig(format!("{name} must be symmetric positive semidefinite")));
            }
        }
        if self.slack_weight.is_nan() || self.slack_weight <= 0.0 {
            return bad("slack weight must be positive");
        }
        if !(self.eps_ub >= 0.0 && self.d_lb >= self.eps_ub) {
            return bad("need d_lb >= eps_ub >= 0");
        }
        if self.regularization.is_nan() || self.regularization < 0.0 {
            return bad("regularization must be non-negative");
        }
        if self.prediction.horizon != self.horizon {
            return bad("prediction horizon must equal the controller horizon");
        }
        self.prediction.validate()?;
        Ok(())
    }

    pub fn num_variables(&self) -> usize {
        (JOINT_COUNT + 1) * self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointKind {
    Current,
    Future,
}

/// Affine distance model of one closest point under the frozen Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    pub link: usize,
    pub kind: PointKind,
    pub obstacle: usize,
    pub d0: f64,
    pub gradient: Vec3,
    pub p_now: Vec3,
    /// Linear-velocity Jacobian of the point at `x(k)`.
    pub jacobian: Matrix3<f64>,
}

impl PointMap {
    /// Predicted distance after the joint displacement `dq`.
    pub fn distance_after(&self, dq: &Vec3) -> Result<f64, PredictionError> {
        predict_distance(self.d0, &self.gradient, &(self.p_now + self.jacobian * dq), &self.p_now)
    }

    /// `∂d/∂q`, the row used in the QP.
    pub fn sensitivity(&self) -> Vec3 {
        self.jacobian.transpose() * self.gradient.normalize()
    }
}

/// Frozen-Jacobian Euler prediction from `x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPrediction {
    pub ts: f64,
    pub x_k: SystemState,
    pub j_e: Matrix3<f64>,
    pub points: Vec<PointMap>,
}

impl LinearPrediction {
    /// `Ts Σ_{j<i} u_j`.
    pub fn displacement(&self, inputs: &[ControlInput], i: usize) -> Vec3 {
        inputs[..i].iter().fold(Vec3::zeros(), |acc, u| acc + u.0) * self.ts
    }

    /// Predicted `x_{i|k}`.
    pub fn state(&self, inputs: &[ControlInput], i: usize) -> SystemState {
        let dq = self.displacement(inputs, i);
        SystemState { x_e: self.x_k.x_e + self.j_e * dq, q: self.x_k.q + dq }
    }

    /// Predicted position of point `p` at step `i`.
    pub fn point_position(&self, p: usize, inputs: &[ControlInput], i: usize) -> Vec3 {
        let m = &self.points[p];
        m.p_now + m.jacobian * self.displacement(inputs, i)
    }
}

/// Freezes the Jacobians at `x(k)` and builds the affine point models.
/// Points with a zero gradient carry no direction and are skipped.
pub fn linearize(
    model: &RobotModel,
    x_k: &SystemState,
    tracks: &[ClosestPointTrack],
    ts: f64,
) -> Result<LinearPrediction, KinematicsError> {
    let j_e = model.jacobian_end_effector(&x_k.q)?;
    let pose = model.forward_kinematics(&x_k.q);
    let mut points = Vec::new();
    let mut seen_current = Vec::new();
    for t in tracks {
        let link = model.link(t.link_index)?;
        let mut push = |kind, est: &crate::prediction::PointEstimate| {
            if est.gradient.norm() > 0.0 {
                points.push(PointMap {
                    link: t.link_index,
                    kind,
                    obstacle: t.obstacle_index,
                    d0: est.distance,
                    gradient: est.gradient,
                    p_now: est.p_global,
                    jacobian: model.jacobian_point_at(&pose, &est.r_local, link),
                });
            }
        };
        if !seen_current.contains(&t.link_index) {
            seen_current.push(t.link_index);
            push(PointKind::Current, &t.current);
        }
        if let Some(f) = &t.future {
            push(PointKind::Future, f);
        }
    }
    Ok(LinearPrediction { ts, x_k: *x_k, j_e, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSource {
    JointPosition { step: usize, joint: usize },
    JointVelocity { step: usize, joint: usize },
    JointAcceleration { step: usize, joint: usize },
    JointJerk { step: usize, joint: usize },
    EndEffectorAngle { step: usize, axis: usize },
    EndEffectorVelocity { step: usize, axis: usize },
    SlackBound { step: usize },
    DistanceCurrent { step: usize, link: usize },
    DistanceFuture { step: usize, link: usize },
}

impl RowSource {
    pub fn is_distance(&self) -> bool {
        matches!(self, RowSource::DistanceCurrent { .. } | RowSource::DistanceFuture { .. })
    }
}

/// A condensed MPC problem with the origin of every constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcQp {
    pub problem: QpProblem,
    pub sources: Vec<RowSource>,
    pub horizon: usize,
    /// Constant term of each distance row: predicted distance `= d0 + A_u z`.
    pub distance_offsets: Vec<(usize, f64)>,
}

impl MpcQp {
    pub fn u_index(&self, step: usize, joint: usize) -> usize {
        JOINT_COUNT * step + joint
    }

    pub fn eps_index(&self, step: usize) -> usize {
        JOINT_COUNT * self.horizon + step
    }

    pub fn inputs(&self, z: &DVector<f64>) -> Vec<ControlInput> {
        (0..self.horizon).map(|i| ControlInput(Vec3::new(z[3 * i], z[3 * i + 1], z[3 * i + 2]))).collect()
    }

    pub fn slacks(&self, z: &DVector<f64>) -> Vec<f64> {
        (0..self.horizon).map(|i| z[self.eps_index(i)]).collect()
    }
}

struct RowBuilder {
    n: usize,
    rows: Vec<DVector<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    sources: Vec<RowSource>,
}

impl RowBuilder {
    fn push(&mut self, coeffs: &[(usize, f64)], lower: f64, upper: f64, source: RowSource) -> usize {
        let mut row = DVector::zeros(self.n);
        for (j, c) in coeffs {
            row[*j] += c;
        }
        self.rows.push(row);
        self.lower.push(lower);
        self.upper.push(upper);
        self.sources.push(source);
        self.rows.len() - 1
    }
}

/// Builds the condensed QP for one cycle.
pub fn assemble_qp(
    model: &RobotModel,
    lin: &LinearPrediction,
    x_dot_desired: &Vec3,
    cfg: &MpcConfig,
    u_prev: &ControlInput,
) -> MpcQp {
    let n_h = cfg.horizon;
    let nu = JOINT_COUNT * n_h;
    let n = nu + n_h;
    let ts = cfg.ts;
    let u = |i: usize, j: usize| JOINT_COUNT * i + j;
    let eps = |i: usize| nu + i;

    // Cost.
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let jqj = lin.j_e.transpose() * cfg.q_weight * lin.j_e * 2.0;
    let track = lin.j_e.transpose() * cfg.q_weight * x_dot_desired * -2.0;
    let r2 = cfg.r_weight * 2.0;
    for i in 0..n_h {
        let b = JOINT_COUNT * i;
        let mut block = jqj + r2 + Matrix3::identity() * cfg.regularization;
        if i + 1 < n_h {
            block += r2;
        }
        h.fixed_view_mut::<3, 3>(b, b).copy_from(&block);
        if i > 0 {
            h.fixed_view_mut::<3, 3>(b, b - 3).copy_from(&(-r2));
            h.fixed_view_mut::<3, 3>(b - 3, b).copy_from(&(-r2));
        }
        g.fixed_rows_mut::<3>(b).copy_from(&track);
        h[(eps(i), eps(i))] = 2.0 * cfg.slack_weight;
    }
    let anchor = -(r2 * u_prev.0);
    let mut g0 = g.fixed_rows_mut::<3>(0);
    g0 += anchor;

    // Constraints.
    let jl = model.joint_limits();
    let el = model.ee_limits();
    let mut rb = RowBuilder { n, rows: Vec::new(), lower: Vec::new(), upper: Vec::new(), sources: Vec::new() };
    let cumulative = |i: usize, weights: &[f64; 3]| -> Vec<(usize, f64)> {
        (0..i).flat_map(|s| (0..3).map(move |j| (u(s, j), ts * weights[j]))).filter(|(_, c)| *c != 0.0).collect()
    };
    for i in 0..n_h {
        for j in 0..JOINT_COUNT {
            let v = jl.velocity[j];
            rb.push(&[(u(i, j), 1.0)], -v, v, RowSource::JointVelocity { step: i, joint: j });
            let a = jl.acceleration[j] * ts;
            if i == 0 {
                rb.push(&[(u(0, j), 1.0)], u_prev.0[j] - a, u_prev.0[j] + a, RowSource::JointAcceleration { step: 0, joint: j });
            } else {
                rb.push(&[(u(i, j), 1.0), (u(i - 1, j), -1.0)], -a, a, RowSource::JointAcceleration { step: i, joint: j });
            }
            if i >= 1 {
                let jk = jl.jerk[j] * ts * ts;
                let (lo, hi) = if i == 1 {
                    (-jk - u_prev.0[j], jk - u_prev.0[j])
                } else {
                    (-jk, jk)
                };
                let mut c = vec![(u(i, j), 1.0), (u(i - 1, j), -2.0)];
                if i >= 2 {
                    c.push((u(i - 2, j), 1.0));
                }
                rb.push(&c, lo, hi, RowSource::JointJerk { step: i, joint: j });
            }
            let ev = el.velocity[j];
            let row: Vec<(usize, f64)> = (0..3).map(|c| (u(i, c), lin.j_e[(j, c)])).collect();
            rb.push(&row, -ev, ev, RowSource::EndEffectorVelocity { step: i, axis: j });
        }
        rb.push(&[(eps(i), 1.0)], 0.0, cfg.eps_ub, RowSource::SlackBound { step: i });
    }
    for i in 1..=n_h {
        for j in 0..JOINT_COUNT {
            let mut w = [0.0; 3];
            w[j] = 1.0;
            let lim = jl.position[j];
            let q = lin.x_k.q[j];
            rb.push(&cumulative(i, &w), lim.lower - q, lim.upper - q, RowSource::JointPosition { step: i, joint: j });
            let row = lin.j_e.row(j);
            let lim = el.angle[j];
            let xe = lin.x_k.x_e[j];
            rb.push(&cumulative(i, &[row[0], row[1], row[2]]), lim.lower - xe, lim.upper - xe, RowSource::EndEffectorAngle { step: i, axis: j });
        }
    }
    let mut distance_offsets = Vec::new();
    for p in &lin.points {
        if p.kind == PointKind::Future && cfg.mode == ControllerMode::Baseline {
            continue;
        }
        let s = p.sensitivity();
        for i in 1..=n_h {
            let mut c = cumulative(i, &[s.x, s.y, s.z]);
            c.push((eps(i - 1), 1.0));
            let source = match p.kind {
                PointKind::Current => RowSource::DistanceCurrent { step: i, link: p.link },
                PointKind::Future => RowSource::DistanceFuture { step: i, link: p.link },
            };
            let row = rb.push(&c, cfg.d_lb - p.d0, f64::INFINITY, source);
            distance_offsets.push((row, p.d0));
        }
    }

    let m = rb.rows.len();
    let mut a = DMatrix::zeros(m, n);
    for (r, row) in rb.rows.iter().enumerate() {
        a.set_row(r, &row.transpose());
    }
    MpcQp {
        problem: QpProblem { hessian: h, linear: g, constraints: a, lower: DVector::from_vec(rb.lower), upper: DVector::from_vec(rb.upper) },
        sources: rb.sources,
        horizon: n_h,
        distance_offsets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    /// Prediction or linearization failed (e.g. singular angle parameterization).
    PredictionFailed,
}

impl StepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepStatus::Optimal => "optimal",
            StepStatus::Infeasible => "infeasible",
            StepStatus::IterationLimit => "iteration_limit",
            StepStatus::PredictionFailed => "prediction_failed",
        }
    }

    pub fn is_fallback(&self) -> bool {
        *self != StepStatus::Optimal
    }
}

/// Predicted distance of one row at the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistancePrediction {
    pub step: usize,
    pub link: usize,
    pub kind: PointKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub u_applied: ControlInput,
    pub plan: TrajectoryPlan,
    pub slack_max: f64,
    pub status: StepStatus,
    pub distances: Vec<DistancePrediction>,
    pub tracks: Vec<ClosestPointTrack>,
    pub iterations: usize,
    pub rows: usize,
    pub elapsed: Duration,
    /// Largest bound violation of the returned QP point.
    pub max_violation: f64,
}

impl ControlOutcome {
    /// Smallest predicted distance at step `i` over the rows in the QP.
    pub fn predicted_min(&self, step: usize) -> Option<f64> {
        self.distances.iter().filter(|d| d.step == step).map(|d| d.value).reduce(f64::min)
    }
}

/// Controller state carried between cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerMemory {
    pub plan: TrajectoryPlan,
    pub u_prev: ControlInput,
    pub tracks: Vec<ClosestPointTrack>,
    pub k: u64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    model: RobotModel,
    cfg: MpcConfig,
    memory: ControllerMemory,
}

impl Controller {
    pub fn new(model: RobotModel, cfg: MpcConfig) -> Result<Self, ControllerError> {
        cfg.validate()?;
        let memory = ControllerMemory { plan: TrajectoryPlan::zeros(cfg.horizon), u_prev: ControlInput::zero(), tracks: Vec::new(), k: 0 };
        Ok(Self { model, cfg, memory })
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn memory(&self) -> &ControllerMemory {
        &self.memory
    }

    /// Runs one cycle from the measured state `x_k` and stores the plan for the next.
    pub fn control_step(&mut self, x_k: &SystemState, x_dot_desired: &Vec3, obstacles: &[Obstacle]) -> ControlOutcome {
        let start = Instant::now();
        let cfg = &self.cfg;
        let prepared = future_closest_points(
            &self.model,
            x_k,
            &self.memory.plan,
            cfg.ts,
            obstacles,
            &cfg.prediction,
            &self.memory.tracks,
        )
        .map_err(|_| ())
        .and_then(|tracks| linearize(&self.model, x_k, &tracks, cfg.ts).map(|lin| (tracks, lin)).map_err(|_| ()));

        let mut outcome = ControlOutcome {
            u_applied: ControlInput::zero(),
            plan: TrajectoryPlan { inputs: vec![ControlInput::zero(); cfg.horizon], k: self.memory.k },
            slack_max: 0.0,
            status: StepStatus::PredictionFailed,
            distances: Vec::new(),
            tracks: Vec::new(),
            iterations: 0,
            rows: 0,
            elapsed: Duration::ZERO,
            max_violation: 0.0,
        };
        if let Ok((tracks, lin)) = prepared {
            let qp = assemble_qp(&self.model, &lin, x_dot_desired, cfg, &self.memory.u_prev);
            outcome.rows = qp.problem.num_rows();
            match solve_qp(&qp.problem, &cfg.qp) {
                Ok(sol) => fill_solution(&mut outcome, &qp, &sol),
                Err(QpError::IterationLimit(_)) => outcome.status = StepStatus::IterationLimit,
                Err(_) => outcome.status = StepStatus::Infeasible,
            }
            outcome.tracks = tracks;
        }

        self.memory.plan = outcome.plan.clone();
        self.memory.u_prev = outcome.u_applied;
        self.memory.tracks = outcome.tracks.clone();
        self.memory.k += 1;
        outcome.elapsed = start.elapsed();
        outcome
    }
}

fn fill_solution(outcome: &mut ControlOutcome, qp: &MpcQp, sol: &QpSolution) {
    let inputs = qp.inputs(&sol.x);
    outcome.u_applied = inputs[0];
    outcome.plan.inputs = inputs;
    outcome.slack_max = qp.slacks(&sol.x).into_iter().fold(0.0, f64::max);
    outcome.status = StepStatus::Optimal;
    outcome.iterations = sol.iterations;
    outcome.max_violation = qp.problem.max_violation(&sol.x);
    let ax = &qp.problem.constraints * &sol.x;
    for (row, d0) in &qp.distance_offsets {
        let (step, link, kind) = match qp.sources[*row] {
            RowSource::DistanceCurrent { step, link } => (step, link, PointKind::Current),
            RowSource::DistanceFuture { step, link } => (step, link, PointKind::Future),
            _ => unreachable!("distance offsets only index distance rows"),
        };
        let eps = sol.x[qp.eps_index(step - 1)];
        outcome.distances.push(DistancePrediction { step, link, kind, value: d0 + ax[*row] - eps });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::reference_c_arm;

    #[test]
    fn presets_validate() {
        for mode in [ControllerMode::Baseline, ControllerMode::Future] {
            let cfg = MpcConfig::preset(mode);
            cfg.validate().unwrap();
            assert_eq!(cfg.num_variables(), 64);
        }
        assert_eq!(MpcConfig::preset(ControllerMode::Future).eps_ub, 5.2e-3);
    }

    #[test]
    fn slack_above_distance_bound_is_rejected() {
        let mut cfg = MpcConfig::preset(ControllerMode::Baseline);
        cfg.d_lb = 0.05;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_command_in_free_space_gives_zero_plan() {
        let model = reference_c_arm();
        let x = model.state_at(&Vec3::zeros());
        let mut c = Controller::new(model, MpcConfig::preset(ControllerMode::Future)).unwrap();
        let out = c.control_step(&x, &Vec3::zeros(), &[]);
        assert_eq!(out.status, StepStatus::Optimal);
        assert!(out.plan.inputs.iter().all(|u| u.0.amax() < 1e-12));
        assert_eq!(out.slack_max, 0.0);
    }

    #[test]
    fn mode_toggle_only_removes_future_rows() {
        let model = reference_c_arm();
        let x = model.state_at(&Vec3::new(0.1, 0.2, -0.1));
        let obstacles = [Obstacle::from_world(&crate::kinematics::reference_table())];
        let cfg = MpcConfig::preset(ControllerMode::Future);
        let tracks = future_closest_points(&model, &x, &TrajectoryPlan::zeros(16), 0.1, &obstacles, &cfg.prediction, &[]).unwrap();
        let lin = linearize(&model, &x, &tracks, 0.1).unwrap();
        let full = assemble_qp(&model, &lin, &Vec3::new(0.1, 0.0, 0.0), &cfg, &ControlInput::zero());
        let base_cfg = MpcConfig { mode: ControllerMode::Baseline, ..cfg };
        let base = assemble_qp(&model, &lin, &Vec3::new(0.1, 0.0, 0.0), &base_cfg, &ControlInput::zero());
        let kept: Vec<_> = full.sources.iter().filter(|s| !matches!(s, RowSource::DistanceFuture { .. })).copied().collect();
        assert_eq!(kept, base.sources);
        assert!(full.sources.len() > base.sources.len());
        assert_eq!(full.problem.hessian, base.problem.hessian);
    }
}
