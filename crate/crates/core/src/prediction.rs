//! Future closest points along the previous control plan, point smoothing,
//! and linearized distance prediction.
//!
//! Per control cycle and link the tracker produces the current closest point
//! (evaluated at `x(k)`) and, for each configured look-ahead step `n`, the
//! closest point found at the rolled-out configuration `x_{n|k}`. That future
//! witness is fixed in the link frame, smoothed against the previous cycle,
//! then re-posed at the current configuration where its present distance and
//! gradient to the obstacle are measured.

use thiserror::Error;

use crate::geometry::{
    closest_obstacle, distance, shrink_closest_point, ClosestPointResult, ConvexHull, GeometryError, HomTransform, Vec3,
    DEFAULT_GAMMA0,
};
use crate::kinematics::{ChainPose, ControlInput, KinematicsError, Link, RobotModel, SystemState};

/// Smoothing threshold `d_min` in meters.
pub const DEFAULT_D_MIN: f64 = 2.5e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictionError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("plan holds {got} inputs, horizon needs {needed}")]
    PlanTooShort { got: usize, needed: usize },
    #[error("gradient has zero length")]
    ZeroGradient,
    #[error("invalid prediction config: {0}")]
    InvalidConfig(String),
}

/// Input sequence `u_{0|k} … u_{N−1|k}` computed at cycle `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub inputs: Vec<ControlInput>,
    pub k: u64,
}

impl TrajectoryPlan {
    pub fn zeros(horizon: usize) -> Self {
        Self { inputs: vec![ControlInput::zero(); horizon], k: 0 }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.inputs.iter().all(|u| u.0 == Vec3::zeros())
    }

    /// Inputs still ahead one cycle later: drops `u_{0|k}` and holds the last input.
    pub fn shifted(&self) -> Vec<ControlInput> {
        match self.inputs.split_first() {
            None => Vec::new(),
            Some((_, rest)) => {
                let mut out = rest.to_vec();
                out.push(*self.inputs.last().unwrap());
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionConfig {
    pub horizon: usize,
    /// Look-ahead steps `n_i` at which future closest points are computed.
    pub future_steps: Vec<usize>,
    pub d_min: f64,
    pub gamma0: f64,
}

impl PredictionConfig {
    /// Single future point at `⌊N/2⌋`.
    pub fn with_horizon(horizon: usize) -> Self {
        Self { horizon, future_steps: vec![(horizon / 2).max(1)], d_min: DEFAULT_D_MIN, gamma0: DEFAULT_GAMMA0 }
    }

    pub fn validate(&self) -> Result<(), PredictionError> {
        if self.horizon == 0 {
            return Err(PredictionError::InvalidConfig("horizon must be at least 1".into()));
        }
        if let Some(n) = self.future_steps.iter().find(|n| **n == 0 || **n > self.horizon) {
            return Err(PredictionError::InvalidConfig(format!("future step {n} outside 1..={}", self.horizon)));
        }
        if self.d_min.is_nan() || self.d_min <= 0.0 {
            return Err(PredictionError::InvalidConfig("d_min must be positive".into()));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return Err(PredictionError::InvalidConfig("gamma0 must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Static obstacle: a centroid-origin hull and its fixed world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    local: ConvexHull,
    pose: HomTransform,
    world: ConvexHull,
}

impl Obstacle {
    pub fn new(local: ConvexHull, pose: HomTransform) -> Self {
        let world = local.transformed(&pose);
        Self { local, pose, world }
    }

    /// Re-centers a hull authored in world coordinates.
    pub fn from_world(hull: &ConvexHull) -> Self {
        let (local, c) = ConvexHull::centered(hull.id(), hull.vertices().to_vec()).expect("valid hull stays valid");
        Self::new(local, HomTransform::from_translation(c))
    }

    pub fn local(&self) -> &ConvexHull {
        &self.local
    }

    pub fn pose(&self) -> &HomTransform {
        &self.pose
    }

    pub fn world(&self) -> &ConvexHull {
        &self.world
    }
}

/// One closest point, fixed on a link.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    /// Position in the link frame.
    pub r_local: Vec3,
    /// World position at the current configuration `x(k)`.
    pub p_global: Vec3,
    /// Matching point on the obstacle.
    pub p_obstacle: Vec3,
    pub distance: f64,
    pub gradient: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingBranch {
    /// Guard not triggered or no history yet.
    Unchanged,
    /// The future point jumped onto the current one: keep last cycle's future point.
    KeptPreviousFuture,
    /// The current point jumped onto the future one: reuse last cycle's current point.
    ReusedPreviousCurrent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosestPointTrack {
    pub link_index: usize,
    /// Look-ahead step `n_i` of the future point.
    pub future_step: usize,
    pub obstacle_index: usize,
    pub current: PointEstimate,
    /// `None` when the future point could not be recovered this cycle.
    pub future: Option<PointEstimate>,
    pub r_current_prev: Option<Vec3>,
    pub r_future_prev: Option<Vec3>,
    /// The look-ahead configuration was in collision and shrinking was used.
    pub shrunk: bool,
    pub smoothing: SmoothingBranch,
}

impl ClosestPointTrack {
    pub fn degraded(&self) -> bool {
        self.future.is_none()
    }
}

/// Forward-Euler rollout: `x_{i|k} = x_{i−1|k} + Ts f(x_{i−1|k}, inputs[i−1])`
/// for `i = 1..=N`. Returns the `N` predicted states.
pub fn rollout(
    model: &RobotModel,
    x_k: &SystemState,
    inputs: &[ControlInput],
    horizon: usize,
    ts: f64,
) -> Result<Vec<SystemState>, PredictionError> {
    if inputs.len() < horizon {
        return Err(PredictionError::PlanTooShort { got: inputs.len(), needed: horizon });
    }
    let mut states = Vec::with_capacity(horizon);
    let mut x = *x_k;
    for u in &inputs[..horizon] {
        x = model.step_state(&x, u, ts)?;
        states.push(x);
    }
    Ok(states)
}

/// Linearized distance `d0 + ĝ·(p_future − p_now)` with `ĝ = grad/‖grad‖`.
pub fn predict_distance(d0: f64, grad: &Vec3, p_future: &Vec3, p_now: &Vec3) -> Result<f64, PredictionError> {
    let n = grad.norm();
    if n.is_nan() || n <= 0.0 {
        return Err(PredictionError::ZeroGradient);
    }
    Ok(d0 + grad.dot(&(p_future - p_now)) / n)
}

/// Point smoothing. Returns the future point to use and the branch taken;
/// the result is always one of `r_future`, `r_future_prev`, `r_current_prev`.
pub fn smooth(
    r_future: &Vec3,
    r_current: &Vec3,
    r_current_prev: Option<&Vec3>,
    r_future_prev: Option<&Vec3>,
    d_min: f64,
) -> (Vec3, SmoothingBranch) {
    let (Some(rc_prev), Some(rf_prev)) = (r_current_prev, r_future_prev) else {
        return (*r_future, SmoothingBranch::Unchanged);
    };
    if (r_future - r_current).norm() >= d_min {
        return (*r_future, SmoothingBranch::Unchanged);
    }
    let shift_current = (r_current - rc_prev).norm();
    let shift_future = (r_future - rf_prev).norm();
    if shift_future > shift_current {
        (*rf_prev, SmoothingBranch::KeptPreviousFuture)
    } else {
        (*rc_prev, SmoothingBranch::ReusedPreviousCurrent)
    }
}

/// Witness of a link against the obstacle set at one configuration.
enum LinkWitness {
    Separated { r_link: Vec3, obstacle: usize },
    Colliding { hull: usize, obstacle: usize },
}

fn link_witness(link: &Link, frame: &HomTransform, world: &[ConvexHull]) -> Result<Option<LinkWitness>, GeometryError> {
    let mut best: Option<(f64, Vec3, usize)> = None;
    for (h, lh) in link.hulls.iter().enumerate() {
        let hull = lh.hull.transformed(&(frame * &lh.mount));
        let (m, r) = closest_obstacle(&hull, world)?;
        match r {
            ClosestPointResult::Collision => return Ok(Some(LinkWitness::Colliding { hull: h, obstacle: m })),
            ClosestPointResult::Separated(s) => {
                if best.as_ref().is_none_or(|(d, _, _)| s.distance < *d) {
                    best = Some((s.distance, s.p_robot, m));
                }
            }
        }
    }
    Ok(best.map(|(_, p, m)| LinkWitness::Separated { r_link: frame.inverse().transform_point(&p), obstacle: m }))
}

/// Distance from a single world point to an obstacle, as a point hull.
fn point_estimate(r_local: Vec3, frame: &HomTransform, obstacle: &Obstacle) -> Result<Option<PointEstimate>, GeometryError> {
    let p = frame.transform_point(&r_local);
    Ok(distance(&ConvexHull::point("witness", p), obstacle.world())?.separation().map(|s| PointEstimate {
        r_local,
        p_global: p,
        p_obstacle: s.p_obstacle,
        distance: s.distance,
        gradient: s.gradient,
    }))
}

/// Resolves a link witness at `frame` to a link-frame point, shrinking when the
/// configuration is in collision. `Ok(None)` when shrinking fails.
fn resolve_witness(
    link: &Link,
    frame: &HomTransform,
    obstacles: &[Obstacle],
    world: &[ConvexHull],
    gamma0: f64,
) -> Result<Option<(Vec3, usize, bool)>, GeometryError> {
    match link_witness(link, frame, world)? {
        None => Ok(None),
        Some(LinkWitness::Separated { r_link, obstacle }) => Ok(Some((r_link, obstacle, false))),
        Some(LinkWitness::Colliding { hull, obstacle }) => {
            let lh = &link.hulls[hull];
            let ob = &obstacles[obstacle];
            match shrink_closest_point(&lh.hull, &(frame * &lh.mount), ob.local(), ob.pose(), gamma0) {
                Ok(out) => Ok(Some((lh.mount.transform_point(&out.r_local), obstacle, true))),
                Err(GeometryError::MaxShrinkIterations(_)) => Ok(None),
                Err(e) => Err(e),
            }
        }
    }
}

/// Current closest point of every link at configuration `pose`, keyed by link index.
///
/// A link already in contact reports distance 0 with the gradient pointing
/// from the obstacle centroid to the hull centroid.
pub fn current_closest_points(
    model: &RobotModel,
    pose: &ChainPose,
    obstacles: &[Obstacle],
    gamma0: f64,
) -> Result<Vec<(usize, usize, PointEstimate)>, PredictionError> {
    let world: Vec<ConvexHull> = obstacles.iter().map(|o| o.world().clone()).collect();
    let mut out = Vec::new();
    if obstacles.is_empty() {
        return Ok(out);
    }
    for (l, link) in model.links().iter().enumerate() {
        if link.hulls.is_empty() {
            continue;
        }
        let frame = pose.link_frame(link);
        let est = match link_witness(link, &frame, &world)? {
            None => continue,
            Some(LinkWitness::Separated { r_link, obstacle }) => {
                let lh_est = point_estimate(r_link, &frame, &obstacles[obstacle])?;
                match lh_est {
                    Some(e) => (obstacle, e),
                    None => (obstacle, contact_estimate(r_link, &frame, &obstacles[obstacle])),
                }
            }
            Some(LinkWitness::Colliding { hull, obstacle }) => {
                let lh = &link.hulls[hull];
                let ob = &obstacles[obstacle];
                let r_link = match shrink_closest_point(&lh.hull, &(frame * lh.mount), ob.local(), ob.pose(), gamma0) {
                    Ok(s) => lh.mount.transform_point(&s.r_local),
                    Err(GeometryError::MaxShrinkIterations(_)) => lh.mount.translation,
                    Err(e) => return Err(e.into()),
                };
                (obstacle, contact_estimate(r_link, &frame, ob))
            }
        };
        out.push((l, est.0, est.1));
    }
    Ok(out)
}

fn contact_estimate(r_local: Vec3, frame: &HomTransform, obstacle: &Obstacle) -> PointEstimate {
    let p = frame.transform_point(&r_local);
    let mut dir = p - obstacle.world().centroid();
    if dir.norm() == 0.0 {
        dir = Vec3::z();
    }
    PointEstimate { r_local, p_global: p, p_obstacle: p, distance: 0.0, gradient: dir.normalize() }
}

/// Future closest point tracking for every link and look-ahead step.
///
/// `previous_plan` is the plan stored at `k−1`; the inputs still ahead of
/// the system (the plan shifted by one step) are rolled out from `x_k`.
/// `prev_tracks` are last cycle's tracks (empty at start-up, which disables
/// smoothing for that cycle).
pub fn future_closest_points(
    model: &RobotModel,
    x_k: &SystemState,
    previous_plan: &TrajectoryPlan,
    ts: f64,
    obstacles: &[Obstacle],
    cfg: &PredictionConfig,
    prev_tracks: &[ClosestPointTrack],
) -> Result<Vec<ClosestPointTrack>, PredictionError> {
    cfg.validate()?;
    if obstacles.is_empty() {
        return Ok(Vec::new());
    }
    let ahead = if previous_plan.len() >= cfg.horizon { previous_plan.shifted() } else { vec![ControlInput::zero(); cfg.horizon] };
    let states = rollout(model, x_k, &ahead, cfg.horizon, ts)?;
    let pose_k = model.forward_kinematics(&x_k.q);
    let world: Vec<ConvexHull> = obstacles.iter().map(|o| o.world().clone()).collect();
    let currents = current_closest_points(model, &pose_k, obstacles, cfg.gamma0)?;

    let mut tracks = Vec::with_capacity(currents.len() * cfg.future_steps.len());
    for &n in &cfg.future_steps {
        let pose_n = model.forward_kinematics(&states[n - 1].q);
        for (l, current_obstacle, current) in &currents {
            let link = &model.links()[*l];
            let prev = prev_tracks.iter().find(|t| t.link_index == *l && t.future_step == n);
            let r_current_prev = prev.map(|t| t.current.r_local);
            let r_future_prev = prev.and_then(|t| t.future.as_ref().map(|f| f.r_local));

            let frame_n = pose_n.link_frame(link);
            let mut track = ClosestPointTrack {
                link_index: *l,
                future_step: n,
                obstacle_index: *current_obstacle,
                current: current.clone(),
                future: None,
                r_current_prev,
                r_future_prev,
                shrunk: false,
                smoothing: SmoothingBranch::Unchanged,
            };
            if let Some((r_future, obstacle, shrunk)) = resolve_witness(link, &frame_n, obstacles, &world, cfg.gamma0)? {
                let (r_used, branch) =
                    smooth(&r_future, &current.r_local, r_current_prev.as_ref(), r_future_prev.as_ref(), cfg.d_min);
                track.shrunk = shrunk;
                track.smoothing = branch;
                track.obstacle_index = obstacle;
                track.future = point_estimate(r_used, &pose_k.link_frame(link), &obstacles[obstacle])?;
            }
            tracks.push(track);
        }
    }
    Ok(tracks)
}
