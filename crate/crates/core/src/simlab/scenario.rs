//! Scenario files.
//!
//! A scenario is a JSON object with the sections `robot`, `obstacles`,
//! `controller`, `script` and `seed`, plus optional `name`, `initial_q` and
//! `episode_length`. Lengths are meters, angles radians, times seconds.
//!
//! ```json
//! {
//!   "robot": { "preset": "c_arm" },
//!   "obstacles": [{ "id": "table", "vertices": [[0, 0, 0], ...] }],
//!   "controller": { "mode": "new", "horizon": 16 },
//!   "script": { "random": { "count": 4, "magnitude": [0.1, 0.3], "step_duration": 1.5 } },
//!   "seed": 7
//! }
//! ```
//!
//! A robot is either a named preset or an explicit chain of `joints` and
//! `links` whose hull vertices are given in the link frame. Hull centroids are
//! recomputed on load.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::script::{generate_step_inputs, InputScript, RandomScript, StepInput};
use crate::controller::{ControllerMode, MpcConfig};
use crate::geometry::{ConvexHull, HomTransform, Vec3};
use crate::kinematics::{
    reference_c_arm, reference_limits, EndEffectorLimits, Interval, JointLimits, Link, LinkHull, RevoluteJoint,
    RobotModel,
};
use crate::prediction::Obstacle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Validation(msg.into()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    #[serde(default)]
    pub translation: [f64; 3],
    /// Extrinsic XYZ angles.
    #[serde(default)]
    pub rotation: [f64; 3],
}

impl PoseSpec {
    fn to_transform(&self, what: &str) -> Result<HomTransform, ScenarioError> {
        if self.translation.iter().chain(&self.rotation).any(|v| !v.is_finite()) {
            return invalid(format!("{what}: pose must be finite"));
        }
        Ok(HomTransform::from_xyz_angles(&Vec3::from(self.rotation), Vec3::from(self.translation)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HullSpec {
    pub id: String,
    pub vertices: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseSpec>,
}

impl HullSpec {
    /// Vertices with the optional pose applied.
    fn posed_vertices(&self, what: &str) -> Result<Vec<Vec3>, ScenarioError> {
        if self.vertices.is_empty() {
            return invalid(format!("{what} '{}' has no vertices", self.id));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return invalid(format!("{what} '{}' has a non-finite vertex", self.id));
        }
        let pose = match &self.pose {
            Some(p) => p.to_transform(&self.id)?,
            None => HomTransform::identity(),
        };
        Ok(self.vertices.iter().map(|v| pose.transform_point(&Vec3::from(*v))).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: PoseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub name: String,
    pub joint: usize,
    pub hulls: Vec<HullSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSpec {
    pub joint_position: Option<[[f64; 2]; 3]>,
    pub joint_velocity: Option<[f64; 3]>,
    pub joint_acceleration: Option<[f64; 3]>,
    pub joint_jerk: Option<[f64; 3]>,
    pub ee_angle: Option<[[f64; 2]; 3]>,
    pub ee_velocity: Option<[f64; 3]>,
}

impl LimitsSpec {
    fn resolve(&self) -> (JointLimits, EndEffectorLimits) {
        let (mut jl, mut el) = reference_limits();
        let intervals = |b: [[f64; 2]; 3]| b.map(|[lo, hi]| Interval::new(lo, hi));
        if let Some(p) = self.joint_position {
            jl.position = intervals(p);
        }
        if let Some(v) = self.joint_velocity {
            jl.velocity = v;
        }
        if let Some(a) = self.joint_acceleration {
            jl.acceleration = a;
        }
        if let Some(j) = self.joint_jerk {
            jl.jerk = j;
        }
        if let Some(a) = self.ee_angle {
            el.angle = intervals(a);
        }
        if let Some(v) = self.ee_velocity {
            el.velocity = v;
        }
        (jl, el)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    /// `"c_arm"` selects the bundled synthetic C-arm.
    pub preset: Option<String>,
    pub joints: Option<Vec<JointSpec>>,
    pub links: Option<Vec<LinkSpec>>,
    pub end_effector: Option<PoseSpec>,
    pub limits: Option<LimitsSpec>,
}

impl RobotSpec {
    fn resolve(&self) -> Result<RobotModel, ScenarioError> {
        if let Some(name) = &self.preset {
            if self.joints.is_some() || self.links.is_some() {
                return invalid("robot: preset and explicit joints/links are mutually exclusive");
            }
            return match name.as_str() {
                "c_arm" => {
                    let base = reference_c_arm();
                    match &self.limits {
                        None => Ok(base),
                        Some(l) => {
                            let (jl, el) = l.resolve();
                            RobotModel::new(base.joints().to_vec(), base.links().to_vec(), HomTransform::identity(), jl, el)
                                .map_err(|e| ScenarioError::Validation(format!("robot: {e}")))
                        }
                    }
                }
                other => invalid(format!("robot: unknown preset '{other}'")),
            };
        }
        let (Some(joints), Some(links)) = (&self.joints, &self.links) else {
            return invalid("robot: needs either a preset or both joints and links");
        };
        let joints = joints
            .iter()
            .map(|j| {
                Ok(RevoluteJoint { name: j.name.clone(), origin: j.origin.to_transform(&j.name)?, axis: Vec3::from(j.axis) })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let links = links
            .iter()
            .map(|l| {
                let hulls = l
                    .hulls
                    .iter()
                    .map(|h| {
                        LinkHull::from_link_vertices(h.id.clone(), h.posed_vertices("link hull")?)
                            .map_err(|e| ScenarioError::Validation(format!("link '{}': {e}", l.name)))
                    })
                    .collect::<Result<Vec<_>, ScenarioError>>()?;
                Ok(Link { name: l.name.clone(), joint: l.joint, hulls })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let ee = match &self.end_effector {
            Some(p) => p.to_transform("end_effector")?,
            None => HomTransform::identity(),
        };
        let (jl, el) = self.limits.clone().unwrap_or_default().resolve();
        RobotModel::new(joints, links, ee, jl, el).map_err(|e| ScenarioError::Validation(format!("robot: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    /// `"base"` or `"new"` (default).
    pub mode: Option<String>,
    pub horizon: Option<usize>,
    pub ts: Option<f64>,
    pub slack_weight: Option<f64>,
    pub eps_ub: Option<f64>,
    pub d_lb: Option<f64>,
    /// Diagonal of `Q`.
    pub q_weight: Option<[f64; 3]>,
    /// Diagonal of `R`.
    pub r_weight: Option<[f64; 3]>,
    pub gamma0: Option<f64>,
    pub d_min: Option<f64>,
    pub future_steps: Option<Vec<usize>>,
}

impl ControllerSpec {
    pub fn mode(&self) -> Result<ControllerMode, ScenarioError> {
        match &self.mode {
            None => Ok(ControllerMode::Future),
            Some(m) => ControllerMode::parse(m)
                .ok_or_else(|| ScenarioError::Validation(format!("controller: unknown mode '{m}' (use base or new)"))),
        }
    }

    /// Tuned preset for `mode` with this section's overrides applied.
    pub fn resolve(&self, mode: ControllerMode) -> Result<MpcConfig, ScenarioError> {
        let mut cfg = MpcConfig::preset(mode);
        if let Some(n) = self.horizon {
            cfg = cfg.with_horizon(n);
        }
        if let Some(v) = self.ts {
            cfg.ts = v;
        }
        if let Some(v) = self.slack_weight {
            cfg.slack_weight = v;
        }
        if let Some(v) = self.eps_ub {
            cfg.eps_ub = v;
        }
        if let Some(v) = self.d_lb {
            cfg.d_lb = v;
        }
        if let Some(d) = self.q_weight {
            cfg.q_weight = Matrix3::from_diagonal(&Vec3::from(d));
        }
        if let Some(d) = self.r_weight {
            cfg.r_weight = Matrix3::from_diagonal(&Vec3::from(d));
        }
        if let Some(v) = self.gamma0 {
            cfg.prediction.gamma0 = v;
        }
        if let Some(v) = self.d_min {
            cfg.prediction.d_min = v;
        }
        if let Some(v) = &self.future_steps {
            cfg.prediction.future_steps = v.clone();
        }
        cfg.validate().map_err(|e| ScenarioError::Validation(format!("controller: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    pub steps: Option<Vec<StepInput>>,
    pub random: Option<RandomScript>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub robot: Option<RobotSpec>,
    pub obstacles: Option<Vec<HullSpec>>,
    pub initial_q: Option<[f64; 3]>,
    pub episode_length: Option<f64>,
    pub controller: Option<ControllerSpec>,
    pub script: Option<ScriptSpec>,
    pub seed: Option<u64>,
}

pub const DEFAULT_EPISODE_LENGTH: f64 = 8.0;

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub robot: RobotModel,
    pub obstacles: Vec<Obstacle>,
    pub initial_q: Vec3,
    pub script: InputScript,
    pub episode_length: f64,
    pub controller: MpcConfig,
    pub seed: u64,
    spec: ScenarioFile,
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let Some(robot_spec) = &file.robot else {
            return invalid("missing robot section");
        };
        let robot = robot_spec.resolve()?;
        let obstacles = file
            .obstacles
            .iter()
            .flatten()
            .map(|h| {
                let verts: Vec<Vec3> = h.posed_vertices("obstacle")?;
                let hull = ConvexHull::new(h.id.clone(), verts)
                    .map_err(|e| ScenarioError::Validation(format!("obstacle '{}': {e}", h.id)))?;
                Ok(Obstacle::from_world(&hull))
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let initial_q = Vec3::from(file.initial_q.unwrap_or([0.0; 3]));
        if !initial_q.iter().all(|v| v.is_finite()) {
            return invalid("initial_q must be finite");
        }
        let episode_length = file.episode_length.unwrap_or(DEFAULT_EPISODE_LENGTH);
        if !(episode_length > 0.0 && episode_length.is_finite()) {
            return invalid("episode_length must be positive");
        }
        let controller_spec = file.controller.clone().unwrap_or_default();
        let controller = controller_spec.resolve(controller_spec.mode()?)?;
        let seed = file.seed.unwrap_or(0);
        let script = resolve_script(file.script.as_ref(), seed, episode_length)?;
        robot
            .jacobian_end_effector(&initial_q)
            .map_err(|e| ScenarioError::Validation(format!("initial_q: {e}")))?;
        Ok(Self { name: file.name.clone().unwrap_or_else(|| "scenario".into()), robot, obstacles, initial_q, script, episode_length, controller, seed, spec: file })
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    /// The source description this scenario was resolved from.
    pub fn spec(&self) -> &ScenarioFile {
        &self.spec
    }

    /// Same scenario with another seed; random scripts are redrawn.
    pub fn with_seed(&self, seed: u64) -> Result<Self, ScenarioError> {
        let mut spec = self.spec.clone();
        spec.seed = Some(seed);
        let mut s = Self::from_file(spec)?;
        s.controller = self.controller.clone();
        Ok(s)
    }

    /// Same scenario driven by the tuned preset of `mode`, keeping the file's overrides.
    pub fn with_mode(&self, mode: ControllerMode) -> Result<Self, ScenarioError> {
        let mut s = self.clone();
        s.controller = self.spec.controller.clone().unwrap_or_default().resolve(mode)?;
        Ok(s)
    }

    pub fn with_controller(&self, cfg: MpcConfig) -> Result<Self, ScenarioError> {
        cfg.validate().map_err(|e| ScenarioError::Validation(format!("controller: {e}")))?;
        let mut s = self.clone();
        s.controller = cfg;
        Ok(s)
    }

    /// Number of control cycles in an episode.
    pub fn steps(&self) -> usize {
        (self.episode_length / self.controller.ts).round() as usize
    }
}

fn resolve_script(spec: Option<&ScriptSpec>, seed: u64, episode_length: f64) -> Result<InputScript, ScenarioError> {
    let script = match spec {
        None => InputScript::default(),
        Some(ScriptSpec { steps: Some(_), random: Some(_) }) => return invalid("script: give either steps or random, not both"),
        Some(ScriptSpec { steps: Some(steps), random: None }) => InputScript { steps: steps.clone() },
        Some(ScriptSpec { steps: None, random: Some(r) }) => {
            generate_step_inputs(seed, r).map_err(|e| ScenarioError::Validation(format!("script: {e}")))?
        }
        Some(ScriptSpec { steps: None, random: None }) => InputScript::default(),
    };
    script.validate(episode_length).map_err(|e| ScenarioError::Validation(format!("script: {e}")))?;
    Ok(script)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.display().to_string(), message: e.to_string() })?;
    Scenario::from_json(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_json(r#"{"robot": {"preset": "c_arm"}}"#, "mem").unwrap();
        assert_eq!(s.controller.horizon, 16);
        assert_eq!(s.controller.ts, 0.1);
        assert_eq!(s.controller.mode, ControllerMode::Future);
        assert!(s.obstacles.is_empty());
        assert_eq!(s.steps(), 80);
    }

    #[test]
    fn missing_robot_is_a_validation_error() {
        let err = Scenario::from_json(r#"{"obstacles": []}"#, "mem").unwrap_err();
        assert!(matches!(err, ScenarioError::Validation(m) if m.contains("robot")));
    }

    #[test]
    fn empty_hull_is_a_validation_error() {
        let err = Scenario::from_json(r#"{"robot": {"preset": "c_arm"}, "obstacles": [{"id": "t", "vertices": []}]}"#, "mem")
            .unwrap_err();
        assert!(matches!(err, ScenarioError::Validation(m) if m.contains("no vertices")));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = Scenario::from_json("{\n  \"robot\": {,\n}", "mem").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn mode_switch_uses_the_tuned_preset() {
        let s = Scenario::from_json(r#"{"robot": {"preset": "c_arm"}, "controller": {"d_lb": 0.2}}"#, "mem").unwrap();
        let b = s.with_mode(ControllerMode::Baseline).unwrap();
        assert_eq!(b.controller.eps_ub, 0.12);
        assert_eq!(b.controller.d_lb, 0.2);
    }
}
