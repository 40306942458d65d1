//! Live shared-control sessions.
//!
//! A [`Session`] owns one control timeline. Operator commands go through
//! [`Session::submit_command`] (latest sequence wins) and every call to
//! [`Session::tick`] runs one control step with the held command and returns a
//! [`Snapshot`]. Time is passed in explicitly so that a recorded event log
//! replays to identical snapshots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControlOutcome, Controller, ControllerMode};
use crate::geometry::{HomTransform, Vec3};
use crate::kinematics::SystemState;
use crate::simlab::{advance, scene_min_distance, Scenario, ScenarioError};

/// A command older than this many seconds is treated as zero.
pub const COMMAND_TIMEOUT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeleopError {
    #[error("session is closed")]
    SessionClosed,
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    /// Desired end-effector angular velocity after clamping [rad/s].
    pub x_dot: Vec3,
    pub seq: u64,
    /// Session time at which the command arrived [s].
    pub received: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "ack")]
pub struct Ack {
    pub seq: u64,
    /// The command replaced the held one.
    pub accepted: bool,
    /// Discarded because a command with this or a newer sequence was already held.
    pub stale: bool,
    /// At least one component was clamped to the end-effector velocity limit.
    pub clamped: bool,
    /// Sequence of the command held after this call.
    pub latest: u64,
}

/// Everything that changed a session, in order. Replaying it through a fresh
/// session reproduces the snapshot stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Command { now: f64, seq: u64, v: [f64; 3] },
    Tick { now: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMessage {
    pub link: usize,
    pub p_robot: [f64; 3],
    pub p_obst: [f64; 3],
    pub d: f64,
    pub p_robot_future: Option<[f64; 3]>,
    pub p_obst_future: Option<[f64; 3]>,
    pub d_future: Option<f64>,
}

/// World pose of one robot hull; `rotation` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullPose {
    pub link: usize,
    pub hull: String,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl HullPose {
    pub fn transform(&self) -> HomTransform {
        HomTransform { rotation: nalgebra::Matrix3::from_fn(|i, j| self.rotation[i][j]), translation: Vec3::from(self.translation) }
    }
}

/// State of one control cycle. `q`, the tracks and the hull poses all refer to
/// the configuration the controller saw; `u` is the input applied from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "snapshot")]
pub struct Snapshot {
    pub tick: u64,
    pub t: f64,
    pub q: [f64; 3],
    pub xe: [f64; 3],
    pub u: [f64; 3],
    /// Command in effect this tick, zero when none or expired.
    pub command: [f64; 3],
    /// Sequence of the held command, 0 before the first one.
    pub seq: u64,
    pub watchdog: bool,
    pub tracks: Vec<TrackMessage>,
    pub min_distance: Option<f64>,
    pub slack: f64,
    pub status: String,
    pub collision: bool,
    pub poses: Vec<HullPose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullMessage {
    pub id: String,
    pub vertices: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMessage {
    pub id: String,
    /// Vertices in each hull's own frame; place them with the snapshot poses.
    pub hulls: Vec<HullMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotMessage {
    pub links: Vec<LinkMessage>,
}

/// Static geometry, sent once when a client joins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "scene")]
pub struct SceneMessage {
    pub scenario: String,
    pub controller: String,
    pub ts: f64,
    pub d_lb: f64,
    pub ee_velocity_limit: [f64; 3],
    pub robot: RobotMessage,
    /// Obstacle vertices in the world frame.
    pub obstacles: Vec<HullMessage>,
}

/// Client-to-server frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Command { seq: u64, vx: f64, vy: f64, vz: f64 },
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Wall-clock ticks that exceeded the sample time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overruns {
    pub count: u64,
    pub worst: f64,
}

#[derive(Debug, Clone)]
pub struct Session {
    scenario: Scenario,
    controller: Controller,
    state: SystemState,
    command: Option<Command>,
    tick: u64,
    closed: bool,
    log: Vec<SessionEvent>,
    overruns: Overruns,
}

impl Session {
    /// A session at the scenario's initial configuration with no command held.
    /// The scenario's controller is kept when it already runs `mode`; otherwise
    /// the preset of `mode` is used.
    pub fn start(scenario: &Scenario, mode: ControllerMode) -> Result<Self, TeleopError> {
        let scenario = if scenario.controller.mode == mode { scenario.clone() } else { scenario.with_mode(mode)? };
        let controller = Controller::new(scenario.robot.clone(), scenario.controller.clone())
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let state = scenario.robot.state_at(&scenario.initial_q);
        Ok(Self { scenario, controller, state, command: None, tick: 0, closed: false, log: Vec::new(), overruns: Overruns::default() })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn mode(&self) -> ControllerMode {
        self.scenario.controller.mode
    }

    pub fn ts(&self) -> f64 {
        self.scenario.controller.ts
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn command(&self) -> Option<&Command> {
        self.command.as_ref()
    }

    pub fn log(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn overruns(&self) -> Overruns {
        self.overruns
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// Notes a tick that finished `late` seconds after its deadline.
    pub fn record_overrun(&mut self, late: f64) {
        self.overruns.count += 1;
        self.overruns.worst = self.overruns.worst.max(late);
    }

    /// Stores `x_dot` clamped to the end-effector velocity limits unless a
    /// command with the same or a newer sequence is already held.
    pub fn submit_command(&mut self, x_dot: Vec3, seq: u64, now: f64) -> Result<Ack, TeleopError> {
        if self.closed {
            return Err(TeleopError::SessionClosed);
        }
        if !x_dot.iter().all(|v| v.is_finite()) || !now.is_finite() {
            return Err(TeleopError::InvalidCommand("non-finite value".into()));
        }
        let latest = self.command.map(|c| c.seq);
        if latest.is_some_and(|l| seq <= l) {
            return Ok(Ack { seq, accepted: false, stale: true, clamped: false, latest: latest.unwrap_or(0) });
        }
        let limit = self.scenario.robot.ee_limits().velocity;
        let clamped_v = Vec3::from_fn(|i, _| x_dot[i].clamp(-limit[i], limit[i]));
        self.log.push(SessionEvent::Command { now, seq, v: arr(&x_dot) });
        self.command = Some(Command { x_dot: clamped_v, seq, received: now });
        Ok(Ack { seq, accepted: true, stale: false, clamped: clamped_v != x_dot, latest: seq })
    }

    /// The command the next tick at time `now` will use, and whether the
    /// watchdog zeroed it.
    pub fn effective_command(&self, now: f64) -> (Vec3, bool) {
        match self.command {
            Some(c) if now - c.received > COMMAND_TIMEOUT => (Vec3::zeros(), true),
            Some(c) => (c.x_dot, false),
            None => (Vec3::zeros(), false),
        }
    }

    /// One control cycle at session time `now`: control step with the held
    /// command, then one Euler step of the true state.
    pub fn tick(&mut self, now: f64) -> Result<Snapshot, TeleopError> {
        if self.closed {
            return Err(TeleopError::SessionClosed);
        }
        self.log.push(SessionEvent::Tick { now });
        let (x_dot, watchdog) = self.effective_command(now);
        let x = self.state;
        let out = self.controller.control_step(&x, &x_dot, &self.scenario.obstacles);
        let snapshot = self.snapshot(&x, &x_dot, watchdog, &out);
        self.state = advance(&self.scenario.robot, &x, &out.u_applied, self.ts());
        self.tick += 1;
        Ok(snapshot)
    }

    fn snapshot(&self, x: &SystemState, x_dot: &Vec3, watchdog: bool, out: &ControlOutcome) -> Snapshot {
        let model = &self.scenario.robot;
        let (min_dist, collision) = scene_min_distance(model, &x.q, &self.scenario.obstacles);
        let pose = model.forward_kinematics(&x.q);
        let poses = model
            .links()
            .iter()
            .zip(model.hull_poses(&pose))
            .enumerate()
            .flat_map(|(l, (link, ps))| {
                link.hulls.iter().zip(ps).map(move |(h, p)| HullPose {
                    link: l,
                    hull: h.hull.id().to_string(),
                    rotation: std::array::from_fn(|i| std::array::from_fn(|j| p.rotation[(i, j)])),
                    translation: arr(&p.translation),
                })
            })
            .collect();
        let tracks = out
            .tracks
            .iter()
            .map(|t| TrackMessage {
                link: t.link_index,
                p_robot: arr(&t.current.p_global),
                p_obst: arr(&t.current.p_obstacle),
                d: t.current.distance,
                p_robot_future: t.future.as_ref().map(|f| arr(&f.p_global)),
                p_obst_future: t.future.as_ref().map(|f| arr(&f.p_obstacle)),
                d_future: t.future.as_ref().map(|f| f.distance),
            })
            .collect();
        Snapshot {
            tick: self.tick,
            t: self.tick as f64 * self.ts(),
            q: arr(&x.q),
            xe: arr(&x.x_e),
            u: arr(&out.u_applied.0),
            command: arr(x_dot),
            seq: self.command.map_or(0, |c| c.seq),
            watchdog,
            tracks,
            min_distance: min_dist.is_finite().then_some(min_dist),
            slack: out.slack_max,
            status: out.status.as_str().to_string(),
            collision,
            poses,
        }
    }

    pub fn scene(&self) -> SceneMessage {
        let s = &self.scenario;
        let vertices = |vs: &[Vec3]| vs.iter().map(arr).collect();
        SceneMessage {
            scenario: s.name.clone(),
            controller: self.mode().as_str().to_string(),
            ts: self.ts(),
            d_lb: s.controller.d_lb,
            ee_velocity_limit: s.robot.ee_limits().velocity,
            robot: RobotMessage {
                links: s
                    .robot
                    .links()
                    .iter()
                    .map(|l| LinkMessage {
                        id: l.name.clone(),
                        hulls: l.hulls.iter().map(|h| HullMessage { id: h.hull.id().to_string(), vertices: vertices(h.hull.vertices()) }).collect(),
                    })
                    .collect(),
            },
            obstacles: s.obstacles.iter().map(|o| HullMessage { id: o.world().id().to_string(), vertices: vertices(o.world().vertices()) }).collect(),
        }
    }
}

/// Runs a recorded event log through a fresh session.
pub fn replay(scenario: &Scenario, mode: ControllerMode, events: &[SessionEvent]) -> Result<Vec<Snapshot>, TeleopError> {
    let mut session = Session::start(scenario, mode)?;
    let mut out = Vec::new();
    for e in events {
        match *e {
            SessionEvent::Command { now, seq, v } => {
                session.submit_command(Vec3::from(v), seq, now)?;
            }
            SessionEvent::Tick { now } => out.push(session.tick(now)?),
        }
    }
    Ok(out)
}
