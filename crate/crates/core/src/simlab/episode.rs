//! Closed-loop episodes, metrics and prediction-error profiles.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::scenario::{Scenario, ScenarioError};
use crate::controller::{ControlOutcome, Controller, ControllerMode, StepStatus};
use crate::geometry::{distance, Vec3};
use crate::kinematics::{ControlInput, RobotModel, SystemState};
use crate::prediction::{rollout, Obstacle};

/// Smallest hull–obstacle distance at configuration `q` and whether any pair collides.
/// Without obstacles the distance is infinite.
pub fn scene_min_distance(model: &RobotModel, q: &Vec3, obstacles: &[Obstacle]) -> (f64, bool) {
    let pose = model.forward_kinematics(q);
    let mut min = f64::INFINITY;
    for (link, poses) in model.links().iter().zip(model.hull_poses(&pose)) {
        for (lh, p) in link.hulls.iter().zip(&poses) {
            let hull = lh.hull.transformed(p);
            for ob in obstacles {
                let d = distance(&hull, ob.world()).expect("scene hulls are valid").distance_or_zero();
                min = min.min(d);
            }
        }
    }
    (min, min == 0.0)
}

/// Integrates the true state one Euler step. On the singular angle
/// parameterization the joints still move and the angles are refreshed from FK.
pub fn advance(model: &RobotModel, x: &SystemState, u: &ControlInput, ts: f64) -> SystemState {
    model.step_state(x, u, ts).unwrap_or_else(|_| model.state_at(&(x.q + u.0 * ts)))
}

/// One executed control cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub state: SystemState,
    pub u: Vec3,
    pub x_dot_desired: Vec3,
    pub min_dist: f64,
    pub slack_max: f64,
    pub collision: bool,
    pub status: StepStatus,
    pub elapsed_ms: f64,
    pub qp_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    /// Mean smallest hull–obstacle distance [m].
    pub d_ob: f64,
    /// Share of cycles with the smallest distance at or below `d_min` [%].
    pub t_ob: f64,
    /// Mean joint second difference over `Ts²`, divided by `1 + joint path length`.
    pub f_ps: f64,
    /// Mean input change over `Ts` [rad/s²].
    pub f_vs: f64,
    /// Mean `‖J(q) u − ẋ_d‖` [rad/s].
    pub f_vt: f64,
    /// Mean wall time per control step [ms].
    pub t_c: f64,
    /// Executed states in collision.
    pub collisions: usize,
    /// Executed states closer than `d_lb − ε_ub`.
    pub violations: usize,
    /// Cycles that fell back to a zero input.
    pub fallbacks: usize,
    pub min_distance: f64,
    /// Mean `rows × variables` of the QPs solved; a machine-independent cost proxy.
    pub qp_size: f64,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 11] =
        ["d_ob", "t_ob", "f_ps", "f_vs", "f_vt", "t_c", "collisions", "violations", "fallbacks", "min_distance", "qp_size"];

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "d_ob" => self.d_ob,
            "t_ob" => self.t_ob,
            "f_ps" => self.f_ps,
            "f_vs" => self.f_vs,
            "f_vt" => self.f_vt,
            "t_c" => self.t_c,
            "collisions" => self.collisions as f64,
            "violations" => self.violations as f64,
            "fallbacks" => self.fallbacks as f64,
            "min_distance" => self.min_distance,
            "qp_size" => self.qp_size,
            _ => return None,
        })
    }
}

/// Mean and standard deviation of `|predicted − actual|` minimal distance per look-ahead step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionErrorProfile {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub count: Vec<usize>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl PredictionErrorProfile {
    pub fn new(horizon: usize) -> Self {
        Self {
            mean: vec![0.0; horizon],
            sd: vec![0.0; horizon],
            count: vec![0; horizon],
            sum: vec![0.0; horizon],
            sum_sq: vec![0.0; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    /// Adds one sample at step `i` (1-based).
    pub fn add(&mut self, i: usize, err: f64) {
        self.count[i - 1] += 1;
        self.sum[i - 1] += err;
        self.sum_sq[i - 1] += err * err;
        self.refresh(i - 1);
    }

    fn refresh(&mut self, j: usize) {
        let n = self.count[j] as f64;
        if n == 0.0 {
            return;
        }
        self.mean[j] = self.sum[j] / n;
        self.sd[j] = if n > 1.0 { ((self.sum_sq[j] - n * self.mean[j].powi(2)) / (n - 1.0)).max(0.0).sqrt() } else { 0.0 };
    }

    /// Pools the samples of several profiles.
    pub fn pooled<'a>(profiles: impl IntoIterator<Item = &'a PredictionErrorProfile>) -> Self {
        let mut out = Self::default();
        for p in profiles {
            if out.horizon() == 0 {
                out = Self::new(p.horizon());
            }
            for j in 0..p.horizon().min(out.horizon()) {
                out.count[j] += p.count[j];
                out.sum[j] += p.sum[j];
                out.sum_sq[j] += p.sum_sq[j];
                out.refresh(j);
            }
        }
        out
    }

    /// Mean error at step `i` (1-based).
    pub fn mean_at(&self, i: usize) -> f64 {
        self.mean[i - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i", "mean_err", "sd_err"]).expect("in-memory write");
        for j in 0..self.horizon() {
            w.write_record([(j + 1).to_string(), self.mean[j].to_string(), self.sd[j].to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub scenario: String,
    pub mode: ControllerMode,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// State after the last cycle.
    pub final_state: SystemState,
    pub outcomes: Vec<ControlOutcome>,
    pub metrics: MetricsReport,
    pub profile: PredictionErrorProfile,
}

impl EpisodeResult {
    /// Per-cycle log: `time,q1,q2,q3,u1,u2,u3,min_dist,slack_max,collision`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "q1", "q2", "q3", "u1", "u2", "u3", "min_dist", "slack_max", "collision"])
            .expect("in-memory write");
        for r in &self.records {
            let q = r.state.q;
            w.write_record([
                r.time.to_string(),
                q.x.to_string(),
                q.y.to_string(),
                q.z.to_string(),
                r.u.x.to_string(),
                r.u.y.to_string(),
                r.u.z.to_string(),
                r.min_dist.to_string(),
                r.slack_max.to_string(),
                u8::from(r.collision).to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Options that only affect what is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub profile: bool,
    pub keep_outcomes: bool,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self { profile: true, keep_outcomes: true }
    }
}

pub fn run_episode(s: &Scenario) -> EpisodeResult {
    run_episode_with(s, EpisodeOptions::default())
}

/// Closed-loop simulation: the true state follows the nonlinear Euler step
/// under the applied input; distances are re-measured by GJK at every
/// executed state.
pub fn run_episode_with(s: &Scenario, opts: EpisodeOptions) -> EpisodeResult {
    let cfg = &s.controller;
    let model = &s.robot;
    let mut controller = Controller::new(model.clone(), cfg.clone()).expect("scenario config was validated");
    let mut x = model.state_at(&s.initial_q);
    let mut records = Vec::with_capacity(s.steps());
    let mut outcomes = Vec::new();
    let mut profile = PredictionErrorProfile::new(cfg.horizon);

    for k in 0..s.steps() {
        let t = k as f64 * cfg.ts;
        let xd = s.script.at(t);
        let (min_dist, collision) = scene_min_distance(model, &x.q, &s.obstacles);
        let out = controller.control_step(&x, &xd, &s.obstacles);

        if opts.profile && out.status == StepStatus::Optimal && !out.distances.is_empty() {
            if let Ok(states) = rollout(model, &x, &out.plan.inputs, cfg.horizon, cfg.ts) {
                for (i, st) in states.iter().enumerate() {
                    if let Some(pred) = out.predicted_min(i + 1) {
                        let (actual, _) = scene_min_distance(model, &st.q, &s.obstacles);
                        profile.add(i + 1, (pred - actual).abs());
                    }
                }
            }
        }

        records.push(StepRecord {
            time: t,
            state: x,
            u: out.u_applied.0,
            x_dot_desired: xd,
            min_dist,
            slack_max: out.slack_max,
            collision,
            status: out.status,
            elapsed_ms: out.elapsed.as_secs_f64() * 1e3,
            qp_size: out.rows * cfg.num_variables(),
        });
        x = advance(model, &x, &out.u_applied, cfg.ts);
        if opts.keep_outcomes {
            outcomes.push(out);
        }
    }

    let (final_dist, final_collision) = scene_min_distance(model, &x.q, &s.obstacles);
    let metrics = compute_metrics(s, &records, &x, final_dist, final_collision);
    EpisodeResult {
        scenario: s.name.clone(),
        mode: cfg.mode,
        seed: s.seed,
        records,
        final_state: x,
        outcomes,
        metrics,
        profile,
    }
}

fn compute_metrics(s: &Scenario, records: &[StepRecord], final_state: &SystemState, final_dist: f64, final_collision: bool) -> MetricsReport {
    let cfg = &s.controller;
    let ts = cfg.ts;
    let n = records.len().max(1) as f64;
    let mean = |f: &dyn Fn(&StepRecord) -> f64| records.iter().map(f).sum::<f64>() / n;

    let mut qs: Vec<Vec3> = records.iter().map(|r| r.state.q).collect();
    qs.push(final_state.q);
    let path: f64 = qs.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let second: Vec<f64> = qs.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).norm() / (ts * ts)).collect();
    let f_ps = if second.is_empty() { 0.0 } else { second.iter().sum::<f64>() / second.len() as f64 / (1.0 + path) };
    let du: Vec<f64> = records.windows(2).map(|w| (w[1].u - w[0].u).norm() / ts).collect();
    let f_vs = if du.is_empty() { 0.0 } else { du.iter().sum::<f64>() / du.len() as f64 };
    let f_vt = mean(&|r| match s.robot.jacobian_end_effector(&r.state.q) {
        Ok(j) => (j * r.u - r.x_dot_desired).norm(),
        Err(_) => r.x_dot_desired.norm(),
    });
    let bound = cfg.d_lb - cfg.eps_ub - 1e-9;
    let dists = records.iter().map(|r| r.min_dist).chain(std::iter::once(final_dist));
    let collisions = records.iter().filter(|r| r.collision).count() + usize::from(final_collision);
    MetricsReport {
        d_ob: mean(&|r| r.min_dist),
        t_ob: 100.0 * records.iter().filter(|r| r.min_dist <= cfg.prediction.d_min).count() as f64 / n,
        f_ps,
        f_vs,
        f_vt,
        t_c: mean(&|r| r.elapsed_ms),
        collisions,
        violations: dists.clone().filter(|d| *d < bound).count(),
        fallbacks: records.iter().filter(|r| r.status.is_fallback()).count(),
        min_distance: dists.fold(f64::INFINITY, f64::min),
        qp_size: mean(&|r| r.qp_size as f64),
    }
}

/// Episodes `seed, seed + 1, …` of `s`, run in parallel, returned in seed order.
pub fn run_batch(s: &Scenario, episodes: usize, seed: u64, opts: EpisodeOptions) -> Result<Vec<EpisodeResult>, ScenarioError> {
    let scenarios = (0..episodes as u64).map(|e| s.with_seed(seed + e)).collect::<Result<Vec<_>, _>>()?;
    Ok(scenarios.par_iter().map(|sc| run_episode_with(sc, opts)).collect())
}

/// One row per episode: `episode,seed,<metrics…>`.
pub fn metrics_csv(batch: &[EpisodeResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["episode".to_string(), "seed".to_string()];
    header.extend(MetricsReport::NAMES.iter().map(|s| s.to_string()));
    w.write_record(&header).expect("in-memory write");
    for (i, e) in batch.iter().enumerate() {
        let mut row = vec![i.to_string(), e.seed.to_string()];
        row.extend(MetricsReport::NAMES.iter().map(|m| e.metrics.get(m).expect("known metric").to_string()));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Reads one metric column from a file written by [`metrics_csv`].
pub fn read_metric_column(path: impl AsRef<Path>, metric: &str) -> Result<Vec<f64>, String> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let col = headers.iter().position(|h| h == metric).ok_or_else(|| format!("{}: no column '{metric}'", path.display()))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            rec[col].parse::<f64>().map_err(|e| format!("{}: {e}", path.display()))
        })
        .collect()
}

/// Writes `episode_<seed>.csv` per episode, `metrics.csv` and `profile.csv` into `dir`.
pub fn write_batch(dir: impl AsRef<Path>, batch: &[EpisodeResult]) -> std::io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for e in batch {
        std::fs::write(dir.join(format!("episode_{}.csv", e.seed)), e.to_csv())?;
    }
    std::fs::write(dir.join("metrics.csv"), metrics_csv(batch))?;
    let profile = PredictionErrorProfile::pooled(batch.iter().map(|e| &e.profile));
    let mut f = std::fs::File::create(dir.join("profile.csv"))?;
    f.write_all(profile.to_csv().as_bytes())
}
