//! Desired-velocity scripts: piecewise-constant step inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepInput {
    pub start: f64,
    pub duration: f64,
    /// Desired end-effector angular velocity in rad/s.
    pub velocity: [f64; 3],
}

impl StepInput {
    fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputScript {
    pub steps: Vec<StepInput>,
}

impl InputScript {
    /// Desired velocity at time `t`; zero outside every step.
    pub fn at(&self, t: f64) -> Vec3 {
        self.steps
            .iter()
            .find(|s| t >= s.start && t < s.end())
            .map(|s| Vec3::from(s.velocity))
            .unwrap_or_else(Vec3::zeros)
    }

    pub fn validate(&self, episode_length: f64) -> Result<(), String> {
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.start >= 0.0 && s.duration > 0.0 && s.velocity.iter().all(|v| v.is_finite())) {
                return Err(format!("step {i} needs start >= 0, duration > 0 and a finite velocity"));
            }
            if s.end() > episode_length + 1e-9 {
                return Err(format!("step {i} ends at {} after the episode length {episode_length}", s.end()));
            }
        }
        let mut sorted: Vec<&StepInput> = self.steps.iter().collect();
        sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
        if sorted.windows(2).any(|w| w[1].start < w[0].end() - 1e-12) {
            return Err("steps overlap".into());
        }
        Ok(())
    }
}

/// Parameters of a seeded step-input script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomScript {
    #[serde(default = "default_count")]
    pub count: usize,
    /// Magnitude range `[lo, hi]` in rad/s.
    pub magnitude: [f64; 2],
    pub step_duration: f64,
    #[serde(default)]
    pub start: f64,
    /// End-effector axes a step may drive (0 = φx, 1 = φy, 2 = φz).
    #[serde(default = "default_axes")]
    pub axes: Vec<usize>,
}

fn default_count() -> usize {
    4
}

fn default_axes() -> Vec<usize> {
    vec![0, 1, 2]
}

impl RandomScript {
    pub fn new(count: usize, magnitude: [f64; 2], step_duration: f64) -> Self {
        Self { count, magnitude, step_duration, start: 0.0, axes: default_axes() }
    }
}

/// Consecutive steps, each along one uniformly drawn axis with a uniformly
/// drawn sign and magnitude. Deterministic per seed.
pub fn generate_step_inputs(seed: u64, spec: &RandomScript) -> Result<InputScript, String> {
    let [lo, hi] = spec.magnitude;
    if spec.count == 0 {
        return Err("count must be at least 1".into());
    }
    if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
        return Err("magnitude range must satisfy 0 <= lo <= hi".into());
    }
    if spec.step_duration.is_nan() || spec.step_duration <= 0.0 || spec.start.is_nan() || spec.start < 0.0 {
        return Err("step_duration must be positive and start non-negative".into());
    }
    if spec.axes.is_empty() || spec.axes.iter().any(|a| *a > 2) {
        return Err("axes must be a non-empty subset of 0, 1, 2".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (0..spec.count)
        .map(|i| {
            let axis = spec.axes[rng.random_range(0..spec.axes.len())];
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let m = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let mut velocity = [0.0; 3];
            velocity[axis] = sign * m;
            StepInput { start: spec.start + i as f64 * spec.step_duration, duration: spec.step_duration, velocity }
        })
        .collect();
    Ok(InputScript { steps })
}
