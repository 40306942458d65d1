//! Scenarios, closed-loop simulation, evaluation metrics, statistics and
//! parameter search.

mod episode;
mod scenario;
mod script;
mod stats;
mod tune;

pub use episode::{
    advance, metrics_csv, read_metric_column, run_batch, run_episode, run_episode_with, scene_min_distance, write_batch,
    EpisodeOptions, EpisodeResult, MetricsReport, PredictionErrorProfile, StepRecord,
};
pub use scenario::{
    load_scenario, ControllerSpec, HullSpec, JointSpec, LimitsSpec, LinkSpec, PoseSpec, RobotSpec, Scenario,
    ScenarioError, ScenarioFile, ScriptSpec, DEFAULT_EPISODE_LENGTH,
};
pub use script::{generate_step_inputs, InputScript, RandomScript, StepInput};
pub use stats::{compare, StatsError, Tail, WelchTest, DEFAULT_ALPHA};
pub use tune::{score, tune, SearchSpace, TuneResult, TuneSample, DEFAULT_WEIGHTS, FAILURE_PENALTY, METRIC_SCALES};

/// Scenario files shipped with the crate, as `(name, json)`.
pub const BUNDLED_SCENARIOS: [(&str, &str); 3] = [
    ("carm_table", include_str!("../../scenarios/carm_table.json")),
    ("rotating_plate", include_str!("../../scenarios/rotating_plate.json")),
    ("parallel_surface", include_str!("../../scenarios/parallel_surface.json")),
];

pub fn bundled_scenario(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, json)| Scenario::from_json(json, n))
}
