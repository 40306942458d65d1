//! Seeded random search over `N`, `S` and `ε_ub`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::episode::{run_batch, EpisodeOptions, MetricsReport};
use super::scenario::{Scenario, ScenarioError};
use crate::controller::MpcConfig;

/// Weights of `d_ob, t_ob, f_ps, f_vs, f_vt, t_c`.
pub const DEFAULT_WEIGHTS: [f64; 6] = [0.2, 0.1, 0.2, 0.25, 0.2, 0.05];

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub horizons: Vec<usize>,
    /// Log-uniform range of the slack weight.
    pub slack_weight: [f64; 2],
    /// Log-uniform range of the slack bound, clipped to `d_lb`.
    pub eps_ub: [f64; 2],
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { horizons: vec![8, 12, 16, 20, 24], slack_weight: [1e4, 1e6], eps_ub: [1e-3, 0.15] }
    }
}

/// Scales dividing each metric before weighting, in the units of [`MetricsReport`].
/// The `t_c` term uses the QP size proxy so that the search is reproducible.
pub const METRIC_SCALES: [f64; 6] = [0.1, 10.0, 1.0, 0.1, 0.05, 2.0e4];

/// Added to the score for every episode with a collision or a fallback.
pub const FAILURE_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSample {
    pub config: MpcConfig,
    pub metrics: MetricsReport,
    pub failures: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: MpcConfig,
    pub best_index: usize,
    pub trace: Vec<TuneSample>,
}

/// Weighted, scaled score of averaged metrics.
pub fn score(m: &MetricsReport, failures: usize, weights: &[f64; 6]) -> f64 {
    let values = [m.d_ob, m.t_ob, m.f_ps, m.f_vs, m.f_vt, m.qp_size];
    let weighted: f64 = values.iter().zip(weights).zip(METRIC_SCALES).map(|((v, w), s)| w * v / s).sum();
    weighted + FAILURE_PENALTY * failures as f64
}

fn log_uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi <= lo {
        return lo;
    }
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn average(ms: &[MetricsReport]) -> MetricsReport {
    let n = ms.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| ms.iter().map(f).sum::<f64>() / n;
    MetricsReport {
        d_ob: avg(|m| m.d_ob),
        t_ob: avg(|m| m.t_ob),
        f_ps: avg(|m| m.f_ps),
        f_vs: avg(|m| m.f_vs),
        f_vt: avg(|m| m.f_vt),
        t_c: avg(|m| m.t_c),
        collisions: ms.iter().map(|m| m.collisions).sum(),
        violations: ms.iter().map(|m| m.violations).sum(),
        fallbacks: ms.iter().map(|m| m.fallbacks).sum(),
        min_distance: ms.iter().map(|m| m.min_distance).fold(f64::INFINITY, f64::min),
        qp_size: avg(|m| m.qp_size),
    }
}

/// Samples `budget` configurations around `base.controller` and evaluates each
/// on `episodes` seeded episodes. Ties keep the earliest sample.
pub fn tune(
    base: &Scenario,
    space: &SearchSpace,
    weights: &[f64; 6],
    budget: usize,
    episodes: usize,
    seed: u64,
) -> Result<TuneResult, ScenarioError> {
    if budget == 0 || episodes == 0 || space.horizons.is_empty() {
        return Err(ScenarioError::Validation("tune needs budget >= 1, episodes >= 1 and a horizon choice".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(budget);
    for _ in 0..budget {
        let horizon = space.horizons[rng.random_range(0..space.horizons.len())];
        let slack_weight = log_uniform(&mut rng, space.slack_weight);
        let eps_ub = log_uniform(&mut rng, space.eps_ub).min(base.controller.d_lb);
        let config = MpcConfig { slack_weight, eps_ub, ..base.controller.clone() }.with_horizon(horizon);
        let scenario = base.with_controller(config.clone())?;
        let opts = EpisodeOptions { profile: false, keep_outcomes: false };
        let batch = run_batch(&scenario, episodes, base.seed, opts)?;
        let per: Vec<MetricsReport> = batch.iter().map(|e| e.metrics).collect();
        let failures = per.iter().filter(|m| m.collisions > 0 || m.fallbacks > 0).count();
        let metrics = average(&per);
        trace.push(TuneSample { score: score(&metrics, failures, weights), config, metrics, failures });
    }
    let best_index = (0..trace.len()).fold(0, |b, i| if trace[i].score < trace[b].score { i } else { b });
    Ok(TuneResult { best: trace[best_index].config.clone(), best_index, trace })
}
