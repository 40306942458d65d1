use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use foresight::controller::{ControllerMode, MpcConfig};
use foresight::simlab::{
    bundled_scenario, compare, load_scenario, read_metric_column, run_batch, run_episode, tune, write_batch, EpisodeOptions,
    EpisodeResult, MetricsReport, Scenario, ScenarioError, SearchSpace, Tail, DEFAULT_WEIGHTS,
};

#[derive(Parser)]
#[command(name = "foresight", version, about = "Predictive collision-avoidance simulation and teleoperation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Base,
    New,
}

impl From<Controller> for ControllerMode {
    fn from(c: Controller) -> Self {
        match c {
            Controller::Base => ControllerMode::Baseline,
            Controller::New => ControllerMode::Future,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Less,
    Greater,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode of a scenario file or bundled scenario name.
    Run {
        scenario: String,
        #[arg(long, value_enum)]
        controller: Option<Controller>,
        /// Write episode, metrics and profile CSVs here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 if any executed state collides.
        #[arg(long)]
        strict: bool,
    },
    /// Run seeded episodes of every scenario in a directory (or of one file).
    Batch {
        scenarios: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum)]
        controller: Option<Controller>,
        #[arg(long, default_value = "batch_out")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// One-tailed Welch test of a metric between two batch outputs.
    Compare {
        batch_a: PathBuf,
        batch_b: PathBuf,
        #[arg(long)]
        metric: String,
        /// Alternative hypothesis on mean(A) relative to mean(B).
        #[arg(long, value_enum, default_value = "less")]
        tail: TailArg,
        #[arg(long, default_value_t = foresight::simlab::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Random search over horizon, slack weight and slack bound.
    Tune {
        scenario: String,
        #[arg(long, default_value_t = 20)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, value_enum)]
        controller: Option<Controller>,
        /// Write the search trace as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve live teleoperation sessions over HTTP and WebSocket.
    Serve {
        /// Listen address; defaults to $FORESIGHT_LISTEN, then 127.0.0.1:8080.
        #[arg(long)]
        listen: Option<String>,
        /// Extra scenario files offered next to the bundled ones.
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Collision(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Collision(_) => 3,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

/// A path to a scenario file, or the name of a bundled scenario.
fn resolve(scenario: &str, controller: Option<Controller>) -> Result<Scenario, Failure> {
    let s = if Path::new(scenario).exists() {
        load_scenario(scenario)?
    } else if let Some(s) = bundled_scenario(scenario) {
        s?
    } else {
        return Err(Failure::Validation(format!("no scenario file or bundled scenario named '{scenario}'")));
    };
    Ok(match controller {
        Some(c) => s.with_mode(c.into())?,
        None => s,
    })
}

fn scenario_files(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Validation(format!("{}: no .json scenario files", path.display())));
    }
    Ok(files)
}

fn print_metrics(label: &str, m: &MetricsReport) {
    println!(
        "{label}: d_ob={:.4} t_ob={:.1}% f_ps={:.4} f_vs={:.4} f_vt={:.4} t_c={:.2}ms min_distance={:.4} collisions={} violations={} fallbacks={}",
        m.d_ob, m.t_ob, m.f_ps, m.f_vs, m.f_vt, m.t_c, m.min_distance, m.collisions, m.violations, m.fallbacks
    );
}

fn strict_check(strict: bool, episodes: &[EpisodeResult]) -> Result<(), Failure> {
    let collisions: usize = episodes.iter().map(|e| e.metrics.collisions).sum();
    if strict && collisions > 0 {
        return Err(Failure::Collision(format!("{collisions} colliding states")));
    }
    Ok(())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { scenario, controller, out, strict } => {
            let s = resolve(&scenario, controller)?;
            let e = run_episode(&s);
            print_metrics(&format!("{} [{}]", s.name, s.controller.mode.as_str()), &e.metrics);
            if let Some(dir) = out {
                write_batch(&dir, std::slice::from_ref(&e)).map_err(io)?;
                println!("wrote {}", dir.display());
            }
            strict_check(strict, std::slice::from_ref(&e))
        }
        Command::Batch { scenarios, episodes, seed, controller, out, strict } => {
            if episodes == 0 {
                return Err(Failure::Validation("--episodes must be at least 1".into()));
            }
            let mut all = Vec::new();
            for file in scenario_files(&scenarios)? {
                let s = resolve(&file.to_string_lossy(), controller)?;
                let batch = run_batch(&s, episodes, seed, EpisodeOptions::default())?;
                let dir = out.join(&s.name);
                write_batch(&dir, &batch).map_err(io)?;
                let mean = mean_metrics(&batch);
                print_metrics(&format!("{} [{}] x{episodes}", s.name, s.controller.mode.as_str()), &mean);
                println!("wrote {}", dir.display());
                all.extend(batch);
            }
            strict_check(strict, &all)
        }
        Command::Compare { batch_a, batch_b, metric, tail, alpha } => {
            if !MetricsReport::NAMES.contains(&metric.as_str()) {
                return Err(Failure::Validation(format!("unknown metric '{metric}'; one of {}", MetricsReport::NAMES.join(", "))));
            }
            let read = |p: &Path| {
                let file = if p.is_dir() { p.join("metrics.csv") } else { p.to_path_buf() };
                read_metric_column(&file, &metric).map_err(Failure::Validation)
            };
            let (a, b) = (read(&batch_a)?, read(&batch_b)?);
            let tail = match tail {
                TailArg::Less => Tail::Less,
                TailArg::Greater => Tail::Greater,
            };
            let w = compare(&a, &b, tail, alpha).map_err(|e| Failure::Validation(e.to_string()))?;
            let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
            println!("{metric}: mean A={:.6} (n={}) mean B={:.6} (n={})", mean(&a), a.len(), mean(&b), b.len());
            println!("t={:.4} df={:.2} p={:.3e} significant={}", w.t, w.df, w.p, w.significant);
            Ok(())
        }
        Command::Tune { scenario, budget, seed, episodes, controller, out } => {
            let s = resolve(&scenario, controller)?;
            let r = tune(&s, &SearchSpace::default(), &DEFAULT_WEIGHTS, budget, episodes, seed)?;
            for (i, t) in r.trace.iter().enumerate() {
                println!(
                    "{i:3}: N={:2} S={:.3e} eps_ub={:.3e} score={:.4} failures={}",
                    t.config.horizon, t.config.slack_weight, t.config.eps_ub, t.score, t.failures
                );
            }
            println!("best #{}: {}", r.best_index, controller_json(&r.best));
            if let Some(path) = out {
                write_trace(&path, &r.trace).map_err(io)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Serve { listen, scenarios } => {
            let mut offered: Vec<Scenario> = foresight::simlab::BUNDLED_SCENARIOS
                .iter()
                .map(|(n, j)| Scenario::from_json(j, n))
                .collect::<Result<_, _>>()?;
            if let Some(dir) = scenarios {
                for f in scenario_files(&dir)? {
                    offered.push(load_scenario(&f)?);
                }
            }
            let addr = foresight_bridge::listen_address(listen.as_deref());
            let rt = tokio::runtime::Runtime::new().map_err(io)?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| Failure::Validation(format!("{addr}: {e}")))?;
                println!("listening on {}", listener.local_addr().map_err(io)?);
                foresight_bridge::serve(listener, foresight_bridge::Bridge::new(offered)).await.map_err(io)
            })
        }
    }
}

fn mean_metrics(batch: &[EpisodeResult]) -> MetricsReport {
    let n = batch.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| batch.iter().map(|e| f(&e.metrics)).sum::<f64>() / n;
    MetricsReport {
        d_ob: avg(|m| m.d_ob),
        t_ob: avg(|m| m.t_ob),
        f_ps: avg(|m| m.f_ps),
        f_vs: avg(|m| m.f_vs),
        f_vt: avg(|m| m.f_vt),
        t_c: avg(|m| m.t_c),
        collisions: batch.iter().map(|e| e.metrics.collisions).sum(),
        violations: batch.iter().map(|e| e.metrics.violations).sum(),
        fallbacks: batch.iter().map(|e| e.metrics.fallbacks).sum(),
        min_distance: batch.iter().map(|e| e.metrics.min_distance).fold(f64::INFINITY, f64::min),
        qp_size: avg(|m| m.qp_size),
    }
}

/// The tuned parameters in scenario-file form.
fn controller_json(c: &MpcConfig) -> String {
    serde_json::json!({
        "controller": {
            "mode": c.mode.as_str(),
            "horizon": c.horizon,
            "slack_weight": c.slack_weight,
            "eps_ub": c.eps_ub,
        }
    })
    .to_string()
}

fn write_trace(path: &Path, trace: &[foresight::simlab::TuneSample]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sample", "horizon", "slack_weight", "eps_ub", "score", "failures"];
    header.extend(MetricsReport::NAMES);
    w.write_record(&header)?;
    for (i, t) in trace.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            t.config.horizon.to_string(),
            t.config.slack_weight.to_string(),
            t.config.eps_ub.to_string(),
            t.score.to_string(),
            t.failures.to_string(),
        ];
        row.extend(MetricsReport::NAMES.iter().map(|n| t.metrics.get(n).unwrap_or(f64::NAN).to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Validation(m) => ("invalid input", m),
                Failure::Collision(m) => ("collision", m),
                Failure::Runtime(m) => ("error", m),
            };
            eprintln!("{kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
