//! Subcommands and their output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use crowdfilter_core::bench::{
    run_prediction_protocol, run_tracking_protocol, sweep, BenchError, Objective, PredictionReport,
    SweepCase, SweepGrid, SweepResult, SweepSettings, TrackingReport,
};
use crowdfilter_core::filter::HpfConfig;
use crowdfilter_core::motion::NoiseSpec;
use crowdfilter_core::rvo::RvoParams;
use crowdfilter_core::scenario::{
    corrupt, make_scenario, min_separation, occlusion_schedule, simulate, ObservationTrace, Scenario, ScenarioError,
    SimulationPlan,
};
use thiserror::Error;

use crate::config::{ConfigError, RawConfig, RunConfig};
use crate::io::{read_trajectories, write_csv_fixy, DataError, Format};

pub const REPORT_FILE: &str = "report.csv";
pub const ECHO_FILE: &str = "config.echo";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";

/// Pedestrian crowd simulation, filtering and evaluation.
#[derive(Debug, Parser)]
#[command(name = "crowdfilter", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic scenario, or re-simulate an input file's agents toward their last positions.
    Simulate(RunArgs),
    /// Learn-then-predict evaluation.
    Predict(RunArgs),
    /// Tracking through noisy, occluded observations.
    Track(RunArgs),
    /// Grid or seeded-random parameter search.
    Sweep(RunArgs),
    /// Report the smallest pairwise gap between agent discs in a trajectory file.
    CheckSeparation(CheckArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Motion models, comma separated.
    #[arg(long)]
    pub model: Option<String>,
    /// Filters, comma separated: pf, hpf.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Markov order of the higher-order filter.
    #[arg(long)]
    pub k: Option<String>,
    /// Mixture weights, comma separated.
    #[arg(long)]
    pub pi: Option<String>,
    /// Particles per filter.
    #[arg(long)]
    pub m: Option<String>,
    /// Trajectory file instead of a synthetic scenario.
    #[arg(long)]
    pub input: Option<String>,
    /// csv-fixy or obsmat.
    #[arg(long)]
    pub format: Option<String>,
    /// Synthetic scenario: head_on, crossing, circle, corridor.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub agents: Option<String>,
    /// Number of seeded repetitions.
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub sigma_obs: Option<String>,
    /// Observation noise added to the trace.
    #[arg(long)]
    pub noise: Option<String>,
    /// Frames between occlusion windows; 0 disables them.
    #[arg(long)]
    pub occlusion_every: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("model", &self.model),
            ("filter", &self.filter),
            ("seed", &self.seed),
            ("hpf.k", &self.k),
            ("hpf.pi", &self.pi),
            ("hpf.m", &self.m),
            ("input", &self.input),
            ("format", &self.format),
            ("scenario.kind", &self.kind),
            ("scenario.agents", &self.agents),
            ("scenario.trials", &self.trials),
            ("likelihood.sigma_obs", &self.sigma_obs),
            ("corrupt.sigma", &self.noise),
            ("corrupt.occlusion_every", &self.occlusion_every),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "csv-fixy")]
    pub format: String,
    /// Disc radius of every agent, meters.
    #[arg(long, default_value_t = 0.3)]
    pub radius: f64,
    /// Accepted overlap, meters.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("pairwise gap {gap} below -{tolerance}")]
    Overlap { gap: f64, tolerance: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Bench(BenchError::NoEligibleTrials) => 3,
            CliError::Data(_) | CliError::Io { .. } => 4,
            CliError::Scenario(_) | CliError::Bench(_) | CliError::Overlap { .. } => 1,
        }
    }
}

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn merged_config(args: &RunArgs) -> Result<(RawConfig, RunConfig), CliError> {
    let mut raw = RawConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        raw.apply_text(&text)?;
    }
    for (k, v) in args.overrides() {
        raw.set(k, v)?;
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError {
            field: kv.clone(),
            message: "expected KEY=VALUE".into(),
        })?;
        raw.set(k.trim(), v.trim())?;
    }
    let cfg = RunConfig::from_raw(&raw)?;
    Ok((raw, cfg))
}

fn prepare_out(args: &RunArgs, raw: &RawConfig) -> Result<(), CliError> {
    fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        path: args.out.clone(),
        source,
    })?;
    write(&args.out.join(ECHO_FILE), &raw.echo())
}

/// Runs one command; the caller maps errors to exit codes.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::CheckSeparation(a) => check_separation(&a),
        Command::Simulate(a) => {
            let (raw, cfg) = merged_config(&a)?;
            cmd_simulate(&a.out, &raw, &cfg, &a)
        }
        Command::Predict(a) => {
            let (raw, cfg) = merged_config(&a)?;
            prepare_out(&a, &raw)?;
            cmd_predict(&a.out, &cfg)
        }
        Command::Track(a) => {
            let (raw, cfg) = merged_config(&a)?;
            prepare_out(&a, &raw)?;
            cmd_track(&a.out, &cfg)
        }
        Command::Sweep(a) => {
            let (raw, cfg) = merged_config(&a)?;
            prepare_out(&a, &raw)?;
            cmd_sweep(&a.out, &cfg)
        }
    }
}

fn check_separation(a: &CheckArgs) -> Result<(), CliError> {
    let format: Format = a.format.parse().map_err(|_| ConfigError {
        field: "format".into(),
        message: format!("unknown format `{}`", a.format),
    })?;
    let s = read_trajectories(&a.input, format, 0.4)?;
    let gap = min_separation(&s, |_| a.radius);
    println!("min gap {gap:.9} m over {} frames", s.len());
    if gap < -a.tolerance {
        return Err(CliError::Overlap {
            gap,
            tolerance: a.tolerance,
        });
    }
    Ok(())
}

/// Agents start at their first position and walk to their last at their
/// average observed speed.
fn replay_plan(s: &Scenario) -> SimulationPlan {
    let ids = s.agent_ids();
    let mut plan = SimulationPlan {
        ids: ids.clone(),
        starts: Vec::new(),
        goals: Vec::new(),
        speeds: Vec::new(),
        frames: s.len(),
        perturbation: 0.0,
        exits: false,
    };
    for id in ids {
        let track = s.track(id);
        let (first, last) = (track[0], track[track.len() - 1]);
        let length: f64 = track.windows(2).map(|w| w[0].1.distance(w[1].1)).sum();
        let duration = (last.0 - first.0).max(1) as f64 * s.dt();
        plan.starts.push(first.1);
        plan.goals.push(last.1);
        plan.speeds.push((length / duration).max(0.1));
    }
    plan
}

fn cmd_simulate(out: &Path, raw: &RawConfig, cfg: &RunConfig, args: &RunArgs) -> Result<(), CliError> {
    let s = match &cfg.input {
        Some(path) => {
            let input = read_trajectories(path, cfg.format, cfg.dt)?;
            simulate(input.name(), &replay_plan(&input), cfg.seed).scenario
        }
        None => make_scenario(cfg.kind, cfg.agents, cfg.seed).scenario,
    };
    prepare_out(args, raw)?;
    write(&out.join(TRAJECTORIES_FILE), &write_csv_fixy(&s))?;
    println!(
        "{}: {} frames, {} agents, min gap {:.6} m",
        s.name(),
        s.len(),
        s.agent_ids().len(),
        min_separation(&s, |_| cfg.protocol.radius)
    );
    Ok(())
}

/// The scenarios a command runs on with their observation traces. An input
/// file is repeated with a fresh corruption per trial; synthetic scenarios
/// are regenerated per trial.
fn cases(cfg: &RunConfig, corrupted: bool) -> Result<(String, Vec<(SweepCase, u64)>), CliError> {
    let input = match &cfg.input {
        Some(path) => Some(read_trajectories(path, cfg.format, cfg.dt)?),
        None => None,
    };
    let dataset = match &input {
        Some(s) => s.name().to_string(),
        None => format!("{}-{}", cfg.kind, cfg.agents),
    };
    let mut out = Vec::with_capacity(cfg.trials);
    for i in 0..cfg.trials as u64 {
        let seed = cfg.seed.wrapping_add(i);
        let scenario = match &input {
            Some(s) => s.clone(),
            None => make_scenario(cfg.kind, cfg.agents, seed).scenario,
        };
        let trace = if corrupted {
            let occ = occlusion_schedule(&scenario, cfg.occlusion_length, cfg.occlusion_every, seed);
            corrupt(&scenario, cfg.corrupt_sigma, &occ, seed)?
        } else {
            ObservationTrace::clean(&scenario)
        };
        out.push((SweepCase { scenario, trace }, seed));
    }
    Ok((dataset, out))
}

fn cmd_predict(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let (dataset, cases) = cases(cfg, false)?;
    let mut csv = String::from("dataset,model,filter,L,mean_error_m,n_trials\n");
    let mut table = String::new();
    let _ = writeln!(table, "{:<16} {:<6} {:<4} {:>4} {:>10} {:>8}", "dataset", "model", "filt", "L", "error_m", "trials");
    for &model in &cfg.models {
        for &filter in &cfg.filters {
            let mut trials = Vec::new();
            for (case, seed) in &cases {
                match run_prediction_protocol(&case.scenario, &case.trace, model, filter, &cfg.protocol, *seed) {
                    Ok(r) => trials.extend(r.trials),
                    Err(BenchError::NoEligibleTrials) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            if trials.is_empty() {
                return Err(BenchError::NoEligibleTrials.into());
            }
            let r = PredictionReport::from_trials(dataset.clone(), model, filter, cfg.protocol.horizons.clone(), trials);
            for c in &r.cells {
                let _ = writeln!(csv, "{},{},{},{},{:.6},{}", r.dataset, model, filter, c.horizon, c.mean_error, c.trials);
                let _ = writeln!(
                    table,
                    "{:<16} {:<6} {:<4} {:>4} {:>10.3} {:>8}",
                    r.dataset, model, filter, c.horizon, c.mean_error, c.trials
                );
            }
        }
    }
    write(&out.join(REPORT_FILE), &csv)?;
    print!("{table}");
    Ok(())
}

fn cmd_track(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let (dataset, cases) = cases(cfg, true)?;
    let mut csv = String::from("dataset,model,filter,N,tracks,st,ids,lost,mean_distance_m\n");
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<16} {:<6} {:<4} {:>5} {:>7} {:>7} {:>5} {:>5}",
        "dataset", "model", "filt", "N", "tracks", "ST", "IDS", "lost"
    );
    for &model in &cfg.models {
        for &filter in &cfg.filters {
            let mut records = Vec::new();
            for (case, seed) in &cases {
                records.extend(run_tracking_protocol(&case.scenario, &case.trace, model, filter, &cfg.protocol, *seed)?.records);
            }
            let r = TrackingReport::from_records(dataset.clone(), model, filter, &cfg.protocol.track_horizons, records);
            let total = r.records.len();
            let lost: usize = r.cells.iter().map(|c| c.lost).sum();
            let rows = r
                .cells
                .iter()
                .map(|c| (c.horizon.to_string(), c.tracks, c.successes, c.id_switches, c.lost, c.mean_distance))
                .chain(std::iter::once((
                    "all".to_string(),
                    total,
                    r.successes(),
                    r.id_switches(),
                    lost,
                    r.mean_distance().unwrap_or(0.0),
                )));
            for (n, tracks, st, ids, lost, dist) in rows {
                let _ = writeln!(csv, "{dataset},{model},{filter},{n},{tracks},{st},{ids},{lost},{dist:.6}");
                let _ = writeln!(table, "{dataset:<16} {model:<6} {filter:<4} {n:>5} {tracks:>7} {st:>7} {ids:>5} {lost:>5}");
            }
        }
    }
    write(&out.join(REPORT_FILE), &csv)?;
    print!("{table}");
    Ok(())
}

fn or_base<T: Clone>(axis: &[T], base: T) -> Vec<T> {
    if axis.is_empty() {
        vec![base]
    } else {
        axis.to_vec()
    }
}

fn sweep_grid(cfg: &RunConfig) -> SweepGrid {
    let base = &cfg.protocol;
    let sw = &cfg.sweep;
    let mut rvo = Vec::new();
    for &time_horizon in &or_base(&sw.time_horizon, base.rvo.time_horizon) {
        for &neighbor_radius in &or_base(&sw.neighbor_radius, base.rvo.neighbor_radius) {
            rvo.push(RvoParams {
                time_horizon,
                neighbor_radius,
                ..base.rvo
            });
        }
    }
    let mut noise = Vec::new();
    for &sigma_position in &or_base(&sw.sigma_position, base.noise.sigma_position) {
        for &sigma_velocity in &or_base(&sw.sigma_velocity, base.noise.sigma_velocity) {
            for &sigma_desired in &or_base(&sw.sigma_desired, base.noise.sigma_desired) {
                noise.push(NoiseSpec {
                    sigma_position,
                    sigma_velocity,
                    sigma_desired,
                });
            }
        }
    }
    let mut hpf = Vec::new();
    for pi in or_base(&sw.pi, base.hpf.pi.clone()) {
        for &particles_m in &or_base(&sw.particles_m, base.hpf.particles_m) {
            hpf.push(HpfConfig {
                order_k: pi.len(),
                pi: pi.clone(),
                particles_m,
                selection: base.hpf.selection,
            });
        }
    }
    SweepGrid {
        rvo,
        noise,
        hpf,
        sigma_obs: or_base(&cfg.sweep.sigma_obs, base.likelihood.sigma_obs),
    }
}

fn sweep_csv(r: &SweepResult) -> String {
    let mut csv = String::from(
        "index,time_horizon,neighbor_radius,sigma_position,sigma_velocity,sigma_desired,k,pi,m,sigma_obs,value,best\n",
    );
    for (i, row) in r.rows.iter().enumerate() {
        let p = &row.point;
        let pi: Vec<String> = p.hpf.pi.iter().map(f64::to_string).collect();
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{},{},{},{},{:.6},{}",
            p.rvo.time_horizon,
            p.rvo.neighbor_radius,
            p.noise.sigma_position,
            p.noise.sigma_velocity,
            p.noise.sigma_desired,
            p.hpf.order_k,
            pi.join(";"),
            p.hpf.particles_m,
            p.sigma_obs,
            row.value,
            u8::from(i == r.best)
        );
    }
    csv
}

fn cmd_sweep(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let objective = cfg.sweep.objective;
    let (_, cases) = cases(cfg, true)?;
    let cases: Vec<SweepCase> = cases.into_iter().map(|(c, _)| c).collect();
    let settings = SweepSettings {
        model: cfg.models[0],
        filter: cfg.filters[0],
        objective,
        base: cfg.protocol.clone(),
        samples: cfg.sweep.samples,
    };
    let r = sweep(&sweep_grid(cfg), &cases, &settings, cfg.seed)?;
    let path = out.join(REPORT_FILE);
    write(&path, &sweep_csv(&r))?;
    let what = match objective {
        Objective::MeanError { horizon } => format!("mean error at L={horizon}"),
        Objective::SuccessfulTracks => "successful tracks".to_string(),
    };
    println!("{} points, best #{} with {what} {:.6}", r.rows.len(), r.best, r.best().value);
    println!("{}", path.display());
    Ok(())
}
