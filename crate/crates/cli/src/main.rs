mod output;
mod spec;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use spikefield_core::approx_sim::run_discrete;
use spikefield_core::exact_sim::{run_exact, run_thinning, ExtinctionOutcome};
use spikefield_core::experiments::{
    bistability_quadratic, constant_rate_check, extinction_scaling, fixed_points, mckean_compare, phase_affine,
    EnsembleParams, ExtinctionSummary, DEFAULT_THRESHOLD,
};
use spikefield_core::mckean_vlasov::PicardConfig;
use spikefield_core::stationary::{RootSearch, SuperlinearBranches};
use spikefield_core::{Error, NetworkConfig, Result, RngStream};

use output::{num, write_csv, write_json, write_summary, Table};
use spec::{Experiment, ExperimentSpec, Method};

#[derive(Parser, Debug)]
#[command(name = "spikefield", version, about = "Pulse-coupled Poisson neuron experiments")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Print the JSON schema of experiment spec files and exit.
    #[arg(long)]
    print_schema: bool,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON experiment spec; missing fields take the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads; the output does not depend on this.
    #[arg(long, env = "SPIKEFIELD_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Averaged activity against the stationary rate for an affine rate.
    PhaseAffine(Common),
    /// Extinction times of small networks by exact simulation.
    ExtinctionScaling(Common),
    /// Activity of a quadratic-rate network against the starting level.
    BistabilityQuadratic(Common),
    /// Stationary solutions and stability of the trivial state.
    FixedPoints(Common),
    /// Constant-rate closed forms against exact equilibrium sampling.
    ConstantRateCheck(Common),
    /// Picard solution of the mean-field equation against a particle run.
    MckeanCompare(Common),
    /// One network run.
    Simulate(Common),
}

impl Command {
    fn parts(&self) -> (Experiment, &Common) {
        match self {
            Command::PhaseAffine(c) => (Experiment::PhaseAffine, c),
            Command::ExtinctionScaling(c) => (Experiment::ExtinctionScaling, c),
            Command::BistabilityQuadratic(c) => (Experiment::BistabilityQuadratic, c),
            Command::FixedPoints(c) => (Experiment::FixedPoints, c),
            Command::ConstantRateCheck(c) => (Experiment::ConstantRateCheck, c),
            Command::MckeanCompare(c) => (Experiment::MckeanCompare, c),
            Command::Simulate(c) => (Experiment::Simulate, c),
        }
    }
}

/// A run that completed but failed its own acceptance gate.
struct GateFailed;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Divergent(_) | Error::Numerical(_) => 3,
        Error::Io(_) => 4,
    }
}

fn load_spec(common: &Common, experiment: Experiment) -> Result<ExperimentSpec> {
    let mut s = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            spec::parse(&text)?
        }
        None => ExperimentSpec::default(),
    };
    if common.seed.is_some() {
        s.seed = common.seed;
    }
    if common.replicas.is_some() {
        s.replicas = common.replicas;
    }
    s.resolve(experiment)
}

fn ensemble(s: &ExperimentSpec) -> EnsembleParams {
    EnsembleParams {
        n: s.n.unwrap(),
        replicas: s.replicas.unwrap(),
        seed: s.seed.unwrap(),
        dt: s.dt.unwrap(),
        horizon: s.horizon.unwrap(),
        window: s.window.unwrap(),
    }
}

fn window_notes(s: &ExperimentSpec) -> Vec<String> {
    let (a, b) = s.window.unwrap();
    vec![format!("beta_hat is the mean firing rate <Lambda_N, b> averaged over [{}, {}]", num(a), num(b))]
}

#[derive(Serialize)]
struct PhaseSummary {
    mean_weight: f64,
    beta_star: f64,
    mean_beta_hat: f64,
    min_beta_hat: f64,
    max_beta_hat: f64,
}

fn run_phase(s: &ExperimentSpec, out: Option<&Path>) -> Result<()> {
    let evs = s.mean_weights.as_ref().unwrap();
    let rows = phase_affine(s.rate.as_ref().unwrap(), evs, s.init.as_ref().unwrap(), &ensemble(s))?;
    let mut t = Table::new(&["mean_weight", "replica", "seed", "beta_hat", "beta_star"]);
    for r in &rows {
        t.push(vec![num(r.mean_weight), r.replica.to_string(), r.seed.to_string(), num(r.beta_hat), num(r.beta_star)]);
    }
    write_csv(out, s, &window_notes(s), &t)?;
    let summary: Vec<PhaseSummary> = evs
        .iter()
        .map(|ev| {
            let cell: Vec<_> = rows.iter().filter(|r| r.mean_weight == *ev).collect();
            let hats: Vec<f64> = cell.iter().map(|r| r.beta_hat).collect();
            PhaseSummary {
                mean_weight: *ev,
                beta_star: cell[0].beta_star,
                mean_beta_hat: hats.iter().sum::<f64>() / hats.len() as f64,
                min_beta_hat: hats.iter().cloned().fold(f64::INFINITY, f64::min),
                max_beta_hat: hats.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    write_summary(out, s, &summary)
}

fn run_extinction(s: &ExperimentSpec, out: Option<&Path>) -> Result<()> {
    let (rows, summaries): (_, Vec<ExtinctionSummary>) = extinction_scaling(
        s.rate.as_ref().unwrap(),
        s.network_sizes.as_ref().unwrap(),
        s.mean_weights.as_ref().unwrap(),
        s.init.as_ref().unwrap(),
        s.replicas.unwrap(),
        s.seed.unwrap(),
        s.horizon.unwrap(),
    )?;
    let mut t = Table::new(&["n", "mean_weight", "replica", "seed", "outcome", "extinction_time", "total_spikes"]);
    for r in &rows {
        let (outcome, time, spikes) = match r.outcome {
            ExtinctionOutcome::Extinct {
                last_spike_time,
                total_spikes,
            } => ("extinct", num(last_spike_time), total_spikes.to_string()),
            ExtinctionOutcome::HorizonExceeded { .. } => ("horizon_exceeded", String::new(), String::new()),
            ExtinctionOutcome::NeverExtinguishes => ("never_extinguishes", String::new(), String::new()),
        };
        t.push(vec![
            r.n.to_string(),
            num(r.mean_weight),
            r.replica.to_string(),
            r.seed.to_string(),
            outcome.into(),
            time,
            spikes,
        ]);
    }
    write_csv(out, s, &[], &t)?;
    write_summary(out, s, &summaries)
}

#[derive(Serialize)]
struct BistabilitySummary {
    mean_weight: f64,
    rho: f64,
    branches: Option<SuperlinearBranches>,
    separatrix: Option<(f64, f64)>,
}

fn run_bistability(s: &ExperimentSpec, out: Option<&Path>) -> Result<()> {
    let params = ensemble(s);
    let mut t = Table::new(&["mean_weight", "v0", "replica", "seed", "beta_hat", "class"]);
    let mut summary = Vec::new();
    for ev in s.mean_weights.as_ref().unwrap() {
        let report = bistability_quadratic(
            s.rate.as_ref().unwrap(),
            *ev,
            s.v0_grid.as_ref().unwrap(),
            &params,
            s.threshold.unwrap(),
            s.refine_steps.unwrap(),
        )?;
        for r in &report.rows {
            let class = serde_json::to_value(r.class).unwrap();
            t.push(vec![
                num(*ev),
                num(r.v0),
                r.replica.to_string(),
                r.seed.to_string(),
                num(r.beta_hat),
                class.as_str().unwrap().to_string(),
            ]);
        }
        summary.push(BistabilitySummary {
            mean_weight: *ev,
            rho: report.rho,
            branches: report.branches,
            separatrix: report.separatrix,
        });
    }
    let mut notes = window_notes(s);
    notes.push(format!(
        "class is sustained when beta_hat > {} (default {}, a chosen cut)",
        num(s.threshold.unwrap()),
        num(DEFAULT_THRESHOLD)
    ));
    write_csv(out, s, &notes, &t)?;
    write_summary(out, s, &summary)
}

fn run_fixed_points(s: &ExperimentSpec, out: Option<&Path>) -> Result<()> {
    let (lo, hi) = s.beta_range.unwrap();
    let search = RootSearch {
        beta_lo: lo,
        beta_hi: hi,
        grid_points: s.grid_points.unwrap(),
        tol: s.root_tol.unwrap(),
    };
    let records = fixed_points(s.rates.as_ref().unwrap(), s.mean_weights.as_ref().unwrap(), &search)?;
    write_json(out, s, &records)
}

fn run_constant_rate(s: &ExperimentSpec, out: Option<&Path>) -> Result<()> {
    let rows = constant_rate_check(
        s.network_sizes.as_ref().unwrap(),
        s.lambdas.as_ref().unwrap(),
        s.weights.as_ref().unwrap(),
        s.xi_grid.as_ref().unwrap(),
        s.samples.unwrap(),
        s.seed.unwrap(),
    )?;
    write_json(out, s, &rows)
}

fn run_mckean(s: &ExperimentSpec, out: Option<&Path>) -> std::result::Result<(), Failure> {
    let picard = PicardConfig {
        h: s.grid_step.unwrap(),
        horizon: s.horizon.unwrap(),
        particles: s.particles.unwrap(),
        cutoff: s.cutoff,
        tol: s.tol.unwrap(),
        max_iter: s.max_iter.unwrap(),
        seed: s.seed.unwrap(),
    };
    let mut results = Vec::new();
    for ev in s.mean_weights.as_ref().unwrap() {
        results.push(mckean_compare(
            s.rate.as_ref().unwrap(),
            *ev,
            s.init.as_ref().unwrap(),
            &picard,
            s.n.unwrap(),
            s.dt.unwrap(),
        )?);
    }
    write_json(out, s, &results)?;
    if results.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::Gate(GateFailed))
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    method: Method,
    n: usize,
    total_spikes: u64,
}

fn run_simulate(s: &ExperimentSpec, out: Option<&Path>) -> Result<()> {
    let cfg = NetworkConfig::new(
        s.n.unwrap(),
        s.rate.unwrap(),
        s.weights.unwrap(),
        s.scaling.unwrap(),
        s.seed.unwrap(),
    );
    let init = s.init.as_ref().unwrap();
    let horizon = s.horizon.unwrap();
    let method = s.method.unwrap();
    let (table, total) = match method {
        Method::Exact | Method::Thinning => {
            let log = if method == Method::Exact {
                run_exact(&cfg, init, horizon, &[])?
            } else {
                run_thinning(&cfg, init, horizon, &RngStream::new(cfg.seed))?
            };
            let mut t = Table::new(&["time", "neuron"]);
            for e in &log.events {
                t.push(vec![num(e.time), e.neuron.to_string()]);
            }
            (t, log.events.len() as u64)
        }
        Method::Discrete => {
            let run = run_discrete(&cfg, init, s.dt.unwrap(), horizon)?;
            let mut t = Table::new(&["time", "mean_potential", "mean_rate", "spikes"]);
            for k in 0..run.times.len() {
                t.push(vec![
                    num(run.times[k]),
                    num(run.mean_potential[k]),
                    num(run.mean_rate[k]),
                    run.spikes[k].to_string(),
                ]);
            }
            (t, run.total_spikes())
        }
    };
    write_csv(out, s, &[], &table)?;
    write_summary(
        out,
        s,
        &SimulateSummary {
            method,
            n: cfg.n,
            total_spikes: total,
        },
    )
}

enum Failure {
    Error(Error),
    Gate(GateFailed),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn run(command: &Command) -> std::result::Result<(), Failure> {
    let (experiment, common) = command.parts();
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let s = load_spec(common, experiment)?;
    let out = common.out.as_deref();
    match experiment {
        Experiment::PhaseAffine => run_phase(&s, out)?,
        Experiment::ExtinctionScaling => run_extinction(&s, out)?,
        Experiment::BistabilityQuadratic => run_bistability(&s, out)?,
        Experiment::FixedPoints => run_fixed_points(&s, out)?,
        Experiment::ConstantRateCheck => run_constant_rate(&s, out)?,
        Experiment::MckeanCompare => run_mckean(&s, out)?,
        Experiment::Simulate => run_simulate(&s, out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_schema {
        let schema = schemars::schema_for!(ExperimentSpec);
        let text = serde_json::to_string_pretty(&schema).unwrap();
        return match writeln!(std::io::stdout(), "{text}") {
            Ok(()) => ExitCode::SUCCESS,
            Err(_) => ExitCode::from(4),
        };
    }
    let Some(command) = cli.command else {
        eprintln!("spikefield: no command given, see --help");
        return ExitCode::from(2);
    };
    match run(&command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("spikefield: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Gate(GateFailed)) => {
            eprintln!("spikefield: comparison outside tolerance");
            ExitCode::from(3)
        }
    }
}
