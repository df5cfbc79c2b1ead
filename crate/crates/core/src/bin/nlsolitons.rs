use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use nlsolitons::decomposition::Tracker;
use nlsolitons::effective::{integrate, EffectiveState};
use nlsolitons::field::{charge, energy, read_checkpoint, write_checkpoint};
use nlsolitons::harness::experiment::{build_initial, observation_window, profile_cache, run_experiment_with};
use nlsolitons::harness::output::{emit_run, emit_sweep, fmt_float, write_timeseries, TimeSeriesRow};
use nlsolitons::harness::sweep::{run_scaling_sweep, SweepAxis, SweepMetric};
use nlsolitons::harness::ExperimentConfig;
use nlsolitons::manifold::omega_matrix_closed;
use nlsolitons::solver::evolve;

#[derive(Parser)]
#[command(name = "nlsolitons", version, about = "Two-soliton NLS collision lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML); defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set experiment.alpha=0.25`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides experiment.output)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the initial fluctuation
    #[arg(long)]
    seed: Option<u64>,
    /// Solver steps between recorded frames
    #[arg(long)]
    checkpoint_stride: Option<usize>,
}

impl Common {
    fn load(&self) -> nlsolitons::Result<(ExperimentConfig, PathBuf)> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("experiment.seed={seed}"));
        }
        if let Some(k) = self.checkpoint_stride {
            overrides.push(format!("solver.checkpoint_stride={k}"));
        }
        let config = match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides)?,
            None => ExperimentConfig::from_toml_with_overrides("", &overrides)?,
        };
        let out = self.out.clone().unwrap_or_else(|| config.experiment.output.clone());
        fs::create_dir_all(&out)?;
        Ok((config, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a ground-state profile and write it with Ω at soliton 1
    Profile {
        #[command(flatten)]
        common: Common,
        /// Frequency (defaults to soliton 1's)
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Evolve the initial data, writing field checkpoints and conserved quantities
    Evolve {
        #[command(flatten)]
        common: Common,
    },
    /// Track soliton parameters through a sequence of field checkpoints
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Checkpoint files in time order
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
    },
    /// Integrate the modulation equations from the initial parameters
    Effective {
        #[command(flatten)]
        common: Common,
    },
    /// Full experiment: evolve, track, compare and summarise
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the experiment along one axis and fit a log-log slope
    Sweep {
        #[command(flatten)]
        common: Common,
        /// v0, h or d
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Worker threads (0 = all cores)
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Fitted quantity (sup_w, w_at_window, deviation_a); default depends on the axis
        #[arg(long)]
        metric: Option<String>,
    },
}

fn end_time(config: &ExperimentConfig) -> nlsolitons::Result<f64> {
    Ok(observation_window(config)?.max(config.experiment.horizon))
}

fn profile(common: &Common, mu: Option<f64>) -> nlsolitons::Result<()> {
    let (config, out) = common.load()?;
    let cache = profile_cache(&config)?;
    let sigma = config.initial.soliton1;
    let mu = mu.unwrap_or(sigma.mu);
    let p = cache.get(mu)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(out.join("profile.csv"))?));
    w.write_record(["x", "eta", "deta_dx", "deta_dmu"])?;
    for (j, x) in p.grid.coordinates().iter().enumerate() {
        w.write_record([*x, p.samples[j], p.deriv_samples[j], p.dmu_samples[j]].map(fmt_float))?;
    }
    w.flush()?;
    let mut s = sigma;
    s.mu = mu;
    omega_matrix_closed(&s, p.mass, p.mass_slope)?.write_csv(BufWriter::new(File::create(out.join("omega.csv"))?))?;
    println!("mu = {mu}  mass = {:.12e}  mass_slope = {:.12e}  residual = {:.3e}", p.mass, p.mass_slope, p.residual);
    Ok(())
}

fn evolve_cmd(common: &Common) -> nlsolitons::Result<()> {
    let (config, out) = common.load()?;
    let cache = profile_cache(&config)?;
    let psi0 = build_initial(&config, &cache)?;
    let hash = config.hash()?;
    let potential = config.potential_spec()?;
    let nl = config.nonlinearity_spec()?;
    let fields = out.join("fields");
    fs::create_dir_all(&fields)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(out.join("conserved.csv"))?));
    w.write_record(["t", "charge", "energy"])?;
    let mut k = 0usize;
    let outcome = evolve(&psi0, &potential, &nl, 0.0, end_time(&config)?, &config.solver.solver_config(), |psi| {
        let mut f = BufWriter::new(File::create(fields.join(format!("field_{k:06}.bin")))?);
        write_checkpoint(&mut f, psi, &hash)?;
        f.flush()?;
        w.write_record([psi.time, charge(psi), energy(psi, &potential, &nl, psi.time)?].map(fmt_float))?;
        k += 1;
        Ok(())
    })?;
    w.flush()?;
    println!("{} steps, {k} frames, max relative charge drift {:.3e}", outcome.steps, outcome.max_charge_drift);
    Ok(())
}

fn decompose_cmd(common: &Common, input: &[PathBuf]) -> nlsolitons::Result<()> {
    let (config, out) = common.load()?;
    let cache = profile_cache(&config)?;
    let mut tracker = Tracker::new(&cache, &config.solitons());
    let mut rows = Vec::with_capacity(input.len());
    for path in input {
        let (_, psi) = read_checkpoint(BufReader::new(File::open(path)?))?;
        rows.push(TimeSeriesRow::from(&tracker.push(&psi)?));
    }
    write_timeseries(BufWriter::new(File::create(out.join("timeseries.csv"))?), rows)?;
    println!("tracked {} frames", tracker.frames_processed());
    Ok(())
}

fn effective_cmd(common: &Common) -> nlsolitons::Result<()> {
    let (config, out) = common.load()?;
    let potential = config.potential_spec()?;
    let dt = config.solver.dt;
    let traj = integrate(&EffectiveState::new(config.solitons(), 0.0), &potential, end_time(&config)?, dt)?;
    let stride = config.solver.checkpoint_stride;
    let last = traj.len() - 1;
    let rows = traj
        .iter()
        .enumerate()
        .filter(|(k, _)| k % stride == 0 || *k == last)
        .map(|(_, s)| TimeSeriesRow::from(s));
    write_timeseries(BufWriter::new(File::create(out.join("effective.csv"))?), rows)?;
    println!("integrated to t = {}", traj[last].t);
    Ok(())
}

fn run_cmd(common: &Common) -> nlsolitons::Result<()> {
    let (config, out) = common.load()?;
    let record = run_experiment_with(&config, Some(&out.join("fields")))?;
    emit_run(&record, &config, &out)?;
    println!(
        "{:?}: sup_w = {:.6e} on [0, {:.4}], {} frames, status {:?}",
        record.scenario,
        record.sup_w,
        record.window,
        record.frames.len(),
        record.status
    );
    Ok(())
}

fn sweep_cmd(
    common: &Common,
    axis: SweepAxis,
    values: &[f64],
    jobs: usize,
    metric: Option<&str>,
) -> nlsolitons::Result<()> {
    let (config, out) = common.load()?;
    let metric = match metric {
        None => SweepMetric::default_for(axis),
        Some(name) => toml::Value::String(name.to_owned())
            .try_into()
            .map_err(|_| nlsolitons::Error::Config(format!("unknown metric {name:?}")))?,
    };
    let result = run_scaling_sweep(&config, axis, values, metric, jobs)?;
    emit_sweep(&result, &config, &out)?;
    for s in &result.samples {
        println!("{:>10} -> {:.6e}", s.value, s.metric);
    }
    match result.fit {
        Some(f) => println!("slope = {:.4} ± {:.4}", f.slope, f.slope_error),
        None => println!("fewer than 3 completed points; no fit"),
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Profile { common, mu } => profile(common, *mu),
        Command::Evolve { common } => evolve_cmd(common),
        Command::Decompose { common, input } => decompose_cmd(common, input),
        Command::Effective { common } => effective_cmd(common),
        Command::Run { common } => run_cmd(common),
        Command::Sweep {
            common,
            axis,
            values,
            jobs,
            metric,
        } => sweep_cmd(common, *axis, values, *jobs, metric.as_deref()),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
