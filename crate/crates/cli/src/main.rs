use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use drift_core::bo::{write_history_csv, write_timing_csv, BoSettings, ThetaBounds};
use drift_core::equilibrium::{dep_sweep, solve_dep, write_sweep_csv, SweepCell};
use drift_core::path::{build_clothoid, build_eight_path, ClothoidSpec, DEFAULT_SPACING};
use drift_core::sim::{
    collect_traces, compare, render_table, run_episode, tune, write_bundle, write_metrics_csv, EpisodeTrace, Mode,
    ReportRow, Scenario, Theta,
};
use drift_core::vehicle::VehicleParams;

#[derive(Parser)]
#[command(name = "drift", version, about = "Drift-vehicle MPC simulator and tuner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve drift equilibria and print them as CSV.
    Dep {
        #[arg(long, default_value_t = -0.52, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 40.0, allow_hyphen_values = true)]
        radius: f64,
        /// Sweep delta in [-0.6, -0.3] and R in [20, 80] instead.
        #[arg(long)]
        sweep: bool,
        /// Grid points per axis for --sweep.
        #[arg(long, default_value_t = 10)]
        cells: usize,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a reference path as CSV.
    Path {
        #[arg(long, value_enum, default_value_t = PathKind::Clothoid)]
        kind: PathKind,
        /// Lobe radius of the figure-eight (m).
        #[arg(long, default_value_t = 40.0)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_SPACING)]
        spacing: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one closed-loop episode.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        mode: Mode,
        /// delta_eq,w_r,w_e
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<Theta>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn theta by Bayesian optimisation.
    Tune {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        mode: Mode,
        #[arg(long, default_value_t = 20)]
        init: usize,
        #[arg(long, default_value_t = 320)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare traces written by `simulate`.
    Report {
        /// Trace files, or directories holding trace_*.csv files.
        #[arg(long, num_args = 1.., required = true)]
        traces: Vec<PathBuf>,
        /// Scenario used for the episode cost column.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PathKind {
    Clothoid,
    Eight,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn load_scenario(path: &Path, mode: Mode) -> Result<Scenario> {
    let mut s = Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))?;
    s.mode = mode;
    Ok(s)
}

fn dep(delta: f64, radius: f64, sweep: bool, cells: usize, mu: f64, out: Option<PathBuf>) -> Result<()> {
    let params = VehicleParams::default().with_mu(mu);
    params.validate()?;
    let table = if sweep {
        dep_sweep(&linspace(-0.6, -0.3, cells), &linspace(20.0, 80.0, cells), &params)
    } else {
        vec![SweepCell { delta, radius, result: solve_dep(delta, radius, &params, None) }]
    };
    let solved = table.iter().filter(|c| c.converged().is_some()).count();
    write_sweep_csv(&table, output(out.as_deref())?)?;
    eprintln!("{solved}/{} equilibria converged", table.len());
    Ok(())
}

fn simulate(scenario: &Path, mode: Mode, theta: Option<Theta>, out: &Path) -> Result<()> {
    let s = load_scenario(scenario, mode)?;
    let trace = run_episode(&s, theta)?;
    fs::create_dir_all(out)?;
    trace.write_csv(BufWriter::new(File::create(out.join(format!("trace_{mode}.csv")))?))?;
    let rows = vec![ReportRow { label: mode.label().to_string(), metrics: trace.metrics(&s) }];
    write_metrics_csv(&rows, BufWriter::new(File::create(out.join(format!("metrics_{mode}.csv")))?))?;
    print!("{}", render_table(&rows));
    if let Some(f) = &trace.failure {
        eprintln!("episode failed at step {}: {}", f.step, f.reason);
    }
    Ok(())
}

fn tune_cmd(scenario: &Path, mode: Mode, settings: BoSettings, out: &Path) -> Result<()> {
    let s = load_scenario(scenario, mode)?;
    if mode == Mode::Ppt {
        bail!("mode ppt has no parameters to tune");
    }
    let result = tune(&s, &ThetaBounds::default(), &settings)?;
    fs::create_dir_all(out)?;
    write_history_csv(&result.bo.history, &result.names, BufWriter::new(File::create(out.join("history.csv"))?))?;
    write_timing_csv(&result.bo.wall_time, BufWriter::new(File::create(out.join("timing.csv"))?))?;
    let t = result.theta;
    let best = format!(
        "mode = \"{mode}\"\ntheta = [{}, {}, {}]\ncost = {}\n",
        t.delta_eq, t.w_r, t.w_e, result.bo.best_cost
    );
    fs::write(out.join("theta.toml"), &best)?;
    println!("best theta = {},{},{}  cost = {:.6}", t.delta_eq, t.w_r, t.w_e, result.bo.best_cost);
    Ok(())
}

fn report(traces: &[PathBuf], scenario: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let s = match scenario {
        Some(p) => Scenario::load(p).with_context(|| format!("loading scenario {}", p.display()))?,
        None => Scenario::case1(),
    };
    let mut entries: Vec<(String, EpisodeTrace)> = Vec::new();
    for path in traces {
        for (label, file) in collect_traces(path)? {
            let trace = EpisodeTrace::read_csv(File::open(&file).with_context(|| format!("reading {}", file.display()))?)?;
            entries.push((label, trace));
        }
    }
    let rows = compare(&entries, &s)?;
    print!("{}", render_table(&rows));
    match out {
        Some(dir) => write_bundle(dir, &entries, &rows)?,
        None => write_metrics_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Dep { delta, radius, sweep, cells, mu, out } => dep(delta, radius, sweep, cells, mu, out),
        Command::Path { kind, radius, spacing, out } => {
            let table = match kind {
                PathKind::Clothoid => build_clothoid(&ClothoidSpec::default(), spacing)?,
                PathKind::Eight => build_eight_path(radius, spacing)?,
            };
            table.write_csv(output(out.as_deref())?)?;
            Ok(())
        }
        Command::Simulate { scenario, mode, theta, out } => simulate(&scenario, mode, theta, &out),
        Command::Tune { scenario, mode, init, budget, seed, out } => {
            let settings = BoSettings { init, budget, seed, ..BoSettings::default() };
            tune_cmd(&scenario, mode, settings, &out)
        }
        Command::Report { traces, scenario, out } => report(&traces, scenario.as_deref(), out.as_deref()),
    }
}
