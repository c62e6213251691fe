//! The `qsd` command line: `simulate`, `spectral`, `compare`,
//! `check-hypotheses` and `eps-sweep`.
//!
//! Every CSV written has the columns `bin_left,bin_right,density` (the
//! spectral grid file excepted) and a JSON sidecar of the same stem echoing
//! the configuration. Exit codes: 0 success, 1 comparison above tolerance,
//! 2 invalid input, 3 failure during computation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_param, SimConfig};
use crate::error::{Error, Result};
use crate::fv::{empirical_measure, mass_loss_measure, run_ergodic, run_finite_time, InitialCondition};
use crate::measure::{distance_tv, distance_w1, pushforward, read_csv, write_csv, write_json, BinSpec, Histogram};
use crate::model::{check_hypotheses, Direction, HypothesisTolerances, TruncatedDomain};
use crate::oracle::{eps_sweep, solve_ground_state};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPARE_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qsd", version, about = "Quasi-stationary distributions of killed 1-D diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fleming–Viot ergodic average, or the particle law at --horizon.
    Simulate(RunArgs),
    /// Ground state of the truncated generator and its QSD density.
    Spectral(RunArgs),
    /// TV and W1 distances between two density CSVs.
    Compare(CompareArgs),
    /// Numerical verdicts on the model's hypotheses, as JSON.
    CheckHypotheses(RunArgs),
    /// Spectral solves over a strictly decreasing list of ε.
    EpsSweep(RunArgs),
}

/// Flags shared by the model-driven subcommands. Each overrides the
/// corresponding key of `--config`.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Flat JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Catalog id: brownian, constant-drift, logistic-feller, wright-fisher.
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "n-particles")]
    pub n_particles: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Unsampled epochs before averaging.
    #[arg(long = "burn-in")]
    pub burn_in: Option<u64>,
    /// Sampled unit-time epochs.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Finite-time mode: run to this time from a uniform start.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for all cores; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Spectral grid nodes.
    #[arg(long = "grid-size")]
    pub grid_size: Option<usize>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Largest TV distance that passes.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
}

impl RunArgs {
    /// File values, then flags.
    pub fn resolve(&self) -> Result<SimConfig> {
        let mut c = match &self.config {
            Some(p) => SimConfig::from_json_file(p)?,
            None => SimConfig::default(),
        };
        if let Some(v) = &self.model {
            c.model = v.clone();
        }
        for (k, v) in &self.params {
            c.params.insert(k.clone(), *v);
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { c.$f = v; })*};
        }
        set!(n_particles, dt, seed, bins, workers, grid_size);
        macro_rules! set_opt {
            ($($f:ident),*) => {$(if self.$f.is_some() { c.$f = self.$f; })*};
        }
        set_opt!(epsilon, burn_in, horizon);
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = &self.epsilons {
            c.epsilons = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invalid { .. }
        | Error::UnknownModel { .. }
        | Error::OutsideDomain { .. }
        | Error::Parse { .. }
        | Error::IncompatibleRanges { .. }
        | Error::Json(_)
        | Error::EmptySample
        | Error::NotMonotone => EXIT_INVALID,
        Error::SimultaneousExtinction { .. }
        | Error::NoConvergence { .. }
        | Error::NegativeGroundState { .. }
        | Error::SurvivorStarvation { .. }
        | Error::NonFinite { .. }
        | Error::Quadrature { .. }
        | Error::OutOfRange { .. }
        | Error::Io { .. } => EXIT_RUNTIME,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Simulate(a) => a.resolve().and_then(|c| cmd_simulate(&c)).map(|_| EXIT_OK),
        Command::Spectral(a) => a.resolve().and_then(|c| cmd_spectral(&c)).map(|_| EXIT_OK),
        Command::Compare(a) => cmd_compare(&a.a, &a.b, a.tol),
        Command::CheckHypotheses(a) => a.resolve().and_then(|c| cmd_check_hypotheses(&c)).map(|_| EXIT_OK),
        Command::EpsSweep(a) => a.resolve().and_then(|c| cmd_eps_sweep(&c)).map(|_| EXIT_OK),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}

/// Sidecar fields common to every output.
fn sidecar(c: &SimConfig, trunc: &TruncatedDomain) -> BTreeMap<&'static str, Value> {
    let model = trunc.model();
    BTreeMap::from([
        ("model", json!(model.id())),
        ("params", json!(model.params())),
        ("epsilon", json!(trunc.epsilon())),
        ("killing_interval", json!([trunc.lower(), trunc.upper()])),
        ("n_particles", Value::Null),
        ("dt", Value::Null),
        ("burn_in", Value::Null),
        ("epochs", Value::Null),
        ("horizon", Value::Null),
        ("seed", Value::Null),
        ("bins", json!(c.bins)),
        ("jump_count", Value::Null),
        ("lambda", Value::Null),
        ("wall_time_s", Value::Null),
    ])
}

fn write_pair(dir: &Path, stem: &str, h: &Histogram, meta: &BTreeMap<&'static str, Value>, coordinate: &str) -> Result<()> {
    write_csv(dir.join(format!("{stem}.csv")), h)?;
    let mut meta = meta.clone();
    meta.insert("coordinate", json!(coordinate));
    meta.insert("file", json!(format!("{stem}.csv")));
    write_json(dir.join(format!("{stem}.json")), &meta)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Maps a histogram in `x` to the model's original coordinate.
fn to_original(trunc: &TruncatedDomain, h: &Histogram) -> Result<Histogram> {
    let tr = trunc.model().transform();
    pushforward(h, |x| tr.apply(x, Direction::Inverse))
}

pub fn cmd_simulate(c: &SimConfig) -> Result<()> {
    let trunc = c.truncation()?;
    let fv = c.fv_config()?;
    let spec = BinSpec::for_truncation(&trunc, c.bins)?;
    let mut meta = sidecar(c, &trunc);
    meta.insert("n_particles", json!(c.n_particles));
    meta.insert("dt", json!(c.dt));
    meta.insert("seed", json!(c.seed));
    let started = Instant::now();
    let histogram = match c.horizon {
        Some(horizon) => {
            let system = run_finite_time(&InitialCondition::Uniform, horizon, &trunc, &fv)?;
            let mass_loss = mass_loss_measure(&system);
            meta.insert("horizon", json!(horizon));
            meta.insert("jump_count", json!(system.jump_count()));
            meta.insert("mass_loss_total", json!(mass_loss.total_mass));
            empirical_measure(&system).histogram(&spec)?
        }
        None => {
            let report = run_ergodic(&trunc, &fv, &c.ergodic_config(&trunc)?)?;
            meta.insert("burn_in", json!(report.burn_in));
            meta.insert("epochs", json!(report.epochs));
            meta.insert("jump_count", json!(report.jump_count));
            meta.insert("jump_rate", json!(report.jump_rate));
            meta.insert("boundary_profile", json!(report.boundary_profile));
            report.histogram
        }
    };
    meta.insert("wall_time_s", json!(started.elapsed().as_secs_f64()));
    create_dir(&c.out)?;
    write_pair(&c.out, "density_x", &histogram, &meta, "x")?;
    write_pair(&c.out, "density_z", &to_original(&trunc, &histogram)?, &meta, "z")?;
    println!(
        "{}",
        json!({
            "out": c.out,
            "jump_count": meta["jump_count"],
            "wall_time_s": meta["wall_time_s"],
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct GridRow {
    x: f64,
    v: f64,
    density: f64,
}

pub fn cmd_spectral(c: &SimConfig) -> Result<()> {
    let trunc = c.truncation()?;
    let started = Instant::now();
    let eig = solve_ground_state(&trunc, c.grid_size)?;
    let h = eig.histogram(&BinSpec::for_truncation(&trunc, c.bins)?)?;
    let mut meta = sidecar(c, &trunc);
    meta.insert("lambda", json!(eig.lambda));
    meta.insert("grid_size", json!(eig.grid_size()));
    meta.insert("residual", json!(eig.residual));
    meta.insert("iterations", json!(eig.iterations));
    meta.insert("wall_time_s", json!(started.elapsed().as_secs_f64()));
    create_dir(&c.out)?;
    write_pair(&c.out, "spectral_x", &h, &meta, "x")?;
    write_pair(&c.out, "spectral_z", &to_original(&trunc, &h)?, &meta, "z")?;

    let grid_path = c.out.join("spectral_grid.csv");
    let mut w = csv::Writer::from_path(&grid_path).map_err(|e| csv_error(&grid_path, e))?;
    for ((&x, &v), &density) in eig.grid.iter().zip(&eig.v).zip(&eig.qsd_density) {
        w.serialize(GridRow { x, v, density }).map_err(|e| csv_error(&grid_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&grid_path, e))?;
    let mut grid_meta = meta.clone();
    grid_meta.insert("file", json!("spectral_grid.csv"));
    write_json(c.out.join("spectral_grid.json"), &grid_meta)?;
    println!("{}", json!({ "lambda": eig.lambda, "residual": eig.residual, "out": c.out }));
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        reason: e.to_string(),
    }
}

/// Prints the distances and returns [`EXIT_COMPARE_FAILED`] when TV
/// exceeds `tol`.
pub fn cmd_compare(a: &Path, b: &Path, tol: f64) -> Result<i32> {
    if !(tol >= 0.0) {
        return Err(Error::invalid("tol", format!("must be nonnegative, got {tol}")));
    }
    let (ha, hb) = (read_csv(a)?, read_csv(b)?);
    let tv = distance_tv(&ha, &hb)?;
    let w1 = distance_w1(&ha, &hb)?;
    let pass = tv <= tol;
    println!("{}", json!({ "tv": tv, "w1": w1, "tol": tol, "pass": pass }));
    Ok(if pass { EXIT_OK } else { EXIT_COMPARE_FAILED })
}

pub fn cmd_check_hypotheses(c: &SimConfig) -> Result<()> {
    let model = c.diffusion_model()?;
    let report = check_hypotheses(&model, &HypothesisTolerances::default());
    let text = report.to_json()?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    lambda: f64,
    residual: f64,
    grid_size: usize,
    /// TV to the next, smaller, ε; empty on the last row.
    tv_to_next: Option<f64>,
}

pub fn cmd_eps_sweep(c: &SimConfig) -> Result<()> {
    let model = c.diffusion_model()?;
    let started = Instant::now();
    let report = eps_sweep(&model, &c.epsilons, c.grid_size)?;
    create_dir(&c.out)?;
    let rows: Vec<SweepRow> = report
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| SweepRow {
            epsilon: e.epsilon,
            lambda: e.lambda,
            residual: e.residual,
            grid_size: e.grid.len(),
            tv_to_next: report.tv_successive.get(k).copied(),
        })
        .collect();
    let path = c.out.join("eps_sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    for (k, e) in report.entries.iter().enumerate() {
        let trunc = model.truncate(e.epsilon)?;
        let density = crate::oracle::GridDensity::new(e.grid.clone(), e.qsd_density.clone())?;
        let h = density.histogram(&BinSpec::for_truncation(&trunc, c.bins)?)?;
        let mut meta = sidecar(c, &trunc);
        meta.insert("lambda", json!(e.lambda));
        meta.insert("grid_size", json!(e.grid.len()));
        meta.insert("residual", json!(e.residual));
        write_pair(&c.out, &format!("eps_sweep_{k}_x"), &h, &meta, "x")?;
    }
    let summary = json!({
        "model": model.id(),
        "params": model.params(),
        "epsilons": c.epsilons,
        "lambdas": rows.iter().map(|r| r.lambda).collect::<Vec<_>>(),
        "tv_successive": report.tv_successive,
        "grid_size": c.grid_size,
        "bins": c.bins,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(c.out.join("eps_sweep.json"), &summary)?;
    println!("{summary}");
    Ok(())
}
