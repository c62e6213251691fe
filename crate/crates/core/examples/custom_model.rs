//! A user-defined drift: the Ornstein–Uhlenbeck pull q(x) = x killed at ±1.
//! The spectral QSD and a Fleming–Viot run agree.

use qsd::fv::{run_ergodic, ErgodicConfig, FvConfig};
use qsd::measure::{distance_tv, BinSpec};
use qsd::model::{DiffusionModel, Domain};
use qsd::oracle::solve_ground_state;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = DiffusionModel::custom("ou", Domain::bounded(-1.0, 1.0)?, |x| x, |_| 1.0);
    let trunc = model.truncate(0.0)?;
    let ground = solve_ground_state(&trunc, 5_000)?;
    println!("λ = {:.6}, residual {:.1e}", ground.lambda, ground.residual);

    let bins = BinSpec::for_truncation(&trunc, 40)?;
    let mut cfg = FvConfig::new(200, 1e-3, 5)?;
    cfg.workers = 1;
    let report = run_ergodic(&trunc, &cfg, &ErgodicConfig::new(200, bins.clone()))?;
    println!(
        "Fleming–Viot: TV to spectral = {:.4}, jump rate / N = {:.4}",
        distance_tv(&report.histogram, &ground.histogram(&bins)?)?,
        report.jump_rate / report.n_particles as f64
    );
    Ok(())
}
