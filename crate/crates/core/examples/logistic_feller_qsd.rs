//! Logistic Feller diffusion dZ = √Z dB + (rZ - cZ²) dt: spectral QSD in the
//! population coordinate for several competition strengths, and a short
//! Fleming–Viot run for one of them.

use qsd::fv::{run_ergodic, ErgodicConfig, FvConfig};
use qsd::measure::{distance_tv, pushforward, BinSpec};
use qsd::model::{DiffusionModel, Direction};
use qsd::oracle::solve_ground_state;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for c in [0.5, 1.0, 2.0] {
        let model = DiffusionModel::logistic_feller(1.0, c)?;
        let trunc = model.truncate(0.001)?;
        let ground = solve_ground_state(&trunc, 10_000)?;
        let x = ground.histogram(&BinSpec::for_truncation(&trunc, 200)?)?;
        let transform = model.transform();
        let z = pushforward(&x, |x| transform.apply(x, Direction::Inverse))?;
        println!("r = 1, c = {c}: λ = {:.6}, mean z = {:.4}", ground.lambda, z.mean());
    }

    let model = DiffusionModel::logistic_feller(1.0, 1.0)?;
    let trunc = model.truncate(0.001)?;
    let bins = BinSpec::for_truncation(&trunc, 50)?;
    let mut cfg = FvConfig::new(200, 1e-3, 3)?;
    cfg.workers = 1;
    let report = run_ergodic(&trunc, &cfg, &ErgodicConfig::new(300, bins.clone()))?;
    let spectral = solve_ground_state(&trunc, 10_000)?.histogram(&bins)?;
    println!(
        "Fleming–Viot, N = 200, 300 epochs: TV to spectral = {:.4}, jump rate {:.3} (≈ Nλ)",
        distance_tv(&report.histogram, &spectral)?,
        report.jump_rate
    );
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
