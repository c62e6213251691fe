//! Finite-time Fleming–Viot against independent killed paths.
//!
//! The empirical measure estimates the conditioned law at time T and the
//! mass-loss measure ((N-1)/N)^{jumps} μᴺ estimates the survival probability.

use qsd::fv::{empirical_measure, mass_loss_measure, run_finite_time, FvConfig, InitialCondition};
use qsd::measure::{distance_tv, BinSpec};
use qsd::model::DiffusionModel;
use qsd::oracle::{conditioned_law_mc, McConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trunc = DiffusionModel::brownian().truncate(0.0)?;
    let bins = BinSpec::for_truncation(&trunc, 25)?;
    let horizon = 0.5;
    let dt = 1e-3;

    let mut cfg = FvConfig::new(5000, dt, 11)?;
    cfg.workers = 1;
    let system = run_finite_time(&InitialCondition::Uniform, horizon, &trunc, &cfg)?;
    let mu = empirical_measure(&system).histogram(&bins)?;
    let nu = mass_loss_measure(&system);

    let mc = conditioned_law_mc(&trunc, &InitialCondition::Uniform, &McConfig::new(100_000, horizon, dt, 12)?, &bins)?;
    println!("{} jumps up to T = {horizon}", system.jump_count());
    println!(
        "survival: mass-loss {:.4}, Monte Carlo {:.4} ± {:.4}",
        nu.total_mass,
        mc.survival,
        mc.survival_std_error()
    );
    println!("TV(μᴺ(T), conditioned law) = {:.4}", distance_tv(&mu, &mc.histogram)?);
    Ok(())
}
