//! Ground state of the killed generator for the catalog models.
//!
//! Brownian motion on (0, 1) has λ = π²/2 and QSD density (π/2) sin(πx);
//! the solver is compared against both.

use std::f64::consts::PI;

use qsd::measure::{distance_tv, BinSpec, Histogram};
use qsd::model::DiffusionModel;
use qsd::oracle::solve_ground_state;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trunc = DiffusionModel::brownian().truncate(0.0)?;
    let ground = solve_ground_state(&trunc, 10_000)?;
    let exact = PI * PI / 2.0;
    println!(
        "brownian: λ = {:.9} (exact {exact:.9}), residual {:.2e}, {} iterations",
        ground.lambda, ground.residual, ground.iterations
    );

    let bins = BinSpec::for_truncation(&trunc, 100)?;
    let sine = Histogram::from_cdf(bins.edges(), |x| (1.0 - (PI * x).cos()) / 2.0)?;
    println!("brownian: TV to (π/2) sin(πx) = {:.2e}", distance_tv(&ground.histogram(&bins)?, &sine)?);

    for (name, model) in [
        ("constant-drift c=1", DiffusionModel::constant_drift(1.0)),
        ("wright-fisher", DiffusionModel::wright_fisher()),
        ("logistic-feller r=1 c=1", DiffusionModel::logistic_feller(1.0, 1.0)?),
    ] {
        let trunc = model.truncate(model.default_epsilon())?;
        let ground = solve_ground_state(&trunc, 10_000)?;
        let bins = BinSpec::for_truncation(&trunc, 100)?;
        println!(
            "{name}: ε = {}, λ = {:.6}, residual {:.2e}, mean position {:.4}",
            trunc.epsilon(),
            ground.lambda,
            ground.residual,
            ground.histogram(&bins)?.mean()
        );
    }
    Ok(())
}
