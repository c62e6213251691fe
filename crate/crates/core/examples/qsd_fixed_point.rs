//! Started from its QSD, a killed diffusion conditioned on survival keeps
//! that law, and survives to time T with probability e^{-λT}.

use qsd::fv::InitialCondition;
use qsd::measure::{distance_tv, BinSpec};
use qsd::model::DiffusionModel;
use qsd::oracle::{conditioned_law_mc, solve_ground_state, McConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trunc = DiffusionModel::constant_drift(1.0).truncate(0.0)?;
    let ground = solve_ground_state(&trunc, 10_000)?;
    let bins = BinSpec::for_truncation(&trunc, 50)?;
    let start = ground.histogram(&bins)?;
    let init = InitialCondition::Density(ground.density()?);
    for horizon in [0.1, 0.25] {
        let law = conditioned_law_mc(&trunc, &init, &McConfig::new(50_000, horizon, 1e-4, 21)?, &bins)?;
        println!(
            "T = {horizon}: survival {:.4} ± {:.4}, e^(-λT) = {:.4}, TV to start = {:.4}",
            law.survival,
            law.survival_std_error(),
            (-ground.lambda * horizon).exp(),
            distance_tv(&law.histogram, &start)?
        );
    }
    Ok(())
}
