//! The dominating reflected process Y of the unit-rescaled particle system,
//! counting failures of Y ≤ X ≤ 1 - Y over many seeds.

use qsd::model::DiffusionModel;
use qsd::sde::{coupling_diagnostic, CouplingConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CouplingConfig::default();
    for model in [
        DiffusionModel::brownian(),
        DiffusionModel::constant_drift(1.0),
        DiffusionModel::wright_fisher(),
    ] {
        let trunc = model.truncate(model.default_epsilon())?;
        let r = coupling_diagnostic(&trunc, &cfg)?;
        println!(
            "{}: Q̄ = {:.3}, dt = {:.1e}, {} steps, {} kills, {} within 2√dt, {} beyond, max {:.2e}",
            r.model, r.qbar, r.dt, r.coupled_steps, r.kills, r.within_slack, r.violations, r.max_violation
        );
    }
    Ok(())
}
