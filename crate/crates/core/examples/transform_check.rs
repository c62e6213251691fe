//! Simulates a model in its original coordinates and in unit-diffusion
//! coordinates and compares the two survivor laws in the original frame.

use qsd::model::{check_transform, DiffusionModel, TransformCheckConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = TransformCheckConfig {
        paths: 20_000,
        dt: 1e-3,
        ..TransformCheckConfig::default()
    };
    for model in [DiffusionModel::wright_fisher(), DiffusionModel::logistic_feller(1.0, 1.0)?] {
        let r = check_transform(&model, &cfg)?;
        println!(
            "{}: T = {}, survivors {} (original) / {} (unit), TV = {:.4}",
            r.model, r.horizon, r.survivors_z, r.survivors_x, r.tv
        );
    }
    Ok(())
}
