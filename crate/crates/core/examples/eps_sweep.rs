//! Ground states of the logistic Feller model for shrinking truncations.
//! λ_ε decreases toward the untruncated rate and successive densities
//! approach each other.

use qsd::model::DiffusionModel;
use qsd::oracle::eps_sweep;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = DiffusionModel::logistic_feller(1.0, 1.0)?;
    let report = eps_sweep(&model, &[0.016, 0.008, 0.004, 0.002, 0.001], 10_000)?;
    for (k, e) in report.entries.iter().enumerate() {
        let tv = report.tv_successive.get(k).map_or(String::from("-"), |t| format!("{t:.3e}"));
        println!(
            "ε = {:<6} λ = {:.8}  residual {:.1e}  TV to next {tv}",
            e.epsilon, e.lambda, e.residual
        );
    }
    Ok(())
}
