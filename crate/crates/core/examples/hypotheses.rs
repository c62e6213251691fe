//! Numerical checks of the existence hypotheses for each catalog model.
//! Verdicts come with the witness values that decided them.

use qsd::model::{check_hypotheses, DiffusionModel, HypothesisTolerances};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tol = HypothesisTolerances::default();
    for model in [
        DiffusionModel::logistic_feller(1.0, 1.0)?,
        DiffusionModel::wright_fisher(),
        DiffusionModel::brownian(),
    ] {
        let report = check_hypotheses(&model, &tol);
        println!("{}", report.model);
        for e in &report.entries {
            println!("  {:<4} {:?}  {:?}", e.hypothesis, e.verdict, e.witness_values);
        }
    }
    Ok(())
}
