//! Trajectory-law check of a model's unit-diffusion drift.
//!
//! The original SDE `dZ = σ(Z) dB + b(Z) dt` is stepped by Euler–Maruyama
//! in `z`, with a bridge exit test that freezes `σ` at the step's start.
//! The unit diffusion is stepped by [`killed_step_with`] in `x`. Both start
//! from matched points `z₀ = T⁻¹(x₀)`, use the same normal increments and
//! are killed on the same interval. The survivors' laws at the horizon,
//! compared in `x`-coordinates, agree only if `q` is the Itô transform of
//! `(σ, b)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DiffusionModel, Direction, OriginalSde};
use crate::error::{Error, Result};
use crate::measure::{distance_tv, histogram_of_samples, BinSpec};
use crate::rng::{CounterRng, Purpose};
use crate::sde::{killed_step_with, KillOutcome, StepConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformCheckConfig {
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub dt: f64,
    /// `None` uses the model's default truncation.
    pub epsilon: Option<f64>,
    pub bins: usize,
}

impl Default for TransformCheckConfig {
    fn default() -> Self {
        TransformCheckConfig {
            horizon: 0.5,
            paths: 100_000,
            seed: 1,
            dt: 1e-4,
            epsilon: None,
            bins: 50,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformCheck {
    pub model: String,
    pub epsilon: f64,
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub bins: usize,
    pub survivors_x: usize,
    pub survivors_z: usize,
    pub tv: f64,
}

impl OriginalSde {
    /// `(σ(z), b(z))` for the unit-coordinate drift `q` of `model`.
    fn coefficients(&self, model: &DiffusionModel, z: f64) -> (f64, f64) {
        match *self {
            OriginalSde::Unit => (1.0, -model.q(z)),
            OriginalSde::LogisticFeller { r, c } => (z.sqrt(), r * z - c * z * z),
            OriginalSde::WrightFisher => ((z * (1.0 - z)).sqrt(), -z),
        }
    }
}

/// Bridge test with the diffusion coefficient frozen at the step's start.
fn bridge_hit(z: f64, zn: f64, sigma: f64, lo: f64, hi: f64, dt: f64, u: f64) -> bool {
    let mid = 0.5 * (z + zn);
    let e = if mid - lo <= hi - mid { lo } else { hi };
    u < (-2.0 * (z - e) * (zn - e) / (sigma * sigma * dt)).exp()
}

pub fn check_transform(model: &DiffusionModel, cfg: &TransformCheckConfig) -> Result<TransformCheck> {
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be a positive real, got {}", cfg.horizon)));
    }
    if cfg.paths == 0 {
        return Err(Error::invalid("paths", "need at least one path"));
    }
    let epsilon = cfg.epsilon.unwrap_or_else(|| model.default_epsilon());
    let trunc = model.truncate(epsilon)?;
    let step = StepConfig::new(cfg.dt)?;
    let sde = model.original_sde();
    let tr = model.transform();
    let (z_lo, z_hi) = (
        tr.apply(trunc.lower(), Direction::Inverse),
        tr.apply(trunc.upper(), Direction::Inverse),
    );
    let spec = BinSpec::for_truncation(&trunc, cfg.bins)?;
    let start_lo = trunc.lower() + 0.25 * (spec.upper - trunc.lower());
    let start_w = 0.5 * (spec.upper - trunc.lower());
    let steps = (cfg.horizon / cfg.dt).round().max(1.0) as u64;
    let sqrt_dt = cfg.dt.sqrt();

    let ends: Vec<(Option<f64>, Option<f64>)> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| {
            let lane = p as u32;
            let x0 = start_lo + start_w * CounterRng::new(cfg.seed, Purpose::Initial, lane, 0).uniform();
            let mut x = Some(x0);
            let mut z = Some(tr.apply(x0, Direction::Inverse));
            for k in 0..steps {
                if x.is_none() && z.is_none() {
                    break;
                }
                let mut rng = CounterRng::new(cfg.seed, Purpose::Transform, lane, k);
                let xi: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
                let u = rng.uniform();
                if let Some(xv) = x {
                    x = match killed_step_with(xv, &trunc, &step, xi, u) {
                        KillOutcome::Alive(v) => Some(v),
                        KillOutcome::Killed(_) => None,
                    };
                }
                if let Some(zv) = z {
                    let (sigma, b) = sde.coefficients(model, zv);
                    let zn = zv + sigma * sqrt_dt * xi + b * cfg.dt;
                    let inside = zn > z_lo && zn < z_hi;
                    z = (inside && !bridge_hit(zv, zn, sigma, z_lo, z_hi, cfg.dt, u)).then_some(zn);
                }
            }
            (x, z.map(|v| tr.apply(v, Direction::Forward).clamp(trunc.lower(), trunc.upper())))
        })
        .collect();

    let xs: Vec<f64> = ends.iter().filter_map(|e| e.0).collect();
    let zs: Vec<f64> = ends.iter().filter_map(|e| e.1).collect();
    let hx = histogram_of_samples(&xs, &spec)?;
    let hz = histogram_of_samples(&zs, &spec)?;
    Ok(TransformCheck {
        model: model.id().to_string(),
        epsilon,
        horizon: cfg.horizon,
        dt: cfg.dt,
        paths: cfg.paths,
        seed: cfg.seed,
        bins: cfg.bins,
        survivors_x: xs.len(),
        survivors_z: zs.len(),
        tv: distance_tv(&hx, &hz)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(paths: usize, dt: f64) -> TransformCheckConfig {
        TransformCheckConfig {
            paths,
            dt,
            ..TransformCheckConfig::default()
        }
    }

    #[test]
    fn identity_transform_agrees() {
        let r = check_transform(&DiffusionModel::brownian(), &cfg(20_000, 1e-4)).unwrap();
        assert!(r.tv < 0.01, "{r:?}");
    }

    #[test]
    fn catalog_drifts_match_their_original_sdes() {
        for m in [DiffusionModel::logistic_feller(1.0, 1.0).unwrap(), DiffusionModel::wright_fisher()] {
            let r = check_transform(&m, &cfg(20_000, 1e-4)).unwrap();
            assert!(r.tv < 0.03, "{r:?}");
        }
    }

    #[test]
    fn wrong_drift_is_detected() {
        // The misprinted logistic drift 1/(2x) - rx/2 + cx³/4.
        let wrong = DiffusionModel::custom(
            "misprinted-logistic",
            crate::model::Domain::half_line(),
            |x| 0.5 / x - 0.5 * x + 0.25 * x * x * x,
            |x| -0.5 / (x * x) - 0.5 + 0.75 * x * x,
        );
        let right = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        // Same unit-coordinate process, but driven against the true original SDE.
        let mut probe = right.clone();
        probe.drift = wrong.drift.clone();
        let r = check_transform(&probe, &cfg(20_000, 1e-4)).unwrap();
        assert!(r.tv > 0.05, "{r:?}");
    }

    #[test]
    fn error_shrinks_with_step_size() {
        let m = DiffusionModel::wright_fisher();
        let tvs: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&dt| check_transform(&m, &cfg(20_000, dt)).unwrap().tv)
            .collect();
        assert!(tvs[2] < tvs[0], "{tvs:?}");
    }
}
