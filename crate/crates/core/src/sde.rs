//! Time-stepping kernels.
//!
//! * [`killed_step`]: Euler–Maruyama for `dX = dB - q(X) dt` with absorbing
//!   endpoints and a Brownian-bridge exit test.
//! * [`reflected_step`]: the dominating process `dY = dW - Q̄ dt` reflected
//!   into `[0, 1/3]` by folding; the coupled step reflects at 0 through the
//!   bridge extremum of `X` instead.
//! * [`coupled_step`]: one step of the pair `(X, Y)` driven by a single
//!   Brownian increment with the sign rule that keeps `Y ≤ X ≤ 1 - Y`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TruncatedDomain;
use crate::rng::{CounterRng, Purpose};

/// Fixed per-run stepping parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub bridge_correction: bool,
}

impl StepConfig {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be a positive real, got {dt}")));
        }
        Ok(StepConfig {
            dt,
            bridge_correction: true,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KillOutcome {
    Alive(f64),
    Killed(Boundary),
}

/// A drift on an open interval whose endpoints are absorbing.
pub trait KillingInterval: Sync {
    fn lower(&self) -> f64;
    fn upper(&self) -> f64;
    /// `q(x)` for `x` inside the interval; not checked.
    fn drift(&self, x: f64) -> f64;
}

impl KillingInterval for TruncatedDomain {
    fn lower(&self) -> f64 {
        TruncatedDomain::lower(self)
    }

    fn upper(&self) -> f64 {
        TruncatedDomain::upper(self)
    }

    #[inline]
    fn drift(&self, x: f64) -> f64 {
        self.model().q(x)
    }
}

/// A truncation mapped affinely onto `(0, 1)`.
///
/// With `X = a + L·U` and time measured in units of `L²`, `U` is again a
/// unit diffusion, with drift `q̃(u) = L·q(a + L·u)`.
#[derive(Clone, Debug)]
pub struct UnitRescaled<'a> {
    inner: &'a TruncatedDomain,
    offset: f64,
    scale: f64,
}

impl<'a> UnitRescaled<'a> {
    pub fn new(inner: &'a TruncatedDomain) -> Self {
        UnitRescaled {
            inner,
            offset: inner.lower(),
            scale: inner.width(),
        }
    }

    pub fn to_original(&self, u: f64) -> f64 {
        self.offset + self.scale * u
    }

    /// `Q̄ = sup |q̃|` over `(0, 1)`, estimated on 10001 points including
    /// both endpoints, where `q` is finite on every truncation.
    pub fn sup_abs_drift(&self) -> f64 {
        const POINTS: u32 = 10_000;
        (0..=POINTS)
            .map(|k| self.drift(f64::from(k) / f64::from(POINTS)).abs())
            .fold(0.0, f64::max)
    }
}

impl KillingInterval for UnitRescaled<'_> {
    fn lower(&self) -> f64 {
        0.0
    }

    fn upper(&self) -> f64 {
        1.0
    }

    #[inline]
    fn drift(&self, u: f64) -> f64 {
        self.scale * self.inner.model().q(self.to_original(u))
    }
}

/// Probability that a Brownian bridge from `x` to `x_new` over time `dt`
/// touches the endpoint `e`. Both points must lie on the same side of `e`.
#[inline]
pub fn bridge_kill_probability(x: f64, x_new: f64, e: f64, dt: f64) -> f64 {
    (-2.0 * (x - e) * (x_new - e) / dt).exp()
}

/// Bridge exponents above this give kill probabilities below `4e-18`,
/// under the resolution of the uniforms, and are treated as zero.
const BRIDGE_CUTOFF: f64 = 40.0;

/// The deterministic part of [`killed_step`]: `xi` is the standard normal
/// increment and `u` the uniform used by the bridge test.
#[inline]
pub fn killed_step_with<K: KillingInterval + ?Sized>(x: f64, field: &K, cfg: &StepConfig, xi: f64, u: f64) -> KillOutcome {
    killed_step_scaled(x, field, cfg, cfg.dt.sqrt(), xi, u)
}

/// [`killed_step_with`] with `sqrt_dt = √dt` supplied by the caller.
#[inline(always)]
pub(crate) fn killed_step_scaled<K: KillingInterval + ?Sized>(
    x: f64,
    field: &K,
    cfg: &StepConfig,
    sqrt_dt: f64,
    xi: f64,
    u: f64,
) -> KillOutcome {
    killed_step_from(x, field.drift(x), field.lower(), field.upper(), cfg, sqrt_dt, xi, u)
}

/// One killed step from `x` on `(lo, hi)` given the drift `q(x)`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
pub(crate) fn killed_step_from(
    x: f64,
    qx: f64,
    lo: f64,
    hi: f64,
    cfg: &StepConfig,
    sqrt_dt: f64,
    xi: f64,
    u: f64,
) -> KillOutcome {
    let x_new = x + sqrt_dt * xi - qx * cfg.dt;
    if x_new <= lo {
        return KillOutcome::Killed(Boundary::Lower);
    }
    if x_new >= hi {
        return KillOutcome::Killed(Boundary::Upper);
    }
    if cfg.bridge_correction {
        let mid = 0.5 * (x + x_new);
        let (e, side) = if mid - lo <= hi - mid {
            (lo, Boundary::Lower)
        } else {
            (hi, Boundary::Upper)
        };
        let gap = (x - e) * (x_new - e);
        if gap < 0.5 * BRIDGE_CUTOFF * cfg.dt && u < (-2.0 * gap / cfg.dt).exp() {
            return KillOutcome::Killed(side);
        }
    }
    KillOutcome::Alive(x_new)
}

fn check_inside<K: KillingInterval + ?Sized>(x: f64, field: &K) -> Result<()> {
    if x > field.lower() && x < field.upper() {
        Ok(())
    } else {
        Err(Error::OutsideDomain {
            x,
            lower: field.lower(),
            upper: field.upper(),
        })
    }
}

/// One killed Euler–Maruyama step from `x`.
pub fn killed_step<K, R>(x: f64, field: &K, cfg: &StepConfig, rng: &mut R) -> Result<KillOutcome>
where
    K: KillingInterval + ?Sized,
    R: Rng + ?Sized,
{
    check_inside(x, field)?;
    if !field.drift(x).is_finite() {
        return Err(Error::NonFinite { what: "drift", x });
    }
    let xi: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    Ok(killed_step_with(x, field, cfg, xi, u))
}

/// Folds a real into `[0, 1/3]` by repeated reflection at both ends.
#[inline]
pub fn fold_third(v: f64) -> f64 {
    const THIRD: f64 = 1.0 / 3.0;
    let r = v.rem_euclid(2.0 * THIRD);
    if r > THIRD {
        2.0 * THIRD - r
    } else {
        r
    }
}

/// `y + dW - Q̄ dt` folded into `[0, 1/3]`, with `dW = √dt·ζ`.
#[inline]
pub fn reflected_step_with(y: f64, qbar: f64, dt: f64, dw: f64) -> f64 {
    fold_third(y + dw - qbar * dt)
}

pub fn reflected_step<R: Rng + ?Sized>(y: f64, qbar: f64, cfg: &StepConfig, rng: &mut R) -> Result<f64> {
    if !(y.is_finite() && qbar.is_finite()) {
        return Err(Error::NonFinite {
            what: "reflected state",
            x: y,
        });
    }
    let zeta: f64 = rng.sample(StandardNormal);
    Ok(reflected_step_with(y, qbar, cfg.dt, cfg.dt.sqrt() * zeta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `X` has not yet visited an outer third: `dW = -dB`.
    Initial,
    /// Last outer third visited was `(0, 1/3]`: `dW = dB`.
    LowerThird,
    /// Last outer third visited was `[2/3, 1)`: `dW = -dB`.
    UpperThird,
}

impl Regime {
    fn after(self, x: f64) -> Regime {
        if x <= 1.0 / 3.0 {
            Regime::LowerThird
        } else if x >= 2.0 / 3.0 {
            Regime::UpperThird
        } else {
            self
        }
    }

    fn sign(self) -> f64 {
        match self {
            Regime::LowerThird => 1.0,
            Regime::Initial | Regime::UpperThird => -1.0,
        }
    }
}

/// A particle of the unit-interval system with its dominating process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub x: f64,
    pub y: f64,
    pub regime: Regime,
    pub qbar: f64,
}

impl CoupledState {
    /// Starts `Y` at `min(x, 1 - x, 1/3)`, the largest value the coupling
    /// inequality allows.
    pub fn new(x: f64, qbar: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::OutsideDomain { x, lower: 0.0, upper: 1.0 });
        }
        Ok(CoupledState {
            x,
            y: x.min(1.0 - x).min(1.0 / 3.0),
            regime: Regime::Initial.after(x),
            qbar,
        })
    }

    /// `X` jumps to `target` after a kill; `Y` keeps its value.
    pub fn jump_to(&mut self, target: f64) {
        self.x = target;
        self.regime = self.regime.after(target);
    }

    /// Amount by which `y ≤ x ≤ 1 - y` fails, or 0.
    pub fn violation(&self) -> f64 {
        (self.y - self.x).max(self.x - (1.0 - self.y)).max(0.0)
    }
}

/// Extremum of the Brownian bridge from `x` to `x_new` over `dt` on the side
/// of the endpoint `e`, drawn by inversion from `u` and clamped at `e`.
/// Uses the law `P(min < m) = exp(-2(x - m)(x_new - m)/dt)` and its mirror
/// image, so `u` reproduces the kill decision of [`killed_step_from`].
#[inline]
fn bridge_extremum(x: f64, x_new: f64, e: f64, side: Boundary, dt: f64, u: f64) -> f64 {
    let (d0, d1) = match side {
        Boundary::Lower => (x - e, x_new - e),
        Boundary::Upper => (e - x, e - x_new),
    };
    let log_u = u.max(f64::MIN_POSITIVE).ln();
    let depth = (0.5 * (d0 + d1 - ((d0 - d1).powi(2) - 2.0 * dt * log_u).sqrt())).max(0.0);
    match side {
        Boundary::Lower => e + depth,
        Boundary::Upper => e - depth,
    }
}

/// One coupled step with a given Brownian increment `db` and bridge uniform
/// `u`. The sign of `dW` follows the regime of the proposed position.
///
/// `Y` is folded at `1/3`. At `0` it is pushed up by the local time of its
/// free path, bounded through the bridge extremum of `X` that `u` already
/// fixed; folding there instead lets `Y` pass a surviving `X`.
///
/// Returns the kill boundary, if any; the caller then supplies the jump.
pub fn coupled_step_with<K: KillingInterval + ?Sized>(
    state: &mut CoupledState,
    field: &K,
    cfg: &StepConfig,
    db: f64,
    u: f64,
) -> Option<Boundary> {
    let xi = db / cfg.dt.sqrt();
    let qx = field.drift(state.x);
    let (lo, hi) = (field.lower(), field.upper());
    let outcome = killed_step_from(state.x, qx, lo, hi, cfg, cfg.dt.sqrt(), xi, u);
    let proposal = state.x + db - qx * cfg.dt;
    let regime = state.regime.after(proposal);
    let sign = regime.sign();
    state.regime = regime;
    let x_new = match outcome {
        KillOutcome::Alive(x_new) => x_new,
        KillOutcome::Killed(b) => {
            // y ≤ x = 0 or 1 - y ≥ x = 1 at the kill time forces Y to 0 in
            // continuous time; the discrete Y only overshoots.
            state.y = 0.0;
            return Some(b);
        }
    };
    let mid = 0.5 * (state.x + x_new);
    let tested = if mid - lo <= hi - mid { Boundary::Lower } else { Boundary::Upper };
    let y_free = state.y + sign * db - state.qbar * cfg.dt;
    // Lower bound on the free path `y + sign·(X_t - x) - (Q̄ - sign·q) t`.
    let floor = if sign > 0.0 {
        let m = if cfg.bridge_correction && tested == Boundary::Lower {
            bridge_extremum(state.x, x_new, lo, Boundary::Lower, cfg.dt, u)
        } else {
            state.x.min(x_new)
        };
        state.y + (m - state.x) - (state.qbar - qx).max(0.0) * cfg.dt
    } else {
        let m = if cfg.bridge_correction && tested == Boundary::Upper {
            bridge_extremum(state.x, x_new, hi, Boundary::Upper, cfg.dt, u)
        } else {
            state.x.max(x_new)
        };
        state.y - (m - state.x) - (state.qbar + qx).max(0.0) * cfg.dt
    };
    state.y = fold_third(y_free + (-floor).max(-y_free).max(0.0));
    state.x = x_new;
    None
}

pub fn coupled_step<K, R>(state: &mut CoupledState, field: &K, cfg: &StepConfig, rng: &mut R) -> Result<Option<Boundary>>
where
    K: KillingInterval + ?Sized,
    R: Rng + ?Sized,
{
    check_inside(state.x, field)?;
    let db = cfg.dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let u: f64 = rng.random();
    Ok(coupled_step_with(state, field, cfg, db, u))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub particles: usize,
    pub steps: u64,
    pub seeds: u64,
    pub first_seed: u64,
    /// `None` picks `min(1e-4, (0.1/Q̄)²)` so the drift moves `Y` by at
    /// most a tenth of the noise scale per step.
    pub dt: Option<f64>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            particles: 10,
            steps: 1000,
            seeds: 100,
            first_seed: 1,
            dt: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingReport {
    pub model: String,
    pub qbar: f64,
    pub dt: f64,
    pub slack: f64,
    pub coupled_steps: u64,
    pub kills: u64,
    /// Violations no larger than `slack`.
    pub within_slack: u64,
    /// Violations larger than `slack`.
    pub violations: u64,
    pub max_violation: f64,
}

/// Runs the coupled unit-rescaled particle system for every seed and counts
/// failures of `y ≤ x ≤ 1 - y` after each step and each jump.
pub fn coupling_diagnostic(trunc: &TruncatedDomain, cfg: &CouplingConfig) -> Result<CouplingReport> {
    if cfg.particles < 2 {
        return Err(Error::invalid("particles", "N must be ≥ 2"));
    }
    let field = UnitRescaled::new(trunc);
    let qbar = field.sup_abs_drift();
    let dt = cfg.dt.unwrap_or_else(|| 1e-4f64.min((0.1 / qbar).powi(2)));
    let step_cfg = StepConfig::new(dt)?;
    let slack = 2.0 * dt.sqrt();
    let mut report = CouplingReport {
        model: trunc.model().id().to_string(),
        qbar,
        dt,
        slack,
        coupled_steps: 0,
        kills: 0,
        within_slack: 0,
        violations: 0,
        max_violation: 0.0,
    };
    let record = |v: f64, report: &mut CouplingReport| {
        if v > 0.0 {
            report.max_violation = report.max_violation.max(v);
            if v > slack {
                report.violations += 1;
            } else {
                report.within_slack += 1;
            }
        }
    };
    for seed in cfg.first_seed..cfg.first_seed + cfg.seeds {
        let mut states: Vec<CoupledState> = (0..cfg.particles)
            .map(|i| {
                let u = CounterRng::new(seed, Purpose::Initial, i as u32, 0).uniform();
                CoupledState::new(u.clamp(1e-9, 1.0 - 1e-9), qbar)
            })
            .collect::<Result<_>>()?;
        let mut killed = vec![false; cfg.particles];
        for step in 0..cfg.steps {
            for (i, s) in states.iter_mut().enumerate() {
                let mut rng = CounterRng::new(seed, Purpose::Coupling, i as u32, step);
                killed[i] = coupled_step(s, &field, &step_cfg, &mut rng)?.is_some();
            }
            report.coupled_steps += cfg.particles as u64;
            if killed.iter().all(|&k| k) {
                return Err(Error::SimultaneousExtinction {
                    n: cfg.particles,
                    time: (step + 1) as f64 * dt,
                });
            }
            let mut res = CounterRng::new(seed, Purpose::Resolution, 0, step);
            for i in 0..cfg.particles {
                if !killed[i] {
                    continue;
                }
                let target = loop {
                    let j = res.random_range(0..cfg.particles);
                    if j != i && !killed[j] {
                        break j;
                    }
                };
                let x = states[target].x;
                states[i].jump_to(x);
                killed[i] = false;
                report.kills += 1;
                record(states[i].violation(), &mut report);
            }
            for s in &states {
                record(s.violation(), &mut report);
            }
        }
    }
    Ok(report)
}
