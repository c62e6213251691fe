//! Ground truths independent of the particle system.
//!
//! * [`solve_ground_state`]: the smallest eigenpair of `-v'' + W v = Λ v`
//!   with `v = 0` at both killing endpoints, `Λ = 2λ`. The QSD density is
//!   `v e^{-Q}` normalized to mass 1.
//! * [`eps_sweep`]: ground states for a decreasing sequence of truncations.
//! * [`conditioned_law_mc`]: independent killed paths, conditioned on
//!   survival at a horizon.
//!
//! The eigenproblem is discretized on a grid `x₀ < … < x_{n+1}` by the
//! three-point scheme
//!
//! ```text
//! -v_{i-1}/h₋ + (1/h₋ + 1/h₊) v_i - v_{i+1}/h₊ + W_i b_i v_i = Λ b_i v_i,
//! b_i = (h₋ + h₊)/2,
//! ```
//!
//! a symmetric tridiagonal pencil that reduces to central differences on a
//! uniform grid. Bounded models use a uniform grid; half-line models a grid
//! uniform in `ln x`, since the truncation `(ε, 1/ε)` spans many decades.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv::InitialCondition;
use crate::measure::{BinSpec, Histogram};
use crate::model::{DiffusionModel, DomainKind, TruncatedDomain};
use crate::rng::{CounterRng, Purpose};
use crate::sde::{killed_step_scaled, KillOutcome, StepConfig};

/// A piecewise-linear density on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    x: Vec<f64>,
    f: Vec<f64>,
    /// Trapezoid cumulative mass at each node, ending at 1.
    cdf: Vec<f64>,
}

impl GridDensity {
    /// Normalizes `f ≥ 0` on the strictly increasing grid `x` to mass 1.
    pub fn new(x: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != f.len() {
            return Err(Error::invalid("density", format!("{} nodes for {} values", x.len(), f.len())));
        }
        if x.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::invalid("density", "grid must be strictly increasing"));
        }
        if f.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("density", "values must be finite and nonnegative"));
        }
        let mut cdf = Vec::with_capacity(x.len());
        cdf.push(0.0);
        for i in 1..x.len() {
            cdf.push(cdf[i - 1] + 0.5 * (f[i - 1] + f[i]) * (x[i] - x[i - 1]));
        }
        let total = cdf[cdf.len() - 1];
        if !(total > 0.0) {
            return Err(Error::invalid("density", "zero total mass"));
        }
        Ok(GridDensity {
            x,
            f: f.iter().map(|v| v / total).collect(),
            cdf: cdf.iter().map(|c| c / total).collect(),
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    /// Linear interpolation, 0 outside the grid.
    pub fn at(&self, t: f64) -> f64 {
        match self.cell(t) {
            Some(i) => {
                let s = (t - self.x[i]) / (self.x[i + 1] - self.x[i]);
                self.f[i] + s * (self.f[i + 1] - self.f[i])
            }
            None => 0.0,
        }
    }

    fn cell(&self, t: f64) -> Option<usize> {
        let n = self.x.len();
        if !(t >= self.x[0] && t <= self.x[n - 1]) {
            return None;
        }
        Some(self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1)
    }

    /// Exact mass of the interpolant below `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return 0.0;
        }
        if t >= self.x[n - 1] {
            return 1.0;
        }
        let i = self.cell(t).expect("inside");
        let d = t - self.x[i];
        self.cdf[i] + d * (self.f[i] + 0.5 * d * (self.f[i + 1] - self.f[i]) / (self.x[i + 1] - self.x[i]))
    }

    /// Inverse of [`Self::cdf`] at `u ∈ (0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        let n = self.x.len();
        let i = (self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1)) - 1;
        let h = self.x[i + 1] - self.x[i];
        let (f0, slope) = (self.f[i], (self.f[i + 1] - self.f[i]) / h);
        let m = u - self.cdf[i];
        // Solve f0·d + slope·d²/2 = m for d in [0, h].
        let d = if slope.abs() * m < 1e-12 * f0 * f0 {
            if f0 > 0.0 {
                m / f0
            } else {
                0.5 * h
            }
        } else {
            let disc = (f0 * f0 + 2.0 * slope * m).max(0.0);
            2.0 * m / (f0 + disc.sqrt())
        };
        self.x[i] + d.clamp(0.0, h)
    }

    /// Bin masses of the interpolant.
    pub fn histogram(&self, spec: &BinSpec) -> Result<Histogram> {
        let edges = spec.edges();
        let masses = edges.windows(2).map(|e| (self.cdf(e[1]) - self.cdf(e[0])).max(0.0)).collect();
        Histogram::new(edges, masses)
    }
}

/// Ground state of one truncation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenResult {
    pub model: String,
    pub epsilon: f64,
    /// The QSD's absorption rate; the operator eigenvalue is `2λ`.
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Ground state with zero ends, positive, `Σ v_i² b_i = 1`.
    pub v: Vec<f64>,
    /// `∝ v e^{-Q}`, trapezoid mass 1.
    pub qsd_density: Vec<f64>,
    /// `max_i |((K - 2λB) v)_i / b_i|`, i.e. `‖(-D₂ + W) v - 2λ v‖∞`.
    pub residual: f64,
    pub iterations: usize,
}

impl EigenResult {
    pub fn density(&self) -> Result<GridDensity> {
        GridDensity::new(self.grid.clone(), self.qsd_density.clone())
    }

    pub fn histogram(&self, spec: &BinSpec) -> Result<Histogram> {
        self.density()?.histogram(spec)
    }

    pub fn grid_size(&self) -> usize {
        self.grid.len()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iterations: 20_000 }
    }
}

/// Default grid of `m` nodes including both endpoints.
pub fn default_grid(trunc: &TruncatedDomain, m: usize) -> Result<Vec<f64>> {
    if m < 100 {
        return Err(Error::invalid("grid_size", format!("need M ≥ 100, got {m}")));
    }
    let (lo, hi) = (trunc.lower(), trunc.upper());
    let last = (m - 1) as f64;
    let mut g: Vec<f64> = match trunc.model().domain().kind() {
        DomainKind::Bounded => (0..m).map(|k| lo + (hi - lo) * (k as f64 / last)).collect(),
        DomainKind::HalfLine => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..m).map(|k| (a + (b - a) * (k as f64 / last)).exp()).collect()
        }
    };
    g[0] = lo;
    g[m - 1] = hi;
    Ok(g)
}

pub fn solve_ground_state(trunc: &TruncatedDomain, m: usize) -> Result<EigenResult> {
    solve_on_grid(trunc, default_grid(trunc, m)?, &SolverConfig::default())
}

/// Solves on a caller-supplied grid whose first and last nodes are the
/// killing endpoints.
pub fn solve_on_grid(trunc: &TruncatedDomain, grid: Vec<f64>, cfg: &SolverConfig) -> Result<EigenResult> {
    let n = grid.len().checked_sub(2).filter(|&n| n >= 1).ok_or_else(|| Error::invalid("grid", "need interior nodes"))?;
    if grid[0] != trunc.lower() || grid[n + 1] != trunc.upper() || grid.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::invalid("grid", "must increase strictly from the lower to the upper killing endpoint"));
    }
    let model = trunc.model();
    // Interior unknowns i = 0..n sit at grid[i + 1].
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut b = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let (xm, x, xp) = (grid[i], grid[i + 1], grid[i + 2]);
        let (hm, hp) = (x - xm, xp - x);
        b[i] = 0.5 * (hm + hp);
        w[i] = model.potential(x)?;
        diag[i] = 1.0 / hm + 1.0 / hp + w[i] * b[i];
        if i + 1 < n {
            off[i] = -1.0 / hp;
        }
    }
    let shift = w.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;

    // Thomas factorization of K - shift·B, an M-matrix.
    let mut cp = vec![0.0; n];
    let mut den = vec![0.0; n];
    for i in 0..n {
        let d = diag[i] - shift * b[i] - if i > 0 { off[i - 1] * cp[i - 1] } else { 0.0 };
        den[i] = d;
        cp[i] = if i + 1 < n { off[i] / d } else { 0.0 };
    }
    let solve = |rhs: &mut [f64]| {
        for i in 0..n {
            let prev = if i > 0 { off[i - 1] * rhs[i - 1] } else { 0.0 };
            rhs[i] = (rhs[i] - prev) / den[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= cp[i] * rhs[i + 1];
        }
    };
    let apply_k = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut s = diag[i] * v[i];
            if i > 0 {
                s += off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += off[i] * v[i + 1];
            }
            out[i] = s;
        }
    };
    let b_norm = |v: &mut [f64]| {
        let s: f64 = v.iter().zip(&b).map(|(x, bi)| x * x * bi).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= s);
    };

    let mut v = vec![1.0; n];
    b_norm(&mut v);
    let mut kv = vec![0.0; n];
    let mut big_lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut next: Vec<f64> = v.iter().zip(&b).map(|(x, bi)| x * bi).collect();
        solve(&mut next);
        b_norm(&mut next);
        apply_k(&next, &mut kv);
        let rq: f64 = next.iter().zip(&kv).map(|(x, y)| x * y).sum();
        let vmax = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        residual = (0..n).map(|i| ((kv[i] - rq * b[i] * next[i]) / b[i]).abs()).fold(0.0, f64::max) / vmax;
        let dv = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / vmax;
        let dl = (rq - big_lambda).abs();
        big_lambda = rq;
        v = next;
        if dl <= 1e-12 * rq.abs().max(1.0) && dv <= 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations, residual });
    }
    if let Some((i, &val)) = v.iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(Error::NegativeGroundState { x: grid[i + 1], value: val });
    }

    let mut full_v = Vec::with_capacity(n + 2);
    full_v.push(0.0);
    full_v.extend_from_slice(&v);
    full_v.push(0.0);
    // log density ln v - Q, exponentiated after removing its maximum.
    let mut logd = vec![f64::NEG_INFINITY; n + 2];
    for i in 0..n {
        if v[i] > 0.0 {
            logd[i + 1] = v[i].ln() - model.primitive(grid[i + 1])?;
        }
    }
    let top = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logd.iter().map(|&l| (l - top).exp()).collect();
    let density = GridDensity::new(grid.clone(), raw)?;
    Ok(EigenResult {
        model: model.id().to_string(),
        epsilon: trunc.epsilon(),
        lambda: 0.5 * big_lambda,
        grid,
        v: full_v,
        qsd_density: density.f,
        residual,
        iterations,
    })
}

/// `ln ε` lattice (half-line) or `x` lattice (bounded) shared by all
/// truncations of a sweep, so that halving `ε` adds nodes without moving
/// the existing ones.
fn sweep_grids(model: &DiffusionModel, eps: &[f64], m: usize) -> Result<Vec<Vec<f64>>> {
    let finest = model.truncate(*eps.last().expect("nonempty"))?;
    let (lo, hi) = (finest.lower(), finest.upper());
    let kind = model.domain().kind();
    let (to, from): (fn(f64) -> f64, fn(f64) -> f64) = match kind {
        DomainKind::HalfLine => (f64::ln, f64::exp),
        DomainKind::Bounded => (|x| x, |x| x),
    };
    let target = (to(hi) - to(lo)) / (m - 1) as f64;
    // Step dividing ln 2 (half-line) or every ε (bounded), anchored so that
    // each lower endpoint is a lattice node.
    let (anchor, step) = match kind {
        DomainKind::HalfLine => {
            let k = (std::f64::consts::LN_2 / target).ceil();
            (to(model.truncate(eps[0])?.lower()), std::f64::consts::LN_2 / k)
        }
        DomainKind::Bounded => {
            let e = eps[eps.len() - 1];
            if e > 0.0 {
                (model.domain().lower(), e / (e / target).ceil())
            } else {
                (model.domain().lower(), target)
            }
        }
    };
    eps.iter()
        .map(|&e| {
            let t = model.truncate(e)?;
            let (a, b) = (to(t.lower()), to(t.upper()));
            let k0 = ((a - anchor) / step).floor() as i64;
            let k1 = ((b - anchor) / step).ceil() as i64;
            let mut g = vec![t.lower()];
            for k in k0..=k1 {
                let u = anchor + k as f64 * step;
                if u > a + 1e-3 * step && u < b - 1e-3 * step {
                    g.push(from(u));
                }
            }
            g.push(t.upper());
            Ok(g)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub qsd_density: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsSweepReport {
    pub model: String,
    pub entries: Vec<SweepEntry>,
    /// `TV(ν_{ε_k}, ν_{ε_{k+1}})` on the finest grid.
    pub tv_successive: Vec<f64>,
}

/// Ground states for a strictly decreasing sequence of `ε`.
pub fn eps_sweep(model: &DiffusionModel, epsilons: &[f64], m: usize) -> Result<EpsSweepReport> {
    if epsilons.is_empty() {
        return Err(Error::invalid("epsilons", "need at least one value"));
    }
    if epsilons.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::invalid("epsilons", "must be strictly decreasing"));
    }
    if m < 100 {
        return Err(Error::invalid("grid_size", format!("need M ≥ 100, got {m}")));
    }
    let grids = sweep_grids(model, epsilons, m)?;
    let results: Vec<EigenResult> = epsilons
        .iter()
        .zip(grids)
        .map(|(&e, g)| solve_on_grid(&model.truncate(e)?, g, &SolverConfig::default()))
        .collect::<Result<_>>()?;
    let common = results.last().expect("nonempty").grid.clone();
    let on_common: Vec<Vec<f64>> = results
        .iter()
        .map(|r| {
            let d = r.density()?;
            Ok(common.iter().map(|&x| d.at(x)).collect())
        })
        .collect::<Result<_>>()?;
    let tv_successive = on_common
        .windows(2)
        .map(|p| {
            let diff: Vec<f64> = p[0].iter().zip(&p[1]).map(|(a, b)| (a - b).abs()).collect();
            0.5 * common
                .windows(2)
                .zip(diff.windows(2))
                .map(|(x, d)| 0.5 * (d[0] + d[1]) * (x[1] - x[0]))
                .sum::<f64>()
        })
        .collect();
    Ok(EpsSweepReport {
        model: model.id().to_string(),
        entries: results
            .into_iter()
            .map(|r| SweepEntry {
                epsilon: r.epsilon,
                lambda: r.lambda,
                grid: r.grid,
                qsd_density: r.qsd_density,
                residual: r.residual,
            })
            .collect(),
        tv_successive,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub horizon: f64,
    pub step: StepConfig,
    pub seed: u64,
    /// Fewer survivors than this is an error.
    pub min_survivors: usize,
}

impl McConfig {
    pub fn new(paths: usize, horizon: f64, dt: f64, seed: u64) -> Result<Self> {
        Ok(McConfig {
            paths,
            horizon,
            step: StepConfig::new(dt)?,
            seed,
            min_survivors: 100,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionedLaw {
    pub histogram: Histogram,
    pub survival: f64,
    pub survivors: usize,
    pub paths: usize,
    pub horizon: f64,
}

impl ConditionedLaw {
    /// Binomial standard error of the survival fraction.
    pub fn survival_std_error(&self) -> f64 {
        (self.survival * (1.0 - self.survival) / self.paths as f64).sqrt()
    }
}

/// Starting draws use counter `u64::MAX` of the initial stream so they
/// never coincide with a particle system run under the same seed.
const MC_INITIAL_COUNTER: u64 = u64::MAX;

/// Paths stepped together, sharing one pass of stream setup per step.
const MC_CHUNK: usize = 256;

/// Independent killed paths from `init`, conditioned on survival at the
/// horizon. Runs on the current rayon pool.
pub fn conditioned_law_mc(
    trunc: &TruncatedDomain,
    init: &InitialCondition,
    cfg: &McConfig,
    bins: &BinSpec,
) -> Result<ConditionedLaw> {
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be a positive real, got {}", cfg.horizon)));
    }
    if cfg.paths < 1000 {
        return Err(Error::invalid("paths", format!("need at least 1000 paths, got {}", cfg.paths)));
    }
    let starts = init.draw(trunc, cfg.paths, cfg.seed, MC_INITIAL_COUNTER)?;
    let steps = ((cfg.horizon / cfg.step.dt).round() as u64).max(1);
    let sqrt_dt = cfg.step.dt.sqrt();
    let ends: Vec<Option<f64>> = starts
        .par_chunks(MC_CHUNK)
        .enumerate()
        .flat_map_iter(|(c, chunk)| {
            let first = (c * MC_CHUNK) as u32;
            let mut state: Vec<Option<f64>> = chunk.iter().map(|&x| Some(x)).collect();
            let mut blocks = vec![[0u32; 4]; chunk.len()];
            for k in 0..steps {
                CounterRng::first_blocks(cfg.seed, Purpose::Oracle, first, k, &mut blocks);
                let mut alive = 0;
                for (p, (s, &block)) in state.iter_mut().zip(&blocks).enumerate() {
                    let Some(x) = *s else { continue };
                    let mut rng = CounterRng::resume(cfg.seed, Purpose::Oracle, first + p as u32, k, block);
                    let xi: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
                    *s = match killed_step_scaled(x, trunc, &cfg.step, sqrt_dt, xi, rng.uniform()) {
                        KillOutcome::Alive(v) => Some(v),
                        KillOutcome::Killed(_) => None,
                    };
                    alive += usize::from(s.is_some());
                }
                if alive == 0 {
                    break;
                }
            }
            state
        })
        .collect();
    let survivors: Vec<f64> = ends.into_iter().flatten().collect();
    if survivors.len() < cfg.min_survivors {
        return Err(Error::SurvivorStarvation {
            survivors: survivors.len(),
            paths: cfg.paths,
            horizon: cfg.horizon,
            required: cfg.min_survivors,
        });
    }
    Ok(ConditionedLaw {
        histogram: crate::measure::histogram_of_samples(&survivors, bins)?,
        survival: survivors.len() as f64 / cfg.paths as f64,
        survivors: survivors.len(),
        paths: cfg.paths,
        horizon: cfg.horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::distance_tv;
    use std::f64::consts::PI;

    fn brownian() -> TruncatedDomain {
        DiffusionModel::brownian().truncate(0.0).unwrap()
    }

    fn uniform_bins(t: &TruncatedDomain) -> BinSpec {
        BinSpec::for_truncation(t, 100).unwrap()
    }

    #[test]
    fn brownian_ground_state() {
        let r = solve_ground_state(&brownian(), 10_000).unwrap();
        assert!((r.lambda - PI * PI / 2.0).abs() < 1e-5, "{}", r.lambda);
        let exact = Histogram::from_cdf(uniform_bins(&brownian()).edges(), |x| 0.5 * (1.0 - (PI * x).cos())).unwrap();
        let tv = distance_tv(&r.histogram(&uniform_bins(&brownian())).unwrap(), &exact).unwrap();
        assert!(tv < 1e-3, "{tv}");
        assert_eq!((r.v[0], r.v[r.v.len() - 1]), (0.0, 0.0));
        assert!(r.v[1..r.v.len() - 1].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn constant_drift_ground_state() {
        let t = DiffusionModel::constant_drift(1.0).truncate(0.0).unwrap();
        let r = solve_ground_state(&t, 10_000).unwrap();
        assert!((r.lambda - (1.0 + PI * PI) / 2.0).abs() < 1e-5, "{}", r.lambda);
        // e^{-x} sin(πx) has antiderivative -e^{-x}(sin πx + π cos πx)/(1+π²).
        let f = |x: f64| -(-x).exp() * ((PI * x).sin() + PI * (PI * x).cos()) / (1.0 + PI * PI);
        let exact = Histogram::from_cdf(uniform_bins(&t).edges(), f).unwrap();
        let tv = distance_tv(&r.histogram(&uniform_bins(&t)).unwrap(), &exact).unwrap();
        assert!(tv < 1e-3, "{tv}");
    }

    #[test]
    fn residual_contract_and_normalization() {
        for t in [
            brownian(),
            DiffusionModel::constant_drift(1.0).truncate(0.0).unwrap(),
            DiffusionModel::wright_fisher().truncate(0.001).unwrap(),
            DiffusionModel::logistic_feller(1.0, 1.0).unwrap().truncate(0.001).unwrap(),
        ] {
            let r = solve_ground_state(&t, 1000).unwrap();
            assert!(r.residual <= 1e-8, "{}: {}", t.model().id(), r.residual);
            let mass: f64 = r
                .grid
                .windows(2)
                .zip(r.qsd_density.windows(2))
                .map(|(x, d)| 0.5 * (d[0] + d[1]) * (x[1] - x[0]))
                .sum();
            assert!((mass - 1.0).abs() < 1e-10);
            let l2: f64 = (1..r.v.len() - 1)
                .map(|i| r.v[i] * r.v[i] * 0.5 * (r.grid[i + 1] - r.grid[i - 1]))
                .sum();
            assert!((l2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_order_in_grid_size() {
        for t in [brownian(), DiffusionModel::constant_drift(1.0).truncate(0.0).unwrap()] {
            let l: Vec<f64> = [250, 500, 1000]
                .iter()
                .map(|&m| solve_ground_state(&t, m).unwrap().lambda)
                .collect();
            let ratio = (l[0] - l[1]) / (l[1] - l[2]);
            assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
        }
    }

    #[test]
    fn wright_fisher_density_in_z_is_two_minus_two_z() {
        let m = DiffusionModel::wright_fisher();
        let r = solve_ground_state(&m.truncate(0.001).unwrap(), 10_000).unwrap();
        let z_spec = BinSpec::uniform(0.0, 1.0, 100).unwrap();
        let x_edges: Vec<f64> = z_spec.edges().iter().map(|&z| 2.0 * z.sqrt().asin()).collect();
        let d = r.density().unwrap();
        let masses: Vec<f64> = x_edges.windows(2).map(|e| d.cdf(e[1]) - d.cdf(e[0])).collect();
        let h = Histogram::new(z_spec.edges(), masses).unwrap();
        let exact = Histogram::from_cdf(z_spec.edges(), |z| 2.0 * z - z * z).unwrap();
        let tv = distance_tv(&h, &exact).unwrap();
        assert!(tv < 1e-3, "{tv}");
    }

    #[test]
    fn grid_density_sampling_inverts_the_cdf() {
        let d = GridDensity::new(vec![0.0, 0.5, 1.0], vec![0.0, 2.0, 0.0]).unwrap();
        for &u in &[0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((d.cdf(d.sample(u)) - u).abs() < 1e-12);
        }
        assert_eq!(d.at(0.25), 1.0);
        assert_eq!(d.at(1.5), 0.0);
    }

    #[test]
    fn sweep_validation() {
        let m = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        assert!(eps_sweep(&m, &[0.004, 0.008], 1000).is_err());
        assert!(eps_sweep(&m, &[], 1000).is_err());
        let single = eps_sweep(&m, &[0.01], 1000).unwrap();
        assert!(single.tv_successive.is_empty());
        assert_eq!(single.entries.len(), 1);
    }

    #[test]
    fn sweep_grids_are_nested() {
        let m = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        let g = sweep_grids(&m, &[0.016, 0.008, 0.004], 2000).unwrap();
        let fine = &g[2];
        for x in &g[0][..g[0].len() - 1] {
            assert!(fine.iter().any(|y| (x - y).abs() <= 1e-12 * x), "{x}");
        }
    }

    #[test]
    fn mc_survival_from_qsd_is_exponential() {
        let t = brownian();
        let eig = solve_ground_state(&t, 2000).unwrap();
        let init = InitialCondition::Density(eig.density().unwrap());
        let mut logs = Vec::new();
        let ts = [0.25, 0.5, 1.0];
        for &horizon in &ts {
            let cfg = McConfig::new(200_000, horizon, 1e-3, 4).unwrap();
            let r = conditioned_law_mc(&t, &init, &cfg, &uniform_bins(&t)).unwrap();
            logs.push(r.survival.ln());
        }
        let mt = ts.iter().sum::<f64>() / 3.0;
        let ml = logs.iter().sum::<f64>() / 3.0;
        let slope = ts.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum::<f64>()
            / ts.iter().map(|t| (t - mt).powi(2)).sum::<f64>();
        assert!((slope + eig.lambda).abs() < 0.05 * eig.lambda, "{slope} vs {}", eig.lambda);
    }

    #[test]
    fn starvation_is_reported() {
        let t = brownian();
        let cfg = McConfig::new(1000, 3.0, 1e-2, 1).unwrap();
        let err = conditioned_law_mc(&t, &InitialCondition::Uniform, &cfg, &uniform_bins(&t)).unwrap_err();
        assert!(matches!(err, Error::SurvivorStarvation { .. }));
    }

    /// Without the bridge test the scheme overestimates survival by
    /// O(√dt); the error must shrink as dt does.
    #[test]
    fn plain_euler_survival_converges() {
        let t = brownian();
        let eig = solve_ground_state(&t, 2000).unwrap();
        let init = InitialCondition::Density(eig.density().unwrap());
        let exact = (-eig.lambda * 0.5).exp();
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&dt| {
                let mut cfg = McConfig::new(100_000, 0.5, dt, 8).unwrap();
                cfg.step.bridge_correction = false;
                let r = conditioned_law_mc(&t, &init, &cfg, &uniform_bins(&t)).unwrap();
                (r.survival - exact).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
