//! The Fleming–Viot particle system.
//!
//! `N` particles follow the killed dynamics independently. When a particle
//! is killed it jumps onto the position of another particle chosen
//! uniformly. Within a step, kills are resolved in ascending particle
//! index, and the candidates are the other particles that are alive at
//! that moment (including ones already resurrected this step).
//!
//! Particle `i` at step `k` draws its noise from the stream
//! `(seed, Motion, i, k)`, and the resolution phase of step `k` from
//! `(seed, Resolution, 0, k)`. Results are therefore identical for any
//! number of worker threads.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{BinSpec, Histogram};
use crate::model::TruncatedDomain;
use crate::oracle::GridDensity;
use crate::rng::{CounterRng, Purpose};
use crate::sde::{killed_step_from, Boundary, KillOutcome, StepConfig};

/// Particles per parallel work item.
const CHUNK: usize = 512;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FvConfig {
    pub n_particles: usize,
    pub step: StepConfig,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    /// Below this many particles the motion phase runs on the calling
    /// thread. Results do not depend on it.
    pub parallel_min_particles: usize,
    pub keep_jump_log: bool,
}

impl FvConfig {
    pub fn new(n_particles: usize, dt: f64, seed: u64) -> Result<Self> {
        if n_particles < 2 {
            return Err(Error::invalid("n_particles", "N must be ≥ 2"));
        }
        Ok(FvConfig {
            n_particles,
            step: StepConfig::new(dt)?,
            seed,
            workers: 0,
            parallel_min_particles: 2048,
            keep_jump_log: false,
        })
    }

    /// Runs `f` on a pool with the configured number of workers.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))?;
        Ok(pool.install(f))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub killed: usize,
    pub boundary: Boundary,
    pub target: usize,
}

/// How the `N` starting positions are drawn.
#[derive(Clone, Debug)]
pub enum InitialCondition {
    /// Independent uniform draws on the killing interval.
    Uniform,
    PointMass(f64),
    /// Particle `i` starts at `samples[i % len]`.
    Samples(Vec<f64>),
    /// Independent draws from a grid density.
    Density(GridDensity),
}

impl InitialCondition {
    /// Draws `n` points strictly inside the killing interval from the
    /// stream `(seed, Initial, i, counter)`.
    pub fn draw(&self, trunc: &TruncatedDomain, n: usize, seed: u64, counter: u64) -> Result<Vec<f64>> {
        let (lo, hi) = (trunc.lower(), trunc.upper());
        let open_uniform = |i: usize| {
            let mut rng = CounterRng::new(seed, Purpose::Initial, i as u32, counter);
            loop {
                let u = rng.uniform();
                if u > 0.0 {
                    return u;
                }
            }
        };
        let inside = |x: f64| {
            if trunc.contains(x) {
                Ok(x)
            } else {
                Err(Error::OutsideDomain { x, lower: lo, upper: hi })
            }
        };
        match self {
            InitialCondition::Uniform => (0..n)
                .map(|i| {
                    let x = lo + (hi - lo) * open_uniform(i);
                    Ok(if x < hi { x } else { 0.5 * (lo + hi) })
                })
                .collect(),
            InitialCondition::PointMass(x) => {
                inside(*x)?;
                Ok(vec![*x; n])
            }
            InitialCondition::Samples(s) => {
                if s.is_empty() {
                    return Err(Error::EmptySample);
                }
                (0..n).map(|i| inside(s[i % s.len()])).collect()
            }
            InitialCondition::Density(d) => (0..n).map(|i| inside(d.sample(open_uniform(i)))).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParticleSystem {
    positions: Vec<f64>,
    step: u64,
    clock: f64,
    jump_count: u64,
    jump_log: Option<Vec<JumpRecord>>,
    /// Killed particles of the current step, in ascending index.
    #[serde(skip)]
    kills: Vec<(usize, Boundary)>,
}

impl ParticleSystem {
    pub fn new(positions: Vec<f64>, trunc: &TruncatedDomain, keep_jump_log: bool) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::invalid("n_particles", "N must be ≥ 2"));
        }
        if let Some(&x) = positions.iter().find(|&&x| !trunc.contains(x)) {
            return Err(Error::OutsideDomain {
                x,
                lower: trunc.lower(),
                upper: trunc.upper(),
            });
        }
        Ok(ParticleSystem {
            positions,
            step: 0,
            clock: 0.0,
            jump_count: 0,
            jump_log: keep_jump_log.then(Vec::new),
            kills: Vec::new(),
        })
    }

    pub fn initialize(init: &InitialCondition, trunc: &TruncatedDomain, cfg: &FvConfig) -> Result<Self> {
        let x = init.draw(trunc, cfg.n_particles, cfg.seed, 0)?;
        Self::new(x, trunc, cfg.keep_jump_log)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn jump_count(&self) -> u64 {
        self.jump_count
    }

    pub fn jump_log(&self) -> Option<&[JumpRecord]> {
        self.jump_log.as_deref()
    }
}

/// Particle positions with a total mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub samples: Vec<f64>,
    pub total_mass: f64,
}

impl EmpiricalMeasure {
    /// Atoms of weight `total_mass / N` binned on `spec`.
    pub fn histogram(&self, spec: &BinSpec) -> Result<Histogram> {
        Ok(crate::measure::histogram_of_samples(&self.samples, spec)?.scaled(self.total_mass))
    }
}

/// `μᴺ`: uniform atoms on the current positions.
pub fn empirical_measure(system: &ParticleSystem) -> EmpiricalMeasure {
    EmpiricalMeasure {
        samples: system.positions.clone(),
        total_mass: 1.0,
    }
}

/// `νᴺ = ((N-1)/N)^{A_t} μᴺ`.
pub fn mass_loss_measure(system: &ParticleSystem) -> EmpiricalMeasure {
    let n = system.len() as f64;
    EmpiricalMeasure {
        samples: system.positions.clone(),
        total_mass: ((n - 1.0) / n).powf(system.jump_count as f64),
    }
}

/// Moves the particles of one chunk in place. A killed particle's slot is
/// set to NaN and its index recorded.
#[inline]
fn move_chunk(
    positions: &mut [f64],
    first: usize,
    step: u64,
    trunc: &TruncatedDomain,
    cfg: &FvConfig,
    kills: &mut Vec<(usize, Boundary)>,
) -> Result<()> {
    let sqrt_dt = cfg.step.dt.sqrt();
    let (lo, hi) = (trunc.lower(), trunc.upper());
    let model = trunc.model();
    // Separate passes over a chunk keep the Philox rounds and the drift in
    // tight loops that vectorize or pipeline across particles.
    let mut blocks = [[0u32; 4]; CHUNK];
    let mut drifts = [0.0f64; CHUNK];
    let mut normals = [0.0f64; CHUNK];
    let mut uniforms = [0.0f64; CHUNK];
    for (g, group) in positions.chunks_mut(CHUNK).enumerate() {
        let base = first + g * CHUNK;
        let len = group.len();
        CounterRng::first_blocks(cfg.seed, Purpose::Motion, base as u32, step, &mut blocks[..len]);
        for (k, &block) in blocks[..len].iter().enumerate() {
            let mut rng = CounterRng::resume(cfg.seed, Purpose::Motion, (base + k) as u32, step, block);
            normals[k] = rng.sample(StandardNormal);
            uniforms[k] = rng.uniform();
        }
        model.q_many(group, &mut drifts);
        for (k, x) in group.iter_mut().enumerate() {
            match killed_step_from(*x, drifts[k], lo, hi, &cfg.step, sqrt_dt, normals[k], uniforms[k]) {
                KillOutcome::Alive(v) if v.is_finite() => *x = v,
                KillOutcome::Alive(_) => return Err(Error::NonFinite { what: "particle position", x: *x }),
                KillOutcome::Killed(b) => {
                    *x = f64::NAN;
                    kills.push((base + k, b));
                }
            }
        }
    }
    Ok(())
}

/// Advances every particle by one step and resolves the kills. Returns the
/// number of kills. Runs on the current rayon pool.
pub fn fv_step(system: &mut ParticleSystem, trunc: &TruncatedDomain, cfg: &FvConfig) -> Result<usize> {
    let n = system.len();
    let step = system.step;
    system.kills.clear();
    if n >= cfg.parallel_min_particles {
        let per_chunk: Vec<Result<Vec<(usize, Boundary)>>> = system
            .positions
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(c, pos)| {
                let mut kills = Vec::new();
                move_chunk(pos, c * CHUNK, step, trunc, cfg, &mut kills)?;
                Ok(kills)
            })
            .collect();
        for k in per_chunk {
            system.kills.extend(k?);
        }
    } else {
        move_chunk(&mut system.positions, 0, step, trunc, cfg, &mut system.kills)?;
    }
    system.step += 1;
    system.clock = system.step as f64 * cfg.step.dt;
    let kills = system.kills.len();
    if kills == 0 {
        return Ok(0);
    }
    if kills == n {
        return Err(Error::SimultaneousExtinction { n, time: system.clock });
    }

    let mut rng = CounterRng::new(cfg.seed, Purpose::Resolution, 0, step);
    let mut eligible: Vec<usize> = Vec::new();
    let positions = &mut system.positions;
    for &(i, boundary) in &system.kills {
        // Pending kills hold NaN; resurrected ones already hold a position.
        let is_alive = |j: usize, positions: &[f64]| j != i && !positions[j].is_nan();
        // Rejection sampling is uniform on the eligible set; the explicit
        // list takes over when most particles are dead.
        let mut target = None;
        for _ in 0..64 {
            let j = rng.random_range(0..n);
            if is_alive(j, positions) {
                target = Some(j);
                break;
            }
        }
        let target = match target {
            Some(j) => j,
            None => {
                eligible.clear();
                eligible.extend((0..n).filter(|&j| is_alive(j, positions)));
                eligible[rng.random_range(0..eligible.len())]
            }
        };
        positions[i] = positions[target];
        system.jump_count += 1;
        if let Some(log) = system.jump_log.as_mut() {
            log.push(JumpRecord {
                time: system.clock,
                killed: i,
                boundary,
                target,
            });
        }
    }
    Ok(kills)
}

/// Steps from `init` until time `horizon` and returns the system.
pub fn run_finite_time(
    init: &InitialCondition,
    horizon: f64,
    trunc: &TruncatedDomain,
    cfg: &FvConfig,
) -> Result<ParticleSystem> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("horizon", format!("must be a nonnegative real, got {horizon}")));
    }
    let mut system = ParticleSystem::initialize(init, trunc, cfg)?;
    let steps = (horizon / cfg.step.dt).round() as u64;
    cfg.install(|| {
        for _ in 0..steps {
            fv_step(&mut system, trunc, cfg)?;
        }
        Ok::<_, Error>(())
    })??;
    Ok(system)
}

#[derive(Clone, Debug)]
pub struct ErgodicConfig {
    /// Number of sampled epochs averaged into the histogram.
    pub epochs: u64,
    /// Unsampled epochs run first; `None` means 10% of `epochs`, rounded up.
    pub burn_in: Option<u64>,
    pub epoch_length: f64,
    pub bins: BinSpec,
    pub initial: InitialCondition,
    /// Radii, as fractions of the binned bulk `bins.upper - lower` (the
    /// killing interval's width unless a tail bin is used), of the
    /// boundary-mass profile.
    pub boundary_radii: Vec<f64>,
    /// Warn when the fraction within the first radius exceeds this.
    pub boundary_warn_fraction: f64,
}

impl ErgodicConfig {
    pub fn new(epochs: u64, bins: BinSpec) -> Self {
        ErgodicConfig {
            epochs,
            burn_in: None,
            epoch_length: 1.0,
            bins,
            initial: InitialCondition::Uniform,
            boundary_radii: vec![0.05, 0.02, 0.01],
            boundary_warn_fraction: 0.25,
        }
    }

    pub fn burn_in_epochs(&self) -> u64 {
        self.burn_in.unwrap_or(self.epochs.div_ceil(10))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryMass {
    pub radius: f64,
    /// Largest fraction of particles within `radius·width` of an endpoint
    /// over the sampled epochs.
    pub max_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErgodicRunReport {
    pub histogram: Histogram,
    pub epsilon: f64,
    pub n_particles: usize,
    pub dt: f64,
    pub seed: u64,
    pub burn_in: u64,
    pub epochs: u64,
    pub epoch_length: f64,
    pub jump_count: u64,
    /// Jumps per unit time over the sampled epochs.
    pub jump_rate: f64,
    pub boundary_profile: Vec<BoundaryMass>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

/// Burn-in, then the average of the binned empirical measure at the end of
/// each sampled epoch.
pub fn run_ergodic(trunc: &TruncatedDomain, cfg: &FvConfig, erg: &ErgodicConfig) -> Result<ErgodicRunReport> {
    if erg.epochs == 0 {
        return Err(Error::invalid("epochs", "need at least one sampled epoch"));
    }
    if !(erg.epoch_length > 0.0) {
        return Err(Error::invalid("epoch_length", "must be positive"));
    }
    let started = Instant::now();
    let burn_in = erg.burn_in_epochs();
    let steps_per_epoch = ((erg.epoch_length / cfg.step.dt).round() as u64).max(1);
    let mut system = ParticleSystem::initialize(&erg.initial, trunc, cfg)?;
    let n = system.len();
    let (lo, hi) = (trunc.lower(), trunc.upper());
    // The bulk excludes the half-line tail bin, whose width is ~1/ε.
    let width = erg.bins.upper - lo;
    let mut sum = Histogram::empty(&erg.bins);
    let mut profile: Vec<BoundaryMass> = erg
        .boundary_radii
        .iter()
        .map(|&radius| BoundaryMass {
            radius,
            max_fraction: 0.0,
        })
        .collect();
    let mut jumps_at_sampling_start = 0;
    let total = burn_in + erg.epochs;
    let (range_lo, range_hi) = erg.bins.range();

    cfg.install(|| {
        for epoch in 0..total {
            for _ in 0..steps_per_epoch {
                fv_step(&mut system, trunc, cfg)?;
            }
            if epoch + 1 == burn_in {
                jumps_at_sampling_start = system.jump_count;
            }
            if epoch >= burn_in {
                let w = 1.0 / n as f64;
                for &x in &system.positions {
                    let k = erg.bins.index(x).ok_or(Error::OutOfRange {
                        value: x,
                        lower: range_lo,
                        upper: range_hi,
                    })?;
                    sum.add_at(k, w);
                }
                for p in profile.iter_mut() {
                    let near = system
                        .positions
                        .iter()
                        .filter(|&&x| (x - lo).min(hi - x) < p.radius * width)
                        .count();
                    p.max_fraction = p.max_fraction.max(near as f64 / n as f64);
                }
            }
            if total >= 10 && (epoch + 1) % (total / 10) == 0 {
                log::info!(
                    "epoch {}/{} t={:.1} jumps={}",
                    epoch + 1,
                    total,
                    system.clock,
                    system.jump_count
                );
            }
        }
        Ok::<_, Error>(())
    })??;
    if burn_in == 0 {
        jumps_at_sampling_start = 0;
    }

    sum.refresh_total();
    let histogram = sum.scaled(1.0 / erg.epochs as f64);
    let mut warnings = Vec::new();
    if let Some(first) = profile.first() {
        if first.max_fraction > erg.boundary_warn_fraction {
            let msg = format!(
                "up to {:.3} of the particles sat within {} of a killing endpoint (threshold {})",
                first.max_fraction,
                first.radius * width,
                erg.boundary_warn_fraction
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let sampled_time = erg.epochs as f64 * steps_per_epoch as f64 * cfg.step.dt;
    Ok(ErgodicRunReport {
        histogram,
        epsilon: trunc.epsilon(),
        n_particles: n,
        dt: cfg.step.dt,
        seed: cfg.seed,
        burn_in,
        epochs: erg.epochs,
        epoch_length: erg.epoch_length,
        jump_count: system.jump_count,
        jump_rate: (system.jump_count - jumps_at_sampling_start) as f64 / sampled_time,
        boundary_profile: profile,
        warnings,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiffusionModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn brownian() -> TruncatedDomain {
        DiffusionModel::brownian().truncate(0.0).unwrap()
    }

    #[test]
    fn n_below_two_is_rejected() {
        let err = FvConfig::new(1, 1e-4, 0).unwrap_err();
        assert!(err.to_string().contains("N must be ≥ 2"));
    }

    #[test]
    fn quiet_step_moves_without_jumps() {
        let t = brownian();
        let cfg = FvConfig::new(4, 1e-8, 3).unwrap();
        let mut s = ParticleSystem::new(vec![0.3, 0.4, 0.5, 0.6], &t, true).unwrap();
        let before = s.positions().to_vec();
        assert_eq!(fv_step(&mut s, &t, &cfg).unwrap(), 0);
        assert_eq!(s.jump_count(), 0);
        assert!(s.positions().iter().zip(&before).all(|(a, b)| a != b && (a - b).abs() < 1e-3));
        assert_abs_diff_eq!(s.clock(), 1e-8);
    }

    #[test]
    fn forced_target_with_two_particles() {
        let t = brownian();
        let cfg = FvConfig::new(2, 1e-4, 0).unwrap();
        // Particle 0 starts right at the boundary; find a step where it dies
        // and particle 1 survives, then check it landed on particle 1.
        for seed in 0..200 {
            let cfg = FvConfig { seed, ..cfg.clone() };
            let mut s = ParticleSystem::new(vec![1e-9, 0.4], &t, true).unwrap();
            if fv_step(&mut s, &t, &cfg).unwrap() == 1 {
                assert_eq!(s.positions()[0], s.positions()[1]);
                let log = s.jump_log().unwrap();
                assert_eq!((log[0].killed, log[0].target, log[0].boundary), (0, 1, Boundary::Lower));
                return;
            }
        }
        panic!("particle at 1e-9 never killed");
    }

    #[test]
    fn all_killed_is_an_error() {
        let t = brownian();
        let cfg = FvConfig::new(2, 10.0, 0).unwrap();
        let mut s = ParticleSystem::new(vec![0.5, 0.5], &t, false).unwrap();
        let mut hit = false;
        for _ in 0..10 {
            if let Err(e) = fv_step(&mut s, &t, &cfg) {
                assert!(matches!(e, Error::SimultaneousExtinction { n: 2, .. }));
                hit = true;
                break;
            }
        }
        assert!(hit);
    }

    #[test]
    fn measures() {
        let t = brownian();
        let s = ParticleSystem::new(vec![0.2, 0.6], &t, false).unwrap();
        let m = empirical_measure(&s);
        assert_eq!((m.samples.as_slice(), m.total_mass), (&[0.2, 0.6][..], 1.0));
        assert_eq!(mass_loss_measure(&s), m);
        let mut s = ParticleSystem::new(vec![0.5; 1000], &t, false).unwrap();
        s.jump_count = 1000;
        assert_abs_diff_eq!(mass_loss_measure(&s).total_mass, 0.367_695_424_8, epsilon = 1e-9);
        let spec = BinSpec::uniform(0.0, 1.0, 100).unwrap();
        let h = mass_loss_measure(&s).histogram(&spec).unwrap();
        assert_abs_diff_eq!(h.total_mass(), 0.999f64.powi(1000), epsilon = 1e-12);
    }

    #[test]
    fn jump_log_replays_the_count_and_positions_stay_inside() {
        let t = DiffusionModel::wright_fisher().truncate(0.001).unwrap();
        let mut cfg = FvConfig::new(200, 1e-3, 9).unwrap();
        cfg.keep_jump_log = true;
        let mut s = ParticleSystem::initialize(&InitialCondition::Uniform, &t, &cfg).unwrap();
        let mut last = 0;
        for _ in 0..2000 {
            fv_step(&mut s, &t, &cfg).unwrap();
            assert!(s.positions().iter().all(|&x| t.contains(x)));
            assert!(s.jump_count() >= last);
            last = s.jump_count();
        }
        assert!(last > 0);
        assert_eq!(s.jump_log().unwrap().len() as u64, s.jump_count());
        assert!(s.jump_log().unwrap().iter().all(|r| r.killed != r.target));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let t = brownian();
        let mut a = FvConfig::new(3000, 1e-3, 5).unwrap();
        a.workers = 1;
        let b = FvConfig {
            workers: 4,
            parallel_min_particles: 1,
            ..a.clone()
        };
        let ra = run_finite_time(&InitialCondition::Uniform, 0.2, &t, &a).unwrap();
        let rb = run_finite_time(&InitialCondition::Uniform, 0.2, &t, &b).unwrap();
        assert_eq!(ra.positions(), rb.positions());
        assert_eq!(ra.jump_count(), rb.jump_count());
    }

    #[test]
    fn horizon_zero_returns_the_initial_draws() {
        let t = brownian();
        let cfg = FvConfig::new(10, 1e-3, 2).unwrap();
        let s = run_finite_time(&InitialCondition::Uniform, 0.0, &t, &cfg).unwrap();
        assert_eq!(s.positions(), InitialCondition::Uniform.draw(&t, 10, 2, 0).unwrap());
    }

    #[test]
    fn stationary_kill_rate_matches_lambda() {
        // Kills per unit time at stationarity are N·λ.
        let t = brownian();
        let mut cfg = FvConfig::new(1000, 1e-4, 21).unwrap();
        cfg.workers = 1;
        let mut erg = ErgodicConfig::new(20, BinSpec::uniform(0.0, 1.0, 100).unwrap());
        erg.epoch_length = 0.1;
        erg.burn_in = Some(5);
        let r = run_ergodic(&t, &cfg, &erg).unwrap();
        let lambda = std::f64::consts::PI.powi(2) / 2.0;
        let per_step = r.jump_rate * 1e-4;
        assert!((per_step - 1000.0 * 1e-4 * lambda).abs() < 0.05, "{per_step}");
        assert_abs_diff_eq!(r.histogram.total_mass(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn steps_keep_particles_inside(seed in 0u64..1000, n in 2usize..40) {
            let t = DiffusionModel::constant_drift(3.0).truncate(0.0).unwrap();
            let cfg = FvConfig::new(n, 5e-3, seed).unwrap();
            let mut s = ParticleSystem::initialize(&InitialCondition::Uniform, &t, &cfg).unwrap();
            for _ in 0..50 {
                match fv_step(&mut s, &t, &cfg) {
                    Ok(_) => prop_assert!(s.positions().iter().all(|&x| t.contains(x))),
                    Err(Error::SimultaneousExtinction { .. }) => break,
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
    }
}
