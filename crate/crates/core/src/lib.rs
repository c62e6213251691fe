//! Quasi-stationary distributions of one-dimensional killed diffusions.
//!
//! A model `dX = dB - q(X) dt` on an interval is truncated to a killing
//! interval, and its quasi-stationary distribution is estimated three ways:
//!
//! * [`fv`]: the Fleming–Viot particle system, where a killed particle
//!   jumps onto a uniformly chosen survivor, averaged over time;
//! * [`oracle::solve_ground_state`]: the ground state of `-v'' + W v = 2λ v`
//!   with Dirichlet ends, giving the density `∝ v e^{-Q}`;
//! * [`oracle::conditioned_law_mc`]: independent killed paths conditioned on
//!   survival.
//!
//! All randomness comes from counter-based streams ([`rng`]), so results
//! depend only on the seed and configuration, never on thread scheduling.

pub mod cli;
pub mod config;
pub mod error;
pub mod fv;
pub mod measure;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod sde;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use measure::{BinSpec, Histogram};
pub use model::{DiffusionModel, Domain, DomainKind, TruncatedDomain};
