//! Diffusion models `dX = dB - q(X) dt` on an interval, their derived
//! quantities, coordinate transforms and the model catalog.
//!
//! For a drift `q` the crate works with
//!
//! * `Q(x) = ∫_{x₀}^x q(y) dy`, with `x₀ = 1` on the half-line and the
//!   midpoint on a bounded interval,
//! * the natural measure `μ(dx) = exp(-2Q(x)) dx`,
//! * `W(x) = q(x)² - q'(x)`, the potential of the Schrödinger form of the
//!   generator.
//!
//! The catalog models are given in unit-diffusion coordinates. Their drifts
//! follow from Itô's formula applied to the original population SDEs:
//!
//! | id | original SDE | transform | q(x) |
//! |----|--------------|-----------|------|
//! | `logistic-feller` | `dZ = √Z dB + (rZ - cZ²) dt` | `x = 2√z` | `1/(2x) - rx/2 + cx³/8` |
//! | `wright-fisher` | `dZ = √(Z(1-Z)) dB - Z dt` | `x = arccos(1-2z)` | `(2 - cos x)/(2 sin x)` |

mod hypotheses;
mod transform_check;

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

pub use hypotheses::{check_hypotheses, HypothesisEntry, HypothesisReport, HypothesisTolerances, Verdict};
pub use transform_check::{check_transform, TransformCheck, TransformCheckConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    HalfLine,
    Bounded,
}

/// The open state space of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: f64,
    upper: f64,
    kind: DomainKind,
}

impl Domain {
    /// `(0, +∞)`.
    pub fn half_line() -> Self {
        Domain {
            lower: 0.0,
            upper: f64::INFINITY,
            kind: DomainKind::HalfLine,
        }
    }

    pub fn bounded(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::invalid(
                "domain",
                format!("need finite lower < upper, got ({lower}, {upper})"),
            ));
        }
        Ok(Domain {
            lower,
            upper,
            kind: DomainKind::Bounded,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    /// Base point of `Q`.
    pub fn base_point(&self) -> f64 {
        match self.kind {
            DomainKind::HalfLine => 1.0,
            DomainKind::Bounded => 0.5 * (self.lower + self.upper),
        }
    }

    fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                x,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }
}

/// Change of coordinates from the original process `Z` to the unit-diffusion
/// coordinate `X`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    /// `x = 2√z` on `z > 0`.
    TwoSqrt,
    /// `x = arccos(1 - 2z)` on `0 < z < 1`.
    Arccos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Original coordinate `z` to unit-diffusion coordinate `x`.
    Forward,
    /// `x` back to `z`.
    Inverse,
}

impl Transform {
    pub fn is_identity(&self) -> bool {
        matches!(self, Transform::Identity)
    }

    /// Domain of the original coordinate.
    pub fn original_domain(&self, model_domain: &Domain) -> Domain {
        match self {
            Transform::Identity => *model_domain,
            Transform::TwoSqrt => Domain::half_line(),
            Transform::Arccos => Domain {
                lower: 0.0,
                upper: 1.0,
                kind: DomainKind::Bounded,
            },
        }
    }

    /// Unchecked map; both directions are strictly increasing.
    #[inline]
    pub fn apply(&self, v: f64, direction: Direction) -> f64 {
        match (self, direction) {
            (Transform::Identity, _) => v,
            (Transform::TwoSqrt, Direction::Forward) => 2.0 * v.sqrt(),
            (Transform::TwoSqrt, Direction::Inverse) => 0.25 * v * v,
            // arccos(1 - 2z) = 2 asin(√z) and (1 - cos x)/2 = sin²(x/2), in
            // the forms that keep full relative precision near 0.
            (Transform::Arccos, Direction::Forward) => 2.0 * v.sqrt().asin(),
            (Transform::Arccos, Direction::Inverse) => {
                let s = (0.5 * v).sin();
                s * s
            }
        }
    }
}

/// Coefficients `dZ = σ(Z) dB + b(Z) dt` of the process before the
/// unit-diffusion transform.
#[derive(Clone, Copy, Debug)]
pub enum OriginalSde {
    /// Already in unit-diffusion form: `σ = 1`, `b = -q`.
    Unit,
    LogisticFeller { r: f64, c: f64 },
    WrightFisher,
}

/// A user-supplied drift. `Q` is computed by adaptive quadrature from a
/// lazily built table of anchor values.
pub struct CustomDrift {
    q: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    dq: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    anchors: OnceLock<Vec<(f64, f64)>>,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDrift").finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
enum Drift {
    Zero,
    Constant { c: f64 },
    LogisticFeller { r: f64, c: f64 },
    WrightFisher,
    Custom(Arc<CustomDrift>),
}

/// A killed diffusion `dX = dB - q(X) dt` on an open interval.
#[derive(Clone, Debug)]
pub struct DiffusionModel {
    id: String,
    domain: Domain,
    drift: Drift,
    transform: Transform,
    params: BTreeMap<String, f64>,
}

const QUAD_TOL: f64 = 1e-12;

impl DiffusionModel {
    pub const CATALOG: [&'static str; 4] = ["brownian", "constant-drift", "logistic-feller", "wright-fisher"];

    /// Standard Brownian motion on `(0, 1)`.
    pub fn brownian() -> Self {
        Self::brownian_on(0.0, 1.0).expect("valid interval")
    }

    pub fn brownian_on(a: f64, b: f64) -> Result<Self> {
        Ok(DiffusionModel {
            id: "brownian".into(),
            domain: Domain::bounded(a, b)?,
            drift: Drift::Zero,
            transform: Transform::Identity,
            params: BTreeMap::from([("a".into(), a), ("b".into(), b)]),
        })
    }

    /// Constant drift `q ≡ c` on `(0, 1)`.
    pub fn constant_drift(c: f64) -> Self {
        Self::constant_drift_on(c, 0.0, 1.0).expect("valid interval")
    }

    pub fn constant_drift_on(c: f64, a: f64, b: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::invalid("c", "drift value must be finite"));
        }
        Ok(DiffusionModel {
            id: "constant-drift".into(),
            domain: Domain::bounded(a, b)?,
            drift: Drift::Constant { c },
            transform: Transform::Identity,
            params: BTreeMap::from([("a".into(), a), ("b".into(), b), ("c".into(), c)]),
        })
    }

    /// The logistic Feller diffusion `dZ = √Z dB + (rZ - cZ²) dt` seen
    /// through `x = 2√z`.
    pub fn logistic_feller(r: f64, c: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid("r", format!("must be a positive real, got {r}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("c", format!("must be a positive real, got {c}")));
        }
        Ok(DiffusionModel {
            id: "logistic-feller".into(),
            domain: Domain::half_line(),
            drift: Drift::LogisticFeller { r, c },
            transform: Transform::TwoSqrt,
            params: BTreeMap::from([("c".into(), c), ("r".into(), r)]),
        })
    }

    /// The Wright–Fisher diffusion `dZ = √(Z(1-Z)) dB - Z dt` seen through
    /// `x = arccos(1 - 2z)`, on `(0, π)`.
    pub fn wright_fisher() -> Self {
        DiffusionModel {
            id: "wright-fisher".into(),
            domain: Domain::bounded(0.0, PI).expect("valid interval"),
            drift: Drift::WrightFisher,
            transform: Transform::Arccos,
            params: BTreeMap::new(),
        }
    }

    /// A model with a user-supplied drift `q` and its derivative `dq`.
    pub fn custom<F, G>(name: &str, domain: Domain, q: F, dq: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        DiffusionModel {
            id: name.into(),
            domain,
            drift: Drift::Custom(Arc::new(CustomDrift {
                q: Box::new(q),
                dq: Box::new(dq),
                anchors: OnceLock::new(),
            })),
            transform: Transform::Identity,
            params: BTreeMap::new(),
        }
    }

    /// Builds a catalog model from its identifier and a parameter map.
    ///
    /// Recognized parameters: `a`, `b` (brownian, constant-drift), `c`
    /// (constant-drift drift value, logistic-feller competition), `r`
    /// (logistic-feller growth). Unlisted parameters are rejected.
    pub fn from_catalog(id: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match id {
            "brownian" => &["a", "b"],
            "constant-drift" => &["a", "b", "c"],
            "logistic-feller" => &["r", "c"],
            "wright-fisher" => &[],
            _ => {
                return Err(Error::UnknownModel {
                    id: id.into(),
                    catalog: Self::CATALOG.join(", "),
                })
            }
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::invalid(
                "params",
                format!("`{bad}` is not a parameter of {id} (expected one of: {})", allowed.join(", ")),
            ));
        }
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        match id {
            "brownian" => Self::brownian_on(get("a", 0.0), get("b", 1.0)),
            "constant-drift" => Self::constant_drift_on(get("c", 1.0), get("a", 0.0), get("b", 1.0)),
            "logistic-feller" => Self::logistic_feller(get("r", 1.0), get("c", 1.0)),
            _ => Ok(Self::wright_fisher()),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn base_point(&self) -> f64 {
        self.domain.base_point()
    }

    /// Truncation used when none is given: 0 for the bounded models with
    /// bounded drift, 0.001 otherwise.
    pub fn default_epsilon(&self) -> f64 {
        match self.drift {
            Drift::Zero | Drift::Constant { .. } => 0.0,
            _ => 0.001,
        }
    }

    pub fn original_sde(&self) -> OriginalSde {
        match self.drift {
            Drift::LogisticFeller { r, c } => OriginalSde::LogisticFeller { r, c },
            Drift::WrightFisher => OriginalSde::WrightFisher,
            _ => OriginalSde::Unit,
        }
    }

    /// `q(x)` without the domain check; used by the stepping kernels.
    #[inline]
    pub(crate) fn q(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Constant { c } => *c,
            Drift::LogisticFeller { r, c } => 0.5 / x - 0.5 * r * x + 0.125 * c * x * x * x,
            Drift::WrightFisher => wright_fisher::q(x),
            Drift::Custom(d) => (d.q)(x),
        }
    }

    /// [`Self::q`] at every point of `x`, written to `out`. Bitwise equal
    /// to the pointwise values; the catalog drifts run as one tight loop.
    pub(crate) fn q_many(&self, x: &[f64], out: &mut [f64]) {
        let out = &mut out[..x.len()];
        match &self.drift {
            Drift::Zero => out.fill(0.0),
            Drift::Constant { c } => out.fill(*c),
            Drift::LogisticFeller { r, c } => {
                for (o, &x) in out.iter_mut().zip(x) {
                    *o = 0.5 / x - 0.5 * r * x + 0.125 * c * x * x * x;
                }
            }
            Drift::WrightFisher => {
                const LANES: usize = 8;
                let mut xs = x.chunks_exact(LANES);
                let mut os = out.chunks_exact_mut(LANES);
                for (x, o) in (&mut xs).zip(&mut os) {
                    wright_fisher::q_lanes::<LANES>(x.try_into().unwrap(), o.try_into().unwrap());
                }
                for (o, &x) in os.into_remainder().iter_mut().zip(xs.remainder()) {
                    *o = wright_fisher::q(x);
                }
            }
            _ => {
                for (o, &x) in out.iter_mut().zip(x) {
                    *o = self.q(x);
                }
            }
        }
    }

    fn dq(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Zero | Drift::Constant { .. } => 0.0,
            Drift::LogisticFeller { r, c } => -0.5 / (x * x) - 0.5 * r + 0.375 * c * x * x,
            Drift::WrightFisher => {
                let (s, co) = x.sin_cos();
                (1.0 - 2.0 * co) / (2.0 * s * s)
            }
            Drift::Custom(d) => (d.dq)(x),
        }
    }

    fn finite(what: &'static str, x: f64, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what, x })
        }
    }

    /// `q(x)`.
    pub fn drift(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        Self::finite("drift", x, self.q(x))
    }

    /// `q'(x)`.
    pub fn drift_derivative(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        Self::finite("drift derivative", x, self.dq(x))
    }

    /// `Q(x) = ∫_{x₀}^x q`.
    pub fn primitive(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        let x0 = self.base_point();
        let v = match &self.drift {
            Drift::Zero => 0.0,
            Drift::Constant { c } => c * (x - x0),
            Drift::LogisticFeller { r, c } => {
                let at = |x: f64| 0.5 * x.ln() - 0.25 * r * x * x + c * x.powi(4) / 32.0;
                at(x) - at(x0)
            }
            Drift::WrightFisher => {
                if x == FRAC_PI_2 {
                    0.0
                } else {
                    0.5 * (0.5 * x).sin().ln() - 1.5 * (0.5 * x).cos().ln() - 0.5 * LN_2
                }
            }
            Drift::Custom(d) => return self.custom_primitive(d, x),
        };
        Self::finite("primitive Q", x, v)
    }

    /// `W(x) = q(x)² - q'(x)`.
    pub fn potential(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        Self::finite("potential W", x, self.w(x))
    }

    #[inline]
    pub(crate) fn w(&self, x: f64) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Constant { c } => c * c,
            Drift::WrightFisher => {
                let s = x.sin();
                0.75 / (s * s) - 0.25
            }
            _ => {
                let q = self.q(x);
                q * q - self.dq(x)
            }
        }
    }

    /// Applies the coordinate transform in the given direction, checking
    /// that the input lies in the corresponding open domain.
    pub fn transform_point(&self, v: f64, direction: Direction) -> Result<f64> {
        match direction {
            Direction::Forward => self.transform.original_domain(&self.domain).check(v)?,
            Direction::Inverse => self.domain.check(v)?,
        }
        Ok(self.transform.apply(v, direction))
    }

    /// The truncated process killed at `ε, 1/ε` (half-line) or `a+ε, b-ε`
    /// (bounded). `ε = 0` is accepted on bounded domains and kills at the
    /// domain endpoints.
    pub fn truncate(&self, epsilon: f64) -> Result<TruncatedDomain> {
        TruncatedDomain::new(self.clone(), epsilon)
    }

    fn custom_primitive(&self, d: &CustomDrift, x: f64) -> Result<f64> {
        let anchors = d.anchors.get_or_init(|| self.build_anchors(d));
        // anchors are sorted; take the nearest one at or below x (or the first).
        let idx = match anchors.binary_search_by(|a| a.0.total_cmp(&x)) {
            Ok(i) => return Self::finite("primitive Q", x, anchors[i].1),
            Err(0) => 0,
            Err(i) if i == anchors.len() => i - 1,
            Err(i) => {
                if x - anchors[i - 1].0 <= anchors[i].0 - x {
                    i - 1
                } else {
                    i
                }
            }
        };
        let (xa, qa) = anchors[idx];
        if !qa.is_finite() {
            return Err(Error::Quadrature {
                from: self.base_point(),
                to: xa,
                reason: "anchor value of Q is not finite".into(),
            });
        }
        let tail = quad::integrate(|y| (d.q)(y), xa, x, QUAD_TOL, QUAD_TOL)?;
        Self::finite("primitive Q", x, qa + tail)
    }

    fn build_anchors(&self, d: &CustomDrift) -> Vec<(f64, f64)> {
        let x0 = self.base_point();
        let points: Vec<f64> = match self.domain.kind {
            DomainKind::HalfLine => (-40..=40).map(|k| x0 * 2f64.powi(k)).collect(),
            DomainKind::Bounded => {
                let (a, b) = (self.domain.lower, self.domain.upper);
                (1..64).map(|k| a + (b - a) * f64::from(k) / 64.0).collect()
            }
        };
        let base = points
            .iter()
            .position(|&p| p == x0)
            .expect("base point is an anchor");
        let mut values = vec![0.0; points.len()];
        for i in base + 1..points.len() {
            let step = quad::integrate(|y| (d.q)(y), points[i - 1], points[i], QUAD_TOL, QUAD_TOL);
            values[i] = step.map_or(f64::NAN, |s| values[i - 1] + s);
        }
        for i in (0..base).rev() {
            let step = quad::integrate(|y| (d.q)(y), points[i + 1], points[i], QUAD_TOL, QUAD_TOL);
            values[i] = step.map_or(f64::NAN, |s| values[i + 1] + s);
        }
        points.into_iter().zip(values).collect()
    }
}

/// A model restricted to its killing interval.
#[derive(Clone, Debug)]
pub struct TruncatedDomain {
    model: DiffusionModel,
    epsilon: f64,
    lower: f64,
    upper: f64,
}

impl TruncatedDomain {
    pub fn new(model: DiffusionModel, epsilon: f64) -> Result<Self> {
        let d = *model.domain();
        let (lower, upper) = match d.kind {
            DomainKind::HalfLine => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(Error::invalid(
                        "epsilon",
                        format!("half-line models need 0 < epsilon < 1, got {epsilon}"),
                    ));
                }
                (epsilon, 1.0 / epsilon)
            }
            DomainKind::Bounded => {
                let half = 0.5 * (d.upper - d.lower);
                if !(epsilon >= 0.0 && epsilon < half) {
                    return Err(Error::invalid(
                        "epsilon",
                        format!("bounded models need 0 <= epsilon < {half}, got {epsilon}"),
                    ));
                }
                (d.lower + epsilon, d.upper - epsilon)
            }
        };
        Ok(TruncatedDomain {
            model,
            epsilon,
            lower,
            upper,
        })
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    /// Upper end of the region that carries essentially all mass.
    ///
    /// Bounded truncations return the killing endpoint. On the half-line
    /// the natural measure decays like `exp(-2Q)`, so the scan stops at the
    /// first point beyond the base point with `2Q ≥ 40`, or at `1/ε`.
    pub fn mass_upper(&self) -> f64 {
        if self.model.domain().kind() == DomainKind::Bounded {
            return self.upper;
        }
        let mut x = self.model.base_point().max(self.lower);
        while x < self.upper {
            match self.model.primitive(x) {
                Ok(q) if 2.0 * q >= 40.0 => return x,
                Ok(_) => {}
                Err(_) => return self.upper,
            }
            x *= 1.02;
        }
        self.upper
    }
}

/// `q(x) = (2 - cos x)/(2 sin x)` on `(0, π)` as its two poles plus a
/// Chebyshev series for the remainder. The remainder is analytic on
/// `[0, π]` and 24 terms reach `1e-18`; one division and no libm call per
/// point.
mod wright_fisher {
    use std::f64::consts::PI;

    const TERMS: usize = 24;

    /// Chebyshev coefficients in `u = 2x/π - 1` of
    /// `q(x) - 1/(2x) - 3/(2(π - x))`, computed to 50 digits.
    const COEFFICIENTS: [f64; TERMS] = [
        -0.2950402803857308,
        0.15642237782414697,
        -0.02251269381147028,
        0.0026603771231652547,
        -0.0007337638309047873,
        7.01278973318083e-05,
        -2.2457050562207723e-05,
        2.0001936430793177e-06,
        -6.706570739801853e-07,
        5.829157845960295e-08,
        -1.9845026998430592e-08,
        1.7102181500397408e-09,
        -5.852590365007972e-10,
        5.028699854970004e-11,
        -1.723954842904083e-11,
        1.4797344444378372e-12,
        -5.075993179444677e-13,
        4.355346273757739e-14,
        -1.4943500428323554e-14,
        1.2820346746603557e-15,
        -4.399075594527505e-16,
        3.77389701536125e-17,
        -1.2949791833340809e-17,
        1.110925366042702e-18,
    ];

    #[inline(always)]
    fn poles(x: f64) -> f64 {
        // 1/(2x) + 3/(2(π - x))
        (PI + 2.0 * x) / (2.0 * x * (PI - x))
    }

    pub(super) fn q(x: f64) -> f64 {
        let mut out = [0.0];
        q_lanes(&[x], &mut out);
        out[0]
    }

    /// Clenshaw summation on `u = 2x/π - 1`, lane by lane so that it
    /// vectorizes; each lane's arithmetic is that of [`q`].
    #[inline(always)]
    pub(super) fn q_lanes<const L: usize>(x: &[f64; L], out: &mut [f64; L]) {
        let u = x.map(|x| x * (2.0 / PI) - 1.0);
        let (mut b1, mut b2) = ([0.0; L], [0.0; L]);
        for &ck in COEFFICIENTS[1..].iter().rev() {
            for l in 0..L {
                let b0 = ck + 2.0 * u[l] * b1[l] - b2[l];
                b2[l] = b1[l];
                b1[l] = b0;
            }
        }
        for l in 0..L {
            out[l] = COEFFICIENTS[0] + u[l] * b1[l] - b2[l] + poles(x[l]);
        }
    }

    #[cfg(test)]
    mod tests {
        use super::*;

        /// The closed form, measured from the nearer endpoint.
        fn direct(x: f64) -> f64 {
            if x <= 0.5 * PI {
                (2.0 - x.cos()) / (2.0 * x.sin())
            } else {
                let y = PI - x;
                (2.0 + y.cos()) / (2.0 * y.sin())
            }
        }

        #[test]
        fn series_matches_the_closed_form() {
            let mut worst: f64 = 0.0;
            for k in 1..200_000 {
                let x = PI * k as f64 / 200_000.0;
                worst = worst.max(((q(x) - direct(x)) / direct(x)).abs());
            }
            assert!(worst < 1e-14, "{worst:e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn catalog() -> Vec<DiffusionModel> {
        vec![
            DiffusionModel::brownian(),
            DiffusionModel::constant_drift(1.0),
            DiffusionModel::logistic_feller(1.0, 1.0).unwrap(),
            DiffusionModel::wright_fisher(),
        ]
    }

    fn interior_grid(m: &DiffusionModel) -> Vec<f64> {
        let (lo, hi) = match m.domain().kind() {
            DomainKind::HalfLine => (0.05, 6.0),
            DomainKind::Bounded => {
                let w = m.domain().upper() - m.domain().lower();
                (m.domain().lower() + 0.02 * w, m.domain().upper() - 0.02 * w)
            }
        };
        (0..=40).map(|k| lo + (hi - lo) * f64::from(k) / 40.0).collect()
    }

    #[test]
    fn drift_slices_equal_pointwise_drifts() {
        for model in [
            DiffusionModel::brownian(),
            DiffusionModel::constant_drift(-0.5),
            DiffusionModel::logistic_feller(1.0, 2.0).unwrap(),
            DiffusionModel::wright_fisher(),
        ] {
            let t = model.truncate(0.01).unwrap();
            for n in [0, 1, 7, 8, 9, 37] {
                let x: Vec<f64> = (0..n).map(|k| t.lower() + (k as f64 + 0.5) / n as f64 * t.width().min(50.0)).collect();
                let mut out = vec![f64::NAN; n];
                model.q_many(&x, &mut out);
                for (o, &x) in out.iter().zip(&x) {
                    assert_eq!(o.to_bits(), model.q(x).to_bits(), "{} at {x}", model.id());
                }
            }
        }
    }

    #[test]
    fn drift_examples() {
        assert_eq!(DiffusionModel::brownian().drift(0.3).unwrap(), 0.0);
        let lf = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(lf.drift(2.0).unwrap(), 0.25, epsilon = 1e-15);
        let wf = DiffusionModel::wright_fisher();
        assert_abs_diff_eq!(wf.drift(FRAC_PI_2).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn drift_outside_domain_is_an_error() {
        let b = DiffusionModel::brownian();
        assert!(matches!(b.drift(0.0), Err(Error::OutsideDomain { .. })));
        assert!(matches!(b.drift(1.2), Err(Error::OutsideDomain { .. })));
        let lf = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        assert!(lf.drift(-1.0).is_err());
        assert!(DiffusionModel::wright_fisher().potential(PI).is_err());
    }

    #[test]
    fn primitive_examples() {
        assert_eq!(DiffusionModel::brownian().primitive(0.8).unwrap(), 0.0);
        for m in catalog() {
            assert_abs_diff_eq!(m.primitive(m.base_point()).unwrap(), 0.0, epsilon = 1e-15);
        }
        let cd = DiffusionModel::constant_drift(1.0);
        assert_abs_diff_eq!(cd.primitive(1.0 - 1e-12).unwrap(), 0.5, epsilon = 1e-11);
        assert_abs_diff_eq!(cd.primitive(0.9).unwrap(), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn potential_examples() {
        assert_eq!(DiffusionModel::brownian().potential(0.5).unwrap(), 0.0);
        assert_eq!(DiffusionModel::constant_drift(1.0).potential(0.7).unwrap(), 1.0);
        assert_abs_diff_eq!(
            DiffusionModel::wright_fisher().potential(FRAC_PI_2).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn closed_form_potential_matches_finite_difference_derivative() {
        let wf = DiffusionModel::wright_fisher();
        let h = 1e-5;
        for x in interior_grid(&wf) {
            let q = wf.drift(x).unwrap();
            let dq_fd = (wf.drift(x + h).unwrap() - wf.drift(x - h).unwrap()) / (2.0 * h);
            let w_fd = q * q - dq_fd;
            let w = wf.potential(x).unwrap();
            assert!((w - w_fd).abs() < 1e-5 * w.abs().max(1.0), "x={x}: {w} vs {w_fd}");
        }
    }

    #[test]
    fn drift_derivative_matches_finite_difference() {
        for m in catalog() {
            for x in interior_grid(&m) {
                let h = 1e-5;
                let fd = (m.drift(x + h).unwrap() - m.drift(x - h).unwrap()) / (2.0 * h);
                let dq = m.drift_derivative(x).unwrap();
                assert!((fd - dq).abs() < 1e-5 * dq.abs().max(1.0), "{} x={x}", m.id());
            }
        }
    }

    #[test]
    fn primitive_differentiates_back_to_drift_at_second_order() {
        for m in catalog() {
            for x in interior_grid(&m) {
                let err = |h: f64| {
                    let fd = (m.primitive(x + h).unwrap() - m.primitive(x - h).unwrap()) / (2.0 * h);
                    (fd - m.drift(x).unwrap()).abs()
                };
                let (e3, e4) = (err(1e-3), err(1e-4));
                let scale = m.drift(x).unwrap().abs().max(1.0);
                assert!(e3 < 1e-4 * scale * 50.0, "{} x={x}: e3={e3}", m.id());
                // O(h²): a tenfold smaller step cuts the error ~100x, until rounding.
                assert!(e4 < e3 / 50.0 || e4 < 1e-9 * scale, "{} x={x}: {e3} -> {e4}", m.id());
            }
        }
    }

    #[test]
    fn custom_primitive_uses_quadrature() {
        let m = DiffusionModel::custom("cubic", Domain::half_line(), |x| x * x - 1.0 / x, |x| 2.0 * x + 1.0 / (x * x));
        for &x in &[0.01f64, 0.3, 1.0, 2.5, 40.0] {
            let exact = (x * x * x - 1.0) / 3.0 - x.ln();
            let got = m.primitive(x).unwrap();
            assert!((got - exact).abs() < 1e-9 * exact.abs().max(1.0), "x={x}: {got} vs {exact}");
        }
        let b = DiffusionModel::custom("tilt", Domain::bounded(-1.0, 3.0).unwrap(), |x| 2.0 * x, |_| 2.0);
        assert_abs_diff_eq!(b.primitive(2.0).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_examples() {
        let lf = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(lf.transform_point(0.25, Direction::Forward).unwrap(), 1.0, epsilon = 1e-15);
        let wf = DiffusionModel::wright_fisher();
        assert_abs_diff_eq!(wf.transform_point(0.5, Direction::Forward).unwrap(), FRAC_PI_2, epsilon = 1e-15);
        let x = wf.transform_point(0.123, Direction::Forward).unwrap();
        assert_abs_diff_eq!(wf.transform_point(x, Direction::Inverse).unwrap(), 0.123, epsilon = 1e-12);
        assert!(wf.transform_point(1.5, Direction::Forward).is_err());
        assert!(lf.transform_point(-0.1, Direction::Forward).is_err());
    }

    #[test]
    fn catalog_lookup() {
        let none = BTreeMap::new();
        for id in DiffusionModel::CATALOG {
            assert_eq!(DiffusionModel::from_catalog(id, &none).unwrap().id(), id);
        }
        let err = DiffusionModel::from_catalog("ornstein", &none).unwrap_err();
        assert!(err.to_string().contains("wright-fisher"));
        let bad = BTreeMap::from([("z".to_string(), 1.0)]);
        assert!(DiffusionModel::from_catalog("brownian", &bad).is_err());
        let p = BTreeMap::from([("r".to_string(), 2.0), ("c".to_string(), 0.5)]);
        let lf = DiffusionModel::from_catalog("logistic-feller", &p).unwrap();
        assert_eq!(lf.params()["r"], 2.0);
    }

    #[test]
    fn truncation_bounds() {
        let lf = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        let t = lf.truncate(0.001).unwrap();
        assert_eq!((t.lower(), t.upper()), (0.001, 1000.0));
        assert!(lf.truncate(0.0).is_err());
        assert!(lf.truncate(1.5).is_err());
        let wf = DiffusionModel::wright_fisher().truncate(0.001).unwrap();
        assert_abs_diff_eq!(wf.upper(), PI - 0.001);
        assert!(DiffusionModel::brownian().truncate(0.0).is_ok());
        assert!(DiffusionModel::brownian().truncate(0.5).is_err());
        let cap = t.mass_upper();
        assert!(cap > 4.0 && cap < 7.0, "{cap}");
    }

    #[test]
    fn base_point_shift_cancels_in_normalized_density() {
        // exp(-2Q) normalized over an interval does not depend on x₀.
        let wf = DiffusionModel::wright_fisher();
        let xs: Vec<f64> = (1..200).map(|k| 0.3 + 2.5 * f64::from(k) / 200.0).collect();
        let shift = 0.731;
        let d1: Vec<f64> = xs.iter().map(|&x| (-2.0 * wf.primitive(x).unwrap()).exp()).collect();
        let d2: Vec<f64> = xs.iter().map(|&x| (-2.0 * (wf.primitive(x).unwrap() + shift)).exp()).collect();
        let (s1, s2): (f64, f64) = (d1.iter().sum(), d2.iter().sum());
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a / s1 - b / s2).abs() < 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn transform_roundtrip(z in 1e-9f64..0.999_999) {
            let wf = DiffusionModel::wright_fisher();
            let x = wf.transform_point(z, Direction::Forward).unwrap();
            prop_assert!((wf.transform_point(x, Direction::Inverse).unwrap() - z).abs() < 1e-12);
            let lf = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
            let zz = z * 50.0;
            let x = lf.transform_point(zz, Direction::Forward).unwrap();
            prop_assert!((lf.transform_point(x, Direction::Inverse).unwrap() - zz).abs() < 1e-12 * zz.max(1.0));
        }
    }
}
