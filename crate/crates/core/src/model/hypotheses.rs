//! Numerical certification of the hypotheses under which the truncated
//! QSDs converge as `ε → 0`.
//!
//! Half-line models are checked against
//!
//! * H1: `W ≥ -C` and `W(x) → +∞` as `x → ∞`,
//! * H2: `∫_1^∞ e^{-2Q} < ∞` and `∫_0^1 e^{-2Q}/(W+C+1) < ∞`,
//! * H3: `∫_1^∞ e^{-2Q} < ∞` and `∫_0^1 x e^{-Q} < ∞`;
//!
//! bounded models `(a, b)` against
//!
//! * HH1: `W ≥ -C`,
//! * HH2: `e^{-2Q}/(W+C+1)` or `(x-a) e^{-Q}` integrable near `a`,
//! * HH3: `e^{-2Q}/(W+C+1)` or `(b-x) e^{-Q}` integrable near `b`.
//!
//! Improper integrals are split into dyadic pieces approaching the endpoint.
//! Geometric decay of the pieces certifies convergence; pieces that stop
//! shrinking certify divergence; anything in between is `inconclusive`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DiffusionModel, DomainKind};
use crate::quad;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Pass, Verdict::Pass) => Verdict::Pass,
            _ => Verdict::Inconclusive,
        }
    }

    fn or(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Pass, _) | (_, Verdict::Pass) => Verdict::Pass,
            (Verdict::Fail, Verdict::Fail) => Verdict::Fail,
            _ => Verdict::Inconclusive,
        }
    }
}

/// Grid and decision thresholds. Verdicts are a deterministic function of
/// these values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisTolerances {
    /// Dyadic refinement levels toward each endpoint.
    pub levels: u32,
    /// Sample points per dyadic level for the infimum of `W`.
    pub points_per_level: u32,
    /// Piece ratio at or below which the tail is treated as geometric.
    pub converge_ratio: f64,
    /// Piece ratio at or above which the integral is declared divergent.
    pub diverge_ratio: f64,
    /// Relative size of the extrapolated tail accepted as converged.
    pub tail_rel: f64,
    /// `W` at the far tail must exceed this for `W → ∞` to pass.
    pub growth_threshold: f64,
}

impl Default for HypothesisTolerances {
    fn default() -> Self {
        HypothesisTolerances {
            levels: 30,
            points_per_level: 8,
            converge_ratio: 0.85,
            diverge_ratio: 0.98,
            tail_rel: 1e-6,
            growth_threshold: 1e6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridInfo {
    pub description: String,
    pub points: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub hypothesis: String,
    pub verdict: Verdict,
    pub witness_values: BTreeMap<String, f64>,
    pub grid: GridInfo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn verdict(&self, hypothesis: &str) -> Option<Verdict> {
        self.entries
            .iter()
            .find(|e| e.hypothesis == hypothesis)
            .map(|e| e.verdict)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

struct Integral {
    verdict: Verdict,
    value: f64,
    ratio: f64,
    grid: GridInfo,
}

/// Integrates `f` over dyadic pieces `[e + s·δ_{k+1}, e + s·δ_k]` with
/// `δ_k = width·2^{-k}`, where `s = ±1` points away from the endpoint `e`.
fn endpoint_integral<F: Fn(f64) -> f64>(f: F, endpoint: f64, toward: f64, tol: &HypothesisTolerances) -> Integral {
    let width = toward - endpoint;
    let levels = tol.levels.max(4) as i32;
    let pieces: Vec<f64> = (0..levels)
        .map(|k| {
            let outer = endpoint + width * 2f64.powi(-k);
            let inner = endpoint + width * 2f64.powi(-k - 1);
            quad::integrate(&f, inner, outer, 0.0, 1e-10)
                .map(f64::abs)
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let grid = GridInfo {
        description: format!("{levels} dyadic pieces toward {endpoint}"),
        points: levels as usize + 1,
        lower: endpoint.min(toward),
        upper: endpoint.max(toward),
    };
    classify(&pieces, tol, grid)
}

/// Integrates over `[start·2^k, start·2^{k+1}]`, `k = 0..levels`.
fn infinity_integral<F: Fn(f64) -> f64>(f: F, start: f64, tol: &HypothesisTolerances) -> Integral {
    let levels = tol.levels.max(4) as i32;
    let pieces: Vec<f64> = (0..levels)
        .map(|k| {
            let lo = start * 2f64.powi(k);
            quad::integrate(&f, lo, 2.0 * lo, 0.0, 1e-10)
                .map(f64::abs)
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let grid = GridInfo {
        description: format!("{levels} dyadic pieces from {start} toward +inf"),
        points: levels as usize + 1,
        lower: start,
        upper: start * 2f64.powi(levels),
    };
    classify(&pieces, tol, grid)
}

fn classify(pieces: &[f64], tol: &HypothesisTolerances, grid: GridInfo) -> Integral {
    let value: f64 = pieces.iter().sum();
    if !value.is_finite() {
        return Integral {
            verdict: Verdict::Fail,
            value,
            ratio: f64::INFINITY,
            grid,
        };
    }
    let n = pieces.len();
    let last = pieces[n - 1];
    if last <= f64::MIN_POSITIVE || last <= 1e-300 * value.max(f64::MIN_POSITIVE) {
        // The integrand has vanished to underflow: nothing is left to add.
        return Integral {
            verdict: Verdict::Pass,
            value,
            ratio: 0.0,
            grid,
        };
    }
    let ratios: Vec<f64> = (n - 3..n).map(|k| pieces[k] / pieces[k - 1]).collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let best = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let verdict = if worst <= tol.converge_ratio {
        let tail = last * worst / (1.0 - worst);
        if tail <= tol.tail_rel * value {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        }
    } else if best >= tol.diverge_ratio {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Integral {
        verdict,
        value,
        ratio: worst,
        grid,
    }
}

/// Infimum of `W` on a grid refined toward both ends of `(lo, hi)`.
struct Infimum {
    verdict: Verdict,
    min: f64,
    points: usize,
    end_values: (f64, f64),
}

fn infimum(model: &DiffusionModel, sample: &[f64], inner: &[f64]) -> Infimum {
    let w = |x: f64| model.w(x);
    let values: Vec<f64> = sample.iter().map(|&x| w(x)).collect();
    let inner_min = inner.iter().map(|&x| w(x)).fold(f64::INFINITY, f64::min);
    let (arg, grid_min) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let min = if arg > 0 && arg + 1 < sample.len() {
        grid_min.min(golden_min(w, sample[arg - 1], sample[arg + 1]))
    } else {
        grid_min
    };
    let end_values = (values[0], values[values.len() - 1]);
    let verdict = if values.iter().any(|v| v.is_nan()) {
        Verdict::Inconclusive
    } else if min == f64::NEG_INFINITY {
        Verdict::Fail
    } else if grid_min >= inner_min - 1e-9 * inner_min.abs().max(1.0) {
        // Pushing the grid toward the endpoints did not lower the infimum.
        Verdict::Pass
    } else {
        // Still decreasing at the grid's extremes.
        let ends_drop = end_values.0 == grid_min || end_values.1 == grid_min;
        if ends_drop && grid_min < inner_min - 1e3 * inner_min.abs().max(1.0) {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    };
    Infimum {
        verdict,
        min,
        points: values.len(),
        end_values,
    }
}

/// Golden-section minimum of `f` on `[a, b]`.
fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Runs the hypothesis checks appropriate to the model's domain kind.
pub fn check_hypotheses(model: &DiffusionModel, tol: &HypothesisTolerances) -> HypothesisReport {
    let entries = match model.domain().kind() {
        DomainKind::HalfLine => half_line(model, tol),
        DomainKind::Bounded => bounded(model, tol),
    };
    HypothesisReport {
        model: model.id().to_string(),
        params: model.params().clone(),
        entries,
    }
}

fn q_or_nan(model: &DiffusionModel, x: f64) -> f64 {
    model.primitive(x).unwrap_or(f64::NAN)
}

fn half_line(model: &DiffusionModel, tol: &HypothesisTolerances) -> Vec<HypothesisEntry> {
    let levels = tol.levels as i32;
    let per = tol.points_per_level.max(1) as i32;
    let geo = |from: i32, to: i32| -> Vec<f64> {
        (from * per..=to * per)
            .map(|j| 2f64.powf(f64::from(j) / f64::from(per)))
            .collect()
    };
    let sample = geo(-levels, levels);
    let inner = geo(-levels + 4, levels - 4);
    let inf = infimum(model, &sample, &inner);
    let c = (-inf.min).max(0.0);

    // W → +∞ along x = 2^k for the last few octaves.
    let tail: Vec<f64> = (levels - 4..=levels).map(|k| model.w(2f64.powi(k))).collect();
    let increasing = tail.windows(2).all(|p| p[1] > p[0]);
    let growth = if increasing && tail[tail.len() - 1] > tol.growth_threshold {
        Verdict::Pass
    } else if tail.windows(2).all(|p| p[1] <= p[0]) || tail[tail.len() - 1] < tol.growth_threshold.sqrt() {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };

    let grid_w = GridInfo {
        description: format!("geometric, {per} points per octave"),
        points: inf.points,
        lower: sample[0],
        upper: sample[sample.len() - 1],
    };
    let mut h1 = BTreeMap::new();
    h1.insert("inf_W".into(), inf.min);
    h1.insert("C".into(), c);
    h1.insert("W_at_grid_lower".into(), inf.end_values.0);
    h1.insert("W_at_grid_upper".into(), inf.end_values.1);
    h1.insert("W_tail_last".into(), tail[tail.len() - 1]);

    let natural = |x: f64| (-2.0 * q_or_nan(model, x)).exp();
    let at_infinity = infinity_integral(natural, 1.0, tol);
    let near_zero_h2 = endpoint_integral(|x| (-2.0 * q_or_nan(model, x) - (model.w(x) + c + 1.0).ln()).exp(), 0.0, 1.0, tol);
    let near_zero_h3 = endpoint_integral(|x| x * (-q_or_nan(model, x)).exp(), 0.0, 1.0, tol);

    let integral_entry = |name: &str, second: &Integral, label: &str| {
        let mut w = BTreeMap::new();
        w.insert("int_1_inf_exp_minus_2Q".into(), at_infinity.value);
        w.insert("ratio_1_inf".into(), at_infinity.ratio);
        w.insert(format!("int_0_1_{label}"), second.value);
        w.insert("ratio_0_1".into(), second.ratio);
        w.insert("C".into(), c);
        HypothesisEntry {
            hypothesis: name.into(),
            verdict: at_infinity.verdict.and(second.verdict),
            witness_values: w,
            grid: GridInfo {
                description: format!("{}; {}", at_infinity.grid.description, second.grid.description),
                points: at_infinity.grid.points + second.grid.points,
                lower: second.grid.lower,
                upper: at_infinity.grid.upper,
            },
        }
    };

    vec![
        HypothesisEntry {
            hypothesis: "H1".into(),
            verdict: inf.verdict.and(growth),
            witness_values: h1,
            grid: grid_w,
        },
        integral_entry("H2", &near_zero_h2, "exp_minus_2Q_over_W_plus_C_plus_1"),
        integral_entry("H3", &near_zero_h3, "x_exp_minus_Q"),
    ]
}

fn bounded(model: &DiffusionModel, tol: &HypothesisTolerances) -> Vec<HypothesisEntry> {
    let (a, b) = (model.domain().lower(), model.domain().upper());
    let width = b - a;
    let levels = tol.levels as i32;
    let per = tol.points_per_level.max(1) as i32;
    // Dyadic approach to both ends plus a uniform interior.
    let mut sample = Vec::new();
    let mut inner = Vec::new();
    for j in (per..=levels * per).rev() {
        let d = 0.5 * width * 2f64.powf(-f64::from(j) / f64::from(per));
        sample.push(a + d);
        if j <= (levels - 4) * per {
            inner.push(a + d);
        }
    }
    for k in 1..(8 * per) {
        let x = a + width * (0.25 + 0.5 * f64::from(k) / f64::from(8 * per));
        sample.push(x);
        inner.push(x);
    }
    for j in per..=levels * per {
        let d = 0.5 * width * 2f64.powf(-f64::from(j) / f64::from(per));
        sample.push(b - d);
        if j <= (levels - 4) * per {
            inner.push(b - d);
        }
    }
    let inf = infimum(model, &sample, &inner);
    let c = (-inf.min).max(0.0);
    let mut hh1 = BTreeMap::new();
    hh1.insert("inf_W".into(), inf.min);
    hh1.insert("C".into(), c);
    hh1.insert("W_at_grid_lower".into(), inf.end_values.0);
    hh1.insert("W_at_grid_upper".into(), inf.end_values.1);

    let weighted = |x: f64| (-2.0 * q_or_nan(model, x) - (model.w(x) + c + 1.0).ln()).exp();
    let neighbourhood = 0.25 * width;

    let side = |name: &str, endpoint: f64, toward: f64| {
        let first = endpoint_integral(weighted, endpoint, toward, tol);
        let second = endpoint_integral(|x| (x - endpoint).abs() * (-q_or_nan(model, x)).exp(), endpoint, toward, tol);
        let mut w = BTreeMap::new();
        w.insert("int_exp_minus_2Q_over_W_plus_C_plus_1".into(), first.value);
        w.insert("ratio_exp_minus_2Q_over_W_plus_C_plus_1".into(), first.ratio);
        w.insert("int_dist_exp_minus_Q".into(), second.value);
        w.insert("ratio_dist_exp_minus_Q".into(), second.ratio);
        w.insert("C".into(), c);
        HypothesisEntry {
            hypothesis: name.into(),
            verdict: first.verdict.or(second.verdict),
            witness_values: w,
            grid: first.grid,
        }
    };

    vec![
        HypothesisEntry {
            hypothesis: "HH1".into(),
            verdict: inf.verdict,
            witness_values: hh1,
            grid: GridInfo {
                description: format!("dyadic toward both ends, {per} points per octave, uniform interior"),
                points: inf.points,
                lower: sample[0],
                upper: sample[sample.len() - 1],
            },
        },
        side("HH2", a, a + neighbourhood),
        side("HH3", b, b - neighbourhood),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Domain;

    fn tol() -> HypothesisTolerances {
        HypothesisTolerances::default()
    }

    #[test]
    fn logistic_feller_satisfies_h1_and_h3() {
        let m = DiffusionModel::logistic_feller(1.0, 1.0).unwrap();
        let r = check_hypotheses(&m, &tol());
        assert_eq!(r.verdict("H1"), Some(Verdict::Pass), "{r:#?}");
        assert_eq!(r.verdict("H3"), Some(Verdict::Pass), "{r:#?}");
    }

    #[test]
    fn wright_fisher_satisfies_bounded_hypotheses() {
        let r = check_hypotheses(&DiffusionModel::wright_fisher(), &tol());
        for h in ["HH1", "HH2", "HH3"] {
            assert_eq!(r.verdict(h), Some(Verdict::Pass), "{h}: {r:#?}");
        }
        let inf_w = r.entries[0].witness_values["inf_W"];
        assert!((inf_w - 0.5).abs() < 1e-3, "{inf_w}");
    }

    #[test]
    fn brownian_passes_trivially() {
        let r = check_hypotheses(&DiffusionModel::brownian(), &tol());
        for h in ["HH1", "HH2", "HH3"] {
            assert_eq!(r.verdict(h), Some(Verdict::Pass), "{h}: {r:#?}");
        }
    }

    #[test]
    fn violated_hypotheses_fail() {
        // q = -x: Q = (1 - x²)/2, so ∫_1^∞ e^{-2Q} diverges.
        let m = DiffusionModel::custom("push-out", Domain::half_line(), |x| -x, |_| -1.0);
        let r = check_hypotheses(&m, &tol());
        assert_eq!(r.verdict("H3"), Some(Verdict::Fail), "{r:#?}");

        // q = -1/(2x): W = 1/(4x²) - 1/(2x²) = -1/(4x²), unbounded below at 0.
        let m = DiffusionModel::custom("attract", Domain::half_line(), |x| -0.5 / x, |x| 0.5 / (x * x));
        let r = check_hypotheses(&m, &tol());
        assert_eq!(r.verdict("H1"), Some(Verdict::Fail), "{r:#?}");
    }

    #[test]
    fn verdicts_are_deterministic_and_serialize() {
        let m = DiffusionModel::wright_fisher();
        let a = check_hypotheses(&m, &tol()).to_json().unwrap();
        let b = check_hypotheses(&m, &tol()).to_json().unwrap();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        let e = &v["entries"][0];
        for key in ["hypothesis", "verdict", "witness_values", "grid"] {
            assert!(e.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn potential_respects_reported_lower_bound() {
        for m in [DiffusionModel::logistic_feller(1.0, 1.0).unwrap(), DiffusionModel::wright_fisher()] {
            let r = check_hypotheses(&m, &tol());
            let c = r.entries[0].witness_values["C"];
            let (lo, hi) = match m.domain().kind() {
                DomainKind::HalfLine => (1e-3, 50.0),
                DomainKind::Bounded => (1e-3, m.domain().upper() - 1e-3),
            };
            for k in 0..=997 {
                let x = lo + (hi - lo) * f64::from(k) / 997.0;
                assert!(m.potential(x).unwrap() >= -c - 1e-9, "{} x={x}", m.id());
            }
        }
    }
}
