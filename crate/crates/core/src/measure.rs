//! Binned measures, distances between them, coordinate pushforwards and
//! file formats.
//!
//! Densities are written as CSV with the exact header
//! `bin_left,bin_right,density`, where `density = mass / width`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DomainKind, TruncatedDomain};

/// Relative tolerance for matching bin edges of two histograms.
const EDGE_TOL: f64 = 1e-9;

/// Equal-width bins on `[lower, upper]`, optionally followed by one tail
/// bin `[upper, tail_upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
    pub tail_upper: Option<f64>,
}

impl BinSpec {
    pub fn uniform(lower: f64, upper: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("bins", "need at least one bin"));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::invalid("bins", format!("need finite lower < upper, got [{lower}, {upper}]")));
        }
        Ok(BinSpec {
            lower,
            upper,
            bins,
            tail_upper: None,
        })
    }

    /// Acceptance binning for a truncation: `bins` equal bins on the
    /// killing interval of a bounded model. On the half-line the equal bins
    /// cover `(ε, mass_upper)` and a single tail bin reaches `1/ε`.
    pub fn for_truncation(trunc: &TruncatedDomain, bins: usize) -> Result<Self> {
        let mut spec = Self::uniform(trunc.lower(), trunc.mass_upper(), bins)?;
        if trunc.model().domain().kind() == DomainKind::HalfLine && spec.upper < trunc.upper() {
            spec.tail_upper = Some(trunc.upper());
        }
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.bins + usize::from(self.tail_upper.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower, self.tail_upper.unwrap_or(self.upper))
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = (self.upper - self.lower) / self.bins as f64;
        let mut e: Vec<f64> = (0..self.bins).map(|k| self.lower + w * k as f64).collect();
        e.push(self.upper);
        if let Some(t) = self.tail_upper {
            e.push(t);
        }
        e
    }

    /// Bin of `x`, or `None` outside the closed range.
    #[inline]
    pub fn index(&self, x: f64) -> Option<usize> {
        if x >= self.lower && x <= self.upper {
            let k = ((x - self.lower) / (self.upper - self.lower) * self.bins as f64) as usize;
            Some(k.min(self.bins - 1))
        } else {
            match self.tail_upper {
                Some(t) if x > self.upper && x <= t => Some(self.bins),
                _ => None,
            }
        }
    }
}

/// Masses on consecutive bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    masses: Vec<f64>,
    total_mass: f64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.len() != masses.len() + 1 {
            return Err(Error::invalid(
                "histogram",
                format!("{} edges for {} masses", edges.len(), masses.len()),
            ));
        }
        if edges.windows(2).any(|p| !(p[0] < p[1]) || !p[1].is_finite()) || !edges[0].is_finite() {
            return Err(Error::invalid("histogram", "edges must be finite and strictly increasing"));
        }
        if masses.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::invalid("histogram", "masses must be finite and nonnegative"));
        }
        let total_mass = masses.iter().sum();
        Ok(Histogram {
            edges,
            masses,
            total_mass,
        })
    }

    /// Zero masses on the bins of `spec`.
    pub fn empty(spec: &BinSpec) -> Self {
        Histogram {
            edges: spec.edges(),
            masses: vec![0.0; spec.len()],
            total_mass: 0.0,
        }
    }

    /// Masses `F(e_{k+1}) - F(e_k)` from a cumulative function, normalized.
    pub fn from_cdf<F: Fn(f64) -> f64>(edges: Vec<f64>, cdf: F) -> Result<Self> {
        let masses = edges.windows(2).map(|p| (cdf(p[1]) - cdf(p[0])).max(0.0)).collect();
        Self::new(edges, masses)?.normalized()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    /// `mass / width` per bin.
    pub fn densities(&self) -> Vec<f64> {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| m / (e[1] - e[0]))
            .collect()
    }

    /// Mean under the piecewise-uniform density.
    pub fn mean(&self) -> f64 {
        let s: f64 = self
            .masses
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| m * 0.5 * (e[0] + e[1]))
            .sum();
        s / self.total_mass
    }

    pub fn normalized(&self) -> Result<Self> {
        if !(self.total_mass > 0.0) {
            return Err(Error::EmptySample);
        }
        Ok(self.scaled(1.0 / self.total_mass))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let masses: Vec<f64> = self.masses.iter().map(|m| m * factor).collect();
        let total_mass = masses.iter().sum();
        Histogram {
            edges: self.edges.clone(),
            masses,
            total_mass,
        }
    }

    pub(crate) fn add_at(&mut self, k: usize, mass: f64) {
        self.masses[k] += mass;
    }

    pub(crate) fn refresh_total(&mut self) {
        self.total_mass = self.masses.iter().sum();
    }
}

/// Mass-1 histogram of `samples` on `spec`.
pub fn histogram_of_samples(samples: &[f64], spec: &BinSpec) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut h = Histogram::empty(spec);
    let w = 1.0 / samples.len() as f64;
    let (lower, upper) = spec.range();
    for &x in samples {
        let k = spec.index(x).ok_or(Error::OutOfRange { value: x, lower, upper })?;
        h.add_at(k, w);
    }
    h.refresh_total();
    Ok(h)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= EDGE_TOL * scale
}

fn check_ranges(a: &Histogram, b: &Histogram) -> Result<f64> {
    let (a0, a1) = a.range();
    let (b0, b1) = b.range();
    let scale = (a1 - a0).abs().max(b1 - b0).max(a0.abs()).max(a1.abs());
    if close(a0, b0, scale) && close(a1, b1, scale) {
        Ok(scale)
    } else {
        Err(Error::IncompatibleRanges {
            a_lower: a0,
            a_upper: a1,
            b_lower: b0,
            b_upper: b1,
        })
    }
}

/// Sums the masses of `fine` onto the bins of `coarse` when every edge of
/// `coarse` is an edge of `fine`.
fn coarsen(fine: &Histogram, coarse: &Histogram, scale: f64) -> Option<Vec<f64>> {
    let mut out = vec![0.0; coarse.len()];
    let mut j = 0;
    for (k, &m) in fine.masses.iter().enumerate() {
        // fine bin k = [fine.edges[k], fine.edges[k+1]]
        while j + 1 < coarse.len() && fine.edges[k] >= coarse.edges[j + 1] - EDGE_TOL * scale {
            j += 1;
        }
        out[j] += m;
    }
    let all_matched = coarse
        .edges
        .iter()
        .all(|&e| fine.edges.iter().any(|&f| close(e, f, scale)));
    all_matched.then_some(out)
}

/// Union of both edge sets, with each bin's mass spread uniformly over
/// its width.
fn split_on_union(a: &Histogram, b: &Histogram, scale: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut edges: Vec<f64> = a.edges.iter().chain(&b.edges).copied().collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|x, y| close(*x, *y, scale));
    let spread = |h: &Histogram| {
        let dens = h.densities();
        let mut k = 0;
        edges
            .windows(2)
            .map(|e| {
                let mid = 0.5 * (e[0] + e[1]);
                while k + 1 < h.len() && mid > h.edges[k + 1] {
                    k += 1;
                }
                dens[k] * (e[1] - e[0])
            })
            .collect::<Vec<f64>>()
    };
    let (ma, mb) = (spread(a), spread(b));
    (edges, ma, mb)
}

fn aligned(a: &Histogram, b: &Histogram) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = check_ranges(a, b)?;
    if a.len() == b.len() && a.edges.iter().zip(&b.edges).all(|(x, y)| close(*x, *y, scale)) {
        return Ok((a.masses.clone(), b.masses.clone()));
    }
    if a.len() > b.len() {
        if let Some(ma) = coarsen(a, b, scale) {
            return Ok((ma, b.masses.clone()));
        }
    } else if let Some(mb) = coarsen(b, a, scale) {
        return Ok((a.masses.clone(), mb));
    }
    let (_, ma, mb) = split_on_union(a, b, scale);
    Ok((ma, mb))
}

/// Total variation `½ Σ |m₁ - m₂|` after aligning the bins. Nested bin sets
/// are compared on the coarser one; otherwise on the union of edges.
pub fn distance_tv(a: &Histogram, b: &Histogram) -> Result<f64> {
    let (ma, mb) = aligned(a, b)?;
    Ok(0.5 * ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// `∫ |F₁ - F₂|` for the piecewise-linear CDFs of the two histograms.
pub fn distance_w1(a: &Histogram, b: &Histogram) -> Result<f64> {
    let scale = check_ranges(a, b)?;
    let (edges, ma, mb) = split_on_union(a, b, scale);
    let mut total = 0.0;
    let (mut fa, mut fb) = (0.0, 0.0);
    for (k, e) in edges.windows(2).enumerate() {
        let d0 = fa - fb;
        fa += ma[k];
        fb += mb[k];
        let d1 = fa - fb;
        let w = e[1] - e[0];
        total += if d0 * d1 >= 0.0 {
            0.5 * w * (d0.abs() + d1.abs())
        } else {
            0.5 * w * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
        };
    }
    Ok(total)
}

/// Maps the bin edges through a strictly monotone `map`; masses stay with
/// their bins. A decreasing map reverses the bin order.
pub fn pushforward<F: Fn(f64) -> f64>(h: &Histogram, map: F) -> Result<Histogram> {
    // Edges plus two interior points per bin.
    let mut probes = Vec::with_capacity(3 * h.len() + 1);
    for e in h.edges.windows(2) {
        probes.push(map(e[0]));
        probes.push(map(e[0] + (e[1] - e[0]) / 3.0));
        probes.push(map(e[0] + 2.0 * (e[1] - e[0]) / 3.0));
    }
    probes.push(map(h.edges[h.len()]));
    if probes.iter().any(|p| !p.is_finite()) {
        return Err(Error::NotMonotone);
    }
    let increasing = probes.windows(2).all(|p| p[0] < p[1]);
    let decreasing = probes.windows(2).all(|p| p[0] > p[1]);
    let mut edges: Vec<f64> = h.edges.iter().map(|&e| map(e)).collect();
    let mut masses = h.masses.clone();
    if decreasing {
        edges.reverse();
        masses.reverse();
    } else if !increasing {
        return Err(Error::NotMonotone);
    }
    Ok(Histogram {
        edges,
        masses,
        total_mass: h.total_mass,
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    bin_left: f64,
    bin_right: f64,
    density: f64,
}

pub fn write_csv(path: impl AsRef<Path>, h: &Histogram) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (e, d) in h.edges.windows(2).zip(h.densities()) {
        w.serialize(CsvRow {
            bin_left: e[0],
            bin_right: e[1],
            density: d,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Histogram> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["bin_left", "bin_right", "density"] {
        return Err(Error::Parse {
            path: path.into(),
            reason: format!("expected header bin_left,bin_right,density, got {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut edges = Vec::new();
    let mut masses = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        match edges.last() {
            None => edges.push(row.bin_left),
            Some(&last) if last == row.bin_left => {}
            Some(&last) => {
                return Err(Error::Parse {
                    path: path.into(),
                    reason: format!("bins are not contiguous: {last} then {}", row.bin_left),
                })
            }
        }
        edges.push(row.bin_right);
        masses.push(row.density * (row.bin_right - row.bin_left));
    }
    if masses.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            reason: "no rows".into(),
        });
    }
    Histogram::new(edges, masses).map_err(|e| Error::Parse {
        path: path.into(),
        reason: e.to_string(),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        reason: e.to_string(),
    }
}

/// Writes `value` as pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_bins(m: [f64; 2]) -> Histogram {
        Histogram::new(vec![0.0, 0.5, 1.0], m.to_vec()).unwrap()
    }

    #[test]
    fn sample_histograms() {
        let spec = BinSpec::uniform(0.0, 1.0, 2).unwrap();
        let h = histogram_of_samples(&[0.25, 0.75], &spec).unwrap();
        assert_eq!(h.masses(), &[0.5, 0.5]);
        let h = histogram_of_samples(&[0.9], &spec).unwrap();
        assert_eq!(h.masses(), &[0.0, 1.0]);
        assert!(matches!(histogram_of_samples(&[], &spec), Err(Error::EmptySample)));
        assert!(matches!(
            histogram_of_samples(&[1.5], &spec),
            Err(Error::OutOfRange { value, .. }) if value == 1.5
        ));
    }

    #[test]
    fn hundred_bins_sum_to_one() {
        let spec = BinSpec::uniform(0.0, 1.0, 100).unwrap();
        let xs: Vec<f64> = (0..997).map(|k| (f64::from(k) + 0.5) / 997.0).collect();
        let h = histogram_of_samples(&xs, &spec).unwrap();
        assert_abs_diff_eq!(h.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tail_bin() {
        let spec = BinSpec {
            lower: 0.0,
            upper: 2.0,
            bins: 4,
            tail_upper: Some(10.0),
        };
        assert_eq!(spec.edges(), vec![0.0, 0.5, 1.0, 1.5, 2.0, 10.0]);
        assert_eq!(spec.index(2.0), Some(3));
        assert_eq!(spec.index(7.0), Some(4));
        assert_eq!(spec.index(10.5), None);
    }

    #[test]
    fn tv_examples() {
        let a = two_bins([0.5, 0.5]);
        assert_eq!(distance_tv(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(distance_tv(&two_bins([1.0, 0.0]), &two_bins([0.0, 1.0])).unwrap(), 1.0);
        assert_abs_diff_eq!(distance_tv(&a, &two_bins([0.75, 0.25])).unwrap(), 0.25);
    }

    #[test]
    fn tv_to_own_refinement_is_zero() {
        let fine = Histogram::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let coarse = two_bins([0.3, 0.7]);
        assert_abs_diff_eq!(distance_tv(&fine, &coarse).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(distance_tv(&coarse, &fine).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn incompatible_ranges() {
        let a = two_bins([0.5, 0.5]);
        let b = Histogram::new(vec![0.0, 2.0], vec![1.0]).unwrap();
        assert!(matches!(distance_tv(&a, &b), Err(Error::IncompatibleRanges { .. })));
        assert!(distance_w1(&a, &b).is_err());
    }

    #[test]
    fn w1_examples() {
        let spec = BinSpec::uniform(0.0, 1.0, 1000).unwrap();
        let a = histogram_of_samples(&[0.2], &spec).unwrap();
        let b = histogram_of_samples(&[0.6], &spec).unwrap();
        assert_abs_diff_eq!(distance_w1(&a, &b).unwrap(), 0.4, epsilon = 2e-3);
        assert_eq!(distance_w1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn pushforward_examples() {
        let h = Histogram::new(vec![0.0, 1.0, std::f64::consts::PI], vec![0.3, 0.7]).unwrap();
        assert_eq!(pushforward(&h, |x| x).unwrap(), h);
        let z = pushforward(&h, |x| 0.5 * (1.0 - x.cos())).unwrap();
        assert_abs_diff_eq!(z.range().0, 0.0);
        assert_abs_diff_eq!(z.range().1, 1.0, epsilon = 1e-15);
        assert_eq!(z.total_mass(), h.total_mass());
        let r = pushforward(&h, |x| -x).unwrap();
        assert_eq!(r.masses(), &[0.7, 0.3]);
        assert!(matches!(pushforward(&h, |x| (x - 1.5).powi(2)), Err(Error::NotMonotone)));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let h = Histogram::new(vec![0.0, 0.1, 0.35, 1.0], vec![0.2, 0.5, 0.3]).unwrap();
        write_csv(&path, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("bin_left,bin_right,density\n"));
        let back = read_csv(&path).unwrap();
        assert_eq!(back.edges(), h.edges());
        for (a, b) in back.masses().iter().zip(h.masses()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    fn arb_hist() -> impl Strategy<Value = Histogram> {
        prop::collection::vec(0.0f64..1.0, 8).prop_filter_map("nonzero", |m| {
            let s: f64 = m.iter().sum();
            (s > 0.0).then(|| {
                let edges = (0..=8).map(|k| f64::from(k) / 8.0).collect();
                Histogram::new(edges, m.iter().map(|v| v / s).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn pseudometric_axioms(a in arb_hist(), b in arb_hist(), c in arb_hist()) {
            for d in [distance_tv, distance_w1] {
                let ab = d(&a, &b).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - d(&b, &a).unwrap()).abs() < 1e-12);
                prop_assert!(ab <= d(&a, &c).unwrap() + d(&c, &b).unwrap() + 1e-12);
                prop_assert!(d(&a, &a).unwrap() == 0.0);
            }
        }

        #[test]
        fn pushforward_preserves_mass(a in arb_hist(), s in 0.1f64..5.0) {
            let p = pushforward(&a, |x| (s * x).exp()).unwrap();
            prop_assert_eq!(p.total_mass(), a.total_mass());
            prop_assert!(p.edges().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
