//! Histogram estimators of the point densities of the surviving particles.
//!
//! A density "for j points" is the intensity of ordered `j`-tuples of
//! distinct terminal values. On the ordered sector only ascending tuples are
//! counted; the full-space convention counts every arrangement, so for the
//! symmetric targets here full = `j!` × ordered, bin by bin.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mc::{MCEstimate, WeightStats};
use super::Simulation;
use crate::coalesce::{extract_scheme, CoalescedBundle, Scheme};
use crate::error::{config, Error, Result};
use crate::girsanov::flow_logweight;
use crate::paths::{sample_drifted_flow, DriftSpec};
use crate::reduce::{replicate, MeanAccumulator, Merge};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Rectangular window split into half-open cubes `[v, v + δ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Window {
    lo: Vec<f64>,
    delta: f64,
    bins: Vec<usize>,
}

impl Window {
    /// `hi − lo` must be a whole number of bins on every axis.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return config(format!("bin width must be positive, got {delta}"));
        }
        if lo.is_empty() || lo.len() != hi.len() {
            return config("window bounds must be nonempty and of equal dimension");
        }
        let mut bins = Vec::with_capacity(lo.len());
        for (&a, &b) in lo.iter().zip(&hi) {
            let span = (b - a) / delta;
            let count = span.round();
            if !(b > a) || !span.is_finite() || (span - count).abs() > 1e-9 * span.max(1.0) {
                return config(format!("[{a}, {b}) is not a whole number of bins of width {delta}"));
            }
            bins.push(count as usize);
        }
        Ok(Self { lo, delta, bins })
    }

    /// The same interval on each of `dim` axes.
    pub fn cube(dim: usize, lo: f64, hi: f64, delta: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], delta)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bins_per_axis(&self) -> &[usize] {
        &self.bins
    }

    pub fn total_bins(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn bin_volume(&self) -> f64 {
        self.delta.powi(self.dim() as i32)
    }

    /// Row-major bin index (first axis slowest), `None` outside the window.
    pub fn locate(&self, y: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for ((&v, &lo), &nb) in y.iter().zip(&self.lo).zip(&self.bins) {
            let i = ((v - lo) / self.delta).floor();
            if !(i >= 0.0 && i < nb as f64) {
                return None;
            }
            flat = flat * nb + i as usize;
        }
        Some(flat)
    }

    fn axis_indices(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.bins[a];
            flat /= self.bins[a];
        }
        idx
    }

    pub fn bin_lo(&self, flat: usize) -> Vec<f64> {
        self.axis_indices(flat)
            .iter()
            .zip(&self.lo)
            .map(|(&i, &lo)| lo + i as f64 * self.delta)
            .collect()
    }

    pub fn midpoint(&self, flat: usize) -> Vec<f64> {
        self.bin_lo(flat).iter().map(|v| v + self.delta / 2.0).collect()
    }
}

/// Which tuples a density counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sector {
    /// Ascending tuples `y_1 < … < y_j` only.
    #[default]
    Ordered,
    /// Every arrangement of distinct survivors.
    Full,
}

/// What a binned value approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    /// Average of the density over the bin.
    BinAverage,
    /// Density at the bin midpoint.
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub window: Window,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Samples that fell in each bin; zero means the bin carries no data.
    pub counts: Vec<u64>,
    pub replicas: u64,
    pub ess: f64,
    pub sector: Sector,
    pub kind: DensityKind,
    /// Per-replica window mass `Σ_bins value · δ^j`.
    pub mass: MCEstimate,
}

impl DensityEstimate {
    /// The estimate of a target that can never be hit: zero everywhere,
    /// with every bin empty.
    pub fn zeros(window: &Window, replicas: u64, sector: Sector) -> Self {
        let bins = window.total_bins();
        let mut mass = MeanAccumulator::default();
        for _ in 0..replicas {
            mass.push(0.0);
        }
        Self {
            window: window.clone(),
            values: vec![0.0; bins],
            stderr: vec![0.0; bins],
            counts: vec![0; bins],
            replicas,
            ess: replicas as f64,
            sector,
            kind: DensityKind::BinAverage,
            mass: MCEstimate::from_accumulator(&mass),
        }
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_empty_bin(&self, b: usize) -> bool {
        self.counts[b] == 0
    }

    pub fn empty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 0).count()
    }

    /// `Σ value · δ^j` over the window.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.window.bin_volume()
    }

    /// Header `bin_lo_1,…,bin_lo_j,value,stderr,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for a in 1..=self.dim() {
            let _ = write!(out, "bin_lo_{a},");
        }
        out.push_str("value,stderr,count\n");
        for b in 0..self.len() {
            for v in self.window.bin_lo(b) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{},{},{}", self.values[b], self.stderr[b], self.counts[b]);
        }
        out
    }
}

/// Which survivor tuples are accumulated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityTarget {
    /// `p^{s,j}`: `j`-tuples of survivors on the event `{S = s}`.
    Scheme { scheme: Scheme, j: usize },
    /// `p^{k}`: `k`-tuples of survivors, all schemes together.
    Count { k: usize },
}

impl DensityTarget {
    pub fn dim(&self) -> usize {
        match self {
            DensityTarget::Scheme { j, .. } => *j,
            DensityTarget::Count { k } => *k,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            DensityTarget::Scheme { scheme, j } => {
                if scheme.n() != n {
                    return config(format!("scheme {scheme} does not fit n = {n}"));
                }
                if *j == 0 || *j > scheme.survivors() {
                    return config(format!(
                        "cannot select {j} of the {} survivors of {scheme}",
                        scheme.survivors()
                    ));
                }
            }
            DensityTarget::Count { k } => {
                if *k == 0 || *k > n {
                    return config(format!("tuple size k = {k} outside 1..={n}"));
                }
            }
        }
        Ok(())
    }
}

/// Calls `f` on every `j`-tuple of distinct indices below `len`: ascending
/// combinations, or all arrangements.
pub(crate) fn for_each_tuple(len: usize, j: usize, sector: Sector, mut f: impl FnMut(&[usize])) {
    fn rec(
        len: usize,
        j: usize,
        ordered: bool,
        cur: &mut Vec<usize>,
        used: &mut [bool],
        f: &mut dyn FnMut(&[usize]),
    ) {
        if cur.len() == j {
            f(cur);
            return;
        }
        let start = if ordered { cur.last().map_or(0, |&l| l + 1) } else { 0 };
        for i in start..len {
            if used[i] {
                continue;
            }
            used[i] = true;
            cur.push(i);
            rec(len, j, ordered, cur, used, f);
            cur.pop();
            used[i] = false;
        }
    }
    if j > len {
        return;
    }
    let mut used = vec![false; len];
    rec(len, j, sector == Sector::Ordered, &mut Vec::with_capacity(j), &mut used, &mut f);
}

/// Per-bin sums of per-replica contributions.
#[derive(Debug, Clone)]
pub(crate) struct BinAccumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: Vec<u64>,
    mass: MeanAccumulator,
    weights: WeightStats,
    scratch: Vec<(usize, f64)>,
}

impl BinAccumulator {
    pub(crate) fn new(bins: usize) -> Self {
        Self {
            sum: vec![0.0; bins],
            sum_sq: vec![0.0; bins],
            count: vec![0; bins],
            mass: MeanAccumulator::default(),
            weights: WeightStats::default(),
            scratch: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn hit(&mut self, bin: usize, value: f64) {
        self.scratch.push((bin, value));
    }

    /// Closes the current replica, whose importance weight is `weight`.
    pub(crate) fn end_replica(&mut self, weight: f64) {
        self.weights.push(weight);
        self.scratch.sort_unstable_by_key(|h| h.0);
        let mut total = 0.0;
        let mut i = 0;
        while i < self.scratch.len() {
            let b = self.scratch[i].0;
            let mut c = 0.0;
            while i < self.scratch.len() && self.scratch[i].0 == b {
                c += self.scratch[i].1;
                self.count[b] += 1;
                i += 1;
            }
            self.sum[b] += c;
            self.sum_sq[b] += c * c;
            total += c;
        }
        self.mass.push(total);
        self.scratch.clear();
    }

    pub(crate) fn finish(&self, window: &Window, sector: Sector, kind: DensityKind) -> DensityEstimate {
        let n = self.mass.count as f64;
        let vol = window.bin_volume();
        let values = self.sum.iter().map(|s| s / (n * vol)).collect();
        let stderr = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &q)| {
                if n < 2.0 {
                    0.0
                } else {
                    (((q - s * s / n) / (n * (n - 1.0))).max(0.0)).sqrt() / vol
                }
            })
            .collect();
        DensityEstimate {
            window: window.clone(),
            values,
            stderr,
            counts: self.count.clone(),
            replicas: self.mass.count,
            ess: self.weights.ess(),
            sector,
            kind,
            mass: MCEstimate::with_ess(&self.mass, self.weights.ess()),
        }
    }
}

impl Merge for BinAccumulator {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.count.iter_mut().zip(other.count) {
            *a += b;
        }
        self.mass.merge(other.mass);
        self.weights.merge(other.weights);
    }
}

/// Adds the weighted target tuples of one replica.
pub(crate) fn accumulate_tuples<F: Scalar>(
    acc: &mut BinAccumulator,
    cb: &CoalescedBundle<F>,
    target: &DensityTarget,
    window: &Window,
    sector: Sector,
    weight: f64,
) {
    let j = match target {
        DensityTarget::Scheme { scheme, j } => {
            if scheme.entries().len() != cb.events().len() || &extract_scheme(cb) != scheme {
                return;
            }
            *j
        }
        DensityTarget::Count { k } => *k,
    };
    let vals: Vec<f64> = cb.survivor_values().iter().map(|v| v.as_f64()).collect();
    let mut y = vec![0.0; j];
    for_each_tuple(vals.len(), j, sector, |idx| {
        for (t, &i) in y.iter_mut().zip(idx) {
            *t = vals[i];
        }
        if let Some(b) = window.locate(&y) {
            acc.hit(b, weight);
        }
    });
}

fn check_target<F: Scalar>(sim: &Simulation<F>, target: &DensityTarget, window: &Window) -> Result<()> {
    target.validate(sim.n())?;
    if window.dim() != target.dim() {
        return Err(Error::Dimension { expected: target.dim(), got: window.dim() });
    }
    Ok(())
}

/// Histogram of target tuples over flows sampled by `sample`, which returns
/// the coalesced bundle of a replica and its importance weight.
pub fn density_from_flows<F, S>(
    sim: &Simulation<F>,
    target: &DensityTarget,
    window: &Window,
    sector: Sector,
    sample: S,
) -> Result<DensityEstimate>
where
    F: Scalar,
    S: Fn(&mut RngStream) -> (CoalescedBundle<F>, f64) + Sync + Send,
{
    check_target(sim, target, window)?;
    let acc = replicate(
        sim.replicas,
        || BinAccumulator::new(window.total_bins()),
        |acc, r| {
            let mut rng = RngStream::replica(sim.seed, r);
            let (cb, w) = sample(&mut rng);
            accumulate_tuples(acc, &cb, target, window, sector, w);
            acc.end_replica(w);
        },
    );
    Ok(acc.finish(window, sector, DensityKind::BinAverage))
}

/// Histogram over Euler paths of the drifted coalescing flow.
pub fn density_direct<F: Scalar>(
    sim: &Simulation<F>,
    drift: &DriftSpec,
    target: &DensityTarget,
    window: &Window,
    sector: Sector,
) -> Result<DensityEstimate> {
    drift.validate()?;
    density_from_flows(sim, target, window, sector, |rng| {
        let cb = sample_drifted_flow(&sim.grid, &sim.u, drift, rng).expect("validated setup");
        (cb, 1.0)
    })
}

/// Histogram over driftless coalescing paths, each replica weighted by its
/// flow exponential.
pub fn density_girsanov<F: Scalar>(
    sim: &Simulation<F>,
    drift: &DriftSpec,
    target: &DensityTarget,
    window: &Window,
    sector: Sector,
) -> Result<DensityEstimate> {
    drift.validate()?;
    density_from_flows(sim, target, window, sector, |rng| {
        let cb = sample_drifted_flow(&sim.grid, &sim.u, &DriftSpec::Zero, rng)
            .expect("validated setup");
        let w = flow_logweight(&cb, drift).total().as_f64().exp();
        (cb, w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_grid(horizon: f64, steps: usize) -> crate::Result<crate::paths::TimeGrid<f64>> {
        crate::paths::make_grid(horizon, steps)
    }
    
    #[test]
    fn window_geometry() {
        let w = Window::new(vec![-1.0, 0.0], vec![1.0, 0.5], 0.25).unwrap();
        assert_eq!(w.bins_per_axis(), &[8, 2]);
        assert_eq!(w.total_bins(), 16);
        assert_eq!(w.locate(&[-1.0, 0.0]), Some(0));
        assert_eq!(w.locate(&[-0.75, 0.3]), Some(3));
        assert_eq!(w.locate(&[1.0, 0.0]), None);
        assert_eq!(w.locate(&[0.0, -0.01]), None);
        assert_eq!(w.bin_lo(3), vec![-0.75, 0.25]);
        assert_eq!(w.midpoint(0), vec![-0.875, 0.125]);
        assert!(Window::new(vec![0.0], vec![1.0], 0.3).is_err());
        assert!(Window::new(vec![0.0], vec![1.0], 0.0).is_err());
        assert!(Window::new(vec![1.0], vec![1.0], 0.5).is_err());
    }

    #[test]
    fn tuples() {
        let mut seen = Vec::new();
        for_each_tuple(3, 2, Sector::Ordered, |t| seen.push(t.to_vec()));
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        let mut count = 0;
        for_each_tuple(4, 3, Sector::Full, |_| count += 1);
        assert_eq!(count, 24);
        for_each_tuple(2, 3, Sector::Full, |_| panic!("no tuples"));
    }

    #[test]
    fn csv_layout() {
        let g = make_grid(1.0, 16).unwrap();
        let sim = Simulation::new(g, vec![0.0], 100, 3).unwrap();
        let w = Window::new(vec![-1.0], vec![1.0], 0.5).unwrap();
        let d = density_direct(&sim, &DriftSpec::Zero, &DensityTarget::Count { k: 1 }, &w, Sector::Ordered)
            .unwrap();
        let csv = d.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "bin_lo_1,value,stderr,count");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("-1,"));
    }

    #[test]
    fn target_validation() {
        let g = make_grid(1.0, 8).unwrap();
        let sim = Simulation::new(g, vec![0.0, 1.0], 10, 1).unwrap();
        let w1 = Window::cube(1, -1.0, 1.0, 0.5).unwrap();
        let bad = DensityTarget::Scheme { scheme: Scheme::new(2, vec![1]).unwrap(), j: 2 };
        assert!(density_direct(&sim, &DriftSpec::Zero, &bad, &w1, Sector::Ordered).is_err());
        let k3 = DensityTarget::Count { k: 3 };
        assert!(density_direct(&sim, &DriftSpec::Zero, &k3, &w1, Sector::Ordered).is_err());
        let k2 = DensityTarget::Count { k: 2 };
        assert!(matches!(
            density_direct(&sim, &DriftSpec::Zero, &k2, &w1, Sector::Ordered),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn full_sector_is_factorial_multiple() {
        let g = make_grid(1.0, 64).unwrap();
        let sim = Simulation::new(g, vec![0.0, 0.5, 1.0], 300, 5).unwrap();
        let w = Window::cube(2, -3.0, 4.0, 0.5).unwrap();
        let t = DensityTarget::Count { k: 2 };
        let o = density_direct(&sim, &DriftSpec::Zero, &t, &w, Sector::Ordered).unwrap();
        let f = density_direct(&sim, &DriftSpec::Zero, &t, &w, Sector::Full).unwrap();
        // the full histogram is the ordered one plus its mirror image
        let nb = w.bins_per_axis()[0];
        for a in 0..nb {
            for b in 0..nb {
                let (ab, ba) = (a * nb + b, b * nb + a);
                let mirrored = o.values[ab] + o.values[ba];
                assert!((f.values[ab] - mirrored).abs() < 1e-12);
            }
        }
        assert!((f.integral() - 2.0 * o.integral()).abs() < 1e-9);
    }
}
