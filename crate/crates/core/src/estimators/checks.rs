//! Statistical checks of sampler, coalescence and weight properties.

use serde::Serialize;
use statrs::function::erf::erfc;

use super::density::{density_direct, density_girsanov, DensityEstimate, DensityTarget, Sector, Window};
use super::identity::bridge_exponential;
use super::mc::MCEstimate;
use super::Simulation;
use crate::coalesce::{
    coalesce_bundle, coalesce_pinned, enumerate_schemes, extract_scheme, scheme_replay, Scheme,
};
use crate::error::{config, Error, Result};
use crate::girsanov::{flow_logweight, flow_logweight_prefix, lemma5_constants, BridgeWeightOptions, Lemma5Constants};
use crate::paths::{pin, sample_bridge, sample_drifted_flow, sample_wiener, BridgeMode, DriftSpec, FreePaths, TimeGrid};
use crate::reduce::{replicate, Collect, MeanAccumulator, Merge};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// `P(τ₂ < T) = 2(1 − Φ(d/√(2T))) = erfc(d / (2√T))` for two coalescing
/// Brownian motions started `d` apart.
pub fn coalescence_oracle(gap: f64, horizon: f64) -> f64 {
    erfc(gap / (2.0 * horizon.sqrt()))
}

/// Richardson-style grid bias from estimates on grids `m, m/2, m/4, …`
/// (finest first) computed on the same fine paths.
#[derive(Debug, Clone, Serialize)]
pub struct GridBias {
    /// `Δ(m) = p̂(m) − p̂(m/2)` for each consecutive pair, finest first,
    /// estimated from paired per-replica differences.
    pub deltas: Vec<MCEstimate>,
    /// `Δ(m/2) / Δ(m)`; about `√2` for an `m^{−1/2}` error.
    pub shrink: Option<f64>,
    /// Remaining bias at the finest grid, `|Δ(m)| / (√2 − 1)`.
    pub bias: f64,
}

impl GridBias {
    pub fn from_deltas(deltas: Vec<MCEstimate>) -> Result<Self> {
        if deltas.is_empty() {
            return config("grid bias needs at least two levels");
        }
        let shrink = (deltas.len() >= 2).then(|| deltas[1].mean / deltas[0].mean);
        Ok(Self { bias: deltas[0].mean.abs() / (2f64.sqrt() - 1.0), deltas, shrink })
    }
}

/// One estimator evaluated on several coarsenings of the same fine paths.
#[derive(Debug, Clone, Serialize)]
pub struct LevelEstimates {
    /// `(steps, estimate)`, finest grid first.
    pub levels: Vec<(usize, MCEstimate)>,
    pub bias: Option<GridBias>,
}

impl LevelEstimates {
    pub fn finest(&self) -> &MCEstimate {
        &self.levels[0].1
    }
}

/// Level values and consecutive paired differences of one replica.
pub(crate) fn level_accumulators(levels: usize) -> (Vec<MeanAccumulator>, Vec<MeanAccumulator>) {
    (vec![MeanAccumulator::default(); levels], vec![MeanAccumulator::default(); levels.saturating_sub(1)])
}

pub(crate) fn push_levels(acc: &mut (Vec<MeanAccumulator>, Vec<MeanAccumulator>), values: &[f64]) {
    for (a, &v) in acc.0.iter_mut().zip(values) {
        a.push(v);
    }
    for (a, w) in acc.1.iter_mut().zip(values.windows(2)) {
        a.push(w[0] - w[1]);
    }
}

pub(crate) fn finish_levels(
    steps: Vec<usize>,
    acc: &(Vec<MeanAccumulator>, Vec<MeanAccumulator>),
) -> LevelEstimates {
    let deltas: Vec<MCEstimate> = acc.1.iter().map(MCEstimate::from_accumulator).collect();
    LevelEstimates {
        levels: steps.into_iter().zip(acc.0.iter().map(MCEstimate::from_accumulator)).collect(),
        bias: GridBias::from_deltas(deltas).ok(),
    }
}

pub(crate) fn level_steps<F: Scalar>(grid: &TimeGrid<F>, factors: &[usize]) -> Result<Vec<usize>> {
    if factors.first() != Some(&1) {
        return config("the first level must be the simulation grid (factor 1)");
    }
    factors.iter().map(|&f| Ok(grid.coarsen(f)?.steps())).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CoalescenceReport {
    pub estimates: LevelEstimates,
    pub oracle: f64,
}

/// Empirical probability that two driftless paths coalesce before `T`, on
/// the simulation grid coarsened by each of `factors` (ascending, starting
/// with 1).
pub fn coalescence_probability<F: Scalar>(
    sim: &Simulation<F>,
    factors: &[usize],
) -> Result<CoalescenceReport> {
    if sim.n() != 2 {
        return Err(Error::Dimension { expected: 2, got: sim.n() });
    }
    let steps = level_steps(&sim.grid, factors)?;
    let acc = replicate(
        sim.replicas,
        || level_accumulators(factors.len()),
        |acc, r| {
            let mut rng = RngStream::replica(sim.seed, r);
            let w = sample_wiener(&sim.grid, 2, &mut rng).expect("validated grid");
            let free = FreePaths::from_wiener(&w, &sim.u).expect("validated start");
            let met = |p: FreePaths<F>| {
                let cb = coalesce_bundle(p).expect("ordered start");
                if cb.events().is_empty() { 0.0 } else { 1.0 }
            };
            let mut values = vec![0.0; factors.len()];
            for (v, &f) in values.iter_mut().zip(factors).skip(1) {
                *v = met(free.subsample(f).expect("validated factor"));
            }
            values[0] = met(free);
            push_levels(acc, &values);
        },
    );
    let gap = (sim.u[1] - sim.u[0]).as_f64();
    Ok(CoalescenceReport {
        oracle: coalescence_oracle(gap, sim.horizon()),
        estimates: finish_levels(steps, &acc),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BridgeMoments {
    /// `E η(T/2)²`; `T/4` for a standard bridge.
    pub var_mid: MCEstimate,
    /// `E η(T/4) η(T/2)`; `T/8` for a standard bridge.
    pub cov_quarter_mid: MCEstimate,
    /// Largest `|η(T)|` seen; the pinning is exact, so this is 0.
    pub max_abs_end: f64,
}

fn check_quartered<F: Scalar>(grid: &TimeGrid<F>) -> Result<()> {
    if !grid.steps().is_multiple_of(4) {
        return config(format!("{} steps do not contain the quarter nodes", grid.steps()));
    }
    Ok(())
}

pub fn bridge_moments<F: Scalar>(
    grid: &TimeGrid<F>,
    mode: BridgeMode,
    replicas: usize,
    seed: u64,
) -> Result<BridgeMoments> {
    check_quartered(grid)?;
    let (q, h, m) = (grid.steps() / 4, grid.steps() / 2, grid.steps());

    #[derive(Default)]
    struct Acc(MeanAccumulator, MeanAccumulator, f64);
    impl Merge for Acc {
        fn merge(&mut self, o: Self) {
            self.0.merge(o.0);
            self.1.merge(o.1);
            self.2 = self.2.max(o.2);
        }
    }

    let acc = replicate(replicas, Acc::default, |acc, r| {
        let mut rng = RngStream::replica(seed, r);
        let b = sample_bridge(grid, 1, mode, &mut rng).expect("validated grid");
        let p = b.path(0);
        let (eq, eh) = (p[q].as_f64(), p[h].as_f64());
        acc.0.push(eh * eh);
        acc.1.push(eq * eh);
        acc.2 = acc.2.max(p[m].as_f64().abs());
    });
    Ok(BridgeMoments {
        var_mid: MCEstimate::from_accumulator(&acc.0),
        cov_quarter_mid: MCEstimate::from_accumulator(&acc.1),
        max_abs_end: acc.2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KsRow {
    pub node: usize,
    pub statistic: f64,
    /// Asymptotic two-sample critical value at level 1%.
    pub critical: f64,
}

impl KsRow {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical
    }
}

fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov statistics between the two bridge
/// samplers at the given nodes, on independent streams.
pub fn bridge_mode_ks<F: Scalar>(
    grid: &TimeGrid<F>,
    replicas: usize,
    seed: u64,
    nodes: &[usize],
) -> Result<Vec<KsRow>> {
    if let Some(&bad) = nodes.iter().find(|&&i| i > grid.steps()) {
        return Err(Error::IndexOutOfRange { index: bad, len: grid.steps() + 1 });
    }
    let draw = |mode: BridgeMode, tag: u64| {
        let s = RngStream::derive_seed(seed, tag);
        replicate(replicas, Collect::default, |acc, r| {
            let mut rng = RngStream::replica(s, r);
            let b = sample_bridge(grid, 1, mode, &mut rng).expect("validated grid");
            acc.0.push(nodes.iter().map(|&i| b.path(0)[i].as_f64()).collect::<Vec<f64>>());
        })
        .0
    };
    let a = draw(BridgeMode::ConditionedIncrement, 1);
    let b = draw(BridgeMode::TimeChange, 2);
    let critical = 1.6276 * (2.0 / replicas as f64).sqrt();
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(c, &node)| {
            let mut xa: Vec<f64> = a.iter().map(|v| v[c]).collect();
            let mut xb: Vec<f64> = b.iter().map(|v| v[c]).collect();
            KsRow { node, statistic: ks_two_sample(&mut xa, &mut xb), critical }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma5Report {
    pub p: f64,
    /// Sample mean of `𝔢^p`.
    pub moment: MCEstimate,
    pub constants: Lemma5Constants,
    /// `C₁ exp(C₂ ‖y‖)`.
    pub bound: f64,
}

/// `E 𝔢^a(u, y, s)^p` over pinned bridges against the moment bound.
pub fn lemma5_check<F: Scalar>(
    sim: &Simulation<F>,
    y: &[F],
    s: &Scheme,
    p: f64,
    drift: &DriftSpec,
) -> Result<Lemma5Report> {
    drift.validate()?;
    let n = sim.n();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let replay = scheme_replay(n, s)?;
    let constants = lemma5_constants(
        &sim.u,
        p,
        drift,
        &sim.grid,
        sim.replicas,
        RngStream::derive_seed(sim.seed, 5),
    )?;
    let acc = replicate(sim.replicas, MeanAccumulator::default, |acc, r| {
        let mut rng = RngStream::replica(sim.seed, r);
        let b = sample_bridge(&sim.grid, n, BridgeMode::ConditionedIncrement, &mut rng)
            .expect("validated grid");
        let pb = pin(&b, &sim.u, y).expect("validated endpoints");
        let lw = bridge_exponential(&pb, &replay, drift, BridgeWeightOptions::default())
            .expect("validated cutoffs");
        acc.push((p * lw.total().as_f64()).exp());
    });
    let y_norm = y.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    let bound = constants.c1 * (constants.c2 * y_norm).exp();
    Ok(Lemma5Report { p, moment: MCEstimate::from_accumulator(&acc), constants, bound })
}

/// Frequency of `S(η^{u,y}) ≠ S(η^{u,y+δe₁})` on a common bridge, per `δ`.
pub fn lemma6_mismatch<F: Scalar>(sim: &Simulation<F>, y: &[F], deltas: &[f64]) -> Result<Vec<MCEstimate>> {
    let n = sim.n();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let accs = replicate(
        sim.replicas,
        || vec![MeanAccumulator::default(); deltas.len()],
        |accs, r| {
            let mut rng = RngStream::replica(sim.seed, r);
            let b = sample_bridge(&sim.grid, n, BridgeMode::ConditionedIncrement, &mut rng)
                .expect("validated grid");
            let base = extract_scheme(&coalesce_pinned(&pin(&b, &sim.u, y).expect("valid")).expect("valid"));
            for (acc, &d) in accs.iter_mut().zip(deltas) {
                let mut yd = y.to_vec();
                yd[0] += F::lit(d);
                let pb = pin(&b, &sim.u, &yd).expect("valid");
                let moved = extract_scheme(&coalesce_pinned(&pb).expect("valid"));
                acc.push(if moved == base { 0.0 } else { 1.0 });
            }
        },
    );
    Ok(accs.iter().map(MCEstimate::from_accumulator).collect())
}

/// Fraction of driftless replicas with two merge events at one node.
pub fn tie_frequency<F: Scalar>(sim: &Simulation<F>) -> Result<MCEstimate> {
    let acc = replicate(sim.replicas, MeanAccumulator::default, |acc, r| {
        let mut rng = RngStream::replica(sim.seed, r);
        let cb = sample_drifted_flow(&sim.grid, &sim.u, &DriftSpec::Zero, &mut rng).expect("valid");
        acc.push(if cb.has_tied_events() { 1.0 } else { 0.0 });
    });
    Ok(MCEstimate::from_accumulator(&acc))
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma7Report {
    pub total: DensityEstimate,
    pub parts: Vec<(Scheme, DensityEstimate)>,
    /// Largest per-bin `|p̂^k − Σ_s p̂^{s,k}|`.
    pub max_abs_diff: f64,
}

/// `p^k` against the sum of `p^{s,k}` over schemes with at least `k`
/// survivors, all on the same replicas.
pub fn lemma7_check<F: Scalar>(
    sim: &Simulation<F>,
    k: usize,
    drift: &DriftSpec,
    window: &Window,
) -> Result<Lemma7Report> {
    let n = sim.n();
    let total = density_girsanov(sim, drift, &DensityTarget::Count { k }, window, Sector::Ordered)?;
    let mut parts = Vec::new();
    for scheme in enumerate_schemes(n)?.into_iter().flatten() {
        if scheme.survivors() < k {
            continue;
        }
        let target = DensityTarget::Scheme { scheme: scheme.clone(), j: k };
        parts.push((scheme, density_girsanov(sim, drift, &target, window, Sector::Ordered)?));
    }
    let max_abs_diff = (0..total.len())
        .map(|b| (total.values[b] - parts.iter().map(|p| p.1.values[b]).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    Ok(Lemma7Report { total, parts, max_abs_diff })
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerBin {
    pub bin_lo: Vec<f64>,
    pub big: MCEstimate,
    pub small: MCEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma8Report {
    /// `E Ẽ^a_{T,m}` over all `m` coordinates.
    pub norm_big: MCEstimate,
    /// `E Ẽ^a_{T,n}` over the first `n` coordinates.
    pub norm_small: MCEstimate,
    /// Both weights averaged within bins of the first `n` terminal values;
    /// empty bins are left out.
    pub bins: Vec<TowerBin>,
}

/// Normalization and binned tower property of the flow exponentials of a
/// configuration and of its first `n_small` points.
pub fn lemma8_check<F: Scalar>(
    sim: &Simulation<F>,
    n_small: usize,
    drift: &DriftSpec,
    window: &Window,
) -> Result<Lemma8Report> {
    drift.validate()?;
    if n_small == 0 || n_small >= sim.n() {
        return config(format!("need 1 ≤ n < {}, got {n_small}", sim.n()));
    }
    if window.dim() != n_small {
        return Err(Error::Dimension { expected: n_small, got: window.dim() });
    }
    let bins = window.total_bins();
    let init = || {
        (
            (MeanAccumulator::default(), MeanAccumulator::default()),
            (vec![MeanAccumulator::default(); bins], vec![MeanAccumulator::default(); bins]),
        )
    };
    let ((big, small), (bin_big, bin_small)) = replicate(sim.replicas, init, |acc, r| {
        let mut rng = RngStream::replica(sim.seed, r);
        let cb = sample_drifted_flow(&sim.grid, &sim.u, &DriftSpec::Zero, &mut rng).expect("valid");
        let wb = flow_logweight(&cb, drift).total().as_f64().exp();
        let ws = flow_logweight_prefix(&cb, drift, n_small).total().as_f64().exp();
        acc.0 .0.push(wb);
        acc.0 .1.push(ws);
        let ends: Vec<f64> = (0..n_small).map(|k| cb.terminal(k).as_f64()).collect();
        if let Some(b) = window.locate(&ends) {
            acc.1 .0[b].push(wb);
            acc.1 .1[b].push(ws);
        }
    });
    let bins = (0..bins)
        .filter(|&b| bin_big[b].count > 0)
        .map(|b| TowerBin {
            bin_lo: window.bin_lo(b),
            big: MCEstimate::from_accumulator(&bin_big[b]),
            small: MCEstimate::from_accumulator(&bin_small[b]),
        })
        .collect();
    Ok(Lemma8Report {
        norm_big: MCEstimate::from_accumulator(&big),
        norm_small: MCEstimate::from_accumulator(&small),
        bins,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm3Report {
    pub sizes: Vec<usize>,
    pub estimates: Vec<DensityEstimate>,
    /// Largest `(p̂_prev − p̂_next) / √(se_prev² + se_next²)` over bins and
    /// consecutive configurations; bins without data on either side are
    /// skipped.
    pub worst_drop: f64,
}

impl Thm3Report {
    pub fn nondecreasing_within(&self, kappa: f64) -> bool {
        self.worst_drop <= kappa
    }
}

/// `p̂^{k}` for each configuration (ordered by size) on common bins, all
/// with the same seed.
pub fn thm3_monotonicity<F: Scalar>(
    configs: &[Vec<F>],
    k: usize,
    drift: &DriftSpec,
    window: &Window,
    grid: &TimeGrid<F>,
    replicas: usize,
    seed: u64,
) -> Result<Thm3Report> {
    let mut sizes = Vec::new();
    let mut estimates = Vec::new();
    for u in configs {
        let sim = Simulation::new(*grid, u.clone(), replicas, seed)?;
        let est = if k > u.len() {
            DensityEstimate::zeros(window, replicas as u64, Sector::Ordered)
        } else {
            density_direct(&sim, drift, &DensityTarget::Count { k }, window, Sector::Ordered)?
        };
        sizes.push(u.len());
        estimates.push(est);
    }
    let mut worst_drop = f64::NEG_INFINITY;
    for w in estimates.windows(2) {
        for b in 0..window.total_bins() {
            let (a, c) = (&w[0], &w[1]);
            if a.counts[b] == 0 && c.counts[b] == 0 {
                continue;
            }
            let se = (a.stderr[b].powi(2) + c.stderr[b].powi(2)).sqrt();
            let drop = a.values[b] - c.values[b];
            let z = if se > 0.0 { drop / se } else if drop > 0.0 { f64::INFINITY } else { 0.0 };
            worst_drop = worst_drop.max(z);
        }
    }
    Ok(Thm3Report { sizes, estimates, worst_drop })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_grid(horizon: f64, steps: usize) -> crate::Result<crate::paths::TimeGrid<f64>> {
        crate::paths::make_grid(horizon, steps)
    }
    
    #[test]
    fn oracle_values() {
        assert!((coalescence_oracle(1.0, 1.0) - 0.4795001221869535).abs() < 1e-9);
        assert!((coalescence_oracle(1e-9, 1.0) - 1.0).abs() < 1e-8);
        assert!(coalescence_oracle(20.0, 1.0) < 1e-40);
    }

    #[test]
    fn grid_bias_from_levels() {
        let mut acc = level_accumulators(3);
        push_levels(&mut acc, &[0.47, 0.46, 0.4459]);
        push_levels(&mut acc, &[0.47, 0.46, 0.4459]);
        let le = finish_levels(vec![4, 2, 1], &acc);
        let gb = le.bias.unwrap();
        assert!((gb.deltas[0].mean - 0.01).abs() < 1e-12);
        assert!((gb.shrink.unwrap() - 1.41).abs() < 1e-9);
        assert!((gb.bias - 0.01 / (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!(GridBias::from_deltas(Vec::new()).is_err());
        assert!(finish_levels(vec![4], &level_accumulators(1)).bias.is_none());
    }

    #[test]
    fn ks_statistic() {
        let mut a = vec![0.0, 1.0, 2.0, 3.0];
        let mut b = a.clone();
        assert_eq!(ks_two_sample(&mut a, &mut b), 0.0);
        let mut c = vec![10.0, 11.0, 12.0, 13.0];
        assert_eq!(ks_two_sample(&mut a, &mut c), 1.0);
        let mut d = vec![0.5, 1.5, 2.5, 3.5];
        assert_eq!(ks_two_sample(&mut a, &mut d), 0.25);
    }

    #[test]
    fn lemma8_zero_drift_exact() {
        let g = make_grid(1.0, 32).unwrap();
        let sim = Simulation::new(g, vec![0.0, 0.5], 200, 1).unwrap();
        let w = Window::cube(1, -3.0, 3.0, 0.5).unwrap();
        let rep = lemma8_check(&sim, 1, &DriftSpec::Zero, &w).unwrap();
        assert_eq!((rep.norm_big.mean, rep.norm_big.stderr), (1.0, 0.0));
        assert_eq!(rep.norm_small.mean, 1.0);
        assert!(rep.bins.iter().all(|b| b.big.mean == 1.0 && b.small.mean == 1.0));
    }

    #[test]
    fn thm3_same_config_is_equal() {
        let g = make_grid(1.0, 32).unwrap();
        let w = Window::cube(1, -1.0, 2.0, 0.5).unwrap();
        let cfg = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let rep = thm3_monotonicity(&cfg, 1, &DriftSpec::Zero, &w, &g, 300, 4).unwrap();
        assert_eq!(rep.estimates[0].values, rep.estimates[1].values);
        assert!(rep.worst_drop <= 0.0);
        let cfg = vec![vec![0.0, 1.0], vec![0.0, 0.5, 1.0]];
        let w3 = Window::cube(3, -1.0, 2.0, 0.5).unwrap();
        let rep = thm3_monotonicity(&cfg, 3, &DriftSpec::Zero, &w3, &g, 100, 4).unwrap();
        assert!(rep.estimates[0].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatch_vanishes_at_zero_shift() {
        let g = make_grid(1.0, 64).unwrap();
        let sim = Simulation::new(g, vec![0.0, 0.3], 200, 8).unwrap();
        let est = lemma6_mismatch(&sim, &[0.1, 0.4], &[0.0, 0.5]).unwrap();
        assert_eq!(est[0].mean, 0.0);
        assert!(est[1].mean > 0.0);
    }
}
