//! Kernel form of `p^k`: `Σ_L q^L(y) · E[Ẽ^a | 𝒳^L = y]`, where `𝒳^L` picks
//! the ascending survivors at positions `L` (or the cemetery when there are
//! too few) and `q^L` is its density.

use serde::Serialize;

use super::density::{DensityEstimate, DensityKind, Sector, Window};
use super::mc::MCEstimate;
use super::Simulation;
use crate::coalesce::{CoalescedBundle, IndexSet};
use crate::error::{config, Error, Result};
use crate::girsanov::flow_logweight;
use crate::paths::{sample_drifted_flow, DriftSpec};
use crate::reduce::{replicate, Collect, MeanAccumulator};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// `𝒳^L`: selected survivors, or the cemetery state.
#[derive(Debug, Clone, PartialEq)]
pub enum QLSample<F> {
    Point(Vec<F>),
    Cemetery,
}

/// Survivors at the 0-based positions `l` of the ascending survivor list.
pub fn ql_sample<F: Scalar>(cb: &CoalescedBundle<F>, l: &IndexSet) -> QLSample<F> {
    let vals = cb.survivor_values();
    match l.max() {
        Some(top) if top < vals.len() => QLSample::Point(l.iter().map(|i| vals[i]).collect()),
        _ => QLSample::Cemetery,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// `2.345 · min(sd, IQR/1.349) · N^{−1/(d+4)}` per axis.
    Silverman,
    Fixed(f64),
}

/// Per-subset diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetSummary {
    /// 0-based survivor positions.
    pub positions: Vec<usize>,
    /// Fraction of replicas outside the cemetery (the mass of `q̂^L`).
    pub mass: MCEstimate,
    pub bandwidth: Vec<f64>,
    /// Every replica was in the cemetery; the subset contributes 0.
    pub all_cemetery: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm4Report {
    /// `Σ_L q̂^L · Ê^L` at the bin midpoints.
    pub estimate: DensityEstimate,
    /// `Σ_L q̂^L` at the bin midpoints.
    pub q_sum: DensityEstimate,
    pub subsets: Vec<SubsetSummary>,
}

/// Epanechnikov product kernel.
#[inline]
fn kernel(y: &[f64], x: &[f64], h: &[f64]) -> f64 {
    let mut k = 1.0;
    for ((y, x), h) in y.iter().zip(x).zip(h) {
        let t = (y - x) / h;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        k *= 0.75 * (1.0 - t * t) / h;
    }
    k
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let x = p * (sorted.len() - 1) as f64;
    let i = x.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (x - i as f64) * (sorted[j] - sorted[i])
}

fn silverman(col: &mut [f64], dim: usize) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    col.sort_by(f64::total_cmp);
    let iqr = quantile(col, 0.75) - quantile(col, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    2.345 * spread * n.powf(-1.0 / (dim as f64 + 4.0))
}

/// Kernel estimate at the midpoints of `window` (dimension `k`), from
/// driftless replicas reweighted by the flow exponential. Standard errors
/// come from `batches` contiguous replica batches.
pub fn density_thm4<F: Scalar>(
    sim: &Simulation<F>,
    k: usize,
    drift: &DriftSpec,
    window: &Window,
    bandwidth: Bandwidth,
    batches: usize,
) -> Result<Thm4Report> {
    drift.validate()?;
    let n = sim.n();
    if k == 0 || k > n {
        return config(format!("tuple size k = {k} outside 1..={n}"));
    }
    if window.dim() != k {
        return Err(Error::Dimension { expected: k, got: window.dim() });
    }
    if let Bandwidth::Fixed(h) = bandwidth {
        if !(h > 0.0 && h.is_finite()) {
            return config(format!("bandwidth must be positive, got {h}"));
        }
    }
    if batches < 2 || batches > sim.replicas {
        return config(format!("need 2 ≤ batches ≤ replicas, got {batches}"));
    }
    let replicas = sim.replicas;
    let samples = replicate(replicas, Collect::default, |acc, r| {
        let mut rng = RngStream::replica(sim.seed, r);
        let cb = sample_drifted_flow(&sim.grid, &sim.u, &DriftSpec::Zero, &mut rng)
            .expect("validated setup");
        let w = flow_logweight(&cb, drift).total().as_f64().exp();
        let vals: Vec<f64> = cb.survivor_values().iter().map(|v| v.as_f64()).collect();
        acc.0.push((vals, w));
    });
    let samples = samples.0;

    let points: Vec<Vec<f64>> = (0..window.total_bins()).map(|b| window.midpoint(b)).collect();
    let p = points.len();
    let batch_of = |r: usize| r * batches / replicas;
    let batch_sizes: Vec<f64> = {
        let mut c = vec![0.0; batches];
        for r in 0..replicas {
            c[batch_of(r)] += 1.0;
        }
        c
    };
    // per batch and point: Σ_L q̂·Ê and Σ_L q̂
    let mut est_b = vec![vec![0.0; p]; batches];
    let mut q_b = vec![vec![0.0; p]; batches];
    let mut est = vec![0.0; p];
    let mut q_tot = vec![0.0; p];
    let mut counts = vec![0u64; p];
    let mut subsets = Vec::new();

    for l in IndexSet::subsets(n, k) {
        let top = l.max().expect("nonempty");
        let mut mass = MeanAccumulator::default();
        let mut xs: Vec<(usize, Vec<f64>, f64)> = Vec::new();
        for (r, (vals, w)) in samples.iter().enumerate() {
            let alive = top < vals.len();
            mass.push(if alive { 1.0 } else { 0.0 });
            if alive {
                xs.push((r, l.iter().map(|i| vals[i]).collect(), *w));
            }
        }
        let all_cemetery = xs.is_empty();
        let h: Vec<f64> = match bandwidth {
            Bandwidth::Fixed(h) => vec![h; k],
            Bandwidth::Silverman if xs.len() >= 2 => (0..k)
                .map(|a| {
                    let mut col: Vec<f64> = xs.iter().map(|x| x.1[a]).collect();
                    silverman(&mut col, k)
                })
                .collect(),
            Bandwidth::Silverman => vec![f64::NAN; k],
        };
        let usable = !all_cemetery && h.iter().all(|h| *h > 0.0 && h.is_finite());
        if usable {
            let mut qs = vec![vec![0.0; p]; batches];
            let mut nums = vec![vec![0.0; p]; batches];
            for (r, x, w) in &xs {
                let b = batch_of(*r);
                for (j, y) in points.iter().enumerate() {
                    let kv = kernel(y, x, &h);
                    if kv > 0.0 {
                        qs[b][j] += kv;
                        nums[b][j] += kv * w;
                        counts[j] += 1;
                    }
                }
            }
            for j in 0..p {
                let q: f64 = qs.iter().map(|v| v[j]).sum::<f64>() / replicas as f64;
                let num: f64 = nums.iter().map(|v| v[j]).sum::<f64>() / replicas as f64;
                if q > 0.0 {
                    est[j] += q * (num / q);
                    q_tot[j] += q;
                }
                for b in 0..batches {
                    let qb = qs[b][j] / batch_sizes[b];
                    let nb = nums[b][j] / batch_sizes[b];
                    if qb > 0.0 {
                        est_b[b][j] += qb * (nb / qb);
                        q_b[b][j] += qb;
                    }
                }
            }
        }
        subsets.push(SubsetSummary {
            positions: l.as_slice().to_vec(),
            mass: MCEstimate::from_accumulator(&mass),
            bandwidth: h,
            all_cemetery,
        });
    }

    let batch_se = |per_batch: &[Vec<f64>], j: usize| {
        let bn = batches as f64;
        let m = per_batch.iter().map(|v| v[j]).sum::<f64>() / bn;
        let var = per_batch.iter().map(|v| (v[j] - m).powi(2)).sum::<f64>() / (bn - 1.0);
        (var / bn).sqrt()
    };
    let ess = {
        let (s, q) = samples.iter().fold((0.0, 0.0), |(s, q), (_, w)| (s + w, q + w * w));
        if q > 0.0 { s * s / q } else { 0.0 }
    };
    let make = |values: Vec<f64>, per_batch: &[Vec<f64>]| {
        let stderr: Vec<f64> = (0..p).map(|j| batch_se(per_batch, j)).collect();
        let vol = window.bin_volume();
        let mass_se = vol * stderr.iter().map(|s| s * s).sum::<f64>().sqrt();
        DensityEstimate {
            window: window.clone(),
            mass: MCEstimate::from_moments(
                values.iter().sum::<f64>() * vol,
                mass_se,
                replicas as u64,
                ess,
            ),
            values,
            stderr,
            counts: counts.clone(),
            replicas: replicas as u64,
            ess,
            sector: Sector::Ordered,
            kind: DensityKind::Midpoint,
        }
    };
    Ok(Thm4Report { estimate: make(est, &est_b), q_sum: make(q_tot, &q_b), subsets })
}
