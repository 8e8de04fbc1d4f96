//! Both sides of the conditional identity
//! `E[1(S(W+u)=s) E^a(W,u) | W(T) = y − u] = E[1(S(η^{u,y})=s) 𝔢^a(u,y,s)]`.

use serde::{Deserialize, Serialize};

use super::checks::{finish_levels, level_accumulators, level_steps, push_levels, LevelEstimates};
use super::mc::MCEstimate;
use super::Simulation;
use crate::coalesce::{
    coalesce_bundle, coalesce_wiener, extract_scheme, pairwise_meeting_times, scheme_replay,
    Scheme, SchemeReplay,
};
use crate::error::{config, Error, Result};
use crate::girsanov::{bridge_logweight, flow_logweight, BridgeWeightOptions, LogWeight};
use crate::paths::{pin, sample_bridge, sample_wiener, BridgeMode, DriftSpec, FreePaths, PinnedBundle};
use crate::reduce::{replicate, MeanAccumulator};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Where the per-coordinate cutoffs of the bridge exponential come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffSource {
    /// Nodes of the observed merge events (valid on `{S = s}`).
    #[default]
    Events,
    /// Pairwise meeting times of the scheme's meeting pairs.
    Meetings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BridgeOptions {
    pub weight: BridgeWeightOptions,
    pub mode: BridgeMode,
    pub cutoffs: CutoffSource,
}

/// `log 𝔢^a(u, y, s)` with cutoffs from pairwise meeting times; defined
/// whether or not the bundle realizes `s`.
pub fn bridge_exponential<F: Scalar>(
    pb: &PinnedBundle<F>,
    replay: &SchemeReplay,
    drift: &DriftSpec,
    weight: BridgeWeightOptions,
) -> Result<LogWeight<F>> {
    let meetings = pairwise_meeting_times(&FreePaths::from_pinned(pb));
    bridge_logweight(pb, &replay.cutoffs_from_meetings(&meetings), drift, weight)
}

/// `1(S(η^{u,y}) = s) · 𝔢^a(u, y, s)` for one pinned bundle.
pub fn bridge_functional<F: Scalar>(
    pb: &PinnedBundle<F>,
    replay: &SchemeReplay,
    scheme: &Scheme,
    drift: &DriftSpec,
    opts: BridgeOptions,
) -> Result<f64> {
    let cb = coalesce_bundle(FreePaths::from_pinned(pb))?;
    if &extract_scheme(&cb) != scheme {
        return Ok(0.0);
    }
    let cutoffs = match opts.cutoffs {
        CutoffSource::Events => {
            let nodes: Vec<usize> = cb.events().iter().map(|e| e.node).collect();
            replay.cutoffs_from_event_nodes(&nodes, pb.grid().steps())
        }
        CutoffSource::Meetings => replay.cutoffs_from_meetings(&pairwise_meeting_times(cb.free())),
    };
    let lw = bridge_logweight(pb, &cutoffs, drift, opts.weight)?;
    Ok(lw.total().as_f64().exp())
}

fn check_endpoint<F: Scalar>(sim: &Simulation<F>, y: &[F], s: &Scheme) -> Result<SchemeReplay> {
    if y.len() != sim.n() {
        return Err(Error::Dimension { expected: sim.n(), got: y.len() });
    }
    scheme_replay(sim.n(), s)
}

/// Average of `1(S(η^{u,y}) = s) · 𝔢^a(u, y, s)` over pinned bridges.
pub fn thm1_rhs<F: Scalar>(
    sim: &Simulation<F>,
    y: &[F],
    s: &Scheme,
    drift: &DriftSpec,
    opts: BridgeOptions,
) -> Result<MCEstimate> {
    Ok(*thm1_rhs_levels(sim, y, s, drift, opts, &[1])?.finest())
}

/// The right-hand side on the simulation grid coarsened by each of
/// `factors`, all levels evaluated on the same fine bridges.
pub fn thm1_rhs_levels<F: Scalar>(
    sim: &Simulation<F>,
    y: &[F],
    s: &Scheme,
    drift: &DriftSpec,
    opts: BridgeOptions,
    factors: &[usize],
) -> Result<LevelEstimates> {
    drift.validate()?;
    let replay = check_endpoint(sim, y, s)?;
    let steps = level_steps(&sim.grid, factors)?;
    let n = sim.n();
    let acc = replicate(
        sim.replicas,
        || level_accumulators(factors.len()),
        |acc, r| {
            let mut rng = RngStream::replica(sim.seed, r);
            let fine = sample_bridge(&sim.grid, n, opts.mode, &mut rng).expect("validated grid");
            let mut values = vec![0.0; factors.len()];
            for (v, &f) in values.iter_mut().zip(factors) {
                let coarse;
                let b = if f == 1 {
                    &fine
                } else {
                    coarse = fine.subsample(f).expect("validated factor");
                    &coarse
                };
                let pb = pin(b, &sim.u, y).expect("validated endpoints");
                *v = bridge_functional(&pb, &replay, s, drift, opts).expect("validated cutoffs");
            }
            push_levels(acc, &values);
        },
    );
    Ok(finish_levels(steps, &acc))
}

/// A conditional mean estimated on the replicas whose conditioning
/// variable fell into a bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalEstimate {
    /// `None` when no replica was retained.
    pub estimate: Option<MCEstimate>,
    pub retained: u64,
    pub replicas: u64,
}

impl ConditionalEstimate {
    pub fn is_empty(&self) -> bool {
        self.estimate.is_none()
    }
}

/// Left-hand side: driftless Wiener replicas with
/// `‖W(T) − (y − u)‖_∞ ≤ h`, averaging `1(S(W+u) = s) · E^a(W, u)`.
pub fn thm1_lhs_binned<F: Scalar>(
    sim: &Simulation<F>,
    y: &[F],
    s: &Scheme,
    drift: &DriftSpec,
    h: f64,
) -> Result<ConditionalEstimate> {
    Ok(thm1_lhs_binned_multi(sim, &[(y.to_vec(), s.clone())], drift, h)?.remove(0))
}

/// Several `(y, s)` targets evaluated on one set of Wiener replicas.
pub fn thm1_lhs_binned_multi<F: Scalar>(
    sim: &Simulation<F>,
    targets: &[(Vec<F>, Scheme)],
    drift: &DriftSpec,
    h: f64,
) -> Result<Vec<ConditionalEstimate>> {
    drift.validate()?;
    if !(h > 0.0) {
        return config(format!("bin halfwidth must be positive, got {h}"));
    }
    for (y, s) in targets {
        check_endpoint(sim, y, s)?;
    }
    let n = sim.n();
    let shifts: Vec<Vec<f64>> = targets
        .iter()
        .map(|(y, _)| y.iter().zip(&sim.u).map(|(y, u)| (*y - *u).as_f64()).collect())
        .collect();
    let accs = replicate(
        sim.replicas,
        || vec![MeanAccumulator::default(); targets.len()],
        |accs, r| {
            let mut rng = RngStream::replica(sim.seed, r);
            let w = sample_wiener(&sim.grid, n, &mut rng).expect("validated grid");
            let ends: Vec<f64> = w.terminals().iter().map(|x| x.as_f64()).collect();
            let hits: Vec<bool> = shifts
                .iter()
                .map(|d| d.iter().zip(&ends).all(|(d, e)| (e - d).abs() <= h))
                .collect();
            if !hits.contains(&true) {
                return;
            }
            let cb = coalesce_wiener(&w, &sim.u).expect("validated start");
            let scheme = extract_scheme(&cb);
            let weight = flow_logweight(&cb, drift).total().as_f64().exp();
            for ((acc, hit), (_, s)) in accs.iter_mut().zip(&hits).zip(targets) {
                if *hit {
                    acc.push(if &scheme == s { weight } else { 0.0 });
                }
            }
        },
    );
    Ok(accs
        .iter()
        .map(|a| ConditionalEstimate {
            estimate: (a.count > 0).then(|| MCEstimate::from_accumulator(a)),
            retained: a.count,
            replicas: sim.replicas as u64,
        })
        .collect())
}
