//! Gaussian-kernel representation of `p^{s,j}`: for `y` in the ordered
//! sector,
//! `p^{s,j}(y) = Σ_L g^j_T(u^{I,L}; y) · E[1(S(η^{u,z})=s) 𝔢^a(u,z,s)]`
//! with `z^{I,L} = y` and the other coordinates of `z` Gaussian around `u`.

use serde::{Deserialize, Serialize};

use super::density::{DensityEstimate, DensityKind, Sector, Window};
use super::mc::MCEstimate;
use super::identity::{bridge_functional, BridgeOptions};
use super::{gaussian_density, Simulation};
use crate::coalesce::{scatter, scheme_replay, slice, IndexSet, Scheme, SliceMode};
use crate::error::{config, Error, Result};
use crate::paths::{pin, sample_bridge, DriftSpec};
use crate::reduce::{replicate, MeanAccumulator};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Placement of the outer evaluation points inside a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Uniform in the bin: the estimate is the bin average.
    #[default]
    Uniform,
    /// The bin midpoint.
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thm2Options {
    /// Outer draws per bin.
    pub outer: usize,
    /// Independent bridges per outer draw.
    pub inner: usize,
    pub quadrature: Quadrature,
    pub bridge: BridgeOptions,
}

impl Default for Thm2Options {
    fn default() -> Self {
        Self { outer: 256, inner: 64, quadrature: Quadrature::Uniform, bridge: BridgeOptions::default() }
    }
}

/// Nested Monte Carlo evaluation of the representation on every bin of
/// `window`. `sim.replicas` is ignored; the outer and inner counts come from
/// `opts`.
pub fn density_thm2<F: Scalar>(
    sim: &Simulation<F>,
    s: &Scheme,
    j: usize,
    drift: &DriftSpec,
    window: &Window,
    opts: Thm2Options,
) -> Result<DensityEstimate> {
    drift.validate()?;
    let n = sim.n();
    let replay = scheme_replay(n, s)?;
    let k = s.survivors();
    if j == 0 || j > k {
        return config(format!("cannot select {j} of the {k} survivors of {s}"));
    }
    if window.dim() != j {
        return Err(Error::Dimension { expected: j, got: window.dim() });
    }
    if opts.outer == 0 || opts.inner == 0 {
        return config("outer and inner draw counts must be positive");
    }
    let survivors = replay.survivors().clone();
    let others = survivors.complement(n);
    let u64s: Vec<f64> = sim.u.iter().map(|x| x.as_f64()).collect();
    let u_survivors = slice(&u64s, &survivors, SliceMode::Keep)?;
    let u_others = slice(&u64s, &others, SliceMode::Keep)?;
    let selections = IndexSet::subsets(k, j);
    let t = sim.horizon();
    let sd = t.sqrt();
    let bins = window.total_bins();
    let draws = bins * opts.outer;

    let accs = replicate(
        draws,
        || vec![MeanAccumulator::default(); bins],
        |accs, d| {
            let bin = d / opts.outer;
            let mut rng = RngStream::replica(sim.seed, d);
            let lo = window.bin_lo(bin);
            let y: Vec<f64> = match opts.quadrature {
                Quadrature::Uniform => lo.iter().map(|v| v + window.delta() * rng.uniform()).collect(),
                Quadrature::Midpoint => lo.iter().map(|v| v + window.delta() / 2.0).collect(),
            };
            let mut value = 0.0;
            if y.windows(2).all(|w| w[0] < w[1]) {
                for sel in &selections {
                    let rest = sel.complement(k);
                    let u_sel = slice(&u_survivors, sel, SliceMode::Keep).expect("in range");
                    let g = gaussian_density(&u_sel, t, &y).expect("positive horizon");
                    let u_rest = slice(&u_survivors, &rest, SliceMode::Keep).expect("in range");
                    let z_rest: Vec<f64> = u_rest.iter().map(|m| m + sd * rng.normal::<f64>()).collect();
                    let z_others: Vec<f64> =
                        u_others.iter().map(|m| m + sd * rng.normal::<f64>()).collect();
                    let z_surv = scatter(k, &[(sel, &y), (&rest, &z_rest)]).expect("partition");
                    let z64 = scatter(n, &[(&survivors, &z_surv), (&others, &z_others)])
                        .expect("partition");
                    let z: Vec<F> = z64.iter().map(|&v| F::lit(v)).collect();
                    let mut inner = 0.0;
                    for i in 0..opts.inner {
                        let mut irng = rng.child(i as u64);
                        let b = sample_bridge(&sim.grid, n, opts.bridge.mode, &mut irng)
                            .expect("validated grid");
                        let pb = pin(&b, &sim.u, &z).expect("validated start");
                        inner += bridge_functional(&pb, &replay, s, drift, opts.bridge)
                            .expect("validated cutoffs");
                    }
                    value += g * inner / opts.inner as f64;
                }
            }
            accs[bin].push(value);
        },
    );
    let vol = window.bin_volume();
    let values: Vec<f64> = accs.iter().map(MeanAccumulator::mean).collect();
    let stderr: Vec<f64> = accs.iter().map(MeanAccumulator::stderr).collect();
    let mass_se = vol * stderr.iter().map(|s| s * s).sum::<f64>().sqrt();
    let o = opts.outer as f64;
    Ok(DensityEstimate {
        window: window.clone(),
        mass: MCEstimate::from_moments(values.iter().sum::<f64>() * vol, mass_se, opts.outer as u64, o),
        values,
        stderr,
        counts: vec![opts.outer as u64; bins],
        replicas: opts.outer as u64,
        ess: o,
        sector: Sector::Ordered,
        kind: match opts.quadrature {
            Quadrature::Uniform => DensityKind::BinAverage,
            Quadrature::Midpoint => DensityKind::Midpoint,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_grid(horizon: f64, steps: usize) -> crate::Result<crate::paths::TimeGrid<f64>> {
        crate::paths::make_grid(horizon, steps)
    }
    
    #[test]
    fn zero_drift_no_collision_bounded_by_gaussian() {
        let g = make_grid(1.0, 64).unwrap();
        let sim = Simulation::new(g, vec![0.0, 0.2], 1, 9).unwrap();
        let w = Window::cube(2, -1.0, 1.0, 0.5).unwrap();
        let opts = Thm2Options { outer: 4, inner: 8, quadrature: Quadrature::Midpoint, ..Default::default() };
        let est = density_thm2(&sim, &Scheme::empty(2), 2, &DriftSpec::Zero, &w, opts).unwrap();
        for b in 0..w.total_bins() {
            let y = w.midpoint(b);
            let bound = if y[0] < y[1] { gaussian_density(&[0.0, 0.2], 1.0, &y).unwrap() } else { 0.0 };
            assert!(est.values[b] <= bound + 1e-15, "bin {b}: {} > {bound}", est.values[b]);
            assert!(est.values[b] >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_selection() {
        let g = make_grid(1.0, 8).unwrap();
        let sim = Simulation::new(g, vec![0.0, 0.2], 1, 9).unwrap();
        let w1 = Window::cube(1, -1.0, 1.0, 0.5).unwrap();
        let s = Scheme::new(2, vec![1]).unwrap();
        assert!(density_thm2(&sim, &s, 2, &DriftSpec::Zero, &w1, Default::default()).is_err());
        assert!(density_thm2(&sim, &s, 0, &DriftSpec::Zero, &w1, Default::default()).is_err());
        let w2 = Window::cube(2, -1.0, 1.0, 0.5).unwrap();
        assert!(density_thm2(&sim, &Scheme::empty(2), 1, &DriftSpec::Zero, &w2, Default::default()).is_err());
    }
}
