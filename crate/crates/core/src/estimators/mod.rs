//! Monte Carlo estimators of the conditional identities and point densities.
//!
//! Every estimator takes a [`Simulation`] (grid, starting points, replica
//! count, seed). Replica `r` always draws from stream `r` of the seed, so two
//! estimators run with the same simulation see the same noise.

mod checks;
mod density;
mod identity;
mod kernel;
mod mc;
mod representation;

pub use checks::{
    bridge_mode_ks, bridge_moments, coalescence_oracle, coalescence_probability, lemma5_check,
    lemma6_mismatch, lemma7_check, lemma8_check, thm3_monotonicity, tie_frequency, BridgeMoments,
    CoalescenceReport, GridBias, KsRow, LevelEstimates, Lemma5Report, Lemma7Report, Lemma8Report,
    Thm3Report, TowerBin,
};
pub use density::{
    density_direct, density_from_flows, density_girsanov, DensityEstimate, DensityKind,
    DensityTarget, Sector, Window,
};
pub use identity::{
    bridge_functional, thm1_lhs_binned, thm1_lhs_binned_multi, thm1_rhs, thm1_rhs_levels,
    BridgeOptions, ConditionalEstimate, CutoffSource,
};
pub use kernel::{density_thm4, ql_sample, Bandwidth, QLSample, SubsetSummary, Thm4Report};
pub use mc::{MCEstimate, WeightStats};
pub use representation::{density_thm2, Quadrature, Thm2Options};

use crate::error::{config, Error, Result};
use crate::paths::{check_ordered, TimeGrid};
use crate::scalar::Scalar;

/// Grid, starting points, replica count and seed of one estimator run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation<F> {
    pub grid: TimeGrid<F>,
    pub u: Vec<F>,
    pub replicas: usize,
    pub seed: u64,
}

impl<F: Scalar> Simulation<F> {
    pub fn new(grid: TimeGrid<F>, u: Vec<F>, replicas: usize, seed: u64) -> Result<Self> {
        check_ordered(&u)?;
        if replicas == 0 {
            return config("at least one replica is required");
        }
        Ok(Self { grid, u, replicas, seed })
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn with_grid(&self, grid: TimeGrid<F>) -> Self {
        Self { grid, ..self.clone() }
    }

    pub fn with_replicas(&self, replicas: usize) -> Self {
        Self { replicas, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon().as_f64()
    }
}

/// `g^m_T(u; z) = (2πT)^{−m/2} exp(−‖z − u‖² / (2T))`.
pub fn gaussian_density(center: &[f64], variance: f64, z: &[f64]) -> Result<f64> {
    if !(variance > 0.0) {
        return config(format!("variance must be positive, got {variance}"));
    }
    if center.len() != z.len() {
        return Err(Error::Dimension { expected: center.len(), got: z.len() });
    }
    let sq: f64 = center.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    let m = center.len() as f64;
    Ok((2.0 * std::f64::consts::PI * variance).powf(-m / 2.0) * (-sq / (2.0 * variance)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_grid(horizon: f64, steps: usize) -> crate::Result<crate::paths::TimeGrid<f64>> {
        crate::paths::make_grid(horizon, steps)
    }

    #[test]
    fn gaussian_peaks() {
        assert!((gaussian_density(&[0.0], 1.0, &[0.0]).unwrap() - 0.3989423).abs() < 1e-7);
        assert!((gaussian_density(&[0.0, 0.0], 1.0, &[0.0, 0.0]).unwrap() - 0.1591549).abs() < 1e-7);
        assert_eq!(gaussian_density(&[], 1.0, &[]).unwrap(), 1.0);
        assert!(gaussian_density(&[0.0], 0.0, &[0.0]).is_err());
        assert!(gaussian_density(&[0.0], 1.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn gaussian_symmetry() {
        let a = [0.3, -1.2, 2.0];
        let b = [1.1, 0.4, -0.7];
        let x = gaussian_density(&a, 0.7, &b).unwrap();
        let y = gaussian_density(&b, 0.7, &a).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn simulation_checks() {
        let g = make_grid(1.0, 4).unwrap();
        assert!(Simulation::new(g, vec![1.0, 0.0], 10, 0).is_err());
        assert!(Simulation::new(g, vec![0.0], 0, 0).is_err());
    }
}
