use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coalesce::Scheme;
use crate::error::{config, Error, Result};
use crate::estimators::{CutoffSource, Quadrature, Sector};
use crate::girsanov::{SignConvention, WeightForm};
use crate::paths::{BridgeMode, DriftSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Schemes,
    BridgeCheck,
    Coalprob,
    Thm1,
    Thm2,
    Thm4,
    Lemma7,
    Lemma8,
    Thm3,
    Density,
    Lemma5,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Schemes => "schemes",
            Experiment::BridgeCheck => "bridge-check",
            Experiment::Coalprob => "coalprob",
            Experiment::Thm1 => "thm1",
            Experiment::Thm2 => "thm2",
            Experiment::Thm4 => "thm4",
            Experiment::Lemma7 => "lemma7",
            Experiment::Lemma8 => "lemma8",
            Experiment::Thm3 => "thm3",
            Experiment::Density => "density",
            Experiment::Lemma5 => "lemma5",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct W {
            e: Experiment,
        }
        toml::from_str::<W>(&format!("e = \"{s}\""))
            .map(|w| w.e)
            .map_err(|_| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Flat experiment configuration. Every key has a default except
/// `experiment`; keys an experiment does not use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    /// Point count, for `schemes`.
    pub n: Option<usize>,
    /// Starting points, strictly increasing.
    pub u: Vec<f64>,
    /// Nested starting configurations, for `thm3`.
    pub nested: Vec<Vec<f64>>,
    /// Terminal points, for `thm1` and `lemma5`.
    pub y: Vec<f64>,
    /// Scheme in `n:k:j1,…,jk` form.
    pub scheme: Option<Scheme>,
    /// Tuple size (`j` for a scheme target, `k` otherwise).
    pub k: Option<usize>,
    pub horizon: f64,
    pub steps: usize,
    pub drift: DriftSpec,
    pub replicas: usize,
    pub seed: u64,
    pub window_lo: Option<f64>,
    pub window_hi: Option<f64>,
    pub delta: f64,
    /// Conditioning bin halfwidth; `0.05 √T` when absent.
    pub h: Option<f64>,
    /// Kernel bandwidth; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
    pub batches: usize,
    /// Cross-estimator tolerance multiplier.
    pub kappa: f64,
    /// Tolerance multiplier against closed forms.
    pub oracle_kappa: f64,
    /// Coarsening factors for grid-bias estimates, starting with 1.
    pub levels: Vec<usize>,
    pub outer: usize,
    pub inner: usize,
    pub quadrature: Quadrature,
    pub sector: Sector,
    pub bridge_mode: BridgeMode,
    pub weight_form: WeightForm,
    pub sign: SignConvention,
    pub cutoffs: CutoffSource,
    /// Moment order, for `lemma5`.
    pub p: f64,
    /// Size of the embedded configuration, for `lemma8`.
    pub n_small: usize,
    /// Conditioning bins with fewer replicas are not compared.
    pub min_bin_count: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            n: None,
            u: Vec::new(),
            nested: Vec::new(),
            y: Vec::new(),
            scheme: None,
            k: None,
            horizon: 1.0,
            steps: 1024,
            drift: DriftSpec::Zero,
            replicas: 100_000,
            seed: 1,
            window_lo: None,
            window_hi: None,
            delta: 0.25,
            h: None,
            bandwidth: None,
            batches: 32,
            kappa: 4.0,
            oracle_kappa: 3.0,
            levels: vec![1, 2, 4],
            outer: 256,
            inner: 64,
            quadrature: Quadrature::Uniform,
            sector: Sector::Ordered,
            bridge_mode: BridgeMode::ConditionedIncrement,
            weight_form: WeightForm::Cancelled,
            sign: SignConvention::Plus,
            cutoffs: CutoffSource::Events,
            p: 1.0,
            n_small: 1,
            min_bin_count: 30,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        self.experiment.ok_or_else(|| Error::Config("no experiment selected".into()))
    }

    pub fn bin_halfwidth(&self) -> f64 {
        self.h.unwrap_or(0.05 * self.horizon.sqrt())
    }

    /// Checks the keys shared by all experiments.
    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.steps < 2 {
            return config(format!("need at least 2 steps, got {}", self.steps));
        }
        if self.replicas == 0 {
            return config("replicas must be positive");
        }
        if !(self.kappa > 0.0 && self.oracle_kappa > 0.0) {
            return config("tolerance multipliers must be positive");
        }
        if !(self.delta > 0.0) {
            return config(format!("bin width must be positive, got {}", self.delta));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return config(format!("bin halfwidth must be positive, got {h}"));
            }
        }
        self.drift.validate()
    }

    /// `[window_lo, window_hi)` or the given fallback.
    pub fn window_bounds(&self, fallback: (f64, f64)) -> (f64, f64) {
        (self.window_lo.unwrap_or(fallback.0), self.window_hi.unwrap_or(fallback.1))
    }

    pub fn need_u(&self, min: usize) -> Result<&[f64]> {
        if self.u.len() < min {
            return config(format!("`u` needs at least {min} points, got {}", self.u.len()));
        }
        Ok(&self.u)
    }

    pub fn need_scheme(&self) -> Result<&Scheme> {
        self.scheme.as_ref().ok_or_else(|| Error::Config("`scheme` is required".into()))
    }

    pub fn need_k(&self) -> Result<usize> {
        self.k.ok_or_else(|| Error::Config("`k` is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig {
            experiment: Some(Experiment::BridgeCheck),
            u: vec![0.0, 0.3],
            y: vec![0.1, 1.0 / 3.0],
            scheme: Some("2:1:1".parse().unwrap()),
            drift: DriftSpec::tanh(1.0, 0.5),
            nested: vec![vec![0.0, 1.0], vec![0.0, 0.5, 1.0]],
            h: Some(0.05),
            ..Default::default()
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn flat_file() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"coalprob\"\nu = [0.0, 1.0]\nsteps = 4096\ndrift = \"constant:0.5\"\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, Some(Experiment::Coalprob));
        assert_eq!(cfg.steps, 4096);
        assert_eq!(cfg.drift, DriftSpec::constant(0.5));
        assert_eq!(cfg.replicas, 100_000);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ExperimentConfig::from_toml("experiment = \"thm9\"").is_err());
        assert!(ExperimentConfig::from_toml("stepz = 3").is_err());
        assert!(ExperimentConfig::from_toml("drift = \"cubic:1\"").is_err());
        let cfg = ExperimentConfig::from_toml("experiment = \"thm1\"\nhorizon = -1.0").unwrap();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_err());
    }

    #[test]
    fn experiment_names() {
        for e in ["schemes", "bridge-check", "coalprob", "thm1", "thm2", "thm4", "lemma7", "lemma8", "thm3", "density", "lemma5"] {
            assert_eq!(e.parse::<Experiment>().unwrap().name(), e);
        }
    }
}
