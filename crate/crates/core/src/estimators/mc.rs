use serde::Serialize;

use crate::reduce::{MeanAccumulator, Merge};

/// Scalar Monte Carlo estimate. Serializes as `{mean, stderr, replicas, ess}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: u64,
    /// Kish effective sample size of the replica weights; equals
    /// `replicas` for unweighted estimates.
    pub ess: f64,
    #[serde(skip)]
    acc: MeanAccumulator,
}

impl MCEstimate {
    pub fn from_accumulator(acc: &MeanAccumulator) -> Self {
        Self::with_ess(acc, acc.count as f64)
    }

    pub fn with_ess(acc: &MeanAccumulator, ess: f64) -> Self {
        Self { mean: acc.mean(), stderr: acc.stderr(), replicas: acc.count, ess, acc: *acc }
    }

    /// An estimate known only through its summary statistics.
    pub fn from_moments(mean: f64, stderr: f64, replicas: u64, ess: f64) -> Self {
        let n = replicas as f64;
        let sum = mean * n;
        let sum_sq = stderr * stderr * n * (n - 1.0) + sum * mean;
        let acc = MeanAccumulator { count: replicas, sum, sum_sq };
        Self { mean, stderr, replicas, ess, acc }
    }

    /// Pools two estimates from disjoint replica sets; identical to running
    /// both sets through one accumulator in the same order.
    pub fn pooled(&self, other: &MCEstimate) -> MCEstimate {
        let mut acc = self.acc;
        acc.merge(other.acc);
        Self::with_ess(&acc, self.ess + other.ess)
    }

    pub fn accumulator(&self) -> &MeanAccumulator {
        &self.acc
    }
}

/// Kish effective sample size `(Σw)² / Σw²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightStats {
    pub sum: f64,
    pub sum_sq: f64,
}

impl WeightStats {
    #[inline]
    pub fn push(&mut self, w: f64) {
        self.sum += w;
        self.sum_sq += w * w;
    }

    pub fn ess(&self) -> f64 {
        if self.sum_sq > 0.0 {
            self.sum * self.sum / self.sum_sq
        } else {
            0.0
        }
    }
}

impl Merge for WeightStats {
    fn merge(&mut self, other: Self) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}
