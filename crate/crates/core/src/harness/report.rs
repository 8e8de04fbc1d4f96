use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{DensityEstimate, MCEstimate};

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    CrossEstimator,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// The input carried no data (empty bin, nothing retained).
    Inconclusive,
}

/// A value entering a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub stderr: Option<f64>,
    /// Flagged as having no data behind it.
    pub empty: bool,
}

impl Quantity {
    /// A value without Monte Carlo error.
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: Some(0.0), empty: false }
    }

    pub fn empty() -> Self {
        Self { value: f64::NAN, stderr: None, empty: true }
    }

    pub fn bin(d: &DensityEstimate, b: usize) -> Self {
        Self { value: d.values[b], stderr: Some(d.stderr[b]), empty: d.is_empty_bin(b) }
    }
}

impl From<&MCEstimate> for Quantity {
    fn from(e: &MCEstimate) -> Self {
        Self { value: e.mean, stderr: Some(e.stderr), empty: e.replicas == 0 }
    }
}

impl From<Option<&MCEstimate>> for Quantity {
    fn from(e: Option<&MCEstimate>) -> Self {
        e.map_or_else(Quantity::empty, Quantity::from)
    }
}

/// Pass iff `|A − B| ≤ κ √(se_A² + se_B²) + allowance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceRule {
    pub kappa: f64,
    pub allowance: f64,
}

impl ToleranceRule {
    pub fn kappa(kappa: f64) -> Self {
        Self { kappa, allowance: 0.0 }
    }

    pub fn with_allowance(self, allowance: f64) -> Self {
        Self { allowance, ..self }
    }
}

impl Default for ToleranceRule {
    fn default() -> Self {
        Self::kappa(4.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub quantity: String,
    pub estimate: f64,
    pub stderr: f64,
    pub oracle: Option<f64>,
    pub oracle_stderr: Option<f64>,
    pub provenance: Provenance,
    /// Absolute tolerance the difference was held to, or the bound for
    /// one-sided checks.
    pub tolerance: f64,
    pub status: Status,
}

impl ReportRow {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

pub fn compare(
    experiment: &str,
    quantity: &str,
    a: Quantity,
    b: Quantity,
    provenance: Provenance,
    rule: ToleranceRule,
) -> Result<ReportRow> {
    let mut row = ReportRow {
        experiment: experiment.to_string(),
        quantity: quantity.to_string(),
        estimate: a.value,
        stderr: a.stderr.unwrap_or(f64::NAN),
        oracle: Some(b.value),
        oracle_stderr: b.stderr,
        provenance,
        tolerance: f64::NAN,
        status: Status::Inconclusive,
    };
    if a.empty || b.empty {
        return Ok(row);
    }
    let (sa, sb) = match (a.stderr, b.stderr) {
        (Some(sa), Some(sb)) => (sa, sb),
        _ => return Err(Error::MissingStderr(quantity.to_string())),
    };
    row.tolerance = rule.kappa * (sa * sa + sb * sb).sqrt() + rule.allowance;
    row.status = if (a.value - b.value).abs() <= row.tolerance { Status::Pass } else { Status::Fail };
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

/// A one-sided check of `value` against `limit`.
pub fn bound_row(
    experiment: &str,
    quantity: &str,
    value: f64,
    stderr: f64,
    bound: Bound,
    limit: f64,
    provenance: Provenance,
) -> ReportRow {
    let ok = match bound {
        Bound::AtMost => value <= limit,
        Bound::AtLeast => value >= limit,
    };
    ReportRow {
        experiment: experiment.to_string(),
        quantity: quantity.to_string(),
        estimate: value,
        stderr,
        oracle: Some(limit),
        oracle_stderr: None,
        provenance,
        tolerance: limit,
        status: if value.is_nan() {
            Status::Inconclusive
        } else if ok {
            Status::Pass
        } else {
            Status::Fail
        },
    }
}

/// Per-bin comparison of two density estimates on the same window.
#[derive(Debug, Clone, Serialize)]
pub struct DensityAgreement {
    /// `|A − B| − allowance` in combined standard errors, per bin; `None`
    /// for bins that are empty on one side, or exactly zero on both.
    pub z: Vec<Option<f64>>,
    pub compared: usize,
    pub within: usize,
    pub beyond_hard: usize,
    pub inconclusive: usize,
}

impl DensityAgreement {
    pub fn new(a: &DensityEstimate, b: &DensityEstimate, rule: ToleranceRule, hard_kappa: f64) -> Result<Self> {
        if a.window != b.window {
            return Err(Error::Config("density estimates live on different windows".into()));
        }
        let mut out = Self { z: Vec::with_capacity(a.len()), compared: 0, within: 0, beyond_hard: 0, inconclusive: 0 };
        for bin in 0..a.len() {
            if a.values[bin] == 0.0 && b.values[bin] == 0.0 {
                out.z.push(None);
                continue;
            }
            if a.is_empty_bin(bin) || b.is_empty_bin(bin) {
                out.inconclusive += 1;
                out.z.push(None);
                continue;
            }
            let se = (a.stderr[bin].powi(2) + b.stderr[bin].powi(2)).sqrt();
            let excess = ((a.values[bin] - b.values[bin]).abs() - rule.allowance).max(0.0);
            let z = if excess == 0.0 { 0.0 } else if se > 0.0 { excess / se } else { f64::INFINITY };
            out.compared += 1;
            if z <= rule.kappa {
                out.within += 1;
            }
            if z > hard_kappa {
                out.beyond_hard += 1;
            }
            out.z.push(Some(z));
        }
        Ok(out)
    }

    pub fn fraction_within(&self) -> f64 {
        if self.compared == 0 {
            f64::NAN
        } else {
            self.within as f64 / self.compared as f64
        }
    }

    /// Rows: at least `min_fraction` of compared bins within κ, and none
    /// beyond the hard multiplier.
    pub fn rows(&self, experiment: &str, label: &str, min_fraction: f64, provenance: Provenance) -> Vec<ReportRow> {
        let mut rows = vec![
            bound_row(
                experiment,
                &format!("{label}: fraction of bins within tolerance"),
                self.fraction_within(),
                0.0,
                Bound::AtLeast,
                min_fraction,
                provenance,
            ),
            bound_row(
                experiment,
                &format!("{label}: bins beyond hard tolerance"),
                if self.compared == 0 { f64::NAN } else { self.beyond_hard as f64 },
                0.0,
                Bound::AtMost,
                0.0,
                provenance,
            ),
        ];
        if self.inconclusive > 0 {
            rows.push(ReportRow {
                status: Status::Inconclusive,
                ..bound_row(
                    experiment,
                    &format!("{label}: bins empty on one side"),
                    self.inconclusive as f64,
                    0.0,
                    Bound::AtMost,
                    0.0,
                    provenance,
                )
            });
        }
        rows
    }
}
