//! Stochastic exponentials of the drifted n-point motion.
//!
//! Two forms are evaluated, both in the log domain with left-point sums:
//!
//! * the flow weight `log E^a_{T,n}(W, u)`: Itô sums of `a(u_k + w_k)`
//!   against the free increments of coordinate `k`, stopped at its
//!   absorption time `τ_k`;
//! * the bridge weight `log 𝔢^a_{T,n}(u, y, s)` of a pinned bundle, with
//!   per-coordinate cutoffs supplied by the coalescence scheme.

use serde::{Deserialize, Serialize};

use crate::coalesce::CoalescedBundle;
use crate::error::{config, Error, Result};
use crate::estimators::MCEstimate;
use crate::paths::{sample_bridge, BridgeMode, DriftSpec, PinnedBundle, TimeGrid};
use crate::reduce::{replicate, MeanAccumulator};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// `total = ito_term − quad_term / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LogWeight<F> {
    /// Sum of the stochastic integrals.
    pub ito_term: F,
    /// Sum of the `∫ a² dt` terms.
    pub quad_term: F,
}

impl<F: Scalar> LogWeight<F> {
    pub fn total(&self) -> F {
        self.ito_term - self.quad_term / F::lit(2.0)
    }

    pub fn weight(&self) -> F {
        self.total().exp()
    }

    pub fn is_finite(&self) -> bool {
        self.ito_term.is_finite() && self.quad_term.is_finite()
    }
}

/// Left-point Itô sum `Σ f(t_i) (g(t_{i+1}) − g(t_i))`.
pub fn ito_sum_left<F: Scalar>(integrand: &[F], increments: &[F]) -> Result<F> {
    if integrand.len() != increments.len() {
        return Err(Error::Dimension { expected: integrand.len(), got: increments.len() });
    }
    Ok(integrand.iter().zip(increments).map(|(&f, &dg)| f * dg).sum())
}

/// `log E^a_{T,n}(W, u)` on a bundle built from driftless paths.
pub fn flow_logweight<F: Scalar>(cb: &CoalescedBundle<F>, drift: &DriftSpec) -> LogWeight<F> {
    flow_logweight_prefix(cb, drift, cb.n())
}

/// Flow weight of the first `n` coordinates only. Coalescence among them
/// does not depend on coordinates `≥ n`, so this is the weight of the
/// `n`-point motion embedded in a larger one.
pub fn flow_logweight_prefix<F: Scalar>(
    cb: &CoalescedBundle<F>,
    drift: &DriftSpec,
    n: usize,
) -> LogWeight<F> {
    let mut w = LogWeight::default();
    if drift.is_zero() {
        return w;
    }
    let dt = cb.grid().dt();
    let free = cb.free();
    for k in 0..n.min(cb.n()) {
        let path = free.path(k);
        for i in 0..cb.absorption_node(k) {
            let a = drift.eval(path[i]);
            w.ito_term += a * (path[i + 1] - path[i]);
            w.quad_term += a * a * dt;
        }
    }
    w
}

/// How the bridge exponential is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightForm {
    /// `dβ = dη + η/(T−t) dt` substituted, the `η/(T−t)` terms cancelled.
    #[default]
    Cancelled,
    /// Separate `dβ` and `η/(T−t)` sums; the singular-adjacent last
    /// subinterval is left out of both drift-correction sums.
    Literal,
}

/// Sign of the bridge increment term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// `+ a Δη` with `η` the bridge used for pinning. On a fixed grid this is
    /// the exact image of the flow weight under `W = W(T)·t/T − (−η)`.
    #[default]
    Plus,
    Minus,
}

impl SignConvention {
    fn factor<F: Scalar>(self) -> F {
        match self {
            SignConvention::Plus => F::one(),
            SignConvention::Minus => -F::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BridgeWeightOptions {
    pub form: WeightForm,
    pub sign: SignConvention,
}

/// `log 𝔢^a_{T,n}(u, y, s)` for a pinned bundle; coordinate `k` contributes
/// on nodes `t_i < t_{cutoffs[k]}`.
pub fn bridge_logweight<F: Scalar>(
    pb: &PinnedBundle<F>,
    cutoffs: &[usize],
    drift: &DriftSpec,
    opts: BridgeWeightOptions,
) -> Result<LogWeight<F>> {
    let n = pb.n();
    let grid = pb.grid();
    let m = grid.steps();
    if cutoffs.len() != n {
        return Err(Error::Dimension { expected: n, got: cutoffs.len() });
    }
    if let Some(&c) = cutoffs.iter().find(|&&c| c > m) {
        return config(format!("cutoff node {c} beyond the last node {m}"));
    }
    let mut w = LogWeight::default();
    if drift.is_zero() {
        return Ok(w);
    }
    let dt = grid.dt();
    let horizon = grid.horizon();
    let sign: F = opts.sign.factor();
    for k in 0..n {
        let x = pb.path(k);
        let eta = pb.bridge(k);
        let slope = (pb.end()[k] - pb.start()[k]) / horizon;
        let stop = cutoffs[k];
        match opts.form {
            WeightForm::Cancelled => {
                for i in 0..stop {
                    let a = drift.eval(x[i]);
                    w.ito_term += a * sign * (eta[i + 1] - eta[i]) + a * slope * dt;
                    w.quad_term += a * a * dt;
                }
            }
            WeightForm::Literal => {
                let mut beta_sum = F::zero();
                let mut singular_sum = F::zero();
                let mut slope_sum = F::zero();
                for i in 0..stop {
                    let a = drift.eval(x[i]);
                    let zeta = sign * eta[i];
                    let pull = if i + 1 < m {
                        zeta / (horizon - grid.node(i)) * dt
                    } else {
                        F::zero()
                    };
                    let d_beta = sign * (eta[i + 1] - eta[i]) + pull;
                    beta_sum += a * d_beta;
                    singular_sum += a * pull;
                    slope_sum += a * slope * dt;
                    w.quad_term += a * a * dt;
                }
                w.ito_term += beta_sum + slope_sum - singular_sum;
            }
        }
    }
    Ok(w)
}

/// Maps cutoff times to node indices; fails unless every time is a grid
/// node (to within `1e-9` of a step).
pub fn cutoff_nodes<F: Scalar>(grid: &TimeGrid<F>, times: &[F]) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let x = (t / grid.dt()).as_f64();
            let i = x.round();
            if (x - i).abs() > 1e-9 || i < 0.0 || i as usize > grid.steps() {
                config(format!("cutoff time {t} is not a grid node"))
            } else {
                Ok(i as usize)
            }
        })
        .collect()
}

/// Constants of the moment bound `E 𝔢^p ≤ C₁ exp(C₂ ‖y‖)`.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma5Constants {
    pub c2: f64,
    /// Point estimate of `C₁`.
    pub c1: f64,
    /// Deterministic factor `exp(n p |2p−1| T ‖a‖² + p √n ‖u‖ ‖a‖)`.
    pub prefactor: f64,
    /// `E exp(2 p ‖a‖ ∫ |η₁(t)| / (T − t) dt)`, last node excluded.
    pub bridge_moment: MCEstimate,
}

pub fn lemma5_constants<F: Scalar>(
    u: &[F],
    p: f64,
    drift: &DriftSpec,
    grid: &TimeGrid<F>,
    replicas: usize,
    seed: u64,
) -> Result<Lemma5Constants> {
    if !(p >= 0.0) {
        return config(format!("moment order must be nonnegative, got {p}"));
    }
    let n = u.len() as f64;
    let sup = drift.sup_norm();
    let horizon = grid.horizon().as_f64();
    let u_norm = u.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
    let c2 = p * n.sqrt() * sup;
    let prefactor =
        (n * p * (2.0 * p - 1.0).abs() * horizon * sup * sup + p * n.sqrt() * u_norm * sup).exp();
    let rate = 2.0 * p * sup;
    let acc = replicate(replicas, MeanAccumulator::default, |acc, r| {
        if rate == 0.0 {
            acc.push(1.0);
            return;
        }
        let mut rng = RngStream::replica(seed, r);
        let b = sample_bridge(grid, 1, BridgeMode::ConditionedIncrement, &mut rng)
            .expect("validated grid");
        let eta = b.path(0);
        let dt = grid.dt();
        let hz = grid.horizon();
        let integral: F = (0..grid.steps())
            .map(|i| eta[i].abs() / (hz - grid.node(i)) * dt)
            .sum();
        acc.push((rate * integral.as_f64()).exp());
    });
    let bridge_moment = MCEstimate::from_accumulator(&acc);
    let c1 = prefactor * bridge_moment.mean.powf(n / 2.0);
    Ok(Lemma5Constants { c2, c1, prefactor, bridge_moment })
}
