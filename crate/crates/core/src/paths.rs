//! Discretized driving noise on a uniform time grid: Wiener paths, Brownian
//! bridges, pinned bridges, and free (drifted) Euler paths that feed the
//! coalescing construction.
//!
//! Every bundle stores its `n` coordinates row-major, `m + 1` nodes per
//! coordinate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coalesce::{coalesce_bundle, CoalescedBundle};
use crate::error::{config, domain, Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Uniform partition `t_i = i T / m` of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<F> {
    horizon: F,
    steps: usize,
}

impl<F: Scalar> TimeGrid<F> {
    pub fn new(horizon: F, steps: usize) -> Result<Self> {
        if !(horizon > F::zero()) || !horizon.is_finite() {
            return config(format!("horizon must be positive and finite, got {horizon}"));
        }
        if steps < 2 {
            return config(format!("grid needs at least 2 steps, got {steps}"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> F {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> F {
        self.horizon / F::from_count(self.steps)
    }

    /// `t_i / T`, exactly 0 and 1 at the ends.
    #[inline]
    pub fn fraction(&self, i: usize) -> F {
        if i >= self.steps {
            F::one()
        } else {
            F::from_count(i) / F::from_count(self.steps)
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> F {
        if i >= self.steps {
            self.horizon
        } else {
            self.horizon * self.fraction(i)
        }
    }

    pub fn nodes(&self) -> Vec<F> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    /// Grid keeping every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return config(format!("cannot coarsen {} steps by {factor}", self.steps));
        }
        Self::new(self.horizon, self.steps / factor)
    }

    /// Index of the first node at or after `t`.
    pub fn node_at_or_after(&self, t: F) -> usize {
        let x = (t / self.dt()).ceil();
        x.to_usize().unwrap_or(0).min(self.steps)
    }

    pub(crate) fn points(&self) -> usize {
        self.steps + 1
    }
}

/// Convenience constructor.
pub fn make_grid<F: Scalar>(horizon: F, steps: usize) -> Result<TimeGrid<F>> {
    TimeGrid::new(horizon, steps)
}

/// Closed registry of drift functions with analytically known sup-norm and
/// Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftSpec {
    Zero,
    Constant { value: f64 },
    /// `A tanh((x - offset) / scale)`
    Tanh { amplitude: f64, scale: f64, offset: f64 },
    /// `A sin(frequency x + phase)`
    Sine { amplitude: f64, frequency: f64, phase: f64 },
}

impl DriftSpec {
    pub fn constant(value: f64) -> Self {
        DriftSpec::Constant { value }
    }

    pub fn tanh(amplitude: f64, scale: f64) -> Self {
        DriftSpec::Tanh { amplitude, scale, offset: 0.0 }
    }

    pub fn sine(amplitude: f64) -> Self {
        DriftSpec::Sine { amplitude, frequency: 1.0, phase: 0.0 }
    }

    pub fn family(&self) -> &'static str {
        match self {
            DriftSpec::Zero => "zero",
            DriftSpec::Constant { .. } => "constant",
            DriftSpec::Tanh { .. } => "tanh",
            DriftSpec::Sine { .. } => "sine",
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            DriftSpec::Zero => true,
            DriftSpec::Constant { value } => value == 0.0,
            DriftSpec::Tanh { amplitude, .. } | DriftSpec::Sine { amplitude, .. } => {
                amplitude == 0.0
            }
        }
    }

    #[inline]
    pub fn eval<F: Scalar>(&self, x: F) -> F {
        match *self {
            DriftSpec::Zero => F::zero(),
            DriftSpec::Constant { value } => F::lit(value),
            DriftSpec::Tanh { amplitude, scale, offset } => {
                F::lit(amplitude) * ((x - F::lit(offset)) / F::lit(scale)).tanh()
            }
            DriftSpec::Sine { amplitude, frequency, phase } => {
                F::lit(amplitude) * (F::lit(frequency) * x + F::lit(phase)).sin()
            }
        }
    }

    /// Declared `‖a‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { value } => value.abs(),
            DriftSpec::Tanh { amplitude, .. } | DriftSpec::Sine { amplitude, .. } => {
                amplitude.abs()
            }
        }
    }

    /// Declared Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            DriftSpec::Zero | DriftSpec::Constant { .. } => 0.0,
            DriftSpec::Tanh { amplitude, scale, .. } => amplitude.abs() / scale.abs(),
            DriftSpec::Sine { amplitude, frequency, .. } => (amplitude * frequency).abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params: Vec<f64> = match *self {
            DriftSpec::Zero => vec![],
            DriftSpec::Constant { value } => vec![value],
            DriftSpec::Tanh { amplitude, scale, offset } => vec![amplitude, scale, offset],
            DriftSpec::Sine { amplitude, frequency, phase } => vec![amplitude, frequency, phase],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return config(format!("non-finite drift parameter in {self}"));
        }
        if let DriftSpec::Tanh { scale, .. } = self {
            if *scale <= 0.0 {
                return config("tanh drift needs a positive scale");
            }
        }
        Ok(())
    }

    /// Checks the declared bounds by evaluation on `points` equispaced
    /// abscissae in `[lo, hi]`: `|a| ≤ ‖a‖_∞` everywhere and
    /// `|a(x) - a(x')| ≤ Lip |x - x'|` on neighbouring points.
    pub fn check_declared_bounds(&self, lo: f64, hi: f64, points: usize) -> Result<()> {
        let sup = self.sup_norm();
        let lip = self.lipschitz();
        let h = (hi - lo) / (points.max(2) - 1) as f64;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..points.max(2) {
            let x = lo + h * i as f64;
            let a: f64 = self.eval(x);
            if a.abs() > sup * (1.0 + 1e-12) + 1e-15 {
                return domain(format!("{self}: |a({x})| = {} exceeds sup-norm {sup}", a.abs()));
            }
            if let Some((px, pa)) = prev {
                if (a - pa).abs() > lip * (x - px) * (1.0 + 1e-9) + 1e-14 {
                    return domain(format!("{self}: Lipschitz bound {lip} violated near {x}"));
                }
            }
            prev = Some((x, a));
        }
        Ok(())
    }
}

impl fmt::Display for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DriftSpec::Zero => write!(f, "zero"),
            DriftSpec::Constant { value } => write!(f, "constant:{value}"),
            DriftSpec::Tanh { amplitude, scale, offset } => {
                write!(f, "tanh:{amplitude},{scale},{offset}")
            }
            DriftSpec::Sine { amplitude, frequency, phase } => {
                write!(f, "sine:{amplitude},{frequency},{phase}")
            }
        }
    }
}

impl FromStr for DriftSpec {
    type Err = Error;

    /// `zero`, `constant:c`, `tanh:A[,σ[,offset]]`, `sine:A[,freq[,phase]]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let nums = rest
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Config(format!("drift `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let arg = |i: usize, default: Option<f64>| -> Result<f64> {
            nums.get(i)
                .copied()
                .or(default)
                .ok_or_else(|| Error::Config(format!("drift `{s}` is missing parameter {}", i + 1)))
        };
        let max_args = |k: usize| -> Result<()> {
            if nums.len() > k {
                config(format!("drift `{s}` takes at most {k} parameters"))
            } else {
                Ok(())
            }
        };
        let spec = match family {
            "zero" => {
                max_args(0)?;
                DriftSpec::Zero
            }
            "constant" => {
                max_args(1)?;
                DriftSpec::Constant { value: arg(0, None)? }
            }
            "tanh" => {
                max_args(3)?;
                DriftSpec::Tanh {
                    amplitude: arg(0, None)?,
                    scale: arg(1, Some(1.0))?,
                    offset: arg(2, Some(0.0))?,
                }
            }
            "sine" => {
                max_args(3)?;
                DriftSpec::Sine {
                    amplitude: arg(0, None)?,
                    frequency: arg(1, Some(1.0))?,
                    phase: arg(2, Some(0.0))?,
                }
            }
            other => return config(format!("unknown drift family `{other}`")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for DriftSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DriftSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Strictly increasing starting configuration (a point of the ordered sector).
pub fn check_ordered<F: Scalar>(u: &[F]) -> Result<()> {
    if u.is_empty() {
        return config("need at least one starting point");
    }
    if u.iter().any(|x| !x.is_finite()) {
        return domain("starting points must be finite");
    }
    if u.windows(2).any(|w| !(w[0] < w[1])) {
        return domain(format!(
            "starting points must be strictly increasing, got {:?}",
            u.iter().map(|x| x.as_f64()).collect::<Vec<_>>()
        ));
    }
    Ok(())
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        config("number of paths must be at least 1")
    } else {
        Ok(())
    }
}

/// `n` independent discretized standard Wiener paths started at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerBundle<F> {
    grid: TimeGrid<F>,
    n: usize,
    values: Vec<F>,
    increments: Vec<F>,
}

impl<F: Scalar> WienerBundle<F> {
    /// Builds a bundle from increments; values are their prefix sums.
    pub fn from_increments(grid: TimeGrid<F>, n: usize, increments: Vec<F>) -> Result<Self> {
        check_count(n)?;
        let m = grid.steps();
        if increments.len() != n * m {
            return Err(Error::Dimension { expected: n * m, got: increments.len() });
        }
        let mut values = Vec::with_capacity(n * (m + 1));
        for k in 0..n {
            let mut acc = F::zero();
            values.push(acc);
            for &dw in &increments[k * m..(k + 1) * m] {
                acc += dw;
                values.push(acc);
            }
        }
        Ok(Self { grid, n, values, increments })
    }

    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn path(&self, k: usize) -> &[F] {
        let p = self.grid.points();
        &self.values[k * p..(k + 1) * p]
    }

    pub fn increments(&self, k: usize) -> &[F] {
        let m = self.grid.steps();
        &self.increments[k * m..(k + 1) * m]
    }

    pub fn terminal(&self, k: usize) -> F {
        self.path(k)[self.grid.steps()]
    }

    pub fn terminals(&self) -> Vec<F> {
        (0..self.n).map(|k| self.terminal(k)).collect()
    }
}

pub fn sample_wiener<F: Scalar>(
    grid: &TimeGrid<F>,
    n: usize,
    rng: &mut RngStream,
) -> Result<WienerBundle<F>> {
    check_count(n)?;
    let sd = grid.dt().sqrt();
    let increments = (0..n * grid.steps()).map(|_| sd * rng.normal::<F>()).collect();
    WienerBundle::from_increments(*grid, n, increments)
}

/// How bridges are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BridgeMode {
    /// Exact Gaussian transitions of the pinned process, node to node.
    #[default]
    ConditionedIncrement,
    /// `η(t) = (T - t) b(t / (T (T - t)))` for a Wiener process `b`.
    TimeChange,
}

impl FromStr for BridgeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditioned-increment" | "conditioned" => Ok(BridgeMode::ConditionedIncrement),
            "time-change" => Ok(BridgeMode::TimeChange),
            other => config(format!("unknown bridge mode `{other}`")),
        }
    }
}

/// Where a bridge bundle came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeSource {
    Sampled(BridgeMode),
    /// `η(t) = (t/T) w(T) - w(t)` from a Wiener bundle.
    WienerDecomposition,
}

/// `n` independent Brownian bridges on `[0, T]`, zero at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeBundle<F> {
    grid: TimeGrid<F>,
    n: usize,
    values: Vec<F>,
    source: BridgeSource,
}

impl<F: Scalar> BridgeBundle<F> {
    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> BridgeSource {
        self.source
    }

    pub fn path(&self, k: usize) -> &[F] {
        let p = self.grid.points();
        &self.values[k * p..(k + 1) * p]
    }

    /// Inverts the Wiener decomposition: `w(t) = (t/T) w(T) - η(t)`.
    pub fn reconstruct_wiener(&self, endpoints: &[F]) -> Result<WienerBundle<F>> {
        if endpoints.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: endpoints.len() });
        }
        let m = self.grid.steps();
        let mut values = Vec::with_capacity(self.values.len());
        let mut increments = Vec::with_capacity(self.n * m);
        for (k, &end) in endpoints.iter().enumerate() {
            let eta = self.path(k);
            let start = values.len();
            for (i, &e) in eta.iter().enumerate() {
                values.push(self.grid.fraction(i) * end - e);
            }
            for i in 0..m {
                increments.push(values[start + i + 1] - values[start + i]);
            }
        }
        Ok(WienerBundle { grid: self.grid, n: self.n, values, increments })
    }

    /// The same bridges observed on every `factor`-th node.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let values = (0..self.n)
            .flat_map(|k| self.path(k).iter().step_by(factor).copied().collect::<Vec<_>>())
            .collect();
        Ok(Self { grid, n: self.n, values, source: self.source })
    }
}

pub fn sample_bridge<F: Scalar>(
    grid: &TimeGrid<F>,
    n: usize,
    mode: BridgeMode,
    rng: &mut RngStream,
) -> Result<BridgeBundle<F>> {
    check_count(n)?;
    let m = grid.steps();
    let horizon = grid.horizon();
    let dt = grid.dt();
    let mut values = Vec::with_capacity(n * (m + 1));
    for _ in 0..n {
        values.push(F::zero());
        match mode {
            BridgeMode::ConditionedIncrement => {
                let mut eta = F::zero();
                for i in 0..m - 1 {
                    // remaining-time ratio (T - t_{i+1}) / (T - t_i)
                    let ratio = F::from_count(m - i - 1) / F::from_count(m - i);
                    eta = eta * ratio + (dt * ratio).sqrt() * rng.normal::<F>();
                    values.push(eta);
                }
            }
            BridgeMode::TimeChange => {
                let clock = |i: usize| {
                    let t = grid.node(i);
                    t / (horizon * (horizon - t))
                };
                let mut b = F::zero();
                for i in 1..m {
                    b += (clock(i) - clock(i - 1)).sqrt() * rng.normal::<F>();
                    values.push((horizon - grid.node(i)) * b);
                }
            }
        }
        values.push(F::zero());
    }
    Ok(BridgeBundle { grid: *grid, n, values, source: BridgeSource::Sampled(mode) })
}

/// Splits a Wiener bundle into bridges `η(t) = (t/T) w(T) - w(t)` and the
/// endpoints `w(T)`.
pub fn bridge_from_wiener<F: Scalar>(w: &WienerBundle<F>) -> (BridgeBundle<F>, Vec<F>) {
    let grid = *w.grid();
    let endpoints = w.terminals();
    let mut values = Vec::with_capacity(w.values.len());
    for (k, &end) in endpoints.iter().enumerate() {
        for (i, &x) in w.path(k).iter().enumerate() {
            values.push(grid.fraction(i) * end - x);
        }
    }
    (
        BridgeBundle { grid, n: w.n(), values, source: BridgeSource::WienerDecomposition },
        endpoints,
    )
}

/// Bridges pinned at `u` (time 0) and `y` (time `T`):
/// `η^{u,y}(t) = η(t) + (1 - t/T) u + (t/T) y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedBundle<F> {
    grid: TimeGrid<F>,
    n: usize,
    start: Vec<F>,
    end: Vec<F>,
    bridge: Vec<F>,
    values: Vec<F>,
}

impl<F: Scalar> PinnedBundle<F> {
    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn start(&self) -> &[F] {
        &self.start
    }

    pub fn end(&self) -> &[F] {
        &self.end
    }

    pub fn path(&self, k: usize) -> &[F] {
        let p = self.grid.points();
        &self.values[k * p..(k + 1) * p]
    }

    /// The underlying (unpinned) bridge of coordinate `k`.
    pub fn bridge(&self, k: usize) -> &[F] {
        let p = self.grid.points();
        &self.bridge[k * p..(k + 1) * p]
    }
}

pub fn pin<F: Scalar>(bridge: &BridgeBundle<F>, u: &[F], y: &[F]) -> Result<PinnedBundle<F>> {
    let n = bridge.n();
    for v in [u, y] {
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
    }
    check_ordered(u)?;
    if y.iter().any(|x| !x.is_finite()) {
        return domain("terminal points must be finite");
    }
    let grid = *bridge.grid();
    let mut values = Vec::with_capacity(bridge.values.len());
    for k in 0..n {
        for (i, &e) in bridge.path(k).iter().enumerate() {
            let f = grid.fraction(i);
            values.push(e + (F::one() - f) * u[k] + f * y[k]);
        }
    }
    Ok(PinnedBundle {
        grid,
        n,
        start: u.to_vec(),
        end: y.to_vec(),
        bridge: bridge.values.clone(),
        values,
    })
}

/// Absolute positions of `n` uncoalesced paths; the input to the coalescing
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FreePaths<F> {
    grid: TimeGrid<F>,
    n: usize,
    values: Vec<F>,
}

impl<F: Scalar> FreePaths<F> {
    pub fn from_values(grid: TimeGrid<F>, n: usize, values: Vec<F>) -> Result<Self> {
        check_count(n)?;
        if values.len() != n * grid.points() {
            return Err(Error::Dimension { expected: n * grid.points(), got: values.len() });
        }
        Ok(Self { grid, n, values })
    }

    /// `u_k + w_k(t)`.
    pub fn from_wiener(w: &WienerBundle<F>, u: &[F]) -> Result<Self> {
        if u.len() != w.n() {
            return Err(Error::Dimension { expected: w.n(), got: u.len() });
        }
        check_ordered(u)?;
        let values = (0..w.n())
            .flat_map(|k| w.path(k).iter().map(move |&x| u[k] + x))
            .collect();
        Ok(Self { grid: *w.grid(), n: w.n(), values })
    }

    pub fn from_pinned(p: &PinnedBundle<F>) -> Self {
        Self { grid: p.grid, n: p.n, values: p.values.clone() }
    }

    /// Independent Euler paths `X(t_{i+1}) = X(t_i) + a(X(t_i)) Δt + ΔW`
    /// from `u`. Draws are taken coordinate by coordinate, in the same order
    /// as [`sample_wiener`].
    pub fn sample_euler(
        grid: &TimeGrid<F>,
        u: &[F],
        drift: &DriftSpec,
        rng: &mut RngStream,
    ) -> Result<Self> {
        check_ordered(u)?;
        let m = grid.steps();
        let dt = grid.dt();
        let sd = dt.sqrt();
        let mut values = Vec::with_capacity(u.len() * (m + 1));
        for &start in u {
            let mut x = start;
            values.push(x);
            for _ in 0..m {
                let dw = sd * rng.normal::<F>();
                x = x + drift.eval(x) * dt + dw;
                values.push(x);
            }
        }
        Ok(Self { grid: *grid, n: u.len(), values })
    }

    pub fn grid(&self) -> &TimeGrid<F> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn path(&self, k: usize) -> &[F] {
        let p = self.grid.points();
        &self.values[k * p..(k + 1) * p]
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize) -> F {
        self.values[k * self.grid.points() + i]
    }

    pub fn starts(&self) -> Vec<F> {
        (0..self.n).map(|k| self.at(k, 0)).collect()
    }

    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let values = (0..self.n)
            .flat_map(|k| self.path(k).iter().step_by(factor).copied().collect::<Vec<_>>())
            .collect();
        Ok(Self { grid, n: self.n, values })
    }
}

/// Euler scheme for the drifted n-point motion followed by coalescing. A
/// merged block moves with the free path of its smallest index, so
/// coalescing the free Euler paths is the same as stepping only the alive
/// coordinates.
pub fn sample_drifted_flow<F: Scalar>(
    grid: &TimeGrid<F>,
    u: &[F],
    drift: &DriftSpec,
    rng: &mut RngStream,
) -> Result<CoalescedBundle<F>> {
    let free = FreePaths::sample_euler(grid, u, drift, rng)?;
    coalesce_bundle(free)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_grid(horizon: f64, steps: usize) -> crate::Result<crate::paths::TimeGrid<f64>> {
        crate::paths::make_grid(horizon, steps)
    }

    #[test]
    fn grid_nodes() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_grid(2.0, 2).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 1.0, 2.0]);
        assert!(matches!(make_grid(1.0, 1), Err(Error::Config(_))));
        assert!(matches!(make_grid(0.0, 4), Err(Error::Config(_))));
        assert!(matches!(make_grid(-1.0, 4), Err(Error::Config(_))));
    }

    #[test]
    fn grid_end_is_exact() {
        let g = make_grid(0.7, 3000).unwrap();
        assert_eq!(g.node(3000), 0.7);
        assert_eq!(g.fraction(3000), 1.0);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn drift_registry() {
        for s in ["zero", "constant:0.5", "tanh:1,1", "sine:0.5", "sine:0.5,2,0.3", "tanh:2,0.5,1"] {
            let d: DriftSpec = s.parse().unwrap();
            d.check_declared_bounds(-20.0, 20.0, 40_001).unwrap();
            let back: DriftSpec = d.to_string().parse().unwrap();
            assert_eq!(back, d);
        }
        assert_eq!(DriftSpec::Zero.sup_norm(), 0.0);
        assert_eq!(DriftSpec::tanh(1.0, 0.5).lipschitz(), 2.0);
        assert!("cubic:1".parse::<DriftSpec>().is_err());
        assert!("tanh:1,0".parse::<DriftSpec>().is_err());
        assert!("constant".parse::<DriftSpec>().is_err());
    }

    #[test]
    fn wiener_is_deterministic_and_starts_at_zero() {
        let g = make_grid(1.0, 64).unwrap();
        let a = sample_wiener(&g, 3, &mut RngStream::new(5, 9)).unwrap();
        let b = sample_wiener(&g, 3, &mut RngStream::new(5, 9)).unwrap();
        assert_eq!(a, b);
        for k in 0..3 {
            assert_eq!(a.path(k)[0], 0.0);
            let sum: f64 = a.increments(k).iter().sum();
            assert!((sum - a.terminal(k)).abs() < 1e-12);
        }
        assert!(matches!(sample_wiener(&g, 0, &mut RngStream::new(1, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn bridges_are_pinned_in_every_mode() {
        let g = make_grid(1.3, 97).unwrap();
        for mode in [BridgeMode::ConditionedIncrement, BridgeMode::TimeChange] {
            for r in 0..20 {
                let b = sample_bridge(&g, 2, mode, &mut RngStream::new(3, r)).unwrap();
                for k in 0..2 {
                    assert_eq!(b.path(k)[0], 0.0);
                    assert_eq!(b.path(k)[97], 0.0);
                }
            }
        }
        assert!("brownian".parse::<BridgeMode>().is_err());
    }

    #[test]
    fn decomposition_fixtures() {
        let g = make_grid(1.0, 4).unwrap();
        let zero = WienerBundle::from_increments(g, 1, vec![0.0; 4]).unwrap();
        let (eta, ends) = bridge_from_wiener(&zero);
        assert!(eta.path(0).iter().all(|&x| x == 0.0));
        assert_eq!(ends, vec![0.0]);

        let line = WienerBundle::from_increments(g, 1, vec![0.25; 4]).unwrap();
        let (eta, ends) = bridge_from_wiener(&line);
        assert_eq!(ends, vec![1.0]);
        assert!(eta.path(0).iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn decomposition_round_trip() {
        let g = make_grid(2.0, 500).unwrap();
        let w = sample_wiener(&g, 3, &mut RngStream::new(11, 0)).unwrap();
        let (eta, ends) = bridge_from_wiener(&w);
        let back = eta.reconstruct_wiener(&ends).unwrap();
        for k in 0..3 {
            assert_eq!(eta.path(k)[500], 0.0);
            for (a, b) in w.path(k).iter().zip(back.path(k)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pin_fixture_and_errors() {
        let g = make_grid(1.0, 2).unwrap();
        let w = WienerBundle::from_increments(g, 2, vec![0.0; 4]).unwrap();
        let (eta, _) = bridge_from_wiener(&w);
        let p = pin(&eta, &[0.0, 1.0], &[2.0, 3.0]).unwrap();
        assert_eq!(p.path(0)[1], 1.0);
        assert_eq!(p.path(1)[1], 2.0);
        assert!(matches!(pin(&eta, &[1.0, 0.0], &[0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(pin(&eta, &[0.0], &[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pinned_endpoints_exact() {
        let g = make_grid(1.0, 333).unwrap();
        let u = [-0.3, 0.1, 0.77];
        let y = [1.1, -2.5, 0.123456789];
        for r in 0..10 {
            let b = sample_bridge(&g, 3, BridgeMode::ConditionedIncrement, &mut RngStream::new(2, r))
                .unwrap();
            let p = pin(&b, &u, &y).unwrap();
            for k in 0..3 {
                assert_eq!(p.path(k)[0], u[k]);
                assert_eq!(p.path(k)[333], y[k]);
            }
        }
    }

    #[test]
    fn constant_drift_euler_is_exact_line_plus_noise() {
        let g = make_grid(1.0, 100).unwrap();
        let d = DriftSpec::constant(0.5);
        let x = FreePaths::sample_euler(&g, &[0.0], &d, &mut RngStream::new(4, 0)).unwrap();
        let w = sample_wiener(&g, 1, &mut RngStream::new(4, 0)).unwrap();
        assert!((x.at(0, 100) - (0.5 + w.terminal(0))).abs() < 1e-12);
    }

    #[test]
    fn f32_paths() {
        let g = TimeGrid::new(1.0f32, 16).unwrap();
        let b = sample_bridge(&g, 2, BridgeMode::TimeChange, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(b.path(1)[16], 0.0f32);
        let p = pin(&b, &[0.0f32, 1.0], &[0.5, 0.25]).unwrap();
        assert_eq!(p.path(1)[16], 0.25f32);
    }
}
