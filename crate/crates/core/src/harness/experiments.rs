//! One function per experiment; each returns report rows, density tables
//! and a free-form JSON details block.

use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::{Experiment, ExperimentConfig};
use super::report::{bound_row, compare, Bound, DensityAgreement, Provenance, Quantity, ReportRow, ToleranceRule};
use crate::coalesce::{enumerate_schemes, scheme_count, scheme_replay, Scheme};
use crate::error::{config, Result};
use crate::estimators::{
    bridge_moments, bridge_mode_ks, coalescence_probability, density_direct,
    density_girsanov, density_thm2, density_thm4, lemma5_check, lemma7_check, lemma8_check,
    thm1_lhs_binned, thm1_rhs_levels, thm3_monotonicity, Bandwidth, BridgeOptions, DensityEstimate,
    DensityTarget, Simulation, Thm2Options, Window,
};
use crate::girsanov::BridgeWeightOptions;
use crate::paths::{make_grid, BridgeMode, DriftSpec, TimeGrid};

/// Results of one experiment before they are written out.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<ReportRow>,
    pub densities: Vec<(String, DensityEstimate)>,
    pub details: Value,
}

/// Hard per-bin multiplier for density agreement.
const HARD_KAPPA: f64 = 6.0;
/// Fraction of bins that must agree within κ.
const MIN_FRACTION: f64 = 0.9;
/// Allowance for the smoothing bias of kernel estimates.
pub const KERNEL_BIAS: f64 = 0.02;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    name: &'static str,
    grid: TimeGrid<f64>,
}

impl Ctx<'_> {
    fn sim(&self, u: &[f64]) -> Result<Simulation<f64>> {
        Simulation::new(self.grid, u.to_vec(), self.cfg.replicas, self.cfg.seed)
    }

    fn rule(&self) -> ToleranceRule {
        ToleranceRule::kappa(self.cfg.kappa)
    }

    fn oracle_rule(&self) -> ToleranceRule {
        ToleranceRule::kappa(self.cfg.oracle_kappa)
    }

    fn window(&self, dim: usize, fallback: (f64, f64)) -> Result<Window> {
        let (lo, hi) = self.cfg.window_bounds(fallback);
        Window::cube(dim, lo, hi, self.cfg.delta)
    }

    fn bridge(&self) -> BridgeOptions {
        BridgeOptions {
            weight: BridgeWeightOptions { form: self.cfg.weight_form, sign: self.cfg.sign },
            mode: self.cfg.bridge_mode,
            cutoffs: self.cfg.cutoffs,
        }
    }
}

pub fn dispatch(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let exp = cfg.experiment()?;
    let ctx = Ctx { cfg, name: exp.name(), grid: make_grid(cfg.horizon, cfg.steps)? };
    match exp {
        Experiment::Schemes => schemes(&ctx),
        Experiment::BridgeCheck => bridge_check(&ctx),
        Experiment::Coalprob => coalprob(&ctx),
        Experiment::Thm1 => thm1(&ctx),
        Experiment::Thm2 => thm2(&ctx),
        Experiment::Thm4 => thm4(&ctx),
        Experiment::Lemma7 => lemma7(&ctx),
        Experiment::Lemma8 => lemma8(&ctx),
        Experiment::Thm3 => thm3(&ctx),
        Experiment::Density => density(&ctx),
        Experiment::Lemma5 => lemma5(&ctx),
    }
}

fn schemes(ctx: &Ctx) -> Result<Outcome> {
    let n = match ctx.cfg.n {
        Some(n) => n,
        None if !ctx.cfg.u.is_empty() => ctx.cfg.u.len(),
        None => return config("`n` is required"),
    };
    let groups = enumerate_schemes(n)?;
    let mut rows = Vec::new();
    let mut listing = Vec::new();
    for (k, group) in groups.iter().enumerate() {
        rows.push(compare(
            ctx.name,
            &format!("|Sh_{{{n},{k}}}|"),
            Quantity::exact(group.len() as f64),
            Quantity::exact(scheme_count(n, k) as f64),
            Provenance::ClosedForm,
            ToleranceRule::kappa(0.0),
        )?);
        for s in group {
            let r = scheme_replay(n, s)?;
            listing.push(json!({
                "scheme": s.to_string(),
                "entries": s.entries(),
                "survivors": r.survivors().iter().map(|i| i + 1).collect::<Vec<_>>(),
                "blocks": r.partition().iter().map(|&(lo, hi)| [lo + 1, hi + 1]).collect::<Vec<_>>(),
            }));
        }
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    Ok(Outcome {
        rows,
        densities: Vec::new(),
        details: json!({ "n": n, "count": total, "schemes": listing }),
    })
}

fn bridge_check(ctx: &Ctx) -> Result<Outcome> {
    let t = ctx.cfg.horizon;
    let m = ctx.grid.steps();
    let mut rows = Vec::new();
    let mut details = serde_json::Map::new();
    for mode in [BridgeMode::ConditionedIncrement, BridgeMode::TimeChange] {
        let label = match mode {
            BridgeMode::ConditionedIncrement => "conditioned-increment",
            BridgeMode::TimeChange => "time-change",
        };
        let mo = bridge_moments(&ctx.grid, mode, ctx.cfg.replicas, ctx.cfg.seed)?;
        rows.push(compare(
            ctx.name,
            &format!("{label}: Var eta(T/2)"),
            (&mo.var_mid).into(),
            Quantity::exact(t / 4.0),
            Provenance::ClosedForm,
            ctx.oracle_rule(),
        )?);
        rows.push(compare(
            ctx.name,
            &format!("{label}: Cov(eta(T/4), eta(T/2))"),
            (&mo.cov_quarter_mid).into(),
            Quantity::exact(t / 8.0),
            Provenance::ClosedForm,
            ctx.oracle_rule(),
        )?);
        rows.push(bound_row(
            ctx.name,
            &format!("{label}: max |eta(T)|"),
            mo.max_abs_end,
            0.0,
            Bound::AtMost,
            0.0,
            Provenance::ClosedForm,
        ));
        details.insert(label.into(), serde_json::to_value(&mo).expect("serializable"));
    }
    let ks = bridge_mode_ks(&ctx.grid, ctx.cfg.replicas, ctx.cfg.seed, &[m / 4, m / 2, 3 * m / 4])?;
    for row in &ks {
        rows.push(bound_row(
            ctx.name,
            &format!("KS statistic between modes at node {}", row.node),
            row.statistic,
            0.0,
            Bound::AtMost,
            row.critical,
            Provenance::CrossEstimator,
        ));
    }
    details.insert("ks".into(), serde_json::to_value(&ks).expect("serializable"));
    Ok(Outcome { rows, densities: Vec::new(), details: Value::Object(details) })
}

fn coalprob(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(2)?;
    let rep = coalescence_probability(&ctx.sim(u)?, &ctx.cfg.levels)?;
    let bias = rep.estimates.bias.as_ref().map_or(0.0, |b| b.bias);
    let mut rows = vec![compare(
        ctx.name,
        "P(tau_2 < T)",
        rep.estimates.finest().into(),
        Quantity::exact(rep.oracle),
        Provenance::ClosedForm,
        ctx.oracle_rule().with_allowance(bias),
    )?];
    if let Some(shrink) = rep.estimates.bias.as_ref().and_then(|b| b.shrink) {
        rows.push(bound_row(ctx.name, "grid bias shrink per doubling", shrink, 0.0, Bound::AtLeast, 1.3, Provenance::None));
    }
    Ok(Outcome { rows, densities: Vec::new(), details: serde_json::to_value(&rep).expect("serializable") })
}

/// Probability that two driftless bridges from `u` to `y` (difference with
/// variance rate 2) meet before `T`.
pub fn bridge_hitting_oracle(u: &[f64], y: &[f64], horizon: f64) -> f64 {
    let (d0, d1) = (u[1] - u[0], y[1] - y[0]);
    if d1 <= 0.0 {
        1.0
    } else {
        (-d0 * d1 / horizon).exp()
    }
}

fn thm1(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(1)?;
    let s = ctx.cfg.need_scheme()?;
    let y = &ctx.cfg.y;
    let drift = &ctx.cfg.drift;
    let sim = ctx.sim(u)?;
    let rhs = thm1_rhs_levels(&sim, y, s, drift, ctx.bridge(), &ctx.cfg.levels)?;
    let lhs = thm1_lhs_binned(&sim.with_seed(ctx.cfg.seed ^ 0x4c48_5300), y, s, drift, ctx.cfg.bin_halfwidth())?;
    let mut rows = vec![compare(
        ctx.name,
        &format!("binned lhs vs rhs, s = {s}"),
        lhs.estimate.as_ref().into(),
        rhs.finest().into(),
        Provenance::CrossEstimator,
        ctx.rule(),
    )?];
    if drift.is_zero() && u.len() == 2 {
        let hit = bridge_hitting_oracle(u, y, ctx.cfg.horizon);
        let oracle = if s.is_empty() { 1.0 - hit } else { hit };
        let bias = rhs.bias.as_ref().map_or(0.0, |b| b.bias);
        rows.push(compare(
            ctx.name,
            &format!("rhs vs bridge hitting oracle, s = {s}"),
            rhs.finest().into(),
            Quantity::exact(oracle),
            Provenance::ClosedForm,
            ctx.oracle_rule().with_allowance(bias),
        )?);
    }
    Ok(Outcome { rows, densities: Vec::new(), details: json!({ "rhs": rhs, "lhs": lhs }) })
}

fn agreement_rows(
    ctx: &Ctx,
    label: &str,
    a: &DensityEstimate,
    b: &DensityEstimate,
    rule: ToleranceRule,
    min_fraction: f64,
    provenance: Provenance,
) -> Result<(Vec<ReportRow>, DensityAgreement)> {
    let ag = DensityAgreement::new(a, b, rule, HARD_KAPPA)?;
    Ok((ag.rows(ctx.name, label, min_fraction, provenance), ag))
}

fn thm2(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(1)?;
    let s = ctx.cfg.need_scheme()?.clone();
    let j = ctx.cfg.need_k()?;
    let window = ctx.window(j, (-2.0, 3.0))?;
    let sim = ctx.sim(u)?;
    let opts = Thm2Options {
        outer: ctx.cfg.outer,
        inner: ctx.cfg.inner,
        quadrature: ctx.cfg.quadrature,
        bridge: ctx.bridge(),
    };
    let rep = density_thm2(&sim.with_seed(ctx.cfg.seed ^ 0x7432), &s, j, &ctx.cfg.drift, &window, opts)?;
    let target = DensityTarget::Scheme { scheme: s, j };
    let direct = density_direct(&sim, &ctx.cfg.drift, &target, &window, ctx.cfg.sector)?;
    let (rows, ag) = agreement_rows(ctx, "representation vs direct", &rep, &direct, ctx.rule(), MIN_FRACTION, Provenance::CrossEstimator)?;
    Ok(Outcome {
        rows,
        details: json!({ "agreement": ag }),
        densities: vec![("representation".into(), rep), ("direct".into(), direct)],
    })
}

fn thm4(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(1)?;
    let k = ctx.cfg.need_k()?;
    let window = ctx.window(k, (-2.0, 3.0))?;
    let sim = ctx.sim(u)?;
    let bw = ctx.cfg.bandwidth.map_or(Bandwidth::Silverman, Bandwidth::Fixed);
    let rep = density_thm4(&sim, k, &ctx.cfg.drift, &window, bw, ctx.cfg.batches)?;
    let direct = density_direct(
        &sim.with_seed(ctx.cfg.seed ^ 0x7434),
        &ctx.cfg.drift,
        &DensityTarget::Count { k },
        &window,
        ctx.cfg.sector,
    )?;
    let rule = ctx.rule().with_allowance(KERNEL_BIAS);
    let (mut rows, ag) = agreement_rows(ctx, "kernel representation vs direct", &rep.estimate, &direct, rule, 1.0, Provenance::CrossEstimator)?;
    if u.len() == 2 {
        let coal = coalescence_probability(&sim, &ctx.cfg.levels)?;
        let bias = coal.estimates.bias.as_ref().map_or(0.0, |b| b.bias);
        let top = rep.subsets.iter().find(|s| s.positions == [1]).expect("n = 2 has L = {2}");
        rows.push(compare(
            ctx.name,
            "mass of q^{2} = P(no coalescence)",
            (&top.mass).into(),
            Quantity::exact(1.0 - coal.oracle),
            Provenance::ClosedForm,
            ctx.oracle_rule().with_allowance(bias),
        )?);
    }
    Ok(Outcome {
        rows,
        details: json!({ "agreement": ag, "subsets": rep.subsets }),
        densities: vec![("kernel".into(), rep.estimate), ("q-sum".into(), rep.q_sum), ("direct".into(), direct)],
    })
}

fn lemma7(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(1)?;
    let k = ctx.cfg.need_k()?;
    let window = ctx.window(k, (-3.0, 4.0))?;
    let rep = lemma7_check(&ctx.sim(u)?, k, &ctx.cfg.drift, &window)?;
    let rows = vec![bound_row(
        ctx.name,
        "max |p^k - sum_s p^{s,k}|",
        rep.max_abs_diff,
        0.0,
        Bound::AtMost,
        1e-12,
        Provenance::CrossEstimator,
    )];
    let mut densities = vec![("total".to_string(), rep.total)];
    for (s, d) in rep.parts {
        densities.push((format!("scheme-{}", s.to_string().replace([':', ','], "_")), d));
    }
    Ok(Outcome { rows, densities, details: json!({ "max_abs_diff": rep.max_abs_diff }) })
}

fn lemma8(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(2)?;
    let n = ctx.cfg.n_small;
    let window = ctx.window(n, (-4.0, 4.0))?;
    let rep = lemma8_check(&ctx.sim(u)?, n, &ctx.cfg.drift, &window)?;
    let mut rows = vec![
        compare(ctx.name, "E weight (all points)", (&rep.norm_big).into(), Quantity::exact(1.0), Provenance::ClosedForm, ctx.oracle_rule())?,
        compare(ctx.name, "E weight (first points)", (&rep.norm_small).into(), Quantity::exact(1.0), Provenance::ClosedForm, ctx.oracle_rule())?,
    ];
    let mut compared = 0;
    let mut within = 0;
    for b in rep.bins.iter().filter(|b| b.big.replicas >= ctx.cfg.min_bin_count) {
        let r = compare(ctx.name, "tower", (&b.big).into(), (&b.small).into(), Provenance::CrossEstimator, ctx.rule())?;
        compared += 1;
        within += r.passed() as usize;
    }
    rows.push(bound_row(
        ctx.name,
        "tower property: fraction of bins within tolerance",
        if compared == 0 { f64::NAN } else { within as f64 / compared as f64 },
        0.0,
        Bound::AtLeast,
        1.0,
        Provenance::CrossEstimator,
    ));
    Ok(Outcome { rows, densities: Vec::new(), details: serde_json::to_value(&rep).expect("serializable") })
}

/// Nested configurations `{0, 1}`, `{0, 1/4, 1/2, 1}`, `{0, 1/8, …, 1}`.
pub fn default_nested() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 1.0],
        vec![0.0, 0.25, 0.5, 1.0],
        vec![0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 1.0],
    ]
}

fn thm3(ctx: &Ctx) -> Result<Outcome> {
    let nested = if ctx.cfg.nested.is_empty() { default_nested() } else { ctx.cfg.nested.clone() };
    let k = ctx.cfg.k.unwrap_or(1);
    let window = ctx.window(k, (-0.5, 1.5))?;
    let rep = thm3_monotonicity(&nested, k, &ctx.cfg.drift, &window, &ctx.grid, ctx.cfg.replicas, ctx.cfg.seed)?;
    let rows = vec![bound_row(
        ctx.name,
        "largest per-bin decrease in combined stderr",
        rep.worst_drop,
        0.0,
        Bound::AtMost,
        3.0,
        Provenance::None,
    )];
    let densities = rep.sizes.iter().zip(&rep.estimates).map(|(n, d)| (format!("n{n}"), d.clone())).collect();
    Ok(Outcome { rows, densities, details: json!({ "sizes": rep.sizes, "worst_drop": rep.worst_drop }) })
}

/// Bin averages of the `N(μ, T)` density.
fn gaussian_bins(window: &Window, mean: f64, horizon: f64) -> DensityEstimate {
    let normal = Normal::new(mean, horizon.sqrt()).expect("positive variance");
    let mut d = DensityEstimate::zeros(window, 1, Default::default());
    for b in 0..window.total_bins() {
        let lo = window.bin_lo(b)[0];
        d.values[b] = (normal.cdf(lo + window.delta()) - normal.cdf(lo)) / window.delta();
        d.counts[b] = 1;
    }
    d
}

fn density(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(1)?;
    let k = ctx.cfg.k.unwrap_or(1);
    let target = match &ctx.cfg.scheme {
        Some(s) => DensityTarget::Scheme { scheme: s.clone(), j: k },
        None => DensityTarget::Count { k },
    };
    let window = ctx.window(k, (-3.0, 4.0))?;
    let sim = ctx.sim(u)?;
    let drift = &ctx.cfg.drift;
    let direct = density_direct(&sim, drift, &target, &window, ctx.cfg.sector)?;
    let weighted = density_girsanov(&sim.with_seed(ctx.cfg.seed ^ 0x6972), drift, &target, &window, ctx.cfg.sector)?;
    let (mut rows, ag) = agreement_rows(ctx, "direct vs reweighted", &direct, &weighted, ctx.rule(), MIN_FRACTION, Provenance::CrossEstimator)?;
    let mut densities = vec![("direct".to_string(), direct), ("reweighted".to_string(), weighted)];
    let drift_const = match drift {
        DriftSpec::Zero => Some(0.0),
        DriftSpec::Constant { value } => Some(*value),
        _ => None,
    };
    if let (1, Some(c)) = (u.len(), drift_const) {
        let exact = gaussian_bins(&window, u[0] + c * ctx.cfg.horizon, ctx.cfg.horizon);
        let (r, _) = agreement_rows(ctx, "direct vs Gaussian", &densities[0].1, &exact, ctx.rule(), MIN_FRACTION, Provenance::ClosedForm)?;
        rows.extend(r);
        densities.push(("gaussian".to_string(), exact));
    }
    Ok(Outcome { rows, densities, details: json!({ "agreement": ag }) })
}

fn lemma5(ctx: &Ctx) -> Result<Outcome> {
    let u = ctx.cfg.need_u(1)?;
    let s: Scheme = ctx.cfg.need_scheme()?.clone();
    let rep = lemma5_check(&ctx.sim(u)?, &ctx.cfg.y, &s, ctx.cfg.p, &ctx.cfg.drift)?;
    let rows = vec![bound_row(
        ctx.name,
        &format!("E e^p (p = {})", ctx.cfg.p),
        rep.moment.mean,
        rep.moment.stderr,
        Bound::AtMost,
        1.2 * rep.bound,
        Provenance::ClosedForm,
    )];
    Ok(Outcome { rows, densities: Vec::new(), details: serde_json::to_value(&rep).expect("serializable") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::coalescence_oracle;

    #[test]
    fn hitting_oracle_values() {
        assert!((bridge_hitting_oracle(&[0.0, 0.3], &[0.0, 0.3], 1.0) - 0.9139311852712282).abs() < 1e-15);
        assert!((bridge_hitting_oracle(&[0.0, 0.3], &[0.2, 0.8], 1.0) - 0.835270211411272).abs() < 1e-15);
        assert!((bridge_hitting_oracle(&[0.0, 0.3], &[-0.5, 0.5], 1.0) - 0.7408182206817179).abs() < 1e-15);
        assert!((bridge_hitting_oracle(&[0.0, 1.0], &[0.0, 1.0], 1.0) - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(bridge_hitting_oracle(&[0.0, 1.0], &[1.0, 0.5], 1.0), 1.0);
    }

    #[test]
    fn gaussian_bins_integrate() {
        let w = Window::cube(1, -8.0, 9.0, 0.5).unwrap();
        let d = gaussian_bins(&w, 0.5, 1.0);
        assert!((d.integral() - 1.0).abs() < 1e-9);
        assert!((coalescence_oracle(1.0, 1.0) - 0.4795).abs() < 1e-4);
    }
}
