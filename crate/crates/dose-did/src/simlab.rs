//! Deterministic, seedable data-generating processes with analytic
//! oracle effect functions.
//!
//! Each family produces a panel together with the true effect functions
//! it was built from, so estimators can be validated against ground
//! truth. Identical spec and seed reproduce bitwise-identical panels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::numeric::{ksum, quantile_sorted};
use crate::panel::{PanelDataset, PanelRecord};

/// Staggered design layout: timing groups with their dose menus, an
/// optional never-treated arm, and a common linear trend.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredLayout {
    pub t_max: usize,
    /// (first treated period, doses offered in that group).
    pub groups: Vec<(usize, Vec<f64>)>,
    pub never_treated: bool,
    /// Common linear period trend added to every unit.
    pub trend: f64,
}

impl Default for StaggeredLayout {
    /// Two timing groups (early at 3 with doses {2,4}, late at 5 with
    /// doses {5,6}) plus a never-treated arm over six periods; the layout
    /// keeps every comparison window nonempty.
    fn default() -> Self {
        StaggeredLayout {
            t_max: 6,
            groups: vec![(3, vec![2.0, 4.0]), (5, vec![5.0, 6.0])],
            never_treated: true,
            trend: 0.1,
        }
    }
}

/// DGP family plus its family-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DgpFamily {
    /// Two periods; doses are exponential draws with the lowest quartile
    /// set to zero and survivors rounded to the nearest 0.5. The effect
    /// function (1+d)ln(1+D) builds in selection into higher doses: the
    /// causal response at the own dose is 1 for every unit, while the
    /// observed dose slope is 1 + ln(1+d).
    TwoPeriodExponential { dose_scale: f64 },
    /// Alternative preset with effect d ln(D); the own-dose causal
    /// response is again 1 and the selection bias is ln(d).
    TwoPeriodExpLogDose { dose_scale: f64 },
    /// One-time level shift of d^1.5 in a staggered layout.
    FourGroupStaggered { layout: StaggeredLayout },
    /// One-time level shift of theta * d: constant causal response
    /// everywhere, no dynamics.
    ConstantAcr { theta: f64, layout: StaggeredLayout },
    /// Effect theta * d + ramp * (periods since treatment), so the causal
    /// response is constant but the level effect grows over time.
    RampDynamics {
        theta: f64,
        ramp: f64,
        layout: StaggeredLayout,
    },
    /// No treatment effect, but untreated paths trend with gamma * d * t,
    /// violating parallel trends in proportion to the dose.
    PreTrend { gamma: f64, layout: StaggeredLayout },
}

impl DgpFamily {
    pub fn name(&self) -> &'static str {
        match self {
            DgpFamily::TwoPeriodExponential { .. } => "two-period-exp",
            DgpFamily::TwoPeriodExpLogDose { .. } => "two-period-exp-logdose",
            DgpFamily::FourGroupStaggered { .. } => "four-group-staggered",
            DgpFamily::ConstantAcr { .. } => "constant-acr",
            DgpFamily::RampDynamics { .. } => "ramp-dynamics",
            DgpFamily::PreTrend { .. } => "pre-trend",
        }
    }
}

/// Simulation spec: family, size, seed, and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub family: DgpFamily,
    pub n_units: usize,
    pub seed: u64,
    pub noise_sd: f64,
    /// Standard deviation of the unit fixed effects (mean zero normal).
    pub fe_sd: f64,
}

impl DgpSpec {
    /// Two-period exponential-dose design: n=100, exponential mean 3,
    /// outcome noise N(0, 9).
    pub fn two_period_exponential(seed: u64) -> Self {
        DgpSpec {
            family: DgpFamily::TwoPeriodExponential { dose_scale: 3.0 },
            n_units: 100,
            seed,
            noise_sd: 3.0,
            fe_sd: 1.0,
        }
    }

    /// Staggered one-time-shift design, noiseless.
    pub fn four_group_staggered(seed: u64) -> Self {
        DgpSpec {
            family: DgpFamily::FourGroupStaggered {
                layout: StaggeredLayout::default(),
            },
            n_units: 100,
            seed,
            noise_sd: 0.0,
            fe_sd: 1.0,
        }
    }

    /// Constant-response staggered design, noiseless.
    pub fn constant_acr(theta: f64, seed: u64) -> Self {
        DgpSpec {
            family: DgpFamily::ConstantAcr {
                theta,
                layout: StaggeredLayout::default(),
            },
            n_units: 100,
            seed,
            noise_sd: 0.0,
            fe_sd: 1.0,
        }
    }

    /// Ramp-dynamics staggered design, noiseless.
    pub fn ramp_dynamics(theta: f64, ramp: f64, seed: u64) -> Self {
        DgpSpec {
            family: DgpFamily::RampDynamics {
                theta,
                ramp,
                layout: StaggeredLayout::default(),
            },
            n_units: 100,
            seed,
            noise_sd: 0.0,
            fe_sd: 1.0,
        }
    }

    /// Dose-proportional pre-trend design, noiseless.
    pub fn pre_trend(gamma: f64, seed: u64) -> Self {
        DgpSpec {
            family: DgpFamily::PreTrend {
                gamma,
                layout: StaggeredLayout::default(),
            },
            n_units: 100,
            seed,
            noise_sd: 0.0,
            fe_sd: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_units < 2 {
            return Err(Error::InvalidSpec(format!(
                "n_units must be >= 2, got {}",
                self.n_units
            )));
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if self.fe_sd.is_nan() || self.fe_sd < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "fe_sd must be >= 0, got {}",
                self.fe_sd
            )));
        }
        match &self.family {
            DgpFamily::TwoPeriodExponential { dose_scale }
            | DgpFamily::TwoPeriodExpLogDose { dose_scale } => {
                if dose_scale.is_nan() || *dose_scale <= 0.0 {
                    return Err(Error::InvalidSpec("dose_scale must be positive".into()));
                }
            }
            DgpFamily::FourGroupStaggered { layout }
            | DgpFamily::ConstantAcr { layout, .. }
            | DgpFamily::RampDynamics { layout, .. }
            | DgpFamily::PreTrend { layout, .. } => {
                if layout.groups.is_empty() {
                    return Err(Error::InvalidSpec(
                        "layout needs at least one timing group".into(),
                    ));
                }
                for (g, doses) in &layout.groups {
                    if *g < 2 || *g > layout.t_max {
                        return Err(Error::InvalidSpec(format!(
                            "group {g} outside 2..={}",
                            layout.t_max
                        )));
                    }
                    if doses.is_empty() || doses.iter().any(|&d| d.is_nan() || d <= 0.0) {
                        return Err(Error::InvalidSpec(format!(
                            "group {g} needs a nonempty positive dose menu"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub type DoseFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
pub type CellFn = Box<dyn Fn(usize, usize, f64) -> f64 + Send + Sync>;

/// Analytic effect functions behind a generated panel.
pub struct OracleEffects {
    /// Level effect of dose d for the dose-d group.
    pub att_dd: DoseFn,
    /// Own-dose causal response.
    pub acrt_dd: DoseFn,
    /// Derivative of the level effect in the group index at the own dose:
    /// what contaminates dose comparisons under parallel trends alone.
    pub selection_bias_slope: DoseFn,
    /// Level effect for timing group g in period t at dose d.
    pub ate_gtd: CellFn,
    /// Causal response for timing group g in period t at dose d.
    pub acr_gtd: CellFn,
    /// Common change in untreated outcomes between the two periods
    /// (two-period families; staggered families use the layout trend).
    pub post_trend: f64,
}

impl OracleEffects {
    /// Mean outcome change at dose d in a two-period design.
    pub fn path_mean(&self, d: f64) -> f64 {
        self.post_trend + (self.att_dd)(d)
    }
}

impl std::fmt::Debug for OracleEffects {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleEffects")
            .field("post_trend", &self.post_trend)
            .finish_non_exhaustive()
    }
}

fn two_period_oracle(effect: fn(f64) -> f64, bias: fn(f64) -> f64) -> OracleEffects {
    OracleEffects {
        att_dd: Box::new(move |d| if d > 0.0 { effect(d) } else { 0.0 }),
        acrt_dd: Box::new(|d| if d > 0.0 { 1.0 } else { 0.0 }),
        selection_bias_slope: Box::new(move |d| if d > 0.0 { bias(d) } else { 0.0 }),
        ate_gtd: Box::new(move |_, t, d| if t >= 2 && d > 0.0 { effect(d) } else { 0.0 }),
        acr_gtd: Box::new(|_, _, _| 1.0),
        post_trend: 1.0 / 3.0,
    }
}

fn exp_effect(d: f64) -> f64 {
    (1.0 + d) * (1.0 + d).ln()
}

fn exp_bias(d: f64) -> f64 {
    (1.0 + d).ln()
}

fn logdose_effect(d: f64) -> f64 {
    d * d.ln()
}

fn logdose_bias(d: f64) -> f64 {
    d.ln()
}

/// Generate a panel and its oracle from a spec. Deterministic in the seed.
pub fn generate(spec: &DgpSpec) -> Result<(PanelDataset, OracleEffects)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.family {
        DgpFamily::TwoPeriodExponential { dose_scale } => {
            let doses = exponential_doses(&mut rng, spec.n_units, *dose_scale);
            let panel = two_period_panel(spec, &mut rng, &doses, exp_effect)?;
            Ok((panel, two_period_oracle(exp_effect, exp_bias)))
        }
        DgpFamily::TwoPeriodExpLogDose { dose_scale } => {
            let doses = exponential_doses(&mut rng, spec.n_units, *dose_scale);
            let panel = two_period_panel(spec, &mut rng, &doses, logdose_effect)?;
            Ok((panel, two_period_oracle(logdose_effect, logdose_bias)))
        }
        DgpFamily::FourGroupStaggered { layout } => {
            fn effect(g: usize, t: usize, d: f64) -> f64 {
                if t >= g {
                    d.powf(1.5)
                } else {
                    0.0
                }
            }
            let panel = staggered_panel(spec, &mut rng, layout, &effect, 0.0)?;
            let oracle = OracleEffects {
                att_dd: Box::new(|d| if d > 0.0 { d.powf(1.5) } else { 0.0 }),
                acrt_dd: Box::new(|d| 1.5 * d.sqrt()),
                selection_bias_slope: Box::new(|_| 0.0),
                ate_gtd: Box::new(effect),
                acr_gtd: Box::new(|_, _, d| 1.5 * d.sqrt()),
                post_trend: layout.trend,
            };
            Ok((panel, oracle))
        }
        DgpFamily::ConstantAcr { theta, layout } => {
            let th = *theta;
            let effect = move |g: usize, t: usize, d: f64| if t >= g { th * d } else { 0.0 };
            let panel = staggered_panel(spec, &mut rng, layout, &effect, 0.0)?;
            let oracle = OracleEffects {
                att_dd: Box::new(move |d| th * d),
                acrt_dd: Box::new(move |_| th),
                selection_bias_slope: Box::new(|_| 0.0),
                ate_gtd: Box::new(effect),
                acr_gtd: Box::new(move |_, _, _| th),
                post_trend: layout.trend,
            };
            Ok((panel, oracle))
        }
        DgpFamily::RampDynamics {
            theta,
            ramp,
            layout,
        } => {
            let (th, rp) = (*theta, *ramp);
            let effect = move |g: usize, t: usize, d: f64| {
                if t >= g {
                    th * d + rp * (t - g + 1) as f64
                } else {
                    0.0
                }
            };
            let panel = staggered_panel(spec, &mut rng, layout, &effect, 0.0)?;
            let oracle = OracleEffects {
                att_dd: Box::new(move |d| th * d + rp),
                acrt_dd: Box::new(move |_| th),
                selection_bias_slope: Box::new(|_| 0.0),
                ate_gtd: Box::new(effect),
                acr_gtd: Box::new(move |_, _, _| th),
                post_trend: layout.trend,
            };
            Ok((panel, oracle))
        }
        DgpFamily::PreTrend { gamma, layout } => {
            let gm = *gamma;
            let effect = |_: usize, _: usize, _: f64| 0.0;
            let panel = staggered_panel(spec, &mut rng, layout, &effect, gm)?;
            let oracle = OracleEffects {
                att_dd: Box::new(|_| 0.0),
                acrt_dd: Box::new(|_| 0.0),
                selection_bias_slope: Box::new(|_| 0.0),
                ate_gtd: Box::new(|_, _, _| 0.0),
                acr_gtd: Box::new(|_, _, _| 0.0),
                post_trend: layout.trend,
            };
            Ok((panel, oracle))
        }
    }
}

/// Exponential draws; the lowest quartile is set to zero and survivors
/// are rounded to the nearest 0.5, never below 0.5.
fn exponential_doses(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    let exp = Exp::new(1.0 / scale).expect("positive rate");
    let raw: Vec<f64> = (0..n).map(|_| exp.sample(rng)).collect();
    let mut sorted = raw.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q25 = quantile_sorted(&sorted, 0.25);
    raw.into_iter()
        .map(|d| {
            if d <= q25 {
                0.0
            } else {
                ((d / 0.5).round() * 0.5).max(0.5)
            }
        })
        .collect()
}

fn two_period_panel(
    spec: &DgpSpec,
    rng: &mut ChaCha8Rng,
    doses: &[f64],
    effect: fn(f64) -> f64,
) -> Result<PanelDataset> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::with_capacity(doses.len() * 2);
    for (i, &d) in doses.iter().enumerate() {
        let alpha = spec.fe_sd * normal.sample(rng);
        let e1 = spec.noise_sd * normal.sample(rng);
        let e2 = spec.noise_sd * normal.sample(rng);
        let y1 = alpha + e1;
        let y2 = alpha + 1.0 / 3.0 + if d > 0.0 { effect(d) } else { 0.0 } + e2;
        let unit = format!("u{i}");
        records.push(PanelRecord {
            unit: unit.clone(),
            period: 1,
            dose: 0.0,
            outcome: y1,
        });
        records.push(PanelRecord {
            unit,
            period: 2,
            dose: d,
            outcome: y2,
        });
    }
    PanelDataset::from_records(records)
}

fn staggered_panel<F>(
    spec: &DgpSpec,
    rng: &mut ChaCha8Rng,
    layout: &StaggeredLayout,
    effect: &F,
    pretrend_gamma: f64,
) -> Result<PanelDataset>
where
    F: Fn(usize, usize, f64) -> f64,
{
    // Arms: one per (group, dose) cell plus an optional never-treated arm
    // (dose 0). Units are split as evenly as possible across arms.
    let mut arms: Vec<(usize, f64)> = Vec::new();
    for (g, doses) in &layout.groups {
        for &d in doses {
            arms.push((*g, d));
        }
    }
    if layout.never_treated {
        arms.push((layout.t_max + 1, 0.0));
    }
    if spec.n_units < arms.len() {
        return Err(Error::InvalidSpec(format!(
            "n_units {} is smaller than the number of arms {}",
            spec.n_units,
            arms.len()
        )));
    }
    let base = spec.n_units / arms.len();
    let extra = spec.n_units % arms.len();

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::with_capacity(spec.n_units * layout.t_max);
    let mut unit_no = 0usize;
    for (a, &(g, d)) in arms.iter().enumerate() {
        let count = base + usize::from(a < extra);
        for _ in 0..count {
            let alpha = spec.fe_sd * normal.sample(rng);
            let unit = format!("u{unit_no}");
            unit_no += 1;
            for t in 1..=layout.t_max {
                let eps = spec.noise_sd * normal.sample(rng);
                let y = alpha
                    + layout.trend * t as f64
                    + pretrend_gamma * d * t as f64
                    + effect(g, t, d)
                    + eps;
                let w = if t >= g { d } else { 0.0 };
                records.push(PanelRecord {
                    unit: unit.clone(),
                    period: t as i64,
                    dose: w,
                    outcome: y,
                });
            }
        }
    }
    PanelDataset::from_records(records)
}

/// Population TWFE coefficient for families with an analytic dose curve,
/// computed by the weighted-slope accounting over a large Monte Carlo
/// draw of the dose law (not by the regression formula).
pub fn oracle_twfe_target(spec: &DgpSpec) -> Result<f64> {
    spec.validate()?;
    match &spec.family {
        DgpFamily::TwoPeriodExponential { dose_scale } => {
            Ok(weighted_slope_target(spec.seed, *dose_scale, exp_effect))
        }
        DgpFamily::TwoPeriodExpLogDose { dose_scale } => Ok(weighted_slope_target(
            spec.seed,
            *dose_scale,
            logdose_effect,
        )),
        DgpFamily::ConstantAcr { theta, layout } => {
            // Finite dose law from the layout; every adjacent slope of the
            // linear dose curve equals theta and the weights sum to one.
            let mut doses: Vec<f64> = Vec::new();
            for (_, menu) in &layout.groups {
                doses.extend_from_slice(menu);
            }
            if layout.never_treated {
                doses.push(0.0);
            }
            let th = *theta;
            Ok(weighted_slope_sum(&doses, |d| {
                if d > 0.0 {
                    th * d
                } else {
                    0.0
                }
            }))
        }
        other => Err(Error::NoAnalyticOracle(other.name().into())),
    }
}

const ORACLE_MC_DRAWS: usize = 1_000_000;

fn weighted_slope_target(seed: u64, scale: f64, effect: fn(f64) -> f64) -> f64 {
    // Fresh Monte Carlo draw of the dose process, decoupled from the
    // panel stream.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f72_6163_6c65);
    let doses = exponential_doses(&mut rng, ORACLE_MC_DRAWS, scale);
    weighted_slope_sum(&doses, |d| if d > 0.0 { effect(d) } else { 0.0 })
}

/// Sum of mechanical weights times adjacent slopes of the analytic dose
/// curve m(d) = effect(d) on the empirical dose measure, anchored at 0.
fn weighted_slope_sum(doses: &[f64], m: impl Fn(f64) -> f64) -> f64 {
    let n = doses.len() as f64;
    let mean = ksum(doses.iter().copied()) / n;
    let var = ksum(doses.iter().map(|d| (d - mean) * (d - mean))) / n;
    let mut atoms: Vec<f64> = doses.iter().copied().filter(|&d| d > 0.0).collect();
    atoms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    atoms.dedup();

    // Suffix sums over sorted doses make each w1 evaluation O(log n).
    let mut sorted = doses.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut suffix = vec![0.0; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        suffix[i] = suffix[i + 1] + sorted[i];
    }

    let mut total = 0.0;
    let mut prev = 0.0;
    for &a in &atoms {
        let idx = sorted.partition_point(|&d| d < a);
        let s = suffix[idx];
        let c = (sorted.len() - idx) as f64;
        let w1 = (s / n - mean * c / n) / var;
        let slope = (m(a) - m(prev)) / (a - prev);
        total += w1 * (a - prev) * slope;
        prev = a;
    }
    total
}

/// A generated panel with its oracle.
pub type Generated = (PanelDataset, OracleEffects);

/// Two panels over three periods with identical observable distributions.
///
/// The first satisfies parallel trends only: each unit's effect curve is
/// (1+d_i) ln(1+D), so its own-dose causal response is 1 and the observed
/// dose slope mixes in selection bias ln(1+d). The second satisfies
/// strong parallel trends: the common effect curve (1+D) ln(1+D) yields
/// causal response 1 + ln(1+d). Realized outcomes follow the same law in
/// both, so no pre-test can tell them apart.
pub fn paired_pt_dgps(n_units: usize, noise_sd: f64, seed: u64) -> Result<(Generated, Generated)> {
    if n_units < 8 {
        return Err(Error::InvalidSpec(
            "paired designs need at least 8 units".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let menu = [0.0, 1.0, 2.0, 3.0];
    let doses: Vec<f64> = (0..n_units).map(|i| menu[i % menu.len()]).collect();

    let make_panel = |rng: &mut ChaCha8Rng| -> Result<PanelDataset> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let g = 3usize;
        let t_max = 3usize;
        let mut records = Vec::with_capacity(n_units * t_max);
        for (i, &d) in doses.iter().enumerate() {
            let alpha = normal.sample(rng);
            let unit = format!("u{i}");
            for t in 1..=t_max {
                let eps = noise_sd * normal.sample(rng);
                let eff = if t >= g && d > 0.0 {
                    exp_effect(d)
                } else {
                    0.0
                };
                let y = alpha + 0.25 * t as f64 + eff + eps;
                let w = if t >= g { d } else { 0.0 };
                records.push(PanelRecord {
                    unit: unit.clone(),
                    period: t as i64,
                    dose: w,
                    outcome: y,
                });
            }
        }
        PanelDataset::from_records(records)
    };

    let standard_panel = make_panel(&mut rng)?;
    let strong_panel = make_panel(&mut rng)?;

    let standard_oracle = OracleEffects {
        att_dd: Box::new(|d| if d > 0.0 { exp_effect(d) } else { 0.0 }),
        acrt_dd: Box::new(|d| if d > 0.0 { 1.0 } else { 0.0 }),
        selection_bias_slope: Box::new(|d| if d > 0.0 { exp_bias(d) } else { 0.0 }),
        ate_gtd: Box::new(|_, t, d| {
            if t >= 3 && d > 0.0 {
                exp_effect(d)
            } else {
                0.0
            }
        }),
        acr_gtd: Box::new(|_, _, _| 1.0),
        post_trend: 0.25,
    };
    let strong_oracle = OracleEffects {
        att_dd: Box::new(|d| if d > 0.0 { exp_effect(d) } else { 0.0 }),
        // Common effect curve: the population causal response is the full
        // derivative of (1+d)ln(1+d).
        acrt_dd: Box::new(|d| if d > 0.0 { 1.0 + exp_bias(d) } else { 0.0 }),
        selection_bias_slope: Box::new(|_| 0.0),
        ate_gtd: Box::new(|_, t, d| {
            if t >= 3 && d > 0.0 {
                exp_effect(d)
            } else {
                0.0
            }
        }),
        acr_gtd: Box::new(|_, _, d| if d > 0.0 { 1.0 + exp_bias(d) } else { 0.0 }),
        post_trend: 0.25,
    };

    Ok((
        (standard_panel, standard_oracle),
        (strong_panel, strong_oracle),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_panels() {
        let spec = DgpSpec::two_period_exponential(42);
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate(&DgpSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_two_period_law() {
        let mut spec = DgpSpec::two_period_exponential(7);
        spec.noise_sd = 0.0;
        let (panel, oracle) = generate(&spec).unwrap();
        for u in 0..panel.n_units() {
            let d = panel.exposure(u, 2);
            let dy = panel.outcome(u, 2) - panel.outcome(u, 1);
            let expect = 1.0 / 3.0 + (oracle.att_dd)(d);
            assert!((dy - expect).abs() < 1e-12, "unit {u}: {dy} vs {expect}");
        }
        // Doses: zero or multiples of 0.5, at least one distinct positive.
        let doses = panel.unit_doses();
        assert!(doses.contains(&0.0));
        for &d in &doses {
            assert!(d == 0.0 || (d >= 0.5 && (d / 0.5 - (d / 0.5).round()).abs() < 1e-12));
        }
    }

    #[test]
    fn noiseless_level_estimates_hit_oracle_at_every_atom() {
        use crate::baseline::{att_dd, Assumption, TwoPeriodPanel};
        use crate::panel::GridConfig;
        use crate::smooth::SmootherSpec;
        let mut spec = DgpSpec::two_period_exponential(15);
        spec.noise_sd = 0.0;
        let (panel, oracle) = generate(&spec).unwrap();
        let two = TwoPeriodPanel::new(&panel, GridConfig::default()).unwrap();
        let smoother = SmootherSpec::default();
        for &d in &two.grid().points.clone() {
            let est = att_dd(&two, d, &smoother, Assumption::Pt).unwrap();
            assert!(
                (est.value - (oracle.att_dd)(d)).abs() < 1e-12,
                "att at {d}: {} vs {}",
                est.value,
                (oracle.att_dd)(d)
            );
        }
    }

    #[test]
    fn exponential_oracle_invariants() {
        let spec = DgpSpec::two_period_exponential(1);
        let (_, oracle) = generate(&spec).unwrap();
        assert_eq!((oracle.att_dd)(0.0), 0.0);
        for d in [0.5, 1.0, 2.0, 5.0] {
            assert_eq!((oracle.acrt_dd)(d), 1.0);
            assert!(((oracle.selection_bias_slope)(d) - (1.0 + d).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_coherence_derivative() {
        // Central difference of the level-effect oracle equals causal
        // response plus selection bias.
        let (_, oracle) = generate(&DgpSpec::two_period_exponential(3)).unwrap();
        let h = 1e-4;
        for d in [0.5, 1.0, 2.5, 4.0] {
            let fd = ((oracle.att_dd)(d + h) - (oracle.att_dd)(d - h)) / (2.0 * h);
            let truth = (oracle.acrt_dd)(d) + (oracle.selection_bias_slope)(d);
            assert!((fd - truth).abs() < 1e-6, "at {d}: {fd} vs {truth}");
        }
    }

    #[test]
    fn staggered_outcome_jump() {
        let spec = DgpSpec::four_group_staggered(5);
        let (panel, oracle) = generate(&spec).unwrap();
        // Early-high units (dose 4) jump by 4^1.5 = 8 at treatment.
        assert_eq!((oracle.ate_gtd)(3, 4, 4.0), 8.0);
        let mut found = false;
        for u in 0..panel.n_units() {
            if panel.unit_dose(u) == 4.0 {
                let g = (1..=6).find(|&t| panel.exposure(u, t) > 0.0).unwrap();
                assert_eq!(g, 3);
                let jump = panel.outcome(u, g) - panel.outcome(u, g - 1);
                // Jump = trend step + effect.
                assert!((jump - (0.1 + 8.0)).abs() < 1e-12);
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = DgpSpec::two_period_exponential(1);
        spec.n_units = 1;
        assert_eq!(generate(&spec).unwrap_err().name(), "InvalidSpec");
        let mut spec = DgpSpec::four_group_staggered(1);
        spec.noise_sd = -1.0;
        assert_eq!(generate(&spec).unwrap_err().name(), "InvalidSpec");
    }

    #[test]
    fn oracle_target_constant_acr() {
        let spec = DgpSpec::constant_acr(2.0, 9);
        let target = oracle_twfe_target(&spec).unwrap();
        assert!((target - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_target_exponential_biased_above_own_dose_response() {
        // The hump-shaped weights average the observed dose slopes
        // 1 + ln(1+d), landing near 2.7: far above the own-dose causal
        // response of 1, the headline upward bias. (Cross-checked against
        // an independent covariance-form computation of the same
        // population functional.)
        let spec = DgpSpec::two_period_exponential(11);
        let target = oracle_twfe_target(&spec).unwrap();
        assert!(target > 2.5 && target < 2.9, "target {target}");
        // Determinism.
        assert_eq!(target, oracle_twfe_target(&spec).unwrap());
    }

    #[test]
    fn no_oracle_for_ramp() {
        let spec = DgpSpec::ramp_dynamics(1.0, 1.0, 2);
        assert_eq!(
            oracle_twfe_target(&spec).unwrap_err().name(),
            "NoAnalyticOracle"
        );
    }

    #[test]
    fn paired_panels_share_observable_design() {
        let ((std_panel, std_oracle), (strong_panel, strong_oracle)) =
            paired_pt_dgps(40, 0.5, 17).unwrap();
        assert_eq!(std_panel.n_units(), strong_panel.n_units());
        assert_eq!(std_panel.unit_doses(), strong_panel.unit_doses());
        // Different interpretive oracles over the same observable law.
        for d in [1.0, 2.0, 3.0] {
            let std_slope = (std_oracle.acrt_dd)(d) + (std_oracle.selection_bias_slope)(d);
            let strong_slope = (strong_oracle.acr_gtd)(3, 3, d);
            assert!((std_slope - strong_slope).abs() < 1e-15);
        }
    }
}
