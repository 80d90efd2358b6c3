//! Multi-period TWFE coefficient and its four-comparison decomposition.
//!
//! The within estimator on a staggered panel equals a variance-weighted
//! average of four kinds of simple comparisons: within-group dose slopes,
//! early-vs-later paths before the later group treats, later-vs-already-
//! treated paths, and long endpoint comparisons between groups with
//! different mean doses. All weights are non-negative and sum to one; the
//! identity holds on the empirical measure up to float roundoff.
//!
//! Two of the comparisons are contaminated when effects evolve over time
//! or differ across groups at the same dose; `nuisance_diagnostics`
//! computes sample analogues of those contaminations against untreated
//! paths.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{ksum, mean, pop_covariance, pop_variance, KahanSum};
use crate::panel::{PanelDataset, TimingIndex};

/// v(g, t) = 1{t >= g} - gbar_g: the within-transformed treatment clock.
/// Sums to zero over periods for every group; identically zero for the
/// never-treated group.
pub fn vbar(timing: &TimingIndex, g: usize, t: usize) -> f64 {
    let ind = if g <= timing.n_periods() && t >= g {
        1.0
    } else {
        0.0
    };
    ind - timing.gbar(g)
}

/// TWFE slope from two-way demeaned exposure on the stacked panel.
///
/// Equals full dummy-variable OLS on a balanced panel.
pub fn twfe_beta_mp(data: &PanelDataset, timing: &TimingIndex) -> Result<f64> {
    let (num, den) = twfe_moments(data, timing);
    if den == 0.0 {
        return Err(Error::ZeroDoseVariance(
            "two-way demeaned exposure has zero variance".into(),
        ));
    }
    Ok(num / den)
}

/// Returns ((1/nT) sum Y*Wdd, (1/nT) sum Wdd^2) with exposure implied by
/// the timing index.
#[allow(clippy::needless_range_loop)]
fn twfe_moments(data: &PanelDataset, timing: &TimingIndex) -> (f64, f64) {
    let n = data.n_units();
    let t_max = data.n_periods();
    let nt = (n * t_max) as f64;

    // Per-unit and per-period exposure means.
    let mut unit_mean = vec![0.0; n];
    let mut period_mean = vec![0.0; t_max];
    let mut grand = KahanSum::new();
    for u in 0..n {
        let mut acc = KahanSum::new();
        for t in 1..=t_max {
            let w = timing.exposure(data, u, t);
            acc.add(w);
            period_mean[t - 1] += w;
        }
        unit_mean[u] = acc.total() / t_max as f64;
        grand.add(acc.total());
    }
    for p in period_mean.iter_mut() {
        *p /= n as f64;
    }
    let grand = grand.total() / nt;

    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for u in 0..n {
        for t in 1..=t_max {
            let wdd = timing.exposure(data, u, t) - unit_mean[u] - period_mean[t - 1] + grand;
            num.add(data.outcome(u, t) * wdd);
            den.add(wdd * wdd);
        }
    }
    (num.total() / nt, den.total() / nt)
}

/// The four elementary comparisons for an ordered pair of treated groups.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaTerms {
    /// Within-group dose slope of post-vs-pre outcome paths for g.
    pub within_g: f64,
    /// Early group g vs later group k while k is still untreated, per
    /// unit of g's mean dose.
    pub mid_pre: f64,
    /// Later group k vs already-treated g after k treats, per unit of
    /// k's mean dose.
    pub post_mid: f64,
    /// Endpoint comparison over common untreated and common treated
    /// windows, per unit of the mean-dose difference. When g's mean dose
    /// is below k's, numerator and denominator both flip sign, so the
    /// reported value is already the positive-weight comparison.
    pub post_pre: f64,
}

fn group_window_diff(
    data: &PanelDataset,
    timing: &TimingIndex,
    g: usize,
    hi: (usize, usize),
    lo: (usize, usize),
) -> f64 {
    let info = timing.group_info(g).expect("group exists");
    mean(
        &info
            .units
            .iter()
            .map(|&u| data.window_mean(u, hi.0, hi.1) - data.window_mean(u, lo.0, lo.1))
            .collect::<Vec<f64>>(),
    )
}

fn group_dose_mean(timing: &TimingIndex, g: usize) -> f64 {
    mean(&timing.group_info(g).expect("group exists").doses)
}

fn group_dose_var(timing: &TimingIndex, g: usize) -> f64 {
    pop_variance(&timing.group_info(g).expect("group exists").doses)
}

/// Exact sample analogues of the four comparisons for treated groups
/// 2 <= g < k <= T.
pub fn delta_terms(
    data: &PanelDataset,
    timing: &TimingIndex,
    g: usize,
    k: usize,
) -> Result<DeltaTerms> {
    let t_max = timing.n_periods();
    if !(2 <= g && g < k && k <= t_max) {
        return Err(Error::EmptyWindow(format!(
            "delta terms need treated groups 2 <= g < k <= {t_max}, got g={g}, k={k}"
        )));
    }
    for gg in [g, k] {
        if timing.group_info(gg).is_none() {
            return Err(Error::EmptyCell(format!("no units in group {gg}")));
        }
    }
    let var_g = group_dose_var(timing, g);
    if var_g == 0.0 {
        return Err(Error::DegenerateDose(format!(
            "group {g} has no dose variation; its within comparison is undefined"
        )));
    }
    let mean_g = group_dose_mean(timing, g);
    let mean_k = group_dose_mean(timing, k);
    if mean_g == mean_k {
        return Err(Error::EqualMeanDoses {
            g: g as u32,
            k: k as u32,
        });
    }
    Ok(delta_terms_unchecked(data, timing, g, k))
}

/// Window layout for a pair: PRE(g) = 1..g-1, MID(g,k) = g..k-1,
/// POST(k) = k..T. The never-treated sentinel can stand in for k, in
/// which case only the mid-pre comparison is defined (MID runs to T).
fn pair_windows(timing: &TimingIndex, g: usize, k: usize) -> ((usize, usize), (usize, usize)) {
    let t_max = timing.n_periods();
    let pre = (1, g - 1);
    let mid = (g, (k - 1).min(t_max));
    (pre, mid)
}

fn delta_terms_unchecked(
    data: &PanelDataset,
    timing: &TimingIndex,
    g: usize,
    k: usize,
) -> DeltaTerms {
    let t_max = timing.n_periods();
    let (pre, mid) = pair_windows(timing, g, k);

    // Within-group dose slope for g.
    let info_g = timing.group_info(g).expect("group exists");
    let post_g = (g, t_max);
    let paths: Vec<f64> = info_g
        .units
        .iter()
        .map(|&u| data.window_mean(u, post_g.0, post_g.1) - data.window_mean(u, pre.0, pre.1))
        .collect();
    let var_g = group_dose_var(timing, g);
    let within_g = if var_g == 0.0 {
        0.0
    } else {
        pop_covariance(&paths, &info_g.doses) / var_g
    };

    let mean_g = group_dose_mean(timing, g);
    let mean_k = group_dose_mean(timing, k);

    let mid_pre = (group_window_diff(data, timing, g, mid, pre)
        - group_window_diff(data, timing, k, mid, pre))
        / mean_g;

    let (post_mid, post_pre) = if k <= t_max {
        let post = (k, t_max);
        let pm = (group_window_diff(data, timing, k, post, mid)
            - group_window_diff(data, timing, g, post, mid))
            / mean_k;
        let pp = if mean_g == mean_k {
            0.0
        } else {
            (group_window_diff(data, timing, g, post, pre)
                - group_window_diff(data, timing, k, post, pre))
                / (mean_g - mean_k)
        };
        (pm, pp)
    } else {
        (0.0, 0.0)
    };

    DeltaTerms {
        within_g,
        mid_pre,
        post_mid,
        post_pre,
    }
}

/// Shared TWFE internals recorded alongside a decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct TwfeMpInternals {
    /// (1/T) mean of squared two-way demeaned exposure, computed directly.
    pub denom_direct: f64,
    /// Sum of the raw (un-normalized) weights; equals denom_direct up to
    /// roundoff, which cross-checks the weight algebra.
    pub denom_weight_sum: f64,
    pub gbar: Vec<(usize, f64)>,
    pub dose_mean_by_group: Vec<(usize, f64)>,
    pub dose_var_by_group: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MpTermKind {
    Within,
    MidPre,
    PostMid,
    Long,
}

/// One weighted comparison in the multi-period decomposition. `k` is the
/// never-treated sentinel for comparisons against the never-treated arm.
#[derive(Debug, Clone, Serialize)]
pub struct MpTerm {
    pub kind: MpTermKind,
    pub g: usize,
    /// Later group of the pair; equal to `g` for within terms.
    pub k: usize,
    pub weight: f64,
    pub delta: f64,
}

/// Nuisance contaminations for a pair (g, k), measured against untreated
/// paths.
#[derive(Debug, Clone, Serialize)]
pub struct NuisanceDiagnostics {
    pub g: usize,
    pub k: usize,
    /// Treatment-effect dynamics in group g: its path over POST(k)
    /// minus its path over MID(g,k), both against untreated paths from
    /// PRE(g). Zero when effects are flat after treatment.
    pub dynamics: f64,
    /// Dose-profile difference between k and g over the endpoint window,
    /// per unit of mean-dose difference. Requires both groups to share
    /// the same positive dose atoms; `None` otherwise (and when mean
    /// doses tie, where the endpoint weight vanishes).
    pub heterogeneity: Option<f64>,
}

/// Full four-comparison decomposition report.
#[derive(Debug, Clone, Serialize)]
pub struct MpDecompositionReport {
    pub beta_twfe: f64,
    pub terms: Vec<MpTerm>,
    /// beta minus the weighted delta sum.
    pub residual: f64,
    pub weight_sum: f64,
    pub internals: TwfeMpInternals,
    pub nuisance: Vec<NuisanceDiagnostics>,
}

/// Decompose the multi-period TWFE slope into the four comparisons.
pub fn decompose_mp(data: &PanelDataset, timing: &TimingIndex) -> Result<MpDecompositionReport> {
    let (num, den) = twfe_moments(data, timing);
    if den == 0.0 {
        return Err(Error::ZeroDoseVariance(
            "two-way demeaned exposure has zero variance".into(),
        ));
    }
    let beta = num / den;
    let levels = timing.group_levels();
    let sentinel = timing.sentinel();

    let mut raw_terms: Vec<MpTerm> = Vec::new();

    // Within-group comparisons (never-treated group carries no clock
    // variation and is skipped).
    for &g in &levels {
        if g == sentinel {
            continue;
        }
        let gbar = timing.gbar(g);
        let var_g = group_dose_var(timing, g);
        let w = var_g * (1.0 - gbar) * gbar * timing.share(g);
        let delta = if var_g == 0.0 {
            0.0
        } else {
            let info = timing.group_info(g).expect("group exists");
            let t_max = timing.n_periods();
            let paths: Vec<f64> = info
                .units
                .iter()
                .map(|&u| data.window_mean(u, g, t_max) - data.window_mean(u, 1, g - 1))
                .collect();
            pop_covariance(&paths, &info.doses) / var_g
        };
        raw_terms.push(MpTerm {
            kind: MpTermKind::Within,
            g,
            k: g,
            weight: w,
            delta,
        });
    }

    // Pairwise timing comparisons, including pairs with the sentinel
    // (whose post-mid and long weights are identically zero).
    for i in 0..levels.len() {
        for j in (i + 1)..levels.len() {
            let (g, k) = (levels[i], levels[j]);
            if g == sentinel {
                continue;
            }
            let gbar_g = timing.gbar(g);
            let gbar_k = timing.gbar(k);
            let mean_g = group_dose_mean(timing, g);
            let mean_k = group_dose_mean(timing, k);
            let p = timing.share(g) * timing.share(k);
            let d = delta_terms_unchecked(data, timing, g, k);

            raw_terms.push(MpTerm {
                kind: MpTermKind::MidPre,
                g,
                k,
                weight: mean_g * mean_g * (1.0 - gbar_g) * (gbar_g - gbar_k) * p,
                delta: d.mid_pre,
            });
            raw_terms.push(MpTerm {
                kind: MpTermKind::PostMid,
                g,
                k,
                weight: mean_k * mean_k * gbar_k * (gbar_g - gbar_k) * p,
                delta: d.post_mid,
            });
            let diff = mean_g - mean_k;
            raw_terms.push(MpTerm {
                kind: MpTermKind::Long,
                g,
                k,
                weight: diff * diff * gbar_k * (1.0 - gbar_g) * p,
                delta: d.post_pre,
            });
        }
    }

    let denom_weight_sum = ksum(raw_terms.iter().map(|t| t.weight));
    let terms: Vec<MpTerm> = raw_terms
        .into_iter()
        .map(|t| MpTerm {
            weight: t.weight / den,
            ..t
        })
        .collect();

    let weight_sum = ksum(terms.iter().map(|t| t.weight));
    let recon = ksum(terms.iter().map(|t| t.weight * t.delta));
    let residual = beta - recon;

    let treated: Vec<usize> = levels.iter().copied().filter(|&g| g != sentinel).collect();
    let internals = TwfeMpInternals {
        denom_direct: den,
        denom_weight_sum,
        gbar: treated.iter().map(|&g| (g, timing.gbar(g))).collect(),
        dose_mean_by_group: treated
            .iter()
            .map(|&g| (g, group_dose_mean(timing, g)))
            .collect(),
        dose_var_by_group: treated
            .iter()
            .map(|&g| (g, group_dose_var(timing, g)))
            .collect(),
    };

    // Nuisance diagnostics for every real treated pair, when untreated
    // units exist to difference against.
    let mut nuisance = Vec::new();
    let has_untreated = (0..data.n_units()).any(|u| data.unit_dose(u) == 0.0);
    if has_untreated {
        for i in 0..treated.len() {
            for j in (i + 1)..treated.len() {
                nuisance.push(nuisance_diagnostics(data, timing, treated[i], treated[j])?);
            }
        }
    }

    Ok(MpDecompositionReport {
        beta_twfe: beta,
        terms,
        residual,
        weight_sum,
        internals,
        nuisance,
    })
}

/// Mean path over `hi` minus `lo` windows for group g, adjusted by the
/// same path among untreated (dose 0) units.
fn pi_term(
    data: &PanelDataset,
    timing: &TimingIndex,
    g: usize,
    hi: (usize, usize),
    lo: (usize, usize),
) -> f64 {
    let untreated: Vec<usize> = (0..data.n_units())
        .filter(|&u| data.unit_dose(u) == 0.0)
        .collect();
    let base = mean(
        &untreated
            .iter()
            .map(|&u| data.window_mean(u, hi.0, hi.1) - data.window_mean(u, lo.0, lo.1))
            .collect::<Vec<f64>>(),
    );
    group_window_diff(data, timing, g, hi, lo) - base
}

/// Same path, conditional on a dose atom within the group.
fn pi_term_at_dose(
    data: &PanelDataset,
    timing: &TimingIndex,
    g: usize,
    dose: f64,
    hi: (usize, usize),
    lo: (usize, usize),
) -> f64 {
    let untreated: Vec<usize> = (0..data.n_units())
        .filter(|&u| data.unit_dose(u) == 0.0)
        .collect();
    let base = mean(
        &untreated
            .iter()
            .map(|&u| data.window_mean(u, hi.0, hi.1) - data.window_mean(u, lo.0, lo.1))
            .collect::<Vec<f64>>(),
    );
    let info = timing.group_info(g).expect("group exists");
    let cell: Vec<f64> = info
        .units
        .iter()
        .filter(|&&u| data.unit_dose(u) == dose)
        .map(|&u| data.window_mean(u, hi.0, hi.1) - data.window_mean(u, lo.0, lo.1))
        .collect();
    mean(&cell) - base
}

/// Sample analogues of the nuisance corrections in the post-mid and long
/// comparisons for the pair (g, k).
pub fn nuisance_diagnostics(
    data: &PanelDataset,
    timing: &TimingIndex,
    g: usize,
    k: usize,
) -> Result<NuisanceDiagnostics> {
    let t_max = timing.n_periods();
    if !(2 <= g && g < k && k <= t_max) {
        return Err(Error::EmptyWindow(format!(
            "nuisance diagnostics need treated groups 2 <= g < k <= {t_max}, got g={g}, k={k}"
        )));
    }
    let has_untreated = (0..data.n_units()).any(|u| data.unit_dose(u) == 0.0);
    if !has_untreated {
        return Err(Error::NoUntreatedUnits(
            "nuisance paths are measured against dose-0 units".into(),
        ));
    }
    let pre = (1, g - 1);
    let mid = (g, k - 1);
    let post = (k, t_max);

    // Dynamics: group g's effect over POST(k) vs over MID(g,k).
    let dynamics = pi_term(data, timing, g, post, pre) - pi_term(data, timing, g, mid, pre);

    // Heterogeneity: compare the two groups' dose profiles of the
    // endpoint path. The telescoped sum is exact on a shared dose grid.
    let atoms_g = sorted_group_atoms(timing, g);
    let atoms_k = sorted_group_atoms(timing, k);
    let mean_g = group_dose_mean(timing, g);
    let mean_k = group_dose_mean(timing, k);
    let heterogeneity = if atoms_g == atoms_k && mean_g != mean_k {
        let info_k = timing.group_info(k).expect("group exists");
        let n_k = info_k.units.len() as f64;
        let mut acc = 0.0;
        let mut prev_dose = 0.0;
        let mut prev_pi_g = 0.0;
        let mut prev_pi_k = 0.0;
        for &a in &atoms_g {
            let p_ge = info_k.doses.iter().filter(|&&x| x >= a).count() as f64 / n_k;
            let pi_g = pi_term_at_dose(data, timing, g, a, post, pre);
            let pi_k = pi_term_at_dose(data, timing, k, a, post, pre);
            acc += p_ge * ((pi_k - prev_pi_k) - (pi_g - prev_pi_g));
            prev_dose = a;
            prev_pi_g = pi_g;
            prev_pi_k = pi_k;
        }
        let _ = prev_dose;
        Some(acc / (mean_g - mean_k))
    } else {
        None
    };

    Ok(NuisanceDiagnostics {
        g,
        k,
        dynamics,
        heterogeneity,
    })
}

fn sorted_group_atoms(timing: &TimingIndex, g: usize) -> Vec<f64> {
    let mut doses = timing.group_info(g).expect("group exists").doses.clone();
    doses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    doses.dedup();
    doses
}

/// Map of normalized weights keyed by (kind, g, k), mainly for tests.
pub fn weight_map(report: &MpDecompositionReport) -> BTreeMap<(MpTermKind, usize, usize), f64> {
    report
        .terms
        .iter()
        .map(|t| ((t.kind, t.g, t.k), t.weight))
        .collect()
}
