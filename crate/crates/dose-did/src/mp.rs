//! Group-time causal parameters for staggered continuous treatments.
//!
//! The building block is the (group, period, dose) cell: the path of
//! outcomes from the last untreated period g-1 to period t for units in
//! timing group g at dose d, adjusted by the same path among comparison
//! units that are not yet exposed (or never exposed). Slope parameters
//! are within-group dose comparisons, so the comparison term drops out
//! except at the group's lowest dose, which anchors at dose 0.
//!
//! Aggregations reduce the cell surface to group averages, an overall
//! dose curve, a single scalar, or event-study paths; negative event
//! times form a pre-test of parallel trends.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::baseline::Assumption;
use crate::error::{Error, Result};
use crate::numeric::mean;
use crate::panel::{DoseGrid, DoseKind, PanelDataset, TimingIndex};
use crate::smooth::{fit_at, SmootherSpec};

/// Comparison set for group-time cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpComparison {
    /// Units with zero exposure in period t (includes never-treated).
    NotYetTreated,
    /// Units that never become treated.
    NeverTreated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MpEstimand {
    AteGtd,
    AttGtd,
    AcrGtd,
}

/// One (group, period, dose) cell estimate.
#[derive(Debug, Clone, Serialize)]
pub struct GroupTimeEstimate {
    pub g: usize,
    pub t: usize,
    pub dose: f64,
    pub value: f64,
    pub estimand: MpEstimand,
    pub comparison: MpComparison,
    pub se: Option<f64>,
    pub n_eff: f64,
}

fn long_diff(data: &PanelDataset, unit: usize, t: usize, base: usize) -> f64 {
    data.outcome(unit, t) - data.outcome(unit, base)
}

fn comparison_units(timing: &TimingIndex, t: usize, comparison: MpComparison) -> Vec<usize> {
    match comparison {
        MpComparison::NotYetTreated => timing.not_yet_treated_at(t),
        MpComparison::NeverTreated => timing.never_treated(),
    }
}

/// Doses observed within group g, sorted and deduplicated exactly.
fn group_dose_atoms(data: &PanelDataset, timing: &TimingIndex, g: usize) -> Vec<f64> {
    let mut doses: Vec<f64> = match timing.group_info(g) {
        Some(info) => info.doses.clone(),
        None => return Vec::new(),
    };
    doses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    doses.dedup();
    let _ = data;
    doses
}

/// Mean long difference Y_t - Y_{g-1} within the (g, d) cell.
///
/// Exact cell mean on a discrete grid; local-linear fit within the group
/// when the grid is continuous.
fn treated_cell_mean(
    data: &PanelDataset,
    timing: &TimingIndex,
    grid: &DoseGrid,
    g: usize,
    t: usize,
    d: f64,
    spec: &SmootherSpec,
) -> Result<(f64, f64)> {
    let base = g - 1;
    let info = timing
        .group_info(g)
        .ok_or_else(|| Error::EmptyCell(format!("no units in group {g}")))?;
    match grid.kind {
        DoseKind::Discrete => {
            let mut acc = 0.0;
            let mut n = 0usize;
            for &u in &info.units {
                if data.unit_dose(u) == d {
                    acc += long_diff(data, u, t, base);
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::EmptyCell(format!(
                    "no units in group {g} with dose {d}"
                )));
            }
            Ok((acc / n as f64, n as f64))
        }
        DoseKind::Continuous => {
            let xs: Vec<f64> = info.units.iter().map(|&u| data.unit_dose(u)).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if d < lo || d > hi {
                return Err(Error::DoseOutOfSupport {
                    dose: d,
                    d_lo: lo,
                    d_hi: hi,
                });
            }
            let ys: Vec<f64> = info
                .units
                .iter()
                .map(|&u| long_diff(data, u, t, base))
                .collect();
            let (level, _, kish) = fit_at(spec, &xs, &ys, d)?;
            Ok((level, kish))
        }
    }
}

/// Level effect for group g in period t at dose d.
///
/// Base period is g-1; `t` below g yields a placebo that is zero by
/// construction at t = g-1 and informative for earlier t.
#[allow(clippy::too_many_arguments)]
pub fn ate_gtd(
    data: &PanelDataset,
    timing: &TimingIndex,
    grid: &DoseGrid,
    g: usize,
    t: usize,
    d: f64,
    comparison: MpComparison,
    spec: &SmootherSpec,
    assumption: Assumption,
) -> Result<GroupTimeEstimate> {
    check_cell_indices(timing, g, t)?;
    let base = g - 1;
    let (treated_mean, n_treated) = treated_cell_mean(data, timing, grid, g, t, d, spec)?;

    let comp = comparison_units(timing, t, comparison);
    // The treated group itself is never part of its comparison set: for
    // not-yet-treated at t < g the group would qualify by exposure alone.
    let comp: Vec<usize> = comp
        .into_iter()
        .filter(|&u| timing.group_of(u) != g)
        .collect();
    if comp.is_empty() {
        return Err(Error::NoComparisonUnits(format!(
            "{comparison:?} in period {t}"
        )));
    }
    let comp_mean = mean(
        &comp
            .iter()
            .map(|&u| long_diff(data, u, t, base))
            .collect::<Vec<f64>>(),
    );

    Ok(GroupTimeEstimate {
        g,
        t,
        dose: d,
        value: treated_mean - comp_mean,
        estimand: match assumption {
            Assumption::StrongPt => MpEstimand::AteGtd,
            Assumption::Pt => MpEstimand::AttGtd,
        },
        comparison,
        se: None,
        n_eff: n_treated + comp.len() as f64,
    })
}

/// Causal response for group g in period t at dose d.
///
/// Discrete grid: adjacent-dose slope of the long difference within the
/// group; the group's lowest dose anchors at dose 0 via the comparison
/// group, mirroring the two-period convention. Continuous grid:
/// local-linear derivative within the group.
#[allow(clippy::too_many_arguments)]
pub fn acr_gtd(
    data: &PanelDataset,
    timing: &TimingIndex,
    grid: &DoseGrid,
    g: usize,
    t: usize,
    d: f64,
    comparison: MpComparison,
    spec: &SmootherSpec,
) -> Result<GroupTimeEstimate> {
    check_cell_indices(timing, g, t)?;
    let base = g - 1;
    let info = timing
        .group_info(g)
        .ok_or_else(|| Error::EmptyCell(format!("no units in group {g}")))?;
    let atoms = group_dose_atoms(data, timing, g);
    if atoms.len() < 2 {
        return Err(Error::DegenerateDose(format!(
            "group {g} has a single dose; no within-group slope exists"
        )));
    }

    match grid.kind {
        DoseKind::Discrete => {
            let j = atoms
                .iter()
                .position(|&a| a == d)
                .ok_or_else(|| Error::EmptyCell(format!("dose {d} not observed in group {g}")))?;
            if j == 0 {
                // Anchored first slope: level effect per dose unit.
                let level = ate_gtd(
                    data,
                    timing,
                    grid,
                    g,
                    t,
                    d,
                    comparison,
                    spec,
                    Assumption::StrongPt,
                )?;
                return Ok(GroupTimeEstimate {
                    value: level.value / d,
                    estimand: MpEstimand::AcrGtd,
                    ..level
                });
            }
            let (m_j, n_j) = treated_cell_mean(data, timing, grid, g, t, d, spec)?;
            let (m_prev, n_prev) = treated_cell_mean(data, timing, grid, g, t, atoms[j - 1], spec)?;
            Ok(GroupTimeEstimate {
                g,
                t,
                dose: d,
                value: (m_j - m_prev) / (atoms[j] - atoms[j - 1]),
                estimand: MpEstimand::AcrGtd,
                comparison,
                se: None,
                n_eff: n_j + n_prev,
            })
        }
        DoseKind::Continuous => {
            let xs: Vec<f64> = info.units.iter().map(|&u| data.unit_dose(u)).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if d < lo || d > hi {
                return Err(Error::DoseOutOfSupport {
                    dose: d,
                    d_lo: lo,
                    d_hi: hi,
                });
            }
            let ys: Vec<f64> = info
                .units
                .iter()
                .map(|&u| long_diff(data, u, t, base))
                .collect();
            let (_, slope, kish) = fit_at(spec, &xs, &ys, d)?;
            Ok(GroupTimeEstimate {
                g,
                t,
                dose: d,
                value: slope,
                estimand: MpEstimand::AcrGtd,
                comparison,
                se: None,
                n_eff: kish,
            })
        }
    }
}

fn check_cell_indices(timing: &TimingIndex, g: usize, t: usize) -> Result<()> {
    let t_max = timing.n_periods();
    if g < 2 || g > t_max {
        return Err(Error::EmptyCell(format!("group {g} outside 2..={t_max}")));
    }
    if t < 1 || t > t_max {
        return Err(Error::EmptyCell(format!("period {t} outside 1..={t_max}")));
    }
    Ok(())
}

/// Compute the full post-treatment cell surface for one estimand.
pub fn compute_all_cells(
    data: &PanelDataset,
    timing: &TimingIndex,
    grid: &DoseGrid,
    estimand: MpEstimand,
    comparison: MpComparison,
    spec: &SmootherSpec,
    assumption: Assumption,
) -> Result<Vec<GroupTimeEstimate>> {
    let mut cells = Vec::new();
    for g in timing.treated_groups() {
        let atoms = group_dose_atoms(data, timing, g);
        for t in g..=timing.n_periods() {
            for &d in &atoms {
                let cell = match estimand {
                    MpEstimand::AcrGtd => acr_gtd(data, timing, grid, g, t, d, comparison, spec)?,
                    _ => ate_gtd(data, timing, grid, g, t, d, comparison, spec, assumption)?,
                };
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

/// Aggregation target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationKind {
    /// Average over post periods for one group and dose.
    Group { g: usize, dose: f64 },
    /// Group-share-weighted average of group aggregates at one dose.
    Overall { dose: f64 },
    /// Overall aggregate averaged over the treated dose distribution.
    StarMp,
    /// Effect after exactly e periods of exposure, at one dose.
    EventStudy { e: i64, dose: f64 },
    /// Event-study effect averaged over the treated dose distribution,
    /// held fixed across event times.
    EventStudyAvg { e: i64 },
}

/// Identifies a cell inside an aggregation's weight map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellKey {
    pub g: usize,
    pub t: usize,
    pub dose: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregatedEffect {
    pub kind: AggregationKind,
    pub value: f64,
    pub se: Option<f64>,
    /// Probability weight attached to each included cell; sums to one.
    pub weights_used: Vec<(CellKey, f64)>,
}

/// Number of group-g units at exactly dose d.
fn group_dose_count(timing: &TimingIndex, g: usize, d: f64) -> usize {
    timing
        .group_info(g)
        .map_or(0, |i| i.doses.iter().filter(|&&x| x == d).count())
}

struct CellIndex {
    map: BTreeMap<(usize, usize, u64), f64>,
}

impl CellIndex {
    fn new(cells: &[GroupTimeEstimate]) -> Self {
        let mut map = BTreeMap::new();
        for c in cells {
            map.insert((c.g, c.t, c.dose.to_bits()), c.value);
        }
        CellIndex { map }
    }

    fn get(&self, g: usize, t: usize, d: f64) -> Option<f64> {
        self.map.get(&(g, t, d.to_bits())).copied()
    }
}

/// Weighted average of group-time cells per the requested aggregation.
///
/// The `estimates` set is the universe of cells; any cell the aggregation
/// needs but does not find is reported in a MissingCells error rather
/// than silently reweighted.
pub fn aggregate(
    data: &PanelDataset,
    timing: &TimingIndex,
    estimates: &[GroupTimeEstimate],
    kind: AggregationKind,
) -> Result<AggregatedEffect> {
    let index = CellIndex::new(estimates);
    let mut weights: Vec<(CellKey, f64)> = Vec::new();
    collect_weights(data, timing, kind, &mut weights)?;

    let mut missing = Vec::new();
    let mut value = 0.0;
    for &(key, w) in &weights {
        match index.get(key.g, key.t, key.dose) {
            Some(v) => value += w * v,
            None => missing.push(format!("(g={}, t={}, d={})", key.g, key.t, key.dose)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    Ok(AggregatedEffect {
        kind,
        value,
        se: None,
        weights_used: weights,
    })
}

fn collect_weights(
    data: &PanelDataset,
    timing: &TimingIndex,
    kind: AggregationKind,
    out: &mut Vec<(CellKey, f64)>,
) -> Result<()> {
    let t_max = timing.n_periods();
    match kind {
        AggregationKind::Group { g, dose } => {
            if group_dose_count(timing, g, dose) == 0 {
                return Err(Error::EmptyCell(format!(
                    "no units in group {g} at dose {dose}"
                )));
            }
            let span = (t_max - g + 1) as f64;
            for t in g..=t_max {
                out.push((CellKey { g, t, dose }, 1.0 / span));
            }
        }
        AggregationKind::Overall { dose } => {
            // P(G = g | treated, D = dose) from within-dose-atom group counts.
            let counts: Vec<(usize, usize)> = timing
                .treated_groups()
                .iter()
                .map(|&g| (g, group_dose_count(timing, g, dose)))
                .filter(|&(_, c)| c > 0)
                .collect();
            let total: usize = counts.iter().map(|&(_, c)| c).sum();
            if total == 0 {
                return Err(Error::EmptyCell(format!(
                    "dose {dose} not observed among treated"
                )));
            }
            for (g, c) in counts {
                let p_g = c as f64 / total as f64;
                let span = (t_max - g + 1) as f64;
                for t in g..=t_max {
                    out.push((CellKey { g, t, dose }, p_g / span));
                }
            }
        }
        AggregationKind::StarMp => {
            for (dose, share) in treated_dose_shares(data, timing) {
                let mut inner = Vec::new();
                collect_weights(data, timing, AggregationKind::Overall { dose }, &mut inner)?;
                for (key, w) in inner {
                    out.push((key, share * w));
                }
            }
        }
        AggregationKind::EventStudy { e, dose } => {
            let counts: Vec<(usize, usize)> = timing
                .treated_groups()
                .iter()
                .filter(|&&g| in_event_window(g, e, t_max))
                .map(|&g| (g, group_dose_count(timing, g, dose)))
                .filter(|&(_, c)| c > 0)
                .collect();
            let total: usize = counts.iter().map(|&(_, c)| c).sum();
            if total == 0 {
                return Err(Error::MissingCells(vec![format!(
                    "no group observes dose {dose} with event time {e} inside the panel"
                )]));
            }
            for (g, c) in counts {
                let t = (g as i64 + e) as usize;
                out.push((CellKey { g, t, dose }, c as f64 / total as f64));
            }
        }
        AggregationKind::EventStudyAvg { e } => {
            for (dose, share) in treated_dose_shares(data, timing) {
                let mut inner = Vec::new();
                collect_weights(
                    data,
                    timing,
                    AggregationKind::EventStudy { e, dose },
                    &mut inner,
                )?;
                for (key, w) in inner {
                    out.push((key, share * w));
                }
            }
        }
    }
    Ok(())
}

fn in_event_window(g: usize, e: i64, t_max: usize) -> bool {
    let t = g as i64 + e;
    t >= 1 && t <= t_max as i64
}

/// Dose distribution among ever-treated units: (dose, share) pairs.
fn treated_dose_shares(data: &PanelDataset, timing: &TimingIndex) -> Vec<(f64, f64)> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    let mut total = 0usize;
    for u in 0..data.n_units() {
        if timing.group_of(u) != timing.sentinel() {
            *counts.entry(data.unit_dose(u).to_bits()).or_insert(0) += 1;
            total += 1;
        }
    }
    let mut shares: Vec<(f64, f64)> = counts
        .into_iter()
        .map(|(bits, c)| (f64::from_bits(bits), c as f64 / total as f64))
        .collect();
    shares.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    shares
}

/// Pre-test of parallel trends: event-study aggregates at negative event
/// times, using the slope of placebo long differences Y_{g+e} - Y_{g-1}
/// within groups. At e = -1 the placebo differences a variable with
/// itself and is zero by construction; earlier leads are informative.
pub fn pretest(
    data: &PanelDataset,
    timing: &TimingIndex,
    grid: &DoseGrid,
    e_min: i64,
    comparison: MpComparison,
    spec: &SmootherSpec,
) -> Result<Vec<AggregatedEffect>> {
    if e_min >= 0 {
        return Err(Error::Usage(format!(
            "pretest needs e_min < 0, got {e_min}"
        )));
    }
    let t_max = timing.n_periods();
    let mut results = Vec::new();
    for e in e_min..=-1 {
        // Placebo slope cells at t = g + e for every group inside the
        // panel window.
        let mut cells = Vec::new();
        for g in timing.treated_groups() {
            if !in_event_window(g, e, t_max) {
                continue;
            }
            let t = (g as i64 + e) as usize;
            for d in group_dose_atoms(data, timing, g) {
                cells.push(acr_gtd(data, timing, grid, g, t, d, comparison, spec)?);
            }
        }
        results.push(aggregate(
            data,
            timing,
            &cells,
            AggregationKind::EventStudyAvg { e },
        )?);
    }
    Ok(results)
}
