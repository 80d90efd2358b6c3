//! Panel ingestion, validation, and indexing.
//!
//! A panel is long-format data (unit, period, dose, outcome) that is
//! balanced, starts untreated, and follows staggered adoption: once a unit
//! becomes exposed to a positive dose, its exposure stays at that dose in
//! every later period. Periods are re-indexed to contiguous 1..T on load;
//! the original labels are retained for reporting.
//!
//! The `dose` column holds per-period exposure when timing is derived by
//! the first-positive-exposure rule, or a constant unit-level dose when an
//! explicit first-treatment-period column is supplied.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, pop_variance};

/// Column-name map for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schema {
    pub unit: String,
    pub period: String,
    pub dose: String,
    pub outcome: String,
    /// Optional explicit first-treatment-period column.
    pub onset: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            unit: "unit".into(),
            period: "period".into(),
            dose: "dose".into(),
            outcome: "outcome".into(),
            onset: None,
        }
    }
}

/// One long-format row.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRecord {
    pub unit: String,
    pub period: i64,
    pub dose: f64,
    pub outcome: f64,
}

/// Validated balanced panel.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    /// Original period labels in ascending order; internal periods are
    /// their 1-based ranks.
    period_labels: Vec<i64>,
    /// exposure[u][t-1] = dose experienced by unit u in period t.
    exposure: Vec<Vec<f64>>,
    /// outcomes[u][t-1].
    outcomes: Vec<Vec<f64>>,
    /// Explicit onset column (internal period index), when loaded.
    onset: Option<Vec<Option<usize>>>,
}

impl PanelDataset {
    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.period_labels.len()
    }

    pub fn unit_id(&self, unit: usize) -> &str {
        &self.unit_ids[unit]
    }

    pub fn period_label(&self, period: usize) -> i64 {
        self.period_labels[period - 1]
    }

    /// Outcome of `unit` in internal period `t` (1-based).
    pub fn outcome(&self, unit: usize, t: usize) -> f64 {
        self.outcomes[unit][t - 1]
    }

    /// Exposure of `unit` in internal period `t` (1-based).
    pub fn exposure(&self, unit: usize, t: usize) -> f64 {
        self.exposure[unit][t - 1]
    }

    /// The unit-level dose: the constant positive exposure once treated,
    /// 0 for units never exposed.
    pub fn unit_dose(&self, unit: usize) -> f64 {
        *self.exposure[unit]
            .last()
            .expect("panel has at least one period")
    }

    /// All unit-level doses, indexed by unit.
    pub fn unit_doses(&self) -> Vec<f64> {
        (0..self.n_units()).map(|u| self.unit_dose(u)).collect()
    }

    /// Mean outcome of `unit` over internal periods t1..=t2.
    pub fn window_mean(&self, unit: usize, t1: usize, t2: usize) -> f64 {
        debug_assert!(t1 >= 1 && t1 <= t2 && t2 <= self.n_periods());
        let slice = &self.outcomes[unit][t1 - 1..t2];
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    /// Construct and validate from long-format records.
    pub fn from_records(records: Vec<PanelRecord>) -> Result<Self> {
        Self::from_records_with_onset(records, None)
    }

    fn from_records_with_onset(
        records: Vec<PanelRecord>,
        onset_labels: Option<Vec<(String, Option<i64>)>>,
    ) -> Result<Self> {
        let mut period_labels: Vec<i64> = records.iter().map(|r| r.period).collect();
        period_labels.sort_unstable();
        period_labels.dedup();
        let t_max = period_labels.len();
        if t_max == 0 {
            return Err(Error::UnbalancedPanel(vec![]));
        }
        let period_rank: BTreeMap<i64, usize> = period_labels
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i))
            .collect();

        let mut unit_ids: Vec<String> = Vec::new();
        let mut unit_rank: BTreeMap<String, usize> = BTreeMap::new();
        let mut exposure: Vec<Vec<Option<f64>>> = Vec::new();
        let mut outcomes: Vec<Vec<Option<f64>>> = Vec::new();

        for rec in &records {
            if rec.dose.is_nan() || rec.dose < 0.0 {
                return Err(Error::NegativeDose {
                    unit: rec.unit.clone(),
                    period: rec.period,
                    dose: rec.dose,
                });
            }
            let u = *unit_rank.entry(rec.unit.clone()).or_insert_with(|| {
                unit_ids.push(rec.unit.clone());
                exposure.push(vec![None; t_max]);
                outcomes.push(vec![None; t_max]);
                unit_ids.len() - 1
            });
            let t = period_rank[&rec.period];
            if exposure[u][t].is_some() {
                // duplicate (unit, period) row
                return Err(Error::UnbalancedPanel(vec![rec.unit.clone()]));
            }
            exposure[u][t] = Some(rec.dose);
            outcomes[u][t] = Some(rec.outcome);
        }

        let mut offenders: Vec<String> = Vec::new();
        for (u, row) in exposure.iter().enumerate() {
            if row.iter().any(|v| v.is_none()) {
                offenders.push(unit_ids[u].clone());
            }
        }
        if !offenders.is_empty() {
            return Err(Error::UnbalancedPanel(offenders));
        }

        let exposure: Vec<Vec<f64>> = exposure
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.unwrap()).collect())
            .collect();
        let outcomes: Vec<Vec<f64>> = outcomes
            .into_iter()
            .map(|row| row.into_iter().map(|v| v.unwrap()).collect())
            .collect();

        // Staggered adoption: exposure is 0 until it turns positive, then
        // stays bitwise equal. Ties in doses are merged exactly; no fuzzy
        // binning happens here.
        for (u, row) in exposure.iter().enumerate() {
            let mut current: Option<f64> = None;
            for &w in row {
                match current {
                    None => {
                        if w > 0.0 {
                            current = Some(w);
                        }
                    }
                    Some(d) => {
                        if w != d {
                            return Err(Error::DoseChangesPostTreatment {
                                unit: unit_ids[u].clone(),
                                from: d,
                                to: w,
                            });
                        }
                    }
                }
            }
        }

        if exposure.iter().all(|row| row.iter().all(|&w| w == 0.0)) {
            return Err(Error::ZeroDoseVariance("no positive doses in panel".into()));
        }

        let onset = match onset_labels {
            None => None,
            Some(pairs) => {
                let mut per_unit: Vec<Option<usize>> = vec![None; unit_ids.len()];
                for (unit, label) in pairs {
                    if let Some(&u) = unit_rank.get(&unit) {
                        per_unit[u] = label.and_then(|l| period_rank.get(&l).map(|&i| i + 1));
                    }
                }
                Some(per_unit)
            }
        };

        Ok(PanelDataset {
            unit_ids,
            period_labels,
            exposure,
            outcomes,
            onset,
        })
    }

    /// Read a long-format CSV with a header row.
    pub fn load_csv<R: Read>(reader: R, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let ci_unit = find(&schema.unit)?;
        let ci_period = find(&schema.period)?;
        let ci_dose = find(&schema.dose)?;
        let ci_outcome = find(&schema.outcome)?;
        let ci_onset = match &schema.onset {
            Some(name) => Some(find(name)?),
            None => None,
        };

        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("cannot parse {what} value '{s}'")))
        };
        let parse_i64 = |s: &str, what: &str| -> Result<i64> {
            s.trim()
                .parse::<i64>()
                .map_err(|_| Error::Usage(format!("cannot parse {what} value '{s}'")))
        };

        let mut records = Vec::new();
        let mut onset_pairs: Vec<(String, Option<i64>)> = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let unit = row.get(ci_unit).unwrap_or("").to_string();
            let period = parse_i64(row.get(ci_period).unwrap_or(""), "period")?;
            let dose = parse_f64(row.get(ci_dose).unwrap_or(""), "dose")?;
            let outcome = parse_f64(row.get(ci_outcome).unwrap_or(""), "outcome")?;
            if let Some(ci) = ci_onset {
                let raw = row.get(ci).unwrap_or("").trim();
                let label = if raw.is_empty() {
                    None
                } else {
                    Some(parse_i64(raw, "onset")?)
                };
                onset_pairs.push((unit.clone(), label));
            }
            records.push(PanelRecord {
                unit,
                period,
                dose,
                outcome,
            });
        }
        Self::from_records_with_onset(records, ci_onset.map(|_| onset_pairs))
    }

    /// Panel made of the given units' rows (with repetition), keeping
    /// their full time paths. Invariants hold per copied unit; whether
    /// the selection retains any treated unit is the caller's concern.
    pub fn select_units(&self, indices: &[usize]) -> PanelDataset {
        PanelDataset {
            unit_ids: indices.iter().map(|&u| self.unit_ids[u].clone()).collect(),
            period_labels: self.period_labels.clone(),
            exposure: indices.iter().map(|&u| self.exposure[u].clone()).collect(),
            outcomes: indices.iter().map(|&u| self.outcomes[u].clone()).collect(),
            onset: self
                .onset
                .as_ref()
                .map(|o| indices.iter().map(|&u| o[u]).collect()),
        }
    }

    /// Rewrite the dose column as the timing-implied exposure and drop
    /// any onset column: after this, the first-positive-exposure rule
    /// re-derives the same timing, which keeps resampled copies
    /// self-describing.
    pub fn canonicalize_exposure(&self, timing: &TimingIndex) -> PanelDataset {
        let mut out = self.clone();
        for u in 0..out.n_units() {
            let d = out.unit_dose(u);
            for t in 1..=out.n_periods() {
                out.exposure[u][t - 1] = if t >= timing.group_of(u) { d } else { 0.0 };
            }
        }
        out.onset = None;
        out
    }

    /// Write the canonical CSV: unit,period,dose,outcome,group,exposure.
    ///
    /// `dose` is the constant unit-level dose, `exposure` the per-period
    /// exposure, and `group` the original period label of first
    /// treatment (empty for never-treated). The file reloads exactly,
    /// either with the dose column mapped to `exposure`, or with `group`
    /// as an explicit onset column.
    pub fn emit_canonical<W: Write>(&self, timing: &TimingIndex, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["unit", "period", "dose", "outcome", "group", "exposure"])?;
        for u in 0..self.n_units() {
            let g = timing.group_of(u);
            let group_label = if g == timing.sentinel() {
                String::new()
            } else {
                self.period_label(g).to_string()
            };
            for t in 1..=self.n_periods() {
                let w = if t >= g { self.unit_dose(u) } else { 0.0 };
                wtr.write_record(&[
                    self.unit_ids[u].clone(),
                    self.period_label(t).to_string(),
                    format!("{}", self.unit_dose(u)),
                    format!("{}", self.outcome(u, t)),
                    group_label.clone(),
                    format!("{w}"),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// How to determine each unit's first treatment period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoseOnset {
    /// G = first period with positive exposure (dose column is exposure).
    FirstPositiveExposure,
    /// Use the onset column captured at load (dose column is the constant
    /// unit-level dose).
    ExplicitColumn,
}

/// Per-group summary inside a [`TimingIndex`].
#[derive(Debug, Clone)]
pub struct GroupInfo {
    /// Unit indices in this group.
    pub units: Vec<usize>,
    /// Empirical group share p_g.
    pub share: f64,
    /// Fraction of periods spent treated: (T - g + 1)/T, 0 for never-treated.
    pub gbar: f64,
    /// Unit doses within the group.
    pub doses: Vec<f64>,
}

/// Treatment-timing index: groups, exposure paths, and group summaries.
#[derive(Debug, Clone)]
pub struct TimingIndex {
    /// First treated period per unit; `sentinel` for never-treated.
    group: Vec<usize>,
    /// T + 1.
    sentinel: usize,
    n_periods: usize,
    groups: BTreeMap<usize, GroupInfo>,
}

impl TimingIndex {
    /// The never-treated sentinel, T + 1.
    pub fn sentinel(&self) -> usize {
        self.sentinel
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    /// First treated period of `unit` (sentinel when never treated).
    pub fn group_of(&self, unit: usize) -> usize {
        self.group[unit]
    }

    /// Sorted distinct groups present, including the sentinel if any unit
    /// is never treated.
    pub fn group_levels(&self) -> Vec<usize> {
        self.groups.keys().copied().collect()
    }

    /// Sorted treated groups (sentinel excluded).
    pub fn treated_groups(&self) -> Vec<usize> {
        self.groups
            .keys()
            .copied()
            .filter(|&g| g != self.sentinel)
            .collect()
    }

    pub fn group_info(&self, g: usize) -> Option<&GroupInfo> {
        self.groups.get(&g)
    }

    /// Empirical group share p_g (0 when the group is absent).
    pub fn share(&self, g: usize) -> f64 {
        self.groups.get(&g).map_or(0.0, |i| i.share)
    }

    /// (T - g + 1)/T for treated groups, 0 for the sentinel.
    pub fn gbar(&self, g: usize) -> f64 {
        if g == self.sentinel {
            0.0
        } else {
            (self.n_periods - g + 1) as f64 / self.n_periods as f64
        }
    }

    /// Units with no exposure by period t (G > t), i.e. W_t = 0.
    pub fn not_yet_treated_at(&self, t: usize) -> Vec<usize> {
        (0..self.group.len())
            .filter(|&u| self.group[u] > t)
            .collect()
    }

    /// Never-treated units.
    pub fn never_treated(&self) -> Vec<usize> {
        (0..self.group.len())
            .filter(|&u| self.group[u] == self.sentinel)
            .collect()
    }

    /// Exposure implied by (G, D): dose if t >= G else 0.
    pub fn exposure(&self, data: &PanelDataset, unit: usize, t: usize) -> f64 {
        if t >= self.group[unit] {
            data.unit_dose(unit)
        } else {
            0.0
        }
    }
}

/// Derive treatment timing for a validated panel.
///
/// Units treated in the first period are rejected.
pub fn derive_timing(data: &PanelDataset, onset: DoseOnset) -> Result<TimingIndex> {
    let t_max = data.n_periods();
    let sentinel = t_max + 1;
    let mut group = Vec::with_capacity(data.n_units());

    for u in 0..data.n_units() {
        let g = match onset {
            DoseOnset::FirstPositiveExposure => (1..=t_max)
                .find(|&t| data.exposure(u, t) > 0.0)
                .unwrap_or(sentinel),
            DoseOnset::ExplicitColumn => {
                let col = data.onset.as_ref().ok_or_else(|| {
                    Error::Usage("no onset column was loaded with this panel".into())
                })?;
                let g = col[u].unwrap_or(sentinel);
                // Treated-with-zero-dose and dosed-but-never-treated rows
                // have no semantics in this model; reject rather than guess.
                if g <= t_max && data.unit_dose(u) == 0.0 {
                    return Err(Error::Usage(format!(
                        "unit '{}' has onset {} but dose 0",
                        data.unit_id(u),
                        g
                    )));
                }
                if g == sentinel && data.unit_dose(u) > 0.0 {
                    return Err(Error::Usage(format!(
                        "unit '{}' has a positive dose but no onset",
                        data.unit_id(u)
                    )));
                }
                g
            }
        };
        if g == 1 {
            return Err(Error::TreatedInFirstPeriod {
                unit: data.unit_id(u).to_string(),
            });
        }
        group.push(g);
    }

    let n = data.n_units() as f64;
    let mut groups: BTreeMap<usize, GroupInfo> = BTreeMap::new();
    for (u, &g) in group.iter().enumerate() {
        let info = groups.entry(g).or_insert_with(|| GroupInfo {
            units: Vec::new(),
            share: 0.0,
            gbar: if g == sentinel {
                0.0
            } else {
                (t_max - g + 1) as f64 / t_max as f64
            },
            doses: Vec::new(),
        });
        info.units.push(u);
        info.doses.push(data.unit_dose(u));
    }
    for info in groups.values_mut() {
        info.share = info.units.len() as f64 / n;
    }

    Ok(TimingIndex {
        group,
        sentinel,
        n_periods: t_max,
        groups,
    })
}

/// Outcome transformation applied before averaging over a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// Y_t.
    Level { t: usize },
    /// Y_t - Y_base (long difference).
    DiffFromBase { t: usize, base: usize },
    /// Mean of Y over t1..=t2.
    WindowAverage { t1: usize, t2: usize },
    /// Mean over post window minus mean over pre window.
    WindowDiff {
        post: (usize, usize),
        pre: (usize, usize),
    },
}

/// A unit as seen by a cell selector.
#[derive(Debug, Clone, Copy)]
pub struct UnitRef {
    pub index: usize,
    pub group: usize,
    pub dose: f64,
}

/// Mean of the transformed outcome over units matched by the selector.
pub fn cell_mean<F>(
    data: &PanelDataset,
    timing: &TimingIndex,
    select: F,
    transform: Transform,
) -> Result<f64>
where
    F: Fn(&UnitRef) -> bool,
{
    let mut acc = 0.0;
    let mut count = 0usize;
    for u in 0..data.n_units() {
        let r = UnitRef {
            index: u,
            group: timing.group_of(u),
            dose: data.unit_dose(u),
        };
        if !select(&r) {
            continue;
        }
        let v = match transform {
            Transform::Level { t } => data.outcome(u, t),
            Transform::DiffFromBase { t, base } => data.outcome(u, t) - data.outcome(u, base),
            Transform::WindowAverage { t1, t2 } => data.window_mean(u, t1, t2),
            Transform::WindowDiff { post, pre } => {
                data.window_mean(u, post.0, post.1) - data.window_mean(u, pre.0, pre.1)
            }
        };
        acc += v;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyCell(format!(
            "selector matched no units for {transform:?}"
        )));
    }
    Ok(acc / count as f64)
}

/// Discrete/continuous classification of the positive dose support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoseKind {
    Discrete,
    Continuous,
}

/// Classification config: at most this many distinct positive doses counts
/// as discrete.
#[derive(Debug, Clone, Copy)]
pub struct GridConfig {
    pub discrete_threshold: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            discrete_threshold: 50,
        }
    }
}

/// The evaluation set of dose points.
///
/// Every estimator takes the discrete/continuous kind from here and never
/// re-decides.
#[derive(Debug, Clone)]
pub struct DoseGrid {
    /// Sorted distinct positive doses (exact-tie merged).
    pub points: Vec<f64>,
    pub kind: DoseKind,
    pub d_lo: f64,
    pub d_hi: f64,
    /// Whether the sample has untreated (dose 0) units.
    pub has_untreated: bool,
}

impl DoseGrid {
    pub fn from_unit_doses(doses: &[f64], config: GridConfig) -> Result<Self> {
        let mut points: Vec<f64> = doses.iter().copied().filter(|&d| d > 0.0).collect();
        if points.is_empty() {
            return Err(Error::ZeroDoseVariance("no positive doses".into()));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        points.dedup();
        let kind = if points.len() <= config.discrete_threshold {
            DoseKind::Discrete
        } else {
            DoseKind::Continuous
        };
        Ok(DoseGrid {
            d_lo: points[0],
            d_hi: *points.last().unwrap(),
            has_untreated: doses.contains(&0.0),
            points,
            kind,
        })
    }

    pub fn from_panel(data: &PanelDataset, config: GridConfig) -> Result<Self> {
        Self::from_unit_doses(&data.unit_doses(), config)
    }

    /// Index of the exact grid point equal to `d`, if any.
    pub fn position(&self, d: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == d)
    }
}

/// Sanity check: group-share-weighted within-group dose means reproduce
/// the overall dose mean.
pub fn dose_mean_reconstruction_gap(data: &PanelDataset, timing: &TimingIndex) -> f64 {
    let overall = mean(&data.unit_doses());
    let recon: f64 = timing
        .group_levels()
        .iter()
        .map(|&g| {
            let info = timing.group_info(g).unwrap();
            info.share * mean(&info.doses)
        })
        .sum();
    (overall - recon).abs()
}

/// Population variance of unit doses, used by several preconditions.
pub fn dose_variance(data: &PanelDataset) -> f64 {
    pop_variance(&data.unit_doses())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(unit: &str, period: i64, dose: f64, outcome: f64) -> PanelRecord {
        PanelRecord {
            unit: unit.into(),
            period,
            dose,
            outcome,
        }
    }

    #[test]
    fn minimal_balanced_panel() {
        let data = PanelDataset::from_records(vec![
            rec("1", 1, 0.0, 1.0),
            rec("1", 2, 0.0, 1.5),
            rec("2", 1, 0.0, 2.0),
            rec("2", 2, 2.0, 4.0),
        ])
        .unwrap();
        assert_eq!(data.n_units(), 2);
        assert_eq!(data.n_periods(), 2);
        assert_eq!(data.unit_dose(0), 0.0);
        assert_eq!(data.unit_dose(1), 2.0);
    }

    #[test]
    fn unbalanced_panel_lists_offenders() {
        let err = PanelDataset::from_records(vec![
            rec("1", 1, 0.0, 1.0),
            rec("1", 2, 0.0, 1.5),
            rec("2", 1, 0.0, 2.0),
        ])
        .unwrap_err();
        match err {
            Error::UnbalancedPanel(units) => assert_eq!(units, vec!["2".to_string()]),
            other => panic!("expected UnbalancedPanel, got {other:?}"),
        }
    }

    #[test]
    fn dose_change_post_treatment_rejected() {
        let err = PanelDataset::from_records(vec![
            rec("1", 1, 0.0, 1.0),
            rec("1", 2, 2.0, 1.5),
            rec("1", 3, 3.0, 1.7),
            rec("2", 1, 0.0, 2.0),
            rec("2", 2, 0.0, 2.1),
            rec("2", 3, 0.0, 2.2),
        ])
        .unwrap_err();
        assert_eq!(err.name(), "DoseChangesPostTreatment");
    }

    #[test]
    fn negative_dose_rejected() {
        let err = PanelDataset::from_records(vec![rec("1", 1, 0.0, 1.0), rec("1", 2, -0.5, 1.5)])
            .unwrap_err();
        assert_eq!(err.name(), "NegativeDose");
    }

    #[test]
    fn timing_from_two_period_doses() {
        let data = PanelDataset::from_records(vec![
            rec("a", 1, 0.0, 0.0),
            rec("a", 2, 0.0, 0.1),
            rec("b", 1, 0.0, 0.0),
            rec("b", 2, 0.5, 1.0),
            rec("c", 1, 0.0, 0.0),
            rec("c", 2, 2.0, 3.0),
        ])
        .unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        assert_eq!(timing.sentinel(), 3);
        assert_eq!(timing.group_of(0), 3);
        assert_eq!(timing.group_of(1), 2);
        assert_eq!(timing.group_of(2), 2);
        assert_eq!(timing.exposure(&data, 1, 2), 0.5);
        let shares: f64 = timing.group_levels().iter().map(|&g| timing.share(g)).sum();
        assert!((shares - 1.0).abs() < 1e-15);
    }

    #[test]
    fn treated_in_first_period_rejected() {
        let data = PanelDataset::from_records(vec![
            rec("a", 1, 1.0, 0.0),
            rec("a", 2, 1.0, 0.1),
            rec("b", 1, 0.0, 0.0),
            rec("b", 2, 0.5, 1.0),
        ])
        .unwrap();
        let err = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap_err();
        assert_eq!(err.name(), "TreatedInFirstPeriod");
    }

    #[test]
    fn gbar_ordering_with_groups_and_shares() {
        // Early group g=2 (doses 2, 4), late group k=3 (doses 5, 6), T=4.
        let mut records = Vec::new();
        for (unit, g, d) in [
            ("e1", 2, 2.0),
            ("e2", 2, 4.0),
            ("l1", 3, 5.0),
            ("l2", 3, 6.0),
        ] {
            for t in 1..=4 {
                let w = if t >= g { d } else { 0.0 };
                records.push(rec(unit, t, w, 0.0));
            }
        }
        let data = PanelDataset::from_records(records).unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        assert!(timing.gbar(2) > timing.gbar(3));
        assert_eq!(timing.share(2), 0.5);
        assert_eq!(timing.share(3), 0.5);
    }

    #[test]
    fn cell_mean_common_trend() {
        // Untreated units all share ΔY = 1/3.
        let data = PanelDataset::from_records(vec![
            rec("a", 1, 0.0, 1.0),
            rec("a", 2, 0.0, 1.0 + 1.0 / 3.0),
            rec("b", 1, 0.0, -2.0),
            rec("b", 2, 0.0, -2.0 + 1.0 / 3.0),
            rec("c", 1, 0.0, 0.0),
            rec("c", 2, 1.0, 5.0),
        ])
        .unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        let m = cell_mean(
            &data,
            &timing,
            |u| u.dose == 0.0,
            Transform::DiffFromBase { t: 2, base: 1 },
        )
        .unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cell_mean_single_period_window() {
        let data = PanelDataset::from_records(vec![
            rec("a", 1, 0.0, 4.0),
            rec("a", 2, 1.0, 6.0),
            rec("b", 1, 0.0, 2.0),
            rec("b", 2, 0.0, 3.0),
        ])
        .unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        // PRE(g=2) is the single period 1.
        let m = cell_mean(
            &data,
            &timing,
            |u| u.group == 2,
            Transform::WindowAverage { t1: 1, t2: 1 },
        )
        .unwrap();
        assert_eq!(m, 4.0);
    }

    #[test]
    fn cell_mean_empty_selector() {
        let data = PanelDataset::from_records(vec![
            rec("a", 1, 0.0, 4.0),
            rec("a", 2, 1.0, 6.0),
            rec("b", 1, 0.0, 2.0),
            rec("b", 2, 0.0, 3.0),
        ])
        .unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        let err =
            cell_mean(&data, &timing, |u| u.dose > 99.0, Transform::Level { t: 1 }).unwrap_err();
        assert_eq!(err.name(), "EmptyCell");
    }

    #[test]
    fn dose_grid_classification_and_bounds() {
        let doses = vec![0.0, 0.5, 0.5, 2.0, 3.5];
        let grid = DoseGrid::from_unit_doses(&doses, GridConfig::default()).unwrap();
        assert_eq!(grid.kind, DoseKind::Discrete);
        assert_eq!(grid.points, vec![0.5, 2.0, 3.5]);
        assert_eq!(grid.d_lo, 0.5);
        assert_eq!(grid.d_hi, 3.5);
        assert!(grid.has_untreated);

        let many: Vec<f64> = (1..=60).map(|i| i as f64 / 10.0).collect();
        let grid = DoseGrid::from_unit_doses(&many, GridConfig::default()).unwrap();
        assert_eq!(grid.kind, DoseKind::Continuous);
    }

    #[test]
    fn reconstruction_identity() {
        let mut records = Vec::new();
        for (i, d) in [0.0, 0.0, 1.0, 2.5, 2.5, 7.0].iter().enumerate() {
            records.push(rec(&format!("u{i}"), 1, 0.0, 0.0));
            records.push(rec(&format!("u{i}"), 2, *d, 1.0));
        }
        let data = PanelDataset::from_records(records).unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        assert!(dose_mean_reconstruction_gap(&data, &timing) < 1e-12);
    }

    #[test]
    fn exposure_is_step_function() {
        let mut records = Vec::new();
        for t in 1..=5 {
            records.push(rec("a", t, if t >= 3 { 1.5 } else { 0.0 }, 0.0));
            records.push(rec("b", t, 0.0, 0.0));
        }
        let data = PanelDataset::from_records(records).unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        for t in 1..=5 {
            assert_eq!(data.exposure(0, t), timing.exposure(&data, 0, t));
            assert_eq!(data.exposure(1, t), 0.0);
        }
    }

    #[test]
    fn canonical_csv_round_trip() {
        let mut records = Vec::new();
        for (unit, g, d) in [("a", 4, 0.75), ("b", 2, 1.25), ("c", 4, 0.0)] {
            for t in 1..=3i64 {
                let w = if t >= g && d > 0.0 { d } else { 0.0 };
                records.push(rec(unit, t * 10, w, (t as f64) * 0.1 + d));
            }
        }
        let data = PanelDataset::from_records(records).unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();

        let mut buf = Vec::new();
        data.emit_canonical(&timing, &mut buf).unwrap();

        let schema = Schema {
            dose: "exposure".into(),
            ..Schema::default()
        };
        let reloaded = PanelDataset::load_csv(buf.as_slice(), &schema).unwrap();
        assert_eq!(data, reloaded);
    }

    #[test]
    fn canonical_reload_via_group_column_with_shifted_labels() {
        // Period labels 2010..2012; the group column carries labels, not
        // internal indexes, so the explicit-onset reload agrees.
        let mut records = Vec::new();
        for (unit, g_label, d) in [("a", 2011, 0.75), ("b", 0, 0.0)] {
            for label in [2010i64, 2011, 2012] {
                let w = if d > 0.0 && label >= g_label { d } else { 0.0 };
                records.push(rec(unit, label, w, label as f64 * 0.5));
            }
        }
        let data = PanelDataset::from_records(records).unwrap();
        let timing = derive_timing(&data, DoseOnset::FirstPositiveExposure).unwrap();
        let mut buf = Vec::new();
        data.emit_canonical(&timing, &mut buf).unwrap();

        let schema = Schema {
            onset: Some("group".into()),
            ..Schema::default()
        };
        let reloaded = PanelDataset::load_csv(buf.as_slice(), &schema).unwrap();
        let timing2 = derive_timing(&reloaded, DoseOnset::ExplicitColumn).unwrap();
        assert_eq!(timing2.group_of(0), 2);
        assert_eq!(timing2.group_of(1), timing2.sentinel());
        assert_eq!(reloaded.unit_dose(0), 0.75);
    }

    #[test]
    fn explicit_onset_column() {
        let csv = "unit,period,dose,outcome,first_treated\n\
                   a,1,2.0,0.1,2\n\
                   a,2,2.0,0.2,2\n\
                   b,1,0.0,0.3,\n\
                   b,2,0.0,0.4,\n";
        let schema = Schema {
            onset: Some("first_treated".into()),
            ..Schema::default()
        };
        let data = PanelDataset::load_csv(csv.as_bytes(), &schema).unwrap();
        let timing = derive_timing(&data, DoseOnset::ExplicitColumn).unwrap();
        assert_eq!(timing.group_of(0), 2);
        assert_eq!(timing.group_of(1), 3);
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "unit,period,outcome\na,1,0.1\n";
        let err = PanelDataset::load_csv(csv.as_bytes(), &Schema::default()).unwrap_err();
        assert_eq!(err.name(), "MissingColumn");
    }
}
