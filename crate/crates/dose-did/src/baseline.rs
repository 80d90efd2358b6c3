//! Two-period estimators of level and slope effects of a dose.
//!
//! Level effects compare the outcome path of a dose group to the path of
//! untreated units. Slope effects compare outcome paths across nearby
//! doses: adjacent-dose differences when the dose support is discrete,
//! local-linear derivatives when it is continuous. The lowest discrete
//! slope anchors at dose 0, so it equals the level effect per dose unit.
//!
//! The identified quantity is the same under both supported assumptions;
//! only its causal reading changes. Under parallel trends alone, a dose
//! slope mixes the causal response with selection into doses, and the
//! estimate is tagged accordingly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DoseGrid, DoseKind, GridConfig, PanelDataset};
use crate::smooth::{fit_at, SmootherSpec};

/// Which parallel-trends flavor the caller is willing to assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption {
    /// Parallel trends in untreated outcomes only.
    Pt,
    /// Strong parallel trends: treated paths equal across dose groups too.
    StrongPt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    AttDd,
    AteD,
    AcrD,
    AcrtDd,
    SlopeOfPath,
    PathMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonSet {
    Untreated,
    NotYetTreated,
    NeverTreated,
    AdjacentDose,
}

/// A point estimate with its defining cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellEstimate {
    pub value: f64,
    /// Evaluation dose; `None` for dose-aggregated estimands.
    pub dose: Option<f64>,
    pub estimand: Estimand,
    pub comparison: ComparisonSet,
    pub assumption: Assumption,
    pub se: Option<f64>,
    /// Effective sample size (cell counts, or Kish size under a kernel).
    pub n_eff: f64,
    /// Interpretive caveat, e.g. that a slope of the path equals the
    /// causal response plus selection bias under parallel trends alone.
    pub note: Option<String>,
}

const SLOPE_CAVEAT: &str =
    "slope of the outcome path: equals the causal response plus a selection-bias term \
     unless strong parallel trends holds";

/// Two-period view of a panel: unit doses, outcome changes, dose grid.
#[derive(Debug, Clone)]
pub struct TwoPeriodPanel {
    doses: Vec<f64>,
    deltas: Vec<f64>,
    grid: DoseGrid,
}

impl TwoPeriodPanel {
    pub fn new(data: &PanelDataset, config: GridConfig) -> Result<Self> {
        if data.n_periods() != 2 {
            return Err(Error::NotTwoPeriods(data.n_periods()));
        }
        for u in 0..data.n_units() {
            if data.exposure(u, 1) > 0.0 {
                return Err(Error::TreatedInFirstPeriod {
                    unit: data.unit_id(u).to_string(),
                });
            }
        }
        let doses: Vec<f64> = (0..data.n_units()).map(|u| data.exposure(u, 2)).collect();
        let deltas: Vec<f64> = (0..data.n_units())
            .map(|u| data.outcome(u, 2) - data.outcome(u, 1))
            .collect();
        let grid = DoseGrid::from_unit_doses(&doses, config)?;
        Ok(TwoPeriodPanel {
            doses,
            deltas,
            grid,
        })
    }

    /// Build directly from (dose, outcome-change) pairs.
    pub fn from_columns(doses: Vec<f64>, deltas: Vec<f64>, config: GridConfig) -> Result<Self> {
        assert_eq!(doses.len(), deltas.len());
        let grid = DoseGrid::from_unit_doses(&doses, config)?;
        Ok(TwoPeriodPanel {
            doses,
            deltas,
            grid,
        })
    }

    pub fn grid(&self) -> &DoseGrid {
        &self.grid
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn n_units(&self) -> usize {
        self.doses.len()
    }

    pub fn n_untreated(&self) -> usize {
        self.doses.iter().filter(|&&d| d == 0.0).count()
    }

    fn positive_columns(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (&d, &dy) in self.doses.iter().zip(&self.deltas) {
            if d > 0.0 {
                xs.push(d);
                ys.push(dy);
            }
        }
        (xs, ys)
    }

    /// Exact mean of the outcome change over units with dose bitwise equal
    /// to `d`. Errors with EmptyCell when nothing matches.
    fn exact_cell(&self, d: f64) -> Result<(f64, usize)> {
        let mut acc = 0.0;
        let mut n = 0usize;
        for (&dose, &dy) in self.doses.iter().zip(&self.deltas) {
            if dose == d {
                acc += dy;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptyCell(format!("no units with dose {d}")));
        }
        Ok((acc / n as f64, n))
    }
}

/// m(d): mean outcome change conditional on the dose.
///
/// Exact cell mean on a discrete grid; local-linear fit at `d` when the
/// grid is continuous. `d = 0` always uses the untreated cell directly.
pub fn path_mean(panel: &TwoPeriodPanel, d: f64, spec: &SmootherSpec) -> Result<CellEstimate> {
    let (value, n_eff) = path_mean_value(panel, d, spec)?;
    Ok(CellEstimate {
        value,
        dose: Some(d),
        estimand: Estimand::PathMean,
        comparison: ComparisonSet::Untreated,
        assumption: Assumption::Pt,
        se: None,
        n_eff,
        note: None,
    })
}

fn path_mean_value(panel: &TwoPeriodPanel, d: f64, spec: &SmootherSpec) -> Result<(f64, f64)> {
    if d == 0.0 {
        let (m, n) = panel.exact_cell(0.0)?;
        return Ok((m, n as f64));
    }
    match panel.grid.kind {
        DoseKind::Discrete => {
            let (m, n) = panel.exact_cell(d)?;
            Ok((m, n as f64))
        }
        DoseKind::Continuous => {
            if d < panel.grid.d_lo || d > panel.grid.d_hi {
                return Err(Error::DoseOutOfSupport {
                    dose: d,
                    d_lo: panel.grid.d_lo,
                    d_hi: panel.grid.d_hi,
                });
            }
            let (xs, ys) = panel.positive_columns();
            let (level, _, kish) = fit_at(spec, &xs, &ys, d)?;
            Ok((level, kish))
        }
    }
}

/// Level effect of dose `d` for the dose-`d` group: m(d) - m(0).
///
/// Under strong parallel trends the same number is the population average
/// effect of dose `d`; the estimand tag reflects the assumption.
pub fn att_dd(
    panel: &TwoPeriodPanel,
    d: f64,
    spec: &SmootherSpec,
    assumption: Assumption,
) -> Result<CellEstimate> {
    if panel.n_untreated() == 0 {
        return Err(Error::NoUntreatedUnits(
            "level effects need an untreated group; only slope effects are available without one"
                .into(),
        ));
    }
    let (m_d, n_d) = path_mean_value(panel, d, spec)?;
    let (m_0, n_0) = panel.exact_cell(0.0)?;
    Ok(CellEstimate {
        value: m_d - m_0,
        dose: Some(d),
        estimand: match assumption {
            Assumption::Pt => Estimand::AttDd,
            Assumption::StrongPt => Estimand::AteD,
        },
        comparison: ComparisonSet::Untreated,
        assumption,
        se: None,
        n_eff: n_d + n_0 as f64,
        note: None,
    })
}

/// Slope effect at dose `d`.
///
/// Discrete grid: adjacent-dose difference of m, with the convention that
/// the dose below the lowest atom is 0, so the first slope is the level
/// effect per dose unit. Continuous grid: local-linear derivative of m.
pub fn acr(
    panel: &TwoPeriodPanel,
    d: f64,
    spec: &SmootherSpec,
    assumption: Assumption,
) -> Result<CellEstimate> {
    let (value, comparison, n_eff) = acr_value(panel, d, spec)?;
    Ok(finish_slope(value, Some(d), comparison, assumption, n_eff))
}

fn finish_slope(
    value: f64,
    dose: Option<f64>,
    comparison: ComparisonSet,
    assumption: Assumption,
    n_eff: f64,
) -> CellEstimate {
    let (estimand, note) = match assumption {
        Assumption::StrongPt => (Estimand::AcrD, None),
        Assumption::Pt => (Estimand::SlopeOfPath, Some(SLOPE_CAVEAT.to_string())),
    };
    CellEstimate {
        value,
        dose,
        estimand,
        comparison,
        assumption,
        se: None,
        n_eff,
        note,
    }
}

fn acr_value(
    panel: &TwoPeriodPanel,
    d: f64,
    spec: &SmootherSpec,
) -> Result<(f64, ComparisonSet, f64)> {
    let grid = &panel.grid;
    match grid.kind {
        DoseKind::Discrete => {
            let j = grid
                .position(d)
                .ok_or_else(|| Error::EmptyCell(format!("dose {d} not on the observed grid")))?;
            let (m_j, n_j) = panel.exact_cell(grid.points[j])?;
            if j == 0 {
                // Anchor at dose 0: first slope is ATT(d_1|d_1)/d_1.
                if !grid.has_untreated {
                    return Err(Error::NoUntreatedUnits(format!(
                        "slope at the lowest dose {d} anchors at dose 0"
                    )));
                }
                let (m_0, n_0) = panel.exact_cell(0.0)?;
                Ok((
                    (m_j - m_0) / grid.points[0],
                    ComparisonSet::Untreated,
                    (n_j + n_0) as f64,
                ))
            } else {
                let (m_prev, n_prev) = panel.exact_cell(grid.points[j - 1])?;
                let gap = grid.points[j] - grid.points[j - 1];
                Ok((
                    (m_j - m_prev) / gap,
                    ComparisonSet::AdjacentDose,
                    (n_j + n_prev) as f64,
                ))
            }
        }
        DoseKind::Continuous => {
            if d < grid.d_lo || d > grid.d_hi {
                return Err(Error::DoseOutOfSupport {
                    dose: d,
                    d_lo: grid.d_lo,
                    d_hi: grid.d_hi,
                });
            }
            let (xs, ys) = panel.positive_columns();
            let (_, slope, kish) = fit_at(spec, &xs, &ys, d)?;
            Ok((slope, ComparisonSet::AdjacentDose, kish))
        }
    }
}

/// Scalar slope aggregate: the slope effect averaged over the empirical
/// distribution of positive doses.
pub fn acr_star(
    panel: &TwoPeriodPanel,
    spec: &SmootherSpec,
    assumption: Assumption,
) -> Result<CellEstimate> {
    let grid = &panel.grid;
    let n_pos = panel.doses.iter().filter(|&&d| d > 0.0).count();

    if grid.points.len() == 1 {
        // One positive dose: no dose variation to take a slope over.
        let d = grid.points[0];
        if !grid.has_untreated {
            return Err(Error::DegenerateDose(format!(
                "single positive dose {d} and no untreated units"
            )));
        }
        let (m_d, n_d) = panel.exact_cell(d)?;
        let (m_0, n_0) = panel.exact_cell(0.0)?;
        let mut est = finish_slope(
            (m_d - m_0) / d,
            Some(d),
            ComparisonSet::Untreated,
            assumption,
            (n_d + n_0) as f64,
        );
        est.note = Some(format!(
            "degenerate dose distribution: reported the level effect per dose unit at d={d}"
        ));
        return Ok(est);
    }

    match grid.kind {
        DoseKind::Discrete => {
            let mut counts = vec![0usize; grid.points.len()];
            for &d in &panel.doses {
                if let Some(j) = grid.position(d) {
                    counts[j] += 1;
                }
            }
            let mut start = 0usize;
            let mut note = None;
            if !grid.has_untreated {
                // The lowest slope anchors at dose 0 and needs untreated
                // units; without them, average over the remaining doses.
                start = 1;
                note = Some(
                    "no untreated units: the lowest-dose slope is excluded and shares are \
                     renormalized over the remaining doses"
                        .to_string(),
                );
            }
            let total: usize = counts[start..].iter().sum();
            let mut value = 0.0;
            for (&point, &count) in grid.points[start..].iter().zip(&counts[start..]) {
                let (slope, _, _) = acr_value(panel, point, spec)?;
                value += count as f64 / total as f64 * slope;
            }
            let mut est = finish_slope(
                value,
                None,
                ComparisonSet::AdjacentDose,
                assumption,
                total as f64,
            );
            est.note = note.or(est.note);
            Ok(est)
        }
        DoseKind::Continuous => {
            let (xs, ys) = panel.positive_columns();
            let mut acc = 0.0;
            for &d in &xs {
                let (_, slope, _) = fit_at(spec, &xs, &ys, d)?;
                acc += slope;
            }
            Ok(finish_slope(
                acc / xs.len() as f64,
                None,
                ComparisonSet::AdjacentDose,
                assumption,
                n_pos as f64,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::GridConfig;
    use crate::smooth::{Bandwidth, Kernel, SmoothMethod};

    /// Noiseless two-period law: outcome change is 1/3 + (1+d)ln(1+d).
    fn noiseless_panel(doses: &[f64]) -> TwoPeriodPanel {
        let deltas: Vec<f64> = doses
            .iter()
            .map(|&d| 1.0 / 3.0 + (1.0 + d) * (1.0 + d).ln())
            .collect();
        TwoPeriodPanel::from_columns(doses.to_vec(), deltas, GridConfig::default()).unwrap()
    }

    fn spec() -> SmootherSpec {
        SmootherSpec::default()
    }

    #[test]
    fn path_mean_exact_cells() {
        let panel = noiseless_panel(&[0.0, 0.0, 0.5, 1.0, 2.0, 2.0]);
        let m2 = path_mean(&panel, 2.0, &spec()).unwrap();
        assert!((m2.value - (1.0 / 3.0 + 3.0 * 3.0_f64.ln())).abs() < 1e-12);
        assert_eq!(m2.n_eff, 2.0);
        let m0 = path_mean(&panel, 0.0, &spec()).unwrap();
        assert!((m0.value - 1.0 / 3.0).abs() < 1e-12);
        let err = path_mean(&panel, 1.25, &spec()).unwrap_err();
        assert_eq!(err.name(), "EmptyCell");
    }

    #[test]
    fn att_matches_effect_function() {
        let panel = noiseless_panel(&[0.0, 0.0, 0.5, 1.0, 2.0]);
        let att = att_dd(&panel, 2.0, &spec(), Assumption::Pt).unwrap();
        assert!((att.value - 3.0 * 3.0_f64.ln()).abs() < 1e-12);
        assert_eq!(att.estimand, Estimand::AttDd);
        let ate = att_dd(&panel, 2.0, &spec(), Assumption::StrongPt).unwrap();
        assert_eq!(ate.estimand, Estimand::AteD);
        assert_eq!(ate.value, att.value);
    }

    #[test]
    fn att_zero_when_paths_match() {
        let doses = vec![0.0, 0.0, 1.0, 1.0];
        let deltas = vec![0.5, 0.5, 0.5, 0.5];
        let panel = TwoPeriodPanel::from_columns(doses, deltas, GridConfig::default()).unwrap();
        let att = att_dd(&panel, 1.0, &spec(), Assumption::Pt).unwrap();
        assert_eq!(att.value, 0.0);
    }

    #[test]
    fn att_needs_untreated() {
        let panel = noiseless_panel(&[0.5, 1.0, 2.0]);
        let err = att_dd(&panel, 1.0, &spec(), Assumption::Pt).unwrap_err();
        assert_eq!(err.name(), "NoUntreatedUnits");
    }

    #[test]
    fn discrete_slope_finite_difference() {
        // Grid spacing 0.5 around d=2: (3 ln 3 - 2.5 ln 2.5) / 0.5.
        let panel = noiseless_panel(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        let got = acr(&panel, 2.0, &spec(), Assumption::StrongPt).unwrap();
        let expect = (3.0 * 3.0_f64.ln() - 2.5 * 2.5_f64.ln()) / 0.5;
        assert!((got.value - expect).abs() < 1e-12);
        assert!((expect - 2.0102).abs() < 5e-4);
        assert_eq!(got.estimand, Estimand::AcrD);

        let tagged = acr(&panel, 2.0, &spec(), Assumption::Pt).unwrap();
        assert_eq!(tagged.estimand, Estimand::SlopeOfPath);
        assert!(tagged.note.is_some());
        assert_eq!(tagged.value, got.value);
    }

    #[test]
    fn linear_effect_recovered_exactly() {
        // Outcome change = θ d with θ = 2: every slope is 2, discrete or
        // continuous.
        let theta = 2.0;
        let doses: Vec<f64> = (0..80).map(|i| i as f64 * 0.05).collect();
        let deltas: Vec<f64> = doses.iter().map(|&d| theta * d).collect();
        let panel =
            TwoPeriodPanel::from_columns(doses.clone(), deltas.clone(), GridConfig::default())
                .unwrap();
        assert_eq!(panel.grid().kind, DoseKind::Continuous);
        let got = acr(&panel, 1.5, &spec(), Assumption::StrongPt).unwrap();
        assert!((got.value - theta).abs() < 1e-9);

        let small = TwoPeriodPanel::from_columns(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![0.0, 2.0, 4.0, 6.0],
            GridConfig::default(),
        )
        .unwrap();
        let got = acr(&small, 2.0, &spec(), Assumption::StrongPt).unwrap();
        assert_eq!(got.value, theta);
        let star = acr_star(&small, &spec(), Assumption::StrongPt).unwrap();
        assert_eq!(star.value, theta);
    }

    #[test]
    fn continuous_out_of_support() {
        let doses: Vec<f64> = (1..=60).map(|i| 1.0 + i as f64 * 0.05).collect();
        let deltas = vec![0.0; doses.len()];
        let panel = TwoPeriodPanel::from_columns(doses, deltas, GridConfig::default()).unwrap();
        assert_eq!(panel.grid().kind, DoseKind::Continuous);
        let err = acr(&panel, 0.5, &spec(), Assumption::StrongPt).unwrap_err();
        assert_eq!(err.name(), "DoseOutOfSupport");
    }

    #[test]
    fn acr_star_brute_force_oracle() {
        // Enumerate the sample: share-weighted finite-difference slopes of
        // the noiseless law, with the lowest slope anchored at 0.
        let doses = vec![0.0, 0.0, 0.5, 0.5, 1.0, 2.0, 2.0, 2.0];
        let panel = noiseless_panel(&doses);
        let mu = |d: f64| (1.0 + d) * (1.0 + d).ln();
        let grid = [0.5, 1.0, 2.0];
        let counts = [2.0, 1.0, 3.0];
        let slopes = [
            mu(0.5) / 0.5,
            (mu(1.0) - mu(0.5)) / 0.5,
            (mu(2.0) - mu(1.0)) / 1.0,
        ];
        let total: f64 = counts.iter().sum();
        let expect: f64 = grid
            .iter()
            .enumerate()
            .map(|(j, _)| counts[j] / total * slopes[j])
            .sum();
        let got = acr_star(&panel, &spec(), Assumption::StrongPt).unwrap();
        assert!(
            (got.value - expect).abs() < 1e-12,
            "{} vs {}",
            got.value,
            expect
        );
    }

    #[test]
    fn acr_star_degenerate_dose() {
        let panel = TwoPeriodPanel::from_columns(
            vec![2.0, 2.0, 2.0],
            vec![1.0, 1.0, 1.0],
            GridConfig::default(),
        )
        .unwrap();
        let err = acr_star(&panel, &spec(), Assumption::StrongPt).unwrap_err();
        assert_eq!(err.name(), "DegenerateDose");

        // With untreated units the level effect per dose unit is reported,
        // flagged.
        let panel = TwoPeriodPanel::from_columns(
            vec![0.0, 0.0, 2.0, 2.0],
            vec![0.25, 0.25, 1.25, 1.25],
            GridConfig::default(),
        )
        .unwrap();
        let got = acr_star(&panel, &spec(), Assumption::StrongPt).unwrap();
        assert_eq!(got.value, 0.5);
        assert!(got.note.is_some());
    }

    #[test]
    fn telescoping_identity() {
        // Cumulative slope times spacing reproduces the level effect.
        let panel = noiseless_panel(&[0.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0]);
        let grid = panel.grid().points.clone();
        for (j, &dj) in grid.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..=j {
                let prev = if i == 0 { 0.0 } else { grid[i - 1] };
                let slope = acr(&panel, grid[i], &spec(), Assumption::StrongPt)
                    .unwrap()
                    .value;
                acc += slope * (grid[i] - prev);
            }
            let att = att_dd(&panel, dj, &spec(), Assumption::StrongPt)
                .unwrap()
                .value;
            assert!(
                (acc - att).abs() < 1e-10,
                "telescoping at {dj}: {acc} vs {att}"
            );
        }
    }

    #[test]
    fn local_linear_derivative_matches_central_differences() {
        // Cubic conditional mean; compare the kernel derivative at h=0.01
        // with centered finite differences of the fitted levels.
        let doses: Vec<f64> = (0..=4000).map(|i| 0.5 + i as f64 * 0.000625).collect();
        let deltas: Vec<f64> = doses.iter().map(|&d| d * d * d - d).collect();
        let panel = TwoPeriodPanel::from_columns(doses, deltas, GridConfig::default()).unwrap();
        assert_eq!(panel.grid().kind, DoseKind::Continuous);
        let s = SmootherSpec {
            method: SmoothMethod::LocalLinear,
            kernel: Kernel::Epanechnikov,
            bandwidth: Bandwidth::Fixed(0.01),
            derivative_order: 1,
        };
        for &d in &[1.0, 1.5, 2.0] {
            let slope = acr(&panel, d, &s, Assumption::StrongPt).unwrap().value;
            let h = 0.01;
            let up = path_mean(&panel, d + h, &s).unwrap().value;
            let down = path_mean(&panel, d - h, &s).unwrap().value;
            let fd = (up - down) / (2.0 * h);
            assert!((slope - fd).abs() < 1e-3, "at {d}: {slope} vs {fd}");
        }
    }

    #[test]
    fn fixed_effect_and_period_shock_invariance() {
        use crate::panel::{PanelDataset, PanelRecord};
        // Dyadic values keep float arithmetic exact under these shifts.
        let doses = [0.0, 0.0, 1.0, 2.0];
        let y1 = [0.5, -1.25, 2.0, 3.75];
        let y2 = [0.75, -0.5, 3.5, 6.25];
        let build = |fe: &[f64], shock2: f64| -> TwoPeriodPanel {
            let mut records = Vec::new();
            for i in 0..doses.len() {
                records.push(PanelRecord {
                    unit: format!("u{i}"),
                    period: 1,
                    dose: 0.0,
                    outcome: y1[i] + fe[i],
                });
                records.push(PanelRecord {
                    unit: format!("u{i}"),
                    period: 2,
                    dose: doses[i],
                    outcome: y2[i] + fe[i] + shock2,
                });
            }
            let data = PanelDataset::from_records(records).unwrap();
            TwoPeriodPanel::new(&data, GridConfig::default()).unwrap()
        };

        let base = build(&[0.0; 4], 0.0);
        // Unit-specific constants added to both periods cancel in the
        // outcome change: level and slope estimates are bitwise equal.
        let with_fe = build(&[8.5, -2.25, 100.0, 0.125], 0.0);
        // A common period-2 shock moves every cell mean equally: slopes
        // and level effects are bitwise equal.
        let with_shock = build(&[0.0; 4], 4.5);

        for alt in [&with_fe, &with_shock] {
            let a0 = att_dd(&base, 2.0, &spec(), Assumption::Pt).unwrap().value;
            let a1 = att_dd(alt, 2.0, &spec(), Assumption::Pt).unwrap().value;
            assert_eq!(a0, a1);
            let s0 = acr(&base, 2.0, &spec(), Assumption::Pt).unwrap().value;
            let s1 = acr(alt, 2.0, &spec(), Assumption::Pt).unwrap().value;
            assert_eq!(s0, s1);
        }
    }
}
