//! Two-period TWFE coefficient and its exact decompositions.
//!
//! With two periods and no one treated at baseline, the TWFE coefficient
//! is the univariate OLS slope of the outcome change on the dose. That
//! single number admits several exact accountings on the empirical
//! measure, each with a different building block:
//!
//! - mechanical: adjacent-dose slopes of the conditional mean, with
//!   non-negative weights that are hump-shaped around the mean dose;
//! - wald2x2: all pairwise two-group comparisons, variance-weighted;
//! - alt-acr: level effects per dose unit, weights sum to one but can be
//!   negative below the mean dose;
//! - levels: level effects themselves, weights sum to zero.
//!
//! Every decomposition here is computed on sample atoms (each distinct
//! observed dose is an atom), where the identities hold to machine
//! precision; no density estimation enters the accounting.

use serde::Serialize;

use crate::baseline::TwoPeriodPanel;
use crate::error::{Error, Result};
use crate::numeric::{ksum, mean, pop_covariance, pop_variance, sample_sd};

/// TWFE slope for a two-period panel: OLS of the outcome change on the
/// dose (with intercept), equal to the two-way within estimator on the
/// stacked panel.
pub fn twfe_beta_2p(panel: &TwoPeriodPanel) -> Result<f64> {
    let var = pop_variance(panel.doses());
    if var.is_nan() || var <= 0.0 {
        return Err(Error::ZeroDoseVariance("all doses identical".into()));
    }
    Ok(pop_covariance(panel.deltas(), panel.doses()) / var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightCurveName {
    W1Mechanical,
    W0Anchor,
    Wald2x2,
    AltAcr,
    Levels,
    DoseDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    SumsToOne,
    SumsToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Positivity {
    AllNonNegative,
    MayBeNegative,
}

/// A named weighting function over dose atoms.
#[derive(Debug, Clone, Serialize)]
pub struct WeightCurve {
    pub name: WeightCurveName,
    /// Dose atoms the curve is tabulated on.
    pub points: Vec<f64>,
    /// Curve value at each atom (per unit of dose measure for the
    /// mechanical curve).
    pub values: Vec<f64>,
    pub normalization: Normalization,
    pub positivity: Positivity,
}

/// Mechanical TWFE weights with enough state to evaluate the curve at
/// arbitrary dose points.
#[derive(Debug, Clone)]
pub struct MechanicalWeights {
    pub curve: WeightCurve,
    /// Anchor weight on the lowest-dose level effect per dose unit; 0 when
    /// there are no untreated units.
    pub w0: f64,
    sorted_doses: Vec<f64>,
    /// suffix_sums[i] = sum of sorted_doses[i..].
    suffix_sums: Vec<f64>,
    mean_d: f64,
    var_d: f64,
}

impl MechanicalWeights {
    /// w1(l) = (E[D | D >= l] - E[D]) P(D >= l) / var(D) on the empirical
    /// measure.
    pub fn w1_at(&self, l: f64) -> f64 {
        let n = self.sorted_doses.len();
        let idx = self.sorted_doses.partition_point(|&d| d < l);
        if idx == n {
            return 0.0;
        }
        let count = (n - idx) as f64;
        let sum = self.suffix_sums[idx];
        (sum / n as f64 - self.mean_d * count / n as f64) / self.var_d
    }

    pub fn mean_dose(&self) -> f64 {
        self.mean_d
    }
}

/// Compute the mechanical weight curve and the anchor weight.
///
/// The weights are non-negative; the atom masses w1(d_j)(d_j - d_{j-1})
/// with the 0 anchor sum to one.
pub fn mechanical_weights(panel: &TwoPeriodPanel) -> Result<MechanicalWeights> {
    let var = pop_variance(panel.doses());
    if var.is_nan() || var <= 0.0 {
        return Err(Error::ZeroDoseVariance("all doses identical".into()));
    }
    let mut sorted: Vec<f64> = panel.doses().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + sorted[i];
    }
    let mw = MechanicalWeights {
        curve: WeightCurve {
            name: WeightCurveName::W1Mechanical,
            points: panel.grid().points.clone(),
            values: Vec::new(),
            normalization: Normalization::SumsToOne,
            positivity: Positivity::AllNonNegative,
        },
        w0: 0.0,
        sorted_doses: sorted,
        suffix_sums: suffix,
        mean_d: mean(panel.doses()),
        var_d: var,
    };
    let values: Vec<f64> = mw.curve.points.iter().map(|&p| mw.w1_at(p)).collect();
    let w0 = if panel.grid().has_untreated {
        // Equals the displayed anchor formula because P(D >= d_1) = P(D > 0).
        values[0] * mw.curve.points[0]
    } else {
        0.0
    };
    let mut mw = mw;
    mw.curve.values = values;
    mw.w0 = w0;
    Ok(mw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompMethod {
    Mechanical,
    Wald2x2,
    AltAcr,
    Levels,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermLabel {
    /// Adjacent-dose slope (or anchored first slope) at this atom.
    Dose { dose: f64 },
    /// Pairwise comparison between two dose groups.
    DosePair {
        low: f64,
        high: f64,
        vs_untreated: bool,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompTerm {
    pub label: TermLabel,
    pub weight: f64,
    pub component: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFlag {
    /// Some decomposition weight is negative.
    NegativeWeightPresent,
    /// The mechanical weight curve has an interior maximum.
    HumpShapedWeights,
    /// The mechanical weight argmax sits far (more than 10% of support
    /// width) from the mode of the positive dose distribution: the
    /// regression re-weights doses toward the mean.
    WeightMassAboveDensity,
}

/// An exact accounting of the TWFE slope: the weighted components sum back
/// to beta up to float roundoff.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub method: DecompMethod,
    pub beta_twfe: f64,
    pub terms: Vec<DecompTerm>,
    /// beta minus the weighted component sum.
    pub residual: f64,
    pub weight_sum: f64,
    pub flags: Vec<ReportFlag>,
    pub warnings: Vec<String>,
}

impl DecompositionReport {
    fn finish(mut self) -> Self {
        self.weight_sum = ksum(self.terms.iter().map(|t| t.weight));
        let recon = ksum(self.terms.iter().map(|t| t.weight * t.component));
        self.residual = self.beta_twfe - recon;
        if self.terms.iter().any(|t| t.weight < 0.0)
            && !self.flags.contains(&ReportFlag::NegativeWeightPresent)
        {
            self.flags.push(ReportFlag::NegativeWeightPresent);
        }
        self
    }
}

/// Distinct dose atoms (including 0 when present) with empirical shares
/// and exact cell means of the outcome change.
struct Atoms {
    doses: Vec<f64>,
    shares: Vec<f64>,
    cell_means: Vec<f64>,
}

fn atoms(panel: &TwoPeriodPanel) -> Atoms {
    let mut doses: Vec<f64> = panel.grid().points.clone();
    if panel.grid().has_untreated {
        doses.insert(0, 0.0);
    }
    let n = panel.doses().len() as f64;
    let mut shares = vec![0.0; doses.len()];
    let mut sums = vec![0.0; doses.len()];
    let mut counts = vec![0usize; doses.len()];
    for (&d, &dy) in panel.doses().iter().zip(panel.deltas()) {
        let j = doses.iter().position(|&a| a == d).expect("dose is an atom");
        sums[j] += dy;
        counts[j] += 1;
    }
    for j in 0..doses.len() {
        shares[j] = counts[j] as f64 / n;
    }
    let cell_means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    Atoms {
        doses,
        shares,
        cell_means,
    }
}

/// Mechanical decomposition: per-dose local slopes weighted by the
/// mechanical curve masses.
pub fn decompose_mechanical(panel: &TwoPeriodPanel) -> Result<DecompositionReport> {
    let beta = twfe_beta_2p(panel)?;
    let mw = mechanical_weights(panel)?;
    let a = atoms(panel);
    let has_zero = panel.grid().has_untreated;
    let pos_offset = if has_zero { 1 } else { 0 };
    let grid = &panel.grid().points;

    let mut terms = Vec::new();
    for (j, &d) in grid.iter().enumerate() {
        let (prev_dose, prev_mean) = if j == 0 {
            if !has_zero {
                // Without an untreated mass the first increment carries
                // exactly zero weight; omit it.
                continue;
            }
            (0.0, a.cell_means[0])
        } else {
            (grid[j - 1], a.cell_means[pos_offset + j - 1])
        };
        let gap = d - prev_dose;
        let slope = (a.cell_means[pos_offset + j] - prev_mean) / gap;
        terms.push(DecompTerm {
            label: TermLabel::Dose { dose: d },
            weight: mw.curve.values[j] * gap,
            component: slope,
        });
    }

    let mut flags = Vec::new();
    if let Some(argmax_w) = argmax(&mw.curve.values) {
        if argmax_w != 0 && argmax_w + 1 != mw.curve.values.len() {
            flags.push(ReportFlag::HumpShapedWeights);
        }
        // Mode of the positive dose distribution.
        let pos_shares = &a.shares[pos_offset..];
        if let Some(argmax_p) = argmax(pos_shares) {
            let width = panel.grid().d_hi - panel.grid().d_lo;
            if width > 0.0 && (grid[argmax_w] - grid[argmax_p]).abs() > 0.1 * width {
                flags.push(ReportFlag::WeightMassAboveDensity);
            }
        }
    }

    Ok(DecompositionReport {
        method: DecompMethod::Mechanical,
        beta_twfe: beta,
        terms,
        residual: 0.0,
        weight_sum: 0.0,
        flags,
        warnings: Vec::new(),
    }
    .finish())
}

fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
}

/// Every pairwise comparison between dose groups, weighted by subsample
/// size and dose spread. All weights non-negative, summing to one.
pub fn decompose_wald2x2(panel: &TwoPeriodPanel) -> Result<DecompositionReport> {
    let beta = twfe_beta_2p(panel)?;
    let var = pop_variance(panel.doses());
    let a = atoms(panel);
    if a.doses.len() < 2 {
        return Err(Error::DegenerateDose(
            "need at least two distinct doses".into(),
        ));
    }
    let mut terms = Vec::new();
    for j in 0..a.doses.len() {
        for k in (j + 1)..a.doses.len() {
            let (lo, hi) = (a.doses[j], a.doses[k]);
            let gap = hi - lo;
            terms.push(DecompTerm {
                label: TermLabel::DosePair {
                    low: lo,
                    high: hi,
                    vs_untreated: lo == 0.0,
                },
                weight: gap * gap * a.shares[j] * a.shares[k] / var,
                component: (a.cell_means[k] - a.cell_means[j]) / gap,
            });
        }
    }
    Ok(DecompositionReport {
        method: DecompMethod::Wald2x2,
        beta_twfe: beta,
        terms,
        residual: 0.0,
        weight_sum: 0.0,
        flags: Vec::new(),
        warnings: Vec::new(),
    }
    .finish())
}

/// Level effects per dose unit as components; weights sum to one but can
/// be negative for doses below the mean.
pub fn decompose_alt_acr(panel: &TwoPeriodPanel) -> Result<DecompositionReport> {
    let beta = twfe_beta_2p(panel)?;
    if !panel.grid().has_untreated {
        return Err(Error::NoUntreatedUnits(
            "per-dose-unit level components need the untreated cell mean".into(),
        ));
    }
    let var = pop_variance(panel.doses());
    let d_mean = mean(panel.doses());
    let a = atoms(panel);
    let m0 = a.cell_means[0];
    let mut terms = Vec::new();
    for j in 1..a.doses.len() {
        let l = a.doses[j];
        terms.push(DecompTerm {
            label: TermLabel::Dose { dose: l },
            weight: (l - d_mean) * l * a.shares[j] / var,
            component: (a.cell_means[j] - m0) / l,
        });
    }
    Ok(DecompositionReport {
        method: DecompMethod::AltAcr,
        beta_twfe: beta,
        terms,
        residual: 0.0,
        weight_sum: 0.0,
        flags: Vec::new(),
        warnings: Vec::new(),
    }
    .finish())
}

/// Level effects as components; weights sum to zero, so the coefficient
/// should not be read as approximating the level of any effect.
pub fn decompose_levels(panel: &TwoPeriodPanel) -> Result<DecompositionReport> {
    let beta = twfe_beta_2p(panel)?;
    if !panel.grid().has_untreated {
        return Err(Error::NoUntreatedUnits(
            "level components need the untreated cell mean".into(),
        ));
    }
    let var = pop_variance(panel.doses());
    let d_mean = mean(panel.doses());
    let a = atoms(panel);
    let m0 = a.cell_means[0];
    // The untreated atom enters with a negative weight and a component
    // that is identically zero, making the weights sum to zero exactly.
    let mut terms = Vec::new();
    for j in 0..a.doses.len() {
        let l = a.doses[j];
        terms.push(DecompTerm {
            label: TermLabel::Dose { dose: l },
            weight: (l - d_mean) * a.shares[j] / var,
            component: a.cell_means[j] - m0,
        });
    }
    let report = DecompositionReport {
        method: DecompMethod::Levels,
        beta_twfe: beta,
        terms,
        residual: 0.0,
        weight_sum: 0.0,
        flags: Vec::new(),
        warnings: vec![
            "weights sum to zero: the coefficient does not approximate the level of any \
             treatment effect"
                .to_string(),
        ],
    };
    Ok(report.finish())
}

/// Gaussian kernel density of positive doses, for plotting next to the
/// mechanical weight curve.
pub fn dose_density(positive_doses: &[f64], at: f64) -> f64 {
    let n = positive_doses.len();
    if n == 0 {
        return 0.0;
    }
    let sd = sample_sd(positive_doses);
    let h = (1.06 * sd * (n as f64).powf(-0.2)).max(f64::MIN_POSITIVE);
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * n as f64);
    positive_doses
        .iter()
        .map(|&d| {
            let u = (d - at) / h;
            (-0.5 * u * u).exp()
        })
        .sum::<f64>()
        * norm
}
