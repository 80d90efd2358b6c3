//! Crate-wide error type.
//!
//! Every domain error carries a stable machine-readable name (see
//! [`Error::name`]) so batch callers can match on `error` fields in the
//! JSON emitted on stderr instead of parsing prose.

use thiserror::Error;

/// Errors produced by panel validation, estimators, decompositions, the
/// simulation lab, and the bootstrap.
#[derive(Debug, Error)]
pub enum Error {
    /// A column named in the schema is absent from the CSV header.
    #[error("missing column '{0}' in input")]
    MissingColumn(String),

    /// Some units do not have exactly one record per period.
    #[error("unbalanced panel: offending units {0:?}")]
    UnbalancedPanel(Vec<String>),

    /// A dose (exposure) value below zero was read.
    #[error("negative dose {dose} for unit '{unit}' in period {period}")]
    NegativeDose {
        unit: String,
        period: i64,
        dose: f64,
    },

    /// Exposure changed after first treatment, violating staggered adoption.
    #[error("dose changes post-treatment for unit '{unit}': {from} then {to}")]
    DoseChangesPostTreatment { unit: String, from: f64, to: f64 },

    /// A unit is already exposed in the first period.
    #[error("unit '{unit}' is treated in the first period")]
    TreatedInFirstPeriod { unit: String },

    /// A selector matched no units, so the requested cell mean is undefined.
    #[error("empty cell: {0}")]
    EmptyCell(String),

    /// The kernel window around the evaluation point contains no data.
    #[error("bandwidth too small: no observations within h={h} of d={at}")]
    BandwidthTooSmall { at: f64, h: f64 },

    /// A level effect (or an anchored slope) was requested without untreated units.
    #[error("no untreated units: {0}")]
    NoUntreatedUnits(String),

    /// Evaluation point lies outside the positive dose support.
    #[error("dose {dose} outside support [{d_lo}, {d_hi}]")]
    DoseOutOfSupport { dose: f64, d_lo: f64, d_hi: f64 },

    /// A slope is undefined because the dose distribution is degenerate.
    #[error("degenerate dose distribution: {0}")]
    DegenerateDose(String),

    /// The (demeaned) dose regressor has zero variance.
    #[error("zero dose variance: {0}")]
    ZeroDoseVariance(String),

    /// No comparison units satisfy the requested comparison rule.
    #[error("no comparison units for {0}")]
    NoComparisonUnits(String),

    /// An aggregation needs group-time cells that are not present.
    #[error("missing cells: {0:?}")]
    MissingCells(Vec<String>),

    /// A required window of periods is empty.
    #[error("empty period window: {0}")]
    EmptyWindow(String),

    /// Both groups in a pair have identical mean doses, so the long
    /// comparison is undefined (its weight vanishes).
    #[error("equal mean doses for groups {g} and {k}")]
    EqualMeanDoses { g: u32, k: u32 },

    /// A simulation spec fails validation.
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    /// The requested DGP family has no analytic TWFE oracle.
    #[error("no analytic oracle for family {0}")]
    NoAnalyticOracle(String),

    /// Every bootstrap replicate failed to evaluate the statistic.
    #[error("all {0} bootstrap replicates failed")]
    AllReplicatesFailed(usize),

    /// Operation requires a two-period panel.
    #[error("expected a two-period panel, got T={0}")]
    NotTwoPeriods(usize),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// Stable machine-readable error name, emitted verbatim in CLI stderr JSON.
    pub fn name(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::UnbalancedPanel(_) => "UnbalancedPanel",
            Error::NegativeDose { .. } => "NegativeDose",
            Error::DoseChangesPostTreatment { .. } => "DoseChangesPostTreatment",
            Error::TreatedInFirstPeriod { .. } => "TreatedInFirstPeriod",
            Error::EmptyCell(_) => "EmptyCell",
            Error::BandwidthTooSmall { .. } => "BandwidthTooSmall",
            Error::NoUntreatedUnits(_) => "NoUntreatedUnits",
            Error::DoseOutOfSupport { .. } => "DoseOutOfSupport",
            Error::DegenerateDose(_) => "DegenerateDose",
            Error::ZeroDoseVariance(_) => "ZeroDoseVariance",
            Error::NoComparisonUnits(_) => "NoComparisonUnits",
            Error::MissingCells(_) => "MissingCells",
            Error::EmptyWindow(_) => "EmptyWindow",
            Error::EqualMeanDoses { .. } => "EqualMeanDoses",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::NoAnalyticOracle(_) => "NoAnalyticOracle",
            Error::AllReplicatesFailed(_) => "AllReplicatesFailed",
            Error::NotTwoPeriods(_) => "NotTwoPeriods",
            Error::Csv(_) => "CsvError",
            Error::Io(_) => "IoError",
            Error::Usage(_) => "UsageError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
