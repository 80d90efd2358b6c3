//! Batch command-line surface.
//!
//! Subcommands: `estimate` (two-period level/slope effects),
//! `estimate-mp` (group-time cells, aggregations, pre-test), `decompose`
//! (two-period TWFE accountings), `decompose-mp` (four-comparison
//! decomposition), `simulate` (DGP families with oracle files), and
//! `replicate` (plot-ready series behind the illustrative figures).
//!
//! Outputs are files or stdout (JSON; CSV where noted). Domain errors
//! exit 1 with a machine-readable JSON object on stderr carrying the
//! error name verbatim; usage errors exit 2. All randomness flows from
//! `--seed`; omitting it draws an entropy seed and logs it to stderr.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::baseline::{acr, acr_star, att_dd, path_mean, Assumption, CellEstimate, TwoPeriodPanel};
use crate::bootstrap::{bootstrap, BootstrapResult, BootstrapSpec};
use crate::error::{Error, Result};
use crate::mp::{
    aggregate, compute_all_cells, pretest, AggregatedEffect, AggregationKind, GroupTimeEstimate,
    MpComparison, MpEstimand,
};
use crate::mp_decomp::{decompose_mp, twfe_beta_mp, MpDecompositionReport};
use crate::panel::{
    derive_timing, DoseGrid, DoseOnset, GridConfig, PanelDataset, Schema, TimingIndex,
};
use crate::simlab::{generate, oracle_twfe_target, DgpFamily, DgpSpec};
use crate::smooth::{Bandwidth, Kernel, SmoothMethod, SmootherSpec};
use crate::twfe::{
    decompose_alt_acr, decompose_levels, decompose_mechanical, decompose_wald2x2, dose_density,
    mechanical_weights, twfe_beta_2p, DecompositionReport,
};

#[derive(Parser, Debug)]
#[command(
    name = "dose-did",
    version,
    about = "Difference-in-differences estimation and TWFE diagnostics for continuous treatments"
)]
struct Cli {
    /// Master seed; omitted means an entropy seed, logged to stderr.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap for parallel sections.
    #[arg(long, global = true, env = "DOSE_DID_THREADS")]
    threads: Option<usize>,
    /// key=value defaults file; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-period level and slope estimates from a CSV panel.
    Estimate(EstimateArgs),
    /// Group-time estimates, aggregations, and the pre-test.
    EstimateMp(EstimateMpArgs),
    /// Two-period TWFE coefficient decompositions.
    Decompose(DecomposeArgs),
    /// Multi-period four-comparison TWFE decomposition.
    DecomposeMp(DecomposeMpArgs),
    /// Generate a simulated panel and its oracle effect file.
    Simulate(SimulateArgs),
    /// Rebuild the plot-ready series behind the illustrative figures.
    Replicate(ReplicateArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Input CSV path.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, default_value = "unit")]
    unit_col: String,
    #[arg(long, default_value = "period")]
    period_col: String,
    #[arg(long, default_value = "dose")]
    dose_col: String,
    #[arg(long, default_value = "outcome")]
    outcome_col: String,
    /// Explicit first-treatment-period column; absent means timing is
    /// derived from the first positive exposure.
    #[arg(long)]
    onset_col: Option<String>,
    /// At most this many distinct positive doses counts as discrete.
    #[arg(long, default_value_t = 50)]
    discrete_threshold: usize,
}

impl InputArgs {
    fn schema(&self) -> Schema {
        Schema {
            unit: self.unit_col.clone(),
            period: self.period_col.clone(),
            dose: self.dose_col.clone(),
            outcome: self.outcome_col.clone(),
            onset: self.onset_col.clone(),
        }
    }

    fn grid_config(&self) -> GridConfig {
        GridConfig {
            discrete_threshold: self.discrete_threshold,
        }
    }

    /// Load, derive timing, and canonicalize exposure.
    ///
    /// Files written by `emit_canonical` (header contains both `group`
    /// and `exposure`) are recognized and read through their explicit
    /// onset column; map columns yourself to override.
    fn load(&self) -> Result<(PanelDataset, TimingIndex)> {
        let mut raw = Vec::new();
        File::open(&self.input)?.read_to_end(&mut raw)?;

        let mut schema = self.schema();
        if schema.onset.is_none() {
            let mut rdr = csv::Reader::from_reader(raw.as_slice());
            if let Ok(headers) = rdr.headers() {
                let has = |name: &str| headers.iter().any(|h| h == name);
                if has("group") && has("exposure") && has(&schema.dose) {
                    schema.onset = Some("group".to_string());
                }
            }
        }

        let data = PanelDataset::load_csv(raw.as_slice(), &schema)?;
        let onset = if schema.onset.is_some() {
            DoseOnset::ExplicitColumn
        } else {
            DoseOnset::FirstPositiveExposure
        };
        let timing = derive_timing(&data, onset)?;
        let data = data.canonicalize_exposure(&timing);
        Ok((data, timing))
    }
}

#[derive(Args, Debug, Clone)]
struct SmootherArgs {
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    kernel: KernelArg,
    /// Fixed bandwidth; omitted means the rule of thumb.
    #[arg(long)]
    bandwidth: Option<f64>,
}

impl SmootherArgs {
    fn spec(&self, derivative_order: u8) -> SmootherSpec {
        SmootherSpec {
            method: SmoothMethod::LocalLinear,
            kernel: match self.kernel {
                KernelArg::Epanechnikov => Kernel::Epanechnikov,
                KernelArg::Gaussian => Kernel::Gaussian,
            },
            bandwidth: match self.bandwidth {
                Some(h) => Bandwidth::Fixed(h),
                None => Bandwidth::RuleOfThumb,
            },
            derivative_order,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum KernelArg {
    Epanechnikov,
    Gaussian,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AssumeArg {
    Pt,
    StrongPt,
}

impl From<AssumeArg> for Assumption {
    fn from(a: AssumeArg) -> Assumption {
        match a {
            AssumeArg::Pt => Assumption::Pt,
            AssumeArg::StrongPt => Assumption::StrongPt,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EstimandArg {
    PathMean,
    Att,
    Acr,
    AcrStar,
}

#[derive(Args, Debug, Clone)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = EstimandArg::Att)]
    estimand: EstimandArg,
    /// Doses to evaluate, comma separated; omitted means every observed
    /// positive dose.
    #[arg(long, value_delimiter = ',')]
    at: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = AssumeArg::Pt)]
    assume: AssumeArg,
    #[command(flatten)]
    smoother: SmootherArgs,
    /// Bootstrap spec, e.g. reps=999,seed=42,level=0.95.
    #[arg(long)]
    bootstrap: Option<String>,
    /// Output path; omitted means stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ComparisonArg {
    Nyt,
    Never,
}

impl From<ComparisonArg> for MpComparison {
    fn from(c: ComparisonArg) -> MpComparison {
        match c {
            ComparisonArg::Nyt => MpComparison::NotYetTreated,
            ComparisonArg::Never => MpComparison::NeverTreated,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum AggregateArg {
    Group,
    Overall,
    Star,
    Es,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MpEstimandArg {
    Ate,
    Acr,
}

#[derive(Args, Debug, Clone)]
struct EstimateMpArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = ComparisonArg::Nyt)]
    comparison: ComparisonArg,
    /// Cell estimand; aggregations run over these cells.
    #[arg(long, value_enum, default_value_t = MpEstimandArg::Acr)]
    estimand: MpEstimandArg,
    #[arg(long, value_enum)]
    aggregate: Option<AggregateArg>,
    /// Dose for group/overall/es aggregations.
    #[arg(long)]
    at_dose: Option<f64>,
    /// Timing group for the group aggregation.
    #[arg(long)]
    group: Option<usize>,
    /// Event time for the es aggregation; omitted means the dose-averaged
    /// event study at this event time.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    event_time: i64,
    /// Most negative event time for the pre-test (e.g. -2).
    #[arg(long, allow_hyphen_values = true)]
    pretest: Option<i64>,
    #[arg(long, value_enum, default_value_t = AssumeArg::StrongPt)]
    assume: AssumeArg,
    #[command(flatten)]
    smoother: SmootherArgs,
    #[arg(long)]
    bootstrap: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MethodArg {
    Mechanical,
    Wald2x2,
    AltAcr,
    Levels,
}

#[derive(Args, Debug, Clone)]
struct DecomposeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Mechanical)]
    method: MethodArg,
    /// Write (dose, weight, density) rows for plotting.
    #[arg(long)]
    emit_weights: Option<PathBuf>,
    #[arg(long)]
    bootstrap: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct DecomposeMpArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Write (term_type, g, k, weight, delta, nuisance_dynamics,
    /// nuisance_heterogeneity) rows.
    #[arg(long)]
    emit_terms: Option<PathBuf>,
    #[arg(long)]
    bootstrap: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FamilyArg {
    TwoPeriodExp,
    TwoPeriodExpLogdose,
    FourGroupStaggered,
    ConstantAcr,
    RampDynamics,
    PreTrend,
}

#[derive(Args, Debug, Clone)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Outcome noise; omitted means the family default (3 for the
    /// two-period exponential designs, 0 for the staggered ones).
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Constant causal response (constant-acr and ramp-dynamics).
    #[arg(long, default_value_t = 2.0)]
    theta: f64,
    /// Per-period effect growth (ramp-dynamics).
    #[arg(long, default_value_t = 1.0)]
    ramp: f64,
    /// Dose-proportional trend slope (pre-trend).
    #[arg(long, default_value_t = 0.3)]
    gamma: f64,
    /// Panel CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Oracle JSON output path.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FigureArg {
    Fig4,
    Fig5,
    Fig6Decomp,
}

#[derive(Args, Debug, Clone)]
struct ReplicateArgs {
    #[arg(long, value_enum)]
    figure: FigureArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut args: Vec<String> = argv.into_iter().map(Into::into).collect();
    if let Err(e) = apply_config_defaults(&mut args) {
        emit_error(&e);
        return 1;
    }

    let matches = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            // clap prints help/version to stdout with code 0 and usage
            // errors to stderr with code 2.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };

    if let Some(threads) = cli.threads {
        // The global pool can only be set once per process; later calls
        // keep the existing pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let seed = match cli.seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::rng().random();
            eprintln!("{}", json!({ "note": "entropy seed", "seed": s }));
            s
        }
    };

    match dispatch(cli.command, seed) {
        Ok(()) => 0,
        Err(e) => {
            emit_error(&e);
            1
        }
    }
}

fn emit_error(e: &Error) {
    eprintln!("{}", json!({ "error": e.name(), "message": e.to_string() }));
}

/// Merge key=value defaults from --config into argv; flags present in
/// argv win. Lines starting with # and blank lines are ignored.
fn apply_config_defaults(args: &mut Vec<String>) -> Result<()> {
    let mut config_path: Option<String> = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            config_path = args.get(i + 1).cloned();
        } else if let Some(rest) = a.strip_prefix("--config=") {
            config_path = Some(rest.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(());
    };
    let mut text = String::new();
    File::open(&path)?.read_to_string(&mut text)?;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Usage(format!("config line without '=': {line}")));
        };
        let key = key.trim();
        let flag = format!("--{key}");
        let already = args
            .iter()
            .any(|a| a == &flag || a.starts_with(&format!("{flag}=")));
        if !already {
            args.push(flag);
            args.push(value.trim().to_string());
        }
    }
    Ok(())
}

fn dispatch(command: Command, seed: u64) -> Result<()> {
    match command {
        Command::Estimate(a) => cmd_estimate(a, seed),
        Command::EstimateMp(a) => cmd_estimate_mp(a, seed),
        Command::Decompose(a) => cmd_decompose(a, seed),
        Command::DecomposeMp(a) => cmd_decompose_mp(a, seed),
        Command::Simulate(a) => cmd_simulate(a, seed),
        Command::Replicate(a) => cmd_replicate(a, seed),
    }
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut w = out_writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Usage(format!("cannot serialize output: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// Parse "reps=999,seed=42,level=0.95"; seed falls back to the master.
fn parse_bootstrap(text: &str, master_seed: u64) -> Result<BootstrapSpec> {
    let mut spec = BootstrapSpec {
        seed: master_seed,
        ..BootstrapSpec::default()
    };
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("bootstrap option without '=': {part}")))?;
        match key.trim() {
            "reps" => {
                spec.n_reps = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad reps value: {value}")))?
            }
            "seed" => {
                spec.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad seed value: {value}")))?
            }
            "level" => {
                spec.ci_level = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad level value: {value}")))?
            }
            other => return Err(Error::Usage(format!("unknown bootstrap option: {other}"))),
        }
    }
    Ok(spec)
}

#[derive(Serialize)]
struct EstimateRecord {
    #[serde(flatten)]
    cell: CellEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_upper: Option<f64>,
}

fn cmd_estimate(a: EstimateArgs, seed: u64) -> Result<()> {
    let (data, _) = a.input.load()?;
    let grid_config = a.input.grid_config();
    let panel = TwoPeriodPanel::new(&data, grid_config)?;
    let assumption: Assumption = a.assume.into();
    let spec0 = a.smoother.spec(0);
    let spec1 = a.smoother.spec(1);
    let boot = a
        .bootstrap
        .as_deref()
        .map(|t| parse_bootstrap(t, seed))
        .transpose()?;

    enum Target {
        AtDose(EstimandArg, f64),
        Star,
    }
    let mut targets = Vec::new();
    match a.estimand {
        EstimandArg::AcrStar => targets.push(Target::Star),
        kind => {
            let doses = match &a.at {
                Some(list) => list.clone(),
                None => panel.grid().points.clone(),
            };
            for d in doses {
                targets.push(Target::AtDose(kind, d));
            }
        }
    }

    let evaluate = |panel: &TwoPeriodPanel, target: &Target| -> Result<CellEstimate> {
        match *target {
            Target::Star => acr_star(panel, &spec1, assumption),
            Target::AtDose(EstimandArg::PathMean, d) => path_mean(panel, d, &spec0),
            Target::AtDose(EstimandArg::Att, d) => att_dd(panel, d, &spec0, assumption),
            Target::AtDose(EstimandArg::Acr, d) => acr(panel, d, &spec1, assumption),
            Target::AtDose(EstimandArg::AcrStar, _) => unreachable!("handled above"),
        }
    };

    let mut records = Vec::new();
    for target in &targets {
        let mut cell = evaluate(&panel, target)?;
        let mut ci = (None, None);
        if let Some(bspec) = &boot {
            let stat = |resampled: &PanelDataset| -> Result<f64> {
                let p = TwoPeriodPanel::new(resampled, grid_config)?;
                Ok(evaluate(&p, target)?.value)
            };
            let res = bootstrap(&data, stat, bspec)?;
            cell.se = Some(res.se);
            ci = (Some(res.ci_lower), Some(res.ci_upper));
        }
        records.push(EstimateRecord {
            cell,
            ci_lower: ci.0,
            ci_upper: ci.1,
        });
    }

    match a.format {
        FormatArg::Json => write_json(&a.out, &records),
        FormatArg::Csv => {
            let mut w = csv::Writer::from_writer(out_writer(&a.out)?);
            w.write_record([
                "estimand",
                "dose",
                "value",
                "se",
                "n_eff",
                "comparison",
                "assumption",
            ])?;
            for r in &records {
                let c = &r.cell;
                w.write_record(&[
                    format!("{:?}", c.estimand),
                    c.dose.map_or(String::new(), |d| d.to_string()),
                    c.value.to_string(),
                    c.se.map_or(String::new(), |s| s.to_string()),
                    c.n_eff.to_string(),
                    format!("{:?}", c.comparison),
                    format!("{:?}", c.assumption),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AggregateRecord {
    #[serde(flatten)]
    aggregate: AggregatedEffect,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_upper: Option<f64>,
}

#[derive(Serialize)]
struct EstimateMpOutput {
    cells: Vec<GroupTimeEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aggregate: Option<AggregateRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pretest: Vec<AggregatedEffect>,
}

fn cmd_estimate_mp(a: EstimateMpArgs, seed: u64) -> Result<()> {
    let (data, timing) = a.input.load()?;
    let grid_config = a.input.grid_config();
    let grid = DoseGrid::from_panel(&data, grid_config)?;
    let comparison: MpComparison = a.comparison.into();
    let assumption: Assumption = a.assume.into();
    let estimand = match a.estimand {
        MpEstimandArg::Acr => MpEstimand::AcrGtd,
        MpEstimandArg::Ate => match assumption {
            Assumption::StrongPt => MpEstimand::AteGtd,
            Assumption::Pt => MpEstimand::AttGtd,
        },
    };
    let spec = a
        .smoother
        .spec(if estimand == MpEstimand::AcrGtd { 1 } else { 0 });
    let boot = a
        .bootstrap
        .as_deref()
        .map(|t| parse_bootstrap(t, seed))
        .transpose()?;

    let cells = compute_all_cells(
        &data, &timing, &grid, estimand, comparison, &spec, assumption,
    )?;

    let kind = match a.aggregate {
        None => None,
        Some(AggregateArg::Star) => Some(AggregationKind::StarMp),
        Some(AggregateArg::Group) => {
            let g = a
                .group
                .ok_or_else(|| Error::Usage("--group is required".into()))?;
            let dose = a
                .at_dose
                .ok_or_else(|| Error::Usage("--at-dose is required".into()))?;
            Some(AggregationKind::Group { g, dose })
        }
        Some(AggregateArg::Overall) => {
            let dose = a
                .at_dose
                .ok_or_else(|| Error::Usage("--at-dose is required".into()))?;
            Some(AggregationKind::Overall { dose })
        }
        Some(AggregateArg::Es) => Some(match a.at_dose {
            Some(dose) => AggregationKind::EventStudy {
                e: a.event_time,
                dose,
            },
            None => AggregationKind::EventStudyAvg { e: a.event_time },
        }),
    };

    let aggregate_record = match kind {
        None => None,
        Some(kind) => {
            let mut agg = aggregate(&data, &timing, &cells, kind)?;
            let mut ci = (None, None);
            if let Some(bspec) = &boot {
                let stat = |resampled: &PanelDataset| -> Result<f64> {
                    let t = derive_timing(resampled, DoseOnset::FirstPositiveExposure)?;
                    let g = DoseGrid::from_panel(resampled, grid_config)?;
                    let cells = compute_all_cells(
                        resampled, &t, &g, estimand, comparison, &spec, assumption,
                    )?;
                    Ok(aggregate(resampled, &t, &cells, kind)?.value)
                };
                let res = bootstrap(&data, stat, bspec)?;
                agg.se = Some(res.se);
                ci = (Some(res.ci_lower), Some(res.ci_upper));
            }
            Some(AggregateRecord {
                aggregate: agg,
                ci_lower: ci.0,
                ci_upper: ci.1,
            })
        }
    };

    let pretest_values = match a.pretest {
        None => Vec::new(),
        Some(e_min) => pretest(&data, &timing, &grid, e_min, comparison, &spec)?,
    };

    write_json(
        &a.out,
        &EstimateMpOutput {
            cells,
            aggregate: aggregate_record,
            pretest: pretest_values,
        },
    )
}

#[derive(Serialize)]
struct DecomposeOutput {
    #[serde(flatten)]
    report: DecompositionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_ci_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_ci_upper: Option<f64>,
}

fn cmd_decompose(a: DecomposeArgs, seed: u64) -> Result<()> {
    let (data, _) = a.input.load()?;
    let grid_config = a.input.grid_config();
    let panel = TwoPeriodPanel::new(&data, grid_config)?;
    let report = match a.method {
        MethodArg::Mechanical => decompose_mechanical(&panel)?,
        MethodArg::Wald2x2 => decompose_wald2x2(&panel)?,
        MethodArg::AltAcr => decompose_alt_acr(&panel)?,
        MethodArg::Levels => decompose_levels(&panel)?,
    };

    if let Some(path) = &a.emit_weights {
        emit_weight_curve(&panel, path)?;
    }

    let mut beta_boot: Option<BootstrapResult> = None;
    if let Some(text) = &a.bootstrap {
        let bspec = parse_bootstrap(text, seed)?;
        let stat = |resampled: &PanelDataset| -> Result<f64> {
            twfe_beta_2p(&TwoPeriodPanel::new(resampled, grid_config)?)
        };
        beta_boot = Some(bootstrap(&data, stat, &bspec)?);
    }

    write_json(
        &a.out,
        &DecomposeOutput {
            report,
            beta_se: beta_boot.as_ref().map(|b| b.se),
            beta_ci_lower: beta_boot.as_ref().map(|b| b.ci_lower),
            beta_ci_upper: beta_boot.as_ref().map(|b| b.ci_upper),
        },
    )
}

/// (dose, weight, density) rows over a fine grid for plotting the
/// mechanical weight curve against the dose density.
fn emit_weight_curve(panel: &TwoPeriodPanel, path: &Path) -> Result<()> {
    let mw = mechanical_weights(panel)?;
    let positive: Vec<f64> = panel.doses().iter().copied().filter(|&d| d > 0.0).collect();
    let (lo, hi) = (panel.grid().d_lo, panel.grid().d_hi);
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["dose", "weight", "density"])?;
    let steps = 200usize;
    for i in 0..=steps {
        let d = lo + (hi - lo) * i as f64 / steps as f64;
        w.write_record(&[
            d.to_string(),
            mw.w1_at(d).to_string(),
            dose_density(&positive, d).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DecomposeMpOutput {
    #[serde(flatten)]
    report: MpDecompositionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_ci_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_ci_upper: Option<f64>,
}

fn cmd_decompose_mp(a: DecomposeMpArgs, seed: u64) -> Result<()> {
    let (data, timing) = a.input.load()?;
    let report = decompose_mp(&data, &timing)?;

    if let Some(path) = &a.emit_terms {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record([
            "term_type",
            "g",
            "k",
            "weight",
            "delta",
            "nuisance_dynamics",
            "nuisance_heterogeneity",
        ])?;
        for t in &report.terms {
            let nuis = report.nuisance.iter().find(|n| n.g == t.g && n.k == t.k);
            w.write_record(&[
                format!("{:?}", t.kind),
                t.g.to_string(),
                t.k.to_string(),
                t.weight.to_string(),
                t.delta.to_string(),
                nuis.map_or(String::new(), |n| n.dynamics.to_string()),
                nuis.and_then(|n| n.heterogeneity)
                    .map_or(String::new(), |h| h.to_string()),
            ])?;
        }
        w.flush()?;
    }

    let mut beta_boot: Option<BootstrapResult> = None;
    if let Some(text) = &a.bootstrap {
        let bspec = parse_bootstrap(text, seed)?;
        let stat = |resampled: &PanelDataset| -> Result<f64> {
            let t = derive_timing(resampled, DoseOnset::FirstPositiveExposure)?;
            twfe_beta_mp(resampled, &t)
        };
        beta_boot = Some(bootstrap(&data, stat, &bspec)?);
    }

    write_json(
        &a.out,
        &DecomposeMpOutput {
            report,
            beta_se: beta_boot.as_ref().map(|b| b.se),
            beta_ci_lower: beta_boot.as_ref().map(|b| b.ci_lower),
            beta_ci_upper: beta_boot.as_ref().map(|b| b.ci_upper),
        },
    )
}

#[derive(Serialize)]
struct OracleCell {
    g: usize,
    t: usize,
    dose: f64,
    ate: f64,
    acr: f64,
}

#[derive(Serialize)]
struct OracleFile {
    family: String,
    seed: u64,
    n_units: usize,
    noise_sd: f64,
    post_trend: f64,
    dose_grid: Vec<f64>,
    att_dd: Vec<f64>,
    acrt_dd: Vec<f64>,
    selection_bias_slope: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    twfe_target: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    cells: Vec<OracleCell>,
}

fn build_spec(a: &SimulateArgs, seed: u64) -> DgpSpec {
    let mut spec = match a.family {
        FamilyArg::TwoPeriodExp => DgpSpec::two_period_exponential(seed),
        FamilyArg::TwoPeriodExpLogdose => DgpSpec {
            family: DgpFamily::TwoPeriodExpLogDose { dose_scale: 3.0 },
            ..DgpSpec::two_period_exponential(seed)
        },
        FamilyArg::FourGroupStaggered => DgpSpec::four_group_staggered(seed),
        FamilyArg::ConstantAcr => DgpSpec::constant_acr(a.theta, seed),
        FamilyArg::RampDynamics => DgpSpec::ramp_dynamics(a.theta, a.ramp, seed),
        FamilyArg::PreTrend => DgpSpec::pre_trend(a.gamma, seed),
    };
    spec.n_units = a.n;
    if let Some(sd) = a.noise_sd {
        spec.noise_sd = sd;
    }
    spec
}

fn cmd_simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    let spec = build_spec(&a, seed);
    let (panel, oracle) = generate(&spec)?;
    let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure)?;
    panel.emit_canonical(&timing, BufWriter::new(File::create(&a.out)?))?;

    if let Some(oracle_path) = &a.oracle {
        let grid = DoseGrid::from_panel(&panel, GridConfig::default())?;
        let mut cells = Vec::new();
        for g in timing.treated_groups() {
            let mut atoms: Vec<f64> = timing.group_info(g).unwrap().doses.clone();
            atoms.sort_by(|x, y| x.partial_cmp(y).unwrap());
            atoms.dedup();
            for t in g..=timing.n_periods() {
                for &d in &atoms {
                    cells.push(OracleCell {
                        g,
                        t,
                        dose: d,
                        ate: (oracle.ate_gtd)(g, t, d),
                        acr: (oracle.acr_gtd)(g, t, d),
                    });
                }
            }
        }
        let file = OracleFile {
            family: spec.family.name().to_string(),
            seed: spec.seed,
            n_units: spec.n_units,
            noise_sd: spec.noise_sd,
            post_trend: oracle.post_trend,
            dose_grid: grid.points.clone(),
            att_dd: grid.points.iter().map(|&d| (oracle.att_dd)(d)).collect(),
            acrt_dd: grid.points.iter().map(|&d| (oracle.acrt_dd)(d)).collect(),
            selection_bias_slope: grid
                .points
                .iter()
                .map(|&d| (oracle.selection_bias_slope)(d))
                .collect(),
            twfe_target: oracle_twfe_target(&spec).ok(),
            cells: if panel.n_periods() > 2 {
                cells
            } else {
                Vec::new()
            },
        };
        write_json(&Some(oracle_path.clone()), &file)?;
    }
    Ok(())
}

fn cmd_replicate(a: ReplicateArgs, seed: u64) -> Result<()> {
    match a.figure {
        FigureArg::Fig4 => replicate_fig4(&a, seed),
        FigureArg::Fig5 => replicate_fig5(&a, seed),
        FigureArg::Fig6Decomp => replicate_fig6(&a, seed),
    }
}

/// Scatter of outcome changes with per-dose cell means, the fitted TWFE
/// line, and the own-dose causal response reference line (slope 1), both
/// lines anchored at the sample means.
fn replicate_fig4(a: &ReplicateArgs, seed: u64) -> Result<()> {
    let mut spec = DgpSpec::two_period_exponential(seed);
    spec.n_units = a.n;
    let (panel, _) = generate(&spec)?;
    let two = TwoPeriodPanel::new(&panel, GridConfig::default())?;
    let beta = twfe_beta_2p(&two)?;
    let smoother = SmootherSpec::default();

    let d_mean = crate::numeric::mean(two.doses());
    let dy_mean = crate::numeric::mean(two.deltas());

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&a.out)?));
    w.write_record(["dose", "dy", "cell_mean", "twfe_line", "true_acrt_line"])?;
    for (&d, &dy) in two.doses().iter().zip(two.deltas()) {
        let cell = path_mean(&two, d, &smoother)?.value;
        w.write_record(&[
            d.to_string(),
            dy.to_string(),
            cell.to_string(),
            (dy_mean + beta * (d - d_mean)).to_string(),
            (dy_mean + 1.0 * (d - d_mean)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Dose density in gray against the TWFE weight curve in black.
fn replicate_fig5(a: &ReplicateArgs, seed: u64) -> Result<()> {
    let mut spec = DgpSpec::two_period_exponential(seed);
    spec.n_units = a.n;
    let (panel, _) = generate(&spec)?;
    let two = TwoPeriodPanel::new(&panel, GridConfig::default())?;
    emit_weight_curve(&two, &a.out)
}

/// The four-comparison decomposition table for the staggered design.
fn replicate_fig6(a: &ReplicateArgs, seed: u64) -> Result<()> {
    let mut spec = DgpSpec::four_group_staggered(seed);
    spec.n_units = a.n;
    let (panel, _) = generate(&spec)?;
    let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure)?;
    let report = decompose_mp(&panel, &timing)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&a.out)?));
    w.write_record(["term_type", "g", "k", "weight", "delta", "beta_twfe"])?;
    for t in &report.terms {
        w.write_record(&[
            format!("{:?}", t.kind),
            t.g.to_string(),
            t.k.to_string(),
            t.weight.to_string(),
            t.delta.to_string(),
            report.beta_twfe.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
