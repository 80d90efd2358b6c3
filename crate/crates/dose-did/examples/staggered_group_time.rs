//! Group-time cells, aggregations, and the pre-test on a staggered panel.
//!
//! The staggered design treats an early group (doses 2 and 4) in period
//! 3 and a late group (doses 5 and 6) in period 5, with a never-treated
//! arm; the effect is a one-time level shift of d^1.5. Every post cell
//! recovers that shift exactly in the noiseless design.
//!
//! Run with: cargo run --example staggered_group_time

use dose_did::baseline::Assumption;
use dose_did::mp::{
    aggregate, compute_all_cells, pretest, AggregationKind, MpComparison, MpEstimand,
};
use dose_did::panel::{derive_timing, DoseGrid, DoseOnset, GridConfig};
use dose_did::simlab::{generate, DgpSpec};
use dose_did::smooth::SmootherSpec;

fn main() -> dose_did::Result<()> {
    let (panel, oracle) = generate(&DgpSpec::four_group_staggered(5))?;
    let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure)?;
    let grid = DoseGrid::from_panel(&panel, GridConfig::default())?;
    let smoother = SmootherSpec::default();

    let levels = compute_all_cells(
        &panel,
        &timing,
        &grid,
        MpEstimand::AteGtd,
        MpComparison::NotYetTreated,
        &smoother,
        Assumption::StrongPt,
    )?;
    println!("group  period  dose   level effect   oracle");
    for c in &levels {
        println!(
            "{:5}  {:6}  {:4.1}   {:12.6}   {:.6}",
            c.g,
            c.t,
            c.dose,
            c.value,
            (oracle.ate_gtd)(c.g, c.t, c.dose)
        );
    }

    // Slope cells feed the aggregations.
    let slopes = compute_all_cells(
        &panel,
        &timing,
        &grid,
        MpEstimand::AcrGtd,
        MpComparison::NotYetTreated,
        &smoother,
        Assumption::StrongPt,
    )?;
    let overall4 = aggregate(
        &panel,
        &timing,
        &slopes,
        AggregationKind::Overall { dose: 4.0 },
    )?;
    let star = aggregate(&panel, &timing, &slopes, AggregationKind::StarMp)?;
    let es0 = aggregate(
        &panel,
        &timing,
        &slopes,
        AggregationKind::EventStudyAvg { e: 0 },
    )?;
    println!("\noverall slope at dose 4:          {:.6}", overall4.value);
    println!("scalar slope aggregate:           {:.6}", star.value);
    println!("event-study slope at event time 0: {:.6}", es0.value);

    // Negative event times form the pre-test; a parallel-trends design
    // centers them on zero.
    let pre = pretest(
        &panel,
        &timing,
        &grid,
        -2,
        MpComparison::NotYetTreated,
        &smoother,
    )?;
    for p in &pre {
        if let AggregationKind::EventStudyAvg { e } = p.kind {
            println!("pre-test at event time {e}: {:+.2e}", p.value);
        }
    }
    Ok(())
}
