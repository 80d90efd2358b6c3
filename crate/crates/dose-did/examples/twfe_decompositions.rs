//! The two-period TWFE coefficient and its four exact accountings.
//!
//! Each decomposition writes beta as a weighted sum of different
//! building blocks; the residual is zero up to float roundoff in every
//! case, so the choice between them is about interpretation, not fit.
//!
//! Run with: cargo run --example twfe_decompositions

use dose_did::baseline::TwoPeriodPanel;
use dose_did::panel::GridConfig;
use dose_did::simlab::{generate, DgpSpec};
use dose_did::twfe::{
    decompose_alt_acr, decompose_levels, decompose_mechanical, decompose_wald2x2,
    mechanical_weights, twfe_beta_2p,
};

fn main() -> dose_did::Result<()> {
    let (panel, _) = generate(&DgpSpec::two_period_exponential(7))?;
    let two = TwoPeriodPanel::new(&panel, GridConfig::default())?;

    let beta = twfe_beta_2p(&two)?;
    println!("TWFE slope of outcome change on dose: {beta:.4}\n");

    for report in [
        decompose_mechanical(&two)?,
        decompose_wald2x2(&two)?,
        decompose_alt_acr(&two)?,
        decompose_levels(&two)?,
    ] {
        println!(
            "{:<12?} terms {:3}   weight sum {:+.10}   residual {:+.2e}   flags {:?}",
            report.method,
            report.terms.len(),
            report.weight_sum,
            report.residual,
            report.flags,
        );
        for w in &report.warnings {
            println!("             warning: {w}");
        }
    }

    // The mechanical weights are hump-shaped around the mean dose, not
    // proportional to the dose distribution.
    let mw = mechanical_weights(&two)?;
    println!(
        "\nmean dose {:.3}; mechanical weight curve nearby:",
        mw.mean_dose()
    );
    for d in [1.0, 2.0, mw.mean_dose(), 4.0, 6.0] {
        println!("  w1({d:5.2}) = {:.4}", mw.w1_at(d));
    }
    Ok(())
}
