//! Four-comparison decomposition of the multi-period TWFE slope, and the
//! nuisance terms that break it under treatment-effect dynamics.
//!
//! On a constant-response design with no dynamics, every comparison
//! equals the true slope and the regression recovers it. Add a ramp
//! (effects growing with time since treatment) and the already-treated
//! comparisons absorb the drift: beta moves away from the causal target
//! while the dynamics diagnostic turns positive.
//!
//! Run with: cargo run --example mp_twfe_decomposition

use dose_did::mp_decomp::{decompose_mp, nuisance_diagnostics, twfe_beta_mp};
use dose_did::panel::{derive_timing, DoseOnset};
use dose_did::simlab::{generate, DgpSpec};

fn main() -> dose_did::Result<()> {
    let theta = 2.0;

    for (label, spec) in [
        (
            "constant response, no dynamics",
            DgpSpec::constant_acr(theta, 11),
        ),
        (
            "same response plus a ramp",
            DgpSpec::ramp_dynamics(theta, 1.0, 11),
        ),
    ] {
        let (panel, _) = generate(&spec)?;
        let timing = derive_timing(&panel, DoseOnset::FirstPositiveExposure)?;
        let beta = twfe_beta_mp(&panel, &timing)?;
        let report = decompose_mp(&panel, &timing)?;

        println!("== {label}");
        println!(
            "beta {:+.6}  (true slope {theta:+.3})   residual {:+.2e}   weight sum {:.10}",
            beta, report.residual, report.weight_sum
        );
        for t in &report.terms {
            if t.weight > 1e-12 {
                println!(
                    "  {:<8?} g={} k={}   weight {:.4}   delta {:+.4}",
                    t.kind, t.g, t.k, t.weight, t.delta
                );
            }
        }
        let nd = nuisance_diagnostics(&panel, &timing, 3, 5)?;
        println!("  dynamics diagnostic (pair 3,5): {:+.6}\n", nd.dynamics);
    }
    Ok(())
}
