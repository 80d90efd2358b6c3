//! Unit-level cluster bootstrap for estimator standard errors.
//!
//! Replicates resample whole unit time paths with replacement. The
//! replicate stream is deterministic in the seed regardless of thread
//! count, and replicates where a cell empties out are dropped and
//! counted.
//!
//! Run with: cargo run --example bootstrap_inference

use dose_did::baseline::{att_dd, Assumption, TwoPeriodPanel};
use dose_did::bootstrap::{bootstrap, BootstrapSpec};
use dose_did::panel::{GridConfig, PanelDataset};
use dose_did::simlab::{generate, DgpSpec};
use dose_did::smooth::SmootherSpec;

fn main() -> dose_did::Result<()> {
    let (panel, oracle) = generate(&DgpSpec::two_period_exponential(13))?;
    let two = TwoPeriodPanel::new(&panel, GridConfig::default())?;
    let smoother = SmootherSpec::default();

    // Level effect at the median positive dose.
    let mut positive: Vec<f64> = two.doses().iter().copied().filter(|&d| d > 0.0).collect();
    positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = positive[(positive.len() - 1) / 2];

    let point = att_dd(&two, median, &smoother, Assumption::Pt)?;
    let statistic = |resampled: &PanelDataset| -> dose_did::Result<f64> {
        let p = TwoPeriodPanel::new(resampled, GridConfig::default())?;
        Ok(att_dd(&p, median, &smoother, Assumption::Pt)?.value)
    };

    let spec = BootstrapSpec {
        n_reps: 999,
        seed: 42,
        ci_level: 0.95,
    };
    let res = bootstrap(&panel, statistic, &spec)?;

    println!("level effect at dose {median}: {:+.4}", point.value);
    println!(
        "oracle value:               {:+.4}",
        (oracle.att_dd)(median)
    );
    println!("bootstrap se:               {:.4}", res.se);
    println!(
        "95% percentile interval:    [{:+.4}, {:+.4}]",
        res.ci_lower, res.ci_upper
    );
    println!(
        "95% normal interval:        [{:+.4}, {:+.4}]",
        res.ci_normal_lower, res.ci_normal_upper
    );
    println!(
        "replicates kept {}, dropped {}",
        res.replicates.len(),
        res.n_failed
    );
    if res.fragile {
        println!("warning: more than 10% of replicates failed; read with care");
    }
    Ok(())
}
