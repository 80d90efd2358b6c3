//! Unit-level nonparametric bootstrap.
//!
//! Units are the independent sampling unit, so replicates draw whole unit
//! time paths with replacement (a cluster bootstrap). Replicate RNG
//! streams are derived from the master seed by replicate index, so the
//! replicate sequence is identical regardless of thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{inverse_normal_cdf, mean, quantile_sorted, sample_sd};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BootstrapSpec {
    pub n_reps: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            n_reps: 999,
            seed: 0,
            ci_level: 0.95,
        }
    }
}

impl BootstrapSpec {
    fn validate(&self) -> Result<()> {
        if self.n_reps < 1 {
            return Err(Error::Usage("bootstrap needs n_reps >= 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Usage(format!(
                "ci_level must be in (0,1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    /// Standard deviation of the successful replicate values.
    pub se: f64,
    /// Percentile interval bounds.
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Normal-approximation interval around the replicate mean.
    pub ci_normal_lower: f64,
    pub ci_normal_upper: f64,
    pub n_reps: usize,
    /// Replicates where the statistic failed (e.g. a cell emptied out);
    /// they are dropped and counted.
    pub n_failed: usize,
    /// More than 10% of replicates failed: the statistic is sensitive to
    /// resampling and its interval should be read with care.
    pub fragile: bool,
    pub replicates: Vec<f64>,
}

/// Build a resampled panel of the same size, drawing units with
/// replacement and keeping their full time paths.
fn resample(data: &PanelDataset, rng: &mut ChaCha8Rng) -> PanelDataset {
    let n = data.n_units();
    let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    data.select_units(&indices)
}

fn replicate_rng(master: u64, rep: usize) -> ChaCha8Rng {
    // SplitMix-style stream separation keyed by replicate index.
    let derived = master ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(derived)
}

/// Bootstrap a scalar statistic of a panel.
///
/// The statistic may fail on some replicates (resampling can empty a
/// cell); failures are dropped and counted. Replicates run in parallel.
pub fn bootstrap<F>(
    data: &PanelDataset,
    statistic: F,
    spec: &BootstrapSpec,
) -> Result<BootstrapResult>
where
    F: Fn(&PanelDataset) -> Result<f64> + Sync,
{
    spec.validate()?;
    let outcomes: Vec<Option<f64>> = (0..spec.n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(spec.seed, rep);
            let panel = resample(data, &mut rng);
            statistic(&panel).ok().filter(|v| v.is_finite())
        })
        .collect();

    let replicates: Vec<f64> = outcomes.iter().copied().flatten().collect();
    let n_failed = spec.n_reps - replicates.len();
    if replicates.is_empty() {
        return Err(Error::AllReplicatesFailed(spec.n_reps));
    }

    let se = sample_sd(&replicates);
    let mut sorted = replicates.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = 1.0 - spec.ci_level;
    let ci_lower = quantile_sorted(&sorted, alpha / 2.0);
    let ci_upper = quantile_sorted(&sorted, 1.0 - alpha / 2.0);
    let z = inverse_normal_cdf(1.0 - alpha / 2.0);
    let m = mean(&replicates);

    Ok(BootstrapResult {
        se,
        ci_lower,
        ci_upper,
        ci_normal_lower: m - z * se,
        ci_normal_upper: m + z * se,
        n_reps: spec.n_reps,
        n_failed,
        fragile: n_failed * 10 > spec.n_reps,
        replicates,
    })
}
