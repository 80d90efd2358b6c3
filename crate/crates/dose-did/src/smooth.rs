//! Kernel-weighted local-linear regression on the dose axis.
//!
//! Used for conditional means of outcome paths and their derivatives when
//! the dose support is classified continuous. The local slope coefficient
//! is the derivative estimate, which behaves well at support boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::sample_sd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kernel {
    Epanechnikov,
    Gaussian,
}

impl Kernel {
    fn weight(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    RuleOfThumb,
}

/// Estimation method for conditional dose curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmoothMethod {
    /// Exact cell means on discrete dose atoms.
    CellMeans,
    /// Local-linear kernel regression.
    LocalLinear,
}

/// Smoother configuration shared by all continuous-dose estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherSpec {
    pub method: SmoothMethod,
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    /// 0 for the conditional mean, 1 for its derivative.
    pub derivative_order: u8,
}

impl Default for SmootherSpec {
    fn default() -> Self {
        SmootherSpec {
            method: SmoothMethod::LocalLinear,
            kernel: Kernel::Epanechnikov,
            bandwidth: Bandwidth::RuleOfThumb,
            derivative_order: 0,
        }
    }
}

/// Minimum number of in-window points the bandwidth is widened to cover.
const MIN_WINDOW_POINTS: usize = 5;

/// Resolve the bandwidth at an evaluation point.
///
/// Rule of thumb: 1.06 sd(x) n^(-1/5), widened if needed until at least
/// [`MIN_WINDOW_POINTS`] observations fall inside [d-h, d+h].
pub fn resolve_bandwidth(spec: &SmootherSpec, x: &[f64], at: f64) -> Result<f64> {
    let base = match spec.bandwidth {
        Bandwidth::Fixed(h) => {
            if h.is_nan() || h <= 0.0 {
                return Err(Error::Usage(format!("bandwidth must be positive, got {h}")));
            }
            return Ok(h);
        }
        Bandwidth::RuleOfThumb => {
            let sd = sample_sd(x);
            let n = x.len() as f64;
            1.06 * sd * n.powf(-0.2)
        }
    };
    let mut dists: Vec<f64> = x.iter().map(|&xi| (xi - at).abs()).collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let need = MIN_WINDOW_POINTS.min(dists.len());
    let reach = if need == 0 { 0.0 } else { dists[need - 1] };
    Ok(base.max(reach).max(f64::MIN_POSITIVE))
}

/// Local-linear fit of y on x at the point `at`.
///
/// Returns (level, slope). Fails with `BandwidthTooSmall` when fewer than
/// two distinct x values carry kernel weight.
pub fn local_linear_at(
    x: &[f64],
    y: &[f64],
    at: f64,
    kernel: Kernel,
    h: f64,
) -> Result<(f64, f64)> {
    debug_assert_eq!(x.len(), y.len());
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut t0 = 0.0;
    let mut t1 = 0.0;
    let mut in_window = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - at) / h;
        let w = kernel.weight(u);
        if w <= 0.0 {
            continue;
        }
        in_window += 1;
        lo = lo.min(xi);
        hi = hi.max(xi);
        let dx = xi - at;
        s0 += w;
        s1 += w * dx;
        s2 += w * dx * dx;
        t0 += w * yi;
        t1 += w * dx * yi;
    }
    if in_window == 0 {
        return Err(Error::BandwidthTooSmall { at, h });
    }
    let denom = s0 * s2 - s1 * s1;
    if in_window < 2 || hi <= lo || denom.abs() <= f64::EPSILON * s0 * s2.max(1.0) {
        // Only one distinct weighted x: the level is a weighted mean but
        // the slope is unidentified.
        return Err(Error::BandwidthTooSmall { at, h });
    }
    let level = (s2 * t0 - s1 * t1) / denom;
    let slope = (s0 * t1 - s1 * t0) / denom;
    Ok((level, slope))
}

/// Convenience: local-linear estimate with spec-resolved bandwidth.
///
/// Returns (level, slope, kish_n) where kish_n is the Kish effective
/// sample size of the kernel weights.
pub fn fit_at(spec: &SmootherSpec, x: &[f64], y: &[f64], at: f64) -> Result<(f64, f64, f64)> {
    let h = resolve_bandwidth(spec, x, at)?;
    let (level, slope) = local_linear_at(x, y, at, spec.kernel, h)?;
    let mut sw = 0.0;
    let mut sw2 = 0.0;
    for &xi in x {
        let w = spec.kernel.weight((xi - at) / h);
        sw += w;
        sw2 += w * w;
    }
    let kish = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
    Ok((level, slope, kish))
}
