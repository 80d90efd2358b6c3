//! Difference-in-differences estimation for continuous-treatment panels.
//!
//! The crate estimates level and slope effects of a treatment dose in
//! two-period and staggered multi-period panel designs, computes the
//! two-way fixed-effects (TWFE) coefficient, and decomposes that
//! coefficient exactly into interpretable weighted components so its
//! implicit weighting and nuisance terms can be inspected. A simulation
//! lab with analytic oracles and a unit-level cluster bootstrap round out
//! the toolkit.
//!
//! Start from the `examples/` directory: each example is a runnable tour
//! of one capability. The `dose-did` binary exposes the same operations
//! as batch subcommands over CSV inputs.

pub mod baseline;
pub mod bootstrap;
pub mod cli;
pub mod error;
pub mod mp;
pub mod mp_decomp;
pub mod numeric;
pub mod panel;
pub mod simlab;
pub mod smooth;
pub mod twfe;

pub use error::{Error, Result};
