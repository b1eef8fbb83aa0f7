//! Detection of endogenous bubbles in daily price series with the
//! log-periodic power law singularity (LPPLS) model.
//!
//! The pipeline is:
//!
//! 1. [`timeseries`] loads a daily close series and maps between calendar
//!    dates and dense trading-day positions.
//! 2. [`model`] evaluates the LPPLS log-price and eliminates the four linear
//!    amplitudes analytically, leaving a cost over `(tc, m, omega)`.
//! 3. [`optimizer`] minimizes that cost with CMA-ES inside the search box.
//! 4. [`qualify`] runs the filter battery on each calibrated window.
//! 5. [`indicator`] turns shrinking windows into positive and negative
//!    confidence indicators per endpoint.
//! 6. [`postmortem`] estimates densities and quantiles of `tc` and `t1`
//!    over the qualified fits.
//!
//! [`synth`] generates ground-truth series for tests and demos.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod indicator;
pub mod model;
pub mod optimizer;
pub mod postmortem;
pub mod qualify;
pub mod seed;
pub mod synth;
pub mod timeseries;

pub use indicator::{ConfidencePoint, ScanConfig, ScanOutput, StoredFit};
pub use model::{LinearParams, LpplsParams, Window};
pub use optimizer::{FitResult, FitStatus, OptimizerConfig, SearchBox};
pub use postmortem::PostMortemReport;
pub use qualify::{BubbleSign, FilterConfig, QualificationReport};
pub use synth::SynthSpec;
pub use timeseries::{CrashStats, PriceSeries, RowPolicy};
