//! Shrinking-window scans and the positive/negative confidence indicators.
//!
//! For an endpoint `t2`, windows `[t2 - L, t2]` are fitted for
//! `L = max_window, max_window - step, ..., >= min_window`. The positive
//! (negative) indicator is the share of those windows whose fit qualifies
//! with `B < 0` (`B > 0`).
//!
//! Every window gets a seed derived from `(base seed, t2, L)`, so results do
//! not depend on how the work is scheduled.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinearSubproblem, Window};
use crate::optimizer::{calibrate_subproblem, FitResult, OptimizerConfig, SearchBounds, SearchBox};
use crate::qualify::{qualify, BubbleSign, FilterConfig, QualificationReport};
use crate::seed;
use crate::timeseries::{DateLookup, PriceSeries, SeriesError};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid scan configuration: {0}")]
    InvalidConfig(String),
    #[error("endpoint index {endpoint} is too early for a {min_window}-day window")]
    EndpointTooEarly { endpoint: usize, min_window: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub max_window: usize,
    pub min_window: usize,
    pub window_step: usize,
    /// First endpoint; the first trading date when absent.
    pub endpoint_start: Option<NaiveDate>,
    /// Last endpoint; the last trading date when absent.
    pub endpoint_end: Option<NaiveDate>,
    pub optimizer: OptimizerConfig,
    pub search: SearchBounds,
    pub filters: FilterConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            max_window: 650,
            min_window: 30,
            window_step: 5,
            endpoint_start: None,
            endpoint_end: None,
            optimizer: OptimizerConfig::default(),
            search: SearchBounds::default(),
            filters: FilterConfig::default(),
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), ScanError> {
        let bad = |m: String| Err(ScanError::InvalidConfig(m));
        if self.min_window < 30 {
            return bad(format!("min_window must be at least 30, got {}", self.min_window));
        }
        if self.max_window < self.min_window {
            return bad("max_window must be at least min_window".into());
        }
        if self.window_step == 0 {
            return bad("window_step must be positive".into());
        }
        self.optimizer
            .validate()
            .map_err(|e| ScanError::InvalidConfig(e.to_string()))?;
        self.filters
            .validate()
            .map_err(|e| ScanError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// `floor((max - min) / step) + 1`
    pub fn windows_per_endpoint(&self) -> usize {
        (self.max_window - self.min_window) / self.window_step + 1
    }

    /// Window spans from longest to shortest.
    pub fn spans(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.windows_per_endpoint()).map(move |k| self.max_window - k * self.window_step)
    }

    /// Seed for the window `[t2 - span, t2]`.
    pub fn window_seed(&self, t2: usize, span: usize) -> u64 {
        seed::derive(self.optimizer.seed, &[t2 as u64, span as u64])
    }
}

/// Windows ending at one endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointWindows {
    pub windows: Vec<Window>,
    /// Some configured windows would start before the series does.
    pub short_history: bool,
}

pub fn enumerate_windows(endpoint_index: usize, cfg: &ScanConfig) -> Result<EndpointWindows, ScanError> {
    let windows: Vec<Window> = cfg
        .spans()
        .filter(|&span| span <= endpoint_index)
        .map(|span| Window {
            t1: endpoint_index - span,
            t2: endpoint_index,
        })
        .collect();
    if windows.is_empty() {
        return Err(ScanError::EndpointTooEarly {
            endpoint: endpoint_index,
            min_window: cfg.min_window,
        });
    }
    Ok(EndpointWindows {
        short_history: windows.len() < cfg.windows_per_endpoint(),
        windows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub endpoint_date: NaiveDate,
    pub positive_ci: f64,
    pub negative_ci: f64,
    pub windows_total: usize,
    pub windows_fitted: usize,
    pub qualified_positive: usize,
    pub qualified_negative: usize,
    pub short_history_flag: bool,
}

/// Per-condition filter outcomes kept with a stored fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterFlags {
    pub m_bound: bool,
    pub omega_bound: bool,
    pub tc_bound: bool,
    pub oscillation_count: bool,
    pub max_relative_error: bool,
    pub lomb_significance: Option<bool>,
    pub ar1_residuals: Option<bool>,
}

impl From<&QualificationReport> for FilterFlags {
    fn from(r: &QualificationReport) -> Self {
        Self {
            m_bound: r.m_bound,
            omega_bound: r.omega_bound,
            tc_bound: r.tc_bound,
            oscillation_count: r.oscillation_count,
            max_relative_error: r.max_relative_error,
            lomb_significance: r.lomb_significance,
            ar1_residuals: r.ar1_residuals,
        }
    }
}

/// One qualified fit, as written to the fit store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFit {
    pub endpoint_date: NaiveDate,
    pub t1_date: NaiveDate,
    pub t2_date: NaiveDate,
    pub t1_index: usize,
    pub t2_index: usize,
    /// Trading-day position.
    pub tc: f64,
    pub tc_date: NaiveDate,
    pub m: f64,
    pub omega: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub cost: f64,
    pub bubble_sign: BubbleSign,
    pub filters: FilterFlags,
    pub seed: u64,
}

impl StoredFit {
    fn new(series: &PriceSeries, fit: &FitResult, report: &QualificationReport, sign: BubbleSign) -> Self {
        let w = fit.window;
        let p = &fit.params;
        Self {
            endpoint_date: series.dates()[w.t2],
            t1_date: series.dates()[w.t1],
            t2_date: series.dates()[w.t2],
            t1_index: w.t1,
            t2_index: w.t2,
            tc: p.tc,
            tc_date: series.nearest_date(p.tc),
            m: p.m,
            omega: p.omega,
            a: p.a,
            b: p.b,
            c1: p.c1,
            c2: p.c2,
            cost: fit.cost,
            bubble_sign: sign,
            filters: FilterFlags::from(report),
            seed: fit.seed,
        }
    }
}

/// The indicator value at one endpoint and the fits that qualified there.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointResult {
    pub point: ConfidencePoint,
    pub fits: Vec<StoredFit>,
}

/// Calibrates and qualifies one window; only `series[t1..=t2]` is read.
pub fn evaluate_window(series: &PriceSeries, w: Window, cfg: &ScanConfig) -> (FitResult, QualificationReport) {
    let lp = LinearSubproblem::new(w.t1, &series.log_closes()[w.t1..=w.t2]);
    let bbox = SearchBox::for_window(w, &cfg.search);
    let opt = OptimizerConfig {
        seed: cfg.window_seed(w.t2, w.span()),
        ..cfg.optimizer.clone()
    };
    let mut fit = calibrate_subproblem(&lp, w, &bbox, &opt);
    let report = qualify(&fit, series, &cfg.filters);
    fit.qualification = Some(report);
    (fit, report)
}

fn summarize(
    series: &PriceSeries,
    endpoint: usize,
    short_history: bool,
    results: &[(FitResult, QualificationReport)],
) -> EndpointResult {
    let mut point = ConfidencePoint {
        endpoint_date: series.dates()[endpoint],
        positive_ci: 0.0,
        negative_ci: 0.0,
        windows_total: results.len(),
        windows_fitted: 0,
        qualified_positive: 0,
        qualified_negative: 0,
        short_history_flag: short_history,
    };
    let mut fits = Vec::new();
    for (fit, report) in results {
        if fit.is_converged() {
            point.windows_fitted += 1;
        }
        if !report.passed {
            continue;
        }
        let Some(sign) = report.bubble_sign else {
            continue;
        };
        match sign {
            BubbleSign::Positive => point.qualified_positive += 1,
            BubbleSign::Negative => point.qualified_negative += 1,
        }
        fits.push(StoredFit::new(series, fit, report, sign));
    }
    if point.windows_total > 0 {
        point.positive_ci = point.qualified_positive as f64 / point.windows_total as f64;
        point.negative_ci = point.qualified_negative as f64 / point.windows_total as f64;
    }
    EndpointResult { point, fits }
}

/// Indicator at a single endpoint date.
pub fn confidence_at(series: &PriceSeries, endpoint: NaiveDate, cfg: &ScanConfig) -> Result<EndpointResult, ScanError> {
    cfg.validate()?;
    let t2 = series.date_to_index(endpoint, DateLookup::Exact)?;
    let past = series.prefix(t2);
    let ew = enumerate_windows(t2, cfg)?;
    let results: Vec<_> = ew
        .windows
        .iter()
        .map(|&w| evaluate_window(&past, w, cfg))
        .collect();
    let mut out = summarize(&past, t2, ew.short_history, &results);
    // map tc with the caller's calendar, which may extend past the endpoint
    for f in &mut out.fits {
        f.tc_date = series.nearest_date(f.tc);
    }
    Ok(out)
}

/// Indicator rows plus every qualified fit, in endpoint order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanOutput {
    pub points: Vec<ConfidencePoint>,
    pub fits: Vec<StoredFit>,
}

/// Endpoint indices covered by the configured date range.
pub fn endpoint_indices(series: &PriceSeries, cfg: &ScanConfig) -> std::ops::Range<usize> {
    let dates = series.dates();
    let lo = cfg
        .endpoint_start
        .map_or(0, |d| dates.partition_point(|x| *x < d));
    let hi = cfg
        .endpoint_end
        .map_or(dates.len(), |d| dates.partition_point(|x| *x <= d));
    lo..hi.max(lo)
}

/// Scans every trading day in the endpoint range.
///
/// `workers = 1` runs serially on the calling thread; otherwise a pool of
/// `workers` threads (all available cores for `None`) shares the windows.
/// Both produce identical output. Endpoints too early for any window yield
/// an empty row with the short-history flag set.
pub fn scan(series: &PriceSeries, cfg: &ScanConfig, workers: Option<usize>) -> Result<ScanOutput, ScanError> {
    cfg.validate()?;
    let endpoints = endpoint_indices(series, cfg);
    if endpoints.is_empty() {
        return Ok(ScanOutput::default());
    }
    let mut tasks: Vec<(usize, Window)> = Vec::new();
    let mut layout: Vec<(usize, bool, usize)> = Vec::with_capacity(endpoints.len());
    for t2 in endpoints {
        match enumerate_windows(t2, cfg) {
            Ok(ew) => {
                layout.push((t2, ew.short_history, ew.windows.len()));
                tasks.extend(ew.windows.into_iter().map(|w| (t2, w)));
            }
            Err(ScanError::EndpointTooEarly { .. }) => layout.push((t2, true, 0)),
            Err(e) => return Err(e),
        }
    }

    let run = |&(_, w): &(usize, Window)| evaluate_window(series, w, cfg);
    let results: Vec<(FitResult, QualificationReport)> = match workers {
        Some(1) => tasks.iter().map(run).collect(),
        other => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = other {
                builder = builder.num_threads(n);
            }
            let pool = builder.build().map_err(|e| ScanError::Pool(e.to_string()))?;
            // indexed collect keeps task order
            pool.install(|| tasks.par_iter().map(run).collect())
        }
    };

    let mut out = ScanOutput::default();
    let mut offset = 0;
    for (t2, short, count) in layout {
        let er = summarize(series, t2, short, &results[offset..offset + count]);
        offset += count;
        out.points.push(er.point);
        out.fits.extend(er.fits);
    }
    Ok(out)
}

/// Indicator table, one row per endpoint.
pub fn write_points_csv<W: std::io::Write>(writer: W, points: &[ConfidencePoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    if points.is_empty() {
        w.write_record([
            "endpoint_date",
            "positive_ci",
            "negative_ci",
            "windows_total",
            "windows_fitted",
            "qualified_positive",
            "qualified_negative",
            "short_history_flag",
        ])?;
    }
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_points_csv`].
pub fn read_points_csv<R: std::io::Read>(reader: R) -> Result<Vec<ConfidencePoint>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}
