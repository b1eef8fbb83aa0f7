//! Filter battery applied to every calibrated window.
//!
//! Bound checks run first. The oscillation count and the maximum relative
//! price error are always recorded; the Lomb and AR(1) residual tests only
//! run once everything cheaper has passed, and are `None` otherwise.

pub mod ar1;
pub mod lomb;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{lppls_eval, Window};
use crate::optimizer::FitResult;
use crate::timeseries::PriceSeries;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterConfigError {
    #[error("ar1_alpha must be one of {levels:?}, got {0}", levels = ar1::LEVELS)]
    UntabulatedAlpha(f64),
    #[error("invalid filter configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub m_range: (f64, f64),
    pub omega_range: (f64, f64),
    /// Qualified `tc` lies in `[t2, t2 + fraction * (t2 - t1)]`.
    pub tc_horizon_fraction: f64,
    /// Multiplies `omega ln((tc - t1) / (tc - t2))`.
    pub oscillation_coefficient: f64,
    pub oscillation_min: f64,
    pub max_rel_error: f64,
    pub lomb_alpha: f64,
    /// Peak angular frequency must lie in `[lo * omega, hi * omega]`.
    pub lomb_band: (f64, f64),
    pub ar1_alpha: f64,
    /// Residual spread (log-price units) at or below which the residual
    /// tests pass as degenerate.
    pub residual_floor: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            m_range: (0.01, 0.99),
            omega_range: (2.0, 25.0),
            tc_horizon_fraction: 0.2,
            oscillation_coefficient: 0.5,
            oscillation_min: 2.5,
            max_rel_error: 0.20,
            lomb_alpha: 0.05,
            lomb_band: (0.5, 2.0),
            ar1_alpha: 0.05,
            residual_floor: 1e-6,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        if ar1::critical_value(self.ar1_alpha, 100).is_none() {
            return Err(FilterConfigError::UntabulatedAlpha(self.ar1_alpha));
        }
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.m_range) || !ordered(self.omega_range) || !ordered(self.lomb_band) {
            return Err(FilterConfigError::Invalid("ranges must be finite and ordered".into()));
        }
        if !(self.tc_horizon_fraction > 0.0) {
            return Err(FilterConfigError::Invalid("tc_horizon_fraction must be positive".into()));
        }
        if !(self.lomb_alpha > 0.0 && self.lomb_alpha < 1.0) {
            return Err(FilterConfigError::Invalid("lomb_alpha must lie in (0, 1)".into()));
        }
        if !(self.residual_floor >= 0.0) {
            return Err(FilterConfigError::Invalid("residual_floor must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BubbleSign {
    /// `B < 0`: accelerating growth.
    Positive,
    /// `B > 0`: accelerating decline.
    Negative,
}

impl BubbleSign {
    pub fn from_b(b: f64) -> Option<Self> {
        if b < 0.0 {
            Some(Self::Positive)
        } else if b > 0.0 {
            Some(Self::Negative)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundChecks {
    pub m_bound: bool,
    pub omega_bound: bool,
    pub tc_bound: bool,
}

impl BoundChecks {
    pub fn all(&self) -> bool {
        self.m_bound && self.omega_bound && self.tc_bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LombOutcome {
    pub passed: bool,
    pub degenerate: bool,
    /// False-alarm probability at or below `lomb_alpha`.
    pub significant: bool,
    /// Peak within the band around the fitted `omega`.
    pub frequency_consistent: bool,
    pub peak_power: Option<f64>,
    pub false_alarm: Option<f64>,
    pub peak_omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Outcome {
    pub passed: bool,
    pub degenerate: bool,
    pub slope: Option<f64>,
    pub statistic: Option<f64>,
    pub critical_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub oscillation: f64,
    pub max_relative_error: f64,
    pub damping: f64,
    pub lomb_peak_power: Option<f64>,
    pub lomb_false_alarm: Option<f64>,
    pub lomb_peak_omega: Option<f64>,
    pub ar1_statistic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualificationReport {
    pub passed: bool,
    pub m_bound: bool,
    pub omega_bound: bool,
    pub tc_bound: bool,
    pub oscillation_count: bool,
    pub max_relative_error: bool,
    /// `None` when not evaluated.
    pub lomb_significance: Option<bool>,
    pub ar1_residuals: Option<bool>,
    pub bubble_sign: Option<BubbleSign>,
    pub diagnostics: Diagnostics,
}

impl QualificationReport {
    /// Conjunction of every recorded condition; unevaluated tests count as
    /// failed, and so does `B = 0`.
    pub fn conjunction(&self) -> bool {
        self.m_bound
            && self.omega_bound
            && self.tc_bound
            && self.oscillation_count
            && self.max_relative_error
            && self.lomb_significance == Some(true)
            && self.ar1_residuals == Some(true)
            && self.bubble_sign.is_some()
    }
}

fn in_range(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

pub fn check_bounds(fit: &FitResult, cfg: &FilterConfig) -> BoundChecks {
    bounds_for(fit.params.tc, fit.params.m, fit.params.omega, fit.window, cfg)
}

fn bounds_for(tc: f64, m: f64, omega: f64, w: Window, cfg: &FilterConfig) -> BoundChecks {
    let t2 = w.t2 as f64;
    BoundChecks {
        m_bound: in_range(m, cfg.m_range),
        omega_bound: in_range(omega, cfg.omega_range),
        tc_bound: in_range(tc, (t2, t2 + cfg.tc_horizon_fraction * w.span() as f64)),
    }
}

/// `coefficient * omega * ln((tc - t1) / (tc - t2))` and whether it reaches
/// the minimum. `tc <= t2` gives `(NaN, false)`.
pub fn oscillation_count(fit: &FitResult, cfg: &FilterConfig) -> (f64, bool) {
    oscillations(fit.params.tc, fit.params.omega, fit.window, cfg)
}

pub fn oscillations(tc: f64, omega: f64, w: Window, cfg: &FilterConfig) -> (f64, bool) {
    let (t1, t2) = (w.t1 as f64, w.t2 as f64);
    if !(tc > t2) {
        return (f64::NAN, false);
    }
    let value = cfg.oscillation_coefficient * omega * ((tc - t1) / (tc - t2)).ln();
    (value, value >= cfg.oscillation_min)
}

/// Largest `|p_hat - p| / p` over the window, and whether it is within
/// `max_rel_error`.
pub fn max_relative_error(fit: &FitResult, series: &PriceSeries, cfg: &FilterConfig) -> (f64, bool) {
    let closes = series.closes();
    let mut worst = 0.0f64;
    for t in fit.window.t1..=fit.window.t2 {
        let Ok(log_hat) = lppls_eval(&fit.params, t as f64) else {
            return (f64::NAN, false);
        };
        let p = closes[t];
        let err = (log_hat.exp() - p).abs() / p;
        if err.is_nan() {
            return (f64::NAN, false);
        }
        worst = worst.max(err);
    }
    (worst, worst <= cfg.max_rel_error)
}

fn spread(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Lomb test of the detrended residuals
/// `r(t) = (tc - t)^{-m} (ln p(t) - A - B (tc - t)^m)` against
/// `u = ln(tc - t)`.
pub fn lomb_test(series: &PriceSeries, fit: &FitResult, cfg: &FilterConfig) -> LombOutcome {
    let p = &fit.params;
    let logs = series.log_closes();
    let mut u = Vec::with_capacity(fit.window.n_points());
    let mut r = Vec::with_capacity(fit.window.n_points());
    for t in fit.window.t1..=fit.window.t2 {
        let dt = p.tc - t as f64;
        if !(dt > 0.0) {
            return LombOutcome {
                passed: false,
                degenerate: false,
                significant: false,
                frequency_consistent: false,
                peak_power: None,
                false_alarm: None,
                peak_omega: None,
            };
        }
        let f = dt.powf(p.m);
        u.push(dt.ln());
        r.push((logs[t] - p.a - p.b * f) / f);
    }
    lomb_on_residuals(&u, &r, p.omega, cfg)
}

/// The Lomb decision for residuals `r(u)` and a fitted angular frequency.
pub fn lomb_on_residuals(u: &[f64], r: &[f64], omega: f64, cfg: &FilterConfig) -> LombOutcome {
    let degenerate = LombOutcome {
        passed: true,
        degenerate: true,
        significant: true,
        frequency_consistent: true,
        peak_power: None,
        false_alarm: None,
        peak_omega: None,
    };
    if spread(r) <= cfg.residual_floor {
        return degenerate;
    }
    let Some(pk) = lomb::peak(u, r, lomb::OVERSAMPLING) else {
        return degenerate;
    };
    let significant = pk.false_alarm <= cfg.lomb_alpha;
    let w = pk.angular_frequency();
    let frequency_consistent = w >= cfg.lomb_band.0 * omega && w <= cfg.lomb_band.1 * omega;
    LombOutcome {
        passed: significant && frequency_consistent,
        degenerate: false,
        significant,
        frequency_consistent,
        peak_power: Some(pk.power),
        false_alarm: Some(pk.false_alarm),
        peak_omega: Some(w),
    }
}

/// Mean-reversion test on the fit residuals `ln p_hat - ln p`.
pub fn ar1_test(fit: &FitResult, cfg: &FilterConfig) -> Ar1Outcome {
    ar1_on_residuals(&fit.residuals, cfg)
}

pub fn ar1_on_residuals(e: &[f64], cfg: &FilterConfig) -> Ar1Outcome {
    let degenerate = Ar1Outcome {
        passed: true,
        degenerate: true,
        slope: None,
        statistic: None,
        critical_value: None,
    };
    if spread(e) <= cfg.residual_floor {
        return degenerate;
    }
    let Some(fit) = ar1::regress(e) else {
        return degenerate;
    };
    let cv = ar1::critical_value(cfg.ar1_alpha, fit.n_obs);
    let passed = match cv {
        Some(cv) => fit.slope < 0.0 && fit.statistic < cv,
        None => false,
    };
    Ar1Outcome {
        passed,
        degenerate: false,
        slope: Some(fit.slope),
        statistic: Some(fit.statistic),
        critical_value: cv,
    }
}

/// Runs the whole battery.
pub fn qualify(fit: &FitResult, series: &PriceSeries, cfg: &FilterConfig) -> QualificationReport {
    let bubble_sign = BubbleSign::from_b(fit.params.b);
    let (oscillation, osc_ok) = oscillation_count(fit, cfg);
    let mut report = QualificationReport {
        passed: false,
        m_bound: false,
        omega_bound: false,
        tc_bound: false,
        oscillation_count: osc_ok,
        max_relative_error: false,
        lomb_significance: None,
        ar1_residuals: None,
        bubble_sign,
        diagnostics: Diagnostics {
            oscillation,
            max_relative_error: f64::NAN,
            damping: fit.params.damping(),
            lomb_peak_power: None,
            lomb_false_alarm: None,
            lomb_peak_omega: None,
            ar1_statistic: None,
        },
    };
    if !fit.is_converged() {
        return report;
    }
    let b = check_bounds(fit, cfg);
    report.m_bound = b.m_bound;
    report.omega_bound = b.omega_bound;
    report.tc_bound = b.tc_bound;
    let (err, err_ok) = max_relative_error(fit, series, cfg);
    report.max_relative_error = err_ok;
    report.diagnostics.max_relative_error = err;

    if b.all() && osc_ok && err_ok && bubble_sign.is_some() {
        let lomb = lomb_test(series, fit, cfg);
        report.lomb_significance = Some(lomb.passed);
        report.diagnostics.lomb_peak_power = lomb.peak_power;
        report.diagnostics.lomb_false_alarm = lomb.false_alarm;
        report.diagnostics.lomb_peak_omega = lomb.peak_omega;
        let ar = ar1_test(fit, cfg);
        report.ar1_residuals = Some(ar.passed);
        report.diagnostics.ar1_statistic = ar.statistic;
    }
    report.passed = report.conjunction();
    report
}
