//! Synthetic LPPLS price series with Gaussian log-price noise.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{lppls_eval, LpplsParams};
use crate::timeseries::{add_weekdays, PriceSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("tc = {tc} must lie beyond the last generated index {last}")]
    TcInsideRange { tc: f64, last: usize },
    #[error("noise_sigma must be finite and nonnegative, got {0}")]
    BadNoise(f64),
    #[error("n_days must be positive")]
    Empty,
    #[error("generated a non-finite price at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub params: LpplsParams,
    pub n_days: usize,
    /// Standard deviation of the log-price noise.
    pub noise_sigma: f64,
    pub seed: u64,
    pub start_date: NaiveDate,
}

impl SynthSpec {
    /// A 500-day positive bubble with `m = 0.5`, `omega = 9`, critical time
    /// 20 trading days past the last observation and damping about 1.16.
    pub fn paper_like() -> Self {
        Self {
            params: LpplsParams {
                tc: 519.0,
                m: 0.5,
                omega: 9.0,
                a: 8.0,
                b: -0.03,
                c1: 0.0012,
                c2: 0.0008,
            },
            n_days: 500,
            noise_sigma: 0.0,
            seed: 1,
            start_date: NaiveDate::from_ymd_opt(2018, 1, 2).expect("valid date"),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_days == 0 {
            return Err(SynthError::Empty);
        }
        let last = self.n_days - 1;
        if !(self.params.tc > last as f64) {
            return Err(SynthError::TcInsideRange {
                tc: self.params.tc,
                last,
            });
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::BadNoise(self.noise_sigma));
        }
        Ok(())
    }
}

/// Log-price at index `i` is the model value plus `N(0, sigma^2)` noise;
/// dates run Monday to Friday from `start_date` (rolled forward off a
/// weekend).
pub fn generate(spec: &SynthSpec) -> Result<PriceSeries, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|_| SynthError::BadNoise(spec.noise_sigma))?;
    let mut closes = Vec::with_capacity(spec.n_days);
    for i in 0..spec.n_days {
        let clean = lppls_eval(&spec.params, i as f64).map_err(|_| SynthError::TcInsideRange {
            tc: spec.params.tc,
            last: spec.n_days - 1,
        })?;
        let eps = if spec.noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let price = (clean + eps).exp();
        if !(price.is_finite() && price > 0.0) {
            return Err(SynthError::NonFinite(i));
        }
        closes.push(price);
    }
    let mut first = spec.start_date;
    while matches!(first.weekday(), Weekday::Sat | Weekday::Sun) {
        first = first.succ_opt().expect("date overflow");
    }
    let mut dates = Vec::with_capacity(spec.n_days);
    let mut d = first;
    for _ in 0..spec.n_days {
        dates.push(d);
        d = add_weekdays(d, 1);
    }
    Ok(PriceSeries::new(dates, closes).expect("generator output satisfies series invariants"))
}
