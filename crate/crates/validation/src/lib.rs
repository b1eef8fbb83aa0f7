//! Fixtures for the acceptance suite: index data lookup, null-model series
//! and confidence-indicator clusters.

use std::ops::Range;
use std::path::PathBuf;

use lppls::{ConfidencePoint, PriceSeries, RowPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Overrides the directory holding the index CSVs.
pub const DATA_ENV: &str = "LPPLS_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Index {
    W5000,
    Sp500,
    Sp400,
    R2000,
}

impl Index {
    pub const ALL: [Index; 4] = [Index::W5000, Index::Sp500, Index::Sp400, Index::R2000];

    pub fn label(self) -> &'static str {
        match self {
            Index::W5000 => "W5000",
            Index::Sp500 => "SP500",
            Index::Sp400 => "SP400",
            Index::R2000 => "R2000",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Index::W5000 => "w5000.csv",
            Index::Sp500 => "sp500.csv",
            Index::Sp400 => "sp400.csv",
            Index::R2000 => "r2000.csv",
        }
    }
}

pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data"),
    }
}

/// Loads an index; the error names the missing file.
pub fn load_index(ix: Index) -> Result<PriceSeries, String> {
    let path = data_dir().join(ix.file_name());
    if !path.exists() {
        return Err(format!("{} not found", path.display()));
    }
    PriceSeries::load_csv(&path, None, RowPolicy::Strict).map_err(|e| e.to_string())
}

/// Mean and sample standard deviation of daily log returns.
pub fn log_return_moments(s: &PriceSeries) -> (f64, f64) {
    let r: Vec<f64> = s.log_closes().windows(2).map(|w| w[1] - w[0]).collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Geometric random walk on the dates of `like`, starting at its first
/// close, with i.i.d. normal log returns matching its drift and volatility.
pub fn geometric_random_walk(like: &PriceSeries, seed: u64) -> PriceSeries {
    let (mean, sd) = log_return_moments(like);
    let step = Normal::new(mean, sd).expect("finite moments");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_p = like.log_closes()[0];
    let mut closes = Vec::with_capacity(like.len());
    closes.push(like.closes()[0]);
    for _ in 1..like.len() {
        log_p += step.sample(&mut rng);
        closes.push(log_p.exp());
    }
    PriceSeries::new(like.dates().to_vec(), closes).expect("walk keeps the series invariants")
}

/// Maximal runs of consecutive points where `value` is positive.
pub fn clusters(points: &[ConfidencePoint], value: impl Fn(&ConfidencePoint) -> f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, p) in points.iter().enumerate() {
        match (value(p) > 0.0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..points.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn point(ci: f64) -> ConfidencePoint {
        ConfidencePoint {
            endpoint_date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            positive_ci: ci,
            negative_ci: 0.0,
            windows_total: 125,
            windows_fitted: 125,
            qualified_positive: 0,
            qualified_negative: 0,
            short_history_flag: false,
        }
    }

    #[test]
    fn runs_of_positive_values() {
        let pts: Vec<_> = [0.0, 0.1, 0.2, 0.0, 0.0, 0.3, 0.1].into_iter().map(point).collect();
        assert_eq!(clusters(&pts, |p| p.positive_ci), vec![1..3, 5..7]);
        assert!(clusters(&pts[3..5], |p| p.positive_ci).is_empty());
    }

    #[test]
    fn walk_keeps_dates_and_start() {
        let dates: Vec<_> = (1..=60).map(|d| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(d)).collect();
        let closes: Vec<_> = (0..60).map(|i| 100.0 * (1.0 + 0.01 * (i as f64).sin())).collect();
        let s = PriceSeries::new(dates, closes).unwrap();
        let g = geometric_random_walk(&s, 4);
        assert_eq!(g.dates(), s.dates());
        assert_eq!(g.closes()[0], s.closes()[0]);
        assert_eq!(g, geometric_random_walk(&s, 4));
    }
}
