//! Post-mortem densities of bubble start times and critical times.
//!
//! Positions are trading-day indices of the scanned series; dates are
//! attached at the end through the series calendar.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicator::StoredFit;
use crate::qualify::BubbleSign;
use crate::timeseries::PriceSeries;

#[derive(Debug, Error)]
pub enum PostMortemError {
    #[error("empty selection")]
    EmptySelection,
    #[error("no samples")]
    NoSamples,
    #[error("quantile level {0} outside [0, 1]")]
    BadLevel(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Number of grid points per density.
pub const GRID_POINTS: usize = 512;
/// Grid margin on either side of the sample range, in bandwidths.
pub const GRID_MARGIN: f64 = 6.0;
/// Smallest bandwidth, in trading days.
pub const MIN_BANDWIDTH: f64 = 1.0;

/// Qualified fits of one sign whose endpoints lie in `[start, end]`.
pub fn collect_fits(
    store: &[StoredFit],
    start: NaiveDate,
    end: NaiveDate,
    sign: BubbleSign,
) -> Result<Vec<StoredFit>, PostMortemError> {
    let out: Vec<StoredFit> = store
        .iter()
        .filter(|f| f.bubble_sign == sign && f.endpoint_date >= start && f.endpoint_date <= end)
        .cloned()
        .collect();
    if out.is_empty() {
        return Err(PostMortemError::EmptySelection);
    }
    Ok(out)
}

/// Reads a JSON-lines fit store.
pub fn read_store<R: std::io::BufRead>(reader: R) -> Result<Vec<StoredFit>, PostMortemError> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes one JSON object per line.
pub fn write_store<W: Write>(mut writer: W, fits: &[StoredFit]) -> Result<(), PostMortemError> {
    for f in fits {
        serde_json::to_writer(&mut writer, f)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `1.06 sd n^(-1/5)`, never below [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let (_, sd) = mean_sd(samples);
    let h = 1.06 * sd * (samples.len() as f64).powf(-0.2);
    if h.is_finite() {
        h.max(MIN_BANDWIDTH)
    } else {
        MIN_BANDWIDTH
    }
}

/// Gaussian kernel density with bandwidth `h` evaluated at each grid point.
pub fn kde(samples: &[f64], grid: &[f64], h: f64) -> Result<Vec<f64>, PostMortemError> {
    if samples.is_empty() {
        return Err(PostMortemError::NoSamples);
    }
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            let s: f64 = samples
                .iter()
                .map(|&x| {
                    let z = (g - x) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            s * norm
        })
        .collect())
}

/// [`GRID_POINTS`] evenly spaced points over the sample range widened by
/// [`GRID_MARGIN`] bandwidths.
pub fn grid_for(samples: &[f64], h: f64) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - GRID_MARGIN * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GRID_MARGIN * h;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|i| lo + i as f64 * step).collect()
}

/// Trapezoidal integral of `y` over `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Linear interpolation between closest ranks of the sorted sample: level
/// `q` sits at rank `q (n - 1)`.
pub fn quantiles(samples: &[f64], levels: &[f64]) -> Result<Vec<f64>, PostMortemError> {
    if samples.is_empty() {
        return Err(PostMortemError::NoSamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    levels
        .iter()
        .map(|&q| {
            if !(0.0..=1.0).contains(&q) {
                return Err(PostMortemError::BadLevel(q));
            }
            let r = q * (n - 1) as f64;
            let lo = r.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let w = r - lo as f64;
            Ok(sorted[lo] + w * (sorted[hi] - sorted[lo]))
        })
        .collect()
}

/// Adjusted Fisher-Pearson skewness; `None` below three samples or with no
/// spread.
pub fn skewness(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    if !(m2 > 0.0) {
        return None;
    }
    let g1 = m3 / m2.powf(1.5);
    Some(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub bandwidth: f64,
    /// Trading-day positions.
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl Density {
    pub fn estimate(samples: &[f64]) -> Result<Self, PostMortemError> {
        if samples.is_empty() {
            return Err(PostMortemError::NoSamples);
        }
        let bandwidth = silverman_bandwidth(samples);
        let grid = grid_for(samples, bandwidth);
        let density = kde(samples, &grid, bandwidth)?;
        Ok(Self {
            bandwidth,
            grid,
            density,
        })
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Grid position of the highest density (first on ties).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, d) in self.density.iter().enumerate() {
            if *d > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    /// `grid_date,density` rows; positions before the series map to its
    /// first date.
    pub fn write_csv<W: Write>(&self, mut writer: W, series: &PriceSeries) -> Result<(), PostMortemError> {
        writeln!(writer, "grid_date,grid_position,density")?;
        for (g, d) in self.grid.iter().zip(&self.density) {
            writeln!(writer, "{},{},{}", series.nearest_date(*g), g, d)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileDate {
    pub level: f64,
    pub position: f64,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostMortemReport {
    pub n_fits: usize,
    #[serde(skip)]
    pub tc_density: Density,
    #[serde(skip)]
    pub t1_density: Density,
    pub tc_quantiles: Vec<QuantileDate>,
    pub t1_earliest: NaiveDate,
    pub t1_latest: NaiveDate,
    pub tc_skewness: Option<f64>,
    pub tc_mode_date: NaiveDate,
    pub tc_bandwidth: f64,
    pub t1_bandwidth: f64,
}

impl PostMortemReport {
    pub fn t1_range(&self) -> (NaiveDate, NaiveDate) {
        (self.t1_earliest, self.t1_latest)
    }

    pub fn quantile_date(&self, level: f64) -> Option<NaiveDate> {
        self.tc_quantiles
            .iter()
            .find(|q| (q.level - level).abs() < 1e-12)
            .map(|q| q.date)
    }
}

/// Default quantile levels.
pub const DEFAULT_LEVELS: [f64; 4] = [0.05, 0.2, 0.8, 0.95];

/// Densities, quantiles and skewness of a fit population. `series` is the
/// scanned series, used to turn positions into dates.
pub fn report(fits: &[StoredFit], series: &PriceSeries, levels: &[f64]) -> Result<PostMortemReport, PostMortemError> {
    if fits.is_empty() {
        return Err(PostMortemError::EmptySelection);
    }
    let tc: Vec<f64> = fits.iter().map(|f| f.tc).collect();
    let t1: Vec<f64> = fits.iter().map(|f| f.t1_index as f64).collect();
    let tc_density = Density::estimate(&tc)?;
    let t1_density = Density::estimate(&t1)?;
    let tc_quantiles = levels
        .iter()
        .zip(quantiles(&tc, levels)?)
        .map(|(&level, position)| QuantileDate {
            level,
            position,
            date: series.nearest_date(position),
        })
        .collect();
    let t1_lo = fits.iter().map(|f| f.t1_index).min().unwrap_or(0);
    let t1_hi = fits.iter().map(|f| f.t1_index).max().unwrap_or(0);
    Ok(PostMortemReport {
        n_fits: fits.len(),
        tc_quantiles,
        t1_earliest: series.dates()[t1_lo.min(series.len() - 1)],
        t1_latest: series.dates()[t1_hi.min(series.len() - 1)],
        tc_skewness: skewness(&tc),
        tc_mode_date: series.nearest_date(tc_density.mode()),
        tc_bandwidth: tc_density.bandwidth,
        t1_bandwidth: t1_density.bandwidth,
        tc_density,
        t1_density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn brute_force(samples: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; grid.len()];
        for (i, g) in grid.iter().enumerate() {
            for x in samples {
                let z = (g - x) / h;
                out[i] += (-z * z / 2.0).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
            }
            out[i] /= samples.len() as f64;
        }
        out
    }

    fn bimodal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Normal::new(100.0, 5.0).unwrap();
        let b = Normal::new(160.0, 12.0).unwrap();
        (0..n)
            .map(|_| {
                if rng.random_bool(0.4) {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn single_sample_bump() {
        let d = Density::estimate(&[42.0]).unwrap();
        assert_eq!(d.bandwidth, MIN_BANDWIDTH);
        assert!((d.integral() - 1.0).abs() < 1e-6);
        assert!((d.mode() - 42.0).abs() <= 12.0 / 511.0);
    }

    #[test]
    fn kde_matches_double_loop() {
        let s = bimodal(200, 9);
        let h = silverman_bandwidth(&s);
        let grid = grid_for(&s, h);
        let got = kde(&s, &grid, h).unwrap();
        let want = brute_force(&s, &grid, h);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-10, "{g} vs {w}");
        }
        assert!((trapezoid(&grid, &got) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identical_samples_use_the_floor() {
        let d = Density::estimate(&[7.0; 25]).unwrap();
        assert_eq!(d.bandwidth, MIN_BANDWIDTH);
        assert!(d.density.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((d.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kde_is_linear_in_the_sample() {
        let a = bimodal(60, 1);
        let b = bimodal(140, 2);
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let h = 4.0;
        let grid = grid_for(&all, h);
        let da = kde(&a, &grid, h).unwrap();
        let db = kde(&b, &grid, h).unwrap();
        let d = kde(&all, &grid, h).unwrap();
        for i in 0..grid.len() {
            let mix = (60.0 * da[i] + 140.0 * db[i]) / 200.0;
            assert!((d[i] - mix).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(kde(&[], &[0.0], 1.0).is_err());
        assert!(quantiles(&[], &[0.5]).is_err());
    }

    #[test]
    fn quantile_endpoints_and_oracle() {
        let s = bimodal(101, 3);
        let q = quantiles(&s, &[0.0, 1.0]).unwrap();
        let mut sorted = s.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(q, vec![sorted[0], sorted[100]]);
        // levels that land exactly on ranks
        let q = quantiles(&s, &[0.25, 0.5]).unwrap();
        assert_eq!(q, vec![sorted[25], sorted[50]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let levels: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let q = quantiles(&s, &levels).unwrap();
        for (l, v) in levels.iter().zip(&q) {
            let r = l * 100.0;
            let lo = r.floor() as usize;
            let want = sorted[lo] + (r - lo as f64) * (sorted[(lo + 1).min(100)] - sorted[lo]);
            assert_eq!(*v, want);
        }
        assert!(quantiles(&s, &[1.5]).is_err());
    }

    #[test]
    fn symmetric_sample_has_small_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 3.0).unwrap();
        let s: Vec<f64> = (0..2000).map(|_| n.sample(&mut rng)).collect();
        let g = skewness(&s).unwrap();
        let se = (6.0 * 2000.0 * 1999.0 / (1998.0 * 2001.0 * 2003.0_f64)).sqrt();
        assert!(g.abs() < 3.0 * se, "{g}");
        assert!(skewness(&[1.0, 1.0, 1.0]).is_none());
        assert!(skewness(&[1.0, 2.0]).is_none());
        // right tail
        assert!(skewness(&[0.0, 0.0, 0.0, 1.0, 10.0]).unwrap() > 0.0);
    }

    #[test]
    fn skewness_by_hand() {
        // x = 0, 1, 5: mean 2, m2 = 14/3, m3 = 18/3 = 6
        let g1 = 6.0 / (14.0f64 / 3.0).powf(1.5);
        let want = g1 * 6.0f64.sqrt();
        assert!((skewness(&[0.0, 1.0, 5.0]).unwrap() - want).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn quantiles_are_monotone(
            s in proptest::collection::vec(-1e3f64..1e3, 1..60),
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let q = quantiles(&s, &[lo, hi]).unwrap();
            proptest::prop_assert!(q[0] <= q[1]);
        }

        #[test]
        fn densities_integrate_to_one(s in proptest::collection::vec(0f64..500.0, 1..80)) {
            let d = Density::estimate(&s).unwrap();
            proptest::prop_assert!(d.density.iter().all(|v| *v >= 0.0));
            proptest::prop_assert!((d.integral() - 1.0).abs() < 1e-6);
        }
    }
}
