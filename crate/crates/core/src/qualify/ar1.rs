//! One-sided mean-reversion test on residuals.
//!
//! Regresses `e_t - e_{t-1}` on `e_{t-1}` without an intercept and compares
//! the studentized slope with Dickey-Fuller critical values for the
//! no-constant case.

/// Significance levels with tabulated critical values.
pub const LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Dickey-Fuller tau critical values, no constant and no trend, by sample
/// size. Columns follow [`LEVELS`]; the last row is the asymptotic value.
const TABLE: [(f64, [f64; 3]); 6] = [
    (25.0, [-2.66, -1.95, -1.60]),
    (50.0, [-2.62, -1.95, -1.61]),
    (100.0, [-2.60, -1.95, -1.61]),
    (250.0, [-2.58, -1.95, -1.62]),
    (500.0, [-2.58, -1.95, -1.62]),
    (f64::INFINITY, [-2.58, -1.95, -1.62]),
];

/// Critical value at `alpha` (one of [`LEVELS`]) for `n` observations,
/// linearly interpolated between tabulated sizes.
pub fn critical_value(alpha: f64, n: usize) -> Option<f64> {
    let col = LEVELS.iter().position(|l| (l - alpha).abs() < 1e-12)?;
    let n = n as f64;
    if n <= TABLE[0].0 {
        return Some(TABLE[0].1[col]);
    }
    for pair in TABLE.windows(2) {
        let (n0, v0) = pair[0];
        let (n1, v1) = pair[1];
        if n <= n1 {
            if n1.is_infinite() {
                return Some(v1[col]);
            }
            let w = (n - n0) / (n1 - n0);
            return Some(v0[col] + w * (v1[col] - v0[col]));
        }
    }
    Some(TABLE[TABLE.len() - 1].1[col])
}

/// Slope of the no-intercept regression and its t statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRootFit {
    pub slope: f64,
    pub statistic: f64,
    /// Number of differenced observations.
    pub n_obs: usize,
}

/// `None` when the lagged series has no energy or the regression is exact.
pub fn regress(e: &[f64]) -> Option<UnitRootFit> {
    if e.len() < 3 {
        return None;
    }
    let lag = &e[..e.len() - 1];
    let diff: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let sxx: f64 = lag.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = lag.iter().zip(&diff).map(|(a, b)| a * b).sum();
    let slope = sxy / sxx;
    let n_obs = diff.len();
    let sse: f64 = lag
        .iter()
        .zip(&diff)
        .map(|(x, y)| (y - slope * x).powi(2))
        .sum();
    let s2 = sse / (n_obs as f64 - 1.0);
    if !(s2 > 0.0) {
        return None;
    }
    let se = (s2 / sxx).sqrt();
    Some(UnitRootFit {
        slope,
        statistic: slope / se,
        n_obs,
    })
}
