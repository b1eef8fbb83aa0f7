//! The LPPLS log-price formula and its linear subproblem.
//!
//! For fixed `(tc, m, omega)` the log-price is linear in `(A, B, C1, C2)`:
//!
//! ```text
//! ln p(t) = A + B f(t) + C1 g(t) + C2 h(t)
//! f = (tc - t)^m,  g = f cos(omega ln(tc - t)),  h = f sin(omega ln(tc - t))
//! ```
//!
//! so the four amplitudes are eliminated by least squares and the optimizer
//! only ever sees the three nonlinear parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeseries::PriceSeries;

/// Smallest window span `t2 - t1` that can be constructed.
pub const MIN_WINDOW_SPAN: usize = 29;

/// Ratio of smallest to largest `|R_kk|` (unit-norm columns) below which the
/// basis is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("t = {t} is not before the critical time tc = {tc}")]
    Singularity { t: f64, tc: f64 },
    #[error("degenerate basis: the design matrix is numerically rank deficient")]
    DegenerateBasis,
    #[error("window [{t1}, {t2}] is invalid (need t2 - t1 >= {MIN_WINDOW_SPAN})")]
    InvalidWindow { t1: usize, t2: usize },
    #[error("window [{t1}, {t2}] exceeds a series of length {len}")]
    WindowOutOfRange { t1: usize, t2: usize, len: usize },
}

/// The seven LPPLS parameters, with times in trading-day units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplsParams {
    pub tc: f64,
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
}

impl LpplsParams {
    pub fn from_parts(tc: f64, m: f64, omega: f64, lin: LinearParams) -> Self {
        Self {
            tc,
            m,
            omega,
            a: lin.a,
            b: lin.b,
            c1: lin.c1,
            c2: lin.c2,
        }
    }

    pub fn linear(&self) -> LinearParams {
        LinearParams {
            a: self.a,
            b: self.b,
            c1: self.c1,
            c2: self.c2,
        }
    }

    /// `sqrt(C1^2 + C2^2)`
    pub fn c_amplitude(&self) -> f64 {
        self.c1.hypot(self.c2)
    }

    /// `m |B| / (omega C)`; infinite when there is no oscillation.
    pub fn damping(&self) -> f64 {
        let c = self.c_amplitude();
        if c == 0.0 {
            f64::INFINITY
        } else {
            self.m * self.b.abs() / (self.omega * c)
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, ModelError> {
        lppls_eval(self, t)
    }

    /// `d/dt` of [`LpplsParams::eval`].
    pub fn eval_derivative(&self, t: f64) -> Result<f64, ModelError> {
        let dt = self.tc - t;
        if !(dt > 0.0) {
            return Err(ModelError::Singularity { t, tc: self.tc });
        }
        let ln_dt = dt.ln();
        let (s, c) = (self.omega * ln_dt).sin_cos();
        let fm1 = dt.powf(self.m - 1.0);
        // d/d(dt) of dt^m [B + C1 cos + C2 sin], then times d(dt)/dt = -1
        let d_ddt = fm1
            * (self.m * (self.b + self.c1 * c + self.c2 * s)
                + self.omega * (-self.c1 * s + self.c2 * c));
        Ok(-d_ddt)
    }
}

/// The four linearly entering amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Expected log-price at trading-day position `t`.
pub fn lppls_eval(p: &LpplsParams, t: f64) -> Result<f64, ModelError> {
    let dt = p.tc - t;
    if !(dt > 0.0) {
        return Err(ModelError::Singularity { t, tc: p.tc });
    }
    let ln_dt = dt.ln();
    let f = (p.m * ln_dt).exp();
    let (s, c) = (p.omega * ln_dt).sin_cos();
    Ok(p.a + f * (p.b + p.c1 * c + p.c2 * s))
}

/// Inclusive trading-day window `[t1, t2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub t1: usize,
    pub t2: usize,
}

impl Window {
    pub fn new(t1: usize, t2: usize) -> Result<Self, ModelError> {
        if t2 <= t1 || t2 - t1 < MIN_WINDOW_SPAN {
            return Err(ModelError::InvalidWindow { t1, t2 });
        }
        Ok(Self { t1, t2 })
    }

    /// `t2 - t1`
    pub fn span(&self) -> usize {
        self.t2 - self.t1
    }

    pub fn n_points(&self) -> usize {
        self.t2 - self.t1 + 1
    }

    pub fn log_prices<'a>(&self, series: &'a PriceSeries) -> Result<&'a [f64], ModelError> {
        if self.t2 >= series.len() {
            return Err(ModelError::WindowOutOfRange {
                t1: self.t1,
                t2: self.t2,
                len: series.len(),
            });
        }
        Ok(&series.log_closes()[self.t1..=self.t2])
    }

    pub fn times(&self) -> impl Iterator<Item = f64> {
        (self.t1..=self.t2).map(|t| t as f64)
    }
}

/// Log-prices at consecutive positions `t1, t1 + 1, ...`.
#[derive(Debug, Clone, Copy)]
pub struct LinearSubproblem<'a> {
    t1: usize,
    log_prices: &'a [f64],
}

/// Least-squares amplitudes and the residual sum of squares they leave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolution {
    pub params: LinearParams,
    pub ssr: f64,
}

const NCOLS: usize = 5;

impl<'a> LinearSubproblem<'a> {
    pub fn new(t1: usize, log_prices: &'a [f64]) -> Self {
        Self { t1, log_prices }
    }

    pub fn from_window(series: &'a PriceSeries, w: Window) -> Result<Self, ModelError> {
        Ok(Self::new(w.t1, w.log_prices(series)?))
    }

    pub fn len(&self) -> usize {
        self.log_prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prices.is_empty()
    }

    pub fn t2(&self) -> usize {
        self.t1 + self.log_prices.len() - 1
    }

    pub fn log_prices(&self) -> &'a [f64] {
        self.log_prices
    }

    /// Householder QR of the column-scaled design `[1 f g h | y]`.
    ///
    /// The normal matrix is never formed: the columns are nearly collinear
    /// when `omega ln(tc - t)` varies slowly, and squaring the condition
    /// number would lose the amplitudes.
    pub fn solve(&self, tc: f64, m: f64, omega: f64) -> Result<LinearSolution, ModelError> {
        let n = self.log_prices.len();
        if n < 4 {
            return Err(ModelError::DegenerateBasis);
        }
        let last = self.t2() as f64;
        if !(tc - last > 0.0) {
            return Err(ModelError::Singularity { t: last, tc });
        }

        // column-major n x 5
        let mut a = vec![0.0; n * NCOLS];
        for (i, &y) in self.log_prices.iter().enumerate() {
            let ln_dt = (tc - (self.t1 + i) as f64).ln();
            let f = (m * ln_dt).exp();
            let (s, c) = (omega * ln_dt).sin_cos();
            a[i] = 1.0;
            a[n + i] = f;
            a[2 * n + i] = f * c;
            a[3 * n + i] = f * s;
            a[4 * n + i] = y;
        }

        let mut scale = [0.0; 4];
        for (j, sc) in scale.iter_mut().enumerate() {
            let col = &mut a[j * n..(j + 1) * n];
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(ModelError::DegenerateBasis);
            }
            col.iter_mut().for_each(|v| *v /= norm);
            *sc = norm;
        }

        let mut r_diag = [0.0; 4];
        for k in 0..4 {
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let v = &mut head[k * n + k..(k + 1) * n];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(ModelError::DegenerateBasis);
            }
            let alpha = if v[0] > 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vtv = v.iter().map(|x| x * x).sum::<f64>();
            for j in 0..(NCOLS - k - 1) {
                let col = &mut tail[j * n + k..(j + 1) * n];
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let coef = 2.0 * dot / vtv;
                col.iter_mut().zip(v.iter()).for_each(|(c, vi)| *c -= coef * vi);
            }
            r_diag[k] = alpha;
            // store R_kk in place; the reflector itself is no longer needed
            v[0] = alpha;
        }

        let max_r = r_diag.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let min_r = r_diag.iter().fold(f64::INFINITY, |m, r| m.min(r.abs()));
        if !(min_r / max_r >= RANK_TOLERANCE) {
            return Err(ModelError::DegenerateBasis);
        }

        // back substitution on the upper 4x4 block; R[i][j] = a[j * n + i]
        let qty = &a[4 * n..5 * n];
        let mut z = [0.0; 4];
        for i in (0..4).rev() {
            let mut acc = qty[i];
            for j in i + 1..4 {
                acc -= a[j * n + i] * z[j];
            }
            z[i] = acc / a[i * n + i];
        }
        let ssr = qty[4..].iter().map(|v| v * v).sum::<f64>();
        let params = LinearParams {
            a: z[0] / scale[0],
            b: z[1] / scale[1],
            c1: z[2] / scale[2],
            c2: z[3] / scale[3],
        };
        if ![params.a, params.b, params.c1, params.c2, ssr]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(ModelError::DegenerateBasis);
        }
        Ok(LinearSolution { params, ssr })
    }

    /// Residual sum of squares at the linear optimum, `+inf` when the basis
    /// is degenerate or `tc` does not lie past the window.
    pub fn cost(&self, tc: f64, m: f64, omega: f64) -> f64 {
        self.solve(tc, m, omega).map_or(f64::INFINITY, |s| s.ssr)
    }

    /// `ln p_hat - ln p` at every point.
    pub fn residuals(&self, p: &LpplsParams) -> Result<Vec<f64>, ModelError> {
        self.log_prices
            .iter()
            .enumerate()
            .map(|(i, y)| Ok(lppls_eval(p, (self.t1 + i) as f64)? - y))
            .collect()
    }
}

pub fn solve_linear(
    series: &PriceSeries,
    w: Window,
    tc: f64,
    m: f64,
    omega: f64,
) -> Result<LinearParams, ModelError> {
    Ok(LinearSubproblem::from_window(series, w)?
        .solve(tc, m, omega)?
        .params)
}

/// Subordinated cost `chi^2(tc, m, omega)`; `+inf` on degenerate input.
pub fn cost(series: &PriceSeries, w: Window, tc: f64, m: f64, omega: f64) -> f64 {
    LinearSubproblem::from_window(series, w).map_or(f64::INFINITY, |lp| lp.cost(tc, m, omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series_from_logs(logs: &[f64]) -> PriceSeries {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let dates = (0..logs.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        PriceSeries::new(dates, logs.iter().map(|l| l.exp()).collect()).unwrap()
    }

    fn basis(t: f64, tc: f64, m: f64, omega: f64) -> [f64; 4] {
        let dt = tc - t;
        let f = dt.powf(m);
        [
            1.0,
            f,
            f * (omega * dt.ln()).cos(),
            f * (omega * dt.ln()).sin(),
        ]
    }

    /// The 4x4 normal equations, solved by LU.
    fn normal_equation_oracle(t1: usize, y: &[f64], tc: f64, m: f64, omega: f64) -> [f64; 4] {
        let mut lhs = Matrix4::<f64>::zeros();
        let mut rhs = Vector4::<f64>::zeros();
        for (i, yi) in y.iter().enumerate() {
            let b = Vector4::from(basis((t1 + i) as f64, tc, m, omega));
            lhs += b * b.transpose();
            rhs += b * *yi;
        }
        let x = lhs.lu().solve(&rhs).unwrap();
        [x[0], x[1], x[2], x[3]]
    }

    /// Least squares through an SVD of the design matrix.
    fn svd_oracle(t1: usize, y: &[f64], tc: f64, m: f64, omega: f64) -> [f64; 4] {
        let n = y.len();
        let x = DMatrix::from_fn(n, 4, |i, j| basis((t1 + i) as f64, tc, m, omega)[j]);
        let svd = x.svd(true, true);
        let sol = svd.solve(&DVector::from_column_slice(y), 0.0).unwrap();
        [sol[0], sol[1], sol[2], sol[3]]
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn eval_reduces_to_a_without_time_terms() {
        let p = LpplsParams {
            tc: 100.0,
            m: 0.3,
            omega: 7.0,
            a: 4.2,
            b: 0.0,
            c1: 0.0,
            c2: 0.0,
        };
        for t in [0.0, 50.0, 99.9] {
            assert_eq!(lppls_eval(&p, t).unwrap(), 4.2);
        }
    }

    #[test]
    fn eval_linear_case() {
        let p = LpplsParams {
            tc: 100.0,
            m: 1.0,
            omega: 8.0,
            a: 10.0,
            b: -1.0,
            c1: 0.0,
            c2: 0.0,
        };
        assert!((lppls_eval(&p, 90.0).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn eval_matches_direct_formula() {
        let p = LpplsParams {
            tc: 100.0,
            m: 0.5,
            omega: 8.0,
            a: 10.0,
            b: -1.0,
            c1: 0.1,
            c2: 0.05,
        };
        // sqrt(10) * (-1 + 0.1 cos(8 ln 10) + 0.05 sin(8 ln 10)), evaluated
        // in 50-digit arithmetic
        let expected = 7.059_559_287_317_834_f64;
        let direct = {
            let dt: f64 = 10.0;
            10.0 - dt.powf(0.5) + 0.1 * dt.powf(0.5) * (8.0 * dt.ln()).cos()
                + 0.05 * dt.powf(0.5) * (8.0 * dt.ln()).sin()
        };
        let got = lppls_eval(&p, 90.0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert!((got - direct).abs() < 1e-12);
    }

    #[test]
    fn eval_rejects_singularity() {
        let p = LpplsParams {
            tc: 100.0,
            m: 0.5,
            omega: 8.0,
            a: 1.0,
            b: -1.0,
            c1: 0.0,
            c2: 0.0,
        };
        assert!(matches!(
            lppls_eval(&p, 100.0),
            Err(ModelError::Singularity { .. })
        ));
        assert!(lppls_eval(&p, 120.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = LpplsParams {
            tc: 300.0,
            m: 0.45,
            omega: 9.0,
            a: 8.0,
            b: -0.03,
            c1: 0.002,
            c2: -0.001,
        };
        for t in [0.0, 57.3, 150.0, 250.0, 290.0] {
            let h = 1e-4;
            let fd = (p.eval(t + h).unwrap() - p.eval(t - h).unwrap()) / (2.0 * h);
            let an = p.eval_derivative(t).unwrap();
            assert!(rel_close(fd, an, 1e-5), "t={t}: {fd} vs {an}");
        }
    }

    #[test]
    fn window_invariants() {
        assert!(Window::new(0, 29).is_ok());
        assert!(Window::new(0, 28).is_err());
        assert!(Window::new(10, 10).is_err());
        assert!(Window::new(10, 5).is_err());
        assert_eq!(Window::new(0, 650).unwrap().n_points(), 651);
    }

    #[test]
    fn exact_recovery_from_noiseless_data() {
        let truth = LpplsParams {
            tc: 540.0,
            m: 0.5,
            omega: 9.0,
            a: 8.0,
            b: -0.03,
            c1: 0.0012,
            c2: 0.0008,
        };
        let logs: Vec<f64> = (0..520).map(|t| truth.eval(t as f64).unwrap()).collect();
        let s = series_from_logs(&logs);
        let w = Window::new(20, 519).unwrap();
        let lin = solve_linear(&s, w, truth.tc, truth.m, truth.omega).unwrap();
        assert!(rel_close(lin.a, truth.a, 1e-8));
        assert!(rel_close(lin.b, truth.b, 1e-8));
        assert!(rel_close(lin.c1, truth.c1, 1e-8));
        assert!(rel_close(lin.c2, truth.c2, 1e-8));
        let c = cost(&s, w, truth.tc, truth.m, truth.omega);
        assert!(c <= 1e-16 * w.n_points() as f64, "cost {c}");
    }

    #[test]
    fn constant_series_gives_pure_intercept() {
        let s = series_from_logs(&vec![3.25; 120]);
        let w = Window::new(10, 110).unwrap();
        let lin = solve_linear(&s, w, 130.0, 0.6, 7.0).unwrap();
        assert!((lin.a - 3.25).abs() < 1e-8);
        assert!(lin.b.abs() < 1e-8);
        assert!(lin.c1.abs() < 1e-8);
        assert!(lin.c2.abs() < 1e-8);
    }

    #[test]
    fn degenerate_basis_is_reported() {
        let s = series_from_logs(&vec![1.0; 60]);
        let w = Window::new(0, 59).unwrap();
        // m = 0 makes f identical to the intercept column
        assert_eq!(
            solve_linear(&s, w, 70.0, 0.0, 5.0),
            Err(ModelError::DegenerateBasis)
        );
        assert_eq!(cost(&s, w, 70.0, 0.0, 5.0), f64::INFINITY);
        // tc on the last observation
        assert!(solve_linear(&s, w, 59.0, 0.5, 5.0).is_err());
        assert_eq!(cost(&s, w, 59.0, 0.5, 5.0), f64::INFINITY);
    }

    #[test]
    fn matches_normal_equations_and_svd_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(30..300);
            let logs: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..9.0)).collect();
            let s = series_from_logs(&logs);
            let t1 = rng.random_range(0..n - 30);
            let w = Window::new(t1, n - 1).unwrap();
            let span = w.span() as f64;
            let tc = w.t2 as f64 + rng.random_range(0.5..span / 3.0);
            let m = rng.random_range(0.05..0.95);
            let omega = rng.random_range(2.0..25.0);
            let got = solve_linear(&s, w, tc, m, omega).unwrap();
            let y = w.log_prices(&s).unwrap();
            let svd = svd_oracle(w.t1, y, tc, m, omega);
            let ne = normal_equation_oracle(w.t1, y, tc, m, omega);
            for (g, (o, e)) in [got.a, got.b, got.c1, got.c2]
                .iter()
                .zip(svd.iter().zip(ne.iter()))
            {
                assert!(rel_close(*g, *o, 1e-8), "{g} vs svd {o}");
                // normal equations square the condition number
                assert!(rel_close(*g, *e, 1e-5), "{g} vs normal {e}");
            }
        }
    }

    /// Brute-force minimum over a dense grid of the four amplitudes around
    /// the analytic optimum, refined twice.
    #[test]
    fn cost_matches_grid_search_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logs: Vec<f64> = (0..40)
            .map(|i| 2.0 + 0.01 * i as f64 + 0.02 * rng.random_range(-1.0..1.0))
            .collect();
        let s = series_from_logs(&logs);
        let w = Window::new(0, 39).unwrap();
        let (tc, m, omega) = (50.0, 0.5, 6.0);
        let sse = |p: [f64; 4]| -> f64 {
            logs.iter()
                .enumerate()
                .map(|(i, y)| {
                    let b = basis(i as f64, tc, m, omega);
                    let fit: f64 = b.iter().zip(p.iter()).map(|(x, c)| x * c).sum();
                    (y - fit).powi(2)
                })
                .sum()
        };
        // start from the normal-equation estimate, which is independent of QR
        let mut center = normal_equation_oracle(0, &logs, tc, m, omega);
        let mut half = [0.05, 0.02, 0.02, 0.02];
        let mut best = sse(center);
        for _ in 0..6 {
            let k = 6i32;
            let mut best_p = center;
            for i0 in -k..=k {
                for i1 in -k..=k {
                    for i2 in -k..=k {
                        for i3 in -k..=k {
                            let p = [
                                center[0] + half[0] * i0 as f64 / k as f64,
                                center[1] + half[1] * i1 as f64 / k as f64,
                                center[2] + half[2] * i2 as f64 / k as f64,
                                center[3] + half[3] * i3 as f64 / k as f64,
                            ];
                            let v = sse(p);
                            if v < best {
                                best = v;
                                best_p = p;
                            }
                        }
                    }
                }
            }
            center = best_p;
            half.iter_mut().for_each(|h| *h /= 4.0);
        }
        let c = cost(&s, w, tc, m, omega);
        assert!(c <= best * (1.0 + 1e-9), "qr cost {c} above grid {best}");
        assert!((c - best).abs() <= 1e-8 * best.max(1e-12), "{c} vs {best}");
    }

    #[test]
    fn residuals_are_orthogonal_to_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let logs: Vec<f64> = (0..200).map(|_| rng.random_range(6.0..7.0)).collect();
        let s = series_from_logs(&logs);
        let w = Window::new(50, 199).unwrap();
        let (tc, m, omega) = (230.0, 0.4, 11.0);
        let lp = LinearSubproblem::from_window(&s, w).unwrap();
        let sol = lp.solve(tc, m, omega).unwrap();
        let p = LpplsParams::from_parts(tc, m, omega, sol.params);
        let res = lp.residuals(&p).unwrap();
        let ssr: f64 = res.iter().map(|r| r * r).sum();
        assert!(rel_close(ssr, sol.ssr, 1e-9));
        let res_norm = ssr.sqrt();
        for j in 0..4 {
            let col: Vec<f64> = w.times().map(|t| basis(t, tc, m, omega)[j]).collect();
            let col_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = col.iter().zip(&res).map(|(a, b)| a * b).sum();
            assert!(dot.abs() <= 1e-8 * col_norm * res_norm, "column {j}: {dot}");
        }
    }

    proptest! {
        #[test]
        fn cost_is_translation_invariant(
            seed in 0u64..1000,
            shift in -5.0f64..5.0,
            m in 0.1f64..0.9,
            omega in 2.0f64..20.0,
            lead in 1.0f64..30.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let logs: Vec<f64> = (0..80).map(|_| rng.random_range(4.0..5.0)).collect();
            let shifted: Vec<f64> = logs.iter().map(|l| l + shift).collect();
            let w = Window::new(0, 79).unwrap();
            let tc = 79.0 + lead;
            let a = LinearSubproblem::new(0, &logs).cost(tc, m, omega);
            let b = LinearSubproblem::new(0, &shifted).cost(tc, m, omega);
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{} vs {}", a, b);
            let _ = w;
        }
    }
}
