//! CMA-ES over `(tc, m, omega)` and single-window calibration.
//!
//! The strategy runs in the unit cube mapped affinely onto the search box,
//! because `tc` spans hundreds of trading days while `m` lives in `(0, 1)`.
//! Candidates outside the cube are resampled a bounded number of times and
//! then projected onto the boundary. The damping constraint depends on the
//! linear amplitudes, so it is enforced by the objective returning `+inf`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinearSubproblem, LpplsParams, Window};
use crate::qualify::QualificationReport;
use crate::seed;
use crate::timeseries::PriceSeries;

const DIM: usize = 3;
const MAX_RESAMPLES: usize = 50;
const TOL_X: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e14;
/// Stall limit in units of the cost-history length.
const STALL_FACTOR: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("no feasible point found in {restarts} restart(s)")]
    NoFeasiblePoint { restarts: usize },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("empty search box")]
    EmptyBox,
}

/// Configurable parts of the search box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBounds {
    pub m_range: (f64, f64),
    pub omega_range: (f64, f64),
    /// `tc` is searched in `[t2, t2 + fraction * (t2 - t1)]`.
    pub tc_horizon_fraction: f64,
    pub damping_min: f64,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            m_range: (0.0, 1.0),
            omega_range: (1.0, 50.0),
            tc_horizon_fraction: 1.0 / 3.0,
            damping_min: 1.0,
        }
    }
}

/// Concrete bounds for one window, in the order `(tc, m, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub tc_range: (f64, f64),
    pub m_range: (f64, f64),
    pub omega_range: (f64, f64),
    pub damping_min: f64,
}

impl SearchBox {
    pub fn for_window(w: Window, bounds: &SearchBounds) -> Self {
        let t2 = w.t2 as f64;
        Self {
            tc_range: (t2, t2 + bounds.tc_horizon_fraction * w.span() as f64),
            m_range: bounds.m_range,
            omega_range: bounds.omega_range,
            damping_min: bounds.damping_min,
        }
    }

    fn ranges(&self) -> [(f64, f64); DIM] {
        [self.tc_range, self.m_range, self.omega_range]
    }

    pub fn is_valid(&self) -> bool {
        self.ranges()
            .iter()
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && hi > lo)
    }

    pub fn contains(&self, x: &[f64; DIM]) -> bool {
        self.ranges()
            .iter()
            .zip(x)
            .all(|((lo, hi), v)| *v >= *lo && *v <= *hi)
    }

    pub fn center(&self) -> [f64; DIM] {
        self.ranges().map(|(lo, hi)| 0.5 * (lo + hi))
    }

    fn denormalize(self, u: &Vector3<f64>) -> [f64; DIM] {
        let r = self.ranges();
        [0, 1, 2].map(|i| r[i].0 + u[i] * (r[i].1 - r[i].0))
    }

    fn normalize(self, x: &[f64; DIM]) -> Vector3<f64> {
        let r = self.ranges();
        Vector3::from_fn(|i, _| (x[i] - r[i].0) / (r[i].1 - r[i].0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub population_size: usize,
    /// Per restart.
    pub max_evaluations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Initial step as a fraction of each box width.
    pub initial_step_fraction: f64,
    /// Stop a restart once the recent best costs span less than
    /// `tolerance_cost * (1 + |best|)`.
    pub tolerance_cost: f64,
    /// Starting mean in box coordinates; the box center when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_mean: Option<[f64; DIM]>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            // 4 + floor(3 ln 3)
            population_size: 7,
            max_evaluations: 3000,
            restarts: 3,
            seed: 42,
            initial_step_fraction: 0.3,
            tolerance_cost: 1e-8,
            initial_mean: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |msg: &str| Err(OptimizeError::InvalidConfig(msg.into()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.max_evaluations == 0 {
            return bad("max_evaluations must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be positive");
        }
        if !(self.initial_step_fraction > 0.0 && self.initial_step_fraction <= 1.0) {
            return bad("initial_step_fraction must lie in (0, 1]");
        }
        if !(self.tolerance_cost >= 0.0) {
            return bad("tolerance_cost must be nonnegative");
        }
        Ok(())
    }
}

/// Best point found by [`cma_es_minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    /// `(tc, m, omega)`
    pub x: [f64; DIM],
    pub cost: f64,
    pub evaluations: usize,
}

/// Minimizes `objective(&[tc, m, omega])` inside `bbox`.
///
/// Each restart uses its own seed derived from `cfg.seed` and its index, so
/// adding restarts never changes what the earlier ones do. Returns the best
/// finite value over all restarts.
pub fn cma_es_minimize<F>(
    mut objective: F,
    bbox: &SearchBox,
    cfg: &OptimizerConfig,
) -> Result<Minimum, OptimizeError>
where
    F: FnMut(&[f64; DIM]) -> f64,
{
    cfg.validate()?;
    if !bbox.is_valid() {
        return Err(OptimizeError::EmptyBox);
    }
    let mut best: Option<Minimum> = None;
    let mut evaluations = 0;
    for restart in 0..cfg.restarts {
        let rng_seed = seed::derive(cfg.seed, &[restart as u64]);
        let run = run_once(&mut objective, bbox, cfg, rng_seed);
        evaluations += run.evaluations;
        if run.cost.is_finite() && best.is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    match best {
        Some(b) => Ok(Minimum { evaluations, ..b }),
        None => Err(OptimizeError::NoFeasiblePoint {
            restarts: cfg.restarts,
        }),
    }
}

struct Params {
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
}

impl Params {
    fn new(lambda: usize) -> Self {
        let n = DIM as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let cs = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let c1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let cmu = (1.0 - c1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Self {
            lambda,
            mu,
            weights,
            mu_eff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
        }
    }
}

fn run_once<F>(objective: &mut F, bbox: &SearchBox, cfg: &OptimizerConfig, rng_seed: u64) -> Minimum
where
    F: FnMut(&[f64; DIM]) -> f64,
{
    let p = Params::new(cfg.population_size);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = DIM as f64;

    let start = cfg.initial_mean.unwrap_or_else(|| bbox.center());
    let mut mean = bbox.normalize(&start).map(|v| v.clamp(0.0, 1.0));
    let mut sigma = cfg.initial_step_fraction;
    let mut cov = Matrix3::<f64>::identity();
    let mut basis = Matrix3::<f64>::identity();
    let mut diag = Vector3::<f64>::from_element(1.0);
    let mut ps = Vector3::<f64>::zeros();
    let mut pc = Vector3::<f64>::zeros();

    let mut best = Minimum {
        x: bbox.denormalize(&mean),
        cost: f64::INFINITY,
        evaluations: 0,
    };
    let mut evaluations = 0;
    let history_len = 10 + (30.0 * n / p.lambda as f64).ceil() as usize;
    let mut history: Vec<f64> = Vec::new();
    let mut generation = 0usize;
    let mut last_gain = 0usize;

    let mut cand_u: Vec<Vector3<f64>> = Vec::with_capacity(p.lambda);
    let mut cand_y: Vec<Vector3<f64>> = Vec::with_capacity(p.lambda);
    let mut fitness: Vec<f64> = Vec::with_capacity(p.lambda);
    let mut order: Vec<usize> = Vec::with_capacity(p.lambda);

    while evaluations + p.lambda <= cfg.max_evaluations {
        cand_u.clear();
        cand_y.clear();
        fitness.clear();
        for _ in 0..p.lambda {
            let mut y = Vector3::zeros();
            let mut u = mean;
            let mut inside = false;
            for _ in 0..MAX_RESAMPLES {
                let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                y = basis * diag.component_mul(&z);
                u = mean + y * sigma;
                if u.iter().all(|v| (0.0..=1.0).contains(v)) {
                    inside = true;
                    break;
                }
            }
            if !inside {
                u = u.map(|v| v.clamp(0.0, 1.0));
                y = (u - mean) / sigma;
            }
            let x = bbox.denormalize(&u);
            let f = objective(&x);
            let f = if f.is_nan() { f64::INFINITY } else { f };
            if f < best.cost {
                if best.cost - f > cfg.tolerance_cost * (1.0 + f.abs()) {
                    last_gain = generation;
                }
                best.cost = f;
                best.x = x;
            }
            cand_u.push(u);
            cand_y.push(y);
            fitness.push(f);
        }
        evaluations += p.lambda;
        generation += 1;

        order.clear();
        order.extend(0..p.lambda);
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));

        let old_mean = mean;
        let mut y_w = Vector3::zeros();
        for (w, &i) in p.weights.iter().zip(&order[..p.mu]) {
            y_w += cand_y[i] * *w;
        }
        mean = old_mean + y_w * sigma;
        mean = mean.map(|v| v.clamp(0.0, 1.0));

        // C^{-1/2} y_w
        let inv_sqrt = basis * Matrix3::from_diagonal(&diag.map(|d| 1.0 / d)) * basis.transpose();
        ps = ps * (1.0 - p.cs) + inv_sqrt * y_w * (p.cs * (2.0 - p.cs) * p.mu_eff).sqrt();
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - p.cs).powi(2 * generation as i32)).sqrt() / p.chi_n
            < 1.4 + 2.0 / (n + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };
        pc = pc * (1.0 - p.cc) + y_w * (hsig_f * (p.cc * (2.0 - p.cc) * p.mu_eff).sqrt());

        let mut rank_mu = Matrix3::zeros();
        for (w, &i) in p.weights.iter().zip(&order[..p.mu]) {
            rank_mu += cand_y[i] * cand_y[i].transpose() * *w;
        }
        let decay = 1.0 - p.c1 - p.cmu + (1.0 - hsig_f) * p.c1 * p.cc * (2.0 - p.cc);
        cov = cov * decay + pc * pc.transpose() * p.c1 + rank_mu * p.cmu;
        cov = (cov + cov.transpose()) * 0.5;

        sigma *= ((p.cs / p.damps) * (ps_norm / p.chi_n - 1.0)).exp();
        sigma = sigma.min(1.0);

        let eig = SymmetricEigen::new(cov);
        let max_ev = eig.eigenvalues.max();
        let min_ev = eig.eigenvalues.min();
        if !(min_ev > 0.0) || max_ev / min_ev > MAX_CONDITION {
            break;
        }
        basis = eig.eigenvectors;
        diag = eig.eigenvalues.map(f64::sqrt);

        // termination
        history.push(fitness[order[0]]);
        if history.len() > history_len {
            history.remove(0);
        }
        if sigma * diag.max() < TOL_X {
            break;
        }
        // no real progress on the run's best for a while
        if generation - last_gain > STALL_FACTOR * history_len {
            break;
        }
        if history.len() == history_len && history.iter().all(|f| f.is_finite()) {
            let hi = history
                .iter()
                .chain(fitness.iter())
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lo = history
                .iter()
                .chain(fitness.iter())
                .fold(f64::INFINITY, |m, &v| m.min(v));
            if hi - lo <= cfg.tolerance_cost * (1.0 + best.cost.abs()) {
                break;
            }
        }
    }
    best.evaluations = evaluations;
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Every candidate was degenerate or violated the damping constraint.
    Infeasible,
}

/// One calibrated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub window: Window,
    pub status: FitStatus,
    /// NaN-filled when the fit is infeasible.
    pub params: LpplsParams,
    pub cost: f64,
    /// `ln p_hat - ln p` over the window.
    pub residuals: Vec<f64>,
    pub seed: u64,
    pub evaluations: usize,
    pub qualification: Option<QualificationReport>,
}

impl FitResult {
    pub fn is_converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

/// The objective the optimizer sees for one window: the subordinated cost,
/// or `+inf` where the basis is degenerate or the damping is too small.
pub fn constrained_cost(lp: &LinearSubproblem<'_>, x: &[f64; DIM], damping_min: f64) -> f64 {
    let [tc, m, omega] = *x;
    match lp.solve(tc, m, omega) {
        Ok(sol) => {
            let p = LpplsParams::from_parts(tc, m, omega, sol.params);
            if p.damping() >= damping_min {
                sol.ssr
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Fits one window. Optimizer failure yields an `Infeasible` result rather
/// than an error.
pub fn calibrate(
    series: &PriceSeries,
    w: Window,
    bbox: &SearchBox,
    cfg: &OptimizerConfig,
) -> Result<FitResult, crate::model::ModelError> {
    let lp = LinearSubproblem::from_window(series, w)?;
    Ok(calibrate_subproblem(&lp, w, bbox, cfg))
}

pub(crate) fn calibrate_subproblem(
    lp: &LinearSubproblem<'_>,
    w: Window,
    bbox: &SearchBox,
    cfg: &OptimizerConfig,
) -> FitResult {
    let result = cma_es_minimize(|x| constrained_cost(lp, x, bbox.damping_min), bbox, cfg);
    let infeasible = |evaluations| FitResult {
        window: w,
        status: FitStatus::Infeasible,
        params: LpplsParams {
            tc: f64::NAN,
            m: f64::NAN,
            omega: f64::NAN,
            a: f64::NAN,
            b: f64::NAN,
            c1: f64::NAN,
            c2: f64::NAN,
        },
        cost: f64::INFINITY,
        residuals: Vec::new(),
        seed: cfg.seed,
        evaluations,
        qualification: None,
    };
    let min = match result {
        Ok(min) => min,
        Err(_) => return infeasible(cfg.max_evaluations * cfg.restarts),
    };
    let [tc, m, omega] = min.x;
    let Ok(sol) = lp.solve(tc, m, omega) else {
        return infeasible(min.evaluations);
    };
    let params = LpplsParams::from_parts(tc, m, omega, sol.params);
    let Ok(residuals) = lp.residuals(&params) else {
        return infeasible(min.evaluations);
    };
    FitResult {
        window: w,
        status: FitStatus::Converged,
        params,
        cost: sol.ssr,
        residuals,
        seed: cfg.seed,
        evaluations: min.evaluations,
        qualification: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> SearchBox {
        SearchBox {
            tc_range: (100.0, 200.0),
            m_range: (0.0, 1.0),
            omega_range: (1.0, 50.0),
            damping_min: 1.0,
        }
    }

    #[test]
    fn sphere_optimum_is_recovered() {
        let b = unit_box();
        let target = [137.0, 0.42, 17.5];
        let cfg = OptimizerConfig {
            max_evaluations: 5000,
            restarts: 1,
            tolerance_cost: 0.0,
            ..Default::default()
        };
        let min = cma_es_minimize(
            |x| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum(),
            &b,
            &cfg,
        )
        .unwrap();
        assert!(min.evaluations <= 5000);
        for (got, want) in min.x.iter().zip(&target) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn shifted_rosenbrock_optimum_is_recovered() {
        let b = SearchBox {
            tc_range: (-3.0, 3.0),
            m_range: (-3.0, 3.0),
            omega_range: (-3.0, 3.0),
            damping_min: 1.0,
        };
        // minimum at (1, 1, 1) shifted by (0.3, -0.2, 0.5)
        let shift = [0.3, -0.2, 0.5];
        let rosen = |x: &[f64; 3]| {
            let z: Vec<f64> = x.iter().zip(&shift).map(|(v, s)| v - s).collect();
            (0..2)
                .map(|i| 100.0 * (z[i + 1] - z[i] * z[i]).powi(2) + (1.0 - z[i]).powi(2))
                .sum::<f64>()
        };
        let cfg = OptimizerConfig {
            max_evaluations: 20000,
            restarts: 3,
            tolerance_cost: 1e-14,
            ..Default::default()
        };
        let min = cma_es_minimize(rosen, &b, &cfg).unwrap();
        for (got, s) in min.x.iter().zip(&shift) {
            assert!((got - (1.0 + s)).abs() < 1e-3, "{:?}", min.x);
        }
    }

    #[test]
    fn tiny_step_at_optimum_stays_put() {
        let b = unit_box();
        let target = [150.0, 0.5, 25.5];
        let cfg = OptimizerConfig {
            initial_mean: Some(target),
            initial_step_fraction: 1e-6,
            restarts: 1,
            ..Default::default()
        };
        let min = cma_es_minimize(
            |x| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum(),
            &b,
            &cfg,
        )
        .unwrap();
        let widths = [100.0, 1.0, 49.0];
        for ((got, want), w) in min.x.iter().zip(&target).zip(&widths) {
            assert!((got - want).abs() <= 1e-6 * w, "{got} vs {want}");
        }
    }

    #[test]
    fn deterministic_and_feasible() {
        let b = unit_box();
        let f = |x: &[f64; 3]| (x[0] - 120.0).abs() + (x[1] - 0.9).powi(2) + (x[2] * 0.3).sin();
        let cfg = OptimizerConfig::default();
        let a = cma_es_minimize(f, &b, &cfg).unwrap();
        let c = cma_es_minimize(f, &b, &cfg).unwrap();
        assert_eq!(a, c);
        assert!(b.contains(&a.x));
    }

    #[test]
    fn more_restarts_never_hurt() {
        let b = unit_box();
        let f = |x: &[f64; 3]| (x[2] * 0.7).sin() * 3.0 + (x[0] / 13.0).cos() + x[1];
        let mut prev = f64::INFINITY;
        for restarts in 1..=5 {
            let cfg = OptimizerConfig {
                restarts,
                max_evaluations: 300,
                ..Default::default()
            };
            let min = cma_es_minimize(f, &b, &cfg).unwrap();
            assert!(min.cost <= prev);
            prev = min.cost;
        }
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let cfg = OptimizerConfig {
            max_evaluations: 70,
            restarts: 2,
            ..Default::default()
        };
        assert_eq!(
            cma_es_minimize(|_| f64::INFINITY, &unit_box(), &cfg),
            Err(OptimizeError::NoFeasiblePoint { restarts: 2 })
        );
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig {
            restarts: 0,
            ..Default::default()
        };
        assert!(matches!(
            cma_es_minimize(|_| 0.0, &unit_box(), &bad),
            Err(OptimizeError::InvalidConfig(_))
        ));
        let empty = SearchBox {
            tc_range: (5.0, 5.0),
            ..unit_box()
        };
        assert_eq!(
            cma_es_minimize(|_| 0.0, &empty, &OptimizerConfig::default()),
            Err(OptimizeError::EmptyBox)
        );
    }

    #[test]
    fn window_box_follows_bounds() {
        let w = Window::new(100, 400).unwrap();
        let b = SearchBox::for_window(w, &SearchBounds::default());
        assert_eq!(b.tc_range, (400.0, 500.0));
        assert_eq!(b.m_range, (0.0, 1.0));
        assert_eq!(b.omega_range, (1.0, 50.0));
        assert_eq!(b.damping_min, 1.0);
    }
}
