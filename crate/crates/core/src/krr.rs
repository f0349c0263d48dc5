//! Kernel ridge regression constrained to the unit RKHS ball, and the
//! pure-noise excess-risk experiment.
//!
//! `fit_krr` solves `(G + n lambda I) alpha = y`, the minimiser of
//! `(1/n) sum (f(x_i) - y_i)^2 + lambda ||f||^2`. The constrained estimator
//! is the ridge solution whose RKHS norm is 1, found by bisection on
//! `ln lambda`; the norm is nonincreasing in `lambda`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dimension::{fit_loglog, FitMethod, RansacParams, SlopeFit, Window};
use crate::domains::sample_sphere;
use crate::error::{invalid, Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::points::PointSet;

pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e3;
pub const DEFAULT_BISECTION_ITERS: usize = 30;
pub const DEFAULT_NORM_TOL: f64 = 1e-3;
/// Diagonal shift added once when the factorisation fails.
pub const JITTER: f64 = 1e-10;

/// How a constrained fit ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintStatus {
    /// Unconstrained ridge fit; no norm target.
    Unconstrained,
    /// `|norm - 1| <= norm_tol`.
    Attained,
    /// Even the least-regularised solution has norm below 1.
    SubUnit,
    /// Even the most-regularised solution has norm above 1.
    Saturated,
    /// The bisection ran out of iterations outside `norm_tol`.
    Unresolved,
}

#[derive(Debug, Clone)]
pub struct KrrModel {
    pub spec: KernelSpec,
    pub coefficients: Vec<f64>,
    pub train_points: PointSet,
    pub lambda: f64,
    pub rkhs_norm: f64,
    pub status: ConstraintStatus,
}

/// Training Gram matrix plus the kernel that built it.
struct Problem<'a> {
    kernel: Kernel,
    gram: Mat<f64>,
    points: &'a PointSet,
    y: &'a [f64],
}

impl<'a> Problem<'a> {
    fn new(spec: &KernelSpec, points: &'a PointSet, y: &'a [f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("points", "need at least one training point"));
        }
        if points.len() != y.len() {
            return Err(Error::Mismatch(format!(
                "{} training points vs {} targets",
                points.len(),
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(invalid("y", format!("target {i} is not finite")));
        }
        let kernel = Kernel::new(spec, points.dim())?;
        kernel.check_points(points)?;
        let gram = kernel.gram_symmetric(points);
        Ok(Self {
            kernel,
            gram,
            points,
            y,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    /// `(alpha, ||f||)` at `lambda`.
    fn solve(&self, lambda: f64) -> Result<(Vec<f64>, f64)> {
        let n = self.n();
        let shift = n as f64 * lambda;
        let factor = |extra: f64| {
            let mut a = self.gram.clone();
            for i in 0..n {
                a[(i, i)] += shift + extra;
            }
            a.llt(Side::Lower)
        };
        let llt = match factor(0.0) {
            Ok(l) => l,
            Err(_) => {
                log::debug!("Cholesky failed at lambda={lambda:e}; retrying with jitter");
                factor(JITTER).map_err(|e| {
                    Error::LinearAlgebra(format!(
                        "Cholesky failed at lambda={lambda:e} after jitter: {e:?}"
                    ))
                })?
            }
        };
        let rhs = Mat::from_fn(n, 1, |i, _| self.y[i]);
        let sol = llt.solve(rhs.as_ref());
        let alpha: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::LinearAlgebra(format!(
                "non-finite coefficients at lambda={lambda:e}"
            )));
        }
        let norm = quadratic_form(&self.gram, &alpha).max(0.0).sqrt();
        Ok((alpha, norm))
    }

    fn model(&self, alpha: Vec<f64>, lambda: f64, norm: f64, status: ConstraintStatus) -> KrrModel {
        KrrModel {
            spec: self.kernel.spec().clone(),
            coefficients: alpha,
            train_points: self.points.clone(),
            lambda,
            rkhs_norm: norm,
            status,
        }
    }
}

/// `a^T G a`, summed in a fixed order so results do not depend on scheduling.
fn quadratic_form(g: &Mat<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| a[i] * (0..n).map(|j| g[(i, j)] * a[j]).sum::<f64>())
        .collect();
    rows.iter().sum()
}

/// Ridge solution at a fixed `lambda > 0`.
pub fn fit_krr(spec: &KernelSpec, points: &PointSet, y: &[f64], lambda: f64) -> Result<KrrModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let problem = Problem::new(spec, points, y)?;
    let (alpha, norm) = problem.solve(lambda)?;
    Ok(problem.model(alpha, lambda, norm, ConstraintStatus::Unconstrained))
}

/// Settings of the bisection on `ln lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedParams {
    pub iters: usize,
    pub norm_tol: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for ConstrainedParams {
    fn default() -> Self {
        Self {
            iters: DEFAULT_BISECTION_ITERS,
            norm_tol: DEFAULT_NORM_TOL,
            lambda_min: LAMBDA_MIN,
            lambda_max: LAMBDA_MAX,
        }
    }
}

/// Ridge solution with RKHS norm 1, approached from below.
///
/// A failed factorisation during the search is treated as a norm above 1:
/// it only happens for nearly interpolating `lambda`.
pub fn fit_constrained_krr(
    spec: &KernelSpec,
    points: &PointSet,
    y: &[f64],
    params: &ConstrainedParams,
) -> Result<KrrModel> {
    let ConstrainedParams {
        iters,
        norm_tol,
        lambda_min,
        lambda_max,
    } = *params;
    if !(lambda_min > 0.0 && lambda_min < lambda_max && lambda_max.is_finite()) {
        return Err(invalid(
            "lambda range",
            format!("need 0 < lambda_min < lambda_max, got [{lambda_min}, {lambda_max}]"),
        ));
    }
    if !(norm_tol > 0.0) {
        return Err(invalid("norm_tol", format!("must be positive, got {norm_tol}")));
    }
    let problem = Problem::new(spec, points, y)?;

    if let Ok((alpha, norm)) = problem.solve(lambda_min) {
        if norm <= 1.0 {
            return Ok(problem.model(alpha, lambda_min, norm, ConstraintStatus::SubUnit));
        }
    }
    let (alpha, norm) = problem.solve(lambda_max)?;
    if norm > 1.0 {
        return Ok(problem.model(alpha, lambda_max, norm, ConstraintStatus::Saturated));
    }

    let (mut lo, mut hi) = (lambda_min.ln(), lambda_max.ln());
    let mut best = (alpha, lambda_max, norm);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let lambda = mid.exp();
        match problem.solve(lambda) {
            Ok((alpha, norm)) if norm <= 1.0 => {
                hi = mid;
                best = (alpha, lambda, norm);
            }
            _ => lo = mid,
        }
    }
    let (alpha, lambda, norm) = best;
    let status = if (1.0 - norm).abs() <= norm_tol {
        ConstraintStatus::Attained
    } else {
        ConstraintStatus::Unresolved
    };
    Ok(problem.model(alpha, lambda, norm, status))
}

/// `f(x) = sum_i alpha_i K(x_i, x)` at every test point.
pub fn predict(model: &KrrModel, test: &PointSet) -> Result<Vec<f64>> {
    let train = &model.train_points;
    if test.dim() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: test.dim(),
        });
    }
    let kernel = Kernel::new(&model.spec, train.dim())?;
    kernel.check_points(test)?;
    Ok((0..test.len())
        .into_par_iter()
        .map(|k| {
            let x = test.point(k);
            model
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, a)| a * kernel.eval(train.point(i), x))
                .sum()
        })
        .collect())
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskRow {
    pub n: usize,
    pub mean_excess: f64,
    pub std_excess: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub rows: Vec<RiskRow>,
}

impl RiskCurve {
    /// OLS slope of `ln mean_excess` against `ln n` over all rows.
    pub fn slope(&self) -> Result<SlopeFit> {
        let ns: Vec<f64> = self.rows.iter().map(|r| r.n as f64).collect();
        let risks: Vec<f64> = self.rows.iter().map(|r| r.mean_excess).collect();
        if ns.is_empty() {
            return Err(Error::TooFewPoints(0));
        }
        fit_loglog(
            &ns,
            &risks,
            Window::new(0, ns.len() - 1),
            FitMethod::Ols,
            &RansacParams::default(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub d: usize,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub n_test: usize,
    pub noise_amp: f64,
    pub seed: u64,
    pub constrained: ConstrainedParams,
}

impl ExperimentConfig {
    pub fn new(d: usize, sizes: Vec<usize>, trials: usize, n_test: usize, seed: u64) -> Self {
        Self {
            d,
            sizes,
            trials,
            n_test,
            noise_amp: 0.2,
            seed,
            constrained: ConstrainedParams::default(),
        }
    }
}

/// Random stream for one `(size index, trial)` pair, independent of
/// scheduling.
fn trial_rng(seed: u64, size_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((size_index as u64) << 32) | trial as u64);
    rng
}

/// Excess risk `mean f^2` of one constrained fit on fresh sphere points.
fn run_trial(spec: &KernelSpec, cfg: &ExperimentConfig, n: usize, mut rng: ChaCha8Rng) -> Result<f64> {
    let train = sample_sphere(n, cfg.d, rng.next_u64())?;
    let test = sample_sphere(cfg.n_test, cfg.d, rng.next_u64())?;
    let y: Vec<f64> = (0..n)
        .map(|_| cfg.noise_amp * rng.random_range(-1.0..=1.0))
        .collect();
    let model = fit_constrained_krr(spec, &train, &y, &cfg.constrained)?;
    let preds = predict(&model, &test)?;
    Ok(compensated_sum(preds.iter().map(|f| f * f)) / cfg.n_test as f64)
}

/// Pure-noise regression on the sphere: `Y = noise_amp * U[-1, 1]`
/// independent of `X`, so the excess risk of `f` is `E[f(X)^2]`.
pub fn excess_risk_experiment(spec: &KernelSpec, cfg: &ExperimentConfig) -> Result<RiskCurve> {
    if cfg.d < 2 {
        return Err(invalid("d", format!("must be at least 2, got {}", cfg.d)));
    }
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) || cfg.sizes[0] == 0 {
        return Err(invalid("sizes", "must be positive and strictly increasing"));
    }
    if cfg.trials == 0 || cfg.n_test == 0 {
        return Err(invalid("trials/n_test", "must be positive"));
    }
    if !(cfg.noise_amp >= 0.0) {
        return Err(invalid("noise_amp", "must be nonnegative"));
    }
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for (si, &n) in cfg.sizes.iter().enumerate() {
        let outcomes: Vec<Result<f64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| run_trial(spec, cfg, n, trial_rng(cfg.seed, si, trial)))
            .collect();
        let mut risks = Vec::with_capacity(cfg.trials);
        let mut first_err = None;
        for outcome in outcomes {
            match outcome {
                Ok(r) => risks.push(r),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let failed = cfg.trials - risks.len();
        if failed > 0 {
            log::warn!("n={n}: {failed} of {} trials failed", cfg.trials);
        }
        if risks.is_empty() {
            return Err(first_err.expect("failed trials leave an error"));
        }
        let k = risks.len() as f64;
        let mean = compensated_sum(risks.iter().copied()) / k;
        let std = if risks.len() > 1 {
            (compensated_sum(risks.iter().map(|r| (r - mean) * (r - mean))) / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(RiskRow {
            n,
            mean_excess: mean,
            std_excess: std,
            trials: risks.len(),
        });
    }
    Ok(RiskCurve { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_problem(n: usize, seed: u64) -> (PointSet, Vec<f64>) {
        let pts = sample_sphere(n, 3, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (pts, y)
    }

    fn gram_of(spec: &KernelSpec, pts: &PointSet) -> Mat<f64> {
        Kernel::new(spec, pts.dim()).unwrap().gram_symmetric(pts)
    }

    #[test]
    fn single_point_scalar_solve() {
        let pts = PointSet::from_rows(&[[0.2, 0.4]], "one").unwrap();
        for (c, lambda) in [(1.0, 0.5), (-3.0, 2.0), (0.7, 1e-6)] {
            let m = fit_krr(&KernelSpec::laplace(1.0), &pts, &[c], lambda).unwrap();
            assert!((m.coefficients[0] - c / (1.0 + lambda)).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_residual_and_norm_identity() {
        let spec = KernelSpec::laplace(1.0);
        let (pts, y) = sphere_problem(80, 1);
        let g = gram_of(&spec, &pts);
        for lambda in [1e-6, 1e-3, 1.0] {
            let m = fit_krr(&spec, &pts, &y, lambda).unwrap();
            let n = y.len();
            let mut res2 = 0.0;
            for i in 0..n {
                let mut r = n as f64 * lambda * m.coefficients[i] - y[i];
                for j in 0..n {
                    r += g[(i, j)] * m.coefficients[j];
                }
                res2 += r * r;
            }
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res2.sqrt() <= 1e-8 * ynorm);
            let q = quadratic_form(&g, &m.coefficients);
            assert!((m.rkhs_norm * m.rkhs_norm - q).abs() <= 1e-8 * q);
        }
    }

    #[test]
    fn heavy_ridge_shrinks_to_zero() {
        let spec = KernelSpec::laplace(1.0);
        let (pts, y) = sphere_problem(30, 2);
        let m = fit_krr(&spec, &pts, &y, 1e8).unwrap();
        assert!(m.coefficients.iter().all(|a| a.abs() < 1e-8));
        let preds = predict(&m, &pts).unwrap();
        assert!(preds.iter().all(|p| p.abs() < 1e-6));
    }

    #[test]
    fn constrained_fit_attains_unit_norm() {
        for (k, spec) in [KernelSpec::laplace(1.0), KernelSpec::ntk_relu(), KernelSpec::gaussian(0.1)]
            .into_iter()
            .enumerate()
        {
            let (pts, y) = sphere_problem(120, 10 + k as u64);
            let m = fit_constrained_krr(&spec, &pts, &y, &ConstrainedParams::default()).unwrap();
            assert_eq!(m.status, ConstraintStatus::Attained, "{spec}");
            assert!((m.rkhs_norm - 1.0).abs() <= DEFAULT_NORM_TOL);
        }
    }

    #[test]
    fn zero_targets_are_sub_unit() {
        let (pts, _) = sphere_problem(20, 3);
        let m = fit_constrained_krr(&KernelSpec::laplace(1.0), &pts, &[0.0; 20], &ConstrainedParams::default())
            .unwrap();
        assert_eq!(m.status, ConstraintStatus::SubUnit);
        assert_eq!(m.rkhs_norm, 0.0);
        assert!(m.coefficients.iter().all(|&a| a == 0.0));
        assert_eq!(m.lambda, LAMBDA_MIN);
    }

    #[test]
    fn norm_decreases_along_the_ridge_path() {
        let spec = KernelSpec::laplace(1.0);
        let (pts, y) = sphere_problem(60, 4);
        let norms: Vec<f64> = [LAMBDA_MIN, 1e-8, 1e-4, 1e-1, 1.0, LAMBDA_MAX]
            .iter()
            .map(|&l| fit_krr(&spec, &pts, &y, l).unwrap().rkhs_norm)
            .collect();
        assert!(norms.windows(2).all(|w| w[0] >= w[1]), "{norms:?}");
    }

    #[test]
    fn prediction_interpolates_and_is_linear() {
        let spec = KernelSpec::laplace(1.0);
        let (pts, y) = sphere_problem(40, 5);
        let m = fit_krr(&spec, &pts, &y, 1e-12).unwrap();
        let preds = predict(&m, &pts).unwrap();
        for (p, v) in preds.iter().zip(&y) {
            assert!((p - v).abs() < 1e-6);
        }
        let mut doubled = m.clone();
        doubled.coefficients.iter_mut().for_each(|a| *a *= 2.0);
        let test = sample_sphere(25, 3, 77).unwrap();
        let (p1, p2) = (predict(&m, &test).unwrap(), predict(&doubled, &test).unwrap());
        for (a, b) in p1.iter().zip(&p2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let mut zero = m.clone();
        zero.coefficients.iter_mut().for_each(|a| *a = 0.0);
        assert!(predict(&zero, &test).unwrap().iter().all(|&p| p == 0.0));
        let wrong = PointSet::from_rows(&[[1.0, 0.0]], "w").unwrap();
        assert!(predict(&m, &wrong).is_err());
    }

    #[test]
    fn argument_errors() {
        let (pts, y) = sphere_problem(5, 6);
        let spec = KernelSpec::laplace(1.0);
        assert!(fit_krr(&spec, &pts, &y, 0.0).is_err());
        assert!(fit_krr(&spec, &pts, &y[..4], 1.0).is_err());
        let cfg = ExperimentConfig::new(1, vec![8], 1, 10, 0);
        assert!(excess_risk_experiment(&spec, &cfg).is_err());
        let cfg = ExperimentConfig::new(2, vec![16, 8], 1, 10, 0);
        assert!(excess_risk_experiment(&spec, &cfg).is_err());
    }

    #[test]
    fn noiseless_experiment_has_zero_risk() {
        let mut cfg = ExperimentConfig::new(2, vec![8, 16, 32], 3, 50, 1);
        cfg.noise_amp = 0.0;
        let curve = excess_risk_experiment(&KernelSpec::laplace(1.0), &cfg).unwrap();
        for row in &curve.rows {
            assert_eq!(row.mean_excess, 0.0);
            assert_eq!(row.trials, 3);
        }
    }

    #[test]
    fn experiment_is_reproducible_and_nonnegative() {
        let cfg = ExperimentConfig::new(3, vec![16, 32, 64], 4, 200, 9);
        let spec = KernelSpec::laplace(1.0);
        let a = excess_risk_experiment(&spec, &cfg).unwrap();
        let b = excess_risk_experiment(&spec, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.iter().all(|r| r.mean_excess >= 0.0 && r.std_excess >= 0.0));
        assert!(a.rows.windows(2).all(|w| w[0].n < w[1].n));
    }

    #[test]
    fn reduced_risk_matches_direct_difference() {
        let spec = KernelSpec::laplace(1.0);
        let (pts, _) = sphere_problem(64, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<f64> = (0..64).map(|_| 0.2 * rng.random_range(-1.0..=1.0)).collect();
        let m = fit_constrained_krr(&spec, &pts, &y, &ConstrainedParams::default()).unwrap();
        let test = sample_sphere(20000, 3, 99).unwrap();
        let f = predict(&m, &test).unwrap();
        let yt: Vec<f64> = (0..f.len()).map(|_| 0.2 * rng.random_range(-1.0..=1.0)).collect();
        let k = f.len() as f64;
        let reduced = f.iter().map(|v| v * v).sum::<f64>() / k;
        let diffs: Vec<f64> = f.iter().zip(&yt).map(|(a, b)| (a - b) * (a - b) - b * b).collect();
        let direct = diffs.iter().sum::<f64>() / k;
        let var = diffs.iter().map(|d| (d - direct) * (d - direct)).sum::<f64>() / (k - 1.0);
        assert!((reduced - direct).abs() <= 3.0 * (var / k).sqrt());
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        assert_eq!(compensated_sum([1e16, 1.0, -1e16]), 1.0);
    }
}
