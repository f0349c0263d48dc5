//! Log-log slope fitting and the dimension estimates derived from it.
//!
//! Width curves `w_t ~ t^{-1/d_K}` give the effective dimension as the
//! reciprocal slope of `-ln w_t` against `ln t`; covering curves
//! `eps(n) ~ n^{-1/d_rho}` give the metric dimension as the slope of `ln n`
//! against `ln(1/eps)`. Fits are ordinary least squares or RANSAC with an
//! OLS refit on the consensus set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Ransac,
    Ols,
}

impl FitMethod {
    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Ransac => "ransac",
            FitMethod::Ols => "ols",
        }
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ransac" => Ok(FitMethod::Ransac),
            "ols" => Ok(FitMethod::Ols),
            other => Err(invalid("method", format!("expected ransac|ols, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier band half-width on the log-transformed ordinate.
    pub residual_threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            residual_threshold: 0.05,
            seed: 0,
        }
    }
}

/// Inclusive index range into the curve being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    /// `[300, 500]` for curves of length at least 500, else the upper half
    /// `[ceil(T/2), T-1]`.
    pub fn default_for(len: usize) -> Self {
        if len >= 500 {
            Self::new(300, 500.min(len - 1))
        } else {
            Self::new(len.div_ceil(2), len.saturating_sub(1))
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    /// `A:B`, inclusive.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid("window", format!("expected A:B, got `{s}`"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let (a, b) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        Ok(Self::new(a, b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub method: FitMethod,
    pub window: Window,
    /// One flag per usable point of the window (all true for OLS).
    pub inlier_mask: Vec<bool>,
    /// Points of the window dropped because a coordinate was not positive.
    pub dropped: usize,
    pub residual_threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl SlopeFit {
    pub fn inliers(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

/// Least-squares line through `(u, v)`: `(slope, intercept)`.
fn ols(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    let n = u.len();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let mu = u.iter().sum::<f64>() / n as f64;
    let mv = v.iter().sum::<f64>() / n as f64;
    let mut suu = 0.0;
    let mut suv = 0.0;
    for (a, b) in u.iter().zip(v) {
        suu += (a - mu) * (a - mu);
        suv += (a - mu) * (b - mv);
    }
    if suu <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = suv / suu;
    Ok((slope, mv - slope * mu))
}

/// Fits `ln y = slope * ln x + intercept` over `window`.
pub fn fit_loglog(
    xs: &[f64],
    ys: &[f64],
    window: Window,
    method: FitMethod,
    params: &RansacParams,
) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Mismatch(format!(
            "{} abscissae vs {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if window.start > window.end || window.end >= xs.len() {
        return Err(invalid(
            "window",
            format!(
                "{}:{} is not inside 0:{}",
                window.start,
                window.end,
                xs.len() as isize - 1
            ),
        ));
    }
    let mut u = Vec::new();
    let mut v = Vec::new();
    let mut dropped = 0;
    for i in window.start..=window.end {
        if xs[i] > 0.0 && ys[i] > 0.0 && xs[i].is_finite() && ys[i].is_finite() {
            u.push(xs[i].ln());
            v.push(ys[i].ln());
        } else {
            dropped += 1;
        }
    }
    if u.len() < 2 {
        return Err(Error::TooFewPoints(u.len()));
    }
    if u.iter().all(|&a| a == u[0]) {
        return Err(Error::DegenerateFit);
    }

    let (slope, intercept, inlier_mask) = match method {
        FitMethod::Ols => {
            let (s, b) = ols(&u, &v)?;
            (s, b, vec![true; u.len()])
        }
        FitMethod::Ransac => {
            if params.iterations == 0 {
                return Err(invalid("iterations", "must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let m = u.len();
            let hypotheses: Vec<(usize, usize)> = (0..params.iterations)
                .map(|_| {
                    let i = rng.random_range(0..m);
                    let mut j = rng.random_range(0..m - 1);
                    if j >= i {
                        j += 1;
                    }
                    (i, j)
                })
                .collect();
            let thr = params.residual_threshold;
            let count_inliers = |s: f64, b: f64| {
                u.iter()
                    .zip(&v)
                    .filter(|(a, c)| (*c - (s * *a + b)).abs() <= thr)
                    .count()
            };
            // Best consensus, ties to the earliest hypothesis.
            let best = hypotheses
                .par_iter()
                .enumerate()
                .filter_map(|(k, &(i, j))| {
                    let du = u[j] - u[i];
                    if du == 0.0 {
                        return None;
                    }
                    let s = (v[j] - v[i]) / du;
                    let b = v[i] - s * u[i];
                    Some((count_inliers(s, b), k, s, b))
                })
                .reduce_with(|a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    }
                });
            let (_, _, s, b) = best.ok_or(Error::DegenerateFit)?;
            let mask: Vec<bool> = u
                .iter()
                .zip(&v)
                .map(|(a, c)| (c - (s * a + b)).abs() <= thr)
                .collect();
            let (iu, iv): (Vec<f64>, Vec<f64>) = u
                .iter()
                .zip(&v)
                .zip(&mask)
                .filter(|(_, &keep)| keep)
                .map(|((a, c), _)| (*a, *c))
                .unzip();
            let (s, b) = ols(&iu, &iv).unwrap_or((s, b));
            (s, b, mask)
        }
    };
    if !slope.is_finite() {
        return Err(Error::DegenerateFit);
    }
    Ok(SlopeFit {
        slope,
        intercept,
        method,
        window,
        inlier_mask,
        dropped,
        residual_threshold: params.residual_threshold,
        iterations: params.iterations,
        seed: params.seed,
    })
}

/// A dimension estimate together with the fit it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub dimension: f64,
    pub fit: SlopeFit,
}

/// Slopes at or below this are treated as "no decay": dimension `+inf`.
pub const FLAT_SLOPE_TOL: f64 = 1e-12;

/// Effective dimension from widths `w_0, w_1, ...` (index = `t`): the
/// reciprocal slope of `-ln w_t` against `ln t` over `window`. `t = 0` and
/// nonpositive widths are dropped.
pub fn effective_dimension(
    widths: &[f64],
    window: Window,
    method: FitMethod,
    params: &RansacParams,
) -> Result<DimensionEstimate> {
    let ts: Vec<f64> = (0..widths.len()).map(|t| t as f64).collect();
    let inv: Vec<f64> = widths
        .iter()
        .map(|&w| if w > 0.0 { 1.0 / w } else { 0.0 })
        .collect();
    let fit = fit_loglog(&ts, &inv, window, method, params)?;
    let dimension = if fit.slope <= FLAT_SLOPE_TOL {
        f64::INFINITY
    } else {
        1.0 / fit.slope
    };
    Ok(DimensionEstimate { dimension, fit })
}

/// Metric dimension from a covering curve `(n, eps(n))`: the slope of `ln n`
/// against `ln(1/eps)` over `window`.
pub fn metric_dimension(
    curve: &[(f64, f64)],
    window: Window,
    method: FitMethod,
    params: &RansacParams,
) -> Result<DimensionEstimate> {
    let inv_eps: Vec<f64> = curve
        .iter()
        .map(|&(_, e)| if e > 0.0 { 1.0 / e } else { 0.0 })
        .collect();
    let counts: Vec<f64> = curve.iter().map(|&(n, _)| n).collect();
    let fit = fit_loglog(&inv_eps, &counts, window, method, params)?;
    Ok(DimensionEstimate {
        dimension: fit.slope,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_law() -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let ys = xs.iter().map(|x| x.powf(-0.5)).collect();
        (xs, ys)
    }

    #[test]
    fn exact_power_law_either_method() {
        let (xs, ys) = power_law();
        for method in [FitMethod::Ols, FitMethod::Ransac] {
            let fit = fit_loglog(&xs, &ys, Window::new(0, 99), method, &RansacParams::default())
                .unwrap();
            assert!((fit.slope + 0.5).abs() < 1e-12, "{method:?}: {}", fit.slope);
            assert!(fit.intercept.abs() < 1e-12);
        }
    }

    #[test]
    fn ransac_rejects_corrupted_points() {
        let (xs, mut ys) = power_law();
        for i in (0..100).step_by(10) {
            ys[i] *= 100.0;
        }
        let params = RansacParams {
            iterations: 500,
            residual_threshold: 0.1,
            seed: 1,
        };
        let fit = fit_loglog(&xs, &ys, Window::new(0, 99), FitMethod::Ransac, &params).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-6);
        assert_eq!(fit.inliers(), 90);
        for i in (0..100).step_by(10) {
            assert!(!fit.inlier_mask[i]);
        }
        let ols = fit_loglog(&xs, &ys, Window::new(0, 99), FitMethod::Ols, &params).unwrap();
        assert!((ols.slope + 0.5).abs() > 1e-3);
    }

    #[test]
    fn constant_ordinate_has_zero_slope() {
        let xs: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let ys = vec![3.0; xs.len()];
        for method in [FitMethod::Ols, FitMethod::Ransac] {
            let fit = fit_loglog(&xs, &ys, Window::new(0, 18), method, &RansacParams::default())
                .unwrap();
            assert_eq!(fit.slope, 0.0);
        }
    }

    #[test]
    fn errors() {
        let p = RansacParams::default();
        assert!(matches!(
            fit_loglog(&[1.0, 2.0], &[0.0, 1.0], Window::new(0, 1), FitMethod::Ols, &p),
            Err(Error::TooFewPoints(1))
        ));
        assert!(matches!(
            fit_loglog(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], Window::new(0, 2), FitMethod::Ransac, &p),
            Err(Error::DegenerateFit)
        ));
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, 2.0], Window::new(0, 2), FitMethod::Ols, &p).is_err());
    }

    #[test]
    fn nonpositive_values_are_dropped() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 0.0, 1.0 / 9.0, 1.0 / 16.0];
        let fit =
            fit_loglog(&xs, &ys, Window::new(0, 3), FitMethod::Ols, &RansacParams::default())
                .unwrap();
        assert_eq!(fit.dropped, 1);
        assert!((fit.slope + 2.0).abs() < 1e-12);
    }

    #[test]
    fn effective_dimension_examples() {
        let widths: Vec<f64> = (0..200).map(|t| (t.max(1) as f64).powf(-0.5)).collect();
        let est =
            effective_dimension(&widths, Window::new(1, 199), FitMethod::Ols, &RansacParams::default())
                .unwrap();
        assert!((est.dimension - 2.0).abs() < 1e-10);

        let widths: Vec<f64> = (0..=300).map(|t| (-(t as f64)).exp()).collect();
        let est = effective_dimension(
            &widths,
            Window::new(50, 300),
            FitMethod::Ols,
            &RansacParams::default(),
        )
        .unwrap();
        assert!(est.dimension < 0.2, "{}", est.dimension);

        let flat = vec![0.5; 100];
        let est =
            effective_dimension(&flat, Window::new(10, 99), FitMethod::Ols, &RansacParams::default())
                .unwrap();
        assert_eq!(est.dimension, f64::INFINITY);
    }

    #[test]
    fn metric_dimension_of_power_law_cover() {
        let curve: Vec<(f64, f64)> = (1..=500).map(|n| (n as f64, (n as f64).powf(-1.0 / 3.0))).collect();
        for method in [FitMethod::Ols, FitMethod::Ransac] {
            let est = metric_dimension(&curve, Window::new(0, 499), method, &RansacParams::default())
                .unwrap();
            assert!((est.dimension - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn default_windows() {
        assert_eq!(Window::default_for(1000), Window::new(300, 500));
        assert_eq!(Window::default_for(500), Window::new(300, 499));
        assert_eq!(Window::default_for(300), Window::new(150, 299));
        assert_eq!(Window::default_for(301), Window::new(151, 300));
        assert_eq!("3:7".parse::<Window>().unwrap(), Window::new(3, 7));
        assert!("7:3".parse::<Window>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaling_ys_moves_only_the_intercept(
                exponent in -3.0f64..3.0,
                scale in 1e-3f64..1e3,
                n in 5usize..60,
            ) {
                let xs: Vec<f64> = (1..=n).map(|i| i as f64 * 1.3).collect();
                let ys: Vec<f64> = xs.iter().map(|x| x.powf(exponent) * (1.0 + 0.1 * (x * 7.0).sin())).collect();
                let scaled: Vec<f64> = ys.iter().map(|y| y * scale).collect();
                let w = Window::new(0, n - 1);
                let p = RansacParams::default();
                for method in [FitMethod::Ols, FitMethod::Ransac] {
                    let a = fit_loglog(&xs, &ys, w, method, &p).unwrap();
                    let b = fit_loglog(&xs, &scaled, w, method, &p).unwrap();
                    prop_assert!((a.slope - b.slope).abs() < 1e-12);
                    prop_assert!((b.intercept - a.intercept - scale.ln()).abs() < 1e-9);
                }
            }

            #[test]
            fn ols_recovers_noiseless_exponents(exponent in -4.0f64..4.0, n in 3usize..200) {
                let xs: Vec<f64> = (1..=n).map(|i| i as f64).collect();
                let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x.powf(exponent)).collect();
                let fit = fit_loglog(&xs, &ys, Window::new(0, n - 1), FitMethod::Ols, &RansacParams::default()).unwrap();
                prop_assert!((fit.slope - exponent).abs() < 1e-10);
            }

            #[test]
            fn ransac_is_deterministic(seed in 0u64..1000) {
                let xs: Vec<f64> = (1..=80).map(|i| i as f64).collect();
                let ys: Vec<f64> = xs.iter().map(|x| x.powf(-0.7) * (1.0 + 0.3 * (x * 3.1).sin())).collect();
                let p = RansacParams { seed, ..RansacParams::default() };
                let a = fit_loglog(&xs, &ys, Window::new(0, 79), FitMethod::Ransac, &p).unwrap();
                let b = fit_loglog(&xs, &ys, Window::new(0, 79), FitMethod::Ransac, &p).unwrap();
                prop_assert_eq!(a.inlier_mask, b.inlier_mask);
                prop_assert_eq!(a.slope, b.slope);
            }
        }
    }
}
