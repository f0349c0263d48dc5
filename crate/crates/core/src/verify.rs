//! Cross-module invariant checks on one finite instance.
//!
//! Each check compares two independent computations of the same quantity,
//! or a quantity against a bound that holds in exact arithmetic:
//!
//! - widths are nonincreasing;
//! - `det K[X_T, X_T] = prod w_t^2`;
//! - `sqrt S_t(x) - sqrt S_t(y) <= rho(x, y)`;
//! - the Cholesky-downdate engine agrees with the explicit-inverse engine;
//! - `n lambda_{2n} <= w_n^2` and `sqrt(sum_{i>n} lambda_i) <= w_n`;
//! - `w_t` is at most the covering radius of the first `t` cover centers.

use std::fmt;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domains::{generate_cantor, sample_sphere};
use crate::error::{invalid, Result};
use crate::greedy::{cover_curve, greedy_widths, reference, residual_at, GreedyRun};
use crate::kernels::{Kernel, KernelSpec};
use crate::points::PointSet;
use crate::spectral::{gram_eigenvalues, sandwich_report};

pub const DET_REL_TOL: f64 = 1e-6;
pub const LIPSCHITZ_SLACK: f64 = 1e-9;
pub const LIPSCHITZ_PAIRS: usize = 1000;
pub const ENGINE_REL_TOL: f64 = 1e-6;
pub const SANDWICH_TOL: f64 = 1e-8;
pub const COVER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed violation in the check's own units (<= 0 is clean).
    pub worst: f64,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<12} worst={:.3e} {}", self.name, self.worst, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub label: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &'static str, worst: f64, limit: f64, detail: String) -> Check {
    Check {
        name,
        passed: worst <= limit,
        worst,
        detail,
    }
}

fn monotonicity(run: &GreedyRun) -> Check {
    let worst = run
        .widths
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    check("monotone", worst, 0.0, format!("steps={}", run.len()))
}

/// `|ln det G_T - sum ln w_t^2|` against `ln(1 + DET_REL_TOL)`, with the
/// determinant from an independent LU factorisation.
fn determinant(kernel: &Kernel, points: &PointSet, run: &GreedyRun) -> Check {
    let sel = points.select(&run.selected);
    let g: Mat<f64> = kernel.gram_symmetric(&sel);
    let lu = g.partial_piv_lu();
    let u = lu.U();
    let mut log_det = 0.0;
    let mut sign_ok = true;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        sign_ok &= d != 0.0;
        log_det += d.abs().ln();
    }
    let diff = if sign_ok {
        (log_det - run.log_det()).abs()
    } else {
        f64::INFINITY
    };
    // exp(diff) - 1 is the relative determinant error.
    let rel = diff.exp_m1();
    check(
        "det",
        rel,
        DET_REL_TOL,
        format!("ln det={log_det:.6} sum ln w^2={:.6}", run.log_det()),
    )
}

fn lipschitz(
    spec: &KernelSpec,
    kernel: &Kernel,
    points: &PointSet,
    run: &GreedyRun,
    rng: &mut ChaCha8Rng,
) -> Result<Check> {
    let n = points.len();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..LIPSCHITZ_PAIRS {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        let t = rng.random_range(0..=run.len());
        let (x, y) = (points.point(i), points.point(j));
        let sx = residual_at(run, spec, points, t, x)?.sqrt();
        let sy = residual_at(run, spec, points, t, y)?.sqrt();
        worst = worst.max(sx - sy - kernel.distance(x, y));
    }
    Ok(check(
        "lipschitz",
        worst,
        LIPSCHITZ_SLACK,
        format!("pairs={LIPSCHITZ_PAIRS}"),
    ))
}

fn engines(spec: &KernelSpec, points: &PointSet, run: &GreedyRun) -> Result<Check> {
    let (sel, widths) = reference::explicit_inverse_widths(spec, points, run.len(), None)?;
    let common = widths.len().min(run.len());
    let mut worst = 0.0f64;
    for (w, r) in widths.iter().zip(&run.widths).take(common) {
        worst = worst.max((w - r).abs() / r);
    }
    let same_len = widths.len() == run.len();
    let agree_prefix = sel
        .iter()
        .zip(&run.selected)
        .take_while(|(a, b)| a == b)
        .count();
    Ok(check(
        "engines",
        if same_len { worst } else { f64::INFINITY },
        ENGINE_REL_TOL,
        format!(
            "steps {} vs {}, identical selections for {agree_prefix} steps",
            run.len(),
            widths.len()
        ),
    ))
}

fn sandwich(spec: &KernelSpec, points: &PointSet, run: &GreedyRun) -> Result<Vec<Check>> {
    let spectrum = gram_eigenvalues(spec, points)?;
    let report = sandwich_report(&spectrum, run)?;
    let half = run.len().div_ceil(2);
    let (eig, tail) = report.violations_below(half);
    Ok(vec![
        check(
            "eigen-upper",
            eig,
            SANDWICH_TOL,
            format!("n < {half}, max n*lambda_2n - w_n^2"),
        ),
        check(
            "tail-lower",
            tail,
            SANDWICH_TOL,
            format!("n < {half}, max wL_n - w_n; trace defect {:.1e}", spectrum.trace_defect),
        ),
    ])
}

fn cover_bound(spec: &KernelSpec, points: &PointSet, run: &GreedyRun) -> Result<Check> {
    let cover = cover_curve(spec, points, run.len().max(1))?;
    let mut worst = f64::NEG_INFINITY;
    for t in 1..run.len().min(cover.radii.len() + 1) {
        worst = worst.max(run.widths[t] - cover.radii[t - 1]);
    }
    Ok(check(
        "cover-bound",
        worst,
        COVER_SLACK,
        "max w_t - eps(t centers)".to_string(),
    ))
}

/// Runs every check on `points` with `steps` greedy steps.
pub fn verify_instance(
    spec: &KernelSpec,
    points: &PointSet,
    steps: usize,
    seed: u64,
) -> Result<VerifyReport> {
    let kernel = Kernel::new(spec, points.dim())?;
    kernel.check_points(points)?;
    let run = greedy_widths(spec, points, steps, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![
        monotonicity(&run),
        determinant(&kernel, points, &run),
        lipschitz(spec, &kernel, points, &run, &mut rng)?,
        engines(spec, points, &run)?,
    ];
    checks.extend(sandwich(spec, points, &run)?);
    checks.push(cover_bound(spec, points, &run)?);
    Ok(VerifyReport {
        label: format!("{} on {} (N={}, T={steps})", spec, points.label(), points.len()),
        checks,
    })
}

/// Named instance for `verify_instance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub spec: KernelSpec,
    pub steps: usize,
    source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Sphere { n: usize, d: usize, seed: u64 },
    Cantor { level: u32 },
}

impl Preset {
    pub fn points(&self) -> Result<PointSet> {
        match self.source {
            Source::Sphere { n, d, seed } => sample_sphere(n, d, seed),
            Source::Cantor { level } => generate_cantor(level),
        }
    }

    pub fn run(&self, seed: u64) -> Result<VerifyReport> {
        verify_instance(&self.spec, &self.points()?, self.steps, seed)
    }
}

pub fn presets() -> Vec<Preset> {
    let sphere = Source::Sphere {
        n: 300,
        d: 3,
        seed: 0,
    };
    vec![
        Preset {
            name: "sphere-laplace-small",
            spec: KernelSpec::laplace(1.0),
            steps: 60,
            source: sphere,
        },
        Preset {
            name: "sphere-gaussian-small",
            spec: KernelSpec::gaussian(1.0),
            steps: 60,
            source: sphere,
        },
        Preset {
            name: "sphere-ntk-small",
            spec: KernelSpec::ntk_relu(),
            steps: 60,
            source: sphere,
        },
        Preset {
            name: "cantor-laplace-small",
            spec: KernelSpec::laplace(1.0),
            steps: 60,
            source: Source::Cantor { level: 8 },
        },
    ]
}

pub fn preset(name: &str) -> Result<Preset> {
    presets().into_iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = presets().iter().map(|p| p.name).collect();
        invalid("preset", format!("unknown `{name}`; known: {}", names.join(", ")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_passes() {
        for p in presets() {
            let report = p.run(0).unwrap();
            for c in &report.checks {
                assert!(c.passed, "{}: {c}", p.name);
            }
        }
    }

    #[test]
    fn unknown_preset_is_reported() {
        let err = preset("nope").unwrap_err().to_string();
        assert!(err.contains("sphere-laplace-small"), "{err}");
    }

    #[test]
    fn broken_run_fails_monotonicity() {
        let mut run = greedy_widths(
            &KernelSpec::laplace(1.0),
            &sample_sphere(20, 3, 1).unwrap(),
            5,
            None,
        )
        .unwrap();
        run.widths[3] = 2.0;
        assert!(!monotonicity(&run).passed);
    }
}
