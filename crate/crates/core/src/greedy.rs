//! Greedy n-width upper bounds and metric coverings.
//!
//! [`greedy_widths`] selects kernel sections one at a time, each time taking
//! the candidate whose section is farthest (in the RKHS) from the span of the
//! sections chosen so far. The squared distance of a candidate `x` to that
//! span is the residual `S_t(x)`; the largest residual at step `t` is `w_t^2`,
//! an upper bound on the squared Kolmogorov t-width of the candidate set.
//!
//! The residuals are maintained as a pivoted Cholesky factorisation: the
//! factor column of step `t` is
//! `c_t(x) = (K(x_t, x) - sum_{j<t} c_j(x_t) c_j(x)) / w_{t-1}` and
//! `S_t(x) = S_{t-1}(x) - c_t(x)^2`. Only one kernel row is evaluated per step.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::kernels::{clamp_nonneg, Kernel, KernelSpec};
use crate::points::PointSet;

/// Default pivot tolerance relative to `w_0`, in width units.
pub const DEFAULT_RELATIVE_PIVOT_TOL: f64 = 1e-6;

/// Output of the greedy width engine.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    /// Indices of the selected points, in selection order.
    pub selected: Vec<usize>,
    /// `w_0 >= w_1 >= ...`, one per selected point.
    pub widths: Vec<f64>,
    /// Row `t` of the lower Cholesky factor of the selected-point Gram matrix
    /// (length `t + 1`).
    pub chol_rows: Vec<Vec<f64>>,
    /// Residual `S_T(x)` of every candidate after the last step.
    pub residual: Vec<f64>,
    /// Step at which the largest residual fell below the pivot tolerance.
    pub truncated_at: Option<usize>,
}

impl GreedyRun {
    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    /// `ln det K[X_T, X_T]` from the Cholesky diagonal, i.e. `sum_t ln w_t^2`.
    pub fn log_det(&self) -> f64 {
        self.widths.iter().map(|w| 2.0 * w.ln()).sum()
    }

    /// `(t, w_t)` pairs for the dimension fits.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.widths
            .iter()
            .enumerate()
            .map(|(t, &w)| (t as f64, w))
            .collect()
    }
}

/// `(value, index)` maximum with ties going to the lowest index.
fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| (i, v))
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        )
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the greedy width engine for at most `steps` selections.
///
/// `pivot_tol` is in width units: the run stops once the largest residual is
/// below `pivot_tol^2`. The default is `1e-6 * w_0`.
pub fn greedy_widths(
    spec: &KernelSpec,
    points: &PointSet,
    steps: usize,
    pivot_tol: Option<f64>,
) -> Result<GreedyRun> {
    let n = points.len();
    if n == 0 {
        return Err(invalid("points", "need at least one point"));
    }
    if steps == 0 || steps > n {
        return Err(invalid(
            "steps",
            format!("must lie in 1..={n} for {n} points, got {steps}"),
        ));
    }
    if let Some(tol) = pivot_tol {
        if !(tol > 0.0) {
            return Err(invalid("pivot_tol", format!("must be positive, got {tol}")));
        }
    }
    let kernel = Kernel::new(spec, points.dim())?;
    kernel.check_points(points)?;

    let mut residual: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| kernel.diag(points.point(i)))
        .collect();
    // Candidate-major factor storage: row i holds c_0(x_i), ..., c_{T-1}(x_i).
    let mut factors = vec![0.0; n * steps];
    let mut selected = Vec::with_capacity(steps);
    let mut widths = Vec::with_capacity(steps);
    let mut chol_rows = Vec::with_capacity(steps);
    let mut truncated_at = None;
    let mut tol_sq = 0.0;

    for t in 0..steps {
        let (pivot, s) = argmax(&residual);
        if !s.is_finite() {
            return Err(Error::NonFinite { step: t });
        }
        if t == 0 {
            let tol = pivot_tol.unwrap_or(DEFAULT_RELATIVE_PIVOT_TOL * s.sqrt());
            tol_sq = tol * tol;
        }
        if s <= 0.0 || s < tol_sq {
            truncated_at = Some(t);
            break;
        }
        let w = s.sqrt();
        selected.push(pivot);
        widths.push(w);

        let xp = points.point(pivot);
        let fp: Vec<f64> = factors[pivot * steps..pivot * steps + t].to_vec();
        factors
            .par_chunks_mut(steps)
            .zip(residual.par_iter_mut())
            .enumerate()
            .for_each(|(i, (row, res))| {
                let c = (kernel.eval(xp, points.point(i)) - dot(&fp, &row[..t])) / w;
                row[t] = c;
                *res = clamp_nonneg(*res - c * c);
            });
        factors[pivot * steps + t] = w;
        residual[pivot] = 0.0;
        chol_rows.push(factors[pivot * steps..pivot * steps + t + 1].to_vec());
    }

    Ok(GreedyRun {
        selected,
        widths,
        chol_rows,
        residual,
        truncated_at,
    })
}

/// `S_t(x)`: squared RKHS distance from `K(x, .)` to the span of the first `t`
/// selected sections, computed by forward substitution with the run's factor.
pub fn residual_at(
    run: &GreedyRun,
    spec: &KernelSpec,
    points: &PointSet,
    t: usize,
    x: &[f64],
) -> Result<f64> {
    if t > run.len() {
        return Err(invalid(
            "t",
            format!("run has {} steps, asked for {t}", run.len()),
        ));
    }
    let kernel = Kernel::new(spec, points.dim())?;
    kernel.check_point(x)?;
    let mut z = Vec::with_capacity(t);
    for (j, row) in run.chol_rows.iter().take(t).enumerate() {
        let k = kernel.eval(points.point(run.selected[j]), x);
        z.push((k - dot(&row[..j], &z)) / row[j]);
    }
    Ok(clamp_nonneg(kernel.diag(x) - dot(&z, &z)))
}

/// Farthest-point traversal in the canonical metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    /// Center indices in insertion order; the first is index 0.
    pub centers: Vec<usize>,
    /// `radii[k]` is the covering radius of the first `k + 1` centers.
    pub radii: Vec<f64>,
}

impl Cover {
    pub fn radius(&self) -> f64 {
        *self.radii.last().expect("a cover has at least one center")
    }

    /// `(n, eps(n))` pairs for the metric-dimension fit.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.radii
            .iter()
            .enumerate()
            .map(|(k, &r)| ((k + 1) as f64, r))
            .collect()
    }
}

fn farthest_point_traversal(
    kernel: &Kernel,
    points: &PointSet,
    mut done: impl FnMut(usize, f64) -> bool,
) -> Cover {
    let n = points.len();
    let diag: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| kernel.diag(points.point(i)))
        .collect();
    let mut nearest = vec![f64::INFINITY; n];
    let mut centers = Vec::new();
    let mut radii = Vec::new();
    let mut next = 0;
    loop {
        centers.push(next);
        let c = points.point(next);
        let kcc = diag[next];
        nearest
            .par_iter_mut()
            .zip(diag.par_iter())
            .enumerate()
            .for_each(|(i, (d, &kii))| {
                let rho = kernel.distance_with_diag(c, points.point(i), kcc, kii);
                if rho < *d {
                    *d = rho;
                }
            });
        nearest[next] = 0.0;
        let (far, radius) = argmax(&nearest);
        radii.push(radius);
        if centers.len() == n || done(centers.len(), radius) {
            break;
        }
        next = far;
    }
    Cover { centers, radii }
}

/// Greedy `epsilon`-cover: adds the farthest candidate until every point is
/// within `epsilon` of a center. Returns the centers and the radius achieved.
///
/// The traversal is a 2-approximation: its center count `m` satisfies
/// `N(epsilon) <= m <= N(epsilon / 2)`.
pub fn greedy_cover(
    spec: &KernelSpec,
    points: &PointSet,
    epsilon: f64,
) -> Result<(Vec<usize>, f64)> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if points.is_empty() {
        return Err(invalid("points", "need at least one point"));
    }
    let kernel = Kernel::new(spec, points.dim())?;
    kernel.check_points(points)?;
    let cover = farthest_point_traversal(&kernel, points, |_, r| r <= epsilon);
    let radius = cover.radius();
    Ok((cover.centers, radius))
}

/// Covering radii `eps(n)` of the first `max_centers` farthest-point centers.
pub fn cover_curve(spec: &KernelSpec, points: &PointSet, max_centers: usize) -> Result<Cover> {
    if max_centers == 0 {
        return Err(invalid("max_centers", "must be positive"));
    }
    if points.is_empty() {
        return Err(invalid("points", "need at least one point"));
    }
    let kernel = Kernel::new(spec, points.dim())?;
    kernel.check_points(points)?;
    Ok(farthest_point_traversal(&kernel, points, |k, _| {
        k >= max_centers
    }))
}

/// `max_{x in ambient} min_{c in centers} rho(x, reference[c])`.
pub fn net_radius(
    spec: &KernelSpec,
    ambient: &PointSet,
    reference: &PointSet,
    centers: &[usize],
) -> Result<f64> {
    if centers.is_empty() {
        return Err(invalid("centers", "need at least one center"));
    }
    if let Some(&bad) = centers.iter().find(|&&c| c >= reference.len()) {
        return Err(invalid(
            "centers",
            format!("index {bad} out of range for {} points", reference.len()),
        ));
    }
    let kernel = Kernel::new(spec, ambient.dim())?;
    kernel.check_points(ambient)?;
    kernel.check_points(reference)?;
    let center_diag: Vec<f64> = centers
        .iter()
        .map(|&c| kernel.diag(reference.point(c)))
        .collect();
    let radius = (0..ambient.len())
        .into_par_iter()
        .map(|i| {
            let x = ambient.point(i);
            let kxx = kernel.diag(x);
            centers
                .iter()
                .zip(&center_diag)
                .map(|(&c, &kcc)| kernel.distance_with_diag(x, reference.point(c), kxx, kcc))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Ok(radius)
}

/// The explicit-inverse form of the greedy engine: `K[X_t, X_t]^{-1}` is
/// grown by the bordered-inverse (Schur complement) update and every residual
/// is recomputed as `K(x,x) - k^T K^{-1} k`. Quadratically more arithmetic
/// than [`greedy_widths`]; kept as an independent cross-check.
pub mod reference {
    use super::*;

    /// Selected indices and widths, with the same tie-breaking and pivot
    /// tolerance rules as [`greedy_widths`].
    pub fn explicit_inverse_widths(
        spec: &KernelSpec,
        points: &PointSet,
        steps: usize,
        pivot_tol: Option<f64>,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        let n = points.len();
        if n == 0 || steps == 0 || steps > n {
            return Err(invalid("steps", format!("must lie in 1..={n}")));
        }
        let kernel = Kernel::new(spec, points.dim())?;
        kernel.check_points(points)?;
        let diag: Vec<f64> = points.iter().map(|p| kernel.diag(p)).collect();
        // cross[j][i] = K(x_{selected j}, x_i)
        let mut cross: Vec<Vec<f64>> = Vec::new();
        let mut inv: Vec<Vec<f64>> = Vec::new();
        let mut selected = Vec::new();
        let mut widths = Vec::new();
        let mut tol_sq = 0.0;

        for t in 0..steps {
            let scores: Vec<f64> = (0..n)
                .map(|i| {
                    let k: Vec<f64> = cross.iter().map(|row| row[i]).collect();
                    let quad: f64 = (0..t).map(|a| k[a] * dot(&inv[a], &k)).sum();
                    diag[i] - quad
                })
                .collect();
            let mut best = 0;
            for i in 1..n {
                if scores[i] > scores[best] {
                    best = i;
                }
            }
            let s = scores[best];
            if t == 0 {
                let tol = pivot_tol.unwrap_or(DEFAULT_RELATIVE_PIVOT_TOL * s.sqrt());
                tol_sq = tol * tol;
            }
            if s <= 0.0 || s < tol_sq {
                break;
            }
            selected.push(best);
            widths.push(s.sqrt());

            let xb = points.point(best);
            let k_new: Vec<f64> = cross.iter().map(|row| row[best]).collect();
            let a: Vec<f64> = inv.iter().map(|row| dot(row, &k_new)).collect();
            let mut grown = vec![vec![0.0; t + 1]; t + 1];
            for r in 0..t {
                for c in 0..t {
                    grown[r][c] = inv[r][c] + a[r] * a[c] / s;
                }
                grown[r][t] = -a[r] / s;
                grown[t][r] = -a[r] / s;
            }
            grown[t][t] = 1.0 / s;
            inv = grown;
            cross.push(points.iter().map(|p| kernel.eval(xb, p)).collect());
        }
        Ok((selected, widths))
    }
}
