//! Eigenvalues of the normalised empirical Gram matrix and the width bounds
//! they imply.
//!
//! For the uniform measure on `M` points the kernel integral operator is the
//! matrix `(1/M) [K(x_i, x_j)]`. Its eigenvalue tails give the lower bounds
//! `w^L_n = sqrt(sum_{i>n} lambda_i)` on the n-widths, and its eigenvalues are
//! bounded above by the greedy widths through `n lambda_{2n} <= w_n^2`.

use faer::Side;

use crate::error::{invalid, Error, Result};
use crate::greedy::GreedyRun;
use crate::kernels::{Kernel, KernelSpec};
use crate::points::PointSet;

/// Descending eigenvalues of `(1/M) Gram`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub source_size: usize,
    /// Number of negative round-off eigenvalues set to zero.
    pub negatives_clipped: usize,
    /// `|sum lambda - mean diagonal| / mean diagonal`, before clipping.
    pub trace_defect: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `lambda_i` with 1-based indexing; zero past the end.
    pub fn lambda(&self, i: usize) -> f64 {
        assert!(i >= 1, "eigenvalues are indexed from 1");
        self.eigenvalues.get(i - 1).copied().unwrap_or(0.0)
    }
}

/// Full symmetric eigendecomposition of the normalised Gram matrix.
pub fn gram_eigenvalues(spec: &KernelSpec, points: &PointSet) -> Result<Spectrum> {
    let m = points.len();
    if m == 0 {
        return Err(invalid("points", "need at least one point"));
    }
    let kernel = Kernel::new(spec, points.dim())?;
    kernel.check_points(points)?;
    let mut gram = kernel.gram_symmetric(points);
    let scale = 1.0 / m as f64;
    let mut trace = 0.0;
    for j in 0..m {
        for i in 0..m {
            let v = gram[(i, j)];
            if !v.is_finite() {
                return Err(Error::LinearAlgebra(format!(
                    "non-finite Gram entry at ({i}, {j})"
                )));
            }
            gram[(i, j)] = v * scale;
        }
        trace += gram[(j, j)];
    }
    let mut eigenvalues = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigensolver failed: {e:?}")))?;
    eigenvalues.reverse();

    let sum: f64 = eigenvalues.iter().sum();
    let trace_defect = if trace > 0.0 {
        (sum - trace).abs() / trace
    } else {
        sum.abs()
    };
    let mut negatives_clipped = 0;
    for v in &mut eigenvalues {
        if *v < 0.0 {
            *v = 0.0;
            negatives_clipped += 1;
        }
    }
    if negatives_clipped > 0 {
        log::debug!("clipped {negatives_clipped} negative eigenvalues");
    }
    Ok(Spectrum {
        eigenvalues,
        source_size: m,
        negatives_clipped,
        trace_defect,
    })
}

/// `w^L_n = sqrt(sum_{i>n} lambda_i)` for `n = 0..=n_max`.
pub fn ismagilov_lower_bounds(spectrum: &Spectrum, n_max: usize) -> Result<Vec<f64>> {
    let m = spectrum.len();
    if n_max >= m {
        return Err(invalid(
            "n_max",
            format!("must be below the spectrum size {m}, got {n_max}"),
        ));
    }
    // tails[n] = sum of eigenvalues[n..], accumulated from the smallest.
    let mut tails = vec![0.0; m + 1];
    for i in (0..m).rev() {
        tails[i] = tails[i + 1] + spectrum.eigenvalues[i];
    }
    Ok(tails[..=n_max].iter().map(|t| t.sqrt()).collect())
}

/// Per-step comparison of the spectral bounds against the greedy widths.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichRow {
    pub n: usize,
    pub width: f64,
    /// `n * lambda_{2n}`, the lower side of `n lambda_{2n} <= w_n^2`.
    pub scaled_eigenvalue: f64,
    /// `w^L_n`.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    /// `max_n (n lambda_{2n} - w_n^2)`, or 0 when never positive.
    pub eigenvalue_violation: f64,
    /// `max_n (w^L_n - w_n)`, or 0 when never positive.
    pub tail_violation: f64,
}

impl SandwichReport {
    /// Both checks hold within `rel_tol` of `w_0^2` and `w_0` respectively.
    pub fn holds(&self, rel_tol: f64) -> bool {
        let w0 = self.rows.first().map(|r| r.width).unwrap_or(0.0);
        self.eigenvalue_violation <= rel_tol * w0 * w0 && self.tail_violation <= rel_tol * w0
    }

    /// Violations restricted to `n < n_end`.
    pub fn violations_below(&self, n_end: usize) -> (f64, f64) {
        self.rows
            .iter()
            .filter(|r| r.n < n_end)
            .fold((0.0f64, 0.0f64), |(a, b), r| {
                (
                    a.max(r.scaled_eigenvalue - r.width * r.width),
                    b.max(r.tail_bound - r.width),
                )
            })
    }
}

/// Checks `n lambda_{2n} <= w_n^2` and `w^L_n <= w_n` for every step of the run.
///
/// A truncated run only reports its pre-truncation steps.
pub fn sandwich_report(spectrum: &Spectrum, run: &GreedyRun) -> Result<SandwichReport> {
    if run.residual.len() != spectrum.source_size {
        return Err(Error::Mismatch(format!(
            "greedy run covers {} points but the spectrum was computed on {}",
            run.residual.len(),
            spectrum.source_size
        )));
    }
    if run.is_empty() {
        return Err(invalid("run", "no widths"));
    }
    let n_end = run.len().min(spectrum.len());
    let tails = ismagilov_lower_bounds(spectrum, n_end - 1)?;
    let rows: Vec<SandwichRow> = (0..n_end)
        .map(|n| SandwichRow {
            n,
            width: run.widths[n],
            scaled_eigenvalue: if n == 0 {
                0.0
            } else {
                n as f64 * spectrum.lambda(2 * n)
            },
            tail_bound: tails[n],
        })
        .collect();
    let mut report = SandwichReport {
        rows,
        eigenvalue_violation: 0.0,
        tail_violation: 0.0,
    };
    let (a, b) = report.violations_below(n_end);
    report.eigenvalue_violation = a;
    report.tail_violation = b;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::sample_sphere;
    use crate::greedy::greedy_widths;

    #[test]
    fn single_point_has_unit_eigenvalue() {
        let pts = PointSet::from_rows(&[[0.3, -0.2]], "one").unwrap();
        let s = gram_eigenvalues(&KernelSpec::laplace(1.0), &pts).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0]);
        assert_eq!(ismagilov_lower_bounds(&s, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn two_point_eigenvalues_match_closed_form() {
        for r in [0.01, 0.5, 1.0, 3.0] {
            let pts = PointSet::from_rows(&[[0.0, 0.0], [r, 0.0]], "two").unwrap();
            let s = gram_eigenvalues(&KernelSpec::laplace(1.0), &pts).unwrap();
            let e = (-r).exp();
            assert!((s.eigenvalues[0] - (1.0 + e) / 2.0).abs() < 1e-12);
            assert!((s.eigenvalues[1] - (1.0 - e) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_identity_on_sphere() {
        let pts = sample_sphere(200, 3, 9).unwrap();
        for spec in [KernelSpec::laplace(1.0), KernelSpec::ntk_relu()] {
            let s = gram_eigenvalues(&spec, &pts).unwrap();
            assert!(s.trace_defect < 1e-8, "{}", s.trace_defect);
            let k = Kernel::new(&spec, 3).unwrap();
            let mean_diag: f64 = pts.iter().map(|x| k.diag(x)).sum::<f64>() / 200.0;
            let sum: f64 = s.eigenvalues.iter().sum();
            assert!((sum - mean_diag).abs() <= 1e-8 * mean_diag);
            assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            assert!(s.eigenvalues.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn lower_bound_endpoints() {
        let pts = sample_sphere(40, 3, 1).unwrap();
        let s = gram_eigenvalues(&KernelSpec::laplace(1.0), &pts).unwrap();
        let lb = ismagilov_lower_bounds(&s, 39).unwrap();
        let trace: f64 = s.eigenvalues.iter().sum();
        assert!((lb[0] - trace.sqrt()).abs() < 1e-14);
        assert!((lb[39] - s.eigenvalues[39].sqrt()).abs() < 1e-14);
        assert!(lb.windows(2).all(|w| w[0] >= w[1]));
        assert!(ismagilov_lower_bounds(&s, 40).is_err());
    }

    #[test]
    fn sandwich_holds_on_sphere() {
        let pts = sample_sphere(300, 3, 2).unwrap();
        for spec in [KernelSpec::laplace(1.0), KernelSpec::gaussian(1.0)] {
            let s = gram_eigenvalues(&spec, &pts).unwrap();
            let run = greedy_widths(&spec, &pts, 60, None).unwrap();
            let report = sandwich_report(&s, &run).unwrap();
            assert!(report.holds(1e-8), "{spec}: {report:?}");
            assert_eq!(report.rows.len(), run.len());
        }
    }

    #[test]
    fn sandwich_single_point_and_mismatch() {
        let pts = PointSet::from_rows(&[[0.5]], "one").unwrap();
        let spec = KernelSpec::laplace(1.0);
        let s = gram_eigenvalues(&spec, &pts).unwrap();
        let run = greedy_widths(&spec, &pts, 1, None).unwrap();
        let report = sandwich_report(&s, &run).unwrap();
        assert_eq!(report.rows[0].tail_bound, report.rows[0].width);
        assert!(report.holds(0.0));

        let other = PointSet::from_rows(&[[0.5], [0.7]], "two").unwrap();
        let run2 = greedy_widths(&spec, &other, 1, None).unwrap();
        assert!(matches!(sandwich_report(&s, &run2), Err(Error::Mismatch(_))));
    }

    #[test]
    fn truncated_run_reports_only_its_steps() {
        let pts = PointSet::from_rows(&[[0.0], [0.0], [1.0]], "dup").unwrap();
        let spec = KernelSpec::laplace(1.0);
        let s = gram_eigenvalues(&spec, &pts).unwrap();
        let run = greedy_widths(&spec, &pts, 3, None).unwrap();
        assert_eq!(run.truncated_at, Some(2));
        let report = sandwich_report(&s, &run).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.holds(1e-8));
    }

    #[test]
    fn eigenvalues_move_continuously() {
        let pts = sample_sphere(60, 3, 3).unwrap();
        let delta = 1e-4;
        let shifted: Vec<f64> = pts
            .as_flat()
            .iter()
            .enumerate()
            .map(|(i, v)| v + delta * ((i % 7) as f64 / 7.0 - 0.5))
            .collect();
        let moved = PointSet::from_flat(3, shifted, "moved").unwrap();
        let spec = KernelSpec::laplace(1.0);
        let k = Kernel::new(&spec, 3).unwrap();
        let (g0, g1) = (k.gram_symmetric(&pts), k.gram_symmetric(&moved));
        let mut max_dk = 0.0f64;
        for i in 0..60 {
            for j in 0..60 {
                max_dk = max_dk.max((g0[(i, j)] - g1[(i, j)]).abs());
            }
        }
        let a = gram_eigenvalues(&spec, &pts).unwrap();
        let b = gram_eigenvalues(&spec, &moved).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() <= 10.0 * 60.0 * max_dk);
            // Weyl for the normalised matrix: |d lambda| <= ||dG / M||_2 <= max |dK|.
            assert!((x - y).abs() <= max_dk + 1e-15);
        }
    }
}
