//! Kernel evaluation, the canonical metric and Gram blocks.
//!
//! A [`KernelSpec`] is declarative. Evaluation goes through a [`Kernel`],
//! which is the spec prepared for one ambient dimension (for the finite-width
//! families that means sampling the hidden-layer weights once from the seed).

mod bessel;
mod spec;

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use bessel::bessel_k;
pub use spec::{Activation, Family, KernelSpec};

use crate::error::{Error, Result};
use crate::points::PointSet;

/// Tolerance on `| ||x|| - 1 |` accepted by the zonal families.
pub const UNIT_NORM_TOL: f64 = 1e-9;

static CLAMP_LOGGED: AtomicBool = AtomicBool::new(false);

/// Clamps a squared quantity that is nonnegative in exact arithmetic.
#[inline]
pub(crate) fn clamp_nonneg(v: f64) -> f64 {
    if v < 0.0 {
        if !CLAMP_LOGGED.swap(true, Ordering::Relaxed) {
            log::debug!("clamped negative radicand {v:e} to 0 (further clamps not logged)");
        }
        0.0
    } else {
        v
    }
}

#[derive(Debug, Clone)]
enum Evaluator {
    Exponential { gamma: f64, a: f64 },
    Matern { nu: f64, scale: f64, prefactor: f64 },
    NngpStep,
    NngpRelu,
    NtkRelu,
    Random {
        ntk: bool,
        activation: Activation,
        width: usize,
        /// Row-major `width x dim` standard normal weights.
        weights: Vec<f64>,
    },
}

/// A kernel ready to evaluate on points of one ambient dimension.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    dim: usize,
    eval: Evaluator,
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn zonal_angle_term(u: f64) -> (f64, f64) {
    let u = u.clamp(-1.0, 1.0);
    (PI - u.acos(), (1.0 - u * u).max(0.0).sqrt())
}

impl Kernel {
    pub fn new(spec: &KernelSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        if dim == 0 {
            return Err(crate::error::invalid("dim", "must be positive"));
        }
        let eval = match spec.family {
            Family::ExponentialType => Evaluator::Exponential {
                gamma: spec.gamma,
                a: spec.exponent_a,
            },
            Family::Matern => Evaluator::Matern {
                nu: spec.nu,
                scale: (2.0 * spec.nu).sqrt() / spec.length_l,
                prefactor: 2f64.powf(1.0 - spec.nu) / libm::tgamma(spec.nu),
            },
            Family::ZonalNngpStep => Evaluator::NngpStep,
            Family::ZonalNngpRelu => Evaluator::NngpRelu,
            Family::ZonalNtkRelu => Evaluator::NtkRelu,
            Family::RandomNngp1 | Family::RandomNtk1 => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                let weights = (0..spec.width_n1 * dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                Evaluator::Random {
                    ntk: spec.family == Family::RandomNtk1,
                    activation: spec.activation,
                    width: spec.width_n1,
                    weights,
                }
            }
        };
        Ok(Self {
            spec: spec.clone(),
            dim,
            eval,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Hidden-layer weight matrix of the finite-width families, row-major.
    pub fn hidden_weights(&self) -> Option<&[f64]> {
        match &self.eval {
            Evaluator::Random { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Checks dimension and, for zonal families, the unit norm of `x`.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.spec.family.is_zonal() {
            let norm = dot(x, x).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotUnitNorm { norm });
            }
        }
        Ok(())
    }

    pub fn check_points(&self, points: &PointSet) -> Result<()> {
        if points.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: points.dim(),
            });
        }
        points.iter().try_for_each(|p| self.check_point(p))
    }

    /// `K(x, y)` without input validation.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.eval {
            Evaluator::Exponential { gamma, a } => {
                let d2 = sq_dist(x, y);
                if *a == 2.0 {
                    (-gamma * d2).exp()
                } else if *a == 1.0 {
                    (-gamma * d2.sqrt()).exp()
                } else {
                    (-gamma * d2.powf(0.5 * a)).exp()
                }
            }
            Evaluator::Matern {
                nu,
                scale,
                prefactor,
            } => {
                let z = scale * sq_dist(x, y).sqrt();
                if z == 0.0 {
                    1.0
                } else {
                    (prefactor * z.powf(*nu) * bessel_k(*nu, z)).min(1.0)
                }
            }
            Evaluator::NngpStep => {
                let (angle, _) = zonal_angle_term(dot(x, y));
                angle / PI
            }
            Evaluator::NngpRelu => {
                let u = dot(x, y).clamp(-1.0, 1.0);
                let (angle, sine) = zonal_angle_term(u);
                (u * angle + sine) / PI
            }
            Evaluator::NtkRelu => {
                let u = dot(x, y).clamp(-1.0, 1.0);
                let (angle, sine) = zonal_angle_term(u);
                ((2.0 * u + 1.0) * angle + sine) / PI + 1.0
            }
            Evaluator::Random {
                ntk,
                activation,
                width,
                weights,
            } => {
                let mut nngp = 0.0;
                let mut grad = 0.0;
                for row in weights.chunks_exact(self.dim) {
                    let zx = dot(row, x);
                    let zy = dot(row, y);
                    nngp += activation.apply(zx) * activation.apply(zy);
                    if *ntk {
                        grad += activation.derivative(zx) * activation.derivative(zy);
                    }
                }
                let n1 = *width as f64;
                if *ntk {
                    nngp / n1 + dot(x, y) * grad / n1
                } else {
                    nngp / n1
                }
            }
        }
    }

    /// `K(x, x)`; constant for the stationary and zonal families.
    #[inline]
    pub fn diag(&self, x: &[f64]) -> f64 {
        match &self.eval {
            Evaluator::Exponential { .. } | Evaluator::Matern { .. } => 1.0,
            Evaluator::NngpStep | Evaluator::NngpRelu => 1.0,
            Evaluator::NtkRelu => 4.0,
            Evaluator::Random { .. } => self.eval(x, x),
        }
    }

    /// Canonical metric `sqrt(K(x,x) + K(y,y) - 2 K(x,y))`, radicand clamped at 0.
    #[inline]
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.distance_with_diag(x, y, self.diag(x), self.diag(y))
    }

    #[inline]
    pub(crate) fn distance_with_diag(&self, x: &[f64], y: &[f64], kxx: f64, kyy: f64) -> f64 {
        clamp_nonneg(kxx + kyy - 2.0 * self.eval(x, y)).sqrt()
    }

    /// Gram block `[K(x_i, y_j)]`.
    pub fn gram(&self, xs: &PointSet, ys: &PointSet) -> Mat<f64> {
        let (n, m) = (xs.len(), ys.len());
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = xs.point(i);
                (0..m).map(|j| self.eval(x, ys.point(j))).collect()
            })
            .collect();
        Mat::from_fn(n, m, |i, j| rows[i][j])
    }

    /// Symmetric Gram matrix of one set, each unordered pair evaluated once.
    pub fn gram_symmetric(&self, xs: &PointSet) -> Mat<f64> {
        let n = xs.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = xs.point(i);
                (i..n).map(|j| self.eval(x, xs.point(j))).collect()
            })
            .collect();
        Mat::from_fn(n, n, |i, j| {
            if i <= j {
                upper[i][j - i]
            } else {
                upper[j][i - j]
            }
        })
    }
}

/// `K(x, y)` with full input validation.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let kernel = Kernel::new(spec, x.len())?;
    kernel.check_point(x)?;
    kernel.check_point(y)?;
    Ok(kernel.eval(x, y))
}

/// Canonical pseudometric induced by the kernel.
pub fn canonical_distance(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let kernel = Kernel::new(spec, x.len())?;
    kernel.check_point(x)?;
    kernel.check_point(y)?;
    Ok(kernel.distance(x, y))
}

/// Gram block between two point sets. Passing the same set twice fills the
/// matrix symmetrically.
pub fn eval_gram(spec: &KernelSpec, xs: &PointSet, ys: &PointSet) -> Result<Mat<f64>> {
    let kernel = Kernel::new(spec, xs.dim())?;
    kernel.check_points(xs)?;
    if std::ptr::eq(xs, ys) {
        return Ok(kernel.gram_symmetric(xs));
    }
    kernel.check_points(ys)?;
    Ok(kernel.gram(xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = dot(&v, &v).sqrt();
        v.into_iter().map(|c| c / n).collect()
    }

    fn all_families() -> Vec<KernelSpec> {
        vec![
            KernelSpec::laplace(1.0),
            KernelSpec::gaussian(1.0),
            KernelSpec::exponential(2.0, 0.5),
            KernelSpec::matern(0.3, 0.7),
            KernelSpec::zonal(Family::ZonalNngpStep),
            KernelSpec::zonal(Family::ZonalNngpRelu),
            KernelSpec::ntk_relu(),
            KernelSpec::random_nngp(Activation::Tanh, 16, 3),
            KernelSpec::random_ntk(Activation::Relu, 16, 3),
            KernelSpec::random_ntk(Activation::Sigmoid, 8, 1),
            KernelSpec::random_nngp(Activation::Erf, 8, 1),
        ]
    }

    #[test]
    fn laplace_on_the_diagonal_is_one() {
        let k = eval_kernel(&KernelSpec::laplace(1.0), &[0.3, -0.2], &[0.3, -0.2]).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn ntk_relu_at_u_one_is_four() {
        let x = [0.0, 0.6, 0.8];
        assert_eq!(eval_kernel(&KernelSpec::ntk_relu(), &x, &x).unwrap(), 4.0);
        // u = -1: arccos = pi, sqrt = 0.
        let y = [0.0, -0.6, -0.8];
        let v = eval_kernel(&KernelSpec::ntk_relu(), &x, &y).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matern_half_is_laplace() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let matern = KernelSpec::matern(0.5, 1.0);
        let laplace = KernelSpec::laplace(1.0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = eval_kernel(&matern, &x, &y).unwrap();
            let b = eval_kernel(&laplace, &x, &y).unwrap();
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn matern_is_continuous_at_the_origin() {
        let k = Kernel::new(&KernelSpec::matern(0.25, 1.0), 1).unwrap();
        assert_eq!(k.eval(&[0.5], &[0.5]), 1.0);
        let near = k.eval(&[0.0], &[1e-12]);
        assert!(near <= 1.0 && near > 0.999, "{near}");
    }

    #[test]
    fn random_nngp_diagonal_matches_feature_map() {
        let spec = KernelSpec::random_nngp(Activation::Relu, 4, 7);
        let x = [0.6, 0.0, 0.8];
        // Brute force: regenerate the seeded weights and form the features.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
        let feat_sq: f64 = w
            .chunks_exact(3)
            .map(|row| dot(row, &x).max(0.0).powi(2))
            .sum();
        let got = eval_kernel(&spec, &x, &x).unwrap();
        assert!((got - feat_sq / 4.0).abs() < 1e-15);
    }

    #[test]
    fn random_ntk_adds_the_gradient_term() {
        let nngp = KernelSpec::random_nngp(Activation::Relu, 32, 5);
        let ntk = KernelSpec::random_ntk(Activation::Relu, 32, 5);
        let x = [1.0, 0.0];
        let y = [0.6, 0.8];
        let kernel = Kernel::new(&ntk, 2).unwrap();
        let w = kernel.hidden_weights().unwrap();
        let active: f64 = w
            .chunks_exact(2)
            .filter(|row| dot(row, &x) > 0.0 && dot(row, &y) > 0.0)
            .count() as f64;
        let expected = eval_kernel(&nngp, &x, &y).unwrap() + dot(&x, &y) * active / 32.0;
        assert!((eval_kernel(&ntk, &x, &y).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn random_families_are_reproducible() {
        let spec = KernelSpec::random_ntk(Activation::Tanh, 50, 9);
        let pts = PointSet::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]], "p").unwrap();
        let a = eval_gram(&spec, &pts, &pts).unwrap();
        let b = eval_gram(&spec, &pts, &pts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn canonical_distance_examples() {
        let spec = KernelSpec::laplace(1.0);
        assert_eq!(canonical_distance(&spec, &[0.4], &[0.4]).unwrap(), 0.0);
        let d = canonical_distance(&spec, &[0.0], &[2f64.ln()]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zonal_families_reject_non_unit_inputs() {
        let err = eval_kernel(&KernelSpec::ntk_relu(), &[1.0, 1.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotUnitNorm { .. }));
        assert!(eval_kernel(&KernelSpec::ntk_relu(), &[1.0 + 1e-10, 0.0], &[1.0, 0.0]).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = eval_kernel(&KernelSpec::laplace(1.0), &[1.0, 2.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
        let a = PointSet::from_rows(&[[0.0, 1.0]], "a").unwrap();
        let b = PointSet::from_rows(&[[0.0]], "b").unwrap();
        assert!(eval_gram(&KernelSpec::laplace(1.0), &a, &b).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(eval_kernel(&KernelSpec::laplace(-1.0), &[0.0], &[0.0]).is_err());
        assert!(eval_kernel(&KernelSpec::exponential(1.0, 2.5), &[0.0], &[0.0]).is_err());
        assert!(eval_kernel(&KernelSpec::matern(1.5, 1.0), &[0.0], &[0.0]).is_err());
        assert!(eval_kernel(&KernelSpec::random_nngp(Activation::Relu, 0, 1), &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn single_point_gram() {
        let pts = PointSet::from_rows(&[[0.25, 0.5]], "one").unwrap();
        let g = eval_gram(&KernelSpec::laplace(1.0), &pts, &pts).unwrap();
        assert_eq!((g.nrows(), g.ncols()), (1, 1));
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in all_families() {
            let rows: Vec<Vec<f64>> = (0..50).map(|_| random_unit(&mut rng, 3)).collect();
            let pts = PointSet::from_rows(&rows, "s").unwrap();
            let g = eval_gram(&spec, &pts, &pts).unwrap();
            for i in 0..50 {
                for j in 0..50 {
                    assert_eq!(g[(i, j)], g[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn laplace_gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..2).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let pts = PointSet::from_rows(&rows, "r").unwrap();
        let g = eval_gram(&KernelSpec::laplace(1.0), &pts, &pts).unwrap();
        let eig = g.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8, "{min}");
    }

    #[test]
    fn cauchy_schwarz_and_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in all_families() {
            let k = Kernel::new(&spec, 3).unwrap();
            for _ in 0..1000 {
                let x = random_unit(&mut rng, 3);
                let y = random_unit(&mut rng, 3);
                let z = random_unit(&mut rng, 3);
                let kxy = k.eval(&x, &y);
                assert!(kxy * kxy <= k.diag(&x) * k.diag(&y) + 1e-9, "{spec}");
                assert!(k.diag(&x) >= 0.0);
                let (dxy, dyz, dxz) = (k.distance(&x, &y), k.distance(&y, &z), k.distance(&x, &z));
                assert!(dxz <= dxy + dyz + 1e-9, "{spec}");
                assert_eq!(dxy, k.distance(&y, &x));
            }
        }
    }

    #[test]
    fn zonal_kernels_are_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Random rotation of R^3 from Gram-Schmidt on a Gaussian matrix.
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < 3 {
            let mut v: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            for b in &q {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
            }
            let n = dot(&v, &v).sqrt();
            q.push(v.into_iter().map(|c| c / n).collect());
        }
        let rotate = |x: &[f64]| -> Vec<f64> { q.iter().map(|row| dot(row, x)).collect() };
        for family in [Family::ZonalNngpStep, Family::ZonalNngpRelu, Family::ZonalNtkRelu] {
            let k = Kernel::new(&KernelSpec::zonal(family), 3).unwrap();
            for _ in 0..200 {
                let x = random_unit(&mut rng, 3);
                let y = random_unit(&mut rng, 3);
                let delta = (k.eval(&x, &y) - k.eval(&rotate(&x), &rotate(&y))).abs();
                assert!(delta <= 1e-9);
            }
        }
    }
}
