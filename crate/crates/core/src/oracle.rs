//! Ground-truth depth.
//!
//! * [`GaussianModel`]: exact halfspace depth and depth contours of a
//!   multivariate normal distribution.
//! * [`MonteCarloModel`]: empirical depth over a cached sample, minimised over
//!   a finite set of directions, for any distribution that can be sampled.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::DirectionSet;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::normal;

/// Anything that can report the true depth of points.
pub trait DepthOracle {
    fn dim(&self) -> usize;

    fn depth(&self, point: &[f64]) -> Result<f64>;

    /// Depths of the row-major `points` (length a multiple of `dim`).
    fn depth_many(&self, points: &[f64]) -> Result<Vec<f64>> {
        points.chunks_exact(self.dim()).map(|p| self.depth(p)).collect()
    }
}

/// Standard deviation used for the tangent-halfspace probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentScale {
    /// `sqrt(uᵀ Σ u)`, the standard deviation of the projection `uᵀX`.
    Projection,
    /// `sqrt(uᵀ Σ⁻¹ u)`; coincides with `Projection` only when `Σ = I`.
    InverseCovariance,
}

/// Multivariate normal `N(mu, sigma)` with cached factorisations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mu: Vec<f64>,
    sigma: Matrix,
    sigma_inv: Matrix,
    chol: Cholesky,
}

impl GaussianModel {
    pub fn new(mu: Vec<f64>, sigma: Matrix) -> Result<Self> {
        check_dim(sigma.dim(), mu.len())?;
        check_finite(&mu)?;
        check_finite(sigma.as_slice())?;
        let scale = sigma.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if sigma.max_asymmetry() > 1e-10 * scale {
            return Err(Error::Model("covariance matrix is not symmetric".into()));
        }
        let chol = Cholesky::new(&sigma)?;
        let sigma_inv = chol.inverse();
        Ok(Self { mu, sigma, sigma_inv, chol })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], Matrix::identity(dim)).expect("identity is positive definite")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn covariance(&self) -> &Matrix {
        &self.sigma
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// Squared Mahalanobis distance of `w` from the mean.
    pub fn mahalanobis_sq(&self, w: &[f64]) -> f64 {
        let d: Vec<f64> = w.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        dot(&d, &self.sigma_inv.mul_vec(&d)).max(0.0)
    }

    /// Halfspace depth `Φ(-sqrt((w-μ)ᵀΣ⁻¹(w-μ)))`; 0.5 at the mean.
    pub fn depth(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.mu.len(), w.len())?;
        Ok(normal::cdf(-libm::sqrt(self.mahalanobis_sq(w))))
    }

    /// Probability of the halfspace bounded by the tangent plane of the
    /// density contour through `w`, with inward unit normal
    /// `-Σ⁻¹(w-μ)/‖Σ⁻¹(w-μ)‖₂`, using the chosen standard deviation.
    ///
    /// With [`TangentScale::Projection`] this equals [`depth`](Self::depth).
    pub fn tangent_depth(&self, w: &[f64], scale: TangentScale) -> Result<f64> {
        check_dim(self.mu.len(), w.len())?;
        let d: Vec<f64> = w.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        let g = self.sigma_inv.mul_vec(&d);
        let len = libm::sqrt(dot(&g, &g));
        if !(len > 0.0) {
            return Ok(0.5);
        }
        let u: Vec<f64> = g.iter().map(|v| -v / len).collect();
        let location = dot(&u, &d);
        let var = match scale {
            TangentScale::Projection => dot(&u, &self.sigma.mul_vec(&u)),
            TangentScale::InverseCovariance => dot(&u, &self.sigma_inv.mul_vec(&u)),
        };
        Ok(normal::cdf(location / libm::sqrt(var)))
    }

    /// Point where the ray from the mean along `direction` meets the
    /// `alpha`-depth contour: `μ + t·d` with `t = r_α / sqrt(dᵀΣ⁻¹d)` and
    /// `Φ(-r_α) = α`. Requires `0 < alpha < 0.5`.
    pub fn contour_intercept(&self, alpha: f64, direction: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.mu.len(), direction.len())?;
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidParameter(alloc::format!(
                "contour intercepts need 0 < alpha < 0.5, got {alpha}"
            )));
        }
        let len = libm::sqrt(dot(direction, direction));
        if !(len > 0.0) {
            return Err(Error::InvalidInput("zero ray direction".into()));
        }
        let d: Vec<f64> = direction.iter().map(|v| v / len).collect();
        let r = -normal::quantile(alpha);
        let t = r / libm::sqrt(dot(&d, &self.sigma_inv.mul_vec(&d)));
        Ok(self.mu.iter().zip(&d).map(|(m, v)| m + t * v).collect())
    }

    /// `alpha`-quantile of the projection `uᵀX`.
    pub fn directional_quantile(&self, alpha: f64, u: &[f64]) -> f64 {
        let sd = libm::sqrt(dot(u, &self.sigma.mul_vec(u)));
        dot(u, &self.mu) + sd * normal::quantile(alpha)
    }

    /// Writes one draw `μ + L z` given independent standard normals `z`.
    pub fn transform_standard(&self, z: &[f64], out: &mut [f64]) {
        let lz = self.chol.mul_lower(z);
        for ((o, m), v) in out.iter_mut().zip(&self.mu).zip(lz) {
            *o = m + v;
        }
    }
}

impl DepthOracle for GaussianModel {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn depth(&self, point: &[f64]) -> Result<f64> {
        GaussianModel::depth(self, point)
    }
}

/// Empirical halfspace depth over a cached i.i.d. sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloModel {
    dim: usize,
    samples: Vec<f64>,
}

/// Cache size below which Monte Carlo depth should not be used as truth.
pub const TRUTH_GRADE_SAMPLES: usize = 10_000;

impl MonteCarloModel {
    /// Wraps an existing row-major sample matrix.
    pub fn from_samples(dim: usize, samples: Vec<f64>) -> Result<Self> {
        if dim < 1 || samples.len() % dim != 0 {
            return Err(Error::InvalidInput("sample matrix is ragged".into()));
        }
        check_finite(&samples)?;
        Ok(Self { dim, samples })
    }

    /// Fills a cache of `n` draws from `sampler`, which writes one draw into
    /// the slice it is given.
    pub fn from_sampler(dim: usize, n: usize, mut sampler: impl FnMut(&mut [f64])) -> Result<Self> {
        let mut samples = vec![0.0; dim * n];
        for row in samples.chunks_exact_mut(dim) {
            sampler(row);
        }
        Self::from_samples(dim, samples)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_truth_grade(&self) -> bool {
        self.n_samples() >= TRUTH_GRADE_SAMPLES
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Depth of `w` minimised over `n_dirs` uniform directions drawn from `seed`.
    pub fn depth(&self, w: &[f64], n_dirs: usize, seed: u64) -> Result<f64> {
        if n_dirs < 100 {
            return Err(Error::InvalidParameter(alloc::format!("n_dirs must be >= 100, got {n_dirs}")));
        }
        let dirs = DirectionSet::sample_uniform(self.dim, n_dirs, seed)?;
        Ok(self.depth_with_directions(w, &dirs)?[0])
    }

    /// For each row of `points`: the minimum over `directions` of the
    /// fraction of cached samples with `uᵀX <= uᵀw`.
    ///
    /// Cost is `O(n_dirs · n_samples · (dim + log n_points))`.
    pub fn depth_with_directions(&self, points: &[f64], directions: &DirectionSet) -> Result<Vec<f64>> {
        if self.samples.is_empty() {
            return Err(Error::InvalidState("Monte Carlo cache is empty".into()));
        }
        check_dim(self.dim, directions.dim())?;
        if points.len() % self.dim != 0 {
            return Err(Error::DimensionMismatch { expected: self.dim, found: points.len() % self.dim });
        }
        check_finite(points)?;
        let m = points.len() / self.dim;
        let n = self.n_samples() as f64;
        let mut best = vec![f64::INFINITY; m];
        let mut thresholds: Vec<(f64, usize)> = Vec::with_capacity(m);
        let mut sorted: Vec<f64> = Vec::with_capacity(m);
        let mut hist = vec![0u64; m + 1];
        for u in directions.iter() {
            thresholds.clear();
            thresholds.extend(points.chunks_exact(self.dim).enumerate().map(|(i, w)| (dot(u, w), i)));
            thresholds.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            sorted.clear();
            sorted.extend(thresholds.iter().map(|t| t.0));
            hist.iter_mut().for_each(|h| *h = 0);
            for x in self.samples.chunks_exact(self.dim) {
                let v = dot(u, x);
                // v <= t_i exactly for the thresholds at positions >= j
                let j = sorted.partition_point(|&t| t < v);
                hist[j] += 1;
            }
            let mut cum = 0u64;
            for (pos, &(_, i)) in thresholds.iter().enumerate() {
                cum += hist[pos];
                let frac = cum as f64 / n;
                if frac < best[i] {
                    best[i] = frac;
                }
            }
        }
        Ok(best)
    }

    /// Fixes a direction set so the model can serve as a [`DepthOracle`].
    pub fn oracle(&self, n_dirs: usize, seed: u64) -> Result<MonteCarloOracle<'_>> {
        if n_dirs < 100 {
            return Err(Error::InvalidParameter(alloc::format!("n_dirs must be >= 100, got {n_dirs}")));
        }
        Ok(MonteCarloOracle { model: self, directions: DirectionSet::sample_uniform(self.dim, n_dirs, seed)? })
    }
}

/// A [`MonteCarloModel`] paired with a fixed direction set.
#[derive(Debug, Clone)]
pub struct MonteCarloOracle<'a> {
    model: &'a MonteCarloModel,
    directions: DirectionSet,
}

impl DepthOracle for MonteCarloOracle<'_> {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn depth(&self, point: &[f64]) -> Result<f64> {
        Ok(self.model.depth_with_directions(point, &self.directions)?[0])
    }

    fn depth_many(&self, points: &[f64]) -> Result<Vec<f64>> {
        self.model.depth_with_directions(points, &self.directions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_model(rng: &mut impl Rng, dim: usize) -> GaussianModel {
        let a = Matrix::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut s = a.mul(&a.transpose());
        for i in 0..dim {
            s.set(i, i, s.get(i, i) + 0.3);
        }
        let s = Matrix::from_fn(dim, |i, j| 0.5 * (s.get(i, j) + s.get(j, i)));
        let mu = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        GaussianModel::new(mu, s).unwrap()
    }

    #[test]
    fn center_has_depth_half() {
        let m = GaussianModel::new(vec![1.0, -2.0], Matrix::from_row_major(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap())
            .unwrap();
        assert_eq!(m.depth(&[1.0, -2.0]).unwrap(), 0.5);
        assert_eq!(m.tangent_depth(&[1.0, -2.0], TangentScale::Projection).unwrap(), 0.5);
    }

    #[test]
    fn known_quantile_point() {
        let m = GaussianModel::standard(2);
        assert!((m.depth(&[1.2816, 0.0]).unwrap() - 0.1).abs() < 1e-4);
        let x = normal::quantile(0.9);
        assert!((m.depth(&[x, 0.0]).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn projection_scale_equals_closed_form() {
        let mut rng = crate::seed::rng(8);
        for _ in 0..1000 {
            let dim = rng.random_range(2..6);
            let m = random_model(&mut rng, dim);
            let w: Vec<f64> = (0..dim).map(|i| m.mean()[i] + rng.random_range(-3.0..3.0)).collect();
            let closed = normal::cdf(-libm::sqrt(m.mahalanobis_sq(&w)));
            let tangent = m.tangent_depth(&w, TangentScale::Projection).unwrap();
            assert!((closed - tangent).abs() < 1e-12);
            assert!((m.depth(&w).unwrap() - closed).abs() < 1e-15);
        }
    }

    #[test]
    fn affine_invariance() {
        let mut rng = crate::seed::rng(9);
        for _ in 0..200 {
            let dim = rng.random_range(2..5);
            let m = random_model(&mut rng, dim);
            let a = Matrix::from_fn(dim, |i, j| {
                rng.random_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 }
            });
            let b: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mu2: Vec<f64> = a.mul_vec(m.mean()).iter().zip(&b).map(|(x, y)| x + y).collect();
            let s2 = a.mul(m.covariance()).mul(&a.transpose());
            let s2 = Matrix::from_fn(dim, |i, j| 0.5 * (s2.get(i, j) + s2.get(j, i)));
            let Ok(m2) = GaussianModel::new(mu2, s2) else { continue };
            let w: Vec<f64> = (0..dim).map(|i| m.mean()[i] + rng.random_range(-2.0..2.0)).collect();
            let w2: Vec<f64> = a.mul_vec(&w).iter().zip(&b).map(|(x, y)| x + y).collect();
            let d1 = m.depth(&w).unwrap();
            let d2 = m2.depth(&w2).unwrap();
            assert!((d1 - d2).abs() < 1e-9, "{d1} {d2}");
        }
    }

    #[test]
    fn strictly_decreasing_along_rays() {
        let mut rng = crate::seed::rng(10);
        let m = random_model(&mut rng, 3);
        let dirs = DirectionSet::sample_uniform(3, 20, 1).unwrap();
        for u in dirs.iter() {
            let mut prev = 0.5;
            for s in 1..60 {
                let t = s as f64 * 0.1;
                let w: Vec<f64> = m.mean().iter().zip(u).map(|(a, b)| a + t * b).collect();
                let d = m.depth(&w).unwrap();
                assert!(d < prev);
                prev = d;
            }
        }
    }

    #[test]
    fn contour_intercepts() {
        let m = GaussianModel::standard(2);
        let p = m.contour_intercept(0.1, &[1.0, 0.0]).unwrap();
        assert!((p[0] - normal::quantile(0.9)).abs() < 1e-12 && p[1].abs() < 1e-15);
        assert!((p[0] - 1.2816).abs() < 1e-4);
        let m4 = GaussianModel::new(vec![0.0, 0.0], Matrix::identity(2).scaled(4.0)).unwrap();
        let p = m4.contour_intercept(0.1, &[0.0, 1.0]).unwrap();
        assert!((p[1] - 2.0 * normal::quantile(0.9)).abs() < 1e-12);
        assert!(m.contour_intercept(0.5, &[1.0, 0.0]).is_err());

        let mut rng = crate::seed::rng(12);
        let dirs = DirectionSet::sample_uniform(3, 100, 2).unwrap();
        for u in dirs.iter() {
            let model = random_model(&mut rng, 3);
            let alpha = rng.random_range(0.01..0.49);
            let p = model.contour_intercept(alpha, u).unwrap();
            assert!((model.depth(&p).unwrap() - alpha).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_covariance_rejected() {
        let s = Matrix::from_row_major(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(GaussianModel::new(vec![0.0, 0.0], s), Err(Error::Model(_))));
    }

    fn normal_cache(n: usize, seed: u64) -> MonteCarloModel {
        let mut rng = crate::seed::rng(seed);
        MonteCarloModel::from_sampler(2, n, |row| {
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        })
        .unwrap()
    }

    #[test]
    fn far_point_has_zero_mc_depth() {
        let mc = normal_cache(5_000, 1);
        assert_eq!(mc.depth(&[100.0, 100.0], 200, 3).unwrap(), 0.0);
        let empty = MonteCarloModel::from_samples(2, vec![]).unwrap();
        assert!(matches!(empty.depth(&[0.0, 0.0], 100, 1), Err(Error::InvalidState(_))));
        assert!(mc.depth(&[0.0, 0.0], 10, 1).is_err());
    }

    #[test]
    fn mc_depth_is_min_over_a_superset() {
        let mc = normal_cache(20_000, 2);
        let big = DirectionSet::sample_uniform(2, 400, 5).unwrap();
        let small = DirectionSet::from_vectors(2, &big.iter().take(100).collect::<Vec<_>>()).unwrap();
        let pts = [0.3, -0.2, 1.0, 1.0, -1.5, 0.2];
        let a = mc.depth_with_directions(&pts, &small).unwrap();
        let b = mc.depth_with_directions(&pts, &big).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(y <= x);
        }
    }

    #[test]
    fn batch_matches_brute_force_count() {
        let mc = normal_cache(3_000, 4);
        let dirs = DirectionSet::sample_uniform(2, 100, 6).unwrap();
        let pts = [0.1, 0.2, -1.0, 0.5, 0.1, 0.2, 2.0, -2.0];
        let got = mc.depth_with_directions(&pts, &dirs).unwrap();
        for (w, g) in pts.chunks_exact(2).zip(&got) {
            let mut best = 1.0f64;
            for u in dirs.iter() {
                let t = dot(u, w);
                let c = mc.samples().chunks_exact(2).filter(|x| dot(u, x) <= t).count();
                best = best.min(c as f64 / 3000.0);
            }
            assert_eq!(*g, best);
        }
    }
}
