//! Reproducible synthetic streams.
//!
//! * static Gaussian and componentwise-exponential (lognormal) streams,
//! * a periodic Gaussian whose means oscillate out of phase and whose
//!   correlation `ρₙ^|i-j|` breathes between 0 and 0.8,
//! * piecewise-stationary Gaussian regimes with labels, for change detection.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::oracle::GaussianModel;
use crate::seed;

/// Covariance with entries `exp(-rate·|i-j|)`.
pub fn ar_covariance(p: usize, rate: f64) -> Result<Matrix> {
    if p == 0 || !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!("need p >= 1 and rate > 0, got p={p}, rate={rate}")));
    }
    Ok(Matrix::from_fn(p, |i, j| libm::exp(-rate * i.abs_diff(j) as f64)))
}

/// Covariance with entries `rho^|i-j|` (`0^0 = 1`).
pub fn power_covariance(p: usize, rho: f64) -> Matrix {
    Matrix::from_fn(p, |i, j| if i == j { 1.0 } else { libm::pow(rho, i.abs_diff(j) as f64) })
}

/// Bivariate normal with unit variances and correlation 0.82.
pub fn correlated_pair() -> GaussianModel {
    let sigma = Matrix::from_row_major(2, vec![1.0, 0.82, 0.82, 1.0]).expect("2x2");
    GaussianModel::new(vec![0.0, 0.0], sigma).expect("positive definite")
}

/// One stream element; `index` counts from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub index: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamKind {
    StaticGaussian(GaussianModel),
    /// `exp` applied componentwise to draws of the model.
    StaticLognormal(GaussianModel),
    DynamicGaussian { dim: usize, period: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub kind: StreamKind,
    pub length: u64,
    pub seed: u64,
}

impl StreamSpec {
    pub fn new(kind: StreamKind, length: u64, seed: u64) -> Self {
        Self { kind, length, seed }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            StreamKind::StaticGaussian(m) | StreamKind::StaticLognormal(m) => m.mean().len(),
            StreamKind::DynamicGaussian { dim, .. } => *dim,
        }
    }

    pub fn stream(&self) -> Result<Stream> {
        let mut rng = seed::rng(seed::derive(self.seed, 0));
        let source = match &self.kind {
            StreamKind::StaticGaussian(m) => Source::Static { model: m.clone(), exp: false },
            StreamKind::StaticLognormal(m) => Source::Static { model: m.clone(), exp: true },
            StreamKind::DynamicGaussian { dim, period } => {
                Source::Dynamic(PeriodicGaussian::new(*dim, *period, &mut rng)?)
            }
        };
        Ok(Stream { source, rng, next_index: 1, length: self.length, z: vec![0.0; self.dim()] })
    }
}

/// Periodic Gaussian truth: `μₙ,ᵢ = sin(2πn/T + ψᵢ)`,
/// `Cov(Xₙ,ᵢ, Xₙ,ⱼ) = (0.4·sin(2πn/T + ψ) + 0.4)^|i-j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGaussian {
    period: f64,
    mean_phases: Vec<f64>,
    cov_phase: f64,
}

impl PeriodicGaussian {
    /// Draws the `dim + 1` phases uniformly from `[0, 2π)`.
    pub fn new(dim: usize, period: f64, rng: &mut impl Rng) -> Result<Self> {
        let mean_phases = (0..dim).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let cov_phase = rng.random::<f64>() * 2.0 * PI;
        Self::with_phases(period, mean_phases, cov_phase)
    }

    pub fn with_phases(period: f64, mean_phases: Vec<f64>, cov_phase: f64) -> Result<Self> {
        if mean_phases.is_empty() {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("period must be positive, got {period}")));
        }
        let out = Self { period, mean_phases, cov_phase };
        // covariance over one period on a grid
        for k in 0..64 {
            let n = period * k as f64 / 64.0;
            Cholesky::new(&power_covariance(out.dim(), out.correlation_at(n)))?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.mean_phases.len()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    fn angle(&self, n: f64) -> f64 {
        2.0 * PI * n / self.period
    }

    pub fn mean_at(&self, n: f64) -> Vec<f64> {
        let a = self.angle(n);
        self.mean_phases.iter().map(|ps| libm::sin(a + ps)).collect()
    }

    /// Base correlation `ρₙ ∈ [0, 0.8]`.
    pub fn correlation_at(&self, n: f64) -> f64 {
        0.4 * libm::sin(self.angle(n) + self.cov_phase) + 0.4
    }

    pub fn truth_at(&self, n: f64) -> Result<GaussianModel> {
        GaussianModel::new(self.mean_at(n), power_covariance(self.dim(), self.correlation_at(n)))
    }
}

#[derive(Debug, Clone)]
enum Source {
    Static { model: GaussianModel, exp: bool },
    Dynamic(PeriodicGaussian),
}

/// Finite iterator over a [`StreamSpec`].
#[derive(Debug, Clone)]
pub struct Stream {
    source: Source,
    rng: ChaCha8Rng,
    next_index: u64,
    length: u64,
    z: Vec<f64>,
}

impl Stream {
    /// Periodic truth of a dynamic stream.
    pub fn periodic(&self) -> Option<&PeriodicGaussian> {
        match &self.source {
            Source::Dynamic(p) => Some(p),
            Source::Static { .. } => None,
        }
    }

    /// True distribution at index `n` for Gaussian streams.
    pub fn truth_at(&self, n: u64) -> Option<Result<GaussianModel>> {
        match &self.source {
            Source::Static { model, exp: false } => Some(Ok(model.clone())),
            Source::Static { exp: true, .. } => None,
            Source::Dynamic(p) => Some(p.truth_at(n as f64)),
        }
    }

    fn draw(&mut self) -> Result<Vec<f64>> {
        for z in self.z.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
        let mut out = vec![0.0; self.z.len()];
        match &self.source {
            Source::Static { model, exp } => {
                model.transform_standard(&self.z, &mut out);
                if *exp {
                    out.iter_mut().for_each(|v| *v = libm::exp(*v));
                }
            }
            Source::Dynamic(p) => {
                let n = self.next_index as f64;
                let chol = Cholesky::new(&power_covariance(p.dim(), p.correlation_at(n)))
                    .map_err(|e| Error::Model(alloc::format!("covariance at n={}: {e}", self.next_index)))?;
                let lz = chol.mul_lower(&self.z);
                for ((o, m), v) in out.iter_mut().zip(p.mean_at(n)).zip(lz) {
                    *o = m + v;
                }
            }
        }
        Ok(out)
    }
}

impl Iterator for Stream {
    type Item = Result<Observation>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index > self.length {
            return None;
        }
        let values = self.draw();
        let index = self.next_index;
        self.next_index += 1;
        Some(values.map(|values| Observation { index, values }))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.length + 1).saturating_sub(self.next_index) as usize;
        (left, Some(left))
    }
}

/// Gaussian regimes of fixed length, cycled in order.
#[derive(Debug, Clone)]
pub struct RegimeStream {
    regimes: Vec<GaussianModel>,
    segment: u64,
    count: usize,
    rng: ChaCha8Rng,
    next_index: u64,
    z: Vec<f64>,
}

impl RegimeStream {
    /// `count` segments of `segment` observations; segment `k` uses
    /// `regimes[k % regimes.len()]`.
    pub fn new(regimes: Vec<GaussianModel>, segment: u64, count: usize, seed: u64) -> Result<Self> {
        let dim = regimes.first().map(|m| m.mean().len()).ok_or_else(|| Error::InvalidParameter("no regimes".into()))?;
        if regimes.iter().any(|m| m.mean().len() != dim) {
            return Err(Error::InvalidParameter("regimes must share their dimension".into()));
        }
        if segment == 0 {
            return Err(Error::InvalidParameter("segment length must be positive".into()));
        }
        Ok(Self { regimes, segment, count, rng: seed::rng(seed::derive(seed, 0)), next_index: 1, z: vec![0.0; dim] })
    }

    pub fn length(&self) -> u64 {
        self.segment * self.count as u64
    }

    /// Indices of the first observation of every segment after the first.
    pub fn change_points(&self) -> Vec<u64> {
        (1..self.count as u64).map(|k| k * self.segment + 1).collect()
    }

    pub fn label_of(&self, index: u64) -> usize {
        ((index - 1) / self.segment) as usize % self.regimes.len()
    }
}

impl Iterator for RegimeStream {
    /// Observation and regime label.
    type Item = (Observation, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index > self.length() {
            return None;
        }
        let label = self.label_of(self.next_index);
        for z in self.z.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
        let mut values = vec![0.0; self.z.len()];
        self.regimes[label].transform_standard(&self.z, &mut values);
        let index = self.next_index;
        self.next_index += 1;
        Some((Observation { index, values }, label))
    }
}

/// Eight bivariate regimes that alternate between mean, correlation and
/// scale changes.
pub fn alternating_regimes() -> Vec<GaussianModel> {
    let m = |mu: [f64; 2], s1: f64, s2: f64, rho: f64| {
        let c = rho * s1 * s2;
        GaussianModel::new(mu.to_vec(), Matrix::from_row_major(2, vec![s1 * s1, c, c, s2 * s2]).unwrap()).unwrap()
    };
    vec![
        m([0.0, 0.0], 1.0, 1.0, 0.0),
        m([2.0, 0.0], 1.0, 1.0, 0.0),
        m([2.0, 0.0], 1.0, 1.0, 0.8),
        m([2.0, 0.0], 2.5, 0.6, 0.8),
        m([-1.0, 2.0], 2.5, 0.6, 0.8),
        m([-1.0, 2.0], 1.0, 1.0, -0.8),
        m([-1.0, 2.0], 0.4, 0.4, -0.8),
        m([1.0, -1.0], 0.4, 0.4, 0.0),
    ]
}
