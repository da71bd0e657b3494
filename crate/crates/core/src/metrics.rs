//! Contour estimation error measured along rays from a center point.
//!
//! For each ray `vᵢ` and envelope `k`, `w̃ᵢₖ` is where the ray leaves the
//! estimated envelope. MADE averages `|αₖ - D(w̃ᵢₖ)|` against a true depth
//! oracle; ED averages `‖wᵢₖ - w̃ᵢₖ‖₂` against the true contour intercept
//! `wᵢₖ` (Gaussian truth) or against a second snapshot.
//!
//! If the center falls outside an estimated envelope, MADE uses the signed
//! exit distance along the ray (possibly negative) and snapshot-to-snapshot
//! ED uses the far side of the envelope, skipping rays that miss it.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{DepthSnapshot, DirectionSet};
use crate::linalg::distance;
use crate::oracle::{DepthOracle, GaussianModel};

/// Ray origin and unit ray directions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRays {
    pub center: Vec<f64>,
    pub directions: DirectionSet,
}

impl MetricRays {
    pub fn new(center: Vec<f64>, directions: DirectionSet) -> Result<Self> {
        check_dim(directions.dim(), center.len())?;
        Ok(Self { center, directions })
    }

    /// `n_v` uniformly distributed rays from `center`.
    pub fn uniform(center: Vec<f64>, n_v: usize, seed: u64) -> Result<Self> {
        let directions = DirectionSet::sample_uniform(center.len(), n_v, seed)?;
        Ok(Self { center, directions })
    }

    /// Default ray count: 10³ up to three dimensions, 10⁴ above.
    pub fn default_count(dim: usize) -> usize {
        if dim <= 3 {
            1_000
        } else {
            10_000
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn recentered(&self, center: Vec<f64>) -> Self {
        Self { center, directions: self.directions.clone() }
    }
}

/// Per-alpha averages over rays and their mean over alphas.
#[derive(Debug, Clone, PartialEq)]
pub struct RayAverage {
    pub per_alpha: Vec<f64>,
    pub mean: f64,
    /// Ray/envelope pairs without an intercept (excluded from the averages).
    pub failed_rays: usize,
}

impl RayAverage {
    fn from_sums(sums: &[f64], counts: &[usize], failed_rays: usize, alphas: &[f64]) -> Result<Self> {
        let mut per_alpha = Vec::with_capacity(sums.len());
        for ((s, &c), a) in sums.iter().zip(counts).zip(alphas) {
            if c == 0 {
                return Err(Error::Precondition(alloc::format!(
                    "no ray produced an intercept for alpha {a}"
                )));
            }
            per_alpha.push(s / c as f64);
        }
        let mean = per_alpha.iter().sum::<f64>() / per_alpha.len() as f64;
        Ok(Self { per_alpha, mean, failed_rays })
    }
}

/// MADE and (when a Gaussian truth is available) ED of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub made: RayAverage,
    pub ed: Option<RayAverage>,
}

/// Estimated intercept points per alpha (`None` for failed rays).
fn estimated_intercepts(snapshot: &DepthSnapshot, center: &[f64], rays: &DirectionSet) -> Result<Vec<Vec<Option<Vec<f64>>>>> {
    check_dim(snapshot.dim(), center.len())?;
    check_dim(snapshot.dim(), rays.dim())?;
    let k = snapshot.len();
    let mut caster = snapshot.ray_caster(center)?;
    let mut hits = vec![Ok(0.0); k];
    let mut out = vec![Vec::with_capacity(rays.len()); k];
    for v in rays.iter() {
        caster.cast(v, &mut hits);
        for (slot, hit) in out.iter_mut().zip(&hits) {
            slot.push(
                hit.ok()
                    .map(|t| center.iter().zip(v).map(|(c, d)| c + t * d).collect::<Vec<f64>>()),
            );
        }
    }
    Ok(out)
}

/// Mean absolute depth error of `snapshot` against `truth`.
pub fn compute_made(snapshot: &DepthSnapshot, truth: &dyn DepthOracle, rays: &MetricRays) -> Result<RayAverage> {
    check_dim(snapshot.dim(), truth.dim())?;
    let alphas = snapshot.alphas();
    let intercepts = estimated_intercepts(snapshot, &rays.center, &rays.directions)?;
    let mut flat = Vec::new();
    let mut owner = Vec::new();
    let mut failed = 0;
    for (k, per_k) in intercepts.iter().enumerate() {
        for p in per_k {
            match p {
                Some(p) => {
                    flat.extend_from_slice(p);
                    owner.push(k);
                }
                None => failed += 1,
            }
        }
    }
    let depths = if flat.is_empty() { Vec::new() } else { truth.depth_many(&flat)? };
    let mut sums = vec![0.0; alphas.len()];
    let mut counts = vec![0usize; alphas.len()];
    for (&k, d) in owner.iter().zip(depths) {
        sums[k] += (alphas[k] - d).abs();
        counts[k] += 1;
    }
    RayAverage::from_sums(&sums, &counts, failed, &alphas)
}

/// Mean Euclidean distance between estimated and true Gaussian contour
/// intercepts. The rays must start at the model mean.
pub fn compute_ed(snapshot: &DepthSnapshot, truth: &GaussianModel, rays: &MetricRays) -> Result<RayAverage> {
    check_dim(snapshot.dim(), truth.mean().len())?;
    let off_center = distance(&rays.center, truth.mean());
    if off_center > 1e-9 * (1.0 + crate::linalg::norm(truth.mean())) {
        return Err(Error::Precondition("ED rays must start at the true distribution center".into()));
    }
    let alphas = snapshot.alphas();
    let intercepts = estimated_intercepts(snapshot, &rays.center, &rays.directions)?;
    let mut sums = vec![0.0; alphas.len()];
    let mut counts = vec![0usize; alphas.len()];
    let mut failed = 0;
    for (k, per_k) in intercepts.iter().enumerate() {
        for (v, est) in rays.directions.iter().zip(per_k) {
            match est {
                Some(est) => {
                    let w = truth.contour_intercept(alphas[k], v)?;
                    sums[k] += distance(&w, est);
                    counts[k] += 1;
                }
                None => failed += 1,
            }
        }
    }
    RayAverage::from_sums(&sums, &counts, failed, &alphas)
}

/// MADE and ED against a Gaussian truth.
pub fn evaluate_gaussian(snapshot: &DepthSnapshot, truth: &GaussianModel, rays: &MetricRays) -> Result<ErrorReport> {
    Ok(ErrorReport { made: compute_made(snapshot, truth, rays)?, ed: Some(compute_ed(snapshot, truth, rays)?) })
}

/// Contour distance between two snapshots along common rays from `center`.
/// Symmetric in `(a, b)`.
///
/// Only intercepts on envelope boundaries are compared: where `center` lies
/// outside an envelope, rays that miss it are excluded and counted.
pub fn ed_between_snapshots(
    a: &DepthSnapshot,
    b: &DepthSnapshot,
    center: &[f64],
    rays: &DirectionSet,
) -> Result<RayAverage> {
    ed_between_snapshots_recentered(a, center, b, center, rays)
}

/// As [`ed_between_snapshots`], with rays cast from a separate center for
/// each snapshot.
pub fn ed_between_snapshots_recentered(
    a: &DepthSnapshot,
    center_a: &[f64],
    b: &DepthSnapshot,
    center_b: &[f64],
    rays: &DirectionSet,
) -> Result<RayAverage> {
    let alphas = a.alphas();
    if alphas != b.alphas() {
        return Err(Error::InvalidParameter("snapshots must share their alphas".into()));
    }
    check_dim(a.dim(), b.dim())?;
    check_dim(a.dim(), rays.dim())?;
    check_dim(a.dim(), center_a.len())?;
    check_dim(a.dim(), center_b.len())?;
    let k = alphas.len();
    let mut ca = a.ray_caster(center_a)?;
    let mut cb = b.ray_caster(center_b)?;
    let mut ha = vec![Ok(0.0); k];
    let mut hb = vec![Ok(0.0); k];
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let mut failed = 0;
    let dim = a.dim();
    for v in rays.iter() {
        ca.cast_far_side(v, &mut ha);
        cb.cast_far_side(v, &mut hb);
        for j in 0..k {
            match (ha[j], hb[j]) {
                (Ok(ta), Ok(tb)) => {
                    let mut sq = 0.0;
                    for d in 0..dim {
                        let diff = (center_a[d] + ta * v[d]) - (center_b[d] + tb * v[d]);
                        sq += diff * diff;
                    }
                    sums[j] += libm::sqrt(sq);
                    counts[j] += 1;
                }
                _ => failed += 1,
            }
        }
    }
    RayAverage::from_sums(&sums, &counts, failed, &alphas)
}
