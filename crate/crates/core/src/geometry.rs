//! Directions on the unit sphere, halfspace envelopes and queries on them.
//!
//! An [`Envelope`] for probability `alpha` is the intersection of the closed
//! halfspaces `{x : uᵢᵀx >= qᵢ}` where `qᵢ` is (an estimate of) the
//! `alpha`-quantile of the projection `uᵢᵀX`. A [`DepthSnapshot`] holds `K`
//! such envelopes for increasing probabilities over one shared direction set.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{dot, norm};

const UNIT_TOLERANCE: f64 = 1e-12;

/// A list of unit vectors in `R^dim`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dim: usize,
    data: Vec<f64>,
}

impl DirectionSet {
    /// Normalises and stores `vectors`. Zero or non-finite vectors are rejected.
    pub fn from_vectors<V: AsRef<[f64]>>(dim: usize, vectors: &[V]) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let mut data = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            let v = v.as_ref();
            check_dim(dim, v.len())?;
            check_finite(v)?;
            let len = norm(v);
            if !(len > 0.0) {
                return Err(Error::InvalidInput("zero direction vector".into()));
            }
            data.extend(v.iter().map(|x| x / len));
        }
        Ok(Self { dim, data })
    }

    /// `count` directions `Z/‖Z‖₂`, `Z` i.i.d. standard normal; deterministic in `seed`.
    pub fn sample_uniform(dim: usize, count: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(alloc::format!("dimension must be >= 2, got {dim}")));
        }
        if count < 1 {
            return Err(Error::InvalidParameter("direction count must be >= 1".into()));
        }
        let mut rng = crate::seed::rng(seed);
        let mut data = Vec::with_capacity(dim * count);
        let mut z = vec![0.0; dim];
        for _ in 0..count {
            let len = loop {
                z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let len = norm(&z);
                if len > 1e-300 {
                    break len;
                }
            };
            data.extend(z.iter().map(|v| v / len));
        }
        Ok(Self { dim, data })
    }

    /// Evenly spaced directions on the unit circle, starting at angle `phase`.
    pub fn circle(count: usize, phase: f64) -> Result<Self> {
        if count < 1 {
            return Err(Error::InvalidParameter("direction count must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(2 * count);
        for j in 0..count {
            let a = phase + 2.0 * PI * j as f64 / count as f64;
            data.push(libm::cos(a));
            data.push(libm::sin(a));
        }
        Ok(Self { dim: 2, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Fewer than `dim + 1` directions can never bound an envelope.
    pub fn can_bound(&self) -> bool {
        self.len() > self.dim
    }

    /// True when every vector has norm `1 ± 1e-12`.
    pub fn is_normalized(&self) -> bool {
        self.iter().all(|v| (norm(v) - 1.0).abs() <= UNIT_TOLERANCE)
    }

    /// Projections `uᵢᵀx` for every direction, written into `out`.
    #[inline]
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, u) in out.iter_mut().zip(self.iter()) {
            *o = dot(u, x);
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.project_into(x, &mut out);
        out
    }

    /// Smallest angle (radians) between any two vectors; `PI` for fewer than two.
    pub fn min_pairwise_angle(&self) -> f64 {
        let mut best = 1.0f64;
        let mut any = false;
        for i in 0..self.len() {
            for j in 0..i {
                best = best.max(dot(self.get(i), self.get(j)));
                any = true;
            }
        }
        if any {
            libm::acos(best.clamp(-1.0, 1.0))
        } else {
            PI
        }
    }

    fn greedy_accept(&self, cos_threshold: f64, limit: usize) -> Vec<usize> {
        let mut kept: Vec<usize> = Vec::new();
        for i in 0..self.len() {
            let u = self.get(i);
            if kept.iter().all(|&j| dot(u, self.get(j)) <= cos_threshold) {
                kept.push(i);
                if kept.len() > limit {
                    break;
                }
            }
        }
        kept
    }

    /// Thins the set to `target` vectors that are as evenly spread as possible.
    ///
    /// At a trial angle `θ`, candidates are accepted greedily in order when
    /// their angle to every accepted vector is at least `θ`. The largest `θ`
    /// that still keeps `target` vectors is found by bisection, and the first
    /// `target` accepted vectors are returned.
    pub fn equidistant_filter(&self, target: usize) -> Result<Self> {
        if target > self.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "cannot keep {target} of {} candidates",
                self.len()
            )));
        }
        if target == 0 {
            return Err(Error::InvalidParameter("target count must be >= 1".into()));
        }
        let keep = |theta: f64| self.greedy_accept(libm::cos(theta), target);
        let (mut lo, mut hi) = (0.0f64, PI);
        if keep(hi).len() >= target {
            lo = hi;
        } else {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if keep(mid).len() >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let mut chosen = keep(lo);
        chosen.truncate(target);
        let mut data = Vec::with_capacity(target * self.dim);
        for i in chosen {
            data.extend_from_slice(self.get(i));
        }
        Ok(Self { dim: self.dim, data })
    }
}

/// Result of casting a ray from inside an envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum Intercept {
    /// Boundary point and the distance travelled along the (unit) ray.
    Point { point: Vec<f64>, distance: f64 },
    /// No halfspace faces the ray.
    Unbounded,
}

impl Intercept {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            Intercept::Point { point, .. } => Some(point),
            Intercept::Unbounded => None,
        }
    }
}

/// Exit distance from `center` along unit `direction`, given `uᵢᵀdirection`
/// and the slacks `uᵢᵀcenter - qᵢ >= 0`. `None` when unbounded.
#[inline]
fn exit_distance(slack: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let mut best = f64::INFINITY;
    for (slack, along) in slack {
        if along < 0.0 {
            let t = slack / -along;
            if t < best {
                best = t;
            }
        }
    }
    if best.is_finite() {
        Some(best.max(0.0))
    } else {
        None
    }
}

/// Intersection of halfspaces `{x : uᵢᵀx >= qᵢ}` for one probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    directions: Arc<DirectionSet>,
    quantiles: Vec<f64>,
    alpha: f64,
}

impl Envelope {
    pub fn new(directions: Arc<DirectionSet>, quantiles: Vec<f64>, alpha: f64) -> Result<Self> {
        if quantiles.len() != directions.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} quantiles for {} directions",
                quantiles.len(),
                directions.len()
            )));
        }
        check_finite(&quantiles)?;
        Ok(Self { directions, quantiles, alpha })
    }

    pub fn dim(&self) -> usize {
        self.directions.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.directions
    }

    /// Closed-halfspace membership: `uᵢᵀpoint >= qᵢ` for every `i`.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        check_dim(self.dim(), point.len())?;
        Ok(self.contains_unchecked(point))
    }

    #[inline]
    pub(crate) fn contains_unchecked(&self, point: &[f64]) -> bool {
        self.directions.iter().zip(&self.quantiles).all(|(u, &q)| dot(u, point) >= q)
    }

    /// Largest violation `max(qᵢ - uᵢᵀpoint)`; non-positive inside.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        self.directions
            .iter()
            .zip(&self.quantiles)
            .map(|(u, &q)| q - dot(u, point))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Boundary point hit by the ray `center + t·direction`, `t >= 0`.
    ///
    /// `direction` is normalised internally; `center` must lie in the envelope.
    pub fn ray_intercept(&self, center: &[f64], direction: &[f64]) -> Result<Intercept> {
        check_dim(self.dim(), center.len())?;
        check_dim(self.dim(), direction.len())?;
        check_finite(center)?;
        let len = norm(direction);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidInput("ray direction must be non-zero and finite".into()));
        }
        if !self.contains_unchecked(center) {
            return Err(Error::Precondition("ray center lies outside the envelope".into()));
        }
        let d: Vec<f64> = direction.iter().map(|v| v / len).collect();
        let slacks = self
            .directions
            .iter()
            .zip(&self.quantiles)
            .map(|(u, &q)| (dot(u, center) - q, dot(u, &d)));
        Ok(match exit_distance(slacks) {
            Some(t) => Intercept::Point {
                point: center.iter().zip(&d).map(|(c, v)| c + t * v).collect(),
                distance: t,
            },
            None => Intercept::Unbounded,
        })
    }

    /// Closed polyline of `resolution` boundary points at equally spaced angles
    /// (counter-clockwise from the positive x axis) around `center`. 2-D only.
    pub fn contour_polyline_2d(&self, resolution: usize, center: &[f64]) -> Result<Vec<[f64; 2]>> {
        if self.dim() != 2 {
            return Err(Error::InvalidParameter("contour polylines need a 2-D envelope".into()));
        }
        if resolution < 3 {
            return Err(Error::InvalidParameter("resolution must be >= 3".into()));
        }
        let mut out = Vec::with_capacity(resolution);
        for j in 0..resolution {
            let a = 2.0 * PI * j as f64 / resolution as f64;
            match self.ray_intercept(center, &[libm::cos(a), libm::sin(a)])? {
                Intercept::Point { point, .. } => out.push([point[0], point[1]]),
                Intercept::Unbounded => {
                    return Err(Error::Precondition("envelope is unbounded; no closed contour".into()))
                }
            }
        }
        Ok(out)
    }
}

/// `K` nested envelopes over one direction set at observation count `timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSnapshot {
    envelopes: Vec<Envelope>,
    timestamp: u64,
}

impl DepthSnapshot {
    /// Validates shared directions, increasing alphas, and per-direction
    /// nesting `quantiles_k[i] <= quantiles_j[i]` for `k < j`.
    pub fn new(envelopes: Vec<Envelope>, timestamp: u64) -> Result<Self> {
        if envelopes.is_empty() {
            return Err(Error::InvalidParameter("snapshot needs at least one envelope".into()));
        }
        for pair in envelopes.windows(2) {
            if !Arc::ptr_eq(&pair[0].directions, &pair[1].directions)
                && pair[0].directions != pair[1].directions
            {
                return Err(Error::InvalidParameter("envelopes must share one direction set".into()));
            }
            if !(pair[0].alpha < pair[1].alpha) {
                return Err(Error::InvalidParameter("alphas must be strictly increasing".into()));
            }
            if pair[0].quantiles.iter().zip(&pair[1].quantiles).any(|(a, b)| a > b) {
                return Err(Error::InvalidParameter("envelopes are not nested".into()));
            }
        }
        Ok(Self { envelopes, timestamp })
    }

    /// Builds a snapshot from per-alpha quantile lists over `directions`.
    pub fn from_quantiles(
        directions: Arc<DirectionSet>,
        alphas: &[f64],
        quantiles: Vec<Vec<f64>>,
        timestamp: u64,
    ) -> Result<Self> {
        if alphas.len() != quantiles.len() {
            return Err(Error::InvalidParameter("one quantile list per alpha is required".into()));
        }
        let envelopes = alphas
            .iter()
            .zip(quantiles)
            .map(|(&a, q)| Envelope::new(directions.clone(), q, a))
            .collect::<Result<Vec<_>>>()?;
        Self::new(envelopes, timestamp)
    }

    pub fn envelopes(&self) -> &[Envelope] {
        &self.envelopes
    }

    pub fn envelope(&self, k: usize) -> &Envelope {
        &self.envelopes[k]
    }

    pub fn len(&self) -> usize {
        self.envelopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envelopes.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.envelopes.iter().map(|e| e.alpha).collect()
    }

    pub fn dim(&self) -> usize {
        self.envelopes[0].dim()
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.envelopes[0].directions
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    /// Estimated depth of `point`: the largest `alpha_k` whose envelope
    /// contains it, or 0.
    ///
    /// Envelopes are tried from the deepest outwards, each abandoned at its
    /// first violated halfspace.
    pub fn depth(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.dim(), point.len())?;
        for env in self.envelopes.iter().rev() {
            if env.contains_unchecked(point) {
                return Ok(env.alpha);
            }
        }
        Ok(0.0)
    }

    /// Reference implementation of [`depth`](Self::depth): evaluates every
    /// halfspace of every envelope.
    pub fn depth_exhaustive(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.dim(), point.len())?;
        let mut best = 0.0f64;
        for env in &self.envelopes {
            let mut inside = true;
            for (u, &q) in env.directions.iter().zip(&env.quantiles) {
                inside &= dot(u, point) >= q;
            }
            if inside && env.alpha > best {
                best = env.alpha;
            }
        }
        Ok(best)
    }

    /// Prepares ray casting from a fixed `center` through every envelope.
    pub fn ray_caster(&self, center: &[f64]) -> Result<RayCaster<'_>> {
        check_dim(self.dim(), center.len())?;
        check_finite(center)?;
        let dirs = self.directions();
        let proj = dirs.project(center);
        let slacks: Vec<Vec<f64>> = self
            .envelopes
            .iter()
            .map(|e| proj.iter().zip(&e.quantiles).map(|(p, q)| p - q).collect())
            .collect();
        let inside = slacks.iter().map(|s| s.iter().all(|&v| v >= 0.0)).collect();
        Ok(RayCaster { snapshot: self, center: center.to_vec(), slacks, inside, along: vec![0.0; dirs.len()] })
    }
}

/// Why a ray produced no intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayFailure {
    /// No halfspace bounds the line in the ray direction.
    Unbounded,
    /// The center lies outside the envelope and the ray never enters it.
    Missed,
}

/// Far end of the segment where the ray `center + t·d, t >= 0` meets the
/// envelope.
fn far_side_exit(slack: impl Iterator<Item = (f64, f64)>) -> core::result::Result<f64, RayFailure> {
    let (mut enter, mut exit) = (0.0f64, f64::INFINITY);
    for (slack, along) in slack {
        // need slack + t·along >= 0
        if along > 0.0 {
            enter = enter.max(-slack / along);
        } else if along < 0.0 {
            exit = exit.min(slack / -along);
        } else if slack < 0.0 {
            return Err(RayFailure::Missed);
        }
    }
    if !exit.is_finite() {
        Err(RayFailure::Unbounded)
    } else if enter <= exit {
        Ok(exit)
    } else {
        Err(RayFailure::Missed)
    }
}

/// Signed distance along `direction` to the first bounding hyperplane met by
/// the line: `min` over `along < 0` of `slack / -along`. Negative when the
/// center violates that halfspace.
#[inline]
fn signed_exit(slack: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let mut best = f64::INFINITY;
    for (slack, along) in slack {
        if along < 0.0 {
            let t = slack / -along;
            if t < best {
                best = t;
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Casts rays from one center through all envelopes of a snapshot, sharing
/// the direction projections between envelopes.
#[derive(Debug, Clone)]
pub struct RayCaster<'a> {
    snapshot: &'a DepthSnapshot,
    center: Vec<f64>,
    slacks: Vec<Vec<f64>>,
    inside: Vec<bool>,
    along: Vec<f64>,
}

impl RayCaster<'_> {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Whether the center lies in envelope `k`.
    pub fn center_inside(&self, k: usize) -> bool {
        self.inside[k]
    }

    /// Exit distances along unit `direction` for every envelope.
    ///
    /// If the center lies outside an envelope (possible for noisy estimates,
    /// whose inner envelopes can even be empty) the signed distance to the
    /// first bounding hyperplane in that direction is returned; for a ray that
    /// passes through the envelope this is still its exit point.
    pub fn cast(&mut self, direction: &[f64], out: &mut [core::result::Result<f64, RayFailure>]) {
        self.snapshot.directions().project_into(direction, &mut self.along);
        for (k, slot) in out.iter_mut().enumerate() {
            let pairs = self.slacks[k].iter().copied().zip(self.along.iter().copied());
            *slot = if self.inside[k] { exit_distance(pairs) } else { signed_exit(pairs) }.ok_or(RayFailure::Unbounded);
        }
    }

    /// As [`RayCaster::cast`], but for an envelope not containing the center
    /// the ray's exit point is used only if the ray passes through the
    /// envelope; otherwise [`RayFailure::Missed`]. Intercepts always lie on
    /// an envelope boundary.
    pub fn cast_far_side(&mut self, direction: &[f64], out: &mut [core::result::Result<f64, RayFailure>]) {
        self.snapshot.directions().project_into(direction, &mut self.along);
        for (k, slot) in out.iter_mut().enumerate() {
            let pairs = self.slacks[k].iter().copied().zip(self.along.iter().copied());
            *slot = if self.inside[k] { exit_distance(pairs).ok_or(RayFailure::Unbounded) } else { far_side_exit(pairs) };
        }
    }
}
