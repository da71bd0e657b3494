//! Streaming depth-contour estimation.
//!
//! A [`DepthTracker`] keeps one [`JointQuantileState`] per direction. Each
//! observation is projected onto every direction and fed to that direction's
//! joint estimator with one shared step size; a [`DepthSnapshot`] copies the
//! current estimates out as `K` nested envelopes.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{DepthSnapshot, DirectionSet, Envelope};
use crate::quantile::{type8_sorted, JointQuantileState, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    /// `n_u` directions drawn uniformly on the sphere.
    Uniform,
    /// `candidate_factor * n_u` uniform candidates thinned by
    /// [`DirectionSet::equidistant_filter`].
    Equidistant,
}

/// How the positivity shift of the multiplicative update is chosen from the
/// warm-up projections of one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffsetRule {
    /// `max(0, 1 - min)`: the smallest warm-up projection lands at 1.
    AboveMinimum,
    /// `c * spread - median`: the warm-up median lands at `c` standard
    /// deviations above zero. Translation equivariant; the relative gain of
    /// the update no longer depends on where the data sits.
    Spread(f64),
}

impl Default for OffsetRule {
    fn default() -> Self {
        OffsetRule::Spread(DEFAULT_SPREAD_OFFSET)
    }
}

/// Default `c` of [`OffsetRule::Spread`].
pub const DEFAULT_SPREAD_OFFSET: f64 = 10.0;

impl OffsetRule {
    /// Offset for one direction from its sorted warm-up projections.
    pub fn offset(&self, sorted: &[f64]) -> f64 {
        match *self {
            OffsetRule::AboveMinimum => (1.0 - sorted[0]).max(0.0),
            OffsetRule::Spread(c) => {
                let n = sorted.len() as f64;
                let mean = sorted.iter().sum::<f64>() / n;
                let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let mut spread = libm::sqrt(var);
                if !(spread > 1e-12 * mean.abs().max(1.0)) {
                    spread = 1.0;
                }
                let median = type8_sorted(sorted, 0.5);
                // every warm-up value must stay strictly positive after shifting
                (c * spread - median).max(spread - sorted[0])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub dim: usize,
    pub alphas: Vec<f64>,
    pub n_u: usize,
    pub direction_mode: DirectionMode,
    pub candidate_factor: usize,
    pub schedule: StepSchedule,
    pub seed: u64,
    pub warmup: usize,
    pub offset_rule: OffsetRule,
}

impl TrackerConfig {
    /// Uniform directions, `1/n` schedule, warm-up 10, default offset rule.
    pub fn new(dim: usize, alphas: Vec<f64>, n_u: usize, seed: u64) -> Self {
        Self {
            dim,
            alphas,
            n_u,
            direction_mode: DirectionMode::Uniform,
            candidate_factor: 10,
            schedule: StepSchedule::decay(),
            seed,
            warmup: 10,
            offset_rule: OffsetRule::default(),
        }
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_direction_mode(mut self, mode: DirectionMode) -> Self {
        self.direction_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidParameter(alloc::format!("dim must be >= 2, got {}", self.dim)));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidParameter("at least one alpha is required".into()));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidParameter("alphas must lie in (0,1)".into()));
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("alphas must be strictly increasing".into()));
        }
        if self.n_u < 1 {
            return Err(Error::InvalidParameter("n_u must be >= 1".into()));
        }
        if self.candidate_factor < 1 {
            return Err(Error::InvalidParameter("candidate_factor must be >= 1".into()));
        }
        if self.warmup < 1 {
            return Err(Error::InvalidParameter("warmup must be >= 1".into()));
        }
        if let OffsetRule::Spread(c) = self.offset_rule {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidParameter("spread offset factor must be positive".into()));
            }
        }
        Ok(())
    }

    /// Direction set implied by the mode, size and seed.
    pub fn build_directions(&self) -> Result<DirectionSet> {
        match self.direction_mode {
            DirectionMode::Uniform => DirectionSet::sample_uniform(self.dim, self.n_u, self.seed),
            DirectionMode::Equidistant => {
                DirectionSet::sample_uniform(self.dim, self.n_u * self.candidate_factor, self.seed)?
                    .equidistant_filter(self.n_u)
            }
        }
    }
}

/// The streaming estimator of `K` depth contours.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthTracker {
    config: TrackerConfig,
    directions: Arc<DirectionSet>,
    trackers: Vec<JointQuantileState>,
    schedule: StepSchedule,
    n: u64,
    warmup_buffer: Vec<f64>,
    projections: Vec<f64>,
    direction_updates: u64,
}

impl DepthTracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        let directions = Arc::new(config.build_directions()?);
        Ok(Self::with_directions(config, directions))
    }

    /// Tracker over a caller-supplied direction set (dimension taken from it).
    pub fn with_directions(mut config: TrackerConfig, directions: Arc<DirectionSet>) -> Self {
        config.dim = directions.dim();
        config.n_u = directions.len();
        let n_dirs = directions.len();
        let warmup = config.warmup;
        Self {
            schedule: config.schedule,
            warmup_buffer: Vec::with_capacity(warmup * config.dim),
            projections: vec![0.0; n_dirs],
            trackers: Vec::new(),
            directions,
            n: 0,
            direction_updates: 0,
            config,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.directions
    }

    /// Observations consumed since construction or the last reset.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_warm(&self) -> bool {
        !self.trackers.is_empty()
    }

    pub fn warmup_len(&self) -> usize {
        self.warmup_buffer.len() / self.config.dim
    }

    /// Per-direction joint estimators (empty during warm-up).
    pub fn trackers(&self) -> &[JointQuantileState] {
        &self.trackers
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    /// Single-direction joint updates since construction or the last reset.
    pub fn direction_updates(&self) -> u64 {
        self.direction_updates
    }

    /// Forgets all observations; keeps the configuration and directions.
    pub fn reset(&mut self) {
        self.trackers.clear();
        self.warmup_buffer.clear();
        self.schedule = self.config.schedule;
        self.n = 0;
        self.direction_updates = 0;
    }

    /// Consumes one observation. On error the tracker is unchanged.
    pub fn observe(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.config.dim, x.len())?;
        check_finite(x)?;
        self.n += 1;
        if self.trackers.is_empty() {
            self.warmup_buffer.extend_from_slice(x);
            if self.warmup_len() >= self.config.warmup {
                if let Err(e) = self.finish_warmup() {
                    self.warmup_buffer.truncate(self.warmup_buffer.len() - x.len());
                    self.n -= 1;
                    return Err(e);
                }
            }
            return Ok(());
        }
        let step = self.schedule.next_step();
        self.directions.project_into(x, &mut self.projections);
        for (tracker, &s) in self.trackers.iter_mut().zip(&self.projections) {
            tracker.update_unchecked(s, step);
        }
        self.direction_updates += self.trackers.len() as u64;
        Ok(())
    }

    fn finish_warmup(&mut self) -> Result<()> {
        let dim = self.config.dim;
        let count = self.warmup_len();
        let mut trackers = Vec::with_capacity(self.directions.len());
        let mut column = vec![0.0; count];
        let mut initial = vec![0.0; self.config.alphas.len()];
        for u in self.directions.iter() {
            for (c, x) in column.iter_mut().zip(self.warmup_buffer.chunks_exact(dim)) {
                *c = crate::linalg::dot(u, x);
            }
            column.sort_unstable_by(f64::total_cmp);
            let offset = self.config.offset_rule.offset(&column);
            for (v, &a) in initial.iter_mut().zip(&self.config.alphas) {
                *v = type8_sorted(&column, a);
            }
            trackers.push(JointQuantileState::new(&self.config.alphas, &initial, offset)?);
        }
        for &a in &self.config.alphas {
            // validated once here; the hot loop skips per-update checks
            let worst = if a > 0.5 { a } else { 1.0 - a };
            let first = self.schedule.starting_at(count as u64 + 1).peek();
            if first * worst >= 1.0 {
                return Err(Error::InvalidParameter(alloc::format!(
                    "step {first} too large for alpha {a}"
                )));
            }
        }
        self.trackers = trackers;
        self.warmup_buffer.clear();
        // the step counter continues from the warm-up count
        self.schedule = self.schedule.starting_at(count as u64 + 1);
        Ok(())
    }

    /// Immutable copy of the current contour estimates.
    pub fn snapshot(&self) -> Result<DepthSnapshot> {
        if self.trackers.is_empty() {
            return Err(Error::InvalidState(alloc::format!(
                "snapshot requested during warm-up ({} of {} observations)",
                self.warmup_len(),
                self.config.warmup
            )));
        }
        let envelopes = self
            .config
            .alphas
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let q = self.trackers.iter().map(|t| t.estimate(k)).collect();
                Envelope::new(self.directions.clone(), q, a)
            })
            .collect::<Result<Vec<_>>>()?;
        DepthSnapshot::new(envelopes, self.n)
    }
}

/// Estimated depth of `point` in `snapshot`.
pub fn estimate_depth(snapshot: &DepthSnapshot, point: &[f64]) -> Result<f64> {
    snapshot.depth(point)
}

/// Offline counterpart of [`DepthTracker`]: type-8 quantiles of every
/// projection of a complete sample.
pub fn offline_snapshot(
    directions: Arc<DirectionSet>,
    alphas: &[f64],
    samples: &[f64],
) -> Result<DepthSnapshot> {
    let dim = directions.dim();
    if samples.is_empty() || samples.len() % dim != 0 {
        return Err(Error::InvalidInput("sample matrix is empty or ragged".into()));
    }
    check_finite(samples)?;
    let n = samples.len() / dim;
    let mut quantiles = vec![Vec::with_capacity(directions.len()); alphas.len()];
    let mut column = vec![0.0; n];
    for u in directions.iter() {
        for (c, x) in column.iter_mut().zip(samples.chunks_exact(dim)) {
            *c = crate::linalg::dot(u, x);
        }
        column.sort_unstable_by(f64::total_cmp);
        for (q, &a) in quantiles.iter_mut().zip(alphas) {
            q.push(type8_sorted(&column, a));
        }
    }
    DepthSnapshot::from_quantiles(directions, alphas, quantiles, n as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn config(n_u: usize) -> TrackerConfig {
        TrackerConfig::new(2, vec![0.05, 0.2, 0.4], n_u, 17)
    }

    #[test]
    fn structure_after_init() {
        let t = DepthTracker::new(config(50)).unwrap();
        assert_eq!(t.directions().len(), 50);
        assert!(t.directions().is_normalized());
        assert!(!t.is_warm());
        let same = DepthTracker::new(config(50)).unwrap();
        assert_eq!(t.directions(), same.directions());
    }

    #[test]
    fn equidistant_mode_filters_ten_times_more_candidates() {
        let cfg = config(10).with_direction_mode(DirectionMode::Equidistant);
        let t = DepthTracker::new(cfg.clone()).unwrap();
        let candidates = DirectionSet::sample_uniform(2, 100, cfg.seed).unwrap();
        let expected = candidates.equidistant_filter(10).unwrap();
        assert_eq!(**t.directions(), expected);
    }

    #[test]
    fn warmup_buffers_then_initialises() {
        let mut t = DepthTracker::new(config(20)).unwrap();
        let mut rng = crate::seed::rng(1);
        for _ in 0..9 {
            let x = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            t.observe(&x).unwrap();
        }
        assert_eq!(t.warmup_len(), 9);
        assert!(matches!(t.snapshot(), Err(Error::InvalidState(_))));
        t.observe(&[0.0, 0.0]).unwrap();
        assert!(t.is_warm());
        assert_eq!(t.trackers().len(), 20);
        assert_eq!(t.schedule().counter(), 11);
    }

    #[test]
    fn rejected_observation_leaves_state() {
        let mut t = DepthTracker::new(config(5)).unwrap();
        for i in 0..12 {
            t.observe(&[i as f64, -(i as f64)]).unwrap();
        }
        let before = t.clone();
        assert!(t.observe(&[f64::NAN, 0.0]).is_err());
        assert!(t.observe(&[1.0, 2.0, 3.0]).is_err());
        assert_eq!(t, before);
    }

    #[test]
    fn constant_stream_estimates_equal_projections() {
        let c = [1.5, -0.25];
        let mut t = DepthTracker::new(config(30)).unwrap();
        for _ in 0..200 {
            t.observe(&c).unwrap();
        }
        let snap = t.snapshot().unwrap();
        let proj = t.directions().project(&c);
        for env in snap.envelopes() {
            for (q, p) in env.quantiles().iter().zip(&proj) {
                assert!((q - p).abs() < 1e-12, "{q} vs {p}");
            }
        }
    }

    #[test]
    fn each_observation_touches_every_direction_once() {
        let mut t = DepthTracker::new(config(37)).unwrap();
        for i in 0..10 {
            t.observe(&[i as f64, 1.0]).unwrap();
        }
        let before = t.direction_updates();
        t.observe(&[0.3, 0.1]).unwrap();
        assert_eq!(t.direction_updates() - before, 37);
    }

    #[test]
    fn snapshots_are_nested_and_stable() {
        let mut t = DepthTracker::new(config(25)).unwrap();
        let mut rng = crate::seed::rng(2);
        for _ in 0..500 {
            let x = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            t.observe(&x).unwrap();
        }
        let a = t.snapshot().unwrap();
        let b = t.snapshot().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        for i in 0..25 {
            let q: Vec<f64> = a.envelopes().iter().map(|e| e.quantiles()[i]).collect();
            assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
        t.observe(&[5.0, 5.0]).unwrap();
        assert_eq!(a, b);
        assert_ne!(t.snapshot().unwrap().timestamp(), a.timestamp());
    }

    #[test]
    fn reset_forgets_observations() {
        let mut t = DepthTracker::new(config(8)).unwrap();
        let fresh = t.clone();
        for i in 0..50 {
            t.observe(&[i as f64, 0.5 * i as f64]).unwrap();
        }
        t.reset();
        let mut t2 = fresh.clone();
        // direction_updates is a lifetime counter; compare the rest
        for i in 0..30 {
            t.observe(&[0.1 * i as f64, 1.0]).unwrap();
            t2.observe(&[0.1 * i as f64, 1.0]).unwrap();
        }
        assert_eq!(t.snapshot().unwrap(), t2.snapshot().unwrap());
    }

    #[test]
    fn offline_snapshot_matches_type8() {
        let dirs = Arc::new(DirectionSet::sample_uniform(2, 7, 3).unwrap());
        let mut rng = crate::seed::rng(4);
        let samples: Vec<f64> = (0..2 * 301).map(|_| rng.sample(StandardNormal)).collect();
        let snap = offline_snapshot(dirs.clone(), &[0.1, 0.5], &samples).unwrap();
        for (i, u) in dirs.iter().enumerate() {
            let col: Vec<f64> = samples.chunks_exact(2).map(|x| crate::linalg::dot(u, x)).collect();
            let want = crate::quantile::type8_quantile(&col, 0.1).unwrap();
            assert_eq!(snap.envelope(0).quantiles()[i], want);
        }
        assert!(offline_snapshot(dirs, &[0.1], &[]).is_err());
    }
}
