//! Univariate quantile estimators.
//!
//! * [`QuantileState`]: the deterministic multiplicative incremental estimator
//!   (one stored value, one multiplicative update per sample).
//! * [`JointQuantileState`]: several such estimators over the same stream, kept
//!   in non-decreasing order of probability.
//! * [`type8_quantile`]: the offline median-unbiased order-statistic
//!   interpolation (Hyndman & Fan type 8).
//! * [`StepSchedule`]: constant, `1/n`, and floored `max(1/n, λ_min)` step sizes.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Minimum spacing enforced between neighbouring joint estimates after an
/// ordering repair.
pub const DEFAULT_MIN_GAP: f64 = 1e-9;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!("alpha must lie in (0,1), got {alpha}")))
    }
}

fn check_step(step: f64, alpha: f64) -> Result<()> {
    let worst = if alpha > 0.5 { alpha } else { 1.0 - alpha };
    if step > 0.0 && step * worst < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "step {step} out of range for alpha {alpha} (need 0 < step*max(alpha,1-alpha) < 1)"
        )))
    }
}

/// Incremental estimate of the `alpha`-quantile of a univariate stream.
///
/// The multiplicative update only moves in the right direction for positive
/// values, so it runs in shifted coordinates `q + offset` with a fixed offset
/// chosen at initialisation such that `estimate + offset > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileState {
    estimate: f64,
    alpha: f64,
    offset: f64,
}

impl QuantileState {
    pub fn new(alpha: f64, estimate: f64, offset: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !estimate.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidParameter("estimate and offset must be finite".into()));
        }
        if !(estimate + offset > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "estimate + offset must be positive, got {}",
                estimate + offset
            )));
        }
        Ok(Self { estimate, alpha, offset })
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// One multiplicative update with step size `step`.
    ///
    /// Ties (`sample == estimate`) leave the state unchanged.
    pub fn update(&mut self, sample: f64, step: f64) -> Result<()> {
        if !sample.is_finite() {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        check_step(step, self.alpha)?;
        self.update_unchecked(sample, step);
        Ok(())
    }

    #[inline]
    pub(crate) fn update_unchecked(&mut self, sample: f64, step: f64) {
        let shifted = self.estimate + self.offset;
        let s = sample + self.offset;
        let next = if s > shifted {
            (1.0 + step * self.alpha) * shifted
        } else if s < shifted {
            (1.0 - step * (1.0 - self.alpha)) * shifted
        } else {
            return;
        };
        self.estimate = next - self.offset;
    }

    #[inline]
    fn shifted(&self) -> f64 {
        self.estimate + self.offset
    }
}

/// Joint incremental estimates for an increasing list of probabilities.
///
/// Every state receives the same multiplicative update; afterwards any
/// ordering violation is repaired by the smallest (least-squares) shift of the
/// offending estimates that restores spacing of at least `min_gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointQuantileState {
    states: Vec<QuantileState>,
    min_gap: f64,
}

impl JointQuantileState {
    /// Builds a joint state from per-alpha initial estimates and a shared offset.
    ///
    /// Initial estimates out of order are repaired immediately.
    pub fn new(alphas: &[f64], estimates: &[f64], offset: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidParameter("at least one alpha is required".into()));
        }
        if alphas.len() != estimates.len() {
            return Err(Error::InvalidParameter("one initial estimate per alpha is required".into()));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("alphas must be strictly increasing".into()));
        }
        let states = alphas
            .iter()
            .zip(estimates)
            .map(|(&a, &e)| QuantileState::new(a, e, offset))
            .collect::<Result<Vec<_>>>()?;
        let mut joint = Self { states, min_gap: DEFAULT_MIN_GAP };
        joint.restore_order();
        Ok(joint)
    }

    pub fn with_min_gap(mut self, min_gap: f64) -> Self {
        self.min_gap = min_gap.max(0.0);
        self
    }

    pub fn states(&self) -> &[QuantileState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn estimate(&self, k: usize) -> f64 {
        self.states[k].estimate
    }

    pub fn estimates(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.estimate)
    }

    pub fn offset(&self) -> f64 {
        self.states[0].offset
    }

    pub fn update(&mut self, sample: f64, step: f64) -> Result<()> {
        if !sample.is_finite() {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        for s in &self.states {
            check_step(step, s.alpha)?;
        }
        self.update_unchecked(sample, step);
        Ok(())
    }

    #[inline]
    pub(crate) fn update_unchecked(&mut self, sample: f64, step: f64) {
        for s in &mut self.states {
            s.update_unchecked(sample, step);
        }
        if self.states.windows(2).any(|w| w[1].estimate < w[0].estimate) {
            self.restore_order();
        }
    }

    /// Least-squares projection of the shifted estimates onto
    /// `{v : v[k+1] - v[k] >= min_gap}` (pool-adjacent-violators on `v[k] - k*gap`).
    fn restore_order(&mut self) {
        let gap = self.min_gap;
        if self.states.windows(2).all(|w| w[1].estimate >= w[0].estimate) {
            return;
        }
        // (sum, count) blocks of the gap-adjusted values
        let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(self.states.len());
        for (k, s) in self.states.iter().enumerate() {
            blocks.push((s.shifted() - k as f64 * gap, 1));
            while blocks.len() > 1 {
                let (s1, c1) = blocks[blocks.len() - 1];
                let (s0, c0) = blocks[blocks.len() - 2];
                if s0 / c0 as f64 > s1 / c1 as f64 {
                    blocks.pop();
                    let last = blocks.len() - 1;
                    blocks[last] = (s0 + s1, c0 + c1);
                } else {
                    break;
                }
            }
        }
        let mut k = 0;
        for (sum, count) in blocks {
            let level = sum / count as f64;
            for _ in 0..count {
                let s = &mut self.states[k];
                let shifted = (level + k as f64 * gap).max(f64::MIN_POSITIVE);
                s.estimate = shifted - s.offset;
                k += 1;
            }
        }
    }
}

/// Type-8 sample quantile of an already sorted, non-empty sample.
///
/// `(1-δ)·y[j] + δ·y[j+1]` with `m = (α+1)/3`, `j = ⌊Nα + m⌋`, `δ = Nα + m - j`
/// (1-based order statistics), clamped to the extreme order statistics.
pub fn type8_sorted(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let nf = n as f64;
    let mut h = nf * alpha + (alpha + 1.0) / 3.0;
    // snap knots (α = (k - 1/3)/(N + 1/3)) that land a rounding error below k
    let nearest = libm::round(h);
    if (h - nearest).abs() <= 8.0 * f64::EPSILON * nearest.max(1.0) {
        h = nearest;
    }
    let j = libm::floor(h);
    let delta = h - j;
    if j < 1.0 {
        return sorted[0];
    }
    if j >= nf {
        return sorted[n - 1];
    }
    let j = j as usize;
    let lo = sorted[j - 1];
    let hi = sorted[j];
    if delta == 0.0 {
        lo
    } else {
        lo + delta * (hi - lo)
    }
}

/// Type-8 sample quantile of `samples` at probability `alpha`.
pub fn type8_quantile(samples: &[f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample value".into()));
    }
    check_alpha(alpha)?;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(type8_sorted(&sorted, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Always `lambda`.
    Constant,
    /// `1/n`.
    Decay,
    /// `max(1/n, lambda_min)`.
    FlooredDecay,
}

/// Step-size sequence for the incremental updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    mode: ScheduleMode,
    lambda: f64,
    lambda_min: f64,
    n: u64,
}

impl StepSchedule {
    pub fn constant(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { mode: ScheduleMode::Constant, lambda, lambda_min: 0.0, n: 1 })
    }

    pub fn decay() -> Self {
        Self { mode: ScheduleMode::Decay, lambda: 1.0, lambda_min: 0.0, n: 1 }
    }

    pub fn floored_decay(lambda_min: f64) -> Result<Self> {
        if !(lambda_min >= 0.0) || !lambda_min.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "lambda_min must be non-negative, got {lambda_min}"
            )));
        }
        Ok(Self { mode: ScheduleMode::FlooredDecay, lambda: 1.0, lambda_min, n: 1 })
    }

    /// Same schedule with the update counter positioned at `n` (>= 1).
    pub fn starting_at(mut self, n: u64) -> Self {
        self.n = n.max(1);
        self
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Counter of the next step to be emitted.
    pub fn counter(&self) -> u64 {
        self.n
    }

    /// Step for the current counter, without advancing.
    pub fn peek(&self) -> f64 {
        let decayed = 1.0 / self.n as f64;
        match self.mode {
            ScheduleMode::Constant => self.lambda,
            ScheduleMode::Decay => decayed,
            ScheduleMode::FlooredDecay => decayed.max(self.lambda_min),
        }
    }

    /// Emits the step for the current counter and advances it.
    pub fn next_step(&mut self) -> f64 {
        let step = self.peek();
        self.n += 1;
        step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn update_above_and_below() {
        let mut s = QuantileState::new(0.5, 1.0, 0.0).unwrap();
        s.update(2.0, 0.1).unwrap();
        assert!(close(s.estimate(), 1.05, 1e-15));
        let mut s = QuantileState::new(0.5, 1.0, 0.0).unwrap();
        s.update(0.5, 0.1).unwrap();
        assert!(close(s.estimate(), 0.95, 1e-15));
    }

    #[test]
    fn tie_is_a_no_op() {
        let mut s = QuantileState::new(0.3, 2.0, 1.0).unwrap();
        s.update(2.0, 0.5).unwrap();
        assert_eq!(s.estimate(), 2.0);
    }

    #[test]
    fn offset_moves_negative_estimates_the_right_way() {
        let mut s = QuantileState::new(0.5, -2.0, 5.0).unwrap();
        s.update(0.0, 0.1).unwrap();
        assert!(s.estimate() > -2.0);
        s.update(-10.0, 0.1).unwrap();
        assert!(s.estimate() + s.offset() > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut s = QuantileState::new(0.5, 1.0, 0.0).unwrap();
        assert!(matches!(s.update(f64::NAN, 0.1), Err(Error::InvalidInput(_))));
        assert!(matches!(s.update(1.0, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(s.update(1.0, 2.0), Err(Error::InvalidParameter(_))));
        assert!(QuantileState::new(1.0, 1.0, 0.0).is_err());
        assert!(QuantileState::new(0.5, -1.0, 0.5).is_err());
        assert_eq!(s.estimate(), 1.0);
    }

    #[test]
    fn joint_from_equal_estimates_stays_ordered() {
        for sample in [-3.0, 0.0, 0.5, 4.0] {
            let mut j = JointQuantileState::new(&[0.25, 0.5, 0.75], &[0.0; 3], 1.0).unwrap();
            j.update(sample, 0.3).unwrap();
            let e: Vec<f64> = j.estimates().collect();
            assert!(e.windows(2).all(|w| w[0] <= w[1]), "{e:?}");
        }
    }

    #[test]
    fn single_alpha_joint_matches_scalar() {
        let mut rng = crate::seed::rng(3);
        let mut j = JointQuantileState::new(&[0.5], &[0.2], 3.0).unwrap();
        let mut s = QuantileState::new(0.5, 0.2, 3.0).unwrap();
        for n in 1..2000u64 {
            let x: f64 = rng.sample(StandardNormal);
            let step = 1.0 / (n + 10) as f64;
            j.update(x, step).unwrap();
            s.update(x, step).unwrap();
            assert_eq!(j.estimate(0), s.estimate());
        }
    }

    #[test]
    fn repair_is_least_squares_with_gap() {
        // shifted values 3, 1, 2 -> pooled mean 2 (minus gap terms)
        let j = JointQuantileState::new(&[0.1, 0.2, 0.3], &[3.0, 1.0, 2.0], 0.0)
            .unwrap()
            .with_min_gap(0.0);
        let e: Vec<f64> = j.estimates().collect();
        assert!(e.windows(2).all(|w| w[0] <= w[1]));
        let j = JointQuantileState::new(&[0.1, 0.2], &[3.0, 1.0], 0.0).unwrap();
        assert!(close(j.estimate(0), 2.0 - 0.5e-9, 1e-12));
        assert!(close(j.estimate(1), 2.0 + 0.5e-9, 1e-12));
        assert!(j.estimate(1) - j.estimate(0) >= 1e-9 * 0.999);
    }

    #[test]
    fn type8_examples() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(type8_quantile(&s, 0.5).unwrap(), 3.0);
        assert!(close(type8_quantile(&s, 0.25).unwrap(), 5.0 / 3.0, 1e-12));
        assert_eq!(type8_quantile(&[2.5; 7], 0.13).unwrap(), 2.5);
        assert!(matches!(type8_quantile(&[], 0.5), Err(Error::InvalidInput(_))));
        // clamping at the extremes
        assert_eq!(type8_quantile(&s, 0.01).unwrap(), 1.0);
        assert_eq!(type8_quantile(&s, 0.99).unwrap(), 5.0);
    }

    #[test]
    fn type8_hits_interpolation_knots_exactly() {
        for n in [1usize, 2, 5, 17, 100, 1001] {
            let sample: Vec<f64> = (1..=n).map(|v| v as f64).collect();
            for k in 1..=n {
                let alpha = (k as f64 - 1.0 / 3.0) / (n as f64 + 1.0 / 3.0);
                assert_eq!(type8_quantile(&sample, alpha).unwrap(), k as f64, "n={n} k={k}");
            }
        }
    }

    /// Independent transcription of the type-8 definition: linear interpolation
    /// through the knots (p_k, y_k) with p_k = (k - 1/3)/(N + 1/3).
    fn type8_by_knots(sorted: &[f64], alpha: f64) -> f64 {
        let n = sorted.len() as f64;
        let knot = |k: usize| (k as f64 - 1.0 / 3.0) / (n + 1.0 / 3.0);
        if alpha <= knot(1) {
            return sorted[0];
        }
        if alpha >= knot(sorted.len()) {
            return sorted[sorted.len() - 1];
        }
        let k = (1..sorted.len()).find(|&k| knot(k) <= alpha && alpha < knot(k + 1)).unwrap();
        let t = (alpha - knot(k)) / (knot(k + 1) - knot(k));
        sorted[k - 1] + t * (sorted[k] - sorted[k - 1])
    }

    #[test]
    fn type8_agrees_with_knot_interpolation() {
        let mut rng = crate::seed::rng(11);
        for _ in 0..200 {
            let n = rng.random_range(1..60);
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            v.sort_unstable_by(f64::total_cmp);
            let alpha: f64 = rng.random_range(0.001..0.999);
            let got = type8_sorted(&v, alpha);
            let want = type8_by_knots(&v, alpha);
            assert!(close(got, want, 1e-12), "n={n} alpha={alpha} {got} {want}");
        }
    }

    #[test]
    fn schedule_examples() {
        let mut s = StepSchedule::floored_decay(0.01).unwrap().starting_at(5);
        assert_eq!(s.next_step(), 0.2);
        assert_eq!(s.counter(), 6);
        let mut s = StepSchedule::floored_decay(0.01).unwrap().starting_at(1000);
        assert_eq!(s.next_step(), 0.01);
        let mut s = StepSchedule::decay();
        assert_eq!(s.next_step(), 1.0);
        assert_eq!(s.next_step(), 0.5);
        let mut s = StepSchedule::constant(0.05).unwrap();
        assert_eq!(s.next_step(), 0.05);
        assert!(StepSchedule::constant(0.0).is_err());
        assert!(StepSchedule::floored_decay(-1.0).is_err());
    }

    #[test]
    fn fixed_point_drift_is_zero_at_true_quantile() {
        // Mean signed update at the true 0.9-quantile of N(0,1).
        let alpha = 0.9;
        let q = crate::normal::quantile(alpha);
        let offset = 10.0;
        let step = 1e-3;
        let mut rng = crate::seed::rng(5);
        let n = 100_000;
        let mut moves = vec![0.0; n];
        for m in moves.iter_mut() {
            let mut s = QuantileState::new(alpha, q, offset).unwrap();
            s.update_unchecked(rng.sample(StandardNormal), step);
            *m = s.estimate() - q;
        }
        let mean = moves.iter().sum::<f64>() / n as f64;
        let var = moves.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1) as f64;
        let se = libm::sqrt(var / n as f64);
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn decaying_steps_converge_to_the_sample_quantile() {
        let mut rng = crate::seed::rng(11);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let alphas = [0.05, 0.2, 0.5];
        let mut joint = JointQuantileState::new(&alphas, &[0.0, 0.0, 0.0], 10.0).unwrap();
        let mut schedule = StepSchedule::decay().starting_at(2);
        for &x in &xs {
            joint.update_unchecked(x, schedule.next_step());
        }
        let mut sorted = xs.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        for (k, &a) in alphas.iter().enumerate() {
            let want = type8_sorted(&sorted, a);
            let got = joint.estimate(k);
            assert!((got - want).abs() < 0.02, "alpha {a}: {got} vs {want}");
        }
    }
}
