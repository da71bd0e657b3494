//! Distribution change detection from moving depth contours.
//!
//! Per observation: track the contours with a floored `max(1/t, λ_min)`
//! schedule; every `thinning` observations compare the current contours with
//! those `h` observations back (contour distance `EDₜ`); keep exponential
//! averages of `EDₜ` and `EDₜ²`; flag a change when
//! `EDₜ >= E(EDₜ) + η·SD(EDₜ)`, then restart from scratch.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::engine::{DepthTracker, TrackerConfig};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{DepthSnapshot, DirectionSet};
use crate::metrics::ed_between_snapshots;
use crate::quantile::StepSchedule;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Floor of the decaying step size.
    pub lambda_min: f64,
    /// Weight of the exponential averages (statistic and center).
    pub delta: f64,
    /// Lookback in observations.
    pub h: usize,
    pub eta: f64,
    pub alphas: Vec<f64>,
    pub n_u: usize,
    /// Rays used for the contour distance.
    pub n_v: usize,
    /// A snapshot (and a statistic) every `thinning` observations.
    pub thinning: usize,
    /// Observations after the lookback buffer first fills during which the
    /// statistic is not averaged (the restarted tracker is still converging).
    pub settle: usize,
    /// Observations after a (re)start during which no change is reported.
    /// `None` selects [`DetectorParams::default_mute`].
    pub warmup_mute: Option<usize>,
    pub warmup: usize,
    pub seed: u64,
}

impl DetectorParams {
    pub fn new(alphas: Vec<f64>, n_u: usize, seed: u64) -> Self {
        Self {
            lambda_min: 0.003,
            delta: 0.005,
            h: 200,
            eta: 4.0,
            alphas,
            n_u,
            n_v: 100,
            thinning: 5,
            settle: 600,
            warmup_mute: None,
            warmup: 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(alloc::format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if self.h < 1 {
            return Err(Error::InvalidParameter("h must be >= 1".into()));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("eta must be positive, got {}", self.eta)));
        }
        if self.thinning < 1 || self.n_v < 1 {
            return Err(Error::InvalidParameter("thinning and n_v must be >= 1".into()));
        }
        StepSchedule::floored_decay(self.lambda_min)?;
        Ok(())
    }

    /// Snapshots between the two compared contours.
    pub fn lag(&self) -> usize {
        self.h.div_ceil(self.thinning)
    }

    /// Observations after a (re)start before the statistic enters the
    /// averages: tracker warm-up, refilling the lookback buffer, settling.
    pub fn averaging_start(&self) -> usize {
        self.warmup + self.lag() * self.thinning + self.settle
    }

    /// [`DetectorParams::averaging_start`] plus `⌈1/δ⌉` statistics so the
    /// averages describe the new regime.
    pub fn default_mute(&self) -> usize {
        let burn_in = libm::ceil(1.0 / self.delta) as usize * self.thinning;
        self.averaging_start() + burn_in
    }

    pub fn mute(&self) -> usize {
        self.warmup_mute.unwrap_or_else(|| self.default_mute())
    }

    /// `mean + η·sd`.
    pub fn threshold(&self, mean: f64, sd: f64) -> f64 {
        mean + self.eta * sd
    }

    fn tracker_config(&self, dim: usize) -> Result<TrackerConfig> {
        let mut c = TrackerConfig::new(dim, self.alphas.clone(), self.n_u, seed::derive(self.seed, 1))
            .with_schedule(StepSchedule::floored_decay(self.lambda_min)?);
        c.warmup = self.warmup;
        Ok(c)
    }
}

/// `ed >= threshold`.
pub fn fires(ed: f64, threshold: f64) -> bool {
    ed >= threshold
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeEvent {
    /// Observation index (from 1) at which the change was flagged.
    pub t: u64,
    pub ed_value: f64,
    pub threshold: f64,
}

/// Exponential averages of the statistic and its square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdAverages {
    pub mean: f64,
    pub mean_sq: f64,
    pub count: u64,
}

impl EdAverages {
    /// `√(E(ED²) - E(ED)²)`, clamped at zero.
    pub fn sd(&self) -> f64 {
        libm::sqrt((self.mean_sq - self.mean * self.mean).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    params: DetectorParams,
    tracker: DepthTracker,
    rays: DirectionSet,
    buffer: VecDeque<DepthSnapshot>,
    averages: Option<EdAverages>,
    center: Option<Vec<f64>>,
    clock: u64,
    since_restart: u64,
    last_ed: Option<f64>,
    restarts: u64,
}

impl Detector {
    pub fn new(dim: usize, params: DetectorParams) -> Result<Self> {
        params.validate()?;
        let tracker = DepthTracker::new(params.tracker_config(dim)?)?;
        let rays = DirectionSet::sample_uniform(dim, params.n_v, seed::derive(params.seed, 2))?;
        Ok(Self {
            buffer: VecDeque::with_capacity(params.lag() + 1),
            params,
            tracker,
            rays,
            averages: None,
            center: None,
            clock: 0,
            since_restart: 0,
            last_ed: None,
            restarts: 0,
        })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn tracker(&self) -> &DepthTracker {
        &self.tracker
    }

    pub fn averages(&self) -> Option<EdAverages> {
        self.averages
    }

    pub fn center(&self) -> Option<&[f64]> {
        self.center.as_deref()
    }

    pub fn buffered_snapshots(&self) -> impl Iterator<Item = &DepthSnapshot> {
        self.buffer.iter()
    }

    /// Observations consumed in total.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn since_restart(&self) -> u64 {
        self.since_restart
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// Most recent contour distance.
    pub fn last_ed(&self) -> Option<f64> {
        self.last_ed
    }

    fn restart(&mut self) {
        self.tracker.reset();
        self.buffer.clear();
        self.averages = None;
        self.center = None;
        self.since_restart = 0;
        self.last_ed = None;
        self.restarts += 1;
    }

    pub fn observe(&mut self, x: &[f64]) -> Result<Option<ChangeEvent>> {
        check_dim(self.tracker.config().dim, x.len())?;
        check_finite(x)?;
        self.tracker.observe(x)?;
        self.clock += 1;
        self.since_restart += 1;
        let d = self.params.delta;
        match &mut self.center {
            None => self.center = Some(x.to_vec()),
            Some(c) => c.iter_mut().zip(x).for_each(|(c, v)| *c = (1.0 - d) * *c + d * v),
        }
        if !self.tracker.is_warm() || self.since_restart % self.params.thinning as u64 != 0 {
            return Ok(None);
        }
        let lag = self.params.lag();
        if self.buffer.len() > lag {
            self.buffer.pop_front();
        }
        self.buffer.push_back(self.tracker.snapshot()?);
        if self.buffer.len() <= lag {
            return Ok(None);
        }
        let center = self.center.as_deref().expect("set above");
        let newest = self.buffer.back().expect("non-empty");
        let oldest = self.buffer.front().expect("non-empty");
        let ed = match ed_between_snapshots(newest, oldest, center, &self.rays) {
            Ok(r) => r.mean,
            // every ray unbounded for some contour: no statistic this step
            Err(Error::Precondition(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        self.last_ed = Some(ed);
        // compare against the averages before they absorb EDₜ
        let event = match self.averages {
            Some(avg) if self.since_restart > self.params.mute() as u64 => {
                let threshold = self.params.threshold(avg.mean, avg.sd());
                fires(ed, threshold).then_some(ChangeEvent { t: self.clock, ed_value: ed, threshold })
            }
            _ => None,
        };
        if self.since_restart <= self.params.averaging_start() as u64 {
            return Ok(None);
        }
        self.averages = Some(match self.averages {
            None => EdAverages { mean: ed, mean_sq: ed * ed, count: 1 },
            Some(a) => EdAverages {
                mean: (1.0 - d) * a.mean + d * ed,
                mean_sq: (1.0 - d) * a.mean_sq + d * ed * ed,
                count: a.count + 1,
            },
        });
        if event.is_some() {
            self.restart();
        }
        Ok(event)
    }
}

/// Detection quality against known change times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean of `event - change` over correct detections.
    pub mean_delay: Option<f64>,
    pub correct: usize,
    pub false_alarms: usize,
}

/// Scores `events` against sorted change times `truth`.
///
/// The first event in `[truthᵢ, truthᵢ₊₁)` is the detection of change `i`
/// (if within `horizon` of it); every other event is false.
pub fn score_detections(events: &[u64], truth: &[u64], horizon: Option<u64>) -> ScoreReport {
    let mut detected = alloc::vec![false; truth.len()];
    let mut correct = 0;
    let mut delay_sum = 0.0;
    let mut sorted = events.to_vec();
    sorted.sort_unstable();
    for &e in &sorted {
        let i = truth.partition_point(|&c| c <= e);
        if i == 0 {
            continue;
        }
        let i = i - 1;
        let delay = e - truth[i];
        if detected[i] || horizon.is_some_and(|h| delay > h) {
            continue;
        }
        detected[i] = true;
        correct += 1;
        delay_sum += delay as f64;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(correct, events.len());
    let recall = ratio(correct, truth.len());
    let f1 = if precision > 0.0 && recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    ScoreReport {
        precision,
        recall,
        f1,
        mean_delay: (correct > 0).then(|| delay_sum / correct as f64),
        correct,
        false_alarms: events.len() - correct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::GaussianModel;
    use crate::synth::{alternating_regimes, RegimeStream, StreamKind, StreamSpec};

    fn params(eta: f64, seed: u64) -> DetectorParams {
        let mut p = DetectorParams::new(alloc::vec![0.05, 0.2, 0.4], 20, seed);
        p.eta = eta;
        p
    }

    fn run(det: &mut Detector, data: &[Vec<f64>]) -> Vec<u64> {
        data.iter().filter_map(|x| det.observe(x).unwrap()).map(|e| e.t).collect()
    }

    #[test]
    fn score_fixture() {
        let r = score_detections(&[110, 150, 160], &[100], None);
        assert!((r.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 0.5).abs() < 1e-15);
        assert_eq!(r.mean_delay, Some(10.0));
        assert_eq!((r.correct, r.false_alarms), (1, 2));
    }

    #[test]
    fn score_exact_and_empty() {
        let r = score_detections(&[10, 20, 30], &[10, 20, 30], None);
        assert_eq!((r.precision, r.recall, r.f1, r.mean_delay), (1.0, 1.0, 1.0, Some(0.0)));
        let r = score_detections(&[], &[10], None);
        assert_eq!((r.precision, r.recall, r.f1, r.mean_delay), (0.0, 0.0, 0.0, None));
        let r = score_detections(&[], &[], None);
        assert_eq!(r.f1, 0.0);
        // before any change, and too late
        let r = score_detections(&[5, 400], &[10], Some(100));
        assert_eq!((r.correct, r.false_alarms), (0, 2));
    }

    #[test]
    fn boundary_fires() {
        assert!(fires(1.5, 1.5));
        assert!(!fires(1.5 - 1e-12, 1.5));
        let p = params(8.0, 0);
        assert_eq!(p.threshold(1.0, 0.25), 3.0);
    }

    #[test]
    fn parameter_validation() {
        let mut p = params(5.0, 0);
        p.delta = 1.0;
        assert!(Detector::new(2, p).is_err());
        let mut p = params(5.0, 0);
        p.h = 0;
        assert!(Detector::new(2, p).is_err());
        assert!(Detector::new(2, params(0.0, 0)).is_err());
        let mut det = Detector::new(2, params(5.0, 0)).unwrap();
        assert!(det.observe(&[f64::NAN, 0.0]).is_err());
        assert!(det.observe(&[0.0]).is_err());
        assert_eq!(det.clock(), 0);
    }

    #[test]
    fn sd_is_clamped() {
        let a = EdAverages { mean: 2.0, mean_sq: 4.0 - 1e-15, count: 3 };
        assert_eq!(a.sd(), 0.0);
    }

    fn static_data(n: u64, seed: u64) -> Vec<Vec<f64>> {
        StreamSpec::new(StreamKind::StaticGaussian(GaussianModel::standard(2)), n, seed)
            .stream()
            .unwrap()
            .map(|o| o.unwrap().values)
            .collect()
    }

    #[test]
    fn quiet_on_a_stationary_stream() {
        let mut quiet = 0;
        for s in 0..20 {
            let data = static_data(10_000, 100 + s);
            let mut det = Detector::new(2, params(8.0, s)).unwrap();
            if run(&mut det, &data).is_empty() {
                quiet += 1;
            }
        }
        assert!(quiet >= 19, "{quiet} of 20 quiet");
    }

    #[test]
    fn detects_mean_switches() {
        let a = GaussianModel::standard(2);
        let b = GaussianModel::new(alloc::vec![2.0, 2.0], crate::linalg::Matrix::identity(2)).unwrap();
        let mut good = 0;
        for s in 0..10 {
            let stream = RegimeStream::new(alloc::vec![a.clone(), b.clone()], 2000, 6, 50 + s).unwrap();
            let truth = stream.change_points();
            let data: Vec<Vec<f64>> = stream.map(|(o, _)| o.values).collect();
            let mut det = Detector::new(2, params(5.0, s)).unwrap();
            let events = run(&mut det, &data);
            let r = score_detections(&events, &truth, Some(500));
            if r.recall == 1.0 {
                good += 1;
            }
        }
        assert!(good >= 9, "{good} of 10");
    }

    #[test]
    fn mute_window_after_restart() {
        let stream = RegimeStream::new(alternating_regimes(), 2000, 8, 7).unwrap();
        let data: Vec<Vec<f64>> = stream.map(|(o, _)| o.values).collect();
        let p = params(3.0, 1);
        let mute = p.mute() as u64;
        let mut det = Detector::new(2, p).unwrap();
        let events = run(&mut det, &data);
        assert!(!events.is_empty());
        assert!(events[0] > mute);
        for w in events.windows(2) {
            assert!(w[1] - w[0] > mute, "{events:?}");
        }
    }

    #[test]
    fn restart_forgets_the_past() {
        let stream = RegimeStream::new(alternating_regimes(), 2000, 3, 9).unwrap();
        let data: Vec<Vec<f64>> = stream.map(|(o, _)| o.values).collect();
        let mut det = Detector::new(2, params(5.0, 3)).unwrap();
        let mut first = None;
        for x in &data {
            if let Some(e) = det.observe(x).unwrap() {
                first = Some(e.t as usize);
                break;
            }
        }
        let cut = first.expect("a change is flagged");
        let mut fresh = Detector::new(2, params(5.0, 3)).unwrap();
        for x in &data[cut..] {
            let a = det.observe(x).unwrap();
            let b = fresh.observe(x).unwrap();
            assert_eq!(a.map(|e| e.ed_value), b.map(|e| e.ed_value));
        }
        assert_eq!(det.tracker(), fresh.tracker());
        assert_eq!(det.averages(), fresh.averages());
        assert_eq!(det.center(), fresh.center());
        assert!(det.buffered_snapshots().eq(fresh.buffered_snapshots()));
    }

    #[test]
    fn raising_eta_never_adds_detections() {
        let stream = RegimeStream::new(alternating_regimes(), 2000, 8, 21).unwrap();
        let data: Vec<Vec<f64>> = stream.map(|(o, _)| o.values).collect();
        let mut prev = usize::MAX;
        for eta in [2.0, 3.0, 5.0, 8.0, 12.0] {
            let mut det = Detector::new(2, params(eta, 4)).unwrap();
            let n = run(&mut det, &data).len();
            assert!(n <= prev, "eta {eta}: {n} > {prev}");
            prev = n;
        }
    }
}
