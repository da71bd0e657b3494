//! Run configuration: a TOML file whose sections mirror the core parameter
//! records. Every key is optional; command-line flags override file values.
//!
//! ```toml
//! seed = 7
//! [stream]    # kind, dim, length, period, covariance, rate, segment, count
//! [tracker]   # alphas, n_u, directions, schedule, lambda, lambda_min, warmup, offset_spread
//! [metrics]   # n_v, mc_samples, mc_directions
//! [track]     # lambdas, periods, checkpoints_per_period
//! [detector]  # alphas, n_u, lambda_min, delta, h, eta, n_v, thinning, settle, mute
//! [bench]     # dims, n_u, target, cap, seeds, throughput_updates
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use qdepth_core::linalg::Matrix;
use qdepth_core::synth::{self, RegimeStream, StreamKind, StreamSpec};
use qdepth_core::{seed, DetectorParams, DirectionMode, GaussianModel, OffsetRule, StepSchedule, TrackerConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub stream: StreamSection,
    pub tracker: TrackerSection,
    pub metrics: MetricsSection,
    pub track: TrackSection,
    pub detector: DetectorSection,
    pub bench: BenchSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Independent sub-seeds fanned out from the top-level seed.
    pub fn sub_seed(&self, slot: Slot) -> u64 {
        seed::derive(self.seed, slot as u64)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Slot {
    Stream = 10,
    Tracker = 11,
    Rays = 12,
    MonteCarlo = 13,
    Detector = 14,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    StaticGaussian,
    StaticLognormal,
    DynamicGaussian,
    /// Labelled sequence of Gaussian regimes.
    Regimes,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceName {
    Identity,
    /// `exp(-rate·|i-j|)`.
    Ar,
    /// Bivariate, correlation 0.82.
    Pair,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub kind: KindName,
    pub dim: usize,
    pub length: u64,
    pub period: f64,
    pub covariance: CovarianceName,
    pub rate: f64,
    pub segment: u64,
    pub count: usize,
}

impl Default for StreamSection {
    fn default() -> Self {
        Self {
            kind: KindName::StaticGaussian,
            dim: 2,
            length: 10_000,
            period: 1_000.0,
            covariance: CovarianceName::Identity,
            rate: 0.2,
            segment: 2_000,
            count: 8,
        }
    }
}

impl StreamSection {
    pub fn effective_dim(&self) -> usize {
        match (self.kind, self.covariance) {
            (KindName::Regimes, _) => 2,
            (KindName::DynamicGaussian, _) => self.dim,
            (_, CovarianceName::Pair) => 2,
            _ => self.dim,
        }
    }

    /// Zero-mean Gaussian with the configured covariance.
    pub fn gaussian(&self) -> Result<GaussianModel> {
        let p = self.effective_dim();
        let cov = match self.covariance {
            CovarianceName::Identity => Matrix::identity(p),
            CovarianceName::Ar => synth::ar_covariance(p, self.rate)?,
            CovarianceName::Pair => return Ok(synth::correlated_pair()),
        };
        Ok(GaussianModel::new(vec![0.0; p], cov)?)
    }

    /// Spec of the unlabelled kinds.
    pub fn spec(&self, seed: u64) -> Result<StreamSpec> {
        if self.dim == 0 {
            bail!("stream dim must be >= 1");
        }
        let kind = match self.kind {
            KindName::StaticGaussian => StreamKind::StaticGaussian(self.gaussian()?),
            KindName::StaticLognormal => StreamKind::StaticLognormal(self.gaussian()?),
            KindName::DynamicGaussian => {
                if !(self.period > 0.0) {
                    bail!("period must be positive");
                }
                StreamKind::DynamicGaussian { dim: self.dim, period: self.period }
            }
            KindName::Regimes => bail!("the regimes kind is labelled; use `regimes`"),
        };
        Ok(StreamSpec::new(kind, self.length, seed))
    }

    pub fn regimes(&self, seed: u64) -> Result<RegimeStream> {
        Ok(RegimeStream::new(synth::alternating_regimes(), self.segment, self.count, seed)?)
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DirectionsName {
    Uniform,
    Equidistant,
}

impl From<DirectionsName> for DirectionMode {
    fn from(d: DirectionsName) -> Self {
        match d {
            DirectionsName::Uniform => DirectionMode::Uniform,
            DirectionsName::Equidistant => DirectionMode::Equidistant,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Decay,
    Constant,
    FlooredDecay,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    pub alphas: Vec<f64>,
    pub n_u: usize,
    pub directions: DirectionsName,
    pub schedule: ScheduleName,
    pub lambda: f64,
    pub lambda_min: f64,
    pub warmup: usize,
    pub offset_spread: f64,
}

impl Default for TrackerSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.05, 0.2, 0.4],
            n_u: 25,
            directions: DirectionsName::Uniform,
            schedule: ScheduleName::Decay,
            lambda: 0.01,
            lambda_min: 0.01,
            warmup: 10,
            offset_spread: qdepth_core::engine::DEFAULT_SPREAD_OFFSET,
        }
    }
}

impl TrackerSection {
    pub fn schedule(&self) -> Result<StepSchedule> {
        Ok(match self.schedule {
            ScheduleName::Decay => StepSchedule::decay(),
            ScheduleName::Constant => StepSchedule::constant(self.lambda)?,
            ScheduleName::FlooredDecay => StepSchedule::floored_decay(self.lambda_min)?,
        })
    }

    pub fn build(&self, dim: usize, seed: u64) -> Result<TrackerConfig> {
        let mut c = TrackerConfig::new(dim, self.alphas.clone(), self.n_u, seed)
            .with_schedule(self.schedule()?)
            .with_direction_mode(self.directions.into());
        c.warmup = self.warmup;
        c.offset_rule = OffsetRule::Spread(self.offset_spread);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Ray count; by default 10³ up to three dimensions, 10⁴ above.
    pub n_v: Option<usize>,
    /// Cached draws of the Monte Carlo truth (lognormal streams).
    pub mc_samples: usize,
    pub mc_directions: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { n_v: None, mc_samples: 200_000, mc_directions: 500 }
    }
}

impl MetricsSection {
    pub fn n_v(&self, dim: usize) -> usize {
        self.n_v.unwrap_or_else(|| qdepth_core::MetricRays::default_count(dim))
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrackSection {
    pub lambdas: Vec<f64>,
    /// Stream length in periods.
    pub periods: u64,
    pub checkpoints_per_period: u64,
}

impl Default for TrackSection {
    fn default() -> Self {
        Self {
            lambdas: vec![0.001, 0.002, 0.004, 0.007, 0.01, 0.015, 0.02, 0.03],
            periods: 10,
            checkpoints_per_period: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub alphas: Vec<f64>,
    pub n_u: usize,
    pub lambda_min: f64,
    pub delta: f64,
    pub h: usize,
    pub eta: f64,
    pub n_v: usize,
    pub thinning: usize,
    pub settle: usize,
    pub mute: Option<usize>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let p = DetectorParams::new(vec![0.05, 0.2, 0.4], 20, 0);
        Self {
            alphas: p.alphas,
            n_u: p.n_u,
            lambda_min: p.lambda_min,
            delta: p.delta,
            h: p.h,
            eta: p.eta,
            n_v: p.n_v,
            thinning: p.thinning,
            settle: p.settle,
            mute: p.warmup_mute,
        }
    }
}

impl DetectorSection {
    pub fn build(&self, seed: u64) -> Result<DetectorParams> {
        let mut p = DetectorParams::new(self.alphas.clone(), self.n_u, seed);
        p.lambda_min = self.lambda_min;
        p.delta = self.delta;
        p.h = self.h;
        p.eta = self.eta;
        p.n_v = self.n_v;
        p.thinning = self.thinning;
        p.settle = self.settle;
        p.warmup_mute = self.mute;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub dims: Vec<usize>,
    pub n_u: Vec<usize>,
    pub target: f64,
    pub cap: u64,
    pub seeds: u64,
    /// Observations timed for the throughput column.
    pub throughput_updates: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { dims: vec![2], n_u: vec![8], target: 0.05, cap: 1_000_000, seeds: 1, throughput_updates: 20_000 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse(
            "seed = 3\n[stream]\nkind = \"dynamic_gaussian\"\nperiod = 500.0\n[tracker]\nn_u = 10\ndirections = \"equidistant\"\n[detector]\neta = 6.5\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.stream.kind, KindName::DynamicGaussian);
        assert_eq!(c.stream.period, 500.0);
        assert_eq!(c.tracker.directions, DirectionsName::Equidistant);
        assert_eq!(c.detector.eta, 6.5);
        assert_eq!(c.detector.h, DetectorSection::default().h);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[tracker]\nnu = 3\n").is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        let c = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(c.sub_seed(Slot::Stream), c.sub_seed(Slot::Tracker));
    }

    #[test]
    fn pair_covariance_is_bivariate() {
        let s = StreamSection { covariance: CovarianceName::Pair, dim: 5, ..StreamSection::default() };
        assert_eq!(s.spec(0).unwrap().dim(), 2);
    }
}
