//! Experiment runners shared by the command line and the acceptance suite.
//!
//! Timings cover the estimation loop only: data is generated up front and
//! metric evaluation happens outside the timed region.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Result};
use qdepth_core::linalg::Matrix;
use qdepth_core::synth::{StreamKind, StreamSpec};
use qdepth_core::{
    compute_ed, compute_made, offline_snapshot, score_detections, seed, ChangeEvent, DepthOracle, DepthSnapshot,
    DepthTracker, Detector, DetectorParams, DirectionMode, DirectionSet, GaussianModel, MetricRays, MonteCarloModel,
    RayAverage, ScoreReport, StepSchedule, TrackerConfig,
};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::io::Table;

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty slice");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Draws `n` observations of a spec into one row-major buffer.
pub fn materialise(spec: &StreamSpec) -> Result<Table> {
    let mut values = Vec::with_capacity(spec.length as usize * spec.dim());
    for obs in spec.stream()? {
        values.extend_from_slice(&obs?.values);
    }
    Ok(Table { dim: spec.dim(), values, labels: None, skipped: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Incremental,
    Offline,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub snapshot: DepthSnapshot,
    pub seconds: f64,
}

/// Runs one estimator over all rows of `data`.
pub fn estimate(data: &Table, config: &TrackerConfig, method: Method) -> Result<Estimate> {
    if data.is_empty() {
        bail!("no observations to estimate from");
    }
    let directions = Arc::new(config.build_directions()?);
    estimate_with(data, config, directions, method)
}

pub fn estimate_with(data: &Table, config: &TrackerConfig, directions: Arc<DirectionSet>, method: Method) -> Result<Estimate> {
    if data.is_empty() {
        bail!("no observations to estimate from");
    }
    let start = Instant::now();
    let snapshot = match method {
        Method::Offline => offline_snapshot(directions, &config.alphas, &data.values)?,
        Method::Incremental => {
            let mut t = DepthTracker::with_directions(config.clone(), directions);
            for x in data.rows() {
                t.observe(x)?;
            }
            t.snapshot()?
        }
    };
    Ok(Estimate { snapshot, seconds: start.elapsed().as_secs_f64() })
}

/// Source of true depth for a stream configuration.
pub enum Truth {
    Gaussian(GaussianModel),
    MonteCarlo { model: MonteCarloModel, directions: usize, seed: u64 },
}

impl Truth {
    /// Analytic truth for Gaussian streams, a cached sample otherwise.
    pub fn for_spec(spec: &StreamSpec, mc_samples: usize, mc_directions: usize, seed: u64) -> Result<Self> {
        match &spec.kind {
            StreamKind::StaticGaussian(m) => Ok(Truth::Gaussian(m.clone())),
            StreamKind::StaticLognormal(m) => {
                let cache = StreamSpec::new(StreamKind::StaticLognormal(m.clone()), mc_samples as u64, seed);
                let model = MonteCarloModel::from_samples(m.mean().len(), materialise(&cache)?.values)?;
                Ok(Truth::MonteCarlo { model, directions: mc_directions, seed: seed::derive(seed, 1) })
            }
            StreamKind::DynamicGaussian { .. } => {
                bail!("the dynamic stream has no single truth; use `track` for time-varying error")
            }
        }
    }

    /// Center for the metric rays: the mean, or the coordinatewise median of
    /// the cached sample.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Truth::Gaussian(m) => m.mean().to_vec(),
            Truth::MonteCarlo { model, .. } => {
                let d = model.dim();
                (0..d)
                    .map(|i| median(&model.samples().iter().skip(i).step_by(d).copied().collect::<Vec<_>>()))
                    .collect()
            }
        }
    }

    pub fn made(&self, snapshot: &DepthSnapshot, rays: &MetricRays) -> Result<RayAverage> {
        Ok(match self {
            Truth::Gaussian(m) => compute_made(snapshot, m, rays)?,
            Truth::MonteCarlo { model, directions, seed } => compute_made(snapshot, &model.oracle(*directions, *seed)?, rays)?,
        })
    }

    pub fn ed(&self, snapshot: &DepthSnapshot, rays: &MetricRays) -> Result<RayAverage> {
        match self {
            Truth::Gaussian(m) => Ok(compute_ed(snapshot, m, rays)?),
            Truth::MonteCarlo { .. } => {
                bail!("ED needs true contour intercepts, which are only available for Gaussian truth")
            }
        }
    }
}

/// MADE of the offline and the incremental estimator on one shared sample
/// and direction set.
#[derive(Debug, Clone, Copy)]
pub struct OfflinePair {
    pub offline: f64,
    pub incremental: f64,
}

pub fn offline_vs_incremental(model: &GaussianModel, n: u64, n_dirs: usize, alphas: &[f64], seed: u64) -> Result<OfflinePair> {
    let dim = model.mean().len();
    let spec = StreamSpec::new(StreamKind::StaticGaussian(model.clone()), n, seed::derive(seed, 2));
    let data = materialise(&spec)?;
    let config = TrackerConfig::new(dim, alphas.to_vec(), n_dirs, seed::derive(seed, 1));
    let dirs = Arc::new(config.build_directions()?);
    let rays = MetricRays::uniform(model.mean().to_vec(), MetricRays::default_count(dim), seed::derive(seed, 3))?;
    let off = estimate_with(&data, &config, dirs.clone(), Method::Offline)?;
    let inc = estimate_with(&data, &config, dirs, Method::Incremental)?;
    Ok(OfflinePair {
        offline: compute_made(&off.snapshot, model, &rays)?.mean,
        incremental: compute_made(&inc.snapshot, model, &rays)?.mean,
    })
}

/// Constant-step tracking of the periodic Gaussian stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSetup {
    pub dim: usize,
    pub period: f64,
    pub n_u: usize,
    pub mode: DirectionMode,
    pub alphas: Vec<f64>,
    /// Stream length in periods; the first period is burn-in.
    pub periods: u64,
    pub checkpoints_per_period: u64,
    pub n_v: usize,
}

impl TrackingSetup {
    pub fn new(dim: usize, period: f64, n_u: usize, mode: DirectionMode) -> Self {
        Self {
            dim,
            period,
            n_u,
            mode,
            alphas: vec![0.05, 0.2, 0.4],
            periods: 10,
            checkpoints_per_period: 20,
            n_v: MetricRays::default_count(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub lambda: f64,
    /// `(n, MADE)` at every checkpoint after burn-in.
    pub checkpoints: Vec<(u64, f64)>,
    pub mean: f64,
    pub seconds: f64,
}

pub fn tracking_run(setup: &TrackingSetup, lambda: f64, seed: u64) -> Result<TrackingRun> {
    let config = TrackerConfig::new(setup.dim, setup.alphas.clone(), setup.n_u, seed::derive(seed, 1))
        .with_schedule(StepSchedule::constant(lambda)?)
        .with_direction_mode(setup.mode);
    let mut tracker = DepthTracker::new(config)?;
    let length = (setup.period * setup.periods as f64).round() as u64;
    let spec = StreamSpec::new(StreamKind::DynamicGaussian { dim: setup.dim, period: setup.period }, length, seed::derive(seed, 2));
    let stream = spec.stream()?;
    let truth = stream.periodic().expect("dynamic stream").clone();
    let rays = DirectionSet::sample_uniform(setup.dim, setup.n_v, seed::derive(seed, 3))?;
    let every = ((setup.period / setup.checkpoints_per_period as f64).round() as u64).max(1);
    let mut checkpoints = Vec::new();
    let mut seconds = 0.0;
    for obs in stream {
        let obs = obs?;
        let start = Instant::now();
        tracker.observe(&obs.values)?;
        seconds += start.elapsed().as_secs_f64();
        if obs.index as f64 > setup.period && obs.index % every == 0 {
            let model = truth.truth_at(obs.index as f64)?;
            let r = MetricRays::new(model.mean().to_vec(), rays.clone())?;
            checkpoints.push((obs.index, compute_made(&tracker.snapshot()?, &model, &r)?.mean));
        }
    }
    if checkpoints.is_empty() {
        bail!("stream too short for any checkpoint after burn-in");
    }
    let mean = checkpoints.iter().map(|c| c.1).sum::<f64>() / checkpoints.len() as f64;
    Ok(TrackingRun { lambda, checkpoints, mean, seconds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRow {
    pub lambda: f64,
    /// Mean MADE per seed, in seed order.
    pub per_seed: Vec<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub rows: Vec<LambdaRow>,
}

impl LambdaGrid {
    pub fn best(&self) -> &LambdaRow {
        self.rows.iter().min_by(|a, b| a.median.total_cmp(&b.median)).expect("non-empty grid")
    }
}

/// Every `(λ, seed)` pair, in parallel.
pub fn tune_lambda(setup: &TrackingSetup, lambdas: &[f64], seeds: &[u64]) -> Result<LambdaGrid> {
    if lambdas.is_empty() || seeds.is_empty() {
        bail!("lambda grid and seed list must be non-empty");
    }
    let jobs: Vec<(usize, usize)> = (0..lambdas.len()).flat_map(|i| (0..seeds.len()).map(move |j| (i, j))).collect();
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j)| tracking_run(setup, lambdas[i], seeds[j]).map(|r| r.mean))
        .collect::<Result<_>>()?;
    let rows = lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let per_seed = results[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            LambdaRow { lambda, median: median(&per_seed), per_seed }
        })
        .collect();
    Ok(LambdaGrid { rows })
}

/// `1, 2, 5 × 10^k` from 10³ up to `cap` (always included).
pub fn checkpoints(cap: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut decade = 1_000u64;
    'outer: loop {
        for m in [1, 2, 5] {
            let c = m * decade;
            if c >= cap {
                break 'outer;
            }
            out.push(c);
        }
        decade *= 10;
    }
    out.push(cap);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub dim: usize,
    pub n_u: usize,
    pub seed: u64,
    /// First checkpoint with MADE below target, `None` if the cap was hit.
    pub reached_at: Option<u64>,
    /// MADE at the last evaluated checkpoint.
    pub made: f64,
    /// Estimation time up to the last evaluated checkpoint.
    pub seconds: f64,
    pub seconds_per_region: f64,
}

/// Feeds a static Gaussian stream with `λₙ = 1/n` and evaluates MADE at
/// [`checkpoints`] until `target` is beaten or `cap` is reached.
pub fn bench_cell(model: &GaussianModel, n_u: usize, alphas: &[f64], target: f64, cap: u64, seed: u64) -> Result<CellOutcome> {
    let dim = model.mean().len();
    let config = TrackerConfig::new(dim, alphas.to_vec(), n_u, seed::derive(seed, 1));
    let mut tracker = DepthTracker::new(config)?;
    let spec = StreamSpec::new(StreamKind::StaticGaussian(model.clone()), cap, seed::derive(seed, 2));
    let rays = MetricRays::uniform(model.mean().to_vec(), MetricRays::default_count(dim), seed::derive(seed, 3))?;
    let marks = checkpoints(cap);
    let mut next = 0;
    let mut seconds = 0.0;
    let mut made = f64::NAN;
    let mut reached_at = None;
    let mut stream = spec.stream()?;
    let mut batch: Vec<f64> = Vec::new();
    let mut n = 0u64;
    while next < marks.len() {
        // generate up to the next checkpoint, then time the updates alone
        batch.clear();
        while n < marks[next] {
            let obs = stream.next().expect("stream shorter than cap")?;
            batch.extend_from_slice(&obs.values);
            n += 1;
        }
        let start = Instant::now();
        for x in batch.chunks_exact(dim) {
            tracker.observe(x)?;
        }
        seconds += start.elapsed().as_secs_f64();
        made = compute_made(&tracker.snapshot()?, model, &rays)?.mean;
        if made < target {
            reached_at = Some(n);
            break;
        }
        next += 1;
    }
    Ok(CellOutcome { dim, n_u, seed, reached_at, made, seconds, seconds_per_region: seconds / alphas.len() as f64 })
}

/// Observations absorbed per millisecond by a warm tracker (all `K`
/// envelopes updated per observation).
pub fn throughput(dim: usize, n_u: usize, k: usize, updates: u64, seed: u64) -> Result<f64> {
    let alphas: Vec<f64> = (1..=k).map(|i| 0.45 * i as f64 / k as f64).collect();
    let model = GaussianModel::standard(dim);
    let config = TrackerConfig::new(dim, alphas, n_u, seed::derive(seed, 1));
    let mut tracker = DepthTracker::new(config)?;
    let spec = StreamSpec::new(StreamKind::StaticGaussian(model), updates + 100, seed::derive(seed, 2));
    let data = materialise(&spec)?;
    let mut rows = data.rows();
    for x in rows.by_ref().take(100) {
        tracker.observe(x)?;
    }
    let start = Instant::now();
    for x in rows {
        tracker.observe(x)?;
    }
    let ms = start.elapsed().as_secs_f64() * 1e3;
    std::hint::black_box(&tracker);
    Ok(updates as f64 / ms)
}

/// Random Gaussian model with mean in `[-2, 2]^p` and covariance `AAᵀ + 0.2·I`.
pub fn random_gaussian(rng: &mut impl Rng, dim: usize) -> Result<GaussianModel> {
    let mu: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let a: Vec<f64> = (0..dim * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let cov = Matrix::from_fn(dim, |i, j| {
        let s: f64 = (0..dim).map(|k| a[i * dim + k] * a[j * dim + k]).sum();
        s + if i == j { 0.2 } else { 0.0 }
    });
    Ok(GaussianModel::new(mu, cov)?)
}

/// Largest `|analytic − Monte Carlo|` depth over random points of random
/// Gaussian models.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAgreement {
    pub max_abs_diff: f64,
    pub points: usize,
}

pub fn oracle_agreement(
    models: usize,
    points_per_model: usize,
    dims: &[usize],
    samples: usize,
    directions: usize,
    seed: u64,
) -> Result<OracleAgreement> {
    let per_model: Vec<f64> = (0..models)
        .into_par_iter()
        .map(|m| -> Result<f64> {
            let mut rng = seed::rng(seed::derive(seed, m as u64));
            let dim = dims[m % dims.len()];
            let model = random_gaussian(&mut rng, dim)?;
            let mc = MonteCarloModel::from_samples(
                dim,
                materialise(&StreamSpec::new(StreamKind::StaticGaussian(model.clone()), samples as u64, rng.random()))?.values,
            )?;
            // points spread over depths 0.02 .. 0.5
            let mut points = Vec::with_capacity(points_per_model * dim);
            let mut z = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            for _ in 0..points_per_model {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let r = rng.random_range(0.0..2.0) / qdepth_core::linalg::norm(&z);
                z.iter_mut().for_each(|v| *v *= r);
                model.transform_standard(&z, &mut x);
                points.extend_from_slice(&x);
            }
            let oracle = mc.oracle(directions, rng.random())?;
            let estimated = oracle.depth_many(&points)?;
            let exact = model.depth_many(&points)?;
            Ok(estimated.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(OracleAgreement { max_abs_diff: per_model.into_iter().fold(0.0, f64::max), points: models * points_per_model })
}

/// Runs the detector over every row of `data`.
pub fn detect(data: &Table, params: &DetectorParams) -> Result<Vec<ChangeEvent>> {
    let mut det = Detector::new(data.dim, params.clone())?;
    let mut events = Vec::new();
    for x in data.rows() {
        if let Some(e) = det.observe(x)? {
            events.push(e);
        }
    }
    Ok(events)
}

/// Detector run on the labelled regime stream; scored with a horizon.
pub fn detection_trial(params: &DetectorParams, segment: u64, count: usize, horizon: Option<u64>, seed: u64) -> Result<ScoreReport> {
    let stream = qdepth_core::synth::RegimeStream::new(qdepth_core::synth::alternating_regimes(), segment, count, seed)?;
    let truth = stream.change_points();
    let mut values = Vec::new();
    for (obs, _) in stream {
        values.extend_from_slice(&obs.values);
    }
    let table = Table { dim: 2, values, labels: None, skipped: 0 };
    let events: Vec<u64> = detect(&table, params)?.iter().map(|e| e.t).collect();
    Ok(score_detections(&events, &truth, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn checkpoint_ladder() {
        assert_eq!(checkpoints(10_000), vec![1_000, 2_000, 5_000, 10_000]);
        assert_eq!(checkpoints(3_000), vec![1_000, 2_000, 3_000]);
        assert_eq!(checkpoints(500), vec![500]);
    }

    #[test]
    fn empty_data_is_rejected() {
        let cfg = TrackerConfig::new(2, vec![0.2], 8, 0);
        let t = Table { dim: 2, ..Table::default() };
        assert!(estimate(&t, &cfg, Method::Offline).is_err());
        assert!(estimate(&t, &cfg, Method::Incremental).is_err());
    }

    #[test]
    fn lognormal_truth_has_no_ed() {
        let spec = StreamSpec::new(StreamKind::StaticLognormal(GaussianModel::standard(2)), 2_000, 1);
        let truth = Truth::for_spec(&spec, 20_000, 200, 2).unwrap();
        let data = materialise(&spec).unwrap();
        let cfg = TrackerConfig::new(2, vec![0.1, 0.3], 16, 3);
        let est = estimate(&data, &cfg, Method::Offline).unwrap();
        let center = truth.center();
        assert!((center[0] - 1.0).abs() < 0.05);
        let rays = MetricRays::uniform(center, 200, 4).unwrap();
        assert!(truth.made(&est.snapshot, &rays).unwrap().mean < 0.05);
        assert!(truth.ed(&est.snapshot, &rays).is_err());
    }

    #[test]
    fn bench_cell_stops_at_target() {
        let out = bench_cell(&GaussianModel::standard(2), 8, &[0.05, 0.2, 0.4], 0.2, 100_000, 1).unwrap();
        assert_eq!(out.reached_at, Some(1_000));
        assert!(out.made < 0.2);
    }
}
