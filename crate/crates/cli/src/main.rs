use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qdepth::config::{CovarianceName, DirectionsName, KindName, RunConfig, Slot};
use qdepth::experiments::{self, Method, Truth};
use qdepth::io;
use qdepth_core::{score_detections, seed, DirectionMode, GaussianModel, MetricRays, RayAverage};
use rayon::prelude::*;

/// Streaming Tukey depth contour estimation.
#[derive(Parser)]
#[command(name = "qdepth", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; every random component derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream as CSV (`n,x1..xp`, plus `label` for regimes).
    Gen {
        #[command(flatten)]
        stream: StreamFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate contours from a sample and report MADE/ED against the truth.
    Estimate {
        #[command(flatten)]
        stream: StreamFlags,
        #[command(flatten)]
        tracker: TrackerFlags,
        /// Read observations from a CSV instead of generating them; the
        /// stream flags then describe the distribution they came from.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Incremental)]
        method: Method,
        #[arg(long)]
        n_v: Option<usize>,
        /// Skip the ED metric.
        #[arg(long)]
        no_ed: bool,
        /// Write contour polylines (two-dimensional data only).
        #[arg(long)]
        contours: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track the periodic Gaussian stream with a constant step size.
    Track {
        #[command(flatten)]
        stream: StreamFlags,
        #[command(flatten)]
        tracker: TrackerFlags,
        /// Comma-separated step sizes; more than one runs a grid search.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Seeds per grid cell (derived from the top-level seed).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        n_v: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the change detector over a labelled stream.
    Detect {
        /// Labelled CSV (`n,x1..xp,label` or `user,activity,timestamp,x,y,z`).
        /// Without it the synthetic regime stream is used.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorFlags,
        /// Detections later than this after a change count as false.
        #[arg(long)]
        horizon: Option<u64>,
        /// Events CSV (`t,ed_value,threshold`); stdout if absent.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Score CSV; stderr if absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sweep `p × n_u` cells until a MADE target, with update throughput.
    Bench {
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        n_u: Option<Vec<usize>>,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long)]
        cap: Option<u64>,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, value_enum)]
        covariance: Option<CovarianceName>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StreamFlags {
    #[arg(long, value_enum)]
    kind: Option<KindName>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    length: Option<u64>,
    #[arg(long)]
    period: Option<f64>,
    #[arg(long, value_enum)]
    covariance: Option<CovarianceName>,
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args)]
struct TrackerFlags {
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long, value_enum)]
    directions: Option<DirectionsName>,
}

#[derive(Args)]
struct DetectorFlags {
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "detector-n-u")]
    n_u: Option<usize>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl StreamFlags {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.stream.kind, self.kind);
        set(&mut c.stream.dim, self.dim);
        set(&mut c.stream.length, self.length);
        set(&mut c.stream.period, self.period);
        set(&mut c.stream.covariance, self.covariance);
        set(&mut c.stream.rate, self.rate);
    }
}

impl TrackerFlags {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.tracker.alphas, self.alphas);
        set(&mut c.tracker.n_u, self.n_u);
        set(&mut c.tracker.directions, self.directions);
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    set(&mut config.seed, cli.seed);
    match cli.command {
        Command::Gen { stream, out } => {
            stream.apply(&mut config);
            gen(&config, out.as_deref())
        }
        Command::Estimate { stream, tracker, input, method, n_v, no_ed, contours, out } => {
            stream.apply(&mut config);
            tracker.apply(&mut config);
            if n_v.is_some() {
                config.metrics.n_v = n_v;
            }
            estimate(&config, input.as_deref(), method, !no_ed, contours.as_deref(), out.as_deref())
        }
        Command::Track { stream, tracker, lambdas, seeds, n_v, out } => {
            config.stream.kind = KindName::DynamicGaussian;
            stream.apply(&mut config);
            tracker.apply(&mut config);
            set(&mut config.track.lambdas, lambdas);
            if n_v.is_some() {
                config.metrics.n_v = n_v;
            }
            track(&config, seeds, out.as_deref())
        }
        Command::Detect { input, detector, horizon, events, report } => {
            set(&mut config.detector.lambda_min, detector.lambda_min);
            set(&mut config.detector.delta, detector.delta);
            set(&mut config.detector.h, detector.h);
            set(&mut config.detector.eta, detector.eta);
            set(&mut config.detector.n_u, detector.n_u);
            detect(&config, input.as_deref(), horizon, events.as_deref(), report.as_deref())
        }
        Command::Bench { dims, n_u, target, cap, seeds, covariance, out } => {
            set(&mut config.bench.dims, dims);
            set(&mut config.bench.n_u, n_u);
            set(&mut config.bench.target, target);
            set(&mut config.bench.cap, cap);
            set(&mut config.bench.seeds, seeds);
            set(&mut config.stream.covariance, covariance);
            bench(&config, out.as_deref())
        }
    }
}

fn gen(config: &RunConfig, out: Option<&Path>) -> Result<()> {
    let seed = config.sub_seed(Slot::Stream);
    let sink = output(out)?;
    let rows = if config.stream.kind == KindName::Regimes {
        let regimes = config.stream.regimes(seed)?;
        io::write_labelled(sink, 2, regimes.map(|(o, label)| (o, format!("regime{label}"))))?
    } else {
        let spec = config.stream.spec(seed)?;
        io::write_stream(sink, spec.dim(), spec.stream()?)?
    };
    eprintln!("wrote {rows} rows");
    Ok(())
}

fn estimate(
    config: &RunConfig,
    input: Option<&Path>,
    method: Method,
    want_ed: bool,
    contours: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let spec = config.stream.spec(config.sub_seed(Slot::Stream))?;
    let data = match input {
        Some(p) => io::read_path(p)?,
        None => experiments::materialise(&spec)?,
    };
    if data.dim != spec.dim() {
        bail!("data has {} columns but the configured stream has dimension {}", data.dim, spec.dim());
    }
    let truth = Truth::for_spec(
        &spec,
        config.metrics.mc_samples,
        config.metrics.mc_directions,
        config.sub_seed(Slot::MonteCarlo),
    )?;
    if want_ed && matches!(truth, Truth::MonteCarlo { .. }) {
        bail!("ED is only available for Gaussian streams (no closed-form contours); pass --no-ed");
    }
    let tracker = config.tracker.build(data.dim, config.sub_seed(Slot::Tracker))?;
    let est = experiments::estimate(&data, &tracker, method)?;
    let rays = MetricRays::uniform(truth.center(), config.metrics.n_v(data.dim), config.sub_seed(Slot::Rays))?;
    let made = truth.made(&est.snapshot, &rays)?;
    let ed = if want_ed { Some(truth.ed(&est.snapshot, &rays)?) } else { None };

    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["method", "n", "alpha", "made", "ed", "seconds", "seconds_per_region", "failed_rays"])?;
    let method_name = format!("{method:?}").to_lowercase();
    let row = |alpha: String, m: f64, e: Option<f64>| {
        vec![
            method_name.clone(),
            data.len().to_string(),
            alpha,
            m.to_string(),
            e.map(|v| v.to_string()).unwrap_or_default(),
            est.seconds.to_string(),
            (est.seconds / tracker.alphas.len() as f64).to_string(),
            made.failed_rays.to_string(),
        ]
    };
    let ed_at = |ed: &Option<RayAverage>, k: Option<usize>| {
        ed.as_ref().map(|e| k.map_or(e.mean, |k| e.per_alpha[k]))
    };
    for (k, a) in tracker.alphas.iter().enumerate() {
        w.write_record(row(a.to_string(), made.per_alpha[k], ed_at(&ed, Some(k))))?;
    }
    w.write_record(row("all".into(), made.mean, ed_at(&ed, None)))?;
    w.flush()?;

    if let Some(path) = contours {
        if data.dim != 2 {
            bail!("contour export needs two-dimensional data");
        }
        let mut c = csv::Writer::from_writer(output(Some(path))?);
        c.write_record(["alpha", "vertex", "x1", "x2"])?;
        let center = truth.center();
        for env in est.snapshot.envelopes() {
            if !env.contains(&center)? {
                continue;
            }
            for (i, p) in env.contour_polyline_2d(360, &center)?.iter().enumerate() {
                c.write_record([env.alpha().to_string(), i.to_string(), p[0].to_string(), p[1].to_string()])?;
            }
        }
        c.flush()?;
    }
    Ok(())
}

fn track(config: &RunConfig, seeds: u64, out: Option<&Path>) -> Result<()> {
    let s = &config.stream;
    let mut setup = experiments::TrackingSetup::new(s.dim, s.period, config.tracker.n_u, DirectionMode::from(config.tracker.directions));
    setup.alphas = config.tracker.alphas.clone();
    setup.periods = config.track.periods;
    setup.checkpoints_per_period = config.track.checkpoints_per_period;
    setup.n_v = config.metrics.n_v(s.dim);
    let root = config.sub_seed(Slot::Stream);
    let mut w = csv::Writer::from_writer(output(out)?);
    let lambdas = &config.track.lambdas;
    if lambdas.len() == 1 && seeds == 1 {
        let run = experiments::tracking_run(&setup, lambdas[0], root)?;
        w.write_record(["n", "made"])?;
        for (n, m) in &run.checkpoints {
            w.write_record([n.to_string(), m.to_string()])?;
        }
        eprintln!("mean MADE {} over {} checkpoints", run.mean, run.checkpoints.len());
    } else {
        let seed_list: Vec<u64> = (0..seeds.max(1)).map(|i| seed::derive(root, i)).collect();
        let grid = experiments::tune_lambda(&setup, lambdas, &seed_list)?;
        w.write_record(["lambda", "median_made", "min_made", "max_made"])?;
        for r in &grid.rows {
            let lo = r.per_seed.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.per_seed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            w.write_record([r.lambda.to_string(), r.median.to_string(), lo.to_string(), hi.to_string()])?;
        }
        let best = grid.best();
        eprintln!("best lambda {} (median MADE {})", best.lambda, best.median);
    }
    w.flush()?;
    Ok(())
}

fn detect(
    config: &RunConfig,
    input: Option<&Path>,
    horizon: Option<u64>,
    events_out: Option<&Path>,
    report_out: Option<&Path>,
) -> Result<()> {
    let table = match input {
        Some(p) => io::read_path(p)?,
        None => {
            let regimes = config.stream.regimes(config.sub_seed(Slot::Stream))?;
            let mut t = io::Table { dim: 2, labels: Some(Vec::new()), ..io::Table::default() };
            for (o, label) in regimes {
                t.values.extend_from_slice(&o.values);
                t.labels.as_mut().unwrap().push(label.to_string());
            }
            t
        }
    };
    if table.labels.is_none() {
        bail!("detection input needs a label column to score against");
    }
    let params = config.detector.build(config.sub_seed(Slot::Detector))?;
    let events = experiments::detect(&table, &params)?;
    let truth = table.change_points();
    let times: Vec<u64> = events.iter().map(|e| e.t).collect();
    let score = score_detections(&times, &truth, horizon);

    let mut w = csv::Writer::from_writer(output(events_out)?);
    w.write_record(["t", "ed_value", "threshold"])?;
    for e in &events {
        w.write_record([e.t.to_string(), e.ed_value.to_string(), e.threshold.to_string()])?;
    }
    w.flush()?;

    let sink: Box<dyn Write> = match report_out {
        Some(p) => output(Some(p))?,
        None => Box::new(std::io::stderr().lock()),
    };
    let mut r = csv::Writer::from_writer(sink);
    r.write_record([
        "precision",
        "recall",
        "f1",
        "mean_delay",
        "correct",
        "false_alarms",
        "true_changes",
        "observations",
        "skipped_rows",
    ])?;
    r.write_record([
        score.precision.to_string(),
        score.recall.to_string(),
        score.f1.to_string(),
        score.mean_delay.map(|d| d.to_string()).unwrap_or_default(),
        score.correct.to_string(),
        score.false_alarms.to_string(),
        truth.len().to_string(),
        table.len().to_string(),
        table.skipped.to_string(),
    ])?;
    r.flush()?;
    Ok(())
}

fn bench(config: &RunConfig, out: Option<&Path>) -> Result<()> {
    let b = &config.bench;
    let cells: Vec<(usize, usize, u64)> = b
        .dims
        .iter()
        .flat_map(|&p| b.n_u.iter().flat_map(move |&n| (0..b.seeds.max(1)).map(move |s| (p, n, s))))
        .collect();
    let root = config.sub_seed(Slot::Stream);
    let alphas = config.tracker.alphas.clone();
    let rows: Vec<(experiments::CellOutcome, f64)> = cells
        .par_iter()
        .map(|&(p, n_u, s)| -> Result<_> {
            let mut stream = config.stream.clone();
            stream.dim = p;
            let model: GaussianModel = stream.gaussian()?;
            let cell_seed = seed::derive(root, s);
            let outcome = experiments::bench_cell(&model, n_u, &alphas, b.target, b.cap, cell_seed)?;
            let rate = experiments::throughput(p, n_u, alphas.len(), b.throughput_updates, cell_seed)?;
            Ok((outcome, rate))
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record([
        "p",
        "n_u",
        "seed",
        "target",
        "converged",
        "observations",
        "made",
        "seconds",
        "seconds_per_region",
        "updates_per_ms",
    ])?;
    for (c, rate) in rows {
        w.write_record([
            c.dim.to_string(),
            c.n_u.to_string(),
            c.seed.to_string(),
            b.target.to_string(),
            c.reached_at.is_some().to_string(),
            c.reached_at.unwrap_or(b.cap).to_string(),
            c.made.to_string(),
            c.seconds.to_string(),
            c.seconds_per_region.to_string(),
            rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
