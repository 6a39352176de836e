//! Seed sweeps and `summary.csv`.
//!
//! A sweep writes `<output_dir>/<protocol>/seed-<n>/` per run and one
//! `<output_dir>/summary.csv`:
//!
//! ```text
//! # scenario <sha256>
//! protocol,metric,mean,stddev
//! pcbb,reception_1000_1500,0.012,0.004
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use pcbb_core::engine::{run_with, EngineOptions, RunSummary};
use pcbb_core::metrics::{MetricsCollector, RunMetrics};
use pcbb_core::protocols::ProtocolKind;
use pcbb_core::{ScenarioConfig, SimTime};

use crate::config::Experiment;
use crate::output::{save_metrics, TraceWriter};
use crate::Error;

/// Metric names in summary order.
pub const METRICS: [&str; 8] = [
    "reception_1000_1500",
    "reception_overall",
    "delay_final_us",
    "collision_final_ratio",
    "originated",
    "rebroadcasts",
    "beacon_tx",
    "collided",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also write `trace.csv` into each run directory.
    pub trace: bool,
    /// Worker threads; 0 picks the machine's parallelism.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub summary: RunSummary,
    pub metrics: RunMetrics,
}

impl RunResult {
    /// Values for [`METRICS`]; `None` where a run has nothing to measure.
    pub fn metric_values(&self, horizon: SimTime, sample_every_ms: u64) -> [Option<f64>; 8] {
        let m = &self.metrics;
        let final_window =
            SimTime(horizon.as_us().saturating_sub(1) / (sample_every_ms * 1_000) * sample_every_ms * 1_000);
        let delay_final = m
            .delay
            .samples
            .iter()
            .find(|s| s.t == final_window)
            .map(|s| s.mean_delay_us);
        let overall = m.reception.probability_between(0.0, f64::INFINITY);
        let s = &self.summary;
        [
            m.reception.probability_between(1000.0, 1500.0),
            overall,
            delay_final,
            m.collisions.samples.last().map(|c| c.ratio),
            Some(s.originated as f64),
            Some(s.emergency_tx.saturating_sub(s.originated) as f64),
            Some(s.beacon_tx as f64),
            Some(m.collisions.total_collided() as f64),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub protocol: String,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scenario_hash: String,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn get(&self, protocol: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.protocol == protocol && r.metric == metric)
    }

    /// Protocols in first-appearance order.
    pub fn protocols(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.protocol.as_str()) {
                out.push(&r.protocol);
            }
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# scenario {}", self.scenario_hash)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["protocol", "metric", "mean", "stddev"])?;
        for r in &self.rows {
            out.write_record([&r.protocol, &r.metric, &format!("{}", r.mean), &format!("{}", r.stddev)])?;
        }
        out.flush()
    }

    pub fn read(path: &Path) -> Result<Summary, Error> {
        let bad = |message: String| Error::Summary {
            path: path.to_path_buf(),
            message,
        };
        let f = File::open(path).map_err(Error::io(path))?;
        let mut reader = BufReader::new(f);
        let mut first = String::new();
        reader.read_line(&mut first).map_err(Error::io(path))?;
        let scenario_hash = first
            .trim()
            .strip_prefix("# scenario ")
            .ok_or_else(|| bad("first line must be `# scenario <hash>`".into()))?
            .to_string();
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 4 {
                return Err(bad(format!("expected 4 columns, found {}", rec.len())));
            }
            let parse = |i: usize| -> Result<f64, Error> {
                rec[i]
                    .parse()
                    .map_err(|_| bad(format!("`{}` is not a number", &rec[i])))
            };
            rows.push(SummaryRow {
                protocol: rec[0].to_string(),
                metric: rec[1].to_string(),
                mean: parse(2)?,
                stddev: parse(3)?,
            });
        }
        Ok(Summary { scenario_hash, rows })
    }
}

/// Mean and sample standard deviation; NaN mean for no values.
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn summarize(scenario: &ScenarioConfig, hash: &str, protocols: &[ProtocolKind], runs: &[RunResult]) -> Summary {
    let horizon = SimTime::from_ms(scenario.sim.duration_ms);
    let every = scenario.metrics.sample_every_ms;
    let mut rows = Vec::new();
    for &p in protocols {
        let values: Vec<[Option<f64>; 8]> = runs
            .iter()
            .filter(|r| r.protocol == p)
            .map(|r| r.metric_values(horizon, every))
            .collect();
        for (i, name) in METRICS.iter().enumerate() {
            let v: Vec<f64> = values.iter().filter_map(|m| m[i]).collect();
            let (mean, stddev) = mean_stddev(&v);
            rows.push(SummaryRow {
                protocol: p.as_str().to_string(),
                metric: name.to_string(),
                mean,
                stddev,
            });
        }
    }
    Summary {
        scenario_hash: hash.to_string(),
        rows,
    }
}

pub fn run_dir(output_dir: &Path, protocol: ProtocolKind, seed: u64) -> PathBuf {
    output_dir.join(protocol.as_str()).join(format!("seed-{seed}"))
}

/// One protocol and seed, with outputs written to `dir` when given.
pub fn run_one(scenario: &ScenarioConfig, seed: u64, dir: Option<&Path>, trace: bool) -> Result<RunResult, Error> {
    let run_err = |source| Error::Run {
        protocol: scenario.protocol.kind.as_str().to_string(),
        seed,
        source,
    };
    let horizon = SimTime::from_ms(scenario.sim.duration_ms);
    let mut collector = MetricsCollector::new(scenario.metrics.clone());
    let summary = match (dir, trace) {
        (Some(dir), true) => {
            let path = dir.join("trace.csv");
            let f = File::create(&path).map_err(Error::io(&path))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "time_us,event_kind,vehicle_id,msg_sender,msg_id,outcome,x_m").map_err(Error::io(&path))?;
            let mut sink = (&mut collector, TraceWriter::new(w));
            let s = run_with(scenario, seed, EngineOptions::default(), &mut sink).map_err(run_err)?;
            sink.1.finish().map_err(Error::io(&path))?;
            s
        }
        _ => run_with(scenario, seed, EngineOptions::default(), &mut collector).map_err(run_err)?,
    };
    let metrics = collector.finish(horizon);
    if let Some(dir) = dir {
        save_metrics(dir, &metrics)?;
        let path = dir.join("run.csv");
        let f = File::create(&path).map_err(Error::io(&path))?;
        write_run_summary(BufWriter::new(f), &summary).map_err(Error::io(&path))?;
    }
    Ok(RunResult {
        protocol: scenario.protocol.kind,
        seed,
        summary,
        metrics,
    })
}

fn write_run_summary<W: Write>(w: W, s: &RunSummary) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["key", "value"])?;
    for (k, v) in [
        ("events", s.events),
        ("beacon_tx", s.beacon_tx),
        ("emergency_tx", s.emergency_tx),
        ("originated", s.originated),
        ("deliveries", s.deliveries),
        ("decode_errors", s.decode_errors),
    ] {
        out.write_record([k, &v.to_string()])?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario_hash: String,
    /// Ordered by protocol as configured, then seed as configured.
    pub runs: Vec<RunResult>,
    pub summary: Summary,
    pub summary_path: PathBuf,
}

/// Runs every protocol and seed, writes all run directories and
/// `summary.csv`. Runs execute on a thread pool; outputs do not depend on
/// scheduling.
pub fn run_experiment(exp: &Experiment, opts: &RunOptions) -> Result<ExperimentReport, Error> {
    let jobs: Vec<(usize, ProtocolKind, u64)> = exp
        .protocols
        .iter()
        .flat_map(|&p| exp.seeds.iter().map(move |&s| (p, s)))
        .enumerate()
        .map(|(i, (p, s))| (i, p, s))
        .collect();
    for &(_, p, s) in &jobs {
        let dir = run_dir(&exp.output_dir, p, s);
        fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    }

    let workers = match opts.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len())
    .max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunResult, Error>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(slot, p, seed)) = jobs.get(i) else {
                    break;
                };
                let scenario = exp.scenario_for(p);
                let dir = run_dir(&exp.output_dir, p, seed);
                let r = run_one(&scenario, seed, Some(&dir), opts.trace);
                results.lock().expect("no worker panicked")[slot] = Some(r);
            });
        }
    });

    let mut runs = Vec::with_capacity(jobs.len());
    for r in results.into_inner().expect("no worker panicked") {
        runs.push(r.expect("every job ran")?);
    }
    let hash = exp.hash();
    let summary = summarize(&exp.scenario, &hash, &exp.protocols, &runs);
    let summary_path = exp.output_dir.join("summary.csv");
    let f = File::create(&summary_path).map_err(Error::io(&summary_path))?;
    summary.write(BufWriter::new(f)).map_err(Error::io(&summary_path))?;
    Ok(ExperimentReport {
        scenario_hash: hash,
        runs,
        summary,
        summary_path,
    })
}
