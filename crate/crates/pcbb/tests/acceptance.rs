//! Acceptance suite. Each criterion is its own test and prints one
//! `criterion N: PASS|FAIL` line straight to stdout, so the lines show up
//! even when the harness captures output.
//!
//! Criteria 6, 7, 8 and 10 share one 20-seed sweep over the default
//! scenario, computed once per test binary.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use pcbb::output::trace_line;
use pcbb_core::beaconing::NeighborTable;
use pcbb_core::channel::{deliver, mean_rx_power, reception_probability, ChannelParams, Outcome, Transmission};
use pcbb_core::engine::{run_fleet_with, run_with, EngineOptions, EventTrace, TraceKind, TraceRecord, TraceSink};
use pcbb_core::forwarder::{
    cluster_segments, pcbb_boundaries_with, pso_update, segment_fitness, PcbbParams, PsoDraw, PsoState,
};
use pcbb_core::metrics::{MetricsCollector, RunMetrics};
use pcbb_core::mobility::{Fleet, Vehicle};
use pcbb_core::protocols::{contention_time, DangerEvent, ProtocolKind};
use pcbb_core::types::Beacon;
use pcbb_core::{MsgKey, Position, ScenarioConfig, SimTime, VehicleId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use sha2::{Digest, Sha256};

const SWEEP_SEEDS: u64 = 20;

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "\ncriterion {n}: {verdict} - {detail}");
    let _ = out.flush();
}

fn settle(n: u32, pass: bool, detail: String) {
    report(n, pass, &detail);
    assert!(pass, "criterion {n}: {detail}");
}

#[test]
fn criterion_01_pso_reference_step() {
    let state = PsoState {
        l_best: 700.0,
        p_best: 690.0,
        g_best: 720.0,
    };
    let (fit, new_l_best) = pso_update(&state, 2.0, 2.0, 0.1, 0.65, 0.7);

    // one big segment of progress 700 so lBest comes out as 700
    let pl = pcbb_core::forwarder::ProgressList::from_segments(vec![pcbb_core::forwarder::SegmentStats::new(
        700.0, 100.0, 30,
    )]);
    let params = PcbbParams::default();
    let draw = PsoDraw {
        w: 0.1,
        r1: 0.65,
        r2: 0.7,
    };
    let out = pcbb_boundaries_with(&pl, Some(690.0), Some(720.0), 900.0, &params, draw).unwrap();
    let b = out.boundaries;

    let pass = fit == 95.0 && new_l_best == 785.0 && b.min_b == 785.0 && b.max_b == 900.0;
    settle(
        1,
        pass,
        format!(
            "fit={fit} lBest={new_l_best} boundaries=({}, {}); expected fit=95 lBest=785 (785, 900)",
            b.min_b, b.max_b
        ),
    );
}

#[test]
fn criterion_02_fitness_table() {
    let rows = [
        ((520.0, 15, 90.0), 86.0),
        ((610.0, 15, 90.0), 101.0),
        ((700.0, 30, 120.0), 175.0),
        ((820.0, 15, 80.0), 153.0),
        ((900.0, 1, 0.0), 0.0),
    ];
    let got: Vec<f64> = rows.iter().map(|&((p, n, l), _)| segment_fitness(p, n, l)).collect();
    let want: Vec<f64> = rows.iter().map(|&(_, f)| f).collect();
    settle(2, got == want, format!("fitness {got:?}, expected {want:?}"));
}

#[test]
fn criterion_03_contention_time() {
    let slot = 16.0;
    let at_max = contention_time(900.0, 900.0, slot).unwrap();
    let at_zero = contention_time(0.0, 900.0, slot).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..10_000 {
        let max_b: f64 = rng.gen_range(1.0..1_500.0);
        let a = rng.gen_range(0.0..max_b);
        let b = rng.gen_range(0.0..max_b);
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        if near == far {
            continue;
        }
        let t_near = contention_time(near, max_b, slot).unwrap();
        let t_far = contention_time(far, max_b, slot).unwrap();
        if t_near <= t_far {
            violations += 1;
        }
    }
    let pass = at_max == 0.0 && at_zero == 1600.0 && violations == 0;
    settle(
        3,
        pass,
        format!("T_c(MaxB)={at_max} T_c(0)={at_zero}, {violations} monotonicity violations in 10^4 pairs"),
    );
}

#[test]
fn criterion_04_channel_calibration() {
    let started = Instant::now();
    let params = ChannelParams::default();
    let p50 = reception_probability(&params, 50.0);
    let p500 = reception_probability(&params, 500.0);

    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_deliver = 0.0f64;
    let mut worst_fading = 0.0f64;
    let threshold_mw = 10f64.powf(params.threshold_dbm() / 10.0);
    for d in [100.0, 500.0, 900.0] {
        let closed = reception_probability(&params, d);
        let tx = Transmission {
            sender: VehicleId(0),
            origin: Position::new(0.0, 1),
            start: SimTime::ZERO,
            duration: 100,
        };
        let ok = (0..trials)
            .filter(|_| {
                deliver(&params, &tx, VehicleId(1), Position::new(d, 1), &[tx], &mut rng) == Some(Outcome::Received)
            })
            .count();
        worst_deliver = worst_deliver.max((ok as f64 / trials as f64 - closed).abs());

        // independent check: draw Nakagami-m power as Gamma(m, mean/m)
        let mean_mw = 10f64.powf(mean_rx_power(&params, d).unwrap() / 10.0);
        let m = params.m as f64;
        let gamma = Gamma::new(m, mean_mw / m).unwrap();
        let ok = (0..trials).filter(|_| gamma.sample(&mut rng) >= threshold_mw).count();
        worst_fading = worst_fading.max((ok as f64 / trials as f64 - closed).abs());
    }
    let elapsed = started.elapsed();
    let pass = p50 >= 0.99
        && (p500 - 0.20).abs() <= 0.05
        && worst_deliver <= 0.02
        && worst_fading <= 0.02
        && elapsed < Duration::from_secs(5);
    settle(
        4,
        pass,
        format!(
            "p(50)={p50:.4} p(500)={p500:.4}; max |MC - closed form| deliver={worst_deliver:.4} gamma fading={worst_fading:.4}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

/// SHA-256 over the exported trace lines.
#[derive(Default)]
struct TraceHasher {
    hasher: Sha256,
    lines: u64,
}

impl TraceSink for TraceHasher {
    fn record(&mut self, rec: &TraceRecord) {
        self.hasher.update(trace_line(rec).as_bytes());
        self.hasher.update(b"\n");
        self.lines += 1;
    }
}

#[test]
fn criterion_05_full_scenario_speed_and_determinism() {
    let scenario = ScenarioConfig::default();
    let mut digests = Vec::new();
    let mut slowest = Duration::ZERO;
    for _ in 0..2 {
        let started = Instant::now();
        let mut h = TraceHasher::default();
        run_with(&scenario, 2024, EngineOptions::default(), &mut h).unwrap();
        slowest = slowest.max(started.elapsed());
        digests.push((h.hasher.finalize(), h.lines));
    }
    let same = digests[0] == digests[1];
    let pass = same && slowest < Duration::from_secs(60) && digests[0].1 > 0;
    settle(
        5,
        pass,
        format!(
            "{} trace lines, identical={same}, slowest run {:.2}s",
            digests[0].1,
            slowest.as_secs_f64()
        ),
    );
}

/// Per-run storm accounting for criterion 10.
#[derive(Default)]
struct StormCheck {
    /// (vehicle, message) pairs that have transmitted.
    sent: BTreeSet<(VehicleId, MsgKey)>,
    duplicate_tx: u64,
    /// Receptions of each message per vehicle so far.
    heard: BTreeMap<(VehicleId, MsgKey), u32>,
    after_heard_rebroadcast: u64,
    rebroadcasts: u64,
}

impl TraceSink for StormCheck {
    fn record(&mut self, rec: &TraceRecord) {
        let Some(key) = rec.msg else {
            return;
        };
        match rec.kind {
            TraceKind::TxStart => {
                if !self.sent.insert((rec.vehicle, key)) {
                    self.duplicate_tx += 1;
                }
                if rec.vehicle != key.sender {
                    self.rebroadcasts += 1;
                    // the first reception is what triggered this rebroadcast;
                    // any later one means a copy was heard before sending
                    if self.heard.get(&(rec.vehicle, key)).copied().unwrap_or(0) > 1 {
                        self.after_heard_rebroadcast += 1;
                    }
                }
            }
            TraceKind::Delivery if rec.outcome == Some(Outcome::Received) => {
                *self.heard.entry((rec.vehicle, key)).or_default() += 1;
            }
            _ => {}
        }
    }
}

struct SweepRun {
    metrics: RunMetrics,
    duplicate_tx: u64,
    after_heard_rebroadcast: u64,
    rebroadcasts: u64,
}

struct Sweep {
    runs: BTreeMap<ProtocolKind, Vec<SweepRun>>,
    elapsed: Duration,
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let started = Instant::now();
        let mut runs = BTreeMap::new();
        for kind in ProtocolKind::ALL {
            let mut scenario = ScenarioConfig::default();
            scenario.protocol.kind = kind;
            let horizon = SimTime::from_ms(scenario.sim.duration_ms);
            let per_seed = (0..SWEEP_SEEDS)
                .map(|seed| {
                    let mut sink = (MetricsCollector::new(scenario.metrics.clone()), StormCheck::default());
                    run_with(&scenario, seed, EngineOptions::default(), &mut sink).unwrap();
                    SweepRun {
                        metrics: sink.0.finish(horizon),
                        duplicate_tx: sink.1.duplicate_tx,
                        after_heard_rebroadcast: sink.1.after_heard_rebroadcast,
                        rebroadcasts: sink.1.rebroadcasts,
                    }
                })
                .collect();
            runs.insert(kind, per_seed);
        }
        Sweep {
            runs,
            elapsed: started.elapsed(),
        }
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn per_protocol(f: impl Fn(&SweepRun) -> Option<f64>) -> [f64; 3] {
    let s = sweep();
    ProtocolKind::ALL.map(|k| mean(s.runs[&k].iter().filter_map(&f)))
}

#[test]
fn criterion_06_reception_beyond_1000m() {
    let [pcbb, cbb, emdv] = per_protocol(|r| r.metrics.reception.probability_between(1000.0, 1500.0));
    let elapsed = sweep().elapsed;
    let pass = pcbb >= cbb && cbb > emdv && elapsed < Duration::from_secs(30 * 60);
    settle(
        6,
        pass,
        format!(
            "mean reception in (1000,1500] over {SWEEP_SEEDS} seeds: pcbb={pcbb:.4} cbb={cbb:.4} emdv={emdv:.4}; need pcbb >= cbb > emdv (sweep {:.0}s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_07_final_second_delay_ordering() {
    let final_window = SimTime::from_secs(9);
    let [pcbb, cbb, emdv] = per_protocol(|r| {
        r.metrics
            .delay
            .samples
            .iter()
            .find(|s| s.t == final_window)
            .map(|s| s.mean_delay_us)
    });
    let pass = pcbb < cbb && cbb < emdv;
    settle(
        7,
        pass,
        format!("mean delay in [9 s, 10 s): pcbb={pcbb:.1}us cbb={cbb:.1}us emdv={emdv:.1}us; need pcbb < cbb < emdv"),
    );
}

#[test]
fn criterion_08_final_second_collision_ratios() {
    let ratios = per_protocol(|r| r.metrics.collisions.samples.last().map(|c| c.ratio));
    let spread = ratios.iter().cloned().fold(f64::MIN, f64::max) - ratios.iter().cloned().fold(f64::MAX, f64::min);
    let pass = spread <= 0.02;
    settle(
        8,
        pass,
        format!(
            "final-second collision ratio pcbb={:.4} cbb={:.4} emdv={:.4}; max pairwise gap {:.2} pp",
            ratios[0],
            ratios[1],
            ratios[2],
            spread * 100.0
        ),
    );
}

/// A stationary jam behind the sender at x=1000: the candidate at 203 m,
/// three more vehicles within a metre of it, a tight cluster just short of
/// that and a sparse tail in between.
fn recovery_fleet() -> Fleet {
    let mut xs = vec![1000.0];
    xs.extend((0..10).map(|i| 797.0 + 0.3 * i as f64));
    xs.push(800.0);
    xs.extend((0..10).map(|i| 850.0 + 14.0 * i as f64));
    let vehicles = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| Vehicle {
            id: VehicleId(i as u32),
            position: Position::new(x, (i % 3) as u32 + 1),
            speed: 0.0,
            heading: 1,
        })
        .collect();
    Fleet {
        vehicles,
        road_length: 5_000.0,
        lane_count: 3,
        time: SimTime::ZERO,
    }
}

fn recovery_scenario(kind: ProtocolKind) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.protocol.kind = kind;
    c.sim.duration_ms = 1_200;
    c.traffic.road_length_m = 5_000.0;
    c.protocol.danger_schedule = vec![DangerEvent {
        t_ms: 1_000,
        code: 1,
        origin_x_m: 1_000.0,
    }];
    c
}

struct Recovery {
    candidate_missed: bool,
    segment_received: bool,
    rebroadcasts: usize,
}

fn recovery_run(kind: ProtocolKind, seed: u64) -> Recovery {
    let mut trace = EventTrace::default();
    let opts = EngineOptions {
        force_candidate_miss: true,
    };
    run_fleet_with(&recovery_scenario(kind), recovery_fleet(), seed, opts, &mut trace).unwrap();
    let origin = trace
        .iter()
        .find(|r| r.kind == TraceKind::Originate)
        .expect("danger fires");
    let key = origin.msg.unwrap();
    let original_end = trace
        .iter()
        .find(|r| r.kind == TraceKind::TxEnd && r.vehicle == key.sender && r.msg == Some(key))
        .expect("original is sent")
        .time;
    // vehicle 1 (x=797) is the farthest rear neighbor
    let candidate_missed = trace.iter().any(|r| {
        r.kind == TraceKind::Delivery
            && r.time == original_end
            && r.vehicle == VehicleId(1)
            && r.msg == Some(key)
            && r.outcome == Some(Outcome::Faded)
    });
    let segment_received = trace.iter().any(|r| r.kind == TraceKind::Contend && r.msg == Some(key));
    let rebroadcasts = trace
        .iter()
        .filter(|r| r.kind == TraceKind::TxStart && r.msg == Some(key) && r.vehicle != key.sender)
        .count();
    Recovery {
        candidate_missed,
        segment_received,
        rebroadcasts,
    }
}

#[test]
fn criterion_09_recovery_when_candidate_misses() {
    let seeds = 0..100u64;
    let mut counts = BTreeMap::new();
    let mut preconditions = true;
    for kind in ProtocolKind::ALL {
        let mut ok = 0;
        for seed in seeds.clone() {
            let r = recovery_run(kind, seed);
            preconditions &= r.candidate_missed;
            match kind {
                ProtocolKind::Emdv => ok += (r.rebroadcasts == 0) as u32,
                _ => {
                    preconditions &= r.segment_received;
                    ok += (r.rebroadcasts >= 1) as u32;
                }
            }
        }
        counts.insert(kind, ok);
    }
    let pass = preconditions && counts.values().all(|&c| c == 100);
    settle(
        9,
        pass,
        format!(
            "preconditions held={preconditions}; pcbb rebroadcast in {}/100, cbb in {}/100, emdv silent in {}/100",
            counts[&ProtocolKind::Pcbb],
            counts[&ProtocolKind::Cbb],
            counts[&ProtocolKind::Emdv]
        ),
    );
}

#[test]
fn criterion_10_no_duplicates_no_storm() {
    let s = sweep();
    let runs = s.runs.values().flatten();
    let (dups, storms, rebroadcasts, n) = runs.fold((0, 0, 0, 0), |(d, st, rb, n), r| {
        (
            d + r.duplicate_tx,
            st + r.after_heard_rebroadcast,
            rb + r.rebroadcasts,
            n + 1,
        )
    });
    let pass = dups == 0 && storms == 0;
    settle(
        10,
        pass,
        format!(
            "{n} runs, {rebroadcasts} rebroadcasts: {dups} repeated (vehicle, message) transmissions, {storms} rebroadcasts after hearing a copy"
        ),
    );
}

/// The clustering procedure traced by hand: sort descending, walk the
/// successive gaps, open a segment whenever a gap is not below twice the
/// previous one. Each segment is returned as its member distances.
fn hand_traced_segments(distances: &[f64]) -> Vec<Vec<f64>> {
    let mut nt = distances.to_vec();
    nt.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut segments: Vec<Vec<f64>> = Vec::new();
    let mut last_gap = 0.0;
    for i in 0..nt.len() {
        if i == 0 {
            segments.push(vec![nt[0]]);
            continue;
        }
        let gap = nt[i - 1] - nt[i];
        let compared = i;
        if compared == 1 || gap < 2.0 * last_gap {
            segments.last_mut().unwrap().push(nt[i]);
        } else {
            segments.push(vec![nt[i]]);
        }
        last_gap = gap;
    }
    segments
}

#[test]
fn criterion_11_clustering_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    let mut first_bad = String::new();
    for case in 0..1_000 {
        let sender = Position::new(1_000.0, 2);
        let heading: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
        let size = rng.gen_range(0..=20);
        let mut nt = NeighborTable::new(VehicleId(10_000));
        let mut rear = Vec::new();
        for id in 0..size {
            let x = rng.gen_range(0.0..2_000.0);
            let pos = Position::new(x, rng.gen_range(1..=3));
            nt.ingest_beacon(
                &Beacon {
                    sender_id: VehicleId(id),
                    position: pos,
                    speed: 25.0,
                    heading,
                    timestamp: SimTime::ZERO,
                    piggyback_lbest: None,
                },
                SimTime::ZERO,
            );
            if (sender.x - x) * heading as f64 > 0.0 {
                rear.push((sender.x - x).abs());
            }
        }
        let oracle = hand_traced_segments(&rear);
        let got = cluster_segments(&nt, sender, heading);
        let mut got_sorted = got.segments.clone();
        got_sorted.sort_by(|a, b| b.progress.partial_cmp(&a.progress).unwrap());
        let same = got_sorted.len() == oracle.len()
            && got_sorted.iter().zip(&oracle).all(|(s, members)| {
                let far = members[0];
                let near = *members.last().unwrap();
                s.progress == far && s.vehicle_count as usize == members.len() && s.length == far - near
            });
        if !same {
            mismatches += 1;
            if first_bad.is_empty() {
                first_bad = format!(
                    " (first at case {case}: {} segments vs {})",
                    got_sorted.len(),
                    oracle.len()
                );
            }
        }
    }
    settle(
        11,
        mismatches == 0,
        format!("{mismatches}/1000 random neighbor tables disagree with the hand trace{first_bad}"),
    );
}
