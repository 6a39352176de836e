//! Reception, delay and collision metrics over an event trace.
//!
//! [`MetricsCollector`] is a [`TraceSink`], so a run can be measured without
//! keeping its trace; the free functions wrap it for stored traces.
//!
//! Reception counts vehicle-exposure pairs: every vehicle present when a
//! message is originated is one attempt, binned by its distance from the
//! original sender at that moment, and succeeds if it ever receives the
//! message through any hop.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::channel::Outcome;
use crate::engine::{TraceKind, TraceRecord, TraceSink};
use crate::types::{MsgKey, SimTime, VehicleId};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct MetricsParams {
    pub bin_width_m: f64,
    pub sample_every_ms: u64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        Self {
            bin_width_m: 100.0,
            sample_every_ms: 1_000,
        }
    }
}

/// Distances are binned as `(lo, hi]`; zero falls in the first bin.
pub fn bin_index(d: f64, width: f64) -> usize {
    let k = libm::ceil(d / width);
    if k <= 1.0 {
        0
    } else {
        k as usize - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceptionBin {
    pub distance_lo: f64,
    pub distance_hi: f64,
    pub attempts: u64,
    pub received: u64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReceptionCurve {
    pub bins: Vec<ReceptionBin>,
}

impl ReceptionCurve {
    /// Pooled probability over bins whose upper edge lies in `(lo, hi]`.
    pub fn probability_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let (a, r) = self
            .bins
            .iter()
            .filter(|b| b.distance_hi > lo && b.distance_hi <= hi)
            .fold((0, 0), |(a, r), b| (a + b.attempts, r + b.received));
        (a > 0).then(|| r as f64 / a as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySample {
    /// Window start.
    pub t: SimTime,
    pub count: u64,
    pub mean_delay_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceDelay {
    pub distance_lo: f64,
    pub distance_hi: f64,
    pub count: u64,
    pub mean_delay_us: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DelaySeries {
    /// Windows of first receptions, only those holding at least one.
    pub samples: Vec<DelaySample>,
    pub by_distance: Vec<DistanceDelay>,
}

impl DelaySeries {
    pub fn last(&self) -> Option<&DelaySample> {
        self.samples.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSample {
    pub t: SimTime,
    pub collided: u64,
    pub attempts: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollisionReport {
    pub samples: Vec<CollisionSample>,
}

impl CollisionReport {
    pub fn total_collided(&self) -> u64 {
        self.samples.iter().map(|s| s.collided).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub reception: ReceptionCurve,
    pub delay: DelaySeries,
    pub collisions: CollisionReport,
}

#[derive(Debug, Clone, Copy)]
struct Exposure {
    distance: f64,
    first_rx: Option<SimTime>,
}

#[derive(Debug, Clone)]
pub struct MetricsCollector {
    params: MetricsParams,
    origins: BTreeMap<MsgKey, (SimTime, f64)>,
    exposures: BTreeMap<(MsgKey, VehicleId), Exposure>,
    /// Per window: (collided, delivery outcomes).
    collisions: Vec<(u64, u64)>,
}

impl MetricsCollector {
    pub fn new(params: MetricsParams) -> Self {
        Self {
            params,
            origins: BTreeMap::new(),
            exposures: BTreeMap::new(),
            collisions: Vec::new(),
        }
    }

    fn window_us(&self) -> u64 {
        self.params.sample_every_ms.max(1) * 1_000
    }

    /// Builds the three result families. Collision windows cover
    /// `[0, horizon)` even where nothing was sent.
    pub fn finish(&self, horizon: SimTime) -> RunMetrics {
        let w = self.params.bin_width_m;
        let window = self.window_us();

        let mut rx_bins: Vec<(u64, u64)> = Vec::new();
        let mut delay_dist: Vec<(u64, f64)> = Vec::new();
        let mut delay_time: BTreeMap<u64, (u64, f64)> = BTreeMap::new();
        for (&(key, _), e) in &self.exposures {
            let b = bin_index(e.distance, w);
            if rx_bins.len() <= b {
                rx_bins.resize(b + 1, (0, 0));
                delay_dist.resize(b + 1, (0, 0.0));
            }
            rx_bins[b].0 += 1;
            if let Some(t) = e.first_rx {
                rx_bins[b].1 += 1;
                let origin = self.origins[&key].0;
                let delay = t.saturating_sub(origin).as_us() as f64;
                delay_dist[b].0 += 1;
                delay_dist[b].1 += delay;
                let slot = delay_time.entry(t.as_us() / window).or_insert((0, 0.0));
                slot.0 += 1;
                slot.1 += delay;
            }
        }

        let edge = |i: usize| (i as f64 * w, (i + 1) as f64 * w);
        let reception = ReceptionCurve {
            bins: rx_bins
                .iter()
                .enumerate()
                .map(|(i, &(a, r))| ReceptionBin {
                    distance_lo: edge(i).0,
                    distance_hi: edge(i).1,
                    attempts: a,
                    received: r,
                    probability: if a > 0 { r as f64 / a as f64 } else { 0.0 },
                })
                .collect(),
        };
        let delay = DelaySeries {
            samples: delay_time
                .into_iter()
                .map(|(k, (n, sum))| DelaySample {
                    t: SimTime(k * window),
                    count: n,
                    mean_delay_us: sum / n as f64,
                })
                .collect(),
            by_distance: delay_dist
                .iter()
                .enumerate()
                .filter(|(_, &(n, _))| n > 0)
                .map(|(i, &(n, sum))| DistanceDelay {
                    distance_lo: edge(i).0,
                    distance_hi: edge(i).1,
                    count: n,
                    mean_delay_us: sum / n as f64,
                })
                .collect(),
        };

        // frames still on the air at the horizon count toward the last window
        let windows = (horizon.as_us().div_ceil(window) as usize).max(1);
        let mut per_window = alloc::vec![(0u64, 0u64); windows];
        for (i, &(c, a)) in self.collisions.iter().enumerate() {
            let slot = &mut per_window[i.min(windows - 1)];
            slot.0 += c;
            slot.1 += a;
        }
        let collisions = CollisionReport {
            samples: (0..windows)
                .map(|i| {
                    let (c, a) = per_window[i];
                    CollisionSample {
                        t: SimTime(i as u64 * window),
                        collided: c,
                        attempts: a,
                        ratio: if a > 0 { c as f64 / a as f64 } else { 0.0 },
                    }
                })
                .collect(),
        };

        RunMetrics {
            reception,
            delay,
            collisions,
        }
    }
}

impl TraceSink for MetricsCollector {
    fn record(&mut self, r: &TraceRecord) {
        match (r.kind, r.msg) {
            (TraceKind::Originate, Some(k)) => {
                self.origins.insert(k, (r.time, r.x_m));
            }
            (TraceKind::Exposure, Some(k)) => {
                if let Some(&(_, x0)) = self.origins.get(&k) {
                    self.exposures.insert(
                        (k, r.vehicle),
                        Exposure {
                            distance: libm::fabs(r.x_m - x0),
                            first_rx: None,
                        },
                    );
                }
            }
            _ => {}
        }
        if r.kind != TraceKind::Delivery {
            return;
        }
        let i = (r.time.as_us() / self.window_us()) as usize;
        if self.collisions.len() <= i {
            self.collisions.resize(i + 1, (0, 0));
        }
        self.collisions[i].1 += 1;
        match r.outcome {
            Some(Outcome::Collided) => self.collisions[i].0 += 1,
            Some(Outcome::Received) => {
                if let Some(k) = r.msg {
                    if let Some(e) = self.exposures.get_mut(&(k, r.vehicle)) {
                        e.first_rx.get_or_insert(r.time);
                    }
                }
            }
            _ => {}
        }
    }
}

fn collect<'a>(trace: impl IntoIterator<Item = &'a TraceRecord>, params: MetricsParams) -> (MetricsCollector, SimTime) {
    let mut c = MetricsCollector::new(params);
    let mut last = SimTime::ZERO;
    for r in trace {
        c.record(r);
        last = last.max(r.time);
    }
    (c, last)
}

pub fn reception_curve<'a>(trace: impl IntoIterator<Item = &'a TraceRecord>, bin_width_m: f64) -> ReceptionCurve {
    let params = MetricsParams {
        bin_width_m,
        ..MetricsParams::default()
    };
    let (c, last) = collect(trace, params);
    c.finish(last).reception
}

pub fn delay_series<'a>(
    trace: impl IntoIterator<Item = &'a TraceRecord>,
    sample_every: SimTime,
    bin_width_m: f64,
) -> DelaySeries {
    let params = MetricsParams {
        bin_width_m,
        sample_every_ms: (sample_every.as_us() / 1_000).max(1),
    };
    let (c, last) = collect(trace, params);
    c.finish(last).delay
}

/// Per-second collision counts; the last window is the one holding the
/// final record.
pub fn collision_report<'a>(trace: impl IntoIterator<Item = &'a TraceRecord>) -> CollisionReport {
    let (c, last) = collect(trace, MetricsParams::default());
    c.finish(last + SimTime(1)).collisions
}
