//! Discrete-event engine.
//!
//! One seeded ChaCha8 generator drives everything: fleet placement, beacon
//! phases, then every draw in event order. Events are processed in
//! `(time, seq)` order, receivers are visited in id order, so a run is a pure
//! function of `(scenario, seed)`.
//!
//! Every transmission resolves at its end: each vehicle whose mean received
//! power clears `noise - 10 dB` gets one outcome. Propagation delay is zero.

use alloc::boxed::Box;
use alloc::collections::{BinaryHeap, VecDeque};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::beaconing::{draw_phase, emit_beacon, NeighborTable};
use crate::channel::{deliver, Outcome, Transmission};
use crate::mac::{draw_backoff, tx_duration, Csma};
use crate::mobility::{spawn_fleet_with, Fleet};
use crate::protocols::{
    contention_fire, on_danger_detected, on_emergency_received, rebroadcast_message, withdraw, FireAction,
    ForwardingState, NodeView, ReceiveAction, RxContext,
};
use crate::scenario::ScenarioConfig;
use crate::types::{Beacon, EmergencyMessage, MsgKey, Position, SimTime, VehicleId, MESSAGE_LEN};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceKind {
    /// A danger was detected and the original message built.
    Originate,
    /// Where each other vehicle stood when a message was originated.
    Exposure,
    TxStart,
    TxEnd,
    Delivery,
    /// A segment vehicle scheduled its contention timer.
    Contend,
    /// A pending or queued rebroadcast was abandoned.
    Cancel,
    /// A rebroadcast was handed to the MAC.
    Forward,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Originate => "originate",
            TraceKind::Exposure => "exposure",
            TraceKind::TxStart => "tx_start",
            TraceKind::TxEnd => "tx_end",
            TraceKind::Delivery => "delivery",
            TraceKind::Contend => "contend",
            TraceKind::Cancel => "cancel",
            TraceKind::Forward => "forward",
        }
    }
}

/// One line of the event trace. `msg` is `None` for beacon frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub kind: TraceKind,
    pub vehicle: VehicleId,
    pub msg: Option<MsgKey>,
    pub outcome: Option<Outcome>,
    pub x_m: f64,
}

pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);
}

impl<T: TraceSink + ?Sized> TraceSink for &mut T {
    fn record(&mut self, rec: &TraceRecord) {
        (**self).record(rec)
    }
}

impl<A: TraceSink, B: TraceSink> TraceSink for (A, B) {
    fn record(&mut self, rec: &TraceRecord) {
        self.0.record(rec);
        self.1.record(rec);
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceRecord) {}
}

/// The full trace kept in memory.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct EventTrace {
    pub records: Vec<TraceRecord>,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    /// FNV-1a over every field, for cheap equality checks between runs.
    pub fn digest(&self) -> u64 {
        let mut d = TraceDigest::default();
        for r in &self.records {
            d.record(r);
        }
        d.value()
    }
}

impl TraceSink for EventTrace {
    fn record(&mut self, rec: &TraceRecord) {
        self.records.push(*rec);
    }
}

/// Streaming form of [`EventTrace::digest`].
#[derive(Debug, Clone, Copy)]
pub struct TraceDigest {
    h: u64,
    n: u64,
}

impl Default for TraceDigest {
    fn default() -> Self {
        Self {
            h: 0xcbf2_9ce4_8422_2325,
            n: 0,
        }
    }
}

impl TraceDigest {
    fn eat(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.h ^= b as u64;
            self.h = self.h.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn value(&self) -> u64 {
        self.h
    }

    pub fn count(&self) -> u64 {
        self.n
    }
}

impl TraceSink for TraceDigest {
    fn record(&mut self, r: &TraceRecord) {
        self.n += 1;
        self.eat(&r.time.as_us().to_le_bytes());
        self.eat(&[r.kind as u8]);
        self.eat(&r.vehicle.0.to_le_bytes());
        let (s, m) = r.msg.map_or((u32::MAX, u32::MAX), |k| (k.sender.0, k.msg_id));
        self.eat(&s.to_le_bytes());
        self.eat(&m.to_le_bytes());
        self.eat(&[r.outcome.map_or(0xFF, |o| o as u8)]);
        self.eat(&r.x_m.to_bits().to_le_bytes());
    }
}

/// Knobs for constructed experiments; the defaults leave the model alone.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EngineOptions {
    /// The candidate named in each original emergency transmission does not
    /// receive it: its outcome is forced to `Faded`.
    pub force_candidate_miss: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub events: u64,
    pub beacon_tx: u64,
    pub emergency_tx: u64,
    pub originated: u64,
    pub deliveries: u64,
    pub decode_errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    DangerDetect(usize),
    BeaconDue(u32),
    MacAttempt { v: u32, token: u64 },
    TxEnd(u64),
    ContentionFire { v: u32, key: MsgKey },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct Queued {
    msg: EmergencyMessage,
    hop: u8,
    rebroadcast: bool,
}

#[derive(Debug, Default)]
struct Station {
    csma: Csma,
    token: u64,
    on_air: bool,
    beacon_pending: bool,
    emergencies: VecDeque<Queued>,
}

impl Station {
    fn has_frame(&self) -> bool {
        self.beacon_pending || !self.emergencies.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Payload {
    Beacon(Box<[u8; crate::types::NEIGHBOR_ENTRY_LEN]>),
    Emergency {
        bytes: Box<[u8; MESSAGE_LEN]>,
        key: MsgKey,
        hop: u8,
        candidate: Option<VehicleId>,
    },
}

#[derive(Debug, Clone)]
struct OnAir {
    id: u64,
    tx: Transmission,
    payload: Payload,
    /// Vehicles that sensed the carrier when the frame started.
    sensed_by: Vec<u32>,
    ended: bool,
}

impl OnAir {
    fn key(&self) -> Option<MsgKey> {
        match self.payload {
            Payload::Emergency { key, .. } => Some(key),
            Payload::Beacon(_) => None,
        }
    }
}

/// Runs a scenario and returns its full trace.
pub fn run(scenario: &ScenarioConfig, seed: u64) -> Result<EventTrace, Error> {
    let mut trace = EventTrace::default();
    run_with(scenario, seed, EngineOptions::default(), &mut trace)?;
    Ok(trace)
}

/// Runs a scenario, streaming every trace record into `sink`.
pub fn run_with<S: TraceSink + ?Sized>(
    scenario: &ScenarioConfig,
    seed: u64,
    options: EngineOptions,
    sink: &mut S,
) -> Result<RunSummary, Error> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fleet = spawn_fleet_with(&scenario.traffic, &mut rng)?;
    Ok(simulate(scenario, options, fleet, rng, sink))
}

/// Like [`run_with`] but on a hand-placed fleet; `scenario.traffic` is only
/// validated, not used for placement.
pub fn run_fleet_with<S: TraceSink + ?Sized>(
    scenario: &ScenarioConfig,
    fleet: Fleet,
    seed: u64,
    options: EngineOptions,
    sink: &mut S,
) -> Result<RunSummary, Error> {
    scenario.validate()?;
    if fleet.is_empty() {
        return Err(crate::ConfigError::new("traffic.vehicles", "must be at least 1").into());
    }
    Ok(simulate(
        scenario,
        options,
        fleet,
        ChaCha8Rng::seed_from_u64(seed),
        sink,
    ))
}

fn simulate<S: TraceSink + ?Sized>(
    scenario: &ScenarioConfig,
    options: EngineOptions,
    fleet: Fleet,
    rng: ChaCha8Rng,
    sink: &mut S,
) -> RunSummary {
    let mut engine = Engine::new(scenario, options, fleet, rng, sink);
    engine.prime();
    engine.run();
    engine.summary
}

struct Engine<'a, S: ?Sized> {
    cfg: &'a ScenarioConfig,
    opts: EngineOptions,
    rng: ChaCha8Rng,
    fleet: Fleet,
    stations: Vec<Station>,
    tables: Vec<NeighborTable>,
    forwarding: Vec<ForwardingState>,
    next_msg_id: Vec<u32>,
    heap: BinaryHeap<Event>,
    seq: u64,
    air: Vec<OnAir>,
    next_tx_id: u64,
    horizon: SimTime,
    frame_us: u64,
    floor_dbm: f64,
    cs_dbm: f64,
    sink: &'a mut S,
    summary: RunSummary,
}

impl<'a, S: TraceSink + ?Sized> Engine<'a, S> {
    fn new(cfg: &'a ScenarioConfig, opts: EngineOptions, fleet: Fleet, rng: ChaCha8Rng, sink: &'a mut S) -> Self {
        let n = fleet.len();
        Self {
            cfg,
            opts,
            rng,
            stations: (0..n).map(|_| Station::default()).collect(),
            tables: (0..n).map(|i| NeighborTable::new(VehicleId(i as u32))).collect(),
            forwarding: (0..n).map(|_| ForwardingState::new()).collect(),
            next_msg_id: alloc::vec![0; n],
            fleet,
            heap: BinaryHeap::new(),
            seq: 0,
            air: Vec::new(),
            next_tx_id: 0,
            horizon: SimTime::from_ms(cfg.sim.duration_ms),
            frame_us: tx_duration(&cfg.mac, cfg.sim.message_size_bytes),
            floor_dbm: cfg.channel.noise_floor_dbm - 10.0,
            cs_dbm: cfg.channel.carrier_sense_dbm(),
            sink,
            summary: RunSummary::default(),
        }
    }

    fn push(&mut self, at: SimTime, kind: EventKind) {
        self.heap.push(Event {
            at,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    fn emit(
        &mut self,
        time: SimTime,
        kind: TraceKind,
        v: u32,
        msg: Option<MsgKey>,
        outcome: Option<Outcome>,
        x_m: f64,
    ) {
        self.sink.record(&TraceRecord {
            time,
            kind,
            vehicle: VehicleId(v),
            msg,
            outcome,
            x_m,
        });
    }

    fn pos(&self, v: u32, t: SimTime) -> Position {
        self.fleet.position_at(v as usize, t)
    }

    fn prime(&mut self) {
        let period = self.cfg.beacon.period();
        for v in 0..self.fleet.len() as u32 {
            let phase = draw_phase(period, &mut self.rng);
            if phase < self.horizon {
                self.push(phase, EventKind::BeaconDue(v));
            }
        }
        for i in 0..self.cfg.protocol.danger_schedule.len() {
            let at = SimTime::from_ms(self.cfg.protocol.danger_schedule[i].t_ms);
            if at < self.horizon {
                self.push(at, EventKind::DangerDetect(i));
            }
        }
    }

    fn run(&mut self) {
        while let Some(ev) = self.heap.pop() {
            // frames already on the air always finish
            if ev.at >= self.horizon && !matches!(ev.kind, EventKind::TxEnd(_)) {
                continue;
            }
            self.summary.events += 1;
            match ev.kind {
                EventKind::DangerDetect(i) => self.danger(ev.at, i),
                EventKind::BeaconDue(v) => self.beacon_due(ev.at, v),
                EventKind::MacAttempt { v, token } => self.mac_attempt(ev.at, v, token),
                EventKind::TxEnd(id) => self.tx_end(ev.at, id),
                EventKind::ContentionFire { v, key } => self.contention_fire(ev.at, v, key),
            }
        }
    }

    fn node_view(&mut self, v: u32, t: SimTime) -> (Position, i8) {
        let ttl = self.cfg.beacon.ttl();
        self.tables[v as usize].prune(t, ttl);
        (self.pos(v, t), self.fleet.vehicles[v as usize].heading)
    }

    fn danger(&mut self, t: SimTime, i: usize) {
        let d = self.cfg.protocol.danger_schedule[i].clone();
        let n = self.fleet.len() as u32;
        let Some(v) = (0..n).min_by(|&a, &b| {
            let da = libm::fabs(self.pos(a, t).x - d.origin_x_m);
            let db = libm::fabs(self.pos(b, t).x - d.origin_x_m);
            da.total_cmp(&db).then(a.cmp(&b))
        }) else {
            return;
        };
        let (position, heading) = self.node_view(v, t);
        let msg_id = self.next_msg_id[v as usize];
        self.next_msg_id[v as usize] += 1;
        let node = NodeView {
            id: VehicleId(v),
            position,
            heading,
            nt: &self.tables[v as usize],
        };
        let Ok((msg, _)) = on_danger_detected(
            self.cfg.protocol.kind,
            &node,
            &mut self.forwarding[v as usize],
            d.code,
            t,
            msg_id,
            &self.cfg.pcbb,
            &mut self.rng,
        ) else {
            return;
        };
        let key = msg.key();
        self.summary.originated += 1;
        self.emit(t, TraceKind::Originate, v, Some(key), None, position.x);
        for u in 0..n {
            if u != v {
                let x = self.pos(u, t).x;
                self.emit(t, TraceKind::Exposure, u, Some(key), None, x);
            }
        }
        self.enqueue(
            t,
            v,
            Queued {
                msg,
                hop: 0,
                rebroadcast: false,
            },
        );
    }

    fn beacon_due(&mut self, t: SimTime, v: u32) {
        let next = t + self.cfg.beacon.period();
        if next < self.horizon {
            self.push(next, EventKind::BeaconDue(v));
        }
        self.stations[v as usize].beacon_pending = true;
        self.kick(t, v);
    }

    fn enqueue(&mut self, t: SimTime, v: u32, q: Queued) {
        self.stations[v as usize].emergencies.push_back(q);
        self.kick(t, v);
    }

    /// Starts channel access if the station has something to send and is
    /// not already contending or transmitting.
    fn kick(&mut self, t: SimTime, v: u32) {
        let st = &self.stations[v as usize];
        if st.on_air || !st.csma.is_idle() || !st.has_frame() {
            return;
        }
        let backoff = draw_backoff(self.cfg.mac.cw_min, &mut self.rng);
        let st = &mut self.stations[v as usize];
        if let Some(fire) = st.csma.request(&self.cfg.mac, t, backoff) {
            st.token += 1;
            let token = st.token;
            self.push(fire, EventKind::MacAttempt { v, token });
        }
    }

    fn mac_attempt(&mut self, t: SimTime, v: u32, token: u64) {
        let st = &mut self.stations[v as usize];
        if st.token != token || st.csma.fire_time(&self.cfg.mac) != Some(t) {
            return;
        }
        st.csma.reset();
        let (position, heading) = self.node_view(v, t);
        let st = &mut self.stations[v as usize];
        let payload = if let Some(q) = st.emergencies.pop_front() {
            let key = q.msg.key();
            if q.rebroadcast {
                withdraw(&mut self.forwarding[v as usize], key);
            }
            self.summary.emergency_tx += 1;
            let bytes = match q.msg.encode() {
                Ok(b) => b,
                Err(_) => return,
            };
            Payload::Emergency {
                bytes: Box::new(bytes),
                key,
                hop: q.hop,
                candidate: q.msg.candidate_id,
            }
        } else if st.beacon_pending {
            st.beacon_pending = false;
            self.summary.beacon_tx += 1;
            let mut vehicle = self.fleet.vehicles[v as usize].clone();
            vehicle.position = position;
            vehicle.heading = heading;
            let b = emit_beacon(&vehicle, t, self.forwarding[v as usize].last_l_best());
            Payload::Beacon(Box::new(b.encode_entry()))
        } else {
            return;
        };

        self.stations[v as usize].on_air = true;
        let tx = Transmission {
            sender: VehicleId(v),
            origin: position,
            start: t,
            duration: self.frame_us,
        };
        let mut sensed_by = Vec::new();
        for u in 0..self.fleet.len() as u32 {
            if u == v {
                continue;
            }
            let d = crate::types::distance(position, self.pos(u, t));
            if self.cfg.channel.rx_power_dbm(d) >= self.cs_dbm {
                self.stations[u as usize].csma.sense_start(&self.cfg.mac, t);
                sensed_by.push(u);
            }
        }
        let id = self.next_tx_id;
        self.next_tx_id += 1;
        let air = OnAir {
            id,
            tx,
            payload,
            sensed_by,
            ended: false,
        };
        let key = air.key();
        self.air.push(air);
        self.emit(t, TraceKind::TxStart, v, key, None, position.x);
        self.push(tx.end(), EventKind::TxEnd(id));
    }

    fn tx_end(&mut self, t: SimTime, id: u64) {
        let Some(idx) = self.air.iter().position(|a| a.id == id) else {
            return;
        };
        let air = self.air[idx].clone();
        let v = air.tx.sender.0;
        let key = air.key();
        self.emit(t, TraceKind::TxEnd, v, key, None, air.tx.origin.x);

        // The sender is free again; whoever sensed the frame may resume.
        self.stations[v as usize].on_air = false;
        self.kick(t, v);
        for &u in &air.sensed_by {
            if let Some(fire) = self.stations[u as usize].csma.sense_end(&self.cfg.mac, t) {
                let st = &mut self.stations[u as usize];
                st.token += 1;
                let token = st.token;
                self.push(fire, EventKind::MacAttempt { v: u, token });
            }
        }

        let concurrent: Vec<Transmission> = self.air.iter().map(|a| a.tx).collect();
        let mut received = Vec::new();
        for u in 0..self.fleet.len() as u32 {
            if u == v {
                continue;
            }
            let rx_pos = self.pos(u, t);
            let d = crate::types::distance(air.tx.origin, rx_pos);
            if self.cfg.channel.rx_power_dbm(d) < self.floor_dbm {
                continue;
            }
            let Some(mut outcome) = deliver(
                &self.cfg.channel,
                &air.tx,
                VehicleId(u),
                rx_pos,
                &concurrent,
                &mut self.rng,
            ) else {
                continue;
            };
            if let Payload::Emergency {
                hop: 0,
                candidate: Some(c),
                ..
            } = air.payload
            {
                if self.opts.force_candidate_miss && c.0 == u {
                    outcome = Outcome::Faded;
                }
            }
            self.summary.deliveries += 1;
            self.emit(t, TraceKind::Delivery, u, key, Some(outcome), rx_pos.x);
            if outcome == Outcome::Received {
                received.push(u);
            }
        }

        for u in received {
            match &air.payload {
                Payload::Beacon(entry) => match Beacon::decode_entry(&entry[..], air.tx.start) {
                    Ok(b) => {
                        self.tables[u as usize].ingest_beacon(&b, t);
                    }
                    Err(_) => self.summary.decode_errors += 1,
                },
                Payload::Emergency { bytes, hop, .. } => match EmergencyMessage::decode(&bytes[..]) {
                    Ok(msg) => self.emergency_received(t, u, &msg, air.tx.origin, *hop),
                    Err(_) => {
                        self.summary.decode_errors += 1;
                        self.forwarding[u as usize].decode_errors += 1;
                    }
                },
            }
        }

        // Keep only frames that can still overlap one whose end is pending.
        self.air[idx].ended = true;
        let cutoff = self
            .air
            .iter()
            .filter(|a| !a.ended)
            .map(|a| a.tx.start)
            .min()
            .unwrap_or(t);
        self.air.retain(|a| !a.ended || a.tx.end() > cutoff);
    }

    fn emergency_received(&mut self, t: SimTime, u: u32, msg: &EmergencyMessage, tx_origin: Position, hop: u8) {
        let (position, heading) = self.node_view(u, t);
        let key = msg.key();
        let node = NodeView {
            id: VehicleId(u),
            position,
            heading,
            nt: &self.tables[u as usize],
        };
        let rx = RxContext {
            t,
            tx_origin,
            hop,
            hop_cap: self.cfg.protocol.hop_cap,
            t_slot_us: self.cfg.mac.slot_us as f64,
        };
        let kind = self.cfg.protocol.kind;
        let action = on_emergency_received(kind, &node, &mut self.forwarding[u as usize], msg, &rx);
        match action {
            ReceiveAction::RebroadcastNow => {
                self.forward(t, u, msg, hop + 1);
            }
            ReceiveAction::ScheduleContention { fire_at } => {
                self.emit(t, TraceKind::Contend, u, Some(key), None, position.x);
                self.push(fire_at, EventKind::ContentionFire { v: u, key });
            }
            ReceiveAction::Duplicate { cancelled } => {
                let st = &mut self.stations[u as usize];
                let before = st.emergencies.len();
                st.emergencies.retain(|q| !(q.rebroadcast && q.msg.key() == key));
                let dequeued = st.emergencies.len() != before;
                if dequeued && !st.has_frame() && !st.on_air {
                    st.csma.reset();
                    st.token += 1;
                }
                if cancelled || dequeued {
                    self.emit(t, TraceKind::Cancel, u, Some(key), None, position.x);
                }
            }
            ReceiveAction::Drop => {}
        }
    }

    fn forward(&mut self, t: SimTime, u: u32, original: &EmergencyMessage, hop: u8) {
        let (position, heading) = self.node_view(u, t);
        let node = NodeView {
            id: VehicleId(u),
            position,
            heading,
            nt: &self.tables[u as usize],
        };
        let (msg, _) = rebroadcast_message(
            self.cfg.protocol.kind,
            &node,
            &mut self.forwarding[u as usize],
            original,
            &self.cfg.pcbb,
            &mut self.rng,
        );
        self.emit(t, TraceKind::Forward, u, Some(msg.key()), None, position.x);
        self.enqueue(
            t,
            u,
            Queued {
                msg,
                hop,
                rebroadcast: true,
            },
        );
    }

    fn contention_fire(&mut self, t: SimTime, u: u32, key: MsgKey) {
        let Some(pending) = self.forwarding[u as usize].pending(key) else {
            return;
        };
        if pending.fire_at != t {
            return;
        }
        let on_air = self
            .air
            .iter()
            .any(|a| !a.ended && a.key() == Some(key) && a.sensed_by.contains(&u));
        match contention_fire(&mut self.forwarding[u as usize], key, on_air) {
            FireAction::Rebroadcast(p) => {
                // forward() re-registers nothing; the queued frame is the pending one
                self.forward(t, u, &p.msg, p.hop);
            }
            FireAction::Cancel => {
                let x = self.pos(u, t).x;
                self.emit(t, TraceKind::Cancel, u, Some(key), None, x);
            }
        }
    }
}
