//! Periodic beacons and the per-vehicle neighbor table.
//!
//! Beacons also carry the sender's most recent lBest. Collecting those values
//! from neighbors gives a vehicle its neighborhood-best estimate (gBest).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use crate::mobility::Vehicle;
use crate::types::{distance, Beacon, Position, SimTime, VehicleId};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct BeaconParams {
    pub rate_hz: f64,
    /// Entries older than this are evicted.
    pub ttl_ms: u64,
}

impl Default for BeaconParams {
    fn default() -> Self {
        Self {
            rate_hz: 10.0,
            ttl_ms: 300,
        }
    }
}

impl BeaconParams {
    pub fn period(&self) -> SimTime {
        SimTime(libm::round(1e6 / self.rate_hz) as u64)
    }

    pub fn ttl(&self) -> SimTime {
        SimTime::from_ms(self.ttl_ms)
    }
}

/// Random phase in `[0, period)` so vehicles do not beacon in lockstep.
pub fn draw_phase<R: Rng + ?Sized>(period: SimTime, rng: &mut R) -> SimTime {
    SimTime(rng.gen_range(0..period.as_us().max(1)))
}

/// Beacon times `phase, phase + period, ...` strictly before `horizon`.
pub fn beacon_schedule(phase: SimTime, period: SimTime, horizon: SimTime) -> impl Iterator<Item = SimTime> {
    (0u64..)
        .map(move |k| phase + SimTime(k * period.as_us()))
        .take_while(move |&t| t < horizon)
}

/// `vehicle.position` must already be the position at `t`.
pub fn emit_beacon(vehicle: &Vehicle, t: SimTime, last_lbest: Option<f64>) -> Beacon {
    Beacon {
        sender_id: vehicle.id,
        position: vehicle.position,
        speed: vehicle.speed,
        heading: vehicle.heading,
        timestamp: t,
        piggyback_lbest: last_lbest,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub id: VehicleId,
    pub position: Position,
    pub speed: f64,
    pub heading: i8,
    pub last_seen: SimTime,
    pub reported_lbest: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    owner: VehicleId,
    entries: BTreeMap<VehicleId, NeighborEntry>,
}

impl NeighborTable {
    pub fn new(owner: VehicleId) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> VehicleId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: VehicleId) -> Option<&NeighborEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &NeighborEntry> {
        self.entries.values()
    }

    /// Upserts the sender's entry. Returns false for the owner's own beacon.
    pub fn ingest_beacon(&mut self, b: &Beacon, t: SimTime) -> bool {
        if b.sender_id == self.owner {
            return false;
        }
        self.entries.insert(
            b.sender_id,
            NeighborEntry {
                id: b.sender_id,
                position: b.position,
                speed: b.speed,
                heading: b.heading,
                last_seen: t,
                reported_lbest: b.piggyback_lbest,
            },
        );
        true
    }

    /// Drops every entry not refreshed within `ttl` of `t`.
    pub fn prune(&mut self, t: SimTime, ttl: SimTime) {
        self.entries.retain(|_, e| t.saturating_sub(e.last_seen) <= ttl);
    }

    /// Neighborhood best: the largest lBest any neighbor reported.
    pub fn gbest_from_crnt(&self) -> Option<f64> {
        self.entries
            .values()
            .filter_map(|e| e.reported_lbest)
            .fold(None, |best, v| Some(best.map_or(v, |b: f64| b.max(v))))
    }

    /// Neighbors strictly behind `pos` for a vehicle driving along `heading`,
    /// with their distance, in id order.
    pub fn rear_neighbors(&self, pos: Position, heading: i8) -> Vec<(VehicleId, f64)> {
        self.entries
            .values()
            .filter(|e| (pos.x - e.position.x) * heading as f64 > 0.0)
            .map(|e| (e.id, distance(pos, e.position)))
            .collect()
    }

    /// Entries ordered by distance from `pos`, nearest first.
    pub fn by_distance(&self, pos: Position) -> Vec<(VehicleId, f64)> {
        let mut v: Vec<_> = self
            .entries
            .values()
            .map(|e| (e.id, distance(pos, e.position)))
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v
    }
}
