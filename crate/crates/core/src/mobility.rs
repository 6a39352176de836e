//! Highway fleet generation and constant-velocity motion on a wrap-around road.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::{Position, SimTime, VehicleId};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct TrafficParams {
    pub vehicles: usize,
    pub road_length_m: f64,
    pub lanes: u32,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    /// Minimum same-lane spacing at spawn time.
    pub min_headway_m: f64,
    /// Even lanes drive toward decreasing x when set.
    pub bidirectional: bool,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            vehicles: 200,
            road_length_m: 2_000.0,
            lanes: 3,
            speed_min_kmh: 20.0,
            speed_max_kmh: 120.0,
            min_headway_m: 5.0,
            bidirectional: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub position: Position,
    /// Meters per second.
    pub speed: f64,
    /// +1 drives toward increasing x, -1 toward decreasing x.
    pub heading: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub vehicles: Vec<Vehicle>,
    pub road_length: f64,
    pub lane_count: u32,
    /// Time at which `vehicles[..].position` is valid.
    pub time: SimTime,
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

fn wrap(x: f64, length: f64) -> f64 {
    let r = libm::fmod(x, length);
    let r = if r < 0.0 { r + length } else { r };
    // r + length can round up to exactly length
    if r >= length {
        0.0
    } else {
        r
    }
}

/// Places `params.vehicles` vehicles uniformly on the road with at least
/// `min_headway_m` between same-lane neighbors (measured around the ring).
pub fn spawn_fleet(params: &TrafficParams, seed: u64) -> Result<Fleet, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spawn_fleet_with(params, &mut rng)
}

pub fn spawn_fleet_with<R: Rng + ?Sized>(params: &TrafficParams, rng: &mut R) -> Result<Fleet, Error> {
    let lanes = params.lanes.max(1);
    let per_lane = (params.road_length_m / params.min_headway_m) as usize;
    let capacity_error = Error::Capacity {
        count: params.vehicles,
        lanes,
        road_length_m: params.road_length_m,
        headway_m: params.min_headway_m,
    };
    if params.min_headway_m > 0.0 && params.vehicles > per_lane.saturating_mul(lanes as usize) {
        return Err(capacity_error);
    }

    // Lane choice is uniform among lanes that still have room.
    let mut lane_of = Vec::with_capacity(params.vehicles);
    let mut lane_counts = alloc::vec![0usize; lanes as usize];
    for _ in 0..params.vehicles {
        let open: Vec<usize> = (0..lanes as usize)
            .filter(|&l| params.min_headway_m <= 0.0 || lane_counts[l] < per_lane)
            .collect();
        let lane = open[rng.gen_range(0..open.len())];
        lane_counts[lane] += 1;
        lane_of.push(lane);
    }

    // Per lane: n sorted uniforms on [0, L - n*h), shifted by i*h and a random
    // rotation. Every gap, including the wrap-around one, is at least h.
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(lanes as usize);
    for &n in &lane_counts {
        let free = params.road_length_m - n as f64 * params.min_headway_m;
        let mut ys: Vec<f64> = (0..n)
            .map(|_| if free > 0.0 { rng.gen_range(0.0..free) } else { 0.0 })
            .collect();
        ys.sort_by(f64::total_cmp);
        let offset = rng.gen_range(0.0..params.road_length_m);
        let placed = ys
            .iter()
            .enumerate()
            .map(|(i, y)| wrap(y + i as f64 * params.min_headway_m + offset, params.road_length_m))
            .collect();
        xs.push(placed);
    }

    let vmin = kmh_to_mps(params.speed_min_kmh);
    let vmax = kmh_to_mps(params.speed_max_kmh);
    let mut next_in_lane = alloc::vec![0usize; lanes as usize];
    let vehicles = lane_of
        .iter()
        .enumerate()
        .map(|(i, &lane)| {
            let x = xs[lane][next_in_lane[lane]];
            next_in_lane[lane] += 1;
            let lane_no = lane as u32 + 1;
            let heading = if params.bidirectional && lane_no.is_multiple_of(2) {
                -1
            } else {
                1
            };
            let speed = if vmax > vmin { rng.gen_range(vmin..=vmax) } else { vmin };
            Vehicle {
                id: VehicleId(i as u32),
                position: Position::new(x, lane_no),
                speed,
                heading,
            }
        })
        .collect();

    Ok(Fleet {
        vehicles,
        road_length: params.road_length_m,
        lane_count: lanes,
        time: SimTime::ZERO,
    })
}

impl Fleet {
    /// Position of vehicle `idx` at absolute time `t >= self.time`, without
    /// mutating the fleet.
    pub fn position_at(&self, idx: usize, t: SimTime) -> Position {
        let v = &self.vehicles[idx];
        let dt = t.saturating_sub(self.time).as_secs_f64();
        Position::new(
            wrap(v.position.x + v.heading as f64 * v.speed * dt, self.road_length),
            v.position.lane,
        )
    }

    /// Moves every vehicle forward by `dt` at constant velocity.
    pub fn advance(&mut self, dt: SimTime) {
        let t = self.time + dt;
        for i in 0..self.vehicles.len() {
            self.vehicles[i].position = self.position_at(i, t);
        }
        self.time = t;
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }
}
