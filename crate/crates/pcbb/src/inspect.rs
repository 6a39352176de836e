//! Debug views of a scenario: where the fleet is, and how one vehicle
//! clusters its rear neighbors.

use pcbb_core::beaconing::{emit_beacon, NeighborTable};
use pcbb_core::forwarder::{cluster_segments, ProgressList};
use pcbb_core::mobility::{spawn_fleet, Fleet};
use pcbb_core::{distance, ScenarioConfig, SimTime, VehicleId};

use crate::Error;

/// The seeded fleet moved forward to `t`.
pub fn fleet_at(scenario: &ScenarioConfig, seed: u64, t: SimTime) -> Result<Fleet, Error> {
    scenario.validate().map_err(pcbb_core::Error::from)?;
    let mut fleet = spawn_fleet(&scenario.traffic, seed)?;
    fleet.advance(t);
    Ok(fleet)
}

/// The progress list `vehicle` would build at `t` from a complete neighbor
/// table of everyone within `channel.range_m`. `None` for an unknown id.
pub fn progress_list_at(
    scenario: &ScenarioConfig,
    seed: u64,
    t: SimTime,
    vehicle: VehicleId,
) -> Result<Option<ProgressList>, Error> {
    let fleet = fleet_at(scenario, seed, t)?;
    let Some(me) = fleet.vehicles.iter().find(|v| v.id == vehicle) else {
        return Ok(None);
    };
    let mut nt = NeighborTable::new(me.id);
    for v in fleet.vehicles.iter().filter(|v| v.id != me.id) {
        if distance(me.position, v.position) <= scenario.channel.range_m {
            nt.ingest_beacon(&emit_beacon(v, t, None), t);
        }
    }
    Ok(Some(cluster_segments(&nt, me.position, me.heading)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fleet_moves_with_time() {
        let s = ScenarioConfig::default();
        let a = fleet_at(&s, 3, SimTime::ZERO).unwrap();
        let b = fleet_at(&s, 3, SimTime::from_secs(1)).unwrap();
        assert_eq!(b.time, SimTime::from_secs(1));
        assert_eq!(a.len(), b.len());
        assert_ne!(a.vehicles[0].position, b.vehicles[0].position);
    }

    #[test]
    fn progress_list_counts_rear_neighbors() {
        let s = ScenarioConfig::default();
        let pl = progress_list_at(&s, 1, SimTime::ZERO, VehicleId(0)).unwrap().unwrap();
        let fleet = fleet_at(&s, 1, SimTime::ZERO).unwrap();
        let me = &fleet.vehicles[0];
        let behind = fleet
            .vehicles
            .iter()
            .filter(|v| v.id != me.id)
            .filter(|v| {
                let d = distance(me.position, v.position);
                d <= s.channel.range_m && (v.position.x - me.position.x) * (me.heading as f64) < 0.0
            })
            .count() as u32;
        assert_eq!(pl.segments.iter().map(|s| s.vehicle_count).sum::<u32>(), behind);
        assert!(progress_list_at(&s, 1, SimTime::ZERO, VehicleId(9_999))
            .unwrap()
            .is_none());
    }
}
