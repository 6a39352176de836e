//! Everything a single simulation run needs, with validation.

use alloc::format;

use crate::beaconing::BeaconParams;
use crate::channel::ChannelParams;
use crate::error::ConfigError;
use crate::forwarder::PcbbParams;
use crate::mac::MacParams;
use crate::metrics::MetricsParams;
use crate::mobility::TrafficParams;
use crate::protocols::ProtocolParams;
use crate::types::{classify, MESSAGE_LEN};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct SimParams {
    pub duration_ms: u64,
    pub message_size_bytes: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            duration_ms: 10_000,
            message_size_bytes: MESSAGE_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct ScenarioConfig {
    pub traffic: TrafficParams,
    pub sim: SimParams,
    pub channel: ChannelParams,
    pub mac: MacParams,
    pub beacon: BeaconParams,
    pub pcbb: PcbbParams,
    pub protocol: ProtocolParams,
    pub metrics: MetricsParams,
}

fn check(ok: bool, key: &'static str, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(key, reason))
    }
}

fn finite_positive(v: f64, key: &'static str) -> Result<(), ConfigError> {
    check(v.is_finite() && v > 0.0, key, "must be a positive number")
}

fn range(lo_hi: (f64, f64), key: &'static str) -> Result<(), ConfigError> {
    check(
        lo_hi.0.is_finite() && lo_hi.1.is_finite() && lo_hi.0 >= 0.0 && lo_hi.0 <= lo_hi.1,
        key,
        "must be [lo, hi] with 0 <= lo <= hi",
    )
}

impl ScenarioConfig {
    /// Checks every field; the error names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.traffic;
        check(t.vehicles >= 1, "traffic.vehicles", "must be at least 1")?;
        finite_positive(t.road_length_m, "traffic.road_length_m")?;
        check(t.lanes >= 1, "traffic.lanes", "must be at least 1")?;
        check(
            t.speed_min_kmh.is_finite() && t.speed_min_kmh >= 0.0,
            "traffic.speed_min_kmh",
            "must be non-negative",
        )?;
        check(
            t.speed_max_kmh.is_finite() && t.speed_max_kmh >= t.speed_min_kmh,
            "traffic.speed_max_kmh",
            "must be at least traffic.speed_min_kmh",
        )?;
        check(
            t.min_headway_m.is_finite() && t.min_headway_m >= 0.0,
            "traffic.min_headway_m",
            "must be non-negative",
        )?;
        if t.min_headway_m > 0.0 {
            let capacity = t.lanes as f64 * libm::floor(t.road_length_m / t.min_headway_m);
            if (t.vehicles as f64) > capacity {
                return Err(ConfigError::new(
                    "traffic.vehicles",
                    format!("{} vehicles do not fit; capacity is {capacity}", t.vehicles),
                ));
            }
        }

        check(self.sim.duration_ms >= 1, "sim.duration_ms", "must be at least 1")?;
        check(
            self.sim.message_size_bytes >= 1,
            "sim.message_size_bytes",
            "must be at least 1",
        )?;

        let c = &self.channel;
        check(c.m >= 1, "channel.m", "must be at least 1")?;
        finite_positive(c.path_loss_exponent, "channel.path_loss_exponent")?;
        check(c.tx_power_dbm.is_finite(), "channel.tx_power_dbm", "must be finite")?;
        check(
            c.noise_floor_dbm.is_finite(),
            "channel.noise_floor_dbm",
            "must be finite",
        )?;
        check(
            c.snr_threshold_db.is_finite(),
            "channel.snr_threshold_db",
            "must be finite",
        )?;
        finite_positive(c.range_m, "channel.range_m")?;
        check(c.capture_db.is_finite(), "channel.capture_db", "must be finite")?;
        check(
            c.carrier_sense_db.is_finite(),
            "channel.carrier_sense_db",
            "must be finite",
        )?;

        let m = &self.mac;
        check(m.slot_us >= 1, "mac.slot_us", "must be at least 1")?;
        check(m.data_rate_bps >= 1, "mac.data_rate_bps", "must be at least 1")?;
        check(m.symbol_us >= 1, "mac.symbol_us", "must be at least 1")?;
        check(m.cw_max >= m.cw_min, "mac.cw_max", "must be at least mac.cw_min")?;

        finite_positive(self.beacon.rate_hz, "beacon.rate_hz")?;
        check(self.beacon.ttl_ms >= 1, "beacon.ttl_ms", "must be at least 1")?;

        let p = &self.pcbb;
        check(p.n_max >= 1, "pcbb.n_max", "must be at least 1")?;
        range(p.w_range, "pcbb.w_range")?;
        range(p.rand_range, "pcbb.rand_range")?;
        check(p.c1.is_finite(), "pcbb.c1", "must be finite")?;
        check(p.c2.is_finite(), "pcbb.c2", "must be finite")?;

        for d in &self.protocol.danger_schedule {
            check(
                classify(d.code).is_ok(),
                "protocol.danger_schedule",
                "code must be in 1..=7",
            )?;
            check(
                d.origin_x_m.is_finite(),
                "protocol.danger_schedule",
                "origin_x_m must be finite",
            )?;
        }

        finite_positive(self.metrics.bin_width_m, "metrics.bin_width_m")?;
        check(
            self.metrics.sample_every_ms >= 1,
            "metrics.sample_every_ms",
            "must be at least 1",
        )?;
        Ok(())
    }
}
