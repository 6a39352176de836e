//! Contention-based emergency message dissemination for vehicular ad hoc
//! networks.
//!
//! This crate provides:
//! - Message types, seven-level priority codes and the 512-byte wire record ([`types`])
//! - A constant-velocity highway fleet ([`mobility`])
//! - Log-distance path loss with closed-form Nakagami-m reception ([`channel`])
//! - 802.11p-style frame timing and slotted CSMA backoff ([`mac`])
//! - Beaconing and neighbor tables ([`beaconing`])
//! - Forwarder selection: CBB boundaries, density clustering, fitness and the
//!   single-step PSO update ([`forwarder`])
//! - The PCBB, CBB and EMDV forwarding state machines ([`protocols`])
//! - A deterministic discrete-event engine producing an event trace ([`engine`])
//! - Reception, delay and collision metrics computed from traces ([`metrics`])
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! parsing and the command line live in the companion `pcbb` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod beaconing;
pub mod channel;
pub mod engine;
mod error;
pub mod forwarder;
pub mod mac;
pub mod metrics;
pub mod mobility;
pub mod protocols;
pub mod scenario;
pub mod types;

pub use error::{ConfigError, Error};
pub use scenario::ScenarioConfig;
pub use types::{distance, EmergencyMessage, MessageCode, MsgKey, Position, SimTime, VehicleId};
