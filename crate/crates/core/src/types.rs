//! Shared domain types, message classification and the emergency message
//! wire record.
//!
//! Emergency message layout (little-endian, 512 bytes total):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | sender id (`u32`)                       |
//! | 4      | 1    | code (`u8`, 1..=7)                      |
//! | 5      | 8    | timestamp, microseconds (`u64`)         |
//! | 13     | 4    | message id (`u32`)                      |
//! | 17     | 4    | candidate id (`u32`, `0xFFFF_FFFF` = none) |
//! | 21     | 4    | min boundary, meters (`f32`, NaN = none) |
//! | 25     | 4    | max boundary, meters (`f32`, NaN = none) |
//! | 29     | 483  | payload, zero padded                    |

use core::fmt;
use core::ops::{Add, Sub};

use crate::Error;

pub const MESSAGE_LEN: usize = 512;
pub const HEADER_LEN: usize = 29;
pub const PAYLOAD_LEN: usize = MESSAGE_LEN - HEADER_LEN;
pub const NEIGHBOR_ENTRY_LEN: usize = 15;

const NO_CANDIDATE: u32 = u32::MAX;

/// Microseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_us(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_us(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point on the highway: meters along the road axis plus a 1-based lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub lane: u32,
}

impl Position {
    pub const fn new(x: f64, lane: u32) -> Self {
        Self { x, lane }
    }
}

/// Absolute longitudinal separation. Lanes are ignored.
pub fn distance(sen_pos: Position, for_pos: Position) -> f64 {
    libm::fabs(sen_pos.x - for_pos.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PriorityClass {
    SafetyOfLife,
    Safety,
    NonSafety,
}

/// A classified message code. Ordering follows processing priority, so
/// sorting ascending puts safety-of-life traffic first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageCode {
    class: PriorityClass,
    code: u8,
}

impl MessageCode {
    pub fn code(self) -> u8 {
        self.code
    }

    pub fn class(self) -> PriorityClass {
        self.class
    }

    pub fn is_forwardable(self) -> bool {
        self.class == PriorityClass::SafetyOfLife
    }

    pub fn application(self) -> &'static str {
        match self.code {
            1 => "Emergency Break Warning/Avoidance",
            2 => "Cooperative Collision Warning",
            3 => "Intersection warning",
            4 => "Transit Vehicle Signal Priority",
            5 => "Toll Collection",
            6 => "Service Announcement",
            _ => "Movie Download",
        }
    }
}

pub fn classify(code: u8) -> Result<MessageCode, Error> {
    let class = match code {
        1 | 2 => PriorityClass::SafetyOfLife,
        3 | 4 => PriorityClass::Safety,
        5..=7 => PriorityClass::NonSafety,
        _ => return Err(Error::InvalidCode(code)),
    };
    Ok(MessageCode { class, code })
}

/// Identity of an originated message; survives every rebroadcast hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgKey {
    pub sender: VehicleId,
    pub msg_id: u32,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Payload(pub [u8; PAYLOAD_LEN]);

impl Payload {
    pub fn zeroed() -> Self {
        Payload([0; PAYLOAD_LEN])
    }

    /// Copies `data` and zero-pads to the fixed payload width.
    pub fn from_slice(data: &[u8]) -> Result<Self, Error> {
        if data.len() > PAYLOAD_LEN {
            return Err(Error::PayloadTooLarge(data.len()));
        }
        let mut buf = [0; PAYLOAD_LEN];
        buf[..data.len()].copy_from_slice(data);
        Ok(Payload(buf))
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let used = self.0.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
        write!(f, "Payload({used} bytes used)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmergencyMessage {
    pub sender_id: VehicleId,
    pub code: MessageCode,
    pub timestamp: SimTime,
    pub msg_id: u32,
    pub data: Payload,
    pub candidate_id: Option<VehicleId>,
    pub min_b: Option<f32>,
    pub max_b: Option<f32>,
}

impl EmergencyMessage {
    pub fn key(&self) -> MsgKey {
        MsgKey {
            sender: self.sender_id,
            msg_id: self.msg_id,
        }
    }

    /// Both boundaries, if the sender attached them.
    pub fn boundaries(&self) -> Option<(f32, f32)> {
        self.min_b.zip(self.max_b)
    }

    fn validate(&self) -> Result<(), Error> {
        if self.candidate_id == Some(VehicleId(NO_CANDIDATE)) {
            return Err(Error::InvalidField("candidate id collides with the absent sentinel"));
        }
        for b in [self.min_b, self.max_b].into_iter().flatten() {
            if !b.is_finite() {
                return Err(Error::InvalidField("boundary must be finite"));
            }
        }
        if let Some((lo, hi)) = self.boundaries() {
            if !(lo >= 0.0 && lo < hi) {
                return Err(Error::InvalidField("boundaries must satisfy 0 <= min_b < max_b"));
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<[u8; MESSAGE_LEN], Error> {
        self.validate()?;
        let mut out = [0u8; MESSAGE_LEN];
        out[0..4].copy_from_slice(&self.sender_id.0.to_le_bytes());
        out[4] = self.code.code();
        out[5..13].copy_from_slice(&self.timestamp.0.to_le_bytes());
        out[13..17].copy_from_slice(&self.msg_id.to_le_bytes());
        let cid = self.candidate_id.map_or(NO_CANDIDATE, |c| c.0);
        out[17..21].copy_from_slice(&cid.to_le_bytes());
        out[21..25].copy_from_slice(&self.min_b.unwrap_or(f32::NAN).to_le_bytes());
        out[25..29].copy_from_slice(&self.max_b.unwrap_or(f32::NAN).to_le_bytes());
        out[HEADER_LEN..].copy_from_slice(&self.data.0);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() != MESSAGE_LEN {
            return Err(Error::RecordLength(bytes.len()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let f32_at = |i: usize| {
            let v = f32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
            (!v.is_nan()).then_some(v)
        };
        let cid = u32_at(17);
        let mut data = [0u8; PAYLOAD_LEN];
        data.copy_from_slice(&bytes[HEADER_LEN..]);
        let msg = EmergencyMessage {
            sender_id: VehicleId(u32_at(0)),
            code: classify(bytes[4])?,
            timestamp: SimTime(u64::from_le_bytes(bytes[5..13].try_into().unwrap())),
            msg_id: u32_at(13),
            data: Payload(data),
            candidate_id: (cid != NO_CANDIDATE).then_some(VehicleId(cid)),
            min_b: f32_at(21),
            max_b: f32_at(25),
        };
        msg.validate()?;
        Ok(msg)
    }
}

/// Status broadcast received by neighbors at the beacon rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub sender_id: VehicleId,
    pub position: Position,
    pub speed: f64,
    pub heading: i8,
    pub timestamp: SimTime,
    pub piggyback_lbest: Option<f64>,
}

impl Beacon {
    /// The compact 15-byte neighbor-entry form: id `u32`, x `f32`, speed in
    /// cm/s `u16`, lBest in whole meters `u16` (`0xFFFF` = none), lane `u8`,
    /// heading `i8`, one reserved byte. Speed and lBest are quantized.
    pub fn encode_entry(&self) -> [u8; NEIGHBOR_ENTRY_LEN] {
        let mut out = [0u8; NEIGHBOR_ENTRY_LEN];
        out[0..4].copy_from_slice(&self.sender_id.0.to_le_bytes());
        out[4..8].copy_from_slice(&(self.position.x as f32).to_le_bytes());
        let speed = libm::round(self.speed * 100.0).clamp(0.0, 65_535.0) as u16;
        out[8..10].copy_from_slice(&speed.to_le_bytes());
        let lbest = self
            .piggyback_lbest
            .map_or(u16::MAX, |v| libm::round(v).clamp(0.0, 65_534.0) as u16);
        out[10..12].copy_from_slice(&lbest.to_le_bytes());
        out[12] = self.position.lane.min(u8::MAX as u32) as u8;
        out[13] = self.heading as u8;
        out
    }

    pub fn decode_entry(bytes: &[u8], timestamp: SimTime) -> Result<Self, Error> {
        if bytes.len() != NEIGHBOR_ENTRY_LEN {
            return Err(Error::RecordLength(bytes.len()));
        }
        let speed = u16::from_le_bytes([bytes[8], bytes[9]]);
        let lbest = u16::from_le_bytes([bytes[10], bytes[11]]);
        Ok(Beacon {
            sender_id: VehicleId(u32::from_le_bytes(bytes[0..4].try_into().unwrap())),
            position: Position::new(
                f32::from_le_bytes(bytes[4..8].try_into().unwrap()) as f64,
                bytes[12] as u32,
            ),
            speed: speed as f64 / 100.0,
            heading: bytes[13] as i8,
            timestamp,
            piggyback_lbest: (lbest != u16::MAX).then_some(lbest as f64),
        })
    }
}
