use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("message code {0} is outside 1..=7")]
    InvalidCode(u8),

    #[error("record is {0} bytes, expected 512")]
    RecordLength(usize),

    #[error("payload of {0} bytes does not fit the record")]
    PayloadTooLarge(usize),

    #[error("invalid message field: {0}")]
    InvalidField(&'static str),

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("max boundary must be positive")]
    ZeroMaxBoundary,

    #[error("need at least {needed} rear neighbors, found {found}")]
    TooFewNeighbors { needed: usize, found: usize },

    #[error("progress list is empty")]
    EmptyProgressList,

    #[error("road of {road_length_m} m cannot hold {count} vehicles in {lanes} lanes at {headway_m} m headway")]
    Capacity {
        count: usize,
        lanes: u32,
        road_length_m: f64,
        headway_m: f64,
    },

    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A scenario value that failed validation, named by its config key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("`{key}`: {reason}")]
pub struct ConfigError {
    pub key: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: &'static str, reason: impl Into<String>) -> Self {
        Self {
            key,
            reason: reason.into(),
        }
    }
}
