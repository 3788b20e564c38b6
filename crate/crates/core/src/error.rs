use thiserror::Error;

use crate::phy::SpreadingFactor;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("spreading factor {0} outside 7..=12")]
    InvalidSpreadingFactor(u8),

    #[error("coding rate 4/{0} outside 4/5..=4/8")]
    InvalidCodingRate(u8),

    #[error("invalid radio parameters: {0}")]
    InvalidParams(String),

    #[error("packet length {0} B outside 1..=255")]
    InvalidPacketLength(usize),

    #[error("packet error rate {0} makes the retransmission series diverge")]
    DivergentRetransmissions(f64),

    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),

    #[error("rssi {rssi_dbm:.2} dBm is below the SF12 sensitivity {floor_dbm:.2} dBm")]
    OutOfRange { rssi_dbm: f64, floor_dbm: f64 },

    #[error("no frame structure for {0}")]
    NoFrame(SpreadingFactor),

    #[error("codec: {0}")]
    Codec(#[from] CodecError),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("simulated span must be positive")]
    ZeroSpan,

    #[error("air-time efficiency is only defined for scheduled (FREE) runs")]
    NotScheduled,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("{message}: expected {expected} bytes, got {actual}")]
    Length {
        message: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("field {field} value {value} does not fit in {bits} bits")]
    Overflow {
        field: &'static str,
        value: u64,
        bits: u32,
    },

    #[error("slot {slot} out of range for a {slots}-slot frame")]
    SlotOutOfRange { slot: usize, slots: usize },

    #[error("channel mask must select at least one channel")]
    EmptyChannelMask,

    #[error("data rate {0} has no spreading factor mapping")]
    UnknownDataRate(u8),
}
