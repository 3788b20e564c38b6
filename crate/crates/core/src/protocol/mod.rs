//! Wire formats and endpoint state machines.

pub mod codec;
pub mod fsm;

pub use codec::{AckBitmap, DcSettings, FSettings, GroupAck, JoinAccept, JoinRequest};
pub use fsm::{
    packetize, DeviceAction, DeviceEvent, DeviceFsm, DeviceState, GatewayAction, GatewayEvent,
    GatewayFsm, GatewayPhase, Packet, MAX_ATTEMPTS,
};
