use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Transmitter identity for duty-cycle bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Gateway,
    Device(u32),
}

/// Post-transmission silence per transmitter and channel: after sending for
/// `T` on a channel with duty cycle `d`, the same transmitter stays off
/// that channel for `T (1 - d) / d`.
#[derive(Clone, Debug)]
pub struct DutyCycle {
    duty: HashMap<u8, f64>,
    free_at: HashMap<(Node, u8), u64>,
}

impl DutyCycle {
    pub fn new(channels: impl IntoIterator<Item = (u8, f64)>) -> Self {
        Self {
            duty: channels.into_iter().collect(),
            free_at: HashMap::new(),
        }
    }

    pub fn silence_us(&self, channel: u8, duration_us: u64) -> u64 {
        let d = self.duty.get(&channel).copied().unwrap_or(1.0);
        (duration_us as f64 * (1.0 - d) / d).round() as u64
    }

    /// Earliest instant `node` may start on `channel`.
    pub fn free_at(&self, node: Node, channel: u8) -> u64 {
        self.free_at.get(&(node, channel)).copied().unwrap_or(0)
    }

    pub fn allowed(&self, node: Node, channel: u8, now_us: u64) -> bool {
        now_us >= self.free_at(node, channel)
    }

    /// Books a transmission if the channel is open for `node`; otherwise
    /// changes nothing and returns false.
    pub fn try_consume(&mut self, node: Node, channel: u8, duration_us: u64, now_us: u64) -> bool {
        if !self.allowed(node, channel, now_us) {
            return false;
        }
        let next = now_us + duration_us + self.silence_us(channel, duration_us);
        self.free_at.insert((node, channel), next);
        true
    }
}
