//! Byte layouts of the join exchange, the schedule broadcast and the group
//! acknowledgement. Multi-byte fields are big-endian.

use serde::{Deserialize, Serialize};

use crate::error::{CodecError, Result};
use crate::phy::SpreadingFactor;
use crate::scheduler::{Assignment, FrameStructure, SchedulerConfig, SfFrame};

type CodecResult<T> = std::result::Result<T, CodecError>;

fn check_len(message: &'static str, bytes: &[u8], expected: usize) -> CodecResult<()> {
    if bytes.len() == expected {
        Ok(())
    } else {
        Err(CodecError::Length {
            message,
            expected,
            actual: bytes.len(),
        })
    }
}

fn fits(field: &'static str, value: u64, bits: u32) -> CodecResult<()> {
    if value >> bits == 0 {
        Ok(())
    } else {
        Err(CodecError::Overflow { field, value, bits })
    }
}

fn put_u24(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes()[1..]);
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn u24_at(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([0, b[at], b[at + 1], b[at + 2]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinRequest {
    pub app_eui: [u8; 8],
    pub dev_eui: [u8; 8],
    pub dev_nonce: u16,
    /// Buffered bytes, 24 bits.
    pub data_size: u32,
    /// Tolerated delay in seconds, 24 bits.
    pub delay_elasticity_s: u32,
}

impl JoinRequest {
    pub const LEN: usize = 24;

    pub fn encode(&self) -> Result<Vec<u8>> {
        fits("data_size", u64::from(self.data_size), 24)?;
        fits("delay_elasticity", u64::from(self.delay_elasticity_s), 24)?;
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(&self.app_eui);
        out.extend_from_slice(&self.dev_eui);
        out.extend_from_slice(&self.dev_nonce.to_be_bytes());
        put_u24(&mut out, self.data_size);
        put_u24(&mut out, self.delay_elasticity_s);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        check_len("join request", bytes, Self::LEN)?;
        Ok(Self {
            app_eui: bytes[0..8].try_into().expect("length checked"),
            dev_eui: bytes[8..16].try_into().expect("length checked"),
            dev_nonce: u16_at(bytes, 16),
            data_size: u24_at(bytes, 18),
            delay_elasticity_s: u24_at(bytes, 21),
        })
    }
}

/// Schedule carried in the join accept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcSettings {
    /// 4 bits; DR0 is SF12, DR5 is SF7.
    pub data_rate: u8,
    /// 4 bits; dB below 14 dBm.
    pub tx_power: u8,
    /// Bit `k - 1` selects channel `k`.
    pub ch_mask: u16,
    pub slot: u16,
    /// Seconds until the fine synchronisation stage.
    pub second_stage_s: u16,
}

impl DcSettings {
    pub const LEN: usize = 7;

    pub fn from_assignment(a: &Assignment, second_stage_s: u16) -> Result<Self> {
        let mut ch_mask = 0u16;
        for &c in &a.channel_ids {
            if !(1..=16).contains(&c) {
                return Err(CodecError::Overflow {
                    field: "ch_mask",
                    value: u64::from(c),
                    bits: 16,
                }
                .into());
            }
            ch_mask |= 1 << (c - 1);
        }
        let tx_power = 14 - a.tx_power_dbm;
        if !(0..16).contains(&tx_power) {
            return Err(CodecError::Overflow {
                field: "tx_power",
                value: tx_power as u64,
                bits: 4,
            }
            .into());
        }
        let slot = u16::try_from(a.slot).map_err(|_| CodecError::Overflow {
            field: "slot",
            value: u64::from(a.slot),
            bits: 16,
        })?;
        Ok(Self {
            data_rate: 12 - a.sf.get(),
            tx_power: tx_power as u8,
            ch_mask,
            slot,
            second_stage_s,
        })
    }

    pub fn sf(&self) -> Result<SpreadingFactor> {
        if self.data_rate > 5 {
            return Err(CodecError::UnknownDataRate(self.data_rate).into());
        }
        SpreadingFactor::new(12 - self.data_rate)
    }

    pub fn tx_power_dbm(&self) -> i32 {
        14 - i32::from(self.tx_power)
    }

    pub fn channels(&self) -> Vec<u8> {
        (1..=16u8).filter(|c| self.ch_mask & (1 << (c - 1)) != 0).collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        fits("data_rate", u64::from(self.data_rate), 4)?;
        fits("tx_power", u64::from(self.tx_power), 4)?;
        if self.ch_mask == 0 {
            return Err(CodecError::EmptyChannelMask.into());
        }
        let mut out = Vec::with_capacity(Self::LEN);
        out.push(self.data_rate << 4 | self.tx_power);
        out.extend_from_slice(&self.ch_mask.to_be_bytes());
        out.extend_from_slice(&self.slot.to_be_bytes());
        out.extend_from_slice(&self.second_stage_s.to_be_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        check_len("dc settings", bytes, Self::LEN)?;
        let s = Self {
            data_rate: bytes[0] >> 4,
            tx_power: bytes[0] & 0x0f,
            ch_mask: u16_at(bytes, 1),
            slot: u16_at(bytes, 3),
            second_stage_s: u16_at(bytes, 5),
        };
        if s.ch_mask == 0 {
            return Err(CodecError::EmptyChannelMask.into());
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinAccept {
    /// 24 bits.
    pub app_nonce: u32,
    /// 24 bits.
    pub net_id: u32,
    pub dev_addr: u32,
    pub settings: u8,
    pub dc_settings: DcSettings,
}

impl JoinAccept {
    pub const LEN: usize = 11 + DcSettings::LEN;

    pub fn encode(&self) -> Result<Vec<u8>> {
        fits("app_nonce", u64::from(self.app_nonce), 24)?;
        fits("net_id", u64::from(self.net_id), 24)?;
        let mut out = Vec::with_capacity(Self::LEN);
        put_u24(&mut out, self.app_nonce);
        put_u24(&mut out, self.net_id);
        out.extend_from_slice(&self.dev_addr.to_be_bytes());
        out.push(self.settings);
        out.extend(self.dc_settings.encode()?);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        check_len("join accept", bytes, Self::LEN)?;
        Ok(Self {
            app_nonce: u24_at(bytes, 0),
            net_id: u24_at(bytes, 3),
            dev_addr: u32_at(bytes, 6),
            settings: bytes[10],
            dc_settings: DcSettings::decode(&bytes[11..])?,
        })
    }
}

/// Frame parameters for every SF, SF7 first; unused SFs are zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FSettings {
    pub packet_sizes: [u8; 6],
    pub guards_ms: [u16; 6],
    /// Uplink slots per frame on one channel.
    pub frame_lens: [u16; 6],
    pub data_collection_ms: u32,
    /// 24 bits.
    pub next_round_s: u32,
}

impl FSettings {
    pub const LEN: usize = 37;

    pub fn from_frames(frames: &FrameStructure, data_collection_ms: u32, next_round_s: u32) -> Result<Self> {
        let mut s = Self {
            data_collection_ms,
            next_round_s,
            ..Self::default()
        };
        for f in &frames.frames {
            let i = f.sf.index();
            s.packet_sizes[i] = u8::try_from(f.packet_bytes).map_err(|_| CodecError::Overflow {
                field: "packet_size",
                value: f.packet_bytes as u64,
                bits: 8,
            })?;
            s.guards_ms[i] = u16::try_from(f.guard_ms).map_err(|_| CodecError::Overflow {
                field: "guard",
                value: u64::from(f.guard_ms),
                bits: 16,
            })?;
            s.frame_lens[i] = u16::try_from(f.slots).map_err(|_| CodecError::Overflow {
                field: "frame_len",
                value: u64::from(f.slots),
                bits: 16,
            })?;
        }
        fits("next_round", u64::from(next_round_s), 24)?;
        Ok(s)
    }

    /// Slot timing a device derives for `sf`. Round bookkeeping that only
    /// the gateway knows (device count, largest buffer, frame count) is zero.
    pub fn timing(&self, sf: SpreadingFactor, config: &SchedulerConfig, confirmed: bool) -> Result<Option<SfFrame>> {
        let i = sf.index();
        if self.packet_sizes[i] == 0 {
            return Ok(None);
        }
        let params = config.radio(sf);
        let packet_bytes = usize::from(self.packet_sizes[i]);
        let slots = u32::from(self.frame_lens[i]);
        let alloc = config.allocation(sf);
        let ack_toa_us = if confirmed {
            crate::scheduler::ack_airtime_us(&params, slots, alloc.channel_ids.len(), config.header_bytes)?
        } else {
            0
        };
        Ok(Some(SfFrame {
            sf,
            packet_bytes,
            header_bytes: config.header_bytes,
            guard_ms: u32::from(self.guards_ms[i]),
            slots,
            channel_ids: alloc.channel_ids.clone(),
            tx_power_dbm: alloc.tx_power_dbm,
            devices: 0,
            max_size: 0,
            frames: 0,
            toa_us: crate::phy::time_on_air_us(&params, packet_bytes)?,
            ack_toa_us,
        }))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        fits("next_round", u64::from(self.next_round_s), 24)?;
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(&self.packet_sizes);
        for g in self.guards_ms {
            out.extend_from_slice(&g.to_be_bytes());
        }
        for n in self.frame_lens {
            out.extend_from_slice(&n.to_be_bytes());
        }
        out.extend_from_slice(&self.data_collection_ms.to_be_bytes());
        put_u24(&mut out, self.next_round_s);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        check_len("fsettings", bytes, Self::LEN)?;
        let mut s = Self::default();
        s.packet_sizes.copy_from_slice(&bytes[..6]);
        for i in 0..6 {
            s.guards_ms[i] = u16_at(bytes, 6 + 2 * i);
            s.frame_lens[i] = u16_at(bytes, 18 + 2 * i);
        }
        s.data_collection_ms = u32_at(bytes, 30);
        s.next_round_s = u24_at(bytes, 34);
        Ok(s)
    }
}

/// One bit per uplink slot, slot 0 in the most significant bit of the
/// first byte. Padding bits are zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AckBitmap {
    slots: usize,
    bytes: Vec<u8>,
}

impl AckBitmap {
    pub fn empty(slots: usize) -> Self {
        Self {
            slots,
            bytes: vec![0; slots.div_ceil(8)],
        }
    }

    pub fn build(received: impl IntoIterator<Item = usize>, slots: usize) -> Result<Self> {
        let mut map = Self::empty(slots);
        for slot in received {
            map.set(slot)?;
        }
        Ok(map)
    }

    pub fn set(&mut self, slot: usize) -> Result<()> {
        if slot >= self.slots {
            return Err(CodecError::SlotOutOfRange { slot, slots: self.slots }.into());
        }
        self.bytes[slot / 8] |= 0x80 >> (slot % 8);
        Ok(())
    }

    pub fn acked(&self, slot: usize) -> Result<bool> {
        if slot >= self.slots {
            return Err(CodecError::SlotOutOfRange { slot, slots: self.slots }.into());
        }
        Ok(self.bytes[slot / 8] & (0x80 >> (slot % 8)) != 0)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn count(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn decode(bytes: &[u8], slots: usize) -> Result<Self> {
        check_len("ack bitmap", bytes, slots.div_ceil(8))?;
        let map = Self {
            slots,
            bytes: bytes.to_vec(),
        };
        if slots % 8 != 0 && bytes[bytes.len() - 1] & (0xff >> (slots % 8)) != 0 {
            return Err(CodecError::SlotOutOfRange { slot: slots, slots }.into());
        }
        Ok(map)
    }
}

/// Group acknowledgement of one frame: one bitmap per channel of the SF.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAck {
    pub frame: u32,
    pub bitmaps: Vec<AckBitmap>,
}

impl GroupAck {
    pub fn encode(&self) -> Vec<u8> {
        self.bitmaps.iter().flat_map(|b| b.as_bytes().iter().copied()).collect()
    }

    pub fn decode(frame: u32, bytes: &[u8], slots: usize, channels: usize) -> Result<Self> {
        let per = slots.div_ceil(8);
        check_len("group ack", bytes, per * channels)?;
        let bitmaps = bytes
            .chunks(per.max(1))
            .take(channels)
            .map(|c| AckBitmap::decode(c, slots))
            .collect::<Result<_>>()?;
        Ok(Self { frame, bitmaps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_join_request() {
        assert_eq!(JoinRequest::default().encode().unwrap(), vec![0u8; 24]);
    }

    #[test]
    fn data_size_offset() {
        let r = JoinRequest {
            data_size: 5760,
            ..Default::default()
        };
        assert_eq!(&r.encode().unwrap()[18..21], &[0x00, 0x16, 0x80]);
    }

    #[test]
    fn truncated_and_overflow() {
        assert!(JoinRequest::decode(&[0; 23]).is_err());
        let r = JoinRequest {
            data_size: 1 << 24,
            ..Default::default()
        };
        assert!(r.encode().is_err());
    }

    #[test]
    fn fsettings_layout() {
        let s = FSettings {
            packet_sizes: [255; 6],
            guards_ms: [1, 2, 3, 4, 5, 6],
            ..Default::default()
        };
        let b = s.encode().unwrap();
        assert_eq!(b.len(), 37);
        assert_eq!(&b[..6], &[0xff; 6]);
        assert_eq!(&b[6..18], &[0, 1, 0, 2, 0, 3, 0, 4, 0, 5, 0, 6]);
        assert_eq!(FSettings::decode(&b).unwrap(), s);
    }

    #[test]
    fn bitmap_examples() {
        assert_eq!(AckBitmap::build([], 8).unwrap().as_bytes(), &[0]);
        assert_eq!(AckBitmap::build([0, 7], 8).unwrap().as_bytes(), &[0b1000_0001]);
        assert_eq!(AckBitmap::build(0..8, 8).unwrap().as_bytes(), &[0xff]);
        assert!(AckBitmap::build([8], 8).is_err());
        assert!(AckBitmap::decode(&[0x01], 7).is_err());
    }

    #[test]
    fn dc_settings_from_assignment() {
        let a = Assignment {
            device: 3,
            sf: SpreadingFactor::SF11,
            slot: 42,
            tx_power_dbm: 14,
            channel_ids: vec![2, 3],
        };
        let d = DcSettings::from_assignment(&a, 120).unwrap();
        assert_eq!(d.data_rate, 1);
        assert_eq!(d.ch_mask, 0b110);
        assert_eq!(d.sf().unwrap(), SpreadingFactor::SF11);
        assert_eq!(d.channels(), vec![2, 3]);
        assert_eq!(d.encode().unwrap(), vec![0x10, 0x00, 0x06, 0x00, 0x2a, 0x00, 0x78]);
        let bad = DcSettings { ch_mask: 0, ..d };
        assert!(bad.encode().is_err());
    }
}
