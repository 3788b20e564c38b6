//! Gateway-side allocation for scheduled collection: spreading factor and
//! slot assignment for each join, the per-SF channel and power plan, and the
//! frame layout that is broadcast before collection starts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{
    bit_error_rate, expected_retransmissions, packet_error_rate, receiver_sensitivity,
    snr_to_ebn0, time_on_air, time_on_air_us, CodingRate, EnergyProfile, LinkBudget, RadioParams,
    SpreadingFactor, MAX_PACKET_BYTES,
};

/// The 10% duty-cycle channel reserved for downlink.
pub const DOWNLINK_CHANNEL: u8 = 4;

/// Uplink channels, all at 1% duty cycle.
pub const UPLINK_CHANNELS: [u8; 3] = [1, 2, 3];

/// `ceil` that ignores floating point noise just above an integer.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// What SF allocation minimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    /// alpha = 0
    Energy,
    /// alpha = 1
    CollectionTime,
}

impl Objective {
    pub fn from_alpha(alpha: u8) -> Result<Self> {
        match alpha {
            0 => Ok(Self::Energy),
            1 => Ok(Self::CollectionTime),
            other => Err(Error::Config(format!("alpha must be 0 or 1, got {other}"))),
        }
    }

    pub fn alpha(self) -> u8 {
        match self {
            Self::Energy => 0,
            Self::CollectionTime => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelAllocation {
    pub channel_ids: Vec<u8>,
    pub tx_power_dbm: i32,
}

/// Channels and transmit power used by every device on `sf`.
pub fn channel_power_plan(sf: SpreadingFactor) -> ChannelAllocation {
    let (channel_ids, tx_power_dbm) = match sf.get() {
        7 => (vec![1], 14),
        8 => (vec![3], 13),
        9 => (vec![2], 13),
        10 => (vec![2], 14),
        _ => (vec![2, 3], 14),
    };
    ChannelAllocation { channel_ids, tx_power_dbm }
}

/// How the slot guard is sized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuardPolicy {
    /// Skew over the nominal round airtime only.
    Formula,
    /// At least the worst clock error reached by the end of the actual
    /// round, counted from synchronisation and including the sync residual.
    CoverRound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub objective: Objective,
    pub duty_cycle: f64,
    pub header_bytes: usize,
    pub max_packet_bytes: usize,
    /// Clock drift, seconds per second.
    pub skew_rate: f64,
    pub min_guard_ms: u32,
    pub guard_policy: GuardPolicy,
    /// Worst clock offset right after fine synchronisation, ms.
    pub sync_accuracy_ms: f64,
    /// Headroom over sensitivity required when picking the lowest SF.
    pub link_margin_db: f64,
    pub bandwidth_hz: u32,
    pub coding_rate: CodingRate,
    pub budget: LinkBudget,
    pub energy: EnergyProfile,
    /// Indexed by SF, SF7 first.
    pub plan: [ChannelAllocation; 6],
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Energy,
            duty_cycle: 0.01,
            header_bytes: 8,
            max_packet_bytes: MAX_PACKET_BYTES,
            skew_rate: 15e-6,
            min_guard_ms: 1,
            guard_policy: GuardPolicy::Formula,
            sync_accuracy_ms: 0.5,
            link_margin_db: 0.0,
            bandwidth_hz: 500_000,
            coding_rate: CodingRate::Cr45,
            budget: LinkBudget::default(),
            energy: EnergyProfile::default(),
            plan: SpreadingFactor::ALL.map(channel_power_plan),
        }
    }
}

impl SchedulerConfig {
    pub fn radio(&self, sf: SpreadingFactor) -> RadioParams {
        RadioParams::new(sf, self.bandwidth_hz, self.coding_rate)
    }

    pub fn allocation(&self, sf: SpreadingFactor) -> &ChannelAllocation {
        &self.plan[sf.index()]
    }

    /// Number of channels M_f given to `sf`.
    pub fn channels(&self, sf: SpreadingFactor) -> usize {
        self.plan[sf.index()].channel_ids.len()
    }

    /// Payload bytes per packet assumed while allocating, before frames
    /// are sized.
    pub fn provisional_payload(&self) -> usize {
        self.max_packet_bytes - self.header_bytes
    }

    /// Frames a device must wait between transmissions on one channel.
    pub fn frames_per_duty_period(&self) -> f64 {
        ceil_tol(1.0 / self.duty_cycle)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::Config(format!("duty cycle {} outside (0, 1]", self.duty_cycle)));
        }
        if self.max_packet_bytes > MAX_PACKET_BYTES || self.header_bytes >= self.max_packet_bytes {
            return Err(Error::Config(format!(
                "header {} B leaves no payload in a {} B packet",
                self.header_bytes, self.max_packet_bytes
            )));
        }
        if !(self.skew_rate >= 0.0) || !(self.sync_accuracy_ms >= 0.0) {
            return Err(Error::Config("clock parameters must be non-negative".into()));
        }
        for (sf, alloc) in SpreadingFactor::ALL.iter().zip(&self.plan) {
            if alloc.channel_ids.is_empty() {
                return Err(Error::Config(format!("{sf} has no channel")));
            }
            if alloc.channel_ids.iter().any(|c| !UPLINK_CHANNELS.contains(c)) {
                return Err(Error::Config(format!("{sf} uses a non-uplink channel")));
            }
        }
        self.energy.validate()?;
        self.radio(SpreadingFactor::SF7).validate()
    }
}

/// Lowest SF whose sensitivity lies below `rssi_dbm`.
pub fn min_spreading_factor(
    rssi_dbm: f64,
    budget: &LinkBudget,
    bandwidth_hz: u32,
) -> Result<SpreadingFactor> {
    SpreadingFactor::ALL
        .into_iter()
        .find(|&sf| {
            receiver_sensitivity(&RadioParams::new(sf, bandwidth_hz, CodingRate::Cr45), budget)
                < rssi_dbm
        })
        .ok_or_else(|| Error::OutOfRange {
            rssi_dbm,
            floor_dbm: receiver_sensitivity(
                &RadioParams::new(SpreadingFactor::SF12, bandwidth_hz, CodingRate::Cr45),
                budget,
            ),
        })
}

/// Rough energy to send `data_size` bytes on `sf` with full packets, J.
pub fn cost_energy(sf: SpreadingFactor, data_size: u32, config: &SchedulerConfig) -> Result<f64> {
    let payload = config.provisional_payload();
    let packets = (data_size as usize).div_ceil(payload);
    let toa_s = time_on_air(&config.radio(sf), config.max_packet_bytes)? / 1000.0;
    let power = config.energy.tx_draw_w(config.allocation(sf).tx_power_dbm);
    Ok(packets as f64 * toa_s * power)
}

/// Rough collection time on `sf` if the device joins it, ms.
pub fn cost_time(
    sf: SpreadingFactor,
    data_size: u32,
    state: &SchedulerState,
    config: &SchedulerConfig,
) -> Result<f64> {
    let m = config.channels(sf);
    let per_frame = config.provisional_payload() * m;
    let frames = (data_size as usize).div_ceil(per_frame) as f64;
    let slots = (state.count(sf) as f64 + 1.0).max(config.frames_per_duty_period());
    let toa = time_on_air(&config.radio(sf), config.max_packet_bytes)?;
    Ok((slots * frames + (m as f64 - 1.0)) * toa)
}

/// What a device reveals when it joins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinInfo {
    pub device: u32,
    pub rssi_dbm: f64,
    pub data_size: u32,
    pub delay_elasticity_s: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub device: u32,
    pub sf: SpreadingFactor,
    pub slot: u32,
    pub tx_power_dbm: i32,
    pub channel_ids: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SfGroup {
    /// Device ids in slot order.
    pub devices: Vec<u32>,
    pub max_size: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    groups: [SfGroup; 6],
    assignments: BTreeMap<u32, Assignment>,
}

impl SchedulerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, sf: SpreadingFactor) -> usize {
        self.groups[sf.index()].devices.len()
    }

    pub fn group(&self, sf: SpreadingFactor) -> &SfGroup {
        &self.groups[sf.index()]
    }

    pub fn max_size(&self, sf: SpreadingFactor) -> u32 {
        self.groups[sf.index()].max_size
    }

    pub fn assignment(&self, device: u32) -> Option<&Assignment> {
        self.assignments.get(&device)
    }

    /// All assignments ordered by device id.
    pub fn assignments(&self) -> impl Iterator<Item = &Assignment> {
        self.assignments.values()
    }

    /// Puts a device on `sf` in the next free slot, bypassing the cost
    /// functions. An already placed device keeps its assignment.
    pub fn place(&mut self, join: &JoinInfo, sf: SpreadingFactor, config: &SchedulerConfig) -> Assignment {
        if let Some(existing) = self.assignments.get(&join.device) {
            return existing.clone();
        }
        let group = &mut self.groups[sf.index()];
        let alloc = config.allocation(sf);
        let assignment = Assignment {
            device: join.device,
            sf,
            slot: group.devices.len() as u32,
            tx_power_dbm: alloc.tx_power_dbm,
            channel_ids: alloc.channel_ids.clone(),
        };
        group.devices.push(join.device);
        group.max_size = group.max_size.max(join.data_size);
        self.assignments.insert(join.device, assignment.clone());
        assignment
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Assigns a spreading factor and slot to a joining device and records it.
///
/// A device that joins again gets its existing assignment back.
pub fn allocate(
    join: &JoinInfo,
    state: &mut SchedulerState,
    config: &SchedulerConfig,
) -> Result<Assignment> {
    if let Some(existing) = state.assignments.get(&join.device) {
        return Ok(existing.clone());
    }
    let budget = &config.budget;
    let minf = min_spreading_factor(join.rssi_dbm - config.link_margin_db, budget, config.bandwidth_hz)
        .or_else(|_| min_spreading_factor(join.rssi_dbm, budget, config.bandwidth_hz))?;
    let mut best: Option<(SpreadingFactor, f64)> = None;
    for sf in SpreadingFactor::ALL.into_iter().filter(|&sf| sf >= minf) {
        let cost = match config.objective {
            Objective::Energy => cost_energy(sf, join.data_size, config)?,
            Objective::CollectionTime => cost_time(sf, join.data_size, state, config)?,
        };
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((sf, cost));
        }
    }
    let (sf, _) = best.expect("SF12 is always a candidate");
    Ok(state.place(join, sf, config))
}

/// Expected energy to move `max_size` bytes in packets of `packet_bytes`
/// total length at the given SNR, or `None` when the length carries no
/// payload or every packet is lost.
pub fn packet_length_energy(
    packet_bytes: usize,
    max_size: u32,
    sf: SpreadingFactor,
    snr_db: f64,
    header_bytes: usize,
    config: &SchedulerConfig,
) -> Result<Option<f64>> {
    if packet_bytes <= header_bytes || packet_bytes > MAX_PACKET_BYTES {
        return Ok(None);
    }
    let params = config.radio(sf);
    let ber = bit_error_rate(snr_to_ebn0(snr_db, &params), sf);
    let per = packet_error_rate(ber, packet_bytes);
    let Ok(retries) = expected_retransmissions(per) else {
        return Ok(None);
    };
    let packets = (max_size as usize).div_ceil(packet_bytes - header_bytes);
    let toa_s = time_on_air(&params, packet_bytes)? / 1000.0;
    let power = config.energy.tx_draw_w(config.allocation(sf).tx_power_dbm);
    Ok(Some((1.0 + retries) * packets as f64 * toa_s * power))
}

/// Total packet length minimising expected energy at the given SNR. Ties go
/// to the longer packet.
pub fn optimal_packet_length_at(
    max_size: u32,
    sf: SpreadingFactor,
    snr_db: f64,
    header_bytes: usize,
    config: &SchedulerConfig,
) -> Result<usize> {
    if max_size == 0 {
        return Err(Error::InvalidParams("buffer must hold at least one byte".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for l in 5..=config.max_packet_bytes {
        if let Some(e) = packet_length_energy(l, max_size, sf, snr_db, header_bytes, config)? {
            if best.is_none_or(|(_, b)| e <= b) {
                best = Some((l, e));
            }
        }
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| Error::InvalidParams(format!("no usable packet length on {sf}")))
}

/// [`optimal_packet_length_at`] at the demodulation floor of `sf`.
pub fn optimal_packet_length(
    max_size: u32,
    sf: SpreadingFactor,
    config: &SchedulerConfig,
) -> Result<usize> {
    let snr = config.budget.snr_limit(sf);
    optimal_packet_length_at(max_size, sf, snr, config.header_bytes, config)
}

/// Frames needed to drain `max_size` bytes at `payload` bytes per packet
/// over `channels` channels.
pub fn frames_needed(max_size: u32, payload: usize, channels: usize) -> u32 {
    (max_size as usize).div_ceil(payload * channels) as u32
}

/// Guard per slot side from the clock skew over the nominal round, whole ms.
pub fn guard_time(
    sf: SpreadingFactor,
    packet_bytes: usize,
    state: &SchedulerState,
    config: &SchedulerConfig,
) -> Result<u32> {
    let m = config.channels(sf);
    let frames = frames_needed(state.max_size(sf), packet_bytes - config.header_bytes, m);
    let slots = (state.count(sf) as f64).max(config.frames_per_duty_period());
    let toa = time_on_air(&config.radio(sf), packet_bytes)?;
    let span_ms = (slots * f64::from(frames) + (m as f64 - 1.0)) * toa;
    let guard = ceil_tol(config.skew_rate * span_ms) as u32;
    Ok(guard.max(config.min_guard_ms))
}

/// Uplink slots per frame: every device gets one, and the frame is never
/// shorter than the duty-cycle period of one packet.
pub fn slots_per_frame(devices: usize, toa_ms: f64, guard_ms: u32, duty_cycle: f64) -> u32 {
    let min = ceil_tol((toa_ms / duty_cycle) / (toa_ms + 2.0 * f64::from(guard_ms)));
    (devices as u32).max(min as u32)
}

/// Timing of one SF's frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfFrame {
    pub sf: SpreadingFactor,
    /// Total packet length including the MAC header.
    pub packet_bytes: usize,
    pub header_bytes: usize,
    pub guard_ms: u32,
    /// Slots per frame on one channel, S_f.
    pub slots: u32,
    pub channel_ids: Vec<u8>,
    pub tx_power_dbm: i32,
    pub devices: u32,
    pub max_size: u32,
    /// Frames that drain the largest buffer without losses.
    pub frames: u32,
    pub toa_us: u64,
    /// Airtime of the group acknowledgement, zero when unconfirmed.
    pub ack_toa_us: u64,
}

impl SfFrame {
    pub fn payload_bytes(&self) -> usize {
        self.packet_bytes - self.header_bytes
    }

    pub fn channels(&self) -> usize {
        self.channel_ids.len()
    }

    pub fn guard_us(&self) -> u64 {
        u64::from(self.guard_ms) * 1000
    }

    pub fn slot_us(&self) -> u64 {
        self.toa_us + 2 * self.guard_us()
    }

    /// Uplink slots including the one-slot stagger per extra channel.
    pub fn uplink_slots(&self) -> u32 {
        self.slots + self.channels() as u32 - 1
    }

    pub fn confirmed(&self) -> bool {
        self.ack_toa_us > 0
    }

    pub fn ack_slot_us(&self) -> u64 {
        if self.confirmed() {
            self.ack_toa_us + 2 * self.guard_us()
        } else {
            0
        }
    }

    pub fn frame_us(&self) -> u64 {
        u64::from(self.uplink_slots()) * self.slot_us() + self.ack_slot_us()
    }

    /// Start of a device's transmission in `frame` on its `channel_index`-th
    /// channel, relative to the round start.
    pub fn tx_start_us(&self, frame: u32, slot: u32, channel_index: usize) -> u64 {
        u64::from(frame) * self.frame_us()
            + u64::from(slot + channel_index as u32) * self.slot_us()
            + self.guard_us()
    }

    /// Start of the group acknowledgement of `frame`.
    pub fn ack_start_us(&self, frame: u32) -> u64 {
        u64::from(frame) * self.frame_us()
            + u64::from(self.uplink_slots()) * self.slot_us()
            + self.guard_us()
    }

    /// Nominal round length without retransmission frames.
    pub fn round_us(&self) -> u64 {
        u64::from(self.frames) * self.frame_us()
    }
}

/// Bitmap bytes in one group acknowledgement.
pub fn ack_bitmap_bytes(slots: u32, channels: usize) -> usize {
    (slots as usize).div_ceil(8) * channels
}

/// Airtime of a group acknowledgement, split into several downlink packets
/// when the bitmap does not fit one.
pub fn ack_airtime_us(
    params: &RadioParams,
    slots: u32,
    channels: usize,
    header_bytes: usize,
) -> Result<u64> {
    let mut left = ack_bitmap_bytes(slots, channels);
    let room = MAX_PACKET_BYTES - header_bytes;
    let mut total = 0;
    loop {
        let chunk = left.min(room);
        total += time_on_air_us(params, chunk + header_bytes)?;
        left -= chunk;
        if left == 0 {
            return Ok(total);
        }
    }
}

/// The broadcast schedule: one frame layout per SF in use.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStructure {
    pub frames: Vec<SfFrame>,
}

impl FrameStructure {
    pub fn get(&self, sf: SpreadingFactor) -> Option<&SfFrame> {
        self.frames.iter().find(|f| f.sf == sf)
    }

    pub fn frame(&self, sf: SpreadingFactor) -> Result<&SfFrame> {
        self.get(sf).ok_or(Error::NoFrame(sf))
    }

    /// Longest nominal round over all SFs.
    pub fn round_us(&self) -> u64 {
        self.frames.iter().map(SfFrame::round_us).max().unwrap_or(0)
    }
}

fn layout(
    sf: SpreadingFactor,
    packet_bytes: usize,
    guard_ms: u32,
    state: &SchedulerState,
    config: &SchedulerConfig,
    confirmed: bool,
) -> Result<SfFrame> {
    let params = config.radio(sf);
    let toa_us = time_on_air_us(&params, packet_bytes)?;
    let devices = state.count(sf);
    let slots = slots_per_frame(devices, toa_us as f64 / 1000.0, guard_ms, config.duty_cycle);
    let alloc = config.allocation(sf);
    let m = alloc.channel_ids.len();
    let ack_toa_us = if confirmed {
        ack_airtime_us(&params, slots, m, config.header_bytes)?
    } else {
        0
    };
    Ok(SfFrame {
        sf,
        packet_bytes,
        header_bytes: config.header_bytes,
        guard_ms,
        slots,
        channel_ids: alloc.channel_ids.clone(),
        tx_power_dbm: alloc.tx_power_dbm,
        devices: devices as u32,
        max_size: state.max_size(sf),
        frames: frames_needed(state.max_size(sf), packet_bytes - config.header_bytes, m),
        toa_us,
        ack_toa_us,
    })
}

/// Sizes the frames of every SF with at least one device.
///
/// `drift_horizon_us` is the time between a device's fine synchronisation
/// and the start of the round; it only matters under
/// [`GuardPolicy::CoverRound`].
pub fn build_frame_structures(
    state: &SchedulerState,
    config: &SchedulerConfig,
    confirmed: bool,
    drift_horizon_us: u64,
) -> Result<FrameStructure> {
    config.validate()?;
    let mut frames = Vec::new();
    for sf in SpreadingFactor::ALL {
        if state.count(sf) == 0 {
            continue;
        }
        let max_size = state.max_size(sf).max(1);
        let packet_bytes = optimal_packet_length(max_size, sf, config)?;
        let mut guard = guard_time(sf, packet_bytes, state, config)?;
        let mut frame = layout(sf, packet_bytes, guard, state, config, confirmed)?;
        if config.guard_policy == GuardPolicy::CoverRound {
            loop {
                let horizon_ms = (drift_horizon_us + frame.round_us()) as f64 / 1000.0;
                let needed = ceil_tol(config.skew_rate * horizon_ms + config.sync_accuracy_ms) as u32;
                if needed <= guard {
                    break;
                }
                guard = needed;
                frame = layout(sf, packet_bytes, guard, state, config, confirmed)?;
            }
        }
        frames.push(frame);
    }
    Ok(FrameStructure { frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(objective: Objective, bw: u32) -> SchedulerConfig {
        SchedulerConfig {
            objective,
            bandwidth_hz: bw,
            ..SchedulerConfig::default()
        }
    }

    fn join(device: u32, rssi: f64) -> JoinInfo {
        JoinInfo {
            device,
            rssi_dbm: rssi,
            data_size: 5760,
            delay_elasticity_s: 0,
        }
    }

    #[test]
    fn min_sf_examples() {
        let b = LinkBudget::default();
        assert_eq!(min_spreading_factor(-100.0, &b, 125_000).unwrap(), SpreadingFactor::SF7);
        assert_eq!(min_spreading_factor(-130.0, &b, 125_000).unwrap(), SpreadingFactor::SF10);
        assert!(matches!(
            min_spreading_factor(-140.0, &b, 125_000),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn plan_matches_layout() {
        assert_eq!(channel_power_plan(SpreadingFactor::SF7).channel_ids, vec![1]);
        assert_eq!(channel_power_plan(SpreadingFactor::SF8).tx_power_dbm, 13);
        assert_eq!(channel_power_plan(SpreadingFactor::SF11).channel_ids, vec![2, 3]);
        let pairs: usize = SpreadingFactor::ALL
            .iter()
            .map(|&sf| channel_power_plan(sf).channel_ids.len())
            .sum();
        assert_eq!(pairs, 8);
    }

    #[test]
    fn costs() {
        let c = cfg(Objective::Energy, 125_000);
        assert_eq!(cost_energy(SpreadingFactor::SF7, 0, &c).unwrap(), 0.0);
        let costs: Vec<f64> = SpreadingFactor::ALL
            .iter()
            .map(|&sf| cost_energy(sf, 5760, &c).unwrap())
            .collect();
        assert!(costs.windows(2).all(|w| w[0] < w[1]));
        let t7 = time_on_air(&c.radio(SpreadingFactor::SF7), 255).unwrap();
        let s = SchedulerState::new();
        let ct = cost_time(SpreadingFactor::SF7, 5760, &s, &c).unwrap();
        assert!((ct - 2400.0 * t7).abs() < 1e-6);
        let t11 = time_on_air(&c.radio(SpreadingFactor::SF11), 255).unwrap();
        let ct11 = cost_time(SpreadingFactor::SF11, 5760, &s, &c).unwrap();
        assert!((ct11 - (100.0 * 12.0 + 1.0) * t11).abs() < 1e-6);
    }

    #[test]
    fn first_device_goes_to_sf7() {
        for obj in [Objective::Energy, Objective::CollectionTime] {
            let c = cfg(obj, 125_000);
            let mut s = SchedulerState::new();
            let a = allocate(&join(1, -90.0), &mut s, &c).unwrap();
            assert_eq!((a.sf, a.slot), (SpreadingFactor::SF7, 0));
        }
    }

    #[test]
    fn load_balancing_only_under_time_objective() {
        for (obj, spread) in [(Objective::Energy, false), (Objective::CollectionTime, true)] {
            let c = cfg(obj, 500_000);
            let mut s = SchedulerState::new();
            for d in 0..300 {
                allocate(&join(d, -80.0), &mut s, &c).unwrap();
            }
            assert_eq!(s.count(SpreadingFactor::SF7) < 300, spread);
            assert_eq!(s.len(), 300);
        }
    }

    #[test]
    fn rejoin_keeps_assignment() {
        let c = cfg(Objective::CollectionTime, 500_000);
        let mut s = SchedulerState::new();
        let a = allocate(&join(7, -90.0), &mut s, &c).unwrap();
        let b = allocate(&join(7, -90.0), &mut s, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(s.count(SpreadingFactor::SF7), 1);
    }

    #[test]
    fn guard_examples() {
        let c = cfg(Objective::Energy, 125_000);
        let s = SchedulerState::new();
        assert_eq!(guard_time(SpreadingFactor::SF7, 255, &s, &c).unwrap(), 1);
        // 15e-6 * 200 * 24 * 400 ms = 28.8 ms
        let g = ceil_tol(15e-6 * 200.0 * 24.0 * 400.0);
        assert_eq!(g, 29.0);
    }

    #[test]
    fn slots_examples() {
        assert_eq!(slots_per_frame(5, 100.0, 0, 0.01), 100);
        assert_eq!(slots_per_frame(250, 100.0, 0, 0.01), 250);
        assert_eq!(slots_per_frame(0, 100.0, 50, 0.01), 50);
    }

    #[test]
    fn single_packet_buffer_uses_exact_length() {
        let c = cfg(Objective::Energy, 500_000);
        for sf in SpreadingFactor::ALL {
            assert_eq!(optimal_packet_length(100, sf, &c).unwrap(), 108);
        }
    }

    #[test]
    fn ideal_link_prefers_full_packets() {
        let c = cfg(Objective::Energy, 125_000);
        let l = optimal_packet_length_at(2470, SpreadingFactor::SF7, f64::INFINITY, 8, &c).unwrap();
        assert_eq!(l, 255);
    }

    #[test]
    fn frame_respects_duty_cycle() {
        let mut c = cfg(Objective::CollectionTime, 500_000);
        c.guard_policy = GuardPolicy::CoverRound;
        let mut s = SchedulerState::new();
        for d in 0..400 {
            allocate(&join(d, -80.0 - f64::from(d % 40)), &mut s, &c).unwrap();
        }
        let fs = build_frame_structures(&s, &c, true, 60_000_000).unwrap();
        for f in &fs.frames {
            assert!(f.slots as f64 * f.slot_us() as f64 >= f.toa_us as f64 / c.duty_cycle - 1e-6);
            assert!(f.slots >= f.devices);
            assert!(f.guard_ms >= 1);
        }
    }
}
