//! Endpoint behaviour of scheduled collection as deterministic step
//! functions. Timing, randomness and radio access belong to the caller,
//! which feeds events in and carries out the returned actions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::codec::{AckBitmap, DcSettings, GroupAck};
use crate::phy::SpreadingFactor;
use crate::scheduler::{allocate, Assignment, JoinInfo, SchedulerConfig, SchedulerState, SfFrame};

/// Total transmission attempts of one packet before it is dropped.
pub const MAX_ATTEMPTS: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u32,
    pub payload_bytes: usize,
    pub attempts: u32,
}

/// Splits a buffer into packets of at most `payload` bytes.
pub fn packetize(buffer_bytes: usize, payload: usize) -> VecDeque<Packet> {
    let mut left = buffer_bytes;
    let mut out = VecDeque::new();
    while left > 0 {
        let take = left.min(payload);
        out.push_back(Packet {
            id: out.len() as u32,
            payload_bytes: take,
            attempts: 0,
        });
        left -= take;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceState {
    Idle,
    Joining { attempts: u32 },
    AwaitStage2,
    Collecting,
    AwaitAck,
    Done,
    /// Stage 1 ended without a join accept.
    Unjoined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeviceEvent {
    Start,
    /// Both receive windows after a join request passed empty.
    JoinWindowsClosed,
    JoinAccepted(DcSettings),
    Stage1Over,
    Schedule(SfFrame),
    /// The device's slot on its `channel_index`-th channel has begun.
    SlotStart { channel_index: usize },
    /// Frame end in unconfirmed mode.
    FrameEnd,
    Ack(GroupAck),
    AckMissed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeviceAction {
    SendJoinRequest { attempt: u32 },
    BackoffJoin,
    ListenForSchedule,
    Transmit { channel_index: usize, packet: Packet },
    ListenForAck,
    Delivered { packet: Packet },
    Dropped { packet: Packet },
    Finished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceFsm {
    pub state: DeviceState,
    pub confirmed: bool,
    pub buffer_bytes: usize,
    pub settings: Option<DcSettings>,
    pub frame: Option<SfFrame>,
    queue: VecDeque<Packet>,
    in_flight: Vec<(usize, Packet)>,
}

impl DeviceFsm {
    pub fn new(buffer_bytes: usize, confirmed: bool) -> Self {
        Self {
            state: DeviceState::Idle,
            confirmed,
            buffer_bytes,
            settings: None,
            frame: None,
            queue: VecDeque::new(),
            in_flight: Vec::new(),
        }
    }

    pub fn pending(&self) -> usize {
        self.queue.len() + self.in_flight.len()
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, DeviceState::Done | DeviceState::Unjoined)
    }

    fn violation(&self, event: &DeviceEvent) -> Error {
        Error::Protocol(format!("device in {:?} cannot handle {event:?}", self.state))
    }

    fn finish_if_empty(&mut self, actions: &mut Vec<DeviceAction>) {
        if self.queue.is_empty() && self.in_flight.is_empty() {
            self.state = DeviceState::Done;
            actions.push(DeviceAction::Finished);
        } else {
            self.state = DeviceState::Collecting;
        }
    }

    fn settle(&mut self, acked: impl Fn(usize, &Packet) -> bool) -> Vec<DeviceAction> {
        let mut actions = Vec::new();
        let mut retry = Vec::new();
        for (k, packet) in std::mem::take(&mut self.in_flight) {
            if acked(k, &packet) {
                actions.push(DeviceAction::Delivered { packet });
            } else if packet.attempts >= MAX_ATTEMPTS {
                actions.push(DeviceAction::Dropped { packet });
            } else {
                retry.push(packet);
            }
        }
        retry.sort_by_key(|p| p.id);
        for p in retry.into_iter().rev() {
            self.queue.push_front(p);
        }
        self.finish_if_empty(&mut actions);
        actions
    }

    pub fn step(&mut self, event: DeviceEvent) -> Result<Vec<DeviceAction>> {
        use DeviceState as S;
        let actions = match (&self.state, event) {
            (S::Idle, DeviceEvent::Start) => {
                self.state = S::Joining { attempts: 1 };
                vec![DeviceAction::SendJoinRequest { attempt: 1 }]
            }
            (S::Joining { .. }, DeviceEvent::JoinWindowsClosed) => vec![DeviceAction::BackoffJoin],
            (S::Joining { attempts }, DeviceEvent::Start) => {
                let attempt = attempts + 1;
                self.state = S::Joining { attempts: attempt };
                vec![DeviceAction::SendJoinRequest { attempt }]
            }
            (S::Joining { .. }, DeviceEvent::JoinAccepted(dc)) => {
                self.settings = Some(dc);
                self.state = S::AwaitStage2;
                vec![DeviceAction::ListenForSchedule]
            }
            (S::Joining { .. } | S::Idle, DeviceEvent::Stage1Over) => {
                self.state = S::Unjoined;
                vec![DeviceAction::Finished]
            }
            (_, DeviceEvent::Stage1Over) => vec![],
            (S::AwaitStage2, DeviceEvent::Schedule(frame)) => {
                self.queue = packetize(self.buffer_bytes, frame.payload_bytes());
                self.frame = Some(frame);
                let mut actions = Vec::new();
                self.finish_if_empty(&mut actions);
                actions
            }
            (S::Collecting, DeviceEvent::SlotStart { channel_index }) => match self.queue.pop_front() {
                Some(mut packet) => {
                    packet.attempts += 1;
                    self.in_flight.push((channel_index, packet.clone()));
                    vec![DeviceAction::Transmit { channel_index, packet }]
                }
                None => vec![],
            },
            (S::Collecting, DeviceEvent::FrameEnd) if !self.confirmed => {
                let mut actions: Vec<DeviceAction> = std::mem::take(&mut self.in_flight)
                    .into_iter()
                    .map(|(_, packet)| DeviceAction::Delivered { packet })
                    .collect();
                self.finish_if_empty(&mut actions);
                actions
            }
            (S::Collecting, DeviceEvent::FrameEnd) if self.confirmed => {
                if self.in_flight.is_empty() {
                    vec![]
                } else {
                    self.state = S::AwaitAck;
                    vec![DeviceAction::ListenForAck]
                }
            }
            (S::AwaitAck, DeviceEvent::Ack(ack)) => {
                let slot = self.settings.map_or(0, |s| usize::from(s.slot));
                let bits: Vec<bool> = ack
                    .bitmaps
                    .iter()
                    .map(|b| b.acked(slot).unwrap_or(false))
                    .collect();
                self.settle(|k, _| bits.get(k).copied().unwrap_or(false))
            }
            (S::AwaitAck, DeviceEvent::AckMissed) => self.settle(|_, _| false),
            (_, event) => return Err(self.violation(&event)),
        };
        Ok(actions)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatewayPhase {
    Stage1Collecting,
    Stage2Broadcasting,
    Collecting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GatewayEvent {
    JoinRequest(JoinInfo),
    Stage2Start,
    CollectionStart,
    Uplink {
        device: u32,
        sf: SpreadingFactor,
        frame: u32,
        channel_index: usize,
        packet_id: u32,
        payload_bytes: usize,
    },
    FrameEnd { sf: SpreadingFactor, frame: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GatewayAction {
    SendJoinAccept(Assignment),
    RejectJoin { device: u32, reason: String },
    BroadcastSchedule,
    SendAck { sf: SpreadingFactor, ack: GroupAck },
    RoundComplete { sf: SpreadingFactor, frames: u32 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct DeviceLedger {
    expected_bytes: usize,
    received: BTreeSet<u32>,
    received_bytes: usize,
    silent_frames: u32,
    heard_this_frame: bool,
}

/// Gateway side: allocation during joins, reception bookkeeping and group
/// acknowledgements during collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatewayFsm {
    pub phase: GatewayPhase,
    pub confirmed: bool,
    pub scheduler: SchedulerState,
    ledgers: BTreeMap<u32, DeviceLedger>,
    frame_rx: BTreeMap<SpreadingFactor, Vec<BTreeSet<usize>>>,
    frames: BTreeMap<SpreadingFactor, SfFrame>,
    complete: BTreeSet<SpreadingFactor>,
}

impl GatewayFsm {
    pub fn new(confirmed: bool) -> Self {
        Self {
            phase: GatewayPhase::Stage1Collecting,
            confirmed,
            scheduler: SchedulerState::new(),
            ledgers: BTreeMap::new(),
            frame_rx: BTreeMap::new(),
            frames: BTreeMap::new(),
            complete: BTreeSet::new(),
        }
    }

    /// Installs the frame layouts built after stage 1.
    pub fn set_frames(&mut self, frames: impl IntoIterator<Item = SfFrame>) {
        for f in frames {
            self.frame_rx.insert(f.sf, vec![BTreeSet::new(); f.channels()]);
            self.frames.insert(f.sf, f);
        }
    }

    pub fn received_bytes(&self, device: u32) -> usize {
        self.ledgers.get(&device).map_or(0, |l| l.received_bytes)
    }

    pub fn is_complete(&self, sf: SpreadingFactor) -> bool {
        self.complete.contains(&sf)
    }

    pub fn all_complete(&self) -> bool {
        self.frames.keys().all(|sf| self.complete.contains(sf))
    }

    fn violation(&self, event: &GatewayEvent) -> Error {
        Error::Protocol(format!("gateway in {:?} cannot handle {event:?}", self.phase))
    }

    fn round_done(&self, sf: SpreadingFactor, frame: u32) -> bool {
        let Some(layout) = self.frames.get(&sf) else {
            return true;
        };
        let group = self.scheduler.group(sf);
        if !self.confirmed {
            return frame + 1 >= layout.frames;
        }
        group.devices.iter().all(|d| {
            self.ledgers
                .get(d)
                .is_none_or(|l| l.received_bytes >= l.expected_bytes || l.silent_frames >= MAX_ATTEMPTS)
        })
    }

    pub fn step(&mut self, event: GatewayEvent, config: &SchedulerConfig) -> Result<Vec<GatewayAction>> {
        use GatewayPhase as P;
        let actions = match (&self.phase, event) {
            (P::Stage1Collecting, GatewayEvent::JoinRequest(join)) => {
                match allocate(&join, &mut self.scheduler, config) {
                    Ok(a) => {
                        self.ledgers.entry(join.device).or_insert_with(|| DeviceLedger {
                            expected_bytes: join.data_size as usize,
                            ..DeviceLedger::default()
                        });
                        vec![GatewayAction::SendJoinAccept(a)]
                    }
                    Err(e) => vec![GatewayAction::RejectJoin {
                        device: join.device,
                        reason: e.to_string(),
                    }],
                }
            }
            (P::Stage1Collecting, GatewayEvent::Stage2Start) => {
                self.phase = P::Stage2Broadcasting;
                vec![GatewayAction::BroadcastSchedule]
            }
            (P::Stage2Broadcasting, GatewayEvent::CollectionStart) => {
                self.phase = P::Collecting;
                vec![]
            }
            (
                P::Collecting,
                GatewayEvent::Uplink {
                    device,
                    sf,
                    channel_index,
                    packet_id,
                    payload_bytes,
                    ..
                },
            ) => {
                let slot = self
                    .scheduler
                    .assignment(device)
                    .filter(|a| a.sf == sf)
                    .ok_or_else(|| Error::Protocol(format!("uplink from unscheduled device {device}")))?
                    .slot as usize;
                if let Some(sets) = self.frame_rx.get_mut(&sf) {
                    if let Some(set) = sets.get_mut(channel_index) {
                        set.insert(slot);
                    }
                }
                let ledger = self.ledgers.entry(device).or_default();
                if ledger.received.insert(packet_id) {
                    ledger.received_bytes += payload_bytes;
                }
                ledger.heard_this_frame = true;
                vec![]
            }
            (P::Collecting, GatewayEvent::FrameEnd { sf, frame }) => {
                let layout = self.frames.get(&sf).ok_or(Error::NoFrame(sf))?;
                let slots = layout.slots as usize;
                let channels = layout.channels();
                let sets = self
                    .frame_rx
                    .insert(sf, vec![BTreeSet::new(); channels])
                    .unwrap_or_default();
                for d in &self.scheduler.group(sf).devices {
                    if let Some(l) = self.ledgers.get_mut(d) {
                        if l.heard_this_frame {
                            l.silent_frames = 0;
                        } else {
                            l.silent_frames += 1;
                        }
                        l.heard_this_frame = false;
                    }
                }
                let mut actions = Vec::new();
                if self.confirmed {
                    let bitmaps = sets
                        .into_iter()
                        .map(|s| AckBitmap::build(s, slots))
                        .collect::<Result<Vec<_>>>()?;
                    actions.push(GatewayAction::SendAck {
                        sf,
                        ack: GroupAck { frame, bitmaps },
                    });
                }
                if !self.complete.contains(&sf) && self.round_done(sf, frame) {
                    self.complete.insert(sf);
                    actions.push(GatewayAction::RoundComplete { sf, frames: frame + 1 });
                }
                actions
            }
            (_, event) => return Err(self.violation(&event)),
        };
        Ok(actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::build_frame_structures;

    fn frame_for(n: u32, confirmed: bool) -> (GatewayFsm, SchedulerConfig, SfFrame) {
        let cfg = SchedulerConfig::default();
        let mut gw = GatewayFsm::new(confirmed);
        for d in 0..n {
            let acts = gw
                .step(
                    GatewayEvent::JoinRequest(JoinInfo {
                        device: d,
                        rssi_dbm: -90.0,
                        data_size: 600,
                        delay_elasticity_s: 0,
                    }),
                    &cfg,
                )
                .unwrap();
            assert!(matches!(acts[0], GatewayAction::SendJoinAccept(_)));
        }
        let fs = build_frame_structures(&gw.scheduler, &cfg, confirmed, 0).unwrap();
        let f = fs.frames[0].clone();
        gw.set_frames(fs.frames);
        (gw, cfg, f)
    }

    fn joined(frame: &SfFrame, slot: u16, confirmed: bool, bytes: usize) -> DeviceFsm {
        let mut d = DeviceFsm::new(bytes, confirmed);
        d.step(DeviceEvent::Start).unwrap();
        d.step(DeviceEvent::JoinAccepted(DcSettings {
            data_rate: 5,
            tx_power: 0,
            ch_mask: 1,
            slot,
            second_stage_s: 0,
        }))
        .unwrap();
        d.step(DeviceEvent::Schedule(frame.clone())).unwrap();
        d
    }

    #[test]
    fn packetize_splits_tail() {
        let p = packetize(600, 247);
        assert_eq!(p.iter().map(|p| p.payload_bytes).collect::<Vec<_>>(), vec![247, 247, 106]);
        assert!(packetize(0, 247).is_empty());
    }

    #[test]
    fn acked_packet_is_dequeued() {
        let (_, _, f) = frame_for(1, true);
        let mut d = joined(&f, 0, true, 600);
        let a = d.step(DeviceEvent::SlotStart { channel_index: 0 }).unwrap();
        assert!(matches!(&a[0], DeviceAction::Transmit { packet, .. } if packet.id == 0));
        d.step(DeviceEvent::FrameEnd).unwrap();
        let ack = GroupAck {
            frame: 0,
            bitmaps: vec![AckBitmap::build([0], f.slots as usize).unwrap()],
        };
        let a = d.step(DeviceEvent::Ack(ack)).unwrap();
        assert!(matches!(&a[0], DeviceAction::Delivered { packet } if packet.id == 0));
        assert_eq!(d.pending(), 2);
    }

    #[test]
    fn eight_failures_drop() {
        let (_, _, f) = frame_for(1, true);
        let mut d = joined(&f, 0, true, 10);
        for attempt in 1..=MAX_ATTEMPTS {
            let a = d.step(DeviceEvent::SlotStart { channel_index: 0 }).unwrap();
            assert!(matches!(&a[0], DeviceAction::Transmit { packet, .. } if packet.attempts == attempt));
            d.step(DeviceEvent::FrameEnd).unwrap();
            let a = d.step(DeviceEvent::AckMissed).unwrap();
            if attempt < MAX_ATTEMPTS {
                assert!(a.is_empty());
            } else {
                assert!(matches!(&a[0], DeviceAction::Dropped { .. }));
                assert_eq!(a[1], DeviceAction::Finished);
            }
        }
        assert_eq!(d.state, DeviceState::Done);
    }

    #[test]
    fn unconfirmed_round_ends_after_nominal_frames() {
        let (mut gw, cfg, f) = frame_for(3, false);
        gw.step(GatewayEvent::Stage2Start, &cfg).unwrap();
        gw.step(GatewayEvent::CollectionStart, &cfg).unwrap();
        for frame in 0..f.frames {
            let a = gw.step(GatewayEvent::FrameEnd { sf: f.sf, frame }, &cfg).unwrap();
            assert_eq!(a.is_empty(), frame + 1 < f.frames);
        }
        assert!(gw.all_complete());
    }

    #[test]
    fn gateway_acks_received_slots() {
        let (mut gw, cfg, f) = frame_for(3, true);
        gw.step(GatewayEvent::Stage2Start, &cfg).unwrap();
        gw.step(GatewayEvent::CollectionStart, &cfg).unwrap();
        gw.step(
            GatewayEvent::Uplink {
                device: 2,
                sf: f.sf,
                frame: 0,
                channel_index: 0,
                packet_id: 0,
                payload_bytes: 247,
            },
            &cfg,
        )
        .unwrap();
        let a = gw.step(GatewayEvent::FrameEnd { sf: f.sf, frame: 0 }, &cfg).unwrap();
        let GatewayAction::SendAck { ack, .. } = &a[0] else {
            panic!("expected ack")
        };
        assert_eq!(ack.bitmaps[0].slots(), f.slots as usize);
        assert!(ack.bitmaps[0].acked(2).unwrap());
        assert!(!ack.bitmaps[0].acked(0).unwrap());
        assert_eq!(gw.received_bytes(2), 247);
    }

    #[test]
    fn out_of_order_event_is_an_error() {
        let mut d = DeviceFsm::new(10, false);
        assert!(d.step(DeviceEvent::SlotStart { channel_index: 0 }).is_err());
        let mut gw = GatewayFsm::new(false);
        let cfg = SchedulerConfig::default();
        assert!(gw.step(GatewayEvent::CollectionStart, &cfg).is_err());
    }
}
