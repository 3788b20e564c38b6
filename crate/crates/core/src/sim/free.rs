//! Scheduled collection: joins during stage 1, schedule broadcast during
//! stage 2, then framed rounds per SF with optional group acknowledgements.

use rand::Rng;

use crate::error::{Error, Result};
use crate::phy::SpreadingFactor;
use crate::protocol::{
    DcSettings, DeviceAction, DeviceEvent, DeviceFsm, DeviceState, FSettings, GatewayAction,
    GatewayEvent, GatewayFsm, GatewayPhase, GroupAck, JoinAccept, JoinRequest,
};
use crate::scheduler::{
    ack_airtime_us, build_frame_structures, FrameStructure, JoinInfo, SchedulerConfig, SfFrame,
    DOWNLINK_CHANNEL,
};
use crate::sim::clock::Clock;
use crate::sim::duty::Node;
use crate::sim::medium::Outcome;
use crate::sim::metrics::MetricsReport;
use crate::sim::queue::EventQueue;
use crate::sim::trace::{Trace, TraceKind};
use crate::sim::world::World;

#[derive(Debug)]
enum Ev {
    JoinStart { dev: u32 },
    JoinEnd { dev: u32, id: u64 },
    JoinRx1 { dev: u32, accept: Option<DcSettings> },
    JoinRx2 { dev: u32, accept: Option<DcSettings> },
    JoinDone { dev: u32, accept: Option<DcSettings> },
    Stage1End,
    Broadcast,
    CollectionStart,
    Slot { dev: u32, frame: u32, k: usize },
    DataEnd { dev: u32, id: u64, frame: u32, k: usize, packet: u32, payload: usize },
    FrameEnd { sf: SpreadingFactor, frame: u32 },
}

struct Dev {
    fsm: DeviceFsm,
    join_channel: u8,
    clock: Clock,
    /// Timing decoded from the broadcast.
    frame: Option<SfFrame>,
    listen_from: u64,
    acked_bytes: u64,
    dropped_bytes: u64,
    sent_bytes: u64,
}

impl Dev {
    fn active(&self) -> bool {
        matches!(self.fsm.state, DeviceState::Collecting | DeviceState::AwaitAck)
    }
}

fn uniform_us<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> u64 {
    let s = if hi > lo { rng.random_range(lo..hi) } else { lo };
    (s * 1e6).round() as u64
}

struct Run {
    w: World,
    q: EventQueue<Ev>,
    devs: Vec<Dev>,
    gw: GatewayFsm,
    sched: SchedulerConfig,
    frames: FrameStructure,
    confirmed: bool,
    stage1_end: u64,
    collection: u64,
    horizon: u64,
    rx1: u64,
    rx2: u64,
}

impl Run {
    fn header(&self) -> usize {
        self.w.cfg.lorawan_header_bytes
    }

    fn join_sf(&self, dev: u32) -> SpreadingFactor {
        self.w.sites[dev as usize].link_sf.expect("in range")
    }

    fn step_device(&mut self, dev: u32, event: DeviceEvent) -> Result<Vec<DeviceAction>> {
        let actions = self.devs[dev as usize].fsm.step(event)?;
        for a in &actions {
            match a {
                DeviceAction::Delivered { packet } if self.confirmed => {
                    self.devs[dev as usize].acked_bytes += packet.payload_bytes as u64;
                }
                DeviceAction::Dropped { packet } => {
                    self.devs[dev as usize].dropped_bytes += packet.payload_bytes as u64;
                    self.w.counters.dropped_packets += 1;
                }
                _ => {}
            }
        }
        Ok(actions)
    }

    fn join_start(&mut self, now: u64, dev: u32) -> Result<()> {
        if now >= self.stage1_end || !matches!(self.devs[dev as usize].fsm.state, DeviceState::Idle | DeviceState::Joining { .. }) {
            return Ok(());
        }
        let ch = match self.w.pick_channel(dev, now) {
            Ok(ch) => ch,
            Err(t) => {
                self.q.push(t, 1, Ev::JoinStart { dev });
                return Ok(());
            }
        };
        let request = JoinRequest {
            dev_eui: u64::from(dev).to_be_bytes(),
            data_size: self.w.devices[dev as usize].buffer_bytes as u32,
            ..JoinRequest::default()
        }
        .encode()?;
        self.step_device(dev, DeviceEvent::Start)?;
        let sf = self.join_sf(dev);
        let power = self.w.cfg.device_tx_dbm;
        let total = request.len() + self.header();
        let (id, end) = self
            .w
            .uplink(now, dev, ch, sf, power, total, TraceKind::JoinRequest)?
            .expect("channel was open");
        self.devs[dev as usize].join_channel = ch;
        self.q.push(end, 0, Ev::JoinEnd { dev, id });
        Ok(())
    }

    fn join_end(&mut self, now: u64, dev: u32, id: u64) -> Result<()> {
        let (event, outcome) = self.w.finish_uplink(id)?;
        let mut accept = None;
        if outcome == Outcome::Received && self.gw.phase == GatewayPhase::Stage1Collecting {
            let join = JoinInfo {
                device: dev,
                rssi_dbm: event.rssi_dbm,
                data_size: self.w.devices[dev as usize].buffer_bytes as u32,
                delay_elasticity_s: 0,
            };
            for a in self.gw.step(GatewayEvent::JoinRequest(join), &self.sched)? {
                match a {
                    GatewayAction::SendJoinAccept(a) => {
                        let second_stage_s = ((self.stage1_end.saturating_sub(now)) / 1_000_000).min(u64::from(u16::MAX)) as u16;
                        accept = Some(DcSettings::from_assignment(&a, second_stage_s)?);
                    }
                    GatewayAction::RejectJoin { .. } => self.w.counters.join_rejected += 1,
                    _ => {}
                }
            }
        }
        self.q.push(now + self.rx1, 1, Ev::JoinRx1 { dev, accept });
        Ok(())
    }

    /// Sends a join accept in one window; `Some(heard)` if the gateway
    /// transmitted.
    fn accept_in_window(&mut self, now: u64, dev: u32, ch: u8, sf: SpreadingFactor, dc: DcSettings) -> Result<Option<(bool, u64)>> {
        let msg = JoinAccept {
            dev_addr: dev,
            dc_settings: dc,
            ..JoinAccept::default()
        }
        .encode()?;
        let total = msg.len() + self.header();
        let toa = self.w.toa_us(sf, total)?;
        if !self.w.gateway_send(now, ch, sf, toa, total, TraceKind::JoinAccept) {
            return Ok(None);
        }
        self.w.counters.join_accepts += 1;
        let heard = self.w.device_decodes(dev, sf, total)?;
        self.w.listen(dev, now, toa, ch, sf, heard);
        Ok(Some((heard, toa)))
    }

    fn join_rx1(&mut self, now: u64, dev: u32, accept: Option<DcSettings>) -> Result<()> {
        let sf = self.join_sf(dev);
        let ch = self.devs[dev as usize].join_channel;
        let back_to_rx2 = now - self.rx1 + self.rx2;
        if let Some(dc) = accept {
            if let Some((heard, toa)) = self.accept_in_window(now, dev, ch, sf, dc)? {
                if heard {
                    self.q.push(now + toa, 1, Ev::JoinDone { dev, accept: Some(dc) });
                } else {
                    self.q.push(back_to_rx2, 1, Ev::JoinRx2 { dev, accept: None });
                }
                return Ok(());
            }
        }
        let empty = self.w.empty_window_us(sf);
        self.w.listen(dev, now, empty, ch, sf, false);
        self.q.push(back_to_rx2, 1, Ev::JoinRx2 { dev, accept });
        Ok(())
    }

    fn join_rx2(&mut self, now: u64, dev: u32, accept: Option<DcSettings>) -> Result<()> {
        let sf = self.w.cfg.rx2_sf;
        if let Some(dc) = accept {
            if let Some((heard, toa)) = self.accept_in_window(now, dev, DOWNLINK_CHANNEL, sf, dc)? {
                self.q.push(now + toa, 1, Ev::JoinDone { dev, accept: heard.then_some(dc) });
                return Ok(());
            }
            self.w.counters.join_suppressed += 1;
        }
        let empty = self.w.empty_window_us(sf);
        self.w.listen(dev, now, empty, DOWNLINK_CHANNEL, sf, false);
        self.q.push(now + empty, 1, Ev::JoinDone { dev, accept: None });
        Ok(())
    }

    fn join_done(&mut self, now: u64, dev: u32, accept: Option<DcSettings>) -> Result<()> {
        if !matches!(self.devs[dev as usize].fsm.state, DeviceState::Joining { .. }) {
            return Ok(());
        }
        match accept {
            Some(dc) => {
                self.step_device(dev, DeviceEvent::JoinAccepted(dc))?;
            }
            None => {
                self.step_device(dev, DeviceEvent::JoinWindowsClosed)?;
                let (lo, hi) = self.w.cfg.join_backoff_s;
                let t = now + uniform_us(&mut self.w.rng, lo, hi);
                if t < self.stage1_end {
                    self.q.push(t, 1, Ev::JoinStart { dev });
                }
            }
        }
        Ok(())
    }

    fn stage1_end(&mut self, now: u64) -> Result<()> {
        for dev in 0..self.devs.len() as u32 {
            let was_joining = matches!(self.devs[dev as usize].fsm.state, DeviceState::Idle | DeviceState::Joining { .. });
            self.step_device(dev, DeviceEvent::Stage1Over)?;
            if was_joining {
                self.w.counters.unjoined += 1;
            }
            self.devs[dev as usize].listen_from = now;
        }
        self.gw.step(GatewayEvent::Stage2Start, &self.sched)?;
        let drift_horizon = self.collection - now;
        self.frames = build_frame_structures(&self.gw.scheduler, &self.sched, self.confirmed, drift_horizon)?;
        self.gw.set_frames(self.frames.frames.clone());
        self.q.push(now, 1, Ev::Broadcast);
        Ok(())
    }

    fn awaiting(&self) -> impl Iterator<Item = u32> + '_ {
        self.devs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.fsm.state == DeviceState::AwaitStage2)
            .map(|(i, _)| i as u32)
    }

    fn broadcast(&mut self, now: u64) -> Result<()> {
        if now >= self.collection || self.awaiting().next().is_none() {
            return Ok(());
        }
        let sf = self.w.cfg.rx2_sf;
        let fixed = FSettings::from_frames(&self.frames, 0, 0)?.encode()?;
        let total = fixed.len() + self.header();
        let toa = self.w.toa_us(sf, total)?;
        let end = now + toa;
        if end > self.collection {
            return Ok(());
        }
        if !self.w.gateway_send(now, DOWNLINK_CHANNEL, sf, toa, total, TraceKind::Schedule) {
            let t = self.w.duty.free_at(Node::Gateway, DOWNLINK_CHANNEL);
            self.q.push(t, 1, Ev::Broadcast);
            return Ok(());
        }
        self.w.counters.schedule_broadcasts += 1;
        let period_s = (self.w.cfg.period_us() / 1_000_000) as u32;
        let bytes = FSettings::from_frames(&self.frames, ((self.collection - end) / 1000) as u32, period_s.min((1 << 24) - 1))?
            .encode()?;
        let waiting: Vec<u32> = self.awaiting().collect();
        for dev in waiting {
            if !self.w.device_decodes(dev, sf, total)? {
                continue;
            }
            let from = self.devs[dev as usize].listen_from;
            self.w.listen(dev, from, end - from, DOWNLINK_CHANNEL, sf, true);
            let settings = self.devs[dev as usize].fsm.settings.ok_or_else(|| Error::Protocol("joined device without settings".into()))?;
            let dev_sf = settings.sf()?;
            let Some(frame) = FSettings::decode(&bytes)?.timing(dev_sf, &self.sched, self.confirmed)? else {
                continue;
            };
            let acc = self.w.cfg.sync_accuracy_ms * 1000.0;
            let offset = if acc > 0.0 { self.w.rng.random_range(-acc..=acc) } else { 0.0 };
            let skew = if self.w.rng.random::<bool>() { self.w.cfg.skew_rate } else { -self.w.cfg.skew_rate };
            let d = &mut self.devs[dev as usize];
            d.clock = Clock { synced_at_us: end, offset_us: offset, skew };
            d.frame = Some(frame.clone());
            self.step_device(dev, DeviceEvent::Schedule(frame))?;
        }
        let next = self.w.duty.free_at(Node::Gateway, DOWNLINK_CHANNEL).max(end);
        self.q.push(next, 1, Ev::Broadcast);
        Ok(())
    }

    fn collection_start(&mut self, now: u64) -> Result<()> {
        self.gw.step(GatewayEvent::CollectionStart, &self.sched)?;
        self.w.airtime_from_us = now;
        let waiting: Vec<u32> = self.awaiting().collect();
        for dev in waiting {
            let from = self.devs[dev as usize].listen_from;
            let sf = self.w.cfg.rx2_sf;
            self.w.listen(dev, from, now - from, DOWNLINK_CHANNEL, sf, false);
            self.w.counters.unsynced += 1;
        }
        let sfs: Vec<SpreadingFactor> = self.frames.frames.iter().map(|f| f.sf).collect();
        for sf in sfs {
            self.schedule_frame(sf, 0)?;
        }
        Ok(())
    }

    fn members(&self, sf: SpreadingFactor) -> Vec<u32> {
        self.gw
            .scheduler
            .group(sf)
            .devices
            .iter()
            .copied()
            .filter(|&d| self.devs[d as usize].frame.as_ref().is_some_and(|f| f.sf == sf))
            .collect()
    }

    fn slot_of(&self, dev: u32) -> u32 {
        self.devs[dev as usize].fsm.settings.map_or(0, |s| u32::from(s.slot))
    }

    fn schedule_frame(&mut self, sf: SpreadingFactor, frame: u32) -> Result<()> {
        let layout = self.frames.frame(sf)?.clone();
        let frame_start = self.collection + u64::from(frame) * layout.frame_us();
        if frame_start > self.horizon {
            return Ok(());
        }
        for dev in self.members(sf) {
            let d = &self.devs[dev as usize];
            if !d.active() {
                continue;
            }
            let f = d.frame.as_ref().expect("member has timing");
            let slot = self.slot_of(dev);
            for k in 0..f.channels() {
                let local = self.collection + f.tx_start_us(frame, slot, k);
                let t = d.clock.true_time_of(local);
                self.q.push(t, 1, Ev::Slot { dev, frame, k });
            }
        }
        let end = if self.confirmed {
            layout.ack_start_us(frame)
        } else {
            u64::from(frame) * layout.frame_us() + u64::from(layout.uplink_slots()) * layout.slot_us()
        };
        self.q.push(self.collection + end, 1, Ev::FrameEnd { sf, frame });
        Ok(())
    }

    fn slot(&mut self, now: u64, dev: u32, frame: u32, k: usize) -> Result<()> {
        let d = &self.devs[dev as usize];
        if d.fsm.state != DeviceState::Collecting || d.fsm.pending() == 0 {
            return Ok(());
        }
        let f = d.frame.clone().expect("collecting device has timing");
        let slot = self.slot_of(dev);
        let ch = f.channel_ids[k];
        let drift_us = d.clock.skew.abs() * now.saturating_sub(d.clock.synced_at_us) as f64
            + self.w.cfg.sync_accuracy_ms * 1000.0;
        if drift_us > f.guard_us() as f64 {
            // Lost synchronisation: stop rather than risk a neighbour's slot.
            self.w.counters.desynced += 1;
            self.devs[dev as usize].fsm.state = DeviceState::Done;
            return Ok(());
        }
        let slot_end = self.collection + f.tx_start_us(frame, slot, k) - f.guard_us() + f.slot_us();
        let free = self.w.duty.free_at(Node::Device(dev), ch);
        if free > now {
            if free + f.toa_us <= slot_end {
                self.q.push(free, 1, Ev::Slot { dev, frame, k });
            } else {
                self.w.counters.duty_deferred += 1;
            }
            return Ok(());
        }
        let actions = self.step_device(dev, DeviceEvent::SlotStart { channel_index: k })?;
        for a in actions {
            if let DeviceAction::Transmit { packet, .. } = a {
                let settings = self.devs[dev as usize].fsm.settings.expect("joined");
                let total = packet.payload_bytes + f.header_bytes;
                let (id, end) = self
                    .w
                    .uplink(now, dev, ch, f.sf, settings.tx_power_dbm(), total, TraceKind::Data)?
                    .expect("duty checked");
                if packet.attempts == 1 {
                    self.devs[dev as usize].sent_bytes += packet.payload_bytes as u64;
                }
                self.q.push(end, 0, Ev::DataEnd { dev, id, frame, k, packet: packet.id, payload: packet.payload_bytes });
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn data_end(&mut self, dev: u32, id: u64, frame: u32, k: usize, packet: u32, payload: usize) -> Result<()> {
        let (event, outcome) = self.w.finish_uplink(id)?;
        if outcome != Outcome::Received {
            return Ok(());
        }
        let before = self.gw.received_bytes(dev);
        self.gw.step(
            GatewayEvent::Uplink {
                device: dev,
                sf: event.sf,
                frame,
                channel_index: k,
                packet_id: packet,
                payload_bytes: payload,
            },
            &self.sched,
        )?;
        if self.gw.received_bytes(dev) == before {
            self.w.counters.duplicates += 1;
        }
        Ok(())
    }

    fn frame_end(&mut self, now: u64, sf: SpreadingFactor, frame: u32) -> Result<()> {
        let layout = self.frames.frame(sf)?.clone();
        let members = self.members(sf);
        let actions = self.gw.step(GatewayEvent::FrameEnd { sf, frame }, &self.sched)?;
        let mut ack = None;
        for a in actions {
            if let GatewayAction::SendAck { ack: group, .. } = a {
                ack = Some(group);
            }
        }
        let mut waiting = Vec::new();
        for &dev in &members {
            if self.devs[dev as usize].fsm.state != DeviceState::Collecting {
                continue;
            }
            let acts = self.step_device(dev, DeviceEvent::FrameEnd)?;
            if acts.iter().any(|a| matches!(a, DeviceAction::ListenForAck)) {
                waiting.push(dev);
            }
        }
        if let Some(group) = ack {
            self.send_ack(now, &layout, group, &waiting)?;
        }
        if members.iter().any(|&d| self.devs[d as usize].active()) {
            self.schedule_frame(sf, frame + 1)?;
        }
        Ok(())
    }

    fn send_ack(&mut self, now: u64, layout: &SfFrame, group: GroupAck, waiting: &[u32]) -> Result<()> {
        let sf = layout.sf;
        let bytes = group.encode();
        let airtime = ack_airtime_us(&self.w.cfg.radio(sf), layout.slots, layout.channels(), layout.header_bytes)?;
        let total = bytes.len() + layout.header_bytes;
        let mut sent_on = None;
        for ch in layout.channel_ids.iter().copied().chain([DOWNLINK_CHANNEL]) {
            if self.w.gateway_send(now, ch, sf, airtime, total, TraceKind::Ack) {
                sent_on = Some(ch);
                break;
            }
        }
        let guard = layout.guard_us();
        for &dev in waiting {
            let event = match sent_on {
                Some(ch) => {
                    let heard = self.w.device_decodes(dev, sf, total.min(255))?;
                    self.w.listen(dev, now.saturating_sub(guard), guard + airtime, ch, sf, heard);
                    if heard {
                        let decoded = GroupAck::decode(group.frame, &bytes, layout.slots as usize, layout.channels())?;
                        let acc = self.w.cfg.sync_accuracy_ms * 1000.0;
                        let offset = if acc > 0.0 { self.w.rng.random_range(-acc..=acc) } else { 0.0 };
                        self.devs[dev as usize].clock.resync(now + airtime, offset);
                        DeviceEvent::Ack(decoded)
                    } else {
                        self.w.counters.ack_lost += 1;
                        DeviceEvent::AckMissed
                    }
                }
                None => {
                    self.w.counters.no_ack += 1;
                    let empty = self.w.empty_window_us(sf);
                    self.w.listen(dev, now.saturating_sub(guard), 2 * guard + empty, layout.channel_ids[0], sf, false);
                    DeviceEvent::AckMissed
                }
            };
            self.step_device(dev, event)?;
        }
        Ok(())
    }
}

pub(crate) fn run(mut w: World) -> Result<(MetricsReport, Option<Trace>)> {
    let cfg = w.cfg.clone();
    let confirmed = cfg.traffic.confirmed();
    let stage1_end = cfg.stage1_us();
    let collection = stage1_end + cfg.stage2_us();
    let mut q = EventQueue::new();
    let devs = (0..cfg.n_devices)
        .map(|i| Dev {
            fsm: DeviceFsm::new(w.devices[i as usize].buffer_bytes as usize, confirmed),
            join_channel: 0,
            clock: Clock::default(),
            frame: None,
            listen_from: 0,
            acked_bytes: 0,
            dropped_bytes: 0,
            sent_bytes: 0,
        })
        .collect();
    for dev in 0..cfg.n_devices {
        if w.sites[dev as usize].link_sf.is_some() {
            let t = uniform_us(&mut w.rng, 0.0, cfg.join_first_s);
            q.push(t, 1, Ev::JoinStart { dev });
        }
    }
    q.push(stage1_end, 2, Ev::Stage1End);
    q.push(collection, 2, Ev::CollectionStart);
    let mut run = Run {
        q,
        devs,
        gw: GatewayFsm::new(confirmed),
        sched: cfg.scheduler(),
        frames: FrameStructure::default(),
        confirmed,
        stage1_end,
        collection,
        horizon: 2 * cfg.period_us(),
        rx1: (cfg.rx1_delay_s * 1e6).round() as u64,
        rx2: (cfg.rx2_delay_s * 1e6).round() as u64,
        w,
    };
    while let Some((now, ev)) = run.q.pop() {
        match ev {
            Ev::JoinStart { dev } => run.join_start(now, dev)?,
            Ev::JoinEnd { dev, id } => run.join_end(now, dev, id)?,
            Ev::JoinRx1 { dev, accept } => run.join_rx1(now, dev, accept)?,
            Ev::JoinRx2 { dev, accept } => run.join_rx2(now, dev, accept)?,
            Ev::JoinDone { dev, accept } => run.join_done(now, dev, accept)?,
            Ev::Stage1End => run.stage1_end(now)?,
            Ev::Broadcast => run.broadcast(now)?,
            Ev::CollectionStart => run.collection_start(now)?,
            Ev::Slot { dev, frame, k } => run.slot(now, dev, frame, k)?,
            Ev::DataEnd { dev, id, frame, k, packet, payload } => run.data_end(dev, id, frame, k, packet, payload)?,
            Ev::FrameEnd { sf, frame } => run.frame_end(now, sf, frame)?,
        }
    }
    let n = cfg.n_devices as usize;
    let (delivered, dropped): (Vec<u64>, Vec<u64>) = if confirmed {
        (
            run.devs.iter().map(|d| d.acked_bytes).collect(),
            run.devs.iter().map(|d| d.dropped_bytes).collect(),
        )
    } else {
        let got: Vec<u64> = (0..n as u32).map(|d| run.gw.received_bytes(d) as u64).collect();
        let lost = run.devs.iter().zip(&got).map(|(d, g)| d.sent_bytes.saturating_sub(*g)).collect();
        (got, lost)
    };
    let mut trace = None;
    let report = run.w.report(&delivered, &dropped, Some(collection), &mut trace)?;
    Ok((report, trace))
}
