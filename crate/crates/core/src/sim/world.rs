//! State shared by every scheme: device sites, the gateway medium, duty
//! cycles, per-device radio energy and the optional trace.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::phy::{preamble_ms, sample_rssi, time_on_air_us, SpreadingFactor, TransmissionEvent};
use crate::scheduler::{min_spreading_factor, DOWNLINK_CHANNEL, UPLINK_CHANNELS};
use crate::sim::config::ScenarioConfig;
use crate::sim::duty::{DutyCycle, Node};
use crate::sim::medium::{decode_draw, Medium, Outcome};
use crate::sim::metrics::{lifetime_estimate, Counters, DeviceMetrics, MetricsReport};
use crate::sim::trace::{Trace, TraceKind, TraceRecord};

/// Where a device sits and what it will buffer over one period.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceSite {
    pub distance_m: f64,
    pub mean_rssi_dbm: f64,
    /// Application event times within the period, µs.
    pub arrivals_us: Vec<u64>,
    /// Lowest SF that closes the mean link, with margin when possible.
    pub link_sf: Option<SpreadingFactor>,
}

impl DeviceSite {
    pub fn buffer_bytes(&self, cfg: &ScenarioConfig) -> u64 {
        self.arrivals_us.len() as u64 * u64::from(cfg.bytes_per_event)
    }
}

/// Places devices uniformly on the disk and draws their Poisson traffic.
/// Each device has its own random stream, so every scheme run with the same
/// seed sees the same sites and buffers.
pub fn deploy(cfg: &ScenarioConfig) -> Result<Vec<DeviceSite>> {
    let radius = cfg.deployment_radius_m();
    let period = cfg.period_us() as f64;
    let gaps = Exp::new(1.0 / (cfg.mean_interarrival_s * 1e6)).map_err(|e| Error::Config(e.to_string()))?;
    (0..cfg.n_devices)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u64::from(id) + 1);
            let distance_m = (radius * rng.random::<f64>().sqrt()).max(1.0);
            let mean_rssi_dbm = f64::from(cfg.device_tx_dbm) - cfg.path_loss.mean_loss_db(distance_m)?;
            let mut arrivals_us = Vec::new();
            let mut t = gaps.sample(&mut rng);
            while t < period {
                arrivals_us.push(t as u64);
                t += gaps.sample(&mut rng);
            }
            let link_sf = min_spreading_factor(mean_rssi_dbm - cfg.link_margin_db, &cfg.budget, cfg.bandwidth_hz)
                .or_else(|_| min_spreading_factor(mean_rssi_dbm, &cfg.budget, cfg.bandwidth_hz))
                .ok();
            Ok(DeviceSite {
                distance_m,
                mean_rssi_dbm,
                arrivals_us,
                link_sf,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
struct OnAir {
    device: u32,
    kind: TraceKind,
    power_dbm: i32,
}

pub(crate) struct World {
    pub cfg: ScenarioConfig,
    pub rng: ChaCha8Rng,
    pub sites: Vec<DeviceSite>,
    pub devices: Vec<DeviceMetrics>,
    pub duty: DutyCycle,
    pub medium: Medium,
    pub trace: Option<Trace>,
    pub counters: Counters,
    pub last_activity_us: u64,
    /// Data airtime summed from `airtime_from_us` on.
    pub data_airtime_us: u64,
    pub airtime_from_us: u64,
    next_id: u64,
    on_air: HashMap<u64, OnAir>,
}

impl World {
    pub fn new(cfg: &ScenarioConfig, traced: bool) -> Result<Self> {
        cfg.validate()?;
        let sites = deploy(cfg)?;
        let devices = sites
            .iter()
            .enumerate()
            .map(|(id, s)| DeviceMetrics {
                id: id as u32,
                distance_m: s.distance_m,
                buffer_bytes: s.buffer_bytes(cfg),
                ..DeviceMetrics::default()
            })
            .collect();
        let mut duty: Vec<(u8, f64)> = UPLINK_CHANNELS.iter().map(|&c| (c, cfg.uplink_duty_cycle)).collect();
        duty.push((DOWNLINK_CHANNEL, cfg.downlink_duty_cycle));
        let mut counters = Counters::default();
        counters.out_of_range = sites.iter().filter(|s| s.link_sf.is_none()).count() as u64;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg: cfg.clone(),
            sites,
            devices,
            duty: DutyCycle::new(duty),
            medium: Medium::new(cfg.concurrent_receptions),
            trace: traced.then(Trace::default),
            counters,
            last_activity_us: 0,
            data_airtime_us: 0,
            airtime_from_us: 0,
            next_id: 0,
            on_air: HashMap::new(),
        })
    }

    fn record(&mut self, r: TraceRecord) {
        if let Some(t) = self.trace.as_mut() {
            t.push(r);
        }
    }

    fn touch(&mut self, t_us: u64) {
        self.last_activity_us = self.last_activity_us.max(t_us);
    }

    pub fn toa_us(&self, sf: SpreadingFactor, total_bytes: usize) -> Result<u64> {
        time_on_air_us(&self.cfg.radio(sf), total_bytes)
    }

    /// A random uplink channel `device` may use now, or the earliest instant
    /// one opens.
    pub fn pick_channel(&mut self, device: u32, now_us: u64) -> std::result::Result<u8, u64> {
        let node = Node::Device(device);
        let open: Vec<u8> = UPLINK_CHANNELS
            .iter()
            .copied()
            .filter(|&c| self.duty.allowed(node, c, now_us))
            .collect();
        if open.is_empty() {
            return Err(UPLINK_CHANNELS.iter().map(|&c| self.duty.free_at(node, c)).min().unwrap_or(now_us));
        }
        Ok(open[self.rng.random_range(0..open.len())])
    }

    /// Starts an uplink if the duty cycle allows; returns its id and end.
    #[allow(clippy::too_many_arguments)]
    pub fn uplink(
        &mut self,
        now_us: u64,
        device: u32,
        channel: u8,
        sf: SpreadingFactor,
        power_dbm: i32,
        total_bytes: usize,
        kind: TraceKind,
    ) -> Result<Option<(u64, u64)>> {
        let toa = self.toa_us(sf, total_bytes)?;
        if !self.duty.try_consume(Node::Device(device), channel, toa, now_us) {
            return Ok(None);
        }
        let site = &self.sites[device as usize];
        let rssi = sample_rssi(f64::from(power_dbm), site.distance_m, &self.cfg.path_loss, &mut self.rng)?;
        let id = self.next_id;
        self.next_id += 1;
        let end = now_us + toa;
        self.medium.begin(TransmissionEvent {
            id,
            sender: device,
            channel,
            sf,
            tx_power_dbm: f64::from(power_dbm),
            start_us: now_us,
            end_us: end,
            payload_bytes: total_bytes as u16,
            rssi_dbm: rssi,
        });
        self.on_air.insert(id, OnAir { device, kind, power_dbm });
        let m = &mut self.devices[device as usize];
        m.tx_us += toa;
        m.energy_j += toa as f64 / 1e6 * self.cfg.energy.tx_draw_w(power_dbm);
        match kind {
            TraceKind::Data => {
                self.counters.transmissions += 1;
                m.sf = sf.get();
                if now_us >= self.airtime_from_us {
                    self.data_airtime_us += toa;
                }
            }
            TraceKind::JoinRequest => self.counters.join_requests += 1,
            _ => {}
        }
        self.touch(end);
        Ok(Some((id, end)))
    }

    /// Ends an uplink started by [`World::uplink`] and decides its fate.
    pub fn finish_uplink(&mut self, id: u64) -> Result<(TransmissionEvent, Outcome)> {
        let air = self
            .on_air
            .remove(&id)
            .ok_or_else(|| Error::Protocol(format!("uplink {id} is not on air")))?;
        let params = self.cfg.radio(self.medium_params(id)?);
        let (event, outcome) = self
            .medium
            .end(id, &params, &self.cfg.budget, &mut self.rng)
            .ok_or_else(|| Error::Protocol(format!("uplink {id} unknown to the medium")))?;
        if air.kind == TraceKind::Data {
            match outcome {
                Outcome::Received => self.counters.received += 1,
                Outcome::Collided => self.counters.collisions += 1,
                Outcome::Lost => self.counters.lost += 1,
                Outcome::Rejected => self.counters.rejected += 1,
            }
        } else if air.kind == TraceKind::JoinRequest && outcome == Outcome::Received {
            self.counters.join_received += 1;
        }
        self.record(TraceRecord {
            start_us: event.start_us,
            end_us: event.end_us,
            node: Node::Device(air.device),
            kind: air.kind,
            sf: event.sf.get(),
            channel: event.channel,
            power_dbm: air.power_dbm,
            bytes: event.payload_bytes,
            outcome: outcome.token().into(),
        });
        Ok((event, outcome))
    }

    fn medium_params(&self, id: u64) -> Result<SpreadingFactor> {
        self.medium
            .sf_of(id)
            .ok_or_else(|| Error::Protocol(format!("uplink {id} unknown to the medium")))
    }

    /// A gateway transmission of `airtime_us`, if its duty cycle allows.
    pub fn gateway_send(
        &mut self,
        now_us: u64,
        channel: u8,
        sf: SpreadingFactor,
        airtime_us: u64,
        bytes: usize,
        kind: TraceKind,
    ) -> bool {
        if !self.duty.try_consume(Node::Gateway, channel, airtime_us, now_us) {
            return false;
        }
        self.record(TraceRecord {
            start_us: now_us,
            end_us: now_us + airtime_us,
            node: Node::Gateway,
            kind,
            sf: sf.get(),
            channel,
            power_dbm: self.cfg.gateway_tx_dbm,
            bytes: bytes.min(usize::from(u16::MAX)) as u16,
            outcome: "sent".into(),
        });
        self.touch(now_us + airtime_us);
        true
    }

    /// Whether `device` decodes a downlink of `total_bytes` at `sf`.
    pub fn device_decodes(&mut self, device: u32, sf: SpreadingFactor, total_bytes: usize) -> Result<bool> {
        let d = self.sites[device as usize].distance_m;
        let rssi = sample_rssi(f64::from(self.cfg.gateway_tx_dbm), d, &self.cfg.path_loss, &mut self.rng)?;
        Ok(decode_draw(rssi, &self.cfg.radio(sf), total_bytes, &self.cfg.budget, &mut self.rng))
    }

    /// Charges the device receiver for `duration_us` from `start_us`.
    pub fn listen(&mut self, device: u32, start_us: u64, duration_us: u64, channel: u8, sf: SpreadingFactor, heard: bool) {
        if duration_us == 0 {
            return;
        }
        let m = &mut self.devices[device as usize];
        m.rx_us += duration_us;
        m.energy_j += duration_us as f64 / 1e6 * self.cfg.energy.rx_draw_w();
        self.record(TraceRecord {
            start_us,
            end_us: start_us + duration_us,
            node: Node::Device(device),
            kind: TraceKind::Listen,
            sf: sf.get(),
            channel,
            power_dbm: 0,
            bytes: 0,
            outcome: if heard { "heard" } else { "empty" }.into(),
        });
        self.touch(start_us + duration_us);
    }

    /// Receiver time to detect that a window at `sf` is empty.
    pub fn empty_window_us(&self, sf: SpreadingFactor) -> u64 {
        (preamble_ms(&self.cfg.radio(sf)) * 1000.0).round() as u64
    }

    /// Assembles the report. `delivered`, `dropped` and `unsent` are bytes
    /// per device; `collection_start_us` marks where air-time efficiency
    /// starts counting, `None` for unscheduled schemes.
    pub fn report(
        mut self,
        delivered: &[u64],
        dropped: &[u64],
        collection_start_us: Option<u64>,
        trace: &mut Option<Trace>,
    ) -> Result<MetricsReport> {
        let cfg = &self.cfg;
        let mut sf_histogram = [0u32; 6];
        for (i, m) in self.devices.iter_mut().enumerate() {
            m.delivered_bytes = delivered[i].min(m.buffer_bytes);
            m.dropped_bytes = dropped[i].min(m.buffer_bytes - m.delivered_bytes);
            m.unsent_bytes = m.buffer_bytes - m.delivered_bytes - m.dropped_bytes;
            if let Ok(sf) = SpreadingFactor::new(m.sf) {
                sf_histogram[sf.index()] += 1;
            }
        }
        let total_bytes: u64 = self.devices.iter().map(|m| m.buffer_bytes).sum();
        let delivered_bytes: u64 = self.devices.iter().map(|m| m.delivered_bytes).sum();
        let energy_j: f64 = self.devices.iter().map(|m| m.energy_j).sum();
        let period_s = cfg.period_us() as f64 / 1e6;
        let airtime_efficiency = collection_start_us.and_then(|c| {
            let span = self.last_activity_us.saturating_sub(c);
            (span > 0).then(|| self.data_airtime_us as f64 / 8.0 / span as f64)
        });
        *trace = self.trace.take();
        Ok(MetricsReport {
            scheme: cfg.scheme.token().into(),
            traffic: cfg.traffic.token().into(),
            n_devices: cfg.n_devices,
            seed: cfg.seed,
            period_h: cfg.period_h,
            ddr: if total_bytes == 0 { 1.0 } else { delivered_bytes as f64 / total_bytes as f64 },
            delivered_bytes,
            total_bytes,
            energy_j,
            lifetime_years: lifetime_estimate(energy_j, cfg.n_devices, period_s, &cfg.energy)?,
            collection_s: self.last_activity_us as f64 / 1e6,
            airtime_efficiency,
            join_tx_per_device: self.counters.join_requests as f64 / f64::from(cfg.n_devices),
            sf_histogram,
            counters: self.counters,
            devices: self.devices,
        })
    }
}
