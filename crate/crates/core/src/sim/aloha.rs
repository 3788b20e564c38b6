//! Unscheduled access: legacy sends each application event as it happens,
//! delayed sends the whole buffer in long packets after a random offset.
//! Both are class A: two receive windows after every uplink.

use std::collections::{HashSet, VecDeque};

use rand::Rng;

use crate::error::Result;
use crate::protocol::packetize;
use crate::scheduler::{optimal_packet_length_at, DOWNLINK_CHANNEL};
use crate::sim::config::Scheme;
use crate::sim::medium::Outcome;
use crate::sim::metrics::MetricsReport;
use crate::sim::queue::EventQueue;
use crate::sim::trace::{Trace, TraceKind};
use crate::sim::world::World;
use crate::phy::SpreadingFactor;

#[derive(Debug)]
enum Ev {
    Arrival { dev: u32 },
    Begin { dev: u32 },
    Send { dev: u32 },
    TxEnd { dev: u32, id: u64 },
    Rx1 { dev: u32, ack: bool },
    Rx2 { dev: u32, ack: bool },
    WindowsDone { dev: u32, acked: bool },
}

#[derive(Debug, Default)]
struct Node {
    /// (packet id, payload bytes, attempts)
    queue: VecDeque<(u32, usize, u32)>,
    busy: bool,
    next_packet: u32,
    channel: u8,
}

fn uniform_us<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> u64 {
    let s = if hi > lo { rng.random_range(lo..hi) } else { lo };
    (s * 1e6).round() as u64
}

pub(crate) fn run(mut w: World) -> Result<(MetricsReport, Option<Trace>)> {
    let cfg = w.cfg.clone();
    let confirmed = cfg.traffic.confirmed();
    let header = cfg.lorawan_header_bytes;
    let ack_bytes = header + cfg.ack_payload_bytes;
    let n = cfg.n_devices as usize;
    let horizon = 2 * cfg.period_us();
    let rx1 = (cfg.rx1_delay_s * 1e6).round() as u64;
    let rx2 = (cfg.rx2_delay_s * 1e6).round() as u64;
    let power = cfg.device_tx_dbm;

    let mut nodes: Vec<Node> = (0..n).map(|_| Node::default()).collect();
    let mut gw_seen: HashSet<(u32, u32)> = HashSet::new();
    let mut gw_bytes = vec![0u64; n];
    let mut sent_bytes = vec![0u64; n];
    let mut acked_bytes = vec![0u64; n];
    let mut dropped_bytes = vec![0u64; n];
    let mut q = EventQueue::new();

    for dev in 0..n as u32 {
        if w.sites[dev as usize].link_sf.is_none() {
            continue;
        }
        match cfg.scheme {
            Scheme::Delayed => {
                let t = uniform_us(&mut w.rng, (0.0, cfg.delayed_start_max_s));
                q.push(t, 1, Ev::Begin { dev });
            }
            _ => {
                for &t in &w.sites[dev as usize].arrivals_us {
                    q.push(t, 1, Ev::Arrival { dev });
                }
            }
        }
    }

    let sf_of = |w: &World, dev: u32| -> SpreadingFactor { w.sites[dev as usize].link_sf.expect("in range") };

    while let Some((now, ev)) = q.pop() {
        if now > horizon {
            break;
        }
        match ev {
            Ev::Arrival { dev } => {
                let node = &mut nodes[dev as usize];
                node.queue.push_back((node.next_packet, cfg.bytes_per_event as usize, 0));
                node.next_packet += 1;
                if !node.busy {
                    node.busy = true;
                    q.push(now, 1, Ev::Send { dev });
                }
            }
            Ev::Begin { dev } => {
                let sf = sf_of(&w, dev);
                let buffer = w.devices[dev as usize].buffer_bytes as u32;
                if buffer == 0 {
                    continue;
                }
                let snr = cfg.budget.snr_limit(sf);
                let len = optimal_packet_length_at(buffer, sf, snr, header, &cfg.scheduler())?;
                let node = &mut nodes[dev as usize];
                node.queue = packetize(buffer as usize, len - header)
                    .into_iter()
                    .map(|p| (p.id, p.payload_bytes, 0))
                    .collect();
                node.next_packet = node.queue.len() as u32;
                node.busy = true;
                q.push(now, 1, Ev::Send { dev });
            }
            Ev::Send { dev } => {
                let Some(&(_, payload, _)) = nodes[dev as usize].queue.front() else {
                    nodes[dev as usize].busy = false;
                    continue;
                };
                let ch = match w.pick_channel(dev, now) {
                    Ok(ch) => ch,
                    Err(t) => {
                        q.push(t, 1, Ev::Send { dev });
                        continue;
                    }
                };
                let sf = sf_of(&w, dev);
                let (id, end) = w
                    .uplink(now, dev, ch, sf, power, payload + header, TraceKind::Data)?
                    .expect("channel was open");
                let node = &mut nodes[dev as usize];
                node.channel = ch;
                node.queue.front_mut().expect("non-empty").2 += 1;
                q.push(end, 0, Ev::TxEnd { dev, id });
            }
            Ev::TxEnd { dev, id } => {
                let (_, outcome) = w.finish_uplink(id)?;
                let &(pid, payload, attempts) = nodes[dev as usize].queue.front().expect("in flight");
                if attempts == 1 {
                    sent_bytes[dev as usize] += payload as u64;
                }
                let received = outcome == Outcome::Received;
                if received {
                    if gw_seen.insert((dev, pid)) {
                        gw_bytes[dev as usize] += payload as u64;
                    } else {
                        w.counters.duplicates += 1;
                    }
                }
                q.push(now + rx1, 1, Ev::Rx1 { dev, ack: confirmed && received });
            }
            Ev::Rx1 { dev, ack } => {
                let sf = sf_of(&w, dev);
                let ch = nodes[dev as usize].channel;
                let toa = w.toa_us(sf, ack_bytes)?;
                if ack && w.gateway_send(now, ch, sf, toa, ack_bytes, TraceKind::Ack) {
                    let heard = w.device_decodes(dev, sf, ack_bytes)?;
                    w.listen(dev, now, toa, ch, sf, heard);
                    if heard {
                        q.push(now + toa, 1, Ev::WindowsDone { dev, acked: true });
                    } else {
                        w.counters.ack_lost += 1;
                        q.push(now - rx1 + rx2, 1, Ev::Rx2 { dev, ack: false });
                    }
                } else {
                    let empty = w.empty_window_us(sf);
                    w.listen(dev, now, empty, ch, sf, false);
                    q.push(now - rx1 + rx2, 1, Ev::Rx2 { dev, ack });
                }
            }
            Ev::Rx2 { dev, ack } => {
                let sf = cfg.rx2_sf;
                let toa = w.toa_us(sf, ack_bytes)?;
                if ack && w.gateway_send(now, DOWNLINK_CHANNEL, sf, toa, ack_bytes, TraceKind::Ack) {
                    let heard = w.device_decodes(dev, sf, ack_bytes)?;
                    w.listen(dev, now, toa, DOWNLINK_CHANNEL, sf, heard);
                    if !heard {
                        w.counters.ack_lost += 1;
                    }
                    q.push(now + toa, 1, Ev::WindowsDone { dev, acked: heard });
                } else {
                    if ack {
                        w.counters.no_ack += 1;
                    }
                    let empty = w.empty_window_us(sf);
                    w.listen(dev, now, empty, DOWNLINK_CHANNEL, sf, false);
                    q.push(now + empty, 1, Ev::WindowsDone { dev, acked: false });
                }
            }
            Ev::WindowsDone { dev, acked } => {
                let node = &mut nodes[dev as usize];
                let &(_, payload, attempts) = node.queue.front().expect("in flight");
                if !confirmed {
                    node.queue.pop_front();
                    q.push(now, 1, Ev::Send { dev });
                } else if acked {
                    acked_bytes[dev as usize] += payload as u64;
                    node.queue.pop_front();
                    q.push(now, 1, Ev::Send { dev });
                } else if attempts >= cfg.max_attempts {
                    dropped_bytes[dev as usize] += payload as u64;
                    w.counters.dropped_packets += 1;
                    node.queue.pop_front();
                    q.push(now, 1, Ev::Send { dev });
                } else {
                    let backoff = uniform_us(&mut w.rng, cfg.legacy_retry_s);
                    q.push(now + backoff, 1, Ev::Send { dev });
                }
            }
        }
    }

    let (delivered, dropped): (Vec<u64>, Vec<u64>) = if confirmed {
        (acked_bytes, dropped_bytes)
    } else {
        let lost = sent_bytes.iter().zip(&gw_bytes).map(|(s, g)| s - g).collect();
        (gw_bytes, lost)
    };
    let mut trace = None;
    let report = w.report(&delivered, &dropped, None, &mut trace)?;
    Ok((report, trace))
}
