//! What the gateway hears: demodulator admission, interference between
//! overlapping uplinks on a channel, and per-packet decoding.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::phy::{
    bit_error_rate, packet_error_rate, receiver_sensitivity, resolve_concurrent, snr_to_ebn0,
    survives, LinkBudget, RadioParams, SpreadingFactor, TransmissionEvent,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Received,
    /// Destroyed by an overlapping transmission.
    Collided,
    /// Below sensitivity or corrupted by noise.
    Lost,
    /// No free demodulator when it arrived.
    Rejected,
}

impl Outcome {
    pub fn token(self) -> &'static str {
        match self {
            Self::Received => "ok",
            Self::Collided => "collided",
            Self::Lost => "lost",
            Self::Rejected => "rejected",
        }
    }
}

/// Whether a packet at `rssi_dbm` clears sensitivity and survives a noise
/// draw.
pub fn decode_draw<R: Rng + ?Sized>(
    rssi_dbm: f64,
    params: &RadioParams,
    total_bytes: usize,
    budget: &LinkBudget,
    rng: &mut R,
) -> bool {
    if rssi_dbm < receiver_sensitivity(params, budget) {
        return false;
    }
    let snr = rssi_dbm - budget.noise_floor_dbm(params.bandwidth_hz);
    let per = packet_error_rate(bit_error_rate(snr_to_ebn0(snr, params), params.sf), total_bytes);
    rng.random::<f64>() >= per
}

/// Admission then interference for a set of pairwise overlapping arrivals:
/// the earliest `capacity` arrivals take the demodulators and the rest are
/// rejected, then each channel is resolved separately.
pub fn gateway_admit(
    arrivals: &[TransmissionEvent],
    capacity: usize,
    budget: &LinkBudget,
) -> Vec<TransmissionEvent> {
    let mut order: Vec<&TransmissionEvent> = arrivals.iter().collect();
    order.sort_by_key(|e| (e.start_us, e.id));
    let admitted: Vec<&TransmissionEvent> = order.iter().copied().take(capacity).collect();
    let mut channels: BTreeMap<u8, Vec<TransmissionEvent>> = BTreeMap::new();
    for e in arrivals {
        channels.entry(e.channel).or_default().push(e.clone());
    }
    let mut out = Vec::new();
    for group in channels.values() {
        for e in resolve_concurrent(group, budget) {
            if admitted.iter().any(|a| a.id == e.id) {
                out.push(e);
            }
        }
    }
    out.sort_by_key(|e| (e.start_us, e.id));
    out
}

#[derive(Clone, Debug)]
struct Reception {
    event: TransmissionEvent,
    admitted: bool,
    interferers: Vec<(SpreadingFactor, f64)>,
}

/// Uplinks currently on air at the gateway.
#[derive(Clone, Debug)]
pub struct Medium {
    capacity: usize,
    active: BTreeMap<u64, Reception>,
    demodulating: usize,
}

impl Medium {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            active: BTreeMap::new(),
            demodulating: 0,
        }
    }

    /// Registers an arrival; returns whether a demodulator took it.
    pub fn begin(&mut self, event: TransmissionEvent) -> bool {
        let admitted = self.demodulating < self.capacity;
        if admitted {
            self.demodulating += 1;
        }
        let mut interferers = Vec::new();
        for other in self.active.values_mut() {
            if other.event.channel == event.channel {
                other.interferers.push((event.sf, event.rssi_dbm));
                interferers.push((other.event.sf, other.event.rssi_dbm));
            }
        }
        self.active.insert(
            event.id,
            Reception {
                event,
                admitted,
                interferers,
            },
        );
        admitted
    }

    /// Removes a finished uplink and decides its fate.
    pub fn end<R: Rng + ?Sized>(
        &mut self,
        id: u64,
        params: &RadioParams,
        budget: &LinkBudget,
        rng: &mut R,
    ) -> Option<(TransmissionEvent, Outcome)> {
        let r = self.active.remove(&id)?;
        if !r.admitted {
            return Some((r.event, Outcome::Rejected));
        }
        self.demodulating -= 1;
        let e = &r.event;
        let clear = r
            .interferers
            .iter()
            .all(|&(sf, rssi)| survives(e.sf, e.rssi_dbm, sf, rssi, budget));
        let outcome = if !clear {
            Outcome::Collided
        } else if decode_draw(e.rssi_dbm, params, usize::from(e.payload_bytes), budget, rng) {
            Outcome::Received
        } else {
            Outcome::Lost
        };
        Some((r.event, outcome))
    }

    pub fn sf_of(&self, id: u64) -> Option<SpreadingFactor> {
        self.active.get(&id).map(|r| r.event.sf)
    }

    pub fn on_air(&self) -> usize {
        self.active.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::CodingRate;
    use crate::scheduler::channel_power_plan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(id: u64, channel: u8, sf: u8, rssi: f64, start: u64) -> TransmissionEvent {
        TransmissionEvent {
            id,
            sender: id as u32,
            channel,
            sf: SpreadingFactor::new(sf).unwrap(),
            tx_power_dbm: 14.0,
            start_us: start,
            end_us: start + 1000,
            payload_bytes: 20,
            rssi_dbm: rssi,
        }
    }

    #[test]
    fn ninth_arrival_rejected() {
        let b = LinkBudget::default();
        let arrivals: Vec<_> = (0..9).map(|i| ev(i, 1 + (i % 3) as u8, 7, -80.0 - i as f64 * 3.0, i)).collect();
        let mut m = Medium::new(8);
        let admitted: Vec<bool> = arrivals.iter().map(|e| m.begin(e.clone())).collect();
        assert_eq!(admitted.iter().filter(|&&a| a).count(), 8);
        assert!(!admitted[8]);
        assert!(gateway_admit(&arrivals, 8, &b).iter().all(|e| e.id != 8));
    }

    #[test]
    fn plan_survives_at_equal_distance() {
        let b = LinkBudget::default();
        let mut arrivals = Vec::new();
        for sf in SpreadingFactor::ALL {
            let plan = channel_power_plan(sf);
            for &ch in &plan.channel_ids {
                let rssi = f64::from(plan.tx_power_dbm) - 120.0;
                arrivals.push(ev(arrivals.len() as u64, ch, sf.get(), rssi, 0));
            }
        }
        assert_eq!(arrivals.len(), 8);
        assert_eq!(gateway_admit(&arrivals, 8, &b).len(), 8);
    }

    #[test]
    fn empty_admission() {
        assert!(gateway_admit(&[], 8, &LinkBudget::default()).is_empty());
    }

    #[test]
    fn co_sf_overlap_collides() {
        let b = LinkBudget::default();
        let p = RadioParams::new(SpreadingFactor::SF7, 500_000, CodingRate::Cr45);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Medium::new(8);
        m.begin(ev(1, 1, 7, -90.0, 0));
        m.begin(ev(2, 1, 7, -90.5, 10));
        m.begin(ev(3, 2, 7, -90.0, 10));
        assert_eq!(m.end(1, &p, &b, &mut rng).unwrap().1, Outcome::Collided);
        assert_eq!(m.end(2, &p, &b, &mut rng).unwrap().1, Outcome::Collided);
        assert_eq!(m.end(3, &p, &b, &mut rng).unwrap().1, Outcome::Received);
        assert_eq!(m.on_air(), 0);
    }
}
