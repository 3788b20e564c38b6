//! LoRa link-layer models: airtime, bit and packet error rates, receiver
//! sensitivity, log-distance path loss, inter-SF interference and transmit
//! energy.
//!
//! Everything here is a pure function of its arguments. Randomness only
//! enters through an explicitly passed generator in [`sample_rssi`].

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal noise power spectral density at room temperature, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// Longest LoRa PHY payload.
pub const MAX_PACKET_BYTES: usize = 255;

/// Symbol duration above which low data rate optimisation is switched on.
const LDRO_SYMBOL_MS: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SpreadingFactor(u8);

impl SpreadingFactor {
    pub const SF7: Self = Self(7);
    pub const SF8: Self = Self(8);
    pub const SF9: Self = Self(9);
    pub const SF10: Self = Self(10);
    pub const SF11: Self = Self(11);
    pub const SF12: Self = Self(12);

    pub const ALL: [Self; 6] = [
        Self::SF7,
        Self::SF8,
        Self::SF9,
        Self::SF10,
        Self::SF11,
        Self::SF12,
    ];

    pub fn new(sf: u8) -> Result<Self> {
        if (7..=12).contains(&sf) {
            Ok(Self(sf))
        } else {
            Err(Error::InvalidSpreadingFactor(sf))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Position in [`SpreadingFactor::ALL`], SF7 first.
    pub fn index(self) -> usize {
        usize::from(self.0 - 7)
    }

    pub fn from_index(index: usize) -> Result<Self> {
        u8::try_from(index + 7)
            .map_err(|_| Error::InvalidSpreadingFactor(u8::MAX))
            .and_then(Self::new)
    }

    /// Chips per symbol, 2^sf.
    pub fn chips(self) -> u32 {
        1 << self.0
    }
}

impl TryFrom<u8> for SpreadingFactor {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<SpreadingFactor> for u8 {
    fn from(sf: SpreadingFactor) -> u8 {
        sf.0
    }
}

impl fmt::Display for SpreadingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SF{}", self.0)
    }
}

/// Forward error correction rate 4/(4+n).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodingRate {
    Cr45,
    Cr46,
    Cr47,
    Cr48,
}

impl CodingRate {
    pub fn from_denominator(den: u8) -> Result<Self> {
        match den {
            5 => Ok(Self::Cr45),
            6 => Ok(Self::Cr46),
            7 => Ok(Self::Cr47),
            8 => Ok(Self::Cr48),
            other => Err(Error::InvalidCodingRate(other)),
        }
    }

    pub fn denominator(self) -> u8 {
        4 + self.redundancy()
    }

    /// Extra parity bits per four data bits (1..=4).
    pub fn redundancy(self) -> u8 {
        match self {
            Self::Cr45 => 1,
            Self::Cr46 => 2,
            Self::Cr47 => 3,
            Self::Cr48 => 4,
        }
    }

    pub fn fraction(self) -> f64 {
        4.0 / f64::from(self.denominator())
    }
}

impl fmt::Display for CodingRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "4/{}", self.denominator())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub sf: SpreadingFactor,
    pub bandwidth_hz: u32,
    pub coding_rate: CodingRate,
    pub preamble_symbols: u16,
    pub explicit_header: bool,
    pub crc_on: bool,
    pub low_data_rate_optimize: bool,
}

impl RadioParams {
    /// Radio settings with an 8-symbol preamble, explicit header, CRC on and
    /// low data rate optimisation derived from the symbol duration.
    pub fn new(sf: SpreadingFactor, bandwidth_hz: u32, coding_rate: CodingRate) -> Self {
        let mut params = Self {
            sf,
            bandwidth_hz,
            coding_rate,
            preamble_symbols: 8,
            explicit_header: true,
            crc_on: true,
            low_data_rate_optimize: false,
        };
        params.low_data_rate_optimize = params.symbol_ms() > LDRO_SYMBOL_MS;
        params
    }

    pub fn with_sf(&self, sf: SpreadingFactor) -> Self {
        Self::new(sf, self.bandwidth_hz, self.coding_rate)
    }

    pub fn symbol_ms(&self) -> f64 {
        f64::from(self.sf.chips()) * 1000.0 / f64::from(self.bandwidth_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_hz == 0 {
            return Err(Error::InvalidParams("bandwidth must be positive".into()));
        }
        if self.preamble_symbols == 0 {
            return Err(Error::InvalidParams("preamble must have at least one symbol".into()));
        }
        if self.low_data_rate_optimize != (self.symbol_ms() > LDRO_SYMBOL_MS) {
            return Err(Error::InvalidParams(format!(
                "low data rate optimisation must be {} for {} at {} Hz",
                !self.low_data_rate_optimize, self.sf, self.bandwidth_hz
            )));
        }
        Ok(())
    }
}

/// Airtime of a packet carrying `total_packet_bytes` of PHY payload, in ms.
pub fn time_on_air(params: &RadioParams, total_packet_bytes: usize) -> Result<f64> {
    params.validate()?;
    if total_packet_bytes == 0 || total_packet_bytes > MAX_PACKET_BYTES {
        return Err(Error::InvalidPacketLength(total_packet_bytes));
    }
    let t_sym = params.symbol_ms();
    let sf = i64::from(params.sf.get());
    let payload_bits = 8 * total_packet_bytes as i64 - 4 * sf
        + 28
        + if params.crc_on { 16 } else { 0 }
        - if params.explicit_header { 0 } else { 20 };
    let bits_per_block = 4 * (sf - if params.low_data_rate_optimize { 2 } else { 0 });
    let blocks = if payload_bits > 0 {
        (payload_bits + bits_per_block - 1) / bits_per_block
    } else {
        0
    };
    let payload_symbols = 8 + blocks * i64::from(params.coding_rate.redundancy() + 4);
    let preamble_ms = (f64::from(params.preamble_symbols) + 4.25) * t_sym;
    Ok(preamble_ms + payload_symbols as f64 * t_sym)
}

/// [`time_on_air`] rounded to whole microseconds.
pub fn time_on_air_us(params: &RadioParams, total_packet_bytes: usize) -> Result<u64> {
    time_on_air(params, total_packet_bytes).map(|ms| (ms * 1000.0).round() as u64)
}

/// Preamble duration, which is also how long a receiver listens before
/// giving up on an empty receive window.
pub fn preamble_ms(params: &RadioParams) -> f64 {
    (f64::from(params.preamble_symbols) + 4.25) * params.symbol_ms()
}

/// Converts an SNR into Eb/N0, both in dB.
///
/// The two bandwidth terms cancel, leaving the processing gain of the chip
/// rate, the spreading factor and the coding rate.
pub fn snr_to_ebn0(snr_db: f64, params: &RadioParams) -> f64 {
    let b = f64::from(params.bandwidth_hz);
    let f = f64::from(params.sf.get());
    let c = params.coding_rate.fraction();
    snr_db - 10.0 * (b / f64::from(params.sf.chips())).log10() - 10.0 * f.log10()
        - 10.0 * c.log10()
        + 10.0 * b.log10()
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Bit error rate of the LoRa modulation.
///
/// The Q-function argument is `log12(sf) / sqrt(2)` times Eb/N0 expressed in
/// dB.
pub fn bit_error_rate(ebn0_db: f64, sf: SpreadingFactor) -> f64 {
    let log12 = f64::from(sf.get()).ln() / 12f64.ln();
    let arg = log12 / std::f64::consts::SQRT_2 * ebn0_db;
    q_function(arg).clamp(0.0, 1.0)
}

pub fn packet_error_rate(ber: f64, total_packet_bytes: usize) -> f64 {
    let bits = 8.0 * total_packet_bytes as f64;
    // 1 - (1-p)^n without cancellation for tiny p.
    let per = -f64::exp_m1(bits * f64::ln_1p(-ber));
    per.clamp(0.0, 1.0)
}

/// Mean number of retransmissions of a packet lost with probability `per`.
pub fn expected_retransmissions(per: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&per) {
        return Err(Error::DivergentRetransmissions(per));
    }
    Ok(per / (1.0 - per))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Demodulation SNR floor, SF7 first.
    pub snr_limit_db: [f64; 6],
    pub noise_figure_db: f64,
    /// Required signal-to-interference ratio, `[victim][interferer]`, SF7 first.
    pub interference_threshold_db: [[f64; 6]; 6],
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            snr_limit_db: [-6.0, -9.0, -12.0, -15.0, -17.5, -20.0],
            noise_figure_db: 6.0,
            interference_threshold_db: [
                [1.0, -8.0, -9.0, -9.0, -9.0, -9.0],
                [-11.0, 1.0, -11.0, -12.0, -13.0, -13.0],
                [-15.0, -13.0, 1.0, -13.0, -14.0, -15.0],
                [-19.0, -18.0, -17.0, 1.0, -17.0, -18.0],
                [-22.0, -22.0, -21.0, -20.0, 1.0, -20.0],
                [-25.0, -25.0, -25.0, -24.0, -23.0, 1.0],
            ],
        }
    }
}

impl LinkBudget {
    pub fn snr_limit(&self, sf: SpreadingFactor) -> f64 {
        self.snr_limit_db[sf.index()]
    }

    pub fn threshold(&self, victim: SpreadingFactor, interferer: SpreadingFactor) -> f64 {
        self.interference_threshold_db[victim.index()][interferer.index()]
    }

    /// Receiver noise floor for the given bandwidth, dBm.
    pub fn noise_floor_dbm(&self, bandwidth_hz: u32) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * f64::from(bandwidth_hz).log10() + self.noise_figure_db
    }
}

pub fn receiver_sensitivity(params: &RadioParams, budget: &LinkBudget) -> f64 {
    budget.noise_floor_dbm(params.bandwidth_hz) + budget.snr_limit(params.sf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub ref_loss_db: f64,
    pub ref_distance_m: f64,
    pub exponent: f64,
    pub shadowing_sigma_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            ref_loss_db: 127.41,
            ref_distance_m: 40.0,
            exponent: 2.08,
            shadowing_sigma_db: 2.0,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0) {
            return Err(Error::InvalidParams("path loss exponent must be positive".into()));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::InvalidParams("shadowing sigma must be non-negative".into()));
        }
        if !(self.ref_distance_m > 0.0) {
            return Err(Error::InvalidParams("reference distance must be positive".into()));
        }
        Ok(())
    }

    pub fn mean_loss_db(&self, distance_m: f64) -> Result<f64> {
        if !(distance_m > 0.0) {
            return Err(Error::NonPositiveDistance(distance_m));
        }
        Ok(self.ref_loss_db + 10.0 * self.exponent * (distance_m / self.ref_distance_m).log10())
    }

    /// Distance at which the mean loss reaches `loss_db`.
    pub fn distance_for_loss(&self, loss_db: f64) -> f64 {
        self.ref_distance_m * 10f64.powf((loss_db - self.ref_loss_db) / (10.0 * self.exponent))
    }
}

/// Received power with one log-normal shadowing draw.
pub fn sample_rssi<R: Rng + ?Sized>(
    tx_dbm: f64,
    distance_m: f64,
    model: &PathLossModel,
    rng: &mut R,
) -> Result<f64> {
    let mean = tx_dbm - model.mean_loss_db(distance_m)?;
    if model.shadowing_sigma_db == 0.0 {
        return Ok(mean);
    }
    let shadow = Normal::new(0.0, model.shadowing_sigma_db)
        .map_err(|e| Error::InvalidParams(e.to_string()))?
        .sample(rng);
    Ok(mean - shadow)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    /// Supply draw while transmitting at a given output power, mW.
    pub tx_power_draw_mw: BTreeMap<i32, f64>,
    /// Used for output powers missing from `tx_power_draw_mw`.
    pub default_tx_draw_mw: f64,
    pub rx_power_draw_mw: f64,
    pub sleep_power_draw_mw: f64,
    pub battery_mah: f64,
    pub nominal_voltage_v: f64,
}

impl Default for EnergyProfile {
    fn default() -> Self {
        Self {
            tx_power_draw_mw: [(13, 132.0), (14, 132.0)].into_iter().collect(),
            default_tx_draw_mw: 132.0,
            rx_power_draw_mw: 48.0,
            sleep_power_draw_mw: 0.0,
            battery_mah: 1000.0,
            nominal_voltage_v: 3.3,
        }
    }
}

impl EnergyProfile {
    pub fn tx_draw_w(&self, tx_dbm: i32) -> f64 {
        self.tx_power_draw_mw
            .get(&tx_dbm)
            .copied()
            .unwrap_or(self.default_tx_draw_mw)
            / 1000.0
    }

    pub fn rx_draw_w(&self) -> f64 {
        self.rx_power_draw_mw / 1000.0
    }

    pub fn sleep_draw_w(&self) -> f64 {
        self.sleep_power_draw_mw / 1000.0
    }

    pub fn battery_joules(&self) -> f64 {
        self.battery_mah / 1000.0 * self.nominal_voltage_v * 3600.0
    }

    pub fn validate(&self) -> Result<()> {
        let draws = self
            .tx_power_draw_mw
            .values()
            .chain([
                &self.default_tx_draw_mw,
                &self.rx_power_draw_mw,
                &self.sleep_power_draw_mw,
            ]);
        for &draw in draws {
            if !(draw >= 0.0) {
                return Err(Error::InvalidParams(format!("negative power draw {draw} mW")));
            }
        }
        if !(self.battery_mah > 0.0 && self.nominal_voltage_v > 0.0) {
            return Err(Error::InvalidParams("battery capacity and voltage must be positive".into()));
        }
        Ok(())
    }
}

/// Energy to push `buffer_bytes` through in packets of `payload_per_packet`
/// plus `header_bytes`, including the expected retransmissions, in joules.
pub fn transmission_energy(
    buffer_bytes: usize,
    payload_per_packet: usize,
    header_bytes: usize,
    params: &RadioParams,
    per: f64,
    tx_dbm: i32,
    profile: &EnergyProfile,
) -> Result<f64> {
    if payload_per_packet == 0 {
        return Err(Error::InvalidPacketLength(header_bytes));
    }
    let retries = expected_retransmissions(per)?;
    if buffer_bytes == 0 {
        return Ok(0.0);
    }
    let packets = buffer_bytes.div_ceil(payload_per_packet);
    let toa_s = time_on_air(params, payload_per_packet + header_bytes)? / 1000.0;
    Ok((1.0 + retries) * packets as f64 * toa_s * profile.tx_draw_w(tx_dbm))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionEvent {
    pub id: u64,
    pub sender: u32,
    pub channel: u8,
    pub sf: SpreadingFactor,
    pub tx_power_dbm: f64,
    pub start_us: u64,
    pub end_us: u64,
    pub payload_bytes: u16,
    pub rssi_dbm: f64,
}

impl TransmissionEvent {
    pub fn overlaps(&self, other: &Self) -> bool {
        self.channel == other.channel && self.start_us < other.end_us && other.start_us < self.end_us
    }
}

/// Whether a signal survives one overlapping interferer on its channel.
///
/// The victim needs a signal-to-interference ratio of at least the
/// threshold for its SF against the interferer's SF. Same-SF signals need
/// the positive capture margin, so two co-SF signals closer than it are both
/// lost.
pub fn survives(
    victim_sf: SpreadingFactor,
    victim_rssi: f64,
    interferer_sf: SpreadingFactor,
    interferer_rssi: f64,
    budget: &LinkBudget,
) -> bool {
    victim_rssi - interferer_rssi >= budget.threshold(victim_sf, interferer_sf)
}

/// Events that survive mutual interference. All inputs are assumed to
/// overlap pairwise on one channel; survivors keep their input order.
pub fn resolve_concurrent(events: &[TransmissionEvent], budget: &LinkBudget) -> Vec<TransmissionEvent> {
    events
        .iter()
        .enumerate()
        .filter(|(i, victim)| {
            events.iter().enumerate().all(|(j, other)| {
                *i == j || survives(victim.sf, victim.rssi_dbm, other.sf, other.rssi_dbm, budget)
            })
        })
        .map(|(_, e)| e.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(sf: u8, bw: u32) -> RadioParams {
        RadioParams::new(SpreadingFactor::new(sf).unwrap(), bw, CodingRate::Cr45)
    }

    fn event(id: u64, sf: u8, rssi: f64) -> TransmissionEvent {
        TransmissionEvent {
            id,
            sender: id as u32,
            channel: 1,
            sf: SpreadingFactor::new(sf).unwrap(),
            tx_power_dbm: 14.0,
            start_us: 0,
            end_us: 1000,
            payload_bytes: 20,
            rssi_dbm: rssi,
        }
    }

    #[test]
    fn toa_reference_points() {
        assert!((time_on_air(&params(7, 125_000), 20).unwrap() - 56.576).abs() < 1e-9);
        assert!((time_on_air(&params(7, 500_000), 20).unwrap() - 14.144).abs() < 1e-9);
    }

    #[test]
    fn toa_rejects_bad_lengths() {
        let p = params(7, 125_000);
        assert_eq!(time_on_air(&p, 0), Err(Error::InvalidPacketLength(0)));
        assert_eq!(time_on_air(&p, 256), Err(Error::InvalidPacketLength(256)));
    }

    #[test]
    fn ldro_follows_symbol_time() {
        assert!(params(11, 125_000).low_data_rate_optimize);
        assert!(params(12, 125_000).low_data_rate_optimize);
        assert!(!params(10, 125_000).low_data_rate_optimize);
        assert!(SpreadingFactor::ALL.iter().all(|&sf| !params(sf.get(), 500_000).low_data_rate_optimize));
        let mut p = params(12, 125_000);
        p.low_data_rate_optimize = false;
        assert!(time_on_air(&p, 10).is_err());
    }

    #[test]
    fn invalid_sf_rejected() {
        assert_eq!(SpreadingFactor::new(6), Err(Error::InvalidSpreadingFactor(6)));
        assert_eq!(SpreadingFactor::new(13), Err(Error::InvalidSpreadingFactor(13)));
        assert!(CodingRate::from_denominator(9).is_err());
    }

    #[test]
    fn ebn0_at_sf7_limit() {
        let v = snr_to_ebn0(-6.0, &params(7, 125_000));
        assert!((v - 7.59).abs() < 0.01, "{v}");
        // bandwidth cancels
        let w = snr_to_ebn0(-6.0, &params(7, 500_000));
        assert!((v - w).abs() < 1e-9);
    }

    #[test]
    fn ber_limits() {
        assert_eq!(bit_error_rate(f64::INFINITY, SpreadingFactor::SF7), 0.0);
        assert!((bit_error_rate(0.0, SpreadingFactor::SF7) - 0.5).abs() < 1e-15);
        assert!(bit_error_rate(-1e9, SpreadingFactor::SF7) <= 1.0);
    }

    #[test]
    fn per_edges() {
        assert_eq!(packet_error_rate(0.0, 100), 0.0);
        assert_eq!(packet_error_rate(1.0, 1), 1.0);
        let p = packet_error_rate(1e-4, 255);
        assert!((p - 0.18452).abs() < 1e-4, "{p}");
    }

    #[test]
    fn retransmissions() {
        assert_eq!(expected_retransmissions(0.0).unwrap(), 0.0);
        assert!((expected_retransmissions(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((expected_retransmissions(0.9).unwrap() - 9.0).abs() < 1e-12);
        assert!(matches!(expected_retransmissions(1.0), Err(Error::DivergentRetransmissions(_))));
    }

    #[test]
    fn sensitivities() {
        let b = LinkBudget::default();
        let s7 = receiver_sensitivity(&params(7, 125_000), &b);
        let s12 = receiver_sensitivity(&params(12, 125_000), &b);
        let s7w = receiver_sensitivity(&params(7, 500_000), &b);
        assert!((s7 + 123.03).abs() < 0.01);
        assert!((s12 + 137.03).abs() < 0.01);
        assert!((s7w + 117.01).abs() < 0.01);
    }

    #[test]
    fn energy_cases() {
        let p = params(7, 500_000);
        let prof = EnergyProfile::default();
        assert_eq!(transmission_energy(0, 247, 8, &p, 0.0, 14, &prof).unwrap(), 0.0);
        let e0 = transmission_energy(5760, 247, 8, &p, 0.0, 14, &prof).unwrap();
        let t = time_on_air(&p, 255).unwrap() / 1000.0;
        assert!((e0 - 24.0 * t * 0.132).abs() < 1e-12);
        let e5 = transmission_energy(5760, 247, 8, &p, 0.5, 14, &prof).unwrap();
        assert!((e5 - 2.0 * e0).abs() < 1e-12);
        assert!(transmission_energy(5760, 247, 8, &p, 1.0, 14, &prof).is_err());
    }

    #[test]
    fn rssi_without_shadowing() {
        let mut m = PathLossModel::default();
        m.shadowing_sigma_db = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample_rssi(14.0, 40.0, &m, &mut rng).unwrap();
        assert!((a + 113.41).abs() < 1e-9);
        let b = sample_rssi(14.0, 400.0, &m, &mut rng).unwrap();
        assert!((b + 134.21).abs() < 1e-9);
        assert_eq!(sample_rssi(14.0, 400.0, &m, &mut rng).unwrap(), b);
        assert!(sample_rssi(14.0, 0.0, &m, &mut rng).is_err());
        assert!((m.distance_for_loss(m.mean_loss_db(123.0).unwrap()) - 123.0).abs() < 1e-9);
    }

    #[test]
    fn single_event_survives() {
        let b = LinkBudget::default();
        let out = resolve_concurrent(&[event(1, 9, -120.0)], &b);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn inter_sf_pair_uses_sir_threshold() {
        // SF7 at -100 vs SF12 at -110: SF7 needs SIR >= -9 (has +10), SF12
        // needs SIR >= -25 (has -10). Both decode.
        let b = LinkBudget::default();
        let out = resolve_concurrent(&[event(1, 7, -100.0), event(2, 12, -110.0)], &b);
        assert_eq!(out.len(), 2);
        // SF12 buried 26 dB under SF7 is lost.
        let out = resolve_concurrent(&[event(1, 7, -100.0), event(2, 12, -126.0)], &b);
        assert_eq!(out.iter().map(|e| e.id).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn co_sf_truth_table() {
        let b = LinkBudget::default();
        let ids = |a: f64, c: f64| {
            resolve_concurrent(&[event(1, 7, a), event(2, 7, c)], &b)
                .iter()
                .map(|e| e.id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(-100.0, -100.0), Vec::<u64>::new());
        assert_eq!(ids(-100.0, -100.5), Vec::<u64>::new());
        assert_eq!(ids(-100.0, -101.0), vec![1]);
        assert_eq!(ids(-103.0, -100.0), vec![2]);
    }
}
