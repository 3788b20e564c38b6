use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::EnergyProfile;

/// Lifetimes are reported up to this many years.
pub const LIFETIME_CAP_YEARS: f64 = 50.0;

const SECONDS_PER_YEAR: f64 = 365.25 * 24.0 * 3600.0;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Data uplink attempts, retransmissions included.
    pub transmissions: u64,
    pub received: u64,
    pub duplicates: u64,
    pub collisions: u64,
    pub lost: u64,
    pub rejected: u64,
    /// Received uplinks the gateway could not acknowledge for duty cycle.
    pub no_ack: u64,
    /// Acknowledgements sent but not decoded by the device.
    pub ack_lost: u64,
    pub dropped_packets: u64,
    /// Scheduled slots skipped because the device was still silenced.
    pub duty_deferred: u64,
    pub join_requests: u64,
    pub join_received: u64,
    pub join_accepts: u64,
    pub join_suppressed: u64,
    pub join_rejected: u64,
    pub unjoined: u64,
    /// Joined devices that never decoded the schedule.
    pub unsynced: u64,
    /// Devices that stopped because their clock may have left the guard.
    pub desynced: u64,
    pub schedule_broadcasts: u64,
    pub out_of_range: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub id: u32,
    /// Spreading factor used for data, 0 when the device never sent any.
    pub sf: u8,
    pub distance_m: f64,
    pub buffer_bytes: u64,
    pub delivered_bytes: u64,
    pub dropped_bytes: u64,
    pub unsent_bytes: u64,
    pub tx_us: u64,
    pub rx_us: u64,
    pub energy_j: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scheme: String,
    pub traffic: String,
    pub n_devices: u32,
    pub seed: u64,
    pub period_h: f64,
    pub ddr: f64,
    pub delivered_bytes: u64,
    pub total_bytes: u64,
    /// All devices, one collection period.
    pub energy_j: f64,
    pub lifetime_years: f64,
    /// From the start of the period to the last radio activity.
    pub collection_s: f64,
    pub airtime_efficiency: Option<f64>,
    pub join_tx_per_device: f64,
    pub sf_histogram: [u32; 6],
    pub counters: Counters,
    pub devices: Vec<DeviceMetrics>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Years a battery lasts at a constant draw; infinite at zero draw.
pub fn lifetime_years_from_power(avg_power_w: f64, profile: &EnergyProfile) -> f64 {
    if avg_power_w <= 0.0 {
        return f64::INFINITY;
    }
    profile.battery_joules() / avg_power_w / SECONDS_PER_YEAR
}

/// Mean per-device lifetime when each period costs `energy_j` over
/// `n_devices`, capped at [`LIFETIME_CAP_YEARS`].
pub fn lifetime_estimate(energy_j: f64, n_devices: u32, span_s: f64, profile: &EnergyProfile) -> Result<f64> {
    if !(span_s > 0.0) || n_devices == 0 {
        return Err(Error::ZeroSpan);
    }
    let avg = energy_j / f64::from(n_devices) / span_s;
    Ok(lifetime_years_from_power(avg, profile).min(LIFETIME_CAP_YEARS))
}

pub fn air_time_efficiency(report: &MetricsReport) -> Result<f64> {
    report.airtime_efficiency.ok_or(Error::NotScheduled)
}
