use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{
    receiver_sensitivity, CodingRate, EnergyProfile, LinkBudget, PathLossModel, RadioParams,
    SpreadingFactor,
};
use crate::scheduler::{GuardPolicy, Objective, SchedulerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Every application event is sent as soon as it is generated.
    Legacy,
    /// The whole buffer is sent after a random start offset, in long packets
    /// paced by the duty cycle.
    Delayed,
    /// Joining, synchronisation and scheduled rounds.
    Free(Objective),
}

impl Scheme {
    pub fn token(self) -> &'static str {
        match self {
            Self::Legacy => "legacy",
            Self::Delayed => "delayed",
            Self::Free(Objective::Energy) => "free_a0",
            Self::Free(Objective::CollectionTime) => "free_a1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "legacy" => Ok(Self::Legacy),
            "delayed" => Ok(Self::Delayed),
            "free" | "free_a0" => Ok(Self::Free(Objective::Energy)),
            "free_a1" => Ok(Self::Free(Objective::CollectionTime)),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Traffic {
    Unconfirmed,
    Confirmed,
}

impl Traffic {
    pub fn token(self) -> &'static str {
        match self {
            Self::Unconfirmed => "unconfirmed",
            Self::Confirmed => "confirmed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unconfirmed" => Ok(Self::Unconfirmed),
            "confirmed" => Ok(Self::Confirmed),
            other => Err(Error::Config(format!("unknown traffic `{other}`"))),
        }
    }

    pub fn confirmed(self) -> bool {
        self == Self::Confirmed
    }
}

impl fmt::Display for Traffic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub traffic: Traffic,
    pub n_devices: u32,
    pub seed: u64,
    pub period_h: f64,
    pub bytes_per_event: u32,
    pub mean_interarrival_s: f64,
    /// Disk radius; `None` places the edge where the mean link to `edge_sf`
    /// keeps `link_margin_db` of headroom.
    pub radius_m: Option<f64>,
    pub edge_sf: SpreadingFactor,
    pub bandwidth_hz: u32,
    pub coding_rate: CodingRate,
    pub device_tx_dbm: i32,
    pub gateway_tx_dbm: i32,
    /// Headroom over sensitivity used when devices pick their lowest SF.
    pub link_margin_db: f64,
    pub lorawan_header_bytes: usize,
    pub free_header_bytes: usize,
    pub ack_payload_bytes: usize,
    pub max_attempts: u32,
    pub concurrent_receptions: usize,
    pub uplink_duty_cycle: f64,
    pub downlink_duty_cycle: f64,
    pub delayed_start_max_s: f64,
    pub legacy_retry_s: (f64, f64),
    /// Length of the join stage; `None` scales with the network size.
    pub stage1_s: Option<f64>,
    pub stage2_s: f64,
    pub join_first_s: f64,
    pub join_backoff_s: (f64, f64),
    pub rx1_delay_s: f64,
    pub rx2_delay_s: f64,
    pub rx2_sf: SpreadingFactor,
    pub skew_rate: f64,
    pub sync_accuracy_ms: f64,
    pub guard_policy: GuardPolicy,
    pub energy: EnergyProfile,
    pub path_loss: PathLossModel,
    pub budget: LinkBudget,
}

impl ScenarioConfig {
    pub fn new(scheme: Scheme, traffic: Traffic, n_devices: u32, seed: u64) -> Self {
        Self {
            scheme,
            traffic,
            n_devices,
            seed,
            period_h: 24.0,
            bytes_per_event: 20,
            mean_interarrival_s: 300.0,
            radius_m: None,
            edge_sf: SpreadingFactor::SF10,
            bandwidth_hz: 500_000,
            coding_rate: CodingRate::Cr45,
            device_tx_dbm: 14,
            gateway_tx_dbm: 14,
            link_margin_db: 10.0,
            lorawan_header_bytes: 7,
            free_header_bytes: 8,
            ack_payload_bytes: 0,
            max_attempts: 8,
            concurrent_receptions: 8,
            uplink_duty_cycle: 0.01,
            downlink_duty_cycle: 0.1,
            delayed_start_max_s: 600.0,
            legacy_retry_s: (1.0, 3.0),
            stage1_s: None,
            stage2_s: 60.0,
            join_first_s: 60.0,
            join_backoff_s: (1.0, 60.0),
            rx1_delay_s: 1.0,
            rx2_delay_s: 2.0,
            rx2_sf: SpreadingFactor::SF12,
            skew_rate: 15e-6,
            sync_accuracy_ms: 0.5,
            guard_policy: GuardPolicy::CoverRound,
            energy: EnergyProfile::default(),
            path_loss: PathLossModel::default(),
            budget: LinkBudget::default(),
        }
    }

    pub fn radio(&self, sf: SpreadingFactor) -> RadioParams {
        RadioParams::new(sf, self.bandwidth_hz, self.coding_rate)
    }

    pub fn period_us(&self) -> u64 {
        (self.period_h * 3600.0 * 1e6).round() as u64
    }

    /// Mean rssi at the disk edge with the device transmit power.
    pub fn edge_rssi_dbm(&self) -> f64 {
        receiver_sensitivity(&self.radio(self.edge_sf), &self.budget) + self.link_margin_db
    }

    pub fn deployment_radius_m(&self) -> f64 {
        self.radius_m.unwrap_or_else(|| {
            self.path_loss
                .distance_for_loss(f64::from(self.device_tx_dbm) - self.edge_rssi_dbm())
        })
    }

    pub fn stage1_us(&self) -> u64 {
        let s = self
            .stage1_s
            .unwrap_or(300.0 + 3.0 * f64::from(self.n_devices));
        (s * 1e6).round() as u64
    }

    pub fn stage2_us(&self) -> u64 {
        (self.stage2_s * 1e6).round() as u64
    }

    pub fn objective(&self) -> Option<Objective> {
        match self.scheme {
            Scheme::Free(o) => Some(o),
            _ => None,
        }
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig {
            objective: self.objective().unwrap_or(Objective::Energy),
            duty_cycle: self.uplink_duty_cycle,
            header_bytes: self.free_header_bytes,
            skew_rate: self.skew_rate,
            guard_policy: self.guard_policy,
            sync_accuracy_ms: self.sync_accuracy_ms,
            link_margin_db: self.link_margin_db,
            bandwidth_hz: self.bandwidth_hz,
            coding_rate: self.coding_rate,
            budget: self.budget.clone(),
            energy: self.energy.clone(),
            ..SchedulerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_devices == 0 {
            return bad("n_devices must be positive".into());
        }
        if !(1.0..=48.0).contains(&self.period_h) {
            return bad(format!("period_h {} outside 1..=48", self.period_h));
        }
        if self.bytes_per_event == 0 || !(self.mean_interarrival_s > 0.0) {
            return bad("application traffic must be positive".into());
        }
        if let Some(r) = self.radius_m {
            if !(r > 0.0) {
                return bad(format!("radius_m {r} must be positive"));
            }
        }
        if self.max_attempts == 0 || self.concurrent_receptions == 0 {
            return bad("max_attempts and concurrent_receptions must be positive".into());
        }
        for d in [self.uplink_duty_cycle, self.downlink_duty_cycle] {
            if !(d > 0.0 && d <= 1.0) {
                return bad(format!("duty cycle {d} outside (0, 1]"));
            }
        }
        let positive = [
            ("stage2_s", self.stage2_s),
            ("join_first_s", self.join_first_s),
            ("rx1_delay_s", self.rx1_delay_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if let Some(s) = self.stage1_s {
            if !(s > 0.0) {
                return bad("stage1_s must be positive".into());
            }
        }
        if !(self.rx2_delay_s > self.rx1_delay_s) {
            return bad("rx2 must open after rx1".into());
        }
        for (name, (lo, hi)) in [("join_backoff_s", self.join_backoff_s), ("legacy_retry_s", self.legacy_retry_s)] {
            if !(lo >= 0.0 && hi >= lo) {
                return bad(format!("{name} range is empty"));
            }
        }
        if !(self.delayed_start_max_s >= 0.0) {
            return bad("delayed_start_max_s must be non-negative".into());
        }
        if self.lorawan_header_bytes + self.ack_payload_bytes > 255 {
            return bad("acknowledgement does not fit a packet".into());
        }
        self.path_loss.validate()?;
        self.radio(SpreadingFactor::SF7).validate()?;
        self.scheduler().validate()
    }
}
