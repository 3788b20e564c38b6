//! Discrete-event simulation of one collection period.

mod aloha;
pub mod clock;
pub mod config;
pub mod duty;
mod free;
pub mod medium;
pub mod metrics;
pub mod queue;
pub mod trace;
mod world;

pub use clock::Clock;
pub use config::{ScenarioConfig, Scheme, Traffic};
pub use duty::{DutyCycle, Node};
pub use medium::{decode_draw, gateway_admit, Medium, Outcome};
pub use metrics::{
    air_time_efficiency, lifetime_estimate, lifetime_years_from_power, Counters, DeviceMetrics,
    MetricsReport, LIFETIME_CAP_YEARS,
};
pub use queue::EventQueue;
pub use trace::{audit, AuditReport, AuditRules, Trace, TraceKind, TraceRecord};
pub use world::{deploy, DeviceSite};

use crate::error::Result;

fn dispatch(cfg: &ScenarioConfig, traced: bool) -> Result<(MetricsReport, Option<Trace>)> {
    let w = world::World::new(cfg, traced)?;
    match cfg.scheme {
        Scheme::Legacy | Scheme::Delayed => aloha::run(w),
        Scheme::Free(_) => free::run(w),
    }
}

/// Runs one scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport> {
    dispatch(cfg, false).map(|(r, _)| r)
}

/// Runs one scenario and keeps every transmission and receive window.
pub fn run_scenario_traced(cfg: &ScenarioConfig) -> Result<(MetricsReport, Trace)> {
    dispatch(cfg, true).map(|(r, t)| (r, t.unwrap_or_default()))
}

/// Audit rules matching a scenario's channels and energy profile.
pub fn audit_rules(cfg: &ScenarioConfig) -> AuditRules {
    let mut duty: std::collections::BTreeMap<u8, f64> = crate::scheduler::UPLINK_CHANNELS
        .iter()
        .map(|&c| (c, cfg.uplink_duty_cycle))
        .collect();
    duty.insert(crate::scheduler::DOWNLINK_CHANNEL, cfg.downlink_duty_cycle);
    AuditRules {
        duty,
        scheduled: matches!(cfg.scheme, Scheme::Free(_)),
        energy: cfg.energy.clone(),
    }
}
