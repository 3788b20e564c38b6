//! Simulation and scheduling of bulk data collection over LoRaWAN.

pub mod error;
pub mod experiment;
pub mod phy;
pub mod protocol;
pub mod scheduler;
pub mod sim;

pub use error::{CodecError, Error, Result};
pub use phy::{
    bit_error_rate, expected_retransmissions, packet_error_rate, receiver_sensitivity,
    resolve_concurrent, sample_rssi, snr_to_ebn0, time_on_air, transmission_energy, CodingRate,
    EnergyProfile, LinkBudget, PathLossModel, RadioParams, SpreadingFactor, TransmissionEvent,
};
pub use sim::{run_scenario, run_scenario_traced, MetricsReport, ScenarioConfig, Scheme, Traffic};
pub use experiment::{parse_scenario, run_grid, ExperimentGrid, GridRow};
