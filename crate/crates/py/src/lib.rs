//! Python bindings: scenarios, simulation runs, trace audits and the
//! closed-form radio and scheduling helpers.

use lorafree_core::experiment::{packet_length_sweep, set_field};
use lorafree_core::phy::{
    bit_error_rate, packet_error_rate, receiver_sensitivity, snr_to_ebn0, time_on_air, CodingRate, RadioParams,
    SpreadingFactor,
};
use lorafree_core::scheduler::{self, JoinInfo, Objective, SchedulerConfig, SchedulerState};
use lorafree_core::sim::{self, audit_rules, Trace};
use lorafree_core::{MetricsReport, ScenarioConfig, Scheme, Traffic};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: lorafree_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sf(value: u8) -> PyResult<SpreadingFactor> {
    SpreadingFactor::new(value).map_err(err)
}

fn radio(sf_value: u8, bandwidth_hz: u32, cr: u8) -> PyResult<RadioParams> {
    Ok(RadioParams::new(sf(sf_value)?, bandwidth_hz, CodingRate::from_denominator(cr).map_err(err)?))
}

/// One simulation scenario. Fields not given keep their defaults and can be
/// changed later with `set`.
#[pyclass(name = "Scenario", module = "lorafree")]
struct PyScenario(ScenarioConfig);

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (scheme, traffic = "confirmed", n_devices = 100, seed = 1, period_h = 24.0))]
    fn new(scheme: &str, traffic: &str, n_devices: u32, seed: u64, period_h: f64) -> PyResult<Self> {
        let mut cfg = ScenarioConfig::new(Scheme::parse(scheme).map_err(err)?, Traffic::parse(traffic).map_err(err)?, n_devices, seed);
        cfg.period_h = period_h;
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    /// Sets any scenario field from its text form, e.g. `set("skew_rate", "2e-5")`.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        set_field(&mut self.0, key, value).map_err(err)
    }

    #[getter]
    fn scheme(&self) -> &'static str {
        self.0.scheme.token()
    }

    #[getter]
    fn traffic(&self) -> &'static str {
        self.0.traffic.token()
    }

    #[getter]
    fn n_devices(&self) -> u32 {
        self.0.n_devices
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn radius_m(&self) -> f64 {
        self.0.deployment_radius_m()
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyReport> {
        let cfg = self.0.clone();
        py.detach(|| sim::run_scenario(&cfg)).map(PyReport).map_err(err)
    }

    /// Runs and also returns the transmission trace as TSV text.
    fn run_traced(&self, py: Python<'_>) -> PyResult<(PyReport, String)> {
        let cfg = self.0.clone();
        let (report, trace) = py.detach(|| sim::run_scenario_traced(&cfg)).map_err(err)?;
        Ok((PyReport(report), trace.to_tsv()))
    }

    /// Audits a trace produced under this scenario. Returns
    /// `(duty_violations, overlaps)` as lists of descriptions.
    fn audit(&self, trace_tsv: &str) -> PyResult<(Vec<String>, Vec<String>)> {
        let trace = Trace::parse_tsv(trace_tsv).map_err(err)?;
        let report = sim::audit(&trace, &audit_rules(&self.0));
        Ok((report.duty_violations, report.overlaps))
    }

    fn __repr__(&self) -> String {
        format!("Scenario({}, {}, n_devices={}, seed={})", self.0.scheme, self.0.traffic.token(), self.0.n_devices, self.0.seed)
    }
}

/// Aggregate metrics of one run.
#[pyclass(name = "Report", module = "lorafree", frozen)]
struct PyReport(MetricsReport);

#[pymethods]
impl PyReport {
    #[getter]
    fn ddr(&self) -> f64 {
        self.0.ddr
    }

    #[getter]
    fn delivered_bytes(&self) -> u64 {
        self.0.delivered_bytes
    }

    #[getter]
    fn total_bytes(&self) -> u64 {
        self.0.total_bytes
    }

    #[getter]
    fn energy_j(&self) -> f64 {
        self.0.energy_j
    }

    #[getter]
    fn lifetime_years(&self) -> f64 {
        self.0.lifetime_years
    }

    #[getter]
    fn collection_s(&self) -> f64 {
        self.0.collection_s
    }

    #[getter]
    fn airtime_efficiency(&self) -> Option<f64> {
        self.0.airtime_efficiency
    }

    #[getter]
    fn join_tx_per_device(&self) -> f64 {
        self.0.join_tx_per_device
    }

    #[getter]
    fn sf_histogram(&self) -> [u32; 6] {
        self.0.sf_histogram
    }

    /// Full report, per-device metrics and counters included.
    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Report(ddr={:.4}, energy_j={:.2}, lifetime_years={:.2})", self.0.ddr, self.0.energy_j, self.0.lifetime_years)
    }
}

/// Incremental spreading factor and slot allocation.
#[pyclass(name = "Scheduler", module = "lorafree")]
struct PyScheduler {
    config: SchedulerConfig,
    state: SchedulerState,
}

#[pymethods]
impl PyScheduler {
    #[new]
    #[pyo3(signature = (alpha = 0))]
    fn new(alpha: u8) -> PyResult<Self> {
        let config = SchedulerConfig { objective: Objective::from_alpha(alpha).map_err(err)?, ..SchedulerConfig::default() };
        Ok(Self { config, state: SchedulerState::new() })
    }

    /// Returns `(sf, slot, tx_power_dbm, channels)` for the joining device.
    #[pyo3(signature = (device, rssi_dbm, data_size, delay_elasticity_s = 0))]
    fn allocate(&mut self, device: u32, rssi_dbm: f64, data_size: u32, delay_elasticity_s: u32) -> PyResult<(u8, u32, i32, Vec<u8>)> {
        let join = JoinInfo { device, rssi_dbm, data_size, delay_elasticity_s };
        let a = scheduler::allocate(&join, &mut self.state, &self.config).map_err(err)?;
        Ok((a.sf.get(), a.slot, a.tx_power_dbm, a.channel_ids))
    }

    fn count(&self, sf_value: u8) -> PyResult<usize> {
        Ok(self.state.count(sf(sf_value)?))
    }

    fn __len__(&self) -> usize {
        self.state.len()
    }
}

/// Time on air in ms for a packet of `total_bytes`.
#[pyfunction]
#[pyo3(signature = (sf, total_bytes, bandwidth_hz = 125_000, coding_rate = 5))]
fn time_on_air_ms(sf: u8, total_bytes: usize, bandwidth_hz: u32, coding_rate: u8) -> PyResult<f64> {
    time_on_air(&radio(sf, bandwidth_hz, coding_rate)?, total_bytes).map_err(err)
}

/// Packet error rate of a `total_bytes` packet received at `snr_db`.
#[pyfunction]
#[pyo3(signature = (sf, snr_db, total_bytes, bandwidth_hz = 125_000))]
fn packet_error(sf: u8, snr_db: f64, total_bytes: usize, bandwidth_hz: u32) -> PyResult<f64> {
    let p = radio(sf, bandwidth_hz, 5)?;
    Ok(packet_error_rate(bit_error_rate(snr_to_ebn0(snr_db, &p), p.sf), total_bytes))
}

/// Receiver sensitivity in dBm under the default link budget.
#[pyfunction]
#[pyo3(signature = (sf, bandwidth_hz = 125_000))]
fn sensitivity_dbm(sf: u8, bandwidth_hz: u32) -> PyResult<f64> {
    Ok(receiver_sensitivity(&radio(sf, bandwidth_hz, 5)?, &Default::default()))
}

/// Energy-optimal total packet length for draining `buffer_bytes` on `sf`.
#[pyfunction]
fn optimal_packet_length(buffer_bytes: u32, sf_value: u8) -> PyResult<usize> {
    scheduler::optimal_packet_length(buffer_bytes, sf(sf_value)?, &SchedulerConfig::default()).map_err(err)
}

/// `(sf, packet_length, energy_j, argmin)` rows of the packet length sweep.
#[pyfunction]
#[pyo3(signature = (buffer_bytes = 1500, sfs = vec![7, 8, 9, 10, 11, 12]))]
fn packet_length_curve(buffer_bytes: u32, sfs: Vec<u8>) -> PyResult<Vec<(u8, usize, f64, bool)>> {
    let sfs = sfs.into_iter().map(sf).collect::<PyResult<Vec<_>>>()?;
    let rows = packet_length_sweep(&sfs, buffer_bytes, &SchedulerConfig::default()).map_err(err)?;
    Ok(rows.into_iter().map(|r| (r.sf.get(), r.packet_length, r.energy_j, r.argmin)).collect())
}

#[pymodule]
fn lorafree(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyScheduler>()?;
    m.add_function(wrap_pyfunction!(time_on_air_ms, m)?)?;
    m.add_function(wrap_pyfunction!(packet_error, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity_dbm, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_packet_length, m)?)?;
    m.add_function(wrap_pyfunction!(packet_length_curve, m)?)?;
    Ok(())
}
