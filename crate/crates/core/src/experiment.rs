//! Scenario files, parameter grids and CSV output.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{CodingRate, SpreadingFactor};
use crate::scheduler::{optimal_packet_length, packet_length_energy, GuardPolicy, SchedulerConfig};
use crate::sim::{run_scenario, MetricsReport, ScenarioConfig, Scheme, Traffic};

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn range(key: &str, value: &str) -> Result<(f64, f64)> {
    let (lo, hi) = value
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("{key}: expected `lo,hi`, got `{value}`")))?;
    Ok((num(key, lo)?, num(key, hi)?))
}

fn sf(key: &str, value: &str) -> Result<SpreadingFactor> {
    let v = value.trim();
    SpreadingFactor::new(num(key, v.strip_prefix("SF").or(v.strip_prefix("sf")).unwrap_or(v))?)
}

/// Keys accepted by [`set_field`].
pub const SCENARIO_KEYS: &[&str] = &[
    "scheme", "traffic", "n_devices", "seed", "period_h", "bytes_per_event", "mean_interarrival_s",
    "radius_m", "edge_sf", "bandwidth_hz", "coding_rate", "device_tx_dbm", "gateway_tx_dbm",
    "link_margin_db", "lorawan_header_bytes", "free_header_bytes", "ack_payload_bytes",
    "max_attempts", "concurrent_receptions", "uplink_duty_cycle", "downlink_duty_cycle",
    "delayed_start_max_s", "legacy_retry_s", "stage1_s", "stage2_s", "join_first_s",
    "join_backoff_s", "rx1_delay_s", "rx2_delay_s", "rx2_sf", "skew_rate", "sync_accuracy_ms",
    "guard_policy", "path_loss_exponent", "shadowing_sigma_db", "battery_mah",
];

/// Sets one scenario field from its textual value.
pub fn set_field(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<()> {
    let v = value.trim();
    match key {
        "scheme" => cfg.scheme = Scheme::parse(v)?,
        "traffic" => cfg.traffic = Traffic::parse(v)?,
        "n_devices" => cfg.n_devices = num(key, v)?,
        "seed" => cfg.seed = num(key, v)?,
        "period_h" => cfg.period_h = num(key, v)?,
        "bytes_per_event" => cfg.bytes_per_event = num(key, v)?,
        "mean_interarrival_s" => cfg.mean_interarrival_s = num(key, v)?,
        "radius_m" => cfg.radius_m = if v == "auto" { None } else { Some(num(key, v)?) },
        "edge_sf" => cfg.edge_sf = sf(key, v)?,
        "bandwidth_hz" => cfg.bandwidth_hz = num(key, v)?,
        "coding_rate" => cfg.coding_rate = CodingRate::from_denominator(num(key, v.trim_start_matches("4/"))?)?,
        "device_tx_dbm" => cfg.device_tx_dbm = num(key, v)?,
        "gateway_tx_dbm" => cfg.gateway_tx_dbm = num(key, v)?,
        "link_margin_db" => cfg.link_margin_db = num(key, v)?,
        "lorawan_header_bytes" => cfg.lorawan_header_bytes = num(key, v)?,
        "free_header_bytes" => cfg.free_header_bytes = num(key, v)?,
        "ack_payload_bytes" => cfg.ack_payload_bytes = num(key, v)?,
        "max_attempts" => cfg.max_attempts = num(key, v)?,
        "concurrent_receptions" => cfg.concurrent_receptions = num(key, v)?,
        "uplink_duty_cycle" => cfg.uplink_duty_cycle = num(key, v)?,
        "downlink_duty_cycle" => cfg.downlink_duty_cycle = num(key, v)?,
        "delayed_start_max_s" => cfg.delayed_start_max_s = num(key, v)?,
        "legacy_retry_s" => cfg.legacy_retry_s = range(key, v)?,
        "stage1_s" => cfg.stage1_s = if v == "auto" { None } else { Some(num(key, v)?) },
        "stage2_s" => cfg.stage2_s = num(key, v)?,
        "join_first_s" => cfg.join_first_s = num(key, v)?,
        "join_backoff_s" => cfg.join_backoff_s = range(key, v)?,
        "rx1_delay_s" => cfg.rx1_delay_s = num(key, v)?,
        "rx2_delay_s" => cfg.rx2_delay_s = num(key, v)?,
        "rx2_sf" => cfg.rx2_sf = sf(key, v)?,
        "skew_rate" => cfg.skew_rate = num(key, v)?,
        "sync_accuracy_ms" => cfg.sync_accuracy_ms = num(key, v)?,
        "guard_policy" => {
            cfg.guard_policy = match v {
                "formula" => GuardPolicy::Formula,
                "cover_round" => GuardPolicy::CoverRound,
                other => return Err(Error::Config(format!("guard_policy: unknown `{other}`"))),
            }
        }
        "path_loss_exponent" => cfg.path_loss.exponent = num(key, v)?,
        "shadowing_sigma_db" => cfg.path_loss.shadowing_sigma_db = num(key, v)?,
        "battery_mah" => cfg.energy.battery_mah = num(key, v)?,
        other => return Err(Error::Config(format!("unknown key `{other}`"))),
    }
    Ok(())
}

/// Parses `key = value` lines (`#` starts a comment), then applies
/// `overrides` on top. `scheme` and `seed` must be given by one of the two.
pub fn parse_scenario(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    pairs.extend(overrides.iter().cloned());
    for required in ["scheme", "seed"] {
        if !pairs.iter().any(|(k, _)| k == required) {
            return Err(Error::Config(format!("missing required key `{required}`")));
        }
    }
    let mut cfg = ScenarioConfig::new(Scheme::Legacy, Traffic::Unconfirmed, 100, 0);
    for (k, v) in &pairs {
        set_field(&mut cfg, k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub schemes: Vec<Scheme>,
    pub traffics: Vec<Traffic>,
    pub sizes: Vec<u32>,
    pub seeds: Vec<u64>,
    /// Every other field comes from here.
    pub base: ScenarioConfig,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() || self.traffics.is_empty() || self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("grid has an empty axis".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("grid seeds must be distinct".into()));
        }
        Ok(())
    }

    pub fn scenarios(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &traffic in &self.traffics {
                for &n in &self.sizes {
                    for &seed in &self.seeds {
                        let mut c = self.base.clone();
                        c.scheme = scheme;
                        c.traffic = traffic;
                        c.n_devices = n;
                        c.seed = seed;
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// Mean and spread over seeds of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub scheme: String,
    pub traffic: String,
    pub n_devices: u32,
    pub period_h: f64,
    pub ddr_mean: f64,
    pub ddr_std: f64,
    pub energy_j_mean: f64,
    pub lifetime_y_mean: f64,
    pub collection_s_mean: f64,
    pub airtime_eff_mean: Option<f64>,
    pub collisions_mean: f64,
    pub lost_mean: f64,
    pub noack_mean: f64,
    pub join_tx_per_device_mean: f64,
}

pub const GRID_COLUMNS: &str = "scheme,traffic,n_devices,period_h,ddr_mean,ddr_std,energy_j_mean,lifetime_y_mean,collection_s_mean,airtime_eff_mean,collisions_mean,lost_mean,noack_mean,join_tx_per_device_mean";

/// Order-independent mean: values are summed in sorted order.
fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; zero for a single value.
fn sample_std(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v.iter().copied());
    (mean(v.iter().map(|x| (x - m).powi(2))) * v.len() as f64 / (v.len() - 1) as f64).sqrt()
}

/// Collapses the per-seed reports of one grid point.
pub fn aggregate(reports: &[MetricsReport]) -> Result<GridRow> {
    let first = reports.first().ok_or_else(|| Error::Config("nothing to aggregate".into()))?;
    let f = |g: fn(&MetricsReport) -> f64| mean(reports.iter().map(g));
    let effs: Option<Vec<f64>> = reports.iter().map(|r| r.airtime_efficiency).collect();
    Ok(GridRow {
        scheme: first.scheme.clone(),
        traffic: first.traffic.clone(),
        n_devices: first.n_devices,
        period_h: first.period_h,
        ddr_mean: f(|r| r.ddr),
        ddr_std: sample_std(reports.iter().map(|r| r.ddr)),
        energy_j_mean: f(|r| r.energy_j),
        lifetime_y_mean: f(|r| r.lifetime_years),
        collection_s_mean: f(|r| r.collection_s),
        airtime_eff_mean: effs.map(mean),
        collisions_mean: f(|r| r.counters.collisions as f64),
        lost_mean: f(|r| r.counters.lost as f64),
        noack_mean: f(|r| r.counters.no_ack as f64),
        join_tx_per_device_mean: f(|r| r.join_tx_per_device),
    })
}

/// Runs every scenario of the grid in parallel and aggregates over seeds.
/// Rows come back sorted by scheme, traffic and size.
pub fn run_grid(grid: &ExperimentGrid) -> Result<Vec<GridRow>> {
    grid.validate()?;
    let scenarios = grid.scenarios();
    let reports: Vec<MetricsReport> = scenarios.par_iter().map(run_scenario).collect::<Result<_>>()?;
    let mut keyed: Vec<((Scheme, Traffic, u32), MetricsReport)> =
        scenarios.iter().map(|c| (c.scheme, c.traffic, c.n_devices)).zip(reports).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.seed.cmp(&b.1.seed)));
    keyed
        .chunk_by(|a, b| a.0 == b.0)
        .map(|chunk| aggregate(&chunk.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>()))
        .collect()
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = format!("{GRID_COLUMNS}\n");
    for r in rows {
        let eff = r.airtime_eff_mean.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.traffic,
            r.n_devices,
            r.period_h,
            r.ddr_mean,
            r.ddr_std,
            r.energy_j_mean,
            r.lifetime_y_mean,
            r.collection_s_mean,
            eff,
            r.collisions_mean,
            r.lost_mean,
            r.noack_mean,
            r.join_tx_per_device_mean
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sf: SpreadingFactor,
    pub packet_length: usize,
    /// Energy to move the buffer at this length, J.
    pub energy_j: f64,
    pub argmin: bool,
}

/// Energy against total packet length 20..=255 at each SF's SNR limit.
pub fn packet_length_sweep(sfs: &[SpreadingFactor], buffer_bytes: u32, config: &SchedulerConfig) -> Result<Vec<SweepRow>> {
    if buffer_bytes == 0 {
        return Err(Error::Config("buffer must be positive".into()));
    }
    let mut rows = Vec::new();
    for &sf in sfs {
        let best = optimal_packet_length(buffer_bytes, sf, config)?;
        let snr = config.budget.snr_limit(sf);
        for l in 20..=crate::phy::MAX_PACKET_BYTES {
            if let Some(energy_j) = packet_length_energy(l, buffer_bytes, sf, snr, config.header_bytes, config)? {
                rows.push(SweepRow { sf, packet_length: l, energy_j, argmin: l == best });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("sf,packet_length,energy_j,argmin\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.sf.get(), r.packet_length, r.energy_j, u8::from(r.argmin)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let text = "scheme = legacy\nseed = 3 # comment\nn_devices = 50\n";
        let c = parse_scenario(text, &[("n_devices".into(), "70".into())]).unwrap();
        assert_eq!((c.scheme, c.seed, c.n_devices), (Scheme::Legacy, 3, 70));
        assert!(parse_scenario("scheme = legacy\nseed = 1\ncolour = red\n", &[]).is_err());
        assert!(parse_scenario("scheme = legacy\n", &[]).is_err());
        assert!(parse_scenario("seed = 1\n", &[("scheme".into(), "free_a1".into())]).is_ok());
    }

    #[test]
    fn every_listed_key_is_settable() {
        let mut c = ScenarioConfig::new(Scheme::Legacy, Traffic::Unconfirmed, 1, 1);
        let sample = |k: &str| match k {
            "scheme" => "delayed",
            "traffic" => "confirmed",
            "edge_sf" | "rx2_sf" => "SF9",
            "coding_rate" => "4/6",
            "legacy_retry_s" | "join_backoff_s" => "1,2",
            "guard_policy" => "formula",
            "radius_m" | "stage1_s" => "auto",
            "uplink_duty_cycle" | "downlink_duty_cycle" => "0.5",
            _ => "3",
        };
        for k in SCENARIO_KEYS {
            set_field(&mut c, k, sample(k)).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn std_of_identical_values_is_zero() {
        assert_eq!(sample_std([0.5, 0.5, 0.5]), 0.0);
        assert_eq!(sample_std([1.0]), 0.0);
        assert!((sample_std([1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let g = ExperimentGrid {
            schemes: vec![Scheme::Legacy],
            traffics: vec![Traffic::Unconfirmed],
            sizes: vec![5],
            seeds: vec![1, 1],
            base: ScenarioConfig::new(Scheme::Legacy, Traffic::Unconfirmed, 5, 0),
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn sweep_marks_one_argmin_per_sf() {
        let cfg = SchedulerConfig::default();
        let rows = packet_length_sweep(&SpreadingFactor::ALL, 1500, &cfg).unwrap();
        for sf in SpreadingFactor::ALL {
            let marked: Vec<_> = rows.iter().filter(|r| r.sf == sf && r.argmin).collect();
            assert_eq!(marked.len(), 1, "{sf}");
            let min = rows
                .iter()
                .filter(|r| r.sf == sf)
                .map(|r| r.energy_j)
                .fold(f64::INFINITY, f64::min);
            assert!(marked[0].energy_j <= min);
        }
    }
}
