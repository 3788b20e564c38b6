use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lorafree::experiment::{grid_csv, packet_length_sweep, parse_scenario, run_grid, sweep_csv, ExperimentGrid};
use lorafree::phy::SpreadingFactor;
use lorafree::scheduler::SchedulerConfig;
use lorafree::sim::{audit, audit_rules, run_scenario, run_scenario_traced, Scheme, Trace, Traffic};

#[derive(Parser)]
#[command(name = "lorafree", version, about = "Bulk LoRaWAN data collection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    traffic: Option<String>,
    #[arg(long)]
    n_devices: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    period_h: Option<f64>,
    /// Any other scenario field, repeatable: `--set skew_rate=2e-5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ScenarioArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let direct = [
            ("scheme", self.scheme.clone()),
            ("traffic", self.traffic.clone()),
            ("n_devices", self.n_devices.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("period_h", self.period_h.map(|v| v.to_string())),
        ];
        for (k, v) in direct {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn text(&self) -> Result<String> {
        match &self.config {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(String::new()),
        }
    }

    fn scenario(&self, defaults: &[(&str, &str)]) -> Result<lorafree::ScenarioConfig> {
        let mut overrides: Vec<(String, String)> = defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        overrides.extend(self.overrides()?);
        Ok(parse_scenario(&self.text()?, &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and print its metrics as JSON.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also write the transmission trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Leave per-device metrics out of the output.
        #[arg(long)]
        summary: bool,
    },
    /// Sweep schemes, traffic types, sizes and seeds; print CSV.
    Grid {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_value = "legacy,delayed,free_a0,free_a1")]
        schemes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "unconfirmed,confirmed")]
        traffics: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "100,300,500")]
        sizes: Vec<u32>,
        /// Seeds as a list or an inclusive range `a..b`.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy against packet length per SF; print CSV.
    #[command(visible_alias = "sweep")]
    Fig3 {
        #[arg(long, default_value_t = 1500)]
        buffer: u32,
        #[arg(long, value_delimiter = ',', default_value = "7,8,9,10,11,12")]
        sfs: Vec<u8>,
        #[arg(long, default_value_t = 500_000)]
        bandwidth_hz: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace for duty-cycle violations and slot overlaps.
    Audit {
        trace: PathBuf,
        /// Scenario the trace came from; sets duty cycles and energy.
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b < a {
            bail!("empty seed range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenario, trace, summary } => {
            let cfg = scenario.scenario(&[])?;
            let mut report = match &trace {
                Some(path) => {
                    let (report, t) = run_scenario_traced(&cfg)?;
                    fs::write(path, t.to_tsv()).with_context(|| format!("writing {}", path.display()))?;
                    report
                }
                None => run_scenario(&cfg)?,
            };
            if summary {
                report.devices.clear();
            }
            println!("{}", report.to_json());
            Ok(true)
        }
        Command::Grid { scenario, schemes, traffics, sizes, seeds, out } => {
            let base = scenario.scenario(&[("scheme", "legacy"), ("seed", "0")])?;
            let grid = ExperimentGrid {
                schemes: schemes.iter().map(|s| Scheme::parse(s)).collect::<Result<_, _>>()?,
                traffics: traffics.iter().map(|s| Traffic::parse(s)).collect::<Result<_, _>>()?,
                sizes,
                seeds: parse_seeds(&seeds)?,
                base,
            };
            emit(&grid_csv(&run_grid(&grid)?), &out)?;
            Ok(true)
        }
        Command::Fig3 { buffer, sfs, bandwidth_hz, out } => {
            let sfs = sfs.into_iter().map(SpreadingFactor::new).collect::<Result<Vec<_>, _>>()?;
            let cfg = SchedulerConfig {
                bandwidth_hz,
                ..SchedulerConfig::default()
            };
            emit(&sweep_csv(&packet_length_sweep(&sfs, buffer, &cfg)?), &out)?;
            Ok(true)
        }
        Command::Audit { trace, scenario } => {
            let cfg = scenario.scenario(&[("scheme", "legacy"), ("seed", "0")])?;
            let text = fs::read_to_string(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let report = audit(&Trace::parse_tsv(&text)?, &audit_rules(&cfg));
            println!("records: {}", report.records);
            println!("duty-cycle violations: {}", report.duty_violations.len());
            println!("slot overlaps: {}", report.overlaps.len());
            for line in report.duty_violations.iter().chain(&report.overlaps).take(20) {
                println!("  {line}");
            }
            Ok(report.clean())
        }
    }
}
