//! Replays `fixtures/golden_vectors.tsv` against the library.

use std::collections::HashMap;

use lorafree::phy::{
    bit_error_rate, expected_retransmissions, packet_error_rate, receiver_sensitivity,
    sample_rssi, snr_to_ebn0, survives, time_on_air, transmission_energy, CodingRate,
    EnergyProfile, LinkBudget, PathLossModel, RadioParams, SpreadingFactor,
};
use lorafree::protocol::{AckBitmap, JoinRequest};
use lorafree::scheduler::{
    allocate, cost_energy, cost_time, guard_time, min_spreading_factor, optimal_packet_length_at,
    slots_per_frame, JoinInfo, Objective, SchedulerConfig, SchedulerState,
};
use lorafree::sim::lifetime_years_from_power;
use rand::SeedableRng;

pub const FIXTURE: &str = include_str!("../fixtures/golden_vectors.tsv");

pub struct Report {
    pub checked: usize,
    pub failures: Vec<String>,
}

struct Inputs<'a>(HashMap<&'a str, &'a str>);

impl<'a> Inputs<'a> {
    fn parse(s: &'a str) -> Self {
        Self(s.split(';').filter_map(|kv| kv.split_once('=')).collect())
    }

    fn raw(&self, k: &str) -> &'a str {
        self.0.get(k).unwrap_or_else(|| panic!("missing input {k}"))
    }

    fn f(&self, k: &str) -> f64 {
        self.raw(k).parse().unwrap()
    }

    fn u(&self, k: &str) -> u64 {
        self.raw(k).parse::<f64>().unwrap() as u64
    }

    fn sf(&self, k: &str) -> SpreadingFactor {
        SpreadingFactor::new(self.u(k) as u8).unwrap()
    }

    fn params(&self) -> RadioParams {
        let cr = self.0.get("cr").map_or(5, |c| c.parse().unwrap());
        RadioParams::new(self.sf("sf"), self.u("bw") as u32, CodingRate::from_denominator(cr).unwrap())
    }

    fn config(&self) -> SchedulerConfig {
        SchedulerConfig {
            bandwidth_hz: self.u("bw") as u32,
            ..SchedulerConfig::default()
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn compare(actual: &str, expected: &str, tol: &str) -> bool {
    if tol == "exact" {
        return actual == expected;
    }
    let tol: f64 = tol.parse().unwrap();
    let (a, e): (f64, f64) = (actual.parse().unwrap(), expected.parse().unwrap());
    if a == e {
        return true;
    }
    (a - e).abs() <= tol * e.abs().max(f64::MIN_POSITIVE)
}

fn evaluate(op: &str, i: &Inputs) -> String {
    let budget = LinkBudget::default();
    match op {
        "toa" => format!("{:?}", time_on_air(&i.params(), i.u("len") as usize).unwrap()),
        "ebn0" => format!("{:?}", snr_to_ebn0(i.f("snr"), &i.params())),
        "ber" => format!("{:?}", bit_error_rate(i.f("ebn0"), i.sf("sf"))),
        "sens" => format!("{:?}", receiver_sensitivity(&i.params(), &budget)),
        "per" => format!("{:?}", packet_error_rate(i.f("ber"), i.u("len") as usize)),
        "retx" => format!("{:?}", expected_retransmissions(i.f("per")).unwrap()),
        "energy" => format!(
            "{:?}",
            transmission_energy(
                i.u("buffer") as usize,
                i.u("payload") as usize,
                i.u("header") as usize,
                &i.params(),
                i.f("per"),
                14,
                &EnergyProfile::default(),
            )
            .unwrap()
        ),
        "rssi" => {
            let model = PathLossModel {
                shadowing_sigma_db: 0.0,
                ..PathLossModel::default()
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            format!("{:?}", sample_rssi(i.f("tx"), i.f("d"), &model, &mut rng).unwrap())
        }
        "minsf" => match min_spreading_factor(i.f("rssi"), &budget, i.u("bw") as u32) {
            Ok(sf) => sf.get().to_string(),
            Err(_) => "err".into(),
        },
        "cost_e" => format!("{:?}", cost_energy(i.sf("sf"), i.u("size") as u32, &i.config()).unwrap()),
        "cost_t" => {
            let cfg = i.config();
            let sf = i.sf("sf");
            let mut state = SchedulerState::new();
            for d in 0..i.u("count") as u32 {
                let j = JoinInfo { device: d, rssi_dbm: -60.0, data_size: 1, delay_elasticity_s: 0 };
                state.place(&j, sf, &cfg);
            }
            format!("{:?}", cost_time(sf, i.u("size") as u32, &state, &cfg).unwrap())
        }
        "alloc" => {
            let cfg = SchedulerConfig {
                objective: Objective::from_alpha(i.u("alpha") as u8).unwrap(),
                ..i.config()
            };
            let mut state = SchedulerState::new();
            let sfs: Vec<String> = i
                .raw("rssi")
                .split(',')
                .enumerate()
                .map(|(d, r)| {
                    let j = JoinInfo {
                        device: d as u32,
                        rssi_dbm: r.parse().unwrap(),
                        data_size: i.u("size") as u32,
                        delay_elasticity_s: 0,
                    };
                    allocate(&j, &mut state, &cfg).unwrap().sf.get().to_string()
                })
                .collect();
            sfs.join(",")
        }
        "optlen" => {
            let snr = match i.raw("snr") {
                "inf" => f64::INFINITY,
                s => s.parse().unwrap(),
            };
            optimal_packet_length_at(i.u("size") as u32, i.sf("sf"), snr, i.u("header") as usize, &i.config())
                .unwrap()
                .to_string()
        }
        "guard" => {
            let cfg = i.config();
            let sf = i.sf("sf");
            let mut state = SchedulerState::new();
            for d in 0..i.u("count") as u32 {
                let j = JoinInfo { device: d, rssi_dbm: -60.0, data_size: i.u("size") as u32, delay_elasticity_s: 0 };
                state.place(&j, sf, &cfg);
            }
            guard_time(sf, i.u("len") as usize, &state, &cfg).unwrap().to_string()
        }
        "slots" => slots_per_frame(
            i.u("devices") as usize,
            i.f("toa_us") / 1000.0,
            i.u("guard") as u32,
            i.f("duty"),
        )
        .to_string(),
        "survive" => {
            let delta = i.f("delta");
            u8::from(survives(i.sf("victim"), -100.0 + delta, i.sf("other"), -100.0, &budget)).to_string()
        }
        "lifetime" => format!("{:?}", lifetime_years_from_power(i.f("avg_w"), &EnergyProfile::default())),
        "bitmap" => {
            let set: Vec<usize> = i.raw("set").split(',').filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect();
            hex(AckBitmap::build(set, i.u("slots") as usize).unwrap().as_bytes())
        }
        "joinreq" => {
            let r = JoinRequest {
                data_size: i.u("data_size") as u32,
                delay_elasticity_s: i.u("elasticity") as u32,
                ..JoinRequest::default()
            };
            hex(&r.encode().unwrap())
        }
        other => panic!("unknown golden op {other}"),
    }
}

pub fn run() -> Report {
    let mut report = Report { checked: 0, failures: Vec::new() };
    for line in FIXTURE.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let [op, inputs, expected, tol, _note] = cols[..] else {
            panic!("malformed fixture line: {line}");
        };
        let actual = evaluate(op, &Inputs::parse(inputs));
        report.checked += 1;
        if !compare(&actual, expected, tol) {
            report.failures.push(format!("{op} {inputs}: expected {expected}, got {actual}"));
        }
    }
    report
}
