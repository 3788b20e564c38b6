//! Reference values for the link model and the scheduler, computed straight
//! from the closed forms or by exhaustive enumeration.
//!
//! Nothing here is shared with `lorafree`. The fixture written by
//! [`generate`] is one vector per line, tab separated:
//!
//! ```text
//! op <TAB> k=v;k=v;... <TAB> expected <TAB> tolerance <TAB> note
//! ```
//!
//! `tolerance` is `exact` or a relative bound such as `1e-9`.

use std::fmt::Write as _;

pub const HEADER: &str = "# op\tinputs\texpected\ttolerance\tnote";

const SNR_LIMIT: [f64; 6] = [-6.0, -9.0, -12.0, -15.0, -17.5, -20.0];
const NOISE_FIGURE: f64 = 6.0;
const THRESHOLD: [[f64; 6]; 6] = [
    [1.0, -8.0, -9.0, -9.0, -9.0, -9.0],
    [-11.0, 1.0, -11.0, -12.0, -13.0, -13.0],
    [-15.0, -13.0, 1.0, -13.0, -14.0, -15.0],
    [-19.0, -18.0, -17.0, 1.0, -17.0, -18.0],
    [-22.0, -22.0, -21.0, -20.0, 1.0, -20.0],
    [-25.0, -25.0, -25.0, -24.0, -23.0, 1.0],
];
const CHANNELS: [usize; 6] = [1, 1, 1, 1, 2, 2];
const TX_WATTS: f64 = 0.132;

/// Symbol count formula, explicit header, CRC on, 8 preamble symbols.
pub fn toa_ms(sf: u32, bw: f64, cr_den: u32, len: u32) -> f64 {
    let tsym = 2f64.powi(sf as i32) / bw * 1000.0;
    let de = if tsym > 16.0 { 2 } else { 0 };
    let num = 8 * len as i64 - 4 * sf as i64 + 28 + 16;
    let den = 4 * (sf as i64 - de);
    let mut blocks = num / den;
    if num % den != 0 && num > 0 {
        blocks += 1;
    }
    let symbols = 8 + blocks.max(0) * (cr_den as i64);
    12.25 * tsym + symbols as f64 * tsym
}

pub fn ebn0_db(snr: f64, sf: u32, bw: f64, cr_den: u32) -> f64 {
    let chip_rate = bw / 2f64.powi(sf as i32);
    let c = 4.0 / cr_den as f64;
    snr - 10.0 * chip_rate.log10() - 10.0 * (sf as f64).log10() - 10.0 * c.log10()
        + 10.0 * bw.log10()
}

/// Gaussian tail by Craig's integral, composite Simpson.
pub fn q(x: f64) -> f64 {
    if x.is_infinite() {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    if x < 0.0 {
        return 1.0 - q(-x);
    }
    if x == 0.0 {
        return 0.5;
    }
    let n = 20_000;
    let h = std::f64::consts::FRAC_PI_2 / n as f64;
    let f = |t: f64| {
        let s = t.sin();
        if s == 0.0 {
            0.0
        } else {
            (-x * x / (2.0 * s * s)).exp()
        }
    };
    let mut sum = f(0.0) + f(std::f64::consts::FRAC_PI_2);
    for i in 1..n {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0 / std::f64::consts::PI
}

pub fn ber(ebn0: f64, sf: u32) -> f64 {
    let k = (sf as f64).log(12.0) / 2f64.sqrt();
    q(k * ebn0).clamp(0.0, 1.0)
}

pub fn per(ber: f64, len: u32) -> f64 {
    let n = 8.0 * len as f64;
    (-(n * (-ber).ln_1p()).exp_m1()).clamp(0.0, 1.0)
}

pub fn sensitivity(sf: u32, bw: f64) -> f64 {
    -174.0 + 10.0 * bw.log10() + NOISE_FIGURE + SNR_LIMIT[(sf - 7) as usize]
}

pub fn min_sf(rssi: f64, bw: f64) -> Option<u32> {
    (7..=12).find(|&sf| rssi > sensitivity(sf, bw))
}

fn ceil_div(a: u64, b: u64) -> u64 {
    (a + b - 1) / b
}

pub fn cost_energy(sf: u32, size: u64, bw: f64) -> f64 {
    ceil_div(size, 247) as f64 * toa_ms(sf, bw, 5, 255) / 1000.0 * TX_WATTS
}

pub fn cost_time(sf: u32, size: u64, count: u64, bw: f64) -> f64 {
    let m = CHANNELS[(sf - 7) as usize] as u64;
    let frames = ceil_div(size, 247 * m) as f64;
    ((count + 1).max(100) as f64 * frames + (m - 1) as f64) * toa_ms(sf, bw, 5, 255)
}

/// Greedy sequential allocation; returns the SF of every join.
pub fn allocate(rssi: &[f64], size: u64, time_objective: bool, bw: f64) -> Vec<u32> {
    let mut counts = [0u64; 6];
    rssi.iter()
        .map(|&r| {
            let lo = min_sf(r, bw).expect("in range");
            let mut best = (lo, f64::INFINITY);
            for sf in lo..=12 {
                let c = if time_objective {
                    cost_time(sf, size, counts[(sf - 7) as usize], bw)
                } else {
                    cost_energy(sf, size, bw)
                };
                if c < best.1 {
                    best = (sf, c);
                }
            }
            counts[(best.0 - 7) as usize] += 1;
            best.0
        })
        .collect()
}

/// Expected energy per buffer for every total packet length that carries
/// payload; `None` where every packet is lost.
pub fn length_sweep(size: u64, sf: u32, bw: f64, snr: f64, header: u32) -> Vec<(u32, Option<f64>)> {
    let b = if snr.is_infinite() {
        0.0
    } else {
        ber(ebn0_db(snr, sf, bw, 5), sf)
    };
    (header + 1..=255)
        .filter(|&l| l >= 5)
        .map(|l| {
            let p = per(b, l);
            let e = (p < 1.0).then(|| {
                let r = p / (1.0 - p);
                (1.0 + r) * ceil_div(size, (l - header) as u64) as f64 * toa_ms(sf, bw, 5, l) / 1000.0
                    * TX_WATTS
            });
            (l, e)
        })
        .collect()
}

/// Argmin of [`length_sweep`], ties to the longer packet.
pub fn best_length(size: u64, sf: u32, bw: f64, snr: f64, header: u32) -> u32 {
    let mut best = (0, f64::INFINITY);
    for (l, e) in length_sweep(size, sf, bw, snr, header) {
        if let Some(e) = e {
            if e <= best.1 {
                best = (l, e);
            }
        }
    }
    best.0
}

pub fn guard_ms(count: u64, frames: u64, m: u64, toa_ms: f64, skew: f64, duty: f64) -> u64 {
    let per_period = (1.0 / duty).round() as u64;
    let span = (count.max(per_period) * frames + (m - 1)) as f64 * toa_ms;
    ((skew * span - 1e-9).ceil() as u64).max(1)
}

pub fn slots(devices: u64, toa_ms: f64, guard: u64, duty: f64) -> u64 {
    let min = (toa_ms / duty) / (toa_ms + 2.0 * guard as f64);
    devices.max((min - 1e-9).ceil() as u64)
}

/// Whether a signal decodes next to one interferer.
pub fn survives(victim: u32, victim_rssi: f64, other: u32, other_rssi: f64) -> bool {
    victim_rssi - other_rssi >= THRESHOLD[(victim - 7) as usize][(other - 7) as usize]
}

pub fn lifetime_years(avg_power_w: f64) -> f64 {
    1.0 * 3.3 * 3600.0 / avg_power_w / (365.25 * 24.0 * 3600.0)
}

pub fn bitmap_hex(set: &[usize], slots: usize) -> String {
    let mut bytes = vec![0u8; slots.div_ceil(8)];
    for &s in set {
        bytes[s / 8] |= 0x80 >> (s % 8);
    }
    hex(&bytes)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Join request with zero identifiers and the given buffer and elasticity.
pub fn join_request_hex(data_size: u32, elasticity: u32) -> String {
    let mut b = vec![0u8; 18];
    b.extend_from_slice(&data_size.to_be_bytes()[1..]);
    b.extend_from_slice(&elasticity.to_be_bytes()[1..]);
    hex(&b)
}

/// Small linear congruential generator so the fixture needs no crates.
struct Lcg(u64);

impl Lcg {
    fn next_unit(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

struct Out(String);

impl Out {
    fn row(&mut self, op: &str, inputs: &str, expected: impl std::fmt::Display, tol: &str, note: &str) {
        writeln!(self.0, "{op}\t{inputs}\t{expected}\t{tol}\t{note}").unwrap();
    }
}

const REL: &str = "1e-9";
const BWS: [f64; 2] = [125_000.0, 500_000.0];

fn f(x: f64) -> String {
    format!("{x:?}")
}

/// Renders the whole fixture.
pub fn generate() -> String {
    let mut o = Out(String::new());
    writeln!(o.0, "{HEADER}").unwrap();

    for bw in BWS {
        for sf in 7..=12 {
            for len in [1, 8, 20, 27, 51, 108, 222, 255] {
                o.row("toa", &format!("sf={sf};bw={bw};cr=5;len={len}"), f(toa_ms(sf, bw, 5, len)), REL, "symbol count");
            }
        }
    }
    for cr in 5..=8 {
        o.row("toa", &format!("sf=9;bw=125000;cr={cr};len=64"), f(toa_ms(9, 125_000.0, cr, 64)), REL, "coding rate");
    }

    for bw in BWS {
        for sf in 7..=12 {
            let snr = SNR_LIMIT[(sf - 7) as usize];
            let e = ebn0_db(snr, sf, bw, 5);
            o.row("ebn0", &format!("snr={snr};sf={sf};bw={bw};cr=5"), f(e), REL, "at snr limit");
            o.row("ber", &format!("ebn0={e:?};sf={sf}"), f(ber(e, sf)), REL, "quadrature tail");
            o.row("sens", &format!("sf={sf};bw={bw}"), f(sensitivity(sf, bw)), REL, "noise floor plus limit");
        }
    }
    for ebn0 in [0.0, 1.0, 2.5, 4.0, 7.59, 10.0] {
        for sf in [7, 12] {
            o.row("ber", &format!("ebn0={ebn0:?};sf={sf}"), f(ber(ebn0, sf)), REL, "quadrature tail");
        }
    }

    for (b, len) in [(1e-4, 255), (1e-6, 20), (0.01, 10), (0.3, 1), (0.0, 100), (1.0, 1)] {
        o.row("per", &format!("ber={b:?};len={len}"), f(per(b, len)), REL, "independent bit errors");
    }
    for p in [0.0, 0.1, 0.5, 0.9, 0.99] {
        o.row("retx", &format!("per={p:?}"), f(p / (1.0 - p)), REL, "geometric series");
    }

    for (buffer, payload, header, sf, bw, p) in [
        (5760, 247, 8, 7, 500_000.0, 0.0),
        (5760, 247, 8, 7, 500_000.0, 0.5),
        (5760, 247, 8, 12, 125_000.0, 0.0),
        (1500, 100, 8, 9, 125_000.0, 0.2),
        (0, 247, 8, 7, 125_000.0, 0.0),
    ] {
        let e = (1.0 + p / (1.0 - p)) * ceil_div(buffer, payload) as f64
            * toa_ms(sf, bw, 5, (payload + header) as u32)
            / 1000.0
            * TX_WATTS;
        o.row(
            "energy",
            &format!("buffer={buffer};payload={payload};header={header};sf={sf};bw={bw};per={p:?}"),
            f(e),
            REL,
            "expected retransmissions times packets",
        );
    }

    for d in [1.0, 40.0, 53.0, 100.0, 400.0] {
        let r = 14.0 - (127.41 + 10.0 * 2.08 * (d / 40.0f64).log10());
        o.row("rssi", &format!("tx=14;d={d:?}"), f(r), REL, "log distance without shadowing");
    }

    for bw in BWS {
        for rssi in [-100.0, -117.0, -118.0, -123.5, -126.0, -129.5, -130.0, -134.0, -137.0, -140.0] {
            let expected = min_sf(rssi, bw).map_or("err".to_string(), |s| s.to_string());
            o.row("minsf", &format!("rssi={rssi:?};bw={bw}"), expected, "exact", "first sf above sensitivity");
        }
    }

    for bw in BWS {
        for sf in 7..=12 {
            for size in [0, 20, 247, 5760] {
                o.row("cost_e", &format!("sf={sf};size={size};bw={bw}"), f(cost_energy(sf, size, bw)), REL, "provisional full packets");
            }
            for count in [0, 99, 250] {
                o.row(
                    "cost_t",
                    &format!("sf={sf};size=5760;count={count};bw={bw}"),
                    f(cost_time(sf, 5760, count, bw)),
                    REL,
                    "frames times slots",
                );
            }
        }
    }

    let mut rng = Lcg(0x5eed);
    for (n, time_obj, bw) in [(300, true, 500_000.0), (300, false, 500_000.0), (200, true, 125_000.0)] {
        let rssi: Vec<f64> = (0..n).map(|_| (-80.0 - rng.next_unit() * 50.0).round()).collect();
        let sfs = allocate(&rssi, 5760, time_obj, bw);
        let list = |v: &[String]| v.join(",");
        o.row(
            "alloc",
            &format!(
                "alpha={};bw={bw};size=5760;rssi={}",
                u8::from(time_obj),
                list(&rssi.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>())
            ),
            list(&sfs.iter().map(|s| s.to_string()).collect::<Vec<_>>()),
            "exact",
            "brute force argmin per join",
        );
    }

    for bw in BWS {
        for sf in 7..=12 {
            let snr = SNR_LIMIT[(sf - 7) as usize];
            for size in [20, 100, 500, 1500, 5760] {
                o.row(
                    "optlen",
                    &format!("size={size};sf={sf};bw={bw};header=8;snr={snr:?}"),
                    best_length(size, sf, bw, snr, 8),
                    "exact",
                    "exhaustive sweep",
                );
            }
            o.row(
                "optlen",
                &format!("size=2470;sf={sf};bw={bw};header=8;snr=inf"),
                best_length(2470, sf, bw, f64::INFINITY, 8),
                "exact",
                "ideal link sweep",
            );
            o.row(
                "optlen",
                &format!("size=5760;sf={sf};bw={bw};header=7;snr={snr:?}"),
                best_length(5760, sf, bw, snr, 7),
                "exact",
                "exhaustive sweep",
            );
        }
    }

    for bw in BWS {
        for sf in 7..=12 {
            let m = CHANNELS[(sf - 7) as usize] as u64;
            for (count, size) in [(1, 20), (50, 5760), (200, 5760), (600, 5760)] {
                let len = 255;
                let frames = ceil_div(size, 247 * m);
                let t = toa_ms(sf, bw, 5, len);
                let g = guard_ms(count, frames, m, t, 15e-6, 0.01);
                o.row(
                    "guard",
                    &format!("sf={sf};bw={bw};count={count};size={size};len={len}"),
                    g,
                    "exact",
                    "skew over nominal round",
                );
                o.row(
                    "slots",
                    &format!("devices={count};toa_us={};guard={g};duty=0.01", (t * 1000.0).round()),
                    slots(count, t, g, 0.01),
                    "exact",
                    "duty cycle minimum",
                );
            }
        }
    }
    o.row("slots", "devices=5;toa_us=100000.0;guard=0;duty=0.01", slots(5, 100.0, 0, 0.01), "exact", "no guard");
    o.row("slots", "devices=0;toa_us=100000.0;guard=50;duty=0.01", slots(0, 100.0, 50, 0.01), "exact", "half-slot guard");

    for victim in 7..=12 {
        for other in 7..=12 {
            for tenth in (-300..=300).step_by(5) {
                let delta = tenth as f64 / 10.0;
                o.row(
                    "survive",
                    &format!("victim={victim};other={other};delta={delta:?}"),
                    u8::from(survives(victim, -100.0 + delta, other, -100.0)),
                    "exact",
                    "threshold table",
                );
            }
        }
    }

    for p in [37.6e-6, 1e-3, 75.2e-6] {
        o.row("lifetime", &format!("avg_w={p:?}"), f(lifetime_years(p)), REL, "battery energy over power");
    }

    for (set, n) in [(vec![], 8), (vec![0, 7], 8), ((0..8).collect(), 8), (vec![1, 9, 15, 16], 17), (vec![99], 100)] {
        let list: Vec<String> = set.iter().map(|s: &usize| s.to_string()).collect();
        o.row("bitmap", &format!("slots={n};set={}", list.join(",")), bitmap_hex(&set, n), "exact", "msb first");
    }
    for (size, el) in [(0, 0), (5760, 0), (5760, 86400), (16_777_215, 1)] {
        o.row("joinreq", &format!("data_size={size};elasticity={el}"), join_request_hex(size, el), "exact", "big endian");
    }

    o.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_airtimes() {
        assert!((toa_ms(7, 125_000.0, 5, 20) - 56.576).abs() < 1e-12);
        assert!((toa_ms(7, 500_000.0, 5, 20) - 14.144).abs() < 1e-12);
    }

    #[test]
    fn quadrature_tail() {
        assert!((q(0.0) - 0.5).abs() < 1e-15);
        assert!((q(1.0) - 0.158_655_253_931_457_05).abs() < 1e-13);
        assert!((q(3.0) - 1.349_898_031_630_094_6e-3).abs() < 1e-15);
        assert!((q(-1.0) - 0.841_344_746_068_542_9).abs() < 1e-13);
    }

    #[test]
    fn guard_hand_value() {
        assert_eq!(guard_ms(200, 24, 1, 400.0, 15e-6, 0.01), 29);
        assert_eq!(guard_ms(0, 0, 1, 400.0, 15e-6, 0.01), 1);
    }

    #[test]
    fn bitmap_convention() {
        assert_eq!(bitmap_hex(&[0, 7], 8), "81");
        assert_eq!(join_request_hex(5760, 0)[36..42], *"001680");
    }
}
