//! Per-transmission log and an independent checker that replays it.
//!
//! One record per line, tab separated:
//! `start_us end_us node kind sf channel power_dbm bytes outcome`, where
//! `node` is `gw` or `dev:<id>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::EnergyProfile;
use crate::sim::duty::Node;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TraceKind {
    JoinRequest,
    JoinAccept,
    Data,
    Ack,
    Schedule,
    /// A device receiver that is on; never a transmission.
    Listen,
}

impl TraceKind {
    pub fn token(self) -> &'static str {
        match self {
            Self::JoinRequest => "join_req",
            Self::JoinAccept => "join_acc",
            Self::Data => "data",
            Self::Ack => "ack",
            Self::Schedule => "fsettings",
            Self::Listen => "listen",
        }
    }

    pub fn is_transmission(self) -> bool {
        self != Self::Listen
    }
}

impl FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "join_req" => Self::JoinRequest,
            "join_acc" => Self::JoinAccept,
            "data" => Self::Data,
            "ack" => Self::Ack,
            "fsettings" => Self::Schedule,
            "listen" => Self::Listen,
            other => return Err(Error::Config(format!("unknown trace kind `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub start_us: u64,
    pub end_us: u64,
    pub node: Node,
    pub kind: TraceKind,
    pub sf: u8,
    pub channel: u8,
    pub power_dbm: i32,
    pub bytes: u16,
    pub outcome: String,
}

fn node_token(n: Node) -> String {
    match n {
        Node::Gateway => "gw".into(),
        Node::Device(d) => format!("dev:{d}"),
    }
}

fn parse_node(s: &str) -> Result<Node> {
    if s == "gw" {
        return Ok(Node::Gateway);
    }
    s.strip_prefix("dev:")
        .and_then(|d| d.parse().ok())
        .map(Node::Device)
        .ok_or_else(|| Error::Config(format!("bad node `{s}`")))
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.start_us,
            self.end_us,
            node_token(self.node),
            self.kind.token(),
            self.sf,
            self.channel,
            self.power_dbm,
            self.bytes,
            self.outcome
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(Error::Config(format!("trace line has {} fields, want 9", f.len())));
        }
        let num = |i: usize| -> Result<i64> {
            f[i].parse()
                .map_err(|_| Error::Config(format!("trace field {} not a number: `{}`", i + 1, f[i])))
        };
        Ok(Self {
            start_us: num(0)? as u64,
            end_us: num(1)? as u64,
            node: parse_node(f[2])?,
            kind: f[3].parse()?,
            sf: num(4)? as u8,
            channel: num(5)? as u8,
            power_dbm: num(6)? as i32,
            bytes: num(7)? as u16,
            outcome: f[8].to_string(),
        })
    }

    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# start_us\tend_us\tnode\tkind\tsf\tchannel\tpower_dbm\tbytes\toutcome\n");
        for r in &self.records {
            writeln!(out, "{}", r.to_line()).unwrap();
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .map(|(n, l)| {
                TraceRecord::parse_line(l).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRules {
    /// Duty cycle per channel id.
    pub duty: BTreeMap<u8, f64>,
    /// Flag same-SF, same-channel overlaps among data uplinks.
    pub scheduled: bool,
    pub energy: EnergyProfile,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub records: usize,
    pub duty_violations: Vec<String>,
    pub overlaps: Vec<String>,
    /// Recomputed radio energy per device, J.
    pub device_energy_j: BTreeMap<u32, f64>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.duty_violations.is_empty() && self.overlaps.is_empty()
    }
}

/// Checks every transmission against the silence rule, optionally checks
/// scheduled uplinks for overlaps, and integrates device energy.
pub fn audit(trace: &Trace, rules: &AuditRules) -> AuditReport {
    let mut report = AuditReport {
        records: trace.records.len(),
        ..AuditReport::default()
    };
    let mut by_sender: BTreeMap<(Node, u8), Vec<&TraceRecord>> = BTreeMap::new();
    for r in trace.records.iter().filter(|r| r.kind.is_transmission()) {
        by_sender.entry((r.node, r.channel)).or_default().push(r);
    }
    for ((node, ch), mut list) in by_sender {
        let d = rules.duty.get(&ch).copied().unwrap_or(1.0);
        list.sort_by_key(|r| r.start_us);
        for w in list.windows(2) {
            let (a, b) = (w[0], w[1]);
            let earliest = a.end_us as f64 + a.duration_us() as f64 * (1.0 - d) / d;
            if (b.start_us as f64) + 1.0 < earliest {
                report.duty_violations.push(format!(
                    "{} ch{ch}: {} at {} us before {:.0} us",
                    node_token(node),
                    b.kind.token(),
                    b.start_us,
                    earliest
                ));
            }
        }
    }
    if rules.scheduled {
        let mut data: Vec<&TraceRecord> = trace.records.iter().filter(|r| r.kind == TraceKind::Data).collect();
        data.sort_by_key(|r| (r.channel, r.sf, r.start_us));
        for w in data.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.channel == b.channel && a.sf == b.sf && b.start_us < a.end_us {
                report.overlaps.push(format!(
                    "ch{} SF{}: {} [{}, {}) overlaps {} [{}, {})",
                    a.channel,
                    a.sf,
                    node_token(a.node),
                    a.start_us,
                    a.end_us,
                    node_token(b.node),
                    b.start_us,
                    b.end_us
                ));
            }
        }
    }
    for r in &trace.records {
        if let Node::Device(d) = r.node {
            let secs = r.duration_us() as f64 / 1e6;
            let watts = if r.kind.is_transmission() {
                rules.energy.tx_draw_w(r.power_dbm)
            } else {
                rules.energy.rx_draw_w()
            };
            *report.device_energy_j.entry(d).or_default() += secs * watts;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(node: Node, start: u64, end: u64, ch: u8, kind: TraceKind) -> TraceRecord {
        TraceRecord {
            start_us: start,
            end_us: end,
            node,
            kind,
            sf: 7,
            channel: ch,
            power_dbm: 14,
            bytes: 20,
            outcome: "ok".into(),
        }
    }

    fn rules() -> AuditRules {
        AuditRules {
            duty: [(1, 0.01), (4, 0.1)].into_iter().collect(),
            scheduled: true,
            energy: EnergyProfile::default(),
        }
    }

    #[test]
    fn line_round_trip() {
        let r = rec(Node::Device(12), 5, 9, 3, TraceKind::Ack);
        assert_eq!(TraceRecord::parse_line(&r.to_line()).unwrap(), r);
        let t = Trace { records: vec![r.clone(), rec(Node::Gateway, 1, 2, 4, TraceKind::Schedule)] };
        assert_eq!(Trace::parse_tsv(&t.to_tsv()).unwrap(), t);
    }

    #[test]
    fn flags_early_retransmission() {
        let d = Node::Device(1);
        let ok = Trace { records: vec![rec(d, 0, 1000, 1, TraceKind::Data), rec(d, 100_000, 101_000, 1, TraceKind::Data)] };
        assert!(audit(&ok, &rules()).duty_violations.is_empty());
        let bad = Trace { records: vec![rec(d, 0, 1000, 1, TraceKind::Data), rec(d, 99_000, 100_000, 1, TraceKind::Data)] };
        assert_eq!(audit(&bad, &rules()).duty_violations.len(), 1);
    }

    #[test]
    fn listening_is_not_transmitting() {
        let d = Node::Device(1);
        let t = Trace { records: vec![rec(d, 0, 1000, 1, TraceKind::Data), rec(d, 1000, 2000, 1, TraceKind::Listen)] };
        let a = audit(&t, &rules());
        assert!(a.clean());
        let e = a.device_energy_j[&1];
        assert!((e - (1e-3 * 0.132 + 1e-3 * 0.048)).abs() < 1e-15);
    }

    #[test]
    fn flags_scheduled_overlap() {
        let t = Trace {
            records: vec![
                rec(Node::Device(1), 0, 1000, 1, TraceKind::Data),
                rec(Node::Device(2), 999, 2000, 1, TraceKind::Data),
            ],
        };
        assert_eq!(audit(&t, &rules()).overlaps.len(), 1);
    }
}
