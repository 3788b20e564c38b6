/// A device clock: constant drift from its last synchronisation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Clock {
    /// True time of the last synchronisation, µs.
    pub synced_at_us: u64,
    /// Local minus true time at synchronisation, µs.
    pub offset_us: f64,
    /// Drift, seconds per second; positive runs fast.
    pub skew: f64,
}

impl Clock {
    /// Local minus true time at true time `t`.
    pub fn error_us(&self, t_us: u64) -> f64 {
        self.offset_us + self.skew * (t_us as f64 - self.synced_at_us as f64)
    }

    /// True instant at which the local clock reads `local_us`.
    pub fn true_time_of(&self, local_us: u64) -> u64 {
        let ts = self.synced_at_us as f64;
        let t = (local_us as f64 - self.offset_us + self.skew * ts) / (1.0 + self.skew);
        t.round().max(0.0) as u64
    }

    pub fn resync(&mut self, now_us: u64, offset_us: f64) {
        self.synced_at_us = now_us;
        self.offset_us = offset_us;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_accumulates_from_sync() {
        let c = Clock {
            synced_at_us: 1_000_000,
            offset_us: 200.0,
            skew: 15e-6,
        };
        assert_eq!(c.error_us(1_000_000), 200.0);
        assert!((c.error_us(101_000_000) - 1700.0).abs() < 1e-9);
        let t = c.true_time_of(101_000_000);
        assert!((t as f64 + c.error_us(t) - 101_000_000.0).abs() <= 1.0);
    }
}
