use lorafree::phy::{
    receiver_sensitivity, resolve_concurrent, time_on_air_us, CodingRate, LinkBudget, RadioParams, SpreadingFactor,
    TransmissionEvent,
};
use lorafree::scheduler::{
    allocate, cost_energy, cost_time, min_spreading_factor, optimal_packet_length_at, packet_length_energy,
    JoinInfo, Objective, SchedulerConfig, SchedulerState,
};
use proptest::prelude::*;

fn sf(i: usize) -> SpreadingFactor {
    SpreadingFactor::ALL[i]
}

fn config(objective: Objective) -> SchedulerConfig {
    SchedulerConfig { objective, ..SchedulerConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn allocation_is_the_cheapest_reachable_sf(
        alpha in 0u8..2,
        rssi in -140.0f64..-60.0,
        data_size in 1u32..20_000,
        prior in proptest::collection::vec((0usize..6, 1u32..10_000), 0..40),
    ) {
        let cfg = config(Objective::from_alpha(alpha).unwrap());
        let mut state = SchedulerState::new();
        for (i, &(s, size)) in prior.iter().enumerate() {
            let j = JoinInfo { device: 1000 + i as u32, rssi_dbm: -80.0, data_size: size, delay_elasticity_s: 0 };
            state.place(&j, sf(s), &cfg);
        }
        let join = JoinInfo { device: 1, rssi_dbm: rssi, data_size, delay_elasticity_s: 0 };
        let Ok(minf) = min_spreading_factor(rssi, &cfg.budget, cfg.bandwidth_hz) else {
            prop_assert!(allocate(&join, &mut state.clone(), &cfg).is_err());
            return Ok(());
        };
        let minf = min_spreading_factor(rssi - cfg.link_margin_db, &cfg.budget, cfg.bandwidth_hz).unwrap_or(minf);
        let cost = |s: SpreadingFactor| match cfg.objective {
            Objective::Energy => cost_energy(s, data_size, &cfg).unwrap(),
            Objective::CollectionTime => cost_time(s, data_size, &state, &cfg).unwrap(),
        };
        let best = SpreadingFactor::ALL.into_iter().filter(|&s| s >= minf).map(cost).fold(f64::INFINITY, f64::min);
        let a = allocate(&join, &mut state.clone(), &cfg).unwrap();
        prop_assert!(a.sf >= minf);
        prop_assert_eq!(cost(a.sf), best);
    }

    #[test]
    fn allocation_is_idempotent(rssi in -130.0f64..-60.0, data_size in 1u32..20_000) {
        let cfg = config(Objective::CollectionTime);
        let mut state = SchedulerState::new();
        let join = JoinInfo { device: 7, rssi_dbm: rssi, data_size, delay_elasticity_s: 0 };
        let first = allocate(&join, &mut state, &cfg).unwrap();
        let again = allocate(&JoinInfo { rssi_dbm: -60.0, ..join }, &mut state, &cfg).unwrap();
        prop_assert_eq!(first, again);
        prop_assert_eq!(state.len(), 1);
    }

    #[test]
    fn optimal_length_matches_exhaustive_sweep(s in 0usize..6, buffer in 1u32..5000, snr_offset in 0.0f64..6.0) {
        let cfg = SchedulerConfig::default();
        let snr = cfg.budget.snr_limit(sf(s)) + snr_offset;
        let chosen = optimal_packet_length_at(buffer, sf(s), snr, 7, &cfg).unwrap();
        let energy = |l| packet_length_energy(l, buffer, sf(s), snr, 7, &cfg).unwrap();
        let e_chosen = energy(chosen).unwrap();
        for l in 8..=255 {
            if let Some(e) = energy(l) {
                prop_assert!(e_chosen <= e, "length {l} beats {chosen}");
                if e == e_chosen {
                    prop_assert!(l <= chosen, "ties go to the longer packet");
                }
            }
        }
    }

    #[test]
    fn time_on_air_grows_with_length_and_sf(s in 0usize..5, len in 1usize..255, bw in prop::sample::select(vec![125_000u32, 250_000, 500_000])) {
        let p = RadioParams::new(sf(s), bw, CodingRate::Cr45);
        let t = time_on_air_us(&p, len).unwrap();
        prop_assert!(time_on_air_us(&p, len + 1).unwrap() >= t);
        prop_assert!(time_on_air_us(&p.with_sf(sf(s + 1)), len).unwrap() > t);
    }

    #[test]
    fn resolution_ignores_order(
        rssi in proptest::collection::vec((0usize..6, -130.0f64..-60.0), 1..8),
        rot in 0usize..8,
    ) {
        let budget = LinkBudget::default();
        let events: Vec<TransmissionEvent> = rssi
            .iter()
            .enumerate()
            .map(|(i, &(s, r))| TransmissionEvent {
                id: i as u64,
                sender: i as u32,
                channel: 1,
                sf: sf(s),
                tx_power_dbm: 14.0,
                start_us: 0,
                end_us: 1000,
                payload_bytes: 20,
                rssi_dbm: r,
            })
            .collect();
        let ids = |v: Vec<TransmissionEvent>| {
            let mut ids: Vec<u64> = v.into_iter().map(|e| e.id).collect();
            ids.sort_unstable();
            ids
        };
        let mut shuffled = events.clone();
        shuffled.rotate_left(rot % events.len());
        shuffled.reverse();
        let kept = ids(resolve_concurrent(&events, &budget));
        prop_assert_eq!(&kept, &ids(resolve_concurrent(&shuffled, &budget)));
        if events.len() == 1 {
            prop_assert_eq!(kept, vec![0]);
        }
    }
}

#[test]
fn sensitivity_falls_with_sf() {
    let budget = LinkBudget::default();
    let s: Vec<f64> = SpreadingFactor::ALL
        .into_iter()
        .map(|x| receiver_sensitivity(&RadioParams::new(x, 125_000, CodingRate::Cr45), &budget))
        .collect();
    assert!(s.windows(2).all(|w| w[1] < w[0]), "{s:?}");
}

#[test]
fn unreachable_device_is_rejected() {
    let cfg = SchedulerConfig::default();
    let join = JoinInfo { device: 0, rssi_dbm: -200.0, data_size: 100, delay_elasticity_s: 0 };
    assert!(allocate(&join, &mut SchedulerState::new(), &cfg).is_err());
}
