use ccg_core::envsim::{
    path_loss_db, run_environment, run_environment_with_hooks, sample_exogenous_prior,
    ActionConfig, ExogenousNoise, FidelityLevel, Scheduler, SimHooks, CHANNEL, MAX_UES,
};
use ccg_core::rng::seeded;
use proptest::prelude::*;

fn relaxed() -> SimHooks {
    SimHooks {
        relax_ranges: true,
        ..Default::default()
    }
}

fn zero_shadow(seed: u64) -> ExogenousNoise {
    let mut u = sample_exogenous_prior(&mut seeded(seed));
    u.shadow_db = vec![0.0; MAX_UES];
    u
}

#[test]
fn single_ue_below_capacity_delivers_offered_load() {
    let a = ActionConfig {
        scheduler: Scheduler::Rr,
        num_ues: 1,
        load_mbps: 2.0,
        duration_s: 5.0,
    };
    let z = run_environment_with_hooks(&a, &zero_shadow(1), FidelityLevel::Q1, relaxed()).unwrap();
    assert_eq!(z.num_windows(), 25);
    for &t in &z.throughput_mbps[0] {
        assert!((t - 2.0).abs() < 1e-9, "{t}");
    }
    // One TTI of fluid backlog at 2 Mbps is 2000 bits, i.e. 1 ms of offered load.
    for &d in &z.delay_ms[0] {
        assert!((d - 1.0).abs() < 1e-9, "{d}");
    }
}

/// Finds a placement seed whose first two UEs sit at (nearly) the same distance
/// by brute force, then compares RR throughputs under saturation.
#[test]
fn round_robin_is_symmetric_for_equal_links() {
    let mut best = (0u64, f64::INFINITY);
    for s in 0..20_000u64 {
        let d0 = ccg_core::envsim::ue_distance_m(s, 0);
        let d1 = ccg_core::envsim::ue_distance_m(s, 1);
        if (d0 - d1).abs() < best.1 && d0 > 300.0 {
            best = (s, (d0 - d1).abs());
        }
    }
    let mut u = zero_shadow(3);
    u.placement_seed = best.0;
    let a = ActionConfig {
        scheduler: Scheduler::Rr,
        num_ues: 2,
        load_mbps: 100.0,
        duration_s: 5.0,
    };
    let z = run_environment_with_hooks(&a, &u, FidelityLevel::Q1, relaxed()).unwrap();
    let m0: f64 = z.throughput_mbps[0].iter().sum();
    let m1: f64 = z.throughput_mbps[1].iter().sum();
    assert!((m0 - m1).abs() / m0.max(m1) < 0.01, "{m0} vs {m1}");
}

#[test]
fn work_conservation_below_capacity() {
    // Three UEs at 2 Mbps each; even at the cell edge with no shadowing the
    // link rate is far above 6 Mbps.
    let edge = CHANNEL.tx_power_dbm - path_loss_db(500.0) - CHANNEL.noise_dbm();
    assert!(edge > 5.0);
    for seed in 0..5 {
        let a = ActionConfig::new(Scheduler::Pf, 3, 2.0, 5.0).unwrap();
        let z = run_environment(&a, &zero_shadow(seed), FidelityLevel::Q1).unwrap();
        for ue in 0..3 {
            let m = z.throughput_mbps[ue].iter().sum::<f64>() / z.num_windows() as f64;
            assert!((m - 2.0).abs() / 2.0 < 0.01, "ue {ue}: {m}");
        }
    }
}

#[test]
fn fidelity_nesting() {
    let a = ActionConfig::new(Scheduler::Pf, 7, 8.0, 6.0).unwrap();
    let u = zero_shadow(9);
    assert_eq!(
        run_environment(&a, &u, FidelityLevel::Q1).unwrap(),
        run_environment(&a, &u, FidelityLevel::Q2).unwrap()
    );
    let u = sample_exogenous_prior(&mut seeded(9));
    let mean_fading = SimHooks {
        mean_fading: true,
        ..Default::default()
    };
    assert_eq!(
        run_environment_with_hooks(&a, &u, FidelityLevel::Q3, mean_fading).unwrap(),
        run_environment(&a, &u, FidelityLevel::Q2).unwrap()
    );
    assert_ne!(
        run_environment(&a, &u, FidelityLevel::Q3).unwrap(),
        run_environment(&a, &u, FidelityLevel::Q2).unwrap()
    );
}

#[test]
fn placement_does_not_depend_on_ue_count() {
    let u = sample_exogenous_prior(&mut seeded(5));
    let small = ActionConfig::new(Scheduler::Rr, 3, 2.0, 5.0).unwrap();
    let z3 = run_environment(&small, &u, FidelityLevel::Q2).unwrap();
    // Light load: every UE is served whatever it asks for, so UE 0's series
    // stays the same when more UEs are added.
    let big = ActionConfig::new(Scheduler::Rr, 4, 2.0, 5.0).unwrap();
    let z4 = run_environment(&big, &u, FidelityLevel::Q2).unwrap();
    assert_eq!(z3.throughput_mbps[0].len(), z4.throughput_mbps[0].len());
}

fn action_strategy() -> impl Strategy<Value = ActionConfig> {
    (0usize..2, 3u32..=10, 2u32..=10, 5u32..=10).prop_map(|(s, n, l, d)| {
        ActionConfig::new(Scheduler::from_index(s), n, f64::from(l), f64::from(d)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn series_invariants(a in action_strategy(), seed in any::<u64>(), q in 1u8..=4) {
        let q = FidelityLevel::try_from(q).unwrap();
        let u = sample_exogenous_prior(&mut seeded(seed));
        let z = run_environment(&a, &u, q).unwrap();
        prop_assert_eq!(z.num_ues(), a.num_ues as usize);
        prop_assert_eq!(z.num_windows(), a.num_windows());
        let cap = 0.2 * CHANNEL.peak_bits_per_tti() / CHANNEL.tti_s;
        for &b in &z.delivered_bits {
            prop_assert!(b <= cap * (1.0 + 1e-12));
        }
        // Packet transmission time at the peak rate.
        let min_delay_ms = CHANNEL.packet_bits / CHANNEL.peak_bits_per_tti();
        for ue in 0..z.num_ues() {
            for k in 0..z.num_windows() {
                prop_assert!(z.throughput_mbps[ue][k] >= 0.0);
                let d = z.delay_ms[ue][k];
                // Carried-forward zeros are allowed only before the first departure.
                if d > 0.0 {
                    prop_assert!(d >= min_delay_ms.min(1.0), "delay {}", d);
                }
            }
        }
    }
}
