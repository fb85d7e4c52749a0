use layermig::calibration::{reference_scenario, Calibration};
use layermig::guest::Virtualization;
use layermig::migrator::{execute, DestinationState, MigrationScenario};
use layermig::netsim::MBPS;
use layermig::workloads::{builtin_profiles, Configuration};
use proptest::prelude::*;

fn scenario(guest: Virtualization, profile: &str, config: &str, scale: f64, seed: u64) -> MigrationScenario {
    let mut s = reference_scenario(guest, profile, config, 100.0 * MBPS).unwrap();
    Calibration::embedded().apply(&mut s);
    s.scale = scale;
    s.seed = seed;
    s
}

#[test]
fn app_not_found_is_never_faster_than_two_layer() {
    for guest in [Virtualization::Container, Virtualization::VirtualMachine] {
        for p in builtin_profiles() {
            let two = execute(&scenario(guest, &p.name, "two_layer", 1.0, 0)).unwrap();
            let nf = execute(&scenario(guest, &p.name, "three_layer_app_not_found", 1.0, 0)).unwrap();
            assert!(nf.total_time_s >= two.total_time_s, "{}", p.name);
        }
    }
}

#[test]
fn app_found_never_sends_more_than_two_layer() {
    for p in builtin_profiles() {
        let two = execute(&scenario(Virtualization::Container, &p.name, "two_layer", 1.0, 0)).unwrap();
        let found = execute(&scenario(Virtualization::Container, &p.name, "three_layer_app_found", 1.0, 0)).unwrap();
        assert!(found.total_wire_bytes <= two.total_wire_bytes, "{}", p.name);
    }
}

#[test]
fn stale_instance_sends_less_than_a_fresh_clone() {
    let fresh = execute(&scenario(Virtualization::Container, "Game Server", "three_layer_app_found", 0.1, 2)).unwrap();
    let mut s = scenario(Virtualization::Container, "Game Server", "three_layer_app_found", 0.1, 2);
    s.destination = DestinationState::new(true, true, true);
    let stale = execute(&s).unwrap();
    assert!(stale.total_wire_bytes < fresh.total_wire_bytes);
    assert!(stale.stages.len() < fresh.stages.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn report_totals_are_exact_sums(seed in 0u64..1000, profile in 0usize..5, column in 0usize..3, latency in 0.0f64..0.05) {
        let p = &builtin_profiles()[profile];
        let (name, _) = Configuration::table_columns()[column];
        let mut s = scenario(Virtualization::Container, &p.name, name, 0.01, seed);
        s.link.latency_s = latency;
        s.link.jitter_s = latency / 2.0;
        let r = execute(&s).unwrap();
        let total: f64 = r.stages.iter().map(|x| x.duration_s).sum();
        let down: f64 = r.stages.iter().filter(|x| x.stage.is_downtime()).map(|x| x.duration_s).sum();
        let wire: u64 = r.stages.iter().map(|x| x.wire_bytes).sum();
        prop_assert_eq!(total, r.total_time_s);
        prop_assert_eq!(down, r.downtime_s);
        prop_assert_eq!(wire, r.total_wire_bytes);
    }

    #[test]
    fn downtime_does_not_depend_on_the_app_layer(seed in 0u64..1000, profile in 0usize..5) {
        let p = &builtin_profiles()[profile];
        let a = execute(&scenario(Virtualization::Container, &p.name, "three_layer_app_found", 0.02, seed)).unwrap();
        let b = execute(&scenario(Virtualization::Container, &p.name, "three_layer_app_not_found", 0.02, seed)).unwrap();
        prop_assert_eq!(a.downtime_s, b.downtime_s);
    }
}
