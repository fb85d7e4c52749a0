//! Walks every valid destination state in both modes, including a stale
//! copy of the instance, and shows which stages each one runs.
//!
//!     cargo run --example decision_chart

use layermig::calibration::Calibration;
use layermig::guest::GuestSpec;
use layermig::migrator::{execute, valid_destinations, MigrationMode, MigrationScenario};
use layermig::workloads::find_profile;

fn main() {
    let profile = find_profile("Game Server").expect("builtin profile");
    for mode in [MigrationMode::TwoLayer, MigrationMode::ThreeLayer] {
        for d in valid_destinations(mode) {
            let mut s = MigrationScenario::new(GuestSpec::container(), profile.clone(), mode, d);
            s.scale = 0.02;
            Calibration::embedded().apply(&mut s);
            let r = execute(&s).expect("valid branch");
            let stages: Vec<&str> = r.stages.iter().map(|x| x.stage.key()).collect();
            println!(
                "{mode:?} base={} app={} stale={}: {:.2} s, {} B\n    {}",
                d.has_base,
                d.has_app,
                d.has_stale_instance,
                r.total_time_s,
                r.total_wire_bytes,
                stages.join(" -> ")
            );
        }
    }
}
