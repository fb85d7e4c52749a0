//! Migrates Face Detection in two-layer and three-layer mode and prints
//! the stage breakdown of each.
//!
//!     cargo run --example migrate

use layermig::calibration::{reference_scenario, Calibration};
use layermig::guest::Virtualization;
use layermig::netsim::MBPS;
use layermig::migrator::execute;

fn main() {
    let cal = Calibration::embedded();
    for config in ["two_layer", "three_layer_app_found"] {
        let mut s = reference_scenario(Virtualization::Container, "Face Detection", config, 100.0 * MBPS)
            .expect("known names");
        cal.apply(&mut s);
        let r = execute(&s).expect("migration succeeds");
        println!("{config}");
        for st in &r.stages {
            let mark = if st.stage.is_downtime() { "*" } else { " " };
            println!("  {mark} {:<32} {:>8.2} s {:>12} B", st.label, st.duration_s, st.wire_bytes);
        }
        println!(
            "    total {:.1} s, downtime {:.1} s, {:.1} MB sent\n",
            r.total_time_s,
            r.downtime_s,
            r.total_wire_bytes as f64 / 1e6
        );
    }
}
