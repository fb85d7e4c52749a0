//! Reproduces the container half of the results table next to the
//! published values.
//!
//!     cargo run --example table1

use layermig::calibration::{reference_scenario, Calibration};
use layermig::guest::Virtualization;
use layermig::migrator::execute;
use layermig::netsim::MBPS;
use layermig::reference;
use layermig::workloads::{builtin_profiles, Configuration};

fn main() {
    let cal = Calibration::embedded();
    let table = reference::table1();
    println!("{:<16} {:<26} {:>16} {:>18} {:>16}", "profile", "configuration", "time s (ref)", "wire MB (ref)", "down s (ref)");
    for p in builtin_profiles() {
        for (c, _) in Configuration::table_columns() {
            let mut s = reference_scenario(Virtualization::Container, &p.name, c, 100.0 * MBPS)
                .expect("known names");
            cal.apply(&mut s);
            let r = execute(&s).expect("migration succeeds");
            let cell = table.cell(Virtualization::Container, &p.name, c).expect("every cell is published");
            println!(
                "{:<16} {:<26} {:>7.1} ({:>6.1}) {:>8.1} ({:>7.1}) {:>7.1} ({:>6.1})",
                p.name,
                c,
                r.total_time_s,
                cell.total_time_s,
                r.total_wire_bytes as f64 / 1e6,
                cell.wire_mb,
                r.downtime_s,
                cell.downtime_s
            );
        }
    }
}
