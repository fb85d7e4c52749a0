//! Total migration time against RAM usage, container guest.
//!
//!     cargo run --example ram_sweep

use layermig::calibration::Calibration;
use layermig::cli::{sweep, SweepParam};
use layermig::guest::Virtualization;
use layermig::workloads::sweep_scenario;

fn main() {
    let mut s = sweep_scenario(Virtualization::Container);
    Calibration::embedded().apply(&mut s);
    let ram = [20.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0];
    println!("ram_mb,total_time_s,downtime_s");
    for (row, _) in sweep(&s, SweepParam::Ram, &ram).expect("sweep runs") {
        println!("{},{:.2},{:.2}", row.param_value, row.total_time_s, row.downtime_s);
    }
}
