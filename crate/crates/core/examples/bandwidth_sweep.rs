//! Total migration time against link bandwidth. Above the synchronizer's
//! processing cap a faster link stops helping.
//!
//!     cargo run --example bandwidth_sweep

use layermig::calibration::Calibration;
use layermig::cli::{sweep, SweepParam};
use layermig::guest::Virtualization;
use layermig::netsim::MBPS;
use layermig::workloads::sweep_scenario;

fn main() {
    let mut s = sweep_scenario(Virtualization::Container);
    Calibration::embedded().apply(&mut s);
    let cap = s.link.processing_cap_bps.expect("calibration sets a cap");
    println!("# processing cap {:.1} Mbps", cap / MBPS);
    println!("bandwidth_mbps,total_time_s");
    let mbps = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1000.0];
    for (row, _) in sweep(&s, SweepParam::Bandwidth, &mbps).expect("sweep runs") {
        println!("{},{:.2}", row.param_value, row.total_time_s);
    }
}
