//! Fits the stage cost model to the bundled reference measurements and
//! prints the per-observation residuals.
//!
//!     cargo run --example calibrate [path/to/targets.json]

use layermig::calibration::{fit, ReferenceSet, DEFAULT_SWEEPS};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../reference/calibration_targets.json").into());
    let text = std::fs::read_to_string(&path).expect("reference file readable");
    let reference: ReferenceSet = serde_json::from_str(&text).expect("reference file parses");
    let cal = fit(&reference, DEFAULT_SWEEPS).expect("fit succeeds");
    for (kind, g) in &cal.guests {
        let f = g.fit.as_ref().expect("fitted guests carry a summary");
        println!(
            "{}: rms {:.3}, max {:.3}, {:.0}% within 30%, cap {:.1} Mbps",
            kind.name(),
            f.rms_relative_error,
            f.max_abs_relative_error,
            100.0 * f.within_30_percent,
            g.processing_cap_bps / 1e6
        );
        println!("  held: {:?}", f.held_parameters);
        println!("  {:?}", g.cost_model);
        for r in &f.residuals {
            println!("  {:<70} {:>8.2} {:>8.2} {:+.3}", r.label, r.observed_s, r.predicted_s, r.relative_error);
        }
    }
}
