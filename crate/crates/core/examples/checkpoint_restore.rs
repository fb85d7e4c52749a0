//! Checkpoints a running guest's memory into files and restores it.
//!
//!     cargo run --example checkpoint_restore

use layermig::guest::{build_guest, GuestSpec};
use layermig::layer_store::CHECKPOINT_DIR;
use layermig::workloads::find_profile;

fn main() {
    let profile = find_profile("RAM Simulation").expect("builtin profile");
    let mut guest = build_guest(&GuestSpec::container(), &profile, 5, 0.05).expect("valid guest");
    guest.advance(2).expect("running guest");
    let before = guest.memory().expect("running guest has memory").clone();

    guest.checkpoint().expect("running guest");
    let files = guest.instance.tree.subtree(CHECKPOINT_DIR);
    println!(
        "checkpoint: {} files, {} bytes for {} bytes of memory",
        files.len(),
        files.total_bytes(),
        before.total_bytes()
    );

    guest.restore().expect("checkpoint intact");
    let after = guest.memory().expect("restored");
    println!("restored memory identical: {}", after.same_contents(&before));
    println!("checkpoint files left behind: {}", guest.has_checkpoint());
}
