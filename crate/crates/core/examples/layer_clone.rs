//! Builds a container guest and shows how its layers stack.
//!
//!     cargo run --example layer_clone

use layermig::guest::{build_guest, GuestSpec};
use layermig::layer_store::{clone_layer, LayerKind};
use layermig::workloads::find_profile;

fn main() {
    let profile = find_profile("Video Streaming").expect("builtin profile");
    let guest = build_guest(&GuestSpec::container(), &profile, 1, 0.01).expect("valid guest");
    let (base, app, instance) = guest.layer_sizes();
    println!("base      {:>12} bytes in {} files", base, guest.base.tree.len());
    println!("app       {:>12} bytes (base included)", app);
    println!("instance  {:>12} bytes (app included)", instance);

    let app_layer = guest.app.as_ref().expect("three layers");
    let fresh = clone_layer(app_layer, LayerKind::Instance).expect("app may be cloned as instance");
    println!(
        "a fresh instance cloned from the app layer shares its contents: {}",
        fresh.tree.content_eq(&app_layer.tree)
    );
    println!("cloning an instance back into a base is refused: {}", clone_layer(&fresh, LayerKind::Base).is_err());
    for entry in guest.instance.tree.manifest().iter().rev().take(3) {
        println!("  {} {} bytes {}", entry.path, entry.length, entry.kind);
    }
}
