//! Block delta of a 1 MiB file after a handful of edits.
//!
//!     cargo run --example delta_sync

use layermig::delta_sync::{apply_delta, compute_delta, compute_signature, DEFAULT_BLOCK_SIZE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let basis: Vec<u8> = (0..1 << 20).map(|_| rng.gen()).collect();
    let mut target = basis.clone();
    target[300_000] ^= 1;
    target.splice(600_000..600_000, *b"inserted bytes shift everything after them");
    target.truncate(1_000_000);

    let sig = compute_signature(&basis, DEFAULT_BLOCK_SIZE).expect("valid block size");
    let (delta, stats) = compute_delta(&sig, &target);
    let rebuilt = apply_delta(&basis, &delta).expect("delta matches its basis");
    assert_eq!(rebuilt, target);

    println!("blocks in signature   {}", sig.block_count());
    println!("signature bytes       {}", stats.signature_bytes);
    println!("delta ops             {}", delta.ops.len());
    println!("literal bytes         {}", stats.literal_bytes);
    println!("wire bytes            {}", stats.wire_bytes);
    println!("full copy would send  {}", target.len());
}
