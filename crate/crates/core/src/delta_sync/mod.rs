//! Block-based incremental file synchronization.
//!
//! The receiver holds a *basis* and publishes its [`FileSignature`]: one weak
//! rolling checksum and one strong digest per fixed-size block. The sender
//! scans its *target* against that signature and emits a [`FileDelta`] made
//! of block copies and literal bytes, which the receiver applies to its basis.
//!
//! Strong digests are BLAKE3 truncated to 128 bits, everywhere.
//!
//! Wire accounting is a fixed model, not a real protocol:
//!
//! | item                | bytes                                   |
//! |---------------------|-----------------------------------------|
//! | signature           | `block_count * (4 + 16)`                |
//! | `Copy` op           | 9                                       |
//! | `Literal` op        | `5 + ceil(len * compression_ratio)`     |
//! | per file            | 64                                      |
//!
//! Compression is modeled by scaling literal payload bytes; nothing is
//! actually compressed.

mod delta;
mod rolling;
mod signature;
mod tree;

pub use delta::{apply_delta, compute_delta, DeltaOp, FileDelta};
pub use rolling::{weak_checksum, RollingChecksum};
pub use signature::{compute_signature, BlockSignature, FileSignature};
pub use tree::{
    apply_tree_delta, identical_file_stats, sync_tree, sync_tree_with, CompressionModel,
    FileChange, SyncOptions, TreeDelta,
};

use serde::{Deserialize, Serialize};
use std::ops::AddAssign;

pub const DIGEST_LEN: usize = 16;
pub const MIN_BLOCK_SIZE: usize = 16;
pub const DEFAULT_BLOCK_SIZE: usize = 2048;

pub const SIGNATURE_ENTRY_BYTES: u64 = 4 + DIGEST_LEN as u64;
pub const COPY_OP_BYTES: u64 = 9;
pub const LITERAL_OP_BYTES: u64 = 5;
pub const FILE_OVERHEAD_BYTES: u64 = 64;

pub type StrongDigest = [u8; DIGEST_LEN];

pub fn strong_digest(data: &[u8]) -> StrongDigest {
    let hash = blake3::hash(data);
    let mut out = [0u8; DIGEST_LEN];
    out.copy_from_slice(&hash.as_bytes()[..DIGEST_LEN]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("basis does not match the digest recorded in the delta")]
    BasisMismatch,
    #[error("corrupt delta: {0}")]
    CorruptDelta(String),
}

/// Byte and file counters for one synchronization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncStats {
    /// Everything charged to the wire: signatures, op encodings, literal
    /// payload after modeled compression, per-file overhead.
    pub wire_bytes: u64,
    pub signature_bytes: u64,
    /// Raw literal payload before modeled compression.
    pub literal_bytes: u64,
    /// Literal payload as charged on the wire.
    pub compressed_literal_bytes: u64,
    /// Target bytes examined by the delta scan.
    pub scanned_bytes: u64,
    pub files_unchanged: u64,
    pub files_patched: u64,
    pub files_created: u64,
    pub files_deleted: u64,
}

impl AddAssign for SyncStats {
    fn add_assign(&mut self, o: Self) {
        self.wire_bytes += o.wire_bytes;
        self.signature_bytes += o.signature_bytes;
        self.literal_bytes += o.literal_bytes;
        self.compressed_literal_bytes += o.compressed_literal_bytes;
        self.scanned_bytes += o.scanned_bytes;
        self.files_unchanged += o.files_unchanged;
        self.files_patched += o.files_patched;
        self.files_created += o.files_created;
        self.files_deleted += o.files_deleted;
    }
}

pub(crate) fn compressed_len(len: u64, ratio: f64) -> u64 {
    if ratio == 1.0 {
        len
    } else {
        (len as f64 * ratio).ceil() as u64
    }
}

pub(crate) fn check_block_size(block_size: usize) -> Result<(), SyncError> {
    if block_size < MIN_BLOCK_SIZE {
        return Err(SyncError::InvalidArgument(format!(
            "block size {block_size} is below the minimum of {MIN_BLOCK_SIZE}"
        )));
    }
    if block_size > u32::MAX as usize {
        return Err(SyncError::InvalidArgument(format!(
            "block size {block_size} does not fit in 32 bits"
        )));
    }
    Ok(())
}
