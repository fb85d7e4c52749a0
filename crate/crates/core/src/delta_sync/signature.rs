use serde::{Deserialize, Serialize};

use super::{check_block_size, strong_digest, weak_checksum, StrongDigest, SyncError};
use super::SIGNATURE_ENTRY_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSignature {
    pub weak: u32,
    pub strong: StrongDigest,
}

/// Per-block checksums of a basis. The last block may be short.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSignature {
    pub block_size: usize,
    pub blocks: Vec<BlockSignature>,
    pub total_length: u64,
    /// Strong digest of the whole basis.
    pub digest: StrongDigest,
}

impl FileSignature {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Length of block `index`; only the last block can be shorter than
    /// `block_size`.
    pub fn block_len(&self, index: usize) -> usize {
        let start = index as u64 * self.block_size as u64;
        (self.total_length - start).min(self.block_size as u64) as usize
    }

    /// Bytes charged for sending this signature.
    pub fn wire_size(&self) -> u64 {
        self.blocks.len() as u64 * SIGNATURE_ENTRY_BYTES
    }

    /// Trailing block when it is shorter than `block_size`.
    pub(crate) fn short_tail(&self) -> Option<(usize, BlockSignature)> {
        let last = self.blocks.len().checked_sub(1)?;
        let len = self.block_len(last);
        (len < self.block_size).then(|| (len, self.blocks[last]))
    }
}

pub fn compute_signature(data: &[u8], block_size: usize) -> Result<FileSignature, SyncError> {
    check_block_size(block_size)?;
    let blocks = data
        .chunks(block_size)
        .map(|block| BlockSignature {
            weak: weak_checksum(block),
            strong: strong_digest(block),
        })
        .collect();
    Ok(FileSignature {
        block_size,
        blocks,
        total_length: data.len() as u64,
        digest: strong_digest(data),
    })
}
