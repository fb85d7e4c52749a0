use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::signature::FileSignature;
use super::{
    compressed_len, strong_digest, RollingChecksum, StrongDigest, SyncError, SyncStats,
    COPY_OP_BYTES, LITERAL_OP_BYTES,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaOp {
    Copy { first_block: u32, block_count: u32 },
    Literal(Vec<u8>),
}

/// Copy/literal script that rebuilds a target from a basis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDelta {
    pub ops: Vec<DeltaOp>,
    pub target_length: u64,
    pub block_size: usize,
    pub basis_digest: StrongDigest,
}

impl FileDelta {
    pub fn literal_bytes(&self) -> u64 {
        self.ops
            .iter()
            .map(|op| match op {
                DeltaOp::Literal(bytes) => bytes.len() as u64,
                DeltaOp::Copy { .. } => 0,
            })
            .sum()
    }

    /// Encoded size of the op stream, with literal payload scaled by
    /// `compression_ratio`.
    pub fn encoded_size(&self, compression_ratio: f64) -> u64 {
        self.ops
            .iter()
            .map(|op| match op {
                DeltaOp::Copy { .. } => COPY_OP_BYTES,
                DeltaOp::Literal(bytes) => {
                    LITERAL_OP_BYTES + compressed_len(bytes.len() as u64, compression_ratio)
                }
            })
            .sum()
    }

    /// True when the script is a single copy of the whole basis.
    pub fn is_identity(&self, basis_len: u64) -> bool {
        match self.ops.as_slice() {
            [] => basis_len == 0 && self.target_length == 0,
            [DeltaOp::Copy { first_block: 0, block_count }] => {
                let blocks = basis_len.div_ceil(self.block_size as u64);
                *block_count as u64 == blocks && self.target_length == basis_len
            }
            _ => false,
        }
    }

    pub(crate) fn stats(&self, sig: &FileSignature, compression_ratio: f64) -> SyncStats {
        let literal_bytes = self.literal_bytes();
        let compressed_literal_bytes = self
            .ops
            .iter()
            .map(|op| match op {
                DeltaOp::Literal(b) => compressed_len(b.len() as u64, compression_ratio),
                DeltaOp::Copy { .. } => 0,
            })
            .sum();
        SyncStats {
            wire_bytes: sig.wire_size() + self.encoded_size(compression_ratio),
            signature_bytes: sig.wire_size(),
            literal_bytes,
            compressed_literal_bytes,
            scanned_bytes: self.target_length,
            ..SyncStats::default()
        }
    }
}

struct BlockIndex {
    // 16-bit tag table in front of the hash lookups
    tags: Vec<bool>,
    weak: HashSet<u32>,
    earliest: HashMap<(u32, StrongDigest), u32>,
    full_blocks: usize,
}

#[inline]
fn tag(weak: u32) -> usize {
    ((weak ^ (weak >> 16)) & 0xffff) as usize
}

impl BlockIndex {
    fn new(sig: &FileSignature) -> Self {
        let full_blocks = match sig.short_tail() {
            Some(_) => sig.blocks.len() - 1,
            None => sig.blocks.len(),
        };
        let mut tags = vec![false; 1 << 16];
        let mut weak = HashSet::with_capacity(full_blocks);
        let mut earliest = HashMap::with_capacity(full_blocks);
        for (i, b) in sig.blocks[..full_blocks].iter().enumerate() {
            tags[tag(b.weak)] = true;
            weak.insert(b.weak);
            earliest.entry((b.weak, b.strong)).or_insert(i as u32);
        }
        Self {
            tags,
            weak,
            earliest,
            full_blocks,
        }
    }

    #[inline]
    fn may_contain(&self, weak: u32) -> bool {
        self.tags[tag(weak)] && self.weak.contains(&weak)
    }
}

struct OpWriter<'t> {
    target: &'t [u8],
    ops: Vec<DeltaOp>,
    literal_start: usize,
}

impl OpWriter<'_> {
    fn flush_literal(&mut self, upto: usize) {
        if upto > self.literal_start {
            self.ops
                .push(DeltaOp::Literal(self.target[self.literal_start..upto].to_vec()));
        }
    }

    fn copy(&mut self, at: usize, block: u32, len: usize) {
        self.flush_literal(at);
        if let Some(DeltaOp::Copy {
            first_block,
            block_count,
        }) = self.ops.last_mut()
        {
            if *first_block + *block_count == block {
                *block_count += 1;
                self.literal_start = at + len;
                return;
            }
        }
        self.ops.push(DeltaOp::Copy {
            first_block: block,
            block_count: 1,
        });
        self.literal_start = at + len;
    }
}

/// Scans `target` against a basis signature.
///
/// Matching is greedy: at every offset the window's weak checksum is looked
/// up, and a hit is confirmed with the strong digest. The block following the
/// previous match is preferred so identical regions come out as one long
/// copy run; otherwise the earliest basis block with the same checksums wins.
/// A short trailing basis block can only match the tail of the target.
pub fn compute_delta(sig: &FileSignature, target: &[u8]) -> (FileDelta, SyncStats) {
    let delta = delta_ops(sig, target);
    let stats = delta.stats(sig, 1.0);
    (delta, stats)
}

pub(crate) fn delta_ops(sig: &FileSignature, target: &[u8]) -> FileDelta {
    let bs = sig.block_size;
    let n = target.len();
    let index = BlockIndex::new(sig);
    let tail = sig.short_tail();
    let mut w = OpWriter {
        target,
        ops: Vec::new(),
        literal_start: 0,
    };

    let mut pos = 0usize;
    let mut prev: Option<u32> = None;
    let mut roll: Option<RollingChecksum> = None;

    while pos < n {
        let remaining = n - pos;
        if remaining >= bs {
            if index.full_blocks == 0 {
                // nothing full-sized to match; only the tail check remains
                pos = n - tail.map_or(0, |(len, _)| len);
                continue;
            }
            let r = roll.get_or_insert_with(|| RollingChecksum::new(&target[pos..pos + bs]));
            let weak = r.digest();
            let mut hit = None;
            if index.may_contain(weak) {
                let strong = strong_digest(&target[pos..pos + bs]);
                if let Some(p) = prev {
                    let next = p as usize + 1;
                    if next < index.full_blocks {
                        let b = &sig.blocks[next];
                        if b.weak == weak && b.strong == strong {
                            hit = Some(next as u32);
                        }
                    }
                }
                if hit.is_none() {
                    hit = index.earliest.get(&(weak, strong)).copied();
                }
            }
            match hit {
                Some(block) => {
                    w.copy(pos, block, bs);
                    pos += bs;
                    prev = Some(block);
                    roll = None;
                }
                None => {
                    prev = None;
                    if pos + bs < n {
                        r.roll(target[pos], target[pos + bs]);
                    } else {
                        roll = None;
                    }
                    pos += 1;
                }
            }
        } else {
            if let Some((len, block)) = tail {
                if remaining == len {
                    let window = &target[pos..];
                    let rc = RollingChecksum::new(window);
                    if rc.digest() == block.weak && strong_digest(window) == block.strong {
                        w.copy(pos, (sig.blocks.len() - 1) as u32, len);
                        break;
                    }
                }
            }
            pos = n;
        }
    }
    w.flush_literal(n);

    FileDelta {
        ops: w.ops,
        target_length: n as u64,
        block_size: bs,
        basis_digest: sig.digest,
    }
}

/// Rebuilds the target from `basis`.
pub fn apply_delta(basis: &[u8], delta: &FileDelta) -> Result<Vec<u8>, SyncError> {
    if strong_digest(basis) != delta.basis_digest {
        return Err(SyncError::BasisMismatch);
    }
    let bs = delta.block_size as u64;
    if bs == 0 {
        return Err(SyncError::CorruptDelta("zero block size".into()));
    }
    let basis_len = basis.len() as u64;
    let basis_blocks = basis_len.div_ceil(bs);
    let mut out = Vec::with_capacity(delta.target_length as usize);
    for op in &delta.ops {
        match op {
            DeltaOp::Copy {
                first_block,
                block_count,
            } => {
                let end_block = *first_block as u64 + *block_count as u64;
                if *block_count == 0 || end_block > basis_blocks {
                    return Err(SyncError::CorruptDelta(format!(
                        "copy of blocks {first_block}..{end_block} but basis has {basis_blocks}"
                    )));
                }
                let start = (*first_block as u64 * bs) as usize;
                let end = (end_block * bs).min(basis_len) as usize;
                out.extend_from_slice(&basis[start..end]);
            }
            DeltaOp::Literal(bytes) => out.extend_from_slice(bytes),
        }
        if out.len() as u64 > delta.target_length {
            return Err(SyncError::CorruptDelta("output exceeds target length".into()));
        }
    }
    if out.len() as u64 != delta.target_length {
        return Err(SyncError::CorruptDelta(format!(
            "output is {} bytes, expected {}",
            out.len(),
            delta.target_length
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delta_sync::{compute_signature, SIGNATURE_ENTRY_BYTES};
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bytes(n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let mut v = vec![0u8; n];
        rng.fill_bytes(&mut v);
        v
    }

    fn roundtrip(basis: &[u8], target: &[u8], bs: usize) -> (FileDelta, SyncStats) {
        let sig = compute_signature(basis, bs).unwrap();
        let (delta, stats) = compute_delta(&sig, target);
        let out = apply_delta(basis, &delta).unwrap();
        assert_eq!(out, target);
        (delta, stats)
    }

    #[test]
    fn identical_target_is_a_single_copy_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = random_bytes(10 * 1024 + 77, &mut rng);
        let (delta, stats) = roundtrip(&basis, &basis, 1024);
        assert_eq!(stats.literal_bytes, 0);
        assert_eq!(
            delta.ops,
            vec![DeltaOp::Copy {
                first_block: 0,
                block_count: 11
            }]
        );
        assert!(delta.is_identity(basis.len() as u64));
    }

    #[test]
    fn repeated_blocks_still_copy_as_one_run() {
        let block: Vec<u8> = (0..64u8).collect();
        let basis: Vec<u8> = block.iter().cycle().take(64 * 40).copied().collect();
        let (delta, stats) = roundtrip(&basis, &basis, 64);
        assert_eq!(stats.literal_bytes, 0);
        assert_eq!(delta.ops.len(), 1);
    }

    #[test]
    fn empty_basis_gives_all_literal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = random_bytes(5000, &mut rng);
        let (delta, stats) = roundtrip(&[], &target, 1024);
        assert_eq!(stats.literal_bytes, 5000);
        assert_eq!(delta.ops, vec![DeltaOp::Literal(target.clone())]);
        assert_eq!(stats.wire_bytes, LITERAL_OP_BYTES + 5000);
    }

    #[test]
    fn one_flipped_byte_costs_at_most_two_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = random_bytes(64 * 1024, &mut rng);
        for _ in 0..50 {
            let mut target = basis.clone();
            let at = rng.gen_range(0..target.len());
            target[at] ^= 0x5a;
            let (_, stats) = roundtrip(&basis, &target, 2048);
            assert!(stats.literal_bytes <= 2 * 2048, "{}", stats.literal_bytes);
            assert_eq!(stats.signature_bytes, 32 * SIGNATURE_ENTRY_BYTES);
        }
    }

    #[test]
    fn shifted_content_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis = random_bytes(32 * 1024, &mut rng);
        let mut target = random_bytes(333, &mut rng);
        target.extend_from_slice(&basis);
        let (_, stats) = roundtrip(&basis, &target, 512);
        assert_eq!(stats.literal_bytes, 333);
    }

    #[test]
    fn short_tail_matches_only_at_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = random_bytes(1000, &mut rng); // blocks: 512 + 488
        let (delta, _) = roundtrip(&basis, &basis, 512);
        assert_eq!(delta.ops.len(), 1);
        let mut longer = basis.clone();
        longer.push(7);
        let (_, stats) = roundtrip(&basis, &longer, 512);
        assert_eq!(stats.literal_bytes, 489);
    }

    #[test]
    fn all_literal_delta_on_empty_basis() {
        let sig = compute_signature(&[], 64).unwrap();
        let delta = FileDelta {
            ops: vec![DeltaOp::Literal(b"hello".to_vec())],
            target_length: 5,
            block_size: 64,
            basis_digest: sig.digest,
        };
        assert_eq!(apply_delta(&[], &delta).unwrap(), b"hello");
    }

    #[test]
    fn out_of_range_copy_is_corrupt() {
        let basis = vec![1u8; 100];
        let sig = compute_signature(&basis, 64).unwrap();
        let delta = FileDelta {
            ops: vec![DeltaOp::Copy {
                first_block: 2,
                block_count: 1,
            }],
            target_length: 64,
            block_size: 64,
            basis_digest: sig.digest,
        };
        assert!(matches!(
            apply_delta(&basis, &delta),
            Err(SyncError::CorruptDelta(_))
        ));
    }

    #[test]
    fn wrong_basis_is_rejected() {
        let basis = vec![1u8; 100];
        let sig = compute_signature(&basis, 64).unwrap();
        let (delta, _) = compute_delta(&sig, &basis);
        assert_eq!(
            apply_delta(&[2u8; 100], &delta),
            Err(SyncError::BasisMismatch)
        );
    }

    #[test]
    fn length_mismatch_is_corrupt() {
        let basis = vec![1u8; 100];
        let sig = compute_signature(&basis, 64).unwrap();
        let (mut delta, _) = compute_delta(&sig, &basis);
        delta.target_length += 1;
        assert!(matches!(
            apply_delta(&basis, &delta),
            Err(SyncError::CorruptDelta(_))
        ));
    }

    #[test]
    fn compression_scales_literal_payload_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let target = random_bytes(1000, &mut rng);
        let sig = compute_signature(&[], 64).unwrap();
        let delta = delta_ops(&sig, &target);
        let stats = delta.stats(&sig, 0.25);
        assert_eq!(stats.literal_bytes, 1000);
        assert_eq!(stats.compressed_literal_bytes, 250);
        assert_eq!(stats.wire_bytes, LITERAL_OP_BYTES + 250);
    }
}
