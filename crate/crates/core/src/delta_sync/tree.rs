use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::delta::{apply_delta, delta_ops, FileDelta};
use super::signature::compute_signature;
use super::{
    check_block_size, compressed_len, SyncError, SyncStats, COPY_OP_BYTES, DEFAULT_BLOCK_SIZE,
    FILE_OVERHEAD_BYTES, LITERAL_OP_BYTES, SIGNATURE_ENTRY_BYTES,
};
use crate::layer_store::{ContentDescriptor, FileTree};

/// Modeled compression ratios by path prefix. The longest matching prefix
/// wins; paths matching no rule use `default_ratio`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionModel {
    pub default_ratio: f64,
    pub rules: Vec<(String, f64)>,
}

impl Default for CompressionModel {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl CompressionModel {
    pub fn uniform(ratio: f64) -> Self {
        Self {
            default_ratio: ratio,
            rules: Vec::new(),
        }
    }

    pub fn with_rule(mut self, prefix: &str, ratio: f64) -> Self {
        self.rules.push((prefix.to_string(), ratio));
        self
    }

    pub fn ratio_for(&self, path: &str) -> f64 {
        self.rules
            .iter()
            .filter(|(prefix, _)| path.starts_with(prefix.as_str()))
            .max_by_key(|(prefix, _)| prefix.len())
            .map_or(self.default_ratio, |(_, r)| *r)
    }

    fn validate(&self) -> Result<(), SyncError> {
        let ok = |r: f64| r > 0.0 && r <= 1.0;
        if ok(self.default_ratio) && self.rules.iter().all(|(_, r)| ok(*r)) {
            Ok(())
        } else {
            Err(SyncError::InvalidArgument(
                "compression ratios must lie in (0, 1]".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncOptions {
    pub block_size: usize,
    pub compression: CompressionModel,
    /// Compare files whose descriptors are identical instead of skipping
    /// them on metadata, as happens for whole-disk images whose timestamps
    /// always change. The comparison is charged analytically with
    /// [`identical_file_stats`].
    pub compare_unchanged: bool,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            compression: CompressionModel::default(),
            compare_unchanged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FileChange {
    Unchanged,
    Patched(FileDelta),
    /// A file missing from the basis. The descriptor stands in for the
    /// literal bytes; its full length is charged as literal payload.
    Created(ContentDescriptor),
    Deleted,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeDelta {
    pub changes: BTreeMap<String, FileChange>,
}

impl TreeDelta {
    pub fn count(&self, pred: impl Fn(&FileChange) -> bool) -> usize {
        self.changes.values().filter(|c| pred(c)).count()
    }
}

/// Stats of syncing a file of `len` bytes onto an identical basis: the
/// signature goes out and one copy op comes back.
pub fn identical_file_stats(len: u64, block_size: usize) -> SyncStats {
    let signature_bytes = len.div_ceil(block_size as u64) * SIGNATURE_ENTRY_BYTES;
    SyncStats {
        wire_bytes: signature_bytes + if len > 0 { COPY_OP_BYTES } else { 0 },
        signature_bytes,
        scanned_bytes: len,
        ..SyncStats::default()
    }
}

pub fn sync_tree(
    basis: &FileTree,
    target: &FileTree,
    block_size: usize,
) -> Result<(TreeDelta, SyncStats), SyncError> {
    sync_tree_with(
        basis,
        target,
        &SyncOptions {
            block_size,
            ..SyncOptions::default()
        },
    )
}

/// Classifies every path of the union of both trees and computes deltas for
/// files whose contents differ.
pub fn sync_tree_with(
    basis: &FileTree,
    target: &FileTree,
    opts: &SyncOptions,
) -> Result<(TreeDelta, SyncStats), SyncError> {
    check_block_size(opts.block_size)?;
    opts.compression.validate()?;
    let bs = opts.block_size;
    let mut changes = BTreeMap::new();
    let mut stats = SyncStats::default();

    for (path, want) in target.iter() {
        let ratio = opts.compression.ratio_for(path);
        let mut file = SyncStats {
            wire_bytes: FILE_OVERHEAD_BYTES,
            ..SyncStats::default()
        };
        let change = match basis.get(path) {
            Some(have) if have == want => {
                if opts.compare_unchanged {
                    file += identical_file_stats(want.len(), bs);
                }
                file.files_unchanged = 1;
                FileChange::Unchanged
            }
            Some(have) => {
                let old = have.materialize(path);
                let new = want.materialize(path);
                let sig = compute_signature(&old, bs)?;
                let delta = delta_ops(&sig, &new);
                file += delta.stats(&sig, ratio);
                if old == new {
                    file.files_unchanged = 1;
                    FileChange::Unchanged
                } else {
                    file.files_patched = 1;
                    FileChange::Patched(delta)
                }
            }
            None => {
                let len = want.len();
                if len > 0 {
                    let packed = compressed_len(len, ratio);
                    file.wire_bytes += LITERAL_OP_BYTES + packed;
                    file.literal_bytes = len;
                    file.compressed_literal_bytes = packed;
                }
                file.files_created = 1;
                FileChange::Created(want.clone())
            }
        };
        stats += file;
        changes.insert(path.to_string(), change);
    }
    for path in basis.paths() {
        if !target.contains(path) {
            stats += SyncStats {
                wire_bytes: FILE_OVERHEAD_BYTES,
                files_deleted: 1,
                ..SyncStats::default()
            };
            changes.insert(path.to_string(), FileChange::Deleted);
        }
    }
    Ok((TreeDelta { changes }, stats))
}

/// Applies a tree delta to the basis it was computed against.
pub fn apply_tree_delta(basis: &FileTree, delta: &TreeDelta) -> Result<FileTree, SyncError> {
    let mut out = basis.clone();
    for (path, change) in &delta.changes {
        let bad_path = |e| SyncError::CorruptDelta(format!("{e}"));
        match change {
            FileChange::Unchanged => {
                if !basis.contains(path) {
                    return Err(SyncError::CorruptDelta(format!(
                        "{path} marked unchanged but missing from basis"
                    )));
                }
            }
            FileChange::Patched(d) => {
                let old = basis
                    .get(path)
                    .ok_or_else(|| SyncError::CorruptDelta(format!("{path} missing from basis")))?
                    .materialize(path);
                let new = apply_delta(&old, d)?;
                out.insert(path, ContentDescriptor::literal(new))
                    .map_err(bad_path)?;
            }
            FileChange::Created(d) => {
                out.insert(path, d.clone()).map_err(bad_path)?;
            }
            FileChange::Deleted => {
                out.remove(path);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delta_sync::compute_delta;
    use proptest::prelude::*;

    fn tree(files: &[(&str, ContentDescriptor)]) -> FileTree {
        files
            .iter()
            .map(|(p, d)| (p.to_string(), d.clone()))
            .collect()
    }

    #[test]
    fn equal_trees_are_unchanged() {
        let t = tree(&[
            ("a", ContentDescriptor::synthetic(1, 5000, 0)),
            ("b/c", ContentDescriptor::synthetic(1, 10, 0)),
        ]);
        let (d, s) = sync_tree(&t, &t, 1024).unwrap();
        assert_eq!(d.count(|c| *c == FileChange::Unchanged), 2);
        assert_eq!(s.literal_bytes, 0);
        assert_eq!(s.wire_bytes, 2 * FILE_OVERHEAD_BYTES);
        assert!(apply_tree_delta(&t, &d).unwrap().content_eq(&t));
    }

    #[test]
    fn added_file_is_one_literal() {
        let basis = tree(&[("a", ContentDescriptor::synthetic(1, 5000, 0))]);
        let mut target = basis.clone();
        target
            .insert("new", ContentDescriptor::synthetic(2, 10 * 1024, 0))
            .unwrap();
        let (d, s) = sync_tree(&basis, &target, 1024).unwrap();
        assert_eq!(d.count(|c| matches!(c, FileChange::Created(_))), 1);
        assert_eq!(s.files_created, 1);
        assert_eq!(s.literal_bytes, 10 * 1024);
        assert_eq!(
            s.wire_bytes,
            2 * FILE_OVERHEAD_BYTES + LITERAL_OP_BYTES + 10 * 1024
        );
    }

    #[test]
    fn patched_and_deleted_files_apply() {
        let basis = tree(&[
            ("keep", ContentDescriptor::synthetic(1, 3000, 0)),
            ("grow", ContentDescriptor::synthetic(1, 3000, 0)),
            ("gone", ContentDescriptor::synthetic(1, 100, 0)),
        ]);
        let target = tree(&[
            ("keep", ContentDescriptor::synthetic(1, 3000, 0)),
            ("grow", ContentDescriptor::synthetic(1, 4000, 0)),
        ]);
        let (d, s) = sync_tree(&basis, &target, 512).unwrap();
        assert_eq!(s.files_patched, 1);
        assert_eq!(s.files_deleted, 1);
        // 3000 = 5 full blocks + 440 tail; the tail block cannot match mid-file
        assert_eq!(s.literal_bytes, 1000 + 440);
        let out = apply_tree_delta(&basis, &d).unwrap();
        assert!(out.content_eq(&target));
    }

    #[test]
    fn compression_rules_pick_longest_prefix() {
        let m = CompressionModel::uniform(1.0)
            .with_rule("rootfs/", 0.5)
            .with_rule("rootfs/app/", 0.25);
        assert_eq!(m.ratio_for("rootfs/app/x"), 0.25);
        assert_eq!(m.ratio_for("rootfs/base/x"), 0.5);
        assert_eq!(m.ratio_for("checkpoint/x"), 1.0);

        let basis = FileTree::new();
        let target = tree(&[("rootfs/app/x", ContentDescriptor::synthetic(1, 1000, 0))]);
        let opts = SyncOptions {
            block_size: 64,
            compression: m,
            compare_unchanged: false,
        };
        let (_, s) = sync_tree_with(&basis, &target, &opts).unwrap();
        assert_eq!(s.literal_bytes, 1000);
        assert_eq!(s.compressed_literal_bytes, 250);
        assert_eq!(s.wire_bytes, FILE_OVERHEAD_BYTES + LITERAL_OP_BYTES + 250);
    }

    #[test]
    fn invalid_options_are_rejected() {
        let t = FileTree::new();
        assert!(sync_tree(&t, &t, 8).is_err());
        let opts = SyncOptions {
            compression: CompressionModel::uniform(0.0),
            ..SyncOptions::default()
        };
        assert!(sync_tree_with(&t, &t, &opts).is_err());
    }

    #[test]
    fn full_compare_charges_signature_and_copy() {
        let t = tree(&[("img", ContentDescriptor::synthetic(4, 10_000, 0))]);
        let opts = SyncOptions {
            block_size: 1000,
            compare_unchanged: true,
            ..SyncOptions::default()
        };
        let (_, s) = sync_tree_with(&t, &t, &opts).unwrap();
        assert_eq!(s.signature_bytes, 10 * SIGNATURE_ENTRY_BYTES);
        assert_eq!(
            s.wire_bytes,
            FILE_OVERHEAD_BYTES + 10 * SIGNATURE_ENTRY_BYTES + COPY_OP_BYTES
        );
        assert_eq!(s.scanned_bytes, 10_000);
    }

    #[test]
    fn clone_then_sync_sends_only_new_files() {
        // per-file brute force: a path costs literal bytes only when the
        // basis lacks it or holds different bytes
        let app = tree(&[
            ("base/1", ContentDescriptor::synthetic(1, 7000, 0)),
            ("base/2", ContentDescriptor::synthetic(1, 9000, 0)),
            ("app/bin", ContentDescriptor::synthetic(2, 20_000, 0)),
        ]);
        let mut instance = app.clone();
        instance
            .insert("inst/work", ContentDescriptor::synthetic(3, 12_345, 1))
            .unwrap();
        instance
            .insert("inst/state", ContentDescriptor::literal(vec![9u8; 777]))
            .unwrap();
        let (_, s) = sync_tree(&app, &instance, 1024).unwrap();
        let expected: u64 = instance
            .iter()
            .filter(|(p, d)| app.get(p).map(|b| b.materialize(p)) != Some(d.materialize(p)))
            .map(|(_, d)| d.len())
            .sum();
        assert_eq!(s.literal_bytes, expected);
        assert_eq!(expected, 12_345 + 777);
    }

    proptest! {
        #[test]
        fn identical_stats_match_real_delta(
            len in 0usize..20_000,
            bs in 16usize..3000,
            seed in any::<u64>(),
            zeros in any::<bool>(),
        ) {
            let data = if zeros {
                vec![0u8; len]
            } else {
                ContentDescriptor::synthetic(seed, len as u64, 0).materialize("p")
            };
            let sig = compute_signature(&data, bs).unwrap();
            let (_, real) = compute_delta(&sig, &data);
            prop_assert_eq!(identical_file_stats(len as u64, bs), real);
        }
    }
}
