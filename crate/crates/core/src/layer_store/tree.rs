use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::content::{content_eq, ContentDescriptor};
use super::LayerError;
use crate::delta_sync::strong_digest;

/// Normalizes a slash-separated relative path.
///
/// Empty and `.` components are dropped; `..` is rejected.
pub fn normalize_path(path: &str) -> Result<String, LayerError> {
    let mut parts = Vec::new();
    for part in path.split('/') {
        match part {
            "" | "." => {}
            ".." => return Err(LayerError::InvalidPath(path.to_string())),
            p => parts.push(p),
        }
    }
    if parts.is_empty() {
        return Err(LayerError::InvalidPath(path.to_string()));
    }
    Ok(parts.join("/"))
}

/// A map from normalized paths to content, iterated in path order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileTree {
    entries: BTreeMap<String, ContentDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub length: u64,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<u64>,
    /// Hex of the 128-bit strong digest of the materialized bytes.
    pub digest: String,
}

impl FileTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a file, returning the previous descriptor.
    pub fn insert(
        &mut self,
        path: &str,
        content: ContentDescriptor,
    ) -> Result<Option<ContentDescriptor>, LayerError> {
        Ok(self.entries.insert(normalize_path(path)?, content))
    }

    pub fn remove(&mut self, path: &str) -> Option<ContentDescriptor> {
        let key = normalize_path(path).ok()?;
        self.entries.remove(&key)
    }

    pub fn get(&self, path: &str) -> Option<&ContentDescriptor> {
        match normalize_path(path) {
            Ok(key) => self.entries.get(&key),
            Err(_) => None,
        }
    }

    pub fn contains(&self, path: &str) -> bool {
        self.get(path).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ContentDescriptor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.values().map(ContentDescriptor::len).sum()
    }

    /// Entries whose path starts with `prefix` as a whole component prefix.
    pub fn subtree(&self, prefix: &str) -> FileTree {
        self.filter(|p| has_prefix(p, prefix))
    }

    /// Entries whose path does not start with `prefix`.
    pub fn without(&self, prefix: &str) -> FileTree {
        self.filter(|p| !has_prefix(p, prefix))
    }

    fn filter(&self, keep: impl Fn(&str) -> bool) -> FileTree {
        FileTree {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn remove_prefix(&mut self, prefix: &str) -> usize {
        let before = self.entries.len();
        self.entries.retain(|k, _| !has_prefix(k, prefix));
        before - self.entries.len()
    }

    /// Adds every entry of `other`, replacing entries with the same path.
    pub fn merge(&mut self, other: &FileTree) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn materialize(&self) -> BTreeMap<String, Vec<u8>> {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), v.materialize(k)))
            .collect()
    }

    /// Same paths with byte-equal contents.
    pub fn content_eq(&self, other: &FileTree) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((pa, a), (pb, b))| pa == pb && content_eq(pa, a, b))
    }

    /// Every path of `other` is present here with byte-equal contents.
    pub fn is_superset_of(&self, other: &FileTree) -> bool {
        other
            .entries
            .iter()
            .all(|(k, v)| self.entries.get(k).is_some_and(|mine| content_eq(k, mine, v)))
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.entries
            .iter()
            .map(|(path, d)| {
                let (seed, epoch) = match d {
                    ContentDescriptor::Synthetic { seed, epoch, .. } => (Some(*seed), Some(*epoch)),
                    ContentDescriptor::MemorySpan { seed, .. } => (Some(*seed), None),
                    ContentDescriptor::Literal { .. } => (None, None),
                };
                let digest = strong_digest(&d.materialize(path))
                    .iter()
                    .map(|b| format!("{b:02x}"))
                    .collect();
                ManifestEntry {
                    path: path.clone(),
                    length: d.len(),
                    kind: d.kind_name().to_string(),
                    seed,
                    epoch,
                    digest,
                }
            })
            .collect()
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes")
    }
}

fn has_prefix(path: &str, prefix: &str) -> bool {
    let prefix = prefix.trim_end_matches('/');
    prefix.is_empty()
        || path == prefix
        || (path.starts_with(prefix) && path.as_bytes().get(prefix.len()) == Some(&b'/'))
}

impl FromIterator<(String, ContentDescriptor)> for FileTree {
    /// Panics on paths that do not normalize.
    fn from_iter<I: IntoIterator<Item = (String, ContentDescriptor)>>(iter: I) -> Self {
        let mut t = FileTree::new();
        for (p, d) in iter {
            t.insert(&p, d).expect("valid path");
        }
        t
    }
}
