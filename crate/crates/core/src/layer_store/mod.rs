//! Synthetic file trees, the base/application/instance layer model, and
//! churning memory images.
//!
//! Nothing here touches a real disk. A [`FileTree`] maps paths to
//! [`ContentDescriptor`]s that materialize to deterministic bytes on demand,
//! which lets a 2.7 GB guest image live in a few hundred kilobytes.

mod content;
mod layer;
mod memory;
mod tree;

pub use content::{content_eq, ContentDescriptor};
pub use layer::{clone_layer, Layer, LayerId, LayerKind};
pub use memory::{
    advance_memory, chunk_path, serialize_memory, MemoryImage, CHECKPOINT_DIR,
    DEFAULT_CHUNK_SIZE, DEFAULT_PAGE_SIZE,
};
pub use tree::{normalize_path, FileTree, ManifestEntry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayerError {
    #[error("invalid path {0:?}")]
    InvalidPath(String),
    #[error("cannot clone a {from:?} layer as {to:?}")]
    InvalidTransition { from: LayerKind, to: LayerKind },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
