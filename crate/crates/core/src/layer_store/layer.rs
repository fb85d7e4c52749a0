use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::memory::MemoryImage;
use super::tree::FileTree;
use super::LayerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerId(u64);

impl LayerId {
    fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        LayerId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Base,
    Application,
    Instance,
}

impl LayerKind {
    fn rank(self) -> u8 {
        match self {
            LayerKind::Base => 0,
            LayerKind::Application => 1,
            LayerKind::Instance => 2,
        }
    }
}

/// One package of the layer model. A layer holds everything its parent
/// holds plus its own files; nothing is shared between layers.
#[derive(Debug, Clone)]
pub struct Layer {
    pub id: LayerId,
    pub kind: LayerKind,
    pub parent: Option<LayerId>,
    pub tree: FileTree,
    pub memory: Option<MemoryImage>,
}

impl Layer {
    pub fn base(tree: FileTree) -> Layer {
        Layer {
            id: LayerId::fresh(),
            kind: LayerKind::Base,
            parent: None,
            tree,
            memory: None,
        }
    }
}

/// Duplicates `layer` as a new layer one or two levels up.
pub fn clone_layer(layer: &Layer, new_kind: LayerKind) -> Result<Layer, LayerError> {
    if new_kind.rank() <= layer.kind.rank() {
        return Err(LayerError::InvalidTransition {
            from: layer.kind,
            to: new_kind,
        });
    }
    Ok(Layer {
        id: LayerId::fresh(),
        kind: new_kind,
        parent: Some(layer.id),
        tree: layer.tree.clone(),
        memory: None,
    })
}
