use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::content::{fill_page, ContentDescriptor};
use super::tree::FileTree;
use super::LayerError;

pub const DEFAULT_PAGE_SIZE: u64 = 4096;
pub const DEFAULT_CHUNK_SIZE: u64 = 4 * 1024 * 1024;
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// A paged RAM image whose pages are rewritten over time.
///
/// Page `i` holds bytes determined by `(seed, i, page_last_modified[i])`, so
/// two images with equal metadata hold equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryImage {
    pub page_size: u64,
    pub seed: u64,
    pub epoch: u64,
    pub page_last_modified: Vec<u64>,
    pub churn_rate: f64,
}

impl MemoryImage {
    /// Image covering `bytes`, rounded up to whole pages, at epoch 0.
    pub fn new(bytes: u64, page_size: u64, seed: u64, churn_rate: f64) -> Result<Self, LayerError> {
        if page_size == 0 {
            return Err(LayerError::InvalidArgument("page size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&churn_rate) {
            return Err(LayerError::InvalidArgument(format!(
                "churn rate {churn_rate} outside [0, 1]"
            )));
        }
        let pages = bytes.div_ceil(page_size);
        Ok(Self {
            page_size,
            seed,
            epoch: 0,
            page_last_modified: vec![0; pages as usize],
            churn_rate,
        })
    }

    pub fn pages(&self) -> u64 {
        self.page_last_modified.len() as u64
    }

    pub fn total_bytes(&self) -> u64 {
        self.page_size * self.pages()
    }

    pub fn page_bytes(&self, page: u64) -> Vec<u8> {
        let mut buf = vec![0u8; self.page_size as usize];
        fill_page(self.seed, page, self.page_last_modified[page as usize], &mut buf);
        buf
    }

    pub fn materialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_bytes() as usize);
        for p in 0..self.pages() {
            out.extend(self.page_bytes(p));
        }
        out
    }

    /// Digest over the page metadata, which determines every byte.
    pub fn content_digest(&self) -> [u8; 32] {
        let mut h = blake3::Hasher::new();
        h.update(&self.page_size.to_le_bytes());
        h.update(&self.seed.to_le_bytes());
        for e in &self.page_last_modified {
            h.update(&e.to_le_bytes());
        }
        *h.finalize().as_bytes()
    }

    /// Same bytes as `other`, regardless of epoch counter or churn rate.
    pub fn same_contents(&self, other: &MemoryImage) -> bool {
        self.page_size == other.page_size
            && self.seed == other.seed
            && self.page_last_modified == other.page_last_modified
    }

    pub fn pages_per_step(&self) -> usize {
        (self.churn_rate * self.pages() as f64).round() as usize
    }

    pub fn advance(&self, steps: u64) -> MemoryImage {
        advance_memory(self, steps)
    }
}

/// Runs `steps` churn epochs. Each epoch rewrites `round(churn_rate * pages)`
/// distinct pages chosen by a generator seeded from `(seed, epoch)`.
pub fn advance_memory(image: &MemoryImage, steps: u64) -> MemoryImage {
    let mut next = image.clone();
    let pages = next.pages() as usize;
    let k = next.pages_per_step().min(pages);
    for _ in 0..steps {
        next.epoch += 1;
        if k == 0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(next.seed ^ next.epoch.rotate_left(32));
        for page in rand::seq::index::sample(&mut rng, pages, k) {
            next.page_last_modified[page] = next.epoch;
        }
    }
    next
}

pub fn chunk_path(index: u64) -> String {
    format!("{CHECKPOINT_DIR}/pages-{index:05}.img")
}

/// Renders the image as checkpoint files of `chunk_size` bytes (the last one
/// may be shorter).
pub fn serialize_memory(image: &MemoryImage, chunk_size: u64) -> Result<FileTree, LayerError> {
    if chunk_size == 0 {
        return Err(LayerError::InvalidArgument("chunk size must be positive".into()));
    }
    let total = image.total_bytes();
    let mut tree = FileTree::new();
    let mut offset = 0u64;
    let mut index = 0u64;
    while offset < total {
        let length = chunk_size.min(total - offset);
        let first_page = offset / image.page_size;
        let last_page = (offset + length - 1) / image.page_size;
        let epochs: Arc<[u64]> =
            Arc::from(&image.page_last_modified[first_page as usize..=last_page as usize]);
        tree.insert(
            &chunk_path(index),
            ContentDescriptor::MemorySpan {
                seed: image.seed,
                page_size: image.page_size,
                offset,
                length,
                first_page,
                page_epochs: epochs,
            },
        )?;
        offset += length;
        index += 1;
    }
    Ok(tree)
}
