use std::sync::Arc;

use serde::{Deserialize, Serialize};

const SYNTHETIC_CONTEXT: &str = "layermig synthetic file content";
const PAGE_CONTEXT: &str = "layermig memory page content";

/// Where a file's bytes come from.
///
/// Synthetic content is an incompressible pseudo-random stream, keyed by the
/// seed, the file path and the epoch. The length only truncates the stream,
/// so growing a file keeps its prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContentDescriptor {
    Literal {
        #[serde(with = "literal_bytes")]
        bytes: Arc<[u8]>,
    },
    Synthetic {
        seed: u64,
        length: u64,
        epoch: u64,
    },
    /// A byte range of a paged memory image. `page_epochs[i]` is the
    /// last-modified epoch of page `first_page + i`.
    MemorySpan {
        seed: u64,
        page_size: u64,
        offset: u64,
        length: u64,
        first_page: u64,
        page_epochs: Arc<[u64]>,
    },
}

mod literal_bytes {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::sync::Arc;

    pub fn serialize<S: Serializer>(b: &Arc<[u8]>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_bytes(b)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<[u8]>, D::Error> {
        Vec::<u8>::deserialize(d).map(Arc::from)
    }
}

impl ContentDescriptor {
    pub fn literal(bytes: impl Into<Vec<u8>>) -> Self {
        Self::Literal {
            bytes: Arc::from(bytes.into()),
        }
    }

    pub fn synthetic(seed: u64, length: u64, epoch: u64) -> Self {
        Self::Synthetic {
            seed,
            length,
            epoch,
        }
    }

    pub fn len(&self) -> u64 {
        match self {
            Self::Literal { bytes } => bytes.len() as u64,
            Self::Synthetic { length, .. } | Self::MemorySpan { length, .. } => *length,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Literal { .. } => "literal",
            Self::Synthetic { .. } => "synthetic",
            Self::MemorySpan { .. } => "memory_span",
        }
    }

    /// Produces the bytes of this descriptor when stored at `path`.
    pub fn materialize(&self, path: &str) -> Vec<u8> {
        match self {
            Self::Literal { bytes } => bytes.to_vec(),
            Self::Synthetic {
                seed,
                length,
                epoch,
            } => {
                let mut out = vec![0u8; *length as usize];
                synthetic_stream(*seed, path, *epoch).fill(&mut out);
                out
            }
            Self::MemorySpan {
                seed,
                page_size,
                offset,
                length,
                first_page,
                page_epochs,
            } => {
                let mut out = Vec::with_capacity(*length as usize);
                let end = offset + length;
                let mut page_buf = vec![0u8; *page_size as usize];
                for (i, &epoch) in page_epochs.iter().enumerate() {
                    let page = first_page + i as u64;
                    let page_start = page * page_size;
                    let lo = (*offset).max(page_start);
                    let hi = end.min(page_start + page_size);
                    if lo >= hi {
                        continue;
                    }
                    fill_page(*seed, page, epoch, &mut page_buf);
                    out.extend_from_slice(
                        &page_buf[(lo - page_start) as usize..(hi - page_start) as usize],
                    );
                }
                out
            }
        }
    }
}

fn synthetic_stream(seed: u64, path: &str, epoch: u64) -> blake3::OutputReader {
    let mut h = blake3::Hasher::new_derive_key(SYNTHETIC_CONTEXT);
    h.update(&seed.to_le_bytes());
    h.update(&epoch.to_le_bytes());
    h.update(path.as_bytes());
    h.finalize_xof()
}

/// Content of one memory page at a given epoch.
pub(crate) fn fill_page(seed: u64, page: u64, epoch: u64, out: &mut [u8]) {
    let mut h = blake3::Hasher::new_derive_key(PAGE_CONTEXT);
    h.update(&seed.to_le_bytes());
    h.update(&page.to_le_bytes());
    h.update(&epoch.to_le_bytes());
    h.finalize_xof().fill(out);
}

/// Byte equality of two descriptors at the same path, without materializing
/// when the descriptors are identical.
pub fn content_eq(path: &str, a: &ContentDescriptor, b: &ContentDescriptor) -> bool {
    a == b || (a.len() == b.len() && a.materialize(path) == b.materialize(path))
}
