//! Guest construction, checkpoint and restore.
//!
//! A guest is three stacked layers. The base holds the operating system
//! image, the application layer adds the installed application and its data,
//! and the instance layer adds files the running service works on plus the
//! virtualization's own runtime state. Checkpointing writes the memory image
//! into the instance tree under `checkpoint/`; restoring reads it back.

use serde::{Deserialize, Serialize};

use crate::delta_sync::CompressionModel;
use crate::layer_store::{
    clone_layer, serialize_memory, ContentDescriptor, FileTree, Layer, LayerError, LayerKind,
    MemoryImage, CHECKPOINT_DIR, DEFAULT_CHUNK_SIZE, DEFAULT_PAGE_SIZE,
};
use crate::workloads::AppProfile;
use crate::MB;

pub const BASE_DIR: &str = "rootfs/base";
pub const APP_DIR: &str = "rootfs/app";
pub const WORK_DIR: &str = "rootfs/instance/work";
pub const STATE_DIR: &str = "rootfs/instance/state";
pub const INVENTORY_PATH: &str = "checkpoint/inventory.json";

/// Install footprint per application binary file.
const APP_FILE_BYTES: u64 = 100_000;
const STATE_FILE_BYTES: u64 = 256 * 1024;
const MEMORY_SEED_SALT: u64 = 0x6d65_6d6f_7279;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Virtualization {
    Container,
    VirtualMachine,
}

impl Virtualization {
    pub fn name(self) -> &'static str {
        match self {
            Virtualization::Container => "container",
            Virtualization::VirtualMachine => "virtual_machine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuestSpec {
    pub virtualization: Virtualization,
    pub base_tree_size: u64,
    /// Runtime state of the virtualization layer itself that differs on
    /// every migration, whatever the application.
    pub virtualization_overhead_bytes: u64,
    #[serde(default = "default_base_files")]
    pub base_file_count: u64,
    /// Modeled compression ratio for base image files.
    pub base_compression: f64,
    /// Compare every file's contents instead of skipping unchanged files on
    /// metadata. Disk-image guests need this because their image timestamps
    /// always move.
    #[serde(default)]
    pub full_compare: bool,
    #[serde(default = "default_page_size")]
    pub page_size: u64,
    #[serde(default = "default_chunk_size")]
    pub checkpoint_chunk_size: u64,
}

fn default_base_files() -> u64 {
    8000
}
fn default_page_size() -> u64 {
    DEFAULT_PAGE_SIZE
}
fn default_chunk_size() -> u64 {
    DEFAULT_CHUNK_SIZE
}

impl GuestSpec {
    pub fn container() -> Self {
        Self {
            virtualization: Virtualization::Container,
            base_tree_size: 400 * MB,
            virtualization_overhead_bytes: 400_000,
            base_file_count: default_base_files(),
            base_compression: 0.35,
            full_compare: false,
            page_size: DEFAULT_PAGE_SIZE,
            checkpoint_chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    pub fn virtual_machine() -> Self {
        Self {
            virtualization: Virtualization::VirtualMachine,
            base_tree_size: 2700 * MB,
            virtualization_overhead_bytes: 65 * MB,
            base_file_count: default_base_files(),
            base_compression: 0.2,
            full_compare: true,
            page_size: DEFAULT_PAGE_SIZE,
            checkpoint_chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }

    pub fn for_kind(v: Virtualization) -> Self {
        match v {
            Virtualization::Container => Self::container(),
            Virtualization::VirtualMachine => Self::virtual_machine(),
        }
    }

    pub fn validate(&self) -> Result<(), GuestError> {
        let bad = |m: &str| Err(GuestError::InvalidArgument(m.to_string()));
        if self.base_tree_size == 0 {
            return bad("base_tree_size must be positive");
        }
        if self.base_file_count == 0 {
            return bad("base_file_count must be positive");
        }
        if !(self.base_compression > 0.0 && self.base_compression <= 1.0) {
            return bad("base_compression must be in (0, 1]");
        }
        if self.page_size == 0 || self.checkpoint_chunk_size == 0 {
            return bad("page_size and checkpoint_chunk_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunState {
    Running,
    Suspended,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GuestError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("corrupt instance: {0}")]
    CorruptInstance(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

#[derive(Debug, Clone)]
pub struct GuestInstance {
    pub spec: GuestSpec,
    pub profile: AppProfile,
    pub seed: u64,
    pub scale: f64,
    pub base: Layer,
    /// Absent on a destination that only ever held the base.
    pub app: Option<Layer>,
    /// Carries the memory image while running or suspended at the source.
    pub instance: Layer,
    pub run_state: RunState,
}

/// Splits `total` into `n` sizes that differ by at most one byte.
fn split_exact(total: u64, n: u64) -> impl Iterator<Item = u64> {
    (0..n).map(move |i| total / n + u64::from(i < total % n))
}

pub(crate) fn scaled(bytes: u64, scale: f64) -> u64 {
    (bytes as f64 * scale).round() as u64
}

pub fn base_tree(spec: &GuestSpec, seed: u64, scale: f64) -> FileTree {
    let mut t = FileTree::new();
    let sizes = split_exact(scaled(spec.base_tree_size, scale), spec.base_file_count);
    for (i, len) in sizes.enumerate() {
        t.insert(
            &format!("{BASE_DIR}/usr/f{i:05}"),
            ContentDescriptor::synthetic(seed, len, 0),
        )
        .expect("static path");
    }
    t
}

/// The files an application adds on top of the base.
pub fn app_files(spec: &GuestSpec, profile: &AppProfile, seed: u64, scale: f64) -> FileTree {
    let mut t = FileTree::new();
    let slug = profile.slug();
    let install = profile.install_bytes.get(spec.virtualization);
    if install > 0 {
        let n = (install as f64 / APP_FILE_BYTES as f64).round().max(1.0) as u64;
        for (i, len) in split_exact(scaled(install, scale), n).enumerate() {
            t.insert(
                &format!("{APP_DIR}/{slug}/bin/f{i:04}"),
                ContentDescriptor::synthetic(seed, len, 0),
            )
            .expect("slug is path-safe");
        }
    }
    if profile.data_bytes > 0 {
        t.insert(
            &format!("{APP_DIR}/{slug}/data/d0000"),
            ContentDescriptor::synthetic(seed, scaled(profile.data_bytes, scale), 0),
        )
        .expect("slug is path-safe");
    }
    t
}

/// Files that only the running instance has, at memory epoch `epoch`.
fn instance_files(spec: &GuestSpec, profile: &AppProfile, seed: u64, scale: f64, epoch: u64) -> FileTree {
    let mut t = FileTree::new();
    if profile.instance_unique_file_bytes > 0 {
        t.insert(
            &format!("{WORK_DIR}/u0000"),
            ContentDescriptor::synthetic(seed, scaled(profile.instance_unique_file_bytes, scale), epoch),
        )
        .expect("static path");
    }
    let overhead = spec.virtualization_overhead_bytes;
    let n = overhead.div_ceil(STATE_FILE_BYTES);
    for (i, len) in split_exact(scaled(overhead, scale), n).enumerate() {
        t.insert(
            &format!("{STATE_DIR}/s{i:04}"),
            ContentDescriptor::synthetic(seed, len, epoch),
        )
        .expect("static path");
    }
    t
}

/// Compression ratios by area of the guest tree.
pub fn compression_model(spec: &GuestSpec, profile: &AppProfile) -> CompressionModel {
    CompressionModel::uniform(1.0)
        .with_rule(&format!("{BASE_DIR}/"), spec.base_compression)
        .with_rule(&format!("{APP_DIR}/"), profile.filesystem_compression)
        .with_rule(&format!("{WORK_DIR}/"), profile.filesystem_compression)
        .with_rule(&format!("{STATE_DIR}/"), 1.0)
        .with_rule(&format!("{CHECKPOINT_DIR}/"), profile.memory_compression)
}

pub fn build_guest(
    spec: &GuestSpec,
    profile: &AppProfile,
    seed: u64,
    scale: f64,
) -> Result<GuestInstance, GuestError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(GuestError::InvalidArgument(format!(
            "scale {scale} outside (0, 1]"
        )));
    }
    spec.validate()?;
    profile.validate().map_err(GuestError::InvalidArgument)?;

    let base = Layer::base(base_tree(spec, seed, scale));
    let mut app = clone_layer(&base, LayerKind::Application)?;
    app.tree.merge(&app_files(spec, profile, seed, scale));
    let mut instance = clone_layer(&app, LayerKind::Instance)?;
    instance
        .tree
        .merge(&instance_files(spec, profile, seed, scale, 0));
    instance.memory = Some(MemoryImage::new(
        scaled(profile.memory_bytes, scale),
        spec.page_size,
        seed ^ MEMORY_SEED_SALT,
        profile.memory_churn_rate,
    )?);
    Ok(GuestInstance {
        spec: spec.clone(),
        profile: profile.clone(),
        seed,
        scale,
        base,
        app: Some(app),
        instance,
        run_state: RunState::Running,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Inventory {
    page_size: u64,
    pages: u64,
    seed: u64,
    epoch: u64,
    churn_rate: f64,
    chunk_size: u64,
    /// Run-length encoded per-page epochs: `[epoch, run length]`.
    page_epochs: Vec<(u64, u64)>,
}

impl Inventory {
    fn of(image: &MemoryImage, chunk_size: u64) -> Self {
        let mut runs: Vec<(u64, u64)> = Vec::new();
        for &e in &image.page_last_modified {
            match runs.last_mut() {
                Some((last, n)) if *last == e => *n += 1,
                _ => runs.push((e, 1)),
            }
        }
        Inventory {
            page_size: image.page_size,
            pages: image.pages(),
            seed: image.seed,
            epoch: image.epoch,
            churn_rate: image.churn_rate,
            chunk_size,
            page_epochs: runs,
        }
    }

    fn image(&self) -> Result<MemoryImage, GuestError> {
        let mut epochs = Vec::with_capacity(self.pages as usize);
        for &(e, n) in &self.page_epochs {
            epochs.extend(std::iter::repeat(e).take(n as usize));
        }
        if epochs.len() as u64 != self.pages || self.page_size == 0 {
            return Err(GuestError::CorruptInstance(
                "inventory page count does not match its epoch runs".into(),
            ));
        }
        Ok(MemoryImage {
            page_size: self.page_size,
            seed: self.seed,
            epoch: self.epoch,
            page_last_modified: epochs,
            churn_rate: self.churn_rate,
        })
    }
}

impl GuestInstance {
    /// A suspended guest assembled from layers received at a destination.
    /// Its memory is unknown until [`GuestInstance::restore`] reads the
    /// checkpoint.
    pub fn suspended_from_layers(
        template: &GuestInstance,
        base: Layer,
        app: Option<Layer>,
        mut instance: Layer,
    ) -> GuestInstance {
        instance.memory = None;
        GuestInstance {
            spec: template.spec.clone(),
            profile: template.profile.clone(),
            seed: template.seed,
            scale: template.scale,
            base,
            app,
            instance,
            run_state: RunState::Suspended,
        }
    }

    pub fn memory(&self) -> Option<&MemoryImage> {
        self.instance.memory.as_ref()
    }

    pub fn compression(&self) -> CompressionModel {
        compression_model(&self.spec, &self.profile)
    }

    pub fn has_checkpoint(&self) -> bool {
        !self.instance.tree.subtree(CHECKPOINT_DIR).is_empty()
    }

    /// Lets the service run for `steps` epochs: memory churns and the
    /// instance-only files are rewritten.
    pub fn advance(&mut self, steps: u64) -> Result<(), GuestError> {
        if self.run_state != RunState::Running {
            return Err(GuestError::InvalidState("guest is suspended".into()));
        }
        let memory = self
            .instance
            .memory
            .as_ref()
            .ok_or_else(|| GuestError::InvalidState("running guest without memory".into()))?
            .advance(steps);
        let files = instance_files(&self.spec, &self.profile, self.seed, self.scale, memory.epoch);
        self.instance.tree.merge(&files);
        self.instance.memory = Some(memory);
        Ok(())
    }

    /// Suspends the guest and writes its memory under `checkpoint/`.
    pub fn checkpoint(&mut self) -> Result<(), GuestError> {
        if self.run_state != RunState::Running {
            return Err(GuestError::InvalidState("guest is already suspended".into()));
        }
        let memory = self
            .memory()
            .ok_or_else(|| GuestError::InvalidState("running guest without memory".into()))?;
        let chunk = self.spec.checkpoint_chunk_size;
        let pages = serialize_memory(memory, chunk)?;
        let inventory = serde_json::to_vec(&Inventory::of(memory, chunk))
            .expect("inventory serializes");
        self.instance.tree.merge(&pages);
        self.instance
            .tree
            .insert(INVENTORY_PATH, ContentDescriptor::literal(inventory))?;
        self.run_state = RunState::Suspended;
        Ok(())
    }

    /// Rebuilds memory from the checkpoint files, removes them, and resumes.
    pub fn restore(&mut self) -> Result<(), GuestError> {
        if self.run_state != RunState::Suspended {
            return Err(GuestError::InvalidState("guest is running".into()));
        }
        let raw = self
            .instance
            .tree
            .get(INVENTORY_PATH)
            .ok_or_else(|| GuestError::CorruptInstance("checkpoint inventory missing".into()))?
            .materialize(INVENTORY_PATH);
        let inventory: Inventory = serde_json::from_slice(&raw)
            .map_err(|e| GuestError::CorruptInstance(format!("bad inventory: {e}")))?;
        let image = inventory.image()?;
        let expected = serialize_memory(&image, inventory.chunk_size)
            .map_err(|e| GuestError::CorruptInstance(e.to_string()))?;
        let found = self.instance.tree.subtree(CHECKPOINT_DIR).without(INVENTORY_PATH);
        if !found.content_eq(&expected) {
            return Err(GuestError::CorruptInstance(
                "checkpoint pages do not match the inventory".into(),
            ));
        }
        if let Some(current) = self.memory() {
            if !current.same_contents(&image) {
                return Err(GuestError::CorruptInstance(
                    "memory changed while suspended".into(),
                ));
            }
        }
        self.instance.tree.remove_prefix(CHECKPOINT_DIR);
        self.instance.memory = Some(image);
        self.run_state = RunState::Running;
        Ok(())
    }

    /// Every layer's byte total, in stacking order.
    pub fn layer_sizes(&self) -> (u64, u64, u64) {
        (
            self.base.tree.total_bytes(),
            self.app.as_ref().map_or(0, |a| a.tree.total_bytes()),
            self.instance.tree.total_bytes(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{builtin_profiles, find_profile};

    fn guest(profile: &str, scale: f64) -> GuestInstance {
        build_guest(
            &GuestSpec::container(),
            &find_profile(profile).unwrap(),
            11,
            scale,
        )
        .unwrap()
    }

    #[test]
    fn no_application_adds_nothing() {
        let g = guest("no_application", 1.0);
        let (base, app, _) = g.layer_sizes();
        assert_eq!(base, 400 * MB);
        assert_eq!(app, base);
    }

    #[test]
    fn face_detection_app_layer_size() {
        let g = guest("face_detection", 1.0);
        let (base, app, _) = g.layer_sizes();
        assert_eq!(app - base, 655 * MB);
        let vm = build_guest(
            &GuestSpec::virtual_machine(),
            &find_profile("face_detection").unwrap(),
            11,
            1.0,
        )
        .unwrap();
        let (b, a, _) = vm.layer_sizes();
        assert_eq!(a - b, 565 * MB);
    }

    #[test]
    fn sizes_scale_exactly() {
        for p in builtin_profiles() {
            let full = guest(&p.name, 1.0);
            let small = guest(&p.name, 0.01);
            let (b1, a1, i1) = full.layer_sizes();
            let (b2, a2, i2) = small.layer_sizes();
            assert_eq!(b1, 100 * b2);
            assert_eq!(a1, 100 * a2);
            assert_eq!(i1, 100 * i2);
        }
    }

    #[test]
    fn bad_scale_is_rejected() {
        let spec = GuestSpec::container();
        let p = find_profile("game_server").unwrap();
        assert!(build_guest(&spec, &p, 1, 0.0).is_err());
        assert!(build_guest(&spec, &p, 1, 1.5).is_err());
    }

    #[test]
    fn layers_are_supersets() {
        for p in builtin_profiles() {
            let g = guest(&p.name, 0.001);
            let app = g.app.as_ref().unwrap();
            assert!(app.tree.is_superset_of(&g.base.tree));
            assert!(g.instance.tree.is_superset_of(&app.tree));
            assert_eq!(app.parent, Some(g.base.id));
            assert_eq!(g.instance.parent, Some(app.id));
        }
    }

    #[test]
    fn construction_is_reproducible() {
        let a = guest("video_streaming", 0.001);
        let b = guest("video_streaming", 0.001);
        assert_eq!(a.instance.tree, b.instance.tree);
        assert_eq!(a.memory(), b.memory());
    }

    #[test]
    fn checkpoint_adds_memory_files() {
        let mut g = guest("ram_simulation", 1.0);
        let before = g.instance.tree.total_bytes();
        let mem = g.memory().unwrap().total_bytes();
        g.checkpoint().unwrap();
        assert_eq!(g.run_state, RunState::Suspended);
        let pages = g.instance.tree.subtree(CHECKPOINT_DIR).without(INVENTORY_PATH);
        assert_eq!(pages.total_bytes(), mem);
        assert!(mem >= 330 * MB);
        assert!(g.instance.tree.total_bytes() > before + mem);
        assert!(matches!(g.checkpoint(), Err(GuestError::InvalidState(_))));
    }

    #[test]
    fn checkpoint_restore_roundtrip() {
        let mut g = guest("game_server", 0.01);
        g.advance(3).unwrap();
        let mem = g.memory().unwrap().clone();
        let tree = g.instance.tree.clone();
        assert!(matches!(g.restore(), Err(GuestError::InvalidState(_))));
        g.checkpoint().unwrap();
        let first = g.instance.tree.subtree(CHECKPOINT_DIR).materialize();
        g.restore().unwrap();
        assert_eq!(g.memory().unwrap(), &mem);
        assert_eq!(g.instance.tree, tree);
        g.checkpoint().unwrap();
        assert_eq!(g.instance.tree.subtree(CHECKPOINT_DIR).materialize(), first);
    }

    #[test]
    fn destination_restore_rebuilds_memory() {
        let mut src = guest("video_streaming", 0.001);
        src.advance(2).unwrap();
        src.checkpoint().unwrap();
        let mut received = src.instance.clone();
        received.memory = None;
        let mut dst = GuestInstance::suspended_from_layers(&src, src.base.clone(), None, received);
        assert!(dst.memory().is_none());
        dst.restore().unwrap();
        assert_eq!(
            dst.memory().unwrap().materialize(),
            src.memory().unwrap().materialize()
        );
    }

    #[test]
    fn missing_checkpoint_is_corrupt() {
        let mut g = guest("game_server", 0.001);
        g.checkpoint().unwrap();
        g.instance.tree.remove(INVENTORY_PATH);
        assert!(matches!(g.restore(), Err(GuestError::CorruptInstance(_))));

        let mut g = guest("game_server", 0.001);
        g.checkpoint().unwrap();
        g.instance.tree.remove("checkpoint/pages-00000.img");
        assert!(matches!(g.restore(), Err(GuestError::CorruptInstance(_))));
    }

    #[test]
    fn advancing_rewrites_instance_files_only() {
        let mut g = guest("game_server", 0.001);
        let app = g.app.clone().unwrap();
        let before = g.instance.tree.clone();
        g.advance(1).unwrap();
        assert!(g.instance.tree.is_superset_of(&app.tree));
        assert!(!g.instance.tree.content_eq(&before));
        assert_eq!(g.memory().unwrap().epoch, 1);
    }
}
