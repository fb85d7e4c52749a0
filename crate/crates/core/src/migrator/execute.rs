use serde::{Deserialize, Serialize};

use super::cost::{CostModel, StageWork};
use super::report::{MigrationReport, StageRecord};
use super::{plan, DestinationState, MigrationError, MigrationMode, Stage};
use crate::delta_sync::{apply_tree_delta, sync_tree_with, SyncOptions, DEFAULT_BLOCK_SIZE};
use crate::guest::{build_guest, GuestInstance, GuestSpec};
use crate::layer_store::{clone_layer, FileTree, Layer, LayerKind, MemoryImage, CHECKPOINT_DIR};
use crate::netsim::{Link, LinkSpec};
use crate::workloads::AppProfile;

/// Everything needed to run one migration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationScenario {
    pub guest: GuestSpec,
    pub profile: AppProfile,
    pub mode: MigrationMode,
    pub destination: DestinationState,
    pub link: LinkSpec,
    pub cost_model: CostModel,
    pub scale: f64,
    pub seed: u64,
    /// Epochs the service runs between the stale copy and this migration.
    pub staleness_epochs: u64,
    pub block_size: usize,
    pub round_trips_per_sync: u32,
    /// Keep the source instance after restore instead of tearing it down.
    pub retain_source_instance: bool,
}

impl MigrationScenario {
    pub fn new(
        guest: GuestSpec,
        profile: AppProfile,
        mode: MigrationMode,
        destination: DestinationState,
    ) -> Self {
        Self {
            guest,
            profile,
            mode,
            destination,
            link: LinkSpec::default(),
            cost_model: CostModel::default(),
            scale: 1.0,
            seed: 0,
            staleness_epochs: 1,
            block_size: DEFAULT_BLOCK_SIZE,
            round_trips_per_sync: 2,
            retain_source_instance: false,
        }
    }

    pub fn validate(&self) -> Result<(), MigrationError> {
        let invalid = MigrationError::InvalidScenario;
        self.destination.validate(self.mode)?;
        self.link.validate().map_err(invalid)?;
        self.cost_model.validate().map_err(invalid)?;
        self.profile.validate().map_err(invalid)?;
        Ok(())
    }
}

/// A finished migration with both ends kept for inspection.
#[derive(Debug, Clone)]
pub struct Migration {
    pub report: MigrationReport,
    /// `None` when the source instance was torn down.
    pub source: Option<GuestInstance>,
    pub destination: GuestInstance,
    /// Source instance tree at the moment of suspension, checkpoint included.
    pub source_tree_at_suspend: FileTree,
    pub source_memory_at_suspend: MemoryImage,
}

struct Site {
    base: Option<Layer>,
    app: Option<Layer>,
    instance: Option<Layer>,
}

fn missing(what: &str) -> MigrationError {
    MigrationError::Internal(format!("{what} missing at destination"))
}

struct Run {
    works: Vec<(Stage, StageWork)>,
    source: GuestInstance,
    destination: GuestInstance,
    tree_at_suspend: FileTree,
    memory_at_suspend: MemoryImage,
}

fn run(s: &MigrationScenario) -> Result<Run, MigrationError> {
    s.validate()?;
    let stages = plan(s.mode, s.destination)?;
    let mut source = build_guest(&s.guest, &s.profile, s.seed, s.scale)?;

    let stale = if s.destination.has_stale_instance {
        let mut old = source.clone();
        old.checkpoint()?;
        Some(old.instance)
    } else {
        None
    };
    source.advance(s.staleness_epochs)?;

    let src_app = source
        .app
        .clone()
        .ok_or_else(|| MigrationError::Internal("source guest without application layer".into()))?;
    let mut site = Site {
        base: s.destination.has_base.then(|| source.base.clone()),
        app: s.destination.has_app.then(|| src_app.clone()),
        instance: stale,
    };
    let opts = SyncOptions {
        block_size: s.block_size,
        compression: source.compression(),
        compare_unchanged: s.guest.full_compare,
    };
    let sync = |basis: &FileTree, target: &FileTree| -> Result<(FileTree, StageWork), MigrationError> {
        let (delta, stats) = sync_tree_with(basis, target, &opts)?;
        let received = apply_tree_delta(basis, &delta)?;
        let work = StageWork {
            round_trips: s.round_trips_per_sync,
            sync: stats,
            ..StageWork::default()
        };
        Ok((received, work))
    };

    let mut works = Vec::with_capacity(stages.len());
    let mut at_suspend: Option<(FileTree, MemoryImage)> = None;
    let mut destination: Option<GuestInstance> = None;

    for stage in stages {
        let work = match stage {
            Stage::SyncBaseFilesystem => {
                let (tree, work) = sync(&FileTree::new(), &source.base.tree)?;
                site.base = Some(Layer::base(tree));
                work
            }
            Stage::CloneBaseAsApp => {
                let base = site.base.as_ref().ok_or_else(|| missing("base"))?;
                site.app = Some(clone_layer(base, LayerKind::Application)?);
                StageWork {
                    cloned_bytes: base.tree.total_bytes(),
                    ..StageWork::default()
                }
            }
            Stage::SyncAppFilesystem => {
                let app = site.app.as_mut().ok_or_else(|| missing("application"))?;
                let (tree, work) = sync(&app.tree, &src_app.tree)?;
                app.tree = tree;
                work
            }
            Stage::CloneAppAsInstance => {
                let from = match s.mode {
                    MigrationMode::ThreeLayer => site.app.as_ref().ok_or_else(|| missing("application"))?,
                    MigrationMode::TwoLayer => site.base.as_ref().ok_or_else(|| missing("base"))?,
                };
                site.instance = Some(clone_layer(from, LayerKind::Instance)?);
                StageWork {
                    cloned_bytes: from.tree.total_bytes(),
                    ..StageWork::default()
                }
            }
            Stage::SuspendInstance => {
                source.checkpoint()?;
                let memory = source
                    .memory()
                    .ok_or_else(|| MigrationError::Internal("source without memory".into()))?
                    .clone();
                let work = StageWork {
                    memory_bytes: memory.total_bytes(),
                    ..StageWork::default()
                };
                at_suspend = Some((source.instance.tree.clone(), memory));
                work
            }
            Stage::SyncInstanceFilesystem => {
                let inst = site.instance.as_mut().ok_or_else(|| missing("instance"))?;
                let (fs, work) = sync(
                    &inst.tree.without(CHECKPOINT_DIR),
                    &source.instance.tree.without(CHECKPOINT_DIR),
                )?;
                let mut tree = inst.tree.subtree(CHECKPOINT_DIR);
                tree.merge(&fs);
                inst.tree = tree;
                work
            }
            Stage::SyncInstanceMemory => {
                let inst = site.instance.as_mut().ok_or_else(|| missing("instance"))?;
                let (ckpt, work) = sync(
                    &inst.tree.subtree(CHECKPOINT_DIR),
                    &source.instance.tree.subtree(CHECKPOINT_DIR),
                )?;
                let mut tree = inst.tree.without(CHECKPOINT_DIR);
                tree.merge(&ckpt);
                inst.tree = tree;
                work
            }
            Stage::RestoreInstance => {
                let (tree, _) = at_suspend
                    .as_ref()
                    .ok_or_else(|| MigrationError::Internal("restore before suspend".into()))?;
                let inst = site.instance.take().ok_or_else(|| missing("instance"))?;
                if !inst.tree.content_eq(tree) {
                    return Err(MigrationError::Internal(
                        "destination instance differs from the suspended source".into(),
                    ));
                }
                let base = site.base.clone().ok_or_else(|| missing("base"))?;
                let app = match s.mode {
                    MigrationMode::ThreeLayer => site.app.clone(),
                    MigrationMode::TwoLayer => None,
                };
                let mut guest = GuestInstance::suspended_from_layers(&source, base, app, inst);
                guest.restore()?;
                let memory_bytes = guest.memory().map_or(0, MemoryImage::total_bytes);
                destination = Some(guest);
                StageWork {
                    memory_bytes,
                    ..StageWork::default()
                }
            }
            Stage::OtherTasks => StageWork::default(),
        };
        works.push((stage, work));
    }

    let destination = destination.ok_or_else(|| MigrationError::Internal("no restore stage".into()))?;
    let (tree_at_suspend, memory_at_suspend) =
        at_suspend.ok_or_else(|| MigrationError::Internal("no suspend stage".into()))?;
    let restored = destination
        .memory()
        .ok_or_else(|| MigrationError::Internal("restored guest without memory".into()))?;
    if !restored.same_contents(&memory_at_suspend) {
        return Err(MigrationError::Internal(
            "restored memory differs from the suspended source".into(),
        ));
    }
    Ok(Run {
        works,
        source,
        destination,
        tree_at_suspend,
        memory_at_suspend,
    })
}

/// Stage work of a scenario, independent of its cost model and link.
pub fn stage_work(s: &MigrationScenario) -> Result<Vec<(Stage, StageWork)>, MigrationError> {
    Ok(run(s)?.works)
}

pub fn execute_detailed(s: &MigrationScenario) -> Result<Migration, MigrationError> {
    let r = run(s)?;
    let report = price(s, &r.works);
    Ok(Migration {
        report,
        source: s.retain_source_instance.then_some(r.source),
        destination: r.destination,
        source_tree_at_suspend: r.tree_at_suspend,
        source_memory_at_suspend: r.memory_at_suspend,
    })
}

pub fn execute(s: &MigrationScenario) -> Result<MigrationReport, MigrationError> {
    Ok(execute_detailed(s)?.report)
}

pub(crate) fn price(s: &MigrationScenario, works: &[(Stage, StageWork)]) -> MigrationReport {
    let mut link = Link::new(s.link.clone());
    let stages = works
        .iter()
        .map(|(stage, work)| StageRecord {
            stage: *stage,
            label: stage.label().to_string(),
            duration_s: s.cost_model.price(*stage, work, &mut link),
            wire_bytes: work.sync.wire_bytes,
            work: *work,
        })
        .collect();
    MigrationReport::new(s.clone(), stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::migrator::valid_destinations;
    use crate::workloads::{builtin_profiles, find_profile};

    fn scenario(profile: &str, mode: MigrationMode, dest: DestinationState) -> MigrationScenario {
        let mut s = MigrationScenario::new(
            GuestSpec::container(),
            find_profile(profile).unwrap(),
            mode,
            dest,
        );
        s.scale = 0.002;
        s.seed = 5;
        s
    }

    #[test]
    fn every_branch_reproduces_the_source() {
        for mode in [MigrationMode::TwoLayer, MigrationMode::ThreeLayer] {
            for dest in valid_destinations(mode) {
                let m = execute_detailed(&scenario("video_streaming", mode, dest)).unwrap();
                let got = m.destination.instance.tree.materialize();
                let want = m.source_tree_at_suspend.without(CHECKPOINT_DIR).materialize();
                assert_eq!(got, want, "{mode:?} {dest:?}");
                assert_eq!(
                    m.destination.memory().unwrap().materialize(),
                    m.source_memory_at_suspend.materialize()
                );
            }
        }
    }

    #[test]
    fn three_layer_app_found_skips_app_transfer() {
        // large enough that per-file protocol overhead does not dominate
        let run = |mode, dest| {
            let mut s = scenario("face_detection", mode, dest);
            s.scale = 0.05;
            execute(&s).unwrap()
        };
        let found = run(MigrationMode::ThreeLayer, DestinationState::BASE_AND_APP);
        let two = run(MigrationMode::TwoLayer, DestinationState::BASE_ONLY);
        assert!(found.total_wire_bytes * 10 < two.total_wire_bytes);
        assert_eq!(found.stages.len(), 6);
    }

    #[test]
    fn app_found_or_not_gives_same_downtime() {
        for p in builtin_profiles() {
            let a = execute(&scenario(&p.name, MigrationMode::ThreeLayer, DestinationState::BASE_AND_APP)).unwrap();
            let b = execute(&scenario(&p.name, MigrationMode::ThreeLayer, DestinationState::BASE_ONLY)).unwrap();
            assert_eq!(a.downtime_s, b.downtime_s, "{}", p.name);
            assert!(b.total_time_s >= a.total_time_s);
        }
    }

    #[test]
    fn three_layer_not_found_is_slower_than_two_layer() {
        for p in builtin_profiles() {
            let three = execute(&scenario(&p.name, MigrationMode::ThreeLayer, DestinationState::BASE_ONLY)).unwrap();
            let two = execute(&scenario(&p.name, MigrationMode::TwoLayer, DestinationState::BASE_ONLY)).unwrap();
            assert!(three.total_time_s >= two.total_time_s, "{}", p.name);
        }
    }

    #[test]
    fn stale_instance_sends_less_memory() {
        let mut fresh = scenario("game_server", MigrationMode::ThreeLayer, DestinationState::BASE_AND_APP);
        fresh.profile.memory_bytes = 20_000_000;
        let mut stale = fresh.clone();
        stale.destination.has_stale_instance = true;
        let a = execute(&fresh).unwrap();
        let b = execute(&stale).unwrap();
        let mem = |r: &MigrationReport| {
            r.stages
                .iter()
                .find(|x| x.stage == Stage::SyncInstanceMemory)
                .unwrap()
                .wire_bytes
        };
        assert!(mem(&b) * 5 < mem(&a), "{} vs {}", mem(&b), mem(&a));
    }

    #[test]
    fn source_retention_flag() {
        let mut s = scenario("game_server", MigrationMode::ThreeLayer, DestinationState::BASE_AND_APP);
        assert!(execute_detailed(&s).unwrap().source.is_none());
        s.retain_source_instance = true;
        let kept = execute_detailed(&s).unwrap().source.unwrap();
        assert!(kept.has_checkpoint());
    }

    #[test]
    fn degenerate_migration_costs_fixed_terms() {
        let mut profile = find_profile("no_application").unwrap();
        profile.instance_unique_file_bytes = 0;
        let mut guest = GuestSpec::container();
        guest.virtualization_overhead_bytes = 0;
        guest.base_file_count = 1;
        let mut s = MigrationScenario::new(guest, profile, MigrationMode::ThreeLayer, DestinationState::new(true, true, true));
        s.scale = 0.001;
        let r = execute(&s).unwrap();
        let c = &s.cost_model;
        let wire_time: f64 = r
            .stages
            .iter()
            .filter(|x| x.stage.is_downtime())
            .map(|x| x.wire_bytes as f64 * 8.0 / s.link.bandwidth_bps + x.work.sync.scanned_bytes as f64 / c.scan_rate)
            .sum();
        let expected = c.suspend_fixed + c.restore_fixed + 2.0 * c.stage_fixed_overhead + wire_time;
        assert!((r.downtime_s - expected).abs() < 1e-9);
        // per-file overhead plus the small checkpoint inventory
        assert!(r.total_wire_bytes < 1000, "{}", r.total_wire_bytes);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = scenario("game_server", MigrationMode::ThreeLayer, DestinationState::new(false, true, false));
        assert!(matches!(execute(&s), Err(MigrationError::InvalidDestination(_))));
        s.destination = DestinationState::BASE_ONLY;
        s.link.bandwidth_bps = 0.0;
        assert!(matches!(execute(&s), Err(MigrationError::InvalidScenario(_))));
    }
}
