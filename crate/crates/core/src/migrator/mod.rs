//! The layered migration procedure.
//!
//! [`plan`] walks the decision chart (instance found? application found?
//! base found?) and returns the stages to run. [`execute`] runs them against
//! real synthetic layers, delta-syncing each layer onto a clone of the one
//! below it, and prices every stage with a [`CostModel`].
//!
//! Two-layer mode has no application layer: the instance is cloned straight
//! from the base and the application travels with the instance files.

mod cost;
mod execute;
mod report;

pub use cost::{CostModel, StageWork, PARAMS, PARAM_NAMES};
pub use execute::{execute, execute_detailed, stage_work, Migration, MigrationScenario};
pub use report::{downtime_of, MigrationReport, StageRecord};

use serde::{Deserialize, Serialize};

use crate::delta_sync::SyncError;
use crate::guest::GuestError;
use crate::layer_store::LayerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationMode {
    TwoLayer,
    ThreeLayer,
}

/// What the destination site already holds before migration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DestinationState {
    pub has_base: bool,
    pub has_app: bool,
    /// An older copy of this very instance.
    pub has_stale_instance: bool,
}

impl DestinationState {
    pub const EMPTY: Self = Self::new(false, false, false);
    pub const BASE_ONLY: Self = Self::new(true, false, false);
    pub const BASE_AND_APP: Self = Self::new(true, true, false);

    pub const fn new(has_base: bool, has_app: bool, has_stale_instance: bool) -> Self {
        Self {
            has_base,
            has_app,
            has_stale_instance,
        }
    }

    pub fn validate(&self, mode: MigrationMode) -> Result<(), MigrationError> {
        if self.has_app && !self.has_base {
            return Err(MigrationError::InvalidDestination(
                "an application layer requires the base layer".into(),
            ));
        }
        let stale_needs = match mode {
            MigrationMode::ThreeLayer => self.has_app,
            MigrationMode::TwoLayer => self.has_base,
        };
        if self.has_stale_instance && !stale_needs {
            return Err(MigrationError::InvalidDestination(format!(
                "a stale instance requires its parent layer in {mode:?} mode"
            )));
        }
        Ok(())
    }
}

/// Every destination state that passes validation for `mode`.
pub fn valid_destinations(mode: MigrationMode) -> Vec<DestinationState> {
    let mut out = Vec::new();
    for bits in 0..8u8 {
        let d = DestinationState::new(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
        if d.validate(mode).is_ok() {
            out.push(d);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SyncBaseFilesystem,
    CloneBaseAsApp,
    SyncAppFilesystem,
    CloneAppAsInstance,
    SuspendInstance,
    SyncInstanceFilesystem,
    SyncInstanceMemory,
    RestoreInstance,
    OtherTasks,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::SyncBaseFilesystem,
        Stage::CloneBaseAsApp,
        Stage::SyncAppFilesystem,
        Stage::CloneAppAsInstance,
        Stage::SuspendInstance,
        Stage::SyncInstanceFilesystem,
        Stage::SyncInstanceMemory,
        Stage::RestoreInstance,
        Stage::OtherTasks,
    ];

    /// Human-readable stage name as used in the published breakdown.
    pub fn label(self) -> &'static str {
        match self {
            Stage::SyncBaseFilesystem => "rsync base filesystem",
            Stage::CloneBaseAsApp => "Clone base as app",
            Stage::SyncAppFilesystem => "rsync app filesystem",
            Stage::CloneAppAsInstance => "Clone app as instance",
            Stage::SuspendInstance => "Suspend instance",
            Stage::SyncInstanceFilesystem => "rsync instance filesystem",
            Stage::SyncInstanceMemory => "rsync instance in-memory state",
            Stage::RestoreInstance => "Restore instance",
            Stage::OtherTasks => "Other remaining tasks",
        }
    }

    /// Snake-case identifier, as in JSON output.
    pub fn key(self) -> &'static str {
        match self {
            Stage::SyncBaseFilesystem => "sync_base_filesystem",
            Stage::CloneBaseAsApp => "clone_base_as_app",
            Stage::SyncAppFilesystem => "sync_app_filesystem",
            Stage::CloneAppAsInstance => "clone_app_as_instance",
            Stage::SuspendInstance => "suspend_instance",
            Stage::SyncInstanceFilesystem => "sync_instance_filesystem",
            Stage::SyncInstanceMemory => "sync_instance_memory",
            Stage::RestoreInstance => "restore_instance",
            Stage::OtherTasks => "other_tasks",
        }
    }

    pub fn from_key(key: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.key() == key)
    }

    /// Stages during which the service is stopped.
    pub fn is_downtime(self) -> bool {
        matches!(
            self,
            Stage::SuspendInstance
                | Stage::SyncInstanceFilesystem
                | Stage::SyncInstanceMemory
                | Stage::RestoreInstance
        )
    }

    pub fn is_sync(self) -> bool {
        matches!(
            self,
            Stage::SyncBaseFilesystem
                | Stage::SyncAppFilesystem
                | Stage::SyncInstanceFilesystem
                | Stage::SyncInstanceMemory
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MigrationError {
    #[error("inconsistent destination state: {0}")]
    InvalidDestination(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("internal failure: {0}")]
    Internal(String),
    #[error(transparent)]
    Guest(#[from] GuestError),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

impl From<SyncError> for MigrationError {
    fn from(e: SyncError) -> Self {
        // a correct migration never produces a delta its receiver rejects
        MigrationError::Internal(e.to_string())
    }
}

const INSTANCE_TAIL: [Stage; 5] = [
    Stage::SuspendInstance,
    Stage::SyncInstanceFilesystem,
    Stage::SyncInstanceMemory,
    Stage::RestoreInstance,
    Stage::OtherTasks,
];

pub fn plan(mode: MigrationMode, dest: DestinationState) -> Result<Vec<Stage>, MigrationError> {
    dest.validate(mode)?;
    let mut stages = Vec::new();
    if !dest.has_stale_instance {
        if !dest.has_base {
            stages.push(Stage::SyncBaseFilesystem);
        }
        if mode == MigrationMode::ThreeLayer && !dest.has_app {
            stages.extend([Stage::CloneBaseAsApp, Stage::SyncAppFilesystem]);
        }
        stages.push(Stage::CloneAppAsInstance);
    }
    stages.extend(INSTANCE_TAIL);
    Ok(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use MigrationMode::*;
    use Stage::*;

    #[test]
    fn three_layer_app_found() {
        assert_eq!(
            plan(ThreeLayer, DestinationState::BASE_AND_APP).unwrap(),
            [
                CloneAppAsInstance,
                SuspendInstance,
                SyncInstanceFilesystem,
                SyncInstanceMemory,
                RestoreInstance,
                OtherTasks
            ]
        );
    }

    #[test]
    fn three_layer_nothing_found() {
        assert_eq!(
            plan(ThreeLayer, DestinationState::EMPTY).unwrap(),
            [
                SyncBaseFilesystem,
                CloneBaseAsApp,
                SyncAppFilesystem,
                CloneAppAsInstance,
                SuspendInstance,
                SyncInstanceFilesystem,
                SyncInstanceMemory,
                RestoreInstance,
                OtherTasks
            ]
        );
    }

    #[test]
    fn stale_instance_starts_at_suspend() {
        for mode in [TwoLayer, ThreeLayer] {
            let p = plan(mode, DestinationState::new(true, true, true)).unwrap();
            assert_eq!(p, INSTANCE_TAIL);
        }
    }

    #[test]
    fn two_layer_never_touches_the_app_layer() {
        for d in valid_destinations(TwoLayer) {
            let p = plan(TwoLayer, d).unwrap();
            assert!(!p.contains(&SyncAppFilesystem));
            assert!(!p.contains(&CloneBaseAsApp));
        }
    }

    #[test]
    fn destination_validation() {
        assert!(plan(ThreeLayer, DestinationState::new(false, true, false)).is_err());
        assert!(plan(ThreeLayer, DestinationState::new(true, false, true)).is_err());
        assert!(plan(TwoLayer, DestinationState::new(true, false, true)).is_ok());
        assert!(plan(TwoLayer, DestinationState::new(false, false, true)).is_err());
        assert_eq!(valid_destinations(ThreeLayer).len(), 4);
        assert_eq!(valid_destinations(TwoLayer).len(), 5);
    }

    #[test]
    fn downtime_stages_are_the_four_instance_steps() {
        let down: Vec<_> = Stage::ALL.into_iter().filter(|s| s.is_downtime()).collect();
        assert_eq!(
            down,
            [SuspendInstance, SyncInstanceFilesystem, SyncInstanceMemory, RestoreInstance]
        );
        for s in Stage::ALL {
            assert_eq!(Stage::from_key(s.key()), Some(s));
        }
    }
}
