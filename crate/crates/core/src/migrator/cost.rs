use serde::{Deserialize, Serialize};

use super::Stage;
use crate::delta_sync::SyncStats;
use crate::netsim::Link;

/// Durations of the non-network parts of a migration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Local layer duplication, bytes per second.
    pub clone_rate: f64,
    pub suspend_fixed: f64,
    /// Seconds per byte of memory written out at suspend.
    pub suspend_per_byte: f64,
    pub restore_fixed: f64,
    pub restore_per_byte: f64,
    /// Bytes per second the synchronizer reads while comparing.
    pub scan_rate: f64,
    /// Fixed seconds for every sync stage (process start, file list walk).
    pub stage_fixed_overhead: f64,
    pub other_tasks_fixed: f64,
}

impl Default for CostModel {
    /// Starting point of calibration. Round numbers, not fitted.
    fn default() -> Self {
        Self {
            clone_rate: 100e6,
            suspend_fixed: 0.5,
            suspend_per_byte: 1e-9,
            restore_fixed: 0.5,
            restore_per_byte: 1e-9,
            scan_rate: 100e6,
            stage_fixed_overhead: 0.5,
            other_tasks_fixed: 2.0,
        }
    }
}

/// Number of linear parameters: the eight cost terms plus seconds per bit
/// on the wire.
pub const PARAMS: usize = 9;
pub const PARAM_NAMES: [&str; PARAMS] = [
    "seconds_per_cloned_byte",
    "suspend_fixed",
    "suspend_per_byte",
    "restore_fixed",
    "restore_per_byte",
    "seconds_per_scanned_byte",
    "stage_fixed_overhead",
    "other_tasks_fixed",
    "seconds_per_wire_bit",
];

impl CostModel {
    pub fn validate(&self) -> Result<(), String> {
        let rates = [self.clone_rate, self.scan_rate];
        let terms = [
            self.suspend_fixed,
            self.suspend_per_byte,
            self.restore_fixed,
            self.restore_per_byte,
            self.stage_fixed_overhead,
            self.other_tasks_fixed,
        ];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err("cost model rates must be positive and finite".into());
        }
        if terms.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err("cost model fixed and per-byte terms must be non-negative".into());
        }
        Ok(())
    }

    /// The model as linear coefficients, with `seconds_per_bit` appended.
    pub fn to_params(&self, seconds_per_bit: f64) -> [f64; PARAMS] {
        [
            1.0 / self.clone_rate,
            self.suspend_fixed,
            self.suspend_per_byte,
            self.restore_fixed,
            self.restore_per_byte,
            1.0 / self.scan_rate,
            self.stage_fixed_overhead,
            self.other_tasks_fixed,
            seconds_per_bit,
        ]
    }

    pub fn from_params(p: &[f64; PARAMS]) -> (CostModel, f64) {
        (
            CostModel {
                clone_rate: 1.0 / p[0],
                suspend_fixed: p[1],
                suspend_per_byte: p[2],
                restore_fixed: p[3],
                restore_per_byte: p[4],
                scan_rate: 1.0 / p[5],
                stage_fixed_overhead: p[6],
                other_tasks_fixed: p[7],
            },
            p[8],
        )
    }

    /// Duration of one stage. Sync stages draw one transfer from `link`.
    pub fn price(&self, stage: Stage, work: &StageWork, link: &mut Link) -> f64 {
        match stage {
            Stage::CloneBaseAsApp | Stage::CloneAppAsInstance => {
                work.cloned_bytes as f64 / self.clone_rate
            }
            Stage::SuspendInstance => {
                self.suspend_fixed + self.suspend_per_byte * work.memory_bytes as f64
            }
            Stage::RestoreInstance => {
                self.restore_fixed + self.restore_per_byte * work.memory_bytes as f64
            }
            Stage::OtherTasks => self.other_tasks_fixed,
            Stage::SyncBaseFilesystem
            | Stage::SyncAppFilesystem
            | Stage::SyncInstanceFilesystem
            | Stage::SyncInstanceMemory => {
                link.transfer_time(work.sync.wire_bytes, work.round_trips)
                    + work.sync.scanned_bytes as f64 / self.scan_rate
                    + self.stage_fixed_overhead
            }
        }
    }
}

/// What a stage did, independent of how long it took.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageWork {
    pub cloned_bytes: u64,
    pub memory_bytes: u64,
    pub round_trips: u32,
    pub sync: SyncStats,
}

impl StageWork {
    /// Coefficients `a` and offset `c` such that the stage takes
    /// `a . params + c` seconds on a link with latency `latency_s` and no
    /// jitter.
    pub fn features(&self, stage: Stage, latency_s: f64) -> ([f64; PARAMS], f64) {
        let mut a = [0.0; PARAMS];
        let mut c = 0.0;
        match stage {
            Stage::CloneBaseAsApp | Stage::CloneAppAsInstance => a[0] = self.cloned_bytes as f64,
            Stage::SuspendInstance => {
                a[1] = 1.0;
                a[2] = self.memory_bytes as f64;
            }
            Stage::RestoreInstance => {
                a[3] = 1.0;
                a[4] = self.memory_bytes as f64;
            }
            Stage::OtherTasks => a[7] = 1.0,
            _ => {
                a[5] = self.sync.scanned_bytes as f64;
                a[6] = 1.0;
                a[8] = self.sync.wire_bytes as f64 * 8.0;
                c = self.round_trips as f64 * latency_s;
            }
        }
        (a, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::LinkSpec;

    #[test]
    fn features_reproduce_prices() {
        let cost = CostModel {
            clone_rate: 123e6,
            suspend_fixed: 0.3,
            suspend_per_byte: 2e-9,
            restore_fixed: 0.4,
            restore_per_byte: 3e-9,
            scan_rate: 77e6,
            stage_fixed_overhead: 0.6,
            other_tasks_fixed: 2.2,
        };
        let spec = LinkSpec {
            latency_s: 0.01,
            ..LinkSpec::mbps(100.0).with_cap(40e6)
        };
        let work = StageWork {
            cloned_bytes: 5_000_000,
            memory_bytes: 30_000_000,
            round_trips: 2,
            sync: SyncStats {
                wire_bytes: 7_000_000,
                scanned_bytes: 9_000_000,
                ..SyncStats::default()
            },
        };
        let params = cost.to_params(1.0 / 40e6);
        for stage in Stage::ALL {
            let mut link = crate::netsim::Link::new(spec.clone());
            let t = cost.price(stage, &work, &mut link);
            let (a, c) = work.features(stage, spec.latency_s);
            let lin: f64 = a.iter().zip(&params).map(|(x, p)| x * p).sum::<f64>() + c;
            assert!((t - lin).abs() < 1e-9, "{stage:?}: {t} vs {lin}");
        }
        let (back, spb) = CostModel::from_params(&params);
        assert!((back.clone_rate - cost.clone_rate).abs() < 1e-3);
        assert_eq!(spb, 1.0 / 40e6);
    }

    #[test]
    fn validation() {
        assert!(CostModel::default().validate().is_ok());
        let bad = CostModel {
            clone_rate: 0.0,
            ..CostModel::default()
        };
        assert!(bad.validate().is_err());
        let neg = CostModel {
            other_tasks_fixed: -1.0,
            ..CostModel::default()
        };
        assert!(neg.validate().is_err());
    }
}
