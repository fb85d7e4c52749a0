use serde::{Deserialize, Serialize};

use super::cost::StageWork;
use super::execute::MigrationScenario;
use super::{DestinationState, MigrationMode, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub label: String,
    pub duration_s: f64,
    pub wire_bytes: u64,
    pub work: StageWork,
}

/// Outcome of one migration. Totals are plain sums over `stages`, in stage
/// order, so they reproduce exactly from the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationReport {
    pub mode: MigrationMode,
    pub destination: DestinationState,
    pub stages: Vec<StageRecord>,
    pub total_time_s: f64,
    pub downtime_s: f64,
    pub total_wire_bytes: u64,
    pub scenario: MigrationScenario,
}

impl MigrationReport {
    pub fn new(scenario: MigrationScenario, stages: Vec<StageRecord>) -> Self {
        let total_time_s = stages.iter().map(|s| s.duration_s).sum();
        let downtime_s = downtime_of_stages(&stages);
        let total_wire_bytes = stages.iter().map(|s| s.wire_bytes).sum();
        Self {
            mode: scenario.mode,
            destination: scenario.destination,
            stages,
            total_time_s,
            downtime_s,
            total_wire_bytes,
            scenario,
        }
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn downtime_of_stages(stages: &[StageRecord]) -> f64 {
    stages
        .iter()
        .filter(|s| s.stage.is_downtime())
        .map(|s| s.duration_s)
        .sum()
}

/// Seconds the service was unavailable.
pub fn downtime_of(report: &MigrationReport) -> f64 {
    downtime_of_stages(&report.stages)
}
