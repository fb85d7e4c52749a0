//! Published measurements the simulator is compared against.
//!
//! The JSON files under `reference/` at the workspace root are compiled into
//! the crate so every comparison works without a checkout. Each value keeps
//! the citation it was transcribed from.

use serde::{Deserialize, Serialize};

use crate::calibration::ReferenceSet;
use crate::guest::Virtualization;
use crate::migrator::Stage;

const TABLE1: &str = include_str!("../../../reference/table1.json");
const FIG4: &str = include_str!("../../../reference/fig4.json");
const FIG5: &str = include_str!("../../../reference/fig5.json");
const BASE_PACKAGE: &str = include_str!("../../../reference/base_package.json");
const CALIBRATION_TARGETS: &str = include_str!("../../../reference/calibration_targets.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableCell {
    pub guest: Virtualization,
    pub profile: String,
    pub configuration: String,
    pub total_time_s: f64,
    /// Decimal megabytes sent over the inter-site link.
    pub wire_mb: f64,
    pub downtime_s: f64,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub version: u32,
    pub description: String,
    pub cells: Vec<TableCell>,
}

impl Table {
    pub fn cell(&self, guest: Virtualization, profile: &str, configuration: &str) -> Option<&TableCell> {
        self.cells
            .iter()
            .find(|c| c.guest == guest && c.profile == profile && c.configuration == configuration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePoint {
    pub guest: Virtualization,
    pub profile: String,
    pub configuration: String,
    pub stage: Stage,
    pub value_s: f64,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageBreakdown {
    pub version: u32,
    pub description: String,
    pub points: Vec<StagePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamPoint {
    pub guest: Virtualization,
    pub ram_mb: f64,
    pub total_time_s: f64,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthPoint {
    pub guest: Virtualization,
    pub bandwidth_mbps: f64,
    pub total_time_s: f64,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweeps {
    pub version: u32,
    pub description: String,
    pub ram_sweep: Vec<RamPoint>,
    pub bandwidth_sweep: Vec<BandwidthPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePackagePoint {
    pub guest: Virtualization,
    pub base_bytes: u64,
    pub bandwidth_mbps: f64,
    pub total_time_s: f64,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePackage {
    pub version: u32,
    pub description: String,
    pub points: Vec<BasePackagePoint>,
}

impl BasePackage {
    pub fn point(&self, guest: Virtualization) -> Option<&BasePackagePoint> {
        self.points.iter().find(|p| p.guest == guest)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(name: &str, text: &str) -> T {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("bundled {name} is malformed: {e}"))
}

/// Total time, wire bytes and downtime per profile and configuration.
pub fn table1() -> Table {
    parse("table1.json", TABLE1)
}

/// Per-stage times of three-layer migrations with the application missing.
pub fn fig4() -> StageBreakdown {
    parse("fig4.json", FIG4)
}

/// Total time against memory size and against link bandwidth.
pub fn fig5() -> Sweeps {
    parse("fig5.json", FIG5)
}

pub fn base_package() -> BasePackage {
    parse("base_package.json", BASE_PACKAGE)
}

/// Observations the committed calibration was fitted to.
pub fn calibration_targets() -> ReferenceSet {
    parse("calibration_targets.json", CALIBRATION_TARGETS)
}

/// `simulated / reference - 1`.
pub fn relative_error(simulated: f64, reference: f64) -> f64 {
    simulated / reference - 1.0
}
