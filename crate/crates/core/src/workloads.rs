//! Application profiles and scenario grids.

use serde::{Deserialize, Serialize};

use crate::guest::{GuestSpec, Virtualization};
use crate::migrator::{DestinationState, MigrationMode, MigrationScenario};
use crate::netsim::LinkSpec;
use crate::MB;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerVirtualization {
    pub container: u64,
    pub virtual_machine: u64,
}

impl PerVirtualization {
    pub fn same(v: u64) -> Self {
        Self {
            container: v,
            virtual_machine: v,
        }
    }

    pub fn get(&self, v: Virtualization) -> u64 {
        match v {
            Virtualization::Container => self.container,
            Virtualization::VirtualMachine => self.virtual_machine,
        }
    }
}

/// An application as seen by the migration engine: how many bytes it adds
/// to each layer and how its RAM behaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppProfile {
    pub name: String,
    pub install_bytes: PerVirtualization,
    pub data_bytes: u64,
    pub memory_bytes: u64,
    pub memory_churn_rate: f64,
    #[serde(default = "default_unique_bytes")]
    pub instance_unique_file_bytes: u64,
    /// Modeled compression ratio for application and instance files.
    #[serde(default = "default_fs_compression")]
    pub filesystem_compression: f64,
    /// Modeled compression ratio for checkpointed memory.
    #[serde(default = "default_memory_compression")]
    pub memory_compression: f64,
}

fn default_unique_bytes() -> u64 {
    MB
}

fn default_fs_compression() -> f64 {
    0.53
}

fn default_memory_compression() -> f64 {
    0.3
}

impl AppProfile {
    /// Lowercase, underscore-separated form of the name, used in paths.
    pub fn slug(&self) -> String {
        let mut out = String::new();
        for c in self.name.chars() {
            if c.is_ascii_alphanumeric() {
                out.push(c.to_ascii_lowercase());
            } else if !out.ends_with('_') && !out.is_empty() {
                out.push('_');
            }
        }
        while out.ends_with('_') {
            out.pop();
        }
        if out.is_empty() {
            out.push_str("app");
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        let ratio_ok = |r: f64| r > 0.0 && r <= 1.0;
        if !(0.0..=1.0).contains(&self.memory_churn_rate) {
            return Err(format!(
                "{}: memory_churn_rate must be in [0, 1]",
                self.name
            ));
        }
        if !ratio_ok(self.filesystem_compression) || !ratio_ok(self.memory_compression) {
            return Err(format!("{}: compression ratios must be in (0, 1]", self.name));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let p: AppProfile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        p.validate()?;
        Ok(p)
    }
}

fn profile(
    name: &str,
    install: PerVirtualization,
    data_bytes: u64,
    memory_bytes: u64,
    memory_churn_rate: f64,
    memory_compression: f64,
) -> AppProfile {
    AppProfile {
        name: name.to_string(),
        install_bytes: install,
        data_bytes,
        memory_bytes,
        memory_churn_rate,
        instance_unique_file_bytes: default_unique_bytes(),
        filesystem_compression: default_fs_compression(),
        memory_compression,
    }
}

/// The five measured applications, in table order.
pub fn builtin_profiles() -> Vec<AppProfile> {
    vec![
        profile("No Application", PerVirtualization::same(0), 0, 0, 0.01, 0.3),
        profile(
            "Game Server",
            PerVirtualization::same(700_000),
            0,
            MB,
            0.01,
            0.2,
        ),
        profile(
            "RAM Simulation",
            PerVirtualization::same(100_000),
            0,
            330 * MB,
            0.5,
            0.29,
        ),
        profile(
            "Video Streaming",
            PerVirtualization {
                container: 280 * MB,
                virtual_machine: 230 * MB,
            },
            50 * MB,
            30 * MB,
            0.01,
            0.2,
        ),
        profile(
            "Face Detection",
            PerVirtualization {
                container: 655 * MB,
                virtual_machine: 565 * MB,
            },
            0,
            100 * MB,
            0.01,
            0.086,
        ),
    ]
}

/// Looks a builtin profile up by display name or slug, ignoring case.
pub fn find_profile(name: &str) -> Option<AppProfile> {
    let wanted = name.to_ascii_lowercase();
    builtin_profiles()
        .into_iter()
        .find(|p| p.name.to_ascii_lowercase() == wanted || p.slug() == wanted)
}

/// One point of a grid: a migration mode together with what the
/// destination already holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub mode: MigrationMode,
    pub destination: DestinationState,
}

impl Configuration {
    pub const TWO_LAYER: Configuration = Configuration {
        mode: MigrationMode::TwoLayer,
        destination: DestinationState::BASE_ONLY,
    };
    pub const THREE_LAYER_APP_NOT_FOUND: Configuration = Configuration {
        mode: MigrationMode::ThreeLayer,
        destination: DestinationState::BASE_ONLY,
    };
    pub const THREE_LAYER_APP_FOUND: Configuration = Configuration {
        mode: MigrationMode::ThreeLayer,
        destination: DestinationState::BASE_AND_APP,
    };
    /// Bare base migration onto an empty destination.
    pub const BASE_PACKAGE: Configuration = Configuration {
        mode: MigrationMode::TwoLayer,
        destination: DestinationState::EMPTY,
    };

    /// The three columns of the published results table.
    pub fn table_columns() -> [(&'static str, Configuration); 3] {
        [
            ("two_layer", Self::TWO_LAYER),
            ("three_layer_app_not_found", Self::THREE_LAYER_APP_NOT_FOUND),
            ("three_layer_app_found", Self::THREE_LAYER_APP_FOUND),
        ]
    }

    pub fn by_name(name: &str) -> Option<Configuration> {
        match name {
            "two_layer" => Some(Self::TWO_LAYER),
            "three_layer_app_not_found" => Some(Self::THREE_LAYER_APP_NOT_FOUND),
            "three_layer_app_found" => Some(Self::THREE_LAYER_APP_FOUND),
            "base_package" => Some(Self::BASE_PACKAGE),
            _ => None,
        }
    }
}

/// Cartesian product of profiles, configurations and links, in that nesting
/// order. All scenarios share `guest`, `scale` and `seed`.
pub fn scenario_matrix(
    guest: &GuestSpec,
    profiles: &[AppProfile],
    configurations: &[Configuration],
    links: &[LinkSpec],
    scale: f64,
    seed: u64,
) -> Vec<MigrationScenario> {
    let mut out = Vec::with_capacity(profiles.len() * configurations.len() * links.len());
    for p in profiles {
        for c in configurations {
            for l in links {
                let mut s = MigrationScenario::new(guest.clone(), p.clone(), c.mode, c.destination);
                s.link = l.clone();
                s.scale = scale;
                s.seed = seed;
                out.push(s);
            }
        }
    }
    out
}

/// Memory of the RAM Simulation variant behind the sweeps, in megabytes.
pub const SWEEP_MEMORY_MB: f64 = 100.0;

/// The scenario the RAM and bandwidth sweeps vary: a RAM Simulation variant
/// with [`SWEEP_MEMORY_MB`] of memory, migrated in two-layer mode onto a
/// destination that holds the base.
pub fn sweep_scenario(guest: Virtualization) -> MigrationScenario {
    let profile = ram_variants(&[SWEEP_MEMORY_MB]).remove(0);
    let c = Configuration::TWO_LAYER;
    MigrationScenario::new(GuestSpec::for_kind(guest), profile, c.mode, c.destination)
}

/// RAM Simulation variants with the given memory sizes in megabytes.
pub fn ram_variants(sizes_mb: &[f64]) -> Vec<AppProfile> {
    let base = find_profile("ram_simulation").expect("builtin");
    sizes_mb
        .iter()
        .map(|mb| AppProfile {
            memory_bytes: (mb * MB as f64).round() as u64,
            ..base.clone()
        })
        .collect()
}
