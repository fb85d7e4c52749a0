//! Layered live migration of edge services, simulated end to end.
//!
//! The crate pairs a real block-level delta synchronizer ([`delta_sync`])
//! with synthetic guest images ([`layer_store`], [`guest`]), a link model
//! ([`netsim`]) and the layered migration procedure ([`migrator`]). Byte
//! counts come from actually running the synchronizer over the synthetic
//! trees; durations come from a cost model fitted to published
//! measurements ([`calibration`]).

pub mod calibration;
pub mod cli;
pub mod delta_sync;
pub mod guest;
pub mod layer_store;
pub mod migrator;
pub mod netsim;
pub mod reference;
pub mod workloads;

/// Decimal megabyte, the unit used by every size constant in the crate.
pub const MB: u64 = 1_000_000;
