//! Transfer-time model for the link between two edge sites.
//!
//! A transfer of `w` bytes needing `r` round trips takes
//! `r * (latency + jitter) + 8 w / min(bandwidth, processing_cap)` seconds.
//! The processing cap stands for how fast the synchronizer can compare and
//! compress; above it, extra bandwidth buys nothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MBPS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub bandwidth_bps: f64,
    /// One-way latency in seconds.
    #[serde(default)]
    pub latency_s: f64,
    /// Half-width of the uniform jitter, in seconds.
    #[serde(default)]
    pub jitter_s: f64,
    /// `None` means the synchronizer never limits throughput.
    #[serde(default)]
    pub processing_cap_bps: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LinkSpec {
    /// The inter-site link of the experiments: 100 Mbps, no added delay.
    fn default() -> Self {
        Self::mbps(100.0)
    }
}

impl LinkSpec {
    pub fn mbps(bandwidth_mbps: f64) -> Self {
        Self {
            bandwidth_bps: bandwidth_mbps * MBPS,
            latency_s: 0.0,
            jitter_s: 0.0,
            processing_cap_bps: None,
            seed: 0,
        }
    }

    /// The user-facing access link. It carries no migration traffic and is
    /// kept only so configurations can describe the full setup.
    pub fn user_access() -> Self {
        Self {
            latency_s: 0.025,
            jitter_s: 0.005,
            ..Self::mbps(100.0)
        }
    }

    pub fn with_cap(mut self, cap_bps: f64) -> Self {
        self.processing_cap_bps = Some(cap_bps);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.bandwidth_bps > 0.0 && self.bandwidth_bps.is_finite()) {
            return Err("bandwidth_bps must be positive".into());
        }
        if let Some(cap) = self.processing_cap_bps {
            if !(cap > 0.0) {
                return Err("processing_cap_bps must be positive".into());
            }
        }
        if !(self.latency_s >= 0.0 && self.jitter_s >= 0.0) {
            return Err("latency_s and jitter_s must be non-negative".into());
        }
        Ok(())
    }
}

pub fn effective_rate(link: &LinkSpec) -> f64 {
    match link.processing_cap_bps {
        Some(cap) => link.bandwidth_bps.min(cap),
        None => link.bandwidth_bps,
    }
}

/// A link in use. Each transfer draws one jitter sample from a generator
/// seeded from `LinkSpec::seed`, so a sequence of calls is reproducible.
#[derive(Debug, Clone)]
pub struct Link {
    spec: LinkSpec,
    rng: ChaCha8Rng,
    calls: u64,
}

impl Link {
    pub fn new(spec: LinkSpec) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Self {
            spec,
            rng,
            calls: 0,
        }
    }

    pub fn spec(&self) -> &LinkSpec {
        &self.spec
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn transfer_time(&mut self, wire_bytes: u64, round_trips: u32) -> f64 {
        self.calls += 1;
        let jitter = if self.spec.jitter_s > 0.0 {
            self.rng.gen_range(-self.spec.jitter_s..=self.spec.jitter_s)
        } else {
            0.0
        };
        let delay = (self.spec.latency_s + jitter).max(0.0);
        round_trips as f64 * delay + wire_bytes as f64 * 8.0 / effective_rate(&self.spec)
    }
}

/// One transfer on a fresh link.
pub fn transfer_time(link: &LinkSpec, wire_bytes: u64, round_trips: u32) -> f64 {
    Link::new(link.clone()).transfer_time(wire_bytes, round_trips)
}
