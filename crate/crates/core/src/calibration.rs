//! Fitting the stage cost model to measured migration times.
//!
//! Every stage duration is linear in nine parameters (see
//! [`crate::migrator::CostModel::to_params`]) once the stage work is known,
//! and stage work does not depend on the parameters. A fit therefore runs
//! each referenced scenario once, turns every observation into a linear
//! equation, and minimizes the squared relative error with bounded
//! coordinate descent.
//!
//! Parameters that no observation touches keep their starting values and
//! are listed as held in the fit summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::guest::{GuestSpec, Virtualization};
use crate::migrator::{
    stage_work, CostModel, MigrationError, MigrationScenario, Stage, StageWork, PARAMS, PARAM_NAMES,
};
use crate::netsim::{LinkSpec, MBPS};
use crate::workloads::{find_profile, Configuration};

pub const CALIBRATION_VERSION: u32 = 1;
pub const DEFAULT_SWEEPS: u32 = 50_000;
/// Starting processing cap, and the cap used when no calibration is loaded.
pub const DEFAULT_PROCESSING_CAP_BPS: f64 = 50.0 * MBPS;

const EMBEDDED: &str = include_str!("../../../config/calibration.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Stage,
    TotalTime,
    Downtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub guest: Virtualization,
    pub profile: String,
    pub configuration: String,
    pub quantity: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub value_s: f64,
    #[serde(default)]
    pub citation: String,
}

impl Observation {
    pub fn label(&self) -> String {
        let what = match (self.quantity, self.stage) {
            (Quantity::Stage, Some(s)) => s.key().to_string(),
            (q, _) => format!("{q:?}").to_lowercase(),
        };
        format!(
            "{}/{}/{}/{}",
            self.guest.name(),
            self.profile,
            self.configuration,
            what
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStatus {
    Fitted,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub label: String,
    pub observed_s: f64,
    pub predicted_s: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub observations: usize,
    pub fitted_parameters: Vec<String>,
    pub held_parameters: Vec<String>,
    pub sweeps: u32,
    pub rms_relative_error: f64,
    pub max_abs_relative_error: f64,
    pub within_30_percent: f64,
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuestCalibration {
    pub cost_model: CostModel,
    pub processing_cap_bps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub version: u32,
    pub status: CalibrationStatus,
    /// Link bandwidth the reference measurements were taken at.
    pub reference_bandwidth_bps: f64,
    pub guests: BTreeMap<Virtualization, GuestCalibration>,
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("underdetermined fit: {0}")]
    Underdetermined(String),
    #[error("invalid reference data: {0}")]
    InvalidReference(String),
    #[error(transparent)]
    Migration(#[from] MigrationError),
}

impl Calibration {
    /// The committed fit shipped with the crate.
    pub fn embedded() -> Calibration {
        Self::from_json(EMBEDDED).expect("embedded calibration parses")
    }

    /// Unfitted starting values for both guests.
    pub fn default_model() -> Calibration {
        let g = GuestCalibration {
            cost_model: CostModel::default(),
            processing_cap_bps: DEFAULT_PROCESSING_CAP_BPS,
            fit: None,
        };
        Calibration {
            version: CALIBRATION_VERSION,
            status: CalibrationStatus::Default,
            reference_bandwidth_bps: 100.0 * MBPS,
            guests: [
                (Virtualization::Container, g.clone()),
                (Virtualization::VirtualMachine, g),
            ]
            .into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Calibration, String> {
        let c: Calibration = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for (v, g) in &c.guests {
            g.cost_model
                .validate()
                .map_err(|e| format!("{}: {e}", v.name()))?;
            if !(g.processing_cap_bps > 0.0) {
                return Err(format!("{}: processing cap must be positive", v.name()));
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("calibration serializes");
        s.push('\n');
        s
    }

    pub fn guest(&self, v: Virtualization) -> Option<&GuestCalibration> {
        self.guests.get(&v)
    }

    /// Installs this calibration's cost model for the scenario's guest kind,
    /// and its processing cap unless the link already sets one. Guests absent
    /// from the calibration fall back to the starting values.
    pub fn apply(&self, scenario: &mut MigrationScenario) {
        let (cost, cap) = match self.guest(scenario.guest.virtualization) {
            Some(g) => (g.cost_model.clone(), g.processing_cap_bps),
            None => (CostModel::default(), DEFAULT_PROCESSING_CAP_BPS),
        };
        scenario.cost_model = cost;
        scenario.link.processing_cap_bps.get_or_insert(cap);
    }
}

/// Scenario an observation refers to, at full scale on the reference link.
pub fn reference_scenario(
    guest: Virtualization,
    profile: &str,
    configuration: &str,
    bandwidth_bps: f64,
) -> Result<MigrationScenario, CalibrationError> {
    let profile = find_profile(profile)
        .ok_or_else(|| CalibrationError::InvalidReference(format!("unknown profile {profile:?}")))?;
    let config = Configuration::by_name(configuration).ok_or_else(|| {
        CalibrationError::InvalidReference(format!("unknown configuration {configuration:?}"))
    })?;
    let mut s = MigrationScenario::new(
        GuestSpec::for_kind(guest),
        profile,
        config.mode,
        config.destination,
    );
    s.link = LinkSpec {
        bandwidth_bps,
        ..LinkSpec::default()
    };
    Ok(s)
}

type WorkCache = BTreeMap<(String, String), Vec<(Stage, StageWork)>>;

fn observation_row(
    o: &Observation,
    works: &[(Stage, StageWork)],
    latency_s: f64,
) -> Result<([f64; PARAMS], f64), CalibrationError> {
    let keep = |s: Stage| match o.quantity {
        Quantity::Stage => Some(s) == o.stage,
        Quantity::TotalTime => true,
        Quantity::Downtime => s.is_downtime(),
    };
    if o.quantity == Quantity::Stage && o.stage.is_none() {
        return Err(CalibrationError::InvalidReference(format!(
            "{}: stage observation without a stage",
            o.label()
        )));
    }
    let mut a = [0.0; PARAMS];
    let mut c = 0.0;
    let mut matched = false;
    for (stage, work) in works.iter().filter(|(s, _)| keep(*s)) {
        matched = true;
        let (row, off) = work.features(*stage, latency_s);
        for (x, y) in a.iter_mut().zip(row) {
            *x += y;
        }
        c += off;
    }
    if !matched {
        return Err(CalibrationError::InvalidReference(format!(
            "{}: stage does not occur in this configuration",
            o.label()
        )));
    }
    Ok((a, c))
}

/// Bounded least squares on relative error by cyclic coordinate descent.
///
/// Minimizes `sum_i ((a_i . p + c_i - y_i) / y_i)^2` over `p >= lower`,
/// updating parameters whose `free` flag is set; the others stay at `start`.
fn coordinate_descent(
    rows: &[([f64; PARAMS], f64)],
    y: &[f64],
    start: [f64; PARAMS],
    lower: [f64; PARAMS],
    free: [bool; PARAMS],
    sweeps: u32,
) -> [f64; PARAMS] {
    let n = rows.len();
    // work in relative units with unit-norm columns
    let mut cols = vec![vec![0.0; n]; PARAMS];
    let mut target = vec![0.0; n];
    for (i, ((a, c), yi)) in rows.iter().zip(y).enumerate() {
        target[i] = (yi - c) / yi;
        for j in 0..PARAMS {
            cols[j][i] = a[j] / yi;
        }
    }
    let mut norm = [1.0; PARAMS];
    for j in 0..PARAMS {
        let s = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if s > 0.0 {
            norm[j] = s;
            cols[j].iter_mut().for_each(|v| *v /= s);
        }
    }
    let mut phi: [f64; PARAMS] = std::array::from_fn(|j| start[j] * norm[j]);
    let lo: [f64; PARAMS] = std::array::from_fn(|j| lower[j] * norm[j]);
    let residual = |phi: &[f64; PARAMS]| -> Vec<f64> {
        (0..n)
            .map(|i| target[i] - (0..PARAMS).map(|j| cols[j][i] * phi[j]).sum::<f64>())
            .collect()
    };
    let mut r = residual(&phi);
    for sweep in 0..sweeps {
        for j in (0..PARAMS).filter(|&j| free[j]) {
            let g: f64 = cols[j].iter().zip(&r).map(|(a, b)| a * b).sum();
            let next = (phi[j] + g).max(lo[j]);
            let step = next - phi[j];
            if step != 0.0 {
                for (ri, cj) in r.iter_mut().zip(&cols[j]) {
                    *ri -= cj * step;
                }
                phi[j] = next;
            }
        }
        if sweep % 256 == 255 {
            r = residual(&phi);
        }
    }
    std::array::from_fn(|j| phi[j] / norm[j])
}

fn fit_guest(
    guest: Virtualization,
    obs: &[&Observation],
    cache: &mut WorkCache,
    bandwidth_bps: f64,
    sweeps: u32,
) -> Result<GuestCalibration, CalibrationError> {
    let mut rows = Vec::with_capacity(obs.len());
    let mut y = Vec::with_capacity(obs.len());
    for o in obs {
        if !(o.value_s > 0.0 && o.value_s.is_finite()) {
            return Err(CalibrationError::InvalidReference(format!(
                "{}: value must be positive",
                o.label()
            )));
        }
        let key = (o.profile.clone(), o.configuration.clone());
        if !cache.contains_key(&key) {
            let s = reference_scenario(guest, &o.profile, &o.configuration, bandwidth_bps)?;
            cache.insert(key.clone(), stage_work(&s)?);
        }
        rows.push(observation_row(o, &cache[&key], 0.0)?);
        y.push(o.value_s);
    }

    let free: [bool; PARAMS] = std::array::from_fn(|j| rows.iter().any(|(a, _)| a[j] != 0.0));
    let fitted = free.iter().filter(|f| **f).count();
    if obs.len() < fitted {
        return Err(CalibrationError::Underdetermined(format!(
            "{}: {} observations for {fitted} parameters",
            guest.name(),
            obs.len()
        )));
    }
    let start = CostModel::default().to_params(1.0 / DEFAULT_PROCESSING_CAP_BPS.min(bandwidth_bps));
    let mut lower = [0.0; PARAMS];
    lower[0] = 1e-12;
    lower[5] = 1e-12;
    // the synchronizer can never beat the link itself
    lower[8] = 1.0 / bandwidth_bps;
    let start: [f64; PARAMS] = std::array::from_fn(|j| start[j].max(lower[j]));
    let params = coordinate_descent(&rows, &y, start, lower, free, sweeps);
    let (cost_model, seconds_per_bit) = CostModel::from_params(&params);

    let residuals: Vec<Residual> = obs
        .iter()
        .zip(&rows)
        .map(|(o, (a, c))| {
            let predicted: f64 = a.iter().zip(&params).map(|(x, p)| x * p).sum::<f64>() + c;
            Residual {
                label: o.label(),
                observed_s: o.value_s,
                predicted_s: predicted,
                relative_error: predicted / o.value_s - 1.0,
            }
        })
        .collect();
    let n = residuals.len() as f64;
    let summary = FitSummary {
        observations: obs.len(),
        fitted_parameters: (0..PARAMS).filter(|&j| free[j]).map(|j| PARAM_NAMES[j].into()).collect(),
        held_parameters: (0..PARAMS).filter(|&j| !free[j]).map(|j| PARAM_NAMES[j].into()).collect(),
        sweeps,
        rms_relative_error: (residuals.iter().map(|r| r.relative_error.powi(2)).sum::<f64>() / n).sqrt(),
        max_abs_relative_error: residuals.iter().map(|r| r.relative_error.abs()).fold(0.0, f64::max),
        within_30_percent: residuals.iter().filter(|r| r.relative_error.abs() <= 0.3).count() as f64 / n,
        residuals,
    };
    Ok(GuestCalibration {
        cost_model,
        processing_cap_bps: 1.0 / seconds_per_bit,
        fit: Some(summary),
    })
}

/// Fits one cost model per guest kind present in `reference`.
pub fn fit(reference: &ReferenceSet, sweeps: u32) -> Result<Calibration, CalibrationError> {
    if reference.observations.is_empty() {
        return Err(CalibrationError::Underdetermined(
            "reference set has no observations".into(),
        ));
    }
    let bandwidth_bps = 100.0 * MBPS;
    let mut guests = BTreeMap::new();
    for kind in [Virtualization::Container, Virtualization::VirtualMachine] {
        let obs: Vec<&Observation> = reference
            .observations
            .iter()
            .filter(|o| o.guest == kind)
            .collect();
        if obs.is_empty() {
            continue;
        }
        let mut cache = WorkCache::new();
        guests.insert(kind, fit_guest(kind, &obs, &mut cache, bandwidth_bps, sweeps)?);
    }
    Ok(Calibration {
        version: CALIBRATION_VERSION,
        status: CalibrationStatus::Fitted,
        reference_bandwidth_bps: bandwidth_bps,
        guests,
    })
}
