//! The `layermig` command-line harness.
//!
//! Exit codes: 0 success, 2 invalid input, 3 internal failure, 4 calibration
//! file missing, 5 underdetermined calibration fit.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    fit, reference_scenario, Calibration, CalibrationError, CalibrationStatus, ReferenceSet,
    DEFAULT_SWEEPS,
};
use crate::delta_sync::DEFAULT_BLOCK_SIZE;
use crate::guest::{GuestError, GuestSpec, Virtualization};
use crate::migrator::{
    execute, CostModel, DestinationState, MigrationError, MigrationMode, MigrationReport,
    MigrationScenario,
};
use crate::netsim::{LinkSpec, MBPS};
use crate::reference::{self, relative_error};
use crate::workloads::{builtin_profiles, find_profile, sweep_scenario, AppProfile, Configuration};
use crate::MB;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;
pub const EXIT_NO_CALIBRATION: i32 = 4;
pub const EXIT_UNDERDETERMINED: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "layermig", version, about = "Layered edge-service migration simulator")]
pub struct Cli {
    /// Seed for synthetic content and jitter; overrides the scenario file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Size multiplier for every file and memory image; overrides the scenario file.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// Calibration file, or `default` for the unfitted starting model.
    /// Without this flag the committed calibration is used.
    #[arg(long, global = true)]
    pub calibration: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its report as JSON.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per value of a parameter and write a CSV.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values: megabytes for `ram`, Mbps for `bandwidth`.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        /// Scenario to vary; the container RAM Simulation sweep scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a published table or figure next to its reference values.
    Reproduce {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the cost model to reference measurements.
    Calibrate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SWEEPS)]
        sweeps: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Ram,
    Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Table1,
    Fig4,
    Fig5,
}

/// A guest given by kind, or spelled out in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GuestRef {
    Kind(Virtualization),
    Spec(GuestSpec),
}

/// A builtin profile by name, or an inline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Name(String),
    Inline(AppProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedCostModel {
    /// Whatever calibration the harness was started with.
    Calibrated,
    /// The unfitted starting values.
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostModelRef {
    Named(NamedCostModel),
    Inline(CostModel),
}

impl Default for CostModelRef {
    fn default() -> Self {
        CostModelRef::Named(NamedCostModel::Calibrated)
    }
}

/// Scenario file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub guest: GuestRef,
    pub profile: ProfileRef,
    pub mode: MigrationMode,
    pub destination: DestinationState,
    #[serde(default)]
    pub link: LinkSpec,
    #[serde(default)]
    pub cost_model: CostModelRef,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_epoch")]
    pub staleness_epochs: u64,
    #[serde(default = "default_block")]
    pub block_size: usize,
    #[serde(default = "two")]
    pub round_trips_per_sync: u32,
    #[serde(default)]
    pub retain_source_instance: bool,
}

fn one() -> f64 {
    1.0
}
fn one_epoch() -> u64 {
    1
}
fn two() -> u32 {
    2
}
fn default_block() -> usize {
    DEFAULT_BLOCK_SIZE
}

/// A command's failure: exit code plus the message for standard error.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
    fn invalid(message: impl Display) -> Self {
        Self::new(EXIT_INVALID, message)
    }
    fn internal(message: impl Display) -> Self {
        Self::new(EXIT_INTERNAL, message)
    }
}

impl From<MigrationError> for Failure {
    fn from(e: MigrationError) -> Self {
        let code = match &e {
            MigrationError::InvalidDestination(_)
            | MigrationError::InvalidScenario(_)
            | MigrationError::Guest(GuestError::InvalidArgument(_)) => EXIT_INVALID,
            _ => EXIT_INTERNAL,
        };
        Failure::new(code, e)
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Underdetermined(_) => Failure::new(EXIT_UNDERDETERMINED, e),
            CalibrationError::InvalidReference(_) => Failure::invalid(e),
            CalibrationError::Migration(m) => m.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Calibration together with where it came from.
pub struct LoadedCalibration {
    pub calibration: Calibration,
    pub source: String,
}

impl LoadedCalibration {
    pub fn status(&self) -> &'static str {
        match self.calibration.status {
            CalibrationStatus::Fitted => "fitted",
            CalibrationStatus::Default => "default",
        }
    }
}

pub fn load_calibration(flag: Option<&str>) -> Result<LoadedCalibration, Failure> {
    let (calibration, source) = match flag {
        None => (Calibration::embedded(), "embedded".to_string()),
        Some("default") => (Calibration::default_model(), "default".to_string()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::new(EXIT_NO_CALIBRATION, format!("calibration file {path}: {e}"))
            })?;
            let c = Calibration::from_json(&text)
                .map_err(|e| Failure::invalid(format!("calibration file {path}: {e}")))?;
            (c, path.to_string())
        }
    };
    Ok(LoadedCalibration {
        calibration,
        source,
    })
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn into_scenario(self, calibration: &Calibration) -> Result<MigrationScenario, Failure> {
        let guest = match self.guest {
            GuestRef::Kind(v) => GuestSpec::for_kind(v),
            GuestRef::Spec(g) => g,
        };
        guest.validate().map_err(Failure::invalid)?;
        let profile = match self.profile {
            ProfileRef::Name(n) => {
                find_profile(&n).ok_or_else(|| Failure::invalid(format!("unknown profile {n:?}")))?
            }
            ProfileRef::Inline(p) => p,
        };
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Failure::invalid("scale must be positive"));
        }
        let mut s = MigrationScenario::new(guest, profile, self.mode, self.destination);
        s.link = self.link;
        s.scale = self.scale;
        s.seed = self.seed;
        s.staleness_epochs = self.staleness_epochs;
        s.block_size = self.block_size;
        s.round_trips_per_sync = self.round_trips_per_sync;
        s.retain_source_instance = self.retain_source_instance;
        match self.cost_model {
            CostModelRef::Named(NamedCostModel::Calibrated) => calibration.apply(&mut s),
            CostModelRef::Named(NamedCostModel::Default) => s.cost_model = CostModel::default(),
            CostModelRef::Inline(c) => s.cost_model = c,
        }
        s.validate()?;
        Ok(s)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, bytes)
            .map_err(|e| Failure::internal(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::internal(format!("stdout: {e}"))),
    }
}

fn load_scenario(cli: &Cli, path: &Path, cal: &Calibration) -> Result<MigrationScenario, Failure> {
    let mut cfg = ScenarioConfig::from_json(&read(path)?)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(scale) = cli.scale {
        cfg.scale = scale;
    }
    cfg.into_scenario(cal)
}

fn global_scale(cli: &Cli) -> Result<f64, Failure> {
    let scale = cli.scale.unwrap_or(1.0);
    if scale > 0.0 && scale.is_finite() {
        Ok(scale)
    } else {
        Err(Failure::invalid("scale must be positive"))
    }
}

fn cmd_run(cli: &Cli, scenario: &Path, out: Option<&Path>) -> CmdResult {
    let cal = load_calibration(cli.calibration.as_deref())?;
    let s = load_scenario(cli, scenario, &cal.calibration)?;
    let report = execute(&s)?;
    write_out(out, report.to_json().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub total_time_s: f64,
    pub downtime_s: f64,
    pub wire_bytes: u64,
}

/// Runs `base` once per value, with memory (MB) or bandwidth (Mbps) replaced.
/// Rows come back in input order.
pub fn sweep(
    base: &MigrationScenario,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<(SweepRow, MigrationReport)>, MigrationError> {
    values
        .par_iter()
        .map(|&v| {
            let mut s = base.clone();
            if !(v.is_finite() && v >= 0.0) {
                return Err(MigrationError::InvalidScenario(format!("sweep value {v} out of range")));
            }
            match param {
                SweepParam::Ram => s.profile.memory_bytes = (v * MB as f64).round() as u64,
                SweepParam::Bandwidth => s.link.bandwidth_bps = v * MBPS,
            }
            let r = execute(&s)?;
            let row = SweepRow {
                param_value: v,
                total_time_s: r.total_time_s,
                downtime_s: r.downtime_s,
                wire_bytes: r.total_wire_bytes,
            };
            Ok((row, r))
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(Failure::internal)?;
    }
    w.into_inner().map_err(Failure::internal)
}

fn cmd_sweep(
    cli: &Cli,
    param: SweepParam,
    values: &[f64],
    scenario: Option<&Path>,
    out: Option<&Path>,
) -> CmdResult {
    let cal = load_calibration(cli.calibration.as_deref())?;
    let base = match scenario {
        Some(p) => load_scenario(cli, p, &cal.calibration)?,
        None => {
            let mut s = sweep_scenario(Virtualization::Container);
            s.seed = cli.seed.unwrap_or(0);
            s.scale = global_scale(cli)?;
            cal.calibration.apply(&mut s);
            s
        }
    };
    let rows: Vec<SweepRow> = sweep(&base, param, values)?.into_iter().map(|(r, _)| r).collect();
    write_out(out, &csv_bytes(&rows)?)
}

#[derive(Debug, Clone, Serialize)]
struct TableRow {
    guest: &'static str,
    profile: String,
    configuration: &'static str,
    total_time_s: f64,
    reference_total_time_s: Option<f64>,
    total_time_rel_err: Option<f64>,
    wire_mb: f64,
    reference_wire_mb: Option<f64>,
    wire_rel_err: Option<f64>,
    downtime_s: f64,
    reference_downtime_s: Option<f64>,
    downtime_rel_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct StageRow {
    guest: &'static str,
    profile: String,
    configuration: &'static str,
    stage: &'static str,
    stage_key: &'static str,
    duration_s: f64,
    wire_bytes: u64,
    reference_s: Option<f64>,
    rel_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct SweepReferenceRow {
    guest: &'static str,
    param_value: f64,
    total_time_s: f64,
    downtime_s: f64,
    wire_bytes: u64,
    reference_total_time_s: f64,
    rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Metadata<'a> {
    target: &'a str,
    calibration: &'a str,
    calibration_source: &'a str,
    seed: u64,
    scale: f64,
    bandwidth_mbps: f64,
    outputs: Vec<&'a str>,
    notes: &'a str,
}

const GUESTS: [Virtualization; 2] = [Virtualization::Container, Virtualization::VirtualMachine];

fn prepared(
    guest: Virtualization,
    profile: &str,
    configuration: &str,
    seed: u64,
    scale: f64,
    cal: &Calibration,
) -> Result<MigrationScenario, Failure> {
    let mut s = reference_scenario(guest, profile, configuration, 100.0 * MBPS)?;
    s.seed = seed;
    s.scale = scale;
    cal.apply(&mut s);
    Ok(s)
}

fn cmd_reproduce(cli: &Cli, target: Target, out_dir: &Path) -> CmdResult {
    let cal = load_calibration(cli.calibration.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    let scale = global_scale(cli)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::internal(format!("{}: {e}", out_dir.display())))?;
    let write = |name: &str, bytes: Vec<u8>| -> CmdResult {
        let p = out_dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Failure::internal(format!("{}: {e}", p.display())))
    };
    let rel = |sim: f64, r: Option<f64>| r.map(|r| relative_error(sim, r));

    let (target_name, outputs, notes) = match target {
        Target::Table1 => {
            let table = reference::table1();
            let mut jobs = Vec::new();
            for g in GUESTS {
                for p in builtin_profiles() {
                    for (name, _) in Configuration::table_columns() {
                        jobs.push((g, p.name.clone(), name));
                    }
                }
            }
            let rows = jobs
                .par_iter()
                .map(|(g, p, c)| {
                    let r = execute(&prepared(*g, p, c, seed, scale, &cal.calibration)?)?;
                    let cell = table.cell(*g, p, c);
                    let wire_mb = r.total_wire_bytes as f64 / MB as f64;
                    Ok(TableRow {
                        guest: g.name(),
                        profile: p.clone(),
                        configuration: c,
                        total_time_s: r.total_time_s,
                        reference_total_time_s: cell.map(|x| x.total_time_s),
                        total_time_rel_err: rel(r.total_time_s, cell.map(|x| x.total_time_s)),
                        wire_mb,
                        reference_wire_mb: cell.map(|x| x.wire_mb),
                        wire_rel_err: rel(wire_mb, cell.map(|x| x.wire_mb)),
                        downtime_s: r.downtime_s,
                        reference_downtime_s: cell.map(|x| x.downtime_s),
                        downtime_rel_err: rel(r.downtime_s, cell.map(|x| x.downtime_s)),
                    })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            write("table1.csv", csv_bytes(&rows)?)?;
            (
                "table1",
                vec!["table1.csv"],
                "wire_mb is decimal megabytes; the reference tolerance applies to container rows",
            )
        }
        Target::Fig4 => {
            let fig = reference::fig4();
            let config = "three_layer_app_not_found";
            let jobs: Vec<(Virtualization, String)> = GUESTS
                .iter()
                .flat_map(|g| builtin_profiles().into_iter().map(move |p| (*g, p.name)))
                .collect();
            let reports = jobs
                .par_iter()
                .map(|(g, p)| Ok(execute(&prepared(*g, p, config, seed, scale, &cal.calibration)?)?))
                .collect::<Result<Vec<_>, Failure>>()?;
            let mut rows = Vec::new();
            for ((g, p), r) in jobs.iter().zip(&reports) {
                for st in &r.stages {
                    let reference = fig
                        .points
                        .iter()
                        .find(|x| x.guest == *g && x.profile == *p && x.stage == st.stage)
                        .map(|x| x.value_s);
                    rows.push(StageRow {
                        guest: g.name(),
                        profile: p.clone(),
                        configuration: config,
                        stage: st.stage.label(),
                        stage_key: st.stage.key(),
                        duration_s: st.duration_s,
                        wire_bytes: st.wire_bytes,
                        reference_s: reference,
                        rel_err: rel(st.duration_s, reference),
                    });
                }
            }
            write("fig4.csv", csv_bytes(&rows)?)?;
            (
                "fig4",
                vec!["fig4.csv"],
                "stage column uses the published legend names",
            )
        }
        Target::Fig5 => {
            let fig = reference::fig5();
            let mut ram_rows = Vec::new();
            let mut bw_rows = Vec::new();
            for g in GUESTS {
                let mut base = sweep_scenario(g);
                base.seed = seed;
                base.scale = scale;
                cal.calibration.apply(&mut base);
                let pts: Vec<_> = fig.ram_sweep.iter().filter(|p| p.guest == g).collect();
                let values: Vec<f64> = pts.iter().map(|p| p.ram_mb).collect();
                for ((row, _), p) in sweep(&base, SweepParam::Ram, &values)?.into_iter().zip(&pts) {
                    ram_rows.push(SweepReferenceRow {
                        guest: g.name(),
                        param_value: row.param_value,
                        total_time_s: row.total_time_s,
                        downtime_s: row.downtime_s,
                        wire_bytes: row.wire_bytes,
                        reference_total_time_s: p.total_time_s,
                        rel_err: relative_error(row.total_time_s, p.total_time_s),
                    });
                }
                let pts: Vec<_> = fig.bandwidth_sweep.iter().filter(|p| p.guest == g).collect();
                let values: Vec<f64> = pts.iter().map(|p| p.bandwidth_mbps).collect();
                for ((row, _), p) in sweep(&base, SweepParam::Bandwidth, &values)?.into_iter().zip(&pts) {
                    bw_rows.push(SweepReferenceRow {
                        guest: g.name(),
                        param_value: row.param_value,
                        total_time_s: row.total_time_s,
                        downtime_s: row.downtime_s,
                        wire_bytes: row.wire_bytes,
                        reference_total_time_s: p.total_time_s,
                        rel_err: relative_error(row.total_time_s, p.total_time_s),
                    });
                }
            }
            write("fig5_ram.csv", csv_bytes(&ram_rows)?)?;
            write("fig5_bandwidth.csv", csv_bytes(&bw_rows)?)?;
            (
                "fig5",
                vec!["fig5_ram.csv", "fig5_bandwidth.csv"],
                "param_value is megabytes of RAM or Mbps of link bandwidth",
            )
        }
    };
    let meta = Metadata {
        target: target_name,
        calibration: cal.status(),
        calibration_source: &cal.source,
        seed,
        scale,
        bandwidth_mbps: 100.0,
        outputs,
        notes,
    };
    let mut json = serde_json::to_string_pretty(&meta).map_err(Failure::internal)?;
    json.push('\n');
    write("metadata.json", json.into_bytes())
}

fn cmd_calibrate(reference: &Path, out: &Path, sweeps: u32) -> CmdResult {
    let set: ReferenceSet = serde_json::from_str(&read(reference)?)
        .map_err(|e| Failure::invalid(format!("{}: {e}", reference.display())))?;
    let cal = fit(&set, sweeps)?;
    let mut stdout = std::io::stdout().lock();
    for (kind, g) in &cal.guests {
        let Some(f) = &g.fit else { continue };
        let _ = writeln!(
            stdout,
            "{}: {} observations, rms relative error {:.3}, {:.0}% within 30%, held {:?}",
            kind.name(),
            f.observations,
            f.rms_relative_error,
            100.0 * f.within_30_percent,
            f.held_parameters
        );
        for r in &f.residuals {
            let _ = writeln!(
                stdout,
                "  {:<60} observed {:>8.3} predicted {:>8.3} error {:+.3}",
                r.label, r.observed_s, r.predicted_s, r.relative_error
            );
        }
    }
    std::fs::write(out, cal.to_json()).map_err(|e| Failure::internal(format!("{}: {e}", out.display())))
}

pub fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Run { scenario, out } => cmd_run(cli, scenario, out.as_deref()),
        Command::Sweep {
            param,
            values,
            scenario,
            out,
        } => cmd_sweep(cli, *param, values, scenario.as_deref(), out.as_deref()),
        Command::Reproduce { target, out_dir } => cmd_reproduce(cli, *target, out_dir),
        Command::Calibrate {
            reference,
            out,
            sweeps,
        } => cmd_calibrate(reference, out, *sweeps),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("layermig: {}", f.message);
            f.code
        }
    }
}
