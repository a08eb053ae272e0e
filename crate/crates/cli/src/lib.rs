//! Command-line pipeline: simulate scenarios, sweep stiffness, analyze GRF
//! traces, fit joint angles, calibrate materials and decimate meshes.

pub mod commands;
pub mod manifest;
pub mod scenario;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

/// Version tag carried by every JSON document the tool writes.
pub const SCHEMA_VERSION: u32 = 1;

pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const PHYSICS: i32 = 2;
    pub const INSUFFICIENT_DATA: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Physics(String),
    #[error("{0}")]
    InsufficientData(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => exit::INPUT,
            CliError::Physics(_) => exit::PHYSICS,
            CliError::InsufficientData(_) => exit::INSUFFICIENT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "softgait", version, about = "Soft-foot walking simulation and gait analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write GRF, joint and event traces plus a manifest.
    Simulate(SimulateArgs),
    /// Run a scenario once per stiffness value and tabulate the outcomes.
    Sweep(SweepArgs),
    /// Segment a GRF trace and score it against a reference band.
    Analyze(AnalyzeArgs),
    /// Regress simulated joint angles on reference angles cycle by cycle.
    Lfm(LfmArgs),
    /// Find spring stiffness and damping equivalent to a continuum material.
    Calibrate(CalibrateArgs),
    /// Simplify a surface mesh to a target vertex count.
    Decimate(DecimateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "SK", alias = "sk")]
    Sk,
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
    #[value(name = "E", alias = "e")]
    E,
}

impl Preset {
    pub fn label(self) -> &'static str {
        match self {
            Preset::Sk => "SK",
            Preset::A => "A",
            Preset::B => "B",
            Preset::E => "E",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for softgait_core::skeleton::Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Left => softgait_core::skeleton::Side::Left,
            SideArg::Right => softgait_core::skeleton::Side::Right,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the world timestep, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Replaces the scenario label.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Spring stiffness override, N/m.
    #[arg(long)]
    pub stiffness: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Comma-separated spring stiffness values, N/m.
    #[arg(long, value_delimiter = ',', required = true)]
    pub stiffness: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// GRF CSV written by `simulate`.
    #[arg(long, required_unless_present = "em_values")]
    pub grf: Option<PathBuf>,
    /// Per-cycle EM values (column `em`) to aggregate instead of a trace.
    #[arg(long, conflicts_with_all = ["grf", "band", "band_trials"])]
    pub em_values: Option<PathBuf>,
    /// Reference band CSV (gait_pct, mean, sd).
    #[arg(long, conflicts_with = "band_trials")]
    pub band: Option<PathBuf>,
    /// Per-trial reference curves (gait_pct plus `left*` / `right*` columns).
    #[arg(long)]
    pub band_trials: Option<PathBuf>,
    /// Use the synthetic band (the default when no band is given).
    #[arg(long, conflicts_with_all = ["band", "band_trials"])]
    pub synth_band: bool,
    #[arg(long, value_enum, default_value = "left")]
    pub side: SideArg,
    /// Body weight, N; defaults to the built-in body.
    #[arg(long)]
    pub body_weight: Option<f64>,
    /// Model label; SK disables the phase offset by default.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, conflicts_with = "offset")]
    pub no_offset: bool,
    /// Force the phase offset on.
    #[arg(long)]
    pub offset: bool,
    #[arg(long, default_value_t = 1.0)]
    pub warmup: f64,
    #[arg(long, default_value_t = 4)]
    pub cycles: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LfmArgs {
    /// Joint CSV written by `simulate`.
    #[arg(long)]
    pub joints: PathBuf,
    /// Reference joint angles (columns `t` plus the six joints).
    #[arg(long)]
    pub reference: PathBuf,
    /// Segment cycles from this GRF trace instead of a fixed period.
    #[arg(long)]
    pub grf: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    #[arg(long, default_value_t = 1.0)]
    pub warmup: f64,
    #[arg(long, default_value_t = 4)]
    pub cycles: usize,
    #[arg(long)]
    pub body_weight: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub young_kpa: f64,
    #[arg(long)]
    pub poisson: f64,
    /// Dimensionless continuum damping; the material default when absent.
    #[arg(long)]
    pub damping_coefficient: Option<f64>,
    /// Surface mesh to build the lattice from.
    #[arg(long)]
    pub mesh: PathBuf,
    /// Static test load, N.
    #[arg(long, default_value_t = 100.0)]
    pub load: f64,
    #[arg(long, default_value_t = softgait_core::mesh::DEFAULT_TISSUE_DENSITY)]
    pub density: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DecimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target: usize,
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Documents go to stdout, diagnostics to
/// stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INPUT } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(outcome) => {
            if !outcome.stdout.is_empty() {
                println!("{}", outcome.stdout);
            }
            if let Some(note) = outcome.stderr {
                eprintln!("{note}");
            }
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
