use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use softgait_core::gaitlab::{
    aggregate_em, build_band, em_report, format_fixed, lfm_report, select_cycles, synth_reference, CycleSelection,
    EmReport, GaitCycle, GaitError, JointLfm, MeanSd, OffsetMode, ReferenceBand, SynthBand, DEFAULT_OFFSET_RANGE,
};
use softgait_core::mesh::{build_lattice, decimate, hausdorff_distance, load_mesh};
use softgait_core::sim::{run, SimError, SimOutput};
use softgait_core::skeleton::{BodyParams, JointName, Side};
use softgait_core::softbody::{calibrate, FemMaterial, Material, MaterialLibrary, SoftBodyError};

use crate::manifest::{write_output, RunManifest};
use crate::scenario::{Prepared, Scenario};
use crate::{
    exit, AnalyzeArgs, CalibrateArgs, CliError, Command, DecimateArgs, LfmArgs, Preset, ScenarioArgs, SimulateArgs,
    SweepArgs, SCHEMA_VERSION,
};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// The command's document, printed to stdout.
    pub stdout: String,
    pub stderr: Option<String>,
    pub code: i32,
}

pub fn dispatch(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Lfm(a) => cmd_lfm(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Decimate(a) => cmd_decimate(a),
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn to_json<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("document serializes")
}

fn write_doc(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    if let Some(path) = path {
        std::fs::write(path, format!("{text}\n")).map_err(|e| input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn gait_error(e: GaitError) -> CliError {
    match e {
        GaitError::InsufficientData { .. } => CliError::InsufficientData(e.to_string()),
        other => input(other.to_string()),
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Config(_) | SimError::Skeleton(_) => input(e.to_string()),
        other => CliError::Physics(other.to_string()),
    }
}

fn default_body_weight() -> f64 {
    let g = softgait_core::sim::WorldConfig::default().gravity;
    BodyParams::default().body_mass * g
}

/// Loads the scenario named in `args`, applies the command-line overrides
/// and returns it with the directory its asset paths are relative to.
pub fn load_scenario(args: &ScenarioArgs) -> Result<(Scenario, PathBuf), CliError> {
    let mut s = Scenario::load(&args.scenario)?;
    if let Some(p) = args.preset {
        s.label = p.label().to_string();
    }
    if let Some(dt) = args.dt {
        s.world.dt = Some(dt);
    }
    if let Some(k) = args.stiffness {
        s.material.stiffness = Some(k);
    }
    let base = args.scenario.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((s, base))
}

/// Runs a prepared scenario and writes its traces and manifest to `out`.
pub fn simulate_prepared(prepared: &Prepared, out: &Path) -> Result<(SimOutput, RunManifest), CliError> {
    std::fs::create_dir_all(out).map_err(|e| input(format!("{}: {e}", out.display())))?;
    let start = Instant::now();
    let output = run(
        prepared.config.clone(),
        prepared.body,
        prepared.feet.clone(),
        prepared.reference.clone(),
    )
    .map_err(sim_error)?;
    let timing_s = start.elapsed().as_secs_f64();

    let reference_csv = reference_joint_csv(&output.times, prepared);
    let outputs = vec![
        write_output(out, "grf.csv", output.grf_csv().as_bytes())?,
        write_output(out, "joints.csv", output.joint_csv().as_bytes())?,
        write_output(out, "events.csv", output.events_csv().as_bytes())?,
        write_output(out, "reference.csv", reference_csv.as_bytes())?,
    ];
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        label: prepared.scenario.label.clone(),
        scenario_hash: prepared.hash.clone(),
        outputs,
        timing_s,
        stable: output.stable,
        failure_time: output.failure_time,
        failure: output.failure.clone(),
        steps: output.times.len(),
        body_weight: output.body_weight,
    };
    let path = out.join("manifest.json");
    std::fs::write(&path, format!("{}\n", to_json(&manifest)))
        .map_err(|e| input(format!("{}: {e}", path.display())))?;
    Ok((output, manifest))
}

/// Reference joint angles on the simulation's time grid, in the joint CSV
/// layout.
fn reference_joint_csv(times: &[f64], prepared: &Prepared) -> String {
    let mut out = String::from("t");
    for j in JointName::ALL {
        out.push(',');
        out.push_str(j.name());
    }
    out.push('\n');
    for &t in times {
        let _ = write!(out, "{t}");
        for a in prepared.reference.sample(t).joints {
            let _ = write!(out, ",{a}");
        }
        out.push('\n');
    }
    out
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let (scenario, base) = load_scenario(&args.scenario)?;
    let prepared = scenario.prepare(&base)?;
    let (_, manifest) = simulate_prepared(&prepared, &args.out)?;
    let (code, stderr) = if manifest.stable {
        (exit::OK, None)
    } else {
        (
            exit::PHYSICS,
            Some(format!(
                "unstable at t = {} s: {}",
                manifest.failure_time.unwrap_or(f64::NAN),
                manifest.failure.as_deref().unwrap_or("diverging energy")
            )),
        )
    };
    Ok(Outcome {
        stdout: to_json(&manifest),
        stderr,
        code,
    })
}

/// Per-cycle EM of one side of a simulation against `band`.
pub fn em_for_trace(
    times: &[f64],
    trace: &[f64],
    body_weight: f64,
    side: Side,
    band: &ReferenceBand,
    offset: bool,
    selection: &CycleSelection,
) -> Result<(Vec<GaitCycle>, EmReport), CliError> {
    let cycles = select_cycles(times, trace, body_weight, side, selection);
    if cycles.is_empty() {
        return Err(CliError::InsufficientData(format!(
            "no complete {side} gait cycle after t = {} s",
            selection.warmup
        )));
    }
    let curves = cycles
        .iter()
        .map(|c| softgait_core::gaitlab::to_gait_percent(trace, c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(gait_error)?;
    let mode = if offset { OffsetMode::PerModel } else { OffsetMode::None };
    let report = em_report(&curves, band, mode, DEFAULT_OFFSET_RANGE);
    Ok((cycles, report))
}

/// Cycle selection configured by a scenario.
pub fn selection_of(scenario: &Scenario) -> CycleSelection {
    CycleSelection {
        warmup: scenario.reference.warmup,
        max_cycles: scenario.reference.cycles,
        ..CycleSelection::default()
    }
}

/// EM of a finished run on the left side, using the scenario's band and
/// offset policy.
pub fn em_for_output(output: &SimOutput, prepared: &Prepared) -> Result<(Vec<GaitCycle>, EmReport), CliError> {
    em_for_trace(
        &output.times,
        &output.vertical(Side::Left),
        output.body_weight,
        Side::Left,
        &prepared.band,
        prepared.scenario.offset_enabled(),
        &selection_of(&prepared.scenario),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub stiffness: f64,
    pub label: String,
    pub em_mean: Option<f64>,
    pub em_sd: Option<f64>,
    pub cycles: usize,
    pub skeleton_events: usize,
    pub stable: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub kind: &'static str,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn table(&self) -> String {
        let mut out = String::from("stiffness  label   EM      events  stable\n");
        for r in &self.rows {
            let em = r.em_mean.map_or("-".to_string(), |m| format_fixed(m, 3));
            let _ = writeln!(
                out,
                "{:>9}  {:<6}  {:<6}  {:>6}  {}",
                r.stiffness, r.label, em, r.skeleton_events, r.stable
            );
        }
        out
    }
}

/// Worker count for sweeps: `SOFTGAIT_THREADS` when set, else the
/// available parallelism.
pub fn sweep_threads(jobs: usize) -> usize {
    let cap = std::env::var("SOFTGAIT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

/// Scenario variant with spring stiffness `k`; the damping is kept.
pub fn stiffness_variant(base: &Scenario, k: f64) -> Result<Scenario, CliError> {
    let damping = match base.material()? {
        Some(Material::Spring(m)) => m.damping,
        Some(Material::Fem(_)) => return Err(input("sweep needs material.mode = \"spring\"")),
        None => return Err(input("sweep needs a flex scenario, not SK")),
    };
    let mut s = base.clone();
    let library = MaterialLibrary::default();
    s.label = library
        .presets
        .iter()
        .find(|p| p.stiffness == k)
        .map_or_else(|| format!("k{k}"), |p| p.label.to_string());
    s.material.preset = None;
    s.material.stiffness = Some(k);
    s.material.damping = Some(damping);
    Ok(s)
}

fn sweep_row(scenario: &Scenario, k: f64, base: &Path, out: &Path) -> SweepRow {
    let mut row = SweepRow {
        stiffness: k,
        label: scenario.label.clone(),
        em_mean: None,
        em_sd: None,
        cycles: 0,
        skeleton_events: 0,
        stable: false,
        error: None,
    };
    let result = scenario.prepare(base).and_then(|prepared| {
        let (output, manifest) = simulate_prepared(&prepared, &out.join(&scenario.label))?;
        Ok((prepared, output, manifest))
    });
    match result {
        Ok((prepared, output, manifest)) => {
            row.stable = manifest.stable;
            row.skeleton_events = output.events.len();
            if !manifest.stable {
                row.error = manifest.failure.clone();
            }
            match em_for_output(&output, &prepared) {
                Ok((cycles, report)) => {
                    row.cycles = cycles.len();
                    row.em_mean = Some(report.mean);
                    row.em_sd = Some(report.sd);
                }
                Err(e) => row.error = row.error.take().or(Some(e.to_string())),
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every stiffness variant, in parallel up to [`sweep_threads`], and
/// returns rows sorted by stiffness. A failing run fills its row's `error`
/// and does not stop the others.
pub fn sweep(base_scenario: &Scenario, base: &Path, stiffness: &[f64], out: &Path) -> Result<SweepReport, CliError> {
    if stiffness.len() < 2 {
        return Err(input("--stiffness needs at least two values"));
    }
    if let Some(k) = stiffness.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
        return Err(input(format!("--stiffness values must be > 0, got {k}")));
    }
    let mut values = stiffness.to_vec();
    values.sort_by(f64::total_cmp);
    let variants = values
        .iter()
        .map(|&k| stiffness_variant(base_scenario, k))
        .collect::<Result<Vec<_>, _>>()?;

    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; variants.len()]);
    std::thread::scope(|scope| {
        for _ in 0..sweep_threads(variants.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= variants.len() {
                    break;
                }
                let row = sweep_row(&variants[i], values[i], base, out);
                rows.lock().expect("row lock")[i] = Some(row);
            });
        }
    });
    let rows = rows
        .into_inner()
        .expect("row lock")
        .into_iter()
        .map(|r| r.expect("every variant ran"))
        .collect();
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        kind: "sweep",
        rows,
    })
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Outcome, CliError> {
    let (scenario, base) = load_scenario(&ScenarioArgs {
        scenario: args.scenario.clone(),
        dt: args.dt,
        preset: None,
        stiffness: None,
    })?;
    std::fs::create_dir_all(&args.out).map_err(|e| input(format!("{}: {e}", args.out.display())))?;
    let report = sweep(&scenario, &base, &args.stiffness, &args.out)?;
    let doc = to_json(&report);
    write_doc(Some(&args.out.join("sweep.json")), &doc)?;
    let ok = report.rows.iter().all(|r| r.stable && r.error.is_none());
    Ok(Outcome {
        stdout: doc,
        stderr: Some(report.table()),
        code: if ok { exit::OK } else { exit::PHYSICS },
    })
}

/// Reads named numeric columns from a CSV file.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| input(format!("{}: {e}", path.display())))?
        .clone();
    let cols = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| input(format!("{}: missing column `{n}`", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut data = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input(format!("{}: {e}", path.display())))?;
        for (k, &c) in cols.iter().enumerate() {
            let raw = record.get(c).unwrap_or("");
            let v = raw.parse::<f64>().map_err(|_| {
                input(format!(
                    "{}: row {}: `{raw}` in column `{}` is not a number",
                    path.display(),
                    row + 2,
                    names[k]
                ))
            })?;
            data[k].push(v);
        }
    }
    Ok(data)
}

/// Builds a band from the `side` trials of a per-trial CSV: one column per
/// trial whose header starts with `left` or `right`, one row per gait
/// percent.
pub fn band_from_trials(path: &Path, side: Side) -> Result<ReferenceBand, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| input(format!("{}: {e}", path.display())))?
        .clone();
    let prefix = side.to_string();
    let names: Vec<&str> = headers
        .iter()
        .filter(|h| h.to_ascii_lowercase().starts_with(&prefix))
        .collect();
    let trials = read_columns(path, &names)?;
    build_band(&trials).map_err(|e| match e {
        GaitError::InsufficientData { .. } => CliError::InsufficientData(format!(
            "{}: {} {side} trial(s); at least 2 are needed for a standard deviation",
            path.display(),
            trials.len()
        )),
        other => input(format!("{}: {other}", path.display())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmDocument {
    pub schema_version: u32,
    pub kind: &'static str,
    pub side: Option<Side>,
    pub offset_applied: bool,
    pub offsets: Vec<i32>,
    pub per_cycle: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Mean rounded to three decimals.
    pub mean_rendered: String,
    /// Mean ± sample sd, three decimals.
    pub rendered: String,
}

impl EmDocument {
    fn new(side: Option<Side>, offset_applied: bool, offsets: Vec<i32>, per_cycle: Vec<f64>) -> Self {
        let stats = aggregate_em(&per_cycle);
        Self {
            schema_version: SCHEMA_VERSION,
            kind: "em_report",
            side,
            offset_applied,
            offsets,
            mean: stats.mean,
            sd: stats.sd,
            mean_rendered: format_fixed(stats.mean, 3),
            rendered: stats.format(3),
            per_cycle,
        }
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<Outcome, CliError> {
    let side: Side = args.side.into();
    if let Some(path) = &args.em_values {
        let values = read_columns(path, &["em"])?.remove(0);
        if values.is_empty() {
            return Err(CliError::InsufficientData(format!("{}: no EM values", path.display())));
        }
        let doc = to_json(&EmDocument::new(None, false, Vec::new(), values));
        write_doc(args.out.as_deref(), &doc)?;
        return Ok(Outcome {
            stdout: doc,
            stderr: None,
            code: exit::OK,
        });
    }
    let body_weight = args.body_weight.unwrap_or_else(default_body_weight);
    if !(body_weight > 0.0 && body_weight.is_finite()) {
        return Err(input(format!("--body-weight must be > 0, got {body_weight}")));
    }
    let band = if let Some(path) = &args.band {
        ReferenceBand::load(path).map_err(|e| input(e.to_string()))?
    } else if let Some(path) = &args.band_trials {
        band_from_trials(path, side)?
    } else {
        synth_reference(&SynthBand {
            body_weight,
            ..SynthBand::default()
        })
        .map_err(gait_error)?
    };
    let grf = args.grf.as_ref().ok_or_else(|| input("--grf is required"))?;
    let column = format!("{side}_total_fz");
    let mut cols = read_columns(grf, &["t", &column])?;
    let trace = cols.pop().expect("two columns");
    let times = cols.pop().expect("two columns");
    let skeleton_only = args.preset == Some(Preset::Sk);
    let offset = if args.offset {
        true
    } else if args.no_offset {
        false
    } else {
        !skeleton_only
    };
    let selection = CycleSelection {
        warmup: args.warmup,
        max_cycles: args.cycles,
        ..CycleSelection::default()
    };
    let (_, report) = em_for_trace(&times, &trace, body_weight, side, &band, offset, &selection)?;
    let doc = to_json(&EmDocument::new(Some(side), offset, report.offsets, report.per_cycle));
    write_doc(args.out.as_deref(), &doc)?;
    Ok(Outcome {
        stdout: doc,
        stderr: None,
        code: exit::OK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderedLfm {
    pub a1: String,
    pub a0: String,
    pub r2: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfmJointEntry {
    #[serde(flatten)]
    pub fit: JointLfm,
    /// Mean ± population sd over cycles, three decimals.
    pub rendered: RenderedLfm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfmDocument {
    pub schema_version: u32,
    pub kind: &'static str,
    pub cycles: usize,
    pub joints: Vec<LfmJointEntry>,
}

/// Linear interpolation of `(xs, ys)` at `x`, clamped to the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v < x);
    if i == 0 {
        return ys[0];
    }
    if i >= xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    if x1 == x0 {
        return ys[i];
    }
    ys[i - 1] + (x - x0) / (x1 - x0) * (ys[i] - ys[i - 1])
}

/// Consecutive windows of `period` seconds starting at `warmup`.
fn period_cycles(times: &[f64], warmup: f64, period: f64, count: usize) -> Vec<GaitCycle> {
    let index = |t: f64| times.partition_point(|&v| v < t - 1e-9);
    (0..count)
        .map(|k| {
            let start = index(warmup + k as f64 * period);
            let end = index(warmup + (k + 1) as f64 * period);
            (start, end, warmup + (k + 1) as f64 * period)
        })
        .take_while(|&(_, end, t_end)| end < times.len() || times.last().is_some_and(|&t| t >= t_end - 1e-9))
        .filter(|&(start, end, _)| end > start + 1)
        .map(|(start, end, _)| GaitCycle {
            start,
            end: end.min(times.len()),
            side: Side::Left,
        })
        .collect()
}

pub fn cmd_lfm(args: &LfmArgs) -> Result<Outcome, CliError> {
    let names: Vec<String> = JointName::ALL.iter().map(|j| j.name().to_string()).collect();
    let mut wanted: Vec<&str> = vec!["t"];
    wanted.extend(names.iter().map(String::as_str));
    let mut sim = read_columns(&args.joints, &wanted)?;
    let times = sim.remove(0);
    let mut reference = read_columns(&args.reference, &wanted)?;
    let ref_times = reference.remove(0);
    if times.len() < 2 || ref_times.len() < 2 {
        return Err(CliError::InsufficientData(
            "joint traces need at least two samples".into(),
        ));
    }
    // put the reference on the simulation grid
    let reference: Vec<Vec<f64>> = reference
        .iter()
        .map(|ys| times.iter().map(|&t| interpolate(&ref_times, ys, t)).collect())
        .collect();

    let cycles = match &args.grf {
        Some(path) => {
            let mut cols = read_columns(path, &["t", "left_total_fz"])?;
            let trace = cols.pop().expect("two columns");
            let grf_times = cols.pop().expect("two columns");
            if grf_times.len() != times.len() {
                return Err(input(format!(
                    "{}: {} rows but the joint trace has {}",
                    path.display(),
                    grf_times.len(),
                    times.len()
                )));
            }
            let selection = CycleSelection {
                warmup: args.warmup,
                max_cycles: args.cycles,
                ..CycleSelection::default()
            };
            let bw = args.body_weight.unwrap_or_else(default_body_weight);
            select_cycles(&times, &trace, bw, Side::Left, &selection)
        }
        None => {
            if args.period.is_nan() || args.period <= 0.0 {
                return Err(input(format!("--period must be > 0, got {}", args.period)));
            }
            period_cycles(&times, args.warmup, args.period, args.cycles)
        }
    };
    if cycles.is_empty() {
        return Err(CliError::InsufficientData(format!(
            "no complete cycle after t = {} s in {}",
            args.warmup,
            args.joints.display()
        )));
    }
    let fits = lfm_report(&names, &sim, &reference, &cycles).map_err(|e| CliError::Physics(e.to_string()))?;
    let render = |m: &MeanSd| m.format(3);
    let joints = fits
        .into_iter()
        .map(|fit| LfmJointEntry {
            rendered: RenderedLfm {
                a1: render(&fit.a1),
                a0: render(&fit.a0),
                r2: render(&fit.r2),
            },
            fit,
        })
        .collect();
    let doc = to_json(&LfmDocument {
        schema_version: SCHEMA_VERSION,
        kind: "lfm_report",
        cycles: cycles.len(),
        joints,
    });
    write_doc(args.out.as_deref(), &doc)?;
    Ok(Outcome {
        stdout: doc,
        stderr: None,
        code: exit::OK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationDocument {
    pub schema_version: u32,
    pub kind: &'static str,
    pub young_kpa: f64,
    pub poisson: f64,
    pub damping_coefficient: f64,
    pub load: f64,
    pub nodes: usize,
    pub stiffness: f64,
    pub damping: f64,
    pub continuum_deflection: f64,
    pub spring_deflection: f64,
    pub deflection_residual: f64,
    pub continuum_settling: f64,
    pub spring_settling: f64,
    pub settling_residual: f64,
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<Outcome, CliError> {
    let base = FemMaterial::from_kpa(args.young_kpa, args.poisson).map_err(|e| input(e.to_string()))?;
    let fem = match args.damping_coefficient {
        Some(c) => FemMaterial::new(base.young_modulus, base.poisson_ratio, c).map_err(|e| input(e.to_string()))?,
        None => base,
    };
    let mesh = load_mesh(&args.mesh).map_err(|e| input(format!("{}: {e}", args.mesh.display())))?;
    let lattice = build_lattice(&mesh, args.density).map_err(|e| input(format!("{}: {e}", args.mesh.display())))?;
    let c = calibrate(&fem, &lattice, args.load).map_err(|e| match e {
        SoftBodyError::CalibrationFailure { residual } => {
            CliError::Physics(format!("calibration failed: residual {residual}"))
        }
        SoftBodyError::InvalidMaterial(_) => input(e.to_string()),
        other => CliError::Physics(other.to_string()),
    })?;
    let doc = to_json(&CalibrationDocument {
        schema_version: SCHEMA_VERSION,
        kind: "spring_material",
        young_kpa: args.young_kpa,
        poisson: args.poisson,
        damping_coefficient: fem.damping_coefficient,
        load: args.load,
        nodes: lattice.node_count(),
        stiffness: c.material.stiffness,
        damping: c.material.damping,
        continuum_deflection: c.continuum_deflection,
        spring_deflection: c.spring_deflection,
        deflection_residual: c.deflection_residual,
        continuum_settling: c.continuum_settling,
        spring_settling: c.spring_settling,
        settling_residual: c.settling_residual,
    });
    write_doc(args.out.as_deref(), &doc)?;
    Ok(Outcome {
        stdout: doc,
        stderr: None,
        code: exit::OK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecimationDocument {
    pub schema_version: u32,
    pub kind: &'static str,
    pub input_vertices: usize,
    pub output_vertices: usize,
    /// Symmetric surface distance between input and output, m.
    pub hausdorff: f64,
    /// Hausdorff distance over the input bounding-box diagonal.
    pub hausdorff_relative: f64,
    pub summary: String,
}

/// Sampling density for the reported Hausdorff estimate.
const HAUSDORFF_DENSITY: usize = 4;

pub fn cmd_decimate(args: &DecimateArgs) -> Result<Outcome, CliError> {
    let mesh = load_mesh(&args.input).map_err(|e| input(format!("{}: {e}", args.input.display())))?;
    let out = decimate(&mesh, args.target).map_err(|e| input(e.to_string()))?;
    out.save(&args.output)
        .map_err(|e| input(format!("{}: {e}", args.output.display())))?;
    let h = hausdorff_distance(&mesh, &out, HAUSDORFF_DENSITY);
    let doc = DecimationDocument {
        schema_version: SCHEMA_VERSION,
        kind: "decimation",
        input_vertices: mesh.vertex_count(),
        output_vertices: out.vertex_count(),
        hausdorff: h,
        hausdorff_relative: h / mesh.bbox_diagonal(),
        summary: format!("{} -> {} vertices", mesh.vertex_count(), out.vertex_count()),
    };
    Ok(Outcome {
        stdout: to_json(&doc),
        stderr: Some(doc.summary.clone()),
        code: exit::OK,
    })
}
