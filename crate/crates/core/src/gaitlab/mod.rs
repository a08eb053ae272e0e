//! Gait-cycle segmentation, gait-percentage resampling, reference bands,
//! the experimental-match score, phase alignment and linear-fit analysis.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::Side;

/// Points on the gait-percentage grid, 0 to 100 inclusive.
pub const GRID: usize = 101;
pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_OFFSET_RANGE: i32 = 15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("cycle [{start}, {end}) has fewer than 2 samples")]
    TooShort { start: usize, end: usize },
    #[error("cycle [{start}, {end}) is outside a series of length {len}")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("need at least {needed} curves, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("curve has {found} samples, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("reference curve is constant; regression is degenerate")]
    DegenerateRegression,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("band file: {0}")]
    Band(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaitCycle {
    pub start: usize,
    /// Exclusive; the next heel strike.
    pub end: usize,
    pub side: Side,
}

impl GaitCycle {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Cycles between consecutive upward crossings of `threshold * body_weight`.
/// Anything before the first crossing or after the last is discarded.
pub fn segment_cycles(trace: &[f64], body_weight: f64, threshold: f64, side: Side) -> Vec<GaitCycle> {
    let level = threshold * body_weight;
    let strikes: Vec<usize> = (1..trace.len())
        .filter(|&i| trace[i - 1] < level && trace[i] >= level)
        .collect();
    strikes
        .windows(2)
        .map(|w| GaitCycle {
            start: w[0],
            end: w[1],
            side,
        })
        .collect()
}

/// Linear resampling of `series[start..end]` onto the gait-percentage grid.
pub fn to_gait_percent(series: &[f64], cycle: &GaitCycle) -> Result<Vec<f64>, GaitError> {
    if cycle.end > series.len() || cycle.start > cycle.end {
        return Err(GaitError::OutOfRange {
            start: cycle.start,
            end: cycle.end,
            len: series.len(),
        });
    }
    let part = &series[cycle.start..cycle.end];
    if part.len() < 2 {
        return Err(GaitError::TooShort {
            start: cycle.start,
            end: cycle.end,
        });
    }
    let last = (part.len() - 1) as f64;
    Ok((0..GRID)
        .map(|g| {
            let x = last * g as f64 / (GRID - 1) as f64;
            let i = (x.floor() as usize).min(part.len() - 2);
            let f = x - i as f64;
            part[i] + f * (part[i + 1] - part[i])
        })
        .collect())
}

fn check_len(curve: &[f64]) -> Result<(), GaitError> {
    if curve.len() != GRID {
        return Err(GaitError::Length {
            expected: GRID,
            found: curve.len(),
        });
    }
    Ok(())
}

/// Pointwise mean and standard deviation on the gait grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBand {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    #[serde(default)]
    pub units: String,
}

impl ReferenceBand {
    pub fn validate(&self) -> Result<(), GaitError> {
        check_len(&self.mean)?;
        check_len(&self.sd)?;
        if let Some(g) = self.sd.iter().position(|s| !(*s >= 0.0)) {
            return Err(GaitError::Band(format!("sd at {g}% is negative or not a number")));
        }
        Ok(())
    }

    /// CSV with columns `gait_pct, mean, sd`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("gait_pct,mean,sd\n");
        for (g, (m, s)) in self.mean.iter().zip(&self.sd).enumerate() {
            let _ = writeln!(out, "{g},{m},{s}");
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, GaitError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| GaitError::Band(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| GaitError::Band(format!("missing column `{name}`")))
        };
        let (mc, sc) = (col("mean")?, col("sd")?);
        col("gait_pct")?;
        let mut band = ReferenceBand {
            mean: Vec::new(),
            sd: Vec::new(),
            units: "N".into(),
        };
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| GaitError::Band(e.to_string()))?;
            let value = |c: usize| -> Result<f64, GaitError> {
                record
                    .get(c)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| GaitError::Band(format!("row {}: bad number", row + 2)))
            };
            band.mean.push(value(mc)?);
            band.sd.push(value(sc)?);
        }
        band.validate()?;
        Ok(band)
    }

    pub fn load(path: &Path) -> Result<Self, GaitError> {
        let text = std::fs::read_to_string(path).map_err(|e| GaitError::Band(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }
}

/// Pointwise mean and sample standard deviation of at least two curves.
pub fn build_band(curves: &[Vec<f64>]) -> Result<ReferenceBand, GaitError> {
    if curves.len() < 2 {
        return Err(GaitError::InsufficientData {
            needed: 2,
            found: curves.len(),
        });
    }
    for c in curves {
        check_len(c)?;
    }
    let n = curves.len() as f64;
    let mut mean = vec![0.0; GRID];
    let mut sd = vec![0.0; GRID];
    for g in 0..GRID {
        let m = curves.iter().map(|c| c[g]).sum::<f64>() / n;
        let var = curves.iter().map(|c| (c[g] - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean[g] = m;
        sd[g] = var.sqrt();
    }
    Ok(ReferenceBand {
        mean,
        sd,
        units: "N".into(),
    })
}

/// Fraction of grid points where the curve lies within the closed band.
pub fn em(sim: &[f64], band: &ReferenceBand) -> f64 {
    let inside = sim
        .iter()
        .zip(band.mean.iter().zip(&band.sd))
        .filter(|(s, (m, sd))| (*s - *m).abs() <= **sd)
        .count();
    inside as f64 / GRID as f64
}

/// `sim` moved later by `offset` gait-% points, wrapping around the grid.
pub fn shift_curve(sim: &[f64], offset: i32) -> Vec<f64> {
    let n = sim.len() as i64;
    (0..n)
        .map(|g| sim[(g - offset as i64).rem_euclid(n) as usize])
        .collect()
}

fn offsets(range: i32) -> impl Iterator<Item = i32> {
    // 0, -1, 1, -2, 2, ... so the first maximum found has the smallest |offset|
    std::iter::once(0).chain((1..=range.max(0)).flat_map(|k| [-k, k]))
}

/// Integer circular shift within `±range` that maximizes EM.
pub fn best_offset(sim: &[f64], band: &ReferenceBand, range: i32) -> (i32, f64) {
    best_offset_all(std::slice::from_ref(&sim.to_vec()), band, range)
}

/// One shared shift maximizing the mean EM over several curves.
pub fn best_offset_all(curves: &[Vec<f64>], band: &ReferenceBand, range: i32) -> (i32, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for o in offsets(range) {
        let score = curves.iter().map(|c| em(&shift_curve(c, o), band)).sum::<f64>() / curves.len().max(1) as f64;
        if score > best.1 {
            best = (o, score);
        }
    }
    best
}

/// Mean and spread of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn with_denominator(values: &[f64], ddof: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() as f64 - ddof <= 0.0 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - ddof)).sqrt()
        };
        Self { mean, sd }
    }

    /// Sample SD (n − 1), zero for a single value.
    pub fn sample(values: &[f64]) -> Self {
        Self::with_denominator(values, 1.0)
    }

    /// Population SD (n).
    pub fn population(values: &[f64]) -> Self {
        Self::with_denominator(values, 0.0)
    }

    /// `mean±sd` rounded to `decimals`.
    pub fn format(&self, decimals: usize) -> String {
        format!(
            "{}±{}",
            format_fixed(self.mean, decimals),
            format_fixed(self.sd, decimals)
        )
    }
}

/// Fixed-point rendering that rounds decimal ties away from zero, so 0.6275
/// (stored as 0.62749999...) renders as 0.628.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    let scaled = value * 10f64.powi(decimals as i32);
    let nudged = scaled + scaled.signum() * scaled.abs() * 1e-12;
    let rounded = nudged.round() / 10f64.powi(decimals as i32);
    let out = format!("{rounded:.decimals$}");
    if out.starts_with('-') && out.trim_start_matches(['-', '0', '.']).is_empty() {
        out[1..].to_string()
    } else {
        out
    }
}

pub fn aggregate_em(values: &[f64]) -> MeanSd {
    MeanSd::sample(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfmFit {
    pub a1: f64,
    pub a0: f64,
    pub r2: f64,
}

/// Least-squares line `sim ≈ a1 · reference + a0` and its R².
pub fn lfm_fit(sim: &[f64], reference: &[f64]) -> Result<LfmFit, GaitError> {
    if sim.len() != reference.len() {
        return Err(GaitError::Length {
            expected: reference.len(),
            found: sim.len(),
        });
    }
    let n = sim.len() as f64;
    let mx = reference.iter().sum::<f64>() / n;
    let my = sim.iter().sum::<f64>() / n;
    let sxx: f64 = reference.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(GaitError::DegenerateRegression);
    }
    let sxy: f64 = reference.iter().zip(sim).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a1 = sxy / sxx;
    let a0 = my - a1 * mx;
    let ss_res: f64 = reference
        .iter()
        .zip(sim)
        .map(|(x, y)| (y - (a1 * x + a0)).powi(2))
        .sum();
    let ss_tot: f64 = sim.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_res == 0.0 {
        1.0
    } else if ss_tot == 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LfmFit { a1, a0, r2 })
}

/// Shape of the synthetic vertical GRF band, loads as fractions of body
/// weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthBand {
    pub body_weight: f64,
    pub peak1: f64,
    pub trough: f64,
    pub peak2: f64,
    pub stance_fraction: f64,
    pub sd_fraction: f64,
    /// Lower bound on the sd inside stance, N.
    pub sd_floor: f64,
}

impl Default for SynthBand {
    fn default() -> Self {
        Self {
            body_weight: 70.0 * 9.81,
            peak1: 1.1,
            trough: 0.8,
            peak2: 1.1,
            stance_fraction: 0.6,
            sd_fraction: 0.1,
            sd_floor: 20.0,
        }
    }
}

/// Double-hump stance profile through (0, 0), (¼, peak1), (½, trough),
/// (¾, peak2), (1, 0) of stance with cosine easing between knots, zero in
/// swing.
pub fn synth_reference(p: &SynthBand) -> Result<ReferenceBand, GaitError> {
    if !(p.body_weight > 0.0 && p.body_weight.is_finite()) {
        return Err(GaitError::Parameter(format!(
            "body weight must be > 0, got {}",
            p.body_weight
        )));
    }
    if !(p.stance_fraction > 0.0 && p.stance_fraction < 1.0) {
        return Err(GaitError::Parameter(format!(
            "stance fraction must be in (0, 1), got {}",
            p.stance_fraction
        )));
    }
    if !(p.sd_fraction >= 0.0 && p.sd_floor >= 0.0) {
        return Err(GaitError::Parameter("sd fraction and floor must be >= 0".into()));
    }
    if !(p.trough < p.peak1.min(p.peak2) && p.trough > 0.0) {
        return Err(GaitError::Parameter(
            "trough must lie between zero and both peaks".into(),
        ));
    }
    let knots = [0.0, p.peak1, p.trough, p.peak2, 0.0];
    let mut mean = vec![0.0; GRID];
    let mut sd = vec![0.0; GRID];
    for g in 0..GRID {
        let u = g as f64 / 100.0 / p.stance_fraction;
        if u >= 1.0 {
            continue;
        }
        let x = 4.0 * u;
        let k = (x.floor() as usize).min(3);
        let f = x - k as f64;
        let ease = 0.5 - 0.5 * (std::f64::consts::PI * f).cos();
        let value = p.body_weight * (knots[k] + ease * (knots[k + 1] - knots[k]));
        mean[g] = value;
        sd[g] = (p.sd_fraction * value).max(p.sd_floor);
    }
    Ok(ReferenceBand {
        mean,
        sd,
        units: "N".into(),
    })
}

/// When the phase shift is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    None,
    /// One shift shared by all cycles.
    PerModel,
    PerCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmReport {
    pub per_cycle: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Shift applied to each cycle, gait-% points.
    pub offsets: Vec<i32>,
}

/// EM of each gait-% curve against `band`, with the chosen alignment.
pub fn em_report(curves: &[Vec<f64>], band: &ReferenceBand, mode: OffsetMode, range: i32) -> EmReport {
    let offsets: Vec<i32> = match mode {
        OffsetMode::None => vec![0; curves.len()],
        OffsetMode::PerModel => vec![best_offset_all(curves, band, range).0; curves.len()],
        OffsetMode::PerCycle => curves.iter().map(|c| best_offset(c, band, range).0).collect(),
    };
    let per_cycle: Vec<f64> = curves
        .iter()
        .zip(&offsets)
        .map(|(c, &o)| em(&shift_curve(c, o), band))
        .collect();
    let stats = if per_cycle.is_empty() {
        MeanSd { mean: 0.0, sd: 0.0 }
    } else {
        aggregate_em(&per_cycle)
    };
    EmReport {
        per_cycle,
        mean: stats.mean,
        sd: stats.sd,
        offsets,
    }
}

/// Cycle selection for trace analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSelection {
    pub threshold: f64,
    /// Heel strikes earlier than this (s) are skipped.
    pub warmup: f64,
    pub max_cycles: usize,
    /// An upward crossing only counts as a heel strike once the trace has
    /// stayed below threshold for this long (s). Zero disables the check.
    pub min_swing: f64,
}

impl Default for CycleSelection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            warmup: 1.0,
            max_cycles: 4,
            min_swing: 0.15,
        }
    }
}

/// The first complete cycles of `trace` that start after the warm-up.
///
/// Brief unloading inside a stance (a foot bouncing during weight transfer)
/// is ignored through `min_swing`.
pub fn select_cycles(
    times: &[f64],
    trace: &[f64],
    body_weight: f64,
    side: Side,
    selection: &CycleSelection,
) -> Vec<GaitCycle> {
    let level = selection.threshold * body_weight;
    let mut strikes = Vec::new();
    let mut below_since: Option<f64> = None;
    for i in 1..trace.len().min(times.len()) {
        if trace[i - 1] >= level {
            below_since = None;
        } else if below_since.is_none() {
            below_since = Some(times[i - 1]);
        }
        if trace[i - 1] < level && trace[i] >= level {
            let swing = below_since.map_or(0.0, |t0| times[i] - t0);
            if swing >= selection.min_swing {
                strikes.push(i);
            }
        }
    }
    strikes
        .windows(2)
        .map(|w| GaitCycle {
            start: w[0],
            end: w[1],
            side,
        })
        .filter(|c| times[c.start] >= selection.warmup)
        .take(selection.max_cycles)
        .collect()
}

/// Per-joint regression statistics across cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLfm {
    pub joint: String,
    pub per_cycle: Vec<LfmFit>,
    pub a1: MeanSd,
    pub a0: MeanSd,
    pub r2: MeanSd,
}

/// Fits every joint of `sim` against `reference` cycle by cycle. Spread is
/// the population SD over cycles.
pub fn lfm_report(
    names: &[String],
    sim: &[Vec<f64>],
    reference: &[Vec<f64>],
    cycles: &[GaitCycle],
) -> Result<Vec<JointLfm>, GaitError> {
    if cycles.is_empty() {
        return Err(GaitError::InsufficientData { needed: 1, found: 0 });
    }
    names
        .iter()
        .zip(sim.iter().zip(reference))
        .map(|(name, (s, r))| {
            let per_cycle = cycles
                .iter()
                .map(|c| lfm_fit(&to_gait_percent(s, c)?, &to_gait_percent(r, c)?))
                .collect::<Result<Vec<_>, _>>()?;
            let pick = |f: fn(&LfmFit) -> f64| MeanSd::population(&per_cycle.iter().map(f).collect::<Vec<_>>());
            Ok(JointLfm {
                joint: name.clone(),
                a1: pick(|f| f.a1),
                a0: pick(|f| f.a0),
                r2: pick(|f| f.r2),
                per_cycle,
            })
        })
        .collect()
}
