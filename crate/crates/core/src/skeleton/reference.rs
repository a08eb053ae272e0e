use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BodyParams, JointName, PelvisState, Side, SkeletonError};

const PELVIS_COLUMNS: [&str; 3] = ["pelvis_x", "pelvis_z", "pelvis_pitch"];

/// Uniformly sampled joint and pelvis trajectories to be tracked.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMotion {
    pub times: Vec<f64>,
    /// Indexed by `JointName::index`.
    pub joints: [Vec<f64>; 6],
    pub pelvis_x: Vec<f64>,
    pub pelvis_z: Vec<f64>,
    pub pelvis_pitch: Vec<f64>,
}

/// Reference state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub joints: [f64; 6],
    pub joint_rates: [f64; 6],
    pub pelvis: PelvisState,
    pub pelvis_x_accel: f64,
    pub pelvis_z_accel: f64,
}

impl ReferenceMotion {
    pub fn validate(&self) -> Result<(), SkeletonError> {
        let n = self.times.len();
        if n < 3 {
            return Err(SkeletonError::Reference(format!("need at least 3 samples, got {n}")));
        }
        let lens = self
            .joints
            .iter()
            .chain([&self.pelvis_x, &self.pelvis_z, &self.pelvis_pitch])
            .map(Vec::len);
        if lens.clone().any(|l| l != n) {
            return Err(SkeletonError::Reference(
                "series lengths differ from the time column".into(),
            ));
        }
        let h = self.step();
        for (k, w) in self.times.windows(2).enumerate() {
            let d = w[1] - w[0];
            if !(d > 0.0) {
                return Err(SkeletonError::Reference(format!(
                    "timestamps not increasing at row {}",
                    k + 1
                )));
            }
            if (d - h).abs() > 1e-6 * h.max(1e-9) + 1e-12 {
                return Err(SkeletonError::Reference(format!(
                    "non-uniform timestep at row {}",
                    k + 1
                )));
            }
        }
        let all_finite = self
            .joints
            .iter()
            .flatten()
            .chain(&self.pelvis_x)
            .chain(&self.pelvis_z)
            .chain(&self.pelvis_pitch)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(SkeletonError::Reference("non-finite value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn parse_csv(text: &str) -> Result<Self, SkeletonError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| SkeletonError::Reference(e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| SkeletonError::MissingColumn(name.to_string()))
        };
        let t_col = col("t")?;
        let joint_cols: Vec<usize> = JointName::ALL.iter().map(|j| col(j.name())).collect::<Result<_, _>>()?;
        let pelvis_cols: Vec<usize> = PELVIS_COLUMNS.iter().map(|c| col(c)).collect::<Result<_, _>>()?;

        let mut m = ReferenceMotion {
            times: Vec::new(),
            joints: Default::default(),
            pelvis_x: Vec::new(),
            pelvis_z: Vec::new(),
            pelvis_pitch: Vec::new(),
        };
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| SkeletonError::Reference(e.to_string()))?;
            let get = |c: usize| -> Result<f64, SkeletonError> {
                let raw = record.get(c).unwrap_or("");
                raw.parse::<f64>().map_err(|_| {
                    SkeletonError::Reference(format!(
                        "row {}: `{}` is not a number in column `{}`",
                        row + 2,
                        raw,
                        &headers[c]
                    ))
                })
            };
            m.times.push(get(t_col)?);
            for (k, &c) in joint_cols.iter().enumerate() {
                m.joints[k].push(get(c)?);
            }
            m.pelvis_x.push(get(pelvis_cols[0])?);
            m.pelvis_z.push(get(pelvis_cols[1])?);
            m.pelvis_pitch.push(get(pelvis_cols[2])?);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, SkeletonError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SkeletonError::Reference(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t");
        for j in JointName::ALL {
            out.push(',');
            out.push_str(j.name());
        }
        for c in PELVIS_COLUMNS {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&self.times[i].to_string());
            for j in &self.joints {
                out.push(',');
                out.push_str(&j[i].to_string());
            }
            for v in [self.pelvis_x[i], self.pelvis_z[i], self.pelvis_pitch[i]] {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Fractional sample position, clamped to the recorded span.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.len();
        let s = ((t - self.start()) / self.step()).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    }

    fn interp(series: &[f64], i: usize, f: f64) -> f64 {
        series[i] + f * (series[i + 1] - series[i])
    }

    /// Central-difference derivative at sample `i` (one-sided at the ends).
    fn rate_at(series: &[f64], i: usize, h: f64) -> f64 {
        let n = series.len();
        if i == 0 {
            (series[1] - series[0]) / h
        } else if i == n - 1 {
            (series[n - 1] - series[n - 2]) / h
        } else {
            (series[i + 1] - series[i - 1]) / (2.0 * h)
        }
    }

    fn accel_at(series: &[f64], i: usize, h: f64) -> f64 {
        let i = i.clamp(1, series.len() - 2);
        (series[i + 1] - 2.0 * series[i] + series[i - 1]) / (h * h)
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        let (i, f) = self.locate(t);
        let h = self.step();
        let lerp = |a: f64, b: f64| a + f * (b - a);
        let rate = |s: &[f64]| lerp(Self::rate_at(s, i, h), Self::rate_at(s, i + 1, h));
        ReferenceSample {
            joints: std::array::from_fn(|k| Self::interp(&self.joints[k], i, f)),
            joint_rates: std::array::from_fn(|k| rate(&self.joints[k])),
            pelvis: PelvisState {
                x: Self::interp(&self.pelvis_x, i, f),
                z: Self::interp(&self.pelvis_z, i, f),
                pitch: Self::interp(&self.pelvis_pitch, i, f),
                vx: rate(&self.pelvis_x),
                vz: rate(&self.pelvis_z),
                pitch_rate: rate(&self.pelvis_pitch),
            },
            pelvis_x_accel: lerp(
                Self::accel_at(&self.pelvis_x, i, h),
                Self::accel_at(&self.pelvis_x, i + 1, h),
            ),
            pelvis_z_accel: lerp(
                Self::accel_at(&self.pelvis_z, i, h),
                Self::accel_at(&self.pelvis_z, i + 1, h),
            ),
        }
    }

    /// Synthetic level walking generated by inverse kinematics so that each
    /// stance foot rolls over heel, flat foot and toe without slipping.
    pub fn synthetic(params: &GaitParams, body: &BodyParams) -> Result<Self, SkeletonError> {
        params.validate()?;
        let n = (params.duration / params.sample_dt).round() as usize + 1;
        let mut m = ReferenceMotion {
            times: Vec::with_capacity(n),
            joints: Default::default(),
            pelvis_x: Vec::with_capacity(n),
            pelvis_z: Vec::with_capacity(n),
            pelvis_pitch: Vec::with_capacity(n),
        };
        for k in 0..n {
            let t = k as f64 * params.sample_dt;
            let (px, pz) = params.pelvis(t);
            m.times.push(t);
            m.pelvis_x.push(px);
            m.pelvis_z.push(pz);
            m.pelvis_pitch.push(0.0);
            for side in Side::BOTH {
                let (ankle, beta) = params.foot_pose(t, side);
                let angles = leg_ik((px, pz), ankle, beta, body.thigh_length, body.shank_length)
                    .ok_or_else(|| SkeletonError::Reference(format!("{side} leg cannot reach its foot at t = {t}")))?;
                for (level, angle) in angles.into_iter().enumerate() {
                    m.joints[JointName::of(side, level).index()].push(angle);
                }
            }
        }
        m.validate()?;
        Ok(m)
    }
}

/// Hip, knee and ankle angles placing the ankle at `ankle` with foot angle
/// `beta`, the hip at `hip` and zero pelvis pitch. Knee bends forward.
pub(crate) fn leg_ik(hip: (f64, f64), ankle: (f64, f64), beta: f64, thigh: f64, shank: f64) -> Option<[f64; 3]> {
    let (dx, dz) = (ankle.0 - hip.0, ankle.1 - hip.1);
    let d = dx.hypot(dz);
    if d >= thigh + shank || d <= (thigh - shank).abs() {
        return None;
    }
    let line = dx.atan2(-dz);
    let knee = std::f64::consts::PI - ((thigh * thigh + shank * shank - d * d) / (2.0 * thigh * shank)).acos();
    let lead = ((thigh * thigh + d * d - shank * shank) / (2.0 * thigh * d)).acos();
    let a_thigh = line + lead;
    let a_shank = a_thigh - knee;
    Some([a_thigh, knee, beta - a_shank])
}

/// Shape of the synthetic gait. Phases are fractions of the cycle, with the
/// left heel striking at t = 0 and the right half a cycle later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    pub period: f64,
    pub stance_fraction: f64,
    pub speed: f64,
    pub hip_height: f64,
    pub bob_amplitude: f64,
    pub heel_rocker: f64,
    pub toe_rocker: f64,
    /// Foot angle at heel strike (toes up), rad.
    pub heel_strike_angle: f64,
    /// Foot angle at toe-off (toes down), rad.
    pub toe_off_angle: f64,
    pub swing_clearance: f64,
    /// Rocker points in the foot frame (x, z).
    pub heel: (f64, f64),
    pub toe: (f64, f64),
    pub sample_dt: f64,
    pub duration: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            period: 1.0,
            stance_fraction: 0.6,
            speed: 1.2,
            hip_height: 0.85,
            bob_amplitude: 0.0125,
            heel_rocker: 0.1,
            toe_rocker: 0.15,
            heel_strike_angle: 0.25,
            toe_off_angle: -0.5,
            swing_clearance: 0.05,
            heel: (-0.025, -0.08),
            toe: (0.165, -0.08),
            sample_dt: 0.001,
            duration: 8.0,
        }
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

fn rotate(beta: f64, p: (f64, f64)) -> (f64, f64) {
    let (s, c) = beta.sin_cos();
    (c * p.0 - s * p.1, s * p.0 + c * p.1)
}

impl GaitParams {
    pub fn validate(&self) -> Result<(), SkeletonError> {
        let ok = self.period > 0.0
            && self.stance_fraction > 0.0
            && self.stance_fraction < 1.0
            && self.heel_rocker >= 0.0
            && self.toe_rocker >= 0.0
            && self.heel_rocker + self.toe_rocker < self.stance_fraction
            && self.sample_dt > 0.0
            && self.duration >= 2.0 * self.sample_dt;
        if ok {
            Ok(())
        } else {
            Err(SkeletonError::Reference("inconsistent gait parameters".into()))
        }
    }

    pub fn stride(&self) -> f64 {
        self.speed * self.period
    }

    /// Pelvis (x, z): lowest in double support, highest in mid-stance.
    pub fn pelvis(&self, t: f64) -> (f64, f64) {
        let phase = t / self.period;
        let lowest = 0.5 * self.heel_rocker;
        let z = self.hip_height - self.bob_amplitude * (4.0 * std::f64::consts::PI * (phase - lowest)).cos();
        (self.speed * t, z)
    }

    /// Ankle position (x, z) and foot angle of one foot.
    pub fn foot_pose(&self, t: f64, side: Side) -> ((f64, f64), f64) {
        let shift = if side == Side::Left { 0.0 } else { 0.5 };
        let tau = t / self.period + shift;
        let cycle = tau.floor();
        self.pose_in_cycle(cycle, tau - cycle, shift)
    }

    fn pose_in_cycle(&self, cycle: f64, phase: f64, shift: f64) -> ((f64, f64), f64) {
        let flat_start = self.heel_rocker;
        let flat_end = self.stance_fraction - self.toe_rocker;
        let mid_flat = 0.5 * (flat_start + flat_end);
        let flat_x = self.stride() * (cycle - shift + mid_flat);
        let pivot = |point: (f64, f64), beta: f64| {
            let ground = (flat_x + point.0, 0.0);
            let r = rotate(beta, point);
            ((ground.0 - r.0, ground.1 - r.1), beta)
        };
        if phase < flat_start {
            let beta = self.heel_strike_angle * (1.0 - smoothstep(phase / self.heel_rocker));
            pivot(self.heel, beta)
        } else if phase < flat_end {
            ((flat_x, -self.heel.1), 0.0)
        } else if phase <= self.stance_fraction {
            let beta = self.toe_off_angle * smoothstep((phase - flat_end) / self.toe_rocker);
            pivot(self.toe, beta)
        } else {
            let u = (phase - self.stance_fraction) / (1.0 - self.stance_fraction);
            let (a0, b0) = self.pose_in_cycle(cycle, self.stance_fraction, shift);
            let (a1, b1) = self.pose_in_cycle(cycle + 1.0, 0.0, shift);
            let s = smoothstep(u);
            let lift = self.swing_clearance * (std::f64::consts::PI * u).sin().powi(2);
            (
                (a0.0 + (a1.0 - a0.0) * s, a0.1 + (a1.1 - a0.1) * s + lift),
                b0 + (b1 - b0) * s,
            )
        }
    }
}
