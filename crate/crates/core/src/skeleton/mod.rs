//! Sagittal seven-segment biped: pelvis plus thigh, shank and foot per leg.
//!
//! Angles are counter-clockwise in the x-z plane (x forward, z up, y left).
//! A segment at angle `a` points its long axis along `(sin a, -cos a)`.
//! Thigh angle is `pitch + hip`, shank is `thigh - knee` and foot is
//! `shank + ankle`, so knee flexion is positive and a positive ankle angle
//! lifts the toes.

mod pins;
mod reference;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Point;

pub use pins::{apply_pins, bind_pins, Pin, PinSelection};
pub use reference::{GaitParams, ReferenceMotion, ReferenceSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("only {found} pin candidates for the {side} foot (need at least {needed})")]
    InsufficientPins { side: Side, found: usize, needed: usize },
    #[error("reference motion: {0}")]
    Reference(String),
    #[error("reference motion is missing column `{0}`")]
    MissingColumn(String),
    #[error("invalid gains for {joint}: kp must be > 0 and kd >= 0")]
    InvalidGains { joint: JointName },
    #[error("invalid segment `{0}`: mass, length and proxy extents must be positive")]
    InvalidSegment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    /// Lateral sign: +1 on the left (y points left).
    pub fn lateral(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Side::Left),
            "right" | "r" => Ok(Side::Right),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JointName {
    #[serde(rename = "l_hip")]
    LHip,
    #[serde(rename = "l_knee")]
    LKnee,
    #[serde(rename = "l_ankle")]
    LAnkle,
    #[serde(rename = "r_hip")]
    RHip,
    #[serde(rename = "r_knee")]
    RKnee,
    #[serde(rename = "r_ankle")]
    RAnkle,
}

impl JointName {
    pub const ALL: [JointName; 6] = [
        JointName::LHip,
        JointName::LKnee,
        JointName::LAnkle,
        JointName::RHip,
        JointName::RKnee,
        JointName::RAnkle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JointName::LHip => "l_hip",
            JointName::LKnee => "l_knee",
            JointName::LAnkle => "l_ankle",
            JointName::RHip => "r_hip",
            JointName::RKnee => "r_knee",
            JointName::RAnkle => "r_ankle",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn side(self) -> Side {
        if self.index() < 3 {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// 0 hip, 1 knee, 2 ankle.
    pub fn level(self) -> usize {
        self.index() % 3
    }

    /// Sign relating the joint angle to counter-clockwise rotation of its
    /// distal segments.
    pub fn ccw_sign(self) -> f64 {
        if self.level() == 1 {
            -1.0
        } else {
            1.0
        }
    }

    /// Segment whose frame origin sits on this joint.
    pub fn child(self) -> SegmentId {
        SegmentId::ALL[1 + self.index()]
    }

    pub fn of(side: Side, level: usize) -> JointName {
        JointName::ALL[level + if side == Side::Left { 0 } else { 3 }]
    }
}

impl std::fmt::Display for JointName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SegmentId {
    Pelvis,
    LThigh,
    LShank,
    LFoot,
    RThigh,
    RShank,
    RFoot,
}

impl SegmentId {
    pub const ALL: [SegmentId; 7] = [
        SegmentId::Pelvis,
        SegmentId::LThigh,
        SegmentId::LShank,
        SegmentId::LFoot,
        SegmentId::RThigh,
        SegmentId::RShank,
        SegmentId::RFoot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentId::Pelvis => "pelvis",
            SegmentId::LThigh => "l_thigh",
            SegmentId::LShank => "l_shank",
            SegmentId::LFoot => "l_foot",
            SegmentId::RThigh => "r_thigh",
            SegmentId::RShank => "r_shank",
            SegmentId::RFoot => "r_foot",
        }
    }

    pub fn foot(side: Side) -> SegmentId {
        match side {
            Side::Left => SegmentId::LFoot,
            Side::Right => SegmentId::RFoot,
        }
    }

    pub fn side(self) -> Option<Side> {
        match self {
            SegmentId::Pelvis => None,
            SegmentId::LThigh | SegmentId::LShank | SegmentId::LFoot => Some(Side::Left),
            _ => Some(Side::Right),
        }
    }

    /// Joint directly above this segment.
    pub fn parent_joint(self) -> Option<JointName> {
        let side = self.side()?;
        Some(JointName::of(side, (self.index() - 1) % 3))
    }

    /// Joints whose rotation moves this segment, proximal first.
    pub fn driving_joints(self) -> Vec<JointName> {
        match (self.side(), self.parent_joint()) {
            (Some(side), Some(j)) => (0..=j.level()).map(|l| JointName::of(side, l)).collect(),
            _ => Vec::new(),
        }
    }
}

/// Rigid segment with an axis-aligned (in its own frame) box proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: SegmentId,
    pub mass: f64,
    /// About the centre of mass, hinge axis, kg·m².
    pub inertia: f64,
    pub length: f64,
    /// Centre of mass in the segment frame.
    pub com: Point,
    pub proxy_center: Point,
    pub proxy_half_extents: Point,
}

impl Segment {
    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    pub fn parent_joint(&self) -> Option<JointName> {
        self.id.parent_joint()
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        let ok = self.mass > 0.0
            && self.length > 0.0
            && self.inertia >= 0.0
            && self.proxy_half_extents.iter().all(|&h| h > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SkeletonError::InvalidSegment(self.name().into()))
        }
    }

    pub fn proxy_corners(&self) -> [Point; 8] {
        let c = self.proxy_center;
        let h = self.proxy_half_extents;
        let mut out = [Point::zeros(); 8];
        for (k, p) in out.iter_mut().enumerate() {
            let s = |bit: usize| if k >> bit & 1 == 0 { -1.0 } else { 1.0 };
            *p = c + Point::new(s(0) * h.x, s(1) * h.y, s(2) * h.z);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub name: JointName,
    pub angle: f64,
    pub velocity: f64,
    pub limits: (f64, f64),
}

impl Joint {
    /// Clamps into the limits, zeroing velocity that pushes outward.
    pub fn enforce_limits(&mut self) {
        let (lo, hi) = self.limits;
        if self.angle < lo {
            self.angle = lo;
            self.velocity = self.velocity.max(0.0);
        } else if self.angle > hi {
            self.angle = hi;
            self.velocity = self.velocity.min(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: [f64; 6],
    pub kd: [f64; 6],
}

pub const DEFAULT_KP: f64 = 300.0;
pub const DEFAULT_KD: f64 = 30.0;

impl Default for PdGains {
    fn default() -> Self {
        Self::uniform(DEFAULT_KP, DEFAULT_KD)
    }
}

impl PdGains {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        Self {
            kp: [kp; 6],
            kd: [kd; 6],
        }
    }

    /// Same gains on both legs, given per level (hip, knee, ankle).
    pub fn per_level(kp: [f64; 3], kd: [f64; 3]) -> Self {
        Self {
            kp: [kp[0], kp[1], kp[2], kp[0], kp[1], kp[2]],
            kd: [kd[0], kd[1], kd[2], kd[0], kd[1], kd[2]],
        }
    }

    pub fn validate(&self) -> Result<(), SkeletonError> {
        for j in JointName::ALL {
            let (kp, kd) = (self.kp[j.index()], self.kd[j.index()]);
            if !(kp > 0.0 && kd >= 0.0 && kp.is_finite() && kd.is_finite()) {
                return Err(SkeletonError::InvalidGains { joint: j });
            }
        }
        Ok(())
    }
}

/// `kp (ref - angle) - kd velocity` per joint.
pub fn pd_torques(joints: &[Joint; 6], reference: &[f64; 6], gains: &PdGains) -> [f64; 6] {
    std::array::from_fn(|i| gains.kp[i] * (reference[i] - joints[i].angle) - gains.kd[i] * joints[i].velocity)
}

/// Planar pose and velocity of a segment frame. The lateral coordinate is
/// carried in `origin.y` and never changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentFrame {
    pub origin: Point,
    pub angle: f64,
    pub velocity: Point,
    pub omega: f64,
}

impl SegmentFrame {
    pub fn rotate(&self, local: &Point) -> Point {
        let (s, c) = self.angle.sin_cos();
        Point::new(c * local.x - s * local.z, local.y, s * local.x + c * local.z)
    }

    pub fn point(&self, local: &Point) -> Point {
        self.origin + self.rotate(local)
    }

    pub fn to_local(&self, world: &Point) -> Point {
        let d = world - self.origin;
        let (s, c) = self.angle.sin_cos();
        Point::new(c * d.x + s * d.z, d.y, -s * d.x + c * d.z)
    }

    pub fn point_velocity(&self, local: &Point) -> Point {
        let r = self.rotate(local);
        self.velocity + Point::new(-self.omega * r.z, 0.0, self.omega * r.x)
    }

    pub fn translated(&self, by: &Point) -> Self {
        Self {
            origin: self.origin + by,
            ..*self
        }
    }
}

/// Pelvis pose and rates in the world.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PelvisState {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vz: f64,
    pub pitch_rate: f64,
}

/// Anthropometry of the biped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyParams {
    /// Whole-body mass, kg (pelvis carries everything not in the legs).
    pub body_mass: f64,
    pub thigh_mass: f64,
    pub shank_mass: f64,
    pub foot_mass: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    pub hip_half_width: f64,
    /// Foot proxy box in the foot frame (ankle at origin): x range, z range.
    pub foot_box_x: (f64, f64),
    pub foot_box_z: (f64, f64),
    pub foot_half_width: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            body_mass: 70.0,
            thigh_mass: 7.0,
            shank_mass: 3.3,
            foot_mass: 1.0,
            thigh_length: 0.42,
            shank_length: 0.42,
            hip_half_width: 0.09,
            foot_box_x: (-0.05, 0.19),
            foot_box_z: (-0.05, -0.02),
            foot_half_width: 0.045,
        }
    }
}

/// Degree-of-freedom count of the dynamic skeleton: vertical and
/// horizontal pelvis support offsets followed by the six joints.
pub const DOF: usize = 8;
pub const SUPPORT_Z: usize = 0;
pub const SUPPORT_X: usize = 1;
/// Column of the first joint in generalized vectors.
pub const JOINT_COLUMN: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub params: BodyParams,
    pub segments: [Segment; 7],
    pub joints: [Joint; 6],
    pub pelvis: PelvisState,
}

fn limits(level: usize) -> (f64, f64) {
    match level {
        0 => (-1.0, 1.2),
        1 => (-0.1, 2.2),
        _ => (-1.0, 0.8),
    }
}

impl Skeleton {
    pub fn new(params: BodyParams) -> Result<Self, SkeletonError> {
        let p = params;
        let leg_mass = 2.0 * (p.thigh_mass + p.shank_mass + p.foot_mass);
        let rod = |id, mass: f64, len: f64, half: f64| Segment {
            id,
            mass,
            inertia: mass * len * len / 12.0,
            length: len,
            com: Point::new(0.0, 0.0, -len / 2.0),
            proxy_center: Point::new(0.0, 0.0, -len / 2.0),
            proxy_half_extents: Point::new(half, half, len / 2.0),
        };
        let foot_len = p.foot_box_x.1 - p.foot_box_x.0;
        let foot_h = p.foot_box_z.1 - p.foot_box_z.0;
        let foot_center = Point::new(
            0.5 * (p.foot_box_x.0 + p.foot_box_x.1),
            0.0,
            0.5 * (p.foot_box_z.0 + p.foot_box_z.1),
        );
        let foot = |id| Segment {
            id,
            mass: p.foot_mass,
            inertia: p.foot_mass * (foot_len * foot_len + foot_h * foot_h) / 12.0,
            length: foot_len,
            com: foot_center,
            proxy_center: foot_center,
            proxy_half_extents: Point::new(foot_len / 2.0, p.foot_half_width, foot_h / 2.0),
        };
        let trunk_mass = p.body_mass - leg_mass;
        let segments = [
            Segment {
                id: SegmentId::Pelvis,
                mass: trunk_mass,
                inertia: trunk_mass * 0.1,
                length: 0.6,
                com: Point::new(0.0, 0.0, 0.3),
                proxy_center: Point::new(0.0, 0.0, 0.05),
                proxy_half_extents: Point::new(0.1, p.hip_half_width + 0.05, 0.1),
            },
            rod(SegmentId::LThigh, p.thigh_mass, p.thigh_length, 0.06),
            rod(SegmentId::LShank, p.shank_mass, p.shank_length, 0.045),
            foot(SegmentId::LFoot),
            rod(SegmentId::RThigh, p.thigh_mass, p.thigh_length, 0.06),
            rod(SegmentId::RShank, p.shank_mass, p.shank_length, 0.045),
            foot(SegmentId::RFoot),
        ];
        for s in &segments {
            s.validate()?;
        }
        let joints = JointName::ALL.map(|name| Joint {
            name,
            angle: 0.0,
            velocity: 0.0,
            limits: limits(name.level()),
        });
        Ok(Self {
            params,
            segments,
            joints,
            pelvis: PelvisState::default(),
        })
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id.index()]
    }

    pub fn body_mass(&self) -> f64 {
        self.segments.iter().map(|s| s.mass).sum()
    }

    pub fn joint_angles(&self) -> [f64; 6] {
        self.joints.map(|j| j.angle)
    }

    pub fn set_joint_angles(&mut self, angles: &[f64; 6]) {
        for (j, &a) in self.joints.iter_mut().zip(angles) {
            j.angle = a;
        }
    }

    pub fn enforce_limits(&mut self) {
        for j in &mut self.joints {
            j.enforce_limits();
        }
    }

    /// World frames of all segments, indexed by `SegmentId`.
    pub fn forward_kinematics(&self) -> [SegmentFrame; 7] {
        let pel = &self.pelvis;
        let pelvis = SegmentFrame {
            origin: Point::new(pel.x, 0.0, pel.z),
            angle: pel.pitch,
            velocity: Point::new(pel.vx, 0.0, pel.vz),
            omega: pel.pitch_rate,
        };
        let mut frames = [pelvis; 7];
        for side in Side::BOTH {
            let base = if side == Side::Left { 1 } else { 4 };
            let hip_local = Point::new(0.0, side.lateral() * self.params.hip_half_width, 0.0);
            let mut origin = pelvis.point(&hip_local);
            let mut velocity = pelvis.point_velocity(&hip_local);
            let mut angle = pelvis.angle;
            let mut omega = pelvis.omega;
            for level in 0..3 {
                let j = self.joints[JointName::of(side, level).index()];
                let sign = j.name.ccw_sign();
                angle += sign * j.angle;
                omega += sign * j.velocity;
                let frame = SegmentFrame {
                    origin,
                    angle,
                    velocity,
                    omega,
                };
                frames[base + level] = frame;
                if level < 2 {
                    let tip = Point::new(0.0, 0.0, -self.segments[base + level].length);
                    origin = frame.point(&tip);
                    velocity = frame.point_velocity(&tip);
                }
            }
        }
        frames
    }

    /// Rows (x, z) of the velocity Jacobian of a world point carried by
    /// `segment`, with respect to (support rates, joint rates). The support
    /// offsets translate the whole body.
    pub fn point_jacobian(&self, frames: &[SegmentFrame; 7], segment: SegmentId, world: &Point) -> [[f64; DOF]; 2] {
        let mut jac = [[0.0; DOF]; 2];
        jac[1][SUPPORT_Z] = 1.0;
        jac[0][SUPPORT_X] = 1.0;
        for j in segment.driving_joints() {
            let pivot = frames[j.child().index()].origin;
            let r = world - pivot;
            let s = j.ccw_sign();
            jac[0][JOINT_COLUMN + j.index()] = -s * r.z;
            jac[1][JOINT_COLUMN + j.index()] = s * r.x;
        }
        jac
    }

    /// Generalized velocity; the (vertical, horizontal) support rates are
    /// supplied by the caller.
    pub fn generalized_velocity(&self, support_rates: [f64; 2]) -> [f64; DOF] {
        let mut u = [0.0; DOF];
        u[SUPPORT_Z] = support_rates[0];
        u[SUPPORT_X] = support_rates[1];
        for (k, j) in self.joints.iter().enumerate() {
            u[JOINT_COLUMN + k] = j.velocity;
        }
        u
    }

    /// Diagonal inertia of the decoupled joint model: each joint sees the
    /// composite inertia of every segment below it, evaluated with the leg
    /// straight.
    pub fn effective_inertia(&self) -> [f64; 6] {
        std::array::from_fn(|i| {
            let j = JointName::ALL[i];
            let base = if j.side() == Side::Left { 1 } else { 4 };
            let mut depth = 0.0;
            let mut total = 0.0;
            for level in j.level()..3 {
                let seg = &self.segments[base + level];
                let com = Point::new(seg.com.x, 0.0, seg.com.z - depth);
                total += seg.inertia + seg.mass * (com.x * com.x + com.z * com.z);
                depth += seg.length;
            }
            total
        })
    }

    /// Generalized forces from a world force applied at a point on `segment`.
    pub fn generalized_force(
        &self,
        frames: &[SegmentFrame; 7],
        segment: SegmentId,
        world: &Point,
        force: &Point,
    ) -> [f64; DOF] {
        let jac = self.point_jacobian(frames, segment, world);
        std::array::from_fn(|k| jac[0][k] * force.x + jac[1][k] * force.z)
    }

    /// Gravity torques on the joints from the leg segments below them.
    pub fn gravity_torques(&self, frames: &[SegmentFrame; 7], gravity: f64) -> [f64; 6] {
        let mut tau = [0.0; 6];
        for id in SegmentId::ALL.iter().skip(1) {
            let seg = self.segment(*id);
            let com = frames[id.index()].point(&seg.com);
            let q = self.generalized_force(frames, *id, &com, &Point::new(0.0, 0.0, -seg.mass * gravity));
            for k in 0..6 {
                tau[k] += q[JOINT_COLUMN + k];
            }
        }
        tau
    }

    /// Kinetic energy of the decoupled model plus the trunk's vertical motion.
    pub fn kinetic_energy(&self) -> f64 {
        let inertia = self.effective_inertia();
        let joints: f64 = self
            .joints
            .iter()
            .zip(inertia)
            .map(|(j, i)| 0.5 * i * j.velocity * j.velocity)
            .sum();
        let p = &self.pelvis;
        joints + 0.5 * self.body_mass() * (p.vx * p.vx + p.vz * p.vz)
    }
}
