//! Fixed-step integration of the skeleton and its soft feet, with GRF,
//! joint and energy logging and divergence detection.

mod flex;

use std::fmt::Write as _;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{
    node_contact, skeleton_contact, ContactError, ContactEvent, EventTracker, GrfSample, GroundPlane, NodeContacts,
};
use crate::mesh::{Point, VolumetricLattice};
use crate::skeleton::{
    apply_pins, bind_pins, BodyParams, PdGains, Pin, PinSelection, ReferenceMotion, ReferenceSample, SegmentId, Side,
    Skeleton, SkeletonError, DOF, JOINT_COLUMN, SUPPORT_X, SUPPORT_Z,
};
use crate::softbody::{Material, SoftBody, SoftBodyError};

pub use flex::step_soft_body;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    SoftBody(#[from] SoftBodyError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error("unstable at step {step} (t = {time} s): {reason}")]
    Unstable { step: usize, time: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialMode {
    Spring,
    Fem,
}

impl MaterialMode {
    pub fn of(material: &Material) -> Self {
        match material {
            Material::Spring(_) => MaterialMode::Spring,
            Material::Fem(_) => MaterialMode::Fem,
        }
    }

    pub fn default_dt(self) -> f64 {
        match self {
            MaterialMode::Spring => 1e-3,
            MaterialMode::Fem => 5e-4,
        }
    }
}

/// Horizontal tether stiffness: a 2 Hz natural frequency for a 70 kg body.
pub const HORIZONTAL_TETHER: f64 = 70.0 * 16.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Joint gains used for reference tracking. Stiff enough that stance loads
/// deflect the joints by a few hundredths of a radian.
pub fn tracking_gains() -> PdGains {
    PdGains::per_level([4000.0, 4000.0, 2000.0], [80.0, 80.0, 40.0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub dt: f64,
    pub duration: f64,
    pub gravity: f64,
    /// `None` runs the skeleton alone with rigid box feet.
    pub material: Option<Material>,
    /// Vertical shift of each flex foot in its foot frame, (left, right).
    pub flex_offsets: [f64; 2],
    pub plane: GroundPlane,
    pub gains: PdGains,
    pub pins: PinSelection,
    /// Viscous damping on the (vertical, horizontal) support offsets, N·s/m.
    pub support_damping: [f64; 2],
    /// Spring pulling the pelvis back to the reference horizontally, N/m.
    pub horizontal_tether: f64,
    /// Reserved; the physics is deterministic and never reads it.
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: MaterialMode::Spring.default_dt(),
            duration: 6.0,
            gravity: 9.81,
            material: None,
            flex_offsets: [0.0; 2],
            plane: GroundPlane::default(),
            gains: tracking_gains(),
            pins: PinSelection::default(),
            support_damping: [0.0, 2.0 * (HORIZONTAL_TETHER * 70.0f64).sqrt()],
            horizontal_tether: HORIZONTAL_TETHER,
            seed: 0,
        }
    }
}

impl WorldConfig {
    /// Default configuration for `material`, with the matching timestep.
    pub fn with_material(material: Option<Material>) -> Self {
        Self {
            dt: material.map_or(1e-3, |m| MaterialMode::of(&m).default_dt()),
            material,
            ..Self::default()
        }
    }

    pub fn mode(&self) -> Option<MaterialMode> {
        self.material.as_ref().map(MaterialMode::of)
    }

    pub fn steps(&self) -> usize {
        ((self.duration / self.dt) + 1e-9).floor().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(SimError::Config(format!(
                "duration must be >= dt, got {} with dt {}",
                self.duration, self.dt
            )));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(SimError::Config(format!("gravity must be >= 0, got {}", self.gravity)));
        }
        if !self.support_damping.iter().all(|c| *c >= 0.0 && c.is_finite()) {
            return Err(SimError::Config("support_damping must be >= 0".into()));
        }
        if !(self.horizontal_tether >= 0.0 && self.horizontal_tether.is_finite()) {
            return Err(SimError::Config("horizontal_tether must be >= 0".into()));
        }
        if let Some(m) = &self.material {
            m.validate()?;
        }
        self.plane.validate()?;
        self.gains.validate()?;
        Ok(())
    }
}

/// Vertical GRF per side at one logged instant, split by source.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GrfRow {
    pub flex: [f64; 2],
    pub skeleton: [f64; 2],
}

impl GrfRow {
    pub fn total(&self, side: Side) -> f64 {
        let k = side_index(side);
        self.flex[k] + self.skeleton[k]
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimOutput {
    pub times: Vec<f64>,
    pub grf: Vec<GrfRow>,
    pub grf_samples: Vec<GrfSample>,
    pub joints: Vec<[f64; 6]>,
    pub events: Vec<ContactEvent>,
    pub energy: Vec<f64>,
    pub stable: bool,
    pub failure_time: Option<f64>,
    pub failure: Option<String>,
    pub body_weight: f64,
}

pub const GRF_COLUMNS: [&str; 7] = [
    "t",
    "left_flex_fz",
    "left_skel_fz",
    "left_total_fz",
    "right_flex_fz",
    "right_skel_fz",
    "right_total_fz",
];

impl SimOutput {
    /// Total vertical GRF series for one side.
    pub fn vertical(&self, side: Side) -> Vec<f64> {
        self.grf.iter().map(|r| r.total(side)).collect()
    }

    pub fn events_for(&self, side: Side) -> usize {
        self.events.iter().filter(|e| e.side == side).count()
    }

    pub fn grf_csv(&self) -> String {
        let mut out = GRF_COLUMNS.join(",");
        out.push('\n');
        for (t, r) in self.times.iter().zip(&self.grf) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                t,
                r.flex[0],
                r.skeleton[0],
                r.total(Side::Left),
                r.flex[1],
                r.skeleton[1],
                r.total(Side::Right)
            );
        }
        out
    }

    pub fn joint_csv(&self) -> String {
        let mut out = String::from("t");
        for j in crate::skeleton::JointName::ALL {
            out.push(',');
            out.push_str(j.name());
        }
        out.push('\n');
        for (t, q) in self.times.iter().zip(&self.joints) {
            let _ = write!(out, "{t}");
            for a in q {
                let _ = write!(out, ",{a}");
            }
            out.push('\n');
        }
        out
    }

    pub fn events_csv(&self) -> String {
        let mut out = String::from("t,side,source,peak_fz\n");
        for e in &self.events {
            let source = match e.source {
                crate::contact::Source::Flex => "flex",
                crate::contact::Source::Skeleton => "skeleton",
            };
            let _ = writeln!(out, "{},{},{},{}", e.time, e.side, source, e.peak_force);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Ok,
    /// Index of the first offending sample.
    Diverging {
        index: usize,
    },
}

/// Samples that set the reference energy level.
pub const STABILITY_WINDOW: usize = 10;
pub const STABILITY_GROWTH: f64 = 10.0;

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Diverging when any sample is non-finite or its magnitude exceeds ten
/// times the magnitude of the median of the first samples.
pub fn check_stability(energy: &[f64]) -> Stability {
    if let Some(index) = energy.iter().position(|e| !e.is_finite()) {
        return Stability::Diverging { index };
    }
    if energy.len() < 2 {
        return Stability::Ok;
    }
    let window = &energy[..energy.len().min(STABILITY_WINDOW)];
    let limit = STABILITY_GROWTH * median(window).abs();
    match energy.iter().position(|e| e.abs() > limit && e.abs() > 1e-12) {
        Some(index) => Stability::Diverging { index },
        None => Stability::Ok,
    }
}

struct Foot {
    side: Side,
    body: SoftBody,
    pins: Vec<Pin>,
    contact: NodeContacts,
}

/// The coupled system. The pelvis follows the reference in pitch. Its
/// position is the reference plus dynamic support offsets that carry the
/// whole body mass: free vertically, tethered horizontally.
pub struct World {
    config: WorldConfig,
    reference: ReferenceMotion,
    skeleton: Skeleton,
    inertia: [f64; 6],
    /// (vertical, horizontal) offsets from the reference pelvis.
    support: [f64; 2],
    support_rate: [f64; 2],
    feet: Vec<Foot>,
    start: f64,
    steps: usize,
    time: f64,
    skeleton_contacts: crate::contact::SkeletonContacts,
    tracker: EventTracker,
}

impl World {
    /// Builds the world at the reference's first sample. `feet` are lattices
    /// in foot-frame coordinates (ankle at origin), required when the config
    /// has a material.
    pub fn new(
        config: WorldConfig,
        body: BodyParams,
        feet: Option<[VolumetricLattice; 2]>,
        reference: ReferenceMotion,
    ) -> Result<Self, SimError> {
        config.validate()?;
        reference.validate()?;
        let span = reference.end() - reference.start();
        if config.duration > span + 1e-9 {
            return Err(SimError::Config(format!(
                "duration {} s exceeds the reference span {} s",
                config.duration, span
            )));
        }
        let mut skeleton = Skeleton::new(body)?;
        let start = reference.start();
        let first = reference.sample(start);
        skeleton.set_joint_angles(&first.joints);
        for (j, r) in skeleton.joints.iter_mut().zip(first.joint_rates) {
            j.velocity = r;
        }
        skeleton.pelvis = first.pelvis;
        let frames = skeleton.forward_kinematics();

        let mut world_feet = Vec::new();
        if let Some(material) = config.material {
            let lattices = feet.ok_or_else(|| SimError::Config("a flex material needs foot lattices".into()))?;
            for (side, lattice) in Side::BOTH.into_iter().zip(lattices) {
                let frame = frames[SegmentId::foot(side).index()];
                let shift = Point::new(0.0, 0.0, config.flex_offsets[side_index(side)]);
                let mut body = SoftBody::new(lattice, material)?;
                let local: Vec<Point> = body.positions.iter().map(|p| p + shift).collect();
                body.positions = local.iter().map(|p| frame.point(p)).collect();
                body.velocities = local.iter().map(|p| frame.point_velocity(p)).collect();
                let pins = bind_pins(&mut body, &skeleton, &frames, side, &config.pins)?;
                let contact = node_contact(&body.positions, &body.velocities, &config.plane, side, start);
                world_feet.push(Foot {
                    side,
                    body,
                    pins,
                    contact,
                });
            }
        }
        let skeleton_contacts = skeleton_contact(&skeleton, &frames, &config.plane, start);
        Ok(Self {
            inertia: skeleton.effective_inertia(),
            config,
            reference,
            skeleton,
            support: [0.0; 2],
            support_rate: [0.0; 2],
            feet: world_feet,
            start,
            steps: 0,
            time: start,
            skeleton_contacts,
            tracker: EventTracker::default(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn support_offset(&self) -> [f64; 2] {
        self.support
    }

    pub fn soft_body(&self, side: Side) -> Option<&SoftBody> {
        self.feet.iter().find(|f| f.side == side).map(|f| &f.body)
    }

    pub fn pins(&self, side: Side) -> &[Pin] {
        self.feet.iter().find(|f| f.side == side).map_or(&[], |f| &f.pins)
    }

    /// Kinetic and potential energy of the skeleton plus the soft bodies'
    /// total energy.
    pub fn energy(&self) -> Result<f64, SoftBodyError> {
        let g = self.config.gravity;
        let mut e = self.skeleton.kinetic_energy() + self.skeleton.body_mass() * g * self.skeleton.pelvis.z;
        for f in &self.feet {
            e += f.body.total_energy(g)?;
        }
        Ok(e)
    }

    /// Current vertical GRF split by side and source.
    pub fn grf(&self) -> GrfRow {
        let mut row = GrfRow::default();
        for f in &self.feet {
            row.flex[side_index(f.side)] = f.contact.samples.iter().map(|s| s.vertical).sum();
        }
        for s in &self.skeleton_contacts.samples {
            row.skeleton[side_index(s.side)] += s.vertical;
        }
        row
    }

    fn unstable(&self, reason: impl Into<String>) -> SimError {
        SimError::Unstable {
            step: self.steps,
            time: self.time,
            reason: reason.into(),
        }
    }

    /// One step: skeleton, then soft feet driven by their pins, then contact
    /// evaluated at the new state.
    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.config.dt;
        let next_time = self.start + (self.steps + 1) as f64 * dt;
        let next = self.reference.sample(next_time);
        self.advance_skeleton(&next);
        let frames = self.skeleton.forward_kinematics();

        let plane = self.config.plane;
        let g = self.config.gravity;
        for foot in &mut self.feet {
            apply_pins(&foot.pins, &frames, &mut foot.body);
            step_soft_body(&mut foot.body, Some(&plane), g, dt).map_err(|e| SimError::Unstable {
                step: self.steps + 1,
                time: next_time,
                reason: e.to_string(),
            })?;
            apply_pins(&foot.pins, &frames, &mut foot.body);
            foot.contact = node_contact(
                &foot.body.positions,
                &foot.body.velocities,
                &plane,
                foot.side,
                next_time,
            );
        }
        self.skeleton_contacts = skeleton_contact(&self.skeleton, &frames, &plane, next_time);
        self.tracker.observe(&self.skeleton_contacts, next_time);
        self.steps += 1;
        self.time = next_time;
        self.check_finite()
    }

    fn check_finite(&self) -> Result<(), SimError> {
        let s = &self.skeleton;
        let skeleton_ok = self.support.iter().chain(&self.support_rate).all(|v| v.is_finite())
            && s.joints.iter().all(|j| j.angle.is_finite() && j.velocity.is_finite());
        if !skeleton_ok {
            return Err(self.unstable("non-finite skeleton state"));
        }
        for f in &self.feet {
            let ok = f
                .body
                .positions
                .iter()
                .chain(&f.body.velocities)
                .all(|p| p.iter().all(|c| c.is_finite()));
            if !ok {
                return Err(self.unstable(format!("non-finite {} soft-body state", f.side)));
            }
        }
        Ok(())
    }

    /// Linearly implicit update of (support offsets, joints): PD drive,
    /// support tether and skeleton-box contact act at the new velocity;
    /// soft-foot contact loads are applied from the previous step.
    fn advance_skeleton(&mut self, next: &ReferenceSample) {
        let dt = self.config.dt;
        let g = self.config.gravity;
        let plane = self.config.plane;
        let sk = &self.skeleton;
        let frames = sk.forward_kinematics();
        let u = SVector::<f64, DOF>::from(sk.generalized_velocity(self.support_rate));
        let mass = sk.body_mass();

        let mut a = SMatrix::<f64, DOF, DOF>::zeros();
        let mut q = SVector::<f64, DOF>::zeros();
        let [cz, cx] = self.config.support_damping;
        let kx = self.config.horizontal_tether;
        a[(SUPPORT_Z, SUPPORT_Z)] = mass + dt * cz;
        q[SUPPORT_Z] = -mass * (g + next.pelvis_z_accel);
        a[(SUPPORT_X, SUPPORT_X)] = mass + dt * (cx + dt * kx);
        q[SUPPORT_X] = -mass * next.pelvis_x_accel - kx * self.support[1];
        let gravity = sk.gravity_torques(&frames, g);
        let gains = &self.config.gains;
        for k in 0..6 {
            let (kp, kd) = (gains.kp[k], gains.kd[k]);
            a[(JOINT_COLUMN + k, JOINT_COLUMN + k)] = self.inertia[k] + dt * (kd + dt * kp);
            q[JOINT_COLUMN + k] = gravity[k] + kp * (next.joints[k] - sk.joints[k].angle) + kd * next.joint_rates[k];
        }
        let mut m_u = SVector::<f64, DOF>::zeros();
        m_u[SUPPORT_Z] = mass * u[SUPPORT_Z];
        m_u[SUPPORT_X] = mass * u[SUPPORT_X];
        for k in 0..6 {
            m_u[JOINT_COLUMN + k] = self.inertia[k] * u[JOINT_COLUMN + k];
        }

        for foot in &self.feet {
            let segment = SegmentId::foot(foot.side);
            for (i, c) in &foot.contact.active {
                let f = sk.generalized_force(&frames, segment, &foot.body.positions[*i], &c.force);
                q += SVector::<f64, DOF>::from(f);
            }
        }

        for corner in skeleton_contact(sk, &frames, &plane, self.time).corners {
            let jac = sk.point_jacobian(&frames, corner.segment, &corner.point);
            let jx = SVector::<f64, DOF>::from(jac[0]);
            let jz = SVector::<f64, DOF>::from(jac[1]);
            let kin_x = corner.velocity.x - jx.dot(&u);
            let kin_z = corner.velocity.z - jz.dot(&u);
            let c = corner.contact;
            let normal = c.normal_damping + dt * plane.contact_stiffness;
            a += dt * normal * jz * jz.transpose();
            q += (c.spring - normal * kin_z) * jz;
            a += dt * c.friction_damping * jx * jx.transpose();
            q -= c.friction_damping * kin_x * jx;
        }

        let rhs = m_u + dt * q;
        let next_u = a
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .unwrap_or_else(|| a.lu().solve(&rhs).unwrap_or_else(|| SVector::repeat(f64::NAN)));

        self.support_rate = [next_u[SUPPORT_Z], next_u[SUPPORT_X]];
        for (s, r) in self.support.iter_mut().zip(self.support_rate) {
            *s += dt * r;
        }
        let sk = &mut self.skeleton;
        for (k, j) in sk.joints.iter_mut().enumerate() {
            j.velocity = next_u[JOINT_COLUMN + k];
            j.angle += dt * j.velocity;
        }
        sk.enforce_limits();
        sk.pelvis = next.pelvis;
        sk.pelvis.z += self.support[0];
        sk.pelvis.vz += self.support_rate[0];
        sk.pelvis.x += self.support[1];
        sk.pelvis.vx += self.support_rate[1];
    }

    fn finish(self) -> Vec<ContactEvent> {
        self.tracker.finish()
    }
}

/// Runs a whole scenario. Divergence ends the run early and is reported in
/// the output rather than as an error.
pub fn run(
    config: WorldConfig,
    body: BodyParams,
    feet: Option<[VolumetricLattice; 2]>,
    reference: ReferenceMotion,
) -> Result<SimOutput, SimError> {
    let steps = config.steps();
    let mut world = World::new(config, body, feet, reference)?;
    let mut out = SimOutput {
        stable: true,
        body_weight: world.skeleton.body_mass() * world.config.gravity,
        ..Default::default()
    };
    let mut limit: Option<f64> = None;
    for _ in 0..steps {
        let outcome = world.step();
        let energy = match outcome {
            Ok(()) => world.energy().map_err(|e| world.unstable(e.to_string())),
            Err(e) => Err(e),
        };
        let reason = match energy {
            Ok(e) => {
                out.times.push(world.time);
                out.grf.push(world.grf());
                out.grf_samples
                    .extend(world.feet.iter().flat_map(|f| f.contact.samples.iter().copied()));
                out.grf_samples.extend(world.skeleton_contacts.samples.iter().copied());
                out.joints.push(world.skeleton.joint_angles());
                out.energy.push(e);
                if out.energy.len() == STABILITY_WINDOW {
                    limit = Some(STABILITY_GROWTH * median(&out.energy).abs());
                }
                let limit = limit.unwrap_or(f64::INFINITY);
                (!e.is_finite() || (e.abs() > limit && e.abs() > 1e-12))
                    .then(|| format!("energy {e:e} J exceeds {limit:e} J"))
            }
            Err(SimError::Unstable { reason, .. }) => Some(reason),
            Err(other) => return Err(other),
        };
        if let Some(reason) = reason {
            out.stable = false;
            out.failure_time = Some(world.time);
            out.failure = Some(reason);
            break;
        }
    }
    out.events = world.finish();
    Ok(out)
}
