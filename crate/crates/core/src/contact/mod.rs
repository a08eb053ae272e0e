//! Penalty ground contact with regularized Coulomb friction, for soft-body
//! nodes and skeleton box corners, with GRF attribution by source.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Point;
use crate::skeleton::{SegmentFrame, SegmentId, Side, Skeleton};

/// Below this tangential speed friction acts as a viscous drag that reaches
/// the Coulomb limit exactly at the threshold.
pub const FRICTION_REGULARIZATION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("invalid ground plane: {0}")]
    InvalidPlane(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundPlane {
    pub height: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_coefficient: f64,
}

impl Default for GroundPlane {
    fn default() -> Self {
        Self {
            height: 0.0,
            contact_stiffness: 1e5,
            contact_damping: 1e3,
            friction_coefficient: 0.9,
        }
    }
}

impl GroundPlane {
    pub fn validate(&self) -> Result<(), ContactError> {
        if !(self.contact_stiffness > 0.0 && self.contact_stiffness.is_finite()) {
            return Err(ContactError::InvalidPlane("contact_stiffness must be > 0".into()));
        }
        if !(self.contact_damping >= 0.0) {
            return Err(ContactError::InvalidPlane("contact_damping must be >= 0".into()));
        }
        if !(self.friction_coefficient >= 0.0) {
            return Err(ContactError::InvalidPlane("friction_coefficient must be >= 0".into()));
        }
        if !self.height.is_finite() {
            return Err(ContactError::InvalidPlane("height must be finite".into()));
        }
        Ok(())
    }

    pub fn depth(&self, p: &Point) -> f64 {
        (self.height - p.z).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Flex,
    Skeleton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfSample {
    pub time: f64,
    pub side: Side,
    pub vertical: f64,
    pub horizontal: f64,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    /// Start of the penetration interval.
    pub time: f64,
    pub side: Side,
    pub source: Source,
    pub peak_force: f64,
}

/// Contact law evaluated at one point, split so a caller can integrate the
/// velocity-proportional parts implicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointContact {
    pub depth: f64,
    /// Total force at the given velocity.
    pub force: Point,
    /// Elastic normal force `k d`.
    pub spring: f64,
    /// Normal damping coefficient, zero while separating.
    pub normal_damping: f64,
    /// Equivalent viscous coefficient of the friction force.
    pub friction_damping: f64,
}

/// Penalty contact at `p` moving with `v`, or `None` when not penetrating.
pub fn point_contact(p: &Point, v: &Point, plane: &GroundPlane) -> Option<PointContact> {
    let depth = plane.depth(p);
    if depth <= 0.0 {
        return None;
    }
    let spring = plane.contact_stiffness * depth;
    let normal_damping = if v.z < 0.0 { plane.contact_damping } else { 0.0 };
    let normal = spring + normal_damping * (-v.z).max(0.0);
    let slip = v.x.hypot(v.y);
    let friction_damping = plane.friction_coefficient * normal / slip.max(FRICTION_REGULARIZATION);
    Some(PointContact {
        depth,
        force: Point::new(-friction_damping * v.x, -friction_damping * v.y, normal),
        spring,
        normal_damping,
        friction_damping,
    })
}

/// Contact on every node of one foot's soft body.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeContacts {
    pub forces: Vec<Point>,
    /// (node, contact) for penetrating nodes, ascending node order.
    pub active: Vec<(usize, PointContact)>,
    pub samples: Vec<GrfSample>,
}

pub fn node_contact(
    positions: &[Point],
    velocities: &[Point],
    plane: &GroundPlane,
    side: Side,
    time: f64,
) -> NodeContacts {
    let mut forces = vec![Point::zeros(); positions.len()];
    let mut active = Vec::new();
    for (i, (p, v)) in positions.iter().zip(velocities).enumerate() {
        if let Some(c) = point_contact(p, v, plane) {
            forces[i] = c.force;
            active.push((i, c));
        }
    }
    let samples = if active.is_empty() {
        Vec::new()
    } else {
        let total: Point = active.iter().map(|(_, c)| c.force).sum();
        vec![GrfSample {
            time,
            side,
            vertical: total.z,
            horizontal: total.x,
            source: Source::Flex,
        }]
    };
    NodeContacts {
        forces,
        active,
        samples,
    }
}

/// A penetrating corner of a skeleton proxy box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerContact {
    pub segment: SegmentId,
    pub point: Point,
    pub velocity: Point,
    pub contact: PointContact,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkeletonContacts {
    pub corners: Vec<CornerContact>,
    pub samples: Vec<GrfSample>,
}

impl SkeletonContacts {
    pub fn vertical(&self, side: Side) -> f64 {
        self.samples.iter().filter(|s| s.side == side).map(|s| s.vertical).sum()
    }
}

/// Penalty contact at the corners of every leg segment's box proxy. Box
/// proxies are oriented with their segment.
pub fn skeleton_contact(
    skeleton: &Skeleton,
    frames: &[SegmentFrame; 7],
    plane: &GroundPlane,
    time: f64,
) -> SkeletonContacts {
    let mut corners = Vec::new();
    for id in SegmentId::ALL.into_iter().skip(1) {
        let frame = &frames[id.index()];
        for local in skeleton.segment(id).proxy_corners() {
            let point = frame.point(&local);
            if plane.depth(&point) <= 0.0 {
                continue;
            }
            let velocity = frame.point_velocity(&local);
            if let Some(contact) = point_contact(&point, &velocity, plane) {
                corners.push(CornerContact {
                    segment: id,
                    point,
                    velocity,
                    contact,
                });
            }
        }
    }
    let mut samples = Vec::new();
    for side in Side::BOTH {
        let mine = corners.iter().filter(|c| c.segment.side() == Some(side));
        let mut any = false;
        let mut total = Point::zeros();
        for c in mine {
            any = true;
            total += c.contact.force;
        }
        if any {
            samples.push(GrfSample {
                time,
                side,
                vertical: total.z,
                horizontal: total.x,
                source: Source::Skeleton,
            });
        }
    }
    SkeletonContacts { corners, samples }
}

/// Turns per-step skeleton contact forces into one event per contiguous
/// interval of penetration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTracker {
    open: [Option<ContactEvent>; 2],
    pub events: Vec<ContactEvent>,
}

impl EventTracker {
    pub fn observe(&mut self, contacts: &SkeletonContacts, time: f64) {
        for (k, side) in Side::BOTH.into_iter().enumerate() {
            let sample = contacts.samples.iter().find(|s| s.side == side);
            match (sample, &mut self.open[k]) {
                (Some(s), Some(ev)) => ev.peak_force = ev.peak_force.max(s.vertical),
                (Some(s), slot @ None) => {
                    *slot = Some(ContactEvent {
                        time,
                        side,
                        source: Source::Skeleton,
                        peak_force: s.vertical,
                    })
                }
                (None, slot) => {
                    if let Some(ev) = slot.take() {
                        self.events.push(ev);
                    }
                }
            }
        }
    }

    /// Closes open intervals and returns every event in start order.
    pub fn finish(mut self) -> Vec<ContactEvent> {
        for slot in &mut self.open {
            if let Some(ev) = slot.take() {
                self.events.push(ev);
            }
        }
        self.events
            .sort_by(|a, b| a.time.total_cmp(&b.time).then(a.side.cmp(&b.side)));
        self.events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::BodyParams;
    use proptest::prelude::*;

    #[test]
    fn nodes_above_plane_feel_nothing() {
        let p = vec![Point::new(0.0, 0.0, 0.1); 3];
        let v = vec![Point::new(1.0, 0.0, -1.0); 3];
        let c = node_contact(&p, &v, &GroundPlane::default(), Side::Left, 0.0);
        assert!(c.forces.iter().all(|f| *f == Point::zeros()));
        assert!(c.samples.is_empty());
    }

    #[test]
    fn one_millimetre_gives_one_hundred_newtons() {
        let c = node_contact(
            &[Point::new(0.0, 0.0, -1e-3)],
            &[Point::zeros()],
            &GroundPlane::default(),
            Side::Right,
            0.5,
        );
        assert!((c.forces[0].z - 100.0).abs() < 1e-9);
        assert_eq!(c.samples.len(), 1);
        assert_eq!(c.samples[0].source, Source::Flex);
        assert!((c.samples[0].vertical - 100.0).abs() < 1e-9);
    }

    #[test]
    fn sliding_friction_is_clamped_at_mu_n() {
        let plane = GroundPlane {
            friction_coefficient: 0.8,
            ..Default::default()
        };
        let c = point_contact(&Point::new(0.0, 0.0, -1e-3), &Point::new(0.5, 0.0, 0.0), &plane).unwrap();
        assert!((c.force.z - 100.0).abs() < 1e-9);
        assert!((c.force.x + 80.0).abs() < 1e-9);
    }

    #[test]
    fn corner_half_millimetre_deep_is_one_event() {
        let mut s = Skeleton::new(BodyParams::default()).unwrap();
        // lower the body so the foot box bottom sits 0.5 mm below ground
        let foot_bottom = -(0.84) + s.params.foot_box_z.0;
        s.pelvis.z = -foot_bottom - 5e-4;
        s.joints[JointName::LAnkle.index()].angle = 0.0;
        // lift the right leg out of the way
        s.joints[JointName::RKnee.index()].angle = 1.0;
        let frames = s.forward_kinematics();
        let contacts = skeleton_contact(&s, &frames, &GroundPlane::default(), 0.0);
        // four bottom corners, each 0.5 mm deep
        assert_eq!(contacts.corners.len(), 4);
        for c in &contacts.corners {
            assert!((c.contact.force.z - 50.0).abs() < 1e-6);
        }
        assert!((contacts.vertical(Side::Left) - 200.0).abs() < 1e-5);
        let mut tracker = EventTracker::default();
        tracker.observe(&contacts, 0.0);
        let events = tracker.finish();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].side, Side::Left);
    }

    use crate::skeleton::JointName;

    #[test]
    fn raised_box_gives_no_events() {
        let mut s = Skeleton::new(BodyParams::default()).unwrap();
        s.pelvis.z = 1.0;
        let frames = s.forward_kinematics();
        let contacts = skeleton_contact(&s, &frames, &GroundPlane::default(), 0.0);
        let mut tracker = EventTracker::default();
        tracker.observe(&contacts, 0.0);
        assert!(contacts.corners.is_empty() && tracker.finish().is_empty());
    }

    #[test]
    fn tracker_splits_contiguous_intervals() {
        let on = |f: f64| SkeletonContacts {
            corners: vec![],
            samples: vec![GrfSample {
                time: 0.0,
                side: Side::Left,
                vertical: f,
                horizontal: 0.0,
                source: Source::Skeleton,
            }],
        };
        let off = SkeletonContacts::default();
        let mut t = EventTracker::default();
        for (k, c) in [on(1.0), on(3.0), off.clone(), on(2.0), off].iter().enumerate() {
            t.observe(c, k as f64);
        }
        let ev = t.finish();
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].time, ev[0].peak_force), (0.0, 3.0));
        assert_eq!((ev[1].time, ev[1].peak_force), (3.0, 2.0));
    }

    proptest! {
        #[test]
        fn normal_force_is_continuous_and_zero_at_surface(d in 0.0f64..1e-6) {
            let plane = GroundPlane::default();
            let f = point_contact(&Point::new(0.0, 0.0, -d), &Point::zeros(), &plane).map_or(0.0, |c| c.force.z);
            prop_assert!(f <= plane.contact_stiffness * 1e-6 + 1e-12);
        }

        #[test]
        fn friction_never_exceeds_coulomb_limit(
            d in 1e-6f64..0.01, vx in -2.0f64..2.0, vy in -2.0f64..2.0, vz in -2.0f64..2.0, mu in 0.0f64..1.5,
        ) {
            let plane = GroundPlane { friction_coefficient: mu, ..Default::default() };
            let c = point_contact(&Point::new(0.0, 0.0, -d), &Point::new(vx, vy, vz), &plane).unwrap();
            let ft = c.force.x.hypot(c.force.y);
            prop_assert!(ft <= mu * c.force.z * (1.0 + 1e-12));
            prop_assert!(c.force.z >= 0.0);
        }
    }
}
