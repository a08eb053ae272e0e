use serde::{Deserialize, Serialize};

use super::{SegmentFrame, SegmentId, Side, Skeleton, SkeletonError};
use crate::mesh::Point;
use crate::softbody::SoftBody;

/// Hard attachment of a soft-body node to a point fixed in a segment frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub node: usize,
    pub segment: SegmentId,
    pub offset: Point,
}

/// Which nodes get pinned: those inside the foot proxy grown by `margin`,
/// excluding anything below `sole_plane` (foot-frame z) so the sole stays
/// free to deform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinSelection {
    pub margin: f64,
    /// Defaults to the bottom face of the foot proxy.
    pub sole_plane: Option<f64>,
    pub min_pins: usize,
}

impl Default for PinSelection {
    fn default() -> Self {
        Self {
            margin: 0.02,
            sole_plane: None,
            min_pins: 4,
        }
    }
}

/// Binds nodes of `body` (already placed in the world) to the `side` foot.
/// The body's pin mask is updated to match.
pub fn bind_pins(
    body: &mut SoftBody,
    skeleton: &Skeleton,
    frames: &[SegmentFrame; 7],
    side: Side,
    selection: &PinSelection,
) -> Result<Vec<Pin>, SkeletonError> {
    let id = SegmentId::foot(side);
    let seg = skeleton.segment(id);
    let frame = &frames[id.index()];
    let lo = seg.proxy_center - seg.proxy_half_extents;
    let hi = seg.proxy_center + seg.proxy_half_extents;
    let sole = selection.sole_plane.unwrap_or(lo.z);
    let m = selection.margin;

    let pins: Vec<Pin> = body
        .positions
        .iter()
        .enumerate()
        .filter_map(|(node, p)| {
            let local = frame.to_local(p);
            let inside = (0..3).all(|a| local[a] >= lo[a] - m && local[a] <= hi[a] + m);
            (inside && local.z >= sole).then_some(Pin {
                node,
                segment: id,
                offset: local,
            })
        })
        .collect();
    if pins.len() < selection.min_pins.max(1) {
        return Err(SkeletonError::InsufficientPins {
            side,
            found: pins.len(),
            needed: selection.min_pins.max(1),
        });
    }
    let nodes: Vec<usize> = pins.iter().map(|p| p.node).collect();
    body.set_pinned(&nodes)
        .expect("pin nodes come from the body's own index range");
    Ok(pins)
}

/// Places every pinned node at its segment point and gives it that point's
/// rigid-body velocity. Other nodes are left alone.
pub fn apply_pins(pins: &[Pin], frames: &[SegmentFrame; 7], body: &mut SoftBody) {
    for pin in pins {
        let frame = &frames[pin.segment.index()];
        body.positions[pin.node] = frame.point(&pin.offset);
        body.velocities[pin.node] = frame.point_velocity(&pin.offset);
    }
}
