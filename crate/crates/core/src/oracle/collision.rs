use serde::{Deserialize, Serialize};

use crate::geometry::{RigidTransform, Vec3};
use crate::grasp::GripperModel;
use crate::scene::Primitive;

/// Axis-aligned box in the grasp frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl FrameBox {
    pub fn contains(&self, q: &Vec3) -> bool {
        (0..3).all(|a| self.lo[a] <= q[a] && q[a] <= self.hi[a])
    }
}

/// The open gripper swept along its straight-line approach: the palm stretched
/// back by the approach clearance, and the finger pair (including the jaw gap
/// between the fingers) stretched the same way.
pub fn swept_boxes(g: &GripperModel) -> [FrameBox; 2] {
    let c = g.approach_clearance;
    let palm = FrameBox {
        lo: [-g.palm_width / 2.0, -g.palm_thickness / 2.0, -g.palm_depth - c],
        hi: [g.palm_width / 2.0, g.palm_thickness / 2.0, 0.0],
    };
    let s = g.outer_half_span();
    let fingers = FrameBox {
        lo: [-s, -g.finger_width / 2.0, -c],
        hi: [s, g.finger_width / 2.0, g.finger_length],
    };
    [palm, fingers]
}

/// Multiples of `pitch` inside `[lo, hi]`, anchored at zero so that the set
/// for `pitch / 2` contains the set for `pitch`.
pub fn lattice(lo: f64, hi: f64, pitch: f64) -> impl Iterator<Item = f64> {
    let k0 = (lo / pitch).floor() as i64 - 1;
    let k1 = (hi / pitch).ceil() as i64 + 1;
    (k0..=k1)
        .map(move |k| k as f64 * pitch)
        .filter(move |v| lo <= *v && *v <= hi)
}

/// Grasp-frame lattice points of the union of `boxes`.
pub fn lattice_points(boxes: &[FrameBox], pitch: f64) -> Vec<Vec3> {
    let mut pts = Vec::new();
    for (i, b) in boxes.iter().enumerate() {
        for x in lattice(b.lo[0], b.hi[0], pitch) {
            for y in lattice(b.lo[1], b.hi[1], pitch) {
                for z in lattice(b.lo[2], b.hi[2], pitch) {
                    let q = Vec3::new(x, y, z);
                    if !boxes[..i].iter().any(|o| o.contains(&q)) {
                        pts.push(q);
                    }
                }
            }
        }
    }
    pts
}

/// Whether some multiple of `pitch` lies in `[zlo, zhi]` and strictly inside `(t0, t1)`.
fn lattice_hits_interval(zlo: f64, zhi: f64, t0: f64, t1: f64, pitch: f64) -> bool {
    let lo = zlo.max(t0);
    let hi = zhi.min(t1);
    if lo > hi {
        return false;
    }
    let mut k = (lo / pitch).floor() as i64 - 1;
    loop {
        let v = k as f64 * pitch;
        if v > hi {
            return false;
        }
        if v >= zlo && v > t0 && v <= zhi && v < t1 {
            return true;
        }
        k += 1;
    }
}

/// True when some lattice point of the grasp-frame `boxes` placed at `pose`
/// lies strictly inside one of `solids`.
///
/// Exactly equivalent to testing every lattice point's signed distance, but
/// each lattice column along z is resolved with one line intersection per solid.
pub fn boxes_collide(
    boxes: &[FrameBox],
    pose: &RigidTransform,
    solids: &[Primitive],
    pitch: f64,
) -> bool {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for b in boxes {
        for a in 0..3 {
            lo[a] = lo[a].min(b.lo[a]);
            hi[a] = hi[a].max(b.hi[a]);
        }
    }
    let center_local = Vec3::new(
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    );
    let reach = Vec3::new(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]).norm() / 2.0;
    let center = pose.apply(&center_local);
    let near: Vec<&Primitive> = solids
        .iter()
        .filter(|s| (s.center() - center).norm() <= s.bounding_radius() + reach + pitch)
        .collect();
    if near.is_empty() {
        return false;
    }

    let dir = pose.axis(2);
    let mut intervals = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    for b in boxes {
        xs.extend(lattice(b.lo[0], b.hi[0], pitch));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for &x in &xs {
        let mut ys: Vec<f64> = Vec::new();
        for b in boxes.iter().filter(|b| b.lo[0] <= x && x <= b.hi[0]) {
            ys.extend(lattice(b.lo[1], b.hi[1], pitch));
        }
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        for &y in &ys {
            let origin = pose.apply(&Vec3::new(x, y, 0.0));
            intervals.clear();
            for s in &near {
                s.line_intervals(&origin, &dir, &mut intervals);
            }
            if intervals.is_empty() {
                continue;
            }
            for b in boxes {
                if !(b.lo[0] <= x && x <= b.hi[0] && b.lo[1] <= y && y <= b.hi[1]) {
                    continue;
                }
                if intervals
                    .iter()
                    .any(|&(t0, t1)| lattice_hits_interval(b.lo[2], b.hi[2], t0, t1, pitch))
                {
                    return true;
                }
            }
        }
    }
    false
}

/// Collision-free label: 1 when no lattice point (spacing `pitch`) of the
/// approach-swept gripper lies inside any structure.
pub fn collision_label(
    structures: &[Primitive],
    gripper: &GripperModel,
    pose: &RigidTransform,
    pitch: f64,
) -> u8 {
    u8::from(!boxes_collide(&swept_boxes(gripper), pose, structures, pitch))
}

/// Reference implementation: signed distance at every lattice point.
pub fn collision_label_brute(
    structures: &[Primitive],
    gripper: &GripperModel,
    pose: &RigidTransform,
    pitch: f64,
) -> u8 {
    let hit = lattice_points(&swept_boxes(gripper), pitch)
        .iter()
        .map(|q| pose.apply(q))
        .any(|p| structures.iter().any(|s| s.signed_distance(&p) < 0.0));
    u8::from(!hit)
}
