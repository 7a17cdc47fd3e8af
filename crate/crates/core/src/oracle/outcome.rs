use serde::{Deserialize, Serialize};

use super::collision::{lattice_points, FrameBox};
use super::stability::{contact_depth, find_contacts, stability_label};
use super::{collision_label, OracleConfig};
use crate::geometry::Vec3;
use crate::grasp::{GraspCandidate, GripperModel};
use crate::scene::SceneDescription;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    PlanFail,
    GraspFail,
    Success,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::PlanFail => "plan-fail",
            Outcome::GraspFail => "grasp-fail",
            Outcome::Success => "success",
        }
    }
}

/// Whether lifting the closed gripper and the held object straight up by
/// `height` sweeps through a structure.
pub fn lift_blocked(
    scene: &SceneDescription,
    gripper: &GripperModel,
    grasp: &GraspCandidate,
    cfg: &OracleConfig,
) -> bool {
    let target = scene.target();
    let pose = &grasp.pose;
    let depth = contact_depth(gripper, pose, &grasp.grasp_point, cfg.contact_offset);
    let Some(contacts) = find_contacts(target, gripper, pose, depth) else {
        return false;
    };
    let xs = contacts.points.map(|p| pose.inverse_apply(&p).x);
    let (fw, t, l) = (gripper.finger_width / 2.0, gripper.finger_thickness, gripper.finger_length);
    let closed = [
        FrameBox {
            lo: [-gripper.palm_width / 2.0, -gripper.palm_thickness / 2.0, -gripper.palm_depth],
            hi: [gripper.palm_width / 2.0, gripper.palm_thickness / 2.0, 0.0],
        },
        FrameBox {
            lo: [xs[0], -fw, 0.0],
            hi: [xs[0] + t, fw, l],
        },
        FrameBox {
            lo: [xs[1] - t, -fw, 0.0],
            hi: [xs[1], fw, l],
        },
    ];
    let mut points: Vec<Vec3> = lattice_points(&closed, cfg.pitch)
        .iter()
        .map(|q| pose.apply(q))
        .collect();
    points.extend(target.interior_samples(cfg.pitch));
    // An upward segment from each sample, checked against structure intervals.
    let up = Vec3::z();
    let mut iv = Vec::new();
    points.iter().any(|p| {
        iv.clear();
        for s in &scene.structures {
            s.line_intervals(p, &up, &mut iv);
        }
        iv.iter().any(|&(t0, t1)| t0 < cfg.lift_height && t1 > 0.0 && t0 < t1)
    })
}

/// Kinematic outcome of executing `grasp` on the scene's target.
pub fn simulate_grasp_outcome(
    scene: &SceneDescription,
    gripper: &GripperModel,
    grasp: &GraspCandidate,
    cfg: &OracleConfig,
) -> Outcome {
    if collision_label(&scene.structures, gripper, &grasp.pose, cfg.pitch) == 0 {
        return Outcome::PlanFail;
    }
    let stable = stability_label(
        scene.target(),
        gripper,
        &grasp.pose,
        &grasp.grasp_point,
        cfg.friction_mu,
        cfg.contact_offset,
    );
    if stable == 0 || lift_blocked(scene, gripper, grasp, cfg) {
        return Outcome::GraspFail;
    }
    Outcome::Success
}
